// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-layer attention-only transformer with residual connections, causal
//! masking, a per-head hook system, and the closed-form solver construction.
//!
//! The model has one head per layer. Layer 1 copies the previous position's
//! embedding into the residual stream; layer 2 holds both the induction
//! pathway (`C1`, `C3`) and the factual-recall pathway (`C2`, `C4`) in one
//! pair of weight matrices, which is what makes knowledge conflicts possible
//! at inference time.
//!
//! # Embedding modes
//!
//! * `Orthonormal` — token embeddings, unembeddings, and positions are
//!   standard basis columns in disjoint blocks:
//!
//!   ```text
//!   phi:    columns      0 .. N
//!   mu:     columns      N .. 2N
//!   pos:    columns     2N .. 2N+T
//!   remap:  columns  2N+T .. d     (images of W_OV^(1))
//!   ```
//!
//!   `W_OV^(1)` relabels source basis vectors into the remap block. The
//!   remapped trigger embedding gets the first remap column exclusively —
//!   it is the one image that layer 2 reads as a key. The remaining images
//!   are spread round-robin over the rest of the block; when
//!   `d >= 3N + 2T` every image gets its own column and the whole stacked
//!   set is pairwise orthonormal. Collapsed images (smaller `d`) share junk
//!   columns that no weight matrix ever reads, so the task arithmetic stays
//!   exact either way. Requires `d >= 2N + 2T`.
//!
//! * `Sphere` — embeddings, unembeddings, and positions are i.i.d. uniform
//!   unit-sphere columns and `W_OV^(1)` is a random signed permutation
//!   (orthogonal, norm-preserving). Cross terms vanish like `1/sqrt(d)`.

mod forward;
mod io;

pub use forward::{
    conflict_logits_closed_form, conflict_winner_closed_form, ConflictWinner, Evaluation,
    ForwardTrace,
};
pub use io::{load_model, load_model_file, save_model, save_model_file};

use crate::error::{Error, Result};
use crate::numerics::{orthonormal_basis, outer_add, sample_unit_sphere, Matrix, RandomStream};
use crate::vocab::{TokenId, VocabSpec};
use serde::{Deserialize, Serialize};

/// Scaling factors of the solver construction.
///
/// `c` is the layer-1 position-copy strength; `c1`/`c2` are the induction and
/// factual key strengths of layer 2; `c3`/`c4` the corresponding value
/// strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConsts {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl ConstructionConsts {
    pub fn new(c: f64, c1: f64, c2: f64, c3: f64, c4: f64) -> Self {
        ConstructionConsts { c, c1, c2, c3, c4 }
    }

    /// Solves both tasks cleanly: `C=20, C1=C2=8, C3=C4=10`.
    pub fn balanced() -> Self {
        ConstructionConsts::new(20.0, 8.0, 8.0, 10.0, 10.0)
    }

    /// The induction pathway dominates under conflict:
    /// `C=20, C1=4, C2=1, C3=C4=10`.
    pub fn induction_dominant() -> Self {
        ConstructionConsts::new(20.0, 4.0, 1.0, 10.0, 10.0)
    }

    pub fn all_finite(&self) -> bool {
        [self.c, self.c1, self.c2, self.c3, self.c4]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Embedding layout of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Orthonormal,
    Sphere,
}

/// One attention head, addressed by its 1-based layer (the toy model has a
/// single head per layer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeadRef {
    pub layer: usize,
}

impl HeadRef {
    pub const L1: HeadRef = HeadRef { layer: 1 };
    pub const L2: HeadRef = HeadRef { layer: 2 };

    pub(crate) fn slot(&self) -> usize {
        self.layer - 1
    }
}

impl std::fmt::Display for HeadRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "layer{}", self.layer)
    }
}

/// What to do to a head's output during a forward pass.
///
/// Scaling is additive: `ScaleAdd(alpha)` turns the head output `H` into
/// `(1 + alpha) * H`, so knock-out is `alpha = -1`. A multiplicative
/// `do(H = alpha * H)` convention therefore corresponds to
/// `ScaleAdd(alpha - 1)` here.
#[derive(Debug, Clone)]
pub enum HookKind {
    /// Leave the head untouched (outputs are always recorded in the trace).
    Observe,
    /// `H <- H + alpha * H`.
    ScaleAdd(f64),
    /// `H <- H + beta * payload`, with a cached `d x len` payload of
    /// per-position vectors. `beta = 0` is exactly the identity.
    AddExternal { payload: Matrix, factor: f64 },
    /// `H <- 0`.
    Zero,
}

/// A hook bound to one head.
#[derive(Debug, Clone)]
pub struct HookAction {
    pub target: HeadRef,
    pub kind: HookKind,
}

impl HookAction {
    pub fn observe(target: HeadRef) -> Self {
        HookAction {
            target,
            kind: HookKind::Observe,
        }
    }

    pub fn scale_add(target: HeadRef, alpha: f64) -> Self {
        HookAction {
            target,
            kind: HookKind::ScaleAdd(alpha),
        }
    }

    pub fn add_external(target: HeadRef, payload: Matrix, factor: f64) -> Self {
        HookAction {
            target,
            kind: HookKind::AddExternal { payload, factor },
        }
    }

    pub fn zero(target: HeadRef) -> Self {
        HookAction {
            target,
            kind: HookKind::Zero,
        }
    }
}

/// Anything that exposes hookable attention heads over a token vocabulary.
/// The intervention algorithms are generic over this trait.
pub trait HookedModel {
    fn head_refs(&self) -> Vec<HeadRef>;
    fn vocab_size(&self) -> usize;
    fn forward(&self, tokens: &[TokenId], hooks: &[HookAction]) -> Result<ForwardTrace>;

    /// Softmax over the final-position logits, with lowest-id tie-breaking
    /// for the argmax.
    fn evaluate(&self, tokens: &[TokenId], hooks: &[HookAction]) -> Result<Evaluation> {
        Ok(Evaluation::from_logits(
            &self.forward(tokens, hooks)?.logits,
        ))
    }
}

/// The two-layer toy transformer. Weights are immutable after construction;
/// `forward`/`evaluate` are pure, so a model can be shared freely.
#[derive(Debug, Clone)]
pub struct TwoLayerModel {
    pub mode: EmbeddingMode,
    pub consts: ConstructionConsts,
    pub seed: u64,
    pub vocab: VocabSpec,
    /// Maximum sequence length `T` (number of positional embeddings).
    pub seq_len: usize,
    /// Embedding dimension `d`.
    pub dim: usize,
    /// `d x N`, column `i` is the token embedding `phi(i)`.
    pub embeddings: Matrix,
    /// `d x T`, column `t` is the positional embedding `p_t`.
    pub positions: Matrix,
    /// Key-query matrices per layer, each `d x d`.
    pub w_kq: [Matrix; 2],
    /// Output-value matrices per layer, each `d x d`.
    pub w_ov: [Matrix; 2],
    /// `d x N`, column `i` is the unembedding `mu(i)`.
    pub unembedding: Matrix,
}

/// Minimum dimension for the orthonormal layout.
pub fn orthonormal_min_dim(vocab: &VocabSpec, t: usize) -> usize {
    2 * vocab.total() + 2 * t
}

/// Build the closed-form solver for both tasks.
///
/// All randomness (sphere embeddings, the signed permutation) is drawn from
/// child streams of `RandomStream::new(seed)`, so a `(vocab, t, d, mode,
/// consts, seed)` tuple rebuilds the model bit-exactly.
pub fn build_perfect_solver(
    vocab: &VocabSpec,
    t: usize,
    d: usize,
    mode: EmbeddingMode,
    consts: ConstructionConsts,
    seed: u64,
) -> Result<TwoLayerModel> {
    if t < 2 {
        return Err(Error::InvalidDimension(format!(
            "solver needs seq_len >= 2, got {t}"
        )));
    }
    if !consts.all_finite() {
        return Err(Error::NonFinite("construction constants".into()));
    }
    let n = vocab.total();
    let root = RandomStream::new(seed);

    let (embeddings, unembedding, positions, w_ov1) = match mode {
        EmbeddingMode::Orthonormal => {
            let need = orthonormal_min_dim(vocab, t);
            if d < need {
                return Err(Error::Capacity {
                    what: "orthonormal solver",
                    required: need,
                    got: d,
                });
            }
            let phi = orthonormal_basis(d, n)?;
            let mut mu = Matrix::zeros((d, n));
            for i in 0..n {
                mu[[n + i, i]] = 1.0;
            }
            let mut pos = Matrix::zeros((d, t));
            for k in 0..t {
                pos[[2 * n + k, k]] = 1.0;
            }
            // Relabeling map: phi(q) -> first remap column; every other
            // source basis vector round-robins over the remaining columns.
            let remap_start = 2 * n + t;
            let q = vocab.trigger();
            let mut w = Matrix::zeros((d, d));
            w[[remap_start, q]] = 1.0;
            let junk = d - remap_start - 1;
            let mut k = 0usize;
            for v in 0..n {
                if v == q {
                    continue;
                }
                w[[remap_start + 1 + (k % junk), v]] = 1.0;
                k += 1;
            }
            for p in 0..t {
                w[[remap_start + 1 + (k % junk), 2 * n + p]] = 1.0;
                k += 1;
            }
            (phi, mu, pos, w)
        }
        EmbeddingMode::Sphere => {
            let phi = sample_unit_sphere(d, n, &mut root.derive(0))?;
            let mu = sample_unit_sphere(d, n, &mut root.derive(1))?;
            let pos = sample_unit_sphere(d, t, &mut root.derive(2))?;
            // Random signed permutation: orthogonal, norm-preserving, and
            // the image of a sphere-uniform vector stays sphere-uniform.
            let mut prng = root.derive(3);
            let mut perm: Vec<usize> = (0..d).collect();
            for k in (1..d).rev() {
                let j = prng.index(k + 1);
                perm.swap(k, j);
            }
            let mut w = Matrix::zeros((d, d));
            for (src, &dst) in perm.iter().enumerate() {
                let sign = if prng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                w[[dst, src]] = sign;
            }
            (phi, mu, pos, w)
        }
    };

    // W_KQ^(1) = C * sum_t p_t p_{t+1}^T : key t matches query t+1.
    let mut w_kq1 = Matrix::zeros((d, d));
    for k in 0..t - 1 {
        outer_add(
            &mut w_kq1,
            consts.c,
            positions.column(k),
            positions.column(k + 1),
        );
    }

    // W_KQ^(2) = C1 (W_OV^1 phi(q)) phi(q)^T + C2 sum_s phi(s) phi(q)^T.
    let q = vocab.trigger();
    let phi_q = embeddings.column(q).to_owned();
    let remapped_q = w_ov1.dot(&phi_q);
    let mut w_kq2 = Matrix::zeros((d, d));
    outer_add(&mut w_kq2, consts.c1, remapped_q.view(), phi_q.view());
    for s in vocab.subject_ids() {
        outer_add(&mut w_kq2, consts.c2, embeddings.column(s), phi_q.view());
    }

    // W_OV^(2) = C3 sum_{k in N} mu(k) phi(k)^T + C4 sum_s mu(G*(s)) phi(s)^T.
    let mut w_ov2 = Matrix::zeros((d, d));
    for k in vocab.noise_ids() {
        outer_add(
            &mut w_ov2,
            consts.c3,
            unembedding.column(k),
            embeddings.column(k),
        );
    }
    for s in vocab.subject_ids() {
        outer_add(
            &mut w_ov2,
            consts.c4,
            unembedding.column(vocab.fact(s)),
            embeddings.column(s),
        );
    }

    Ok(TwoLayerModel {
        mode,
        consts,
        seed,
        vocab: vocab.clone(),
        seq_len: t,
        dim: d,
        embeddings,
        positions,
        w_kq: [w_kq1, w_kq2],
        w_ov: [w_ov1, w_ov2],
        unembedding,
    })
}

impl TwoLayerModel {
    /// Remapped embedding `phi'(v) = W_OV^(1) phi(v)`.
    pub fn remapped_embedding(&self, v: TokenId) -> ndarray::Array1<f64> {
        self.w_ov[0].dot(&self.embeddings.column(v).to_owned())
    }
}
