// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward pass, hook application, and closed-form conflict prediction.

use super::{ConstructionConsts, HeadRef, HookAction, HookKind, HookedModel, TwoLayerModel};
use crate::error::{Error, Result};
use crate::numerics::{argmax_lowest, softmax, softmax_masked, Matrix};
use crate::vocab::TokenId;
use serde::{Deserialize, Serialize};

/// Everything recorded during one forward pass.
///
/// `head_outputs[l]` holds the layer `l+1` head output at every position,
/// recorded AFTER hooks were applied (this is what actually entered the
/// residual stream). `attention[l]` rows are per-query distributions over the
/// causal prefix: entry `(t, k)` is the weight query `t` puts on key `k`,
/// with `k > t` exactly zero.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Final-position logits over the vocabulary.
    pub logits: Vec<f64>,
    /// Per layer: `d x len` post-hook head outputs.
    pub head_outputs: [Matrix; 2],
    /// Per layer: `len x len` lower-triangular attention weights.
    pub attention: [Matrix; 2],
}

/// Softmaxed forward output.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Probability of every vocabulary token at the final position.
    pub probs: Vec<f64>,
    /// Most likely token, ties broken by the lowest id.
    pub argmax: TokenId,
}

impl Evaluation {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probs = softmax(logits);
        Evaluation {
            argmax: argmax_lowest(&probs),
            probs,
        }
    }

    /// Probability of one token.
    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token]
    }
}

impl TwoLayerModel {
    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() || tokens.len() > self.seq_len {
            return Err(Error::InvalidDimension(format!(
                "forward takes 1..={} tokens, got {}",
                self.seq_len,
                tokens.len()
            )));
        }
        let n = self.vocab.total();
        for &z in tokens {
            if z >= n {
                return Err(Error::UnknownToken { token: z, vocab: n });
            }
        }
        Ok(())
    }

    fn check_hooks(&self, hooks: &[HookAction], len: usize) -> Result<()> {
        for hook in hooks {
            if hook.target.layer == 0 || hook.target.layer > 2 {
                return Err(Error::InvalidDimension(format!(
                    "hook targets unknown head {}",
                    hook.target
                )));
            }
            if let HookKind::AddExternal { payload, .. } = &hook.kind {
                if payload.dim() != (self.dim, len) {
                    return Err(Error::HookShape {
                        expected_rows: self.dim,
                        expected_cols: len,
                        got_rows: payload.nrows(),
                        got_cols: payload.ncols(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn apply_hooks(head: &mut Matrix, layer: usize, hooks: &[HookAction]) {
    for hook in hooks {
        if hook.target.slot() != layer {
            continue;
        }
        match &hook.kind {
            HookKind::Observe => {}
            HookKind::ScaleAdd(alpha) => {
                head.mapv_inplace(|v| v * (1.0 + alpha));
            }
            HookKind::AddExternal { payload, factor } => {
                // factor 0 must be the bit-exact identity, so skip the add
                if *factor != 0.0 {
                    head.scaled_add(*factor, payload);
                }
            }
            HookKind::Zero => {
                head.fill(0.0);
            }
        }
    }
}

impl HookedModel for TwoLayerModel {
    fn head_refs(&self) -> Vec<HeadRef> {
        vec![HeadRef::L1, HeadRef::L2]
    }

    fn vocab_size(&self) -> usize {
        self.vocab.total()
    }

    /// Causal masked-softmax attention per layer; hooks transform each head
    /// output before the residual addition.
    fn forward(&self, tokens: &[TokenId], hooks: &[HookAction]) -> Result<ForwardTrace> {
        self.check_tokens(tokens)?;
        let len = tokens.len();
        self.check_hooks(hooks, len)?;

        // X^(1): token embedding plus positional embedding.
        let mut x = Matrix::zeros((self.dim, len));
        for (t, &z) in tokens.iter().enumerate() {
            let phi = self.embeddings.column(z);
            let pos = self.positions.column(t);
            for r in 0..self.dim {
                x[[r, t]] = phi[r] + pos[r];
            }
        }

        let mut head_outputs: Vec<Matrix> = Vec::with_capacity(2);
        let mut attentions: Vec<Matrix> = Vec::with_capacity(2);

        for layer in 0..2 {
            // scores[k][t] = x_k . (W_KQ x_t)
            let keyed = self.w_kq[layer].dot(&x); // d x len
            let scores = x.t().dot(&keyed); // len x len

            let mut attn = Matrix::zeros((len, len));
            for t in 0..len {
                let col: Vec<f64> = (0..len).map(|k| scores[[k, t]]).collect();
                let mask: Vec<bool> = (0..len).map(|k| k <= t).collect();
                let weights = softmax_masked(&col, &mask)?;
                for k in 0..len {
                    attn[[t, k]] = weights[k];
                }
            }

            // head output at t: sum_k attn[t][k] * (W_OV x_k)
            let values = self.w_ov[layer].dot(&x); // d x len
            let mut head = values.dot(&attn.t()); // d x len

            apply_hooks(&mut head, layer, hooks);

            x += &head;
            head_outputs.push(head);
            attentions.push(attn);
        }

        let last = x.column(len - 1);
        let logits: Vec<f64> = (0..self.vocab.total())
            .map(|i| self.unembedding.column(i).dot(&last))
            .collect();

        let mut hs = head_outputs.into_iter();
        let mut ats = attentions.into_iter();
        Ok(ForwardTrace {
            logits,
            head_outputs: [hs.next().unwrap(), hs.next().unwrap()],
            attention: [ats.next().unwrap(), ats.next().unwrap()],
        })
    }
}

/// Which answer the solver produces on a conflict input, according to the
/// closed-form logit scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictWinner {
    Factual,
    Induction,
    Boundary,
}

impl std::fmt::Display for ConflictWinner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConflictWinner::Factual => "factual",
            ConflictWinner::Induction => "induction",
            ConflictWinner::Boundary => "boundary",
        };
        f.write_str(s)
    }
}

/// Relative gap between two non-negative scales.
fn relative_gap(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// Closed-form conflict winner: factual iff `exp(C1) C3 < exp(C2) C4`,
/// induction iff `>`.
///
/// `Boundary` is returned when the decision is too close to trust at
/// tolerance `tol`: either the two pathway scales `exp(C1) C3` and
/// `exp(C2) C4` sit within `tol` of each other, or the induction pathway
/// wins but does not separate from the in-sequence noise floor `C3` (every
/// noise token in the prompt carries a raw logit of `C3 / denom`, and at
/// `C1 = 0` the contextual answer ties with it exactly, so the argmax is no
/// longer decided by the pathway comparison).
pub fn conflict_winner_closed_form(consts: &ConstructionConsts, tol: f64) -> ConflictWinner {
    let ind = consts.c1.exp() * consts.c3;
    let fact = consts.c2.exp() * consts.c4;
    if relative_gap(ind, fact) < tol {
        return ConflictWinner::Boundary;
    }
    if ind > fact {
        if relative_gap(ind, consts.c3) < tol {
            ConflictWinner::Boundary
        } else {
            ConflictWinner::Induction
        }
    } else {
        ConflictWinner::Factual
    }
}

/// Closed-form final-position logits of the contextual and parametric
/// answers on a conflict input (orthonormal mode, large `C`):
/// `(C3 e^{C1} / D, C4 e^{C2} / D)` with `D = e^{C1} + e^{C2} + (T - 2)`.
pub fn conflict_logits_closed_form(consts: &ConstructionConsts, t: usize) -> (f64, f64) {
    let denom = consts.c1.exp() + consts.c2.exp() + (t as f64 - 2.0);
    (
        consts.c3 * consts.c1.exp() / denom,
        consts.c4 * consts.c2.exp() / denom,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_breaks_ties_by_lowest_id() {
        let eval = Evaluation::from_logits(&[0.0, 3.0, 3.0, 1.0]);
        assert_eq!(eval.argmax, 1);
        assert!((eval.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_gap_handles_zero_scales() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert!((relative_gap(10.0, 5.0) - 0.5).abs() < 1e-15);
        assert_eq!(relative_gap(5.0, 10.0), relative_gap(10.0, 5.0));
    }

    #[test]
    fn boundary_tolerance_is_respected() {
        // gap between e^0*9 and e^0*10 is 10%: boundary at tol 0.10+,
        // decided factual just below
        let close = ConstructionConsts::new(20.0, 0.0, 0.0, 9.0, 10.0);
        assert_eq!(
            conflict_winner_closed_form(&close, 0.11),
            ConflictWinner::Boundary
        );
        assert_eq!(
            conflict_winner_closed_form(&close, 0.05),
            ConflictWinner::Factual
        );
        // an induction winner at C1 = 0 ties the noise floor exactly, so it
        // stays boundary no matter how wide the pathway gap is
        let tied = ConstructionConsts::new(20.0, 0.0, 0.0, 10.0, 1.0);
        assert_eq!(
            conflict_winner_closed_form(&tied, 0.05),
            ConflictWinner::Boundary
        );
    }
}
