// SPDX-License-Identifier: MIT OR Apache-2.0

//! One-layer attention model over idealized first-layer outputs, its exact
//! gradient formulas, and the two-step full-batch gradient descent that grows
//! the superposition layer.
//!
//! The model is `f_W(X) = W_lin^T W_OV X sigma` where the attention
//! coefficients `sigma` come from `X^T W_KQ x_T` either raw (`Linear`) or
//! through a softmax (`Softmax`). The gradient formulas below are the exact
//! cross-entropy gradients of the linear-attention model; the training
//! reproduction applies them verbatim while computing `sigma` in softmax
//! mode, where zero-initialized scores give the uniform `1/T` coefficients
//! the two-step analysis relies on. (Raw linear coefficients are identically
//! zero at zero init, so nothing would ever move.)
//!
//! Inputs are prepared with the first layer assumed perfect: column `i` is
//! `phi(z_i) + phi'(z_{i-1})` for interior positions, while the first and
//! last columns carry no remapped part and the last is always `phi(q)`.
//! Embeddings, remapped embeddings, and unembeddings are strictly orthogonal
//! basis blocks, and `W_lin` stays frozen.

use crate::error::{Error, Result};
use crate::numerics::{argmax_lowest, outer_add, softmax, Matrix};
use crate::vocab::{Sequence, SequenceKind, TokenId, VocabSpec};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// How attention coefficients are computed from raw scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// `sigma = softmax(X^T W_KQ x_T)`.
    Softmax,
    /// `sigma = X^T W_KQ x_T` used raw.
    Linear,
}

/// Training-loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step-1 learning rate.
    pub eta1: f64,
    /// Step-2 learning rate.
    pub eta2: f64,
    pub sigma_mode: SigmaMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta1: 1.0,
            eta2: 50.0,
            sigma_mode: SigmaMode::Softmax,
        }
    }
}

/// One-layer attention model with frozen embeddings and unembedding.
#[derive(Debug, Clone)]
pub struct LinearAttnModel {
    pub w_kq: Matrix,
    pub w_ov: Matrix,
    /// Frozen unembedding `d x N`; column `i` is `mu(i)`.
    pub w_lin: Matrix,
    /// Frozen token embeddings `d x N`.
    pub phi: Matrix,
    /// Frozen remapped embeddings `d x N` (`phi'`).
    pub phi_remap: Matrix,
}

impl LinearAttnModel {
    /// Zero-initialized trainable matrices over the strictly orthogonal
    /// layout `phi = e_{0..N}`, `mu = e_{N..2N}`, `phi' = e_{2N..3N}`,
    /// so `d = 3N`.
    pub fn zero_init(vocab: &VocabSpec) -> Self {
        let n = vocab.total();
        let d = 3 * n;
        let mut phi = Matrix::zeros((d, n));
        let mut w_lin = Matrix::zeros((d, n));
        let mut phi_remap = Matrix::zeros((d, n));
        for i in 0..n {
            phi[[i, i]] = 1.0;
            w_lin[[n + i, i]] = 1.0;
            phi_remap[[2 * n + i, i]] = 1.0;
        }
        LinearAttnModel {
            w_kq: Matrix::zeros((d, d)),
            w_ov: Matrix::zeros((d, d)),
            w_lin,
            phi,
            phi_remap,
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.ncols()
    }
}

/// One prepared example: input columns, label, and task tag.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    /// `d x T`; see module docs for the column layout.
    pub x: Matrix,
    pub label: TokenId,
    pub kind: SequenceKind,
    /// Critical position: subject for factual, trigger-successor for
    /// induction.
    pub critical_pos: usize,
}

/// The full training batch (the analysis is full-batch by construction).
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub examples: Vec<PreparedExample>,
    pub seq_len: usize,
}

impl PreparedBatch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Build model inputs from generated sequences: interior columns are
/// `phi(z_i) + phi'(z_{i-1})`, the first column is `phi(z_1)`, the last is
/// `phi(q)` with no remapped part.
pub fn prepare_inputs(
    model: &LinearAttnModel,
    vocab: &VocabSpec,
    sequences: &[Sequence],
) -> Result<PreparedBatch> {
    let n = vocab.total();
    if model.vocab_size() != n {
        return Err(Error::SpecMismatch(format!(
            "model built for vocabulary of {} tokens, sequences use {}",
            model.vocab_size(),
            n
        )));
    }
    let mut seq_len = 0;
    let mut examples = Vec::with_capacity(sequences.len());
    for seq in sequences {
        seq.validate(vocab)
            .map_err(|e| e.context("prepare_inputs"))?;
        let t = seq.len();
        if seq_len == 0 {
            seq_len = t;
        } else if seq_len != t {
            return Err(Error::SpecMismatch(
                "all sequences in a batch must share one length".into(),
            ));
        }
        let d = model.dim();
        let mut x = Matrix::zeros((d, t));
        for (i, &z) in seq.tokens.iter().enumerate() {
            let phi = model.phi.column(z);
            for r in 0..d {
                x[[r, i]] = phi[r];
            }
            if i > 0 && i < t - 1 {
                let remap = model.phi_remap.column(seq.tokens[i - 1]);
                for r in 0..d {
                    x[[r, i]] += remap[r];
                }
            }
        }
        let (label, critical_pos) = match seq.kind {
            SequenceKind::Factual => (seq.parametric_answer.unwrap(), seq.subject_pos.unwrap()),
            SequenceKind::Induction => {
                (seq.contextual_answer.unwrap(), seq.trigger_pos.unwrap() + 1)
            }
            SequenceKind::Conflict => {
                return Err(Error::SpecMismatch(
                    "conflict sequences are inference-only, not training data".into(),
                ))
            }
        };
        examples.push(PreparedExample {
            x,
            label,
            kind: seq.kind,
            critical_pos,
        });
    }
    Ok(PreparedBatch { examples, seq_len })
}

/// Forward pass: returns final logits `f(X)` and attention coefficients
/// `sigma` under the configured mode.
pub fn forward_linear(
    model: &LinearAttnModel,
    x: &Matrix,
    config: &TrainConfig,
) -> (Vec<f64>, Vec<f64>) {
    let t = x.ncols();
    let x_last = x.column(t - 1).to_owned();
    let keyed = model.w_kq.dot(&x_last); // d
    let raw: Vec<f64> = (0..t).map(|i| x.column(i).dot(&keyed)).collect();
    let sigma = match config.sigma_mode {
        SigmaMode::Softmax => softmax(&raw),
        SigmaMode::Linear => raw,
    };
    // f = W_lin^T W_OV X sigma
    let sigma_arr = Array1::from(sigma.clone());
    let weighted = x.dot(&sigma_arr); // d
    let mixed = model.w_ov.dot(&weighted); // d
    let logits: Vec<f64> = (0..model.vocab_size())
        .map(|i| model.w_lin.column(i).dot(&mixed))
        .collect();
    (logits, sigma)
}

/// Cross-entropy loss of one example.
pub fn cross_entropy(
    model: &LinearAttnModel,
    x: &Matrix,
    label: TokenId,
    config: &TrainConfig,
) -> f64 {
    let (logits, _) = forward_linear(model, x, config);
    let probs = softmax(&logits);
    -probs[label].ln()
}

/// Negative gradients (ascent directions) of the cross-entropy loss:
///
/// ```text
/// -grad W_OV = W_lin (e_y - softmax(f)) (sum_j sigma_j x_j)^T
/// -grad W_KQ = X [ (W_lin^T W_OV X)^T (e_y - softmax(f)) ] x_T^T
/// ```
///
/// with `sigma` taken from [`forward_linear`] under the configured mode. In
/// `Linear` mode these are the exact gradients; in `Softmax` mode they are
/// applied as written, without the softmax Jacobian.
pub fn gradients(
    model: &LinearAttnModel,
    x: &Matrix,
    label: TokenId,
    config: &TrainConfig,
) -> (Matrix, Matrix) {
    let d = model.dim();
    let t = x.ncols();
    let (logits, sigma) = forward_linear(model, x, config);
    let probs = softmax(&logits);
    // beta = e_y - softmax(f)
    let mut beta = Array1::from(probs);
    beta.mapv_inplace(|p| -p);
    beta[label] += 1.0;

    // -grad W_OV = (W_lin beta) (X sigma)^T
    let lin_beta = model.w_lin.dot(&beta); // d
    let weighted = x.dot(&Array1::from(sigma)); // d
    let mut neg_grad_ov = Matrix::zeros((d, d));
    outer_add(&mut neg_grad_ov, 1.0, lin_beta.view(), weighted.view());

    // -grad W_KQ = X gamma x_T^T with gamma_i = (W_lin^T W_OV x_i) . beta
    let mixed = model.w_ov.dot(x); // d x T
    let header = model.w_lin.t().dot(&mixed); // N x T
    let gamma = header.t().dot(&beta); // T
    let carrier = x.dot(&gamma); // d
    let x_last = x.column(t - 1);
    let mut neg_grad_kq = Matrix::zeros((d, d));
    outer_add(&mut neg_grad_kq, 1.0, carrier.view(), x_last);

    (neg_grad_ov, neg_grad_kq)
}

/// Per-step training report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssocSignalReport {
    /// `signal_phi[k][v] = mu(k)^T W_OV phi(v)`.
    pub signal_phi: Vec<Vec<f64>>,
    /// `signal_phi_remap[k][v] = mu(k)^T W_OV phi'(v)`.
    pub signal_phi_remap: Vec<Vec<f64>>,
    /// For each subject id: does `argmax_k mu(k)^T W_OV phi(s)` hit `G*(s)`?
    pub fact_argmax_ok: Vec<bool>,
    /// For each training example: is the sigma-argmax its critical position?
    pub attention_focus: Vec<bool>,
    /// Per example, the raw update coefficients `gamma_i` at every position
    /// (audit trail for the key-signal comparison).
    pub gamma: Vec<Vec<f64>>,
    /// Mean cross-entropy loss over the batch.
    pub mean_loss: f64,
}

impl AssocSignalReport {
    pub fn fact_argmax_fraction(&self) -> f64 {
        if self.fact_argmax_ok.is_empty() {
            return 0.0;
        }
        self.fact_argmax_ok.iter().filter(|&&b| b).count() as f64 / self.fact_argmax_ok.len() as f64
    }

    pub fn attention_focus_fraction(&self) -> f64 {
        if self.attention_focus.is_empty() {
            return 0.0;
        }
        self.attention_focus.iter().filter(|&&b| b).count() as f64
            / self.attention_focus.len() as f64
    }
}

/// Fill the signal matrices, per-fact argmax flags, per-example
/// attention-focus flags, and gamma audit values for the current weights.
pub fn measure_signals(
    model: &LinearAttnModel,
    vocab: &VocabSpec,
    batch: &PreparedBatch,
    config: &TrainConfig,
) -> AssocSignalReport {
    let n = vocab.total();
    // M = W_lin^T W_OV [phi | phi'] in two N x N blocks
    let mixed_phi = model.w_ov.dot(&model.phi);
    let mixed_remap = model.w_ov.dot(&model.phi_remap);
    let sig_phi = model.w_lin.t().dot(&mixed_phi);
    let sig_remap = model.w_lin.t().dot(&mixed_remap);
    let signal_phi: Vec<Vec<f64>> = (0..n).map(|k| sig_phi.row(k).to_vec()).collect();
    let signal_phi_remap: Vec<Vec<f64>> = (0..n).map(|k| sig_remap.row(k).to_vec()).collect();

    let fact_argmax_ok: Vec<bool> = vocab
        .subject_ids()
        .map(|s| {
            let column: Vec<f64> = (0..n).map(|k| signal_phi[k][s]).collect();
            argmax_lowest(&column) == vocab.fact(s)
        })
        .collect();

    let mut attention_focus = Vec::with_capacity(batch.len());
    let mut gamma_audit = Vec::with_capacity(batch.len());
    let mut total_loss = 0.0;
    for ex in &batch.examples {
        let (logits, sigma) = forward_linear(model, &ex.x, config);
        let probs = softmax(&logits);
        total_loss -= probs[ex.label].ln();
        attention_focus.push(argmax_lowest(&sigma) == ex.critical_pos);

        let mut beta = Array1::from(probs);
        beta.mapv_inplace(|p| -p);
        beta[ex.label] += 1.0;
        let mixed = model.w_ov.dot(&ex.x);
        let header = model.w_lin.t().dot(&mixed);
        let gamma = header.t().dot(&beta);
        gamma_audit.push(gamma.to_vec());
    }
    let mean_loss = if batch.is_empty() {
        0.0
    } else {
        total_loss / batch.len() as f64
    };

    AssocSignalReport {
        signal_phi,
        signal_phi_remap,
        fact_argmax_ok,
        attention_focus,
        gamma: gamma_audit,
        mean_loss,
    }
}

/// Trained weights plus the per-step reports.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: LinearAttnModel,
    pub reports: Vec<AssocSignalReport>,
    /// Mean loss before any update.
    pub initial_loss: f64,
}

/// Full-batch gradient descent: `W <- W + (eta_step / n) * sum_e (-grad_e)`,
/// evaluating all gradients at the step's starting weights. Step 1 uses
/// `eta1`, every later step `eta2`. Aborts with diagnostics if any weight
/// entry stops being finite.
pub fn gd_train(
    mut model: LinearAttnModel,
    vocab: &VocabSpec,
    batch: &PreparedBatch,
    config: &TrainConfig,
    steps: usize,
) -> Result<TrainOutcome> {
    if batch.is_empty() {
        return Err(Error::SpecMismatch("training batch is empty".into()));
    }
    let n = batch.len() as f64;
    let d = model.dim();
    let initial_loss = measure_signals(&model, vocab, batch, config).mean_loss;
    let mut reports = Vec::with_capacity(steps);
    for step in 0..steps {
        let eta = if step == 0 { config.eta1 } else { config.eta2 };
        let mut acc_ov = Matrix::zeros((d, d));
        let mut acc_kq = Matrix::zeros((d, d));
        for ex in &batch.examples {
            let (g_ov, g_kq) = gradients(&model, &ex.x, ex.label, config);
            acc_ov += &g_ov;
            acc_kq += &g_kq;
        }
        model.w_ov.scaled_add(eta / n, &acc_ov);
        model.w_kq.scaled_add(eta / n, &acc_kq);
        if !crate::numerics::all_finite(&model.w_ov) || !crate::numerics::all_finite(&model.w_kq) {
            return Err(Error::NonFinite(format!(
                "training diverged at step {} (eta = {eta})",
                step + 1
            )));
        }
        reports.push(measure_signals(&model, vocab, batch, config));
    }
    Ok(TrainOutcome {
        model,
        reports,
        initial_loss,
    })
}
