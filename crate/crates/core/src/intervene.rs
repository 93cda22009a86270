// SPDX-License-Identifier: MIT OR Apache-2.0

//! Head identification and intervention, generic over any [`HookedModel`].
//!
//! Stage one scores every head by the change in the target probability under
//! additive scaling (`H <- H + alpha H`), accumulated over a small suite
//! spanning conflict types and over a grid of coefficients, then drops heads
//! whose score goes negative for any conflict type and keeps the top K by
//! aggregated score.
//!
//! Stage two intervenes in one of two ways:
//!
//! * single-pass: scale the selected head outputs in place during one run
//!   (`beta = -1` zeroes a head, the knock-out ablation);
//! * dual-run: run once without hooks, cache the selected head outputs, then
//!   run again adding `beta` times the cached vectors. When an upstream
//!   intervention changes a downstream head's run-2 activation, subtracting
//!   the run-1 cache is no longer the same as zeroing — that difference is
//!   the whole point of the dual-run design.

use crate::error::{Error, Result};
use crate::model::{Evaluation, HeadRef, HookAction, HookedModel};
use crate::numerics::Matrix;
use crate::vocab::{Sequence, SequenceKind, TokenId, VocabSpec};
use crate::RandomStream;
use serde::{Deserialize, Serialize};

/// Conflict flavor of a suite entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictType {
    /// Plain factual prompt; target is its own answer `G*(s)`.
    CleanFactual,
    /// Knowledge-conflict prompt; target is the parametric answer.
    Conflict,
}

impl std::fmt::Display for ConflictType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConflictType::CleanFactual => f.write_str("clean_factual"),
            ConflictType::Conflict => f.write_str("conflict"),
        }
    }
}

/// One head-selection prompt with its target token.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub conflict_type: ConflictType,
    pub tokens: Vec<TokenId>,
    pub target: TokenId,
}

/// Head-selection dataset `D`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictSuite {
    pub conflict_types: Vec<ConflictType>,
    pub entries: Vec<SuiteEntry>,
}

impl ConflictSuite {
    /// Build a suite of `size` entries cycling over `types` (so four entries
    /// over two types gives two each). Targets promote parametric knowledge:
    /// the factual answer on clean prompts, `y_p` on conflict prompts.
    /// Entry `k` draws from `rng.derive(k)`.
    pub fn balanced(
        vocab: &VocabSpec,
        t: usize,
        types: &[ConflictType],
        size: usize,
        rng: &RandomStream,
    ) -> Result<Self> {
        if types.is_empty() || size < types.len() {
            return Err(Error::InvalidSpec(format!(
                "suite needs at least one entry per conflict type ({} types, size {size})",
                types.len()
            )));
        }
        let mut entries = Vec::with_capacity(size);
        for k in 0..size {
            let ty = types[k % types.len()];
            let mut child = rng.derive(k as u64);
            let kind = match ty {
                ConflictType::CleanFactual => SequenceKind::Factual,
                ConflictType::Conflict => SequenceKind::Conflict,
            };
            let seq = crate::vocab::generate_sequence(vocab, kind, t, &mut child)?;
            entries.push(SuiteEntry {
                conflict_type: ty,
                target: seq.parametric_answer.unwrap(),
                tokens: seq.tokens,
            });
        }
        Ok(ConflictSuite {
            conflict_types: types.to_vec(),
            entries,
        })
    }

    /// Suite over explicit sequences; targets are the parametric answers.
    pub fn from_sequences(types: &[ConflictType], seqs: &[(ConflictType, &Sequence)]) -> Self {
        let entries = seqs
            .iter()
            .map(|(ty, seq)| SuiteEntry {
                conflict_type: *ty,
                target: seq.parametric_answer.unwrap(),
                tokens: seq.tokens.clone(),
            })
            .collect();
        ConflictSuite {
            conflict_types: types.to_vec(),
            entries,
        }
    }
}

/// Accumulated per-type, per-head scores `S+` and `S-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub conflict_types: Vec<ConflictType>,
    pub heads: Vec<HeadRef>,
    /// `s_plus[j][i]` is the positive-scaling score of head `i` on type `j`.
    pub s_plus: Vec<Vec<f64>>,
    pub s_minus: Vec<Vec<f64>>,
}

impl ScoreTable {
    fn head_index(&self, head: HeadRef) -> usize {
        self.heads
            .iter()
            .position(|&h| h == head)
            .expect("head present in table")
    }

    pub fn plus(&self, ty: ConflictType, head: HeadRef) -> f64 {
        let j = self
            .conflict_types
            .iter()
            .position(|&t| t == ty)
            .expect("type present in table");
        self.s_plus[j][self.head_index(head)]
    }

    pub fn minus(&self, ty: ConflictType, head: HeadRef) -> f64 {
        let j = self
            .conflict_types
            .iter()
            .position(|&t| t == ty)
            .expect("type present in table");
        self.s_minus[j][self.head_index(head)]
    }

    /// Aggregated score of one head: sum over conflict types.
    pub fn aggregate_plus(&self, head: HeadRef) -> f64 {
        let i = self.head_index(head);
        self.s_plus.iter().map(|row| row[i]).sum()
    }

    pub fn aggregate_minus(&self, head: HeadRef) -> f64 {
        let i = self.head_index(head);
        self.s_minus.iter().map(|row| row[i]).sum()
    }
}

/// Heads surviving the consistency filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSets {
    pub h_plus: Vec<HeadRef>,
    pub h_minus: Vec<HeadRef>,
}

/// One selected head with its inference-time scaling factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedHead {
    pub head: HeadRef,
    pub beta: f64,
}

/// Selected head sets with scaling factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub positive: Vec<PlannedHead>,
    pub negative: Vec<PlannedHead>,
    pub k: usize,
    /// Set when fewer than `k` heads survived on some side.
    pub truncated: bool,
}

impl InterventionPlan {
    /// Plan with explicit heads and a shared factor per side.
    pub fn explicit(
        positive: &[HeadRef],
        beta_plus: f64,
        negative: &[HeadRef],
        beta_minus: f64,
    ) -> Self {
        InterventionPlan {
            positive: positive
                .iter()
                .map(|&head| PlannedHead {
                    head,
                    beta: beta_plus,
                })
                .collect(),
            negative: negative
                .iter()
                .map(|&head| PlannedHead {
                    head,
                    beta: beta_minus,
                })
                .collect(),
            k: positive.len().max(negative.len()).max(1),
            truncated: false,
        }
    }

    /// Set every positive beta to `beta_plus` and every negative beta to
    /// `beta_minus`.
    pub fn with_betas(mut self, beta_plus: f64, beta_minus: f64) -> Self {
        for p in &mut self.positive {
            p.beta = beta_plus;
        }
        for p in &mut self.negative {
            p.beta = beta_minus;
        }
        self
    }

    fn planned(&self) -> impl Iterator<Item = &PlannedHead> {
        self.positive.iter().chain(self.negative.iter())
    }
}

/// Per-head cached activation streams from a hook-free run.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCache {
    pub streams: Vec<(HeadRef, Matrix)>,
}

impl ActivationCache {
    pub fn get(&self, head: HeadRef) -> Option<&Matrix> {
        self.streams
            .iter()
            .find(|(h, _)| *h == head)
            .map(|(_, m)| m)
    }
}

/// Change in the probability of `y` when one head's output is additively
/// scaled: `P(y | do(H <- H + alpha H)) - P(y)`. Always in `[-1, 1]`.
pub fn intervention_effect<M: HookedModel>(
    model: &M,
    tokens: &[TokenId],
    y: TokenId,
    head: HeadRef,
    alpha: f64,
) -> Result<f64> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite("intervention coefficient alpha".into()));
    }
    let base = model.evaluate(tokens, &[])?;
    let scaled = model.evaluate(tokens, &[HookAction::scale_add(head, alpha)])?;
    Ok(scaled.prob(y) - base.prob(y))
}

/// Accumulate per-type, per-head scores over the suite and both coefficient
/// grids. Several coefficients per head probe the response at more than one
/// scaling, which is what keeps quasi-monotone heads apart from erratic ones.
pub fn record_head_scores<M: HookedModel>(
    model: &M,
    suite: &ConflictSuite,
    alpha_plus: &[f64],
    alpha_minus: &[f64],
) -> Result<ScoreTable> {
    if alpha_plus.is_empty() || alpha_minus.is_empty() {
        return Err(Error::InvalidSpec(
            "coefficient grids must be non-empty".into(),
        ));
    }
    let heads = model.head_refs();
    let types = suite.conflict_types.clone();
    let mut s_plus = vec![vec![0.0; heads.len()]; types.len()];
    let mut s_minus = vec![vec![0.0; heads.len()]; types.len()];
    for entry in &suite.entries {
        let j = types
            .iter()
            .position(|&t| t == entry.conflict_type)
            .ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "suite entry of type {} not listed in conflict_types",
                    entry.conflict_type
                ))
            })?;
        for (i, &head) in heads.iter().enumerate() {
            for &alpha in alpha_plus {
                s_plus[j][i] +=
                    intervention_effect(model, &entry.tokens, entry.target, head, alpha)?;
            }
            for &alpha in alpha_minus {
                s_minus[j][i] +=
                    intervention_effect(model, &entry.tokens, entry.target, head, alpha)?;
            }
        }
    }
    Ok(ScoreTable {
        conflict_types: types,
        heads,
        s_plus,
        s_minus,
    })
}

/// Drop head `i` from a side when its score is below `-tolerance` for any
/// conflict type. A zero tolerance keeps heads whose scores are exactly
/// zero (the layer-1 head scores an analytic 0 on clean factual prompts).
pub fn filter_inconsistent_heads(table: &ScoreTable, tolerance: f64) -> HeadSets {
    let keep = |scores: &Vec<Vec<f64>>, i: usize| -> bool {
        scores.iter().all(|row| row[i] >= -tolerance)
    };
    let h_plus = table
        .heads
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(&table.s_plus, i))
        .map(|(_, &h)| h)
        .collect();
    let h_minus = table
        .heads
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(&table.s_minus, i))
        .map(|(_, &h)| h)
        .collect();
    HeadSets { h_plus, h_minus }
}

/// Rank surviving heads by aggregated score (sum over conflict types) and
/// keep the top `min(k, survivors)` per side, ties broken by head order.
/// Betas start at zero; fill them with [`InterventionPlan::with_betas`].
pub fn select_topk(table: &ScoreTable, sets: &HeadSets, k: usize) -> Result<InterventionPlan> {
    if k == 0 {
        return Err(Error::Validation("top-K selection needs K >= 1".into()));
    }
    let rank = |heads: &[HeadRef], aggregate: &dyn Fn(HeadRef) -> f64| -> Vec<PlannedHead> {
        let mut scored: Vec<(usize, HeadRef, f64)> = heads
            .iter()
            .enumerate()
            .map(|(idx, &h)| (idx, h, aggregate(h)))
            .collect();
        scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(_, head, _)| PlannedHead { head, beta: 0.0 })
            .collect()
    };
    let positive = rank(&sets.h_plus, &|h| table.aggregate_plus(h));
    let negative = rank(&sets.h_minus, &|h| table.aggregate_minus(h));
    let truncated = sets.h_plus.len() < k || sets.h_minus.len() < k;
    Ok(InterventionPlan {
        positive,
        negative,
        k,
        truncated,
    })
}

/// Single-pass intervention: scale the planned head outputs in place
/// (`beta = -1` zeroes a head exactly).
pub fn single_pass_infer<M: HookedModel>(
    model: &M,
    tokens: &[TokenId],
    plan: &InterventionPlan,
) -> Result<Evaluation> {
    let hooks: Vec<HookAction> = plan
        .planned()
        .map(|p| HookAction::scale_add(p.head, p.beta))
        .collect();
    model.evaluate(tokens, &hooks)
}

/// Dual-run intervention: run hook-free, cache the planned heads' output
/// streams, then run again adding `beta` times the cached stream to each
/// planned head. Returns the run-2 evaluation and the run-1 cache.
pub fn juice_infer<M: HookedModel>(
    model: &M,
    tokens: &[TokenId],
    plan: &InterventionPlan,
) -> Result<(Evaluation, ActivationCache)> {
    let clean = model.forward(tokens, &[])?;
    let streams: Vec<(HeadRef, Matrix)> = plan
        .planned()
        .map(|p| (p.head, clean.head_outputs[p.head.slot()].clone()))
        .collect();
    let cache = ActivationCache { streams };
    let hooks: Vec<HookAction> = plan
        .planned()
        .map(|p| HookAction::add_external(p.head, cache.get(p.head).unwrap().clone(), p.beta))
        .collect();
    let eval = model.evaluate(tokens, &hooks)?;
    Ok((eval, cache))
}

/// Default coefficient grids for the toy suite.
pub const DEFAULT_ALPHA_PLUS: [f64; 2] = [1.0, 2.0];
pub const DEFAULT_ALPHA_MINUS: [f64; 2] = [-0.5, -1.0];

/// Coefficient grids at language-model scale, kept as documented presets:
/// positive scalings 0..5 and negative scalings 0..-3.
pub const LM_ALPHA_PLUS: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
pub const LM_ALPHA_MINUS: [f64; 4] = [0.0, -1.0, -2.0, -3.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn with_betas_fills_both_sides() {
        let plan = InterventionPlan::explicit(&[HeadRef::L1], 0.0, &[HeadRef::L2], 0.0)
            .with_betas(2.0, -1.0);
        assert_eq!(plan.positive[0].beta, 2.0);
        assert_eq!(plan.negative[0].beta, -1.0);
    }

    #[test]
    fn aggregate_sums_over_conflict_types() {
        let table = ScoreTable {
            conflict_types: vec![ConflictType::CleanFactual, ConflictType::Conflict],
            heads: vec![HeadRef::L1, HeadRef::L2],
            s_plus: vec![vec![0.25, 1.0], vec![0.5, -0.25]],
            s_minus: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert_eq!(table.aggregate_plus(HeadRef::L1), 0.75);
        assert_eq!(table.aggregate_plus(HeadRef::L2), 0.75);
    }
}
