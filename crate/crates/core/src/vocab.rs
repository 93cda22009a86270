// SPDX-License-Identifier: MIT OR Apache-2.0

//! Partitioned vocabulary and task-sequence generation.
//!
//! The vocabulary is `V = S ∪ A ∪ {q} ∪ N`: subject tokens, answer tokens, a
//! single trigger/query token `q`, and noise tokens. Token ids are contiguous
//! ranges in that order:
//!
//! ```text
//! subjects:  0 .. S
//! answers:   S .. 2S
//! trigger:   2S
//! noise:     2S+1 .. 2S+1+Nn
//! ```
//!
//! A bijection `G*` maps each subject to an answer. Three sequence kinds are
//! generated (positions are 0-based in code, 1-based in docs and exports):
//!
//! * factual recall — a subject somewhere in the first `T-1` positions,
//!   noise elsewhere, `q` last; the held-out next token is `G*(s)`.
//! * induction — `q` at an interior position `j`, a noise answer right after
//!   it, `q` last; the held-out next token is `z_{j+1}`.
//! * conflict — both patterns in one sequence, so the parametric answer
//!   `G*(s)` and the contextual answer `z_{j+1}` disagree.
//!
//! Sampling procedures are replayable: each documents its exact draw order on
//! a [`RandomStream`], and noise fills use the shared without-replacement
//! scheme in [`draw_noise`].

use crate::error::{Error, Result};
use crate::numerics::RandomStream;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Token id into the packed vocabulary.
pub type TokenId = usize;

/// Vocabulary layout plus the ground-truth fact map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    n_subjects: usize,
    n_noise: usize,
    /// `ground_truth[k]` is the answer id for subject id `k`.
    ground_truth: Vec<TokenId>,
}

impl VocabSpec {
    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    /// Total vocabulary size `N = |S| + |A| + 1 + Nn`.
    pub fn total(&self) -> usize {
        2 * self.n_subjects + 1 + self.n_noise
    }

    pub fn trigger(&self) -> TokenId {
        2 * self.n_subjects
    }

    pub fn subject_ids(&self) -> std::ops::Range<TokenId> {
        0..self.n_subjects
    }

    pub fn answer_ids(&self) -> std::ops::Range<TokenId> {
        self.n_subjects..2 * self.n_subjects
    }

    pub fn noise_ids(&self) -> std::ops::Range<TokenId> {
        2 * self.n_subjects + 1..self.total()
    }

    pub fn is_subject(&self, t: TokenId) -> bool {
        t < self.n_subjects
    }

    pub fn is_answer(&self, t: TokenId) -> bool {
        self.answer_ids().contains(&t)
    }

    pub fn is_noise(&self, t: TokenId) -> bool {
        self.noise_ids().contains(&t)
    }

    /// Ground-truth answer `G*(s)` for a subject id.
    pub fn fact(&self, subject: TokenId) -> TokenId {
        debug_assert!(self.is_subject(subject));
        self.ground_truth[subject]
    }
}

/// Build the vocabulary with a uniformly random bijection `G*`.
///
/// Draw order: one Fisher-Yates shuffle of the answer ids, using
/// `rng.index(k+1)` for `k = n_subjects-1 .. 1`.
pub fn build_vocab(n_subjects: usize, n_noise: usize, rng: &mut RandomStream) -> Result<VocabSpec> {
    if n_subjects == 0 || n_noise == 0 {
        return Err(Error::InvalidSpec(format!(
            "vocabulary needs n_subjects >= 1 and n_noise >= 1, got {n_subjects} and {n_noise}"
        )));
    }
    let mut answers: Vec<TokenId> = (n_subjects..2 * n_subjects).collect();
    for k in (1..answers.len()).rev() {
        let j = rng.index(k + 1);
        answers.swap(k, j);
    }
    Ok(VocabSpec {
        n_subjects,
        n_noise,
        ground_truth: answers,
    })
}

/// Task kind of a generated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceKind {
    Factual,
    Induction,
    Conflict,
}

impl std::fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SequenceKind::Factual => "factual",
            SequenceKind::Induction => "induction",
            SequenceKind::Conflict => "conflict",
        };
        f.write_str(s)
    }
}

/// One generated token sequence with its critical positions and labels.
///
/// Positions are 0-based here; [`SequenceRecord`] converts to the 1-based
/// convention used by exports and golden files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub kind: SequenceKind,
    pub tokens: Vec<TokenId>,
    /// Position `i` of the subject token (factual, conflict).
    pub subject_pos: Option<usize>,
    /// Position `j` of the interior trigger occurrence (induction, conflict).
    pub trigger_pos: Option<usize>,
    /// `y_p = G*(s)`.
    pub parametric_answer: Option<TokenId>,
    /// `y_c = z_{j+1}`.
    pub contextual_answer: Option<TokenId>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Check every kind-specific structural invariant against a vocabulary.
    pub fn validate(&self, vocab: &VocabSpec) -> Result<()> {
        let t = self.tokens.len();
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if t < 4 {
            return fail(format!("sequence of length {t} is too short"));
        }
        if *self.tokens.last().unwrap() != vocab.trigger() {
            return fail("last token must be the trigger q".into());
        }
        let noise: Vec<TokenId> = self
            .tokens
            .iter()
            .copied()
            .filter(|&z| vocab.is_noise(z))
            .collect();
        let mut seen = std::collections::HashSet::new();
        for z in &noise {
            if !seen.insert(*z) {
                return fail(format!("noise token {z} repeats"));
            }
        }
        let subjects = self.tokens.iter().filter(|&&z| vocab.is_subject(z)).count();
        match self.kind {
            SequenceKind::Factual => {
                let i = self.subject_pos.ok_or_else(|| {
                    Error::InvalidSpec("factual sequence without subject_pos".into())
                })?;
                if i >= t - 1 || !vocab.is_subject(self.tokens[i]) || subjects != 1 {
                    return fail("factual sequence must hold exactly one subject before q".into());
                }
                if self.parametric_answer != Some(vocab.fact(self.tokens[i])) {
                    return fail("parametric answer must be G*(s)".into());
                }
            }
            SequenceKind::Induction => {
                let j = self.trigger_pos.ok_or_else(|| {
                    Error::InvalidSpec("induction sequence without trigger_pos".into())
                })?;
                if j < 1 || j > t - 3 || self.tokens[j] != vocab.trigger() {
                    return fail("interior trigger must sit in positions 2..T-2".into());
                }
                if self.contextual_answer != Some(self.tokens[j + 1])
                    || !vocab.is_noise(self.tokens[j + 1])
                {
                    return fail("contextual answer must be the noise token after q".into());
                }
                if subjects != 0 {
                    return fail("induction sequences carry no subject".into());
                }
            }
            SequenceKind::Conflict => {
                let i = self.subject_pos.ok_or_else(|| {
                    Error::InvalidSpec("conflict sequence without subject_pos".into())
                })?;
                let j = self.trigger_pos.ok_or_else(|| {
                    Error::InvalidSpec("conflict sequence without trigger_pos".into())
                })?;
                if j < 1 || j > t - 3 || self.tokens[j] != vocab.trigger() {
                    return fail("interior trigger must sit in positions 2..T-2".into());
                }
                if i == j || i == j + 1 || i >= t - 1 || !vocab.is_subject(self.tokens[i]) {
                    return fail("subject must avoid the trigger pair and the final q".into());
                }
                let yp = self.parametric_answer;
                let yc = self.contextual_answer;
                if yp != Some(vocab.fact(self.tokens[i])) || yc != Some(self.tokens[j + 1]) {
                    return fail("conflict labels must be G*(s) and z_{j+1}".into());
                }
                if yp == yc {
                    return fail("conflict labels must differ".into());
                }
            }
        }
        Ok(())
    }
}

fn check_generation_pre(vocab: &VocabSpec, t: usize) -> Result<()> {
    if t < 4 {
        return Err(Error::SequenceLength { min: 4, got: t });
    }
    if vocab.n_noise < t {
        return Err(Error::InsufficientNoise {
            needed: t,
            available: vocab.n_noise,
        });
    }
    Ok(())
}

/// Draw `want` distinct noise tokens, excluding `exclude`, by repeatedly
/// taking `pool.swap_remove(rng.index(pool.len()))` from the ascending pool
/// of remaining noise ids.
fn draw_noise(
    vocab: &VocabSpec,
    exclude: &[TokenId],
    want: usize,
    rng: &mut RandomStream,
) -> Vec<TokenId> {
    let mut pool: Vec<TokenId> = vocab.noise_ids().filter(|z| !exclude.contains(z)).collect();
    let mut out = Vec::with_capacity(want);
    for _ in 0..want {
        let k = rng.index(pool.len());
        out.push(pool.swap_remove(k));
    }
    out
}

/// Generate one sequence of the given kind and length.
///
/// Draw order (all on `rng`, in this exact sequence):
///
/// * factual:   subject `s = index(S)`; position `i = index(T-1)`; then the
///   noise fill for the remaining `T-2` positions in ascending position
///   order via [`draw_noise`].
/// * induction: trigger position `j = 1 + index(T-3)`; answer
///   `b = noise_start + index(Nn)`; then the noise fill (excluding `b`) for
///   the remaining positions ascending.
/// * conflict:  `j` and `b` as for induction; subject position `i` drawn as
///   `allowed[index(|allowed|)]` from the ascending list of positions
///   `0..T-1` minus `{j, j+1}`; subject `s = index(S)`; then the noise fill
///   (excluding `b`) ascending.
pub fn generate_sequence(
    vocab: &VocabSpec,
    kind: SequenceKind,
    t: usize,
    rng: &mut RandomStream,
) -> Result<Sequence> {
    check_generation_pre(vocab, t)?;
    match kind {
        SequenceKind::Factual => {
            let s = rng.index(vocab.n_subjects);
            let i = rng.index(t - 1);
            Ok(factual_at(vocab, t, s, i, rng))
        }
        SequenceKind::Induction => {
            let j = 1 + rng.index(t - 3);
            let noise_start = vocab.noise_ids().start;
            let b = noise_start + rng.index(vocab.n_noise);
            Ok(induction_at(vocab, t, j, b, rng))
        }
        SequenceKind::Conflict => {
            let j = 1 + rng.index(t - 3);
            let noise_start = vocab.noise_ids().start;
            let b = noise_start + rng.index(vocab.n_noise);
            let allowed: Vec<usize> = (0..t - 1).filter(|&p| p != j && p != j + 1).collect();
            let i = allowed[rng.index(allowed.len())];
            let s = rng.index(vocab.n_subjects);
            Ok(conflict_at(vocab, t, j, b, i, s, rng))
        }
    }
}

/// Factual sequence with the subject and its position fixed; the noise fill
/// still comes from `rng`.
pub fn factual_at(
    vocab: &VocabSpec,
    t: usize,
    subject: TokenId,
    subject_pos: usize,
    rng: &mut RandomStream,
) -> Sequence {
    debug_assert!(subject_pos < t - 1);
    let noise = draw_noise(vocab, &[], t - 2, rng);
    let mut tokens = Vec::with_capacity(t);
    let mut next = noise.into_iter();
    for p in 0..t - 1 {
        if p == subject_pos {
            tokens.push(subject);
        } else {
            tokens.push(next.next().unwrap());
        }
    }
    tokens.push(vocab.trigger());
    Sequence {
        kind: SequenceKind::Factual,
        tokens,
        subject_pos: Some(subject_pos),
        trigger_pos: None,
        parametric_answer: Some(vocab.fact(subject)),
        contextual_answer: None,
    }
}

/// Induction sequence with the trigger position and answer token fixed.
pub fn induction_at(
    vocab: &VocabSpec,
    t: usize,
    trigger_pos: usize,
    answer: TokenId,
    rng: &mut RandomStream,
) -> Sequence {
    debug_assert!((1..=t - 3).contains(&trigger_pos));
    debug_assert!(vocab.is_noise(answer));
    let noise = draw_noise(vocab, &[answer], t - 3, rng);
    let mut tokens = Vec::with_capacity(t);
    let mut next = noise.into_iter();
    for p in 0..t - 1 {
        if p == trigger_pos {
            tokens.push(vocab.trigger());
        } else if p == trigger_pos + 1 {
            tokens.push(answer);
        } else {
            tokens.push(next.next().unwrap());
        }
    }
    tokens.push(vocab.trigger());
    Sequence {
        kind: SequenceKind::Induction,
        tokens,
        subject_pos: None,
        trigger_pos: Some(trigger_pos),
        parametric_answer: None,
        contextual_answer: Some(answer),
    }
}

fn conflict_at(
    vocab: &VocabSpec,
    t: usize,
    trigger_pos: usize,
    answer: TokenId,
    subject_pos: usize,
    subject: TokenId,
    rng: &mut RandomStream,
) -> Sequence {
    let noise = draw_noise(vocab, &[answer], t - 4, rng);
    let mut tokens = Vec::with_capacity(t);
    let mut next = noise.into_iter();
    for p in 0..t - 1 {
        if p == trigger_pos {
            tokens.push(vocab.trigger());
        } else if p == trigger_pos + 1 {
            tokens.push(answer);
        } else if p == subject_pos {
            tokens.push(subject);
        } else {
            tokens.push(next.next().unwrap());
        }
    }
    tokens.push(vocab.trigger());
    Sequence {
        kind: SequenceKind::Conflict,
        tokens,
        subject_pos: Some(subject_pos),
        trigger_pos: Some(trigger_pos),
        parametric_answer: Some(vocab.fact(subject)),
        contextual_answer: Some(answer),
    }
}

/// `count` independent sequences. Sequence `k` is generated on the derived
/// child stream `rng.derive(k)`, so batches are reproducible and can be
/// sharded across workers without changing the result.
pub fn generate_batch(
    vocab: &VocabSpec,
    kind: SequenceKind,
    t: usize,
    count: usize,
    rng: &RandomStream,
) -> Result<Vec<Sequence>> {
    check_generation_pre(vocab, t)?;
    (0..count)
        .map(|k| generate_sequence(vocab, kind, t, &mut rng.derive(k as u64)))
        .collect()
}

/// The exact-enumeration training set: one factual sequence per fact
/// (`n_F = |S|`) followed by one induction sequence per noise token as the
/// answer (`n_I = Nn`), so no datapoint repeats. Item `k` draws from
/// `rng.derive(k)`.
pub fn training_dataset(vocab: &VocabSpec, t: usize, rng: &RandomStream) -> Result<Vec<Sequence>> {
    check_generation_pre(vocab, t)?;
    let mut out = Vec::with_capacity(vocab.n_subjects + vocab.n_noise);
    for s in vocab.subject_ids() {
        let mut child = rng.derive(out.len() as u64);
        let i = child.index(t - 1);
        out.push(factual_at(vocab, t, s, i, &mut child));
    }
    for b in vocab.noise_ids() {
        let mut child = rng.derive(out.len() as u64);
        let j = 1 + child.index(t - 3);
        out.push(induction_at(vocab, t, j, b, &mut child));
    }
    Ok(out)
}

/// JSON-lines record for a sequence. Positions are 1-based in this exported
/// form, matching the documentation convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub kind: SequenceKind,
    pub tokens: Vec<TokenId>,
    pub subject_pos: Option<usize>,
    pub trigger_pos: Option<usize>,
    pub parametric_answer: Option<TokenId>,
    pub contextual_answer: Option<TokenId>,
}

impl From<&Sequence> for SequenceRecord {
    fn from(seq: &Sequence) -> Self {
        SequenceRecord {
            kind: seq.kind,
            tokens: seq.tokens.clone(),
            subject_pos: seq.subject_pos.map(|p| p + 1),
            trigger_pos: seq.trigger_pos.map(|p| p + 1),
            parametric_answer: seq.parametric_answer,
            contextual_answer: seq.contextual_answer,
        }
    }
}

impl From<SequenceRecord> for Sequence {
    fn from(rec: SequenceRecord) -> Self {
        Sequence {
            kind: rec.kind,
            tokens: rec.tokens,
            subject_pos: rec.subject_pos.map(|p| p - 1),
            trigger_pos: rec.trigger_pos.map(|p| p - 1),
            parametric_answer: rec.parametric_answer,
            contextual_answer: rec.contextual_answer,
        }
    }
}

/// Write one JSON object per line for each sequence.
pub fn export_jsonl<W: Write>(seqs: &[Sequence], mut out: W) -> Result<()> {
    for seq in seqs {
        let rec = SequenceRecord::from(seq);
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<jsonl writer>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab8() -> VocabSpec {
        build_vocab(8, 32, &mut RandomStream::new(3)).unwrap()
    }

    #[test]
    fn ground_truth_is_a_bijection() {
        let v = vocab8();
        let mut image: Vec<TokenId> = (0..8).map(|s| v.fact(s)).collect();
        image.sort_unstable();
        image.dedup();
        assert_eq!(image.len(), 8);
        assert!(image.iter().all(|&a| v.is_answer(a)));
    }

    #[test]
    fn partitions_are_disjoint_and_cover() {
        let v = vocab8();
        assert_eq!(v.total(), 8 + 8 + 1 + 32);
        assert_eq!(v.subject_ids().end, v.answer_ids().start);
        assert_eq!(v.answer_ids().end, v.trigger());
        assert_eq!(v.trigger() + 1, v.noise_ids().start);
        assert_eq!(v.noise_ids().end, v.total());
    }

    #[test]
    fn build_vocab_is_deterministic() {
        let a = build_vocab(8, 32, &mut RandomStream::new(3)).unwrap();
        let b = build_vocab(8, 32, &mut RandomStream::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn build_vocab_rejects_zero_sizes() {
        assert!(build_vocab(0, 4, &mut RandomStream::new(1)).is_err());
        assert!(build_vocab(4, 0, &mut RandomStream::new(1)).is_err());
    }

    #[test]
    fn factual_structure() {
        let v = vocab8();
        let seq =
            generate_sequence(&v, SequenceKind::Factual, 6, &mut RandomStream::new(2)).unwrap();
        assert_eq!(seq.len(), 6);
        assert_eq!(seq.tokens[5], v.trigger());
        assert_eq!(
            seq.tokens.iter().filter(|&&z| v.is_subject(z)).count(),
            1,
            "exactly one subject"
        );
        assert_eq!(seq.tokens.iter().filter(|&&z| v.is_noise(z)).count(), 4);
        seq.validate(&v).unwrap();
    }

    #[test]
    fn induction_structure() {
        let v = vocab8();
        let seq =
            generate_sequence(&v, SequenceKind::Induction, 8, &mut RandomStream::new(11)).unwrap();
        let j = seq.trigger_pos.unwrap();
        assert!((1..=5).contains(&j)); // 1-based [2, 6]
        assert_eq!(seq.contextual_answer, Some(seq.tokens[j + 1]));
        assert!(v.is_noise(seq.tokens[j + 1]));
        seq.validate(&v).unwrap();
    }

    /// Golden value: replay the documented draw order by hand for one seed
    /// and freeze the resulting conflict sequence.
    #[test]
    fn conflict_golden_seed_5() {
        let v = vocab8();
        let t = 8;
        let seq =
            generate_sequence(&v, SequenceKind::Conflict, t, &mut RandomStream::new(5)).unwrap();

        // Independent replay of the documented procedure on a fresh stream.
        let mut rng = RandomStream::new(5);
        let j = 1 + rng.index(t - 3);
        let noise_start = v.noise_ids().start;
        let b = noise_start + rng.index(v.n_noise());
        let allowed: Vec<usize> = (0..t - 1).filter(|&p| p != j && p != j + 1).collect();
        let i = allowed[rng.index(allowed.len())];
        let s = rng.index(v.n_subjects());
        let mut pool: Vec<TokenId> = v.noise_ids().filter(|&z| z != b).collect();
        let mut fill = Vec::new();
        for _ in 0..t - 4 {
            let k = rng.index(pool.len());
            fill.push(pool.swap_remove(k));
        }
        let mut expect = Vec::new();
        let mut next = fill.into_iter();
        for p in 0..t - 1 {
            if p == j {
                expect.push(v.trigger());
            } else if p == j + 1 {
                expect.push(b);
            } else if p == i {
                expect.push(s);
            } else {
                expect.push(next.next().unwrap());
            }
        }
        expect.push(v.trigger());

        assert_eq!(seq.tokens, expect);
        assert_eq!(seq.trigger_pos, Some(j));
        assert_eq!(seq.subject_pos, Some(i));
        assert_ne!(i, j);
        assert_ne!(i, j + 1);
        assert_eq!(seq.parametric_answer, Some(v.fact(s)));
        assert_eq!(seq.contextual_answer, Some(b));
        seq.validate(&v).unwrap();
    }

    #[test]
    fn generation_preconditions() {
        let v = vocab8();
        assert!(matches!(
            generate_sequence(&v, SequenceKind::Induction, 3, &mut RandomStream::new(0)),
            Err(Error::SequenceLength { min: 4, .. })
        ));
        let small = build_vocab(4, 5, &mut RandomStream::new(0)).unwrap();
        assert!(matches!(
            generate_sequence(&small, SequenceKind::Factual, 6, &mut RandomStream::new(0)),
            Err(Error::InsufficientNoise {
                needed: 6,
                available: 5
            })
        ));
    }

    #[test]
    fn batch_empty_and_deterministic() {
        let v = vocab8();
        let rng = RandomStream::new(17);
        assert!(generate_batch(&v, SequenceKind::Factual, 8, 0, &rng)
            .unwrap()
            .is_empty());
        let a = generate_batch(&v, SequenceKind::Conflict, 8, 50, &rng).unwrap();
        let b = generate_batch(&v, SequenceKind::Conflict, 8, 50, &rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_of_1000_validates() {
        let v = vocab8();
        let rng = RandomStream::new(23);
        for kind in [
            SequenceKind::Factual,
            SequenceKind::Induction,
            SequenceKind::Conflict,
        ] {
            let batch = generate_batch(&v, kind, 8, 1000, &rng).unwrap();
            assert_eq!(batch.len(), 1000);
            for seq in &batch {
                seq.validate(&v).unwrap();
            }
        }
    }

    /// Chi-square uniformity of the factual subject position over
    /// 10,000 draws: T-1 = 7 bins, df = 6, critical value at p = 0.01 is
    /// 16.812 (standard chi-square table).
    #[test]
    fn factual_subject_position_is_uniform() {
        let v = vocab8();
        let rng = RandomStream::new(29);
        let batch = generate_batch(&v, SequenceKind::Factual, 8, 10_000, &rng).unwrap();
        let mut counts = [0usize; 7];
        for seq in &batch {
            counts[seq.subject_pos.unwrap()] += 1;
        }
        let expected = 10_000.0 / 7.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 16.812, "chi-square {chi2} exceeds the p=0.01 bound");
    }

    #[test]
    fn training_dataset_enumerates_once() {
        let v = vocab8();
        let data = training_dataset(&v, 8, &RandomStream::new(31)).unwrap();
        assert_eq!(data.len(), 8 + 32);
        let mut facts: Vec<TokenId> = data
            .iter()
            .filter(|s| s.kind == SequenceKind::Factual)
            .map(|s| s.tokens[s.subject_pos.unwrap()])
            .collect();
        facts.sort_unstable();
        assert_eq!(facts, (0..8).collect::<Vec<_>>());
        let mut answers: Vec<TokenId> = data
            .iter()
            .filter(|s| s.kind == SequenceKind::Induction)
            .map(|s| s.contextual_answer.unwrap())
            .collect();
        answers.sort_unstable();
        assert_eq!(answers, v.noise_ids().collect::<Vec<_>>());
        for seq in &data {
            seq.validate(&v).unwrap();
        }
    }

    #[test]
    fn jsonl_round_trip_uses_one_based_positions() {
        let v = vocab8();
        let rng = RandomStream::new(41);
        let batch = generate_batch(&v, SequenceKind::Conflict, 8, 3, &rng).unwrap();
        let mut buf = Vec::new();
        export_jsonl(&batch, &mut buf).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&buf).unwrap().trim().lines().collect();
        assert_eq!(lines.len(), 3);
        for (line, seq) in lines.iter().zip(&batch) {
            let rec: SequenceRecord = serde_json::from_str(line).unwrap();
            assert_eq!(rec.subject_pos, seq.subject_pos.map(|p| p + 1));
            let back: Sequence = rec.into();
            assert_eq!(&back, seq);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Every generated sequence satisfies its structural invariants,
            /// for any kind, seed, and feasible length.
            #[test]
            fn generated_sequences_validate(
                seed in any::<u64>(),
                t in 4usize..12,
                kind_pick in 0usize..3,
            ) {
                let kind = [SequenceKind::Factual, SequenceKind::Induction, SequenceKind::Conflict][kind_pick];
                let v = build_vocab(5, 16, &mut RandomStream::new(99)).unwrap();
                let seq = generate_sequence(&v, kind, t, &mut RandomStream::new(seed)).unwrap();
                prop_assert!(seq.validate(&v).is_ok());
                // conflict labels live in disjoint spaces, so they always differ
                if kind == SequenceKind::Conflict {
                    prop_assert_ne!(seq.parametric_answer, seq.contextual_answer);
                }
            }
        }
    }
}
