// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model save/load as a JSON container.
//!
//! The container always carries dimensions, mode, constants, seed, and the
//! vocabulary. Matrix payloads are optional: without them, loading rebuilds
//! the model from `(vocab, t, d, mode, consts, seed)`, which is bit-exact
//! because construction is fully deterministic. With them, entries are
//! stored as base-10 decimal strings in Rust's shortest round-trip
//! formatting, so parsing restores the identical `f64` bits.

use super::{build_perfect_solver, ConstructionConsts, EmbeddingMode, TwoLayerModel};
use crate::error::{Error, Result};
use crate::numerics::{all_finite, Matrix};
use crate::vocab::VocabSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct MatrixPayload {
    rows: usize,
    cols: usize,
    /// Row-major entries as decimal strings.
    data: Vec<String>,
}

impl MatrixPayload {
    fn from_matrix(m: &Matrix) -> Self {
        MatrixPayload {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|v| format!("{v}")).collect(),
        }
    }

    fn into_matrix(self) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::InvalidSpec(format!(
                "matrix payload {}x{} carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        let mut entries = Vec::with_capacity(self.data.len());
        for s in &self.data {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad matrix entry {s:?}")))?;
            entries.push(v);
        }
        let m = Matrix::from_shape_vec((self.rows, self.cols), entries)
            .map_err(|e| Error::InvalidSpec(format!("matrix shape: {e}")))?;
        if !all_finite(&m) {
            return Err(Error::NonFinite("loaded matrix payload".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixSet {
    embeddings: MatrixPayload,
    positions: MatrixPayload,
    w_kq1: MatrixPayload,
    w_kq2: MatrixPayload,
    w_ov1: MatrixPayload,
    w_ov2: MatrixPayload,
    unembedding: MatrixPayload,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    seq_len: usize,
    mode: EmbeddingMode,
    consts: ConstructionConsts,
    seed: u64,
    vocab: VocabSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrices: Option<MatrixSet>,
}

/// Serialize a model to JSON, optionally with full matrix payloads.
pub fn save_model(model: &TwoLayerModel, include_matrices: bool) -> Result<String> {
    let matrices = include_matrices.then(|| MatrixSet {
        embeddings: MatrixPayload::from_matrix(&model.embeddings),
        positions: MatrixPayload::from_matrix(&model.positions),
        w_kq1: MatrixPayload::from_matrix(&model.w_kq[0]),
        w_kq2: MatrixPayload::from_matrix(&model.w_kq[1]),
        w_ov1: MatrixPayload::from_matrix(&model.w_ov[0]),
        w_ov2: MatrixPayload::from_matrix(&model.w_ov[1]),
        unembedding: MatrixPayload::from_matrix(&model.unembedding),
    });
    let file = ModelFile {
        dim: model.dim,
        seq_len: model.seq_len,
        mode: model.mode,
        consts: model.consts,
        seed: model.seed,
        vocab: model.vocab.clone(),
        matrices,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Load a model from JSON; rebuilds from the construction parameters when
/// matrix payloads are absent.
pub fn load_model(json: &str) -> Result<TwoLayerModel> {
    let file: ModelFile = serde_json::from_str(json)?;
    match file.matrices {
        None => build_perfect_solver(
            &file.vocab,
            file.seq_len,
            file.dim,
            file.mode,
            file.consts,
            file.seed,
        ),
        Some(set) => {
            let model = TwoLayerModel {
                mode: file.mode,
                consts: file.consts,
                seed: file.seed,
                vocab: file.vocab,
                seq_len: file.seq_len,
                dim: file.dim,
                embeddings: set.embeddings.into_matrix()?,
                positions: set.positions.into_matrix()?,
                w_kq: [set.w_kq1.into_matrix()?, set.w_kq2.into_matrix()?],
                w_ov: [set.w_ov1.into_matrix()?, set.w_ov2.into_matrix()?],
                unembedding: set.unembedding.into_matrix()?,
            };
            let d = model.dim;
            let n = model.vocab.total();
            let shapes = [
                (model.embeddings.dim(), (d, n)),
                (model.positions.dim(), (d, model.seq_len)),
                (model.w_kq[0].dim(), (d, d)),
                (model.w_kq[1].dim(), (d, d)),
                (model.w_ov[0].dim(), (d, d)),
                (model.w_ov[1].dim(), (d, d)),
                (model.unembedding.dim(), (d, n)),
            ];
            for (got, want) in shapes {
                if got != want {
                    return Err(Error::InvalidSpec(format!(
                        "matrix shape {got:?} does not match header {want:?}"
                    )));
                }
            }
            Ok(model)
        }
    }
}

pub fn save_model_file(
    model: &TwoLayerModel,
    include_matrices: bool,
    path: impl AsRef<Path>,
) -> Result<()> {
    let json = save_model(model, include_matrices)?;
    std::fs::write(path.as_ref(), json)
        .map_err(|e| Error::io(path.as_ref().display().to_string(), e))
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<TwoLayerModel> {
    let json = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::io(path.as_ref().display().to_string(), e))?;
    load_model(&json)
}
