//! Small helpers shared by the command implementations.

use ddse::data::LabeledDataset;
use ddse::encoder::EncoderModel;
use ddse::linalg::Vector;
use ddse::pca::PcaBasis;
use ddse::sparse_store::{compiled_forward, CompiledEncoder};
use ddse::{Error, Result};
use std::path::Path;

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Expand a compiled encoder back to the dense model it came from;
/// CSR storage is lossless so this is exact.
pub fn decompress(ce: &CompiledEncoder) -> Result<(EncoderModel, Option<PcaBasis>)> {
    let model = EncoderModel {
        arch: ce.arch,
        n: ce.n,
        m: ce.m,
        k: ce.k,
        s: ce.s,
        classes: ce.classes,
        w1: ce.w1.to_dense(),
        w2_list: ce.w2t_list.iter().map(|t| t.to_dense().transpose()).collect(),
        w3_list: ce.w3_list.iter().map(|w| w.to_dense()).collect(),
        mm_list: ce.mm_list.iter().map(|w| w.to_dense()).collect(),
        thresholds: ce.thresholds.clone(),
        head_weight: ce.head_weight.clone(),
        head_bias: ce.head_bias.clone(),
        drop_ratio: ce.drop_ratio,
        no_shortcut_reinject: ce.no_shortcut_reinject,
    };
    model.validate()?;
    Ok((model, ce.basis.clone()))
}

/// First maximum wins, matching the trainer's evaluation rule.
pub fn argmax_first(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Error rate over a dataset using the sparse inference path.
pub fn eval_compiled(ce: &CompiledEncoder, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("eval_compiled", "empty dataset"));
    }
    if data.dim() != ce.n {
        return Err(Error::shape(
            "eval_compiled",
            format!("dataset dimension {}, model expects {}", data.dim(), ce.n),
        ));
    }
    let mut wrong = 0usize;
    for j in 0..data.len() {
        let x = Vector::from_fn(data.dim(), |i| data.features.at(i, j));
        let (_, logits) = compiled_forward(ce, &x)?;
        if argmax_first(&logits) != data.labels[j] {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}
