//! Binary checkpoint container for dense models and compiled sparse
//! encoders.
//!
//! Layout: magic "DDSECKP1", version u32, payload kind u8 (0 dense,
//! 1 compressed), arch u8, flag byte, dims (n, m, k, s, classes as u64),
//! drop_ratio, then the payload tensors, then a SHA-256 trailer over all
//! preceding bytes. All integers little-endian; tensors carry their own
//! dimensions and are cross-checked against the header on load. Writes are
//! deterministic: identical payloads produce identical bytes.

use crate::encoder::{Arch, EncoderModel};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::pca::PcaBasis;
use crate::sparse_store::{CompiledEncoder, SparseMatrix};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"DDSECKP1";
const VERSION: u32 = 1;
const KIND_DENSE: u8 = 0;
const KIND_COMPRESSED: u8 = 1;
const FLAG_REINJECT: u8 = 0b01;
const FLAG_BASIS: u8 = 0b10;

/// What a checkpoint holds: a trainable dense model or an inference-only
/// compiled encoder.
#[derive(Debug, Clone)]
pub enum CheckpointPayload {
    Dense {
        model: EncoderModel,
        basis: Option<PcaBasis>,
    },
    Compressed(CompiledEncoder),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn vector(&mut self, v: &Vector) {
        self.u64(v.len() as u64);
        for &x in v.iter() {
            self.f64(x);
        }
    }

    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows as u64);
        self.u64(m.cols as u64);
        for &x in &m.data {
            self.f64(x);
        }
    }

    fn sparse(&mut self, m: &SparseMatrix) {
        self.u64(m.rows as u64);
        self.u64(m.cols as u64);
        self.u64(m.nnz() as u64);
        for &o in &m.row_offsets {
            self.u64(o as u64);
        }
        for &c in &m.col_indices {
            self.u64(c as u64);
        }
        for &v in &m.values {
            self.f64(v);
        }
    }

    fn basis(&mut self, basis: &PcaBasis) {
        self.vector(&basis.mean);
        self.matrix(&basis.basis);
        self.vector(&basis.eigenvalues);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, detail: impl Into<String>) -> Error {
        Error::CorruptCheckpoint {
            path: self.path.display().to_string(),
            detail: detail.into(),
        }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or_else(|| {
            self.corrupt("length field overflows")
        })?;
        if end > self.buf.len() {
            return Err(Error::Truncated {
                path: self.path.display().to_string(),
                detail: format!("needed {end} payload bytes, have {}", self.buf.len()),
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn count(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt(format!("count {v} too large")))
    }

    fn f64_slice(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| self.corrupt("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn u64_slice(&mut self, len: usize) -> Result<Vec<usize>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| self.corrupt("length overflow"))?)?;
        bytes
            .chunks_exact(8)
            .map(|c| {
                let v = u64::from_le_bytes(c.try_into().expect("8 bytes"));
                usize::try_from(v).map_err(|_| self.corrupt(format!("index {v} too large")))
            })
            .collect()
    }

    fn vector(&mut self) -> Result<Vector> {
        let len = self.count()?;
        Ok(Vector::from(self.f64_slice(len)?))
    }

    fn matrix(&mut self, expect_rows: usize, expect_cols: usize) -> Result<Matrix> {
        let rows = self.count()?;
        let cols = self.count()?;
        if rows != expect_rows || cols != expect_cols {
            return Err(self.corrupt(format!(
                "tensor is {rows}x{cols}, header implies {expect_rows}x{expect_cols}"
            )));
        }
        let data = self.f64_slice(rows.checked_mul(cols).ok_or_else(|| self.corrupt("dims overflow"))?)?;
        Matrix::new(rows, cols, data).map_err(|e| self.corrupt(e.to_string()))
    }

    fn sparse(&mut self, expect_rows: usize, expect_cols: usize) -> Result<SparseMatrix> {
        let rows = self.count()?;
        let cols = self.count()?;
        if rows != expect_rows || cols != expect_cols {
            return Err(self.corrupt(format!(
                "sparse tensor is {rows}x{cols}, header implies {expect_rows}x{expect_cols}"
            )));
        }
        let nnz = self.count()?;
        let row_offsets = self.u64_slice(rows + 1)?;
        let col_indices = self.u64_slice(nnz)?;
        let values = self.f64_slice(nnz)?;
        let m = SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate().map_err(|e| self.corrupt(e.to_string()))?;
        Ok(m)
    }

    fn basis(&mut self, n: usize) -> Result<PcaBasis> {
        let mean = self.vector()?;
        if mean.len() != n {
            return Err(self.corrupt(format!("basis mean has length {}, expected {n}", mean.len())));
        }
        let basis = self.matrix(n, n)?;
        let eigenvalues = self.vector()?;
        if eigenvalues.len() != n {
            return Err(self.corrupt("eigenvalue count disagrees with basis"));
        }
        Ok(PcaBasis {
            mean,
            basis,
            eigenvalues,
        })
    }
}

fn arch_code(arch: Arch) -> u8 {
    Arch::ALL
        .iter()
        .position(|&a| a == arch)
        .expect("arch listed in ALL") as u8
}

fn arch_from_code(code: u8, reader: &Reader<'_>) -> Result<Arch> {
    Arch::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| reader.corrupt(format!("unknown architecture code {code}")))
}

/// Serializes the payload; the write is atomic via a sibling temp file.
pub fn save_checkpoint(path: &Path, payload: &CheckpointPayload) -> Result<()> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.buf.extend_from_slice(&VERSION.to_le_bytes());
    match payload {
        CheckpointPayload::Dense { model, basis } => {
            model.validate()?;
            w.u8(KIND_DENSE);
            w.u8(arch_code(model.arch));
            let mut flags = 0u8;
            if model.no_shortcut_reinject {
                flags |= FLAG_REINJECT;
            }
            if basis.is_some() {
                flags |= FLAG_BASIS;
            }
            w.u8(flags);
            for d in [model.n, model.m, model.k, model.s, model.classes] {
                w.u64(d as u64);
            }
            w.f64(model.drop_ratio);
            w.matrix(&model.w1);
            for t in &model.w2_list {
                w.matrix(t);
            }
            for t in &model.w3_list {
                w.matrix(t);
            }
            for t in &model.mm_list {
                w.matrix(t);
            }
            for t in &model.thresholds {
                w.vector(t);
            }
            w.matrix(&model.head_weight);
            w.vector(&model.head_bias);
            if let Some(b) = basis {
                w.basis(b);
            }
        }
        CheckpointPayload::Compressed(ce) => {
            w.u8(KIND_COMPRESSED);
            w.u8(arch_code(ce.arch));
            let mut flags = 0u8;
            if ce.no_shortcut_reinject {
                flags |= FLAG_REINJECT;
            }
            if ce.basis.is_some() {
                flags |= FLAG_BASIS;
            }
            w.u8(flags);
            for d in [ce.n, ce.m, ce.k, ce.s, ce.classes] {
                w.u64(d as u64);
            }
            w.f64(ce.drop_ratio);
            w.sparse(&ce.w1);
            for t in &ce.w2t_list {
                w.sparse(t);
            }
            for t in &ce.w3_list {
                w.sparse(t);
            }
            for t in &ce.mm_list {
                w.sparse(t);
            }
            for t in &ce.thresholds {
                w.vector(t);
            }
            w.matrix(&ce.head_weight);
            w.vector(&ce.head_bias);
            if let Some(b) = &ce.basis {
                w.basis(b);
            }
        }
    }
    let digest = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&digest);

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &w.buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn threshold_len_ok(t: &Vector, m: usize) -> bool {
    t.len() == 1 || t.len() == m
}

/// Parses and integrity-checks a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<CheckpointPayload> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 8 {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            detail: format!("{} bytes is shorter than the magic", buf.len()),
        });
    }
    if &buf[..8] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&buf[..4]);
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected: u32::from_be_bytes([MAGIC[0], MAGIC[1], MAGIC[2], MAGIC[3]]),
            found: u32::from_be_bytes(found),
        });
    }
    if buf.len() < 8 + 4 + 32 {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            detail: format!("{} bytes cannot hold header and checksum", buf.len()),
        });
    }
    let (body, trailer) = buf.split_at(buf.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(Error::CorruptCheckpoint {
            path: path.display().to_string(),
            detail: "checksum mismatch".into(),
        });
    }

    let mut r = Reader {
        buf: body,
        pos: 8,
        path,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let arch = {
        let code = r.u8()?;
        arch_from_code(code, &r)?
    };
    let flags = r.u8()?;
    let no_shortcut_reinject = flags & FLAG_REINJECT != 0;
    let has_basis = flags & FLAG_BASIS != 0;
    let n = r.count()?;
    let m = r.count()?;
    let k = r.count()?;
    let s = r.count()?;
    let classes = r.count()?;
    let drop_ratio = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));

    let (w2_count, mm_count) = if arch.is_factorized() { (k, 0) } else { (0, k) };

    match kind {
        KIND_DENSE => {
            let w1 = r.matrix(m, n)?;
            let mut w2_list = Vec::with_capacity(w2_count);
            for _ in 0..w2_count {
                w2_list.push(r.matrix(n, m)?);
            }
            let mut w3_list = Vec::with_capacity(w2_count);
            for _ in 0..w2_count {
                w3_list.push(r.matrix(m, n)?);
            }
            let mut mm_list = Vec::with_capacity(mm_count);
            for _ in 0..mm_count {
                mm_list.push(r.matrix(m, m)?);
            }
            let mut thresholds = Vec::with_capacity(k + 1);
            for _ in 0..=k {
                let t = r.vector()?;
                if !threshold_len_ok(&t, m) {
                    return Err(r.corrupt("threshold vector has unexpected length"));
                }
                thresholds.push(t);
            }
            let head_weight = r.matrix(classes, m)?;
            let head_bias = r.vector()?;
            if head_bias.len() != classes {
                return Err(r.corrupt("head bias length disagrees with class count"));
            }
            let basis = if has_basis { Some(r.basis(n)?) } else { None };
            if r.pos != r.buf.len() {
                return Err(r.corrupt("trailing bytes after payload"));
            }
            let model = EncoderModel {
                arch,
                n,
                m,
                k,
                s,
                classes,
                w1,
                w2_list,
                w3_list,
                mm_list,
                thresholds,
                head_weight,
                head_bias,
                drop_ratio,
                no_shortcut_reinject,
            };
            model.validate().map_err(|e| Error::CorruptCheckpoint {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            Ok(CheckpointPayload::Dense { model, basis })
        }
        KIND_COMPRESSED => {
            let w1 = r.sparse(m, n)?;
            let mut w2t_list = Vec::with_capacity(w2_count);
            for _ in 0..w2_count {
                w2t_list.push(r.sparse(m, n)?);
            }
            let mut w3_list = Vec::with_capacity(w2_count);
            for _ in 0..w2_count {
                w3_list.push(r.sparse(m, n)?);
            }
            let mut mm_list = Vec::with_capacity(mm_count);
            for _ in 0..mm_count {
                mm_list.push(r.sparse(m, m)?);
            }
            let mut thresholds = Vec::with_capacity(k + 1);
            for _ in 0..=k {
                let t = r.vector()?;
                if !threshold_len_ok(&t, m) {
                    return Err(r.corrupt("threshold vector has unexpected length"));
                }
                thresholds.push(t);
            }
            let head_weight = r.matrix(classes, m)?;
            let head_bias = r.vector()?;
            if head_bias.len() != classes {
                return Err(r.corrupt("head bias length disagrees with class count"));
            }
            let basis = if has_basis { Some(r.basis(n)?) } else { None };
            if r.pos != r.buf.len() {
                return Err(r.corrupt("trailing bytes after payload"));
            }
            Ok(CheckpointPayload::Compressed(CompiledEncoder {
                arch,
                n,
                m,
                k,
                s,
                classes,
                w1,
                w2t_list,
                w3_list,
                mm_list,
                thresholds,
                head_weight,
                head_bias,
                drop_ratio,
                no_shortcut_reinject,
                basis,
            }))
        }
        other => Err(r.corrupt(format!("unknown payload kind {other}"))),
    }
}
