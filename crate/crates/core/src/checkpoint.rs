//! Checkpoint directories, task vectors and task-vector arithmetic.
//!
//! On disk a checkpoint is a directory holding `manifest.json` and one raw
//! little-endian `f32` blob per tensor. In memory every payload is `f64`;
//! widening `f32 → f64` is exact, so load/save round-trips are bit-exact.

use std::fs;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::matrix::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorKind {
    /// A 2-D weight matrix that merge-time factorizations act on.
    #[serde(rename = "mergeable-2d")]
    Mergeable2d,
    /// Anything else, merged by plain arithmetic only.
    #[serde(rename = "passthrough")]
    Passthrough,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub kind: TensorKind,
    pub file: String,
}

impl TensorRecord {
    /// Record with the default blob name for position `index`.
    pub fn new(name: impl Into<String>, shape: Vec<usize>, kind: TensorKind, index: usize) -> Self {
        Self {
            name: name.into(),
            shape,
            dtype: "f32".to_owned(),
            kind,
            file: format!("t{index:05}.f32"),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_mergeable(&self) -> bool {
        self.kind == TensorKind::Mergeable2d
    }

    fn validate(&self) -> Result<(), CheckpointError> {
        let invalid = |reason: &str| CheckpointError::InvalidRecord {
            tensor: self.name.clone(),
            reason: reason.to_owned(),
        };
        if self.name.is_empty() {
            return Err(invalid("empty name"));
        }
        if self.dtype != "f32" {
            return Err(invalid("dtype must be f32"));
        }
        if self.kind == TensorKind::Mergeable2d && self.shape.len() != 2 {
            return Err(invalid("mergeable-2d tensors need exactly 2 dimensions"));
        }
        let f = self.file.as_str();
        if f.is_empty()
            || f == "."
            || f == ".."
            || f == MANIFEST_FILE
            || f.contains(['/', '\\'])
        {
            return Err(invalid("blob file must be a plain file name"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub record: TensorRecord,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn name(&self) -> &str {
        &self.record.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.record.shape
    }

    pub fn is_mergeable(&self) -> bool {
        self.record.is_mergeable()
    }

    /// The payload as a matrix. 1-D tensors become a single row.
    pub fn as_matrix(&self) -> Matrix<f64> {
        let (r, c) = match self.record.shape.as_slice() {
            [r, c] => (*r, *c),
            _ => (1, self.data.len()),
        };
        Matrix::new(r, c, self.data.clone()).expect("tensor invariants hold")
    }
}

/// Ordered, uniquely named tensors. Iteration follows manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorSet {
    tensors: IndexMap<String, Tensor>,
}

impl TensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor, assigning the default blob name when `file` is empty.
    pub fn push(&mut self, mut record: TensorRecord, data: Vec<f64>) -> Result<()> {
        if record.file.is_empty() {
            record.file = format!("t{:05}.f32", self.tensors.len());
        }
        record.validate()?;
        if self.tensors.contains_key(&record.name) {
            return Err(CheckpointError::DuplicateName(record.name).into());
        }
        if self.tensors.values().any(|t| t.record.file == record.file) {
            return Err(CheckpointError::InvalidRecord {
                tensor: record.name,
                reason: "blob file name is already used".to_owned(),
            }
            .into());
        }
        if data.len() != record.numel() {
            return Err(CheckpointError::ByteLength {
                expected: record.numel() * 4,
                tensor: record.name,
                actual: data.len() * 4,
            }
            .into());
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite(record.name).into());
        }
        self.tensors.insert(record.name.clone(), Tensor { record, data });
        Ok(())
    }

    /// Appends a mergeable 2-D tensor.
    pub fn push_matrix(&mut self, name: &str, m: &Matrix<f64>) -> Result<()> {
        let rec = TensorRecord::new(name, vec![m.rows(), m.cols()], TensorKind::Mergeable2d, self.len());
        self.push(rec, m.as_slice().to_vec())
    }

    /// Appends a passthrough tensor.
    pub fn push_passthrough(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let rec = TensorRecord::new(name, shape, TensorKind::Passthrough, self.len());
        self.push(rec, data)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.tensors.get_index_of(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &TensorRecord> {
        self.tensors.values().map(|t| &t.record)
    }

    pub fn mergeable(&self) -> impl Iterator<Item = &Tensor> {
        self.iter().filter(|t| t.is_mergeable())
    }

    pub fn mergeable_count(&self) -> usize {
        self.mergeable().count()
    }

    pub fn numel(&self) -> usize {
        self.iter().map(|t| t.data.len()).sum()
    }

    /// Replaces the payload of an existing tensor.
    pub fn set_data(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let t = self.tensors.get_mut(name).ok_or_else(|| Error::Congruence {
            tensor: name.to_owned(),
            reason: "no such tensor".to_owned(),
        })?;
        if data.len() != t.data.len() {
            return Err(Error::Congruence {
                tensor: name.to_owned(),
                reason: format!("expected {} values, got {}", t.data.len(), data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite(name.to_owned()).into());
        }
        t.data = data;
        Ok(())
    }

    /// Copy with every payload transformed by `f(tensor) -> new data`.
    pub fn try_map(&self, mut f: impl FnMut(&Tensor) -> Result<Vec<f64>>) -> Result<Self> {
        let mut out = Self::new();
        for t in self.iter() {
            let data = f(t).map_err(|e| e.in_tensor(t.name()))?;
            out.push(t.record.clone(), data)
                .map_err(|e| e.in_tensor(t.name()))?;
        }
        Ok(out)
    }

    /// Errors unless `other` has the same tensor names with the same shapes.
    pub fn check_congruent(&self, other: &TensorSet) -> Result<()> {
        for t in self.iter() {
            match other.get(t.name()) {
                None => {
                    return Err(Error::Congruence {
                        tensor: t.name().to_owned(),
                        reason: "missing from the other checkpoint".to_owned(),
                    })
                }
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Congruence {
                        tensor: t.name().to_owned(),
                        reason: format!("shape {:?} vs {:?}", t.shape(), o.shape()),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = other.names().find(|n| self.get(n).is_none()) {
            return Err(Error::Congruence {
                tensor: extra.to_owned(),
                reason: "not present in the reference checkpoint".to_owned(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &TensorSet, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_congruent(other)?;
        self.try_map(|t| {
            let o = &other.get(t.name()).unwrap().data;
            Ok(t.data.iter().zip(o).map(|(&a, &b)| f(a, b)).collect())
        })
    }

    pub fn zeros_like(&self) -> Self {
        self.try_map(|t| Ok(vec![0.0; t.data.len()]))
            .expect("zeros are finite")
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.try_map(|t| Ok(t.data.iter().map(|v| v * c).collect()))
    }

    /// Layer index (1-based) of every tensor, derived from manifest order:
    /// each mergeable-2d tensor opens a new layer and passthrough tensors
    /// belong to the most recent one (layer 1 before any matrix).
    pub fn layer_indices(&self) -> IndexMap<String, usize> {
        let mut layer = 0usize;
        self.iter()
            .map(|t| {
                if t.is_mergeable() {
                    layer += 1;
                }
                (t.name().to_owned(), layer.max(1))
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CheckpointError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            tensors: self.records().cloned().collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        text.push('\n');
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, text).map_err(io(&mpath))?;
        for t in self.iter() {
            let path = dir.join(&t.record.file);
            fs::write(&path, encode_f32(&t.data)).map_err(io(&path))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|source| CheckpointError::Io {
            path: mpath.clone(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(CheckpointError::Manifest(format!(
                "unsupported manifest version {}",
                manifest.version
            ))
            .into());
        }
        let mut set = Self::new();
        for rec in manifest.tensors {
            rec.validate()?;
            if set.get(&rec.name).is_some() {
                return Err(CheckpointError::DuplicateName(rec.name).into());
            }
            let path = dir.join(&rec.file);
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(CheckpointError::MissingBlob {
                        tensor: rec.name,
                        path,
                    }
                    .into())
                }
                Err(source) => return Err(CheckpointError::Io { path, source }.into()),
            };
            let expected = rec.numel() * 4;
            if bytes.len() != expected {
                return Err(CheckpointError::ByteLength {
                    tensor: rec.name,
                    expected,
                    actual: bytes.len(),
                }
                .into());
            }
            let data = decode_f32(&bytes);
            set.push(rec, data)?;
        }
        Ok(set)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    tensors: Vec<TensorRecord>,
}

pub fn encode_f32(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect()
}

macro_rules! tensor_set_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, Default, PartialEq)]
        pub struct $name(pub TensorSet);

        impl Deref for $name {
            type Target = TensorSet;
            fn deref(&self) -> &TensorSet {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut TensorSet {
                &mut self.0
            }
        }

        impl From<TensorSet> for $name {
            fn from(s: TensorSet) -> Self {
                Self(s)
            }
        }
    };
}

tensor_set_newtype!(
    /// Model parameters (`θ`).
    Checkpoint
);
tensor_set_newtype!(
    /// Weight differential `Δ = θ − θ_base`, shaped like its base.
    TaskVector
);

impl Checkpoint {
    pub fn load(dir: &Path) -> Result<Self> {
        TensorSet::load(dir).map(Self)
    }
}

impl TaskVector {
    pub fn load(dir: &Path) -> Result<Self> {
        TensorSet::load(dir).map(Self)
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    Checkpoint::load(dir)
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    ckpt.save(dir)
}

/// `Δ = expert − base`, with kinds and blob names taken from `base`.
pub fn task_vector(expert: &Checkpoint, base: &Checkpoint) -> Result<TaskVector> {
    base.zip_with(expert, |b, e| e - b).map(TaskVector)
}

/// `θ = θ_base + α·Δ`.
pub fn apply_task_vector(base: &Checkpoint, delta: &TaskVector, alpha: f64) -> Result<Checkpoint> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
    }
    base.zip_with(delta, |b, d| b + alpha * d).map(Checkpoint)
}

/// Elementwise sum in list order.
pub fn sum_task_vectors(deltas: &[TaskVector]) -> Result<TaskVector> {
    let (first, rest) = deltas
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("sum of an empty task-vector list".to_owned()))?;
    let mut acc = first.0.clone();
    for d in rest {
        acc = acc.zip_with(d, |a, b| a + b)?;
    }
    Ok(TaskVector(acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(values: &[(&str, Vec<usize>, Vec<f64>)]) -> Checkpoint {
        let mut s = TensorSet::new();
        for (name, shape, data) in values {
            let kind = if shape.len() == 2 {
                TensorKind::Mergeable2d
            } else {
                TensorKind::Passthrough
            };
            s.push(TensorRecord::new(*name, shape.clone(), kind, s.len()), data.clone())
                .unwrap();
        }
        Checkpoint(s)
    }

    #[test]
    fn subtraction_and_application() {
        let base = ckpt(&[("w", vec![2], vec![1.0, 2.0])]);
        let expert = ckpt(&[("w", vec![2], vec![3.0, 2.0])]);
        let d = task_vector(&expert, &base).unwrap();
        assert_eq!(d.get("w").unwrap().data, vec![2.0, 0.0]);
        assert_eq!(task_vector(&base, &base).unwrap().get("w").unwrap().data, vec![0.0, 0.0]);
        assert_eq!(apply_task_vector(&base, &d, 0.0).unwrap(), base);
    }

    #[test]
    fn eq1_average_of_two() {
        let base = ckpt(&[("w", vec![2], vec![0.0, 0.0])]);
        let d1 = TaskVector(ckpt(&[("w", vec![2], vec![1.0, 0.0])]).0);
        let d2 = TaskVector(ckpt(&[("w", vec![2], vec![0.0, 1.0])]).0);
        let sum = sum_task_vectors(&[d1, d2]).unwrap();
        let merged = apply_task_vector(&base, &sum, 0.5).unwrap();
        assert_eq!(merged.get("w").unwrap().data, vec![0.5, 0.5]);
    }

    #[test]
    fn negated_base_gives_zero() {
        let base = ckpt(&[("w", vec![1, 2], vec![1.5, -2.0])]);
        let neg = TaskVector(base.scaled(-1.0).unwrap());
        let out = apply_task_vector(&base, &neg, 1.0).unwrap();
        assert_eq!(out.get("w").unwrap().data, vec![0.0, 0.0]);
    }

    #[test]
    fn sums() {
        let a = TaskVector(ckpt(&[("w", vec![2], vec![1.0, 2.0])]).0);
        let b = TaskVector(ckpt(&[("w", vec![2], vec![3.0, -2.0])]).0);
        assert_eq!(sum_task_vectors(&[a.clone()]).unwrap(), a);
        assert_eq!(
            sum_task_vectors(&[a.clone(), b]).unwrap().get("w").unwrap().data,
            vec![4.0, 0.0]
        );
        let neg = TaskVector(a.scaled(-1.0).unwrap());
        assert!(sum_task_vectors(&[a, neg])
            .unwrap()
            .get("w")
            .unwrap()
            .data
            .iter()
            .all(|&v| v == 0.0));
        assert!(sum_task_vectors(&[]).is_err());
    }

    #[test]
    fn congruence_errors_name_the_tensor() {
        let a = ckpt(&[("w", vec![2], vec![1.0, 2.0])]);
        let b = ckpt(&[("v", vec![2], vec![1.0, 2.0])]);
        match task_vector(&a, &b) {
            Err(Error::Congruence { tensor, .. }) => assert!(tensor == "v" || tensor == "w"),
            other => panic!("{other:?}"),
        }
        let c = ckpt(&[("w", vec![1, 2], vec![1.0, 2.0])]);
        assert!(matches!(task_vector(&a, &c), Err(Error::Congruence { .. })));
    }

    #[test]
    fn push_validates_records() {
        let mut s = TensorSet::new();
        assert!(s
            .push(TensorRecord::new("w", vec![3], TensorKind::Mergeable2d, 0), vec![0.0; 3])
            .is_err());
        s.push_passthrough("b", vec![2], vec![0.0; 2]).unwrap();
        assert!(matches!(
            s.push_passthrough("b", vec![2], vec![0.0; 2]),
            Err(Error::Checkpoint(CheckpointError::DuplicateName(_)))
        ));
        let mut bad = TensorRecord::new("x", vec![1], TensorKind::Passthrough, 9);
        bad.file = "../escape".to_owned();
        assert!(s.push(bad, vec![0.0]).is_err());
    }

    #[test]
    fn layers_from_manifest_order() {
        let c = ckpt(&[
            ("pre", vec![3], vec![0.0; 3]),
            ("l1.w", vec![1, 1], vec![0.0]),
            ("l1.b", vec![1], vec![0.0]),
            ("l2.w", vec![1, 1], vec![0.0]),
        ]);
        let layers = c.layer_indices();
        assert_eq!(layers.values().copied().collect::<Vec<_>>(), vec![1, 1, 1, 2]);
    }

    #[test]
    fn two_is_little_endian_0x40000000() {
        assert_eq!(encode_f32(&[2.0]), vec![0x00, 0x00, 0x00, 0x40]);
    }
}
