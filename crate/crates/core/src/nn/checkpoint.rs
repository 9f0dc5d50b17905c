use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::spec::{ArchFamily, Hyperparams, NetworkSpec};
use super::NnError;
use crate::dataset::{NormBounds, Regime};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"OGCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub family: Option<ArchFamily>,
    pub hyperparams: Option<Hyperparams>,
    pub epochs: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
    /// Frequency bounds the model was trained under.
    pub norm_bounds: Option<NormBounds>,
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Spec, every parameter and running statistic, and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub tensors: Vec<NamedTensor>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(model: &Model, meta: CheckpointMeta) -> Self {
        let tensors = model
            .named_params()
            .into_iter()
            .map(|(name, p)| NamedTensor { name, shape: p.shape.clone(), data: p.value.clone() })
            .collect();
        Checkpoint { spec: model.spec.clone(), tensors, meta }
    }

    pub fn to_model(&self) -> Result<Model, NnError> {
        let mut m = Model::new(self.spec.clone(), 0)?;
        let mut params = m.named_params_mut();
        if params.len() != self.tensors.len() {
            return Err(NnError::Checkpoint(format!(
                "spec has {} tensors, checkpoint {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for ((name, p), t) in params.iter_mut().zip(&self.tensors) {
            if *name != t.name || p.shape != t.shape {
                return Err(NnError::Checkpoint(format!(
                    "tensor {} {:?} does not match spec tensor {name} {:?}",
                    t.name, t.shape, p.shape
                )));
            }
            p.value.copy_from_slice(&t.data);
        }
        Ok(m)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let spec = serde_json::to_vec(&self.spec).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let meta = serde_json::to_vec(&self.meta).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(spec.len() as u32).to_le_bytes())?;
        w.write_all(&spec)?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[t.shape.len() as u8])?;
            for d in &t.shape {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(8 * t.data.len());
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| NnError::BadMagic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let spec_bytes = read_vec(&mut r, n)?;
        let spec: NetworkSpec =
            serde_json::from_slice(&spec_bytes).map_err(|e| NnError::Checkpoint(format!("spec: {e}")))?;
        let n = read_u32(&mut r)? as usize;
        let meta_bytes = read_vec(&mut r, n)?;
        let meta: CheckpointMeta =
            serde_json::from_slice(&meta_bytes).map_err(|e| NnError::Checkpoint(format!("metadata: {e}")))?;
        let n = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let mut b2 = [0u8; 2];
            read_exact(&mut r, &mut b2)?;
            let name = String::from_utf8(read_vec(&mut r, u16::from_le_bytes(b2) as usize)?)
                .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
            let mut nd = [0u8; 1];
            read_exact(&mut r, &mut nd)?;
            let mut shape = Vec::with_capacity(nd[0] as usize);
            for _ in 0..nd[0] {
                let mut b8 = [0u8; 8];
                read_exact(&mut r, &mut b8)?;
                shape.push(u64::from_le_bytes(b8) as usize);
            }
            let len = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
            let len = len.filter(|l| *l <= 1 << 28).ok_or_else(|| NnError::Checkpoint(format!("tensor {name}: bad shape")))?;
            let raw = read_vec(&mut r, len * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(NnError::Checkpoint("trailing bytes".into()));
        }
        let ck = Checkpoint { spec, tensors, meta };
        ck.to_model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), NnError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NnError::Checkpoint("truncated checkpoint".into()),
        _ => NnError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, NnError> {
    if n > 1 << 31 {
        return Err(NnError::Checkpoint("length field too large".into()));
    }
    let mut v = vec![0u8; n];
    read_exact(r, &mut v)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn ck() -> (Checkpoint, Model) {
        let h = Hyperparams::desk(ArchFamily::ConvLstm);
        let m = Model::new(h.spec(ArchFamily::ConvLstm), 5).unwrap();
        let meta = CheckpointMeta {
            family: Some(ArchFamily::ConvLstm),
            hyperparams: Some(h),
            epochs: 1,
            seed: 5,
            final_loss: 0.1234567890123,
            loss_history: vec![0.3, 0.1234567890123],
            norm_bounds: Some(NormBounds::new(59.9, 60.1).unwrap()),
            regime: Some(Regime::Attack5),
        };
        (Checkpoint::from_model(&m, meta), m)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (c, mut m) = ck();
        let mut buf = Vec::new();
        c.write(&mut buf).unwrap();
        let back = Checkpoint::read(&buf[..]).unwrap();
        assert_eq!(back, c);
        let x = Tensor::new(vec![2, 240, 2], (0..960).map(|i| (i as f64 * 0.37).sin().abs()).collect()).unwrap();
        let a = m.predict_batch(&x).unwrap();
        let b = back.to_model().unwrap().predict_batch(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_input() {
        let (c, _) = ck();
        let mut buf = Vec::new();
        c.write(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[1] = b'X';
        assert!(matches!(Checkpoint::read(&bad[..]), Err(NnError::BadMagic)));
        assert!(matches!(Checkpoint::read(&buf[..buf.len() - 1]), Err(NnError::Checkpoint(_))));
    }
}
