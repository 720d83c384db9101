//! Model checkpoints: a binary weight file plus a JSON sidecar.
//!
//! Binary layout (little-endian): magic `ISNN`, version u32, the layer counts
//! of the radar branch, beam branch and head as u32, then per layer `n_in`,
//! `n_out` (u32) and an activation code (u8), then the normalization
//! constants (three f64 and `n_beams` as u32), then every parameter as f64 in
//! [`MlpModel::parameters`] order.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::{Activation, Architecture, DenseLayer, MlpModel, Normalization};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ISNN";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &MlpModel, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * model.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for n in [model.radar.len(), model.beam.len(), model.head.len()] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in model.layers() {
        buf.extend_from_slice(&(l.n_in as u32).to_le_bytes());
        buf.extend_from_slice(&(l.n_out as u32).to_le_bytes());
        buf.push(l.activation.code());
    }
    let n = &model.norm;
    for v in [n.range_max, n.angle_span, n.vel_max] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(n.n_beams as u32).to_le_bytes());
    for p in model.parameters() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::parse(0, "checkpoint truncated"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::parse(0, "not a model checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::parse(0, format!("unsupported checkpoint version {version}")));
    }
    let counts = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    if counts.iter().any(|&n| n == 0 || n > 64) {
        return Err(Error::parse(0, "implausible layer counts"));
    }
    let mut layers = Vec::new();
    for _ in 0..counts.iter().sum::<usize>() {
        let n_in = c.u32()? as usize;
        let n_out = c.u32()? as usize;
        let act = Activation::from_code(c.take(1)?[0]).ok_or_else(|| Error::parse(0, "unknown activation code"))?;
        if n_in == 0 || n_out == 0 || n_in * n_out > bytes.len() {
            return Err(Error::parse(0, "implausible layer shape"));
        }
        layers.push(DenseLayer::zeros(n_in, n_out, act));
    }
    let norm = Normalization {
        range_max: c.f64()?,
        angle_span: c.f64()?,
        vel_max: c.f64()?,
        n_beams: c.u32()? as usize,
    };
    norm.validate()?;
    for l in &mut layers {
        for w in &mut l.weights {
            *w = c.f64()?;
        }
        for b in &mut l.bias {
            *b = c.f64()?;
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::parse(0, "trailing bytes after checkpoint"));
    }
    let head = layers.split_off(counts[0] + counts[1]);
    let beam = layers.split_off(counts[0]);
    let model = MlpModel { radar: layers, beam, head, norm };
    check_shapes(&model)?;
    Ok(model)
}

fn check_shapes(m: &MlpModel) -> Result<()> {
    let bad = |msg: &str| Err(Error::parse(0, msg.to_string()));
    let chained = |ls: &[DenseLayer], n_in: usize| {
        ls.iter().try_fold(n_in, |prev, l| (l.n_in == prev).then_some(l.n_out))
    };
    let (Some(r), Some(b)) = (chained(&m.radar, 3), chained(&m.beam, 1)) else {
        return bad("branch layer shapes do not chain");
    };
    match chained(&m.head, r + b) {
        Some(1) => Ok(()),
        _ => bad("head layer shapes do not chain to one output"),
    }
}

/// Human-readable description stored next to the binary checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub normalization: Normalization,
    pub n_params: usize,
    /// Training hyperparameters, free-form.
    pub training: serde_json::Value,
}

impl Sidecar {
    pub fn new(model: &MlpModel, training: serde_json::Value) -> Self {
        Self {
            format: "ISNN".into(),
            version: VERSION,
            architecture: model.architecture(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
            normalization: model.norm,
            n_params: model.n_params(),
            training,
        }
    }
}

pub fn write_sidecar<W: Write>(sidecar: &Sidecar, mut w: W) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar).map_err(|e| Error::Generation(e.to_string()))?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_sidecar<R: Read>(r: R) -> Result<Sidecar> {
    serde_json::from_reader(r).map_err(|e| Error::parse(e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MlpModel {
        let norm = Normalization {
            range_max: 80.0,
            angle_span: 180.0,
            vel_max: 15.0,
            n_beams: 64,
        };
        MlpModel::init(&Architecture::default(), norm, 8).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ISNN");
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), m);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra[..]).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(&magic[..]).is_err());
        let mut version = buf;
        version[4] = 9;
        assert!(read_checkpoint(&version[..]).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let m = model();
        let s = Sidecar::new(&m, serde_json::json!({"lr": 0.001, "epochs": 100}));
        let mut buf = Vec::new();
        write_sidecar(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"hidden_activation\": \"relu\""));
        assert_eq!(read_sidecar(&buf[..]).unwrap(), s);
    }
}
