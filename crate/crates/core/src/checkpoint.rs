//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"DMILCKPT"  u32 version  u32 section_count
//! per section:
//!   u32 name_len, name (UTF-8)
//!   u32 descriptor_len, descriptor (JSON)
//!   u64 param_count, param_count × f64
//! ```
//!
//! Parameters of a network are stored layer by layer: the weight matrix in
//! row-major order, then the bias. Model-specific extras (the policy's
//! `log_std`) follow the last layer. The descriptor records layer sizes, the
//! activation, the fixed normalizers and the model kind.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Discriminator, DiscriminatorKind, DynamicsModel, GaussianPolicy, Normalizer};
use crate::nn::{DenseNet, Layer};
use crate::trainer::Models;

pub const MAGIC: &[u8; 8] = b"DMILCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptor {
    pub kind: String,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    pub state_norm: Normalizer,
    pub action_norm: Normalizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_norm: Option<Normalizer>,
    /// Trailing non-layer parameter blocks, in storage order.
    #[serde(default)]
    pub extras: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub descriptor: Descriptor,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub sections: Vec<Section>,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn net_params(net: &DenseNet) -> Vec<f64> {
    let mut out = Vec::with_capacity(crate::nn::Parameterized::num_params(net));
    for l in net.layers() {
        for r in 0..l.weight.nrows() {
            out.extend(l.weight.row(r).iter());
        }
        out.extend(l.bias.iter());
    }
    out
}

/// Rebuilds a network from `sizes` and a row-major parameter stream,
/// returning the unread tail.
fn net_from_params<'p>(sizes: &[usize], mut params: &'p [f64]) -> Result<(DenseNet, &'p [f64])> {
    if sizes.len() < 2 {
        return Err(ckpt_err("a network needs at least two layer sizes"));
    }
    let mut layers = vec![];
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let need = fan_in * fan_out + fan_out;
        if params.len() < need {
            return Err(ckpt_err("parameter array is shorter than the descriptor implies"));
        }
        let weight = DMatrix::from_row_slice(fan_out, fan_in, &params[..fan_in * fan_out]);
        let bias = DVector::from_column_slice(&params[fan_in * fan_out..need]);
        layers.push(Layer { weight, bias });
        params = &params[need..];
    }
    Ok((DenseNet::from_layers(layers)?, params))
}

fn section(name: &str, kind: &str, net: &DenseNet, norms: (&Normalizer, &Normalizer, Option<&Normalizer>)) -> Section {
    Section {
        name: name.into(),
        descriptor: Descriptor {
            kind: kind.into(),
            layer_sizes: net.layer_sizes().to_vec(),
            activation: "relu".into(),
            state_norm: norms.0.clone(),
            action_norm: norms.1.clone(),
            delta_norm: norms.2.cloned(),
            extras: vec![],
        },
        params: net_params(net),
    }
}

impl Checkpoint {
    pub fn from_models(m: &Models) -> Self {
        let mut policy = section(
            "policy",
            "gaussian_policy",
            m.policy.net(),
            (m.policy.state_normalizer(), m.policy.action_normalizer(), None),
        );
        policy.descriptor.extras.push(("log_std".into(), m.policy.log_std().len()));
        policy.params.extend_from_slice(m.policy.log_std());
        let (fs, fa, fd) = m.dynamics.normalizers();
        let dynamics = section("dynamics", "dynamics", m.dynamics.net(), (fs, fa, Some(fd)));
        let (rs, ra) = m.disc_r.normalizers();
        let disc_r = section("disc_r", "rollout_discriminator", m.disc_r.net(), (rs, ra, None));
        let (os, oa) = m.disc_o.normalizers();
        let disc_o = section("disc_o", "optimality_discriminator", m.disc_o.net(), (os, oa, None));
        Self { sections: vec![policy, dynamics, disc_r, disc_o] }
    }

    fn get(&self, name: &str) -> Result<&Section> {
        self.sections.iter().find(|s| s.name == name).ok_or_else(|| ckpt_err(format!("missing section {name:?}")))
    }

    pub fn policy(&self) -> Result<GaussianPolicy> {
        let s = self.get("policy")?;
        let d = &s.descriptor;
        let (net, rest) = net_from_params(&d.layer_sizes, &s.params)?;
        let m = net.output_dim();
        if d.extras != [("log_std".to_string(), m)] || rest.len() != m {
            return Err(ckpt_err("policy section must end with one log_std per action"));
        }
        GaussianPolicy::from_parts(net, rest.to_vec(), d.state_norm.clone(), d.action_norm.clone())
            .map_err(|e| ckpt_err(e.to_string()))
    }

    pub fn dynamics(&self) -> Result<DynamicsModel> {
        let s = self.get("dynamics")?;
        let d = &s.descriptor;
        let (net, rest) = net_from_params(&d.layer_sizes, &s.params)?;
        if !rest.is_empty() {
            return Err(ckpt_err("dynamics section has trailing parameters"));
        }
        let delta = d.delta_norm.clone().ok_or_else(|| ckpt_err("dynamics section lacks delta_norm"))?;
        DynamicsModel::from_parts(net, d.state_norm.clone(), d.action_norm.clone(), delta)
            .map_err(|e| ckpt_err(e.to_string()))
    }

    fn discriminator(&self, name: &str, kind: DiscriminatorKind) -> Result<Discriminator> {
        let s = self.get(name)?;
        let d = &s.descriptor;
        let (net, rest) = net_from_params(&d.layer_sizes, &s.params)?;
        if !rest.is_empty() {
            return Err(ckpt_err(format!("{name} section has trailing parameters")));
        }
        Discriminator::from_parts(kind, net, d.state_norm.clone(), d.action_norm.clone())
            .map_err(|e| ckpt_err(e.to_string()))
    }

    pub fn models(&self) -> Result<Models> {
        Ok(Models {
            policy: self.policy()?,
            dynamics: self.dynamics()?,
            disc_r: self.discriminator("disc_r", DiscriminatorKind::Rollout)?,
            disc_o: self.discriminator("disc_o", DiscriminatorKind::Optimality)?,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for s in &self.sections {
            let desc = serde_json::to_vec(&s.descriptor)?;
            w.write_all(&(s.name.len() as u32).to_le_bytes())?;
            w.write_all(s.name.as_bytes())?;
            w.write_all(&(desc.len() as u32).to_le_bytes())?;
            w.write_all(&desc)?;
            w.write_all(&(s.params.len() as u64).to_le_bytes())?;
            for p in &s.params {
                w.write_all(&p.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| ckpt_err("file too short for a header"))?;
        if &magic != MAGIC {
            return Err(ckpt_err("bad magic bytes"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(ckpt_err(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut sections = vec![];
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(&mut r)?).map_err(|_| ckpt_err("section name is not UTF-8"))?;
            let descriptor: Descriptor = serde_json::from_slice(&read_bytes(&mut r)?)
                .map_err(|e| ckpt_err(format!("descriptor of {name:?}: {e}")))?;
            let mut n = [0u8; 8];
            r.read_exact(&mut n).map_err(|_| ckpt_err("truncated parameter count"))?;
            let n = u64::from_le_bytes(n) as usize;
            let mut raw = vec![0u8; n.checked_mul(8).ok_or_else(|| ckpt_err("parameter count overflows"))?];
            r.read_exact(&mut raw).map_err(|_| ckpt_err(format!("truncated parameters in {name:?}")))?;
            let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            sections.push(Section { name, descriptor, params });
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(ckpt_err("trailing bytes after the last section"));
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| ckpt_err("truncated header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    if n > 1 << 24 {
        return Err(ckpt_err("implausibly long section header"));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|_| ckpt_err("truncated section header"))?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{init_models, Normalizers, TrainConfig};

    fn models() -> Models {
        let cfg = TrainConfig {
            policy_hidden: vec![5],
            dynamics_hidden: vec![4, 3],
            discriminator_hidden: vec![6],
            ..Default::default()
        };
        let mut norms = Normalizers::identity(4, 1);
        norms.state.shift = vec![0.1, 0.2, 0.3, 0.4];
        norms.delta.scale = vec![1e-3; 4];
        let mut m = init_models(&cfg, &norms).unwrap();
        m.policy.set_log_std(&[-1.25]);
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = models();
        let mut buf = vec![];
        Checkpoint::from_models(&m).write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&buf[..]).unwrap().models().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn weights_are_row_major_and_little_endian() {
        let m = models();
        let mut buf = vec![];
        Checkpoint::from_models(&m).write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
        let ck = Checkpoint::from_models(&m);
        let w = &m.policy.net().layers()[0].weight;
        assert_eq!(ck.sections[0].params[1], w[(0, 1)]);
        assert_eq!(ck.sections[0].params[4], w[(1, 0)]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = vec![];
        Checkpoint::from_models(&models()).write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&bad[..]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(&extra[..]).is_err());
        let mut ck = Checkpoint::from_models(&models());
        ck.sections[0].params.pop();
        assert!(ck.policy().is_err());
        ck.sections.remove(1);
        assert!(ck.dynamics().is_err());
    }
}
