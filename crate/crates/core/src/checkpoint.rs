//! Bit-exact binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic           8 bytes  "DPCKPT01"
//! version         u32
//! step            u64
//! config text     u32 length + UTF-8 bytes (network config echo)
//! tensor count    u32
//! tensor record   u32 name length + name bytes
//!                 u32 rank, u32 per dim
//!                 f32 per element, row-major
//! optimizer flag  u8 (0 = absent)
//! [lr f32, momentum f32, u32 count, tensor records for velocity]
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::optim::Sgd;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 8] = *b"DPCKPT01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct OptimState {
    pub lr: f32,
    pub momentum: f32,
    pub velocity: Vec<(String, Tensor)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_text: String,
    pub step: u64,
    pub tensors: Vec<(String, Tensor)>,
    pub optim: Option<OptimState>,
}

impl Checkpoint {
    pub fn capture(net: &Network, optim: Option<&Sgd>, step: u64) -> Checkpoint {
        let tensors = net
            .store
            .iter()
            .map(|(_, p)| (p.name.clone(), p.value.clone()))
            .collect();
        let optim = optim.map(|sgd| OptimState {
            lr: sgd.lr,
            momentum: sgd.momentum,
            velocity: net
                .store
                .iter()
                .zip(sgd.velocity())
                .map(|((_, p), v)| (p.name.clone(), v.clone()))
                .collect(),
        });
        Checkpoint {
            config_text: net.config().to_config_text(),
            step,
            tensors,
            optim,
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::parse(&self.config_text)
    }

    /// Rebuild a network from the config echo and load every tensor.
    pub fn build_network(&self) -> Result<Network> {
        let cfg = self.network_config()?;
        let mut net = Network::new(&cfg, 0)?;
        self.apply_to(&mut net)?;
        Ok(net)
    }

    /// Copy stored tensors into `net`, validating names and shapes.
    pub fn apply_to(&self, net: &mut Network) -> Result<()> {
        if self.tensors.len() != net.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, network has {} parameters",
                self.tensors.len(),
                net.store.len()
            )));
        }
        for (name, tensor) in &self.tensors {
            let id = net.store.find(name).ok_or_else(|| {
                Error::Checkpoint(format!("tensor '{name}' not present in the network"))
            })?;
            let param = net.store.get_mut(id);
            if param.value.shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, network expects {:?}",
                    tensor.shape(),
                    param.value.shape()
                )));
            }
            param.value = tensor.clone();
        }
        Ok(())
    }

    /// Rebuild the optimizer (if stored), validating velocity shapes.
    pub fn restore_optimizer(&self, net: &Network) -> Result<Option<Sgd>> {
        let Some(state) = &self.optim else {
            return Ok(None);
        };
        let mut sgd = Sgd::new(&net.store, state.lr, state.momentum);
        let mut velocity = Vec::with_capacity(net.store.len());
        for (_, p) in net.store.iter() {
            let found = state
                .velocity
                .iter()
                .find(|(name, _)| name == &p.name)
                .ok_or_else(|| {
                    Error::Checkpoint(format!("velocity for '{}' missing from checkpoint", p.name))
                })?;
            if found.1.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "velocity '{}' has shape {:?}, parameter has {:?}",
                    p.name,
                    found.1.shape(),
                    p.value.shape()
                )));
            }
            velocity.push(found.1.clone());
        }
        sgd.set_velocity(velocity);
        Ok(Some(sgd))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        put_u32(&mut out, VERSION);
        put_u64(&mut out, self.step);
        put_bytes(&mut out, self.config_text.as_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_tensor(&mut out, name, t);
        }
        match &self.optim {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                put_f32(&mut out, o.lr);
                put_f32(&mut out, o.momentum);
                put_u32(&mut out, o.velocity.len() as u32);
                for (name, t) in &o.velocity {
                    put_tensor(&mut out, name, t);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {magic:02x?}, expected {MAGIC:02x?}"
            )));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let step = r.u64("step")?;
        let config_bytes = r.bytes("config text")?;
        let config_text = String::from_utf8(config_bytes.to_vec())
            .map_err(|_| Error::Checkpoint("config text is not valid UTF-8".into()))?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            tensors.push(r.tensor()?);
        }
        let optim = match r.take(1, "optimizer flag")?[0] {
            0 => None,
            1 => {
                let lr = r.f32("optimizer lr")?;
                let momentum = r.f32("optimizer momentum")?;
                let vcount = r.u32("velocity count")? as usize;
                let mut velocity = Vec::with_capacity(vcount.min(4096));
                for _ in 0..vcount {
                    velocity.push(r.tensor()?);
                }
                Some(OptimState {
                    lr,
                    momentum,
                    velocity,
                })
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "optimizer flag must be 0 or 1, got {other}"
                )))
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config_text,
            step,
            tensors,
            optim,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_bytes(out, name.as_bytes());
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        put_u32(out, d as u32);
    }
    for &v in t.data() {
        put_f32(out, v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "unexpected end of data while reading {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn bytes(&mut self, what: &str) -> Result<&'a [u8]> {
        let len = self.u32(what)? as usize;
        self.take(len, what)
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let name_bytes = self.bytes("tensor name")?;
        let name = String::from_utf8(name_bytes.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not valid UTF-8".into()))?;
        let rank = self.u32("tensor rank")? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' rank {rank} exceeds limit 8"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32("tensor dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel * 4 > self.buf.len() - self.pos {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' data ({numel} elements) exceeds remaining file size"
            )));
        }
        let raw = self.take(numel * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, Tensor::from_vec(&shape, data)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;

    fn micro_net(seed: u64) -> Network {
        Network::new(&NetworkConfig::micro(), seed).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let net = micro_net(21);
        let sgd = Sgd::new(&net.store, 0.01, 0.9);
        let ckpt = Checkpoint::capture(&net, Some(&sgd), 17);
        let bytes = ckpt.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.step, 17);
        assert_eq!(back.config_text, ckpt.config_text);
        assert_eq!(back.tensors.len(), ckpt.tensors.len());
        for ((n1, t1), (n2, t2)) in ckpt.tensors.iter().zip(&back.tensors) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
        let restored = back.build_network().unwrap();
        for ((_, p1), (_, p2)) in net.store.iter().zip(restored.store.iter()) {
            assert_eq!(p1.name, p2.name);
            assert_eq!(p1.value, p2.value);
        }
    }

    #[test]
    fn truncated_data_is_rejected_not_crashed() {
        let net = micro_net(23);
        let bytes = Checkpoint::capture(&net, None, 0).encode();
        for cut in [0, 4, 7, 8, 12, 40, bytes.len() / 2, bytes.len() - 1] {
            let err = Checkpoint::decode(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Checkpoint(_)), "cut at {cut}");
        }
    }

    #[test]
    fn corrupt_magic_is_rejected_by_name() {
        let net = micro_net(27);
        let mut bytes = Checkpoint::capture(&net, None, 0).encode();
        bytes[0] = b'X';
        let err = Checkpoint::decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("magic"));
    }

    #[test]
    fn mismatched_network_is_rejected_naming_tensor() {
        let net = micro_net(29);
        let ckpt = Checkpoint::capture(&net, None, 0);
        // A network with a different J: head shapes disagree.
        let mut cfg = NetworkConfig::micro();
        cfg.keypoint_channels = 3;
        let mut other = Network::new(&cfg, 1).unwrap();
        let err = ckpt.apply_to(&mut other).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("head_s"), "{msg}");
    }

    #[test]
    fn optimizer_state_round_trips() {
        let net = micro_net(31);
        let mut sgd = Sgd::new(&net.store, 0.05, 0.8);
        let velocity: Vec<Tensor> = net
            .store
            .iter()
            .map(|(_, p)| Tensor::full(p.value.shape(), 0.125))
            .collect();
        sgd.set_velocity(velocity);
        let bytes = Checkpoint::capture(&net, Some(&sgd), 3).encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        let restored = back.restore_optimizer(&net).unwrap().unwrap();
        assert_eq!(restored.lr, 0.05);
        assert_eq!(restored.momentum, 0.8);
        assert!(restored
            .velocity()
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.125)));
    }
}
