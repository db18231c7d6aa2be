//! Binary checkpoint of a policy/value network and its optimiser state.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic          8 bytes   "RSMANET\0"
//! version        u32       1
//! input          u32
//! hidden_count   u32
//! hidden[i]      u32       x hidden_count
//! power_out      u32
//! split_out      u32
//! shared_trunk   u8        0 or 1
//! n_params       u64
//! params         f64       x n_params, in the flat layout order of `MlpParams`
//! learning_rate  f64
//! beta1          f64
//! beta2          f64
//! epsilon        f64
//! rule           u8        0 = adam, 1 = sgd
//! steps          u64
//! first_moment   f64       x n_params
//! second_moment  f64       x n_params
//! ```

use std::fs;
use std::path::Path;

use super::adam::{Adam, AdamConfig, UpdateRule};
use super::mlp::{Architecture, MlpParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RSMANET\0";
pub const VERSION: u32 = 1;

pub fn encode(params: &MlpParams, optimizer: &Adam) -> Vec<u8> {
    let arch = params.architecture();
    let mut out = Vec::with_capacity(64 + 24 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let dims = [arch.input as u32, arch.hidden.len() as u32];
    dims.iter().for_each(|d| out.extend_from_slice(&d.to_le_bytes()));
    arch.hidden.iter().for_each(|&h| out.extend_from_slice(&(h as u32).to_le_bytes()));
    out.extend_from_slice(&(arch.power_out as u32).to_le_bytes());
    out.extend_from_slice(&(arch.split_out as u32).to_le_bytes());
    out.push(arch.shared_trunk as u8);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    put_floats(&mut out, params.as_slice());
    let cfg = optimizer.config;
    put_floats(&mut out, &[cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon]);
    out.push(match cfg.rule {
        UpdateRule::Adam => 0,
        UpdateRule::Sgd => 1,
    });
    out.extend_from_slice(&optimizer.steps.to_le_bytes());
    put_floats(&mut out, &optimizer.first_moment);
    put_floats(&mut out, &optimizer.second_moment);
    out
}

fn put_floats(out: &mut Vec<u8>, xs: &[f64]) {
    xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(MlpParams, Adam), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let input = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > 64 {
        return Err(format!("implausible hidden layer count {n_hidden}"));
    }
    let hidden = (0..n_hidden)
        .map(|_| r.u32().map(|h| h as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let power_out = r.u32()? as usize;
    let split_out = r.u32()? as usize;
    let shared_trunk = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(format!("bad shared_trunk flag {b}")),
    };
    let arch = Architecture {
        input,
        hidden,
        power_out,
        split_out,
        shared_trunk,
    };
    let n = r.u64()? as usize;
    let values = r.floats(n)?;
    let params = MlpParams::from_values(arch, values).map_err(|e| e.to_string())?;
    let h = r.floats(4)?;
    let rule = match r.u8()? {
        0 => UpdateRule::Adam,
        1 => UpdateRule::Sgd,
        b => return Err(format!("bad optimizer rule {b}")),
    };
    let config = AdamConfig {
        learning_rate: h[0],
        beta1: h[1],
        beta2: h[2],
        epsilon: h[3],
        rule,
    };
    let steps = r.u64()?;
    let first_moment = r.floats(n)?;
    let second_moment = r.floats(n)?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((
        params,
        Adam {
            config,
            first_moment,
            second_moment,
            steps,
        },
    ))
}

pub fn save(path: &Path, params: &MlpParams, optimizer: &Adam) -> Result<()> {
    fs::write(path, encode(params, optimizer))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(MlpParams, Adam)> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}
