//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "LCKP"
//! version    u16      1
//! arch       u8       0 fcnn, 1 cnn, 2 lstm, 3 dtc
//! head       u8       0 deterministic, 1 gaussian
//! input_len  u64
//! latent_dim u64
//! n_params   u64
//! seed       u64
//! params     n_params × f64
//! n_norm     u64      frozen normalisation layers (0 when not frozen)
//! per layer: channels u64, then channels × f64 means, channels × f64 variances
//! ```

use std::io::{Read, Write};

use crate::autodiff::NormStats;
use crate::error::{Error, Result};
use crate::num::Scalar;

use super::{Architecture, Autoencoder, LatentHead};

const MAGIC: &[u8; 4] = b"LCKP";
const VERSION: u16 = 1;

pub fn write_checkpoint<S: Scalar, W: Write>(ae: &Autoencoder<S>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[ae.arch().code(), (ae.head() == LatentHead::Gaussian) as u8])?;
    for v in [
        ae.input_len() as u64,
        ae.latent_dim() as u64,
        ae.param_count() as u64,
        ae.seed(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &p in ae.params() {
        w.write_all(&p.as_f64().to_le_bytes())?;
    }
    let frozen = ae.frozen_norm().unwrap_or(&[]);
    w.write_all(&(frozen.len() as u64).to_le_bytes())?;
    for st in frozen {
        w.write_all(&(st.mean.len() as u64).to_le_bytes())?;
        for &v in st.mean.iter().chain(&st.var) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<S: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<S>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated values: {e}")))?;
        out.push(S::of(f64::from_le_bytes(b)));
    }
    Ok(out)
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut r: R) -> Result<Autoencoder<S>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)?;
    if u16::from_le_bytes(ver) != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", u16::from_le_bytes(ver))));
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags)?;
    let arch = Architecture::from_code(tags[0])
        .ok_or_else(|| Error::Checkpoint(format!("unknown architecture code {}", tags[0])))?;
    let head = match tags[1] {
        0 => LatentHead::Deterministic,
        1 => LatentHead::Gaussian,
        c => return Err(Error::Checkpoint(format!("unknown head code {c}"))),
    };
    let input_len = read_u64(&mut r)? as usize;
    let latent_dim = read_u64(&mut r)? as usize;
    let n_params = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let params = read_f64s(&mut r, n_params)?;
    let n_norm = read_u64(&mut r)? as usize;
    let frozen = if n_norm == 0 {
        None
    } else {
        let mut stats = Vec::with_capacity(n_norm);
        for _ in 0..n_norm {
            let c = read_u64(&mut r)? as usize;
            let mean = read_f64s(&mut r, c)?;
            let var = read_f64s(&mut r, c)?;
            stats.push(NormStats { mean, var });
        }
        Some(stats)
    };
    Autoencoder::from_parts(arch, input_len, latent_dim, head, seed, params, frozen)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}
