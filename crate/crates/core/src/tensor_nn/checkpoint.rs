//! Binary checkpoint layout (all integers `u32` little-endian):
//!
//! ```text
//! magic "EDGCKPT\0" | version | network count
//! per network: layer count | (out, in) per layer | f64 LE weights then bias per layer
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::mat::Mat;
use super::mlp::{Layer, MlpParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EDGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_checkpoint<W: Write>(w: &mut W, nets: &[&MlpParams]) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, nets.len() as u32)?;
    for net in nets {
        put_u32(w, net.layers().len() as u32)?;
        for l in net.layers() {
            put_u32(w, l.out_dim() as u32)?;
            put_u32(w, l.in_dim() as u32)?;
        }
        for l in net.layers() {
            for v in l.weight.data().iter().chain(&l.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Vec<MlpParams>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let n_layers = get_u32(r)? as usize;
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let out = get_u32(r)? as usize;
            let inp = get_u32(r)? as usize;
            dims.push((out, inp));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (out, inp) in dims {
            let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
                let mut buf = vec![0u8; n * 8];
                r.read_exact(&mut buf)
                    .map_err(|e| Error::Checkpoint(format!("truncated tensor data: {e}")))?;
                Ok(buf
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect())
            };
            let weight = Mat::from_vec(out, inp, read_f64s(out * inp)?)?;
            let bias = read_f64s(out)?;
            layers.push(Layer::new(weight, bias)?);
        }
        nets.push(MlpParams::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))?);
    }
    Ok(nets)
}

/// `model.ckpt` -> `model.ckpt.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes the networks to `path` and `meta` as JSON beside it.
pub fn save_model<M: Serialize>(path: &Path, nets: &[&MlpParams], meta: &M) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, nets).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn load_model<M: DeserializeOwned>(path: &Path) -> Result<(Vec<MlpParams>, M)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let nets = read_checkpoint(&mut BufReader::new(f))?;
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok((nets, serde_json::from_str(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rng_from(1, &[]);
        let a = MlpParams::kaiming(&[4, 3, 2], &mut rng).unwrap();
        let b = MlpParams::kaiming(&[2, 5], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[&a, &b]).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut rng = rng_from(1, &[]);
        let a = MlpParams::kaiming(&[2, 2], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[&a]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint(&mut &truncated[..]).is_err());
    }
}
