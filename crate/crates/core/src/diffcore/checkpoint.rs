//! Binary network checkpoints.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! ```text
//! "MEAM-NET-1"                      10-byte magic
//! activation code, layer count
//! per layer: out_dim, in_dim
//! per layer: weight (row-major out x in), then bias (out)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{MeamError, Result};

use super::net::{Activation, Layer, NetParams};

pub const NET_MAGIC: &[u8; 10] = b"MEAM-NET-1";

pub fn write_net<W: Write>(net: &NetParams, mut w: W) -> Result<()> {
    w.write_all(NET_MAGIC)?;
    w.write_all(&net.activation().code().to_le_bytes())?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for layer in net.layers() {
        w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
        w.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_net<R: Read>(mut r: R) -> Result<NetParams> {
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(MeamError::Format(format!(
            "bad checkpoint magic {:?} (expected {:?})",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(NET_MAGIC)
        )));
    }
    let code = read_u32(&mut r)?;
    let activation = Activation::from_code(code)
        .ok_or_else(|| MeamError::Format(format!("unknown activation code {code}")))?;
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(MeamError::Format(format!("implausible layer count {n_layers}")));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let out = read_u32(&mut r)? as usize;
        let inp = read_u32(&mut r)? as usize;
        dims.push((out, inp));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (out, inp) in dims {
        let mut weight = Array2::zeros((out, inp));
        for v in weight.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        let mut bias = Array1::zeros(out);
        for v in bias.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        layers.push(Layer { weight, bias });
    }
    NetParams::new(layers, activation)
}

pub fn save_net(net: &NetParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_net(net, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<NetParams> {
    let bytes = fs::read(path)?;
    read_net(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NetParams::mlp(&[5, 7, 3], Activation::Tanh, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        assert_eq!(&buf[..10], b"MEAM-NET-1");
        assert_eq!(buf.len(), 10 + 8 + 2 * 8 + 8 * net.num_params());
        let back = read_net(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_wrong_magic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NetParams::mlp(&[1, 1], Activation::Gelu, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        buf[9] = b'2';
        assert!(matches!(read_net(buf.as_slice()), Err(MeamError::Format(_))));
    }
}
