//! Binary weight files.
//!
//! Layout: magic `CURIONN1`, `u32` layer count, then per layer `u32` in_dim,
//! `u32` out_dim, `u8` activation code, weights row-major then biases as
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, DenseLayer, Network};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"CURIONN1";

// Guards against absurd allocations from corrupt headers.
const MAX_DIM: u32 = 1 << 24;

pub fn write_weights<W: Write>(net: &Network, mut w: W) -> std::io::Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for layer in net.layers() {
        w.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
        w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
        w.write_all(&[layer.activation.code()])?;
        for v in layer.weights.iter().chain(layer.biases.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_weights(net, BufWriter::new(file))?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Reads a network; `origin` only labels errors.
pub fn read_weights<R: Read>(mut r: R, origin: &Path) -> Result<Network> {
    let bad = |reason: String| Error::format(origin, reason);
    let truncated = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(origin, "truncated weight file")
        } else {
            Error::Io(e)
        }
    };

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let count = read_u32(&mut r).map_err(truncated)?;
    if count == 0 || count > 4096 {
        return Err(bad(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for i in 0..count {
        let in_dim = read_u32(&mut r).map_err(truncated)?;
        let out_dim = read_u32(&mut r).map_err(truncated)?;
        if in_dim == 0 || out_dim == 0 || in_dim > MAX_DIM || out_dim > MAX_DIM {
            return Err(bad(format!("layer {i} has invalid shape {out_dim}x{in_dim}")));
        }
        let mut code = [0u8; 1];
        r.read_exact(&mut code).map_err(truncated)?;
        let activation = Activation::from_code(code[0])
            .ok_or_else(|| bad(format!("layer {i} has unknown activation code {}", code[0])))?;
        let (rows, cols) = (out_dim as usize, in_dim as usize);
        let weights = read_f64s(&mut r, rows * cols).map_err(truncated)?;
        let biases = read_f64s(&mut r, rows).map_err(truncated)?;
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((rows, cols), weights).expect("sized above"),
            biases: Array1::from_vec(biases),
            activation,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after last layer".into()));
    }
    Network::from_layers(layers).map_err(|e| bad(e.to_string()))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_weights(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network {
        Network::init(
            &[
                LayerSpec::new(2, 4, Activation::Tanh),
                LayerSpec::new(4, 3, Activation::Relu),
                LayerSpec::new(3, 2, Activation::Sigmoid),
                LayerSpec::new(2, 1, Activation::Linear),
            ],
            &mut ChaCha8Rng::seed_from_u64(8),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.nn");
        let a = net();
        save_weights(&a, &path).unwrap();
        let b = load_weights(&path).unwrap();
        assert_eq!(a, b);
        let x = [0.123, -0.456];
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn header_layout() {
        let mut bytes = Vec::new();
        write_weights(&net(), &mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"CURIONN1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 4);
        assert_eq!(bytes[20], 0);
        let expected = 12 + [(2, 4), (4, 3), (3, 2), (2, 1)]
            .iter()
            .map(|(i, o)| 9 + 8 * (i * o + o))
            .sum::<usize>();
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = Vec::new();
        write_weights(&net(), &mut bytes).unwrap();
        let origin = Path::new("mem");

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_weights(&bad_magic[..], origin), Err(Error::Format { .. })));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_weights(truncated, origin), Err(Error::Format { .. })));

        // second layer claims in_dim 5 while first outputs 4
        let mut broken_chain = bytes.clone();
        let second = 12 + 9 + 8 * (2 * 4 + 4);
        broken_chain[second..second + 4].copy_from_slice(&5u32.to_le_bytes());
        assert!(read_weights(&broken_chain[..], origin).is_err());

        let mut bad_act = bytes.clone();
        bad_act[20] = 9;
        assert!(matches!(read_weights(&bad_act[..], origin), Err(Error::Format { .. })));

        let mut trailing = bytes;
        trailing.push(0);
        assert!(read_weights(&trailing[..], origin).is_err());
    }
}
