//! Checkpoint container: one JSON header line describing layer specs and
//! tensor shapes, followed by all tensor values as little-endian 64-bit
//! floats in declaration order. Round-trips are bit-exact.
//!
//! A network section serializes its trainable parameters first, then its
//! non-trainable buffers (batch-norm running statistics), layer by layer.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::LayerSpec;
use crate::network::Network;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    /// (rows, cols) of every serialized tensor, params then buffers per layer.
    pub shapes: Vec<(usize, usize)>,
}

impl NetworkHeader {
    pub fn of(net: &Network) -> Self {
        let mut shapes = Vec::new();
        let mut layers = Vec::new();
        for layer in net.layers() {
            layers.push(*layer.spec());
            for t in layer.params().iter().chain(layer.buffers().iter()) {
                shapes.push(t.shape());
            }
        }
        Self {
            input_width: net.input_width(),
            layers,
            shapes,
        }
    }

    pub fn value_count(&self) -> usize {
        self.shapes.iter().map(|(r, c)| r * c).sum()
    }
}

fn write_tensor_values(w: &mut impl Write, t: &Tensor) -> Result<()> {
    for v in t.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_values(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes one network section: header line, then the value blob.
pub fn write_network(w: &mut impl Write, net: &Network) -> Result<()> {
    let header = NetworkHeader::of(net);
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for layer in net.layers() {
        for t in layer.params().iter().chain(layer.buffers().iter()) {
            write_tensor_values(w, t)?;
        }
    }
    Ok(())
}

fn read_header_line(r: &mut impl Read) -> Result<Vec<u8>> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            return Ok(line);
        }
        line.push(byte[0]);
        if line.len() > 1 << 22 {
            return Err(Error::Checkpoint("unterminated header line".into()));
        }
    }
}

/// Reads one network section written by [`write_network`].
pub fn read_network(r: &mut impl Read) -> Result<Network> {
    let line = read_header_line(r)?;
    let header: NetworkHeader = serde_json::from_slice(&line)?;
    let mut net = Network::new(header.input_width, &header.layers)?;
    let mut shape_idx = 0;
    for layer in net.layers_mut() {
        let n_params = layer.params().len();
        let n_buffers = layer.buffers().len();
        for k in 0..n_params + n_buffers {
            let expected = header.shapes.get(shape_idx).copied().ok_or_else(|| {
                Error::Checkpoint("header shape list shorter than layer tensors".into())
            })?;
            let t = if k < n_params {
                &mut layer.params_mut()[k]
            } else {
                &mut layer.buffers_mut()[k - n_params]
            };
            if t.shape() != expected {
                return Err(Error::Checkpoint(format!(
                    "tensor shape {:?} does not match header {:?}",
                    t.shape(),
                    expected
                )));
            }
            let values = read_values(r, t.len())?;
            t.values_mut().copy_from_slice(&values);
            shape_idx += 1;
        }
    }
    if shape_idx != header.shapes.len() {
        return Err(Error::Checkpoint(
            "header shape list longer than layer tensors".into(),
        ));
    }
    Ok(net)
}

/// Header for a multi-section file: format version plus named sections, each
/// a network serialized with [`write_network`] in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format_version: u32,
    pub kind: String,
    pub sections: Vec<String>,
    /// Scalar state carried alongside networks (e.g. log temperature).
    #[serde(default)]
    pub scalars: Vec<(String, f64)>,
}

pub fn write_container(
    w: &mut impl Write,
    kind: &str,
    sections: &[(&str, &Network)],
    scalars: &[(&str, f64)],
) -> Result<()> {
    let header = ContainerHeader {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        sections: sections.iter().map(|(n, _)| n.to_string()).collect(),
        scalars: scalars
            .iter()
            .map(|(n, v)| (n.to_string(), *v))
            .collect(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for (_, net) in sections {
        write_network(w, net)?;
    }
    Ok(())
}

pub fn read_container(r: &mut impl Read) -> Result<(ContainerHeader, Vec<Network>)> {
    let line = read_header_line(r)?;
    let header: ContainerHeader = serde_json::from_slice(&line)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut nets = Vec::with_capacity(header.sections.len());
    for _ in 0..header.sections.len() {
        nets.push(read_network(r)?);
    }
    Ok((header, nets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn sample_net(seed: u64) -> Network {
        let specs = [
            LayerSpec::Linear { input: 4, output: 6 },
            LayerSpec::Dropout { rate: 0.1 },
            LayerSpec::LayerNorm { width: 6 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm { width: 6 },
            LayerSpec::Linear { input: 6, output: 1 },
        ];
        let mut net = Network::new(4, &specs).unwrap();
        net.init_params(&mut RandomStream::new(seed));
        net
    }

    #[test]
    fn network_roundtrip_is_bit_exact() {
        let net = sample_net(3);
        let mut bytes = Vec::new();
        write_network(&mut bytes, &net).unwrap();
        let restored = read_network(&mut bytes.as_slice()).unwrap();
        for (a, b) in net.params().zip(restored.params()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // a second write produces identical bytes
        let mut bytes2 = Vec::new();
        write_network(&mut bytes2, &restored).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn container_roundtrip_preserves_sections_and_scalars() {
        let a = sample_net(1);
        let b = sample_net(2);
        let mut bytes = Vec::new();
        write_container(
            &mut bytes,
            "test",
            &[("online_0", &a), ("target_0", &b)],
            &[("log_alpha", -1.6094379124341003)],
        )
        .unwrap();
        let (header, nets) = read_container(&mut bytes.as_slice()).unwrap();
        assert_eq!(header.sections, vec!["online_0", "target_0"]);
        assert_eq!(header.scalars[0].1, -1.6094379124341003);
        assert_eq!(nets.len(), 2);
        assert_eq!(
            nets[0].params().next().unwrap().values(),
            a.params().next().unwrap().values()
        );
    }

    #[test]
    fn truncated_blob_is_detected() {
        let net = sample_net(5);
        let mut bytes = Vec::new();
        write_network(&mut bytes, &net).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(read_network(&mut bytes.as_slice()).is_err());
    }
}
