//! Checkpoint persistence: a plain-text header (format version, config
//! echo, named tensor shapes) followed by the concatenated tensor data as
//! little-endian 64-bit floats. Round-trips are bitwise.

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{HeadKind, Layer, NetworkConfig, Parameters, Tensor2};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "pointjig-checkpoint";

/// Parameters plus training provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Optimizer steps taken to produce these parameters.
    pub step: u64,
    /// Seed of the run that produced them.
    pub seed: u64,
    pub params: Parameters,
}

impl Checkpoint {
    pub fn new(params: Parameters, step: u64, seed: u64) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            step,
            seed,
            params,
        }
    }
}

fn widths_line(widths: &[usize]) -> String {
    widths
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|w| {
            w.parse()
                .map_err(|_| Error::CorruptCheckpoint(format!("bad width '{w}'")))
        })
        .collect()
}

/// Named tensors in serialization order: per layer, the weight matrix then
/// the bias as a `len x 1` column.
fn tensor_specs(params: &Parameters) -> Vec<(String, usize, usize)> {
    let mut specs = Vec::new();
    let mut push = |prefix: &str, layers: &[Layer]| {
        for (i, layer) in layers.iter().enumerate() {
            specs.push((
                format!("{prefix}{i}.weight"),
                layer.weight.rows(),
                layer.weight.cols(),
            ));
            specs.push((format!("{prefix}{i}.bias"), layer.bias.len(), 1));
        }
    };
    push("enc", &params.encoder);
    push("head", &params.head);
    specs
}

pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let cfg = &p.config;
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("format_version {}\n", ckpt.format_version));
    header.push_str(&format!("step {}\n", ckpt.step));
    header.push_str(&format!("seed {}\n", ckpt.seed));
    header.push_str(&format!(
        "head_kind {}\n",
        match p.head_kind {
            HeadKind::PerPoint => "per_point",
            HeadKind::Global => "global",
        }
    ));
    header.push_str(&format!(
        "encoder_widths {}\n",
        widths_line(&cfg.encoder_widths)
    ));
    header.push_str(&format!("embed_dim {}\n", cfg.embed_dim));
    header.push_str(&format!("head_widths {}\n", widths_line(&cfg.head_widths)));
    header.push_str(&format!("num_point_classes {}\n", cfg.num_point_classes));
    header.push_str(&format!("condition_dim {}\n", cfg.condition_dim));

    let specs = tensor_specs(p);
    header.push_str(&format!("tensor_count {}\n", specs.len()));
    let mut scalars = 0usize;
    for (name, rows, cols) in &specs {
        header.push_str(&format!("tensor {name} {rows} {cols}\n"));
        scalars += rows * cols;
    }
    header.push_str(&format!("data {scalars}\n"));

    let mut bytes = header.into_bytes();
    bytes.reserve(scalars * 8);
    for layer in p.encoder.iter().chain(p.head.iter()) {
        for &v in layer.weight.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &layer.bias {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

struct HeaderReader<'a> {
    rest: &'a [u8],
    consumed: usize,
}

impl<'a> HeaderReader<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let end = self
            .rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::CorruptCheckpoint("header ends prematurely".into()))?;
        let line = std::str::from_utf8(&self.rest[..end])
            .map_err(|_| Error::CorruptCheckpoint("header is not UTF-8".into()))?;
        self.rest = &self.rest[end + 1..];
        self.consumed += end + 1;
        Ok(line)
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' ').or(Some(r).filter(|s| s.is_empty())))
            .ok_or_else(|| Error::CorruptCheckpoint(format!("expected '{key}', found '{line}'")))
    }

    fn field_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| Error::CorruptCheckpoint(format!("bad value '{v}' for {key}")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = HeaderReader {
        rest: bytes,
        consumed: 0,
    };
    let magic = r.line()?;
    if magic != MAGIC {
        return Err(Error::CorruptCheckpoint(format!(
            "bad magic line '{magic}'"
        )));
    }
    let format_version: u32 = r.field_num("format_version")?;
    if format_version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: format_version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let step: u64 = r.field_num("step")?;
    let seed: u64 = r.field_num("seed")?;
    let head_kind = match r.field("head_kind")? {
        "per_point" => HeadKind::PerPoint,
        "global" => HeadKind::Global,
        other => {
            return Err(Error::CorruptCheckpoint(format!(
                "unknown head kind '{other}'"
            )))
        }
    };
    let config = NetworkConfig {
        encoder_widths: parse_widths(r.field("encoder_widths")?)?,
        embed_dim: r.field_num("embed_dim")?,
        head_widths: parse_widths(r.field("head_widths")?)?,
        num_point_classes: r.field_num("num_point_classes")?,
        condition_dim: r.field_num("condition_dim")?,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(format!("invalid config echo: {e}")))?;

    // expected layer shapes from the config echo
    let mut expected: Vec<(String, usize, usize)> = Vec::new();
    {
        let mut in_dim = 3;
        for (i, &w) in config
            .encoder_widths
            .iter()
            .chain(std::iter::once(&config.embed_dim))
            .enumerate()
        {
            expected.push((format!("enc{i}.weight"), w, in_dim));
            expected.push((format!("enc{i}.bias"), w, 1));
            in_dim = w;
        }
        let head_dims: Vec<(usize, usize)> = match head_kind {
            HeadKind::PerPoint => {
                let mut dims = Vec::new();
                let mut in_dim = 2 * config.embed_dim + config.condition_dim;
                for &w in &config.head_widths {
                    dims.push((w, in_dim));
                    in_dim = w;
                }
                dims.push((config.num_point_classes, in_dim));
                dims
            }
            HeadKind::Global => vec![(
                config.num_point_classes,
                config.embed_dim + config.condition_dim,
            )],
        };
        for (i, (out, inp)) in head_dims.into_iter().enumerate() {
            expected.push((format!("head{i}.weight"), out, inp));
            expected.push((format!("head{i}.bias"), out, 1));
        }
    }

    let tensor_count: usize = r.field_num("tensor_count")?;
    if tensor_count != expected.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{tensor_count} tensors listed, config implies {}",
            expected.len()
        )));
    }
    let mut scalars = 0usize;
    for (name, rows, cols) in &expected {
        let line = r.line()?;
        let want = format!("tensor {name} {rows} {cols}");
        if line != want {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor line '{line}' does not match expected '{want}'"
            )));
        }
        scalars += rows * cols;
    }
    let declared: usize = r.field_num("data")?;
    if declared != scalars {
        return Err(Error::CorruptCheckpoint(format!(
            "data length {declared} does not match tensor shapes ({scalars})"
        )));
    }
    let payload = r.rest;
    if payload.len() != scalars * 8 {
        return Err(Error::CorruptCheckpoint(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            scalars * 8
        )));
    }

    let mut offset = 0usize;
    let mut read_f64 = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let chunk: [u8; 8] = payload[offset..offset + 8].try_into().unwrap();
            let v = f64::from_le_bytes(chunk);
            if !v.is_finite() {
                return Err(Error::CorruptCheckpoint(format!(
                    "non-finite value at scalar {}",
                    offset / 8
                )));
            }
            out.push(v);
            offset += 8;
        }
        Ok(out)
    };

    let mut layers: Vec<Layer> = Vec::new();
    for pair in expected.chunks(2) {
        let (_, rows, cols) = &pair[0];
        let weight = Tensor2::from_vec(*rows, *cols, read_f64(rows * cols)?);
        let (_, blen, _) = &pair[1];
        let bias = read_f64(*blen)?;
        layers.push(Layer { weight, bias });
    }
    let encoder_layers = config.encoder_widths.len() + 1;
    let head = layers.split_off(encoder_layers);

    Ok(Checkpoint {
        format_version,
        step,
        seed,
        params: Parameters {
            config,
            head_kind,
            encoder: layers,
            head,
        },
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    super::atomic_write(path, &to_bytes(ckpt))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_parameters;
    use crate::rng::Rng;

    fn sample_checkpoint() -> Checkpoint {
        let cfg = NetworkConfig {
            encoder_widths: vec![6, 5],
            embed_dim: 7,
            head_widths: vec![4],
            num_point_classes: 8,
            condition_dim: 2,
        };
        Checkpoint::new(init_parameters(&cfg, &mut Rng::new(3)), 42, 7)
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let ckpt = sample_checkpoint();
        let bytes = to_bytes(&ckpt);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let bytes = to_bytes(&sample_checkpoint());
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            from_bytes(cut),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn future_version_names_both_versions() {
        let mut bytes = to_bytes(&sample_checkpoint());
        let text = String::from_utf8_lossy(&bytes[..64]).into_owned();
        let patched = text.replace("format_version 1", "format_version 9");
        bytes.splice(..64, patched.into_bytes());
        match from_bytes(&bytes) {
            Err(Error::CheckpointVersion { found, supported }) => {
                assert_eq!(found, 9);
                assert_eq!(supported, 1);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn tampered_shape_is_corrupt() {
        let bytes = to_bytes(&sample_checkpoint());
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let patched = text.replacen("tensor enc0.weight 6 3", "tensor enc0.weight 6 4", 1);
        assert!(matches!(
            from_bytes(patched.as_bytes()),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn global_head_roundtrips() {
        let base = sample_checkpoint();
        let params =
            crate::net::attach_classifier_head(&base.params, 4, &mut Rng::new(9));
        let ckpt = Checkpoint::new(params, 1, 2);
        assert_eq!(from_bytes(&to_bytes(&ckpt)).unwrap(), ckpt);
    }
}
