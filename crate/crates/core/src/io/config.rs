//! Versioned run configuration, serialized as TOML.
//!
//! Every CLI invocation resolves flags and config-file values into one
//! [`RunConfig`] and writes the result beside its outputs, so any run can be
//! reproduced from its snapshot alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jigsaw::JigsawConfig;
use crate::net::NetworkConfig;
use crate::train::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Settings of the SVM transfer evaluation and few-shot protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub c_reg: f64,
    /// Unit-normalize embeddings before the classifier.
    pub normalize_embeddings: bool,
    pub train_split: String,
    pub test_split: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_frac: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            c_reg: 1.0,
            normalize_embeddings: false,
            train_split: "train".into(),
            test_split: "test".into(),
            labels_n: None,
            labels_frac: None,
        }
    }
}

/// Dataset ingestion settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Points sampled per OFF mesh surface.
    pub points: usize,
    /// Read OFF vertices instead of sampling the surface.
    pub off_vertices: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            points: 1024,
            off_vertices: false,
        }
    }
}

/// Everything a run needs, fully serializable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ckpt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca2d: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Cloud index used by `jigsaw-preview`.
    pub preview_index: usize,
    pub jigsaw: JigsawConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ingest: IngestConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: CONFIG_VERSION,
            command: None,
            data: None,
            out: None,
            ckpt: None,
            log: None,
            pca2d: None,
            split: None,
            preview_index: 0,
            jigsaw: JigsawConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ingest: IngestConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config format_version {} not supported (this build reads {})",
                self.format_version, CONFIG_VERSION
            )));
        }
        self.jigsaw.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        if !(self.eval.c_reg > 0.0) {
            return Err(Error::Config("eval.c_reg must be > 0".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::atomic_write(path, self.to_toml().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::TaskKind;

    #[test]
    fn toml_roundtrip_is_stable() {
        let mut cfg = RunConfig::default();
        cfg.command = Some("pretrain".into());
        cfg.data = Some("synth:sphere+cube,count=10,points=64,seed=3".into());
        cfg.out = Some("model.ckpt".into());
        cfg.jigsaw.k = 2;
        cfg.train.epochs = 7;
        cfg.train.task = TaskKind::Pretrain;
        cfg.eval.labels_n = Some(5);

        let text = cfg.to_toml();
        let parsed = RunConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_toml(), text, "serialize(parse(serialize)) fixed point");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("[jigsaw]\nk = 4\n").unwrap();
        assert_eq!(cfg.jigsaw.k, 4);
        assert_eq!(cfg.jigsaw.rotate_fraction, 0.15);
        assert_eq!(cfg.network.embed_dim, 256);
        assert_eq!(cfg.eval.train_split, "train");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let err = RunConfig::from_toml("format_version = 99\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_nested_values_are_rejected() {
        assert!(RunConfig::from_toml("[jigsaw]\nrotate_fraction = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[train]\nepochs = 0\n").is_err());
    }
}
