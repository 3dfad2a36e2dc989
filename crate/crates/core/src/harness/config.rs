use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KtError, Result};
use crate::model::ModelConfig;

/// One training run. Serialized as a flat JSON object; model fields sit
/// beside the optimizer and data fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset label used in AUC tables.
    pub name: String,
    pub log_path: PathBuf,
    pub qs_path: PathBuf,
    pub output_dir: PathBuf,
    #[serde(flatten)]
    pub model: ModelConfig,
    /// Weight of the reconstruction loss.
    pub lambda: f64,
    pub lr: f64,
    /// Multiplicative per-epoch learning-rate factor.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub split_ratio: f64,
    /// Share of train students held out for early stopping.
    pub validation_fraction: f64,
    pub max_seq_len: usize,
    pub multi_skill_only: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "dataset".into(),
            log_path: PathBuf::from("interactions.csv"),
            qs_path: PathBuf::from("qmatrix.csv"),
            output_dir: PathBuf::from("out"),
            model: ModelConfig::default(),
            lambda: 1.0,
            lr: 0.003,
            lr_decay: 1.0,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            split_ratio: 0.8,
            validation_fraction: 0.1,
            max_seq_len: 200,
            multi_skill_only: false,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative data and output paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => KtError::MissingFile(path.to_path_buf()),
            _ => KtError::io(path, e),
        })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.log_path, &mut cfg.qs_path, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| KtError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(KtError::InvalidArgument(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_seq_len == 0 {
            return bad("batch_size, max_epochs and max_seq_len must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
