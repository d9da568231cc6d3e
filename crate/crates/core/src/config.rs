//! Flat `key = value` run configuration files.
//!
//! One assignment per line; `#` starts a comment. Unknown keys are errors
//! so typos surface immediately instead of silently running defaults.

use std::path::Path;

use thiserror::Error;

use crate::gnn::LayerKind;
use crate::trainer::Selection;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected 'key = value', found '{text}'")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value '{value}' for '{key}': {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
}

/// Everything a training or explanation run needs, with defaults matching
/// the reference configuration (4 layers of 8 heads, 512 hidden units,
/// 768-dim inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epochs: usize,
    pub lr: f64,
    pub layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub layer_kind: LayerKind,
    pub seed: u64,
    pub selection: Selection,
    pub split_test_year: i32,
    pub split_val_fraction: f64,
    pub provider_mode: ProviderMode,
    pub provider_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderMode {
    /// Seeded hash-based vectors; no files needed.
    Pseudo,
    /// Read a precomputed embedding archive.
    Archive,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epochs: 20,
            lr: 1e-5,
            layers: 4,
            heads: 8,
            hidden_dim: 512,
            layer_kind: LayerKind::Gatv2,
            seed: 17,
            selection: Selection::ValLoss,
            split_test_year: 2020,
            split_val_fraction: 0.1,
            provider_mode: ProviderMode::Pseudo,
            provider_dim: 768,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    text: stripped.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            let bad = |reason: String| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
                reason,
            };
            match key {
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad(format!("{e}")))?,
                "lr" => {
                    cfg.lr = value.parse().map_err(|e| bad(format!("{e}")))?;
                    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
                        return Err(bad("learning rate must be finite and non-negative".to_string()));
                    }
                }
                "layers" => cfg.layers = value.parse().map_err(|e| bad(format!("{e}")))?,
                "heads" => cfg.heads = value.parse().map_err(|e| bad(format!("{e}")))?,
                "hidden_dim" => cfg.hidden_dim = value.parse().map_err(|e| bad(format!("{e}")))?,
                "layer_kind" => cfg.layer_kind = value.parse().map_err(bad)?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "selection" => cfg.selection = value.parse().map_err(bad)?,
                "split.test_year" => {
                    cfg.split_test_year = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "split.val_fraction" => {
                    cfg.split_val_fraction = value.parse().map_err(|e| bad(format!("{e}")))?;
                    if !(0.0..1.0).contains(&cfg.split_val_fraction) {
                        return Err(bad("validation fraction must be in [0, 1)".to_string()));
                    }
                }
                "provider.mode" => {
                    cfg.provider_mode = match value {
                        "pseudo" => ProviderMode::Pseudo,
                        "archive" => ProviderMode::Archive,
                        _ => return Err(bad("expected 'pseudo' or 'archive'".to_string())),
                    }
                }
                "provider.dim" => {
                    cfg.provider_dim = value.parse().map_err(|e| bad(format!("{e}")))?;
                    if cfg.provider_dim == 0 {
                        return Err(bad("dimension must be positive".to_string()));
                    }
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The canonical text form; `parse` on it recovers the config.
    pub fn render(&self) -> String {
        format!(
            "epochs = {}\nlr = {}\nlayers = {}\nheads = {}\nhidden_dim = {}\nlayer_kind = {}\nseed = {}\nselection = {}\nsplit.test_year = {}\nsplit.val_fraction = {}\nprovider.mode = {}\nprovider.dim = {}\n",
            self.epochs,
            self.lr,
            self.layers,
            self.heads,
            self.hidden_dim,
            self.layer_kind,
            self.seed,
            self.selection,
            self.split_test_year,
            self.split_val_fraction,
            match self.provider_mode {
                ProviderMode::Pseudo => "pseudo",
                ProviderMode::Archive => "archive",
            },
            self.provider_dim,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.layers, 4);
        assert_eq!(cfg.heads, 8);
        assert_eq!(cfg.hidden_dim, 512);
        assert_eq!(cfg.epochs, 20);
        assert!((cfg.lr - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn parses_all_keys() {
        let text = "\
# training
epochs = 10
lr = 0.001
layers = 2
heads = 4
hidden_dim = 64
layer_kind = gcn
seed = 99
selection = val_error
split.test_year = 2019   # held-out year
split.val_fraction = 0.25
provider.mode = archive
provider.dim = 32
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.epochs, 10);
        assert!((cfg.lr - 1e-3).abs() < 1e-12);
        assert_eq!(cfg.layers, 2);
        assert_eq!(cfg.heads, 4);
        assert_eq!(cfg.hidden_dim, 64);
        assert_eq!(cfg.layer_kind, LayerKind::Gcn);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.selection, Selection::ValError);
        assert_eq!(cfg.split_test_year, 2019);
        assert!((cfg.split_val_fraction - 0.25).abs() < 1e-12);
        assert_eq!(cfg.provider_mode, ProviderMode::Archive);
        assert_eq!(cfg.provider_dim, 32);
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let err = RunConfig::parse("epochs = 5\nlayerz = 3\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "layerz");
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_lines_rejected() {
        assert!(matches!(
            RunConfig::parse("epochs\n").unwrap_err(),
            ConfigError::Malformed { line: 1, .. }
        ));
        assert!(matches!(
            RunConfig::parse("epochs = 5\nepochs = 6\n").unwrap_err(),
            ConfigError::DuplicateKey { line: 2, .. }
        ));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(matches!(
            RunConfig::parse("lr = -1\n").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            RunConfig::parse("split.val_fraction = 1.5\n").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            RunConfig::parse("provider.mode = finbert\n").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            RunConfig::parse("provider.dim = 0\n").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            RunConfig::parse("layer_kind = transformer\n").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
    }

    #[test]
    fn render_roundtrip() {
        let cfg = RunConfig {
            epochs: 7,
            layer_kind: LayerKind::Gat,
            selection: Selection::ValError,
            provider_mode: ProviderMode::Archive,
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
    }
}
