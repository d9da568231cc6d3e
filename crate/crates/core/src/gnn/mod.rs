//! Graph network over document graphs, with hand-written reverse-mode
//! gradients.
//!
//! Three interchangeable layer kinds share one model shell: attention with
//! score networks applied after the node projections (the default),
//! classic single-projection attention, and degree-normalized convolution.
//! Every layer runs multiple heads whose outputs are concatenated and
//! passed through a per-layer output transform; classification reads the
//! document-node row of the last layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod adam;
pub mod checkpoint;
pub mod model;
pub mod tensor;

pub use adam::Adam;
pub use model::{
    cross_entropy, softmax, Adjacency, AdjEntry, ForwardTrace, Gradients, LayerTrace, Model,
    ModelError, SELF_EDGE,
};
pub use tensor::{Mat, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Score network: a . LeakyReLU(W_s h_j + W_t h_i).
    Gatv2,
    /// Static scores: LeakyReLU(a_s . W h_j + a_t . W h_i).
    Gat,
    /// Symmetric degree-normalized convolution, no attention.
    Gcn,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Gatv2 => write!(f, "gatv2"),
            LayerKind::Gat => write!(f, "gat"),
            LayerKind::Gcn => write!(f, "gcn"),
        }
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gatv2" => Ok(LayerKind::Gatv2),
            "gat" => Ok(LayerKind::Gat),
            "gcn" => Ok(LayerKind::Gcn),
            other => Err(format!("unknown layer kind '{other}' (expected gatv2, gat, or gcn)")),
        }
    }
}

/// Model shape. The attention kinds split `hidden_dim` evenly across
/// `heads`; convolution ignores the head count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub classes: usize,
    pub layer_kind: LayerKind,
    pub negative_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 768,
            hidden_dim: 512,
            layers: 4,
            heads: 8,
            classes: 2,
            layer_kind: LayerKind::Gatv2,
            negative_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err("input_dim, hidden_dim, and layers must be positive".to_string());
        }
        if self.classes < 2 {
            return Err("need at least two classes".to_string());
        }
        match self.layer_kind {
            LayerKind::Gatv2 | LayerKind::Gat => {
                if self.heads == 0 {
                    return Err("attention layers need at least one head".to_string());
                }
                if !self.hidden_dim.is_multiple_of(self.heads) {
                    return Err(format!(
                        "hidden_dim {} is not divisible by {} heads",
                        self.hidden_dim, self.heads
                    ));
                }
            }
            LayerKind::Gcn => {}
        }
        if !(self.negative_slope.is_finite() && self.negative_slope >= 0.0) {
            return Err("negative_slope must be finite and non-negative".to_string());
        }
        Ok(())
    }

    /// Per-head width for the attention kinds.
    pub fn head_dim(&self) -> usize {
        match self.layer_kind {
            LayerKind::Gcn => self.hidden_dim,
            _ => self.hidden_dim / self.heads,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.layers, 4);
        assert_eq!(cfg.heads, 8);
        assert_eq!(cfg.hidden_dim, 512);
        assert_eq!(cfg.input_dim, 768);
        assert_eq!(cfg.head_dim(), 64);
        assert!((cfg.negative_slope - 0.2).abs() < 1e-12);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = ModelConfig {
            hidden_dim: 10,
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let gcn = ModelConfig {
            hidden_dim: 10,
            heads: 3,
            layer_kind: LayerKind::Gcn,
            ..ModelConfig::default()
        };
        gcn.validate().unwrap();
    }

    #[test]
    fn layer_kind_text_roundtrip() {
        for kind in [LayerKind::Gatv2, LayerKind::Gat, LayerKind::Gcn] {
            assert_eq!(kind.to_string().parse::<LayerKind>().unwrap(), kind);
        }
        assert!("sage".parse::<LayerKind>().is_err());
    }
}
