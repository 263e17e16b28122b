//! The three classifier architectures of the model matrix.
//!
//! Capacities are strictly ordered with at least a 2x parameter-count gap
//! between neighbors at any supported input size, so "architecture" is a
//! meaningful transfer axis.

use crate::diff::{plan_param_count, LayerSpec, Network};
use crate::error::Result;

/// Architecture size tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ArchId {
    S,
    M,
    L,
}

impl ArchId {
    pub fn all() -> [ArchId; 3] {
        [ArchId::S, ArchId::M, ArchId::L]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchId::S => "S",
            ArchId::M => "M",
            ArchId::L => "L",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ArchId::S => "arch-S",
            ArchId::M => "arch-M",
            ArchId::L => "arch-L",
        }
    }

    /// Layer plan for a `[3, size, size]` input.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let conv = |out_channels: usize| LayerSpec::Conv {
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 0,
        };
        match self {
            ArchId::S => vec![
                conv(8),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 2 },
            ],
            ArchId::M => vec![
                conv(12),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 8 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 2 },
            ],
            ArchId::L => vec![
                conv(16),
                LayerSpec::Relu,
                conv(16),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 16 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 2 },
            ],
        }
    }

    /// Freshly initialized network for the given input size.
    pub fn build(&self, image_size: usize, seed: u64) -> Result<Network<f32>> {
        Network::init([3, image_size, image_size], self.layers(), seed)
    }

    /// Scalar parameter count at the given input size.
    pub fn param_count(&self, image_size: usize) -> Result<usize> {
        plan_param_count([3, image_size, image_size], &self.layers())
    }
}

impl std::str::FromStr for ArchId {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "arch-S" => Ok(ArchId::S),
            "M" | "arch-M" => Ok(ArchId::M),
            "L" | "arch-L" => Ok(ArchId::L),
            other => Err(crate::error::Error::Config(format!(
                "unknown architecture {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for ArchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
