use serde::{Deserialize, Serialize};

use crate::backbone::vocab;
use crate::error::{Error, Result};

/// Shape of the miniature generation backbone.
///
/// Defaults are sized to be overfittable in seconds while still large enough
/// that prompts measurably steer behavior: char-level vocab of 64, embedding
/// width 32, two encoder and two decoder layers with four heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            vocab_size: 64,
            embed_dim: 32,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 64,
            seed: 1,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.vocab_size < vocab::CONTENT_BASE {
            return Err(Error::invalid(format!(
                "vocab_size {} cannot hold the special tokens",
                self.vocab_size
            )));
        }
        if self.layers == 0 || self.ffn_dim == 0 || self.max_len == 0 {
            return Err(Error::invalid("layers, ffn_dim and max_len must be positive"));
        }
        Ok(())
    }
}
