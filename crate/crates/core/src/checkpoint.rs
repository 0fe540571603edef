//! Model checkpoints.
//!
//! A checkpoint is a single JSON document:
//!
//! | key           | content                                                  |
//! |---------------|----------------------------------------------------------|
//! | `format`      | always `"dwml-checkpoint"`                               |
//! | `version`     | layout version, currently `1`                            |
//! | `config_hash` | hex SHA-256 of `config`                                  |
//! | `config`      | resolved configuration text the model was trained with   |
//! | `widths`      | layer widths, input first                                |
//! | `params`      | flat parameters; per layer, weights (row-major) then bias|
//! | `adam`        | Adam moments `m`, `v`, `step` and hyperparameters        |
//! | `beta`        | boundary state (`beta0`, per-class and per-example maps) |

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::AdaptiveBeta;
use crate::net::{AdamState, MlpParams};

pub const FORMAT: &str = "dwml-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: String,
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub beta: AdaptiveBeta,
}

pub fn config_hash(config: &str) -> String {
    hex::encode(Sha256::digest(config.as_bytes()))
}

impl Checkpoint {
    pub fn new(net: &MlpParams, beta: &AdaptiveBeta, config: &str) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config_hash: config_hash(config),
            config: config.into(),
            widths: net.widths().to_vec(),
            params: net.params().to_vec(),
            adam: net.adam().clone(),
            beta: beta.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.verify()?;
        Ok(ck)
    }

    fn verify(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.config_hash != config_hash(&self.config) {
            return Err(Error::Checkpoint("config hash does not match embedded config".into()));
        }
        Ok(())
    }

    pub fn into_parts(self) -> Result<(MlpParams, AdaptiveBeta)> {
        let mut net = MlpParams::from_parts(self.widths, self.params)?;
        net.restore_adam(self.adam)?;
        Ok((net, self.beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpParams::new(&[3, 5, 4], &mut rng).unwrap();
        let mut beta = AdaptiveBeta::new(1.2, 0.1);
        beta.beta_class.insert(3, -0.25);
        let ck = Checkpoint::new(&net, &beta, "loss = margin\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let (net2, beta2) = back.into_parts().unwrap();
        assert_eq!(net2, net);
        assert_eq!(beta2, beta);
    }

    #[test]
    fn tampered_config_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpParams::new(&[2, 3], &mut rng).unwrap();
        let mut ck = Checkpoint::new(&net, &AdaptiveBeta::new(1.0, 0.0), "a = 1\n");
        ck.config.push_str("b = 2\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
