use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbones::DegenerateOperator;
use crate::error::{Error, Result};
use crate::numerics::Mlp;
use crate::unlearner::{Rectifier, RectifierConfig};

/// JSON form of a trained rectifier. The operator is not stored; it is
/// rebuilt from the backbone checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifierCheckpoint {
    pub version: u32,
    pub mlp1: Mlp,
    pub mlp2: Mlp,
    pub gamma: f64,
    pub beta: f64,
    pub config: RectifierConfig,
}

impl RectifierCheckpoint {
    pub fn from_rectifier(r: &Rectifier) -> Self {
        RectifierCheckpoint {
            version: 1,
            mlp1: r.mlp1.clone(),
            mlp2: r.mlp2.clone(),
            gamma: r.gamma,
            beta: r.beta,
            config: r.config.clone(),
        }
    }

    pub fn into_rectifier(self, op: DegenerateOperator) -> Result<Rectifier> {
        Rectifier::from_parts(self.mlp1, self.mlp2, op, self.gamma, self.beta, self.config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: RectifierCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
        if ckpt.version != 1 {
            return Err(Error::parse(
                path,
                1,
                format!("unsupported version {}", ckpt.version),
            ));
        }
        Ok(ckpt)
    }
}
