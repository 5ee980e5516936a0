use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("{name} = {value} must be a multiple of 8 in [64, 4096]")]
    Dimension { name: &'static str, value: u32 },
    #[error("steps = {0} must be in [1, 200]")]
    Steps(u32),
    #[error("guidance must be finite")]
    Guidance,
}

/// Text-to-image sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 768,
            steps: 30,
            guidance: 7.5,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        for (name, value) in [("width", self.width), ("height", self.height)] {
            if !(64..=4096).contains(&value) || value % 8 != 0 {
                return Err(ParamsError::Dimension { name, value });
            }
        }
        if !(1..=200).contains(&self.steps) {
            return Err(ParamsError::Steps(self.steps));
        }
        if !self.guidance.is_finite() {
            return Err(ParamsError::Guidance);
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}
