use std::path::{Path, PathBuf};

use pdmp_exit::models::{CorrosionModel, Killed, PoissonModel};
use pdmp_exit::quantization::read_grid;
use pdmp_exit::{Error, PdmpModel, QuantizedChain};

use crate::config::{ModelName, RunConfig, SizeSpec};
use crate::error::{CliError, Result};

/// The dynamics whose jump chain is quantized, and the untouched process used
/// for Monte Carlo references. They coincide unless the config asks for the
/// killed process.
pub struct Selected {
    pub quantized: Box<dyn PdmpModel>,
    pub reference: Box<dyn PdmpModel>,
}

impl Selected {
    pub fn from_config(config: &RunConfig) -> Self {
        match config.model {
            ModelName::Poisson => wrap(PoissonModel::new(config.poisson_b), config.killed),
            ModelName::Corrosion => wrap(
                CorrosionModel::with_threshold(config.corrosion_threshold),
                config.killed,
            ),
            ModelName::CorrosionUnprotected => {
                let model = CorrosionModel {
                    threshold: config.corrosion_threshold,
                    ..CorrosionModel::unprotected()
                };
                wrap(model, config.killed)
            }
        }
    }

    /// Reads a grid file and checks that it was trained on the quantized dynamics.
    pub fn load_chain(&self, path: &Path) -> Result<QuantizedChain> {
        let chain = read_grid(path).map_err(|e| match e {
            Error::Io(source) => CliError::io(path, source),
            other => other.into(),
        })?;
        let expected = self.quantized.id();
        if chain.model_id != expected {
            return Err(Error::ModelMismatch {
                expected,
                found: chain.model_id,
            }
            .into());
        }
        Ok(chain)
    }
}

fn wrap<M: PdmpModel + Copy + 'static>(model: M, killed: bool) -> Selected {
    let quantized: Box<dyn PdmpModel> = if killed {
        Box::new(Killed::new(model))
    } else {
        Box::new(model)
    };
    Selected {
        quantized,
        reference: Box::new(model),
    }
}

pub fn grid_path(config: &RunConfig, size: &SizeSpec) -> PathBuf {
    config
        .grids
        .join(format!("{}_{}.grid", config.model.as_str(), size.label()))
}
