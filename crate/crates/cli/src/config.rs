//! Run configuration file.
//!
//! A TOML document with a top-level master `seed` and one table per stage.
//! Every field is required; `marginflat init-config` prints a complete
//! starting point. Module seeds are derived from the master seed by fixed
//! offsets (see [`Seeds`]).

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use marginflat::data::CorpusSpec;
use marginflat::model::{ModelConfig, PretrainSchedule};
use marginflat::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Overrides `paths.output_root` when set.
pub const OUTPUT_ROOT_ENV: &str = "MARGINFLAT_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: CorpusSpec,
    pub model: ModelConfig,
    pub pretrain: PretrainSchedule,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Base directory for relative output paths.
    pub output_root: PathBuf,
}

/// Per-module seeds: `master + offset`, wrapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub pretrain: u64,
    pub oracle: u64,
    pub solver: u64,
}

impl Seeds {
    pub const DATA_OFFSET: u64 = 0;
    pub const PRETRAIN_OFFSET: u64 = 1;
    pub const ORACLE_OFFSET: u64 = 2;
    pub const SOLVER_OFFSET: u64 = 3;

    pub fn from_master(master: u64) -> Self {
        Self {
            data: master.wrapping_add(Self::DATA_OFFSET),
            pretrain: master.wrapping_add(Self::PRETRAIN_OFFSET),
            oracle: master.wrapping_add(Self::ORACLE_OFFSET),
            solver: master.wrapping_add(Self::SOLVER_OFFSET),
        }
    }
}

impl RunConfig {
    pub fn desk_default() -> Self {
        Self {
            seed: 0,
            paths: Paths {
                output_root: PathBuf::from("."),
            },
            data: CorpusSpec::desk_default(),
            model: ModelConfig::desk_default(),
            pretrain: PretrainSchedule {
                steps: 1000,
                learning_rate: 0.5,
                batch_size: 16,
            },
            solver: SolverConfig::desk_default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        let config: Self = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|f| match f {
            Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |msg: String| Err(Failure::Config(msg));
        self.model
            .validate()
            .map_err(|e| Failure::Config(format!("model: {e}")))?;
        self.solver
            .validate()
            .map_err(|e| Failure::Config(format!("solver: {e}")))?;
        if self.data.vocab_size != self.model.vocab_size {
            return bad(format!(
                "data.vocab_size ({}) differs from model.vocab_size ({})",
                self.data.vocab_size, self.model.vocab_size
            ));
        }
        if self.data.context_window != self.model.context_window {
            return bad(format!(
                "data.context_window ({}) differs from model.context_window ({})",
                self.data.context_window, self.model.context_window
            ));
        }
        if self.pretrain.batch_size == 0 {
            return bad("pretrain.batch_size must be positive".into());
        }
        if !(self.pretrain.learning_rate >= 0.0 && self.pretrain.learning_rate.is_finite()) {
            return bad("pretrain.learning_rate must be finite and nonnegative".into());
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    /// Solver configuration with its seed filled in from the master seed.
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seeds().solver,
            ..self.solver.clone()
        }
    }

    /// Output root after applying the environment override.
    pub fn output_root(&self) -> PathBuf {
        match env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.paths.output_root.clone(),
        }
    }

    pub fn resolve_output(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.output_root().join(path)
        }
    }
}
