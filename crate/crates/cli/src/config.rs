use std::fs;
use std::path::{Path, PathBuf};

use rankmerge::boost::BETA_GRID;
use rankmerge::merge::alpha_grid;
use rankmerge::{BoostConfig, HogsvdConfig, MergeConfig, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.95, 0.5, 0.3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Also evaluate every α without boosting.
    pub include_unboosted: bool,
    /// Shell command scoring one merged checkpoint; `{checkpoint}` is
    /// replaced by its directory and the last token of stdout is the score.
    pub eval_command: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: alpha_grid(),
            betas: BETA_GRID.to_vec(),
            include_unboosted: true,
            eval_command: None,
        }
    }
}

/// Everything a run depends on. Echoed verbatim into each summary, so a
/// summary file is itself a valid `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub base: Option<PathBuf>,
    pub experts: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub merge: MergeConfig,
    /// Use the HO-GSVD merge instead of `merge.method`.
    pub hogsvd_merge: bool,
    /// `None` disables Subspace Boosting.
    pub boost: Option<BoostConfig>,
    pub hogsvd: HogsvdConfig,
    pub fractions: Vec<f64>,
    pub k: Option<usize>,
    pub exhaustive: bool,
    pub seed: u64,
    pub synth: SyntheticSpec,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base: None,
            experts: Vec::new(),
            out: None,
            merge: MergeConfig::default(),
            hogsvd_merge: false,
            boost: None,
            hogsvd: HogsvdConfig::default(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            k: None,
            exhaustive: false,
            seed: 0,
            synth: SyntheticSpec::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Deserialize)]
struct SummaryEcho {
    config: RunConfig,
}

impl RunConfig {
    /// Reads a config file, or the `config` section of a previous summary.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not JSON: {e}", path.display())))?;
        let parsed = if value.get("command").is_some() && value.get("config").is_some() {
            serde_json::from_value::<SummaryEcho>(value).map(|s| s.config)
        } else {
            serde_json::from_value(value)
        };
        parsed.map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".to_owned()))
    }

    pub fn base_dir(&self) -> Result<&Path, CliError> {
        let base = self
            .base
            .as_deref()
            .ok_or_else(|| CliError::Usage("--base is required".to_owned()))?;
        require_dir(base, "base")?;
        Ok(base)
    }

    pub fn expert_dirs(&self, min: usize) -> Result<&[PathBuf], CliError> {
        if self.experts.len() < min {
            return Err(CliError::Usage(format!(
                "need at least {min} --expert checkpoint(s), got {}",
                self.experts.len()
            )));
        }
        for e in &self.experts {
            require_dir(e, "expert")?;
        }
        Ok(&self.experts)
    }

    /// Rejects parameter values before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: rankmerge::Error| CliError::Usage(e.to_string());
        self.merge.validate().map_err(usage)?;
        self.hogsvd.validate().map_err(usage)?;
        if let Some(b) = &self.boost {
            b.validate().map_err(usage)?;
        }
        if self.fractions.is_empty() {
            return Err(CliError::Usage("at least one energy fraction is needed".to_owned()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(CliError::Usage(format!("energy fraction must lie in (0, 1], got {f}")));
        }
        if self.sweep.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(CliError::Usage("sweep betas must lie in [0, 1)".to_owned()));
        }
        if self.sweep.alphas.iter().any(|a| !a.is_finite()) {
            return Err(CliError::Usage("sweep alphas must be finite".to_owned()));
        }
        Ok(())
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} checkpoint {} does not exist",
            path.display()
        )))
    }
}
