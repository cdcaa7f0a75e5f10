use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use conflict_core::genc::Intensity;
use conflict_core::learn::Architecture;
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "RICCONF_OUT";
pub const DEFAULT_OUT: &str = "ricconf-out";

/// Experiment settings. Every field can come from a flag or from the
/// `--config` file; values in the file take precedence.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of xApps; a comma-separated list runs a grid.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u32).range(1..))]
    pub m: Option<Vec<u32>>,

    #[arg(long, value_delimiter = ',', value_parser = ["low", "medium", "high"])]
    pub intensity: Option<Vec<String>>,

    /// Simulation length in rows.
    #[arg(long)]
    pub steps: Option<u64>,

    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Training/evaluation seeds (default 1..10).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,

    #[arg(long, value_delimiter = ',', value_parser = ["tabular", "graphmp", "graphmp-smote", "rule"])]
    pub arch: Option<Vec<String>>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// Probability that a generated ICP is shared by two xApps.
    #[arg(long)]
    pub share_prob: Option<f64>,

    /// Output directory (default: $RICCONF_OUT or ./ricconf-out).
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,

    /// Dataset CSV produced by `generate`.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Trained model JSON produced by `train`.
    #[arg(long)]
    pub model: Option<Vec<PathBuf>>,

    /// Built-in scenario name.
    #[arg(long, value_parser = ["es-mro"])]
    pub preset: Option<String>,

    /// Scenario description file (TOML or JSON).
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// OpenCellID CSV for the scenario topology.
    #[arg(long)]
    pub topology: Option<PathBuf>,

    /// Settings file (TOML or JSON) overriding the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $file:ident, $($field:ident),*) => {
        $( if $file.$field.is_some() { $base.$field = $file.$field; } )*
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        parse_by_extension(path, &text)
    }

    /// Applies the `--config` file, if any, on top of the flags.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(path) = self.config.clone() {
            let file = Self::load(&path)?;
            overlay!(
                self, file, m, intensity, steps, sigma, seed, seeds, arch, epochs, share_prob, out, input, model,
                preset, scenario, topology
            );
        }
        if self.ms().contains(&0) {
            bail!("m must be at least 1");
        }
        self.intensities()?;
        self.archs()?;
        Ok(self)
    }

    pub fn ms(&self) -> Vec<usize> {
        self.m.clone().unwrap_or_else(|| vec![5]).into_iter().map(|m| m as usize).collect()
    }

    pub fn ms_or(&self, default: &[usize]) -> Vec<usize> {
        match &self.m {
            Some(m) => m.iter().map(|m| *m as usize).collect(),
            None => default.to_vec(),
        }
    }

    pub fn intensities(&self) -> Result<Vec<Intensity>> {
        self.intensity
            .clone()
            .unwrap_or_else(|| vec!["low".into()])
            .iter()
            .map(|s| s.parse::<Intensity>().map_err(Into::into))
            .collect()
    }

    pub fn intensities_or_all(&self) -> Result<Vec<Intensity>> {
        match self.intensity {
            Some(_) => self.intensities(),
            None => Ok(Intensity::ALL.to_vec()),
        }
    }

    /// Requested methods; `None` stands for the rule engine.
    pub fn archs(&self) -> Result<Vec<Option<Architecture>>> {
        self.arch_names(&["rule", "tabular", "graphmp", "graphmp-smote"])
    }

    pub fn arch_names(&self, default: &[&str]) -> Result<Vec<Option<Architecture>>> {
        let names: Vec<String> = match &self.arch {
            Some(a) => a.clone(),
            None => default.iter().map(|s| s.to_string()).collect(),
        };
        names
            .iter()
            .map(|s| match s.as_str() {
                "rule" => Ok(None),
                other => other.parse::<Architecture>().map(Some).map_err(Into::into),
            })
            .collect()
    }

    pub fn steps(&self, default: u64) -> u64 {
        self.steps.unwrap_or(default)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(conflict_core::genc::DEFAULT_SIGMA)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (1..=10).collect())
    }

    pub fn share_prob(&self) -> f64 {
        self.share_prob.unwrap_or(conflict_core::genc::DEFAULT_SHARE_PROB)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

pub fn parse_by_extension<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(text).with_context(|| format!("parsing {}", path.display())),
        Some("json") => serde_json::from_str(text).with_context(|| format!("parsing {}", path.display())),
        _ => bail!("{}: expected a .toml or .json file", path.display()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "m = [10]\nsteps = 500\nintensity = [\"high\"]\n").unwrap();
        let flags = ExperimentConfig {
            m: Some(vec![5]),
            steps: Some(100),
            seed: Some(9),
            config: Some(path),
            ..Default::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.ms(), vec![10]);
        assert_eq!(cfg.steps(0), 500);
        assert_eq!(cfg.seed(), 9);
        assert_eq!(cfg.intensities().unwrap(), vec![Intensity::High]);
    }

    #[test]
    fn zero_m_in_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"m": [0]}"#).unwrap();
        let cfg = ExperimentConfig {
            config: Some(path),
            ..Default::default()
        };
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_by_extension::<ExperimentConfig>(Path::new("x.toml"), "bogus = 1").is_err());
    }

    #[test]
    fn default_methods() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.archs().unwrap().len(), 4);
        assert_eq!(cfg.seeds(), (1..=10).collect::<Vec<_>>());
    }
}
