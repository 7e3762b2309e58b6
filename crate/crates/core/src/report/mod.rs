//! Run configuration, experiment dispatch, table output and the run manifest.

mod pipeline;
pub mod tables;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{expanded_local_grid, GridSpec, SelectionScore};
use crate::market_data::{parse_date, Date};
use crate::policy::PolicyConfig;
use crate::signals::ScoreSpec;
use crate::synth::SynthParams;

pub use pipeline::run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Attribution,
    Tilt,
    Grid,
    Benchmarks,
    Volmatch,
    Walkforward,
    Post2022,
    Credit,
    Diagnostics,
    All,
}

impl Experiment {
    pub const NAMES: [&'static str; 10] = [
        "attribution",
        "tilt",
        "grid",
        "benchmarks",
        "volmatch",
        "walkforward",
        "post2022",
        "credit",
        "diagnostics",
        "all",
    ];

    pub fn expand(self) -> Vec<Experiment> {
        use Experiment::*;
        match self {
            All => vec![
                Attribution,
                Tilt,
                Grid,
                Benchmarks,
                Volmatch,
                Walkforward,
                Post2022,
                Credit,
                Diagnostics,
            ],
            e => vec![e],
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Experiment::*;
        const ALL: [Experiment; 10] = [
            Attribution,
            Tilt,
            Grid,
            Benchmarks,
            Volmatch,
            Walkforward,
            Post2022,
            Credit,
            Diagnostics,
            All,
        ];
        ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            Error::Usage(format!(
                "unknown experiment `{s}`; expected one of {}",
                Self::NAMES.join("|")
            ))
        })
    }
}

/// `start:end` with ISO dates.
pub fn parse_window(s: &str) -> Result<(Date, Date)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("window `{s}` is not start:end")))?;
    let a = parse_date(a).ok_or_else(|| Error::Usage(format!("bad window start `{a}`")))?;
    let b = parse_date(b).ok_or_else(|| Error::Usage(format!("bad window end `{b}`")))?;
    if b < a {
        return Err(Error::Usage(format!("window `{s}` ends before it starts")));
    }
    Ok((a, b))
}

fn default_seed() -> u64 {
    7
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_cost() -> f64 {
    10.0
}
fn default_tilts() -> Vec<f64> {
    vec![0.2, 0.3, 0.4, 0.5]
}
fn default_costs() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 20.0]
}
fn default_quintile() -> usize {
    21
}
fn default_gate() -> usize {
    63
}
fn default_train() -> usize {
    252
}
fn default_test() -> usize {
    63
}
fn default_rolling() -> Vec<usize> {
    vec![252, 504]
}
fn default_step() -> f64 {
    0.01
}
fn default_top() -> usize {
    5
}

/// Declarative run description; loadable from TOML, every field defaulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_cost")]
    pub cost_bps: f64,
    /// Main policy window `start:end`.
    #[serde(default)]
    pub window: Option<String>,
    #[serde(default)]
    pub attribution_window: Option<String>,
    #[serde(default)]
    pub post_start: Option<String>,
    /// Overrides applied to the selected policy configuration.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub synth: SynthParams,
    #[serde(default)]
    pub selector: SelectionScore,
    #[serde(default = "expanded_local_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_tilts")]
    pub tilts: Vec<f64>,
    #[serde(default = "default_costs")]
    pub costs: Vec<f64>,
    #[serde(default = "default_quintile")]
    pub quintile_horizon: usize,
    #[serde(default = "default_gate")]
    pub gate_horizon: usize,
    #[serde(default = "default_train")]
    pub train_len: usize,
    #[serde(default = "default_test")]
    pub test_len: usize,
    #[serde(default = "default_rolling")]
    pub rolling_windows: Vec<usize>,
    #[serde(default = "default_step")]
    pub static_grid_step: f64,
    #[serde(default = "default_top")]
    pub grid_top_k: usize,
}

fn default_experiment() -> String {
    "all".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::Io(e)
            }
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        for w in [&self.window, &self.attribution_window]
            .into_iter()
            .flatten()
        {
            parse_window(w)?;
        }
        if let Some(p) = &self.post_start {
            parse_date(p).ok_or_else(|| Error::Usage(format!("bad post_start `{p}`")))?;
        }
        if !self.synthetic && self.data_dir.is_none() {
            return Err(Error::Usage(
                "no data directory: pass --data-dir, set STL_DATA_DIR, or use --synthetic".into(),
            ));
        }
        if !(self.cost_bps >= 0.0) {
            return Err(Error::Usage("cost_bps must be >= 0".into()));
        }
        if self.train_len == 0 || self.test_len == 0 {
            return Err(Error::Usage("train_len and test_len must be >= 1".into()));
        }
        self.selected_policy()?.validate()
    }

    /// Best Local configuration at the run cost, with overrides applied.
    pub fn selected_policy(&self) -> Result<PolicyConfig> {
        let mut c = PolicyConfig::best_local().with_cost(self.cost_bps);
        let ScoreSpec::Smooth(mut p) = c.score else {
            unreachable!()
        };
        for (k, v) in &self.overrides {
            match k.as_str() {
                "alpha" => p.alpha = *v,
                "lambda_s" => p.lambda_s = *v,
                "lambda_c" => p.lambda_c = *v,
                "lambda_credit" => p.lambda_credit = *v,
                "lambda_rxcs" => p.lambda_rxcs = *v,
                "max_tilt" => c.max_tilt = *v,
                "tau_w" => c.tau_w = *v,
                "eta" => c.eta = *v,
                "w0" => c.w0 = *v,
                _ => return Err(Error::Config(format!("unknown override `{k}`"))),
            }
        }
        c.score = ScoreSpec::Smooth(p);
        Ok(c)
    }
}

/// Everything needed to re-derive convention-sensitive numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: RunConfig,
    pub data_source: String,
    pub data_checksums: BTreeMap<String, String>,
    pub conventions: BTreeMap<String, String>,
    pub windows: BTreeMap<String, String>,
    pub experiments_run: Vec<String>,
    pub skipped: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_names_roundtrip() {
        for n in Experiment::NAMES {
            assert_eq!(n.parse::<Experiment>().unwrap().name(), n);
        }
        assert!(matches!(
            "bogus".parse::<Experiment>(),
            Err(Error::Usage(_))
        ));
        assert_eq!(Experiment::All.expand().len(), 9);
    }

    #[test]
    fn windows_parse() {
        let (a, b) = parse_window("2017-06-28:2026-05-15").unwrap();
        assert!(a < b);
        assert!(parse_window("2017-06-28").is_err());
        assert!(parse_window("2020-01-01:2019-01-01").is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let mut c = RunConfig::default();
        assert_eq!(c.experiment, "all");
        assert_eq!(c.grid.len(), 432);
        assert!(c.validate().is_err());
        c.synthetic = true;
        c.validate().unwrap();
        c.overrides.insert("max_tilt".into(), 0.2);
        assert_eq!(c.selected_policy().unwrap().max_tilt, 0.2);
        c.overrides.insert("nope".into(), 1.0);
        assert!(matches!(c.selected_policy(), Err(Error::Config(_))));
        let t: RunConfig =
            toml::from_str("experiment = \"tilt\"\nsynthetic = true\nseed = 3\n").unwrap();
        assert_eq!(t.seed, 3);
        assert!(toml::from_str::<RunConfig>("bogus_key = 1").is_err());
    }
}
