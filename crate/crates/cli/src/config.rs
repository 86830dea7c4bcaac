//! Flat `key = value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bayescv::mc::Aggregation;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Table1,
    FigurePrep,
    IdentitySuite,
    CoherenceSuite,
    Probit,
    Score,
}

impl Experiment {
    const ALL: [(Experiment, &'static str); 6] = [
        (Experiment::Table1, "table1"),
        (Experiment::FigurePrep, "figure_prep"),
        (Experiment::IdentitySuite, "identity_suite"),
        (Experiment::CoherenceSuite, "coherence_suite"),
        (Experiment::Probit, "probit"),
        (Experiment::Score, "score"),
    ];
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Self::ALL.iter().find(|(e, _)| e == self).map(|(_, s)| *s).unwrap();
        f.write_str(name)
    }
}

impl FromStr for Experiment {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .iter()
            .find(|(_, name)| *name == s)
            .map(|(e, _)| *e)
            .ok_or_else(|| CliError::Config(format!("unknown experiment `{s}`")))
    }
}

/// Every setting of every experiment. Settings an experiment does not use
/// are ignored by it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Observations in simulated regression data.
    pub n: usize,
    pub degrees: Vec<usize>,
    pub coef_variances: Vec<f64>,
    /// Test-set sizes as fractions of `n`.
    pub cut_fractions: Vec<f64>,
    /// Monte Carlo splits per run (T).
    pub splits: usize,
    /// Posterior draws per split (B); 0 uses exact inner terms.
    pub draws: usize,
    /// Independent runs (R).
    pub runs: usize,
    pub aggregation: Aggregation,
    pub x_low: f64,
    pub x_high: f64,
    pub theta: Vec<f64>,
    pub noise_variance: f64,
    pub intercept_sd: f64,
    /// Prior coefficient variance for the preparatory-curve experiment.
    pub figure_coef_variance: f64,
    /// Training-set sizes `n − p` to emit; empty means all of `1..n`.
    pub figure_points: Vec<usize>,
    pub instances: usize,
    pub max_n: usize,
    /// Test fixture: perturbs the predictive scorer in the identity suite.
    pub corrupt: bool,
    pub trials: usize,
    pub data: Option<PathBuf>,
    /// Covariate sets of the probit models, e.g. `glu,bp,ped;glu,bp`.
    pub models: Vec<Vec<String>>,
    /// Prior scales `g` as multiples of `n`.
    pub g_multipliers: Vec<f64>,
    pub probit_cut_fraction: f64,
    pub probit_splits: usize,
    pub importance_samples: usize,
    pub gibbs_iterations: usize,
    pub gibbs_burn_in: usize,
    /// Sample size of the synthetic probit data used when `data` is unset.
    pub synthetic_n: usize,
    pub synthetic_seed: u64,
    /// Polynomial degree and prior variance for `score` on the first covariate.
    pub degree: usize,
    pub coef_variance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Table1,
            seed: 1,
            out_dir: PathBuf::from("out"),
            n: 100,
            degrees: vec![0, 1, 2],
            coef_variances: vec![0.1, 1.0, 1e4],
            cut_fractions: vec![0.9, 0.5, 0.1],
            splits: 10_000,
            draws: 0,
            runs: 10,
            aggregation: Aggregation::Mean,
            x_low: -1.0,
            x_high: 1.0,
            theta: vec![1.0, 0.5],
            noise_variance: 1.0,
            intercept_sd: 100.0,
            figure_coef_variance: 1.0,
            figure_points: Vec::new(),
            instances: 50,
            max_n: 10,
            corrupt: false,
            trials: 200,
            data: None,
            models: vec![
                vec!["glu".into(), "bp".into(), "ped".into()],
                vec!["glu".into(), "bp".into()],
            ],
            g_multipliers: vec![1.0, 10.0],
            probit_cut_fraction: 0.9,
            probit_splits: 200,
            importance_samples: 1_000,
            gibbs_iterations: 6_000,
            gibbs_burn_in: 1_000,
            synthetic_n: 332,
            synthetic_seed: 1,
            degree: 1,
            coef_variance: 1.0,
        }
    }
}

fn list<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("cannot parse `{raw}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}` must be true or false, got `{raw}`"))),
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        Self { experiment, ..Self::default() }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let raw = raw.trim();
        match key {
            "experiment" => self.experiment = raw.parse()?,
            "seed" => self.seed = parse_value(key, raw)?,
            "out_dir" => self.out_dir = PathBuf::from(raw),
            "n" => self.n = parse_value(key, raw)?,
            "degrees" => self.degrees = parse_list(key, raw)?,
            "coef_variances" => self.coef_variances = parse_list(key, raw)?,
            "cut_fractions" => self.cut_fractions = parse_list(key, raw)?,
            "splits" => self.splits = parse_value(key, raw)?,
            "draws" => self.draws = parse_value(key, raw)?,
            "runs" => self.runs = parse_value(key, raw)?,
            "aggregation" => self.aggregation = raw.parse().map_err(|e: bayescv::Error| CliError::Config(e.to_string()))?,
            "x_low" => self.x_low = parse_value(key, raw)?,
            "x_high" => self.x_high = parse_value(key, raw)?,
            "theta" => self.theta = parse_list(key, raw)?,
            "noise_variance" => self.noise_variance = parse_value(key, raw)?,
            "intercept_sd" => self.intercept_sd = parse_value(key, raw)?,
            "figure_coef_variance" => self.figure_coef_variance = parse_value(key, raw)?,
            "figure_points" => self.figure_points = parse_list(key, raw)?,
            "instances" => self.instances = parse_value(key, raw)?,
            "max_n" => self.max_n = parse_value(key, raw)?,
            "corrupt" => self.corrupt = parse_bool(key, raw)?,
            "trials" => self.trials = parse_value(key, raw)?,
            "data" => self.data = if raw.is_empty() { None } else { Some(PathBuf::from(raw)) },
            "models" => {
                self.models = raw
                    .split(';')
                    .map(|m| m.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
                    .collect()
            }
            "g_multipliers" => self.g_multipliers = parse_list(key, raw)?,
            "probit_cut_fraction" => self.probit_cut_fraction = parse_value(key, raw)?,
            "probit_splits" => self.probit_splits = parse_value(key, raw)?,
            "importance_samples" => self.importance_samples = parse_value(key, raw)?,
            "gibbs_iterations" => self.gibbs_iterations = parse_value(key, raw)?,
            "gibbs_burn_in" => self.gibbs_burn_in = parse_value(key, raw)?,
            "synthetic_n" => self.synthetic_n = parse_value(key, raw)?,
            "synthetic_seed" => self.synthetic_seed = parse_value(key, raw)?,
            "degree" => self.degree = parse_value(key, raw)?,
            "coef_variance" => self.coef_variance = parse_value(key, raw)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            config.set(key.trim(), value)?;
        }
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// One `key = value` line per setting, in a fixed order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").unwrap();
        };
        put("experiment", self.experiment.to_string());
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("n", self.n.to_string());
        put("degrees", list(&self.degrees));
        put("coef_variances", list(&self.coef_variances));
        put("cut_fractions", list(&self.cut_fractions));
        put("splits", self.splits.to_string());
        put("draws", self.draws.to_string());
        put("runs", self.runs.to_string());
        put("aggregation", self.aggregation.to_string());
        put("x_low", self.x_low.to_string());
        put("x_high", self.x_high.to_string());
        put("theta", list(&self.theta));
        put("noise_variance", self.noise_variance.to_string());
        put("intercept_sd", self.intercept_sd.to_string());
        put("figure_coef_variance", self.figure_coef_variance.to_string());
        put("figure_points", list(&self.figure_points));
        put("instances", self.instances.to_string());
        put("max_n", self.max_n.to_string());
        put("corrupt", self.corrupt.to_string());
        put("trials", self.trials.to_string());
        put("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("models", self.models.iter().map(|m| m.join(",")).collect::<Vec<_>>().join(";"));
        put("g_multipliers", list(&self.g_multipliers));
        put("probit_cut_fraction", self.probit_cut_fraction.to_string());
        put("probit_splits", self.probit_splits.to_string());
        put("importance_samples", self.importance_samples.to_string());
        put("gibbs_iterations", self.gibbs_iterations.to_string());
        put("gibbs_burn_in", self.gibbs_burn_in.to_string());
        put("synthetic_n", self.synthetic_n.to_string());
        put("synthetic_seed", self.synthetic_seed.to_string());
        put("degree", self.degree.to_string());
        put("coef_variance", self.coef_variance.to_string());
        out
    }

    /// Test-set size for a fraction of `n`, rounded, kept in `1..n`.
    pub fn cut_for(n: usize, fraction: f64) -> usize {
        ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }

    pub fn cuts(&self) -> Vec<usize> {
        self.cut_fractions.iter().map(|&f| Self::cut_for(self.n, f)).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for (name, v) in [
            ("n", self.n),
            ("splits", self.splits),
            ("runs", self.runs),
            ("instances", self.instances),
            ("max_n", self.max_n),
            ("trials", self.trials),
            ("probit_splits", self.probit_splits),
            ("importance_samples", self.importance_samples),
            ("synthetic_n", self.synthetic_n),
        ] {
            if v == 0 {
                return bad(format!("`{name}` must be positive"));
            }
        }
        if self.draws == 1 {
            return bad("`draws` must be 0 (exact inner terms) or at least 2".into());
        }
        if self.n < 2 {
            return bad("`n` must be at least 2".into());
        }
        for &f in self.cut_fractions.iter().chain([&self.probit_cut_fraction]) {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("cut fractions must lie in (0, 1), got {f}"));
            }
        }
        if self.cuts().iter().any(|&p| p >= self.n) {
            return bad("every P must be smaller than n".into());
        }
        if self.degrees.is_empty() || self.coef_variances.is_empty() {
            return bad("need at least one degree and one prior variance".into());
        }
        if self.coef_variances.iter().chain([&self.figure_coef_variance, &self.coef_variance]).any(|&v| !(v > 0.0)) {
            return bad("prior variances must be positive".into());
        }
        if !(self.x_low < self.x_high) {
            return bad("`x_low` must be below `x_high`".into());
        }
        if !(self.noise_variance > 0.0) || !(self.intercept_sd > 0.0) {
            return bad("`noise_variance` and `intercept_sd` must be positive".into());
        }
        if self.figure_points.iter().any(|&m| m == 0 || m >= self.n) {
            return bad("`figure_points` must lie in 1..n".into());
        }
        if self.models.len() != 2 || self.models.iter().any(|m| m.is_empty()) {
            return bad("`models` must list two non-empty covariate sets".into());
        }
        if self.g_multipliers.is_empty() || self.g_multipliers.iter().any(|&g| !(g > 0.0)) {
            return bad("`g_multipliers` must be positive".into());
        }
        if self.gibbs_burn_in >= self.gibbs_iterations {
            return bad("`gibbs_burn_in` must be below `gibbs_iterations`".into());
        }
        Ok(())
    }
}
