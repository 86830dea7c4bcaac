//! Probit model comparison under two g-prior scales: importance-sampled log
//! marginal likelihoods, cumulative cross-validation and Gibbs posteriors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use bayescv::mc::{repeat_runs, McOptions};
use bayescv::numerics::{pairwise_mean, sample_sd, sig6};
use bayescv::probit::{ccv_probit, gibbs_posterior, write_chain_csv, GPrior, ProbitData, ProbitModel};
use bayescv::seed::{derive_seed, SeedStream};
use bayescv::Dataset;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

pub const SYNTHETIC_COLUMNS: [&str; 3] = ["glu", "bp", "ped"];
/// Intercept followed by the `glu`, `bp` and `ped` effects on the latent scale.
pub const SYNTHETIC_COEFFICIENTS: [f64; 4] = [-0.45, 0.9, 0.15, 0.2];

/// Probit data with standard normal covariates `glu`, `bp`, `ped`.
pub fn synthetic_dataset(n: usize, seed: u64) -> Result<Dataset, CliError> {
    let mut rng = SeedStream::new(seed).rng(0);
    let k = SYNTHETIC_COLUMNS.len();
    let x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n)
        .map(|i| {
            let eta = SYNTHETIC_COEFFICIENTS[0] + (0..k).map(|j| SYNTHETIC_COEFFICIENTS[j + 1] * x[(i, j)]).sum::<f64>();
            let e: f64 = rng.sample(StandardNormal);
            f64::from(eta + e > 0.0)
        })
        .collect();
    Ok(Dataset::with_names(y, Some(x), SYNTHETIC_COLUMNS.iter().map(|s| s.to_string()).collect())?)
}

fn load(config: &ExperimentConfig) -> Result<(Dataset, String), CliError> {
    match &config.data {
        Some(path) => {
            let ds = Dataset::from_csv_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            ds.require_binary().map_err(|e| CliError::Data(e.to_string()))?;
            Ok((ds, path.display().to_string()))
        }
        None => Ok((synthetic_dataset(config.synthetic_n, config.synthetic_seed)?, format!("synthetic(seed={})", config.synthetic_seed))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoreSummary {
    pub value: f64,
    pub stderr: Option<f64>,
    pub per_run: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbitCell {
    pub g_multiplier: f64,
    pub g: f64,
    pub model: Vec<String>,
    pub log_marginal: ScoreSummary,
    /// Smallest effective sample size over the log-marginal runs.
    pub min_ess: f64,
    /// `Ŝ_CCV(y; P) · n / P`.
    pub ccv: ScoreSummary,
    pub degenerate_splits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GibbsSummary {
    pub g_multiplier: f64,
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub draws: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Preference {
    pub g_multiplier: f64,
    /// Index into `models` of the preferred model under each score.
    pub log_marginal: usize,
    pub ccv: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbitReport {
    pub data: String,
    pub n: usize,
    pub seed: u64,
    pub models: Vec<Vec<String>>,
    pub cut: usize,
    #[serde(rename = "T")]
    pub splits: usize,
    #[serde(rename = "S")]
    pub importance_samples: usize,
    #[serde(rename = "R")]
    pub runs: usize,
    pub cells: Vec<ProbitCell>,
    pub max_stderr_log_marginal: Option<f64>,
    pub max_stderr_ccv: Option<f64>,
    pub preferences: Vec<Preference>,
    pub gibbs: Vec<GibbsSummary>,
}

fn runs_summary(values: Vec<f64>) -> ScoreSummary {
    let stderr = sample_sd(&values).map(|sd| sd / (values.len() as f64).sqrt());
    ScoreSummary { value: pairwise_mean(&values), stderr, per_run: values }
}

/// The parameter tracked across prior scales: the last covariate of the
/// first model.
fn tracked_parameter(config: &ExperimentConfig) -> &str {
    config.models[0].last().expect("validated non-empty")
}

/// Runs the study. Returns the report and the Gibbs chains, one per prior
/// scale, for the first model.
pub fn probit(config: &ExperimentConfig) -> Result<(ProbitReport, Vec<bayescv::probit::GibbsChain>), CliError> {
    config.validate()?;
    let (dataset, source) = load(config)?;
    let n = dataset.len();
    let cut = ExperimentConfig::cut_for(n, config.probit_cut_fraction);
    let marginal_seed = derive_seed(config.seed, 1);
    let ccv_seed = derive_seed(config.seed, 2);
    let gibbs_seed = derive_seed(config.seed, 3);
    let datas = config
        .models
        .iter()
        .map(|cols| {
            let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
            ProbitData::from_dataset(&dataset, &cols).map(|(d, _)| d).map_err(|e| CliError::Data(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::new();
    let mut chains = Vec::new();
    let mut gibbs = Vec::new();
    for &mult in &config.g_multipliers {
        let g = mult * n as f64;
        for (k, data) in datas.iter().enumerate() {
            let model = ProbitModel::new(data, GPrior::new(g)?)?;
            let mut lm = Vec::with_capacity(config.runs);
            let mut min_ess = f64::INFINITY;
            for r in 0..config.runs {
                let est = model.is_log_marginal(config.importance_samples, derive_seed(marginal_seed, r as u64))?;
                min_ess = min_ess.min(est.effective_sample_size);
                lm.push(est.value);
            }
            let one = |seed: u64| {
                ccv_probit(&model, cut, config.importance_samples, &McOptions::new(config.probit_splits, seed).with_aggregation(config.aggregation))
            };
            let ccv = if config.runs >= 2 { repeat_runs(config.runs, ccv_seed, one)? } else { one(ccv_seed)? }
                .scaled(n as f64 / cut as f64);
            cells.push(ProbitCell {
                g_multiplier: mult,
                g,
                model: config.models[k].clone(),
                log_marginal: runs_summary(lm),
                min_ess,
                ccv: ScoreSummary { value: ccv.value, stderr: ccv.stderr, per_run: ccv.per_run },
                degenerate_splits: ccv.degenerate_splits,
            });
            if k == 0 {
                let chain = gibbs_posterior(&model, config.gibbs_iterations, config.gibbs_burn_in, gibbs_seed)?;
                let name = tracked_parameter(config);
                let j = chain.index_of(name).expect("parameter of the first model");
                gibbs.push(GibbsSummary { g_multiplier: mult, parameter: name.to_string(), mean: chain.mean(j), sd: chain.sd(j), draws: chain.len() });
                chains.push(chain);
            }
        }
    }
    let preferences = config
        .g_multipliers
        .iter()
        .map(|&mult| {
            let block: Vec<&ProbitCell> = cells.iter().filter(|c| c.g_multiplier == mult).collect();
            let best = |f: &dyn Fn(&ProbitCell) -> f64| {
                (0..block.len()).fold(0, |b, k| if f(block[k]) > f(block[b]) { k } else { b })
            };
            Preference { g_multiplier: mult, log_marginal: best(&|c| c.log_marginal.value), ccv: best(&|c| c.ccv.value) }
        })
        .collect();
    let max_of = |f: &dyn Fn(&ProbitCell) -> Option<f64>| cells.iter().filter_map(f).reduce(f64::max);
    let report = ProbitReport {
        data: source,
        n,
        seed: config.seed,
        models: config.models.clone(),
        cut,
        splits: config.probit_splits,
        importance_samples: config.importance_samples,
        runs: config.runs,
        max_stderr_log_marginal: max_of(&|c| c.log_marginal.stderr),
        max_stderr_ccv: max_of(&|c| c.ccv.stderr),
        cells,
        preferences,
        gibbs,
    };
    Ok((report, chains))
}

/// Writes `probit.csv`, `probit.json` and one `gibbs_g<multiplier>.csv`
/// chain per prior scale.
pub fn run_probit(config: &ExperimentConfig, out: &mut OutputDir) -> Result<ProbitReport, CliError> {
    let (report, chains) = probit(config)?;
    let mut rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| {
            vec![
                sig6(c.g_multiplier),
                sig6(c.g),
                c.model.join("+"),
                sig6(c.log_marginal.value),
                sig6(c.ccv.value),
            ]
        })
        .collect();
    rows.push(vec![
        "max_stderr".into(),
        String::new(),
        String::new(),
        report.max_stderr_log_marginal.map(sig6).unwrap_or_default(),
        report.max_stderr_ccv.map(sig6).unwrap_or_default(),
    ]);
    out.write_csv("probit.csv", &["g_multiplier", "g", "model", "log_marginal", "ccv"], &rows)?;
    out.write_json("probit.json", &report)?;
    for (chain, mult) in chains.iter().zip(&config.g_multipliers) {
        let mut bytes = Vec::new();
        write_chain_csv(chain, &mut bytes)?;
        out.write_bytes(&format!("gibbs_g{mult}.csv"), &bytes)?;
    }
    Ok(report)
}
