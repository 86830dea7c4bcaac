//! Polynomial-regression experiments on simulated data: the score table and
//! the preparatory-training curves.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use bayescv::conjugate::{ConjugateLinearModel, PolynomialSpec, PredictiveRoute};
use bayescv::exact::{decompose_marginal, MAX_DECOMPOSITION_N};
use bayescv::mc::{estimate_ccv_exact_inner, estimate_ccv_sampled, estimate_leave_p_out, repeat_runs, McOptions};
use bayescv::numerics::{binomial, sig6};
use bayescv::seed::{derive_seed, SeedStream};
use bayescv::{ExactPredictiveModel, McEstimate};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

/// Simulated data `yᵢ = θ₀ + θ₁xᵢ + …`, `xᵢ ~ U(x_low, x_high)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// One dataset per master seed, shared by every prior setting and model.
pub fn simulate(config: &ExperimentConfig) -> SimulatedData {
    let mut rng = SeedStream::new(config.seed).rng(0);
    let sd = config.noise_variance.sqrt();
    let x: Vec<f64> = (0..config.n).map(|_| rng.random_range(config.x_low..config.x_high)).collect();
    let y = x
        .iter()
        .map(|&v| {
            let mean: f64 = config.theta.iter().rev().fold(0.0, |acc, &c| acc * v + c);
            let e: f64 = rng.sample(StandardNormal);
            mean + sd * e
        })
        .collect();
    SimulatedData { x, y }
}

fn model_for(config: &ExperimentConfig, data: &SimulatedData, degree: usize, coef_variance: f64) -> Result<ConjugateLinearModel, CliError> {
    let spec = PolynomialSpec {
        degree,
        noise_variance: config.noise_variance,
        intercept_sd: config.intercept_sd,
        coef_variance,
    };
    Ok(ConjugateLinearModel::polynomial(&data.x, &data.y, &spec)?.with_route(PredictiveRoute::SufficientStats))
}

/// Seed for the Monte Carlo estimates at test size `cut`. Shared by all
/// models and prior settings so that their comparisons use common splits.
fn cut_seed(master: u64, cut: usize) -> u64 {
    derive_seed(derive_seed(master, 1), cut as u64)
}

/// `Ŝ_CCV(y; P) · n / P` over `runs` independent runs.
fn normalized_ccv(config: &ExperimentConfig, model: &ConjugateLinearModel, cut: usize) -> Result<McEstimate, CliError> {
    let one = |seed: u64| {
        let opts = McOptions::new(config.splits, seed).with_aggregation(config.aggregation);
        if config.draws == 0 {
            estimate_ccv_exact_inner(model, cut, &opts)
        } else {
            estimate_ccv_sampled(model, cut, config.draws, &opts)
        }
    };
    let seed = cut_seed(config.seed, cut);
    let est = if config.runs >= 2 { repeat_runs(config.runs, seed, one)? } else { one(seed)? };
    Ok(est.scaled(config.n as f64 / cut as f64))
}

#[derive(Clone, Debug, Serialize)]
pub struct CcvCell {
    pub cut: usize,
    pub value: f64,
    pub stderr: Option<f64>,
    pub per_run: Vec<f64>,
    pub degenerate_splits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1Row {
    pub coef_variance: f64,
    pub degree: usize,
    pub log_marginal: f64,
    pub ccv: Vec<CcvCell>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Winner {
    pub coef_variance: f64,
    /// `log_marginal` or `ccv_p<P>`.
    pub score: String,
    pub degree: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1Report {
    pub n: usize,
    pub seed: u64,
    pub x_low: f64,
    pub x_high: f64,
    pub theta: Vec<f64>,
    pub noise_variance: f64,
    pub intercept_sd: f64,
    #[serde(rename = "T")]
    pub splits: usize,
    #[serde(rename = "B")]
    pub draws: usize,
    #[serde(rename = "R")]
    pub runs: usize,
    pub aggregation: String,
    pub cuts: Vec<usize>,
    pub rows: Vec<Table1Row>,
    /// Largest standard error per cut, over all rows.
    pub max_stderr: Vec<Option<f64>>,
    pub winners: Vec<Winner>,
}

impl Table1Report {
    pub fn winner(&self, coef_variance: f64, score: &str) -> Option<usize> {
        self.winners
            .iter()
            .find(|w| w.coef_variance == coef_variance && w.score == score)
            .map(|w| w.degree)
    }
}

fn argmax(values: impl Iterator<Item = (usize, f64)>) -> usize {
    values
        .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((k, v)),
        })
        .map(|(k, _)| k)
        .expect("at least one model")
}

pub fn table1(config: &ExperimentConfig) -> Result<Table1Report, CliError> {
    config.validate()?;
    let data = simulate(config);
    let cuts = config.cuts();
    let all: Vec<usize> = (0..config.n).collect();
    let mut rows = Vec::new();
    for &s2 in &config.coef_variances {
        for &degree in &config.degrees {
            let model = model_for(config, &data, degree, s2)?;
            let log_marginal = model.log_marginal(&all)?;
            let ccv = cuts
                .iter()
                .map(|&cut| {
                    let est = normalized_ccv(config, &model, cut)?;
                    Ok(CcvCell {
                        cut,
                        value: est.value,
                        stderr: est.stderr,
                        per_run: est.per_run,
                        degenerate_splits: est.degenerate_splits,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            rows.push(Table1Row { coef_variance: s2, degree, log_marginal, ccv });
        }
    }
    let max_stderr = (0..cuts.len())
        .map(|k| rows.iter().filter_map(|r| r.ccv[k].stderr).reduce(f64::max))
        .collect();
    let mut winners = Vec::new();
    for &s2 in &config.coef_variances {
        let block: Vec<&Table1Row> = rows.iter().filter(|r| r.coef_variance == s2).collect();
        winners.push(Winner {
            coef_variance: s2,
            score: "log_marginal".into(),
            degree: argmax(block.iter().map(|r| (r.degree, r.log_marginal))),
        });
        for (k, &cut) in cuts.iter().enumerate() {
            winners.push(Winner {
                coef_variance: s2,
                score: format!("ccv_p{cut}"),
                degree: argmax(block.iter().map(|r| (r.degree, r.ccv[k].value))),
            });
        }
    }
    Ok(Table1Report {
        n: config.n,
        seed: config.seed,
        x_low: config.x_low,
        x_high: config.x_high,
        theta: config.theta.clone(),
        noise_variance: config.noise_variance,
        intercept_sd: config.intercept_sd,
        splits: config.splits,
        draws: config.draws,
        runs: config.runs,
        aggregation: config.aggregation.to_string(),
        cuts,
        rows,
        max_stderr,
        winners,
    })
}

/// Writes `table1.csv` (one row per prior and degree, then a `max_stderr`
/// row) and `table1.json`.
pub fn run_table1(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Table1Report, CliError> {
    let report = table1(config)?;
    let mut header = vec!["coef_variance".to_string(), "degree".into(), "log_marginal".into()];
    header.extend(report.cuts.iter().map(|c| format!("ccv_p{c}")));
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![sig6(r.coef_variance), r.degree.to_string(), sig6(r.log_marginal)];
            row.extend(r.ccv.iter().map(|c| sig6(c.value)));
            row
        })
        .collect();
    let mut last = vec!["max_stderr".to_string(), String::new(), String::new()];
    last.extend(report.max_stderr.iter().map(|s| s.map(sig6).unwrap_or_default()));
    rows.push(last);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("table1.csv", &header, &rows)?;
    out.write_json("table1.json", &report)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvePoint {
    pub degree: usize,
    pub p: usize,
    pub n_minus_p: usize,
    pub s_cv: f64,
    pub s_ccv_normalized: f64,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveSummary {
    /// Training size at which the rankings are read.
    pub smallest_train: usize,
    pub largest_train: usize,
    pub half_train: usize,
    /// Best degree by `S_CV` at the smallest and largest training sizes.
    pub best_at_smallest: usize,
    pub best_at_largest: usize,
    /// `S_CV(r=2) − S_CV(r=1)` at half and at the largest training size.
    pub gap_21_at_half: Option<f64>,
    pub gap_21_at_largest: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureReport {
    pub n: usize,
    pub seed: u64,
    pub coef_variance: f64,
    #[serde(rename = "T")]
    pub splits: usize,
    pub points: Vec<CurvePoint>,
    pub summary: CurveSummary,
}

fn training_sizes(config: &ExperimentConfig) -> Vec<usize> {
    if config.figure_points.is_empty() {
        (1..config.n).collect()
    } else {
        let mut m = config.figure_points.clone();
        m.sort_unstable();
        m.dedup();
        m
    }
}

fn curve_points(config: &ExperimentConfig, model: &ConjugateLinearModel, degree: usize) -> Result<Vec<CurvePoint>, CliError> {
    let n = config.n;
    let sizes = training_sizes(config);
    if n <= MAX_DECOMPOSITION_N {
        let d = decompose_marginal(model)?;
        return Ok(sizes
            .iter()
            .map(|&m| {
                let p = n - m;
                CurvePoint {
                    degree,
                    p,
                    n_minus_p: m,
                    s_cv: d.per_p[&p],
                    s_ccv_normalized: d.ccv[&p] * n as f64 / p as f64,
                    exact: true,
                }
            })
            .collect());
    }
    sizes
        .iter()
        .map(|&m| {
            let p = n - m;
            let exact = binomial(n, p) <= config.splits as f64;
            let mut opts = McOptions::new(config.splits, cut_seed(config.seed, p)).with_aggregation(config.aggregation);
            if exact {
                opts = opts.exhaustive();
            }
            let s_cv = estimate_leave_p_out(model, p, &opts)?.value;
            let s_ccv = estimate_ccv_exact_inner(model, p, &opts)?.value;
            Ok(CurvePoint { degree, p, n_minus_p: m, s_cv, s_ccv_normalized: s_ccv * n as f64 / p as f64, exact })
        })
        .collect()
}

fn summarize_curves(config: &ExperimentConfig, points: &[CurvePoint]) -> CurveSummary {
    let sizes = training_sizes(config);
    let smallest = sizes[0];
    let largest = *sizes.last().unwrap();
    let half = *sizes.iter().min_by_key(|&&m| m.abs_diff(config.n / 2)).unwrap();
    let at = |m: usize| points.iter().filter(move |pt| pt.n_minus_p == m);
    let s_cv = |m: usize, degree: usize| at(m).find(|pt| pt.degree == degree).map(|pt| pt.s_cv);
    let gap = |m: usize| Some(s_cv(m, 2)? - s_cv(m, 1)?);
    CurveSummary {
        smallest_train: smallest,
        largest_train: largest,
        half_train: half,
        best_at_smallest: argmax(at(smallest).map(|pt| (pt.degree, pt.s_cv))),
        best_at_largest: argmax(at(largest).map(|pt| (pt.degree, pt.s_cv))),
        gap_21_at_half: gap(half),
        gap_21_at_largest: gap(largest),
    }
}

pub fn figure_prep(config: &ExperimentConfig) -> Result<FigureReport, CliError> {
    config.validate()?;
    let data = simulate(config);
    let mut points = Vec::new();
    for &degree in &config.degrees {
        let model = model_for(config, &data, degree, config.figure_coef_variance)?;
        points.extend(curve_points(config, &model, degree)?);
    }
    let summary = summarize_curves(config, &points);
    Ok(FigureReport { n: config.n, seed: config.seed, coef_variance: config.figure_coef_variance, splits: config.splits, points, summary })
}

/// Writes `figure_prep.csv` in long form (`panel, degree, p, n_minus_p,
/// value, exact`) and `figure_prep.json`.
pub fn run_figure_prep(config: &ExperimentConfig, out: &mut OutputDir) -> Result<FigureReport, CliError> {
    let report = figure_prep(config)?;
    let mut rows = Vec::new();
    for (panel, pick) in [("s_cv", 0), ("s_ccv_normalized", 1)] {
        for pt in &report.points {
            let value = if pick == 0 { pt.s_cv } else { pt.s_ccv_normalized };
            rows.push(vec![
                panel.to_string(),
                pt.degree.to_string(),
                pt.p.to_string(),
                pt.n_minus_p.to_string(),
                sig6(value),
                pt.exact.to_string(),
            ]);
        }
    }
    out.write_csv("figure_prep.csv", &["panel", "degree", "p", "n_minus_p", "value", "exact"], &rows)?;
    out.write_json("figure_prep.json", &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bayescv::exact::leave_p_out_score;

    fn small() -> ExperimentConfig {
        ExperimentConfig { n: 12, splits: 200, runs: 3, cut_fractions: vec![0.5], ..ExperimentConfig::default() }
    }

    #[test]
    fn simulation_is_seeded() {
        let c = small();
        assert_eq!(simulate(&c), simulate(&c));
        let other = simulate(&ExperimentConfig { seed: 2, ..small() });
        assert_ne!(simulate(&c).x, other.x);
        assert!(simulate(&c).x.iter().all(|&v| (-1.0..1.0).contains(&v)));
    }

    #[test]
    fn table_shape_and_winners() {
        let r = table1(&small()).unwrap();
        assert_eq!(r.rows.len(), 9);
        assert!(r.rows.iter().all(|row| row.ccv.len() == 1 && row.ccv[0].stderr.is_some()));
        assert_eq!(r.winners.len(), 6);
        assert_eq!(r.max_stderr.len(), 1);
        let best = r
            .rows
            .iter()
            .filter(|row| row.coef_variance == 1.0)
            .max_by(|a, b| a.log_marginal.total_cmp(&b.log_marginal))
            .unwrap()
            .degree;
        assert_eq!(r.winner(1.0, "log_marginal"), Some(best));
    }

    #[test]
    fn single_run_uses_split_stderr() {
        let r = table1(&ExperimentConfig { runs: 1, coef_variances: vec![1.0], ..small() }).unwrap();
        assert!(r.rows[0].ccv[0].stderr.is_some());
        assert_eq!(r.rows[0].ccv[0].per_run.len(), 1);
    }

    #[test]
    fn exact_curves_for_small_n() {
        let c = small();
        let r = figure_prep(&c).unwrap();
        assert_eq!(r.points.len(), 3 * 11);
        assert!(r.points.iter().all(|p| p.exact));
        let data = simulate(&c);
        let model = model_for(&c, &data, 1, 1.0).unwrap();
        let pt = r.points.iter().find(|p| p.degree == 1 && p.p == 4).unwrap();
        assert!((pt.s_cv - leave_p_out_score(&model, 4).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn enumerated_points_in_larger_curves() {
        let c = ExperimentConfig { n: 30, splits: 50, figure_points: vec![1, 15, 29], ..ExperimentConfig::default() };
        let r = figure_prep(&c).unwrap();
        assert_eq!(r.points.len(), 9);
        let data = simulate(&c);
        let model = model_for(&c, &data, 0, 1.0).unwrap();
        let loo = r.points.iter().find(|p| p.degree == 0 && p.p == 1).unwrap();
        assert!(loo.exact);
        assert!((loo.s_cv - leave_p_out_score(&model, 1).unwrap()).abs() < 1e-10);
        assert!(!r.points.iter().find(|p| p.p == 15).unwrap().exact);
        assert_eq!(r.summary.half_train, 15);
    }
}
