//! Monte Carlo campaigns, DoF slope estimation and CSV export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    achievable_dof, dof_region_lp, mat_dof, region_vertices, table2_rows, upper_bound_total, AnalysisError, RegionSpec,
};
use crate::channel::{enumerate_synergistic_patterns, grouped_rows, mix64, ChannelError};
use crate::linalg::logdet_rate;
use crate::scheme::{run_icr, SchemeError, TrialDiagnostics};
use crate::{format_float, format_rational, Rational};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("experiment failed: {0}")]
    Experiment(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for bad input, 3 for anything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Argument(_) | HarnessError::Json(_) => 2,
            HarnessError::Analysis(AnalysisError::Argument(_)) => 2,
            HarnessError::Scheme(SchemeError::Argument(_)) => 2,
            HarnessError::Channel(
                ChannelError::Argument(_) | ChannelError::Parse(_) | ChannelError::Unsupported(_),
            ) => 2,
            _ => 3,
        }
    }
}

pub const DEFAULT_SNR_EXPONENTS: [i32; 5] = [30, 35, 40, 45, 50];
pub const DEFAULT_SLOPE_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "K")]
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Transmit powers `P = 2^e`.
    #[serde(default)]
    pub snr_exponents: Vec<i32>,
    #[serde(default)]
    pub noise: bool,
    #[serde(default)]
    pub output_path: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { k: 3, trials: 1000, seed: 0, snr_exponents: Vec::new(), noise: false, output_path: None }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.k < 2 {
            return Err(HarnessError::Argument(format!("K must be at least 2, got {}", self.k)));
        }
        if self.trials == 0 {
            return Err(HarnessError::Argument("trials must be at least 1".into()));
        }
        if self.snr_exponents.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Argument("SNR exponents must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed of trial `index`; independent of execution order.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed ^ mix64(index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularValueStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeSummary {
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub max_decode_error: f64,
    pub min_singular_value: SingularValueStats,
    pub max_structural_residual: f64,
    pub failures: Vec<TrialFailure>,
}

/// Noiseless decodability campaign over `trials` independent seeds.
pub fn monte_carlo_decode(config: &ExperimentConfig) -> Result<(DecodeSummary, Vec<TrialDiagnostics>), HarnessError> {
    config.validate()?;
    if config.noise {
        return Err(HarnessError::Argument("decodability campaigns run noiseless".into()));
    }
    let results: Vec<(usize, u64, Result<TrialDiagnostics, SchemeError>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            (trial, seed, run_icr(config.k, seed, 1.0, false).map(|run| run.diagnostics))
        })
        .collect();

    let mut diags = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut max_struct: f64 = 0.0;
    let mut svs = Vec::new();
    for (trial, seed, res) in results {
        match res {
            Ok(d) => {
                if let Some(e) = d.decode_max_error {
                    max_err = max_err.max(e);
                }
                max_struct = max_struct.max(d.max_structural_residual);
                svs.extend(d.min_singular_value.iter().copied());
                if !d.decoded || !d.structural_ok {
                    failures.push(TrialFailure {
                        trial,
                        seed,
                        reason: match d.decode_max_error {
                            Some(e) if !d.decoded => format!("decode error {e:e}"),
                            None => "singular decoding system".into(),
                            _ => "structural identity violated".into(),
                        },
                    });
                }
                diags.push(d);
            }
            Err(e) => {
                max_err = f64::INFINITY;
                failures.push(TrialFailure { trial, seed, reason: e.to_string() });
            }
        }
    }
    svs.sort_by(f64::total_cmp);
    let stats = SingularValueStats {
        min: svs.first().copied().unwrap_or(0.0),
        median: svs.get(svs.len() / 2).copied().unwrap_or(0.0),
        max: svs.last().copied().unwrap_or(0.0),
    };
    let successes = config.trials - failures.len();
    let summary = DecodeSummary {
        k: config.k,
        trials: config.trials,
        successes,
        success_rate: successes as f64 / config.trials as f64,
        max_decode_error: max_err,
        min_singular_value: stats,
        max_structural_residual: max_struct,
        failures,
    };
    Ok((summary, diags))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopePoint {
    pub exponent: i32,
    /// Mean over trials of the per-slot sum rate, in bits.
    pub sum_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEstimate {
    #[serde(rename = "K")]
    pub k: usize,
    /// Bits per unit of `log2 P`: the estimated sum DoF.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<SlopePoint>,
}

/// Ordinary least squares `y = slope x + intercept` with `R^2`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Sum-rate slope against `log2 P`. Each point averages, over the trial
/// seeds, the whitened log-det rates of all receivers divided by the
/// `2K - 1` slots. The same seeds are reused at every power.
pub fn dof_slope_estimate(config: &ExperimentConfig) -> Result<SlopeEstimate, HarnessError> {
    config.validate()?;
    if config.snr_exponents.len() < 3 {
        return Err(HarnessError::Argument(format!(
            "slope needs at least 3 SNR points, got {}",
            config.snr_exponents.len()
        )));
    }
    let k = config.k;
    let slots = (2 * k - 1) as f64;
    let mut points = Vec::with_capacity(config.snr_exponents.len());
    for &e in &config.snr_exponents {
        let power = 2f64.powi(e);
        let rates: Vec<Result<f64, HarnessError>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let run = run_icr(k, trial_seed(config.seed, trial), power, config.noise)?;
                let mut total = 0.0;
                for rx in &run.system.receivers {
                    total +=
                        logdet_rate(&rx.normalized_gain(power), &rx.noise_cov, power).map_err(SchemeError::from)?;
                }
                Ok(total / slots)
            })
            .collect();
        let mut sum = 0.0;
        for r in rates {
            sum += r.map_err(|err| HarnessError::Experiment(format!("P = 2^{e}: {err}")))?;
        }
        points.push(SlopePoint { exponent: e, sum_rate: sum / config.trials as f64 });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.exponent as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sum_rate).collect();
    let (slope, intercept, r_squared) = fit_line(&xs, &ys);
    Ok(SlopeEstimate { k, slope, intercept, r_squared, points })
}

pub fn write_slope_csv<W: Write>(est: &SlopeEstimate, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["exponent", "sum_rate", "fitted"])?;
    for p in &est.points {
        w.write_record([
            p.exponent.to_string(),
            format_float(p.sum_rate),
            format_float(est.slope * p.exponent as f64 + est.intercept),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// ICR vs MAT sum DoF against K.
    Fig2,
    /// ICR vs the outer bound at the scheme's fractions and at full CSIT.
    Fig3,
    /// 3-user region vertices and marked points.
    Fig4,
}

impl std::str::FromStr for Figure {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            other => Err(HarnessError::Argument(format!("unknown figure {other:?} (fig2, fig3, fig4)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureParams {
    pub k_max: usize,
    pub gamma: [Rational; 3],
}

impl Default for FigureParams {
    fn default() -> Self {
        Self { k_max: 20, gamma: [Rational::new(2, 5), Rational::new(1, 5), Rational::new(1, 5)] }
    }
}

pub fn write_figure_csv<W: Write>(figure: Figure, params: &FigureParams, out: W) -> Result<(), HarnessError> {
    if params.k_max == 0 {
        return Err(HarnessError::Argument("k_max must be at least 1".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let rs = format_rational;
    match figure {
        Figure::Fig2 => {
            w.write_record(["K", "icr_dof", "mat_dof"])?;
            for k in 1..=params.k_max {
                w.write_record([k.to_string(), rs(&achievable_dof(k)?), rs(&mat_dof(k)?)])?;
            }
        }
        Figure::Fig3 => {
            w.write_record(["K", "achievable", "upper_bound_at_scheme_gammas", "upper_bound_gamma_1"])?;
            for k in 1..=params.k_max {
                let ones = RegionSpec::new(vec![Rational::from_integer(1); k])?;
                w.write_record([
                    k.to_string(),
                    rs(&achievable_dof(k)?),
                    rs(&upper_bound_total(&RegionSpec::icr(k)?)?),
                    rs(&upper_bound_total(&ones)?),
                ])?;
            }
        }
        Figure::Fig4 => {
            w.write_record(["kind", "d1", "d2", "d3"])?;
            for v in region_vertices(&params.gamma)? {
                w.write_record(["vertex".to_string(), rs(&v.d[0]), rs(&v.d[1]), rs(&v.d[2])])?;
            }
            let icr = Rational::new(3, 5);
            w.write_record(["achieved".to_string(), rs(&icr), rs(&icr), rs(&icr)])?;
            let lp = dof_region_lp(&params.gamma)?;
            w.write_record(["lp_optimum".to_string(), rs(&lp.d[0]), rs(&lp.d[1]), rs(&lp.d[2])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one figure's data to `path`.
pub fn export_figure_data(figure: Figure, params: &FigureParams, path: &Path) -> Result<(), HarnessError> {
    let file = BufWriter::new(File::create(path)?);
    write_figure_csv(figure, params, file)
}

pub const TABLE1_GROUPED: &str = "table1_grouped.csv";
pub const TABLE1_PATTERNS: &str = "table1_patterns.csv";
pub const TABLE2: &str = "table2.csv";

/// Writes the synergistic-pattern tables and the CSIT-distribution table into `dir`.
pub fn export_tables(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let patterns = enumerate_synergistic_patterns(3)?;

    let mut w = csv::Writer::from_path(dir.join(TABLE1_GROUPED))?;
    w.write_record(["phase1", "phase2"])?;
    for (a, b) in grouped_rows(&patterns) {
        w.write_record([a, b])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(TABLE1_PATTERNS))?;
    w.write_record(["index", "pattern", "lambda_p", "lambda_d", "lambda_n"])?;
    for (i, p) in patterns.iter().enumerate() {
        let (lp, ld, ln) = p.state_fractions();
        w.write_record([
            (i + 1).to_string(),
            p.to_string(),
            format_rational(&lp),
            format_rational(&ld),
            format_rational(&ln),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(TABLE2))?;
    w.write_record(["gamma1", "gamma2", "gamma3", "d1", "d2", "d3", "scheme"])?;
    for row in table2_rows() {
        let mut rec: Vec<String> = row.gamma.iter().chain(row.achieved.iter()).map(format_rational).collect();
        rec.push(row.scheme.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
