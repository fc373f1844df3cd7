use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use miso_icr::analysis::{
    achievable_dof, closed_form_region, dof_region_lp, mat_dof, region_vertices, tandon_bound, theorem1_distribution,
    upper_bound_total, RegionSpec,
};
use miso_icr::channel::{enumerate_synergistic_patterns, grouped_rows, icr_pattern};
use miso_icr::harness::{
    dof_slope_estimate, export_figure_data, export_tables, monte_carlo_decode, write_slope_csv, ExperimentConfig,
    Figure, FigureParams, HarnessError, DEFAULT_SLOPE_TRIALS, DEFAULT_SNR_EXPONENTS,
};
use miso_icr::{format_float, format_rational, parse_rational, Rational};

#[derive(Parser, Debug)]
#[command(name = "miso-icr", version, about = "ICR scheme simulator and DoF analysis for the K-user MISO BC")]
struct Cli {
    /// Number of users (and transmit antennas).
    #[arg(long = "k", global = true)]
    k: Option<usize>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Base seed; trial seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated exponents e, with P = 2^e.
    #[arg(long = "snr-exp", global = true, value_delimiter = ',')]
    snr_exp: Option<Vec<i32>>,
    /// Output file (or directory for `export tables`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Three perfect-CSIT fractions, e.g. 2/5,1/5,1/5.
    #[arg(long, global = true, value_delimiter = ',')]
    gamma: Option<Vec<String>>,
    /// JSON experiment configuration; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noiseless decodability campaign.
    Simulate,
    /// Sum-rate slope against log2 P.
    Slope,
    /// 3-user DoF region: LP optimum, closed form and vertices.
    Region,
    /// Closed-form DoF values and bounds for one K.
    Bounds {
        /// Transmit antennas for the minimum-CSIT bound (defaults to K).
        #[arg(long)]
        m: Option<usize>,
    },
    /// Synergistic 3-user patterns, or the ICR pattern for --k.
    Patterns,
    /// Figure or table data as CSV.
    Export {
        #[arg(value_enum)]
        what: ExportKind,
        /// Largest K for fig2 and fig3.
        #[arg(long, default_value_t = 20)]
        kmax: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExportKind {
    Fig2,
    Fig3,
    Fig4,
    Tables,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_for(cli: &Cli, trials: usize, snr: &[i32], noise: bool) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig { trials, snr_exponents: snr.to_vec(), noise, ..Default::default() },
    };
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = &cli.snr_exp {
        cfg.snr_exponents = e.clone();
    }
    if let Some(o) = &cli.out {
        cfg.output_path = Some(o.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gamma3(cli: &Cli) -> Result<[Rational; 3], HarnessError> {
    match &cli.gamma {
        None => Ok(FigureParams::default().gamma),
        Some(v) if v.len() == 3 => {
            let mut g = [Rational::from_integer(0); 3];
            for (slot, s) in g.iter_mut().zip(v) {
                *slot = parse_rational(s).map_err(HarnessError::Argument)?;
            }
            Ok(g)
        }
        Some(v) => Err(HarnessError::Argument(format!("--gamma needs 3 values, got {}", v.len()))),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn print_json(v: &serde_json::Value) -> Result<(), HarnessError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match &cli.command {
        Command::Simulate => {
            let cfg = config_for(&cli, 1000, &[], false)?;
            let (summary, diags) = monte_carlo_decode(&cfg)?;
            if let Some(path) = &cfg.output_path {
                let mut w = BufWriter::new(File::create(path)?);
                for d in &diags {
                    serde_json::to_writer(&mut w, d)?;
                    writeln!(w)?;
                }
                w.flush()?;
            }
            print_json(&serde_json::to_value(&summary)?)?;
            if summary.success_rate < 1.0 {
                return Err(HarnessError::Experiment(format!(
                    "{} of {} trials failed",
                    summary.trials - summary.successes,
                    summary.trials
                )));
            }
        }
        Command::Slope => {
            let cfg = config_for(&cli, DEFAULT_SLOPE_TRIALS, &DEFAULT_SNR_EXPONENTS, true)?;
            let est = dof_slope_estimate(&cfg)?;
            if let Some(path) = &cfg.output_path {
                write_slope_csv(&est, BufWriter::new(File::create(path)?))?;
            }
            let expected = achievable_dof(cfg.k)?;
            let mut v = serde_json::to_value(&est)?;
            v["expected"] = json!(format_rational(&expected));
            v["relative_error"] = json!(format_float((est.slope - ratio_f64(&expected)).abs() / ratio_f64(&expected)));
            print_json(&v)?;
        }
        Command::Region => {
            let g = gamma3(&cli)?;
            let lp = dof_region_lp(&g)?;
            let closed = closed_form_region(&g).ok();
            let verts = region_vertices(&g)?;
            let show = |d: &[Rational]| d.iter().map(format_rational).collect::<Vec<_>>();
            print_json(&json!({
                "gamma": show(&g),
                "lp_optimum": show(&lp.d),
                "lp_sum": format_rational(&lp.sum),
                "closed_form": closed.as_ref().map(|c| show(&c.d)),
                "upper_bound_total": format_rational(&upper_bound_total(&RegionSpec::new(g.to_vec())?)?),
                "vertices": verts.iter().map(|v| show(&v.d)).collect::<Vec<_>>(),
            }))?;
            if let Some(path) = &cli.out {
                let mut w = csv::Writer::from_writer(sink(Some(path))?);
                w.write_record(["d1", "d2", "d3", "sum"])?;
                for v in &verts {
                    let mut rec = show(&v.d);
                    rec.push(format_rational(&v.sum));
                    w.write_record(rec)?;
                }
                w.flush()?;
            }
        }
        Command::Bounds { m } => {
            let k = cli.k.unwrap_or(3);
            let m = m.unwrap_or(k);
            let mut v = json!({
                "K": k,
                "M": m,
                "achievable_dof": format_rational(&achievable_dof(k)?),
                "mat_dof": format_rational(&mat_dof(k)?),
                "tandon_bound": format_rational(&tandon_bound(m, k)?),
                "upper_bound_at_scheme_gammas": format_rational(&upper_bound_total(&RegionSpec::icr(k)?)?),
            });
            if k >= 2 {
                let (p, d, n) = theorem1_distribution(k)?;
                v["distribution"] = json!([format_rational(&p), format_rational(&d), format_rational(&n)]);
            }
            print_json(&v)?;
        }
        Command::Patterns => {
            let mut w = csv::Writer::from_writer(sink(cli.out.as_deref())?);
            match cli.k {
                Some(k) if k != 3 => {
                    let p = icr_pattern(k)?;
                    let (lp, ld, ln) = p.state_fractions();
                    w.write_record(["pattern", "lambda_p", "lambda_d", "lambda_n"])?;
                    w.write_record([p.to_string(), format_rational(&lp), format_rational(&ld), format_rational(&ln)])?;
                }
                _ => {
                    let all = enumerate_synergistic_patterns(3)?;
                    w.write_record(["index", "pattern", "phase1", "phase2", "grouped"])?;
                    let grouped = grouped_rows(&all);
                    for (i, p) in all.iter().enumerate() {
                        let (a, b) = p.split_phases().expect("ICR patterns have 2K-1 slots");
                        let is_row = grouped.contains(&(a.clone(), b.clone()));
                        w.write_record([(i + 1).to_string(), p.to_string(), a, b, is_row.to_string()])?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Export { what, kmax } => {
            let params = FigureParams { k_max: *kmax, gamma: gamma3(&cli)? };
            let figure = match what {
                ExportKind::Fig2 => Some(Figure::Fig2),
                ExportKind::Fig3 => Some(Figure::Fig3),
                ExportKind::Fig4 => Some(Figure::Fig4),
                ExportKind::Tables => None,
            };
            let out = cli.out.clone().ok_or_else(|| HarnessError::Argument("export needs --out".into()))?;
            match figure {
                Some(f) => export_figure_data(f, &params, &out)?,
                None => export_tables(&out)?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ratio_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
