use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use patchdyn_core::analysis::{self, Label};
use patchdyn_core::exec::Executor;
use patchdyn_core::lyapunov::{self, arbitrate};
use patchdyn_core::model::{two_patch_dispersal, validate_spec};
use patchdyn_core::reduce1d::{reduce_2patch, stationary_density};
use patchdyn_core::rng::split_seed;
use patchdyn_core::robustness::{self, PerturbationSpec, Targets};
use patchdyn_core::sde::{simulate_simplex, simulate_x, simulate_ys};
use patchdyn_core::{Matrix, ModelSpec, NoiseSpec, SimConfig};

use crate::config::ConfigDocument;
use crate::error::CliError;
use crate::figure;
use crate::output::{num, CsvTable};
use crate::parallel::Rayon;

pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "patchdyn", version, about = "Stochastic patch dynamics: simulation, growth rates, persistence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoordsArg {
    X,
    Ys,
    Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Timeavg,
    Logslope,
    Closedform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanParam {
    Alpha,
    Rho,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    EvansCorrelation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model and print the validation report as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate one trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "x")]
        coords: CoordsArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the stochastic growth rate r.
    Lyapunov {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "timeavg")]
        method: MethodArg,
        #[arg(long)]
        json: bool,
    },
    /// Persistent, Extinct or Inconclusive from the sign of r.
    Classify {
        #[arg(long)]
        config: PathBuf,
        /// Exit with status 3 when the verdict is Inconclusive.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        json: bool,
    },
    /// r over a parameter grid.
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: ScanParam,
        /// Inclusive grid `LO:HI:STEP`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in parameter sweeps.
    Figure {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Deviation of r under random constant perturbations.
    Robustness {
        #[arg(long)]
        config: PathBuf,
        /// One or more sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Perturbed blocks, any of `a`, `d`, `gamma`.
        #[arg(long, value_delimiter = ',', default_value = "a,d,gamma")]
        targets: Vec<String>,
        /// Also classify each perturbed model at the largest theta.
        #[arg(long)]
        persistence: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synchronization diagnostics for two patches under one noise source.
    Sync {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary density of the two-patch proportion.
    Density {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quadrature, printed expansion and time average side by side (JSON).
    Arbitrate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Validate { config } => validate(&config),
        Command::Simulate { config, coords, out } => {
            let doc = ConfigDocument::load(&config)?;
            simulate(&doc, coords, out.as_deref())?;
            Ok(0)
        }
        Command::Lyapunov { config, method, json: as_json } => {
            let doc = ConfigDocument::load(&config)?;
            let r = match method {
                MethodArg::Timeavg => lyapunov::r_timeavg(&doc.model, &doc.sim)?,
                MethodArg::Logslope => lyapunov::r_logslope(&doc.model, &doc.sim)?,
                MethodArg::Closedform => lyapunov::r_closedform_2patch(&doc.model)?,
            };
            if as_json {
                println!("{}", json(&r));
            } else {
                println!("r = {:.9} ± {:.3e} ({})", r.value, r.stderr, r.method.name());
            }
            Ok(0)
        }
        Command::Classify { config, strict, json: as_json } => {
            let doc = ConfigDocument::load(&config)?;
            let v = analysis::classify_with(&doc.model, &doc.sim, doc.analysis.band)?;
            if as_json {
                println!("{}", json(&v));
            } else {
                println!("{:?} (r = {:.9} ± {:.3e}, band {:.3e})", v.label, v.r_estimate.value, v.r_estimate.stderr, v.band);
            }
            Ok(if strict && v.label == Label::Inconclusive { EXIT_INCONCLUSIVE } else { 0 })
        }
        Command::Scan { config, param, grid, out } => {
            let doc = ConfigDocument::load(&config)?;
            scan(&doc, param, &parse_grid(&grid)?, out.as_deref())?;
            Ok(0)
        }
        Command::Figure { preset: Preset::EvansCorrelation, out, seed } => {
            let cfg = SimConfig::default().with_seed(seed);
            let rows = figure::evans_correlation(&cfg, &Rayon::from_env())?;
            let mut t = CsvTable::create(out.as_deref(), "figure", seed, &["alpha", "rho", "r", "stderr", "method"])?;
            for row in rows {
                t.row([num(row.alpha), num(row.rho), num(row.r.value), num(row.r.stderr), row.r.method.name().into()])?;
            }
            t.finish()?;
            Ok(0)
        }
        Command::Robustness { config, theta, trials, targets, persistence, out } => {
            let doc = ConfigDocument::load(&config)?;
            robustness_cmd(&doc, &theta, trials, &parse_targets(&targets)?, persistence, out.as_deref())?;
            Ok(0)
        }
        Command::Sync { config, out } => {
            let doc = ConfigDocument::load(&config)?;
            sync(&doc, out.as_deref())?;
            Ok(0)
        }
        Command::Density { config, out } => {
            let doc = ConfigDocument::load(&config)?;
            let d = stationary_density(&reduce_2patch(&doc.model)?, None, None)?;
            let mut t = CsvTable::create(out.as_deref(), "density", doc.sim.seed, &["y", "density"])?;
            for (y, p) in d.grid.iter().zip(d.density()) {
                t.row([num(*y), num(p)])?;
            }
            t.finish()?;
            eprintln!("eps {:.3e}, tail mass ≤ {:.3e}, mean {:.9}", d.eps, d.tail_bound, d.mean());
            Ok(0)
        }
        Command::Arbitrate { config } => {
            let doc = ConfigDocument::load(&config)?;
            println!("{}", json(&arbitrate(&doc.model, &doc.sim)?));
            Ok(0)
        }
    }
}

fn validate(config: &Path) -> Result<i32, CliError> {
    let doc = ConfigDocument::load(config)?;
    let report = validate_spec(&doc.model)?;
    println!("{}", json(&report));
    if report.violations.is_empty() {
        Ok(0)
    } else {
        Err(CliError::Invalid(report.violations.join("; ")))
    }
}

fn simulate(doc: &ConfigDocument, coords: CoordsArg, out: Option<&Path>) -> Result<(), CliError> {
    let n = doc.model.n();
    let path = match coords {
        CoordsArg::X => simulate_x(&doc.model, &doc.sim, &doc.analysis.x0(n))?,
        CoordsArg::Ys => simulate_ys(&doc.model, &doc.sim, &doc.analysis.x0(n))?,
        CoordsArg::Simplex => simulate_simplex(&doc.model, &doc.sim, &doc.analysis.y0(n))?,
    };
    let mut header = vec!["t".to_string()];
    let prefix = if coords == CoordsArg::X { "x" } else { "y" };
    header.extend((1..=n).map(|i| format!("{prefix}{i}")));
    if coords == CoordsArg::Ys {
        header.push("s".into());
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::create(out, "simulate", doc.sim.seed, &header)?;
    for i in 0..path.len() {
        t.row(std::iter::once(num(path.times[i])).chain(path.row(i).iter().map(|v| num(*v))))?;
    }
    t.finish()
}

/// `LO:HI:STEP`, inclusive of `HI` up to rounding.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("grid `{s}` is not LO:HI:STEP"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if step.is_nan() || step <= 0.0 || hi < lo || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::Usage(format!("grid `{s}` needs STEP > 0 and LO ≤ HI")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

/// Copy of `spec` with one scan parameter set to `v`.
pub fn apply_param(spec: &ModelSpec, param: ScanParam, v: f64) -> Result<ModelSpec, CliError> {
    let mut out = spec.clone();
    match param {
        ScanParam::Alpha => {
            let (_, beta) = spec.two_patch_rates()?;
            out.dispersal = two_patch_dispersal(v, beta);
        }
        ScanParam::Rho => match &mut out.noise {
            NoiseSpec::SigmaCorrelation { correlation, .. } => {
                let n = correlation.rows();
                for i in 0..n {
                    for j in (0..n).filter(|j| *j != i) {
                        correlation[(i, j)] = v;
                    }
                }
            }
            NoiseSpec::ExplicitGamma { .. } => {
                return Err(CliError::Usage("scanning rho needs a sigma_correlation noise block".into()))
            }
        },
        ScanParam::Sigma => match &mut out.noise {
            NoiseSpec::SigmaCorrelation { sigma, .. } => sigma.iter_mut().for_each(|s| *s = v),
            NoiseSpec::ExplicitGamma { gamma } => {
                let mut g = Matrix::zeros(gamma.rows(), gamma.cols());
                for i in 0..gamma.rows() {
                    let norm = gamma.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                    for j in 0..gamma.cols() {
                        g[(i, j)] = if norm > 0.0 { gamma[(i, j)] * v / norm } else { 0.0 };
                    }
                }
                *gamma = g;
            }
        },
    }
    Ok(out)
}

fn scan(doc: &ConfigDocument, param: ScanParam, grid: &[f64], out: Option<&Path>) -> Result<(), CliError> {
    let specs: Vec<ModelSpec> = grid.iter().map(|v| apply_param(&doc.model, param, *v)).collect::<Result<_, _>>()?;
    let exec = Rayon::from_env();
    let results = exec.map(specs.len(), |k| {
        robustness::estimate_r(&specs[k], &doc.sim.clone().with_seed(split_seed(doc.sim.seed, k as u64)))
    });
    let mut t = CsvTable::create(out, "scan", doc.sim.seed, &["param", "r", "stderr", "method"])?;
    for (v, r) in grid.iter().zip(results) {
        let r = r?;
        t.row([num(*v), num(r.value), num(r.stderr), r.method.name().into()])?;
    }
    t.finish()
}

fn parse_targets(names: &[String]) -> Result<Targets, CliError> {
    let mut t = Targets { a: false, dispersal: false, gamma: false };
    for name in names {
        match name.trim() {
            "a" => t.a = true,
            "d" | "D" | "dispersal" => t.dispersal = true,
            "gamma" | "g" => t.gamma = true,
            other => return Err(CliError::Usage(format!("unknown perturbation target `{other}`"))),
        }
    }
    Ok(t)
}

fn robustness_cmd(
    doc: &ConfigDocument,
    thetas: &[f64],
    trials: usize,
    targets: &Targets,
    persistence: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let exec = Rayon::from_env();
    let p = PerturbationSpec::new(0.0, *targets, doc.sim.seed);
    let rows = robustness::r_continuity_scan(&doc.model, thetas, trials, &p, &doc.sim, &exec)?;
    let mut t = CsvTable::create(out, "robustness", doc.sim.seed, &["theta", "trial", "r_base", "r_pert", "abs_dev"])?;
    for r in &rows {
        t.row([num(r.theta), r.trial.to_string(), num(r.r_base), num(r.r_pert), num(r.abs_dev)])?;
    }
    t.finish()?;
    for s in robustness::summarize_scan(&rows) {
        eprintln!("theta {:.3e}: max |dr| {:.3e}, mean |dr| {:.3e} over {} trials", s.theta, s.max_dev, s.mean_dev, s.trials);
    }
    if persistence {
        let theta = thetas.iter().copied().fold(0.0, f64::max);
        let s = robustness::persistence_under_perturbation(&doc.model, theta, trials, &p, &doc.sim, &exec)?;
        eprintln!(
            "theta {:.3e}: {} persistent, {} extinct, {} inconclusive",
            theta, s.persistent, s.extinct, s.inconclusive
        );
    }
    Ok(())
}

fn sync(doc: &ConfigDocument, out: Option<&Path>) -> Result<(), CliError> {
    let r = analysis::sync_diagnostics(&doc.model, &doc.sim, &doc.analysis.x0(2))?;
    let mut t = CsvTable::create(out, "sync", doc.sim.seed, &["t", "z", "x1", "x2", "u"])?;
    for i in 0..r.times.len() {
        let x = r.x_path.row(i);
        t.row([num(r.times[i]), num(r.z[i]), num(x[0]), num(x[1]), num(r.u_path.row(i)[0])])?;
    }
    t.finish()?;
    eprintln!(
        "|Z(end) - 1| = {:.3e}, X1/U = {:.6}, X2/U = {:.6}",
        r.z_end_gap, r.ratios_to_u[0], r.ratios_to_u[1]
    );
    match (r.log_gap_slope, r.rate_bound) {
        (Some(slope), Some(bound)) => eprintln!("ln|Z - 1| slope {slope:.6}, bound -{bound:.6}"),
        _ if r.exact_sync => eprintln!("started synchronized: Z stays 1"),
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.5:2:0.5").unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("1:1:1").unwrap(), vec![1.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("1:2").is_err());
        assert_eq!(parse_grid("0:1:0.1").unwrap().len(), 11);
    }

    #[test]
    fn sigma_scan_on_single_driver_keeps_rank() {
        let spec = ModelSpec::two_patch_single_driver([3.0, 4.0], 1.0, 1.0, [1.0, 2.0], [1.0, 1.0]);
        let out = apply_param(&spec, ScanParam::Sigma, 3.0).unwrap();
        let g = out.gamma().unwrap();
        assert_eq!(g.cols(), 1);
        assert!((g[(0, 0)] - 3.0).abs() < 1e-15 && (g[(1, 0)] - 3.0).abs() < 1e-15);
    }
}
