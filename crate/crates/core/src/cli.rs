//! Batch front end.
//!
//! Exit codes: 0 success, 1 assumption or invariant failure, 2 usage or
//! parse error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use log::{error, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    check_absorption, continuity_factor, energy_experiment, pullback_experiment, run_decomposition,
    run_regularity_split, self_convergence,
};
use crate::error::{Error, Result};
use crate::history::{window_norms, TrajectoryRow};
use crate::integrator::simulate;
use crate::model::{assess_scenario, random_field, BoundsParameters, Scenario, ScenarioConfig};
use crate::report::{self, thresholds as th, ContinuityPair, ExperimentReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "ncdiff",
    version,
    about = "Galerkin simulator and invariant checks for nonclassical diffusion with delay"
)]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check every structural assumption of a scenario and print the decay constants.
    Validate { path: PathBuf },
    /// Run the selected experiments and write report.json, CSV series and summary.txt.
    Run(RunArgs),
}

#[derive(clap::Args, Debug, Clone)]
pub struct RunArgs {
    pub path: PathBuf,
    /// Comma-separated experiments: simulate, energy, convergence, absorption,
    /// decomposition, regularity, continuity, pullback, all.
    #[arg(long, value_delimiter = ',', default_value = "simulate")]
    pub experiments: Vec<Experiment>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Step override; must divide the delay horizon.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Run length override.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Worker threads for ensembles (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Run even if validation fails.
    #[arg(long)]
    pub force: bool,
    /// Ensemble size of the absorption check.
    #[arg(long, default_value_t = 20)]
    pub members: usize,
    /// Largest pullback level `n` (start times `t* − 2ⁿμ`).
    #[arg(long, default_value_t = 6)]
    pub pullback_levels: usize,
    #[arg(long, default_value_t = 8)]
    pub cloud_size: usize,
    /// Modes kept in the smoothed forcing of the regularity split.
    #[arg(long, default_value_t = 1)]
    pub smoothing_modes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Simulate,
    Energy,
    Convergence,
    Absorption,
    Decomposition,
    Regularity,
    Continuity,
    Pullback,
    All,
}

impl Experiment {
    pub const EACH: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::Energy,
        Experiment::Convergence,
        Experiment::Absorption,
        Experiment::Decomposition,
        Experiment::Regularity,
        Experiment::Continuity,
        Experiment::Pullback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Energy => "energy",
            Experiment::Convergence => "convergence",
            Experiment::Absorption => "absorption",
            Experiment::Decomposition => "decomposition",
            Experiment::Regularity => "regularity",
            Experiment::Continuity => "continuity",
            Experiment::Pullback => "pullback",
            Experiment::All => "all",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::EACH
            .iter()
            .chain([&Experiment::All])
            .find(|e| e.name() == s.trim())
            .copied()
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

/// Expands `all` and removes duplicates, keeping the canonical order.
pub fn resolve_selection(list: &[Experiment]) -> Vec<Experiment> {
    if list.contains(&Experiment::All) {
        return Experiment::EACH.to_vec();
    }
    let mut v = list.to_vec();
    v.sort();
    v.dedup();
    v
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .try_init();
    match cli.command {
        Command::Validate { path } => validate_command(&path),
        Command::Run(args) => run_command(&args),
    }
}

fn load(path: &Path) -> std::result::Result<ScenarioConfig, i32> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: cannot load {}: {e}", path.display());
        EXIT_USAGE
    })
}

fn exit_code_for(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Argument(_)
        | Error::Shape { .. } => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

pub fn print_validation(rep: &crate::model::ValidationReport) {
    println!("scenario: {}", rep.scenario);
    for n in &rep.notices {
        println!("note: {n}");
    }
    for c in &rep.checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.clause,
            c.detail
        );
    }
    if let Some(b) = &rep.bounds {
        print_bounds(b);
    }
}

fn print_bounds(b: &BoundsParameters) {
    println!(
        "bounds: beta = {}  beta1 = {}  delta = {}  delta_bar = {}  C_phi = {}  prefactor = {}",
        b.beta,
        b.beta1,
        b.delta,
        b.delta_bar,
        b.c_phi,
        b.prefactor()
    );
}

pub fn validate_command(path: &Path) -> i32 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rep = match assess_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    print_validation(&rep);
    if rep.passed() {
        println!("result: all assumptions hold");
        EXIT_OK
    } else {
        let clause = rep
            .first_failure()
            .map(|c| c.clause.as_str())
            .unwrap_or("beta1 > 0");
        println!("result: assumption \"{clause}\" fails");
        EXIT_FAILURE
    }
}

pub fn run_command(args: &RunArgs) -> i32 {
    let mut cfg = match load(&args.path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(dt) = args.dt {
        if let Err(e) = cfg.set_step(dt) {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    }
    let horizon = args.horizon.unwrap_or(cfg.integration.horizon);
    if !(horizon >= 0.0) {
        eprintln!("error: horizon must be >= 0");
        return EXIT_USAGE;
    }
    cfg.integration.horizon = horizon;
    if args.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build_global()
        {
            warn!("could not size the worker pool: {e}");
        }
    }
    let validation = match assess_scenario(&cfg) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    if !validation.passed() {
        let clause = validation
            .first_failure()
            .map(|c| c.clause.clone())
            .unwrap_or_default();
        if !args.force {
            print_validation(&validation);
            eprintln!("error: validation failed at \"{clause}\"; use --force to run anyway");
            return EXIT_FAILURE;
        }
        warn!("running despite failed validation clause \"{clause}\"");
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return EXIT_USAGE;
    }
    let mut report = match ExperimentReport::new(&cfg, validation, args.seed, horizon, args.force) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let scn = match Scenario::new(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    for exp in resolve_selection(&args.experiments) {
        info!("running {exp}");
        if let Err(e) = run_one(exp, &scn, args, horizon, &mut report) {
            error!("{exp} failed: {e}");
            report.errors.push(format!("{exp}: {e}"));
            report.complete = false;
        }
    }
    let out = &args.out;
    let written = report.write_json(&out.join("report.json")).and_then(|_| {
        std::fs::write(out.join("summary.txt"), report.summary()).map_err(Error::from)
    });
    if let Err(e) = written {
        eprintln!("error: writing reports: {e}");
        return EXIT_FAILURE;
    }
    print!("{}", report.summary());
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

fn csv_path(args: &RunArgs, report: &ExperimentReport, stem: &str) -> PathBuf {
    args.out.join(format!("{stem}_{}.csv", report.short_hash()))
}

fn run_one(
    exp: Experiment,
    scn: &Scenario,
    args: &RunArgs,
    horizon: f64,
    report: &mut ExperimentReport,
) -> Result<()> {
    let name = exp.name();
    let bounds = report.validation.bounds;
    match exp {
        Experiment::Simulate => {
            let sub = scn.config.integration.subsamples;
            let mut rows = Vec::new();
            let st = simulate(scn, horizon, |v| {
                let w = window_norms(
                    &v.buffers[0],
                    v.t,
                    &scn.basis,
                    &scn.config.epsilon,
                    0.0,
                    sub,
                )?;
                rows.push(TrajectoryRow::new(v.t, &v.states[0], &scn.basis, &w));
                Ok(())
            })?;
            report::write_trajectory(&csv_path(args, report, "trajectory"), &rows)?;
            let monotone = rows.windows(2).all(|w| w[1].t > w[0].t);
            report.check(
                name,
                "time column increasing",
                monotone,
                format!("{} rows", rows.len()),
            );
            let finite = rows.iter().all(|r| r.win_phase_sq.is_finite());
            report.check(
                name,
                "finite norms",
                finite,
                format!("final L2 norm {:.6e}", scn.basis.norm_sobolev(st.u(), 0.0)),
            );
            report.experiments.simulate = Some(report::SimulationSummary {
                steps: st.stats.steps,
                final_time: st.t,
                final_norm_l2: scn.basis.norm_sobolev(st.u(), 0.0),
                final_norm_h1: scn.basis.norm_sobolev(st.u(), 1.0),
                max_window_phase_sq: rows.iter().map(|r| r.win_phase_sq).fold(0.0, f64::max),
            });
        }
        Experiment::Energy => {
            let e = energy_experiment(scn, horizon)?;
            report::write_energy(&csv_path(args, report, "energy"), &e)?;
            report.check(
                name,
                "relative residual per delay interval",
                e.max_relative <= th::ENERGY_RELATIVE,
                format!("max {:.3e} <= {:.0e}", e.max_relative, th::ENERGY_RELATIVE),
            );
            let (lo, hi) = th::ORDER_BAND;
            report.check(
                name,
                "residual ratio under step halving",
                e.refinement_ratio >= lo && e.refinement_ratio <= hi,
                format!("ratio {:.3} in [{lo}, {hi}]", e.refinement_ratio),
            );
            report.experiments.energy = Some(e);
        }
        Experiment::Convergence => {
            let m = scn.config.integration.steps_per_delay;
            let c = self_convergence(scn, horizon.min(10.0 * scn.mu()), &[10, 20], 320.max(m))?;
            let f = c.factors[0];
            let (lo, hi) = th::ORDER_BAND;
            report.check(
                name,
                "self-convergence factor",
                f >= lo && f <= hi,
                format!("factor {f:.3} in [{lo}, {hi}]"),
            );
            report.experiments.convergence = Some(c);
        }
        Experiment::Absorption => {
            let b = bounds.ok_or_else(|| Error::InvalidBounds("no admissible beta".into()))?;
            let r = check_absorption(scn, &b, args.members, horizon, args.seed)?;
            report::write_radius(&csv_path(args, report, "radius"), &r)?;
            report.check(
                name,
                "windowed energy below R0^2(t)",
                r.min_relative_margin_r0 >= -th::RADIUS_SLACK,
                format!(
                    "min relative margin {:.3e}, {} of {} members violate",
                    r.min_relative_margin_r0,
                    r.violations,
                    r.members.len()
                ),
            );
            if b.c_phi > 0.0 {
                let tol = 4.0 * f64::EPSILON * (1.0 + b.beta / (b.beta - b.beta1));
                report.check(
                    name,
                    "prefactor equals 2",
                    (r.prefactor - 2.0).abs() <= tol,
                    format!("prefactor {:.17}", r.prefactor),
                );
            }
            report.experiments.absorption = Some(r);
        }
        Experiment::Decomposition => {
            let d = run_decomposition(scn, horizon)?;
            report::write_decomposition(&csv_path(args, report, "decomposition"), &d)?;
            report.check(
                name,
                "v1 energy nonincreasing",
                d.v1_max_increase <= th::MONOTONE_SLACK,
                format!("largest step increase {:.3e}", d.v1_max_increase),
            );
            report.check(
                name,
                "v1 windowed energy nonincreasing",
                d.v1_window_max_increase <= th::MONOTONE_SLACK,
                format!("largest step increase {:.3e}", d.v1_window_max_increase),
            );
            report.check(
                name,
                "fitted v1 decay rate positive",
                d.decay_rate.is_some_and(|r| r > 0.0),
                format!("rate {:?}", d.decay_rate),
            );
            report.check(
                name,
                "v2 equation residual",
                d.v2_residual <= th::RESIDUAL,
                format!("{:.3e}", d.v2_residual),
            );
            report.check(
                name,
                "sigma trace without late growth",
                d.late_growth() <= 0.0,
                format!(
                    "final-quarter sup {:.6e} vs earlier sup {:.6e}",
                    d.sigma_sup_final_quarter, d.sigma_sup_early
                ),
            );
            report.experiments.decomposition = Some((&d).into());
        }
        Experiment::Regularity => {
            let r = run_regularity_split(scn, horizon, args.smoothing_modes)?;
            report::write_regularity(&csv_path(args, report, "regularity"), &r)?;
            report.check(
                name,
                "no growth trend over the last half",
                r.late_slope <= th::LATE_SLOPE,
                format!("slope {:.3e}", r.late_slope),
            );
            report.check(
                name,
                "K1, K2 finite",
                r.k1.is_finite() && r.k2.is_finite(),
                format!("K1 = {:.6e}, K2 = {:.6e}", r.k1, r.k2),
            );
            report.check(
                name,
                "split inequality with factor 2",
                r.split_ratio <= 1.0,
                format!(
                    "max ratio {:.6}; literal K1 + K2 bound holds: {}",
                    r.split_ratio, r.literal_bound_holds
                ),
            );
            report.check(
                name,
                "u2 equation residual",
                r.u2_residual <= th::RESIDUAL,
                format!("{:.3e}", r.u2_residual),
            );
            report.experiments.regularity = Some((&r).into());
        }
        Experiment::Continuity => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let dir = random_field(&scn.basis, &mut rng, 1.0);
            let scale = (scn.basis.norm_sobolev_sq(&dir, 0.0)
                + scn.config.epsilon.value(scn.config.tau).abs()
                    * scn.basis.norm_sobolev_sq(&dir, 1.0))
            .sqrt();
            let dir = dir.scaled(1.0 / scale);
            let run = |h: f64| {
                continuity_factor(scn, &scn.initial, &scn.initial.perturbed(&dir, h), horizon)
            };
            let (coarse, fine) = (run(1e-3)?, run(1e-6)?);
            let ratio = coarse.c_hat / fine.c_hat;
            let k = th::CONTINUITY_FACTOR;
            report.check(
                name,
                "finite Lipschitz exponent",
                coarse.c_hat.is_finite() && fine.c_hat.is_finite(),
                format!("C = {:.6} (1e-3), {:.6} (1e-6)", coarse.c_hat, fine.c_hat),
            );
            report.check(
                name,
                "consistent across perturbation scales",
                ratio >= 1.0 / k && ratio <= k,
                format!("ratio {ratio:.6}"),
            );
            report.experiments.continuity = Some(ContinuityPair {
                perturbations: [1e-3, 1e-6],
                coarse,
                fine,
                ratio,
            });
        }
        Experiment::Pullback => {
            let p = pullback_experiment(
                scn,
                scn.config.tau,
                args.pullback_levels,
                args.cloud_size,
                args.seed,
                bounds.as_ref(),
                None,
            )?;
            report::write_pullback(&csv_path(args, report, "pullback"), &p)?;
            if let Some(ok) = p.within_envelope() {
                report.check(
                    name,
                    "squared semidistances within the decay envelope",
                    ok,
                    format!("{:?}", p.to_reference),
                );
            }
            report.check(
                name,
                "semidistances nonincreasing after warmup",
                p.nonincreasing_from(th::PULLBACK_WARMUP),
                format!("from n = {}", th::PULLBACK_WARMUP),
            );
            let last = p.final_value().unwrap_or(f64::NAN);
            report.check(
                name,
                "final semidistance",
                last <= th::PULLBACK_FINAL,
                format!("{last:.3e} <= {:.0e}", th::PULLBACK_FINAL),
            );
            if !p.complete {
                report.complete = false;
            }
            report.experiments.pullback = Some(p);
        }
        Experiment::All => unreachable!("expanded by resolve_selection"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_expands_all() {
        assert_eq!(
            resolve_selection(&[Experiment::All]),
            Experiment::EACH.to_vec()
        );
        assert_eq!(
            resolve_selection(&[
                Experiment::Pullback,
                Experiment::Simulate,
                Experiment::Pullback
            ]),
            vec![Experiment::Simulate, Experiment::Pullback]
        );
    }

    #[test]
    fn experiment_names_roundtrip() {
        for e in Experiment::EACH {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("bogus".parse::<Experiment>().is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["ncdiff", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            main_with_args(["ncdiff", "validate", "/nonexistent.json"]),
            EXIT_USAGE
        );
    }
}
