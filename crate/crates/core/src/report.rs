//! Experiment report, scenario hashing, CSV series and the plain-text summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    ContinuityReport, ConvergenceReport, DecompositionRun, EnergyReport, PullbackReport,
    RadiusReport, RegularitySplitRun,
};
use crate::error::Result;
use crate::history::{write_trajectory_csv, TrajectoryRow};
use crate::model::{ScenarioConfig, ValidationReport};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Thresholds shared by the CLI summary.
pub mod thresholds {
    pub const ENERGY_RELATIVE: f64 = 1e-6;
    pub const ORDER_BAND: (f64, f64) = (8.0, 32.0);
    pub const RADIUS_SLACK: f64 = 1e-8;
    pub const MONOTONE_SLACK: f64 = 1e-10;
    pub const RESIDUAL: f64 = 1e-6;
    pub const LATE_SLOPE: f64 = 1e-3;
    pub const PULLBACK_FINAL: f64 = 1e-4;
    pub const PULLBACK_WARMUP: usize = 2;
    pub const CONTINUITY_FACTOR: f64 = 3.0;
}

/// SHA-256 of the compact JSON form of the effective configuration.
pub fn scenario_hash(cfg: &ScenarioConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub experiment: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityPair {
    pub perturbations: [f64; 2],
    pub coarse: ContinuityReport,
    pub fine: ContinuityReport,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Experiments {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorption: Option<RadiusReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularity: Option<RegularitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuity: Option<ContinuityPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pullback: Option<PullbackReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub final_time: f64,
    pub final_norm_l2: f64,
    pub final_norm_h1: f64,
    pub max_window_phase_sq: f64,
}

/// Scalar part of a [`DecompositionRun`]; the series go to CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionSummary {
    pub sigma: f64,
    pub v1_max_increase: f64,
    pub v1_window_max_increase: f64,
    pub decay_rate: Option<f64>,
    pub decay_intercept: Option<f64>,
    pub v2_residual: f64,
    pub sigma_sup: f64,
    pub sigma_sup_early: f64,
    pub sigma_sup_final_quarter: f64,
}

impl From<&DecompositionRun> for DecompositionSummary {
    fn from(r: &DecompositionRun) -> Self {
        DecompositionSummary {
            sigma: r.sigma,
            v1_max_increase: r.v1_max_increase,
            v1_window_max_increase: r.v1_window_max_increase,
            decay_rate: r.decay_rate,
            decay_intercept: r.decay_intercept,
            v2_residual: r.v2_residual,
            sigma_sup: r.sigma_sup,
            sigma_sup_early: r.sigma_sup_early,
            sigma_sup_final_quarter: r.sigma_sup_final_quarter,
        }
    }
}

/// Scalar part of a [`RegularitySplitRun`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularitySummary {
    pub smoothing_modes: usize,
    pub r1: f64,
    pub k1: f64,
    pub k2: f64,
    pub k_bar: f64,
    pub twice_k_bar: f64,
    pub sup_u_norm: f64,
    pub split_ratio: f64,
    pub literal_bound_holds: bool,
    pub late_slope: f64,
    pub u2_residual: f64,
    pub consistency_error: f64,
}

impl From<&RegularitySplitRun> for RegularitySummary {
    fn from(r: &RegularitySplitRun) -> Self {
        RegularitySummary {
            smoothing_modes: r.smoothing_modes,
            r1: r.r1,
            k1: r.k1,
            k2: r.k2,
            k_bar: r.k_bar,
            twice_k_bar: 2.0 * r.k_bar,
            sup_u_norm: r.sup_u_norm,
            split_ratio: r.split_ratio,
            literal_bound_holds: r.literal_bound_holds,
            late_slope: r.late_slope,
            u2_residual: r.u2_residual,
            consistency_error: r.consistency_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub forced: bool,
    pub validation: ValidationReport,
    pub experiments: Experiments,
    pub invariants: Vec<InvariantCheck>,
    pub errors: Vec<String>,
    pub complete: bool,
}

impl ExperimentReport {
    pub fn new(
        cfg: &ScenarioConfig,
        validation: ValidationReport,
        seed: u64,
        horizon: f64,
        forced: bool,
    ) -> Result<Self> {
        Ok(ExperimentReport {
            tool: TOOL.into(),
            version: VERSION.into(),
            scenario: cfg.name.clone(),
            scenario_hash: scenario_hash(cfg)?,
            seed,
            dt: cfg.dt(),
            horizon,
            forced,
            validation,
            experiments: Experiments::default(),
            invariants: Vec::new(),
            errors: Vec::new(),
            complete: true,
        })
    }

    pub fn check(&mut self, experiment: &str, name: &str, passed: bool, detail: String) {
        self.invariants.push(InvariantCheck {
            experiment: experiment.into(),
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.complete && self.errors.is_empty() && self.invariants.iter().all(|c| c.passed)
    }

    /// First 12 hex digits, used in file names.
    pub fn short_hash(&self) -> &str {
        &self.scenario_hash[..12]
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.tool, self.version);
        let _ = writeln!(s, "scenario: {} ({})", self.scenario, self.scenario_hash);
        let _ = writeln!(
            s,
            "seed: {}  dt: {}  horizon: {}",
            self.seed, self.dt, self.horizon
        );
        if self.forced {
            let _ = writeln!(s, "note: run forced past a failed validation");
        }
        if let Some(b) = &self.validation.bounds {
            let _ = writeln!(
                s,
                "beta = {}  beta1 = {}  delta = {}  delta_bar = {}  prefactor = {}",
                b.beta,
                b.beta1,
                b.delta,
                b.delta_bar,
                b.prefactor()
            );
        }
        let _ = writeln!(s);
        for c in &self.invariants {
            let _ = writeln!(
                s,
                "[{}] {}: {} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.experiment,
                c.name,
                c.detail
            );
        }
        for e in &self.errors {
            let _ = writeln!(s, "[ERROR] {e}");
        }
        let _ = writeln!(
            s,
            "\noverall: {}{}",
            if self.all_passed() { "PASS" } else { "FAIL" },
            if self.complete { "" } else { " (incomplete)" }
        );
        s
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes a header row and numeric rows.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    let n = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    write_trajectory_csv(rows, BufWriter::new(File::create(path)?))
}

pub fn write_decomposition(path: &Path, run: &DecompositionRun) -> Result<()> {
    write_columns(
        path,
        &["t", "v1_energy", "v1_window_energy", "v2_sigma_window"],
        &[
            &run.times,
            &run.v1_energy,
            &run.v1_window_energy,
            &run.sigma_trace,
        ],
    )
}

pub fn write_regularity(path: &Path, run: &RegularitySplitRun) -> Result<()> {
    write_columns(
        path,
        &["t", "u_regular_window_sq"],
        &[&run.times, &run.u_norm],
    )
}

pub fn write_radius(path: &Path, report: &RadiusReport) -> Result<()> {
    let t: Vec<f64> = report.series.iter().map(|r| r.t).collect();
    let o: Vec<f64> = report.series.iter().map(|r| r.observed).collect();
    let r0: Vec<f64> = report.series.iter().map(|r| r.r0_sq).collect();
    let r: Vec<f64> = report.series.iter().map(|r| r.r_sq).collect();
    write_columns(
        path,
        &["t", "observed", "r0_sq", "r_sq"],
        &[&t, &o, &r0, &r],
    )
}

pub fn write_pullback(path: &Path, report: &PullbackReport) -> Result<()> {
    let n: Vec<f64> = (0..report.to_reference.len()).map(|i| i as f64).collect();
    let tau = &report.taus[..report.to_reference.len()];
    let diam = &report.diameters[..report.to_reference.len()];
    write_columns(
        path,
        &["n", "tau", "semidistance_to_reference", "diameter"],
        &[&n, tau, &report.to_reference, diam],
    )
}

pub fn write_energy(path: &Path, report: &EnergyReport) -> Result<()> {
    let from: Vec<f64> = report.intervals.iter().map(|r| r.from).collect();
    let to: Vec<f64> = report.intervals.iter().map(|r| r.to).collect();
    let abs: Vec<f64> = report.intervals.iter().map(|r| r.absolute).collect();
    let rel: Vec<f64> = report.intervals.iter().map(|r| r.relative).collect();
    write_columns(
        path,
        &["from", "to", "residual", "relative_residual"],
        &[&from, &to, &abs, &rel],
    )
}
