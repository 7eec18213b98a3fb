//! Trajectory orchestration: time series, continuity reports, dumps and the
//! optional convergence and oracle cross-checks.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::continuity::{purity_rate_check, residual_free, residual_interacting, ContinuityReport};
use crate::error::{Error, Result};
use crate::field::Field2C;
use crate::grid::{Grid, PhysParams};
use crate::propagator::{evolve_with, CrankNicolson, EvolutionSpec, Potential, PotentialKind, SplitStepper};
use crate::purity::{concurrence, dcp, purity_density, purity_from_density, purity_report, schmidt_spectrum, PurityReport};
use crate::scenario::config::ScenarioConfig;
use crate::scenario::output::{write_field_dump, write_json, write_timeseries, TimeSeriesRow};
use crate::scenario::presets::{build_initial_state, build_potential};

/// Final-purity drift allowed between `dt` and `dt/2` runs.
pub const DT_REFINE_TOL: f64 = 1e-6;

/// Steps and tolerance of the dense-oracle cross-check.
pub const ORACLE_STEPS: usize = 10;
pub const ORACLE_TOL: f64 = 1e-6;
pub const ORACLE_MAX_N: usize = 16;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dt_refine: bool,
    pub dense_oracle: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineCheck {
    pub purity_dt: f64,
    pub purity_half_dt: f64,
    pub drift: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub steps: usize,
    pub linf_difference: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub initial_purity: PurityReport,
    pub final_purity: PurityReport,
    pub initial_residual: ContinuityReport,
    pub final_residual: ContinuityReport,
    pub final_time: f64,
    pub steps: usize,
    pub max_norm_drift: f64,
    pub dcp: f64,
    pub dt_refine: Option<RefineCheck>,
    pub dense_oracle: Option<OracleCheck>,
    #[serde(skip)]
    pub rows: Vec<TimeSeriesRow>,
    #[serde(skip)]
    pub dumps: Vec<PathBuf>,
}

/// Grid, parameters, initial state and potential of a config.
pub struct Prepared {
    pub grid: Grid,
    pub phys: PhysParams,
    pub psi0: Field2C,
    pub potential: Potential,
}

pub fn prepare(config: &ScenarioConfig) -> Result<Prepared> {
    let grid = Grid::new(config.grid.n, config.grid.length)?;
    let phys = config.phys;
    let psi0 = build_initial_state(&config.initial_state, grid, phys.hbar)?;
    let potential = build_potential(&config.potential, grid)?;
    Ok(Prepared { grid, phys, psi0, potential })
}

/// Continuity residual of `ψ`: the free form when V = 0, otherwise the
/// interacting form (which coincides with the free one when U ≡ 0).
pub fn continuity_report(psi: &Field2C, v: &Potential, p: &PhysParams) -> Result<ContinuityReport> {
    if v.kind() == PotentialKind::None {
        residual_free(psi, p)
    } else {
        residual_interacting(psi, v, p)
    }
}

fn ensure_resolved(report: &ContinuityReport, when: &str) -> Result<()> {
    if report.resolved() {
        return Ok(());
    }
    Err(Error::Unresolved(format!(
        "continuity residual at {when} is {:.2e} of the reference scale; refine the grid",
        report.relative_max()
    )))
}

pub fn timeseries_row(t: f64, psi: &Field2C, v: &Potential, p: &PhysParams, dt: f64) -> Result<TimeSeriesRow> {
    let pi = crate::purity::purity(psi);
    let spectrum = schmidt_spectrum(psi);
    let total = purity_from_density(&purity_density(psi));
    let rate = purity_rate_check(psi, v, p, dt)?;
    Ok(TimeSeriesRow {
        t,
        purity: pi,
        schmidt_number: spectrum.schmidt_number(),
        concurrence: concurrence(pi)?,
        imag_total: total.im,
        norm: psi.norm(),
        purity_rate_lhs: rate.lhs,
        purity_rate_rhs: rate.rhs,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn run_scenario(config: &ScenarioConfig, options: RunOptions) -> Result<RunSummary> {
    let Prepared { phys, psi0, potential, .. } = prepare(config)?;
    let ev = config.evolution;
    let initial_residual = continuity_report(&psi0, &potential, &phys)?;
    ensure_resolved(&initial_residual, "t = 0")?;
    let initial_purity = purity_report(&psi0)?;

    let dump_every = config.outputs.dump_every;
    let dump_dir = config.outputs.dump_path.clone();
    if let (true, Some(dir)) = (dump_every > 0, &dump_dir) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tick = if dump_every > 0 { gcd(ev.record_every, dump_every) } else { ev.record_every };
    let spec = EvolutionSpec::new(ev.dt, ev.steps, tick.min(ev.steps.max(1)))?;
    let stepper = SplitStepper::new(&potential, &phys, ev.dt)?;

    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    let trajectory = evolve_with(&psi0, &stepper, &spec, |step, t, psi| {
        if step % ev.record_every == 0 {
            rows.push(timeseries_row(t, psi, &potential, &phys, ev.dt)?);
        }
        if let (true, Some(dir)) = (dump_every > 0 && step % dump_every == 0, &dump_dir) {
            let path = dir.join(format!("psi_{step:06}.purf"));
            write_field_dump(psi, &path)?;
            dumps.push(path);
        }
        Ok(())
    })?;
    log::info!("evolved {} steps to t = {}", trajectory.steps_taken, trajectory.final_time);

    let psi_final = &trajectory.final_state;
    let final_residual = continuity_report(psi_final, &potential, &phys)?;
    ensure_resolved(&final_residual, "the final time")?;
    let final_purity = purity_report(psi_final)?;

    let dt_refine = if options.dt_refine {
        Some(refine_check(&psi0, &potential, &phys, ev.dt, ev.steps, final_purity.pi_from_rho)?)
    } else {
        None
    };
    let dense_oracle = if options.dense_oracle { oracle_check(&psi0, &potential, &phys, ev.dt)? } else { None };

    let summary = RunSummary {
        config: config.clone(),
        initial_purity,
        final_purity,
        initial_residual,
        final_residual,
        final_time: trajectory.final_time,
        steps: trajectory.steps_taken,
        max_norm_drift: trajectory.max_norm_drift,
        dcp: dcp(2, 1)?,
        dt_refine,
        dense_oracle,
        rows,
        dumps,
    };
    if let Some(path) = &config.outputs.timeseries_path {
        create_parent(path)?;
        write_timeseries(&summary.rows, path)?;
    }
    if let Some(path) = &config.outputs.report_path {
        create_parent(path)?;
        write_json(&summary, path)?;
    }
    Ok(summary)
}

fn refine_check(psi0: &Field2C, v: &Potential, p: &PhysParams, dt: f64, steps: usize, purity_dt: f64) -> Result<RefineCheck> {
    let half = SplitStepper::new(v, p, dt / 2.0)?;
    let spec = EvolutionSpec::new(dt / 2.0, 2 * steps, (2 * steps).max(1))?;
    let traj = evolve_with(psi0, &half, &spec, |_, _, _| Ok(()))?;
    let purity_half_dt = crate::purity::purity(&traj.final_state);
    let drift = (purity_half_dt - purity_dt).abs();
    let check = RefineCheck { purity_dt, purity_half_dt, drift, tolerance: DT_REFINE_TOL };
    if drift > DT_REFINE_TOL {
        return Err(Error::Convergence(format!(
            "final purity moved by {drift:.2e} when halving dt (tolerance {DT_REFINE_TOL:e})"
        )));
    }
    Ok(check)
}

fn oracle_check(psi0: &Field2C, v: &Potential, p: &PhysParams, dt: f64) -> Result<Option<OracleCheck>> {
    let n = psi0.grid().n();
    if n > ORACLE_MAX_N {
        log::warn!("dense oracle skipped: n = {n} exceeds {ORACLE_MAX_N}");
        return Ok(None);
    }
    let split = SplitStepper::new(v, p, dt)?;
    let cn = CrankNicolson::new(v, p, dt)?;
    let (mut a, mut b) = (psi0.clone(), psi0.clone());
    let mut worst: f64 = 0.0;
    for _ in 0..ORACLE_STEPS {
        a = split.step(&a)?;
        b = cn.step(&b)?;
        worst = worst.max(a.linf_distance(&b)?);
    }
    if worst > ORACLE_TOL {
        return Err(Error::Convergence(format!(
            "split-step and dense reference differ by {worst:.2e} after {ORACLE_STEPS} steps"
        )));
    }
    Ok(Some(OracleCheck { steps: ORACLE_STEPS, linf_difference: worst, tolerance: ORACLE_TOL }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub purity: PurityReport,
    pub residual: ContinuityReport,
    pub relative_residual: f64,
    pub resolved: bool,
    pub edge_ratio: f64,
}

/// Reports at t = 0 without evolving.
pub fn check_scenario(config: &ScenarioConfig) -> Result<CheckSummary> {
    let Prepared { phys, psi0, potential, .. } = prepare(config)?;
    let residual = continuity_report(&psi0, &potential, &phys)?;
    Ok(CheckSummary {
        purity: purity_report(&psi0)?,
        relative_residual: residual.relative_max(),
        resolved: residual.resolved(),
        residual,
        edge_ratio: psi0.edge_ratio(),
    })
}

/// Schmidt weights of the initial state.
pub fn initial_spectrum(config: &ScenarioConfig) -> Result<Vec<f64>> {
    let Prepared { psi0, .. } = prepare(config)?;
    Ok(schmidt_spectrum(&psi0).coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::output::read_timeseries;
    use crate::scenario::presets::Preset;

    #[test]
    fn free_run_keeps_purity() {
        let config = Preset::Product.config(24, 12.0, 200);
        let s = run_scenario(&config, RunOptions::default()).unwrap();
        assert_eq!(s.rows.len(), 21);
        for r in &s.rows {
            assert!((r.purity - 1.0).abs() < 1e-8);
            assert!((r.norm - 1.0).abs() < 1e-9);
        }
        assert!((s.final_time - 0.2).abs() < 1e-12);
        assert_eq!(s.dcp, 2.0);
    }

    #[test]
    fn coupled_run_generates_entanglement() {
        let config = Preset::Coupled.config(24, 12.0, 300);
        let s = run_scenario(&config, RunOptions { dt_refine: true, dense_oracle: false }).unwrap();
        assert!(s.rows.windows(2).take(5).all(|w| w[1].purity < w[0].purity));
        for r in s.rows.iter().skip(1) {
            assert!((r.purity_rate_lhs - r.purity_rate_rhs).abs() <= 1e-4 * r.purity_rate_lhs.abs());
            assert!(r.purity_rate_rhs < 0.0);
        }
        assert!(s.dt_refine.is_some() && s.dense_oracle.is_none());
    }

    #[test]
    fn dense_oracle_on_a_small_grid() {
        // the dense integrator caps n at 16
        let config = Preset::Coupled.config(16, 12.0, 30);
        let s = run_scenario(&config, RunOptions { dt_refine: false, dense_oracle: true }).unwrap();
        assert!(s.dense_oracle.is_some());
        assert!(s.final_residual.resolved());
    }

    #[test]
    fn outputs_and_dumps_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = Preset::SchmidtTwoTerm.config(24, 12.0, 20);
        config.evolution.record_every = 4;
        config.outputs.timeseries_path = Some(dir.path().join("out/ts.csv"));
        config.outputs.report_path = Some(dir.path().join("out/report.json"));
        config.outputs.dump_every = 6;
        config.outputs.dump_path = Some(dir.path().join("dumps"));
        let s = run_scenario(&config, RunOptions::default()).unwrap();
        let rows = read_timeseries(&dir.path().join("out/ts.csv")).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows, s.rows);
        for r in &rows {
            assert!((r.purity - 0.5).abs() < 1e-8);
        }
        let names: Vec<String> =
            s.dumps.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["psi_000000.purf", "psi_000006.purf", "psi_000012.purf", "psi_000018.purf"]);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
        assert_eq!(report["dcp"], 2.0);
        assert_eq!(report["initial_residual"]["mode"], "interacting");
    }

    #[test]
    fn unresolved_grid_aborts() {
        let mut config = Preset::Product.config(8, 12.0, 5);
        config.initial_state = crate::scenario::config::InitialStateSpec::product_gaussian(0.25);
        let err = run_scenario(&config, RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Unresolved(_)), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn check_and_spectrum() {
        let config = Preset::DoubleGaussian.config(32, 16.0, 1);
        let c = check_scenario(&config).unwrap();
        assert!(c.resolved);
        assert!((c.purity.pi_from_rho - 0.8).abs() < 1e-4);
        let lambda = initial_spectrum(&config).unwrap();
        assert!((lambda.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
