//! Experiment plans: run every sweep point, write artifacts and a summary.

use crate::config::{ExperimentPlan, PlanKind};
use crate::error::{HarnessError, Result};
use crate::experiments::{self, EquilibriumReport, SweepPoint};
use crate::fit::{fit_rates, FitResult};
use crate::io::{self, num, Table};
use crate::plot::{emit_plot_data, PlotSeries};
use hypac_core::profile::ProfileSolver;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub value: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub kind: PlanKind,
    pub config_hash: String,
    /// Sweep values that completed.
    pub points: Vec<f64>,
    pub checks: Vec<Check>,
    pub failures: Vec<PointFailure>,
    pub passed: bool,
    /// Kind-specific results.
    pub details: serde_json::Value,
}

/// Hash of the plan without its output directory, so relocated runs share it.
pub fn plan_hash(plan: &ExperimentPlan) -> String {
    let mut p = plan.clone();
    p.output_dir = Default::default();
    io::config_hash(&p)
}

fn eps_tag(v: f64) -> String {
    format!("{v}")
}

/// Validates and runs `plan`, writing artifacts under `plan.output_dir` and `summary.json`.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Summary> {
    plan.validate()?;
    let dir = plan.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let hash = plan_hash(plan);
    let mut summary = Summary {
        schema_version: SCHEMA_VERSION,
        kind: plan.kind,
        config_hash: hash.clone(),
        points: Vec::new(),
        checks: Vec::new(),
        failures: Vec::new(),
        passed: false,
        details: serde_json::Value::Null,
    };
    match plan.kind {
        PlanKind::SingleSim => single_sim(plan, dir, &hash, &mut summary)?,
        PlanKind::EpsilonSweep => epsilon_sweep(plan, dir, &hash, &mut summary)?,
        PlanKind::TauCompare => tau_compare(plan, dir, &hash, &mut summary)?,
        PlanKind::EquilibriumStudy => equilibrium_study(plan, dir, &hash, &mut summary)?,
    }
    summary.passed = summary.failures.is_empty() && summary.checks.iter().all(|c| c.pass);
    io::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn h0(plan: &ExperimentPlan) -> Result<Vec<f64>> {
    plan.base.h0.clone().ok_or_else(|| HarnessError::Plan("base.h0 is required".into()))
}

fn single_sim(plan: &ExperimentPlan, dir: &Path, hash: &str, s: &mut Summary) -> Result<()> {
    let b = &plan.base;
    let eps = b.params.eps;
    let cfg = b.sim_config(eps, &b.model)?;
    let run = experiments::run_simulation(&b.model, &cfg, &h0(plan)?, b.diagnostics.as_ref())?;
    let mut t = io::series_table(&run.records, b.params.n, hash);
    if let Some(g) = run.gamma {
        t = t.with_meta("gamma", num(g));
    }
    t.write(&dir.join("series.csv"))?;
    io::write_file(&dir.join("trajectory.dat"), emit_plot_data(&PlotSeries::Records(&run.records), hash).as_bytes())?;
    if run.gamma.is_some() {
        io::write_file(&dir.join("channel.dat"), emit_plot_data(&PlotSeries::Channel(&run.records), hash).as_bytes())?;
        s.checks.push(Check::at_most("sides_exits", run.sides_exits() as f64, 0.0));
    }
    s.checks.push(Check::at_most("max_displacement", pde_displacement(&run.records), plan.thresholds.max_displacement));
    s.points.push(eps);
    s.details = serde_json::json!({ "events": run.events, "steps": run.steps, "dt": run.dt, "gamma": run.gamma });
    Ok(())
}

fn pde_displacement(records: &[hypac_core::pde::Record]) -> f64 {
    hypac_core::pde::max_displacement(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub fit: FitResult,
    /// Rate A of the slowest well.
    pub rate: f64,
    /// Mean l^h over the sweep points.
    pub ell_h: f64,
    pub points: Vec<SweepPoint>,
}

fn epsilon_sweep(plan: &ExperimentPlan, dir: &Path, hash: &str, s: &mut Summary) -> Result<()> {
    let b = &plan.base;
    let h0 = h0(plan)?;
    let window = b.fit_window.unwrap_or([0.2 * b.t_end, b.t_end]);
    let results: Vec<(f64, Result<(SweepPoint, experiments::SimRun)>)> = plan
        .sweep
        .par_iter()
        .map(|&eps| {
            let r = b.sim_config(eps, &b.model).and_then(|cfg| experiments::sweep_point(&b.model, &cfg, &h0, b.diagnostics.as_ref(), window));
            (eps, r)
        })
        .collect();
    let mut points = Vec::new();
    for (eps, r) in results {
        match r {
            Ok((p, run)) => {
                let mut t = io::series_table(&run.records, b.params.n, hash).with_meta("eps", eps_tag(eps));
                if let Some(g) = run.gamma {
                    t = t.with_meta("gamma", num(g));
                }
                t.write(&dir.join(format!("series_eps{}.csv", eps_tag(eps))))?;
                s.points.push(eps);
                points.push(p);
            }
            Err(e) => s.failures.push(PointFailure { value: eps, message: e.to_string() }),
        }
    }
    let solver = ProfileSolver::new(b.model.potential.clone())?;
    let rate = experiments::slowest_rate(&solver);
    let th = &plan.thresholds;
    for p in &points {
        let tag = eps_tag(p.eps);
        s.checks.push(Check::at_most(format!("displacement_eps{tag}"), p.displacement, th.max_displacement));
        if p.gamma.is_some() {
            s.checks.push(Check::at_most(format!("sides_exits_eps{tag}"), p.sides_exits as f64, 0.0));
            s.checks.push(Check::at_most(format!("outside_channel_eps{tag}"), if p.inside_all { 0.0 } else { 1.0 }, 0.0));
            if let Some(c) = p.remainder_constant {
                s.checks.push(Check::at_most(format!("remainder_constant_eps{tag}"), c, th.max_remainder_constant));
            }
        }
    }
    if points.len() >= 3 {
        let ell_h = points.iter().map(|p| p.ell_min).sum::<f64>() / points.len() as f64;
        let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.eps).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.speed).collect();
        match fit_rates(&xs, &ys, Some(-rate * ell_h)) {
            Ok(fit) => {
                s.checks.push(Check::at_most("slope_deviation", fit.deviation.unwrap_or(f64::INFINITY), th.slope_tolerance));
                let doc = SweepFit { fit, rate, ell_h, points };
                io::write_json(&dir.join("fit.json"), &doc)?;
                s.details = serde_json::to_value(&doc).unwrap_or_default();
            }
            Err(e) => s.failures.push(PointFailure { value: f64::NAN, message: format!("fit: {e}") }),
        }
    } else {
        s.failures.push(PointFailure { value: f64::NAN, message: format!("only {} sweep points completed", points.len()) });
    }
    Ok(())
}

fn tau_compare(plan: &ExperimentPlan, dir: &Path, hash: &str, s: &mut Summary) -> Result<()> {
    let b = &plan.base;
    let h0 = h0(plan)?;
    let t1 = b.t1.unwrap_or(0.1 * b.t_end);
    let series = experiments::tau_compare(&b.model, b.params.eps, b.params.rho, &h0, b.eta0.as_deref(), &plan.sweep, b.t_end, t1, b.dt_out)?;
    io::comparison_table(&series.entries, hash).with_meta("t1", num(t1)).write(&dir.join("comparison.csv"))?;
    let th = &plan.thresholds;
    let eta_norm = match &b.eta0 {
        Some(e) => e.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        None => {
            let solver = ProfileSolver::new(b.model.potential.clone())?;
            let red = hypac_core::reduced::Reduced::new(&solver, b.params.eps, b.params.rho)?;
            red.pstar(&red.layers(h0.clone())?, hypac_core::reduced::PStarMode::Exact)?.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        }
    };
    let mut by_tau: Vec<_> = series.entries.iter().collect();
    by_tau.sort_by(|a, b| b.tau.total_cmp(&a.tau));
    let mono = by_tau.windows(2).filter(|w| !(w[1].sup_h_err < w[0].sup_h_err)).count();
    s.checks.push(Check::at_most("sup_h_err_not_decreasing", mono as f64, 0.0));
    for e in &series.entries {
        let tag = eps_tag(e.tau);
        s.checks.push(Check::at_most(format!("sup_h_err_tau{tag}"), e.sup_h_err, th.comparison_factor * e.tau * (1.0 + eta_norm)));
        let e0 = e.e_tau.first().copied().unwrap_or(0.0);
        s.checks.push(Check::at_most(format!("sup_e_tau{tag}"), e.sup_e, th.comparison_factor * (e0 + 1.0 - e.gamma + e.tau)));
        s.checks.push(Check::at_most(format!("truncated_tau{tag}"), if e.truncated_at.is_some() { 1.0 } else { 0.0 }, 0.0));
        s.points.push(e.tau);
    }
    let brief: Vec<_> = series
        .entries
        .iter()
        .map(|e| serde_json::json!({"tau": e.tau, "gamma": e.gamma, "sup_e": e.sup_e, "sup_h_err": e.sup_h_err, "int_eta_err": e.int_eta_err, "sup_eta_err_after_t1": e.sup_eta_err_after_t1, "sup_eta_err_before_t1": e.sup_eta_err_before_t1, "truncated_at": e.truncated_at}))
        .collect();
    s.details = serde_json::json!({ "t1": t1, "gamma0": series.gamma0, "eta0_norm": eta_norm, "entries": brief });
    Ok(())
}

fn equilibrium_study(plan: &ExperimentPlan, dir: &Path, hash: &str, s: &mut Summary) -> Result<()> {
    let b = &plan.base;
    let p = b.params;
    let results: Vec<(f64, Result<EquilibriumReport>)> = plan
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let seed = plan.seed.wrapping_add(i as u64);
            (eps, experiments::equilibrium_study(&b.model, eps, p.n, p.rho, p.tau, b.multistart, seed))
        })
        .collect();
    let mut reports = Vec::new();
    let mut spec = Table::new(hash, ["eps", "i", "mu_sq", "lambda_plus", "lambda_minus"].map(String::from).to_vec());
    for (eps, r) in results {
        match r {
            Ok(rep) => {
                let tag = eps_tag(eps);
                let sp = &rep.spectrum;
                for i in 0..sp.mu_sq.len() {
                    spec.rows.push(vec![tag.clone(), (i + 1).to_string(), num(sp.mu_sq[i]), num(sp.lambda_plus[i]), num(sp.lambda_minus[i])]);
                }
                s.checks.push(Check::at_most(format!("residual_eps{tag}"), rep.residual, 1e-14));
                s.checks.push(Check::at_most(format!("dense_deviation_eps{tag}"), sp.dense_deviation, 1e-8));
                s.checks.push(Check::at_most(format!("not_negative_definite_eps{tag}"), if rep.negative_definite { 0.0 } else { 1.0 }, 0.0));
                if let Some(d) = rep.multistart_spread {
                    s.checks.push(Check::at_most(format!("multistart_spread_eps{tag}"), d, 1e-10));
                }
                s.points.push(eps);
                reports.push(rep);
            }
            Err(e) => s.failures.push(PointFailure { value: eps, message: e.to_string() }),
        }
    }
    spec.write(&dir.join("spectrum.csv"))?;
    io::write_json(&dir.join("equilibrium.json"), &reports)?;
    s.details = serde_json::json!({ "equilibria": reports.iter().map(|r| serde_json::json!({"eps": r.eps, "h": r.h, "psi": r.psi})).collect::<Vec<_>>() });
    Ok(())
}
