//! Single experiments shared by the CLI, the plan runner and the acceptance target.

use crate::config::{DiagnosticsConfig, SimulationFile};
use crate::error::{HarnessError, Result};
use hypac_core::grid::Grid;
use hypac_core::manifold::{LayerVector, Manifold};
use hypac_core::model::{gamma_tau, ModelSpec};
use hypac_core::pde::{self, calibrate_gamma, drift_fit, Diagnostics, Event, GammaCalibration, Record, SimConfig, SimState, Simulator};
use hypac_core::profile::{Branch, ProfileSolver};
use hypac_core::reduced::{ComparisonSeries, IntegrateOptions, PStarMode, Reduced, SpectrumReport, Trajectory};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct SimRun {
    pub config: SimConfig,
    pub records: Vec<Record>,
    pub events: Vec<Event>,
    pub steps: usize,
    pub dt: f64,
    /// Channel width used by the diagnostics, if any.
    pub gamma: Option<f64>,
    pub calibration: Option<GammaCalibration>,
    pub state: SimState,
}

impl SimRun {
    pub fn sides_exits(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::SidesExit { .. })).count()
    }
}

/// Smallest decay rate A over both wells.
pub fn slowest_rate(solver: &ProfileSolver) -> f64 {
    solver.rate(Branch::Plus).min(solver.rate(Branch::Minus))
}

/// Runs the PDE from the well-prepared state (u^{h0}, 0).
pub fn run_simulation(spec: &ModelSpec, config: &SimConfig, h0: &[f64], diagnostics: Option<&DiagnosticsConfig>) -> Result<SimRun> {
    let p = config.params;
    let solver = ProfileSolver::new(spec.potential.clone())?;
    let manifold = Manifold::new(&solver, config.grid);
    let h = LayerVector::new(h0.to_vec(), p.eps, p.rho)?;
    let initial = SimState::well_prepared(&manifold, &h)?;
    let (gamma, calibration) = match diagnostics {
        None => (None, None),
        Some(d) => match &d.calibrate {
            None => (Some(p.gamma), None),
            Some(c) => {
                let red = Reduced::new(&solver, p.eps, p.rho)?;
                let he = red.equilibrium(h.n())?;
                let cal = calibrate_gamma(spec, config, &manifold, &he, &c.shifts, c.t_relax)?;
                (Some(cal.gamma), Some(cal))
            }
        },
    };
    let diag = gamma.map(|g| {
        let mut d = Diagnostics::new(&manifold, g);
        if let Some(cfg) = diagnostics {
            d.psi_mode = cfg.psi_mode;
        }
        d
    });
    let mut sim = Simulator::new(spec, config.clone())?;
    let out = pde::simulate(&mut sim, initial, diag.as_ref())?;
    Ok(SimRun { config: config.clone(), records: out.records, events: out.events, steps: out.steps, dt: out.dt, gamma, calibration, state: out.state })
}

pub fn run_simulation_file(file: &SimulationFile) -> Result<SimRun> {
    run_simulation(&file.model, &file.sim, &file.h0, file.diagnostics.as_ref())
}

/// One point of an eps sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub grid_m: usize,
    pub dt: f64,
    pub steps: usize,
    /// Least-squares |h'|_inf over the fit window.
    pub speed: f64,
    pub slopes: Vec<f64>,
    /// Mean l^h over the fit window.
    pub ell_min: f64,
    pub displacement: f64,
    /// Reduced prediction |P*(h0)|_inf / gamma_tau.
    pub reduced_speed: f64,
    pub gamma: Option<f64>,
    pub samples: usize,
    pub inside_all: bool,
    pub sides_exits: usize,
    /// max (eps^{1/2}|w|_inf + |w| + tau^{1/2}|v|) e^{A l^h / eps} over diagnostic samples.
    pub remainder_constant: Option<f64>,
}

pub fn sweep_point(spec: &ModelSpec, config: &SimConfig, h0: &[f64], diagnostics: Option<&DiagnosticsConfig>, window: [f64; 2]) -> Result<(SweepPoint, SimRun)> {
    let run = run_simulation(spec, config, h0, diagnostics)?;
    let p = config.params;
    let fit = drift_fit(&run.records, window[0], window[1])?;
    let solver = ProfileSolver::new(spec.potential.clone())?;
    let a = slowest_rate(&solver);
    let red = Reduced::new(&solver, p.eps, p.rho)?;
    let g = gamma_tau(&spec.potential, &spec.damping, p.tau)?;
    let ps = red.pstar(&red.layers(h0.to_vec())?, PStarMode::Exact)?;
    let reduced_speed = ps.iter().fold(0.0f64, |m, v| m.max(v.abs())) / g;
    let diag: Vec<&Record> = run.records.iter().filter(|r| r.channel.is_some()).collect();
    let remainder_constant = diag
        .iter()
        .filter_map(|r| r.remainder_size(p.eps, p.tau).map(|s| s * (a * r.ell_min / p.eps).exp()))
        .reduce(f64::max);
    let point = SweepPoint {
        eps: p.eps,
        grid_m: config.grid.m(),
        dt: run.dt,
        steps: run.steps,
        speed: fit.speed,
        slopes: fit.slopes,
        ell_min: fit.ell_min,
        displacement: pde::max_displacement(&run.records),
        reduced_speed,
        gamma: run.gamma,
        samples: diag.len(),
        inside_all: diag.iter().all(|r| r.channel.map(|c| c.inside).unwrap_or(false)),
        sides_exits: run.sides_exits(),
        remainder_constant,
    };
    Ok((point, run))
}

/// Layer distance between PDE records and a reduced trajectory on shared sample times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub sup_err: f64,
    pub window_end: f64,
    pub compared: usize,
}

/// Compares tracked PDE layers with the reduced trajectory, interpolating the latter linearly.
pub fn fidelity(records: &[Record], traj: &Trajectory) -> Result<Fidelity> {
    let samples: Vec<(f64, &[f64])> = records.iter().filter(|r| !r.h.is_empty()).map(|r| (r.t, r.h.as_slice())).collect();
    fidelity_samples(&samples, traj)
}

/// As [`fidelity`], for (t, h) samples read back from a series file.
pub fn fidelity_samples(samples: &[(f64, &[f64])], traj: &Trajectory) -> Result<Fidelity> {
    let end = traj.t.last().copied().unwrap_or(0.0);
    let mut sup = 0.0f64;
    let mut compared = 0;
    if traj.t.len() < 2 {
        return Err(HarnessError::Usage("reduced trajectory has fewer than two samples".into()));
    }
    for (t, h) in samples.iter().filter(|(t, _)| *t <= end) {
        let k = traj.t.partition_point(|&x| x <= *t).clamp(1, traj.t.len() - 1);
        let (t0, t1) = (traj.t[k - 1], traj.t[k]);
        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        for (j, hj) in h.iter().enumerate() {
            let hr = traj.h[k - 1][j] + s * (traj.h[k][j] - traj.h[k - 1][j]);
            sup = sup.max((hj - hr).abs());
        }
        compared += 1;
    }
    if compared == 0 {
        return Err(HarnessError::Usage("no common samples between PDE and reduced runs".into()));
    }
    Ok(Fidelity { sup_err: sup, window_end: end, compared })
}

/// Hyperbolic reduced run matching a PDE configuration: h0 at rest, gamma from the damping law.
pub fn reduced_companion(spec: &ModelSpec, config: &SimConfig, h0: &[f64], dt_out: f64) -> Result<Trajectory> {
    let p = config.params;
    let solver = ProfileSolver::new(spec.potential.clone())?;
    let red = Reduced::new(&solver, p.eps, p.rho)?;
    let g = gamma_tau(&spec.potential, &spec.damping, p.tau)?;
    let h = red.layers(h0.to_vec())?;
    let opts = IntegrateOptions { dt_out, ..IntegrateOptions::default() };
    Ok(red.integrate_hyperbolic(&h, &vec![0.0; h.n()], p.tau, g, config.t_end, &opts)?)
}

/// Relaxation comparison with one hyperbolic run per tau on the work pool.
pub fn tau_compare(spec: &ModelSpec, eps: f64, rho: f64, h0: &[f64], eta0: Option<&[f64]>, taus: &[f64], t_end: f64, t1: f64, dt_out: f64) -> Result<ComparisonSeries> {
    let solver = ProfileSolver::new(spec.potential.clone())?;
    let red = Reduced::new(&solver, eps, rho)?;
    let h = red.layers(h0.to_vec())?;
    let eta0 = match eta0 {
        Some(e) => e.to_vec(),
        None => red.pstar(&h, PStarMode::Exact)?,
    };
    let gammas = std::iter::once(0.0)
        .chain(taus.iter().copied())
        .map(|t| gamma_tau(&spec.potential, &spec.damping, t).map(|g| (t, g)))
        .collect::<hypac_core::Result<Vec<_>>>()?;
    let gamma_of = |t: f64| gammas.iter().find(|(x, _)| *x == t).map(|(_, g)| *g).unwrap_or(f64::NAN);
    let opts = IntegrateOptions { dt_out, ..IntegrateOptions::default() };
    let parts = taus
        .par_iter()
        .map(|&tau| {
            let solver = solver.clone();
            let red = Reduced::new(&solver, eps, rho)?;
            red.compare_relaxation(&h, &eta0, &[tau], t_end, gamma_of, t1, &opts)
        })
        .collect::<hypac_core::Result<Vec<_>>>()?;
    let gamma0 = gamma_of(0.0);
    Ok(ComparisonSeries { taus: taus.to_vec(), t1, gamma0, entries: parts.into_iter().flat_map(|s| s.entries).collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub eps: f64,
    pub n: usize,
    pub h: Vec<f64>,
    pub spacings: Vec<f64>,
    pub residual: f64,
    pub psi: f64,
    pub spectrum: SpectrumReport,
    pub negative_definite: bool,
    /// Largest distance of a multistart solution from h^e.
    pub multistart_spread: Option<f64>,
    pub multistart_runs: usize,
}

/// Draws a sorted admissible layer vector whose spacings exceed `min_gap` by a margin.
pub fn random_layers(rng: &mut ChaCha8Rng, n: usize, eps: f64, rho: f64, min_gap: f64) -> LayerVector {
    let floor = 1.2 * min_gap.max(eps / rho);
    loop {
        let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        h.sort_by(f64::total_cmp);
        if let Ok(lv) = LayerVector::new(h, eps, rho) {
            if lv.ell_min() > floor {
                return lv;
            }
        }
    }
}

pub fn equilibrium_study(spec: &ModelSpec, eps: f64, n: usize, rho: f64, tau: f64, multistart: usize, seed: u64) -> Result<EquilibriumReport> {
    let solver = ProfileSolver::new(spec.potential.clone())?;
    let red = Reduced::new(&solver, eps, rho)?;
    let he = red.equilibrium(n)?;
    let residual = red.pstar(&he, PStarMode::Exact)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gamma = gamma_tau(&spec.potential, &spec.damping, tau)?;
    let spectrum = red.spectrum(&he, tau, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spread = None;
    for _ in 0..multistart {
        let start = random_layers(&mut rng, n, eps, rho, eps / solver.r_max(Branch::Plus).min(solver.r_max(Branch::Minus)));
        let h = red.equilibrium_from(&start)?;
        let d = h.h().iter().zip(he.h()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        spread = Some(spread.map_or(d, |s: f64| s.max(d)));
    }
    Ok(EquilibriumReport {
        eps,
        n,
        h: he.h().to_vec(),
        spacings: he.spacings(),
        residual,
        psi: red.psi(&he)?,
        negative_definite: spectrum.mu_sq.iter().all(|m| *m > 0.0),
        spectrum,
        multistart_spread: spread,
        multistart_runs: multistart,
    })
}

/// Grid with about `points_per_eps` cells per eps.
pub fn grid_per_eps(eps: f64, points_per_eps: f64) -> Result<Grid> {
    Ok(Grid::new((points_per_eps / eps).ceil() as usize + 1)?)
}
