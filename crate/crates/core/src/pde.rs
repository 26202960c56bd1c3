//! Time integration of `u_t = v`, `tau v_t = eps^2 u_xx - f(u) - g(u, tau) v` with
//! Neumann ends, layer tracking and channel diagnostics.

use crate::error::{Error, Result};
use crate::grid::{inner, laplacian_into, norm_inf, Grid, GridField, Rule, Stencil};
use crate::linalg::thomas;
use crate::manifold::{zero_crossings, LayerVector, Manifold, ManifoldCoords, ProjectOptions, PsiMode};
use crate::model::{ModelParams, ModelSpec};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::{ceil, sqrt};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4Explicit,
    /// Diffusion and damping implicit with weight theta, reaction explicit (first order in
    /// time). Second-order stencil only.
    SemiImplicitTheta { theta: f64 },
}

fn default_stencil() -> Stencil {
    Stencil::Eighth
}

fn default_stride() -> usize {
    100
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub params: ModelParams,
    pub grid: Grid,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    #[serde(default = "default_stride")]
    pub observer_stride: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_stencil")]
    pub stencil: Stencil,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(Error::Config(format!("cfl_factor must lie in (0, 1], got {}", self.cfl_factor)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.observer_stride == 0 {
            return Err(Error::Config("observer_stride must be positive".into()));
        }
        if !(self.params.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if !(self.params.tau > 0.0) {
            return Err(Error::Config(
                "tau = 0 cannot be stepped by the wave integrators; use the parabolic reduced system".into(),
            ));
        }
        if let Integrator::SemiImplicitTheta { theta } = self.integrator {
            if !(0.5..=1.0).contains(&theta) {
                return Err(Error::Config(format!("theta must lie in [1/2, 1], got {theta}")));
            }
            if self.stencil != Stencil::Second {
                return Err(Error::Config("the semi-implicit integrator needs the second-order stencil".into()));
            }
        }
        self.grid.check_resolution(self.params.eps)
    }
}

/// Largest step allowed by the wave CFL, damping stiffness and diffusive guards.
///
/// For the three-point stencil these are `sqrt(tau) dx / eps`, `tau / max g` and
/// `dx^2 / (2 eps^2)`; wider stencils rescale the first and last by their spectral radius.
pub fn stable_dt(config: &SimConfig, spec: &ModelSpec) -> Result<f64> {
    config.validate()?;
    let p = &config.params;
    let dx = config.grid.dx();
    let gmax = spec.damping.max(&spec.potential, p.tau);
    let damp = if gmax > 0.0 { p.tau / gmax } else { f64::INFINITY };
    let dt = match config.integrator {
        Integrator::Rk4Explicit => {
            let rs = config.stencil.spectral_radius();
            let wave = sqrt(p.tau) * dx / p.eps * 2.0 / sqrt(rs);
            let diffusive = 2.0 * dx * dx / (rs * p.eps * p.eps);
            wave.min(damp).min(diffusive)
        }
        Integrator::SemiImplicitTheta { .. } => damp.min(sqrt(p.tau)),
    };
    Ok(config.cfl_factor * dt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub u: GridField,
    pub v: GridField,
}

impl SimState {
    pub fn new(t: f64, u: GridField, v: GridField) -> Result<SimState> {
        if u.grid != v.grid || u.values.len() != v.values.len() {
            return Err(Error::Config("u and v live on different grids".into()));
        }
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::BlowUp { t });
        }
        Ok(SimState { t, u, v })
    }

    /// The well-prepared state (u^h, 0).
    pub fn well_prepared(manifold: &Manifold, h: &LayerVector) -> Result<SimState> {
        let u = manifold.build_uh(h)?;
        let v = GridField::zeros(u.grid);
        Ok(SimState { t: 0.0, u, v })
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// `int tau v^2 / 2 + eps^2 u_x^2 / 2 + F(u)` with trapezoid weights, the gradient part
/// taken as `-eps^2 <u, D u> / 2` so that it dissipates exactly under the semi-discrete flow.
pub fn lyapunov(state: &SimState, spec: &ModelSpec, tau: f64, eps: f64, stencil: Stencil) -> f64 {
    let g = state.u.grid;
    let w = g.weights(Rule::Trapezoid);
    let mut lap = vec![0.0; g.m()];
    laplacian_into(&state.u.values, g.dx(), stencil, &mut lap);
    let mut s = 0.0;
    for i in 0..g.m() {
        let (u, v) = (state.u.values[i], state.v.values[i]);
        s += w[i] * (0.5 * tau * v * v - 0.5 * eps * eps * u * lap[i] + spec.potential.big_f(u));
    }
    s
}

/// Dissipation rate `-int g v^2` matching [`lyapunov`].
pub fn lyapunov_rate(state: &SimState, spec: &ModelSpec, tau: f64) -> f64 {
    let w = state.u.grid.weights(Rule::Trapezoid);
    -(0..w.len())
        .map(|i| {
            let v = state.v.values[i];
            w[i] * spec.damping.eval(&spec.potential, state.u.values[i], tau) * v * v
        })
        .sum::<f64>()
}

/// Zero crossings of `u` as a layer vector; fails unless there are exactly `n`.
pub fn track_layers(u: &GridField, n: usize, eps: f64, rho: f64) -> Result<LayerVector> {
    let c = zero_crossings(&u.grid, &u.values);
    if c.len() != n {
        return Err(Error::Annihilation { found: c.len(), expected: n });
    }
    LayerVector::new(c, eps, rho)
}

pub struct Simulator<'a> {
    spec: &'a ModelSpec,
    config: SimConfig,
    dt: f64,
    lap: Vec<f64>,
    k: [Vec<f64>; 4],
    l: [Vec<f64>; 4],
    su: Vec<f64>,
    sv: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ModelSpec, config: SimConfig) -> Result<Simulator<'a>> {
        let dt = stable_dt(&config, spec)?;
        spec.damping.check(&spec.potential, config.params.tau)?;
        let m = config.grid.m();
        Ok(Simulator {
            spec,
            config,
            dt,
            lap: vec![0.0; m],
            k: [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]],
            l: [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]],
            su: vec![0.0; m],
            sv: vec![0.0; m],
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn stable_dt(&self) -> f64 {
        self.dt
    }

    fn rhs(&mut self, u: &[f64], v: &[f64], du: usize, dv: usize) {
        let p = self.config.params;
        laplacian_into(u, self.config.grid.dx(), self.config.stencil, &mut self.lap);
        let pot = &self.spec.potential;
        let damping = &self.spec.damping;
        let (e2, it) = (p.eps * p.eps, 1.0 / p.tau);
        for i in 0..u.len() {
            self.k[du][i] = v[i];
            let g = damping.eval(pot, u[i], p.tau);
            self.l[dv][i] = (e2 * self.lap[i] - pot.f(u[i]) - g * v[i]) * it;
        }
    }

    /// Advances the state by `dt`.
    pub fn step(&mut self, state: &mut SimState, dt: f64) -> Result<()> {
        match self.config.integrator {
            Integrator::Rk4Explicit => self.rk4(state, dt),
            Integrator::SemiImplicitTheta { theta } => self.theta_step(state, dt, theta)?,
        }
        state.t += dt;
        if !state.is_finite() {
            return Err(Error::BlowUp { t: state.t - dt });
        }
        Ok(())
    }

    fn rk4(&mut self, state: &mut SimState, dt: f64) {
        let m = state.u.values.len();
        let u0 = core::mem::take(&mut state.u.values);
        let v0 = core::mem::take(&mut state.v.values);
        let mut su = core::mem::take(&mut self.su);
        let mut sv = core::mem::take(&mut self.sv);
        self.rhs(&u0, &v0, 0, 0);
        for (s, c) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..m {
                su[i] = u0[i] + c * dt * self.k[s - 1][i];
                sv[i] = v0[i] + c * dt * self.l[s - 1][i];
            }
            self.rhs(&su, &sv, s, s);
        }
        let w = dt / 6.0;
        let (k, l) = (&self.k, &self.l);
        let mut u1 = u0;
        let mut v1 = v0;
        for i in 0..m {
            u1[i] += w * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
            v1[i] += w * (l[0][i] + 2.0 * (l[1][i] + l[2][i]) + l[3][i]);
        }
        state.u.values = u1;
        state.v.values = v1;
        self.su = su;
        self.sv = sv;
    }

    fn theta_step(&mut self, state: &mut SimState, dt: f64, theta: f64) -> Result<()> {
        let p = self.config.params;
        let m = state.u.values.len();
        let dx = self.config.grid.dx();
        let (e2, tau) = (p.eps * p.eps, p.tau);
        let pot = &self.spec.potential;
        let u = &state.u.values;
        let v = &state.v.values;
        let shifted: Vec<f64> = (0..m).map(|i| u[i] + theta * (1.0 - theta) * dt * v[i]).collect();
        laplacian_into(&shifted, dx, Stencil::Second, &mut self.lap);
        let a = dt * dt * theta * theta * e2 / (dx * dx);
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let g = self.spec.damping.eval(pot, u[i], tau);
            diag[i] = tau + dt * theta * g + 2.0 * a;
            rhs[i] = tau * v[i] + dt * (e2 * self.lap[i] - pot.f(u[i]) - (1.0 - theta) * g * v[i]);
        }
        let mut sub = vec![-a; m - 1];
        let mut sup = vec![-a; m - 1];
        sup[0] = -2.0 * a;
        sub[m - 2] = -2.0 * a;
        let vn = thomas(&sub, &diag, &sup, &rhs)?;
        let un: Vec<f64> = (0..m).map(|i| u[i] + dt * (theta * vn[i] + (1.0 - theta) * v[i])).collect();
        state.u.values = un;
        state.v.values = vn;
        Ok(())
    }
}

/// Manifold diagnostics attached to a simulation.
pub struct Diagnostics<'m, 'a> {
    pub manifold: &'m Manifold<'a>,
    /// Channel width Gamma.
    pub gamma: f64,
    pub psi_mode: PsiMode,
    pub project: ProjectOptions,
}

impl<'m, 'a> Diagnostics<'m, 'a> {
    pub fn new(manifold: &'m Manifold<'a>, gamma: f64) -> Self {
        Diagnostics {
            manifold,
            gamma,
            psi_mode: PsiMode::AlphaFormula,
            project: ProjectOptions { tol: 1e-13, ..ProjectOptions::default() },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub energy_eh: f64,
    pub psi: f64,
    pub gamma_psi: f64,
    pub inside: bool,
    pub ends_margin: f64,
}

/// Channel membership E^h <= Gamma Psi and the distance to the ends of Omega_rho.
pub fn channel_monitor(manifold: &Manifold, coords: &ManifoldCoords, tau: f64, gamma: f64, mode: PsiMode) -> Result<ChannelRecord> {
    let energy_eh = manifold.energy(coords, tau);
    let psi = manifold.barrier_psi(&coords.h, mode)?;
    Ok(ChannelRecord {
        energy_eh,
        psi,
        gamma_psi: gamma * psi,
        inside: energy_eh <= gamma * psi,
        ends_margin: coords.h.ends_margin(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    /// Tracked zero crossings; empty after a miscount.
    pub h: Vec<f64>,
    pub ell_min: f64,
    pub lyapunov: f64,
    pub v_l2: f64,
    pub projected_h: Option<Vec<f64>>,
    pub w_l2: Option<f64>,
    pub w_linf: Option<f64>,
    pub channel: Option<ChannelRecord>,
}

impl Record {
    /// eps^{1/2} |w|_inf + |w| + tau^{1/2} |v|.
    pub fn remainder_size(&self, eps: f64, tau: f64) -> Option<f64> {
        Some(sqrt(eps) * self.w_linf? + self.w_l2? + sqrt(tau) * self.v_l2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Annihilation { t: f64, found: usize },
    EndsExit { t: f64, margin: f64 },
    /// Left the channel while away from the ends.
    SidesExit { t: f64, ends_margin: f64 },
    ProjectionFailed { t: f64, message: String },
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub records: Vec<Record>,
    pub events: Vec<Event>,
    pub state: SimState,
    pub steps: usize,
    pub dt: f64,
}

impl SimOutput {
    pub fn sides_exits(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::SidesExit { .. })).count()
    }
}

struct DiagState {
    active: bool,
    guess: Option<LayerVector>,
    was_inside: Option<bool>,
}

/// Runs to `t_end` (or an ends exit), recording every `observer_stride` steps.
pub fn simulate(sim: &mut Simulator, initial: SimState, diag: Option<&Diagnostics>) -> Result<SimOutput> {
    simulate_with(sim, initial, diag, |_, _| {})
}

/// As [`simulate`], calling `observer` with each recorded state.
pub fn simulate_with<O: FnMut(&SimState, &Record)>(
    sim: &mut Simulator,
    initial: SimState,
    diag: Option<&Diagnostics>,
    mut observer: O,
) -> Result<SimOutput> {
    let cfg = sim.config.clone();
    if initial.u.grid != cfg.grid {
        return Err(Error::Config("initial state grid differs from the configured grid".into()));
    }
    if !initial.is_finite() {
        return Err(Error::BlowUp { t: initial.t });
    }
    let t0 = initial.t;
    let span = cfg.t_end - t0;
    let steps = if span > 0.0 { ceil(span / sim.dt) as usize } else { 0 };
    let dt = if steps > 0 { span / steps as f64 } else { sim.dt };
    let mut state = initial;
    let mut out = SimOutput { records: Vec::new(), events: Vec::new(), state: state.clone(), steps: 0, dt };
    let mut ds = DiagState { active: diag.is_some(), guess: None, was_inside: None };
    for n in 0..=steps {
        if n > 0 {
            sim.step(&mut state, dt)?;
            state.t = t0 + n as f64 * dt;
        }
        if n % cfg.observer_stride != 0 && n != steps {
            continue;
        }
        let (rec, stop) = observe(&state, &cfg, sim.spec, diag, &mut ds, &mut out.events, n == 0)?;
        observer(&state, &rec);
        out.records.push(rec);
        out.steps = n;
        if stop {
            break;
        }
    }
    out.state = state;
    Ok(out)
}

fn observe(
    state: &SimState,
    cfg: &SimConfig,
    spec: &ModelSpec,
    diag: Option<&Diagnostics>,
    ds: &mut DiagState,
    events: &mut Vec<Event>,
    first: bool,
) -> Result<(Record, bool)> {
    let p = cfg.params;
    let t = state.t;
    let w = cfg.grid.weights(Rule::Trapezoid);
    let mut rec = Record {
        t,
        h: Vec::new(),
        ell_min: f64::NAN,
        lyapunov: lyapunov(state, spec, p.tau, p.eps, cfg.stencil),
        v_l2: sqrt(inner(&state.v.values, &state.v.values, &w)),
        projected_h: None,
        w_l2: None,
        w_linf: None,
        channel: None,
    };
    let crossings = zero_crossings(&cfg.grid, &state.u.values);
    if crossings.len() != p.n {
        if ds.active || !events.iter().any(|e| matches!(e, Event::Annihilation { .. })) {
            events.push(Event::Annihilation { t, found: crossings.len() });
        }
        ds.active = false;
        return Ok((rec, false));
    }
    rec.h = crossings;
    let tracked = match LayerVector::new(rec.h.clone(), p.eps, p.rho) {
        Ok(h) => h,
        Err(_) => {
            let gaps = (1..=p.n + 1).map(|k| spacing(&rec.h, k)).fold(f64::INFINITY, f64::min);
            rec.ell_min = gaps;
            events.push(Event::EndsExit { t, margin: gaps - p.eps / p.rho });
            return Ok((rec, true));
        }
    };
    rec.ell_min = tracked.ell_min();
    let d = match diag {
        Some(d) if ds.active => d,
        _ => return Ok((rec, false)),
    };
    let guess = ds.guess.clone().unwrap_or_else(|| tracked.clone());
    let coords = match d.manifold.project(&state.u, &guess, &d.project) {
        Ok(c) => c.with_velocity(state.v.clone()),
        Err(e) => {
            if first {
                return Err(e);
            }
            events.push(Event::ProjectionFailed { t, message: format!("{e}") });
            ds.active = false;
            return Ok((rec, false));
        }
    };
    let ch = channel_monitor(d.manifold, &coords, p.tau, d.gamma, d.psi_mode)?;
    if ds.was_inside == Some(true) && !ch.inside && ch.ends_margin > 0.0 {
        events.push(Event::SidesExit { t, ends_margin: ch.ends_margin });
    }
    ds.was_inside = Some(ch.inside);
    rec.w_l2 = Some(sqrt(inner(&coords.w.values, &coords.w.values, &w)));
    rec.w_linf = Some(norm_inf(&coords.w.values));
    rec.projected_h = Some(coords.h.h().to_vec());
    rec.channel = Some(ch);
    ds.guess = Some(coords.h);
    Ok((rec, false))
}

fn spacing(h: &[f64], k: usize) -> f64 {
    let n = h.len();
    if k == 1 {
        2.0 * h[0]
    } else if k == n + 1 {
        2.0 * (1.0 - h[n - 1])
    } else {
        h[k - 1] - h[k - 2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub t: f64,
    pub speed: f64,
    pub ell_min: f64,
}

/// Central differences of the tracked positions: (t, |h'|_inf, l^h) at interior records.
///
/// Records must be equally spaced in time, except that a shorter final interval (the
/// record simulate adds at `t_end`) is dropped.
pub fn velocity_estimate(records: &[Record]) -> Result<Vec<VelocitySample>> {
    let mut rs: Vec<&Record> = records.iter().filter(|r| !r.h.is_empty()).collect();
    if rs.len() >= 3 {
        let k = rs.len();
        let (last, prev) = (rs[k - 1].t - rs[k - 2].t, rs[k - 2].t - rs[k - 3].t);
        if last < prev * (1.0 - 1e-9) {
            rs.pop();
        }
    }
    if rs.len() < 3 {
        return Err(Error::Config(format!("velocity estimate needs >= 3 tracked records, got {}", rs.len())));
    }
    let dt = rs[1].t - rs[0].t;
    for w in rs.windows(2) {
        let d = w[1].t - w[0].t;
        if !(d > 0.0) || (d - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(Error::Config("irregular record times; resample before differentiating".into()));
        }
    }
    Ok(rs
        .windows(3)
        .map(|w| {
            let speed = (0..w[1].h.len()).map(|j| ((w[2].h[j] - w[0].h[j]) / (2.0 * dt)).abs()).fold(0.0, f64::max);
            VelocitySample { t: w[1].t, speed, ell_min: w[1].ell_min }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    /// Least-squares slope of each h_j(t).
    pub slopes: Vec<f64>,
    pub speed: f64,
    pub ell_min: f64,
    pub displacement: f64,
}

/// Least-squares drift of the tracked layers over records with `t0 <= t <= t1`.
///
/// Central differences of positions that move by ~1e-12 per unit time are dominated by
/// rounding, so scaling fits use this slope instead.
pub fn drift_fit(records: &[Record], t0: f64, t1: f64) -> Result<DriftFit> {
    let rs: Vec<&Record> = records.iter().filter(|r| !r.h.is_empty() && r.t >= t0 && r.t <= t1).collect();
    if rs.len() < 3 {
        return Err(Error::Config(format!("drift fit needs >= 3 tracked records in [{t0}, {t1}]")));
    }
    let n = rs[0].h.len();
    let cnt = rs.len() as f64;
    let mt = rs.iter().map(|r| r.t).sum::<f64>() / cnt;
    let stt: f64 = rs.iter().map(|r| (r.t - mt) * (r.t - mt)).sum();
    let slopes: Vec<f64> = (0..n)
        .map(|j| {
            let mh = rs.iter().map(|r| r.h[j]).sum::<f64>() / cnt;
            rs.iter().map(|r| (r.t - mt) * (r.h[j] - mh)).sum::<f64>() / stt
        })
        .collect();
    let speed = slopes.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let ell_min = rs.iter().map(|r| r.ell_min).sum::<f64>() / cnt;
    let first = &records.iter().find(|r| !r.h.is_empty()).unwrap().h;
    let displacement = rs
        .iter()
        .map(|r| (0..n).map(|j| (r.h[j] - first[j]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok(DriftFit { slopes, speed, ell_min, displacement })
}

/// Largest displacement of any tracked layer from its first recorded position.
pub fn max_displacement(records: &[Record]) -> f64 {
    let mut it = records.iter().filter(|r| !r.h.is_empty());
    let first = match it.next() {
        Some(r) => r.h.clone(),
        None => return 0.0,
    };
    it.filter(|r| r.h.len() == first.len())
        .map(|r| r.h.iter().zip(&first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCalibration {
    pub ratios: Vec<f64>,
    pub median: f64,
    pub gamma: f64,
}

/// Channel width from relaxed, perturbed well-prepared states.
///
/// Each shift s moves layer j by (-1)^j s; the state (u^h', 0) is run for `t_relax`,
/// projected, and E^h / Psi recorded. Gamma is four times the median ratio.
pub fn calibrate_gamma(
    spec: &ModelSpec,
    config: &SimConfig,
    manifold: &Manifold,
    h: &LayerVector,
    shifts: &[f64],
    t_relax: f64,
) -> Result<GammaCalibration> {
    let mut ratios = Vec::new();
    let opts = ProjectOptions { tol: 1e-13, ..ProjectOptions::default() };
    for &s in shifts {
        let hp: Vec<f64> = h.h().iter().enumerate().map(|(j, x)| if j % 2 == 0 { x + s } else { x - s }).collect();
        let hp = h.with_positions(hp)?;
        let mut cfg = config.clone();
        cfg.t_end = t_relax;
        cfg.observer_stride = usize::MAX;
        let mut sim = Simulator::new(spec, cfg)?;
        let out = simulate(&mut sim, SimState::well_prepared(manifold, &hp)?, None)?;
        let c = manifold.project(&out.state.u, &hp, &opts)?.with_velocity(out.state.v.clone());
        let psi = manifold.barrier_psi(&c.h, PsiMode::AlphaFormula)?;
        if psi > 0.0 {
            ratios.push(manifold.energy(&c, config.params.tau) / psi);
        }
    }
    if ratios.is_empty() {
        return Err(Error::Config("Gamma calibration needs at least one non-equilibrium shift".into()));
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    Ok(GammaCalibration { ratios, median, gamma: 4.0 * median })
}
