//! Reduced layer dynamics: the drift P*, the potential W and its Hessian B, the
//! equilibrium h^e, the spectrum of the linearisation and the reduced integrators.

use crate::error::{Error, Result};
use crate::linalg::{thomas, tridiagonal_eigenvalues};
use crate::manifold::LayerVector;
use crate::model::d_infinity;
use crate::profile::{AsymptoticConstants, Branch, ProfileSolver};
use crate::quad::gauss_legendre;
use crate::solve::bisect;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, floor, log, sqrt};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PStarMode {
    #[default]
    Exact,
    Asymptotic,
}

/// Layer positions together with their velocities eta = h'.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub h: LayerVector,
    pub eta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub omega: Vec<f64>,
    pub b_diag: Vec<f64>,
    pub b_off: Vec<f64>,
    pub mu_sq: Vec<f64>,
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
    /// Largest gap between the closed-form eigenvalues and a dense solve of J, over the spectral radius.
    pub dense_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainEvent {
    pub t: f64,
    pub ell_min: f64,
    pub message: alloc::string::String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    /// E_tau = tau |eta|^2 / 2 + W(h) at every sample, when requested.
    pub energy: Vec<f64>,
    pub event: Option<DomainEvent>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last_h(&self) -> &[f64] {
        self.h.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrateOptions {
    pub mode: PStarMode,
    pub rtol: f64,
    pub atol: f64,
    /// Sampling interval of the returned trajectory.
    pub dt_out: f64,
    pub max_steps: usize,
    pub record_energy: bool,
    /// Integrate h' = -P*(h) instead.
    pub reverse: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            mode: PStarMode::Exact,
            rtol: 1e-10,
            atol: 1e-14,
            dt_out: 0.1,
            max_steps: 1_000_000,
            record_energy: false,
            reverse: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub tau: f64,
    pub gamma: f64,
    pub t: Vec<f64>,
    pub h_err: Vec<f64>,
    pub eta_err: Vec<f64>,
    pub e_tau: Vec<f64>,
    pub sup_e: f64,
    pub sup_h_err: f64,
    pub int_eta_err: f64,
    pub sup_eta_err_after_t1: f64,
    pub sup_eta_err_before_t1: f64,
    /// Earliest domain event of either run; the comparison stops there.
    pub truncated_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSeries {
    pub taus: Vec<f64>,
    pub t1: f64,
    pub gamma0: f64,
    pub entries: Vec<ComparisonEntry>,
}

/// Reduced system for one potential at fixed eps and rho.
pub struct Reduced<'a> {
    solver: &'a ProfileSolver,
    eps: f64,
    rho: f64,
    d_inf: f64,
    asymptotics: Option<AsymptoticConstants>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

impl<'a> Reduced<'a> {
    pub fn new(solver: &'a ProfileSolver, eps: f64, rho: f64) -> Result<Reduced<'a>> {
        if !(eps > 0.0 && rho > 0.0) {
            return Err(Error::Config(format!("need eps > 0 and rho > 0, got {eps}, {rho}")));
        }
        let d_inf = d_infinity(solver.potential())?;
        Ok(Reduced { solver, eps, rho, d_inf, asymptotics: None })
    }

    pub fn with_asymptotics(mut self, c: AsymptoticConstants) -> Self {
        self.asymptotics = Some(c);
        self
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn d_inf(&self) -> f64 {
        self.d_inf
    }

    pub fn solver(&self) -> &ProfileSolver {
        self.solver
    }

    pub fn layers(&self, h: Vec<f64>) -> Result<LayerVector> {
        LayerVector::new(h, self.eps, self.rho)
    }

    fn alpha_ratio(&self, r: f64, b: Branch, mode: PStarMode) -> Result<f64> {
        match mode {
            PStarMode::Exact => Ok(self.solver.alpha_beta(r, b)?.0),
            PStarMode::Asymptotic => match &self.asymptotics {
                Some(c) => Ok(c.alpha(r, b)),
                None => Err(Error::Config("asymptotic mode needs calibrated constants".into())),
            },
        }
    }

    /// alpha of gaps 1..=N+1.
    pub fn gap_alphas(&self, h: &LayerVector, mode: PStarMode) -> Result<Vec<f64>> {
        (1..=h.n() + 1).map(|k| self.alpha_ratio(self.eps / h.spacing(k), Branch::of_gap(k), mode)).collect()
    }

    /// P*_j = eps / D_inf (alpha^{j+1/2} - alpha^{j-1/2}).
    pub fn pstar(&self, h: &LayerVector, mode: PStarMode) -> Result<Vec<f64>> {
        let a = self.gap_alphas(h, mode)?;
        let c = self.eps / self.d_inf;
        Ok(a.windows(2).map(|w| c * (w[1] - w[0])).collect())
    }

    /// Sum of squared alpha jumps.
    pub fn psi(&self, h: &LayerVector) -> Result<f64> {
        let a = self.gap_alphas(h, PStarMode::Exact)?;
        Ok(a.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum())
    }

    /// W_b(s) = int_{s_ref}^{s} alpha_b(1/sigma) / D_inf, on unit panels anchored at s_ref.
    pub fn w_branch(&self, s: f64, s_ref: f64, b: Branch) -> Result<f64> {
        let mut err = None;
        let mut f = |sigma: f64| match self.solver.alpha_beta(1.0 / sigma, b) {
            Ok((a, _)) => a,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        };
        let d = s - s_ref;
        let dir = if d < 0.0 { -1.0 } else { 1.0 };
        let full = floor(d.abs()) as usize;
        let mut total = 0.0;
        for i in 0..full {
            let lo = s_ref + dir * i as f64;
            total += gauss_legendre(&mut f, lo, lo + dir);
        }
        let lo = s_ref + dir * full as f64;
        if lo != s {
            total += gauss_legendre(&mut f, lo, s);
        }
        match err {
            Some(e) => Err(e),
            None => Ok(total / self.d_inf),
        }
    }

    /// W(h), anchored so that every W_j vanishes at the equal spacing 1/N.
    pub fn potential_w(&self, h: &LayerVector) -> Result<f64> {
        let n = h.n();
        let s_ref = 1.0 / (n as f64 * self.eps);
        let mut w = 0.0;
        for k in 1..=n + 1 {
            let weight = if k == 1 || k == n + 1 { 0.5 } else { 1.0 };
            w += weight * self.w_branch(h.spacing(k) / self.eps, s_ref, Branch::of_gap(k))?;
        }
        Ok(self.eps * self.eps * w)
    }

    pub fn grad_w(&self, h: &LayerVector) -> Result<Vec<f64>> {
        Ok(self.pstar(h, PStarMode::Exact)?.into_iter().map(|p| -p).collect())
    }

    /// Central differences of W with step `step`.
    pub fn grad_w_fd(&self, h: &LayerVector, step: f64) -> Result<Vec<f64>> {
        (0..h.n())
            .map(|j| {
                let mut hp = h.h().to_vec();
                let mut hm = h.h().to_vec();
                hp[j] += step;
                hm[j] -= step;
                let wp = self.potential_w(&h.with_positions(hp)?)?;
                let wm = self.potential_w(&h.with_positions(hm)?)?;
                Ok((wp - wm) / (2.0 * step))
            })
            .collect()
    }

    /// Dense second differences of W with step `step`.
    pub fn hessian_fd(&self, h: &LayerVector, step: f64) -> Result<DMatrix<f64>> {
        let n = h.n();
        let w_at = |di: usize, si: f64, dj: usize, sj: f64| -> Result<f64> {
            let mut v = h.h().to_vec();
            v[di] += si * step;
            v[dj] += sj * step;
            self.potential_w(&h.with_positions(v)?)
        };
        let w0 = self.potential_w(h)?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = (w_at(i, 1.0, i, 0.0)? - 2.0 * w0 + w_at(i, -1.0, i, 0.0)?) / (step * step);
            for j in i + 1..n {
                let v = (w_at(i, 1.0, j, 1.0)? - w_at(i, 1.0, j, -1.0)? - w_at(i, -1.0, j, 1.0)?
                    + w_at(i, -1.0, j, -1.0)?)
                    / (4.0 * step * step);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    fn alpha_slope(&self, r: f64, b: Branch) -> Result<f64> {
        let da = (1e-4 * r).max(1e-8);
        let ap = self.solver.alpha_beta(r + da, b)?.0;
        let am = self.solver.alpha_beta(r - da, b)?.0;
        Ok((ap - am) / (2.0 * da))
    }

    /// omega_k = W_k''(l_k / eps) = -alpha'(r) r^2 / D_inf for gaps 1..=N+1.
    pub fn omega(&self, h: &LayerVector) -> Result<Vec<f64>> {
        (1..=h.n() + 1)
            .map(|k| {
                let r = self.eps / h.spacing(k);
                Ok(-self.alpha_slope(r, Branch::of_gap(k))? * r * r / self.d_inf)
            })
            .collect()
    }

    /// Diagonal and off-diagonal of the tridiagonal Hessian B of W.
    pub fn hessian_b(&self, h: &LayerVector) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(assemble_b(&self.omega(h)?))
    }

    /// Solves ln alpha^{j+1/2} = ln alpha^{j-1/2} by damped Newton from `h0`.
    pub fn equilibrium_from(&self, h0: &LayerVector) -> Result<LayerVector> {
        let n = h0.n();
        let residual = |h: &LayerVector| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut la = Vec::with_capacity(n + 1);
            let mut kap = Vec::with_capacity(n + 1);
            for k in 1..=n + 1 {
                let ell = h.spacing(k);
                let r = self.eps / ell;
                let b = Branch::of_gap(k);
                let a = self.solver.alpha_beta(r, b)?.0;
                la.push(log(a));
                kap.push(self.alpha_slope(r, b)? * r * r / (self.eps * a));
            }
            let f = la.windows(2).map(|w| w[1] - w[0]).collect();
            Ok((f, kap))
        };
        let mut h = h0.clone();
        let (mut f, mut kap) = residual(&h)?;
        for _ in 0..100 {
            let diag: Vec<f64> = (0..n)
                .map(|i| {
                    let c_right = if i + 1 == n { 2.0 } else { 1.0 };
                    let c_left = if i == 0 { 2.0 } else { 1.0 };
                    c_right * kap[i + 1] + c_left * kap[i]
                })
                .collect();
            let sup: Vec<f64> = (0..n.saturating_sub(1)).map(|i| -kap[i + 1]).collect();
            let sub: Vec<f64> = (1..n).map(|i| -kap[i]).collect();
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let step = thomas(&sub, &diag, &sup, &rhs)?;
            let f_norm = inf_norm(&f);
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = h.h().iter().zip(&step).map(|(x, d)| x + lambda * d).collect();
                if let Ok(cand) = h.with_positions(trial) {
                    if let Ok((fc, kc)) = residual(&cand) {
                        if inf_norm(&fc) < f_norm || inf_norm(&fc) == 0.0 {
                            accepted = Some((cand, fc, kc));
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            let done = inf_norm(&step) * lambda < 1e-15;
            match accepted {
                Some((c, fc, kc)) => {
                    h = c;
                    f = fc;
                    kap = kc;
                }
                None => break,
            }
            if done || inf_norm(&f) < 1e-14 {
                break;
            }
        }
        if inf_norm(&f) > 1e-9 {
            return Err(Error::NoEquilibrium(format!("Newton stalled with log-residual {:e}", inf_norm(&f))));
        }
        Ok(h)
    }

    /// Equilibrium by bisection on l_- with l_- + l_+ = 2/N, polished by Newton on P* = 0.
    pub fn equilibrium(&self, n: usize) -> Result<LayerVector> {
        if n == 0 {
            return Err(Error::Config("need at least one layer".into()));
        }
        let total = 2.0 / n as f64;
        let floor_of = |b: Branch| (self.eps / self.rho).max(self.eps / self.solver.r_max(b)) * (1.0 + 1e-12);
        let lo = floor_of(Branch::Minus);
        let hi = total - floor_of(Branch::Plus);
        if !(lo < hi) {
            return Err(Error::NoEquilibrium(format!("no admissible spacings in Omega_rho at eps = {}", self.eps)));
        }
        let phi = |lm: f64| -> f64 {
            let ap = self.solver.alpha_beta(self.eps / (total - lm), Branch::Plus);
            let am = self.solver.alpha_beta(self.eps / lm, Branch::Minus);
            match (ap, am) {
                (Ok(p), Ok(m)) => log(p.0) - log(m.0),
                _ => f64::NAN,
            }
        };
        let (flo, fhi) = (phi(lo), phi(hi));
        if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
            return Err(Error::NoEquilibrium("spacing balance not bracketed in Omega_rho".into()));
        }
        let l_minus = bisect(phi, lo, hi, 1e-16)?;
        let l_plus = total - l_minus;
        let mut h = Vec::with_capacity(n);
        let mut x = 0.5 * l_minus;
        h.push(x);
        for j in 2..=n {
            x += if j % 2 == 1 { l_minus } else { l_plus };
            h.push(x);
        }
        let he = self.equilibrium_from(&self.layers(h)?)?;
        let p = inf_norm(&self.pstar(&he, PStarMode::Exact)?);
        if p > 1e-14 {
            return Err(Error::NoEquilibrium(format!("residual |P*| = {p:e} above 1e-14")));
        }
        let psi = self.psi(&he)?;
        if psi > 1e-25 {
            return Err(Error::NoEquilibrium(format!("barrier {psi:e} above 1e-25")));
        }
        Ok(he)
    }

    /// Spectrum of the linearisation of tau h'' + gamma h' = P*(h) at `he`.
    pub fn spectrum(&self, he: &LayerVector, tau: f64, gamma: f64) -> Result<SpectrumReport> {
        let omega = self.omega(he)?;
        spectrum_from_omega(omega, tau, gamma)
    }

    fn rhs(&self, h: &[f64], mode: PStarMode) -> Result<Vec<f64>> {
        self.pstar(&self.layers(h.to_vec())?, mode)
    }

    fn energy_at(&self, h: &[f64], eta: &[f64], tau: f64) -> Result<f64> {
        let kin: f64 = eta.iter().map(|v| v * v).sum::<f64>() * 0.5 * tau;
        Ok(kin + self.potential_w(&self.layers(h.to_vec())?)?)
    }

    /// Adaptive Dormand-Prince integration of h' = P*(h) / gamma0.
    fn parabolic_core(&self, h0: &LayerVector, t_end: f64, gamma0: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
        validate_run(t_end, opts)?;
        let sign = if opts.reverse { -1.0 } else { 1.0 } / gamma0;
        let f = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.rhs(y, opts.mode)?.into_iter().map(|p| sign * p).collect()) };
        let mut y = h0.h().to_vec();
        let mut k1 = f(&y)?;
        let mut traj = Trajectory::default();
        let push = |traj: &mut Trajectory, t: f64, y: &[f64], k: &[f64]| -> Result<()> {
            traj.t.push(t);
            traj.h.push(y.to_vec());
            traj.eta.push(k.to_vec());
            if opts.record_energy {
                let w = self.potential_w(&self.layers(y.to_vec())?)?;
                traj.energy.push(w);
            }
            Ok(())
        };
        push(&mut traj, 0.0, &y, &k1)?;
        let mut t = 0.0;
        let mut dt = opts.dt_out.min(t_end);
        let mut next_out = opts.dt_out.min(t_end);
        let dt_min = 1e-12 * t_end.max(1.0);
        while t < t_end {
            if traj.steps + traj.rejected >= opts.max_steps {
                return Err(Error::Config(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
            }
            let clip = next_out - t;
            let hit = dt >= clip;
            let h_step = if hit { clip } else { dt };
            match dopri_step(&f, &y, &k1, h_step) {
                Ok((y_new, k_new, err_vec)) => {
                    let err = scaled_error(&err_vec, &y, &y_new, opts);
                    if err <= 1.0 {
                        t = if hit { next_out } else { t + h_step };
                        y = y_new;
                        k1 = k_new;
                        traj.steps += 1;
                        if hit {
                            push(&mut traj, t, &y, &k1)?;
                            next_out = (next_out + opts.dt_out).min(t_end);
                        }
                        let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                        if !hit || grow < 1.0 {
                            dt = h_step * grow;
                        }
                    } else {
                        traj.rejected += 1;
                        dt = h_step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
                    }
                }
                Err(e) => {
                    traj.rejected += 1;
                    dt = 0.5 * h_step;
                    if dt < dt_min {
                        if t > traj.t[traj.t.len() - 1] {
                            push(&mut traj, t, &y, &k1)?;
                        }
                        traj.event = Some(domain_event(self, t, &y, &e));
                        return Ok(traj);
                    }
                }
            }
        }
        Ok(traj)
    }

    pub fn integrate_parabolic(&self, h0: &LayerVector, t_end: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
        self.parabolic_core(h0, t_end, 1.0, opts)
    }

    /// ETDRK4 for tau h'' + gamma h' = P*(h), with step doubling for error control.
    pub fn integrate_hyperbolic(
        &self,
        h0: &LayerVector,
        eta0: &[f64],
        tau: f64,
        gamma: f64,
        t_end: f64,
        opts: &IntegrateOptions,
    ) -> Result<Trajectory> {
        validate_run(t_end, opts)?;
        if !(tau > 0.0 && gamma > 0.0) {
            return Err(Error::Config(format!("need tau > 0 and gamma > 0, got {tau}, {gamma}")));
        }
        if eta0.len() != h0.n() {
            return Err(Error::Config(format!("eta0 has {} entries for {} layers", eta0.len(), h0.n())));
        }
        let sign = if opts.reverse { -1.0 } else { 1.0 };
        let force = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.rhs(y, opts.mode)?.into_iter().map(|p| sign * p / tau).collect()) };
        let c = -gamma / tau;
        let mut y = h0.h().to_vec();
        let mut eta = eta0.to_vec();
        let mut traj = Trajectory::default();
        let push = |traj: &mut Trajectory, t: f64, y: &[f64], eta: &[f64]| -> Result<()> {
            traj.t.push(t);
            traj.h.push(y.to_vec());
            traj.eta.push(eta.to_vec());
            if opts.record_energy {
                traj.energy.push(self.energy_at(y, eta, tau)?);
            }
            Ok(())
        };
        push(&mut traj, 0.0, &y, &eta)?;
        let mut t = 0.0;
        let mut dt = opts.dt_out.min(t_end).min(10.0 * tau / gamma);
        let mut next_out = opts.dt_out.min(t_end);
        let dt_min = 1e-12 * t_end.max(1.0);
        while t < t_end {
            if traj.steps + traj.rejected >= opts.max_steps {
                return Err(Error::Config(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
            }
            let clip = next_out - t;
            let hit = dt >= clip;
            let h_step = if hit { clip } else { dt };
            let attempt = (|| -> Result<_> {
                let big = etdrk4_step(&force, c, &y, &eta, h_step)?;
                let mid = etdrk4_step(&force, c, &y, &eta, 0.5 * h_step)?;
                let two = etdrk4_step(&force, c, &mid.0, &mid.1, 0.5 * h_step)?;
                Ok((big, two))
            })();
            match attempt {
                Ok((big, two)) => {
                    let mut err: f64 = 0.0;
                    for i in 0..y.len() {
                        let sh = opts.atol + opts.rtol * two.0[i].abs().max(y[i].abs());
                        err = err.max((two.0[i] - big.0[i]).abs() / 15.0 / sh);
                        let ve = tau * (two.1[i] - big.1[i]).abs() / 15.0;
                        let sv = opts.atol + opts.rtol * tau * two.1[i].abs().max(eta[i].abs());
                        err = err.max(ve / sv);
                    }
                    if err <= 1.0 {
                        t = if hit { next_out } else { t + h_step };
                        y = two.0;
                        eta = two.1;
                        traj.steps += 1;
                        if hit {
                            push(&mut traj, t, &y, &eta)?;
                            next_out = (next_out + opts.dt_out).min(t_end);
                        }
                        let grow = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 4.0) };
                        if !hit || grow < 1.0 {
                            dt = h_step * grow;
                        }
                    } else {
                        traj.rejected += 1;
                        dt = h_step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
                    }
                }
                Err(e) => {
                    traj.rejected += 1;
                    dt = 0.5 * h_step;
                    if dt < dt_min {
                        if t > traj.t[traj.t.len() - 1] {
                            push(&mut traj, t, &y, &eta)?;
                        }
                        traj.event = Some(domain_event(self, t, &y, &e));
                        return Ok(traj);
                    }
                }
            }
        }
        Ok(traj)
    }

    /// Hyperbolic runs for each tau against the parabolic run h' = P*(h) / gamma(0).
    pub fn compare_relaxation<G: Fn(f64) -> f64>(
        &self,
        h0: &LayerVector,
        eta0: &[f64],
        taus: &[f64],
        t_end: f64,
        gamma_of: G,
        t1: f64,
        opts: &IntegrateOptions,
    ) -> Result<ComparisonSeries> {
        if !(t1 > 0.0 && t1 < t_end) {
            return Err(Error::Config(format!("need 0 < t1 < T, got t1 = {t1}")));
        }
        let gamma0 = gamma_of(0.0);
        let plain = IntegrateOptions { record_energy: false, reverse: false, ..*opts };
        let para = self.parabolic_core(h0, t_end, gamma0, &plain)?;
        let entries = taus
            .iter()
            .map(|&tau| {
                let gamma = gamma_of(tau);
                let hyp = self.integrate_hyperbolic(h0, eta0, tau, gamma, t_end, &plain)?;
                Ok(compare_entry(&para, &hyp, tau, gamma, t1))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComparisonSeries { taus: taus.to_vec(), t1, gamma0, entries })
    }
}

/// Builds one comparison entry from a parabolic and a hyperbolic trajectory on the same samples.
pub fn compare_entry(para: &Trajectory, hyp: &Trajectory, tau: f64, gamma: f64, t1: f64) -> ComparisonEntry {
    let m = para.t.len().min(hyp.t.len());
    let t: Vec<f64> = hyp.t[..m].to_vec();
    let h_err: Vec<f64> = (0..m).map(|i| inf_dist(&hyp.h[i], &para.h[i])).collect();
    let eta_err: Vec<f64> = (0..m).map(|i| inf_dist(&hyp.eta[i], &para.eta[i])).collect();
    let e_tau: Vec<f64> = (0..m).map(|i| gamma * h_err[i] + tau * eta_err[i]).collect();
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, &b| a.max(b));
    let int_eta_err = (1..m).map(|i| 0.5 * (t[i] - t[i - 1]) * (eta_err[i] + eta_err[i - 1])).sum();
    let after: Vec<f64> = (0..m).filter(|&i| t[i] >= t1).map(|i| eta_err[i]).collect();
    let before: Vec<f64> = (0..m).filter(|&i| t[i] < t1).map(|i| eta_err[i]).collect();
    ComparisonEntry {
        tau,
        gamma,
        sup_e: sup(&e_tau),
        sup_h_err: sup(&h_err),
        int_eta_err,
        sup_eta_err_after_t1: sup(&after),
        sup_eta_err_before_t1: sup(&before),
        truncated_at: [&para.event, &hyp.event].iter().filter_map(|e| e.as_ref().map(|e| e.t)).reduce(f64::min),
        t,
        h_err,
        eta_err,
        e_tau,
    }
}

/// B from omega: B_11 = 2 w_1 + w_2, B_jj = w_j + w_{j+1}, B_NN = w_N + 2 w_{N+1}, B_{j,j+1} = -w_{j+1}.
pub fn assemble_b(omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = omega.len() - 1;
    let diag = (0..n)
        .map(|i| {
            let left = if i == 0 { 2.0 } else { 1.0 };
            let right = if i + 1 == n { 2.0 } else { 1.0 };
            left * omega[i] + right * omega[i + 1]
        })
        .collect();
    let off = (1..n).map(|i| -omega[i]).collect();
    (diag, off)
}

/// (lambda+, lambda-) roots of tau l^2 + gamma l - mu^2 = 0, the small root in cancellation-free form.
pub fn lambda_pair(mu_sq: f64, tau: f64, gamma: f64) -> (f64, f64) {
    let s = gamma + sqrt(gamma * gamma + 4.0 * tau * mu_sq);
    (2.0 * mu_sq / s, -s / (2.0 * tau))
}

pub fn spectrum_from_omega(omega: Vec<f64>, tau: f64, gamma: f64) -> Result<SpectrumReport> {
    if !(tau > 0.0 && gamma > 0.0) {
        return Err(Error::Config(format!("need tau > 0 and gamma > 0, got {tau}, {gamma}")));
    }
    let (b_diag, b_off) = assemble_b(&omega);
    let neg_d: Vec<f64> = b_diag.iter().map(|v| -v).collect();
    let neg_o: Vec<f64> = b_off.iter().map(|v| -v).collect();
    let mu_sq = tridiagonal_eigenvalues(&neg_d, &neg_o)?;
    if let Some(m) = mu_sq.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::Structural(format!("B is not negative definite (eigenvalue {:e})", -m)));
    }
    let (lambda_plus, lambda_minus): (Vec<f64>, Vec<f64>) = mu_sq.iter().map(|&m| lambda_pair(m, tau, gamma)).unzip();
    let n = b_diag.len();
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, n + i)] = -gamma / tau;
        j[(n + i, i)] = -b_diag[i] / tau;
        if i + 1 < n {
            j[(n + i, i + 1)] = -b_off[i] / tau;
            j[(n + i + 1, i)] = -b_off[i] / tau;
        }
    }
    let mut dense: Vec<f64> = j.complex_eigenvalues().iter().map(|z| z.re).collect();
    dense.sort_by(f64::total_cmp);
    let mut closed: Vec<f64> = lambda_plus.iter().chain(&lambda_minus).copied().collect();
    closed.sort_by(f64::total_cmp);
    let radius = closed.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let dense_deviation = dense.iter().zip(&closed).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / radius;
    if !(dense_deviation <= 1e-8) {
        return Err(Error::Structural(format!("dense Jacobian eigenvalues deviate by {dense_deviation:e}")));
    }
    Ok(SpectrumReport { omega, b_diag, b_off, mu_sq, lambda_plus, lambda_minus, tau, gamma, dense_deviation })
}

/// Compares E_tau(T) - E_tau(0) with -int gamma |eta|^2 over the samples; returns (change, dissipation).
pub fn energy_balance(traj: &Trajectory, gamma: f64) -> Result<(f64, f64)> {
    let m = traj.energy.len();
    if m < 3 || m != traj.t.len() {
        return Err(Error::Config("energy balance needs at least three energy samples".into()));
    }
    let q: Vec<f64> = traj.eta.iter().map(|e| gamma * e.iter().map(|v| v * v).sum::<f64>()).collect();
    let change = traj.energy[m - 1] - traj.energy[0];
    Ok((change, -simpson(&traj.t, &q)))
}

/// Composite Simpson on possibly uneven samples, pairing intervals; a trailing interval uses the
/// three-point rule over the last two intervals.
pub fn simpson(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    if n < 3 {
        return (1..n).map(|i| 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1])).sum();
    }
    let pair = |i: usize| -> f64 {
        let (h0, h1) = (t[i + 1] - t[i], t[i + 2] - t[i + 1]);
        let s = h0 + h1;
        s / 6.0 * ((2.0 - h1 / h0) * y[i] + s * s / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2])
    };
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        total += pair(i);
        i += 2;
    }
    if i + 1 < n {
        // last interval [t_{n-2}, t_{n-1}] from the quadratic through the last three samples
        let (a, b, c) = (n - 3, n - 2, n - 1);
        let (h0, h1) = (t[b] - t[a], t[c] - t[b]);
        total += h1 / 6.0 * ((3.0 - h1 / (h0 + h1)) * y[c] + (3.0 + h1 / h0) * y[b] - h1 * h1 / (h0 * (h0 + h1)) * y[a]);
    }
    total
}

fn validate_run(t_end: f64, opts: &IntegrateOptions) -> Result<()> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("need a positive final time, got {t_end}")));
    }
    if !(opts.dt_out > 0.0 && opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Config("dt_out, rtol and atol must be positive".into()));
    }
    Ok(())
}

fn domain_event(red: &Reduced, t: f64, y: &[f64], e: &Error) -> DomainEvent {
    let ell_min = red.layers(y.to_vec()).map(|h| h.ell_min()).unwrap_or(f64::NAN);
    DomainEvent { t, ell_min, message: format!("{e}") }
}

fn scaled_error(err: &[f64], y: &[f64], y_new: &[f64], opts: &IntegrateOptions) -> f64 {
    err.iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| e.abs() / (opts.atol + opts.rtol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

type StepOut = (Vec<f64>, Vec<f64>, Vec<f64>);

/// One Dormand-Prince step with first-same-as-last; returns (y, f(y), error estimate).
fn dopri_step<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: &F, y: &[f64], k1: &[f64], dt: f64) -> Result<StepOut> {
    let n = y.len();
    let mut ks: Vec<Vec<f64>> = vec![k1.to_vec()];
    for row in DP_A[..5].iter() {
        let stage: Vec<f64> = (0..n)
            .map(|i| y[i] + dt * ks.iter().zip(row.iter()).map(|(k, a)| a * k[i]).sum::<f64>())
            .collect();
        ks.push(f(&stage)?);
    }
    let y_new: Vec<f64> = (0..n).map(|i| y[i] + dt * ks[..6].iter().zip(&DP_A[5]).map(|(k, a)| a * k[i]).sum::<f64>()).collect();
    ks.push(f(&y_new)?);
    let err = (0..n).map(|i| dt * ks.iter().zip(&DP_E).map(|(k, e)| e * k[i]).sum::<f64>()).collect();
    let k_last = ks.pop().unwrap_or_default();
    Ok((y_new, k_last, err))
}

/// phi_0..phi_4 at z.
pub fn phi_functions(z: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    if z.abs() < 1.0 {
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = 1.0;
            for m in 1..=k {
                term /= m as f64;
            }
            let mut s = term;
            for m in 1..30 {
                term *= z / (m + k) as f64;
                s += term;
            }
            *o = s;
        }
    } else {
        out[0] = exp(z);
        let mut fact = 1.0;
        for k in 0..4 {
            out[k + 1] = (out[k] - 1.0 / fact) / z;
            fact *= (k + 1) as f64;
        }
    }
    out
}

/// ETDRK4 step for h' = eta, eta' = c eta + n(h).
fn etdrk4_step<F: Fn(&[f64]) -> Result<Vec<f64>>>(
    force: &F,
    c: f64,
    h: &[f64],
    eta: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = h.len();
    let half = 0.5 * dt;
    let p2 = phi_functions(c * half);
    let p = phi_functions(c * dt);
    // exp(L s) (h, eta) + s phi_1(L s) (0, g)
    let advance = |h: &[f64], eta: &[f64], g: &[f64], s: f64, ph: &[f64; 5]| -> (Vec<f64>, Vec<f64>) {
        let hh = (0..n).map(|i| h[i] + s * ph[1] * eta[i] + s * s * ph[2] * g[i]).collect();
        let ee = (0..n).map(|i| ph[0] * eta[i] + s * ph[1] * g[i]).collect();
        (hh, ee)
    };
    let nu = force(h)?;
    let (ah, ae) = advance(h, eta, &nu, half, &p2);
    let na = force(&ah)?;
    let (bh, _) = advance(h, eta, &na, half, &p2);
    let nb = force(&bh)?;
    let g: Vec<f64> = (0..n).map(|i| 2.0 * nb[i] - nu[i]).collect();
    let (ch, _) = advance(&ah, &ae, &g, half, &p2);
    let nc = force(&ch)?;
    let f1 = p[1] - 3.0 * p[2] + 4.0 * p[3];
    let f2 = p[2] - 2.0 * p[3];
    let f3 = -p[2] + 4.0 * p[3];
    let g1 = p[2] - 3.0 * p[3] + 4.0 * p[4];
    let g2 = p[3] - 2.0 * p[4];
    let g3 = -p[3] + 4.0 * p[4];
    let h_new = (0..n)
        .map(|i| h[i] + dt * p[1] * eta[i] + dt * dt * (g1 * nu[i] + 2.0 * g2 * (na[i] + nb[i]) + g3 * nc[i]))
        .collect();
    let e_new = (0..n)
        .map(|i| p[0] * eta[i] + dt * (f1 * nu[i] + 2.0 * f2 * (na[i] + nb[i]) + f3 * nc[i]))
        .collect();
    Ok((h_new, e_new))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_pair_closed_form() {
        let (lp, lm) = lambda_pair(1.0, 0.25, 1.0);
        assert!((lp - (-1.0 + sqrt(2.0)) / 0.5).abs() < 1e-14);
        assert!((lm - (-1.0 - sqrt(2.0)) / 0.5).abs() < 1e-14);
    }

    #[test]
    fn phi_branches_meet() {
        let a = phi_functions(0.999_999_999);
        let b = phi_functions(1.000_000_001);
        for k in 0..5 {
            assert!((a[k] - b[k]).abs() < 1e-8, "phi_{k}");
        }
        let w = phi_functions(-3.0);
        assert!((w[2] - (exp(-3.0) - 1.0 + 3.0) / 9.0).abs() < 1e-15);
        let z = phi_functions(0.0);
        assert_eq!(z, [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0]);
    }

    #[test]
    fn simpson_exact_on_quadratics() {
        let t = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0];
        let y: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let exact = 1.0 - 0.5 + 2.0;
        assert!((simpson(&t, &y) - exact).abs() < 1e-13);
        assert!((simpson(&t[..5], &y[..5]) - (0.9f64.powi(3) - 0.405 + 1.8)).abs() < 1e-13);
    }

    #[test]
    fn b_assembly_n1() {
        let (d, o) = assemble_b(&[-1.0, -3.0]);
        assert_eq!(d, vec![-8.0]);
        assert!(o.is_empty());
    }
}
