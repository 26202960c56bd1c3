//! The base manifold of glued profiles u^h, its tangent vectors, the barrier Psi,
//! the matrix D(h), the energy E^h and the projection u -> (h, w).

use crate::error::{Error, Result};
use crate::grid::{inner, laplacian_into, norm_inf, Grid, GridField, Rule, Stencil};
use crate::linalg::tridiagonal_eigenvalues;
use crate::model::Potential;
use crate::profile::{Branch, ProfileSolution, ProfileSolver};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Layer positions 0 < h_1 < ... < h_N < 1 with every spacing above eps / rho.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerVector {
    h: Vec<f64>,
    eps: f64,
    rho: f64,
}

impl LayerVector {
    pub fn new(h: Vec<f64>, eps: f64, rho: f64) -> Result<LayerVector> {
        if h.is_empty() {
            return Err(Error::Config("need at least one layer".into()));
        }
        if !(eps > 0.0 && rho > 0.0) {
            return Err(Error::Config(format!("need eps > 0 and rho > 0, got {eps}, {rho}")));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfDomain("non-finite layer position".into()));
        }
        if !(h[0] > 0.0 && h[h.len() - 1] < 1.0) || h.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::OutOfDomain(format!("positions {h:?} not strictly ordered in (0, 1)")));
        }
        let lv = LayerVector { h, eps, rho };
        let gap = eps / rho;
        for k in 1..=lv.n() + 1 {
            let l = lv.spacing(k);
            if !(l > gap) {
                return Err(Error::OutOfDomain(format!("spacing l_{k} = {l} <= eps/rho = {gap}")));
            }
        }
        Ok(lv)
    }

    pub fn with_positions(&self, h: Vec<f64>) -> Result<LayerVector> {
        LayerVector::new(h, self.eps, self.rho)
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// h_j for j = 0..=N+1, with the reflected ghosts h_0 = -h_1 and h_{N+1} = 2 - h_N.
    pub fn node(&self, j: usize) -> f64 {
        let n = self.n();
        match j {
            0 => -self.h[0],
            j if j == n + 1 => 2.0 - self.h[n - 1],
            j => self.h[j - 1],
        }
    }

    /// h_{j+1/2} for j = 0..=N; exactly 0 and 1 at the ends.
    pub fn half(&self, j: usize) -> f64 {
        let n = self.n();
        if j == 0 {
            0.0
        } else if j == n {
            1.0
        } else {
            0.5 * (self.h[j - 1] + self.h[j])
        }
    }

    /// l_k = h_k - h_{k-1} for k = 1..=N+1.
    pub fn spacing(&self, k: usize) -> f64 {
        let n = self.n();
        if k == 1 {
            2.0 * self.h[0]
        } else if k == n + 1 {
            2.0 * (1.0 - self.h[n - 1])
        } else {
            self.h[k - 1] - self.h[k - 2]
        }
    }

    pub fn spacings(&self) -> Vec<f64> {
        (1..=self.n() + 1).map(|k| self.spacing(k)).collect()
    }

    pub fn ell_min(&self) -> f64 {
        self.spacings().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// l^h - eps / rho.
    pub fn ends_margin(&self) -> f64 {
        self.ell_min() - self.eps / self.rho
    }
}

/// Order n of the smoothstep: chi'(x) is proportional to (1 - x^2)^n, so chi is C^n.
pub const SMOOTH_ORDER: usize = 4;

/// Polynomial smoothstep on [-1, 1] with chi(0) = 1/2.
pub fn smooth_step(x: f64) -> f64 {
    smooth_step_derivs(x).0
}

/// (chi, chi', chi'').
pub fn smooth_step_derivs(x: f64) -> (f64, f64, f64) {
    if x <= -1.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let n = SMOOTH_ORDER;
    let s = 0.5 * (x + 1.0);
    let t = 1.0 - s;
    // S(s) = s^{n+1} sum_k C(n+k, k) t^k and S'(s) = c s^n t^n
    let (mut sum, mut binom, mut tk) = (0.0, 1.0, 1.0);
    for k in 0..=n {
        sum += binom * tk;
        binom = binom * (n + k + 1) as f64 / (k + 1) as f64;
        tk *= t;
    }
    let v = if s <= 0.5 { libm::pow(s, (n + 1) as f64) * sum } else { 1.0 - smooth_step_derivs(-x).0 };
    let mut c = 1.0;
    for k in 0..n {
        c = c * (2 * n + 1 - k) as f64 / (k + 1) as f64;
    }
    c *= (n + 1) as f64;
    let st = libm::pow(s * t, (n - 1) as f64);
    let d1 = 0.5 * c * st * s * t;
    let d2 = 0.25 * c * n as f64 * st * (1.0 - 2.0 * s);
    (v, d1, d2)
}

/// The N + 1 profiles of one configuration h.
pub struct Skeleton<'a> {
    solver: &'a ProfileSolver,
    pub h: LayerVector,
    gaps: Vec<Arc<ProfileSolution>>,
}

impl<'a> Skeleton<'a> {
    pub fn new(solver: &'a ProfileSolver, h: &LayerVector) -> Result<Skeleton<'a>> {
        let gaps = (1..=h.n() + 1)
            .map(|k| solver.profile(h.eps() / h.spacing(k), Branch::of_gap(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Skeleton { solver, h: h.clone(), gaps })
    }

    /// alpha^{k-1/2} of gap k.
    pub fn alpha(&self, k: usize) -> f64 {
        self.gaps[k - 1].alpha
    }

    /// phi^k with its first two x-derivatives at absolute position x.
    fn phi(&self, k: usize, x: f64) -> Result<(f64, f64, f64)> {
        let p = &self.gaps[k - 1];
        let ell = self.h.spacing(k);
        let (v, d) = p.eval(x - self.h.half(k - 1), ell)?;
        let e = p.eps_for(ell);
        Ok((v, d, self.solver.potential().f(v) / (e * e)))
    }

    /// Index j with x in I_j = [h_{j-1/2}, h_{j+1/2}].
    fn cell(&self, x: f64) -> usize {
        let n = self.h.n();
        let mut j = 1;
        while j < n && x > self.h.half(j) {
            j += 1;
        }
        j
    }

    /// (u^h, u^h_x, u^h_xx) at x.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64)> {
        let j = self.cell(x);
        let eps = self.h.eps();
        let s = (x - self.h.node(j)) / eps;
        if s <= -1.0 {
            return self.phi(j, x);
        }
        if s >= 1.0 {
            return self.phi(j + 1, x);
        }
        let a = self.phi(j, x)?;
        let b = self.phi(j + 1, x)?;
        let (c, c1, c2) = smooth_step_derivs(s);
        let (cx, cxx) = (c1 / eps, c2 / (eps * eps));
        let u = a.0 + c * (b.0 - a.0);
        let ux = a.1 + c * (b.1 - a.1) + cx * (b.0 - a.0);
        let uxx = a.2 + c * (b.2 - a.2) + 2.0 * cx * (b.1 - a.1) + cxx * (b.0 - a.0);
        Ok((u, ux, uxx))
    }

    /// gamma^j(x): cutoff equal to 1 on [h_{j-1/2} + 2 eps, h_{j+1/2} - 2 eps].
    pub fn cutoff(&self, j: usize, x: f64) -> f64 {
        let (lo, hi) = (self.h.half(j - 1), self.h.half(j));
        if x < lo || x > hi {
            return 0.0;
        }
        let eps = self.h.eps();
        smooth_step((x - lo - eps) / eps) * (1.0 - smooth_step((x - hi + eps) / eps))
    }
}

/// Grid-level manifold quantities.
#[derive(Clone, Debug)]
pub struct UhFields {
    pub u: GridField,
    pub ux: GridField,
    pub uxx: GridField,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMode {
    AlphaFormula,
    InnerProduct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Largest admissible sup-norm of the remainder w.
    pub sigma: f64,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions { tol: 1e-10, max_iter: 50, max_halvings: 8, sigma: 0.2 }
    }
}

/// Coordinates (h, w, v) of a state near the manifold, with u^h kept for reuse.
#[derive(Clone, Debug)]
pub struct ManifoldCoords {
    pub h: LayerVector,
    pub w: GridField,
    pub v: GridField,
    pub uh: GridField,
    pub iterations: usize,
    pub residual: f64,
}

impl ManifoldCoords {
    pub fn with_velocity(mut self, v: GridField) -> Self {
        self.v = v;
        self
    }
}

/// Sign-change positions of `u` by linear interpolation; a node equal to 0 counts as negative.
pub fn zero_crossings(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let dx = grid.dx();
    let mut out = Vec::new();
    for i in 0..u.len() - 1 {
        let (a, b) = (u[i], u[i + 1]);
        if (a > 0.0) != (b > 0.0) {
            out.push(grid.x(i) + dx * a / (a - b));
        }
    }
    out
}

/// L(u) = -eps^2 u_xx + f(u) with fourth-order central differences and Neumann reflection.
pub fn residual_l(u: &GridField, pot: &Potential, eps: f64) -> GridField {
    let mut lap = vec![0.0; u.values.len()];
    laplacian_into(&u.values, u.grid.dx(), Stencil::Fourth, &mut lap);
    GridField {
        grid: u.grid,
        values: u.values.iter().zip(&lap).map(|(&v, &l)| -eps * eps * l + pot.f(v)).collect(),
    }
}

pub struct Manifold<'a> {
    pub solver: &'a ProfileSolver,
    pub grid: Grid,
    pub rule: Rule,
    weights: Vec<f64>,
}

impl<'a> Manifold<'a> {
    pub fn new(solver: &'a ProfileSolver, grid: Grid) -> Manifold<'a> {
        Manifold::with_rule(solver, grid, Rule::Trapezoid)
    }

    pub fn with_rule(solver: &'a ProfileSolver, grid: Grid, rule: Rule) -> Manifold<'a> {
        Manifold { solver, grid, rule, weights: grid.weights(rule) }
    }

    pub fn potential(&self) -> &Potential {
        self.solver.potential()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        inner(a, b, &self.weights)
    }

    pub fn skeleton(&self, h: &LayerVector) -> Result<Skeleton<'a>> {
        self.grid.check_resolution(h.eps())?;
        Skeleton::new(self.solver, h)
    }

    pub fn build_uh_fields(&self, h: &LayerVector) -> Result<UhFields> {
        let sk = self.skeleton(h)?;
        let m = self.grid.m();
        let (mut u, mut ux, mut uxx) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 0..m {
            let (a, b, c) = sk.eval(self.grid.x(i))?;
            u[i] = a;
            ux[i] = b;
            uxx[i] = c;
        }
        let g = self.grid;
        Ok(UhFields { u: GridField { grid: g, values: u }, ux: GridField { grid: g, values: ux }, uxx: GridField { grid: g, values: uxx } })
    }

    pub fn build_uh(&self, h: &LayerVector) -> Result<GridField> {
        let sk = self.skeleton(h)?;
        let values = (0..self.grid.m()).map(|i| sk.eval(self.grid.x(i)).map(|t| t.0)).collect::<Result<Vec<_>>>()?;
        Ok(GridField { grid: self.grid, values })
    }

    fn tangents_from(&self, sk: &Skeleton, ux: &[f64]) -> Vec<GridField> {
        (1..=sk.h.n())
            .map(|j| GridField {
                grid: self.grid,
                values: (0..self.grid.m()).map(|i| -sk.cutoff(j, self.grid.x(i)) * ux[i]).collect(),
            })
            .collect()
    }

    /// k^h_j = -gamma^j u^h_x, j = 1..N.
    pub fn tangent_vectors(&self, h: &LayerVector) -> Result<Vec<GridField>> {
        let sk = self.skeleton(h)?;
        let f = self.build_uh_fields(h)?;
        Ok(self.tangents_from(&sk, &f.ux.values))
    }

    /// L(u^h) evaluated pointwise from the analytic second derivative.
    pub fn residual_exact(&self, h: &LayerVector) -> Result<GridField> {
        let f = self.build_uh_fields(h)?;
        let eps = h.eps();
        let pot = self.potential();
        Ok(GridField {
            grid: self.grid,
            values: f.u.values.iter().zip(&f.uxx.values).map(|(&u, &uxx)| -eps * eps * uxx + pot.f(u)).collect(),
        })
    }

    /// (alpha^{j+1/2})_{j=0..N}, i.e. the alpha of gaps 1..=N+1.
    pub fn gap_alphas(&self, h: &LayerVector) -> Result<Vec<f64>> {
        (1..=h.n() + 1)
            .map(|k| self.solver.alpha_beta(h.eps() / h.spacing(k), Branch::of_gap(k)).map(|t| t.0))
            .collect()
    }

    pub fn barrier_psi(&self, h: &LayerVector, mode: PsiMode) -> Result<f64> {
        match mode {
            PsiMode::AlphaFormula => {
                let a = self.gap_alphas(h)?;
                Ok(a.windows(2).map(|w| (w[0] - w[1]) * (w[0] - w[1])).sum())
            }
            PsiMode::InnerProduct => {
                let l = self.residual_exact(h)?;
                let k = self.tangent_vectors(h)?;
                Ok(k.iter().map(|kj| self.inner(&l.values, &kj.values)).map(|v| v * v).sum())
            }
        }
    }

    /// d u^h / d h_j by central differences with step `step`.
    pub fn uh_partials_step(&self, h: &LayerVector, step: f64) -> Result<Vec<GridField>> {
        (0..h.n())
            .map(|j| {
                let mut hp = h.h().to_vec();
                let mut hm = h.h().to_vec();
                hp[j] += step;
                hm[j] -= step;
                let up = self.build_uh(&h.with_positions(hp)?)?;
                let um = self.build_uh(&h.with_positions(hm)?)?;
                Ok(GridField {
                    grid: self.grid,
                    values: up.values.iter().zip(&um.values).map(|(a, b)| (a - b) / (2.0 * step)).collect(),
                })
            })
            .collect()
    }

    /// u^h_j with the default step 1e-6 eps.
    pub fn uh_partials(&self, h: &LayerVector) -> Result<Vec<GridField>> {
        self.uh_partials_step(h, 1e-6 * h.eps())
    }

    /// Second partial d^2 u^h / d h_j^2 by central differences with step 1e-3 eps.
    pub fn uh_second_partial(&self, h: &LayerVector, j: usize) -> Result<GridField> {
        let step = 1e-3 * h.eps();
        let mut hp = h.h().to_vec();
        let mut hm = h.h().to_vec();
        hp[j] += step;
        hm[j] -= step;
        let up = self.build_uh(&h.with_positions(hp)?)?;
        let u0 = self.build_uh(h)?;
        let um = self.build_uh(&h.with_positions(hm)?)?;
        Ok(GridField {
            grid: self.grid,
            values: (0..self.grid.m())
                .map(|i| (up.values[i] - 2.0 * u0.values[i] + um.values[i]) / (step * step))
                .collect(),
        })
    }

    fn assemble_d(&self, partials: &[GridField], k: &[GridField]) -> DMatrix<f64> {
        let n = k.len();
        DMatrix::from_fn(n, n, |i, j| self.inner(&partials[j].values, &k[i].values))
    }

    /// D_ij = <u^h_j, k^h_i>; fails unless strictly diagonally dominant by rows.
    pub fn matrix_d(&self, h: &LayerVector) -> Result<DMatrix<f64>> {
        let p = self.uh_partials(h)?;
        let k = self.tangent_vectors(h)?;
        let d = self.assemble_d(&p, &k);
        check_dominance(&d)?;
        Ok(d)
    }

    /// Newton projection of u onto the manifold starting from `guess`.
    pub fn project(&self, u: &GridField, guess: &LayerVector, opts: &ProjectOptions) -> Result<ManifoldCoords> {
        let n = guess.n();
        let crossings = zero_crossings(&self.grid, &u.values).len();
        if crossings != n {
            return Err(Error::ProjectionFailure { iterations: 0, residual: f64::INFINITY });
        }
        let mut h = guess.clone();
        let mut lu = self.matrix_d(&h)?.lu();
        let residual_of = |h: &LayerVector| -> Result<(DVector<f64>, UhFields, Vec<GridField>)> {
            let sk = self.skeleton(h)?;
            let f = self.build_uh_fields(h)?;
            let k = self.tangents_from(&sk, &f.ux.values);
            let w: Vec<f64> = u.values.iter().zip(&f.u.values).map(|(a, b)| a - b).collect();
            let r = DVector::from_iterator(n, k.iter().map(|kj| self.inner(&w, &kj.values)));
            Ok((r, f, k))
        };
        let (mut r, mut fields, _) = residual_of(&h)?;
        let mut res = r.amax();
        let mut last_ratio = 0.0;
        for it in 0..=opts.max_iter {
            if res <= opts.tol {
                let w = u.sub(&fields.u);
                if w.norm_inf() > opts.sigma {
                    return Err(Error::ProjectionFailure { iterations: it, residual: res });
                }
                return Ok(ManifoldCoords {
                    h,
                    w,
                    v: GridField::zeros(self.grid),
                    uh: fields.u,
                    iterations: it,
                    residual: res,
                });
            }
            if it == opts.max_iter {
                break;
            }
            if last_ratio > 0.25 {
                lu = self.matrix_d(&h)?.lu();
            }
            let step = lu.solve(&r).ok_or_else(|| Error::Degenerate("singular D in projection".into()))?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let trial: Vec<f64> = h.h().iter().zip(step.iter()).map(|(a, s)| a + scale * s).collect();
                let hn = h.with_positions(trial)?;
                let (rn, fn_, _) = residual_of(&hn)?;
                let resn = rn.amax();
                if resn < res || resn <= opts.tol {
                    last_ratio = resn / res;
                    h = hn;
                    r = rn;
                    fields = fn_;
                    res = resn;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(Error::ProjectionFailure { iterations: it + 1, residual: res });
            }
        }
        Err(Error::ProjectionFailure { iterations: opts.max_iter, residual: res })
    }

    /// E^h[w, v] = 1/2 int (eps^2 w_x^2 + f'(u^h) w^2) + tau/2 |v|^2 + eps tau <w, v>.
    ///
    /// The gradient term uses the second-order Neumann form -<w, D2 w>, the same
    /// operator whose constrained spectrum gives the coercivity constant.
    pub fn energy(&self, c: &ManifoldCoords, tau: f64) -> f64 {
        let eps = c.h.eps();
        let pot = self.potential();
        let w = &c.w.values;
        let mut lap = vec![0.0; w.len()];
        laplacian_into(w, self.grid.dx(), Stencil::Second, &mut lap);
        let wt = self.grid.weights(Rule::Trapezoid);
        let mut s = 0.0;
        for i in 0..w.len() {
            s += wt[i]
                * (-eps * eps * w[i] * lap[i] + pot.df(c.uh.values[i]) * w[i] * w[i] + tau * c.v.values[i] * c.v.values[i]
                    + 2.0 * eps * tau * w[i] * c.v.values[i]);
        }
        0.5 * s
    }

    /// Symmetrised second-order operator -eps^2 D2 + q as (diag, off) with weights W^{1/2}.
    fn symmetric_operator(&self, eps: f64, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.grid.m();
        let dx = self.grid.dx();
        let a = eps * eps / (dx * dx);
        let diag: Vec<f64> = (0..m).map(|i| 2.0 * a + q[i]).collect();
        // interior off-diagonals -a; the end rows carry -2a but the W^{1/2} similarity
        // with weights (dx/2, dx, ..., dx, dx/2) makes both ends -sqrt(2) a
        let off: Vec<f64> = (0..m - 1)
            .map(|i| if i == 0 || i == m - 2 { -core::f64::consts::SQRT_2 * a } else { -a })
            .collect();
        (diag, off)
    }

    /// Smallest eigenvalue of -eps^2 D2 + f'(u^h) without constraints.
    pub fn unconstrained_lambda(&self, h: &LayerVector) -> Result<f64> {
        let uh = self.build_uh(h)?;
        let q: Vec<f64> = uh.values.iter().map(|&u| self.potential().df(u)).collect();
        let (d, e) = self.symmetric_operator(h.eps(), &q);
        Ok(tridiagonal_eigenvalues(&d, &e)?[0])
    }

    /// Coercivity constant: smallest eigenvalue of -eps^2 D2 + f'(u^h) on the
    /// trapezoid-orthogonal complement of span{k^h_j}.
    pub fn coercivity_lambda(&self, h: &LayerVector) -> Result<f64> {
        let uh = self.build_uh(h)?;
        let q: Vec<f64> = uh.values.iter().map(|&u| self.potential().df(u)).collect();
        self.coercivity_with(h, &q)
    }

    /// As [`Manifold::coercivity_lambda`] with an arbitrary zeroth-order coefficient `q`.
    pub fn coercivity_with(&self, h: &LayerVector, q: &[f64]) -> Result<f64> {
        let m = self.grid.m();
        let (d, e) = self.symmetric_operator(h.eps(), q);
        let tw = self.grid.weights(Rule::Trapezoid);
        let root: Vec<f64> = tw.iter().map(|w| sqrt(*w)).collect();
        let k = self.tangent_vectors(h)?;
        let n = k.len();
        let mut basis = DMatrix::<f64>::zeros(m, n);
        for (j, kj) in k.iter().enumerate() {
            let mut col = DVector::from_iterator(m, kj.values.iter().zip(&root).map(|(a, r)| a * r));
            for _ in 0..2 {
                for p in 0..j {
                    let prev = basis.column(p).clone_owned();
                    let c = prev.dot(&col);
                    col -= prev * c;
                }
            }
            let nrm = col.norm();
            if nrm == 0.0 {
                return Err(Error::Degenerate("zero tangent vector".into()));
            }
            basis.set_column(j, &(col / nrm));
        }
        let mut s = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            s[(i, i)] = d[i];
            if i + 1 < m {
                s[(i, i + 1)] = e[i];
                s[(i + 1, i)] = e[i];
            }
        }
        let sq = &s * &basis;
        let qsq = basis.transpose() * &sq;
        let shift = 10.0 * (0..m).map(|i| d[i].abs() + 2.0 * e.get(i).map_or(0.0, |v| v.abs())).fold(0.0, f64::max);
        let qt = basis.transpose();
        let mut a = s;
        a -= &basis * sq.transpose();
        a -= &sq * &qt;
        a += &basis * (qsq + DMatrix::identity(n, n) * shift) * &qt;
        let ev = a.symmetric_eigenvalues();
        Ok(ev.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

pub fn check_dominance(d: &DMatrix<f64>) -> Result<()> {
    for i in 0..d.nrows() {
        let off: f64 = (0..d.ncols()).filter(|&j| j != i).map(|j| d[(i, j)].abs()).sum();
        if !(d[(i, i)] - off > 0.0) {
            return Err(Error::Degenerate(format!("row {i} of D is not diagonally dominant")));
        }
    }
    Ok(())
}

pub fn sup_norm(v: &[f64]) -> f64 {
    norm_inf(v)
}
