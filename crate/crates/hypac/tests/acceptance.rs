//! Acceptance criteria 1-11, one PASS/FAIL line each. Exits nonzero if any fails.

use hypac::config::{load_json, ExperimentPlan, PlanKind};
use hypac::experiments::{self, random_layers};
use hypac::io::Table;
use hypac::plan::{run_plan, Summary};
use hypac_core::grid::{Grid, Stencil};
use hypac_core::manifold::Manifold;
use hypac_core::model::{gamma_tau, Damping, ModelParams, ModelSpec, Potential};
use hypac_core::pde::{simulate, track_layers, Integrator, SimConfig, SimState, Simulator};
use hypac_core::profile::{Branch, ProfileSolver};
use hypac_core::reduced::{energy_balance, IntegrateOptions, PStarMode, Reduced};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = Result<Outcome, String>;

fn outcome(parts: &[(bool, String)]) -> Check {
    Ok(Outcome {
        pass: parts.iter().all(|p| p.0),
        detail: parts.iter().map(|(ok, s)| format!("{}{}", if *ok { "" } else { "!" }, s)).collect::<Vec<_>>().join("; "),
    })
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn quartic() -> ModelSpec {
    ModelSpec { potential: Potential::quartic(), damping: Damping::One }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn plan_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("plans").join(format!("{name}.json"))
}

fn load_plan(name: &str, out: &Path) -> Result<ExperimentPlan, String> {
    let mut p: ExperimentPlan = load_json(&plan_path(name)).map_err(fail)?;
    p.output_dir = out.to_path_buf();
    Ok(p)
}

fn check_value(s: &Summary, name: &str) -> Option<(f64, bool)> {
    s.checks.iter().find(|c| c.name == name).map(|c| (c.value, c.pass))
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let t = elapsed.as_secs_f64();
    (t < limit_s, format!("runtime {t:.2}s < {limit_s}s"))
}

fn c1_profile() -> Check {
    let start = Instant::now();
    let s = ProfileSolver::new(Potential::quartic()).map_err(fail)?;
    let pot = Potential::quartic();
    let eps = 0.02;
    let ell = eps / 0.04;
    let prof = s.profile(0.04, Branch::Plus).map_err(fail)?;
    let e = prof.eps_for(ell);
    let lim = 0.5 * ell;
    let hs = 0.05 * eps;
    let c = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let (mut res, mut fi) = (0.0f64, 0.0f64);
    let n = 2001;
    for i in 0..n {
        let x = -lim + 2.0 * lim * i as f64 / (n - 1) as f64;
        let (phi, dphi) = prof.eval(x, ell).map_err(fail)?;
        fi = fi.max((e * e * dphi * dphi - 2.0 * (pot.big_f(phi) - prof.alpha)).abs());
        let mut d2 = c[0] * phi;
        for (k, ck) in c.iter().enumerate().skip(1) {
            let a = prof.eval(x + k as f64 * hs, ell).map_err(fail)?.0;
            let b = prof.eval(x - k as f64 * hs, ell).map_err(fail)?.0;
            d2 += ck * (a + b);
        }
        res = res.max((e * e * d2 / (hs * hs) - pot.f(phi)).abs());
    }
    outcome(&[
        (res <= 1e-6, format!("residual {res:.2e} <= 1e-6")),
        (fi <= 1e-10, format!("first integral {fi:.2e} <= 1e-10")),
        within(start.elapsed(), 1.0),
    ])
}

fn c2_alpha_law() -> Check {
    let start = Instant::now();
    let s = ProfileSolver::new(Potential::quartic()).map_err(fail)?;
    let k = s.calibrate_asymptotics().map_err(fail)?;
    let mut parts = vec![(k.a_plus == std::f64::consts::SQRT_2, format!("A = {}", k.a_plus)), (true, format!("K = {:.6}", k.k_plus))];
    for (r, tol) in [(0.04, 0.02), (0.02, 0.005)] {
        let (a, _) = s.alpha_beta(r, Branch::Plus).map_err(fail)?;
        let rel = (a / k.alpha(r, Branch::Plus) - 1.0).abs();
        parts.push((rel <= tol, format!("r={r}: rel err {rel:.2e} <= {tol}")));
    }
    parts.push(within(start.elapsed(), 5.0));
    outcome(&parts)
}

fn c3_stationarity() -> Check {
    let start = Instant::now();
    let spec = quartic();
    let eps = 0.03;
    let params = ModelParams { eps, tau: 0.1, n: 2, delta: 0.01, rho: 0.3, gamma: 1.0 };
    let cfg = SimConfig {
        params,
        grid: Grid::new(1025).map_err(fail)?,
        t_end: 10.0,
        cfl_factor: 0.9,
        observer_stride: usize::MAX,
        integrator: Integrator::Rk4Explicit,
        stencil: Stencil::Eighth,
    };
    let solver = ProfileSolver::new(spec.potential.clone()).map_err(fail)?;
    let he = Reduced::new(&solver, eps, params.rho).map_err(fail)?.equilibrium(2).map_err(fail)?;
    let man = Manifold::new(&solver, cfg.grid);
    let st = SimState::well_prepared(&man, &he).map_err(fail)?;
    let u0 = st.u.clone();
    let mut sim = Simulator::new(&spec, cfg).map_err(fail)?;
    let out = simulate(&mut sim, st, None).map_err(fail)?;
    let drift = out.state.u.sub(&u0).norm_inf();
    let h = track_layers(&out.state.u, 2, eps, params.rho).map_err(fail)?;
    let dh = h.h().iter().zip(he.h()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    outcome(&[
        (drift <= 1e-6, format!("sup drift {drift:.2e} <= 1e-6")),
        (dh <= 1e-6, format!("|h(10) - h^e| {dh:.2e} <= 1e-6")),
        within(start.elapsed(), 60.0),
    ])
}

/// Runs the eps sweep once; criteria 4, 5 and 6 read its artifacts.
struct SweepRun {
    summary: Summary,
    dir: tempfile::TempDir,
    elapsed: Duration,
}

fn run_sweep() -> Result<SweepRun, String> {
    let dir = tempfile::tempdir().map_err(fail)?;
    let plan = load_plan("epsilon_sweep", dir.path())?;
    let start = Instant::now();
    let summary = run_plan(&plan).map_err(fail)?;
    Ok(SweepRun { summary, dir, elapsed: start.elapsed() })
}

fn c4_slow_motion(run: &Result<SweepRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let s = &run.summary;
    let fit = &s.details["fit"];
    let slope = fit["slope"].as_f64().unwrap_or(f64::NAN);
    let pred = fit["predicted"].as_f64().unwrap_or(f64::NAN);
    let (dev, dev_ok) = check_value(s, "slope_deviation").ok_or("no slope check")?;
    let (disp, disp_ok) = check_value(s, "displacement_eps0.03").ok_or("no displacement at eps 0.03")?;
    let mut parts = vec![
        (s.failures.is_empty(), format!("{} points failed", s.failures.len())),
        (dev_ok, format!("slope {slope:.4} vs -A l^h = {pred:.4}, deviation {dev:.3} <= 0.15")),
        (disp_ok, format!("displacement at eps=0.03 {disp:.2e} <= 1e-2")),
    ];
    for p in s.details["points"].as_array().into_iter().flatten() {
        parts.push((true, format!("eps={} |h'|={:.3e} (reduced {:.3e})", p["eps"], p["speed"].as_f64().unwrap_or(f64::NAN), p["reduced_speed"].as_f64().unwrap_or(f64::NAN))));
    }
    parts.push(within(run.elapsed, 900.0));
    outcome(&parts)
}

fn c5_channel(run: &Result<SweepRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let s = &run.summary;
    let mut parts = Vec::new();
    for p in s.details["points"].as_array().into_iter().flatten() {
        let eps = p["eps"].as_f64().unwrap_or(f64::NAN);
        let tag = format!("{eps}");
        let g = p["gamma"].as_f64().unwrap_or(f64::NAN);
        let (out, in_ok) = check_value(s, &format!("outside_channel_eps{tag}")).ok_or("missing channel check")?;
        let (sides, sides_ok) = check_value(s, &format!("sides_exits_eps{tag}")).ok_or("missing sides check")?;
        let (c, c_ok) = check_value(s, &format!("remainder_constant_eps{tag}")).ok_or("missing remainder check")?;
        let n = p["samples"].as_u64().unwrap_or(0);
        parts.push((in_ok && sides_ok && c_ok && n > 0, format!("eps={tag} Gamma={g:.3e} inside at {}/{n} samples, sides exits {sides}, C={c:.2}", if out == 0.0 { n } else { 0 })));
    }
    if parts.is_empty() {
        parts.push((false, "no sweep points".into()));
    }
    outcome(&parts)
}

fn c6_fidelity(run: &Result<SweepRun, String>) -> Check {
    let start = Instant::now();
    let run = run.as_ref().map_err(Clone::clone)?;
    let spec = quartic();
    let plan = load_plan("epsilon_sweep", run.dir.path())?;
    let eps = 0.03;
    let cfg = plan.base.sim_config(eps, &spec).map_err(fail)?;
    let h0 = plan.base.h0.clone().unwrap_or_default();
    let table = Table::read(&run.dir.path().join("series_eps0.03.csv")).map_err(fail)?;
    let t = table.floats("t").map_err(fail)?;
    let hs: Vec<Vec<f64>> = (1..=2).map(|j| table.floats(&format!("h_{j}"))).collect::<Result<_, _>>().map_err(fail)?;
    let rows: Vec<Vec<f64>> = (0..t.len()).map(|i| vec![hs[0][i], hs[1][i]]).collect();
    let samples: Vec<(f64, &[f64])> = t.iter().zip(&rows).filter(|(_, h)| h.iter().all(|v| v.is_finite())).map(|(t, h)| (*t, h.as_slice())).collect();
    let traj = experiments::reduced_companion(&spec, &cfg, &h0, 0.5).map_err(fail)?;
    let f = experiments::fidelity_samples(&samples, &traj).map_err(fail)?;

    // a window where the layers move by several grid cells
    let eps2 = 0.06;
    let mut cfg2 = cfg.clone();
    cfg2.params.eps = eps2;
    cfg2.grid = experiments::grid_per_eps(eps2, 16.0).map_err(fail)?;
    cfg2.t_end = 150.0;
    let dt = hypac_core::pde::stable_dt(&cfg2, &spec).map_err(fail)?;
    cfg2.observer_stride = ((1.0 / dt).ceil() as usize).max(1);
    let pde = experiments::run_simulation(&spec, &cfg2, &h0, None).map_err(fail)?;
    let traj2 = experiments::reduced_companion(&spec, &cfg2, &h0, 0.5).map_err(fail)?;
    let f2 = experiments::fidelity(&pde.records, &traj2).map_err(fail)?;
    let moved = hypac_core::pde::max_displacement(&pde.records);
    outcome(&[
        (f.sup_err <= 0.5 * eps, format!("eps=0.03: sup |h_pde - h_red| {:.2e} <= {:.3} over [0, {}] ({} samples)", f.sup_err, 0.5 * eps, f.window_end, f.compared)),
        (f2.sup_err <= 0.5 * eps2, format!("eps=0.06: {:.2e} <= {:.3} over [0, {}], layers moved {moved:.2e}", f2.sup_err, 0.5 * eps2, f2.window_end)),
        within(start.elapsed(), 300.0),
    ])
}

fn c7_gradient() -> Check {
    let s = ProfileSolver::new(Potential::quartic()).map_err(fail)?;
    let (eps, rho) = (0.05, 0.5);
    let red = Reduced::new(&s, eps, rho).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = 2 + i % 2;
        let h = random_layers(&mut rng, n, eps, rho, 0.15);
        let fd = red.grad_w_fd(&h, 1e-6).map_err(fail)?;
        let p = red.pstar(&h, PStarMode::Exact).map_err(fail)?;
        let gap = fd.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a + b).abs())) / sup(&p);
        worst = worst.max(gap);
    }
    let mut hess = 0.0f64;
    for h in [vec![0.25, 0.75], vec![0.3, 0.72], vec![0.2, 0.5, 0.78]] {
        let h = red.layers(h).map_err(fail)?;
        let (d, o) = red.hessian_b(&h).map_err(fail)?;
        let fd = red.hessian_fd(&h, 1e-4).map_err(fail)?;
        let n = d.len();
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            hess = hess.max((fd[(i, i)] - d[i]).abs() / scale);
            if i + 1 < n {
                hess = hess.max((fd[(i, i + 1)] - o[i]).abs() / scale);
                hess = hess.max((fd[(i + 1, i)] - o[i]).abs() / scale);
            }
        }
    }
    let red3 = Reduced::new(&s, 0.03, 0.3).map_err(fail)?;
    let mut negdef = true;
    for n in [1, 2, 4] {
        let he = red3.equilibrium(n).map_err(fail)?;
        let sp = red3.spectrum(&he, 0.1, 1.0).map_err(fail)?;
        negdef &= sp.mu_sq.iter().all(|&m| m > 0.0) && sp.omega.iter().all(|&w| w < 0.0);
    }
    outcome(&[
        (worst <= 1e-5, format!("grad W vs -P* on 100 random h: {worst:.2e} <= 1e-5")),
        (hess <= 1e-4, format!("FD Hessian vs B: {hess:.2e} <= 1e-4")),
        (negdef, "B negative definite at h^e (N=1,2,4, eps=0.03)".into()),
    ])
}

fn c8_equilibrium() -> Check {
    let start = Instant::now();
    let s = ProfileSolver::new(Potential::quartic()).map_err(fail)?;
    let red = Reduced::new(&s, 0.03, 0.3).map_err(fail)?;
    let mut spacing = 0.0f64;
    for n in [2usize, 4] {
        let he = red.equilibrium(n).map_err(fail)?;
        for (j, x) in he.h().iter().enumerate() {
            spacing = spacing.max((x - (2 * j + 1) as f64 / (2 * n) as f64).abs());
        }
    }
    let he = red.equilibrium(2).map_err(fail)?;
    let (tau, gamma) = (0.1, 1.0);
    let sp = red.spectrum(&he, tau, gamma).map_err(fail)?;
    let mut ident = 0.0f64;
    for i in 0..sp.mu_sq.len() {
        let (lp, lm) = (sp.lambda_plus[i], sp.lambda_minus[i]);
        ident = ident.max(((lp + lm) + gamma / tau).abs() / (gamma / tau));
        ident = ident.max(((lp * lm) + sp.mu_sq[i] / tau).abs() / (sp.mu_sq[i] / tau));
    }
    let small = red.spectrum(&he, 1e-4, 1.0).map_err(fail)?;
    let limit = small.lambda_plus.iter().zip(&small.mu_sq).fold(0.0f64, |m, (l, mu)| m.max((l / mu - 1.0).abs()));
    outcome(&[
        (spacing <= 1e-8, format!("h^e_j = (2j-1)/2N: {spacing:.1e} <= 1e-8")),
        (ident <= 1e-10, format!("sum/product identities {ident:.1e} <= 1e-10")),
        (sp.dense_deviation <= 1e-8, format!("dense J {:.1e} <= 1e-8", sp.dense_deviation)),
        (limit <= 1e-3, format!("lambda+(1e-4) vs mu^2/gamma_0 {limit:.1e} <= 1e-3")),
        within(start.elapsed(), 10.0),
    ])
}

fn c9_relaxation_constant() -> Check {
    let pot = Potential::quartic();
    let mut worst = 0.0f64;
    let mut below = true;
    for tau in [0.01, 0.05, 0.1, 0.2, 0.3, 0.5] {
        let g = gamma_tau(&pot, &Damping::Relaxation, tau).map_err(fail)?;
        worst = worst.max((g - (1.0 - 0.4 * tau)).abs());
        below &= g < 1.0;
    }
    let g0 = gamma_tau(&pot, &Damping::One, 0.3).map_err(fail)?;
    outcome(&[
        (worst <= 1e-10, format!("|gamma_tau - (1 - 2tau/5)| {worst:.1e} <= 1e-10")),
        (below, "gamma_tau < 1 for tau > 0".into()),
        ((g0 - 1.0).abs() <= 1e-12, format!("g = 1 gives gamma_tau = {g0}")),
    ])
}

fn c10_singular_limit() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(fail)?;
    let plan = load_plan("tau_compare", dir.path())?;
    let s = run_plan(&plan).map_err(fail)?;
    let eta = s.details["eta0_norm"].as_f64().unwrap_or(f64::NAN);
    let mut parts = vec![(check_value(&s, "sup_h_err_not_decreasing").map(|c| c.1).unwrap_or(false), "sup |h - h_p| strictly decreasing in tau".into())];
    for e in s.details["entries"].as_array().into_iter().flatten() {
        let tau = e["tau"].as_f64().unwrap_or(f64::NAN);
        let err = e["sup_h_err"].as_f64().unwrap_or(f64::NAN);
        let bound = 10.0 * tau * (1.0 + eta);
        parts.push((err <= bound && e["truncated_at"].is_null(), format!("tau={tau}: {err:.2e} <= {bound:.2e}")));
    }
    let b = &plan.base;
    let solver = ProfileSolver::new(b.model.potential.clone()).map_err(fail)?;
    let red = Reduced::new(&solver, b.params.eps, b.params.rho).map_err(fail)?;
    let h0 = red.layers(b.h0.clone().unwrap_or_default()).map_err(fail)?;
    let eta0 = red.pstar(&h0, PStarMode::Exact).map_err(fail)?;
    // samples fine enough for Simpson's rule to resolve the tau / gamma time scale
    let opts = IntegrateOptions { dt_out: 0.005, rtol: 1e-12, record_energy: true, ..IntegrateOptions::default() };
    let mut worst = 0.0f64;
    for &tau in &plan.sweep {
        let g = gamma_tau(&b.model.potential, &b.model.damping, tau).map_err(fail)?;
        let tr = red.integrate_hyperbolic(&h0, &eta0, tau, g, b.t_end, &opts).map_err(fail)?;
        let (change, diss) = energy_balance(&tr, g).map_err(fail)?;
        worst = worst.max(((change - diss) / diss).abs());
    }
    parts.push((worst <= 1e-6, format!("dE/dt = -gamma|h'|^2 rel {worst:.1e} <= 1e-6")));
    parts.push(within(start.elapsed(), 120.0));
    outcome(&parts)
}

fn small_plan(kind: PlanKind, out: &Path) -> Result<ExperimentPlan, String> {
    let (name, sweep) = match kind {
        PlanKind::SingleSim => ("single_sim", vec![]),
        PlanKind::EpsilonSweep => ("epsilon_sweep", vec![0.06, 0.07, 0.08]),
        PlanKind::TauCompare => ("tau_compare", vec![0.2, 0.1, 0.05, 0.025]),
        PlanKind::EquilibriumStudy => ("equilibrium_study", vec![0.03, 0.04, 0.05, 0.06]),
    };
    let mut p = load_plan(name, out)?;
    p.sweep = sweep;
    if kind == PlanKind::EpsilonSweep {
        p.base.t_end = 4.0;
        p.base.points_per_eps = Some(12.0);
        p.base.fit_window = Some([1.0, 4.0]);
    }
    Ok(p)
}

fn files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).map_err(fail)? {
        let e = e.map_err(fail)?;
        v.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(fail)?));
    }
    v.sort();
    Ok(v)
}

fn c11_determinism() -> Check {
    let a = tempfile::tempdir().map_err(fail)?;
    let b = tempfile::tempdir().map_err(fail)?;
    let mut parts = Vec::new();
    for kind in [PlanKind::SingleSim, PlanKind::EpsilonSweep, PlanKind::TauCompare, PlanKind::EquilibriumStudy] {
        let tag = format!("{kind:?}");
        let (da, db) = (a.path().join(&tag), b.path().join(&tag));
        run_plan(&small_plan(kind, &da)?).map_err(fail)?;
        run_plan(&small_plan(kind, &db)?).map_err(fail)?;
        let (fa, fb) = (files(&da)?, files(&db)?);
        parts.push((fa == fb && !fa.is_empty(), format!("{tag}: {} files identical", fa.len())));
    }
    outcome(&parts)
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Check| {
        let start = Instant::now();
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {id:>2} {}: {name} ({:.1}s) | {detail}", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    };
    report(1, "profile correctness", &c1_profile);
    report(2, "asymptotic alpha law", &c2_alpha_law);
    report(3, "stationarity of u^{h^e}", &c3_stationarity);
    let sweep = run_sweep();
    report(4, "exponentially slow motion", &|| c4_slow_motion(&sweep));
    report(5, "channel behaviour", &|| c5_channel(&sweep));
    report(6, "reduced-model fidelity", &|| c6_fidelity(&sweep));
    report(7, "gradient structure", &c7_gradient);
    report(8, "equilibrium and spectrum", &c8_equilibrium);
    report(9, "relaxation constant", &c9_relaxation_constant);
    report(10, "singular perturbation limit", &c10_singular_limit);
    report(11, "determinism", &c11_determinism);
    println!("acceptance: {} of 11 criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
