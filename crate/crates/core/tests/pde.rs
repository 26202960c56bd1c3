use hypac_core::grid::{lap_neumann, Grid, GridField, Stencil};
use hypac_core::manifold::{LayerVector, Manifold, ManifoldCoords, PsiMode};
use hypac_core::model::{Damping, ModelParams, ModelSpec, Potential};
use hypac_core::pde::*;
use hypac_core::profile::ProfileSolver;
use hypac_core::Error;
use std::f64::consts::PI;

fn quartic_spec() -> ModelSpec {
    ModelSpec { potential: Potential::quartic(), damping: Damping::One }
}

fn params(eps: f64, tau: f64, n: usize) -> ModelParams {
    ModelParams { eps, tau, n, delta: 0.01, rho: eps / 0.1, gamma: 1.0 }
}

fn config(p: ModelParams, m: usize, t_end: f64, stencil: Stencil) -> SimConfig {
    SimConfig {
        params: p,
        grid: Grid::new(m).unwrap(),
        t_end,
        cfl_factor: 0.9,
        observer_stride: 50,
        integrator: Integrator::Rk4Explicit,
        stencil,
    }
}

#[test]
fn neumann_laplacian_of_constants_and_cosines() {
    let g = Grid::new(65).unwrap();
    assert_eq!(lap_neumann(&GridField::from_fn(g, |_| 3.7)).norm_inf(), 0.0);
    let mut errs = Vec::new();
    for m in [65, 129, 257] {
        let g = Grid::new(m).unwrap();
        let u = GridField::from_fn(g, |x| (PI * x).cos());
        let l = lap_neumann(&u);
        let want = GridField::from_fn(g, |x| -PI * PI * (PI * x).cos());
        errs.push(l.sub(&want).norm_inf());
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 3.9 && ratio < 4.1, "{ratio}");
    }
}

#[test]
fn stable_dt_formula() {
    let eps = 0.03;
    let mut p = params(eps, 0.25, 1);
    p.rho = 0.5;
    let m = (8.0 / eps).ceil() as usize + 1;
    let dx = 1.0 / (m - 1) as f64;
    let cfg = SimConfig { cfl_factor: 0.8, ..config(p, m, 1.0, Stencil::Second) };
    let want = 0.8 * (0.5 * dx / eps).min(0.25).min(0.5 * dx * dx / (eps * eps));
    assert!((stable_dt(&cfg, &quartic_spec()).unwrap() - want).abs() < 1e-15);
    let bad = SimConfig { cfl_factor: 0.0, ..cfg.clone() };
    assert!(matches!(stable_dt(&bad, &quartic_spec()), Err(Error::Config(_))));
    let mut p0 = p;
    p0.tau = 0.0;
    assert!(matches!(stable_dt(&config(p0, m, 1.0, Stencil::Second), &quartic_spec()), Err(Error::Config(_))));
}

#[test]
fn wave_term_scales_with_root_tau() {
    // weak damping so that the wave CFL binds
    let spec = ModelSpec { potential: Potential::quartic(), damping: Damping::table(vec![-2.0, 2.0], vec![0.01, 0.01]).unwrap() };
    let eps = 0.03;
    let dt = |tau: f64| {
        let cfg = config(params(eps, tau, 1), 301, 1.0, Stencil::Second);
        stable_dt(&cfg, &spec).unwrap()
    };
    let ratio = dt(2e-4) / dt(1e-4);
    assert!((ratio - 2f64.sqrt()).abs() < 1e-12, "{ratio}");
}

#[test]
fn constant_well_state_is_a_fixed_point() {
    let spec = quartic_spec();
    let cfg = config(params(0.05, 0.2, 1), 401, 1.0, Stencil::Eighth);
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let g = Grid::new(401).unwrap();
    let mut st = SimState::new(0.0, GridField::from_fn(g, |_| 1.0), GridField::zeros(g)).unwrap();
    for _ in 0..100 {
        let dt = sim.stable_dt();
        sim.step(&mut st, dt).unwrap();
    }
    assert!(st.u.values.iter().all(|&u| u == 1.0));
    assert!(st.v.values.iter().all(|&v| v == 0.0));
}

fn free_spec() -> ModelSpec {
    ModelSpec { potential: Potential::custom(vec![0.0]).unwrap(), damping: Damping::One }
}

#[test]
fn scalar_decay_matches_fourth_order() {
    let spec = free_spec();
    let tau = 0.5;
    let g = Grid::new(41).unwrap();
    let mut errs = Vec::new();
    for steps in [20usize, 40] {
        let cfg = config(params(0.3, tau, 1), 41, 1.0, Stencil::Second);
        let mut sim = Simulator::new(&spec, cfg).unwrap();
        let mut st = SimState::new(0.0, GridField::from_fn(g, |_| 0.2), GridField::from_fn(g, |_| 1.0)).unwrap();
        let dt = 1.0 / steps as f64;
        for _ in 0..steps {
            sim.step(&mut st, dt).unwrap();
        }
        let v = (-1.0f64 / tau).exp();
        let u = 0.2 + tau * (1.0 - v);
        errs.push((st.v.values[7] - v).abs().max((st.u.values[7] - u).abs()));
    }
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 3.8 && order < 4.3, "{order}");
}

/// Damped cosine modes a_k with tau a'' + a' + eps^2 k^2 pi^2 a = 0.
fn mode(a0: f64, b0: f64, tau: f64, kappa: f64, t: f64) -> (f64, f64) {
    // roots of tau s^2 + s + kappa = 0
    let disc = 1.0 - 4.0 * tau * kappa;
    if disc >= 0.0 {
        let s1 = (-1.0 + disc.sqrt()) / (2.0 * tau);
        let s2 = (-1.0 - disc.sqrt()) / (2.0 * tau);
        let c2 = (b0 - s1 * a0) / (s2 - s1);
        let c1 = a0 - c2;
        (c1 * (s1 * t).exp() + c2 * (s2 * t).exp(), c1 * s1 * (s1 * t).exp() + c2 * s2 * (s2 * t).exp())
    } else {
        let re = -1.0 / (2.0 * tau);
        let om = (-disc).sqrt() / (2.0 * tau);
        let c = a0;
        let d = (b0 - re * a0) / om;
        let e = (re * t).exp();
        let a = e * (c * (om * t).cos() + d * (om * t).sin());
        let da = re * a + e * (-c * om * (om * t).sin() + d * om * (om * t).cos());
        (a, da)
    }
}

#[test]
fn two_mode_fourier_oracle() {
    let spec = free_spec();
    let (eps, tau) = (0.2, 1.0);
    let m = 161;
    let g = Grid::new(m).unwrap();
    let cfg = config(params(eps, tau, 1), m, 3.0, Stencil::Eighth);
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let u0 = [0.3, 0.5, -0.2];
    let v0 = [0.1, -0.4, 0.0];
    let st = SimState::new(
        0.0,
        GridField::from_fn(g, |x| u0[0] + u0[1] * (PI * x).cos() + u0[2] * (2.0 * PI * x).cos()),
        GridField::from_fn(g, |x| v0[0] + v0[1] * (PI * x).cos() + v0[2] * (2.0 * PI * x).cos()),
    )
    .unwrap();
    let out = simulate(&mut sim, st, None).unwrap();
    let t = out.state.t;
    let modes: Vec<(f64, f64)> =
        (0..3).map(|k| mode(u0[k], v0[k], tau, (eps * k as f64 * PI).powi(2), t)).collect();
    let want_u = GridField::from_fn(g, |x| (0..3).map(|k| modes[k].0 * (k as f64 * PI * x).cos()).sum());
    let want_v = GridField::from_fn(g, |x| (0..3).map(|k| modes[k].1 * (k as f64 * PI * x).cos()).sum());
    assert!(out.state.u.sub(&want_u).norm_inf() < 1e-6);
    assert!(out.state.v.sub(&want_v).norm_inf() < 1e-6);
    // the mean obeys tau a'' + a' = 0 exactly
    let mean: f64 = out.state.u.inner(&GridField::from_fn(g, |_| 1.0), hypac_core::grid::Rule::Trapezoid);
    assert!((mean - modes[0].0).abs() < 1e-9);
}

#[test]
fn lyapunov_values() {
    let spec = quartic_spec();
    let g = Grid::new(51).unwrap();
    let one = SimState::new(0.0, GridField::from_fn(g, |_| 1.0), GridField::zeros(g)).unwrap();
    assert_eq!(lyapunov(&one, &spec, 0.1, 0.05, Stencil::Second), 0.0);
    let zero = SimState::new(0.0, GridField::zeros(g), GridField::zeros(g)).unwrap();
    assert!((lyapunov(&zero, &spec, 0.1, 0.05, Stencil::Second) - 0.25).abs() < 1e-15);
}

fn lyapunov_run(damping: Damping, tau: f64) {
    let spec = ModelSpec { potential: Potential::quartic(), damping };
    let eps = 0.05;
    let m = 321;
    let p = params(eps, tau, 2);
    let mut cfg = config(p, m, 2.0, Stencil::Eighth);
    cfg.observer_stride = 1;
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let man = Manifold::new(&solver, cfg.grid);
    let mut st = SimState::well_prepared(&man, &LayerVector::new(vec![0.3, 0.7], eps, p.rho).unwrap()).unwrap();
    for (i, v) in st.v.values.iter_mut().enumerate() {
        *v = 0.3 * (0.05 * i as f64).sin();
    }
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let out = simulate(&mut sim, st, None).unwrap();
    let dt = out.dt;
    let mut decreased = 0.0;
    for w in out.records.windows(2) {
        let d = w[1].lyapunov - w[0].lyapunov;
        assert!(d <= 1e-8 * dt, "increase {d:e} at t = {}", w[1].t);
        decreased -= d;
    }
    assert!(decreased > 1e-3);
}

#[test]
fn lyapunov_nonincreasing_with_unit_damping() {
    lyapunov_run(Damping::One, 0.2);
}

#[test]
fn lyapunov_nonincreasing_with_relaxation_damping() {
    lyapunov_run(Damping::Relaxation, 0.2);
}

#[test]
fn dissipation_rate_matches_energy_change() {
    let spec = quartic_spec();
    let eps = 0.05;
    let p = params(eps, 0.2, 2);
    let cfg = config(p, 321, 0.5, Stencil::Eighth);
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let man = Manifold::new(&solver, cfg.grid);
    let mut st = SimState::well_prepared(&man, &LayerVector::new(vec![0.3, 0.7], eps, p.rho).unwrap()).unwrap();
    for (i, v) in st.v.values.iter_mut().enumerate() {
        *v = 0.3 * (0.05 * i as f64).sin();
    }
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let dt = sim.stable_dt();
    let e0 = lyapunov(&st, &spec, p.tau, eps, Stencil::Eighth);
    let r0 = lyapunov_rate(&st, &spec, p.tau);
    sim.step(&mut st, dt).unwrap();
    let e1 = lyapunov(&st, &spec, p.tau, eps, Stencil::Eighth);
    let r1 = lyapunov_rate(&st, &spec, p.tau);
    let trapezoid = 0.5 * dt * (r0 + r1);
    assert!(((e1 - e0) - trapezoid).abs() <= 1e-3 * trapezoid.abs(), "{} vs {trapezoid}", e1 - e0);
}

#[test]
fn tracking_examples() {
    let g = Grid::new(101).unwrap();
    let h = track_layers(&GridField::from_fn(g, |x| x - 0.3), 1, 0.03, 0.3).unwrap();
    assert!((h.h()[0] - 0.3).abs() < 1e-12);
    let err = track_layers(&GridField::from_fn(g, |_| 0.5), 1, 0.03, 0.3).unwrap_err();
    assert_eq!(err, Error::Annihilation { found: 0, expected: 1 });

    let solver = ProfileSolver::new(Potential::quartic()).unwrap();
    let eps = 0.03;
    let g = Grid::new(1025).unwrap();
    let man = Manifold::new(&solver, g);
    let h = LayerVector::new(vec![0.3137, 0.6925], eps, 0.3).unwrap();
    let t = track_layers(&man.build_uh(&h).unwrap(), 2, eps, 0.3).unwrap();
    for j in 0..2 {
        assert!((t.h()[j] - h.h()[j]).abs() <= 1e-6);
    }
}

#[test]
fn stationary_state_stays_put() {
    let spec = quartic_spec();
    let eps = 0.03;
    let p = params(eps, 0.1, 2);
    let cfg = config(p, 1025, 2.0, Stencil::Eighth);
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let man = Manifold::new(&solver, cfg.grid);
    let he = LayerVector::new(vec![0.25, 0.75], eps, p.rho).unwrap();
    let st = SimState::well_prepared(&man, &he).unwrap();
    let u0 = st.u.clone();
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let out = simulate(&mut sim, st, None).unwrap();
    assert!(out.state.u.sub(&u0).norm_inf() <= 1e-6);
    let v = velocity_estimate(&out.records).unwrap();
    assert!(v.iter().all(|s| s.speed <= 1e-7));
}

#[test]
fn irregular_records_are_rejected() {
    let rec = |t: f64| Record {
        t,
        h: vec![0.5],
        ell_min: 1.0,
        lyapunov: 0.0,
        v_l2: 0.0,
        projected_h: None,
        w_l2: None,
        w_linf: None,
        channel: None,
    };
    let rs = vec![rec(0.0), rec(1.0), rec(2.5), rec(3.0), rec(4.0)];
    assert!(matches!(velocity_estimate(&rs), Err(Error::Config(_))));
    assert!(velocity_estimate(&rs[..2]).is_err());
}

#[test]
fn close_layers_exit_through_the_ends() {
    let spec = quartic_spec();
    let eps = 0.03;
    let p = ModelParams { eps, tau: 0.1, n: 2, delta: 0.01, rho: 0.15, gamma: 1.0 };
    let cfg = config(p, 401, 1.0, Stencil::Eighth);
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let man = Manifold::new(&solver, cfg.grid);
    // admissible for a looser rho, but closer than eps / rho = 0.2
    let h = LayerVector::new(vec![0.4, 0.58], eps, 0.3).unwrap();
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let out = simulate(&mut sim, SimState::well_prepared(&man, &h).unwrap(), None).unwrap();
    assert_eq!(out.steps, 0);
    assert!(matches!(out.events[0], Event::EndsExit { t, .. } if t == 0.0));
}

#[test]
fn channel_monitor_examples() {
    let solver = ProfileSolver::new(Potential::quartic()).unwrap();
    let eps = 0.03;
    let g = Grid::new(401).unwrap();
    let man = Manifold::new(&solver, g);
    let coords = |h: &LayerVector, w: GridField| ManifoldCoords {
        h: h.clone(),
        w,
        v: GridField::zeros(g),
        uh: man.build_uh(h).unwrap(),
        iterations: 0,
        residual: 0.0,
    };
    let h = LayerVector::new(vec![0.3, 0.75], eps, 0.3).unwrap();
    for gamma in [1e-6, 1.0, 1e6] {
        let c = channel_monitor(&man, &coords(&h, GridField::zeros(g)), 0.1, gamma, PsiMode::AlphaFormula).unwrap();
        assert!(c.inside && c.psi > 0.0);
    }
    let he = LayerVector::new(vec![0.25, 0.75], eps, 0.3).unwrap();
    let w = GridField::from_fn(g, |x| 1e-6 * (5.0 * x).sin());
    let c = channel_monitor(&man, &coords(&he, w), 0.1, 1e6, PsiMode::AlphaFormula).unwrap();
    assert!(!c.inside);
    assert!((c.ends_margin - (0.5 - 0.1)).abs() < 1e-12);
}

#[test]
fn refinement_order_of_second_order_stencil() {
    let spec = quartic_spec();
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let eps = 0.06;
    let p = params(eps, 0.1, 2);
    let finals: Vec<f64> = [161usize, 321, 641]
        .iter()
        .map(|&m| {
            let mut cfg = config(p, m, 20.0, Stencil::Second);
            cfg.observer_stride = usize::MAX;
            let man = Manifold::new(&solver, cfg.grid);
            let h = LayerVector::new(vec![0.3, 0.7], eps, p.rho).unwrap();
            let mut sim = Simulator::new(&spec, cfg).unwrap();
            let out = simulate(&mut sim, SimState::well_prepared(&man, &h).unwrap(), None).unwrap();
            out.records.last().unwrap().h[0]
        })
        .collect();
    // the layers move visibly
    assert!((finals[2] - 0.3).abs() > 1e-3);
    let order = ((finals[1] - finals[0]) / (finals[2] - finals[1])).abs().log2();
    assert!(order >= 1.8, "{order}");
}

#[test]
fn semi_implicit_agrees_with_rk4() {
    let spec = quartic_spec();
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let eps = 0.06;
    let p = params(eps, 0.1, 2);
    let h = LayerVector::new(vec![0.3, 0.7], eps, p.rho).unwrap();
    let run = |integrator: Integrator, cfl: f64| {
        let mut cfg = config(p, 241, 5.0, Stencil::Second);
        cfg.integrator = integrator;
        cfg.cfl_factor = cfl;
        let man = Manifold::new(&solver, cfg.grid);
        let mut st = SimState::well_prepared(&man, &h).unwrap();
        for (i, v) in st.v.values.iter_mut().enumerate() {
            *v = 0.2 * (0.1 * i as f64).sin();
        }
        let mut sim = Simulator::new(&spec, cfg).unwrap();
        simulate(&mut sim, st, None).unwrap().state
    };
    let a = run(Integrator::Rk4Explicit, 0.9);
    let coarse = run(Integrator::SemiImplicitTheta { theta: 0.5 }, 0.2);
    let fine = run(Integrator::SemiImplicitTheta { theta: 0.5 }, 0.1);
    let e1 = coarse.u.sub(&a.u).norm_inf();
    let e2 = fine.u.sub(&a.u).norm_inf();
    // reaction and damping are explicit, so the scheme is first order in time
    assert!(e2 < 1e-4, "{e2}");
    assert!(e1 / e2 > 1.8, "{e1} {e2}");
}

#[test]
fn semi_implicit_requires_three_point_stencil() {
    let mut cfg = config(params(0.05, 0.1, 1), 201, 1.0, Stencil::Eighth);
    cfg.integrator = Integrator::SemiImplicitTheta { theta: 0.5 };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn drift_does_not_depend_on_tau() {
    // steady drift obeys gamma h' = P*(h), so |h'| is the same for every tau once the
    // initial layer has decayed
    let spec = quartic_spec();
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let eps = 0.06;
    let speeds: Vec<f64> = [0.05, 0.2, 0.8]
        .iter()
        .map(|&tau| {
            let p = params(eps, tau, 2);
            let mut cfg = config(p, 241, 12.0, Stencil::Eighth);
            cfg.observer_stride = 20;
            let man = Manifold::new(&solver, cfg.grid);
            let h = LayerVector::new(vec![0.3, 0.75], eps, p.rho).unwrap();
            let mut sim = Simulator::new(&spec, cfg).unwrap();
            let out = simulate(&mut sim, SimState::well_prepared(&man, &h).unwrap(), None).unwrap();
            drift_fit(&out.records, 8.0, 12.0).unwrap().speed
        })
        .collect();
    let lo = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = speeds.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo < 1.1, "{speeds:?}");
}

#[test]
fn channel_holds_along_slow_run() {
    let spec = quartic_spec();
    let solver = ProfileSolver::new(spec.potential.clone()).unwrap();
    let eps = 0.05;
    let p = params(eps, 0.1, 2);
    let mut cfg = config(p, 401, 10.0, Stencil::Eighth);
    cfg.observer_stride = 500;
    let man = Manifold::new(&solver, cfg.grid);
    let h = LayerVector::new(vec![0.3, 0.75], eps, p.rho).unwrap();
    let cal = calibrate_gamma(&spec, &cfg, &man, &h, &[0.01, -0.01, 0.02], 3.0).unwrap();
    assert!(cal.gamma > 0.0 && cal.ratios.len() == 3);
    let diag = Diagnostics::new(&man, cal.gamma);
    let mut sim = Simulator::new(&spec, cfg).unwrap();
    let out = simulate(&mut sim, SimState::well_prepared(&man, &h).unwrap(), Some(&diag)).unwrap();
    assert!(out.events.is_empty(), "{:?}", out.events);
    assert_eq!(out.sides_exits(), 0);
    for r in &out.records {
        let c = r.channel.unwrap();
        assert!(c.inside, "t = {}: {} > {}", r.t, c.energy_eh, c.gamma_psi);
    }
}
