use clap::{Parser, Subcommand, ValueEnum};
use hypac::config::{load_json, parse_json, ExperimentPlan, SimulationFile};
use hypac::error::{HarnessError, Result};
use hypac::experiments;
use hypac::io::{self, num, Snapshot, Table};
use hypac::plan::run_plan;
use hypac::plot::{emit_plot_data, PlotSeries};
use hypac_core::grid::Grid;
use hypac_core::manifold::{residual_l, LayerVector, Manifold, ProjectOptions, PsiMode};
use hypac_core::model::{gamma_tau, validate_double_well, Damping, ModelSpec, Potential};
use hypac_core::profile::{Branch, ProfileSolver};
use hypac_core::reduced::{IntegrateOptions, PStarMode, Reduced, Trajectory};
use serde::Serialize;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hypac", version, about = "Metastable layer dynamics for the hyperbolic Allen-Cahn equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ModelArgs {
    /// Model JSON ({"potential": {...}, "damping": {...}}); the quartic with g = 1 when absent.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelSpec> {
        match &self.model {
            Some(p) => load_json(p),
            None => Ok(ModelSpec { potential: Potential::quartic(), damping: Damping::One }),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Plus,
    Minus,
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    Parabolic,
    Hyperbolic,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Trajectory,
    Channel,
    Spectrum,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model document and report the double-well checks and gamma_tau.
    ValidateModel {
        file: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
    },
    /// Periodic profile at ratio r = eps / l.
    Profile {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        r: f64,
        #[arg(long, value_enum, default_value_t = BranchArg::Plus)]
        branch: BranchArg,
        /// Write (x, phi) samples over one half period at eps = 1.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build u^h, or project a snapshot onto the manifold.
    Manifold {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long = "grid-m", default_value_t = 1025)]
        grid_m: usize,
        /// Snapshot to project; u^h is written when absent.
        #[arg(long)]
        project: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full PDE run from a simulation document.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Final state snapshot.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Reduced layer equations.
    Reduce {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        system: System,
        #[arg(long, value_delimiter = ',', required = true)]
        h0: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        eta0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long = "dt-out", default_value_t = 0.1)]
        dt_out: f64,
        #[arg(long)]
        asymptotic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Equilibrium h^e and its spectrum as JSON.
    Equilibrium {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "n")]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        multistart: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Spectrum at h^e as plot data.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "n")]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long)]
        tau: f64,
        /// Overrides gamma_tau from the damping law.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hyperbolic against parabolic reduced runs.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "tau-list", value_delimiter = ',', required = true)]
        tau_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        h0: Vec<f64>,
        /// Defaults to P*(h0).
        #[arg(long, value_delimiter = ',')]
        eta0: Option<Vec<f64>>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long = "dt-out", default_value_t = 0.1)]
        dt_out: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan; exits 3 when an acceptance threshold fails.
    Sweep { plan: PathBuf },
    /// Convert a series, trajectory or spectrum CSV to plot data.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn stdout(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    stdout(&(serde_json::to_string_pretty(v).map_err(|e| HarnessError::Usage(e.to_string()))? + "\n"));
    Ok(())
}

/// Layer positions given on the command line; inadmissible input is a usage error.
fn user_layers(h: &[f64], eps: f64, rho: f64) -> Result<LayerVector> {
    LayerVector::new(h.to_vec(), eps, rho).map_err(|e| HarnessError::Usage(format!("layer positions {h:?}: {e}")))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_file(p, text.as_bytes()),
        None => {
            stdout(text);
            Ok(())
        }
    }
}

fn args_hash(parts: &impl Serialize) -> String {
    io::config_hash(parts)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::ValidateModel { file, tau } => {
            let spec: ModelSpec = load_json(&file)?;
            let report = validate_double_well(&spec.potential);
            let floor = spec.damping.check(&spec.potential, tau);
            let gamma = gamma_tau(&spec.potential, &spec.damping, tau).ok();
            print_json(&serde_json::json!({
                "checks": report.checks.iter().map(|c| serde_json::json!({"name": c.name, "passed": c.passed, "value": c.value})).collect::<Vec<_>>(),
                "damping_floor": floor.as_ref().ok(),
                "gamma_tau": gamma,
            }))?;
            if let Some(msg) = report.first_failure() {
                return Err(HarnessError::Config { origin: file.display().to_string(), line: 0, column: 0, field: "potential".into(), message: msg });
            }
            floor?;
        }
        Command::Profile { model, r, branch, out } => {
            let spec = model.load()?;
            let solver = ProfileSolver::new(spec.potential)?;
            let b = match branch {
                BranchArg::Plus => Branch::Plus,
                BranchArg::Minus => Branch::Minus,
            };
            let sol = solver.profile(r, b)?;
            print_json(&serde_json::json!({"r": sol.r, "m": sol.m, "alpha": sol.alpha, "beta": sol.beta, "length": sol.length}))?;
            if let Some(p) = out {
                let hash = args_hash(&(r, sol.m));
                let mut t = Table::new(&hash, vec!["x".into(), "phi".into(), "phi_x".into()]);
                let half = sol.half_length();
                for i in 0..=400 {
                    let x = -half + 2.0 * half * i as f64 / 400.0;
                    let (u, ux) = sol.eval_scaled(x)?;
                    t.rows.push(vec![num(x), num(u), num(ux)]);
                }
                t.write(&p)?;
            }
        }
        Command::Manifold { model, h, eps, rho, grid_m, project, out } => {
            let spec = model.load()?;
            let solver = ProfileSolver::new(spec.potential.clone())?;
            let grid = Grid::new(grid_m)?;
            let m = Manifold::new(&solver, grid);
            let lv = user_layers(&h, eps, rho)?;
            let hash = args_hash(&(&h, eps, rho, grid_m));
            match project {
                None => {
                    let u = m.build_uh(&lv)?;
                    let res = residual_l(&u, &spec.potential, eps);
                    print_json(&serde_json::json!({
                        "psi": m.barrier_psi(&lv, PsiMode::AlphaFormula)?,
                        "residual_linf": res.norm_inf(),
                        "spacings": lv.spacings(),
                    }))?;
                    if let Some(p) = out {
                        io::write_json(&p, &Snapshot::of_field(&u, &hash))?;
                    }
                }
                Some(snap) => {
                    let s: Snapshot = load_json(&snap)?;
                    let u = s.field()?;
                    let m = Manifold::new(&solver, u.grid);
                    let c = m.project(&u, &lv, &ProjectOptions::default())?;
                    print_json(&serde_json::json!({
                        "h": c.h.h(),
                        "w_linf": c.w.norm_inf(),
                        "iterations": c.iterations,
                        "residual": c.residual,
                    }))?;
                    if let Some(p) = out {
                        io::write_json(&p, &Snapshot::of_field(&c.w, &hash))?;
                    }
                }
            }
        }
        Command::Simulate { config, out, snapshot } => {
            let file: SimulationFile = load_json(&config)?;
            let hash = io::config_hash(&file);
            let run = experiments::run_simulation_file(&file)?;
            let mut t = io::series_table(&run.records, file.sim.params.n, &hash);
            if let Some(g) = run.gamma {
                t = t.with_meta("gamma", num(g));
            }
            t.write(&out)?;
            if let Some(p) = snapshot {
                let st = &run.state;
                let snap = Snapshot { t: Some(st.t), v: Some(st.v.values.clone()), ..Snapshot::of_field(&st.u, &hash) };
                io::write_json(&p, &snap)?;
            }
            print_json(&serde_json::json!({"events": run.events, "steps": run.steps, "dt": run.dt, "gamma": run.gamma}))?;
            if run.sides_exits() > 0 {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Reduce { model, system, h0, eta0, tau, eps, rho, t_end, dt_out, asymptotic, out } => {
            let spec = model.load()?;
            let solver = ProfileSolver::new(spec.potential.clone())?;
            let mut red = Reduced::new(&solver, eps, rho)?;
            let mode = if asymptotic {
                red = red.with_asymptotics(solver.calibrate_asymptotics()?);
                PStarMode::Asymptotic
            } else {
                PStarMode::Exact
            };
            let h = user_layers(&h0, eps, rho)?;
            let opts = IntegrateOptions { mode, dt_out, record_energy: true, ..IntegrateOptions::default() };
            let traj: Trajectory = match system {
                System::Parabolic => red.integrate_parabolic(&h, t_end, &opts)?,
                System::Hyperbolic => {
                    let g = gamma_tau(&spec.potential, &spec.damping, tau)?;
                    let eta = eta0.unwrap_or_else(|| vec![0.0; h.n()]);
                    red.integrate_hyperbolic(&h, &eta, tau, g, t_end, &opts)?
                }
            };
            let hash = args_hash(&(&h0, tau, eps, rho, t_end, dt_out, asymptotic, matches!(system, System::Hyperbolic)));
            io::trajectory_table(&traj, &hash).write(&out)?;
            print_json(&serde_json::json!({"event": traj.event, "steps": traj.steps, "rejected": traj.rejected, "h_end": traj.last_h()}))?;
        }
        Command::Equilibrium { model, n, eps, rho, tau, multistart, seed } => {
            let spec = model.load()?;
            let rep = experiments::equilibrium_study(&spec, eps, n, rho, tau, multistart, seed)?;
            print_json(&rep)?;
        }
        Command::Spectrum { model, n, eps, rho, tau, gamma, out } => {
            let spec = model.load()?;
            let solver = ProfileSolver::new(spec.potential.clone())?;
            let red = Reduced::new(&solver, eps, rho)?;
            let he = red.equilibrium(n)?;
            let g = match gamma {
                Some(g) => g,
                None => gamma_tau(&spec.potential, &spec.damping, tau)?,
            };
            let sp = red.spectrum(&he, tau, g)?;
            emit(&out, &emit_plot_data(&PlotSeries::Spectrum(&sp), &args_hash(&(n, eps, rho, tau, g))))?;
        }
        Command::Compare { model, tau_list, h0, eta0, eps, rho, t_end, t1, dt_out, out } => {
            let spec = model.load()?;
            user_layers(&h0, eps, rho)?;
            let series = experiments::tau_compare(&spec, eps, rho, &h0, eta0.as_deref(), &tau_list, t_end, t1, dt_out)?;
            let hash = args_hash(&(&tau_list, &h0, &eta0, eps, rho, t_end, t1, dt_out));
            io::comparison_table(&series.entries, &hash).with_meta("t1", num(t1)).write(&out)?;
            let brief: Vec<_> = series.entries.iter().map(|e| serde_json::json!({"tau": e.tau, "sup_e": e.sup_e, "sup_h_err": e.sup_h_err, "sup_eta_err_after_t1": e.sup_eta_err_after_t1})).collect();
            print_json(&brief)?;
        }
        Command::Sweep { plan } => {
            let text = std::fs::read_to_string(&plan).map_err(|e| HarnessError::io(&plan, e))?;
            let mut p: ExperimentPlan = parse_json(&text, &plan.display().to_string())?;
            if p.output_dir.is_relative() {
                if let Some(base) = plan.parent() {
                    p.output_dir = base.join(&p.output_dir);
                }
            }
            let s = run_plan(&p)?;
            for c in &s.checks {
                stdout(&format!("{} {} value={:e} threshold={:e}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold));
            }
            for f in &s.failures {
                stdout(&format!("FAILED point {}: {}\n", f.value, f.message));
            }
            if !s.passed {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Plot { kind, input, out } => {
            let t = Table::read(&input)?;
            let hash = t.meta.get("config_hash").cloned().unwrap_or_default();
            let text = hypac::plot::plot_from_table(match kind {
                PlotKind::Trajectory => hypac::plot::TableKind::Trajectory,
                PlotKind::Channel => hypac::plot::TableKind::Channel,
                PlotKind::Spectrum => hypac::plot::TableKind::Spectrum,
            }, &t, &hash)?;
            emit(&out, &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
