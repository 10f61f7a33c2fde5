//! `mnpl`: command-line front end for the mabuchi laboratory.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 a check failed,
//! 3 solver or runtime error. Usage errors print the config schema and never
//! touch the filesystem.

pub mod config;
pub mod output;
pub mod potential;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mabuchi::flow;
use mabuchi::geodesic;
use mabuchi::npc::{self, random_potential};
use mabuchi::suite::{self, Tier};
use mabuchi::{ExperimentReport, Field, Grid};
use serde::Serialize;

use crate::config::{Config, Loaded};
use crate::output::Output;
use crate::potential::PotentialSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Environment variable overriding `io.output_dir`.
pub const OUT_ENV: &str = "MNPL_OUT";

#[derive(Debug, Parser)]
#[command(name = "mnpl", version, about = "Geodesics, Calabi flow and comparison-geometry checks on the flat torus")]
struct Cli {
    /// JSON config file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Seed {
    /// Seed for generated potentials and output names (default: first configured seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the ε-geodesic between two potentials and save the path.
    Geodesic {
        #[arg(long)]
        from: PotentialSpec,
        #[arg(long)]
        to: PotentialSpec,
        #[command(flatten)]
        seed: Seed,
    },
    /// Print the distance between two potentials with its error bar.
    Distance {
        #[arg(long)]
        from: PotentialSpec,
        #[arg(long)]
        to: PotentialSpec,
        #[command(flatten)]
        seed: Seed,
    },
    /// Run the Calabi flow and export the trajectory.
    Flow {
        #[arg(long)]
        from: PotentialSpec,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        ds: Option<f64>,
        #[command(flatten)]
        seed: Seed,
    },
    /// Comparison inequality on a seeded triangle.
    Triangle {
        #[command(flatten)]
        seed: Seed,
        /// Single λ; without it the configured λ list is swept.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Jacobi-field convexity on a seeded family.
    Jacobi {
        #[command(flatten)]
        seed: Seed,
    },
    /// Distance between a seeded pair along the flow.
    Contract {
        #[command(flatten)]
        seed: Seed,
    },
    /// First derivative of distance against finite differences.
    Derivcheck {
        #[command(flatten)]
        seed: Seed,
        #[arg(long, default_value_t = 1e-3)]
        delta_s: f64,
    },
    /// Run a tier of the verification suite.
    Verify {
        /// Closed-form and equality cases at N = 16.
        #[arg(long, group = "tier")]
        quick: bool,
        /// Every acceptance criterion at N = 32.
        #[arg(long, group = "tier")]
        full: bool,
        /// Grid-convergence studies up to N = 64.
        #[arg(long, group = "tier")]
        extended: bool,
    },
}

/// A failed invocation with its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn solver(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_SOLVER,
        message: format!("error: {e}"),
    }
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            if code == EXIT_USAGE {
                eprintln!("\n{}", Config::schema());
            }
            return code;
        }
    };
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.message);
            if f.code == EXIT_USAGE {
                eprintln!("\n{}", Config::schema());
            }
            f.code
        }
    }
}

fn load(cli: &Cli) -> Result<Loaded, Failure> {
    let loaded = match &cli.config {
        Some(path) => config::load_config(path),
        None => config::from_value(&serde_json::json!({})),
    };
    loaded.map_err(|e| usage(e.to_string()))
}

fn output_dir(c: &Config) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&c.io.output_dir),
    }
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

/// Shared state of one invocation.
struct Run {
    loaded: Loaded,
    command: Vec<String>,
    out: Output,
}

impl Run {
    fn config(&self) -> &Config {
        &self.loaded.config
    }

    fn grid(&self) -> Grid {
        Grid::new(self.config().grid.n).expect("validated grid size")
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        self.out.write(name, bytes).map(|_| ()).map_err(|e| solver(format!("writing {name}: {e}")))
    }

    fn finish(self, stem: &str) -> Result<(), Failure> {
        self.out
            .finish(stem, self.command, &self.loaded.config, &self.loaded.defaults)
            .map(|_| ())
            .map_err(|e| solver(format!("writing manifest: {e}")))
    }

    fn random(&self, seed: u64, experiment: &str) -> Field {
        random_potential(
            self.grid(),
            seed,
            self.config().amplitude(experiment),
            self.config().experiment.max_wavenumber,
        )
    }
}

fn run(cli: Cli, command: Vec<String>) -> Result<i32, Failure> {
    let loaded = load(&cli)?;
    let c = loaded.config.clone();
    let grid = Grid::new(c.grid.n).map_err(|e| usage(e.to_string()))?;
    let seed_of = |s: &Seed| s.seed.unwrap_or(c.experiment.seeds[0]);
    let build = |spec: &PotentialSpec| spec.build(grid, c.experiment.max_wavenumber).map_err(usage);

    // Everything that can be a usage error is resolved before any output.
    let mut run = Run {
        out: Output::new(output_dir(&c)),
        loaded,
        command,
    };
    match &cli.command {
        Command::Geodesic { from, to, seed } => {
            let (a, b) = (build(from)?, build(to)?);
            let seed = seed_of(seed);
            let opts = c.solve_options();
            let cont = run
                .out
                .timed("solve", || geodesic::continuation_solve(&a, &b, &opts))
                .map_err(solver)?;
            let report = ExperimentReport::new("geodesic")
                .solver_inputs(&opts, c.grid.n)
                .input("from", spec_text(from))
                .input("to", spec_text(to))
                .input("seed", seed)
                .quantity("length", cont.diagnostics.length)
                .quantity("error_bar", geodesic::error_bar(&cont))
                .quantity("energy", &cont.diagnostics.energy)
                .quantity("energy_spread", cont.diagnostics.energy_spread)
                .quantity("residual", cont.diagnostics.residual)
                .quantity("min_rho", cont.diagnostics.min_rho)
                .quantity("min_phitt", cont.diagnostics.min_phitt)
                .quantity("levels", &cont.levels)
                .finish(cont.diagnostics.min_phitt.min(cont.diagnostics.min_rho), 0.0);
            println!("{}", report.to_json());
            let stem = format!("geodesic-seed{seed}");
            let mut path_bytes = Vec::new();
            mabuchi::io::write_path(&mut path_bytes, &cont.path).map_err(solver)?;
            run.write(&format!("{stem}.path"), &path_bytes)?;
            run.write(&format!("{stem}.json"), report.to_json().as_bytes())?;
            run.finish(&stem)?;
            Ok(EXIT_OK)
        }
        Command::Distance { from, to, seed } => {
            let (a, b) = (build(from)?, build(to)?);
            let seed = seed_of(seed);
            let opts = c.solve_options();
            let d = run.out.timed("solve", || geodesic::distance(&a, &b, &opts)).map_err(solver)?;
            println!("{:.9} ± {:.3e}", d.value, d.error_bar);
            let report = ExperimentReport::new("distance")
                .solver_inputs(&opts, c.grid.n)
                .input("from", spec_text(from))
                .input("to", spec_text(to))
                .quantity("distance", d.value)
                .quantity("error_bar", d.error_bar)
                .finish(0.0, d.error_bar);
            let stem = format!("distance-seed{seed}");
            run.write(&format!("{stem}.json"), report.to_json().as_bytes())?;
            run.finish(&stem)?;
            Ok(EXIT_OK)
        }
        Command::Flow { from, steps, ds, seed } => {
            let a = build(from)?;
            let seed = seed_of(seed);
            let mut opts = c.flow_options();
            if let Some(s) = steps {
                opts.steps = *s;
            }
            if let Some(ds) = ds {
                opts.ds = *ds;
            }
            opts.validate().map_err(|e| usage(e.to_string()))?;
            let traj = run.out.timed("flow", || flow::run_flow_with(&a, &opts)).map_err(solver)?;
            let stem = format!("flow-seed{seed}");
            let every = c.flow.sample_every;
            let mut csv = Vec::new();
            mabuchi::io::write_trajectory_csv(&mut csv, &traj, every).map_err(solver)?;
            run.write(&format!("{stem}.csv"), &csv)?;
            run.write(&format!("{stem}-final.mnpl"), &mabuchi::io::field_to_bytes(traj.last()))?;
            if c.io.dump_fields {
                for k in mabuchi::io::sampled_steps(traj.states.len(), every) {
                    run.write(&format!("{stem}-step{k:06}.mnpl"), &mabuchi::io::field_to_bytes(&traj.states[k]))?;
                }
            }
            println!(
                "s = {:.6e}: calabi_energy {:.6e} -> {:.6e}, k_energy {:.6e} -> {:.6e}",
                traj.times.last().unwrap_or(&0.0),
                traj.calabi_energy[0],
                traj.calabi_energy.last().unwrap_or(&0.0),
                traj.k_energy[0],
                traj.k_energy.last().unwrap_or(&0.0)
            );
            run.finish(&stem)?;
            Ok(EXIT_OK)
        }
        Command::Triangle { seed, lambda } => {
            let seed = seed_of(seed);
            let lambdas = match lambda {
                Some(l) if (0.0..=1.0).contains(l) => vec![*l],
                Some(l) => return Err(usage(format!("--lambda must lie in [0, 1], got {l}"))),
                None => c.experiment.lambdas.clone(),
            };
            let [a, b, cc] = [0, 1, 2].map(|j| run.random(3 * seed + j, "triangle"));
            let opts = c.solve_options();
            let sweep = run
                .out
                .timed("triangle", || npc::cat0_sweep(&a, &b, &cc, &lambdas, &opts))
                .map_err(solver)?;
            let reports: Vec<ExperimentReport> = sweep
                .iter()
                .map(|r| {
                    r.experiment_report(&opts, c.grid.n)
                        .input("seed", seed)
                        .input("amplitude", c.amplitude("triangle"))
                        .input("cat0_tol", c.experiment.tolerances.cat0)
                })
                .collect();
            let stem = format!("triangle-seed{seed}");
            let text = if reports.len() == 1 { reports[0].to_json() } else { to_json(&reports) };
            println!("{text}");
            run.write(&format!("{stem}.json"), text.as_bytes())?;
            run.finish(&stem)?;
            Ok(exit_for(reports.iter().all(|r| r.pass)))
        }
        Command::Jacobi { seed } => {
            let seed = seed_of(seed);
            let [p, q0, w] = [0, 1, 2].map(|j| run.random(3 * seed + j, "jacobi"));
            let q: Vec<Field> = (0..3).map(|j| q0.add_scaled(0.1 * (j as f64 - 1.0), &w)).collect();
            let opts = geodesic::SolveOptions {
                newton_tol: c.experiment.jacobi_newton_tol,
                ..c.solve_options()
            };
            let r = run
                .out
                .timed("jacobi", || npc::jacobi_experiment(&p, &q, 1, 1, c.path.eps_target, &opts))
                .map_err(solver)?;
            let t = &c.experiment.tolerances;
            let report = r
                .experiment_report(&opts, c.grid.n, t.jacobi_convexity, t.jacobi_end)
                .input("seed", seed)
                .input("amplitude", c.amplitude("jacobi"));
            emit(run, "jacobi", seed, report)
        }
        Command::Contract { seed } => {
            let seed = seed_of(seed);
            let (a, b) = (run.random(2 * seed, "contract"), run.random(2 * seed + 1, "contract"));
            let (fo, so) = (c.flow_options(), c.solve_options());
            let report = run
                .out
                .timed("contract", || flow::contraction_experiment(&a, &b, &fo, c.flow.sample_every, &so))
                .map_err(solver)?
                .input("seed", seed)
                .input("amplitude", c.amplitude("contract"));
            emit(run, "contract", seed, report)
        }
        Command::Derivcheck { seed, delta_s } => {
            if !(*delta_s > 0.0 && delta_s.is_finite()) {
                return Err(usage(format!("--delta-s must be positive, got {delta_s}")));
            }
            let seed = seed_of(seed);
            let [a, b, ya, yb] = [0, 1, 2, 3].map(|j| run.random(4 * seed + j, "derivcheck"));
            let phi0: Vec<Field> = (0..3).map(|j| a.add_scaled((j as f64 - 1.0) * delta_s, &ya)).collect();
            let phi1: Vec<Field> = (0..3).map(|j| b.add_scaled((j as f64 - 1.0) * delta_s, &yb)).collect();
            let opts = c.solve_options();
            let r = run
                .out
                .timed("derivcheck", || {
                    npc::distance_derivative_check(&phi0, &phi1, c.path.eps_target, *delta_s, &opts)
                })
                .map_err(solver)?;
            let tol = c.experiment.tolerances.derivative;
            let report = r
                .input("seed", seed)
                .input("amplitude", c.amplitude("derivcheck"))
                .input("derivative_tol", tol);
            let margin = report.margin;
            emit(run, "derivcheck", seed, report.finish(margin, tol))
        }
        Command::Verify { quick, full, extended } => {
            let tier = match (quick, full, extended) {
                (_, true, _) => Tier::Full,
                (_, _, true) => Tier::Extended,
                _ => Tier::Quick,
            };
            let name = match tier {
                Tier::Quick => "quick",
                Tier::Full => "full",
                Tier::Extended => "extended",
            };
            let outcomes = run
                .out
                .timed(name, || suite::run_tier_with(tier, |o| println!("{}", o.summary())));
            let pass = outcomes.iter().all(|o| o.pass());
            let stem = format!("verify-{name}");
            run.write(&format!("{stem}.json"), to_json(&outcomes).as_bytes())?;
            run.finish(&stem)?;
            println!("verify {name}: {}", if pass { "PASS" } else { "FAIL" });
            Ok(exit_for(pass))
        }
    }
}

fn exit_for(pass: bool) -> i32 {
    if pass {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn emit(mut run: Run, experiment: &str, seed: u64, report: ExperimentReport) -> Result<i32, Failure> {
    let text = report.to_json();
    println!("{text}");
    let stem = format!("{experiment}-seed{seed}");
    run.write(&format!("{stem}.json"), text.as_bytes())?;
    run.finish(&stem)?;
    Ok(exit_for(report.pass))
}

fn spec_text(spec: &PotentialSpec) -> String {
    match spec {
        PotentialSpec::Zero => "zero".into(),
        PotentialSpec::Const(c) => format!("const:{c}"),
        PotentialSpec::Cos(a) => format!("cos:{a}"),
        PotentialSpec::Random { seed, amplitude } => format!("random:{seed}:{amplitude}"),
        PotentialSpec::File(p) => format!("file:{}", p.display()),
    }
}
