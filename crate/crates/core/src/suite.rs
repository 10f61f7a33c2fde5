//! Verification suite shared by the acceptance tests and `mnpl verify`.
//!
//! Every criterion returns named checks with measured values plus the
//! experiment reports it produced. Solver failures are recorded as failed
//! checks rather than panics so one criterion cannot hide the others.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use crate::error::LabError;
use crate::flow::{self, FlowOptions};
use crate::geodesic::{self, SolveOptions};
use crate::grid::{self, Field, Grid};
use crate::kahler;
use crate::npc::{self, random_potential};
use crate::report::ExperimentReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Tier {
    /// Closed-form and equality cases at N = 16.
    Quick,
    /// All criteria at N = 32.
    Full,
    /// Grid-convergence studies up to N = 64.
    Extended,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub checks: Vec<Check>,
    pub reports: Vec<ExperimentReport>,
    pub seconds: f64,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    /// `criterion <id> <PASS|FAIL>: <title> (<n>/<m> checks, <t> s)`, followed
    /// by the failing checks.
    pub fn summary(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.pass).count();
        let mut s = format!(
            "criterion {} {}: {} ({ok}/{} checks, {:.1} s)",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.title,
            self.checks.len(),
            self.seconds
        );
        for c in self.checks.iter().filter(|c| !c.pass) {
            s.push_str(&format!("\n    failed {}: {}", c.name, c.detail));
        }
        s
    }
}

/// Collects checks for one criterion.
struct Recorder {
    checks: Vec<Check>,
    reports: Vec<ExperimentReport>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            checks: Vec::new(),
            reports: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    /// Runs a fallible part; an error becomes a failed check.
    fn part(&mut self, name: &str, f: impl FnOnce(&mut Recorder) -> Result<(), LabError>) {
        if let Err(e) = f(self) {
            self.check(name, false, format!("error: {e}"));
        }
    }

    fn report(&mut self, name: impl Into<String>, r: ExperimentReport) {
        let detail = format!("margin {:.3e}, budget {:.3e}", r.margin, r.budget);
        self.check(name, r.pass, detail);
        self.reports.push(r);
    }

    fn finish(self, id: &str, title: &str, start: Instant) -> Outcome {
        Outcome {
            id: id.into(),
            title: title.into(),
            checks: self.checks,
            reports: self.reports,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn grid(n: usize) -> Grid {
    Grid::new(n).expect("suite grids are valid")
}

fn opts_for(n: usize) -> SolveOptions {
    SolveOptions {
        time_steps: Some(n),
        ..SolveOptions::default()
    }
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    (a - b).max_abs()
}

fn cos_x(g: Grid, a: f64) -> Field {
    Field::from_fn(g, move |x, _| a * (2.0 * PI * x).cos())
}

/// Rounds to a multiple of `2⁻⁴⁰` so that adding dyadic shifts is exact.
fn dyadic(f: &Field) -> Field {
    let scale = (1u64 << 40) as f64;
    f.map(|v| (v * scale).round() / scale)
}

pub const TITLES: [&str; 10] = [
    "closed-form epsilon-geodesics and distance to constants",
    "energy-element constancy under epsilon halving",
    "CAT(0) comparison on seeded triangles",
    "minimizing-sequence midpoint bound",
    "Jacobi field convexity and end inequality",
    "length derivative under the flow against finite differences",
    "distance contraction under the flow",
    "first derivative of distance",
    "linear physics of the Calabi flow",
    "structural invariants",
];

/// Runs criterion `id` (1 to 10) at its full-tier settings.
pub fn criterion(id: usize) -> Outcome {
    match id {
        1 => criterion_1(16),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(32),
        _ => panic!("no criterion {id}"),
    }
}

pub fn run_tier(tier: Tier) -> Vec<Outcome> {
    run_tier_with(tier, |_| {})
}

/// Like [`run_tier`], calling `each` as every outcome completes.
pub fn run_tier_with(tier: Tier, mut each: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let steps: Vec<Box<dyn Fn() -> Outcome>> = match tier {
        Tier::Quick => vec![Box::new(|| criterion_1(16)), Box::new(quick_equalities), Box::new(|| criterion_10(16))],
        Tier::Full => (1..=10).map(|id| Box::new(move || criterion(id)) as Box<dyn Fn() -> Outcome>).collect(),
        Tier::Extended => vec![Box::new(|| criterion_10(64)), Box::new(convergence_study)],
    };
    steps
        .into_iter()
        .map(|step| {
            let o = step();
            each(&o);
            o
        })
        .collect()
}

/// Exact ε-geodesics for flat and constant endpoints, and `d(0, c) = |c|`.
pub fn criterion_1(n: usize) -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(n);
    let opts = opts_for(n);
    rec.part("flat endpoints", |rec| {
        let eps = 0.1;
        let zero = Field::zeros(g);
        let (path, diag) = geodesic::solve_epsilon_geodesic(&zero, &zero, eps, &opts, None).map_err(LabError::leg("0 to 0"))?;
        let err = (0..=path.steps())
            .map(|k| {
                let t = path.t(k);
                max_diff(path.slice(k), &Field::constant(g, 0.5 * eps * t * (t - 1.0)))
            })
            .fold(0.0, f64::max);
        rec.check("flat endpoints: slices", err <= 1e-8, format!("max error {err:.2e}"));
        let e_err = diag
            .energy
            .iter()
            .enumerate()
            .map(|(k, e)| (e - (eps * (path.t(k) - 0.5)).powi(2)).abs())
            .fold(0.0, f64::max);
        rec.check("flat endpoints: energy elements", e_err <= 1e-8, format!("max error {e_err:.2e}"));
        Ok(())
    });
    rec.part("constant endpoints", |rec| {
        let (eps, c) = (1e-3, 0.3);
        let (path, _) =
            geodesic::solve_epsilon_geodesic(&Field::zeros(g), &Field::constant(g, c), eps, &opts, None)
                .map_err(LabError::leg("0 to c"))?;
        let err = (0..=path.steps())
            .map(|k| {
                let t = path.t(k);
                max_diff(path.slice(k), &Field::constant(g, c * t + 0.5 * eps * t * (t - 1.0)))
            })
            .fold(0.0, f64::max);
        rec.check("constant endpoints: slices", err <= 1e-8, format!("max error {err:.2e}"));
        Ok(())
    });
    for c in [0.3, -0.2] {
        rec.part("distance to a constant", |rec| {
            let d = geodesic::distance(&Field::zeros(g), &Field::constant(g, c), &opts).map_err(LabError::leg("0 to c"))?;
            let err = (d.value - c.abs()).abs();
            rec.check(format!("d(0, {c})"), err <= 1e-6, format!("{} ± {:.1e}, error {err:.2e}", d.value, d.error_bar));
            Ok(())
        });
    }
    rec.finish("1", TITLES[0], start)
}

/// Energy spread ratios over the last three halvings of ε.
pub fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let opts = opts_for(32);
    rec.part("continuation", |rec| {
        let cont = geodesic::continuation_solve(&Field::zeros(g), &cos_x(g, 0.01), &opts).map_err(LabError::leg("0 to cos"))?;
        let levels = &cont.levels;
        let tail = &levels[levels.len() - 4..];
        let mut report = ExperimentReport::new("energy_spread").solver_inputs(&opts, 32);
        let mut worst = f64::NEG_INFINITY;
        for w in tail.windows(2) {
            let ratio = w[1].energy_spread / w[0].energy_spread;
            let order = -ratio.log2();
            worst = worst.max(ratio);
            rec.check(
                format!("spread({:.0e})/spread({:.0e})", w[1].eps, w[0].eps),
                ratio <= 0.6 && order >= 0.8,
                format!("ratio {ratio:.3}, order {order:.2}"),
            );
        }
        report = report
            .quantity("eps", tail.iter().map(|l| l.eps).collect::<Vec<_>>())
            .quantity("energy_spread", tail.iter().map(|l| l.energy_spread).collect::<Vec<_>>())
            .quantity("spread_over_eps", tail.iter().map(|l| l.energy_spread / l.eps).collect::<Vec<_>>())
            .quantity("length", tail.iter().map(|l| l.length).collect::<Vec<_>>());
        rec.reports.push(report.finish(0.6 - worst, 0.0));
        Ok(())
    });
    rec.finish("2", TITLES[1], start)
}

fn triangle_equalities(rec: &mut Recorder, n: usize) {
    let g = grid(n);
    let opts = opts_for(n);
    rec.part("B = C", |rec| {
        let a = random_potential(g, 901, 2e-3, 1);
        let b = random_potential(g, 902, 2e-3, 1);
        let r = npc::cat0_check(&a, &b, &b, 0.5, &opts)?;
        rec.check(
            "triangle B = C",
            r.margin.abs() <= r.budget,
            format!("margin {:.2e}, budget {:.2e}", r.margin, r.budget),
        );
        rec.reports.push(r.experiment_report(&opts, n));
        Ok(())
    });
    rec.part("constant triangle", |rec| {
        let r = npc::cat0_check(&Field::zeros(g), &Field::constant(g, 0.1), &Field::constant(g, 0.3), 0.5, &opts)?;
        rec.check(
            "all-constant triangle",
            r.margin.abs() <= r.budget,
            format!("margin {:.2e}, budget {:.2e}", r.margin, r.budget),
        );
        rec.reports.push(r.experiment_report(&opts, n));
        Ok(())
    });
}

pub const CAT0_TOL: f64 = 5e-4;

/// 20 seeded triangles at λ ∈ {¼, ½, ¾} plus the equality cases.
pub fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let opts = opts_for(32);
    for i in 0..20u64 {
        let amp = 1e-3 * (1 + i % 3) as f64;
        let [a, b, c] = [0, 1, 2].map(|j| random_potential(g, 1000 + 3 * i + j, amp, 1));
        rec.part(&format!("triangle {i}"), |rec| {
            for r in npc::cat0_sweep(&a, &b, &c, &[0.25, 0.5, 0.75], &opts)? {
                rec.check(
                    format!("triangle {i}, lambda {}", r.lambda),
                    r.holds() && r.budget <= CAT0_TOL,
                    format!("margin {:.2e}, budget {:.2e}", r.margin, r.budget),
                );
                rec.reports.push(r.experiment_report(&opts, 32).input("seed", 1000 + 3 * i));
            }
            Ok(())
        });
    }
    triangle_equalities(&mut rec, 32);
    rec.finish("3", TITLES[2], start)
}

/// Midpoint bound for perturbation scales 1e-3 and 1e-2 on 5 seeds.
pub fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let opts = opts_for(32);
    for s in 0..5u64 {
        let a = random_potential(g, 2000 + 2 * s, 1e-2, 1);
        let b = random_potential(g, 2001 + 2 * s, 1e-2, 1);
        for scale in [1e-3, 1e-2] {
            rec.part(&format!("seed {s}, scale {scale}"), |rec| {
                let r = npc::minimizing_sequence_check(&a, &b, scale, 2100 + s, &opts)?;
                let length_ok = r.quantities["length_ok"] == serde_json::Value::Bool(true);
                rec.check(format!("seed {s}, scale {scale}: l_i >= l"), length_ok, "curve length vs geodesic");
                rec.report(format!("seed {s}, scale {scale}: bound"), r);
                Ok(())
            });
        }
    }
    rec.finish("4", TITLES[3], start)
}

fn jacobi_constant_family(rec: &mut Recorder, n: usize) {
    let g = grid(n);
    let opts = opts_for(n);
    rec.part("constant family", |rec| {
        let q: Vec<Field> = (0..3).map(|j| Field::constant(g, 0.1 * (j + 1) as f64)).collect();
        let r = npc::jacobi_experiment(&Field::zeros(g), &q, 1, 1, 1e-3, &opts)?;
        let rel = (r.end_pairing - r.end_norm).abs() / r.end_norm;
        rec.check("constant family: end equality", rel <= 1e-8, format!("relative gap {rel:.2e}"));
        let second = r.second_differences.iter().map(|d| d.abs()).fold(0.0, f64::max);
        rec.check(
            "constant family: |Y| linear",
            second <= 1e-8 * r.max_norm(),
            format!("max |second difference| {second:.2e}"),
        );
        Ok(())
    });
}

pub const JACOBI_CONVEX_TOL: f64 = 1e-6;
pub const JACOBI_END_TOL: f64 = 1e-3;

/// Jacobi-field convexity and the end inequality on 5 seeded families.
pub fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let opts = SolveOptions {
        newton_tol: 1e-11,
        ..opts_for(32)
    };
    for s in 0..5u64 {
        let p = random_potential(g, 3000 + s, 2e-3, 1);
        let q0 = random_potential(g, 3100 + s, 2e-3, 1);
        let w = random_potential(g, 3200 + s, 2e-3, 1);
        let q: Vec<Field> = (0..3).map(|j| q0.add_scaled(JACOBI_STEP * (j as f64 - 1.0), &w)).collect();
        rec.part(&format!("family {s}"), |rec| {
            let r = npc::jacobi_experiment(&p, &q, 1, 1, 1e-3, &opts)?;
            rec.check(
                format!("family {s}: convexity"),
                r.convex(JACOBI_CONVEX_TOL),
                format!("min second difference {:.2e}, max |Y| {:.2e}", r.min_second_difference(), r.max_norm()),
            );
            rec.check(
                format!("family {s}: end inequality"),
                r.end_inequality(JACOBI_END_TOL),
                format!("<Y,Y'>/<Y,Y> = {:.6}", r.end_pairing / r.end_norm),
            );
            rec.reports
                .push(r.experiment_report(&opts, 32, JACOBI_CONVEX_TOL, JACOBI_END_TOL).input("seed", 3000 + s));
            Ok(())
        });
    }
    jacobi_constant_family(&mut rec, 32);
    rec.finish("5", TITLES[4], start)
}

/// Spacing of the endpoint curve of the Jacobi families.
const JACOBI_STEP: f64 = 0.1;

/// `a + t(b − a) + t(1 − t)c` on `k + 1` slices.
fn seeded_curve(g: Grid, seed: u64, k: usize) -> Vec<Field> {
    let a = random_potential(g, seed, 1e-3, 1);
    let b = random_potential(g, seed + 1, 1e-3, 1);
    let c = random_potential(g, seed + 2, 5e-4, 1);
    (0..=k)
        .map(|j| {
            let t = j as f64 / k as f64;
            let base = a.add_scaled(t, &(&b - &a));
            base.add_scaled(t * (1.0 - t), &c)
        })
        .collect()
}

fn constant_shift_curve(g: Grid, k: usize) -> Vec<Field> {
    let base = dyadic(&random_potential(g, 4999, 1e-3, 2));
    (0..=k).map(|j| base.map(|v| v + 0.25 * j as f64 / k as f64)).collect()
}

fn constant_shift_check(rec: &mut Recorder, n: usize) {
    rec.part("constant shift", |rec| {
        let curve = constant_shift_curve(grid(n), 16);
        let d0 = flow::length_derivative(&curve)?;
        rec.check("constant-shift curve: dL/ds = 0", d0 == 0.0, format!("dL/ds {d0:e}"));
        // once flowed the slices are no longer dyadic, so only round-off remains
        let flowed = flow::flow_curve(&curve, 1e-5, 2)?;
        let worst = flowed.derivatives.iter().map(|d| d.abs()).fold(0.0, f64::max);
        rec.check("constant-shift curve under the flow", worst <= 1e-20, format!("max |dL/ds| {worst:.2e}"));
        Ok(())
    });
}

/// Analytic dL/ds against centered differences of L under the flow.
pub fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let ds = 1e-5;
    for s in 0..3u64 {
        rec.part(&format!("curve {s}"), |rec| {
            let flowed = flow::flow_curve(&seeded_curve(g, 4000 + 3 * s, 16), ds, 2)?;
            let fd = (flowed.lengths[2] - flowed.lengths[0]) / (2.0 * ds);
            let analytic = flowed.derivatives[1];
            let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs());
            rec.check(
                format!("curve {s}: analytic vs finite difference"),
                rel <= 1e-3,
                format!("analytic {analytic:.6e}, finite difference {fd:.6e}, relative gap {rel:.2e}"),
            );
            let max = flowed.derivatives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rec.check(format!("curve {s}: dL/ds <= 0"), max <= 0.0, format!("max dL/ds {max:.3e}"));
            rec.reports.push(
                ExperimentReport::new("length_derivative")
                    .input("N", 32)
                    .input("K", 16)
                    .input("ds", ds)
                    .input("seed", 4000 + 3 * s)
                    .quantity("lengths", &flowed.lengths)
                    .quantity("derivatives", &flowed.derivatives)
                    .quantity("finite_difference", fd)
                    .quantity("relative_gap", rel)
                    .finish(-rel, 1e-3),
            );
            Ok(())
        });
    }
    constant_shift_check(&mut rec, 32);
    rec.finish("6", TITLES[5], start)
}

fn constant_contraction(rec: &mut Recorder, n: usize, steps: usize, every: usize) {
    let g = grid(n);
    let opts = opts_for(n);
    rec.part("constant pair", |rec| {
        let r = flow::contraction_experiment(
            &Field::constant(g, 0.1),
            &Field::constant(g, 0.4),
            &FlowOptions::new(1e-5, steps),
            every,
            &opts,
        )?;
        let d: Vec<f64> = serde_json::from_value(r.quantities["distance"].clone()).unwrap_or_default();
        let constant = !d.is_empty() && d.iter().all(|&v| v == d[0]);
        rec.check(
            "all-constant pair: d(s) constant",
            constant && (d[0] - 0.3).abs() <= 1e-6,
            format!("{} samples, d = {:?}", d.len(), d.first()),
        );
        Ok(())
    });
}

pub const CONTRACTION_STEPS: usize = 490;
pub const CONTRACTION_EVERY: usize = 10;

/// Distance between flowed pairs at 50 samples.
pub fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let opts = opts_for(32);
    let flow_opts = FlowOptions::new(1e-5, CONTRACTION_STEPS);
    for s in 0..5u64 {
        let a = random_potential(g, 5000 + 2 * s, 1e-2, 1);
        let b = random_potential(g, 5001 + 2 * s, 1e-2, 1);
        rec.part(&format!("pair {s}"), |rec| {
            let r = flow::contraction_experiment(&a, &b, &flow_opts, CONTRACTION_EVERY, &opts)?;
            rec.report(format!("pair {s}: d(s) non-increasing"), r.input("seed", 5000 + 2 * s));
            Ok(())
        });
    }
    constant_contraction(&mut rec, 32, CONTRACTION_STEPS, CONTRACTION_EVERY);
    rec.finish("7", TITLES[6], start)
}

fn derivative_constant_family(rec: &mut Recorder, n: usize) {
    let g = grid(n);
    let opts = opts_for(n);
    let ds = 1e-3;
    rec.part("constant family", |rec| {
        let (c, c_prime) = (0.3, 0.5);
        let phi0: Vec<Field> = vec![Field::zeros(g); 3];
        let phi1: Vec<Field> = (0..3).map(|j| Field::constant(g, c + (j as f64 - 1.0) * ds * c_prime)).collect();
        let r = npc::distance_derivative_check(&phi0, &phi1, 1e-3, ds, &opts)?;
        let analytic = r.quantities["analytic"].as_f64().unwrap_or(f64::NAN);
        let err = (analytic - c_prime).abs();
        rec.check("constant family: sign(c) c'", err <= 1e-6, format!("analytic {analytic}, error {err:.2e}"));
        let still: Vec<Field> = vec![Field::constant(g, c); 3];
        let r = npc::distance_derivative_check(&phi0, &still, 1e-3, ds, &opts)?;
        let analytic = r.quantities["analytic"].as_f64().unwrap_or(f64::NAN);
        rec.check("curves constant in s: analytic 0", analytic == 0.0, format!("analytic {analytic:e}"));
        Ok(())
    });
}

/// Analytic against finite-difference derivative of distance.
pub fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    let opts = opts_for(32);
    let ds = 1e-3;
    for s in 0..3u64 {
        let [a, b, ya, yb] = [0, 1, 2, 3].map(|j| random_potential(g, 6000 + 4 * s + j, 1e-2, 1));
        let phi0: Vec<Field> = (0..3).map(|j| a.add_scaled((j as f64 - 1.0) * ds, &ya)).collect();
        let phi1: Vec<Field> = (0..3).map(|j| b.add_scaled((j as f64 - 1.0) * ds, &yb)).collect();
        rec.part(&format!("motion {s}"), |rec| {
            let r = npc::distance_derivative_check(&phi0, &phi1, 1e-3, ds, &opts)?;
            rec.report(format!("motion {s}: relative gap"), r.input("seed", 6000 + 4 * s));
            Ok(())
        });
    }
    derivative_constant_family(&mut rec, 32);
    rec.finish("8", TITLES[7], start)
}

/// Projection of `f` on `cos(2πx)`.
fn cos_coefficient(f: &Field) -> f64 {
    let g = f.grid();
    2.0 * grid::integrate(f, &cos_x(g, 1.0))
}

/// Mode decay against the scheme symbol and the continuum rate,
/// `dM/ds = −calabi_energy`, and decay of the Calabi energy.
pub fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(32);
    rec.part("mode (1,0)", |rec| {
        let (a, ds) = (1e-7, 1e-4);
        let phi = cos_x(g, a);
        let next = flow::flow_step(&phi, ds)?;
        let ratio = cos_coefficient(&next) / cos_coefficient(&phi);
        let sigma = crate::spectral::laplacian_symbol(32, 1, 0);
        let q = 0.25 * ds * sigma * sigma;
        let symbol = (1.0 - q) / (1.0 + q);
        let err = (ratio - symbol).abs();
        rec.check("mode ratio vs scheme symbol", err <= 1e-10, format!("ratio {ratio:.14}, symbol {symbol:.14}"));
        let rate = -ratio.ln() / ds;
        let continuum = 0.5 * (2.0 * PI).powi(4);
        let rel = (rate - continuum).abs() / continuum;
        rec.check("decay rate vs 1/2 (2 pi)^4", rel <= 1e-2, format!("rate {rate:.3}, relative error {rel:.2e}"));
        Ok(())
    });
    rec.part("K-energy derivative", |rec| {
        let ds = 1e-6;
        let traj = flow::run_flow(&random_potential(g, 7000, 1e-3, 1), ds, 200)?;
        let worst = (1..traj.k_energy.len() - 1)
            .map(|k| {
                let fd = (traj.k_energy[k + 1] - traj.k_energy[k - 1]) / (2.0 * ds);
                (fd + traj.calabi_energy[k]).abs() / traj.calabi_energy[k]
            })
            .fold(0.0, f64::max);
        rec.check("dM/ds = -calabi_energy", worst <= 1e-4, format!("worst relative error {worst:.2e}"));
        Ok(())
    });
    rec.part("decay", |rec| {
        let traj = flow::run_flow(&random_potential(g, 7001, 1e-3, 2), 2e-5, 2000)?;
        let last = *traj.calabi_energy.last().unwrap_or(&f64::NAN);
        let first = traj.calabi_energy.iter().position(|&c| c < 1e-12);
        rec.check(
            "calabi_energy < 1e-12",
            last < 1e-12,
            format!("start {:.2e}, end {last:.2e}, first below at step {first:?}", traj.calabi_energy[0]),
        );
        Ok(())
    });
    rec.finish("9", TITLES[8], start)
}

/// Gauss–Bonnet, volume, sign of the curvature pairing and the kernel of D.
pub fn criterion_10(n: usize) -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let g = grid(n);
    let mut gb = 0.0f64;
    let mut vol = 0.0f64;
    let mut pairing = f64::NEG_INFINITY;
    let mut failed = None;
    for seed in 0..8u64 {
        let phi = random_potential(g, 8000 + seed, 0.5 * (1 + seed % 2) as f64, 1 + (seed as usize % 2));
        let m = match kahler::make_metric(&phi) {
            Ok(m) => m,
            Err(e) => {
                failed = Some(e.to_string());
                break;
            }
        };
        gb = gb.max(grid::integrate(m.curvature(), m.rho()).abs());
        vol = vol.max((grid::integrate(m.rho(), &Field::constant(g, 1.0)) - 1.0).abs());
        let x = random_potential(g, 8100 + seed, 1.0, 2);
        let y = random_potential(g, 8200 + seed, 1.0, 2);
        pairing = pairing.max(kahler::curvature_pairing(&x, &y, &m));
    }
    if let Some(e) = failed {
        rec.check("metrics", false, e);
    }
    rec.check("Gauss-Bonnet", gb <= 1e-8, format!("max |int R dmu| {gb:.2e}"));
    rec.check("volume", vol <= 1e-10, format!("max |int rho - 1| {vol:.2e}"));
    rec.check("curvature pairing <= 0", pairing <= 0.0, format!("max pairing {pairing:.3e}"));
    let flat = kahler::make_metric(&Field::zeros(g)).expect("flat metric");
    let kmax = n / 4;
    let mut kernel = Vec::new();
    let mut smallest = f64::INFINITY;
    for kx in 0..=kmax {
        for ky in -(kmax as i64)..=kmax as i64 {
            for phase in [0.0, 0.25] {
                let f = Field::from_fn(g, |x, y| (2.0 * PI * (kx as f64 * x + ky as f64 * y + phase)).cos());
                if f.max_abs() < 0.5 {
                    continue;
                }
                let norm = kahler::lichnerowicz_norm_sq(&f, &flat);
                if norm <= 1e-12 {
                    kernel.push((kx, ky));
                } else if kx > 0 || ky != 0 {
                    smallest = smallest.min(norm);
                }
            }
        }
    }
    let only_constants = kernel.iter().all(|&(kx, ky)| kx == 0 && ky == 0) && kernel.contains(&(0, 0));
    rec.check(
        "kernel of D at the flat metric",
        only_constants,
        format!("kernel modes {kernel:?}, smallest non-constant |Df|^2 {smallest:.3e}"),
    );
    rec.finish("10", TITLES[9], start)
}

/// Closed-form and equality cases of criteria 3 to 9 at N = 16.
pub fn quick_equalities() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let n = 16;
    let g = grid(n);
    triangle_equalities(&mut rec, n);
    jacobi_constant_family(&mut rec, n);
    constant_shift_check(&mut rec, n);
    constant_contraction(&mut rec, n, 20, 5);
    derivative_constant_family(&mut rec, n);
    rec.part("flat fixed point", |rec| {
        let traj = flow::run_flow(&Field::zeros(g), 1e-3, 5)?;
        let moved = traj.states.iter().map(|s| s.max_abs()).fold(0.0, f64::max);
        rec.check("flat metric is stationary", moved == 0.0, format!("max |phi| {moved:e}"));
        Ok(())
    });
    rec.part("scale 0", |rec| {
        let a = random_potential(g, 2000, 1e-2, 1);
        let b = random_potential(g, 2001, 1e-2, 1);
        let r = npc::minimizing_sequence_check(&a, &b, 0.0, 1, &opts_for(n))?;
        let both = r.quantities["bound"].as_f64() == Some(0.0) && r.quantities["midpoint_distance"].as_f64() == Some(0.0);
        rec.check("minimizing sequence at scale 0", both && r.pass, "both sides 0");
        Ok(())
    });
    rec.finish("Q", "closed-form and equality cases", start)
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Observed convergence orders under grid refinement N = 16, 32, 64.
pub fn convergence_study() -> Outcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let sizes = [16usize, 32, 64];
    let order = |e: &[f64]| (e[0] / e[1]).log2().min((e[1] / e[2]).log2());

    let continuum = 0.5 * (2.0 * PI).powi(4);
    let rate_errors: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let s = crate::spectral::laplacian_symbol(n, 1, 0);
            (0.5 * s * s - continuum).abs() / continuum
        })
        .collect();
    let p = order(&rate_errors);
    rec.check("flat decay rate, order", p >= 1.9, format!("errors {}, order {p:.2}", sci(&rate_errors)));

    rec.part("distance refinement", |rec| {
        let mut lengths = Vec::new();
        for &n in &sizes {
            let g = grid(n);
            let d = geodesic::distance(&Field::zeros(g), &cos_x(g, 0.01), &opts_for(n))
                .map_err(LabError::leg(format!("N = {n}")))?;
            lengths.push(d.value);
        }
        let diffs = [(lengths[1] - lengths[0]).abs(), (lengths[2] - lengths[1]).abs()];
        let p = (diffs[0] / diffs[1]).log2();
        rec.check("distance(0, 0.01 cos), order", p >= 1.5, format!("lengths {lengths:?}, order {p:.2}"));
        rec.reports.push(
            ExperimentReport::new("distance_refinement")
                .input("N", sizes.to_vec())
                .quantity("length", lengths)
                .quantity("order", p)
                .finish(p - 1.5, 0.0),
        );
        Ok(())
    });

    let lich_errors: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let g = grid(n);
            let flat = kahler::make_metric(&Field::zeros(g)).expect("flat metric");
            // continuum value 4 ‖¼ f_xx‖² = (2π)⁴/8 for f = cos(2πx)
            let exact = (2.0 * PI).powi(4) / 8.0;
            (kahler::lichnerowicz_norm_sq(&cos_x(g, 1.0), &flat) - exact).abs() / exact
        })
        .collect();
    let p = order(&lich_errors);
    rec.check("|Df|^2 of a cosine, order", p >= 1.9, format!("errors {}, order {p:.2}", sci(&lich_errors)));
    rec.finish("E", "grid convergence", start)
}
