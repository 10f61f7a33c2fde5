//! Calabi flow `∂φ/∂s = R − R̄` and the first variation of length of curves
//! moved by it.
//!
//! Time stepping is linearly implicit: the flat-metric linearization
//! `−½Δ²` is treated with the trapezoidal rule, the rest explicitly.

use serde::Serialize;

use crate::error::{FlowError, GeometryError, LabError};
use crate::geodesic::{self, SolveOptions};
use crate::grid::{self, Field};
use crate::kahler::{self, MetricState};
use crate::par;
use crate::report::ExperimentReport;

/// Slices whose energy element falls below this contribute nothing to
/// [`length_derivative`].
pub const E_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowOptions {
    pub ds: f64,
    pub steps: usize,
    /// Allowed increase per step of the Lyapunov quantities.
    pub mono_tol: f64,
    /// Quadrature steps for the K-energy of the initial state.
    pub quad_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            ds: 1e-5,
            steps: 100,
            mono_tol: 1e-9,
            quad_steps: 32,
        }
    }
}

impl FlowOptions {
    pub fn new(ds: f64, steps: usize) -> Self {
        FlowOptions {
            ds,
            steps,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.ds > 0.0 && self.ds.is_finite()) {
            return Err(FlowError::Invalid(format!("ds must be positive, got {}", self.ds)));
        }
        if self.mono_tol.is_nan() || self.mono_tol < 0.0 {
            return Err(FlowError::Invalid(format!("mono_tol must be non-negative, got {}", self.mono_tol)));
        }
        if self.quad_steps < 8 {
            return Err(FlowError::Invalid("quad_steps must be at least 8".into()));
        }
        Ok(())
    }
}

/// `R − R̄`, the flow velocity.
pub fn flow_rhs(m: &MetricState) -> Field {
    let mean = m.mean_curvature();
    m.curvature().map(|r| r - mean)
}

/// Stiffening level `α₀ = 1.1/ρ_min²` for a state with minimum density
/// `rho_min`.
pub fn stiffness(rho_min: f64) -> f64 {
    1.1 / (rho_min * rho_min)
}

/// Divisor of the implicit solve on a mode with `q = ¼ ds σ²`:
/// `1 + max(q, α₀ q − 1)`.
///
/// The explicit update acts on grid-scale modes like `−½Δ²/ρ²`, which a
/// plain trapezoidal divisor `1 + q` only damps where `ρ ≥ 1`. The divisor
/// above keeps `q/ρ² ≤ divisor` for all `ρ ≥ ρ_min` while leaving every mode
/// with `q < 1/(α₀ − 1)` on the trapezoidal symbol.
pub fn implicit_divisor(q: f64, alpha: f64) -> f64 {
    1.0 + q.max(alpha * q - 1.0)
}

/// One flow step of size `ds`:
/// `(Id + ¼ ds Δ²)(φ⁺ − φ) = ds (R − R̄)` on smooth modes, with the stiff
/// modes damped by [`implicit_divisor`].
///
/// At the flat metric a Fourier mode with bilaplacian symbol `σ²` and
/// `ds σ² < 40` is multiplied by `(1 − ds σ²/4)/(1 + ds σ²/4)`.
pub fn flow_step(phi: &Field, ds: f64) -> Result<Field, FlowError> {
    step_at(phi, ds, 0.0)
}

fn step_at(phi: &Field, ds: f64, s: f64) -> Result<Field, FlowError> {
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(FlowError::Invalid(format!("ds must be positive, got {ds}")));
    }
    let m = kahler::make_metric(phi).map_err(|source| FlowError::Positivity { s, source })?;
    let rhs = flow_rhs(&m);
    let alpha = stiffness(m.min_rho());
    let increment = grid::divide_by_symbol(&(&rhs * ds), |sigma| implicit_divisor(0.25 * ds * sigma * sigma, alpha));
    let next = phi + &increment;
    if !next.is_finite() {
        return Err(FlowError::Step {
            s: s + ds,
            reason: "non-finite values after the implicit solve".into(),
        });
    }
    kahler::check_positive(&kahler::density(&next), kahler::POSITIVITY_MARGIN)
        .map_err(|source| FlowError::Positivity { s: s + ds, source })?;
    Ok(next)
}

/// A discrete flow line with per-step diagnostics.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// K-energy relative to the flat potential.
    pub k_energy: Vec<f64>,
    pub calabi_energy: Vec<f64>,
    pub min_rho: Vec<f64>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &Field {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

pub fn run_flow(phi: &Field, ds: f64, steps: usize) -> Result<FlowTrajectory, FlowError> {
    run_flow_with(phi, &FlowOptions::new(ds, steps))
}

/// Integrates the flow and enforces that the Calabi energy and the K-energy
/// never increase by more than `mono_tol` in one step.
///
/// The K-energy is accumulated step by step from short straight segments.
pub fn run_flow_with(phi: &Field, opts: &FlowOptions) -> Result<FlowTrajectory, FlowError> {
    opts.validate()?;
    let m = kahler::make_metric(phi).map_err(|source| FlowError::Positivity { s: 0.0, source })?;
    let k0 = kahler::k_energy(phi, opts.quad_steps).map_err(|source| FlowError::Positivity { s: 0.0, source })?;
    let mut traj = FlowTrajectory {
        times: vec![0.0],
        states: vec![phi.clone()],
        k_energy: vec![k0],
        calabi_energy: vec![kahler::calabi_energy(&m)],
        min_rho: vec![m.min_rho()],
    };
    for n in 0..opts.steps {
        let s = n as f64 * opts.ds;
        let s_next = (n + 1) as f64 * opts.ds;
        let current = &traj.states[n];
        let next = step_at(current, opts.ds, s)?;
        let m = kahler::make_metric(&next).map_err(|source| FlowError::Positivity { s: s_next, source })?;
        let dk = kahler::k_energy_between(current, &next, 8)
            .map_err(|source| FlowError::Positivity { s: s_next, source })?;
        let k = traj.k_energy[n] + dk;
        let c = kahler::calabi_energy(&m);
        check_increase("calabi_energy", traj.calabi_energy[n], c, opts.mono_tol, s_next)?;
        check_increase("k_energy", traj.k_energy[n], k, opts.mono_tol, s_next)?;
        traj.times.push(s_next);
        traj.states.push(next);
        traj.k_energy.push(k);
        traj.calabi_energy.push(c);
        traj.min_rho.push(m.min_rho());
    }
    Ok(traj)
}

fn check_increase(quantity: &'static str, before: f64, after: f64, tol: f64, s: f64) -> Result<(), FlowError> {
    if after > before + tol {
        Err(FlowError::Monotonicity {
            quantity,
            s,
            increase: after - before,
        })
    } else {
        Ok(())
    }
}

/// First variation of length under the flow,
/// `dL/ds = −∫₀¹ 2‖Dφ_t‖² / √E dt`.
///
/// The factor 2 comes from `R` being the Riemannian scalar curvature, twice
/// the Kähler one.
pub fn length_derivative(curve: &[Field]) -> Result<f64, GeometryError> {
    if curve.len() < 3 {
        return Err(GeometryError::Invalid(format!(
            "curve needs at least 3 slices, got {}",
            curve.len()
        )));
    }
    let dt = 1.0 / (curve.len() - 1) as f64;
    let samples = par::map_indices(curve.len(), |k| {
        let m = kahler::make_metric(&curve[k])?;
        let v = geodesic::time_derivative(curve, k, dt);
        let e = kahler::mabuchi_inner(&v, &v, &m);
        if e < E_FLOOR {
            return Ok(0.0);
        }
        Ok(-2.0 * kahler::lichnerowicz_norm_sq(&v, &m) / e.sqrt())
    });
    let samples = samples.into_iter().collect::<Result<Vec<f64>, GeometryError>>()?;
    Ok(geodesic::symmetric_trapezoid(&samples))
}

/// A curve of potentials with every slice moved by the flow.
#[derive(Clone, Debug)]
pub struct CurveUnderFlow {
    pub s_values: Vec<f64>,
    pub curves: Vec<Vec<Field>>,
    pub lengths: Vec<f64>,
    pub derivatives: Vec<f64>,
}

pub fn flow_curve(curve: &[Field], ds: f64, steps: usize) -> Result<CurveUnderFlow, FlowError> {
    flow_curve_with(curve, &FlowOptions::new(ds, steps))
}

/// Steps every slice with [`flow_step`] and records `L(s)` and `dL/ds`.
/// `L` may not increase by more than `mono_tol` per step.
pub fn flow_curve_with(curve: &[Field], opts: &FlowOptions) -> Result<CurveUnderFlow, FlowError> {
    opts.validate()?;
    if curve.len() < 3 {
        return Err(FlowError::Invalid(format!(
            "curve needs at least 3 slices, got {}",
            curve.len()
        )));
    }
    let derivative = |c: &[Field], s: f64| length_derivative(c).map_err(|source| FlowError::Positivity { s, source });
    let mut out = CurveUnderFlow {
        s_values: vec![0.0],
        curves: vec![curve.to_vec()],
        lengths: vec![geodesic::curve_length(curve)],
        derivatives: vec![derivative(curve, 0.0)?],
    };
    for n in 0..opts.steps {
        let s = n as f64 * opts.ds;
        let s_next = (n + 1) as f64 * opts.ds;
        let current = &out.curves[n];
        let next = par::map_indices(current.len(), |k| step_at(&current[k], opts.ds, s))
            .into_iter()
            .collect::<Result<Vec<Field>, FlowError>>()?;
        let length = geodesic::curve_length(&next);
        check_increase("length", out.lengths[n], length, opts.mono_tol, s_next)?;
        out.derivatives.push(derivative(&next, s_next)?);
        out.lengths.push(length);
        out.s_values.push(s_next);
        out.curves.push(next);
    }
    Ok(out)
}

/// Flows both endpoints and tracks their distance at every `sample_every`-th
/// step.
///
/// An increase between consecutive samples is tolerated up to the larger of
/// the two error bars plus `1e-6`. The reported margin and budget are those
/// of the sample with the least slack.
pub fn contraction_experiment(
    phi0: &Field,
    phi1: &Field,
    flow: &FlowOptions,
    sample_every: usize,
    solve: &SolveOptions,
) -> Result<ExperimentReport, LabError> {
    if sample_every == 0 {
        return Err(LabError::Invalid("sample_every must be positive".into()));
    }
    let a = run_flow_with(phi0, flow)?;
    let b = run_flow_with(phi1, flow)?;
    let samples: Vec<usize> = (0..=flow.steps).step_by(sample_every).collect();
    let distances = par::map_indices(samples.len(), |i| {
        let n = samples[i];
        geodesic::distance(&a.states[n], &b.states[n], solve).map_err(LabError::leg(format!("s = {:.6e}", a.times[n])))
    })
    .into_iter()
    .collect::<Result<Vec<_>, LabError>>()?;

    let values: Vec<f64> = distances.iter().map(|d| d.value).collect();
    let bars: Vec<f64> = distances.iter().map(|d| d.error_bar).collect();
    let mut worst = (f64::INFINITY, 0.0, 1e-6);
    let mut max_increase = f64::NEG_INFINITY;
    for i in 1..values.len() {
        let increase = values[i] - values[i - 1];
        let tol = bars[i].max(bars[i - 1]) + 1e-6;
        max_increase = max_increase.max(increase);
        if tol - increase < worst.0 {
            worst = (tol - increase, -increase, tol);
        }
    }
    let (margin, budget) = if values.len() > 1 { (worst.1, worst.2) } else { (0.0, 1e-6) };
    let s: Vec<f64> = samples.iter().map(|&n| a.times[n]).collect();
    Ok(ExperimentReport::new("contraction")
        .solver_inputs(solve, phi0.grid().n())
        .input("ds", flow.ds)
        .input("steps", flow.steps)
        .input("sample_every", sample_every)
        .input("flow_mono_tol", flow.mono_tol)
        .quantity("s", s)
        .quantity("distance", values)
        .quantity("error_bar", bars)
        .quantity("max_increase", if max_increase.is_finite() { max_increase } else { 0.0 })
        .finish(margin, budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn g(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn smooth(grid: Grid, a: f64) -> Field {
        Field::from_fn(grid, |x, y| {
            a * ((2.0 * PI * x).cos() + 0.7 * (2.0 * PI * y).sin() - 0.4 * (2.0 * PI * (x + y)).cos())
        })
    }

    #[test]
    fn flat_and_constant_potentials_are_fixed() {
        for phi in [Field::zeros(g(16)), Field::constant(g(16), 0.37)] {
            let m = kahler::make_metric(&phi).unwrap();
            assert_eq!(flow_rhs(&m).max_abs(), 0.0);
            assert_eq!(flow_step(&phi, 0.1).unwrap(), phi);
            let traj = run_flow(&phi, 1e-3, 5).unwrap();
            assert!(traj.states.iter().all(|s| s == &phi));
            assert!(traj.calabi_energy.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn rhs_is_mean_zero_and_linearizes_to_half_bilaplacian() {
        let grid = g(32);
        let sigma = crate::spectral::laplacian_symbol(32, 1, 0);
        let cos = Field::from_fn(grid, |x, _| (2.0 * PI * x).cos());
        for (a, tol) in [(1e-3, 1e-3), (2.5e-4, 1e-2)] {
            let phi = &cos * a;
            let m = kahler::make_metric(&phi).unwrap();
            let rhs = flow_rhs(&m);
            assert!(grid::integrate(&rhs, m.rho()).abs() < 1e-10);
            let expected = -0.5 * sigma * sigma * a;
            // First harmonic at a = 1e-3; pointwise at the smaller amplitude.
            let err = if a > 5e-4 {
                (2.0 * grid::integrate(&rhs, &cos) / expected - 1.0).abs()
            } else {
                (&rhs - &(&cos * expected)).max_abs() / expected.abs()
            };
            assert!(err < tol, "a = {a}: relative error {err}");
        }
    }

    #[test]
    fn single_mode_multiplier_matches_scheme_symbol() {
        let grid = g(32);
        let a = 1e-7;
        let ds = 1e-4;
        let phi = Field::from_fn(grid, |x, _| a * (2.0 * PI * x).cos());
        let next = flow_step(&phi, ds).unwrap();
        let proj = |f: &Field| {
            let w = Field::from_fn(grid, |x, _| (2.0 * PI * x).cos());
            2.0 * grid::integrate(f, &w)
        };
        let sigma = crate::spectral::laplacian_symbol(32, 1, 0);
        let z = 0.25 * ds * sigma * sigma;
        let expected = (1.0 - z) / (1.0 + z);
        let ratio = proj(&next) / proj(&phi);
        assert!((ratio - expected).abs() < 1e-9, "ratio {ratio} expected {expected}");
    }

    #[test]
    fn volume_preserved_and_energies_decrease() {
        let phi = smooth(g(32), 1e-3);
        let traj = run_flow(&phi, 1e-5, 50).unwrap();
        for s in &traj.states {
            let one = Field::constant(s.grid(), 1.0);
            assert!((grid::integrate(&one, &kahler::density(s)) - 1.0).abs() < 1e-10);
        }
        assert!(traj.calabi_energy.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.k_energy.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn translates_stay_translates() {
        let grid = g(16);
        let phi = smooth(grid, 2e-3);
        let moved = phi.shifted(3, 5);
        let a = run_flow(&phi, 1e-4, 20).unwrap();
        let b = run_flow(&moved, 1e-4, 20).unwrap();
        let diff = (&a.last().shifted(3, 5) - b.last()).max_abs();
        assert!(diff < 1e-15, "translation mismatch {diff}");
    }

    #[test]
    fn positivity_loss_is_reported() {
        let phi = Field::from_fn(g(16), |x, _| 0.02 * (2.0 * PI * x).cos());
        assert!(flow_step(&phi, -1.0).is_err());
        let err = run_flow(&Field::from_fn(g(16), |x, _| 0.08 * (2.0 * PI * x).cos()), 1e-3, 3);
        assert!(matches!(err, Err(FlowError::Positivity { s, .. }) if s == 0.0));
        assert!(flow_step(&phi, 1e-3).is_ok());
    }

    #[test]
    fn stiffening_only_touches_stiff_modes() {
        let alpha = stiffness(0.5);
        assert_eq!(implicit_divisor(0.1, alpha), 1.1);
        assert_eq!(implicit_divisor(0.29, alpha), 1.29);
        assert!(implicit_divisor(0.3, alpha) > 1.3);
        // frozen-coefficient bound q/ρ² ≤ divisor for ρ ≥ ρ_min
        for q in [0.01, 0.3, 1.0, 3.0, 1e3, 1e6] {
            assert!(q / 0.25 <= implicit_divisor(q, alpha));
        }
        // strongly non-flat data stays bounded over many stiff steps
        let phi = crate::npc::random_potential(g(32), 3, 1.0, 2);
        let traj = run_flow(&phi, 1e-4, 200).unwrap();
        assert!(traj.last().is_finite() && traj.min_rho.last().unwrap() > &0.5);
    }

    #[test]
    fn constant_shift_curve_has_zero_derivative() {
        let grid = g(16);
        // Values on a 2^-40 lattice so that every shift below is exact.
        let base = smooth(grid, 2e-3).map(|v| (v * 2f64.powi(40)).round() / 2f64.powi(40));
        let curve: Vec<Field> = (0..=8).map(|k| base.map(|v| v + 0.25 * k as f64 / 8.0)).collect();
        assert_eq!(length_derivative(&curve).unwrap(), 0.0);
    }

    #[test]
    fn derivative_is_non_positive_and_curve_endpoints_follow_the_flow() {
        let grid = g(16);
        let a = smooth(grid, 1e-3);
        let b = Field::from_fn(grid, |x, y| 1e-3 * (2.0 * PI * (x - y)).sin());
        let curve: Vec<Field> = (0..=8).map(|k| a.add_scaled(k as f64 / 8.0, &(&b - &a))).collect();
        let out = flow_curve(&curve, 1e-5, 4).unwrap();
        assert!(out.derivatives.iter().all(|&d| d < 0.0));
        assert!(out.lengths.windows(2).all(|w| w[1] < w[0]));
        let ends = run_flow(&a, 1e-5, 4).unwrap();
        assert_eq!(&out.curves[4][0], ends.last());
        let ends = run_flow(&curve[8], 1e-5, 4).unwrap();
        assert_eq!(&out.curves[4][8], ends.last());
    }

    #[test]
    fn constant_curve_keeps_its_length() {
        let grid = g(16);
        let curve: Vec<Field> = (0..=8).map(|k| Field::constant(grid, 0.25 * k as f64 / 8.0)).collect();
        let out = flow_curve(&curve, 1e-3, 3).unwrap();
        for l in &out.lengths {
            assert!((l - 0.25).abs() < 1e-14);
        }
        assert!(out.derivatives.iter().all(|&d| d == 0.0));
    }
}
