//! Comparison-geometry experiments on the space of potentials: the CAT(0)
//! triangle inequality, minimizing sequences, Jacobi-field convexity and the
//! first derivative of distance.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::error::LabError;
use crate::geodesic::{self, Continuation, Distance, PathGrid, SolveOptions};
use crate::grid::{Field, Grid};
use crate::kahler;
use crate::par;
use crate::report::ExperimentReport;

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Seeded band-limited potential with mean zero.
///
/// Fourier coefficients for `|kx|, |ky| ≤ max_wavenumber` are drawn uniformly
/// from `[−1, 1]`, the field is scaled to `max|φ| = amplitude` and then
/// shrunk further until `min ρ ≥ ½`.
///
/// # Panics
/// If `amplitude` is negative or not finite, or `max_wavenumber` is zero or
/// exceeds `N/4`.
pub fn random_potential(grid: Grid, seed: u64, amplitude: f64, max_wavenumber: usize) -> Field {
    assert!(amplitude >= 0.0 && amplitude.is_finite(), "amplitude must be non-negative, got {amplitude}");
    assert!(
        max_wavenumber >= 1 && max_wavenumber <= grid.n() / 4,
        "max_wavenumber must lie in 1..={}, got {max_wavenumber}",
        grid.n() / 4
    );
    if amplitude == 0.0 {
        return Field::zeros(grid);
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let k = max_wavenumber as i64;
    let mut modes = Vec::new();
    for kx in 0..=k {
        for ky in -k..=k {
            if kx > 0 || ky > 0 {
                let (a, b) = (uniform(&mut rng), uniform(&mut rng));
                modes.push((kx as f64, ky as f64, a, b));
            }
        }
    }
    let raw = Field::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, a, b)| {
                let arg = 2.0 * std::f64::consts::PI * (kx * x + ky * y);
                a * arg.cos() + b * arg.sin()
            })
            .sum()
    });
    let mean = raw.mean();
    let centered = raw.map(|v| v - mean);
    let mut phi = &centered * (amplitude / centered.max_abs());
    while kahler::density(&phi).min() < 0.5 {
        phi = &phi * 0.9;
    }
    phi
}


/// Distance between two potentials, tagged with the leg name on failure.
fn leg_distance(a: &Field, b: &Field, opts: &SolveOptions, leg: &str) -> Result<(Distance, Option<Continuation>), LabError> {
    geodesic::distance_with_path(a, b, opts).map_err(LabError::leg(leg))
}

/// `‖f‖` in the Mabuchi metric at the density of `phi`.
fn norm_at(f: &Field, phi: &Field) -> f64 {
    let rho = kahler::density(phi);
    crate::grid::integrate(&(f * f), &rho).sqrt()
}

/// Quantities of the comparison inequality
/// `d(A,P_λ)² ≤ (1−λ) d(A,B)² + λ d(A,C)² − λ(1−λ) d(B,C)²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleReport {
    pub d_ab: Distance,
    pub d_ac: Distance,
    pub d_bc: Distance,
    pub d_ap: Distance,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; non-negative when the inequality holds.
    pub margin: f64,
    /// Propagated distance error bars.
    pub bar_budget: f64,
    /// Effect of the ε-lift on the location of `P_λ`.
    pub point_budget: f64,
    /// Effect of `t = λ` not being exactly the arc-length fraction λ.
    pub parametrization_budget: f64,
    pub budget: f64,
}

impl TriangleReport {
    pub fn holds(&self) -> bool {
        self.margin >= -self.budget
    }

    pub fn experiment_report(&self, opts: &SolveOptions, n: usize) -> ExperimentReport {
        ExperimentReport::new("triangle")
            .solver_inputs(opts, n)
            .input("lambda", self.lambda)
            .quantity("d_ab", self.d_ab)
            .quantity("d_ac", self.d_ac)
            .quantity("d_bc", self.d_bc)
            .quantity("d_ap", self.d_ap)
            .quantity("lhs", self.lhs)
            .quantity("rhs", self.rhs)
            .quantity("bar_budget", self.bar_budget)
            .quantity("point_budget", self.point_budget)
            .quantity("parametrization_budget", self.parametrization_budget)
            .finish(self.margin, self.budget)
    }
}

/// Cumulative trapezoid arc length at every node.
fn cumulative_arc(slices: &[Field]) -> Vec<f64> {
    let roots: Vec<f64> = geodesic::energy_elements(slices).iter().map(|e| e.max(0.0).sqrt()).collect();
    let mut cumulative = vec![0.0; slices.len()];
    for k in 1..slices.len() {
        cumulative[k] = cumulative[k - 1] + 0.5 * (roots[k - 1] + roots[k]);
    }
    cumulative
}

/// Arc-length fraction reached at `t = λ` along a path.
fn arc_fraction(p: &PathGrid, lambda: f64) -> f64 {
    let cumulative = cumulative_arc(p.slices());
    let m = p.steps();
    let total = cumulative[m];
    if total == 0.0 {
        return lambda;
    }
    let x = lambda * m as f64;
    let k = (x.floor() as usize).min(m - 1);
    let frac = x - k as f64;
    (cumulative[k] + frac * (cumulative[k + 1] - cumulative[k])) / total
}

/// Point at half the arc length, interpolated linearly between slices.
fn arc_midpoint(slices: &[Field]) -> Field {
    let cumulative = cumulative_arc(slices);
    let m = slices.len() - 1;
    let target = 0.5 * cumulative[m];
    let k = (0..m).find(|&k| cumulative[k + 1] >= target).unwrap_or(m - 1);
    let width = cumulative[k + 1] - cumulative[k];
    let frac = if width > 0.0 { (target - cumulative[k]) / width } else { 0.0 };
    slices[k].zip_map(&slices[k + 1], |a, b| (1.0 - frac) * a + frac * b)
}

/// [`cat0_sweep`] for a single λ.
pub fn cat0_check(a: &Field, b: &Field, c: &Field, lambda: f64, opts: &SolveOptions) -> Result<TriangleReport, LabError> {
    cat0_sweep(a, b, c, &[lambda], opts).map(|mut v| v.remove(0))
}

/// Solves the side `B → C` once, then for each λ measures the four
/// distances of the comparison inequality with `P_λ` taken at `t = λ`.
///
/// The budget is the first-order effect of all distance error bars, plus the
/// displacement of `P_λ` between the last two continuation levels, plus the
/// mismatch between `t = λ` and the arc-length fraction.
pub fn cat0_sweep(
    a: &Field,
    b: &Field,
    c: &Field,
    lambdas: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<TriangleReport>, LabError> {
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(LabError::Invalid(format!("lambda must lie in [0, 1], got {l}")));
    }
    let (d_bc, side) = leg_distance(b, c, opts, "BC")?;
    let (d_ab, _) = leg_distance(a, b, opts, "AB")?;
    let (d_ac, _) = leg_distance(a, c, opts, "AC")?;
    let points: Vec<(Field, f64, f64)> = lambdas
        .iter()
        .map(|&lambda| match &side {
            None => (b.clone(), 0.0, 0.0),
            Some(cont) => {
                let p = geodesic::interpolate(&cont.path, lambda);
                let shift = cont
                    .coarser
                    .as_ref()
                    .map(|q| norm_at(&(&p - &geodesic::interpolate(q, lambda)), &p))
                    .unwrap_or(0.0);
                let param = (arc_fraction(&cont.path, lambda) - lambda).abs() * d_bc.value;
                (p, shift, param)
            }
        })
        .collect();
    let d_ap = par::map_indices(points.len(), |i| leg_distance(a, &points[i].0, opts, "AP").map(|(d, _)| d))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    Ok(lambdas
        .iter()
        .zip(points.iter().zip(d_ap))
        .map(|(&lambda, ((_, shift, param), d_ap))| {
            let lhs = d_ap.value * d_ap.value;
            let rhs = (1.0 - lambda) * d_ab.value * d_ab.value + lambda * d_ac.value * d_ac.value
                - lambda * (1.0 - lambda) * d_bc.value * d_bc.value;
            let bar_budget = 2.0 * d_ap.value * d_ap.error_bar
                + 2.0 * (1.0 - lambda) * d_ab.value * d_ab.error_bar
                + 2.0 * lambda * d_ac.value * d_ac.error_bar
                + 2.0 * lambda * (1.0 - lambda) * d_bc.value * d_bc.error_bar;
            let point_budget = 2.0 * d_ap.value * shift;
            let parametrization_budget = 2.0 * d_ap.value * param;
            TriangleReport {
                d_ab,
                d_ac,
                d_bc,
                d_ap,
                lambda,
                lhs,
                rhs,
                margin: rhs - lhs,
                bar_budget,
                point_budget,
                parametrization_budget,
                budget: bar_budget + point_budget + parametrization_budget,
            }
        })
        .collect())
}

/// Midpoint estimate for a curve that bends away from a geodesic.
///
/// The curve is the solved path plus `scale · l · sin(πt) · ξ`, with `ξ` a
/// seeded band-limited field of unit flat L² norm and `l` the geodesic
/// length. Its length `l_i` and the distance between the arc-length
/// midpoints of curve and path are compared with `√((l_i² − l²)/4)`. Taking
/// the arc-length midpoint is the constant-speed reparametrization; both
/// lengths are trapezoid sums on the same t-grid.
///
/// The midpoint separation is of order `scale · l`, far below the ε-bias of a
/// continuation solve, so it is measured in the Mabuchi norm at the two
/// points and the gap between the two readings is its error bar. Both curve
/// lengths use the same discretization. The first-order length error is
/// estimated by repeating the construction with `−ξ` and taking half the
/// change in `(l_i² − l²)/4`.
pub fn minimizing_sequence_check(
    phi0: &Field,
    phi1: &Field,
    perturbation_scale: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<ExperimentReport, LabError> {
    if !(perturbation_scale >= 0.0 && perturbation_scale.is_finite()) {
        return Err(LabError::Invalid(format!(
            "perturbation_scale must be non-negative, got {perturbation_scale}"
        )));
    }
    let grid = phi0.grid();
    let (dist, cont) = leg_distance(phi0, phi1, opts, "geodesic")?;
    let path = match cont {
        Some(c) => c.path,
        None => return Err(LabError::Invalid("endpoints coincide; there is no geodesic to perturb".into())),
    };
    let m = path.steps();
    let l = geodesic::curve_length(path.slices());
    let xi = random_potential(grid, seed, 1.0, 1);
    let xi = &xi * (1.0 / (xi.values().iter().map(|v| v * v).sum::<f64>() / grid.len() as f64).sqrt());
    let eta = perturbation_scale * l;

    let build = |sign: f64| -> Vec<Field> {
        (0..=m)
            .map(|k| {
                let w = sign * eta * (std::f64::consts::PI * path.t(k)).sin();
                path.slice(k).add_scaled(w, &xi)
            })
            .collect()
    };
    let plus = build(1.0);
    let minus = build(-1.0);
    for slice in plus.iter().chain(&minus) {
        kahler::make_metric(slice)?;
    }
    let l_plus = geodesic::curve_length(&plus);
    let l_minus = geodesic::curve_length(&minus);
    let q_plus = (l_plus * l_plus - l * l) / 4.0;
    let q_minus = (l_minus * l_minus - l * l) / 4.0;
    let first_order = 0.5 * (q_plus - q_minus).abs();
    let bound = q_plus.max(0.0).sqrt();
    let bound_low = (q_plus - first_order).max(0.0).sqrt();

    let mid = arc_midpoint(&plus);
    let center = arc_midpoint(path.slices());
    let gap = &mid - &center;
    let n_a = norm_at(&gap, &mid);
    let n_b = norm_at(&gap, &center);
    let mid_distance = 0.5 * (n_a + n_b);
    let mid_bar = 0.5 * (n_a - n_b).abs();

    let budget = mid_bar + (bound - bound_low);
    let length_slack = l_plus - l;
    Ok(ExperimentReport::new("minimizing_sequence")
        .solver_inputs(opts, grid.n())
        .input("perturbation_scale", perturbation_scale)
        .input("seed", seed)
        .quantity("geodesic_length", l)
        .quantity("distance", dist)
        .quantity("curve_length", l_plus)
        .quantity("curve_length_reflected", l_minus)
        .quantity("length_excess", length_slack)
        .quantity("length_ok", length_slack >= -dist.error_bar)
        .quantity("midpoint_distance", mid_distance)
        .quantity("midpoint_bar", mid_bar)
        .quantity("bound", bound)
        .quantity("bound_first_order_error", bound - bound_low)
        .finish(bound - mid_distance, budget))
}

/// Norms of a Jacobi field along a geodesic and the end pairings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobiReport {
    pub t: Vec<f64>,
    /// `|Y|(t)`.
    pub norms: Vec<f64>,
    /// Undivided second differences of `|Y|` at interior nodes.
    pub second_differences: Vec<f64>,
    /// `⟨Y, Y′⟩` at `t = 1`.
    pub end_pairing: f64,
    /// `⟨Y, Y⟩` at `t = 1`.
    pub end_norm: f64,
}

impl JacobiReport {
    pub fn max_norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_second_difference(&self) -> f64 {
        self.second_differences.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Convexity of `|Y|` up to `rel_tol · max|Y|`.
    pub fn convex(&self, rel_tol: f64) -> bool {
        self.min_second_difference() >= -rel_tol * self.max_norm()
    }

    /// `⟨Y, Y′⟩ ≥ (1 − rel_tol) ⟨Y, Y⟩` at `t = 1`.
    pub fn end_inequality(&self, rel_tol: f64) -> bool {
        self.end_pairing >= self.end_norm * (1.0 - rel_tol)
    }

    pub fn experiment_report(&self, opts: &SolveOptions, n: usize, convex_tol: f64, end_tol: f64) -> ExperimentReport {
        let slack_convex = self.min_second_difference() + convex_tol * self.max_norm();
        let slack_end = self.end_pairing - self.end_norm * (1.0 - end_tol);
        ExperimentReport::new("jacobi")
            .solver_inputs(opts, n)
            .input("convexity_tol", convex_tol)
            .input("end_tol", end_tol)
            .quantity("t", &self.t)
            .quantity("norms", &self.norms)
            .quantity("second_differences", &self.second_differences)
            .quantity("end_pairing", self.end_pairing)
            .quantity("end_norm", self.end_norm)
            .finish(slack_convex.min(slack_end), 0.0)
    }
}

/// Jacobi field of the geodesics from `p` to the curve `q_curve`, taken as
/// the centered difference of the geodesics to `q[s − δ]` and `q[s + δ]`
/// per unit index. `Y′` is its covariant derivative along the geodesic to
/// `q[s]`, solved to the regularization `eps`.
pub fn jacobi_experiment(
    p: &Field,
    q_curve: &[Field],
    s_index: usize,
    delta_s_index: usize,
    eps: f64,
    opts: &SolveOptions,
) -> Result<JacobiReport, LabError> {
    if q_curve.len() < 3 {
        return Err(LabError::Invalid("the curve needs at least 3 entries".into()));
    }
    if delta_s_index == 0 || s_index < delta_s_index || s_index + delta_s_index >= q_curve.len() {
        return Err(LabError::Invalid(format!(
            "s_index {s_index} ± {delta_s_index} is outside 0..{}",
            q_curve.len()
        )));
    }
    let opts = SolveOptions {
        eps_target: eps,
        eps_start: opts.eps_start.max(eps),
        ..*opts
    };
    let targets = [s_index - delta_s_index, s_index, s_index + delta_s_index];
    let names = ["s - ds", "s", "s + ds"];
    let paths = par::map_indices(3, |i| {
        geodesic::continuation_solve(p, &q_curve[targets[i]], &opts)
            .map(|c| c.path)
            .map_err(LabError::leg(names[i]))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let middle = &paths[1];
    let scale = 1.0 / (2.0 * delta_s_index as f64);
    let y: Vec<Field> = paths[2]
        .slices()
        .iter()
        .zip(paths[0].slices())
        .map(|(a, b)| &(a - b) * scale)
        .collect();
    let y_prime = geodesic::covariant_t_derivative(&y, middle);
    let m = middle.steps();
    let norms: Vec<f64> = (0..=m).map(|k| norm_at(&y[k], middle.slice(k))).collect();
    let end_norm = norms[m] * norms[m];
    if norms[m].is_nan() || norms[m] <= crate::flow::E_FLOOR {
        return Err(LabError::Degenerate { norm: norms[m] });
    }
    let rho_end = kahler::density(middle.end());
    let end_pairing = crate::grid::integrate(&(&y[m] * &y_prime[m]), &rho_end);
    let second_differences = (1..m).map(|k| norms[k + 1] - 2.0 * norms[k] + norms[k - 1]).collect();
    Ok(JacobiReport {
        t: (0..=m).map(|k| middle.t(k)).collect(),
        norms,
        second_differences,
        end_pairing,
        end_norm,
    })
}

/// Compares the first variation of the distance,
/// `⟨X, Y₁⟩/√E |_{t=1} − ⟨X, Y₀⟩/√E |_{t=0}`, with the centered difference
/// `(L(δs) − L(−δs)) / 2δs` of re-solved lengths.
///
/// Each curve holds potentials at `s = (j − c)·δs` with `c` the middle
/// index. `X` is the one-sided `φ_t` at the path ends, extrapolated to ε = 0
/// from the ε- and 2ε-paths of the continuation (the value with the raw
/// ε-path velocity is reported alongside). `Y_i` is the centered
/// s-difference of the endpoint curves.
pub fn distance_derivative_check(
    phi0_curve: &[Field],
    phi1_curve: &[Field],
    eps: f64,
    delta_s: f64,
    opts: &SolveOptions,
) -> Result<ExperimentReport, LabError> {
    if phi0_curve.len() < 3 || phi0_curve.len() != phi1_curve.len() || phi0_curve.len().is_multiple_of(2) {
        return Err(LabError::Invalid(
            "endpoint curves need the same odd number (at least 3) of entries".into(),
        ));
    }
    if !(delta_s > 0.0 && delta_s.is_finite()) {
        return Err(LabError::Invalid(format!("delta_s must be positive, got {delta_s}")));
    }
    let c = phi0_curve.len() / 2;
    let opts = SolveOptions {
        eps_target: eps,
        eps_start: opts.eps_start.max(eps),
        ..*opts
    };
    let idx = [c - 1, c, c + 1];
    let names = ["s = -ds", "s = 0", "s = +ds"];
    let solved = par::map_indices(3, |i| {
        geodesic::distance_with_path(&phi0_curve[idx[i]], &phi1_curve[idx[i]], &opts).map_err(LabError::leg(names[i]))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let y0 = &(&phi0_curve[c + 1] - &phi0_curve[c - 1]) * (0.5 / delta_s);
    let y1 = &(&phi1_curve[c + 1] - &phi1_curve[c - 1]) * (0.5 / delta_s);
    // Endpoint velocities of the ε-path carry the lift `±(ε/2)/ρ`, which is
    // removed at leading order by extrapolating the velocity field from the
    // ε- and 2ε-paths. For constant endpoints this is exact.
    let boundary_terms = |path: &PathGrid, coarser: Option<&PathGrid>| {
        let m = path.steps();
        let velocity = |k: usize| {
            let x = geodesic::time_derivative(path.slices(), k, path.dt());
            match coarser {
                Some(q) => x.zip_map(&geodesic::time_derivative(q.slices(), k, q.dt()), |a, b| 2.0 * a - b),
                None => x,
            }
        };
        let end_term = |k: usize, y: &Field| {
            let x = velocity(k);
            let rho = kahler::density(path.slice(k));
            let e = crate::grid::integrate(&(&x * &x), &rho);
            if e < crate::flow::E_FLOOR {
                0.0
            } else {
                crate::grid::integrate(&(&x * y), &rho) / e.sqrt()
            }
        };
        let start = if y0.max_abs() == 0.0 { 0.0 } else { end_term(0, &y0) };
        end_term(m, &y1) - start
    };
    let (analytic, raw) = match &solved[1].1 {
        None => (0.0, 0.0),
        Some(cont) => (boundary_terms(&cont.path, cont.coarser.as_ref()), boundary_terms(&cont.path, None)),
    };
    let (lm, lp) = (solved[0].0, solved[2].0);
    let finite_difference = (lp.value - lm.value) / (2.0 * delta_s);
    let gap = (analytic - finite_difference).abs();
    let scale = analytic.abs().max(finite_difference.abs());
    let relative_gap = if scale > 0.0 { gap / scale } else { 0.0 };
    Ok(ExperimentReport::new("distance_derivative")
        .solver_inputs(&opts, phi0_curve[0].grid().n())
        .input("delta_s", delta_s)
        .quantity("analytic", analytic)
        .quantity("analytic_eps", raw)
        .quantity("finite_difference", finite_difference)
        .quantity("relative_gap", relative_gap)
        .quantity("length_minus", lm)
        .quantity("length_center", solved[1].0)
        .quantity("length_plus", lp)
        .finish(-relative_gap, 1e-2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_potential_contract() {
        let grid = Grid::new(32).unwrap();
        assert_eq!(random_potential(grid, 3, 0.0, 2), Field::zeros(grid));
        let a = random_potential(grid, 11, 1e-3, 2);
        let b = random_potential(grid, 11, 1e-3, 2);
        assert_eq!(a.values(), b.values());
        assert_ne!(a, random_potential(grid, 12, 1e-3, 2));
        assert!((a.max_abs() - 1e-3).abs() < 1e-15);
        assert!(a.mean().abs() < 1e-17);
        for seed in 0..20 {
            let phi = random_potential(grid, seed, 1.0, 4);
            assert!(kahler::density(&phi).min() >= 0.5);
        }
    }
}
