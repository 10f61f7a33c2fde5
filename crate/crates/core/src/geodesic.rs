//! ε-approximate geodesics between Kähler potentials.
//!
//! A path `t ↦ φ(·, t)` is stored on `M + 1` uniform time slices. The
//! regularized geodesic equation in complex dimension one reads
//!
//! ```text
//! F(φ) = ρ φ_tt − ½ (∂_x φ_t)² − ½ (∂_y φ_t)² = ε
//! ```
//!
//! with centered differences in `t` and the grid stencils in space. It is
//! solved by damped Newton iteration with a matrix-free GMRES inner solve,
//! and driven towards small `ε` by continuation.

use rustfft::num_complex::Complex64;

use crate::error::{GeometryError, SolveError};
use crate::grid::{self, Field, Grid};
use crate::kahler::{self, POSITIVITY_MARGIN};
use crate::krylov::{gmres, GmresOptions};
use crate::par;
use crate::spectral;

/// A discretized path on `M + 1` time slices at regularization level `ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGrid {
    grid: Grid,
    eps: f64,
    slices: Vec<Field>,
}

impl PathGrid {
    pub fn new(slices: Vec<Field>, eps: f64) -> Result<Self, SolveError> {
        if slices.len() < 3 {
            return Err(SolveError::Invalid(format!(
                "a path needs at least 2 time intervals, got {}",
                slices.len().saturating_sub(1)
            )));
        }
        let grid = slices[0].grid();
        if slices.iter().any(|s| s.grid() != grid) {
            return Err(SolveError::Invalid("path slices live on different grids".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(SolveError::Invalid(format!("eps must be positive, got {eps}")));
        }
        Ok(PathGrid { grid, eps, slices })
    }

    /// Samples `f(t)` at `t = k/steps`.
    pub fn from_fn(steps: usize, eps: f64, f: impl Fn(f64) -> Field) -> Result<Self, SolveError> {
        let slices = (0..=steps).map(|k| f(k as f64 / steps as f64)).collect();
        Self::new(slices, eps)
    }

    /// `(1 − t) φ₀ + t φ₁ + (ε/2) t (t − 1)`: exact for constant endpoints.
    pub fn linear_guess(phi0: &Field, phi1: &Field, steps: usize, eps: f64) -> Result<Self, SolveError> {
        let mut path = Self::from_fn(steps, eps, |t| {
            let lift = 0.5 * eps * t * (t - 1.0);
            phi0.zip_map(phi1, |a, b| (1.0 - t) * a + t * b + lift)
        })?;
        path.slices[0] = phi0.clone();
        path.slices[steps] = phi1.clone();
        Ok(path)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Number of time intervals `M`.
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps() as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 / self.steps() as f64
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &Field {
        &self.slices[k]
    }

    pub fn start(&self) -> &Field {
        &self.slices[0]
    }

    pub fn end(&self) -> &Field {
        &self.slices[self.steps()]
    }

    pub fn into_slices(self) -> Vec<Field> {
        self.slices
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> PathGrid {
        let mut slices = self.slices.clone();
        slices.reverse();
        PathGrid {
            grid: self.grid,
            eps: self.eps,
            slices,
        }
    }

    /// Warm start for a new regularization level: adds `(ε' − ε)/2 · t(t−1)`.
    pub fn relifted(&self, eps: f64) -> PathGrid {
        let delta = 0.5 * (eps - self.eps);
        let slices = self
            .slices
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let t = self.t(k);
                if k == 0 || k == self.steps() {
                    s.clone()
                } else {
                    s.map(|v| v + delta * t * (t - 1.0))
                }
            })
            .collect();
        PathGrid {
            grid: self.grid,
            eps,
            slices,
        }
    }
}

/// Time derivative of a sequence of slices at index `k`: centered in the
/// interior, one-sided second order at both ends.
pub fn time_derivative(slices: &[Field], k: usize, dt: f64) -> Field {
    let m = slices.len() - 1;
    assert!(m >= 2, "time derivative needs at least 3 slices");
    let half = 0.5 / dt;
    let forward = |a: &Field, b: &Field, c: &Field| {
        a.zip_map(b, |x, y| 3.0 * (y - x))
            .zip_map(&c.zip_map(b, |z, y| z - y), |s, d| (s - d) * half)
    };
    if k == 0 {
        forward(&slices[0], &slices[1], &slices[2])
    } else if k == m {
        -&forward(&slices[m], &slices[m - 1], &slices[m - 2])
    } else {
        slices[k + 1].zip_map(&slices[k - 1], |a, b| (a - b) * half)
    }
}

fn second_time_difference(slices: &[Field], k: usize, dt: f64) -> Field {
    let inv = 1.0 / (dt * dt);
    let c = &slices[k];
    slices[k + 1]
        .zip_map(&slices[k - 1], |a, b| a + b)
        .zip_map(c, |s, v| (s - (v + v)) * inv)
}

/// `F(φ) − ε` on interior slices `1..M`.
pub fn geodesic_residual(p: &PathGrid) -> Vec<Field> {
    let m = p.steps();
    let dt = p.dt();
    par::map_indices(m - 1, |j| {
        let k = j + 1;
        let rho = kahler::density(&p.slices[k]);
        let vel = time_derivative(&p.slices, k, dt);
        let (vx, vy) = (grid::partial_x(&vel), grid::partial_y(&vel));
        let acc = second_time_difference(&p.slices, k, dt);
        let grad = vx.zip_map(&vy, |a, b| 0.5 * (a * a + b * b));
        rho.zip_map(&acc, |r, a| r * a)
            .zip_map(&grad, |ra, g| ra - g - p.eps)
    })
}

fn max_abs_all(fields: &[Field]) -> f64 {
    fields.iter().map(Field::max_abs).fold(0.0, f64::max)
}

fn l2_all(fields: &[Field]) -> f64 {
    fields
        .iter()
        .flat_map(|f| f.values().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Newton and continuation controls.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolveOptions {
    /// Max-norm residual target.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Smallest Newton step fraction before declaring failure.
    pub damping_min: f64,
    pub eps_start: f64,
    pub eps_target: f64,
    /// Time intervals `M`; defaults to the grid size `N`.
    pub time_steps: Option<usize>,
    /// Relative residual target of the inner linear solve.
    pub linear_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            newton_tol: 1e-9,
            max_newton: 50,
            damping_min: 1.0 / 64.0,
            eps_start: 1.0,
            eps_target: 1e-3,
            time_steps: None,
            linear_tol: 1e-10,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("damping_min", self.damping_min),
            ("eps_start", self.eps_start),
            ("eps_target", self.eps_target),
            ("linear_tol", self.linear_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolveError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.eps_target > self.eps_start {
            return Err(SolveError::Invalid(format!(
                "eps_target {} exceeds eps_start {}",
                self.eps_target, self.eps_start
            )));
        }
        if self.damping_min > 1.0 {
            return Err(SolveError::Invalid("damping_min must be at most 1".into()));
        }
        if matches!(self.time_steps, Some(m) if m < 2) {
            return Err(SolveError::Invalid("time_steps must be at least 2".into()));
        }
        Ok(())
    }

    pub fn steps_for(&self, grid: Grid) -> usize {
        self.time_steps.unwrap_or(grid.n())
    }
}

/// Energy and length bookkeeping along a path.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PathDiagnostics {
    /// `E(t_k) = ∫ φ_t² dμ_{φ(t_k)}`.
    pub energy: Vec<f64>,
    pub length: f64,
    /// `max_k |E(t_k) − mean E|`.
    pub energy_spread: f64,
    pub min_rho: f64,
    /// Smallest interior `φ_tt`.
    pub min_phitt: f64,
    /// Max-norm of the geodesic residual.
    pub residual: f64,
    pub newton_steps: usize,
    pub linear_iterations: usize,
}

/// `E(t_k)` for every slice of a sequence, using [`time_derivative`].
pub fn energy_elements(slices: &[Field]) -> Vec<f64> {
    let m = slices.len() - 1;
    let dt = 1.0 / m as f64;
    par::map_indices(m + 1, |k| {
        let v = time_derivative(slices, k, dt);
        let rho = kahler::density(&slices[k]);
        grid::integrate(&(&v * &v), &rho)
    })
}

/// Trapezoid rule on uniform nodes over `[0, 1]`, summed in mirrored pairs so
/// that reversing the samples gives a bitwise identical result.
pub fn symmetric_trapezoid(samples: &[f64]) -> f64 {
    let m = samples.len() - 1;
    let weight = |k: usize| if k == 0 || k == m { 0.5 } else { 1.0 };
    let mut total = 0.0;
    let mut k = 0;
    while k < m - k {
        total += weight(k) * samples[k] + weight(m - k) * samples[m - k];
        k += 1;
    }
    if k == m - k {
        total += weight(k) * samples[k];
    }
    total / m as f64
}

/// Trapezoid length of a sequence of slices, `∫₀¹ √E dt`.
pub fn curve_length(slices: &[Field]) -> f64 {
    let roots: Vec<f64> = energy_elements(slices).iter().map(|e| e.max(0.0).sqrt()).collect();
    symmetric_trapezoid(&roots)
}

pub fn path_energy_length(p: &PathGrid) -> PathDiagnostics {
    let energy = energy_elements(&p.slices);
    let roots: Vec<f64> = energy.iter().map(|e| e.max(0.0).sqrt()).collect();
    let length = symmetric_trapezoid(&roots);
    let mean = energy.iter().sum::<f64>() / energy.len() as f64;
    let energy_spread = energy.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
    let min_rho = p
        .slices
        .iter()
        .map(|s| kahler::density(s).min())
        .fold(f64::INFINITY, f64::min);
    let dt = p.dt();
    let min_phitt = (1..p.steps())
        .map(|k| second_time_difference(&p.slices, k, dt).min())
        .fold(f64::INFINITY, f64::min);
    let residual = max_abs_all(&geodesic_residual(p));
    PathDiagnostics {
        energy,
        length,
        energy_spread,
        min_rho,
        min_phitt,
        residual,
        newton_steps: 0,
        linear_iterations: 0,
    }
}

/// Largest `|φ|`, `|φ_t|` and `φ_tt` over a path.
pub fn path_bounds(p: &PathGrid) -> (f64, f64, f64) {
    let dt = p.dt();
    let sup = p.slices.iter().map(Field::max_abs).fold(0.0, f64::max);
    let vel = (0..=p.steps())
        .map(|k| time_derivative(&p.slices, k, dt).max_abs())
        .fold(0.0, f64::max);
    let acc = (1..p.steps())
        .map(|k| second_time_difference(&p.slices, k, dt).max())
        .fold(f64::NEG_INFINITY, f64::max);
    (sup, vel, acc)
}

/// Covariant derivative along the path, `D_t ψ = ψ_t − ½ (∇ψ · ∇φ_t)/ρ`.
pub fn covariant_t_derivative(psi: &[Field], p: &PathGrid) -> Vec<Field> {
    assert_eq!(psi.len(), p.slices.len(), "psi must have one slice per path slice");
    let dt = p.dt();
    par::map_indices(psi.len(), |k| {
        let psi_t = time_derivative(psi, k, dt);
        let phi_t = time_derivative(&p.slices, k, dt);
        let rho = kahler::density(&p.slices[k]);
        let cross = (&grid::partial_x(&psi[k]) * &grid::partial_x(&phi_t))
            .zip_map(&(&grid::partial_y(&psi[k]) * &grid::partial_y(&phi_t)), |a, b| a + b);
        let correction = cross.zip_map(&rho, |c, r| 0.5 * c / r);
        &psi_t - &correction
    })
}

/// Point at parameter `t = λ`, linearly interpolated between neighbouring slices.
pub fn interpolate(p: &PathGrid, lambda: f64) -> Field {
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1], got {lambda}");
    let m = p.steps();
    let x = lambda * m as f64;
    let k = x.floor() as usize;
    if k >= m {
        return p.end().clone();
    }
    let frac = x - k as f64;
    if frac == 0.0 {
        return p.slices[k].clone();
    }
    p.slices[k].zip_map(&p.slices[k + 1], |a, b| (1.0 - frac) * a + frac * b)
}

/// Coefficients of the Newton linearization around one path.
struct Linearization {
    grid: Grid,
    interior: usize,
    dt: f64,
    rho: Vec<Field>,
    phitt: Vec<Field>,
    vel_x: Vec<Field>,
    vel_y: Vec<Field>,
    mean_rho: Vec<f64>,
    mean_phitt: Vec<f64>,
}

impl Linearization {
    fn new(p: &PathGrid) -> Self {
        let m = p.steps();
        let dt = p.dt();
        let parts = par::map_indices(m - 1, |j| {
            let k = j + 1;
            let vel = time_derivative(&p.slices, k, dt);
            (
                kahler::density(&p.slices[k]),
                second_time_difference(&p.slices, k, dt),
                grid::partial_x(&vel),
                grid::partial_y(&vel),
            )
        });
        let mut lin = Linearization {
            grid: p.grid,
            interior: m - 1,
            dt,
            rho: Vec::with_capacity(m - 1),
            phitt: Vec::with_capacity(m - 1),
            vel_x: Vec::with_capacity(m - 1),
            vel_y: Vec::with_capacity(m - 1),
            mean_rho: Vec::with_capacity(m - 1),
            mean_phitt: Vec::with_capacity(m - 1),
        };
        for (rho, phitt, vx, vy) in parts {
            lin.mean_rho.push(rho.mean());
            lin.mean_phitt.push(phitt.mean());
            lin.rho.push(rho);
            lin.phitt.push(phitt);
            lin.vel_x.push(vx);
            lin.vel_y.push(vy);
        }
        lin
    }

    /// `δF[ψ] = ρ ψ_tt + ½ (Δψ) φ_tt − ∂_xφ_t ∂_xψ_t − ∂_yφ_t ∂_yψ_t`, with
    /// `ψ = 0` on the end slices.
    fn apply(&self, psi: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let n = g.n();
        let size = g.len();
        let h = g.h();
        let inv_dt2 = 1.0 / (self.dt * self.dt);
        let half_dt = 0.5 / self.dt;
        let inv_h2 = 1.0 / (h * h);
        let half_h = 0.5 / h;
        let interior = self.interior;
        par::fill_rows(out, size, |j, out_k| {
            let cur = &psi[j * size..(j + 1) * size];
            let prev = (j > 0).then(|| &psi[(j - 1) * size..j * size]);
            let next = (j + 1 < interior).then(|| &psi[(j + 1) * size..(j + 2) * size]);
            let at = |s: Option<&[f64]>, idx: usize| s.map_or(0.0, |v| v[idx]);
            let vel: Vec<f64> = (0..size).map(|idx| (at(next, idx) - at(prev, idx)) * half_dt).collect();
            let (rho, phitt) = (self.rho[j].values(), self.phitt[j].values());
            let (vx, vy) = (self.vel_x[j].values(), self.vel_y[j].values());
            for i in 0..n {
                let (ip, im) = (g.up(i), g.down(i));
                for jj in 0..n {
                    let (jp, jm) = (g.up(jj), g.down(jj));
                    let idx = i * n + jj;
                    let c = cur[idx];
                    let acc = ((at(next, idx) + at(prev, idx)) - (c + c)) * inv_dt2;
                    let lap = ((cur[ip * n + jj] + cur[im * n + jj]) + (cur[i * n + jp] + cur[i * n + jm])
                        - 4.0 * c)
                        * inv_h2;
                    let dvx = (vel[ip * n + jj] - vel[im * n + jj]) * half_h;
                    let dvy = (vel[i * n + jp] - vel[i * n + jm]) * half_h;
                    out_k[idx] = rho[idx] * acc + 0.5 * lap * phitt[idx] - vx[idx] * dvx - vy[idx] * dvy;
                }
            }
        });
    }

    /// Inverts `ρ̄_k ∂_tt + ½ φ̄_tt,k Δ` with slice-averaged coefficients:
    /// Fourier in space, tridiagonal in time for every mode.
    fn precondition(&self, r: &[f64], out: &mut [f64]) {
        let n = self.grid.n();
        let size = self.grid.len();
        let interior = self.interior;
        let spectra: Vec<Vec<Complex64>> =
            par::map_indices(interior, |j| spectral::forward(&r[j * size..(j + 1) * size], n));
        let mut by_mode = vec![Complex64::new(0.0, 0.0); size * interior];
        for (j, s) in spectra.iter().enumerate() {
            for (mode, v) in s.iter().enumerate() {
                by_mode[mode * interior + j] = *v;
            }
        }
        let inv_dt2 = 1.0 / (self.dt * self.dt);
        par::fill_rows(&mut by_mode, interior, |mode, column| {
            let sigma = spectral::laplacian_symbol(n, mode / n, mode % n);
            let off = |j: usize| self.mean_rho[j] * inv_dt2;
            let diag = |j: usize| -2.0 * self.mean_rho[j] * inv_dt2 - 0.5 * self.mean_phitt[j] * sigma;
            // Thomas algorithm; sub- and super-diagonals of row j are both off(j).
            let mut c_prime = vec![0.0; interior];
            let mut denom = diag(0);
            c_prime[0] = off(0) / denom;
            column[0] /= denom;
            for j in 1..interior {
                denom = diag(j) - off(j) * c_prime[j - 1];
                c_prime[j] = off(j) / denom;
                let prev = column[j - 1];
                column[j] = (column[j] - prev * off(j)) / denom;
            }
            for j in (0..interior - 1).rev() {
                let next = column[j + 1];
                column[j] -= next * c_prime[j];
            }
        });
        let solved: Vec<Vec<f64>> = par::map_indices(interior, |j| {
            let modes: Vec<Complex64> = (0..size).map(|mode| by_mode[mode * interior + j]).collect();
            spectral::inverse_real(modes, n)
        });
        for (j, s) in solved.into_iter().enumerate() {
            out[j * size..(j + 1) * size].copy_from_slice(&s);
        }
    }
}

fn validate_endpoints(phi0: &Field, phi1: &Field) -> Result<(), SolveError> {
    if phi0.grid() != phi1.grid() {
        return Err(SolveError::Invalid("endpoints live on different grids".into()));
    }
    kahler::make_metric(phi0).map_err(|source| SolveError::Endpoint { which: "start", source })?;
    kahler::make_metric(phi1).map_err(|source| SolveError::Endpoint { which: "end", source })?;
    Ok(())
}

/// Whether every slice is a valid potential and the interior is strictly convex in `t`.
fn convexity(p: &PathGrid) -> (f64, f64) {
    let dt = p.dt();
    let mins = par::map_indices(p.steps() + 1, |k| {
        let rho = kahler::density(&p.slices[k]).min();
        let acc = if k == 0 || k == p.steps() {
            f64::INFINITY
        } else {
            second_time_difference(&p.slices, k, dt).min()
        };
        (rho, acc)
    });
    mins.into_iter()
        .fold((f64::INFINITY, f64::INFINITY), |(r, a), (r2, a2)| (r.min(r2), a.min(a2)))
}

fn is_admissible(min_rho: f64, min_phitt: f64) -> bool {
    min_rho > POSITIVITY_MARGIN && min_phitt > 0.0
}

/// Solves the ε-approximate geodesic problem between `phi0` and `phi1` by
/// damped Newton iteration.
pub fn solve_epsilon_geodesic(
    phi0: &Field,
    phi1: &Field,
    eps: f64,
    opts: &SolveOptions,
    init: Option<&PathGrid>,
) -> Result<(PathGrid, PathDiagnostics), SolveError> {
    opts.validate()?;
    validate_endpoints(phi0, phi1)?;
    let steps = init.map_or_else(|| opts.steps_for(phi0.grid()), PathGrid::steps);
    let mut path = match init {
        Some(p) => {
            if p.grid != phi0.grid() {
                return Err(SolveError::Invalid("initial path lives on another grid".into()));
            }
            let mut p = p.relifted(eps);
            p.slices[0] = phi0.clone();
            p.slices[steps] = phi1.clone();
            p
        }
        None => PathGrid::linear_guess(phi0, phi1, steps, eps)?,
    };
    newton(&mut path, opts).map(|(newton_steps, linear_iterations)| {
        let mut diag = path_energy_length(&path);
        diag.newton_steps = newton_steps;
        diag.linear_iterations = linear_iterations;
        (path, diag)
    })
}

fn newton(path: &mut PathGrid, opts: &SolveOptions) -> Result<(usize, usize), SolveError> {
    let eps = path.eps;
    let (min_rho, min_phitt) = convexity(path);
    if !is_admissible(min_rho, min_phitt) {
        return Err(SolveError::Positivity {
            eps,
            min_rho,
            min_phitt,
            newton_steps: 0,
            iterate: Box::new(path.clone()),
        });
    }
    let size = path.grid.len();
    let interior = path.steps() - 1;
    let gmres_opts = GmresOptions {
        rel_tol: opts.linear_tol,
        ..GmresOptions::default()
    };
    let mut residual = geodesic_residual(path);
    let mut linear_total = 0;
    for step in 0..=opts.max_newton {
        let r_max = max_abs_all(&residual);
        if r_max <= opts.newton_tol {
            return Ok((step, linear_total));
        }
        if step == opts.max_newton {
            return Err(SolveError::Convergence {
                eps,
                residual: r_max,
                newton_steps: step,
                iterate: Box::new(path.clone()),
            });
        }
        let lin = Linearization::new(path);
        let rhs: Vec<f64> = residual.iter().flat_map(|f| f.values().iter().map(|v| -v)).collect();
        let mut delta = vec![0.0; rhs.len()];
        let outcome = gmres(
            |v, out| lin.apply(v, out),
            |v, out| lin.precondition(v, out),
            &rhs,
            &mut delta,
            gmres_opts,
        );
        linear_total += outcome.iterations;

        let r_norm = l2_all(&residual);
        let mut alpha = 1.0;
        let mut fallback: Option<(PathGrid, Vec<Field>)> = None;
        let mut accepted = None;
        let mut last_bad = (min_rho, min_phitt);
        while alpha >= opts.damping_min {
            let mut cand = path.clone();
            for j in 0..interior {
                let d = &delta[j * size..(j + 1) * size];
                cand.slices[j + 1]
                    .values_mut()
                    .iter_mut()
                    .zip(d)
                    .for_each(|(v, dv)| *v += alpha * dv);
            }
            let (cr, ca) = convexity(&cand);
            if is_admissible(cr, ca) {
                let cand_res = geodesic_residual(&cand);
                if l2_all(&cand_res) < (1.0 - 1e-4 * alpha) * r_norm {
                    accepted = Some((cand, cand_res));
                    break;
                }
                if fallback.is_none() {
                    fallback = Some((cand, cand_res));
                }
            } else {
                last_bad = (cr, ca);
            }
            alpha *= 0.5;
        }
        match accepted.or(fallback) {
            Some((cand, cand_res)) => {
                *path = cand;
                residual = cand_res;
            }
            None => {
                return Err(SolveError::Positivity {
                    eps,
                    min_rho: last_bad.0,
                    min_phitt: last_bad.1,
                    newton_steps: step,
                    iterate: Box::new(path.clone()),
                })
            }
        }
    }
    unreachable!("newton loop returns from inside")
}

/// One rung of the continuation ladder.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LevelRecord {
    pub eps: f64,
    pub length: f64,
    pub energy_spread: f64,
    pub newton_steps: usize,
}

/// Result of an ε-continuation.
#[derive(Clone, Debug)]
pub struct Continuation {
    pub path: PathGrid,
    pub diagnostics: PathDiagnostics,
    pub levels: Vec<LevelRecord>,
    /// Solution at the previous (twice larger) level.
    pub coarser: Option<PathGrid>,
}

/// Regularization levels visited by [`continuation_solve`]: `eps_start`, then
/// `eps_target · 2^j` downwards, always including `2 · eps_target`.
pub fn continuation_levels(eps_start: f64, eps_target: f64) -> Vec<f64> {
    let mut top = 2.0 * eps_target;
    while top * 2.0 <= eps_start * (1.0 + 1e-12) {
        top *= 2.0;
    }
    let mut levels = Vec::new();
    if eps_start > top * (1.0 + 1e-12) {
        levels.push(eps_start);
    }
    let mut e = top;
    while e > 1.5 * eps_target {
        levels.push(e);
        e *= 0.5;
    }
    levels.push(eps_target);
    levels
}

/// Solves at `eps_start` and halves ε with warm starts down to `eps_target`.
pub fn continuation_solve(phi0: &Field, phi1: &Field, opts: &SolveOptions) -> Result<Continuation, SolveError> {
    continuation_solve_from(phi0, phi1, opts, None)
}

/// [`continuation_solve`] with an optional initial path for the first level.
pub fn continuation_solve_from(
    phi0: &Field,
    phi1: &Field,
    opts: &SolveOptions,
    init: Option<&PathGrid>,
) -> Result<Continuation, SolveError> {
    opts.validate()?;
    validate_endpoints(phi0, phi1)?;
    let mut levels = Vec::new();
    let mut current: Option<(PathGrid, PathDiagnostics)> = None;
    let mut coarser = None;
    for eps in continuation_levels(opts.eps_start, opts.eps_target) {
        let warm = current.as_ref().map(|(p, _)| p).or(init);
        let (path, diag) = solve_epsilon_geodesic(phi0, phi1, eps, opts, warm)?;
        levels.push(LevelRecord {
            eps,
            length: diag.length,
            energy_spread: diag.energy_spread,
            newton_steps: diag.newton_steps,
        });
        coarser = current.take().map(|(p, _)| p);
        current = Some((path, diag));
    }
    let (path, diagnostics) = current.expect("at least one continuation level");
    Ok(Continuation {
        path,
        diagnostics,
        levels,
        coarser,
    })
}

/// A distance estimate with its heuristic error bar.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Distance {
    pub value: f64,
    pub error_bar: f64,
}

/// Error bar of a continuation result: the change in length over the last
/// halving of ε, plus the first-order length effect `spread / (2 √Ē)` of the
/// energy-element variation.
pub fn error_bar(c: &Continuation) -> f64 {
    let n = c.levels.len();
    let ladder = if n >= 2 {
        (c.levels[n - 1].length - c.levels[n - 2].length).abs()
    } else {
        0.0
    };
    let energy = &c.diagnostics.energy;
    let mean = energy.iter().sum::<f64>() / energy.len() as f64;
    let spread = if mean > 0.0 {
        c.diagnostics.energy_spread / (2.0 * mean.sqrt())
    } else {
        0.0
    };
    ladder + spread
}

/// Geodesic distance between two potentials, via continuation to `eps_target`.
/// Equal endpoints return exactly zero without solving.
pub fn distance(phi0: &Field, phi1: &Field, opts: &SolveOptions) -> Result<Distance, SolveError> {
    distance_with_path(phi0, phi1, opts).map(|(d, _)| d)
}

/// [`distance`] together with the continuation that produced it (`None` on
/// the diagonal).
pub fn distance_with_path(
    phi0: &Field,
    phi1: &Field,
    opts: &SolveOptions,
) -> Result<(Distance, Option<Continuation>), SolveError> {
    validate_endpoints(phi0, phi1)?;
    if phi0 == phi1 {
        return Ok((
            Distance {
                value: 0.0,
                error_bar: 0.0,
            },
            None,
        ));
    }
    let c = continuation_solve(phi0, phi1, opts)?;
    let d = Distance {
        value: c.diagnostics.length,
        error_bar: error_bar(&c),
    };
    Ok((d, Some(c)))
}

/// The constant path at `phi`, used on the diagonal.
pub fn constant_path(phi: &Field, steps: usize, eps: f64) -> Result<PathGrid, SolveError> {
    PathGrid::new(vec![phi.clone(); steps + 1], eps)
}

/// Validity of a potential as a geodesic endpoint.
pub fn check_endpoint(phi: &Field) -> Result<(), GeometryError> {
    kahler::make_metric(phi).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn quadratic_family(grid: Grid, c: f64, eps: f64, steps: usize) -> PathGrid {
        PathGrid::from_fn(steps, eps, |t| Field::constant(grid, c * t + 0.5 * eps * t * (t - 1.0))).unwrap()
    }

    #[test]
    fn residual_of_closed_form_families() {
        let grid = g(16);
        let eps = 0.1;
        let p = quadratic_family(grid, 0.0, eps, 16);
        assert!(max_abs_all(&geodesic_residual(&p)) < 1e-12);
        let p = quadratic_family(grid, 0.3, eps, 16);
        assert!(max_abs_all(&geodesic_residual(&p)) < 1e-12);
        let linear = PathGrid::from_fn(16, eps, |t| Field::constant(grid, 0.3 * t)).unwrap();
        for r in geodesic_residual(&linear) {
            assert!((r.max() + eps).abs() < 1e-12 && (r.min() + eps).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_and_length_examples() {
        let grid = g(16);
        let still = PathGrid::from_fn(8, 0.1, |_| Field::from_fn(grid, |x, _| 0.001 * (2.0 * PI * x).cos())).unwrap();
        let d = path_energy_length(&still);
        assert!(d.energy.iter().all(|&e| e == 0.0));
        assert_eq!(d.length, 0.0);

        let line = PathGrid::from_fn(8, 0.1, |t| Field::constant(grid, -0.4 * t)).unwrap();
        let d = path_energy_length(&line);
        assert!(d.energy.iter().all(|e| (e - 0.16).abs() < 1e-14));
        assert!((d.length - 0.4).abs() < 1e-14);
    }

    #[test]
    fn length_is_reversal_invariant() {
        let grid = g(16);
        let p = PathGrid::from_fn(9, 0.1, |t| {
            Field::from_fn(grid, |x, y| 0.002 * t * (2.0 * PI * x).sin() + 0.001 * t * t * (2.0 * PI * y).cos() + 0.1 * t)
        })
        .unwrap();
        let a = path_energy_length(&p).length;
        let b = path_energy_length(&p.reversed()).length;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn flat_endpoints_land_on_quadratic_lift() {
        let grid = g(16);
        let eps = 0.1;
        let zero = Field::zeros(grid);
        let opts = SolveOptions::default();
        let (p, d) = solve_epsilon_geodesic(&zero, &zero, eps, &opts, None).unwrap();
        for (k, s) in p.slices().iter().enumerate() {
            let t = p.t(k);
            assert!((s.max_abs() - 0.5 * eps * t * (1.0 - t)).abs() < 1e-8);
        }
        for (k, e) in d.energy.iter().enumerate() {
            let t = p.t(k);
            assert!((e - (eps * (t - 0.5)).powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn newton_recovers_from_a_bad_start() {
        let grid = g(16);
        let eps = 0.2;
        let zero = Field::zeros(grid);
        let target = Field::constant(grid, 0.3);
        let opts = SolveOptions::default();
        let bent = PathGrid::from_fn(16, eps, |t| {
            Field::from_fn(grid, |x, _| 0.3 * t + 0.5 * eps * t * (t - 1.0) + 0.002 * (PI * t).sin() * (2.0 * PI * x).cos())
        })
        .unwrap();
        let (p, d) = solve_epsilon_geodesic(&zero, &target, eps, &opts, Some(&bent)).unwrap();
        assert!(d.newton_steps > 0);
        let exact = quadratic_family(grid, 0.3, eps, 16);
        for (a, b) in p.slices().iter().zip(exact.slices()) {
            assert!((a - b).max_abs() < 1e-8);
        }
    }

    #[test]
    fn nonconstant_endpoints_converge_with_certificates() {
        let grid = g(16);
        let zero = Field::zeros(grid);
        let target = Field::from_fn(grid, |x, y| 0.01 * (2.0 * PI * x).cos() + 0.004 * (2.0 * PI * y).sin());
        let opts = SolveOptions {
            eps_target: 1e-2,
            ..SolveOptions::default()
        };
        let c = continuation_solve(&zero, &target, &opts).unwrap();
        let recheck = max_abs_all(&geodesic_residual(&c.path));
        assert!(recheck <= opts.newton_tol);
        assert!(c.diagnostics.min_rho > POSITIVITY_MARGIN);
        assert!(c.diagnostics.min_phitt > 0.0);
        assert_eq!(c.levels.last().unwrap().eps, 1e-2);
        assert_eq!(c.levels[c.levels.len() - 2].eps, 2e-2);
    }

    #[test]
    fn invalid_endpoint_is_rejected_before_newton() {
        let grid = g(32);
        let bad = Field::from_fn(grid, |x, _| 0.2 * (2.0 * PI * x).cos());
        let err = continuation_solve(&Field::zeros(grid), &bad, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::Endpoint { which: "end", .. }));
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let grid = g(16);
        let eps = 1e-3;
        let p = quadratic_family(grid, 0.3, eps, 16);
        assert_eq!(&interpolate(&p, 0.0), p.start());
        assert_eq!(&interpolate(&p, 1.0), p.end());
        let mid = interpolate(&p, 0.5);
        assert!((mid.max() - 0.15).abs() <= eps);
        let odd = quadratic_family(grid, 0.3, eps, 7);
        assert_eq!(&interpolate(&odd, 1.0), odd.end());
    }

    #[test]
    fn covariant_derivative_of_constant_field_vanishes() {
        let grid = g(16);
        let p = PathGrid::from_fn(8, 0.1, |t| Field::from_fn(grid, |x, _| 0.003 * t * (2.0 * PI * x).cos())).unwrap();
        let psi = vec![Field::constant(grid, 2.0); 9];
        for d in covariant_t_derivative(&psi, &p) {
            assert_eq!(d.max_abs(), 0.0);
        }
    }

    #[test]
    fn ladder_includes_twice_target() {
        let levels = continuation_levels(1.0, 1e-3);
        assert_eq!(levels[0], 1.0);
        assert_eq!(*levels.last().unwrap(), 1e-3);
        assert!((levels[levels.len() - 2] - 2e-3).abs() < 1e-15);
        assert_eq!(continuation_levels(1e-3, 1e-3), vec![2e-3, 1e-3]);
    }

    #[test]
    fn distance_on_the_diagonal_is_zero() {
        let grid = g(16);
        let phi = Field::from_fn(grid, |x, _| 0.003 * (2.0 * PI * x).cos());
        let d = distance(&phi, &phi, &SolveOptions::default()).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.error_bar, 0.0);
    }
}
