//! Pointwise and integral geometry of a Kähler potential on the flat torus in
//! complex dimension one.
//!
//! Conventions: the reference form has unit area density, `ω_φ` has density
//! `ρ = 1 + ½Δφ`, the metric is `g = ρ (dx² + dy²)` with `g^{zz̄} = 2/ρ`, and
//! the scalar curvature is `R = −Δ(log ρ)/ρ`.

use crate::error::GeometryError;
use crate::grid::{self, Field};
use crate::par;

/// Smallest density accepted as "inside the space of potentials".
pub const POSITIVITY_MARGIN: f64 = 1e-6;

/// A potential together with its derived metric data. Immutable once built.
#[derive(Clone, Debug)]
pub struct MetricState {
    phi: Field,
    rho: Field,
    log_rho: Field,
    curvature: Field,
    mean_curvature: f64,
}

impl MetricState {
    pub fn phi(&self) -> &Field {
        &self.phi
    }

    /// Density `det g / det g₀`.
    pub fn rho(&self) -> &Field {
        &self.rho
    }

    pub fn log_rho(&self) -> &Field {
        &self.log_rho
    }

    /// Scalar curvature `R`.
    pub fn curvature(&self) -> &Field {
        &self.curvature
    }

    /// Average scalar curvature `R̄`.
    pub fn mean_curvature(&self) -> f64 {
        self.mean_curvature
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.min()
    }

    /// Total area `∫ dμ_φ`.
    pub fn volume(&self) -> f64 {
        grid::integrate(&Field::constant(self.rho.grid(), 1.0), &self.rho)
    }
}

/// Density `1 + ½Δφ`, without the positivity check.
pub fn density(phi: &Field) -> Field {
    grid::laplacian(phi).map(|l| 1.0 + 0.5 * l)
}

/// Checks `min ρ > margin`.
pub fn check_positive(rho: &Field, margin: f64) -> Result<(), GeometryError> {
    let (index, min_rho) = rho
        .values()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if min_rho > margin {
        Ok(())
    } else {
        Err(GeometryError::Positivity {
            min_rho,
            index,
            margin,
        })
    }
}

pub fn make_metric(phi: &Field) -> Result<MetricState, GeometryError> {
    make_metric_with_margin(phi, POSITIVITY_MARGIN)
}

pub fn make_metric_with_margin(phi: &Field, margin: f64) -> Result<MetricState, GeometryError> {
    if !phi.is_finite() {
        return Err(GeometryError::Invalid("potential has non-finite values".into()));
    }
    let rho = density(phi);
    check_positive(&rho, margin)?;
    let log_rho = rho.map(f64::ln);
    let curvature = grid::laplacian(&log_rho).zip_map(&rho, |l, r| -l / r);
    let one = Field::constant(phi.grid(), 1.0);
    let mean_curvature = grid::integrate(&curvature, &rho) / grid::integrate(&one, &rho);
    Ok(MetricState {
        phi: phi.clone(),
        rho,
        log_rho,
        curvature,
        mean_curvature,
    })
}

/// Mabuchi inner product `∫ f g dμ_φ`.
pub fn mabuchi_inner(f: &Field, g: &Field, m: &MetricState) -> f64 {
    grid::integrate(&(f * g), &m.rho)
}

/// Pointwise `|∇f|²_φ = (f_x² + f_y²)/ρ`.
pub fn grad_norm_sq(f: &Field, m: &MetricState) -> Field {
    let fx = grid::partial_x(f);
    let fy = grid::partial_y(f);
    let num = fx.zip_map(&fy, |a, b| a * a + b * b);
    num.zip_map(&m.rho, |a, r| a / r)
}

/// Poisson bracket `{f, g}` with respect to `ω_φ`.
pub fn poisson_bracket(f: &Field, g: &Field, m: &MetricState) -> Field {
    let (fx, fy) = (grid::partial_x(f), grid::partial_y(f));
    let (gx, gy) = (grid::partial_x(g), grid::partial_y(g));
    let cross = (&fx * &gy).zip_map(&(&fy * &gx), |a, b| a - b);
    cross.zip_map(&m.rho, |c, r| c / r)
}

/// Unnormalized sectional-curvature pairing `−∫ {X,Y}² dμ_φ`; never positive.
pub fn curvature_pairing(x: &Field, y: &Field, m: &MetricState) -> f64 {
    let b = poisson_bracket(x, y, m);
    -mabuchi_inner(&b, &b, m)
}

/// Complex field `re + i·im` produced by the Lichnerowicz operator.
///
/// The real part lives on grid nodes. The imaginary part carries the mixed
/// derivative and lives on cell corners `(i+½, j+½)`, so `im.at(i, j)` is
/// the value at `((i+½)h, (j+½)h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub re: Field,
    pub im: Field,
}

/// Lichnerowicz operator `D f = f_{,zz} = f_zz − (∂_z log ρ) f_z`.
///
/// `f_zz = ¼(f_xx − f_yy − 2i f_xy)` is assembled from the compact second
/// differences and the corner mixed difference. With these stencils the flat
/// metric satisfies `Σ|Df|² = (1/16) Σ (Δf)²` exactly, the same symbol as
/// the 5-point Laplacian used for ρ and R.
pub fn lichnerowicz(f: &Field, m: &MetricState) -> ComplexField {
    let log_rho = &m.log_rho;

    let a = grid::partial_x(log_rho);
    let b = grid::partial_y(log_rho);
    let c = grid::partial_x(f);
    let d = grid::partial_y(f);
    let hess = grid::second_x(f).zip_map(&grid::second_y(f), |xx, yy| xx - yy);
    let christoffel = (&a * &c).zip_map(&(&b * &d), |ac, bd| ac - bd);
    let re = hess.zip_map(&christoffel, |h, g| 0.25 * (h - g));

    let ca = grid::corner_dx(log_rho);
    let cb = grid::corner_dy(log_rho);
    let cc = grid::corner_dx(f);
    let cd = grid::corner_dy(f);
    let mixed = grid::corner_xy(f);
    let christoffel_im = (&ca * &cd).zip_map(&(&cb * &cc), |ad, bc| ad + bc);
    let im = mixed.zip_map(&christoffel_im, |fxy, g| 0.25 * (-2.0 * fxy + g));

    ComplexField { re, im }
}

/// `∫ |Df|²_g dμ_φ` with `|Df|²_g = (2/ρ)² |Df|²`.
pub fn lichnerowicz_norm_sq(f: &Field, m: &MetricState) -> f64 {
    let df = lichnerowicz(f, m);
    let grid = f.grid();
    let rho_c = grid::to_corners(&m.rho);
    let node = df.re.zip_map(&m.rho, |z, r| 4.0 * z * z / r);
    let corner = df.im.zip_map(&rho_c, |z, r| 4.0 * z * z / r);
    let one = Field::constant(grid, 1.0);
    grid::integrate(&node, &one) + grid::integrate(&corner, &one)
}

/// Calabi energy `∫ (R − R̄)² dμ_φ`.
pub fn calabi_energy(m: &MetricState) -> f64 {
    let dev = m.curvature.map(|r| r - m.mean_curvature);
    mabuchi_inner(&dev, &dev, m)
}

/// K-energy relative to the flat potential, integrated along `τ ↦ τφ`.
pub fn k_energy(phi: &Field, quad_steps: usize) -> Result<f64, GeometryError> {
    k_energy_between(&Field::zeros(phi.grid()), phi, quad_steps)
}

/// `M(b) − M(a)` by trapezoid quadrature of `dM = −∫ φ̇ (R − R̄) dμ` along the
/// straight segment from `a` to `b`.
pub fn k_energy_between(a: &Field, b: &Field, quad_steps: usize) -> Result<f64, GeometryError> {
    if quad_steps < 8 {
        return Err(GeometryError::Invalid(format!(
            "k_energy needs at least 8 quadrature steps, got {quad_steps}"
        )));
    }
    let velocity = b - a;
    let samples = par::map_indices(quad_steps + 1, |q| {
        let tau = q as f64 / quad_steps as f64;
        let phi = a.add_scaled(tau, &velocity);
        let m = make_metric(&phi).map_err(|e| GeometryError::PathPositivity {
            tau,
            source: Box::new(e),
        })?;
        let dev = m.curvature.map(|r| r - m.mean_curvature);
        Ok(-mabuchi_inner(&velocity, &dev, &m))
    });
    let mut total = 0.0;
    for (q, s) in samples.into_iter().enumerate() {
        let w = if q == 0 || q == quad_steps { 0.5 } else { 1.0 };
        total += w * s?;
    }
    Ok(total / quad_steps as f64)
}
