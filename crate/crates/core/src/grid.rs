//! Periodic uniform grid on the unit torus and the discrete operators every
//! other module is built from.
//!
//! Point `(i, j)` sits at `(x, y) = (i h, j h)` with `h = 1/N`; values are
//! stored row-major with `i` as the outer index. Periodicity is handled by
//! index arithmetic, never by ghost cells.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::GridError;
use crate::par;
use crate::spectral;

/// Number of points per axis of a square periodic grid of side 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < Self::MIN_POINTS || !n.is_multiple_of(2) {
            return Err(GridError::InvalidSize(n));
        }
        Ok(Grid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub(crate) fn up(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub(crate) fn down(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    /// Coordinates of point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h(), j as f64 * self.h())
    }

    /// Symbol `sin(2π k h)/h` of the centered first difference on wave number `k`.
    pub fn centered_symbol(&self, k: usize) -> f64 {
        (2.0 * std::f64::consts::PI * k as f64 * self.h()).sin() / self.h()
    }

    /// Symbol `(2/h²)(1 − cos(2π k h))` of the negated 3-point second difference.
    pub fn second_difference_symbol(&self, k: usize) -> f64 {
        spectral::laplacian_symbol(self.n, k, 0)
    }
}

/// Real values on a [`Grid`]; houses potentials, tangent vectors and
/// curvatures alike.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        let mut values = vec![0.0; grid.len()];
        par::fill_rows(&mut values, grid.n(), |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                let (x, y) = grid.point(i, j);
                *v = f(x, y);
            }
        });
        Field { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(pos));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Field {
        let mut out = vec![0.0; self.values.len()];
        let n = self.grid.n();
        par::fill_rows(&mut out, n, |i, row| {
            let src = &self.values[i * n..(i + 1) * n];
            for (o, &v) in row.iter_mut().zip(src) {
                *o = f(v);
            }
        });
        Field::from_raw(self.grid, out)
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let mut out = vec![0.0; self.values.len()];
        let n = self.grid.n();
        par::fill_rows(&mut out, n, |i, row| {
            let a = &self.values[i * n..(i + 1) * n];
            let b = &other.values[i * n..(i + 1) * n];
            for ((o, &x), &y) in row.iter_mut().zip(a).zip(b) {
                *o = f(x, y);
            }
        });
        Field::from_raw(self.grid, out)
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &Field) -> Field {
        self.zip_map(other, |x, y| x + a * y)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid average, which equals `integrate(self, 1)` on the unit torus.
    pub fn mean(&self) -> f64 {
        integrate(self, &Field::constant(self.grid, 1.0))
    }

    /// True when every value is bitwise equal to the first.
    pub fn is_uniform(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&v| v.to_bits() == first.to_bits())
    }

    /// Cyclic translation by `(di, dj)` grid steps.
    pub fn shifted(&self, di: usize, dj: usize) -> Field {
        let n = self.grid.n();
        let mut out = vec![0.0; self.values.len()];
        par::fill_rows(&mut out, n, |i, row| {
            let si = (i + n - di % n) % n;
            for (j, v) in row.iter_mut().enumerate() {
                let sj = (j + n - dj % n) % n;
                *v = self.values[si * n + sj];
            }
        });
        Field::from_raw(self.grid, out)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|a| a * rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|a| -a)
    }
}

fn stencil(f: &Field, kernel: impl Fn(&[f64], usize, usize, &Grid) -> f64 + Sync + Send) -> Field {
    let grid = f.grid();
    let n = grid.n();
    let src = f.values();
    let mut out = vec![0.0; grid.len()];
    par::fill_rows(&mut out, n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = kernel(src, i, j, &grid);
        }
    });
    Field::from_raw(grid, out)
}

/// Centered difference `(f(i+1,j) − f(i−1,j)) / 2h`.
pub fn partial_x(f: &Field) -> Field {
    let inv = 0.5 / f.grid().h();
    stencil(f, |s, i, j, g| {
        (s[g.index(g.up(i), j)] - s[g.index(g.down(i), j)]) * inv
    })
}

/// Centered difference `(f(i,j+1) − f(i,j−1)) / 2h`.
pub fn partial_y(f: &Field) -> Field {
    let inv = 0.5 / f.grid().h();
    stencil(f, |s, i, j, g| {
        (s[g.index(i, g.up(j))] - s[g.index(i, g.down(j))]) * inv
    })
}

/// Compact second difference in x, `(f(i+1,j) − 2f + f(i−1,j)) / h²`.
pub fn second_x(f: &Field) -> Field {
    let inv = 1.0 / (f.grid().h() * f.grid().h());
    stencil(f, |s, i, j, g| {
        let c = s[g.index(i, j)];
        ((s[g.index(g.up(i), j)] + s[g.index(g.down(i), j)]) - (c + c)) * inv
    })
}

/// Compact second difference in y.
pub fn second_y(f: &Field) -> Field {
    let inv = 1.0 / (f.grid().h() * f.grid().h());
    stencil(f, |s, i, j, g| {
        let c = s[g.index(i, j)];
        ((s[g.index(i, g.up(j))] + s[g.index(i, g.down(j))]) - (c + c)) * inv
    })
}

/// Mixed difference centered on the cell corner `(i+½, j+½)`:
/// `(f(i+1,j+1) − f(i+1,j) − f(i,j+1) + f(i,j)) / h²`.
pub fn corner_xy(f: &Field) -> Field {
    let inv = 1.0 / (f.grid().h() * f.grid().h());
    stencil(f, |s, i, j, g| {
        let (ip, jp) = (g.up(i), g.up(j));
        ((s[g.index(ip, jp)] - s[g.index(ip, j)]) - (s[g.index(i, jp)] - s[g.index(i, j)])) * inv
    })
}

/// Average of the four nodes around the corner `(i+½, j+½)`.
pub fn to_corners(f: &Field) -> Field {
    stencil(f, |s, i, j, g| {
        let (ip, jp) = (g.up(i), g.up(j));
        0.25 * ((s[g.index(i, j)] + s[g.index(ip, jp)]) + (s[g.index(ip, j)] + s[g.index(i, jp)]))
    })
}

/// x-difference centered on the corner `(i+½, j+½)`.
pub fn corner_dx(f: &Field) -> Field {
    let inv = 0.5 / f.grid().h();
    stencil(f, |s, i, j, g| {
        let (ip, jp) = (g.up(i), g.up(j));
        ((s[g.index(ip, j)] - s[g.index(i, j)]) + (s[g.index(ip, jp)] - s[g.index(i, jp)])) * inv
    })
}

/// y-difference centered on the corner `(i+½, j+½)`.
pub fn corner_dy(f: &Field) -> Field {
    let inv = 0.5 / f.grid().h();
    stencil(f, |s, i, j, g| {
        let (ip, jp) = (g.up(i), g.up(j));
        ((s[g.index(i, jp)] - s[g.index(i, j)]) + (s[g.index(ip, jp)] - s[g.index(ip, j)])) * inv
    })
}

/// 5-point Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let inv = 1.0 / (f.grid().h() * f.grid().h());
    stencil(f, |s, i, j, g| {
        let c = s[g.index(i, j)];
        let sx = s[g.index(g.up(i), j)] + s[g.index(g.down(i), j)];
        let sy = s[g.index(i, g.up(j))] + s[g.index(i, g.down(j))];
        ((sx + sy) - 4.0 * c) * inv
    })
}

/// `h² Σ f·weight`: the integral of `f` against the density `weight`.
pub fn integrate(f: &Field, weight: &Field) -> f64 {
    assert_eq!(f.grid(), weight.grid(), "fields live on different grids");
    let grid = f.grid();
    let n = grid.n();
    let (a, w) = (f.values(), weight.values());
    let total = par::ordered_sum(n, |i| {
        let r = i * n..(i + 1) * n;
        a[r.clone()].iter().zip(&w[r]).map(|(x, y)| x * y).sum()
    });
    total * grid.h() * grid.h()
}

/// Solves `(Id + c Δ²) u = b` exactly in the Fourier basis of the 5-point
/// Laplacian. Requires `c > 0`; the mean of `b` is preserved.
pub fn solve_biharmonic_shift(b: &Field, c: f64) -> Field {
    assert!(c > 0.0, "biharmonic shift needs c > 0, got {c}");
    divide_by_symbol(b, |s| 1.0 + c * s * s)
}

/// Divides every Fourier mode of `b` by `divisor(σ)`, where `σ` is the
/// symbol of `−Δ` on that mode. `divisor(0)` must be 1 so the mean is kept.
pub fn divide_by_symbol(b: &Field, divisor: impl Fn(f64) -> f64) -> Field {
    debug_assert_eq!(divisor(0.0), 1.0);
    if b.is_uniform() {
        return b.clone();
    }
    let grid = b.grid();
    let n = grid.n();
    let mut modes = spectral::forward(b.values(), n);
    for kx in 0..n {
        for ky in 0..n {
            modes[kx * n + ky] /= divisor(spectral::laplacian_symbol(n, kx, ky));
        }
    }
    Field::from_raw(grid, spectral::inverse_real(modes, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn pseudo_random(grid: Grid, seed: u64) -> Field {
        let mut state = seed;
        let values = (0..grid.len())
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        Field::from_values(grid, values).unwrap()
    }

    #[test]
    fn grid_size_validation() {
        assert!(Grid::new(7).is_err());
        assert!(Grid::new(6).is_err());
        assert!(Grid::new(10).is_ok());
        let g = grid(32);
        assert!((g.h() * g.n() as f64 - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = Field::constant(grid(16), 1.0);
        assert_eq!(partial_x(&f).max_abs(), 0.0);
        assert_eq!(partial_y(&f).max_abs(), 0.0);
        assert_eq!(laplacian(&f).max_abs(), 0.0);
    }

    #[test]
    fn centered_difference_symbol_on_sine() {
        let g = grid(32);
        let f = Field::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let s1 = g.centered_symbol(1);
        let expected = Field::from_fn(g, |x, _| s1 * (2.0 * PI * x).cos());
        assert!((&partial_x(&f) - &expected).max_abs() < 1e-12);
        let c = Field::from_fn(g, |_, y| (2.0 * PI * y).cos());
        assert_eq!(partial_x(&c).max_abs(), 0.0);
    }

    #[test]
    fn laplacian_symbol_on_cosine() {
        let g = grid(32);
        let f = Field::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let sigma = 2.0 / (g.h() * g.h()) * (1.0 - (2.0 * PI * g.h()).cos());
        assert!((sigma - g.second_difference_symbol(1)).abs() < 1e-10);
        let expected = &f * (-sigma);
        assert!((&laplacian(&f) - &expected).max_abs() < 1e-10);
    }

    #[test]
    fn laplacian_sums_to_zero() {
        let g = grid(16);
        let f = pseudo_random(g, 3);
        let sum: f64 = laplacian(&f).values().iter().sum();
        assert!(sum.abs() <= 1e-12 * f.max_abs() / (g.h() * g.h()));
    }

    #[test]
    fn integration_examples() {
        let g = grid(16);
        let one = Field::constant(g, 1.0);
        assert!((integrate(&one, &one) - 1.0).abs() < 1e-15);
        let c = Field::from_fn(g, |x, _| (2.0 * PI * x).cos());
        assert!(integrate(&c, &one).abs() < 1e-15);
        let c2 = &c * &c;
        assert!((integrate(&c2, &one) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn biharmonic_shift_examples() {
        let g = grid(32);
        let five = Field::constant(g, 5.0);
        assert_eq!(solve_biharmonic_shift(&five, 0.3), five);

        let c = 1e-4;
        let f = Field::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let s = g.second_difference_symbol(1);
        let u = solve_biharmonic_shift(&f, c);
        assert!((&u - &(&f * (1.0 / (1.0 + c * s * s)))).max_abs() < 1e-13);

        let b = pseudo_random(g, 11);
        let u = solve_biharmonic_shift(&b, c);
        let back = u.add_scaled(c, &laplacian(&laplacian(&u)));
        assert!((&back - &b).max_abs() <= 1e-10 * b.max_abs());
        assert!((u.mean() - b.mean()).abs() < 1e-14);
    }

    #[test]
    fn integration_by_parts_is_exact() {
        let g = grid(16);
        let f = pseudo_random(g, 1);
        let q = pseudo_random(g, 2);
        let one = Field::constant(g, 1.0);
        let a = integrate(&(&f * &laplacian(&q)), &one);
        let b = integrate(&(&q * &laplacian(&f)), &one);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
    }

    #[test]
    fn partials_commute() {
        let g = grid(16);
        let f = pseudo_random(g, 5);
        let a = partial_x(&partial_y(&f));
        let b = partial_y(&partial_x(&f));
        assert!((&a - &b).max_abs() < 1e-10);
    }

    #[test]
    fn corner_mixed_difference_has_product_symbol() {
        // |symbol|² of the corner stencil equals σx·σy; checked on one mode via energy.
        let g = grid(32);
        let f = Field::from_fn(g, |x, y| (2.0 * PI * (x + 2.0 * y)).cos());
        let one = Field::constant(g, 1.0);
        let e = integrate(&(&corner_xy(&f) * &corner_xy(&f)), &one);
        let expected = 0.5 * g.second_difference_symbol(1) * g.second_difference_symbol(2);
        assert!((e - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn shifted_round_trip() {
        let g = grid(16);
        let f = pseudo_random(g, 9);
        assert_eq!(f.shifted(3, 5).shifted(13, 11), f);
        assert_eq!(f.shifted(1, 0).at(1, 0), f.at(0, 0));
    }
}
