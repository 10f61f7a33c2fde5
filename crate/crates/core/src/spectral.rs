//! Two-dimensional discrete Fourier transforms on the periodic grid.
//!
//! Only used to invert constant-coefficient operators; all differentiation is
//! done with local stencils.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<HashMap<usize, Plans>> = RefCell::new(HashMap::new());
}

fn plans(n: usize) -> Plans {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn transform(data: &mut [Complex64], n: usize, forward: bool) {
    let (fwd, inv) = plans(n);
    let plan = if forward { fwd } else { inv };
    plan.process(data);
    transpose(data, n);
    plan.process(data);
    transpose(data, n);
}

/// Forward transform of a real `n × n` row-major array.
pub fn forward(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, n, true);
    data
}

/// Inverse of [`forward`], keeping the real part (normalized by `n²`).
pub fn inverse_real(mut data: Vec<Complex64>, n: usize) -> Vec<f64> {
    transform(&mut data, n, false);
    let scale = 1.0 / (n * n) as f64;
    data.iter().map(|c| c.re * scale).collect()
}

/// Eigenvalue of the negated 5-point Laplacian on mode `(kx, ky)`:
/// `(4/h²)(sin²(π kx/N) + sin²(π ky/N))`.
pub fn laplacian_symbol(n: usize, kx: usize, ky: usize) -> f64 {
    let h = 1.0 / n as f64;
    let sx = (PI * kx as f64 / n as f64).sin();
    let sy = (PI * ky as f64 / n as f64).sin();
    4.0 / (h * h) * (sx * sx + sy * sy)
}
