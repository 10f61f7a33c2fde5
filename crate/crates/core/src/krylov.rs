//! Restarted GMRES with right preconditioning, matrix-free.

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    /// Target for `‖b − A x‖ / ‖b‖`.
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            rel_tol: 1e-10,
            restart: 60,
            max_iters: 3000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x` (overwritten with the solution).
///
/// `apply(v, out)` computes `out = A v`; `precond(v, out)` computes an
/// approximation of `out = A⁻¹ v`.
pub fn gmres<A, P>(apply: A, precond: P, b: &[f64], x: &mut [f64], opts: GmresOptions) -> GmresOutcome
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let m = opts.restart.max(1);
    let mut basis: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
    let mut g = vec![0.0; m + 1];
    let mut work = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;

    loop {
        apply(x, &mut work);
        for (r, (bi, ai)) in basis[0].iter_mut().zip(b.iter().zip(&work)) {
            *r = bi - ai;
        }
        let beta = norm(&basis[0]);
        let rel = beta / b_norm;
        if rel <= opts.rel_tol || total >= opts.max_iters {
            return GmresOutcome {
                iterations: total,
                rel_residual: rel,
                converged: rel <= opts.rel_tol,
            };
        }
        basis[0].iter_mut().for_each(|v| *v /= beta);
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            let (head, tail) = basis.split_at_mut(k + 1);
            let w = &mut tail[0];
            apply(&z, w);
            for (i, v) in head.iter().enumerate() {
                let hij = dot(w, v);
                hess[i][k] = hij;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hij * vi);
            }
            let h_next = norm(w);
            hess[k + 1][k] = h_next;
            if h_next > 0.0 {
                w.iter_mut().for_each(|v| *v /= h_next);
            }
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if (g[k + 1].abs() / b_norm) <= opts.rel_tol * 0.5 || total >= opts.max_iters || h_next == 0.0 {
                break;
            }
        }

        // Back substitution for the Krylov coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = ((i + 1)..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        work.iter_mut().for_each(|v| *v = 0.0);
        for (yi, v) in y.iter().zip(&basis) {
            work.iter_mut().zip(v).for_each(|(w, vi)| *w += yi * vi);
        }
        precond(&work, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let n = 200;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 4.0 * v[i] - 1.5 * left - 0.5 * right;
            }
        };
        let jacobi = |v: &[f64], out: &mut [f64]| {
            out.iter_mut().zip(v).for_each(|(o, x)| *o = x / 4.0);
        };
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&truth, &mut b);
        let mut x = vec![0.0; n];
        let out = gmres(apply, jacobi, &b, &mut x, GmresOptions { restart: 20, ..Default::default() });
        assert!(out.converged);
        let err = x.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "error {err}");
    }
}
