//! Thick-restart Lanczos for the lowest eigenpair of a real symmetric operator
//! given only as a matrix-vector product.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Maximum Krylov basis size before a restart.
    pub krylov_dim: usize,
    /// Ritz vectors kept across a restart.
    pub keep: usize,
    /// Residual tolerance `‖Ax − θx‖`.
    pub tol: f64,
    /// Budget of operator applications.
    pub max_matvecs: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            krylov_dim: 30,
            keep: 12,
            tol: 1e-8,
            max_matvecs: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// True residual norm, from one extra operator application.
    pub residual: f64,
    pub matvecs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Linear combination `Σ_i coeffs[i] · basis[i]`.
fn combine(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (v, c) in basis.iter().zip(coeffs) {
        axpy(c, v, &mut out);
    }
    out
}

/// Lowest eigenpair of the operator `apply(x, y): y ← A x`, starting from `start`.
pub fn lowest_eigenpair<F>(apply: F, start: Vec<f64>, opts: LanczosOptions) -> Result<Eigenpair>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = start.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let m = opts.krylov_dim.min(dim).max(2);
    let keep = opts.keep.clamp(1, m - 1);

    let mut v0 = start;
    let n0 = norm(&v0);
    if n0 == 0.0 || !n0.is_finite() {
        return Err(Error::InvalidArgument("start vector must be nonzero".into()));
    }
    v0.iter_mut().for_each(|x| *x /= n0);

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut w = vec![0.0; dim];
    let mut matvecs = 0usize;
    let mut best_residual = f64::INFINITY;

    loop {
        // Expand the basis from its last vector up to `m` vectors.
        let mut beta;
        let mut j = basis.len() - 1;
        let mut size = m;
        loop {
            apply(&basis[j], &mut w);
            matvecs += 1;
            // Two passes of classical Gram-Schmidt against the whole basis.
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let h = dot(v, &w);
                    axpy(-h, v, &mut w);
                    if pass == 0 {
                        t[(i, j)] = h;
                    } else {
                        t[(i, j)] += h;
                    }
                    t[(j, i)] = t[(i, j)];
                }
            }
            beta = norm(&w);
            if j + 1 == m {
                break;
            }
            if beta <= 1e-14 * t[(j, j)].abs().max(1.0) {
                // Invariant subspace found: the projected problem is exact.
                size = j + 1;
                beta = 0.0;
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / beta).collect();
            t[(j + 1, j)] = beta;
            t[(j, j + 1)] = beta;
            basis.push(next);
            j += 1;
        }

        let projected = t.view((0, 0), (size, size)).into_owned();
        let eig = SymmetricEigen::new(projected);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let lowest = order[0];
        let estimate = (beta * eig.eigenvectors[(size - 1, lowest)]).abs();
        best_residual = best_residual.min(estimate);

        if estimate <= opts.tol || beta == 0.0 {
            let mut x = combine(&basis, eig.eigenvectors.column(lowest).iter().copied(), dim);
            let nx = norm(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            let theta = eig.eigenvalues[lowest];
            apply(&x, &mut w);
            matvecs += 1;
            axpy(-theta, &x, &mut w);
            let residual = norm(&w);
            best_residual = best_residual.min(residual);
            if residual <= opts.tol {
                return Ok(Eigenpair {
                    value: theta,
                    vector: x,
                    residual,
                    matvecs,
                });
            }
            if beta == 0.0 {
                // Exact subspace but residual above tolerance: restart from x.
                basis = vec![x];
                t.fill(0.0);
                continue;
            }
        }

        if matvecs >= opts.max_matvecs {
            return Err(Error::Convergence {
                iterations: matvecs,
                best_residual,
            });
        }

        // Thick restart: keep the lowest Ritz vectors plus the residual direction.
        let mut kept: Vec<Vec<f64>> = order[..keep]
            .iter()
            .map(|&k| combine(&basis, eig.eigenvectors.column(k).iter().copied(), dim))
            .collect();
        let residual_dir: Vec<f64> = w.iter().map(|x| x / beta).collect();
        t.fill(0.0);
        for (i, &k) in order[..keep].iter().enumerate() {
            t[(i, i)] = eig.eigenvalues[k];
            let coupling = beta * eig.eigenvectors[(size - 1, k)];
            t[(i, keep)] = coupling;
            t[(keep, i)] = coupling;
        }
        kept.push(residual_dir);
        basis = kept;
    }
}
