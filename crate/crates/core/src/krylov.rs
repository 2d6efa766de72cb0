//! Restarted GMRES with right preconditioning.
//!
//! Inner products are plain left-to-right sums, so a solve is bit-for-bit
//! reproducible for identical inputs.

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Target relative residual `‖b − Ax‖ / ‖b‖`.
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tolerance: 1e-10, restart: 60, max_iterations: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = rhs` starting from the contents of `x`.
///
/// `apply` computes `A v`, `precondition` computes `M⁻¹ v`; the Krylov space
/// is built for `A M⁻¹` so the monitored residual is the true one.
pub fn gmres<A, M>(
    mut apply: A,
    mut precondition: M,
    rhs: &[f64],
    x: &mut [f64],
    settings: &SolverSettings,
) -> Result<SolveStats>
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let m = settings.restart.max(1);
    let target = settings.tolerance * bnorm;
    let mut total = 0usize;

    loop {
        let ax = apply(x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= target {
            return Ok(SolveStats { iterations: total, relative_residual: beta / bnorm });
        }
        if total >= settings.max_iterations {
            return Err(LabError::SolverStagnation { iterations: total, residual: beta / bnorm });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Column-major Hessenberg, h[j] has j + 2 entries.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;

        for j in 0..m {
            let z = precondition(&basis[j]);
            let mut w = apply(&z);
            total += 1;
            let mut col = vec![0.0; j + 2];
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                col[i] = hij;
                for (wv, bv) in w.iter_mut().zip(&basis[i]) {
                    *wv -= hij * bv;
                }
            }
            let hnext = norm(&w);
            col[j + 1] = hnext;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            cs.push(c);
            sn.push(s);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            h.push(col);
            k = j + 1;

            let breakdown = hnext <= 1e-300;
            if !breakdown {
                basis.push(w.iter().map(|v| v / hnext).collect());
            }
            if g[j + 1].abs() <= target || total >= settings.max_iterations || breakdown {
                break;
            }
        }

        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().take(k).skip(i + 1) {
                acc -= h[l][i] * yl;
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        let mut combo = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&basis) {
            for (c, v) in combo.iter_mut().zip(vi) {
                *c += yi * v;
            }
        }
        let update = precondition(&combo);
        for (xv, u) in x.iter_mut().zip(&update) {
            *xv += u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, diag: f64, lower: f64, upper: f64) -> impl Fn(&[f64]) -> Vec<f64> {
        move |v: &[f64]| {
            (0..n)
                .map(|i| {
                    let mut s = diag * v[i];
                    if i > 0 {
                        s += lower * v[i - 1];
                    }
                    if i + 1 < n {
                        s += upper * v[i + 1];
                    }
                    s
                })
                .collect()
        }
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 200;
        let a = tridiag(n, 4.0, -1.5, -0.5);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut x = vec![0.0; n];
        let settings = SolverSettings { restart: 10, ..Default::default() };
        let stats = gmres(&a, |v: &[f64]| v.to_vec(), &rhs, &mut x, &settings).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        let ax = a(&x);
        let res: f64 = ax.iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * norm(&rhs));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = tridiag(10, 2.0, 1.0, 0.0);
        let mut x = vec![3.0; 10];
        let stats = gmres(&a, |v: &[f64]| v.to_vec(), &[0.0; 10], &mut x, &Default::default()).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reports_stagnation() {
        let n = 100;
        let a = tridiag(n, 0.01, -1.0, 1.0);
        let rhs = vec![1.0; n];
        let mut x = vec![0.0; n];
        let settings = SolverSettings { tolerance: 1e-14, restart: 2, max_iterations: 6 };
        let err = gmres(&a, |v: &[f64]| v.to_vec(), &rhs, &mut x, &settings).unwrap_err();
        assert!(matches!(err, LabError::SolverStagnation { iterations: 6, .. }));
    }

    #[test]
    fn deterministic_repeat() {
        let n = 64;
        let a = tridiag(n, 3.0, -1.0, 0.7);
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64).collect();
        let mut x1 = vec![0.0; n];
        let mut x2 = vec![0.0; n];
        let s = SolverSettings { restart: 5, ..Default::default() };
        gmres(&a, |v: &[f64]| v.to_vec(), &rhs, &mut x1, &s).unwrap();
        gmres(&a, |v: &[f64]| v.to_vec(), &rhs, &mut x2, &s).unwrap();
        assert_eq!(x1, x2);
    }
}
