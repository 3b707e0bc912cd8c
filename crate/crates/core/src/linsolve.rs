//! Matrix-free Jacobi-preconditioned conjugate gradients for the SPD systems
//! `(alpha I - beta Δ) x = b` produced by the implicit half of a time step.

use crate::error::{Error, Result};
use crate::field::{apply_laplacian, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// `alpha I - beta Δ` on cell arrays; SPD for `alpha > 0`, `beta >= 0`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedLaplacian {
    pub grid: Grid,
    pub alpha: f64,
    pub beta: f64,
}

impl ShiftedLaplacian {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        apply_laplacian(&self.grid, x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.alpha * xi - self.beta * *o;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let g = self.grid;
        let ax = 1.0 / (g.hx() * g.hx());
        let ay = 1.0 / (g.hy() * g.hy());
        let mut d = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            for i in 0..g.nx {
                let nbx = (i > 0) as u8 + (i + 1 < g.nx) as u8;
                let nby = (j > 0) as u8 + (j + 1 < g.ny) as u8;
                d.push(self.alpha + self.beta * (nbx as f64 * ax + nby as f64 * ay));
            }
        }
        d
    }

    /// Solves in place, starting from the current contents of `x`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats> {
        let diag = self.diagonal();
        conjugate_gradient(|p, q| self.apply(p, q), &diag, b, x, tol, max_iter)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG with a diagonal preconditioner. Stops when
/// `‖b - Ax‖ ≤ tol ‖b‖`. Reductions run in a fixed order.
pub fn conjugate_gradient<A>(
    apply: A,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;

    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= tol {
        return Ok(CgStats {
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(Error::LinearSolver {
        iterations: max_iter,
        residual: res,
    })
}
