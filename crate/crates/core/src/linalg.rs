//! Matrix-free preconditioned conjugate gradients.

use crate::error::{Error, Result};

/// Outcome of a CG solve.
#[derive(Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `||b - A x|| / ||b||` at exit.
    pub residual: f64,
}

/// Solve `A x = b` for a symmetric positive definite operator given as a
/// matrix-free `apply`, with Jacobi preconditioning by `diag` (pass all ones
/// for no preconditioning). `x0` seeds the iteration when supplied.
///
/// Converges when the relative residual drops below `tol`; returns
/// `NonConvergence` after `max_iter` iterations.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = b.len();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    for i in 0..n {
        r[i] = b[i] - ax[i];
    }

    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    for k in 0..max_iter {
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        if res <= tol {
            return Ok(CgSolution {
                x,
                iterations: k,
                residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            // Loss of positive definiteness to rounding; report as stalled.
            return Err(Error::NonConvergence {
                iterations: k,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
    if res <= tol {
        Ok(CgSolution {
            x,
            iterations: max_iter,
            residual: res,
        })
    } else {
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: res,
        })
    }
}
