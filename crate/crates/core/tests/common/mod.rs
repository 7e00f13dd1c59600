//! Shared fixtures and independent oracles for the integration tests.
//!
//! The dense eigensolver here is deliberately self-contained (Cholesky plus
//! cyclic Jacobi) so the power-iteration path in the library is checked
//! against an implementation that shares none of its code.

#![allow(dead_code)]
// Index-based loops below mirror the textbook matrix notation on purpose.
#![allow(clippy::needless_range_loop)]

use nflab_core::elliptic::PressureSolve;
use nflab_core::{Grid, ScalarField, SplitMix64, VectorField};

pub fn seeded_scalar(grid: Grid, seed: u64, amp: f64) -> ScalarField {
    let mut rng = SplitMix64::new(seed);
    ScalarField::from_values(
        grid,
        (0..grid.node_count())
            .map(|_| rng.next_symmetric(amp))
            .collect(),
    )
}

pub fn seeded_vector(grid: Grid, seed: u64, amp: f64) -> VectorField {
    let mut rng = SplitMix64::new(seed);
    VectorField::from_components(
        (0..grid.dim())
            .map(|_| {
                ScalarField::from_values(
                    grid,
                    (0..grid.node_count())
                        .map(|_| rng.next_symmetric(amp))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn constant_vector(grid: Grid, v: f64) -> VectorField {
    VectorField::from_components(
        (0..grid.dim())
            .map(|_| ScalarField::constant(grid, v))
            .collect(),
    )
}

/// Largest eigenvalue of the 1D generalized problem
/// `diag((dp0/dx)^2) v = sigma (-lap) v`
/// on the same discrete operators the library uses, solved densely:
/// Cholesky-reduce the pencil and run cyclic Jacobi to machine precision.
pub fn dense_sigma1_oracle_1d(p0: &PressureSolve) -> f64 {
    let grid = p0.p.grid();
    assert_eq!(grid.dim(), 1);
    let n = grid.n();
    let h = grid.h();
    let g = p0.gradp.component(0).values();

    // Dense stiffness L = (1/h^2) tridiag(-1, 2, -1).
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        l[i][i] = 2.0 / (h * h);
        if i > 0 {
            l[i][i - 1] = -1.0 / (h * h);
            l[i - 1][i] = -1.0 / (h * h);
        }
    }

    // In-place Cholesky, lower triangle.
    for j in 0..n {
        let mut d = l[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in (j + 1)..n {
            let mut v = l[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            l[i][j] = v / d;
        }
    }

    // Columns of M = G^{-1} sqrt(W): forward substitution per column.
    let mut m = vec![vec![0.0f64; n]; n];
    for j in 0..n {
        let wj = g[j] * g[j];
        let s = wj.sqrt();
        let mut col = vec![0.0f64; n];
        for i in 0..n {
            let mut v = if i == j { s } else { 0.0 };
            for k in 0..i {
                v -= l[i][k] * col[k];
            }
            col[i] = v / l[i][i];
        }
        for i in 0..n {
            m[i][j] = col[i];
        }
    }

    // A = M M^T, symmetric positive semidefinite.
    let mut a = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i..n {
            let mut v = 0.0;
            for k in 0..n {
                v += m[i][k] * m[j][k];
            }
            a[i][j] = v;
            a[j][i] = v;
        }
    }

    // Cyclic Jacobi until the off-diagonal mass is negligible.
    let scale: f64 = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}
