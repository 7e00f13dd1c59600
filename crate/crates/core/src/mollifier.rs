//! Heat-kernel mollification with zero extension outside the domain.
//!
//! The kernel `(4 pi eps)^(-d/2) exp(-|x|^2 / 4 eps)` factorizes over axes,
//! so the stencil stores one axis of sampled weights and convolves
//! dimension by dimension. Sampling happens on the grid lattice and the
//! weights carry the quadrature factor `h` per axis, so the discrete
//! convolution approximates the continuum one with the field extended by
//! zero. Direct sweeps, not transforms: grids are small and zero extension
//! stays exact.

use crate::field::{Grid, ScalarField};

/// Truncated, sampled heat kernel on a grid lattice.
#[derive(Clone, Debug)]
pub struct KernelStencil {
    eps: f64,
    dim: usize,
    /// Weights for axis offsets `0..=radius`; symmetric under negation.
    axis_weights: Vec<f64>,
    /// Set when `eps` is so small that the kernel is sub-grid and the
    /// stencil degenerated to the identity.
    degenerate: bool,
}

impl KernelStencil {
    /// Sample the heat kernel at scale `eps > 0` on `grid`'s lattice.
    ///
    /// The radius keeps every omitted sample below `1e-16` of the center
    /// weight; a sub-grid kernel (radius < 1) degenerates to the identity
    /// stencil with the `degenerate` flag set.
    pub fn heat_kernel(eps: f64, grid: Grid) -> Self {
        assert!(eps > 0.0, "mollification scale must be positive");
        let h = grid.h();
        // exp(-(r h)^2 / 4 eps) < 1e-16  <=>  r h > sqrt(4 eps ln 1e16)
        let cutoff = (4.0 * eps * 1e16f64.ln()).sqrt();
        if cutoff < h {
            // Sub-grid kernel: even the nearest neighbor falls below the
            // truncation threshold.
            return KernelStencil {
                eps,
                dim: grid.dim(),
                axis_weights: vec![1.0],
                degenerate: true,
            };
        }
        let radius = (cutoff / h).ceil() as usize;
        // Wider than the lattice adds only zero-extended samples.
        let radius = radius.min(grid.n() + 1);
        let norm = h / (4.0 * std::f64::consts::PI * eps).sqrt();
        let axis_weights = (0..=radius)
            .map(|k| {
                let x = k as f64 * h;
                norm * (-x * x / (4.0 * eps)).exp()
            })
            .collect();
        KernelStencil {
            eps,
            dim: grid.dim(),
            axis_weights,
            degenerate: false,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.axis_weights.len() - 1
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Weight of the zero offset, `(4 pi eps)^(-d/2) h^d` for a non-degenerate kernel.
    pub fn center_weight(&self) -> f64 {
        self.axis_weights[0].powi(self.dim as i32)
    }

    /// Total stencil mass; at most `1 + 1e-12` (truncated Gaussian).
    pub fn weight_sum(&self) -> f64 {
        let axis: f64 = self.axis_weights[0] + 2.0 * self.axis_weights[1..].iter().sum::<f64>();
        axis.powi(self.dim as i32)
    }

    /// Convolve one axis of a row-major lattice of `len` points per axis.
    fn convolve_axis(&self, len: usize, stride: usize, count: usize, data: &mut [f64]) {
        if self.degenerate {
            return;
        }
        let r = self.radius();
        let w = &self.axis_weights;
        let mut line = vec![0.0; len];
        for lane in 0..count {
            // Lanes enumerate all positions with axis index 0.
            let base = (lane / stride) * stride * len + (lane % stride);
            for (i, l) in line.iter_mut().enumerate() {
                let mut acc = w[0] * data[base + i * stride];
                for k in 1..=r.min(len) {
                    let mut s = 0.0;
                    if i >= k {
                        s += data[base + (i - k) * stride];
                    }
                    if i + k < len {
                        s += data[base + (i + k) * stride];
                    }
                    acc += w[k] * s;
                }
                *l = acc;
            }
            for (i, l) in line.iter().enumerate() {
                data[base + i * stride] = *l;
            }
        }
    }

    /// Discrete convolution on a square row-major lattice (`len` points per
    /// axis, `dim` axes); samples outside the lattice contribute zero.
    pub fn convolve_raw(&self, len: usize, data: &[f64]) -> Vec<f64> {
        let mut out = data.to_vec();
        match self.dim {
            1 => {
                assert_eq!(data.len(), len);
                self.convolve_axis(len, 1, 1, &mut out);
            }
            _ => {
                assert_eq!(data.len(), len * len);
                self.convolve_axis(len, 1, len, &mut out); // x sweep
                self.convolve_axis(len, len, len, &mut out); // y sweep
            }
        }
        out
    }
}

/// Mollify a nodal field; the field is extended by zero outside the interior.
pub fn convolve_zero_extended(f: &ScalarField, kernel: &KernelStencil) -> ScalarField {
    let grid = f.grid();
    assert_eq!(grid.dim(), kernel.dim(), "kernel/grid dimension mismatch");
    ScalarField::from_values(grid, kernel.convolve_raw(grid.n(), f.values()))
}

/// The positivity functional `integral (u * eta) u dx`.
///
/// Nonnegative in the continuum because the kernel's Fourier transform is;
/// the truncated sampled stencil can dip below zero only at rounding scale.
pub fn positivity_check(u: &ScalarField, kernel: &KernelStencil) -> f64 {
    crate::field::inner_product(&convolve_zero_extended(u, kernel), u)
}
