//! Grids, discrete fields, difference operators and quadrature.
//!
//! The domain is the open unit interval (dim 1) or unit square (dim 2).
//! Only interior nodes are stored; every field carries an implicit
//! homogeneous Dirichlet boundary, so any neighbor lookup outside the
//! interior contributes the value zero.

use crate::error::{Error, Result};

/// Uniform grid of interior nodes on `(0,1)^dim` with spacing `h = 1/(n+1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
}

impl Grid {
    /// A `dim`-dimensional grid (`dim` in {1,2}) with `n >= 3` interior nodes per axis.
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim == 1 || dim == 2, "grid dimension must be 1 or 2");
        assert!(n >= 3, "need at least 3 interior nodes per axis");
        Grid {
            dim,
            n,
            h: 1.0 / (n as f64 + 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh spacing; `h * (n+1) = 1`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of interior nodes, `n^dim`.
    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Cells per axis (elements between nodes, boundary included): `n + 1`.
    pub fn cells_per_axis(&self) -> usize {
        self.n + 1
    }

    /// Quadrature weight of one node, `h^dim`.
    pub fn node_weight(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Axis coordinate of interior index `i` (0-based): `(i+1) h`.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.h
    }

    /// Flat index of the 2D interior node `(ix, iy)`, row-major in `iy`.
    pub fn index2(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }
}

/// Real-valued field on the interior nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// The zero field.
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Wrap raw nodal values; panics on a length mismatch or non-finite entry.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            grid.node_count(),
            "value length != node count"
        );
        assert!(
            values.iter().all(|v| v.is_finite()),
            "field entries must be finite"
        );
        ScalarField { grid, values }
    }

    /// Sample a function of the node coordinates. In 1D the closure receives
    /// `(x, 0)`, in 2D `(x, y)`.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.node_count());
        match grid.dim() {
            1 => {
                for i in 0..n {
                    values.push(f(grid.coord(i), 0.0));
                }
            }
            _ => {
                for iy in 0..n {
                    for ix in 0..n {
                        values.push(f(grid.coord(ix), grid.coord(iy)));
                    }
                }
            }
        }
        ScalarField::from_values(grid, values)
    }

    pub fn constant(grid: Grid, v: f64) -> Self {
        ScalarField::from_values(grid, vec![v; grid.node_count()])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise `self + a * other`.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x + a * y)
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }
}

/// `dim` scalar components on a shared grid; stores m, perturbations and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    /// Assemble from per-component fields; they must share one grid and there
    /// must be exactly `dim` of them.
    pub fn from_components(components: Vec<ScalarField>) -> Self {
        assert!(!components.is_empty());
        let grid = components[0].grid();
        assert_eq!(components.len(), grid.dim(), "component count != dim");
        assert!(
            components.iter().all(|c| c.grid() == grid),
            "components must share one grid"
        );
        VectorField { components }
    }

    pub fn grid(&self) -> Grid {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, k: usize) -> &ScalarField {
        &self.components[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut ScalarField {
        &mut self.components[k]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    /// Euclidean node magnitude `|m|` as a scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let grid = self.grid();
        let mut out = vec![0.0; grid.node_count()];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.values()) {
                *o += v * v;
            }
        }
        for o in out.iter_mut() {
            *o = o.sqrt();
        }
        ScalarField::from_values(grid, out)
    }

    /// Nodal inner product with another vector field, `sum_k a_k b_k`.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert_eq!(self.grid(), other.grid(), "grid mismatch");
        let grid = self.grid();
        let mut out = vec![0.0; grid.node_count()];
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, x), y) in out.iter_mut().zip(a.values()).zip(b.values()) {
                *o += x * y;
            }
        }
        ScalarField::from_values(grid, out)
    }

    pub fn axpy(&self, a: f64, other: &VectorField) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(x, y)| x.axpy(a, y))
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| c.scale(a)).collect(),
        }
    }

    /// Quadrature-weighted L2 norm over all components.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid().node_weight();
        let s: f64 = self
            .components
            .iter()
            .map(|c| c.values().iter().map(|v| v * v).sum::<f64>())
            .sum();
        (w * s).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.components.iter().map(linf_norm).fold(0.0, f64::max)
    }
}

/// Central-difference gradient with zero Dirichlet ghosts:
/// component `k` at a node is `(u(x + h e_k) - u(x - h e_k)) / (2h)`.
pub fn gradient(p: &ScalarField) -> VectorField {
    let grid = p.grid();
    let n = grid.n();
    let inv2h = 1.0 / (2.0 * grid.h());
    let v = p.values();
    match grid.dim() {
        1 => {
            let mut g = vec![0.0; n];
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                g[i] = (right - left) * inv2h;
            }
            VectorField::from_components(vec![ScalarField::from_values(grid, g)])
        }
        _ => {
            let mut gx = vec![0.0; n * n];
            let mut gy = vec![0.0; n * n];
            for iy in 0..n {
                for ix in 0..n {
                    let id = grid.index2(ix, iy);
                    let l = if ix > 0 { v[id - 1] } else { 0.0 };
                    let r = if ix + 1 < n { v[id + 1] } else { 0.0 };
                    let b = if iy > 0 { v[id - n] } else { 0.0 };
                    let t = if iy + 1 < n { v[id + n] } else { 0.0 };
                    gx[id] = (r - l) * inv2h;
                    gy[id] = (t - b) * inv2h;
                }
            }
            VectorField::from_components(vec![
                ScalarField::from_values(grid, gx),
                ScalarField::from_values(grid, gy),
            ])
        }
    }
}

/// `(2 dim + 1)`-point discrete Laplacian with zero Dirichlet ghosts.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let mut out = vec![0.0; grid.node_count()];
    laplacian_raw(grid, u.values(), &mut out);
    ScalarField::from_values(grid, out)
}

/// Stencil Laplacian on raw nodal values; used by the matrix-free solvers.
pub fn laplacian_raw(grid: Grid, v: &[f64], out: &mut [f64]) {
    let n = grid.n();
    let invh2 = 1.0 / (grid.h() * grid.h());
    match grid.dim() {
        1 => {
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = (left - 2.0 * v[i] + right) * invh2;
            }
        }
        _ => {
            for iy in 0..n {
                for ix in 0..n {
                    let id = grid.index2(ix, iy);
                    let l = if ix > 0 { v[id - 1] } else { 0.0 };
                    let r = if ix + 1 < n { v[id + 1] } else { 0.0 };
                    let b = if iy > 0 { v[id - n] } else { 0.0 };
                    let t = if iy + 1 < n { v[id + n] } else { 0.0 };
                    out[id] = (l + r + b + t - 4.0 * v[id]) * invh2;
                }
            }
        }
    }
}

/// Mass-lumped quadrature `h^dim * sum_nodes f`; Dirichlet integrands get no
/// boundary contribution.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid().node_weight() * f.values().iter().sum::<f64>()
}

/// Quadrature-weighted inner product `h^dim * sum f g`.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> f64 {
    assert_eq!(f.grid(), g.grid(), "grid mismatch");
    f.grid().node_weight()
        * f.values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

/// Quadrature-weighted L2 norm.
pub fn l2_norm(f: &ScalarField) -> f64 {
    inner_product(f, f).sqrt()
}

/// Maximum absolute nodal value.
pub fn linf_norm(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Total variation of a 1D field with Dirichlet closure:
/// `sum_{i=0..n} |m_{i+1} - m_i|` where `m_0 = m_{n+1} = 0`.
pub fn total_variation_1d(m: &ScalarField) -> Result<f64> {
    if m.grid().dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: m.grid().dim(),
        });
    }
    let v = m.values();
    let mut tv = v[0].abs() + v[v.len() - 1].abs();
    for w in v.windows(2) {
        tv += (w[1] - w[0]).abs();
    }
    Ok(tv)
}

/// Dirichlet energy `integral |grad u|^2` via one-sided face differences,
/// including the faces to the zero boundary. Equals the quadrature-weighted
/// form of the stencil Laplacian, `inner_product(-laplacian(u), u)`, exactly.
pub fn dirichlet_face_energy(u: &ScalarField) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let v = u.values();
    let mut sum = 0.0;
    match grid.dim() {
        1 => {
            sum += v[0] * v[0] + v[n - 1] * v[n - 1];
            for w in v.windows(2) {
                let d = w[1] - w[0];
                sum += d * d;
            }
            sum / (h * h) * grid.node_weight()
        }
        _ => {
            for iy in 0..n {
                for ix in 0..=n {
                    let a = if ix > 0 {
                        v[grid.index2(ix - 1, iy)]
                    } else {
                        0.0
                    };
                    let b = if ix < n { v[grid.index2(ix, iy)] } else { 0.0 };
                    let d = b - a;
                    sum += d * d;
                }
            }
            for ix in 0..n {
                for iy in 0..=n {
                    let a = if iy > 0 {
                        v[grid.index2(ix, iy - 1)]
                    } else {
                        0.0
                    };
                    let b = if iy < n { v[grid.index2(ix, iy)] } else { 0.0 };
                    let d = b - a;
                    sum += d * d;
                }
            }
            sum / (h * h) * grid.node_weight()
        }
    }
}

/// Face-difference Dirichlet energy summed over components.
pub fn dirichlet_face_energy_vec(u: &VectorField) -> f64 {
    u.components().iter().map(dirichlet_face_energy).sum()
}
