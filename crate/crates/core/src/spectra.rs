//! Steady amplitudes, diffusionless patterns, the leading eigenvalue of the
//! pressure-gradient operator, and stability classification.

use crate::dynamics::{linearized_pattern_step, linearized_zero_step};
use crate::elliptic::{solve_stationary_pressure_d0, PressureSolve};
use crate::energy::decay_rate_from_series;
use crate::error::{Error, Result};
use crate::field::{dirichlet_face_energy, l2_norm, laplacian_raw, Grid, ScalarField, VectorField};
use crate::linalg::pcg;
use crate::params::ModelParams;
use crate::rng::SplitMix64;

/// Node-indexed sign partition defining a diffusionless pattern: `+1`, `-1`
/// mark the two signed regions, `0` the inactive one.
#[derive(Clone, Debug)]
pub struct PatternSpec {
    grid: Grid,
    signs: Vec<i8>,
}

impl PatternSpec {
    pub fn from_signs(grid: Grid, signs: Vec<i8>) -> Self {
        assert_eq!(signs.len(), grid.node_count(), "sign count != node count");
        assert!(
            signs.iter().all(|s| (-1..=1).contains(s)),
            "signs must lie in {{-1, 0, 1}}"
        );
        PatternSpec { grid, signs }
    }

    /// All nodes carry the same sign.
    pub fn uniform(grid: Grid, sign: i8) -> Self {
        Self::from_signs(grid, vec![sign; grid.node_count()])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Fraction of nodes with sign zero (the inactive region).
    pub fn measure_a0(&self) -> f64 {
        let zeros = self.signs.iter().filter(|s| **s == 0).count();
        zeros as f64 / self.signs.len() as f64
    }
}

/// Leading eigenvalue of the pressure-gradient operator with its eigenfield.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub sigma1: f64,
    /// Instability threshold in `beta = c^2/D^2`: `1 / sigma1`.
    pub beta_star: f64,
    /// Eigenfield normalized so the face-difference Dirichlet energy is 1.
    pub eigenfield: VectorField,
    pub iterations: usize,
    /// Relative change of the eigenvalue estimate at exit.
    pub residual: f64,
}

/// Linearized classification of the zero steady state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroStateClass {
    Stable,
    Neutral,
    Unstable,
}

/// Positive steady amplitude of the diffusionless 1D dynamics at one node.
///
/// For `gamma = 1` this is `sqrt(c B - 1)` when `c B > 1` and zero
/// otherwise. For `gamma > 1` it is the unique positive root of
/// `c^2 B^2 / (1+m^2)^2 = m^(2(gamma-1))`, found by bisection on the
/// strictly decreasing `g(m) = c^2 B^2 - m^(2(gamma-1)) (1+m^2)^2`.
pub fn steady_amplitude_1d(bval: f64, params: &ModelParams) -> f64 {
    assert!(bval >= 0.0, "cumulative source must be nonnegative");
    if params.gamma == 1.0 {
        let cb = params.c * bval;
        return if cb > 1.0 { (cb - 1.0).sqrt() } else { 0.0 };
    }
    if bval == 0.0 {
        return 0.0;
    }
    let c2b2 = (params.c * bval) * (params.c * bval);
    let g = |m: f64| c2b2 - m.powf(2.0 * (params.gamma - 1.0)) * (1.0 + m * m).powi(2);
    let mut hi = 1.0;
    let mut guard = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        guard += 1;
        assert!(guard < 2000, "bisection bracket failed to close");
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Build a diffusionless stationary pattern for `gamma > 1`:
/// the stationary pressure from the convex minimization, then
/// `m0 = sign * c^(1/(gamma-1)) |grad p0|^(1/(gamma-1)) * (grad p0 / |grad p0|)`,
/// continuously extended by zero where the gradient vanishes. The
/// magnitude-direction form avoids the 0/0 of the exponent for `gamma > 2`.
pub fn construct_pattern_d0(
    pattern: &PatternSpec,
    params: &ModelParams,
    s: &ScalarField,
) -> Result<(VectorField, PressureSolve)> {
    let grid = s.grid();
    let solve = solve_stationary_pressure_d0(pattern, params, s, 1e-9)?;
    let p0 = solve.pressure;
    let expo = 1.0 / (params.gamma - 1.0);
    let cpow = params.c.powf(expo);
    let nn = grid.node_count();
    let mag = p0.gradp.magnitude();
    let mut comps = Vec::with_capacity(grid.dim());
    for k in 0..grid.dim() {
        let g = p0.gradp.component(k).values();
        let vals: Vec<f64> = (0..nn)
            .map(|i| {
                let gm = mag.values()[i];
                if gm == 0.0 || pattern.signs[i] == 0 {
                    0.0
                } else {
                    pattern.signs[i] as f64 * cpow * gm.powf(expo) * (g[i] / gm)
                }
            })
            .collect();
        comps.push(ScalarField::from_values(grid, vals));
    }
    Ok((VectorField::from_components(comps), p0))
}

fn stiffness_norm(n: &VectorField) -> f64 {
    n.components()
        .iter()
        .map(dirichlet_face_energy)
        .sum::<f64>()
        .sqrt()
}

fn rank_one_apply(gradp: &VectorField, n: &VectorField) -> VectorField {
    let dot = n.dot(gradp);
    let grid = n.grid();
    VectorField::from_components(
        (0..grid.dim())
            .map(|k| {
                let g = gradp.component(k).values();
                ScalarField::from_values(
                    grid,
                    (0..grid.node_count())
                        .map(|i| dot.values()[i] * g[i])
                        .collect(),
                )
            })
            .collect(),
    )
}

fn rayleigh_quotient(gradp: &VectorField, n: &VectorField) -> f64 {
    let num = l2_norm(&n.dot(gradp)).powi(2);
    let den: f64 = n.components().iter().map(dirichlet_face_energy).sum();
    num / den
}

/// Leading eigenvalue `sigma1 = sup integral |grad p0 . n|^2 / integral |grad n|^2`
/// by power iteration on the generalized problem: repeatedly solve the
/// componentwise stiffness system `-lap w = (grad p0 (x) grad p0) n` and
/// renormalize in the stiffness norm. Deterministic seeded start; stops when
/// the relative eigenvalue change drops below `tol`.
pub fn sigma1(p0: &PressureSolve, tol: f64) -> Result<SpectralResult> {
    let grid = p0.p.grid();
    let nn = grid.node_count();
    if p0.gradp.l2_norm() <= 1e-14 {
        return Err(Error::DegenerateSpectrum);
    }

    let mut rng = SplitMix64::new(0x5153_0001);
    let mut n = VectorField::from_components(
        (0..grid.dim())
            .map(|_| {
                ScalarField::from_values(grid, (0..nn).map(|_| rng.next_symmetric(1.0)).collect())
            })
            .collect(),
    );
    let norm = stiffness_norm(&n);
    n = n.scale(1.0 / norm);

    let inner_tol = (tol * 1e-2).clamp(1e-14, 1e-10);
    let diag = vec![2.0 * grid.dim() as f64 / (grid.h() * grid.h()); nn];
    let mut sigma = rayleigh_quotient(&p0.gradp, &n);
    let max_iter = 10_000;
    for it in 0..max_iter {
        let rhs = rank_one_apply(&p0.gradp, &n);
        let mut comps = Vec::with_capacity(grid.dim());
        for k in 0..grid.dim() {
            let apply = |x: &[f64], y: &mut [f64]| {
                laplacian_raw(grid, x, y);
                for v in y.iter_mut() {
                    *v = -*v;
                }
            };
            let sol = pcg(
                apply,
                &diag,
                rhs.component(k).values(),
                Some(n.component(k).values()),
                inner_tol,
                50 * nn,
            )?;
            comps.push(ScalarField::from_values(grid, sol.x));
        }
        let w = VectorField::from_components(comps);
        let norm = stiffness_norm(&w);
        if norm == 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        n = w.scale(1.0 / norm);
        let sigma_new = rayleigh_quotient(&p0.gradp, &n);
        let change = (sigma_new - sigma).abs() / sigma_new.abs().max(1e-300);
        sigma = sigma_new;
        if sigma <= 1e-14 {
            return Err(Error::DegenerateSpectrum);
        }
        if change <= tol || it + 1 == max_iter {
            // The iteration cap is a valid exit; `residual` reports the
            // achieved eigenvalue change either way.
            return Ok(SpectralResult {
                sigma1: sigma,
                beta_star: 1.0 / sigma,
                eigenfield: n,
                iterations: it + 1,
                residual: change,
            });
        }
    }
    unreachable!("power iteration always exits through the loop")
}

/// Compare `beta` against the threshold `1/sigma1` with a relative deadband
/// of 1e-9 for the neutral case.
pub fn classify_zero_state(beta: f64, sr: &SpectralResult) -> ZeroStateClass {
    let band = 1e-9 * sr.beta_star;
    if (beta - sr.beta_star).abs() <= band {
        ZeroStateClass::Neutral
    } else if beta < sr.beta_star {
        ZeroStateClass::Stable
    } else {
        ZeroStateClass::Unstable
    }
}

/// Evolve the zero-state linearization from a seeded random perturbation to
/// horizon `t_end` and return the fitted exponential rate of its L2 norm.
/// The activation strength is derived from `beta` (`c = sqrt(beta) D`).
pub fn measure_growth_rate(
    beta: f64,
    p0: &PressureSolve,
    params: &ModelParams,
    t_end: f64,
) -> Result<f64> {
    assert!(params.d > 0.0, "growth measurement needs D > 0");
    assert!(beta >= 0.0);
    let grid = p0.p.grid();
    let run_params = ModelParams {
        c: (beta.max(1e-300)).sqrt() * params.d,
        ..*params
    };

    let mut rng = SplitMix64::new(0x6772_6f77);
    let mut n = VectorField::from_components(
        (0..grid.dim())
            .map(|_| {
                ScalarField::from_values(
                    grid,
                    (0..grid.node_count())
                        .map(|_| rng.next_symmetric(1.0))
                        .collect(),
                )
            })
            .collect(),
    );
    let norm = n.l2_norm();
    n = n.scale(1.0 / norm);

    // Step small enough that the implicit damping bias stays inside the
    // 5 percent window and the explicit rank-one term stays stable.
    let d2 = params.d * params.d;
    let maxg2 = p0
        .gradp
        .magnitude()
        .values()
        .iter()
        .fold(0.0f64, |a, b| a.max(b * b));
    let pi = std::f64::consts::PI;
    let lam1 = grid.dim() as f64 * pi * pi;
    let mut dt = params.dt_max;
    dt = dt.min(0.05 / (d2 * lam1));
    if beta * maxg2 > 0.0 {
        dt = dt.min(0.9 / (d2 * beta * maxg2));
    }
    dt = dt.min(t_end / 50.0);

    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut norms = vec![n.l2_norm()];
    while t < t_end - 1e-12 {
        let step_dt = dt.min(t_end - t);
        n = linearized_zero_step(&n, p0, &run_params, step_dt)?;
        t += step_dt;
        times.push(t);
        norms.push(n.l2_norm());
    }
    decay_rate_from_series(&times, &norms)
}

/// Trajectories of the pattern linearization.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `integral |n|^2` per row.
    pub n_sq: Vec<f64>,
    /// `integral |grad q|^2` per row.
    pub gradq_sq: Vec<f64>,
    pub ratio_n: f64,
    pub ratio_gradq: f64,
}

/// Evolve the linearization around a diffusionless pattern `(m0, p0)` from
/// `n_i` to horizon `t_end` and report the decay of `integral |n|^2` and
/// `integral |grad q|^2`.
///
/// Rejects initial data violating the stability hypotheses: `n_i` must
/// vanish wherever `grad p0` does, and the pattern may not have an active
/// zero region (nodes with `m0 = 0` but `grad p0 != 0`).
pub fn verify_pattern_stability(
    m0: &VectorField,
    p0: &PressureSolve,
    n_i: &VectorField,
    params: &ModelParams,
    t_end: f64,
) -> Result<StabilityReport> {
    let grid = m0.grid();
    let gmag = p0.gradp.magnitude();
    let mmag = m0.magnitude();
    let nmag = n_i.magnitude();
    let gmax = gmag.values().iter().fold(0.0f64, |a, b| a.max(*b));
    let nmax = nmag.values().iter().fold(0.0f64, |a, b| a.max(*b));
    let degenerate = |g: f64| g <= 1e-13 * gmax;

    let mut a0_nodes = 0usize;
    for i in 0..grid.node_count() {
        if degenerate(gmag.values()[i]) {
            if nmag.values()[i] > 1e-12 * nmax {
                return Err(Error::HypothesisViolation(
                    "perturbation must vanish where the pressure gradient does".into(),
                ));
            }
        } else if mmag.values()[i] == 0.0 {
            a0_nodes += 1;
        }
    }
    if a0_nodes > 0 {
        return Err(Error::HypothesisViolation(format!(
            "pattern has {a0_nodes} active nodes with m0 = 0 (nonzero inactive region)"
        )));
    }

    let c2 = params.c * params.c;
    // Explicit relaxation rates scale with c^2 |grad p0|^2 and, through the
    // metabolic cross term, with 2(gamma-1); bound the step accordingly.
    let stiff = c2 * gmax * gmax * (2.0 * (params.gamma - 1.0)).max(1.0);
    let mut dt = 0.5 / stiff.max(1e-300);
    dt = dt.min(t_end / 12.0);

    let mut n = n_i.clone();
    let mut t = 0.0;
    let mut times = Vec::new();
    let mut n_sq = Vec::new();
    let mut gradq_sq = Vec::new();
    let push = |t: f64,
                n: &VectorField,
                q: Option<&PressureSolve>,
                times: &mut Vec<f64>,
                n_sq: &mut Vec<f64>,
                gq: &mut Vec<f64>| {
        times.push(t);
        n_sq.push(n.l2_norm().powi(2));
        gq.push(match q {
            Some(q) => dirichlet_face_energy(&q.p),
            None => 0.0,
        });
    };

    // Initial q from the initial perturbation.
    let (_, q0) = linearized_pattern_step(&n, m0, p0, params, 0.0)?;
    push(0.0, &n, Some(&q0), &mut times, &mut n_sq, &mut gradq_sq);

    while t < t_end - 1e-12 {
        let step_dt = dt.min(t_end - t);
        let (n_next, q) = linearized_pattern_step(&n, m0, p0, params, step_dt)?;
        n = n_next;
        t += step_dt;
        push(t, &n, Some(&q), &mut times, &mut n_sq, &mut gradq_sq);
    }

    let ratio = |series: &[f64]| {
        let first = series.first().copied().unwrap_or(0.0);
        let last = series.last().copied().unwrap_or(0.0);
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    };
    Ok(StabilityReport {
        ratio_n: ratio(&n_sq),
        ratio_gradq: ratio(&gradq_sq),
        times,
        n_sq,
        gradq_sq,
    })
}
