//! The Lyapunov energy of the coupled system and its diagnostics.
//!
//! `E(m) = 1/2 integral ( D^2 |grad m|^2 + |m|^(2 gamma)/gamma
//!          + c^2 |m . grad p|^2 + c^2 |grad p|^2 )`,
//! where `p` solves the pressure equation for `m`. Along exact solutions
//! `dE/dt = -integral (dm/dt)^2`; the steppers enforce the discrete analogue
//! by step rejection and the residual below measures its defect.

use crate::elliptic::PressureSolve;
use crate::error::{Error, Result};
use crate::field::{dirichlet_face_energy_vec, VectorField};
use crate::mollifier::{positivity_check, KernelStencil};
use crate::params::ModelParams;

/// The four nonnegative energy summands and their total.
#[derive(Clone, Copy, Debug, Default)]
pub struct EnergyBreakdown {
    /// `1/2 D^2 integral |grad m|^2` (face differences per component).
    pub diffusion: f64,
    /// `1/(2 gamma) integral |m|^(2 gamma)`.
    pub metabolic: f64,
    /// `1/2 c^2 integral |m . grad p|^2` (nodal quadrature).
    pub pumping: f64,
    /// `1/2 c^2 integral |grad p|^2` (nodal quadrature).
    pub pressure: f64,
    pub total: f64,
}

fn diffusion_term(m: &VectorField, params: &ModelParams) -> f64 {
    if params.d == 0.0 {
        return 0.0;
    }
    // Face differences, not central ones: this is the exact quadratic form
    // of the stencil Laplacian the steppers apply, so the implicit diffusion
    // step dissipates this summand identically. A central-difference version
    // agrees on smooth fields but misses the highest modes of rough data and
    // breaks the dissipation bookkeeping there.
    0.5 * params.d * params.d * dirichlet_face_energy_vec(m)
}

fn metabolic_term(m: &VectorField, params: &ModelParams) -> f64 {
    let grid = m.grid();
    let mut sum = 0.0;
    for i in 0..grid.node_count() {
        let mut mag2 = 0.0;
        for c in m.components() {
            let v = c.values()[i];
            mag2 += v * v;
        }
        sum += mag2.powf(params.gamma);
    }
    grid.node_weight() * sum / (2.0 * params.gamma)
}

/// Evaluate the energy of a state `(m, p)`; `p` must be the pressure solve
/// for `m` for the dissipation identity to be meaningful.
///
/// The pumping and pressure summands use the nodal quadrature with the
/// central-difference gradient, so the pumping summand is the exact
/// potential of the nodal pumping term the steppers apply; the dissipation
/// defect of a step then stays first order in `dt`.
pub fn energy(m: &VectorField, p: &PressureSolve, params: &ModelParams) -> EnergyBreakdown {
    let c2 = params.c * params.c;
    let diffusion = diffusion_term(m, params);
    let metabolic = metabolic_term(m, params);
    let pumping = 0.5 * c2 * crate::field::l2_norm(&m.dot(&p.gradp)).powi(2);
    let pressure = 0.5 * c2 * p.gradp.l2_norm().powi(2);
    EnergyBreakdown {
        diffusion,
        metabolic,
        pumping,
        pressure,
        total: diffusion + metabolic + pumping + pressure,
    }
}

/// The modified energy of the mollified system: the pumping summand is
/// `1/2 c^2 integral (m . grad p) [(m . grad p) * eta_eps]`, which equals
/// `c^2/2 * positivity_check(m . grad p, kernel)` and may be negative only
/// at rounding scale.
pub fn energy_mollified(
    m: &VectorField,
    p: &PressureSolve,
    params: &ModelParams,
    kernel: &KernelStencil,
) -> EnergyBreakdown {
    let c2 = params.c * params.c;
    let diffusion = diffusion_term(m, params);
    let metabolic = metabolic_term(m, params);
    let u = m.dot(&p.gradp);
    let pumping = 0.5 * c2 * positivity_check(&u, kernel);
    let pressure = 0.5 * c2 * p.gradp.l2_norm().powi(2);
    EnergyBreakdown {
        diffusion,
        metabolic,
        pumping,
        pressure,
        total: diffusion + metabolic + pumping + pressure,
    }
}

/// Maximum defect of the discrete dissipation identity over consecutive
/// accepted trace rows: `|dE + dt ||dm/dt||^2| / (|dE| + tiny)`.
pub fn dissipation_residual(trace: &crate::dynamics::SimTrace) -> Result<f64> {
    let accepted: Vec<_> = trace.rows.iter().filter(|r| r.accepted).collect();
    if accepted.len() < 2 {
        return Err(Error::DegenerateTrace(
            "need at least two accepted rows".into(),
        ));
    }
    let tiny = 1e-30;
    let mut worst: f64 = 0.0;
    for pair in accepted.windows(2) {
        let dt = pair[1].t - pair[0].t;
        let de = pair[1].energy.total - pair[0].energy.total;
        let dissipated = dt * pair[1].dtm_norm * pair[1].dtm_norm;
        let defect = (de + dissipated).abs() / (de.abs() + tiny);
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// Least-squares slope of `log ||m||` against `t` over the trailing half of
/// the accepted rows. Requires at least 10 rows with positive norm.
pub fn decay_rate_estimate(trace: &crate::dynamics::SimTrace) -> Result<f64> {
    let (t, norm): (Vec<f64>, Vec<f64>) = trace
        .rows
        .iter()
        .filter(|r| r.accepted)
        .map(|r| (r.t, r.m_norm))
        .unzip();
    decay_rate_from_series(&t, &norm)
}

/// [`decay_rate_estimate`] on a raw `(t, norm)` series.
pub fn decay_rate_from_series(t: &[f64], norm: &[f64]) -> Result<f64> {
    if t.len() < 10 {
        return Err(Error::DegenerateTrace(format!(
            "need at least 10 rows, got {}",
            t.len()
        )));
    }
    let start = t.len() / 2;
    let (tt, nn) = (&t[start..], &norm[start..]);
    if nn.iter().any(|n| *n <= 0.0) {
        return Err(Error::DegenerateTrace("norm reached zero".into()));
    }
    let k = tt.len() as f64;
    let mean_t = tt.iter().sum::<f64>() / k;
    let mean_l = nn.iter().map(|n| n.ln()).sum::<f64>() / k;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in tt.iter().zip(nn) {
        num += (x - mean_t) * (y.ln() - mean_l);
        den += (x - mean_t) * (x - mean_t);
    }
    if den == 0.0 {
        return Err(Error::DegenerateTrace("times do not advance".into()));
    }
    Ok(num / den)
}
