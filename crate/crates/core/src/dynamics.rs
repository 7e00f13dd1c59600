//! Time integration of the conductance equation and its variants.
//!
//! One step is semi-implicit: solve the pressure for the current `m`, then
//! advance each component through the SPD system
//! `(1 + dt |m^k|^(2(gamma-1))) m^{k+1} - dt D^2 lap m^{k+1} = m^k + dt pumping(m^k)`.
//! Diffusion and the frozen-coefficient decay are implicit (unconditionally
//! stable); the pumping term is explicit and guarded by energy-based step
//! rejection: a step that raises the variant's Lyapunov functional by more
//! than a rounding allowance is retried with half the step.

use crate::elliptic::{
    apply_anisotropic, solve_pressure_mollified_with_kernel, solve_pressure_with_guess,
    PressureSolve,
};
use crate::energy::{energy, energy_mollified, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::field::{gradient, laplacian_raw, total_variation_1d, Grid, ScalarField, VectorField};
use crate::linalg::pcg;
use crate::mollifier::{convolve_zero_extended, KernelStencil};
use crate::params::ModelParams;

/// How the steppers solve the pressure equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PressureBc {
    /// Assembled anisotropic operator with homogeneous Dirichlet data.
    #[default]
    FemDirichlet,
    /// 1D closed form with `dp/dx(0) = 0`, `p(1) = 0`.
    Mixed1d,
}

/// Which system the stepper integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// The full nonlinear system.
    Standard,
    /// Pumping with reversed sign; every trajectory decays to zero.
    SignFlipped,
    /// Pumping coupling smoothed by the heat-kernel mollifier.
    Mollified,
}

/// One simulation state: time, conductance, its pressure solve, the current
/// step size and the energy of the state.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub m: VectorField,
    pub p: PressureSolve,
    pub dt: f64,
    pub energy: EnergyBreakdown,
}

/// A rejected step attempt, kept for the trace.
#[derive(Clone, Copy, Debug)]
pub struct RejectedStep {
    pub dt: f64,
    pub energy_total: f64,
    pub m_norm: f64,
}

/// Outcome of one accepted step, with any rejected attempts along the way.
pub struct StepOutcome {
    pub state: SimState,
    pub rejected: Vec<RejectedStep>,
}

/// One row of a simulation trace.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub m_norm: f64,
    /// Realized `||(m_{k+1} - m_k) / dt||_{L2}`; zero on the initial row.
    pub dtm_norm: f64,
    /// Total variation of the first component (1D runs only).
    pub tv: Option<f64>,
    pub dt: f64,
    pub accepted: bool,
}

/// Time-ordered rows; accepted rows have nonincreasing total energy for the
/// Standard and Mollified variants.
#[derive(Clone, Debug, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

fn solve_bc(
    m: &VectorField,
    s: &ScalarField,
    params: &ModelParams,
    bc: PressureBc,
    guess: Option<&ScalarField>,
) -> Result<PressureSolve> {
    match bc {
        PressureBc::FemDirichlet => solve_pressure_with_guess(m, s, params.cg_tol, guess),
        PressureBc::Mixed1d => crate::elliptic::solve_pressure_1d(
            m.component(0),
            s,
            crate::elliptic::Bc1d::MixedNeumannDirichlet,
        ),
    }
}

impl SimState {
    /// Solve the pressure for `m` and evaluate the energy; `dt` starts at `dt0`.
    pub fn init(m: VectorField, s: &ScalarField, params: &ModelParams) -> Result<Self> {
        Self::init_with_bc(m, s, params, PressureBc::FemDirichlet)
    }

    /// [`SimState::init`] with an explicit pressure boundary condition.
    pub fn init_with_bc(
        m: VectorField,
        s: &ScalarField,
        params: &ModelParams,
        bc: PressureBc,
    ) -> Result<Self> {
        let p = solve_bc(&m, s, params, bc, None)?;
        let e = energy(&m, &p, params);
        Ok(SimState {
            t: 0.0,
            m,
            p,
            dt: params.dt0,
            energy: e,
        })
    }

    /// Mollified analogue of [`SimState::init`].
    pub fn init_mollified(
        m: VectorField,
        s: &ScalarField,
        params: &ModelParams,
        kernel: &KernelStencil,
    ) -> Result<Self> {
        let p = solve_pressure_mollified_with_kernel(&m, s, kernel, params.cg_tol, None)?;
        let e = energy_mollified(&m, &p, params, kernel);
        Ok(SimState {
            t: 0.0,
            m,
            p,
            dt: params.dt0,
            energy: e,
        })
    }
}

/// The pumping term `c^2 (m . grad p) grad p` and the metabolic term
/// `|m|^(2(gamma-1)) m`, both nodal.
pub fn reaction_terms(
    m: &VectorField,
    gradp: &VectorField,
    params: &ModelParams,
) -> (VectorField, VectorField) {
    let grid = m.grid();
    let c2 = params.c * params.c;
    let mdotg = m.dot(gradp);
    let mag = m.magnitude();
    let mut pumping = Vec::with_capacity(grid.dim());
    let mut metabolic = Vec::with_capacity(grid.dim());
    for k in 0..grid.dim() {
        let mut pv = vec![0.0; grid.node_count()];
        let mut wv = vec![0.0; grid.node_count()];
        let g = gradp.component(k).values();
        let mc = m.component(k).values();
        for i in 0..grid.node_count() {
            pv[i] = c2 * mdotg.values()[i] * g[i];
            wv[i] = params.metabolic_coeff(mag.values()[i]) * mc[i];
        }
        pumping.push(ScalarField::from_values(grid, pv));
        metabolic.push(ScalarField::from_values(grid, wv));
    }
    (
        VectorField::from_components(pumping),
        VectorField::from_components(metabolic),
    )
}

/// Advance `rhs = m^k + dt * pumping` through the implicit part:
/// `(1 + dt w) x - dt D^2 lap x = rhs` per component, with
/// `w = |m^k|^(2(gamma-1))`. `D = 0` reduces to a pointwise division.
fn implicit_update(
    m: &VectorField,
    pump: &VectorField,
    pump_sign: f64,
    params: &ModelParams,
    dt: f64,
) -> Result<VectorField> {
    let grid = m.grid();
    let nn = grid.node_count();
    let mag = m.magnitude();
    let w: Vec<f64> = mag
        .values()
        .iter()
        .map(|v| params.metabolic_coeff(*v))
        .collect();

    // States this deep in the attractor of zero are zero; flushing avoids
    // denormal arithmetic starving the inner solves.
    const FLUSH: f64 = 1e-150;

    let mut comps = Vec::with_capacity(grid.dim());
    if params.d == 0.0 {
        for k in 0..grid.dim() {
            let mut x = vec![0.0; nn];
            for i in 0..nn {
                let rhs =
                    m.component(k).values()[i] + dt * pump_sign * pump.component(k).values()[i];
                x[i] = if rhs.abs() < FLUSH {
                    0.0
                } else {
                    rhs / (1.0 + dt * w[i])
                };
            }
            comps.push(ScalarField::from_values(grid, x));
        }
        return Ok(VectorField::from_components(comps));
    }

    let dd2 = dt * params.d * params.d;
    let diag: Vec<f64> = w
        .iter()
        .map(|wi| 1.0 + dt * wi + dd2 * 2.0 * grid.dim() as f64 / (grid.h() * grid.h()))
        .collect();
    for k in 0..grid.dim() {
        let apply = |x: &[f64], y: &mut [f64]| {
            let mut tmp = vec![0.0; x.len()];
            laplacian_raw(grid, x, &mut tmp);
            for i in 0..x.len() {
                y[i] = (1.0 + dt * w[i]) * x[i] - dd2 * tmp[i];
            }
        };
        let rhs: Vec<f64> = (0..nn)
            .map(|i| m.component(k).values()[i] + dt * pump_sign * pump.component(k).values()[i])
            .collect();
        if rhs.iter().all(|v| v.abs() < FLUSH) {
            comps.push(ScalarField::zeros(grid));
            continue;
        }
        let sol = pcg(
            apply,
            &diag,
            &rhs,
            Some(m.component(k).values()),
            params.cg_tol,
            50 * nn,
        )?;
        comps.push(ScalarField::from_values(grid, sol.x));
    }
    Ok(VectorField::from_components(comps))
}

const DT_GROWTH: f64 = 1.2;
const ENERGY_SLACK: f64 = 1e-12;

fn accept_energy(old: f64, new: f64) -> bool {
    new <= old + ENERGY_SLACK * old.abs() + 1e-300
}

fn step_attempt_loop(
    state: &SimState,
    params: &ModelParams,
    mut attempt: impl FnMut(f64) -> Result<(VectorField, PressureSolve, EnergyBreakdown, bool)>,
) -> Result<StepOutcome> {
    let mut dt = state.dt;
    let dt_floor = 1e-12 * params.dt0;
    let mut rejected = Vec::new();
    loop {
        let (m, p, e, ok) = attempt(dt)?;
        if ok {
            let next_dt = (dt * DT_GROWTH).min(params.dt_max);
            return Ok(StepOutcome {
                state: SimState {
                    t: state.t + dt,
                    m,
                    p,
                    dt: next_dt,
                    energy: e,
                },
                rejected,
            });
        }
        rejected.push(RejectedStep {
            dt,
            energy_total: e.total,
            m_norm: m.l2_norm(),
        });
        dt *= 0.5;
        if dt < dt_floor {
            return Err(Error::StepCollapse { t: state.t, dt });
        }
    }
}

/// One accepted step of the full nonlinear system. The energy of the new
/// state may not exceed the old one beyond a 1e-12 relative allowance;
/// otherwise the step is rejected and retried with half the step size, down
/// to a hard floor of `1e-12 * dt0`.
pub fn step(state: &SimState, s: &ScalarField, params: &ModelParams) -> Result<StepOutcome> {
    step_with_bc(state, s, params, PressureBc::FemDirichlet)
}

/// [`step`] with an explicit pressure boundary condition.
pub fn step_with_bc(
    state: &SimState,
    s: &ScalarField,
    params: &ModelParams,
    bc: PressureBc,
) -> Result<StepOutcome> {
    let (pump, _) = reaction_terms(&state.m, &state.p.gradp, params);
    step_attempt_loop(state, params, |dt| {
        let m_new = implicit_update(&state.m, &pump, 1.0, params, dt)?;
        let p_new = solve_bc(&m_new, s, params, bc, Some(&state.p.p))?;
        let e_new = energy(&m_new, &p_new, params);
        let ok = accept_energy(state.energy.total, e_new.total);
        Ok((m_new, p_new, e_new, ok))
    })
}

/// One accepted step with the pumping sign reversed (everything decays).
/// The monitored Lyapunov functional is the L2 norm of `m`.
pub fn step_sign_flipped(
    state: &SimState,
    s: &ScalarField,
    params: &ModelParams,
) -> Result<StepOutcome> {
    step_sign_flipped_with_bc(state, s, params, PressureBc::FemDirichlet)
}

/// [`step_sign_flipped`] with an explicit pressure boundary condition.
pub fn step_sign_flipped_with_bc(
    state: &SimState,
    s: &ScalarField,
    params: &ModelParams,
    bc: PressureBc,
) -> Result<StepOutcome> {
    let (pump, _) = reaction_terms(&state.m, &state.p.gradp, params);
    let norm_old = state.m.l2_norm();
    step_attempt_loop(state, params, |dt| {
        let m_new = implicit_update(&state.m, &pump, -1.0, params, dt)?;
        let p_new = solve_bc(&m_new, s, params, bc, Some(&state.p.p))?;
        let e_new = energy(&m_new, &p_new, params);
        let ok = m_new.l2_norm() <= norm_old * (1.0 + ENERGY_SLACK) + 1e-300;
        Ok((m_new, p_new, e_new, ok))
    })
}

/// One accepted step of the mollified system: mollified pressure solve,
/// pumping `c^2 [(m . grad p) * eta] grad p`, and the modified energy as the
/// acceptance monitor.
pub fn step_mollified(
    state: &SimState,
    s: &ScalarField,
    params: &ModelParams,
    kernel: &KernelStencil,
) -> Result<StepOutcome> {
    let grid = state.m.grid();
    let c2 = params.c * params.c;
    let u = state.m.dot(&state.p.gradp);
    let smoothed = convolve_zero_extended(&u, kernel);
    let mut comps = Vec::with_capacity(grid.dim());
    for k in 0..grid.dim() {
        let g = state.p.gradp.component(k).values();
        let vals: Vec<f64> = (0..grid.node_count())
            .map(|i| c2 * smoothed.values()[i] * g[i])
            .collect();
        comps.push(ScalarField::from_values(grid, vals));
    }
    let pump = VectorField::from_components(comps);
    step_attempt_loop(state, params, |dt| {
        let m_new = implicit_update(&state.m, &pump, 1.0, params, dt)?;
        let p_new = solve_pressure_mollified_with_kernel(
            &m_new,
            s,
            kernel,
            params.cg_tol,
            Some(&state.p.p),
        )?;
        let e_new = energy_mollified(&m_new, &p_new, params, kernel);
        let ok = accept_energy(state.energy.total, e_new.total);
        Ok((m_new, p_new, e_new, ok))
    })
}

fn trace_row(state: &SimState, dtm_norm: f64, dt: f64, accepted: bool) -> TraceRow {
    let tv = if state.m.grid().dim() == 1 {
        total_variation_1d(state.m.component(0)).ok()
    } else {
        None
    };
    TraceRow {
        t: state.t,
        energy: state.energy,
        m_norm: state.m.l2_norm(),
        dtm_norm,
        tv,
        dt,
        accepted,
    }
}

const MAX_STEPS: usize = 5_000_000;

/// Integrate from `m_i` until `t_end` or until the realized `||dm/dt||_{L2}`
/// falls below `steady_tol`. Returns the final state and the full trace.
pub fn simulate(
    m_i: &VectorField,
    s: &ScalarField,
    params: &ModelParams,
    variant: Variant,
) -> Result<(SimState, SimTrace)> {
    simulate_with_bc(m_i, s, params, variant, PressureBc::FemDirichlet)
}

/// [`simulate`] with an explicit pressure boundary condition. The mixed 1D
/// closed form pairs with the Standard and SignFlipped variants only.
pub fn simulate_with_bc(
    m_i: &VectorField,
    s: &ScalarField,
    params: &ModelParams,
    variant: Variant,
    bc: PressureBc,
) -> Result<(SimState, SimTrace)> {
    params.validate()?;
    if bc == PressureBc::Mixed1d {
        if m_i.grid().dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: m_i.grid().dim(),
            });
        }
        if variant == Variant::Mollified {
            return Err(Error::InvalidParameter(
                "the mollified variant uses the assembled Dirichlet solve".into(),
            ));
        }
    }
    let kernel = match variant {
        Variant::Mollified => {
            if params.epsilon <= 0.0 {
                return Err(Error::InvalidParameter(
                    "the mollified variant needs epsilon > 0".into(),
                ));
            }
            Some(KernelStencil::heat_kernel(params.epsilon, m_i.grid()))
        }
        _ => None,
    };

    let mut state = match &kernel {
        Some(k) => SimState::init_mollified(m_i.clone(), s, params, k)?,
        None => SimState::init_with_bc(m_i.clone(), s, params, bc)?,
    };
    let mut trace = SimTrace::default();
    trace.rows.push(trace_row(&state, 0.0, state.dt, true));

    for _ in 0..MAX_STEPS {
        if state.t >= params.t_end * (1.0 - 1e-12) {
            return Ok((state, trace));
        }
        // Land exactly on the horizon.
        let mut stepping = state.clone();
        stepping.dt = stepping.dt.min(params.t_end - state.t);
        let out = match variant {
            Variant::Standard => step_with_bc(&stepping, s, params, bc)?,
            Variant::SignFlipped => step_sign_flipped_with_bc(&stepping, s, params, bc)?,
            Variant::Mollified => step_mollified(&stepping, s, params, kernel.as_ref().unwrap())?,
        };
        for r in &out.rejected {
            trace.rows.push(TraceRow {
                t: state.t,
                energy: EnergyBreakdown {
                    total: r.energy_total,
                    ..Default::default()
                },
                m_norm: r.m_norm,
                dtm_norm: f64::NAN,
                tv: None,
                dt: r.dt,
                accepted: false,
            });
        }
        let dt_used = out.state.t - state.t;
        let dtm = out.state.m.axpy(-1.0, &state.m).l2_norm() / dt_used;
        state = out.state;
        trace.rows.push(trace_row(&state, dtm, dt_used, true));
        if dtm < params.steady_tol {
            return Ok((state, trace));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_STEPS,
        residual: f64::NAN,
    })
}

/// Right-hand side of the diffusionless 1D dynamics at one node:
/// `(c^2 B^2 / (1+m^2)^2 - |m|^(2(gamma-1))) m`.
pub fn ode_rhs_d0_1d(mval: f64, bval: f64, params: &ModelParams) -> f64 {
    let c2b2 = (params.c * bval) * (params.c * bval);
    let denom = (1.0 + mval * mval).powi(2);
    (c2b2 / denom - params.metabolic_coeff(mval.abs())) * mval
}

/// Integrate the decoupled node ODE family with classical fourth-order
/// Runge-Kutta at fixed step `params.dt0`, using the mixed-boundary closed
/// form `dp/dx = -B/(1+m^2)`. Diffusion is ignored (`D = 0`).
pub fn run_d0_1d(
    m_i: &ScalarField,
    s: &ScalarField,
    params: &ModelParams,
    t_end: f64,
) -> Result<ScalarField> {
    if m_i.grid().dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: m_i.grid().dim(),
        });
    }
    let cum = crate::elliptic::cumulative_source(s)?;
    let b = cum.b.values();
    let mut m = m_i.values().to_vec();
    let mut t = 0.0;
    while t < t_end - 1e-12 {
        let dt = params.dt0.min(t_end - t);
        for (mi, bi) in m.iter_mut().zip(b) {
            let k1 = ode_rhs_d0_1d(*mi, *bi, params);
            let k2 = ode_rhs_d0_1d(*mi + 0.5 * dt * k1, *bi, params);
            let k3 = ode_rhs_d0_1d(*mi + 0.5 * dt * k2, *bi, params);
            let k4 = ode_rhs_d0_1d(*mi + dt * k3, *bi, params);
            *mi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t += dt;
    }
    Ok(ScalarField::from_values(m_i.grid(), m))
}

/// One semi-implicit step of the linearization around the zero state:
/// `dn/dt = D^2 (lap n + beta (grad p0 . n) grad p0)` with the Laplacian
/// implicit and the rank-one term explicit.
pub fn linearized_zero_step(
    n: &VectorField,
    p0: &PressureSolve,
    params: &ModelParams,
    dt: f64,
) -> Result<VectorField> {
    assert!(params.d > 0.0, "the zero-state linearization needs D > 0");
    let grid = n.grid();
    let nn = grid.node_count();
    let beta = params.beta();
    let dd2 = dt * params.d * params.d;
    let ndotg = n.dot(&p0.gradp);
    let diag: Vec<f64> = (0..nn)
        .map(|_| 1.0 + dd2 * 2.0 * grid.dim() as f64 / (grid.h() * grid.h()))
        .collect();
    let mut comps = Vec::with_capacity(grid.dim());
    for k in 0..grid.dim() {
        let g = p0.gradp.component(k).values();
        let rhs: Vec<f64> = (0..nn)
            .map(|i| n.component(k).values()[i] + dd2 * beta * ndotg.values()[i] * g[i])
            .collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            let mut tmp = vec![0.0; x.len()];
            laplacian_raw(grid, x, &mut tmp);
            for i in 0..x.len() {
                y[i] = x[i] - dd2 * tmp[i];
            }
        };
        let sol = pcg(
            apply,
            &diag,
            &rhs,
            Some(n.component(k).values()),
            params.cg_tol,
            50 * nn,
        )?;
        comps.push(ScalarField::from_values(grid, sol.x));
    }
    Ok(VectorField::from_components(comps))
}

/// Variational source term of the linearized pressure equation around a
/// pattern: the assembled vector of
/// `-integral grad phi . [m0 (n . grad p0) + n (m0 . grad p0)] dx`.
pub fn linearized_pressure_rhs(
    m0: &VectorField,
    n: &VectorField,
    p0: &PressureSolve,
) -> ScalarField {
    let grid = m0.grid();
    let nno = grid.node_count();
    let h = grid.h();
    let ngrid = grid.n();
    let mut out = vec![0.0; nno];
    let p0v = p0.p.values();
    match grid.dim() {
        1 => {
            for cell in 0..=ngrid {
                let mb = cell_avg_1d(m0.component(0).values(), cell);
                let nb = cell_avg_1d(n.component(0).values(), cell);
                let pl = if cell > 0 { p0v[cell - 1] } else { 0.0 };
                let pr = if cell < ngrid { p0v[cell] } else { 0.0 };
                let g0 = (pr - pl) / h;
                // flux = h * [mb (nb g0) + nb (mb g0)] * dphi/dx
                let coeff = h * 2.0 * mb * nb * g0 / h;
                if cell > 0 {
                    out[cell - 1] += coeff;
                }
                if cell < ngrid {
                    out[cell] -= coeff;
                }
            }
        }
        _ => {
            let inv2h = 1.0 / (2.0 * h);
            let h2 = h * h;
            let sx = [-inv2h, inv2h, -inv2h, inv2h];
            let sy = [-inv2h, -inv2h, inv2h, inv2h];
            for cy in 0..=ngrid {
                for cx in 0..=ngrid {
                    let (ids, pv) = gather_cell(grid, p0v, cx, cy);
                    let gx = ((pv[1] - pv[0]) + (pv[3] - pv[2])) * inv2h;
                    let gy = ((pv[2] - pv[0]) + (pv[3] - pv[1])) * inv2h;
                    let mb = cell_avg_2d(m0, grid, cx, cy);
                    let nb = cell_avg_2d(n, grid, cx, cy);
                    let ng0 = nb[0] * gx + nb[1] * gy;
                    let mg0 = mb[0] * gx + mb[1] * gy;
                    // vector field m0 (n.g0) + n (m0.g0) on this cell
                    let fx = mb[0] * ng0 + nb[0] * mg0;
                    let fy = mb[1] * ng0 + nb[1] * mg0;
                    for (k, &id) in ids.iter().enumerate() {
                        if id != usize::MAX {
                            out[id] -= h2 * (fx * sx[k] + fy * sy[k]);
                        }
                    }
                }
            }
        }
    }
    ScalarField::from_values(grid, out)
}

fn cell_avg_1d(v: &[f64], cell: usize) -> f64 {
    let n = v.len();
    if cell == 0 {
        v[0]
    } else if cell == n {
        v[n - 1]
    } else {
        0.5 * (v[cell - 1] + v[cell])
    }
}

fn gather_cell(grid: Grid, v: &[f64], cx: usize, cy: usize) -> ([usize; 4], [f64; 4]) {
    let n = grid.n();
    let mut ids = [usize::MAX; 4];
    let mut vals = [0.0; 4];
    let corners = [
        (cx as isize - 1, cy as isize - 1),
        (cx as isize, cy as isize - 1),
        (cx as isize - 1, cy as isize),
        (cx as isize, cy as isize),
    ];
    for (k, (ix, iy)) in corners.iter().enumerate() {
        if *ix >= 0 && *iy >= 0 && (*ix as usize) < n && (*iy as usize) < n {
            let id = grid.index2(*ix as usize, *iy as usize);
            ids[k] = id;
            vals[k] = v[id];
        }
    }
    (ids, vals)
}

fn cell_avg_2d(f: &VectorField, grid: Grid, cx: usize, cy: usize) -> [f64; 2] {
    let n = grid.n();
    let corners = [
        (cx as isize - 1, cy as isize - 1),
        (cx as isize, cy as isize - 1),
        (cx as isize - 1, cy as isize),
        (cx as isize, cy as isize),
    ];
    let mut avg = [0.0; 2];
    let mut cnt = 0.0;
    for (ix, iy) in corners {
        if ix >= 0 && iy >= 0 && (ix as usize) < n && (iy as usize) < n {
            let id = grid.index2(ix as usize, iy as usize);
            avg[0] += f.component(0).values()[id];
            avg[1] += f.component(1).values()[id];
            cnt += 1.0;
        }
    }
    if cnt > 0.0 {
        avg[0] /= cnt;
        avg[1] /= cnt;
    }
    avg
}

/// One explicit-Euler step of the linearization around a diffusionless
/// pattern `(m0, p0)`: solve the anisotropic equation for the pressure
/// perturbation `q`, then update `n` with
/// `c^2 [(n.gp0) gp0 + (m0.gq) gp0 + (m0.gp0) gq] - |m0|^(2(gamma-1)) n
///  - 2 (gamma-1) |m0|^(2(gamma-2)) (m0.n) m0`,
/// where the `|m0|^(2(gamma-2))` factor is zero wherever `m0` vanishes.
pub fn linearized_pattern_step(
    n: &VectorField,
    m0: &VectorField,
    p0: &PressureSolve,
    params: &ModelParams,
    dt: f64,
) -> Result<(VectorField, PressureSolve)> {
    assert!(params.gamma > 1.0, "pattern linearization needs gamma > 1");
    let grid = n.grid();
    let nn = grid.node_count();
    let rhs = linearized_pressure_rhs(m0, n, p0);
    // Same SPD operator as the anisotropic pressure solve.
    let apply = |x: &[f64], y: &mut [f64]| {
        let xf = ScalarField::from_values(grid, x.to_vec());
        let ax = apply_anisotropic(m0, &xf);
        y.copy_from_slice(ax.values());
    };
    let diag: Vec<f64> = {
        // Probe the diagonal through unit vectors is wasteful; reuse the
        // assembled diagonal from the elliptic module via a zero solve trick.
        crate::elliptic::operator_diagonal(m0, grid)
    };
    let sol = pcg(apply, &diag, rhs.values(), None, params.cg_tol, 50 * nn)?;
    let q = ScalarField::from_values(grid, sol.x);
    let gq = gradient(&q);
    let qsolve = PressureSolve {
        p: q,
        gradp: gq,
        iterations: sol.iterations,
        residual: sol.residual,
    };

    let c2 = params.c * params.c;
    let g0 = &p0.gradp;
    let ndotg0 = n.dot(g0);
    let m0dotgq = m0.dot(&qsolve.gradp);
    let m0dotg0 = m0.dot(g0);
    let m0dotn = m0.dot(n);
    let mag = m0.magnitude();
    let two_gm1 = 2.0 * (params.gamma - 1.0);
    let mut comps = Vec::with_capacity(grid.dim());
    for k in 0..grid.dim() {
        let g0k = g0.component(k).values();
        let gqk = qsolve.gradp.component(k).values();
        let nk = n.component(k).values();
        let m0k = m0.component(k).values();
        let vals: Vec<f64> = (0..nn)
            .map(|i| {
                let mg = mag.values()[i];
                let decay = params.metabolic_coeff(mg) * nk[i];
                let cross = if mg > 0.0 {
                    two_gm1 * mg.powf(2.0 * (params.gamma - 2.0)) * m0dotn.values()[i] * m0k[i]
                } else {
                    0.0
                };
                let drive = c2
                    * (ndotg0.values()[i] * g0k[i]
                        + m0dotgq.values()[i] * g0k[i]
                        + m0dotg0.values()[i] * gqk[i]);
                nk[i] + dt * (drive - decay - cross)
            })
            .collect();
        comps.push(ScalarField::from_values(grid, vals));
    }
    Ok((VectorField::from_components(comps), qsolve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner_product, l2_norm};
    use crate::rng::SplitMix64;

    fn seeded_vector(grid: Grid, seed: u64, amp: f64) -> VectorField {
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

    fn smooth_positive_1d(grid: Grid, amp: f64) -> VectorField {
        let pi = std::f64::consts::PI;
        VectorField::from_components(vec![ScalarField::from_fn(grid, |x, _| {
            amp * (pi * x).sin()
        })])
    }

    #[test]
    fn reaction_terms_zero_for_zero_m() {
        let grid = Grid::new(2, 6);
        let m = VectorField::zeros(grid);
        let s = ScalarField::constant(grid, 1.0);
        let p = crate::elliptic::solve_pressure(&m, &s, 1e-10).unwrap();
        let (pump, meta) = reaction_terms(&m, &p.gradp, &ModelParams::default());
        assert_eq!(pump.l2_norm(), 0.0);
        assert_eq!(meta.l2_norm(), 0.0);
    }

    #[test]
    fn pumping_vanishes_when_m_is_orthogonal_to_gradp() {
        // Nodewise orthogonality: m along y, grad p along x.
        let grid = Grid::new(2, 8);
        let mut m = VectorField::zeros(grid);
        let mut gradp = VectorField::zeros(grid);
        let mut rng = SplitMix64::new(44);
        for i in 0..grid.node_count() {
            m.component_mut(1).values_mut()[i] = rng.next_symmetric(2.0);
            gradp.component_mut(0).values_mut()[i] = rng.next_symmetric(2.0);
        }
        let (pump, _) = reaction_terms(&m, &gradp, &ModelParams::default());
        assert_eq!(pump.l2_norm(), 0.0);
    }

    #[test]
    fn metabolic_term_at_unit_magnitude() {
        let grid = Grid::new(2, 4);
        let mut m = VectorField::zeros(grid);
        m.component_mut(0).values_mut()[5] = 1.0;
        let params = ModelParams {
            gamma: 2.0,
            ..Default::default()
        };
        let (_, meta) = reaction_terms(&m, &VectorField::zeros(grid), &params);
        assert_eq!(meta.component(0).values()[5], 1.0);
        assert_eq!(meta.component(1).values()[5], 0.0);
    }

    #[test]
    fn zero_state_is_an_exact_fixed_point_of_every_variant() {
        let grid = Grid::new(1, 15);
        let params = ModelParams {
            epsilon: 1e-3,
            t_end: 0.01,
            ..Default::default()
        };
        let m0 = VectorField::zeros(grid);
        let s = ScalarField::constant(grid, 1.0);
        for variant in [Variant::Standard, Variant::SignFlipped, Variant::Mollified] {
            let (state, _) = simulate(&m0, &s, &params, variant).unwrap();
            assert_eq!(state.m.l2_norm(), 0.0, "{variant:?}");
        }
    }

    #[test]
    fn single_node_update_matches_scalar_backward_euler() {
        // D = 0 decouples the nodes; the update must match
        // (m + dt c^2 (m.gp) gp) / (1 + dt |m|^(2(gamma-1))) nodewise.
        let grid = Grid::new(1, 7);
        let params = ModelParams {
            d: 0.0,
            gamma: 2.0,
            c: 1.3,
            ..Default::default()
        };
        let m = seeded_vector(grid, 5, 0.8);
        let gp = seeded_vector(grid, 6, 1.1);
        let (pump, _) = reaction_terms(&m, &gp, &params);
        let dt = 0.037;
        let out = implicit_update(&m, &pump, 1.0, &params, dt).unwrap();
        for i in 0..grid.node_count() {
            let mv = m.component(0).values()[i];
            let gv = gp.component(0).values()[i];
            let expected = (mv + dt * params.c * params.c * (mv * gv) * gv) / (1.0 + dt * mv * mv);
            assert!((out.component(0).values()[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_never_increases_on_accepted_steps() {
        for dim in [1, 2] {
            let grid = Grid::new(dim, if dim == 1 { 31 } else { 11 });
            let params = ModelParams {
                d: 0.1,
                t_end: 0.05,
                dt0: 1e-3,
                dt_max: 1e-2,
                steady_tol: 1e-12,
                ..Default::default()
            };
            let m0 = seeded_vector(grid, 42, 0.5);
            let s = ScalarField::constant(grid, 1.0);
            let (_, trace) = simulate(&m0, &s, &params, Variant::Standard).unwrap();
            let accepted: Vec<_> = trace.rows.iter().filter(|r| r.accepted).collect();
            assert!(accepted.len() > 5);
            let e0 = accepted[0].energy.total;
            for w in accepted.windows(2) {
                assert!(
                    w[1].energy.total <= w[0].energy.total + 1e-12 * e0,
                    "dim {dim}: energy rose from {} to {}",
                    w[0].energy.total,
                    w[1].energy.total
                );
            }
        }
    }

    #[test]
    fn decay_with_zero_source() {
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            d: 0.5,
            t_end: 4.0,
            steady_tol: 1e-10,
            ..Default::default()
        };
        let m0 = smooth_positive_1d(grid, 0.7);
        let s = ScalarField::zeros(grid);
        let (state, _) = simulate(&m0, &s, &params, Variant::Standard).unwrap();
        assert!(state.m.l2_norm() < 1e-2 * m0.l2_norm());
    }

    #[test]
    fn pumping_disabled_decays_monotonically() {
        // c ~ 0 leaves pure diffusion plus decay.
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            d: 0.2,
            c: 1e-12,
            t_end: 0.5,
            steady_tol: 1e-12,
            ..Default::default()
        };
        let m0 = seeded_vector(grid, 3, 1.0);
        let s = ScalarField::constant(grid, 1.0);
        let (_, trace) = simulate(&m0, &s, &params, Variant::Standard).unwrap();
        let norms: Vec<f64> = trace
            .rows
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.m_norm)
            .collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sign_flipped_norm_never_increases() {
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            d: 0.5,
            t_end: 1.0,
            dt_max: 0.01,
            steady_tol: 1e-14,
            ..Default::default()
        };
        let m0 = seeded_vector(grid, 11, 0.5);
        let s = ScalarField::constant(grid, 1.0);
        let (_, trace) = simulate(&m0, &s, &params, Variant::SignFlipped).unwrap();
        let norms: Vec<f64> = trace
            .rows
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.m_norm)
            .collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-11));
        }
    }

    #[test]
    fn mollified_step_matches_standard_when_kernel_degenerates() {
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            d: 0.05,
            epsilon: 1e-12, // sub-grid: identity stencil
            dt0: 1e-3,
            ..Default::default()
        };
        let m0 = smooth_positive_1d(grid, 0.6);
        let s = ScalarField::constant(grid, 1.0);
        let kernel = KernelStencil::heat_kernel(params.epsilon, grid);
        assert!(kernel.is_degenerate());
        let state_m = SimState::init_mollified(m0.clone(), &s, &params, &kernel).unwrap();
        let state_s = SimState::init(m0, &s, &params).unwrap();
        let a = step_mollified(&state_m, &s, &params, &kernel).unwrap();
        let b = step(&state_s, &s, &params).unwrap();
        let diff = a.state.m.axpy(-1.0, &b.state.m).l2_norm();
        let scale = b.state.m.l2_norm();
        assert!(diff <= 0.05 * scale, "diff {diff} vs scale {scale}");
    }

    #[test]
    fn ode_rhs_properties() {
        let params = ModelParams {
            gamma: 2.0,
            c: 1.0,
            ..Default::default()
        };
        assert_eq!(ode_rhs_d0_1d(0.0, 5.0, &params), 0.0);
        // gamma=2, c=1, B=2, m=1: (4/4 - 1) * 1 = 0.
        assert!(ode_rhs_d0_1d(1.0, 2.0, &params).abs() < 1e-15);
        for m in [0.3, 1.7, 2.5] {
            let plus = ode_rhs_d0_1d(m, 1.2, &params);
            let minus = ode_rhs_d0_1d(-m, 1.2, &params);
            assert!((plus + minus).abs() < 1e-14);
        }
    }

    #[test]
    fn run_d0_preserves_zero_and_sign() {
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            gamma: 2.0,
            c: 1.0,
            dt0: 0.01,
            ..Default::default()
        };
        let s = ScalarField::constant(grid, 1.0);
        let zero = ScalarField::zeros(grid);
        let out = run_d0_1d(&zero, &s, &params, 10.0).unwrap();
        assert_eq!(l2_norm(&out), 0.0);

        let mi = ScalarField::from_fn(grid, |x, _| if x < 0.5 { 0.4 } else { -0.4 });
        let out = run_d0_1d(&mi, &s, &params, 5.0).unwrap();
        for (a, b) in out.values().iter().zip(mi.values()) {
            assert!(a * b > 0.0, "sign must be preserved nodewise");
        }
    }

    #[test]
    fn linearized_zero_step_basics() {
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            d: 0.5,
            c: 0.5,
            ..Default::default()
        };
        let s = ScalarField::constant(grid, 1.0);
        let p0 = crate::elliptic::solve_pressure(&VectorField::zeros(grid), &s, 1e-12).unwrap();

        let zero = VectorField::zeros(grid);
        let out = linearized_zero_step(&zero, &p0, &params, 0.01).unwrap();
        assert_eq!(out.l2_norm(), 0.0);

        // beta -> 0 limit decays strictly: use tiny c.
        let heat_params = ModelParams {
            d: 0.5,
            c: 1e-9,
            ..Default::default()
        };
        let n = seeded_vector(grid, 9, 1.0);
        let out = linearized_zero_step(&n, &p0, &heat_params, 0.05).unwrap();
        assert!(out.l2_norm() < n.l2_norm());

        // Perturbation supported where grad p0 = 0 sees only the heat step.
        let flat = PressureSolve::from_field(ScalarField::zeros(grid));
        let a = linearized_zero_step(&n, &flat, &params, 0.05).unwrap();
        let b = linearized_zero_step(&n, &flat, &heat_params, 0.05).unwrap();
        let diff = a.axpy(-1.0, &b).l2_norm();
        assert!(diff < 1e-12);
    }

    #[test]
    fn linearized_pattern_step_zero_is_fixed() {
        let grid = Grid::new(1, 15);
        let params = ModelParams {
            gamma: 2.0,
            ..Default::default()
        };
        let s = ScalarField::constant(grid, 1.0);
        let pattern = crate::spectra::PatternSpec::uniform(grid, 1);
        let (m0, p0) = crate::spectra::construct_pattern_d0(&pattern, &params, &s).unwrap();
        let zero = VectorField::zeros(grid);
        let (n1, q) = linearized_pattern_step(&zero, &m0, &p0, &params, 0.1).unwrap();
        assert_eq!(n1.l2_norm(), 0.0);
        assert_eq!(l2_norm(&q.p), 0.0);
    }

    #[test]
    fn linearized_pressure_identity() {
        // Testing q against its own weak equation: the mixed coupling
        // quadrature equals minus the full anisotropic form of q.
        let grid = Grid::new(1, 31);
        let params = ModelParams {
            gamma: 2.0,
            cg_tol: 1e-13,
            ..Default::default()
        };
        let s = ScalarField::constant(grid, 1.0);
        let pattern = crate::spectra::PatternSpec::uniform(grid, 1);
        let (m0, p0) = crate::spectra::construct_pattern_d0(&pattern, &params, &s).unwrap();
        let n = seeded_vector(grid, 17, 0.3);
        let (_, q) = linearized_pattern_step(&n, &m0, &p0, &params, 0.01).unwrap();
        let lhs = inner_product(&linearized_pressure_rhs(&m0, &n, &p0), &q.p) / grid.node_weight();
        let aq = apply_anisotropic(&m0, &q.p);
        let rhs: f64 = aq
            .values()
            .iter()
            .zip(q.p.values())
            .map(|(a, b)| a * b)
            .sum();
        assert!(
            (lhs - rhs).abs() <= 10.0 * params.cg_tol * rhs.abs().max(1e-30) + 1e-14,
            "{lhs} vs {rhs}"
        );
    }
}
