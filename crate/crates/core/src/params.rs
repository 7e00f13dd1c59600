//! Model parameters and solver controls.

use crate::error::{Error, Result};

/// Physical parameters and numerical controls for one simulation.
///
/// `D` is the conductance diffusion, `c` the activation strength and `gamma`
/// the metabolic exponent (restricted to `gamma >= 1`). `epsilon` is the
/// mollification scale of the regularized problem (`0` means unmollified).
#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    pub d: f64,
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Relative residual tolerance of the inner conjugate-gradient solves.
    pub cg_tol: f64,
    /// Initial time step.
    pub dt0: f64,
    /// Cap for the adaptively grown time step.
    pub dt_max: f64,
    /// Simulation horizon.
    pub t_end: f64,
    /// Steady-state threshold on the L2 norm of the realized `dm/dt`.
    pub steady_tol: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            d: 0.01,
            c: 1.0,
            gamma: 2.0,
            epsilon: 1e-3,
            cg_tol: 1e-10,
            dt0: 1e-3,
            dt_max: 0.1,
            t_end: 10.0,
            steady_tol: 1e-7,
        }
    }
}

impl ModelParams {
    /// Check every range constraint; returns the offending description on failure.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        };
        check(self.d >= 0.0 && self.d.is_finite(), "D must satisfy D >= 0")?;
        check(self.c > 0.0 && self.c.is_finite(), "c must satisfy c > 0")?;
        check(
            self.gamma >= 1.0 && self.gamma.is_finite(),
            "gamma must satisfy gamma >= 1",
        )?;
        check(
            self.epsilon >= 0.0 && self.epsilon.is_finite(),
            "epsilon must satisfy epsilon >= 0",
        )?;
        check(self.cg_tol > 0.0, "cg_tol must be positive")?;
        check(self.dt0 > 0.0, "dt0 must be positive")?;
        check(self.dt_max >= self.dt0, "dt_max must be >= dt0")?;
        check(self.t_end > 0.0, "t_end must be positive")?;
        check(self.steady_tol > 0.0, "steady_tol must be positive")?;
        Ok(())
    }

    /// The bifurcation parameter `beta = c^2 / D^2`; only defined for `D > 0`.
    pub fn beta(&self) -> f64 {
        assert!(self.d > 0.0, "beta is undefined for D = 0");
        (self.c / self.d).powi(2)
    }

    /// Metabolic coefficient `|m|^(2(gamma-1))`; exactly 1 at `gamma = 1`.
    pub fn metabolic_coeff(&self, mag: f64) -> f64 {
        if self.gamma == 1.0 {
            1.0
        } else {
            mag.powf(2.0 * (self.gamma - 1.0))
        }
    }
}
