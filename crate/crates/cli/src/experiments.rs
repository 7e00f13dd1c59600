//! The experiments behind the subcommands. Each one runs a configured
//! scenario, writes its CSV artifacts, and reports named pass/fail checks;
//! the process exits nonzero when a check fails.

use std::path::{Path, PathBuf};

use nflab_core::dynamics::{self, simulate_with_bc, PressureBc, Variant};
use nflab_core::elliptic::{self, cumulative_source};
use nflab_core::energy::{decay_rate_estimate, dissipation_residual};
use nflab_core::field::{l2_norm, linf_norm};
use nflab_core::mollifier::KernelStencil;
use nflab_core::spectra::{self, PatternSpec, ZeroStateClass};
use nflab_core::{snapshot, Error, Grid, Result, SimTrace, SplitMix64, VectorField};

use crate::config::{BcSpec, InitialMSpec, RunConfig};
use crate::csv::{fmt_f64, write_table, write_trace};
use crate::fields::{build_initial_m, build_source, seeded_field};

/// One named assertion of an experiment.
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything an experiment produced.
pub struct ExperimentReport {
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentReport {
    fn new() -> Self {
        ExperimentReport {
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn grid_of(cfg: &RunConfig) -> Grid {
    Grid::new(cfg.dim, cfg.n)
}

fn bc_of(cfg: &RunConfig) -> PressureBc {
    match cfg.bc {
        BcSpec::Dirichlet => PressureBc::FemDirichlet,
        BcSpec::Mixed => PressureBc::Mixed1d,
    }
}

fn energy_monotone(trace: &SimTrace) -> (bool, f64) {
    let accepted: Vec<_> = trace.rows.iter().filter(|r| r.accepted).collect();
    let e0 = accepted.first().map(|r| r.energy.total).unwrap_or(0.0);
    let mut worst: f64 = 0.0;
    for pair in accepted.windows(2) {
        worst = worst.max(pair[1].energy.total - pair[0].energy.total);
    }
    (worst <= 1e-12 * e0.abs().max(1e-300), worst)
}

/// Transient run of the full system with its trace and final snapshots.
pub fn run_simulate(cfg: &RunConfig, out: &Path, _seed: u64) -> Result<ExperimentReport> {
    let grid = grid_of(cfg);
    let s = build_source(&cfg.source, grid)?;
    let m0 = build_initial_m(&cfg.initial_m, grid, &s, &cfg.params)?;
    let (state, trace) = simulate_with_bc(&m0, &s, &cfg.params, Variant::Standard, bc_of(cfg))?;

    let mut report = ExperimentReport::new();
    let trace_path = out.join("trace.csv");
    write_trace(&trace_path, &trace)?;
    report.artifacts.push(trace_path);
    let m_path = out.join("m_final.snap");
    snapshot::write_vector(&m_path, &state.m)?;
    report.artifacts.push(m_path);
    let p_path = out.join("p_final.snap");
    snapshot::write_scalar(&p_path, &state.p.p)?;
    report.artifacts.push(p_path);

    let (mono, worst) = energy_monotone(&trace);
    report.check(
        "energy nonincreasing across accepted steps",
        mono,
        format!("worst increase {worst:.3e}"),
    );
    if let Ok(res) = dissipation_residual(&trace) {
        report.check(
            "dissipation residual finite",
            res.is_finite(),
            format!("residual {res:.3e}"),
        );
    }
    Ok(report)
}

/// Sign-flipped run: everything decays at least at the Poincare rate.
pub fn run_decay(cfg: &RunConfig, out: &Path, _seed: u64) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.default_to("D", |c| c.params.d = 0.5);
    cfg.default_to("dt_max", |c| c.params.dt_max = 0.01);
    cfg.default_to("t_end", |c| c.params.t_end = 6.0);
    cfg.default_to("steady_tol", |c| c.params.steady_tol = 1e-14);
    cfg.default_to("initial-m", |c| {
        c.initial_m = InitialMSpec::SeededRandom {
            seed: 1,
            amplitude: 0.5,
        }
    });
    let grid = grid_of(&cfg);
    let s = build_source(&cfg.source, grid)?;
    let m0 = build_initial_m(&cfg.initial_m, grid, &s, &cfg.params)?;
    let (_, trace) = simulate_with_bc(&m0, &s, &cfg.params, Variant::SignFlipped, bc_of(&cfg))?;

    let mut report = ExperimentReport::new();
    let trace_path = out.join("trace.csv");
    write_trace(&trace_path, &trace)?;
    report.artifacts.push(trace_path);

    let norms: Vec<f64> = trace
        .rows
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.m_norm)
        .collect();
    let mono = norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-11));
    report.check("conductance norm nonincreasing", mono, String::new());

    let rate = decay_rate_estimate(&trace)?;
    let pi = std::f64::consts::PI;
    let bound = -cfg.params.d * cfg.params.d * pi * pi * grid.dim() as f64 * 0.95;
    report.check(
        "decay rate at least the Poincare rate",
        rate <= bound,
        format!("fitted {rate:.4} vs bound {bound:.4}"),
    );
    Ok(report)
}

/// Diffusionless 1D steady states: integrate the node dynamics and compare
/// with the predicted amplitude (mixed pressure boundary condition).
pub fn run_steady1d(cfg: &RunConfig, out: &Path, _seed: u64) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: cfg.dim,
        });
    }
    if cfg.is_set("bc") && cfg.bc != BcSpec::Mixed {
        return Err(Error::InvalidParameter(
            "the steady-state construction uses the mixed boundary condition".into(),
        ));
    }
    cfg.default_to("t_end", |c| c.params.t_end = 200.0);
    cfg.default_to("dt0", |c| c.params.dt0 = 0.01);
    cfg.default_to("initial-m", |c| c.initial_m = InitialMSpec::SignedPattern);

    let grid = grid_of(&cfg);
    let s = build_source(&cfg.source, grid)?;
    let m0 = build_initial_m(&cfg.initial_m, grid, &s, &cfg.params)?;
    let cum = cumulative_source(&s)?;
    let final_m = dynamics::run_d0_1d(m0.component(0), &s, &cfg.params, cfg.params.t_end)?;

    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..grid.node_count() {
        let b = cum.b.values()[i];
        let ms = spectra::steady_amplitude_1d(b.max(0.0), &cfg.params);
        let mi = m0.component(0).values()[i];
        let target = ms * if mi >= 0.0 { 1.0 } else { -1.0 };
        let diff = (final_m.values()[i] - target).abs();
        worst = worst.max(diff);
        rows.push(vec![
            fmt_f64(grid.coord(i)),
            fmt_f64(b),
            fmt_f64(ms),
            fmt_f64(mi),
            fmt_f64(final_m.values()[i]),
            fmt_f64(diff),
        ]);
    }
    let path = out.join("comparison.csv");
    write_table(
        &path,
        &["x", "B", "m_s", "m_initial", "m_final", "abs_diff"],
        &rows,
    )?;

    let mut report = ExperimentReport::new();
    report.artifacts.push(path);
    report.check(
        "final state matches the signed steady amplitude",
        worst <= 1e-4,
        format!("max |m(T) - m_s sign(m_I)| = {worst:.3e}"),
    );
    Ok(report)
}

/// Construct a diffusionless pattern, check its stationarity, and evolve an
/// admissible perturbation through the linearized system.
pub fn run_pattern(cfg: &RunConfig, out: &Path, seed: u64) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.default_to("D", |c| c.params.d = 0.0);
    if cfg.params.d != 0.0 {
        return Err(Error::InvalidParameter(
            "pattern construction assumes D = 0".into(),
        ));
    }
    if cfg.params.gamma <= 1.0 {
        return Err(Error::InvalidParameter(
            "pattern construction requires gamma > 1".into(),
        ));
    }
    cfg.default_to("dt0", |c| c.params.dt0 = 1e-4);
    cfg.default_to("dt_max", |c| c.params.dt_max = 1e-4);

    let grid = grid_of(&cfg);
    let s = build_source(&cfg.source, grid)?;
    let pattern = PatternSpec::uniform(grid, 1);
    let (m0, p0) = spectra::construct_pattern_d0(&pattern, &cfg.params, &s)?;

    let mut report = ExperimentReport::new();
    let mut rows = Vec::new();
    let gmag = p0.gradp.magnitude();
    for i in 0..grid.node_count() {
        let mut row = vec![fmt_f64(p0.p.values()[i]), fmt_f64(gmag.values()[i])];
        for k in 0..grid.dim() {
            row.push(fmt_f64(m0.component(k).values()[i]));
        }
        rows.push(row);
    }
    let header: Vec<&str> = match grid.dim() {
        1 => vec!["p0", "gradp0_mag", "m0_x"],
        _ => vec!["p0", "gradp0_mag", "m0_x", "m0_y"],
    };
    let pattern_path = out.join("pattern.csv");
    write_table(&pattern_path, &header, &rows)?;
    report.artifacts.push(pattern_path);

    let (pump, meta) = dynamics::reaction_terms(&m0, &p0.gradp, &cfg.params);
    let residual = pump.axpy(-1.0, &meta).linf_norm() / linf_norm(&pump.magnitude()).max(1e-300);
    report.check(
        "stationarity of the reaction terms",
        residual <= 1e-6,
        format!("relative residual {residual:.3e}"),
    );

    let state = dynamics::SimState::init(m0.clone(), &s, &cfg.params)?;
    let drift = dynamics::step(&state, &s, &cfg.params)?
        .state
        .m
        .axpy(-1.0, &m0)
        .linf_norm()
        / m0.linf_norm().max(1e-300);
    report.check(
        "one-step drift of the pattern",
        drift <= 1e-6,
        format!("relative drift {drift:.3e}"),
    );

    // Admissible perturbation: random, supported where the gradient is strong.
    let gmax = linf_norm(&gmag);
    let mut rng = SplitMix64::new(seed ^ 0x7061_7474);
    let mut n_i = seeded_field(&mut rng, 1.0, grid);
    for k in 0..grid.dim() {
        for (i, v) in n_i.component_mut(k).values_mut().iter_mut().enumerate() {
            if gmag.values()[i] < 0.5 * gmax {
                *v = 0.0;
            }
        }
    }
    let horizon = if grid.dim() == 1 { 90.0 } else { 130.0 };
    let rep = spectra::verify_pattern_stability(&m0, &p0, &n_i, &cfg.params, horizon)?;
    let rows: Vec<Vec<String>> = rep
        .times
        .iter()
        .zip(rep.n_sq.iter().zip(&rep.gradq_sq))
        .map(|(t, (n, q))| vec![fmt_f64(*t), fmt_f64(*n), fmt_f64(*q)])
        .collect();
    let stab_path = out.join("stability.csv");
    write_table(&stab_path, &["t", "n_sq", "gradq_sq"], &rows)?;
    report.artifacts.push(stab_path);
    report.check(
        "perturbation mass decays below 1 percent",
        rep.ratio_n < 0.01,
        format!("|n|^2 ratio {:.3e}", rep.ratio_n),
    );
    report.check(
        "pressure perturbation decays below 1 percent",
        rep.ratio_gradq < 0.01,
        format!("|grad q|^2 ratio {:.3e}", rep.ratio_gradq),
    );
    Ok(report)
}

/// Leading eigenvalue, the instability threshold, and a growth-rate scan
/// across it.
pub fn run_spectrum(cfg: &RunConfig, out: &Path, _seed: u64) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.default_to("n", |c| c.n = 255);
    cfg.default_to("D", |c| c.params.d = 0.5);
    if cfg.params.d <= 0.0 {
        return Err(Error::InvalidParameter(
            "the growth-rate scan needs D > 0".into(),
        ));
    }
    let grid = grid_of(&cfg);
    let s = build_source(&cfg.source, grid)?;
    let p0 = elliptic::solve_pressure(&VectorField::zeros(grid), &s, cfg.params.cg_tol)?;
    let sr = spectra::sigma1(&p0, 1e-12)?;

    let mut report = ExperimentReport::new();
    let mut rows = Vec::new();
    let mut signs = Vec::new();
    for frac in [0.5, 0.9, 1.1, 2.0] {
        let beta = frac * sr.beta_star;
        let rate = spectra::measure_growth_rate(beta, &p0, &cfg.params, 40.0)?;
        let class = spectra::classify_zero_state(beta, &sr);
        rows.push(vec![
            fmt_f64(beta),
            fmt_f64(frac),
            fmt_f64(rate),
            format!("{class:?}"),
        ]);
        let indeterminate = rate.abs() < 1e-3 * cfg.params.d * cfg.params.d;
        let agree = match class {
            ZeroStateClass::Unstable => rate > 0.0,
            ZeroStateClass::Stable => rate < 0.0,
            ZeroStateClass::Neutral => true,
        };
        signs.push(indeterminate || agree);
    }
    let path = out.join("spectrum.csv");
    write_table(
        &path,
        &["beta", "beta_over_beta_star", "rate", "class"],
        &rows,
    )?;
    report.artifacts.push(path);

    report.check(
        "eigenvalue solve converged",
        sr.sigma1 > 0.0 && sr.residual <= 1e-12,
        format!(
            "sigma1 {:.6e}, beta* {:.6e}, {} iterations",
            sr.sigma1, sr.beta_star, sr.iterations
        ),
    );
    report.check(
        "growth-rate signs follow the classification",
        signs.iter().all(|s| *s),
        String::new(),
    );
    Ok(report)
}

struct SweepPoint {
    d: f64,
    max_tv: f64,
    final_m: VectorField,
    final_norm: f64,
}

/// Parameter sweeps: the vanishing-diffusion family, the mollification
/// family, and the large-diffusion death run.
pub fn run_limits(cfg: &RunConfig, out: &Path, _seed: u64) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: cfg.dim,
        });
    }
    cfg.default_to("t_end", |c| c.params.t_end = 2.0);
    cfg.default_to("dt_max", |c| c.params.dt_max = 0.02);
    cfg.default_to("steady_tol", |c| c.params.steady_tol = 1e-14);
    cfg.default_to("initial-m", |c| {
        c.initial_m = InitialMSpec::Constant(vec![0.5])
    });

    let grid = grid_of(&cfg);
    let s = build_source(&cfg.source, grid)?;
    let m0 = build_initial_m(&cfg.initial_m, grid, &s, &cfg.params)?;
    let mut report = ExperimentReport::new();

    // Vanishing-diffusion sweep, one worker per D, merged by parameter order.
    let d_values = [0.0, 0.1, 0.03, 0.01, 0.003];
    let results: Vec<Result<SweepPoint>> = std::thread::scope(|scope| {
        let handles: Vec<_> = d_values
            .iter()
            .map(|d| {
                let params = nflab_core::ModelParams {
                    d: *d,
                    ..cfg.params
                };
                let m0 = &m0;
                let s = &s;
                scope.spawn(move || -> Result<SweepPoint> {
                    let (state, trace) = simulate_with_bc(
                        m0,
                        s,
                        &params,
                        Variant::Standard,
                        PressureBc::FemDirichlet,
                    )?;
                    let max_tv = trace
                        .rows
                        .iter()
                        .filter(|r| r.accepted)
                        .filter_map(|r| r.tv)
                        .fold(0.0f64, f64::max);
                    Ok(SweepPoint {
                        d: *d,
                        max_tv,
                        final_norm: state.m.l2_norm(),
                        final_m: state.m,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut points = Vec::new();
    for r in results {
        points.push(r?);
    }

    let reference = &points[0];
    let mut rows = Vec::new();
    let mut tv_ok = true;
    let mut dist_ok = true;
    let mut prev_dist = f64::INFINITY;
    for p in &points {
        let dist = p.final_m.axpy(-1.0, &reference.final_m).l2_norm();
        rows.push(vec![
            fmt_f64(p.d),
            fmt_f64(p.max_tv),
            fmt_f64(dist),
            fmt_f64(p.final_norm),
        ]);
        if p.d > 0.0 {
            tv_ok &= p.max_tv <= 2.0 * reference.max_tv && p.max_tv >= 0.5 * reference.max_tv;
            dist_ok &= dist < prev_dist;
            prev_dist = dist;
        }
    }
    let path = out.join("limits_d.csv");
    write_table(&path, &["D", "max_tv", "dist_to_d0", "final_norm"], &rows)?;
    report.artifacts.push(path);
    report.check(
        "total variation bounded uniformly in D",
        tv_ok,
        format!("reference max TV {:.4}", reference.max_tv),
    );
    report.check(
        "terminal distance to the D=0 run shrinks with D",
        dist_ok,
        String::new(),
    );

    // Large-diffusion death above the explicit 1D threshold.
    let l1: f64 = grid.h() * s.values().iter().map(|v| v.abs()).sum::<f64>();
    let threshold = 2.0 * cfg.params.c * l1 / std::f64::consts::PI;
    let d_big = (1.1 * threshold).max(0.7);
    let death_params = nflab_core::ModelParams {
        d: d_big,
        t_end: 100.0,
        dt_max: 0.1,
        steady_tol: 1e-300,
        ..cfg.params
    };
    let (state, _) = simulate_with_bc(
        &m0,
        &s,
        &death_params,
        Variant::Standard,
        PressureBc::FemDirichlet,
    )?;
    let sup = state.m.linf_norm();
    report.check(
        "conductance dies above the diffusion threshold",
        sup <= 1e-8,
        format!("D {d_big:.3} > {threshold:.3}: sup norm {sup:.3e}"),
    );

    // Mollification sweep against the unmollified solve on the initial data.
    let reference_p = elliptic::solve_pressure(&m0, &s, 1e-13)?;
    let mut eps_rows = Vec::new();
    let mut prev = f64::INFINITY;
    let mut eps_ok = true;
    for eps in [1e-2, 1e-3, 1e-4] {
        let sol = elliptic::solve_pressure_mollified(&m0, &s, eps, 1e-13)?;
        let err = l2_norm(&sol.p.axpy(-1.0, &reference_p.p));
        eps_rows.push(vec![fmt_f64(eps), fmt_f64(err)]);
        eps_ok &= err < prev;
        prev = err;
    }
    let path = out.join("limits_eps.csv");
    write_table(&path, &["eps", "p_err_l2"], &eps_rows)?;
    report.artifacts.push(path);
    report.check(
        "mollified pressure converges monotonically",
        eps_ok,
        String::new(),
    );
    Ok(report)
}

/// Single mollified run with the modified-energy trace.
pub fn run_mollified(cfg: &RunConfig, out: &Path, _seed: u64) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.default_to("epsilon", |c| c.params.epsilon = 1e-2);
    cfg.default_to("D", |c| c.params.d = 0.05);
    cfg.default_to("t_end", |c| c.params.t_end = 0.5);
    cfg.default_to("dt_max", |c| c.params.dt_max = 0.01);
    cfg.default_to("initial-m", |c| {
        c.initial_m = InitialMSpec::SeededRandom {
            seed: 1,
            amplitude: 0.4,
        }
    });
    if cfg.params.epsilon <= 0.0 {
        return Err(Error::InvalidParameter(
            "the mollified run needs epsilon > 0".into(),
        ));
    }
    let grid = grid_of(&cfg);
    let s = build_source(&cfg.source, grid)?;
    let m0 = build_initial_m(&cfg.initial_m, grid, &s, &cfg.params)?;
    let kernel = KernelStencil::heat_kernel(cfg.params.epsilon, grid);
    let (_, trace) = simulate_with_bc(
        &m0,
        &s,
        &cfg.params,
        Variant::Mollified,
        PressureBc::FemDirichlet,
    )?;

    let mut report = ExperimentReport::new();
    let trace_path = out.join("trace.csv");
    write_trace(&trace_path, &trace)?;
    report.artifacts.push(trace_path);

    let (mono, worst) = energy_monotone(&trace);
    report.check(
        "modified energy nonincreasing across accepted steps",
        mono,
        format!("worst increase {worst:.3e}"),
    );
    let e0 = trace.rows[0].energy.total;
    let nonneg = trace
        .rows
        .iter()
        .filter(|r| r.accepted)
        .all(|r| r.energy.total >= -1e-12 * e0.abs());
    report.check(
        "modified energy stays nonnegative",
        nonneg,
        format!(
            "kernel radius {} (degenerate: {})",
            kernel.radius(),
            kernel.is_degenerate()
        ),
    );
    Ok(report)
}
