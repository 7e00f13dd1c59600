//! Construction of source terms and initial conductance fields from
//! configuration descriptors. All randomness flows through splitmix64, so
//! identical descriptors reproduce identical fields bit for bit.

use nflab_core::elliptic::cumulative_source;
use nflab_core::spectra::{construct_pattern_d0, steady_amplitude_1d, PatternSpec};
use nflab_core::{
    snapshot, Error, Grid, ModelParams, Result, ScalarField, SplitMix64, VectorField,
};

use crate::config::{InitialMSpec, SourceSpec};

/// Draw a vector field with i.i.d. uniform entries in `[-amplitude, amplitude]`,
/// component major.
pub fn seeded_field(rng: &mut SplitMix64, amplitude: f64, grid: Grid) -> VectorField {
    VectorField::from_components(
        (0..grid.dim())
            .map(|_| {
                ScalarField::from_values(
                    grid,
                    (0..grid.node_count())
                        .map(|_| rng.next_symmetric(amplitude))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn build_source(spec: &SourceSpec, grid: Grid) -> Result<ScalarField> {
    match spec {
        SourceSpec::Constant(v) => Ok(ScalarField::constant(grid, *v)),
        SourceSpec::GaussianBump {
            center,
            width,
            amplitude,
        } => Ok(ScalarField::from_fn(grid, |x, y| {
            let dx = x - center.0;
            let dy = if grid.dim() == 2 { y - center.1 } else { 0.0 };
            amplitude * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
        })),
        SourceSpec::FromSnapshot(path) => {
            let f = snapshot::read_scalar(path)?;
            if f.grid() != grid {
                return Err(Error::MalformedSnapshot(format!(
                    "snapshot grid {:?} does not match the configured grid {:?}",
                    f.grid(),
                    grid
                )));
            }
            Ok(f)
        }
    }
}

pub fn build_initial_m(
    spec: &InitialMSpec,
    grid: Grid,
    source: &ScalarField,
    params: &ModelParams,
) -> Result<VectorField> {
    match spec {
        InitialMSpec::Constant(vals) => Ok(VectorField::from_components(
            (0..grid.dim())
                .map(|k| ScalarField::constant(grid, vals.get(k).copied().unwrap_or(vals[0])))
                .collect(),
        )),
        InitialMSpec::SeededRandom { seed, amplitude } => {
            let mut rng = SplitMix64::new(*seed);
            Ok(seeded_field(&mut rng, *amplitude, grid))
        }
        InitialMSpec::SignedPattern => match grid.dim() {
            1 => {
                let cum = cumulative_source(source)?;
                let vals: Vec<f64> = cum
                    .b
                    .values()
                    .iter()
                    .map(|b| steady_amplitude_1d(b.max(0.0), params))
                    .collect();
                Ok(VectorField::from_components(vec![
                    ScalarField::from_values(grid, vals),
                ]))
            }
            _ => {
                let pattern = PatternSpec::uniform(grid, 1);
                let (m0, _) = construct_pattern_d0(&pattern, params, source)?;
                Ok(m0)
            }
        },
        InitialMSpec::FromSnapshot(path) => {
            let f = snapshot::read_vector(path)?;
            if f.grid() != grid {
                return Err(Error::MalformedSnapshot(format!(
                    "snapshot grid {:?} does not match the configured grid {:?}",
                    f.grid(),
                    grid
                )));
            }
            Ok(f)
        }
    }
}
