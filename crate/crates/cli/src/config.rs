//! Flat `key = value` run configuration.
//!
//! Unknown keys are a hard error (typo safety) and every violation carries
//! the offending line. Empty input is a valid configuration: every key has
//! a default.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nflab_core::ModelParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: invariant violation: {msg}")]
    Invariant { line: usize, msg: String },
    #[error("invariant violation: {0}")]
    CrossField(String),
}

/// Source term descriptor.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    Constant(f64),
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`.
    GaussianBump {
        center: (f64, f64),
        width: f64,
        amplitude: f64,
    },
    FromSnapshot(PathBuf),
}

/// Initial conductance descriptor.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialMSpec {
    /// One value per component.
    Constant(Vec<f64>),
    /// I.i.d. uniform in `[-amplitude, amplitude]` from a splitmix64 stream.
    SeededRandom {
        seed: u64,
        amplitude: f64,
    },
    /// The positive branch of the steady profile (1D) or the constructed
    /// uniform-sign pattern (2D).
    SignedPattern,
    FromSnapshot(PathBuf),
}

/// 1D pressure boundary condition selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcSpec {
    Dirichlet,
    Mixed,
}

/// A validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub params: ModelParams,
    pub source: SourceSpec,
    pub initial_m: InitialMSpec,
    pub bc: BcSpec,
    /// Output directory from the config file; the command line overrides it.
    pub out: Option<PathBuf>,
    /// Experiment label used in artifact names.
    pub experiment: Option<String>,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 1,
            n: 127,
            params: ModelParams::default(),
            source: SourceSpec::Constant(1.0),
            initial_m: InitialMSpec::Constant(vec![0.5]),
            bc: BcSpec::Dirichlet,
            out: None,
            experiment: None,
            explicit: BTreeSet::new(),
        }
    }
}

impl RunConfig {
    /// Whether the user set `key` explicitly (experiments only override
    /// defaults the user left untouched).
    pub fn is_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Parse and validate a configuration text.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                msg: format!("expected 'key = value', got '{stripped}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(line, key, value)?;
            cfg.explicit.insert(key.to_string());
        }
        cfg.validate_cross_field()?;
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let parse_f64 = |v: &str| -> Result<f64, ConfigError> {
            v.parse().map_err(|_| ConfigError::Parse {
                line,
                msg: format!("'{v}' is not a number"),
            })
        };
        let parse_u64 = |v: &str| -> Result<u64, ConfigError> {
            v.parse().map_err(|_| ConfigError::Parse {
                line,
                msg: format!("'{v}' is not an unsigned integer"),
            })
        };
        let invariant = |msg: String| ConfigError::Invariant { line, msg };

        match key {
            "dim" => {
                let d = parse_u64(value)? as usize;
                if d != 1 && d != 2 {
                    return Err(invariant(format!("dim must be 1 or 2, got {d}")));
                }
                self.dim = d;
            }
            "n" => {
                let n = parse_u64(value)? as usize;
                if n < 3 {
                    return Err(invariant(format!("n must be at least 3, got {n}")));
                }
                self.n = n;
            }
            "D" => {
                let v = parse_f64(value)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invariant("D must satisfy D >= 0".into()));
                }
                self.params.d = v;
            }
            "c" => {
                let v = parse_f64(value)?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invariant("c must satisfy c > 0".into()));
                }
                self.params.c = v;
            }
            "gamma" => {
                let v = parse_f64(value)?;
                if !(v >= 1.0 && v.is_finite()) {
                    return Err(invariant("gamma must satisfy gamma >= 1".into()));
                }
                self.params.gamma = v;
            }
            "epsilon" => {
                let v = parse_f64(value)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invariant("epsilon must satisfy epsilon >= 0".into()));
                }
                self.params.epsilon = v;
            }
            "dt0" => {
                let v = parse_f64(value)?;
                if v <= 0.0 {
                    return Err(invariant("dt0 must be positive".into()));
                }
                self.params.dt0 = v;
            }
            "dt_max" => {
                let v = parse_f64(value)?;
                if v <= 0.0 {
                    return Err(invariant("dt_max must be positive".into()));
                }
                self.params.dt_max = v;
            }
            "t_end" => {
                let v = parse_f64(value)?;
                if v <= 0.0 {
                    return Err(invariant("t_end must be positive".into()));
                }
                self.params.t_end = v;
            }
            "cg_tol" => {
                let v = parse_f64(value)?;
                if v <= 0.0 {
                    return Err(invariant("cg_tol must be positive".into()));
                }
                self.params.cg_tol = v;
            }
            "steady_tol" => {
                let v = parse_f64(value)?;
                if v <= 0.0 {
                    return Err(invariant("steady_tol must be positive".into()));
                }
                self.params.steady_tol = v;
            }
            "source" => {
                let mut it = value.split_whitespace();
                let kind = it.next().unwrap_or_default();
                self.source = match kind {
                    "constant" => {
                        let v = parse_f64(it.next().ok_or_else(|| ConfigError::Parse {
                            line,
                            msg: "constant needs a value".into(),
                        })?)?;
                        SourceSpec::Constant(v)
                    }
                    "gaussian-bump" => {
                        let rest: Vec<&str> = it.collect();
                        let (center, tail) = match (self.dim, rest.len()) {
                            (1, 3) => ((parse_f64(rest[0])?, 0.0), &rest[1..]),
                            (2, 4) => ((parse_f64(rest[0])?, parse_f64(rest[1])?), &rest[2..]),
                            _ => {
                                return Err(ConfigError::Parse {
                                    line,
                                    msg: format!(
                                        "gaussian-bump needs {} numbers (center.. width amplitude)",
                                        self.dim + 2
                                    ),
                                })
                            }
                        };
                        let width = parse_f64(tail[0])?;
                        if width <= 0.0 {
                            return Err(invariant("bump width must be positive".into()));
                        }
                        SourceSpec::GaussianBump {
                            center,
                            width,
                            amplitude: parse_f64(tail[1])?,
                        }
                    }
                    "from-snapshot" => {
                        let path = it.next().ok_or_else(|| ConfigError::Parse {
                            line,
                            msg: "from-snapshot needs a path".into(),
                        })?;
                        SourceSpec::FromSnapshot(PathBuf::from(path))
                    }
                    other => {
                        return Err(ConfigError::Parse {
                            line,
                            msg: format!("unknown source kind '{other}'"),
                        })
                    }
                };
            }
            "initial-m" => {
                let mut it = value.split_whitespace();
                let kind = it.next().unwrap_or_default();
                self.initial_m = match kind {
                    "constant" => {
                        let vals: Result<Vec<f64>, _> = it.map(parse_f64).collect();
                        let vals = vals?;
                        if vals.is_empty() || vals.len() > 2 {
                            return Err(ConfigError::Parse {
                                line,
                                msg: "constant needs one value per component".into(),
                            });
                        }
                        InitialMSpec::Constant(vals)
                    }
                    "seeded-random" => {
                        let seed = parse_u64(it.next().ok_or_else(|| ConfigError::Parse {
                            line,
                            msg: "seeded-random needs '<seed> <amplitude>'".into(),
                        })?)?;
                        let amplitude =
                            parse_f64(it.next().ok_or_else(|| ConfigError::Parse {
                                line,
                                msg: "seeded-random needs '<seed> <amplitude>'".into(),
                            })?)?;
                        InitialMSpec::SeededRandom { seed, amplitude }
                    }
                    "signed-pattern" => InitialMSpec::SignedPattern,
                    "from-snapshot" => {
                        let path = it.next().ok_or_else(|| ConfigError::Parse {
                            line,
                            msg: "from-snapshot needs a path".into(),
                        })?;
                        InitialMSpec::FromSnapshot(PathBuf::from(path))
                    }
                    other => {
                        return Err(ConfigError::Parse {
                            line,
                            msg: format!("unknown initial-m kind '{other}'"),
                        })
                    }
                };
            }
            "bc" => {
                self.bc = match value {
                    "dirichlet" => BcSpec::Dirichlet,
                    "mixed" => BcSpec::Mixed,
                    other => {
                        return Err(ConfigError::Parse {
                            line,
                            msg: format!("bc must be 'dirichlet' or 'mixed', got '{other}'"),
                        })
                    }
                };
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "experiment" => self.experiment = Some(value.to_string()),
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    fn validate_cross_field(&mut self) -> Result<(), ConfigError> {
        // dt_max defaults follow dt0 when only dt0 was given.
        if self.is_set("dt0") && !self.is_set("dt_max") && self.params.dt_max < self.params.dt0 {
            self.params.dt_max = self.params.dt0;
        }
        self.params
            .validate()
            .map_err(|e| ConfigError::CrossField(e.to_string()))?;
        if self.bc == BcSpec::Mixed && self.dim != 1 {
            return Err(ConfigError::CrossField(
                "bc = mixed applies to 1D pressure only".into(),
            ));
        }
        if let InitialMSpec::Constant(vals) = &self.initial_m {
            if vals.len() > self.dim {
                return Err(ConfigError::CrossField(format!(
                    "initial-m constant has {} components but dim = {}",
                    vals.len(),
                    self.dim
                )));
            }
        }
        Ok(())
    }

    /// Override a default (used by experiments for keys the user didn't set).
    pub fn default_to(&mut self, key: &str, apply: impl FnOnce(&mut RunConfig)) {
        if !self.is_set(key) {
            apply(self);
        }
    }
}
