//! Experiment configuration: JSON schema, defaults and up-front validation.

use std::path::PathBuf;

use rydeff_core::model::{DephasingParams, EitParams, LatticeSpec};
use rydeff_core::observables::Observable;
use serde::{Deserialize, Serialize};

/// Problem with a configuration, reported with the offending field path.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FullIntegrate,
    Qjmc,
    Rate2,
    Rate4,
    Kmc,
    EitFull,
    EitReduced,
    EitExclusion,
    EitNonpert,
    SteadyState,
    PositivityScan,
    Compare,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FullIntegrate => "full-integrate",
            Method::Qjmc => "qjmc",
            Method::Rate2 => "rate2",
            Method::Rate4 => "rate4",
            Method::Kmc => "kmc",
            Method::EitFull => "eit-full",
            Method::EitReduced => "eit-reduced",
            Method::EitExclusion => "eit-exclusion",
            Method::EitNonpert => "eit-nonpert",
            Method::SteadyState => "steady-state",
            Method::PositivityScan => "positivity-scan",
            Method::Compare => "compare",
        }
    }

    fn needs_time(self) -> bool {
        !matches!(
            self,
            Method::SteadyState | Method::PositivityScan | Method::Compare
        )
    }

    fn needs_dephasing(self) -> bool {
        matches!(
            self,
            Method::FullIntegrate
                | Method::Qjmc
                | Method::Rate2
                | Method::Rate4
                | Method::Kmc
                | Method::PositivityScan
        )
    }

    fn needs_eit(self) -> bool {
        matches!(
            self,
            Method::EitFull
                | Method::EitReduced
                | Method::EitExclusion
                | Method::EitNonpert
                | Method::Compare
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    /// Number of equally spaced sample times, both ends included.
    pub samples: usize,
}

/// Initial product state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    AllDown,
    /// Per-site Rydberg occupations; other sites start in the ground state.
    Occupations(Vec<bool>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
        }
    }
}

/// `(V, Δ)` grid of a positivity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_v: usize,
    pub n_delta: usize,
}

/// Parameter lists whose Cartesian product is run in turn.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nn_strength: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dephasing_gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_gamma: Option<Vec<f64>>,
}

fn default_observables() -> Vec<String> {
    vec!["mean_density".into(), "fluctuations".into()]
}

fn default_trajectories() -> usize {
    2000
}

fn default_kmc_runs() -> usize {
    10_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("rydeff-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub methods: Vec<Method>,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub dephasing: Option<DephasingParams>,
    #[serde(default)]
    pub eit: Option<EitParams>,
    #[serde(default)]
    pub time: Option<TimeSpec>,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_kmc_runs")]
    pub kmc_runs: usize,
    /// KMC interaction range in sites; derived from the rate tolerance when absent.
    #[serde(default)]
    pub kmc_cutoff: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// One concrete parameter set drawn from the sweep.
#[derive(Debug, Clone)]
pub struct Point {
    pub lattice: LatticeSpec,
    pub dephasing: Option<DephasingParams>,
    pub eit: Option<EitParams>,
    /// `key=value` pairs distinguishing this point, empty without a sweep.
    pub labels: Vec<(String, String)>,
}

impl Point {
    pub fn suffix(&self) -> String {
        self.labels
            .iter()
            .map(|(k, v)| format!("_{k}={v}"))
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn parsed_observables(&self) -> Result<Vec<Observable>, ConfigError> {
        self.observables
            .iter()
            .enumerate()
            .map(|(i, name)| {
                Observable::from_name(name).ok_or_else(|| {
                    invalid(
                        format!("observables[{i}]"),
                        format!("unknown observable `{name}`"),
                    )
                })
            })
            .collect()
    }

    /// Cartesian product of the sweep lists, in declaration order.
    pub fn points(&self) -> Vec<Point> {
        let mut points = vec![Point {
            lattice: self.lattice.clone(),
            dephasing: self.dephasing,
            eit: self.eit,
            labels: Vec::new(),
        }];
        let s = &self.sweep;
        fn expand<T: Copy + ToString>(
            points: Vec<Point>,
            key: &str,
            values: &Option<Vec<T>>,
            set: impl Fn(&mut Point, T),
        ) -> Vec<Point> {
            let Some(values) = values else { return points };
            points
                .into_iter()
                .flat_map(|p| {
                    values
                        .iter()
                        .map(|&v| {
                            let mut q = p.clone();
                            set(&mut q, v);
                            q.labels.push((key.to_string(), v.to_string()));
                            q
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        points = expand(points, "n_sites", &s.n_sites, |p, v| p.lattice.n_sites = v);
        points = expand(points, "nn_strength", &s.nn_strength, |p, v| {
            p.lattice.nn_strength = v
        });
        points = expand(points, "detuning", &s.detuning, |p, v| {
            if let Some(d) = p.dephasing.as_mut() {
                d.detuning = v;
            }
            if let Some(e) = p.eit.as_mut() {
                e.detuning = v;
            }
        });
        points = expand(points, "dephasing_gamma", &s.dephasing_gamma, |p, v| {
            if let Some(d) = p.dephasing.as_mut() {
                d.dephasing_gamma = v;
            }
        });
        points = expand(points, "omega_p", &s.omega_p, |p, v| {
            if let Some(e) = p.eit.as_mut() {
                e.omega_p = v;
            }
        });
        points = expand(points, "decay_gamma", &s.decay_gamma, |p, v| {
            if let Some(e) = p.eit.as_mut() {
                e.decay_gamma = v;
            }
        });
        points
    }

    /// Checks every method-specific requirement before any computation starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method is required"));
        }
        let observables = self.parsed_observables()?;
        if observables.is_empty() {
            return Err(invalid(
                "observables",
                "at least one observable is required",
            ));
        }
        for (i, m) in self.methods.iter().enumerate() {
            let field = format!("methods[{i}]");
            if m.needs_dephasing() && self.dephasing.is_none() {
                return Err(invalid(
                    "dephasing",
                    format!("required by {field} = {}", m.name()),
                ));
            }
            if m.needs_eit() && self.eit.is_none() {
                return Err(invalid(
                    "eit",
                    format!("required by {field} = {}", m.name()),
                ));
            }
            if *m == Method::SteadyState && self.dephasing.is_some() == self.eit.is_some() {
                return Err(invalid(
                    "dephasing",
                    "steady-state needs exactly one of `dephasing` and `eit`",
                ));
            }
            if m.needs_time() && self.time.is_none() {
                return Err(invalid(
                    "time",
                    format!("required by {field} = {}", m.name()),
                ));
            }
            if *m == Method::PositivityScan && self.scan.is_none() {
                return Err(invalid(
                    "scan",
                    format!("required by {field} = positivity-scan"),
                ));
            }
            if *m == Method::Rate4 && self.dephasing.is_some_and(|d| d.decay_gamma_ryd != 0.0) {
                return Err(invalid(
                    "dephasing.decay_gamma_ryd",
                    "rate4 does not support spontaneous decay",
                ));
            }
        }
        if let Some(t) = &self.time {
            if !(t.t_end.is_finite() && t.t_start.is_finite() && t.t_end >= t.t_start) {
                return Err(invalid(
                    "time.t_end",
                    "must be finite and not before time.t_start",
                ));
            }
            if t.samples == 0 {
                return Err(invalid("time.samples", "must be positive"));
            }
        }
        if let Some(s) = &self.scan {
            if s.n_v == 0 || s.n_delta == 0 {
                return Err(invalid("scan", "grid sizes must be positive"));
            }
        }
        if self.methods.contains(&Method::Qjmc) && self.trajectories < 2 {
            return Err(invalid("trajectories", "must be at least 2"));
        }
        if self.methods.contains(&Method::Kmc) && self.kmc_runs < 2 {
            return Err(invalid("kmc_runs", "must be at least 2"));
        }
        let tol = self.tolerances;
        if !(tol.rel_tol > 0.0 && tol.abs_tol > 0.0) {
            return Err(invalid(
                "tolerances",
                "rel_tol and abs_tol must be positive",
            ));
        }
        let s = &self.sweep;
        if s.dephasing_gamma.is_some() && self.dephasing.is_none() {
            return Err(invalid(
                "sweep.dephasing_gamma",
                "needs a `dephasing` block",
            ));
        }
        if (s.omega_p.is_some() || s.decay_gamma.is_some()) && self.eit.is_none() {
            return Err(invalid(
                "sweep",
                "omega_p and decay_gamma need an `eit` block",
            ));
        }
        for (key, len) in [
            ("n_sites", s.n_sites.as_ref().map(Vec::len)),
            ("nn_strength", s.nn_strength.as_ref().map(Vec::len)),
            ("detuning", s.detuning.as_ref().map(Vec::len)),
            ("dephasing_gamma", s.dephasing_gamma.as_ref().map(Vec::len)),
            ("omega_p", s.omega_p.as_ref().map(Vec::len)),
            ("decay_gamma", s.decay_gamma.as_ref().map(Vec::len)),
        ] {
            if len == Some(0) {
                return Err(invalid(format!("sweep.{key}"), "list must not be empty"));
            }
        }
        for point in self.points() {
            let n = point.lattice.n_sites;
            point
                .lattice
                .validate()
                .map_err(|e| invalid("lattice", e.to_string()))?;
            if let Some(d) = point.dephasing {
                d.validate()
                    .map_err(|e| invalid("dephasing", e.to_string()))?;
            }
            if let Some(e) = point.eit {
                e.validate()
                    .map_err(|err| invalid("eit", err.to_string()))?;
            }
            for (i, o) in observables.iter().enumerate() {
                if let Observable::G2(d) = o {
                    if *d == 0 || *d >= n {
                        return Err(invalid(
                            format!("observables[{i}]"),
                            format!("g2 distance must lie in [1, {}] for N = {n}", n - 1),
                        ));
                    }
                }
            }
            if let InitialState::Occupations(occ) = &self.initial {
                if occ.len() != n {
                    return Err(invalid(
                        "initial.occupations",
                        format!("length {} does not match N = {n}", occ.len()),
                    ));
                }
            }
        }
        Ok(())
    }
}
