//! Time integration of master equations and state-comparison metrics.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::expint::{ExpOptions, ExponentialRk};
use crate::observables::{evaluate_many, Observable, StateRef};
use crate::ode::{DormandPrince, OdeOptions};
use crate::operators::Liouvillian;
use crate::state::{hermitian_eigenvalues, DensityMatrix};

/// Sampling times of a run, in units of the inverse energy scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    samples: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, samples: Vec<f64>) -> Result<Self> {
        if !(t_start >= 0.0) || !(t_end >= t_start) {
            return Err(Error::InvalidSpec(format!(
                "bad time window [{t_start}, {t_end}]"
            )));
        }
        if samples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpec(
                "sample times must be strictly increasing".into(),
            ));
        }
        if samples.iter().any(|&t| t < t_start || t > t_end) {
            return Err(Error::InvalidSpec(
                "sample times must lie inside the time window".into(),
            ));
        }
        Ok(Self {
            t_start,
            t_end,
            samples,
        })
    }

    /// `n_samples` equally spaced points including both ends.
    pub fn uniform(t_start: f64, t_end: f64, n_samples: usize) -> Result<Self> {
        let samples = match n_samples {
            0 => Vec::new(),
            1 => vec![t_end],
            n => (0..n)
                .map(|i| t_start + (t_end - t_start) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self::new(t_start, t_end, samples)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// A named time series with optional standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
}

/// Observable values (and optionally states) at each sample time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub series: Vec<Series>,
    pub states: Option<Vec<DensityMatrix>>,
}

impl TrajectoryRecord {
    pub fn with_observables(times: &[f64], observables: &[Observable]) -> Self {
        Self {
            times: times.to_vec(),
            series: observables
                .iter()
                .map(|o| Series {
                    name: o.name(),
                    values: vec![0.0; times.len()],
                    std_err: None,
                })
                .collect(),
            states: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.get(name).map(|s| s.values.as_slice())
    }

    pub(crate) fn set_row(&mut self, i: usize, row: &[f64]) {
        for (s, &v) in self.series.iter_mut().zip(row) {
            s.values[i] = v;
        }
    }
}

/// Per-series deviations between two records on the same sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub name: String,
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Compares the series two records share; also trace distances when both carry states.
pub fn compare_records(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
) -> Result<(Vec<Deviation>, Option<Vec<f64>>)> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(Error::InvalidSpec(
            "records have different sample times".into(),
        ));
    }
    let mut out = Vec::new();
    for s in &a.series {
        let Some(t) = b.get(&s.name) else { continue };
        let d: Vec<f64> = s
            .values
            .iter()
            .zip(&t.values)
            .map(|(x, y)| (x - y).abs())
            .collect();
        out.push(Deviation {
            name: s.name.clone(),
            max_abs: d.iter().copied().fold(0.0, f64::max),
            mean_abs: if d.is_empty() {
                0.0
            } else {
                d.iter().sum::<f64>() / d.len() as f64
            },
        });
    }
    if out.is_empty() && !a.series.is_empty() {
        return Err(Error::InvalidSpec("records share no series".into()));
    }
    let dist = match (&a.states, &b.states) {
        (Some(x), Some(y)) => Some(
            x.iter()
                .zip(y)
                .map(|(r, s)| trace_distance(r, s))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    Ok((out, dist))
}

/// Time-stepping scheme for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Exponential when the superoperator diagonal reaches [`STIFF_DIAGONAL`], else Dormand–Prince.
    #[default]
    Auto,
    DormandPrince,
    /// Exponential Runge–Kutta, exact in the superoperator diagonal.
    Exponential,
}

/// Diagonal magnitude beyond which [`Scheme::Auto`] switches to the exponential scheme.
pub const STIFF_DIAGONAL: f64 = 50.0;

/// Integration settings.
#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub observables: Vec<Observable>,
    pub keep_states: bool,
    pub scheme: Scheme,
}

impl IntegrateOptions {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            observables: Vec::new(),
            keep_states: false,
            scheme: Scheme::Auto,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn observing(mut self, observables: &[Observable]) -> Self {
        self.observables = observables.to_vec();
        self
    }

    pub fn keeping_states(mut self) -> Self {
        self.keep_states = true;
        self
    }
}

/// Integrates `ρ̇ = 𝓛ρ` from `rho0` with Dormand–Prince 5(4), sampling at the grid.
pub fn integrate(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    opts: &IntegrateOptions,
) -> Result<TrajectoryRecord> {
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::InvalidSpec("tolerances must be positive".into()));
    }
    if rho0.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: rho0.dim(),
        });
    }
    rho0.validate()?;
    let (n, levels) = (rho0.n_sites(), rho0.levels());
    let mut rec = TrajectoryRecord::with_observables(grid.samples(), &opts.observables);
    let mut states = Vec::new();
    let mut renormalize: Option<usize> = None;
    let sample = |i: usize, y: &[C64]| -> Result<()> {
        let mut rho = DensityMatrix::from_row_major(n, levels, y.to_vec())?;
        let drift = (rho.trace() - C64::new(1.0, 0.0))
            .norm()
            .max(rho.hermiticity_error());
        if drift > 1e-8 {
            log::warn!(
                "trace/Hermiticity drift {drift:e} at t = {}; renormalizing",
                grid.samples()[i]
            );
            rho.hermitize();
            rho.normalize_trace();
            renormalize.get_or_insert(i);
        }
        rec.set_row(
            i,
            &evaluate_many(&opts.observables, StateRef::Density(&rho))?,
        );
        if opts.keep_states {
            states.push(rho);
        }
        Ok(())
    };
    let lambda = match opts.scheme {
        Scheme::DormandPrince => None,
        Scheme::Exponential => Some(l.superoperator_diagonal()),
        Scheme::Auto => Some(l.superoperator_diagonal())
            .filter(|d| d.iter().any(|x| x.norm() >= STIFF_DIAGONAL)),
    };
    if let Some(lambda) = lambda {
        let eo = ExpOptions {
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
            initial_step: 1e-2,
            max_step: f64::INFINITY,
        };
        let mut rk = ExponentialRk::new(
            &lambda,
            |y: &[C64], dy: &mut [C64]| l.apply(y, dy),
            grid.t_start(),
            rho0.as_slice().to_vec(),
            eo,
        );
        rk.sample_at(grid.samples(), sample)?;
        log::debug!(
            "integrate (exponential): {} accepted, {} rejected steps",
            rk.accepted,
            rk.rejected
        );
    } else {
        let ode = OdeOptions {
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
            initial_step: 1e-3 / l.fast_rate(),
            max_step: f64::INFINITY,
        };
        let mut dp = DormandPrince::new(
            |_t, y: &[C64], dy: &mut [C64]| l.apply(y, dy),
            grid.t_start(),
            rho0.as_slice().to_vec(),
            ode,
        );
        dp.sample_at(grid.samples(), sample)?;
        log::debug!(
            "integrate: {} accepted, {} rejected steps",
            dp.accepted,
            dp.rejected
        );
    }
    if opts.keep_states {
        rec.states = Some(states);
    }
    Ok(rec)
}

/// `T(ρ, σ) = ½ Σ |eig(ρ − σ)|`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let diff = rho.to_dmatrix() - sigma.to_dmatrix();
    Ok(0.5
        * hermitian_eigenvalues(&diff)
            .iter()
            .map(|x| x.abs())
            .sum::<f64>())
}
