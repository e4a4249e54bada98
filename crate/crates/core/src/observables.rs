//! Observables on density matrices, pure states and classical distributions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::{occ, site_bit, ternary_digit, ternary_places, Levels, TL_DOWN, TL_UP};
use crate::error::{Error, Result};
use crate::state::{DensityMatrix, ProbabilityVector};

/// Lattice-averaged quantities; the name doubles as CSV column header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    /// `⟨n⟩ = Σ_k ⟨n_k⟩ / N`.
    MeanDensity,
    /// `⟨n²⟩ − ⟨n⟩²` with the intensive `n = Σ_k n_k / N`.
    DensityFluctuations,
    /// `g2(d) = Σ_k ⟨n_k n_{k+d}⟩ / N`, indices modulo N.
    G2(usize),
    /// `⟨σˣ⟩ = Σ_k ⟨σˣ_k⟩ / N` with `σˣ_k = |↑⟩⟨↓| + |↓⟩⟨↑|`.
    SigmaXMean,
    /// Arbitrary function of the classical configuration, one value per basis index.
    CustomDiagonal { name: String, values: Vec<f64> },
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::MeanDensity => "mean_density".into(),
            Observable::DensityFluctuations => "fluctuations".into(),
            Observable::G2(d) => format!("g2_{d}"),
            Observable::SigmaXMean => "sigma_x".into(),
            Observable::CustomDiagonal { name, .. } => name.clone(),
        }
    }

    /// Parses a column name back into an observable (custom ones excluded).
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mean_density" => Some(Observable::MeanDensity),
            "fluctuations" => Some(Observable::DensityFluctuations),
            "sigma_x" => Some(Observable::SigmaXMean),
            _ => name.strip_prefix("g2_")?.parse().ok().map(Observable::G2),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        !matches!(self, Observable::SigmaXMean)
    }

    fn check(&self, n_sites: usize, dim: usize) -> Result<()> {
        match self {
            Observable::G2(d) if *d == 0 || *d >= n_sites => Err(Error::InvalidSpec(format!(
                "g2 distance {d} outside [1, {}]",
                n_sites.saturating_sub(1)
            ))),
            Observable::CustomDiagonal { values, .. } if values.len() != dim => {
                Err(Error::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// A state in any of the supported representations.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Density(&'a DensityMatrix),
    Probabilities(&'a ProbabilityVector),
    Pure {
        n_sites: usize,
        levels: Levels,
        amplitudes: &'a [C64],
    },
}

/// Evaluates one observable; see [`evaluate_many`] for several at once.
pub fn evaluate(obs: &Observable, state: StateRef<'_>) -> Result<f64> {
    Ok(evaluate_many(std::slice::from_ref(obs), state)?[0])
}

/// Evaluates a list of observables sharing one pass over the populations.
pub fn evaluate_many(obs: &[Observable], state: StateRef<'_>) -> Result<Vec<f64>> {
    let (n, levels, probs) = match state {
        StateRef::Density(rho) => (rho.n_sites(), rho.levels(), rho.diagonal()),
        StateRef::Probabilities(p) => (p.n_sites(), Levels::Two, p.values().to_vec()),
        StateRef::Pure {
            n_sites,
            levels,
            amplitudes,
        } => (
            n_sites,
            levels,
            amplitudes.iter().map(|z| z.norm_sqr()).collect(),
        ),
    };
    let pop = Populations::new(n, levels, &probs);
    obs.iter()
        .map(|o| {
            o.check(n, probs.len())?;
            Ok(match o {
                Observable::SigmaXMean => match state {
                    StateRef::Density(rho) => sigma_x_density(rho),
                    StateRef::Pure { amplitudes, .. } => sigma_x_pure(n, levels, amplitudes),
                    StateRef::Probabilities(_) => {
                        return Err(Error::IncompatibleObservable {
                            observable: o.name(),
                            state: "a probability vector",
                        })
                    }
                },
                _ => pop.diagonal(o),
            })
        })
        .collect()
}

/// Normalized populations with per-index occupation lookups.
struct Populations<'a> {
    n: usize,
    levels: Levels,
    places: Vec<usize>,
    probs: &'a [f64],
    total: f64,
}

impl<'a> Populations<'a> {
    fn new(n: usize, levels: Levels, probs: &'a [f64]) -> Self {
        let total: f64 = probs.iter().sum();
        Self {
            n,
            levels,
            places: if levels == Levels::Three {
                ternary_places(n)
            } else {
                Vec::new()
            },
            probs,
            total: if total != 0.0 { total } else { 1.0 },
        }
    }

    #[inline]
    fn up(&self, c: usize, k: usize) -> bool {
        match self.levels {
            Levels::Two => occ(c, self.n, k),
            Levels::Three => ternary_digit(c, self.places[k]) == TL_UP,
        }
    }

    fn count(&self, c: usize) -> usize {
        match self.levels {
            Levels::Two => c.count_ones() as usize,
            Levels::Three => (0..self.n).filter(|&k| self.up(c, k)).count(),
        }
    }

    fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(c, &p)| p * f(c))
            .sum::<f64>()
            / self.total
    }

    fn diagonal(&self, o: &Observable) -> f64 {
        let nf = self.n as f64;
        match o {
            Observable::MeanDensity => self.expect(|c| self.count(c) as f64 / nf),
            Observable::DensityFluctuations => {
                let m1 = self.expect(|c| self.count(c) as f64 / nf);
                let m2 = self.expect(|c| (self.count(c) as f64 / nf).powi(2));
                m2 - m1 * m1
            }
            Observable::G2(d) => self.expect(|c| {
                (0..self.n)
                    .filter(|&k| self.up(c, k) && self.up(c, (k + d) % self.n))
                    .count() as f64
                    / nf
            }),
            Observable::CustomDiagonal { values, .. } => self.expect(|c| values[c]),
            Observable::SigmaXMean => unreachable!("off-diagonal observable"),
        }
    }
}

/// `(lower, upper)` index pairs connected by `σˣ_k`.
fn sigma_x_pairs(n: usize, levels: Levels, k: usize) -> Box<dyn Iterator<Item = (usize, usize)>> {
    match levels {
        Levels::Two => {
            let b = site_bit(n, k);
            Box::new(
                (0..1usize << n)
                    .filter(move |c| c & b == 0)
                    .map(move |c| (c, c | b)),
            )
        }
        Levels::Three => {
            let p = ternary_places(n)[k];
            Box::new(
                (0..3usize.pow(n as u32))
                    .filter(move |&c| ternary_digit(c, p) == TL_DOWN)
                    .map(move |c| (c, c - (TL_DOWN - TL_UP) * p)),
            )
        }
    }
}

fn sigma_x_density(rho: &DensityMatrix) -> f64 {
    let n = rho.n_sites();
    let tr = rho.trace().re;
    let s: f64 = (0..n)
        .flat_map(|k| sigma_x_pairs(n, rho.levels(), k))
        .map(|(a, b)| rho.get(a, b).re + rho.get(b, a).re)
        .sum();
    s / n as f64 / if tr != 0.0 { tr } else { 1.0 }
}

fn sigma_x_pure(n: usize, levels: Levels, psi: &[C64]) -> f64 {
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let s: f64 = (0..n)
        .flat_map(|k| sigma_x_pairs(n, levels, k))
        .map(|(a, b)| 2.0 * (psi[a].conj() * psi[b]).re)
        .sum();
    s / n as f64 / if norm != 0.0 { norm } else { 1.0 }
}

/// Checks `𝒪 = P†𝒪` for an observable matrix and a superoperator projector `P`
/// acting on row-major vectorizations.
pub fn is_reduced_admissible(observable: &DMatrix<C64>, p: &DMatrix<C64>) -> bool {
    let d = observable.nrows();
    if p.nrows() != d * d || p.ncols() != d * d {
        return false;
    }
    let v = DVector::from_iterator(
        d * d,
        (0..d).flat_map(|r| (0..d).map(move |c| observable[(r, c)])),
    );
    let back = p.adjoint() * &v;
    (back - v).norm() < 1e-10
}
