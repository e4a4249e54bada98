//! Brute-force projection-operator expansion on explicit superoperators.
//!
//! For a split `𝓛 = 𝓛₀ + 𝓛₁` this module builds the projector `P` onto the
//! stationary subspace of `𝓛₀`, the resolvent `R = ∫₀^∞ e^{τ𝓛₀} Q dτ` and the
//! time-local effective generators of orders one to four. Everything is dense
//! and limited to Liouville dimensions of a few thousand; the results serve as
//! ground truth for the closed-form effective equations.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::basis::Levels;
use crate::error::{Error, Result};
use crate::model::{DephasingParams, EitParams, InteractionMatrix};
use crate::operators::{three_level_parts, two_level_parts, Liouvillian};
use crate::sparse::CsrMatrix;

/// Largest Liouville dimension accepted by the oracle.
pub const ORACLE_MAX_DIM: usize = 4096;

const ZERO_EIGENVALUE: f64 = 1e-9;

/// Explicit split `𝓛 = 𝓛₀ + 𝓛₁` together with `P` and `Q = 1 − P`.
#[derive(Debug, Clone)]
pub struct SuperoperatorSplit {
    pub l0: DMatrix<C64>,
    pub l1: DMatrix<C64>,
    pub p: DMatrix<C64>,
    pub q: DMatrix<C64>,
}

impl SuperoperatorSplit {
    pub fn new(l0: DMatrix<C64>, l1: DMatrix<C64>) -> Result<Self> {
        if l0.shape() != l1.shape() {
            return Err(Error::DimensionMismatch {
                expected: l0.nrows(),
                found: l1.nrows(),
            });
        }
        let p = build_projector(&l0)?;
        let q = DMatrix::identity(p.nrows(), p.ncols()) - &p;
        Ok(Self { l0, l1, p, q })
    }

    /// Two-level gas: `𝓛₀ = −i[H0, ·] + dephasing`, `𝓛₁ = −i[H1, ·]` plus any decay.
    pub fn dephasing(params: &DephasingParams, v: &InteractionMatrix) -> Result<Self> {
        let parts = two_level_parts(params, v)?;
        let n = v.n_sites();
        let l0 = Liouvillian::lindblad(n, Levels::Two, &parts.h0, &parts.dephasing_jumps)?;
        let l1 = Liouvillian::lindblad(n, Levels::Two, &parts.h1, &parts.decay_jumps)?;
        Self::new(explicit(&l0)?, explicit(&l1)?)
    }

    /// EIT gas with only the intermediate-level decay in `𝓛₀`.
    pub fn eit(params: &EitParams, v: &InteractionMatrix) -> Result<Self> {
        let parts = three_level_parts(params, v)?;
        let n = v.n_sites();
        let zero = CsrMatrix::zeros(parts.h0.nrows(), parts.h0.ncols());
        let l0 = Liouvillian::lindblad(n, Levels::Three, &zero, &parts.decay_jumps)?;
        let l1 = Liouvillian::lindblad(n, Levels::Three, &parts.h0.add(&parts.h1), &[])?;
        Self::new(explicit(&l0)?, explicit(&l1)?)
    }

    /// EIT gas with the interactions kept in `𝓛₀`.
    ///
    /// `P` stays the projector of the decay alone: `−i[H0, ·]` has purely imaginary
    /// eigenvalues on the `←`-free coherences, so it cannot define its own projector.
    pub fn eit_interacting(params: &EitParams, v: &InteractionMatrix) -> Result<Self> {
        let parts = three_level_parts(params, v)?;
        let n = v.n_sites();
        let p = Self::eit(params, v)?.p;
        let l0 = Liouvillian::lindblad(n, Levels::Three, &parts.h0, &parts.decay_jumps)?;
        let l1 = Liouvillian::lindblad(n, Levels::Three, &parts.h1, &[])?;
        let q = DMatrix::identity(p.nrows(), p.ncols()) - &p;
        Ok(Self {
            l0: explicit(&l0)?,
            l1: explicit(&l1)?,
            p,
            q,
        })
    }

    pub fn effective_generator(&self, order: usize) -> Result<EffectiveGenerator> {
        effective_generator(&self.l0, &self.l1, &self.p, order)
    }
}

fn explicit(l: &Liouvillian) -> Result<DMatrix<C64>> {
    let d2 = l.dim() * l.dim();
    if d2 > ORACLE_MAX_DIM {
        return Err(Error::DimensionGuard {
            what: "projection oracle",
            n_sites: l.n_sites(),
            max: l.n_sites().saturating_sub(1),
        });
    }
    l.superoperator_dense()
}

fn check_dim(m: &DMatrix<C64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidGenerator(format!(
            "{}x{} superoperator is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() > ORACLE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "Liouville dimension {} exceeds the oracle limit {ORACLE_MAX_DIM}",
            m.nrows()
        )));
    }
    Ok(())
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub fn eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    let t = nalgebra::Schur::new(m.clone()).unpack().1;
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Projector onto the stationary subspace of `l0` along its other eigenspaces.
pub fn build_projector(l0: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    check_dim(l0)?;
    let mut zeros = 0;
    for lam in eigenvalues(l0) {
        if lam.re > ZERO_EIGENVALUE {
            return Err(Error::InvalidGenerator(format!(
                "eigenvalue {lam} has positive real part"
            )));
        }
        if lam.norm() < ZERO_EIGENVALUE {
            zeros += 1;
        } else if lam.re.abs() < ZERO_EIGENVALUE {
            return Err(Error::Unsupported(format!(
                "purely imaginary eigenvalue {lam}"
            )));
        }
    }
    let n = l0.nrows();
    let svd = l0.clone().svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let scale = svd.singular_values.max().max(1.0);
    let kept: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] < ZERO_EIGENVALUE * scale)
        .collect();
    if kept.len() != zeros {
        return Err(Error::Unsupported(format!(
            "zero eigenvalue has algebraic multiplicity {zeros} but {} null vectors",
            kept.len()
        )));
    }
    let right = DMatrix::from_fn(n, kept.len(), |r, c| v_t[(kept[c], r)].conj());
    let left = DMatrix::from_fn(n, kept.len(), |r, c| u[(r, kept[c])]);
    let pairing = left.adjoint() * &right;
    let inv = pairing.try_inverse().ok_or_else(|| {
        Error::InvalidGenerator("left and right null vectors cannot be paired".into())
    })?;
    let p = &right * inv * left.adjoint();
    let idem = (&p * &p - &p).camax();
    let leak = (l0 * &p).camax().max((&p * l0).camax());
    if idem > 1e-10 * p.camax().max(1.0) || leak > 1e-10 * scale {
        return Err(Error::InvalidGenerator(format!(
            "projector defect {idem:e}, leakage {leak:e}"
        )));
    }
    Ok(p)
}

/// `R(s) = (s − 𝓛₀)⁻¹ Q` restricted to `range(Q)`; `s = 0` gives `∫₀^∞ e^{τ𝓛₀}Q dτ`.
pub fn shifted_resolvent(l0: &DMatrix<C64>, p: &DMatrix<C64>, s: C64) -> Result<DMatrix<C64>> {
    check_dim(l0)?;
    let n = l0.nrows();
    let q = DMatrix::identity(n, n) - p;
    let shifted = l0 - DMatrix::from_diagonal_element(n, n, s);
    let a = &q * shifted * &q + p;
    let lu = a.lu();
    let r = lu
        .solve(&(-&q))
        .ok_or_else(|| Error::SolverFailed("generator is singular on range(Q)".into()))?;
    Ok(&q * r)
}

pub fn resolvent(l0: &DMatrix<C64>, p: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    shifted_resolvent(l0, p, C64::new(0.0, 0.0))
}

/// Order-`α` generator on `range(P)`.
#[derive(Debug, Clone)]
pub struct EffectiveGenerator {
    pub order: usize,
    pub generator: DMatrix<C64>,
    /// Products ending in `P 𝓛₁ P`, reported without committing to a sign convention.
    pub unresolved: Vec<(&'static str, DMatrix<C64>)>,
}

impl EffectiveGenerator {
    pub fn unresolved_norm(&self) -> f64 {
        self.unresolved
            .iter()
            .map(|(_, m)| m.norm())
            .fold(0.0, f64::max)
    }
}

/// Time-local generators of the projected dynamics.
///
/// * 1: `P𝓛₁P`
/// * 2: `P𝓛₁R𝓛₁P`
/// * 3: `P𝓛₁R𝓛₁R𝓛₁P − P𝓛₁R²𝓛₁P𝓛₁P`
/// * 4: `P𝓛₁R𝓛₁R𝓛₁R𝓛₁P − P𝓛₁R²𝓛₁P𝓛₁R𝓛₁P`, with the remaining products that
///   end in `P𝓛₁P` listed in [`EffectiveGenerator::unresolved`].
pub fn effective_generator(
    l0: &DMatrix<C64>,
    l1: &DMatrix<C64>,
    p: &DMatrix<C64>,
    order: usize,
) -> Result<EffectiveGenerator> {
    check_dim(l0)?;
    if l1.shape() != l0.shape() || p.shape() != l0.shape() {
        return Err(Error::DimensionMismatch {
            expected: l0.nrows(),
            found: l1.nrows(),
        });
    }
    let pl1 = p * l1;
    let l1p = l1 * p;
    let mut unresolved = Vec::new();
    let generator = match order {
        1 => &pl1 * p,
        2..=4 => {
            let r = resolvent(l0, p)?;
            let l1r = l1 * &r;
            let pl1r = &pl1 * &r;
            match order {
                2 => &pl1r * &l1p,
                3 => {
                    let r2 = &r * &r;
                    &pl1r * &l1r * &l1p - &pl1 * &r2 * &l1p * &pl1 * p
                }
                _ => {
                    let r2 = &r * &r;
                    let pl1p = &pl1 * p;
                    unresolved.push(("P L1 R L1 R^2 L1 P L1 P", &pl1r * l1 * &r2 * &l1p * &pl1p));
                    unresolved.push(("P L1 R^2 L1 R L1 P L1 P", &pl1 * &r2 * &l1r * &l1p * &pl1p));
                    unresolved.push((
                        "P L1 R^3 L1 P L1 P L1 P",
                        &pl1 * &r2 * &r * &l1p * &pl1p * &pl1p,
                    ));
                    &pl1r * &l1r * &l1r * &l1p - &pl1 * &r2 * &l1p * &pl1r * &l1p
                }
            }
        }
        _ => return Err(Error::Unsupported(format!("expansion order {order}"))),
    };
    Ok(EffectiveGenerator {
        order,
        generator,
        unresolved,
    })
}

/// Second-order generator with `∫₀^{T} e^{τ𝓛₀}Q dτ` evaluated by the trapezoid rule.
pub fn quadrature_check(
    l0: &DMatrix<C64>,
    l1: &DMatrix<C64>,
    p: &DMatrix<C64>,
    t_cut: f64,
    n_steps: usize,
) -> Result<DMatrix<C64>> {
    check_dim(l0)?;
    if !(t_cut > 0.0) || n_steps == 0 {
        return Err(Error::InvalidSpec(
            "quadrature needs t_cut > 0 and at least one step".into(),
        ));
    }
    let n = l0.nrows();
    let q = DMatrix::identity(n, n) - p;
    let h = t_cut / n_steps as f64;
    let step = (l0 * C64::new(h, 0.0)).exp();
    let mut prop = q.clone();
    let mut integral = &q * C64::new(0.5 * h, 0.0);
    for i in 1..=n_steps {
        prop = &step * prop;
        let w = if i == n_steps { 0.5 * h } else { h };
        integral += &prop * C64::new(w, 0.0);
    }
    Ok(p * l1 * integral * l1 * p)
}

/// Row-major indices `i·d + i` of the diagonal matrix units.
pub fn diagonal_units(d: usize) -> Vec<usize> {
    (0..d).map(|i| i * d + i).collect()
}

/// Sub-matrix on the given units.
pub fn restrict(m: &DMatrix<C64>, units: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(units.len(), units.len(), |r, c| m[(units[r], units[c])])
}

/// `max |a − b| / max |b|`, with the denominator floored at `1e-300`.
pub fn relative_error(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).camax() / b.camax().max(1e-300)
}
