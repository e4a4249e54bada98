//! Lattice geometry, interaction law and physical parameter sets.
//!
//! Energies are measured in units of the Rabi frequency Ω (two-level scheme)
//! or of the control frequency Ω_c (three-level scheme); times in the inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition of a one-dimensional chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// A one-dimensional chain with power-law pair interactions `V / d^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub n_sites: usize,
    /// 3 for dipole-dipole, 6 for van der Waals.
    pub exponent_p: u32,
    /// Nearest-neighbour interaction strength V.
    pub nn_strength: f64,
    pub boundary: Boundary,
    /// Optional range cutoff: pairs further apart than this do not interact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<usize>,
}

impl LatticeSpec {
    pub fn chain(n_sites: usize, exponent_p: u32, nn_strength: f64, boundary: Boundary) -> Self {
        Self {
            n_sites,
            exponent_p,
            nn_strength,
            boundary,
            max_distance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::InvalidSpec("n_sites must be at least 1".into()));
        }
        if !self.nn_strength.is_finite() {
            return Err(Error::InvalidSpec("nn_strength must be finite".into()));
        }
        if self.exponent_p == 0 {
            return Err(Error::InvalidSpec("exponent_p must be positive".into()));
        }
        if !matches!(self.exponent_p, 3 | 6) {
            log::warn!(
                "exponent_p = {} is neither 3 (dipolar) nor 6 (van der Waals)",
                self.exponent_p
            );
        }
        Ok(())
    }

    /// Chain distance between sites `k` and `m`.
    pub fn distance(&self, k: usize, m: usize) -> usize {
        let d = k.abs_diff(m);
        match self.boundary {
            Boundary::Periodic => d.min(self.n_sites - d),
            Boundary::Open => d,
        }
    }

    /// Coupling at chain distance `d >= 1`.
    pub fn coupling_at(&self, d: usize) -> f64 {
        if self.max_distance.is_some_and(|r| d > r) {
            return 0.0;
        }
        self.nn_strength / (d as f64).powi(self.exponent_p as i32)
    }

    /// Sites adjacent to `k` on the chain (none past an open edge).
    pub fn neighbours(&self, k: usize) -> impl Iterator<Item = usize> {
        let n = self.n_sites;
        let (left, right) = match self.boundary {
            Boundary::Periodic if n > 1 => (Some((k + n - 1) % n), Some((k + 1) % n)),
            Boundary::Periodic => (None, None),
            Boundary::Open => (k.checked_sub(1), (k + 1 < n).then_some(k + 1)),
        };
        let right = right.filter(|&r| Some(r) != left);
        left.into_iter().chain(right)
    }
}

/// Symmetric pair-coupling matrix `V_km` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    values: Vec<f64>,
}

impl InteractionMatrix {
    /// Wraps a row-major `n × n` matrix after checking symmetry and the zero diagonal.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec(
                "interaction matrix must be nonempty".into(),
            ));
        }
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        for k in 0..n {
            if values[k * n + k] != 0.0 {
                return Err(Error::InvalidSpec(format!("V[{k}][{k}] must vanish")));
            }
            for m in 0..k {
                let (a, b) = (values[k * n + m], values[m * n + k]);
                if !a.is_finite() || a != b {
                    return Err(Error::InvalidSpec(format!(
                        "V[{k}][{m}] = {a} but V[{m}][{k}] = {b}"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.values[k * self.n + m]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.values
    }
}

/// Builds `V_km = V / d(k,m)^p` for a chain.
pub fn build_chain_interactions(spec: &LatticeSpec) -> Result<InteractionMatrix> {
    spec.validate()?;
    let n = spec.n_sites;
    let mut values = vec![0.0; n * n];
    for k in 0..n {
        for m in 0..n {
            if k != m {
                values[k * n + m] = spec.coupling_at(spec.distance(k, m));
            }
        }
    }
    InteractionMatrix::from_row_major(n, values)
}

/// Parameters of the strongly dephased two-level gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingParams {
    pub rabi_omega: f64,
    #[serde(default)]
    pub detuning: f64,
    pub dephasing_gamma: f64,
    #[serde(default)]
    pub decay_gamma_ryd: f64,
}

impl DephasingParams {
    pub fn new(rabi_omega: f64, detuning: f64, dephasing_gamma: f64) -> Self {
        Self {
            rabi_omega,
            detuning,
            dephasing_gamma,
            decay_gamma_ryd: 0.0,
        }
    }

    pub fn with_decay(mut self, decay_gamma_ryd: f64) -> Self {
        self.decay_gamma_ryd = decay_gamma_ryd;
        self
    }

    /// Checks signs and finiteness. Regime warnings are logged, not raised.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rabi_omega,
            self.detuning,
            self.dephasing_gamma,
            self.decay_gamma_ryd,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec(
                "dephasing parameters must be finite".into(),
            ));
        }
        if self.rabi_omega < 0.0 || self.dephasing_gamma < 0.0 || self.decay_gamma_ryd < 0.0 {
            return Err(Error::InvalidSpec(
                "rabi_omega, dephasing_gamma and decay_gamma_ryd must be nonnegative".into(),
            ));
        }
        if !self.is_perturbative() {
            log::warn!(
                "gamma = {} < 5 Omega = {}: outside the strong-dephasing regime",
                self.dephasing_gamma,
                5.0 * self.rabi_omega
            );
        }
        if self.decay_gamma_ryd > self.dephasing_gamma / 10.0 {
            log::warn!(
                "decay rate {} is not small against gamma",
                self.decay_gamma_ryd
            );
        }
        Ok(())
    }

    pub fn is_perturbative(&self) -> bool {
        self.dephasing_gamma >= 5.0 * self.rabi_omega
    }

    /// Effective dynamics need `γ > 0`.
    pub fn require_dephasing(&self) -> Result<()> {
        if self.dephasing_gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidSpec(
                "effective rate dynamics require dephasing_gamma > 0".into(),
            ))
        }
    }
}

/// Parameters of the three-level EIT scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EitParams {
    pub omega_p: f64,
    pub omega_c: f64,
    #[serde(default)]
    pub detuning: f64,
    /// Decay rate Γ of the intermediate level.
    pub decay_gamma: f64,
}

impl EitParams {
    pub fn new(omega_p: f64, omega_c: f64, detuning: f64, decay_gamma: f64) -> Self {
        Self {
            omega_p,
            omega_c,
            detuning,
            decay_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_p, self.omega_c, self.detuning, self.decay_gamma];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("EIT parameters must be finite".into()));
        }
        if self.omega_p < 0.0 || self.omega_c < 0.0 {
            return Err(Error::InvalidSpec(
                "omega_p and omega_c must be nonnegative".into(),
            ));
        }
        if self.decay_gamma <= 0.0 {
            return Err(Error::InvalidSpec("decay_gamma must be positive".into()));
        }
        if !self.is_valid_regime() {
            log::warn!(
                "decay_gamma = {} is not large against the drives",
                self.decay_gamma
            );
        }
        Ok(())
    }

    pub fn is_valid_regime(&self) -> bool {
        self.decay_gamma >= 10.0 * self.omega_p.max(self.omega_c)
    }
}
