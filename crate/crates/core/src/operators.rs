//! Hamiltonians, jump operators and matrix-free Liouvillians.
//!
//! A [`Liouvillian`] is stored in the form
//! `ρ̇ = Kρ + ρK† + Σ_s A_s ρ B_s`, which covers Lindblad generators
//! (`K = −iH − ½ΣJ†J`, sandwiches `(J, J†)`) as well as the non-Lindblad
//! reduced EIT equation. Density matrices are row-major, and the explicit
//! superoperator acts on row-major vectorizations: `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::basis::{
    checked_dim, occ, site_bit, ternary_digit, ternary_places, Configuration, Levels, TL_DOWN,
    TL_MID, TL_UP,
};
use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, Execution};
use crate::model::{DephasingParams, EitParams, InteractionMatrix};
use crate::sparse::CsrMatrix;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Largest chain handled matrix-free by the two-level builders.
pub const TWO_LEVEL_MAX_SITES: usize = 14;
/// Largest two-level chain for which an explicit superoperator is built.
pub const TWO_LEVEL_MAX_EXPLICIT: usize = 10;
/// Largest chain handled matrix-free by the three-level builder.
pub const THREE_LEVEL_MAX_SITES: usize = 8;
/// Largest three-level chain for which an explicit superoperator is built.
pub const THREE_LEVEL_MAX_EXPLICIT: usize = 6;

/// `h_k(1) = Δ + Σ_{q≠k} V_kq n_q`, the energy cost of exciting site `k`.
pub fn interaction_field_h(
    config: &Configuration,
    k: usize,
    interactions: &InteractionMatrix,
    detuning: f64,
) -> Result<f64> {
    config.check_site(k)?;
    check_sites(config, interactions)?;
    let row = interactions.row(k);
    Ok(detuning
        + (0..config.n_sites())
            .filter(|&q| q != k && config.occupied(q))
            .map(|q| row[q])
            .sum::<f64>())
}

/// Energy of sites `k, m` forced to `(n_k, n_m)` relative to both empty, others as in `config`.
pub fn pair_field_h(
    config: &Configuration,
    k: usize,
    m: usize,
    n_k: bool,
    n_m: bool,
    interactions: &InteractionMatrix,
    detuning: f64,
) -> Result<f64> {
    config.check_site(k)?;
    config.check_site(m)?;
    check_sites(config, interactions)?;
    if k == m {
        return Err(Error::SameSite(k));
    }
    let (rk, rm) = (interactions.row(k), interactions.row(m));
    let (mut sk, mut sm) = (0.0, 0.0);
    for q in (0..config.n_sites()).filter(|&q| q != k && q != m && config.occupied(q)) {
        sk += rk[q];
        sm += rm[q];
    }
    let (a, b) = (n_k as u8 as f64, n_m as u8 as f64);
    Ok(detuning * (a + b) + a * sk + b * sm + a * b * rk[m])
}

fn check_sites(config: &Configuration, interactions: &InteractionMatrix) -> Result<()> {
    if config.n_sites() != interactions.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: interactions.n_sites(),
            found: config.n_sites(),
        });
    }
    Ok(())
}

/// `h_k(1)` on a two-level index, without bounds checks.
#[inline]
pub(crate) fn field_bits(
    index: usize,
    n: usize,
    k: usize,
    v: &InteractionMatrix,
    delta: f64,
) -> f64 {
    let row = v.row(k);
    let mut h = delta;
    for q in 0..n {
        if q != k && occ(index, n, q) {
            h += row[q];
        }
    }
    h
}

/// Diagonal of `H0 = Δ Σ n_k + ½ Σ_{k≠m} V_km n_k n_m` over the two-level basis.
pub fn two_level_energies(v: &InteractionMatrix, detuning: f64) -> Vec<f64> {
    let n = v.n_sites();
    (0..1usize << n)
        .map(|c| {
            let mut e = 0.0;
            for k in (0..n).filter(|&k| occ(c, n, k)) {
                e += detuning;
                for m in (k + 1..n).filter(|&m| occ(c, n, m)) {
                    e += v.get(k, m);
                }
            }
            e
        })
        .collect()
}

/// Diagonal of `H0` over the three-level basis (only ↑ carries energy).
pub fn three_level_energies(v: &InteractionMatrix, detuning: f64) -> Vec<f64> {
    let n = v.n_sites();
    let places = ternary_places(n);
    (0..3usize.pow(n as u32))
        .map(|c| {
            let up: Vec<usize> = (0..n)
                .filter(|&k| ternary_digit(c, places[k]) == TL_UP)
                .collect();
            let mut e = detuning * up.len() as f64;
            for (a, &k) in up.iter().enumerate() {
                for &m in &up[a + 1..] {
                    e += v.get(k, m);
                }
            }
            e
        })
        .collect()
}

/// Two-level occupation `n_k`.
pub fn number_op(n: usize, k: usize) -> CsrMatrix {
    let b = site_bit(n, k);
    CsrMatrix::from_triplets(
        1 << n,
        1 << n,
        (0..1usize << n)
            .filter(|c| c & b != 0)
            .map(|c| (c, c, ONE))
            .collect(),
    )
}

/// Two-level lowering operator `σ⁻_k = |↓⟩⟨↑|`.
pub fn lowering_op(n: usize, k: usize) -> CsrMatrix {
    let b = site_bit(n, k);
    CsrMatrix::from_triplets(
        1 << n,
        1 << n,
        (0..1usize << n)
            .filter(|c| c & b != 0)
            .map(|c| (c ^ b, c, ONE))
            .collect(),
    )
}

/// Two-level `σˣ_k`.
pub fn sigma_x_op(n: usize, k: usize) -> CsrMatrix {
    let b = site_bit(n, k);
    CsrMatrix::from_triplets(
        1 << n,
        1 << n,
        (0..1usize << n).map(|c| (c ^ b, c, ONE)).collect(),
    )
}

/// Three-level single-site transition `|to⟩⟨from|` on site `k` (digits in (↑,←,↓) order).
pub fn three_level_transition(n: usize, k: usize, to: usize, from: usize) -> CsrMatrix {
    let places = ternary_places(n);
    let dim = 3usize.pow(n as u32);
    let p = places[k];
    CsrMatrix::from_triplets(
        dim,
        dim,
        (0..dim)
            .filter(|&c| ternary_digit(c, p) == from)
            .map(|c| (c + to * p - from * p, c, ONE))
            .collect(),
    )
}

/// Matrix-free generator `ρ̇ = Kρ + ρK† + Σ_s A_s ρ B_s`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n_sites: usize,
    levels: Levels,
    dim: usize,
    k: CsrMatrix,
    k_adj: CsrMatrix,
    sandwiches: Vec<(CsrMatrix, CsrMatrix)>,
    fast_rate: f64,
    max_explicit_sites: usize,
    exec: Execution,
}

impl Liouvillian {
    /// General form from `K` and sandwich pairs `(A, B)`.
    pub fn from_parts(
        n_sites: usize,
        levels: Levels,
        k: CsrMatrix,
        sandwiches: Vec<(CsrMatrix, CsrMatrix)>,
    ) -> Result<Self> {
        let dim = checked_dim(levels.base(), n_sites)?;
        let shapes_ok = k.nrows() == dim
            && k.ncols() == dim
            && sandwiches.iter().all(|(a, b)| {
                a.nrows() == dim && a.ncols() == dim && b.nrows() == dim && b.ncols() == dim
            });
        if !shapes_ok {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: k.nrows(),
            });
        }
        let max_explicit_sites = match levels {
            Levels::Two => TWO_LEVEL_MAX_EXPLICIT,
            Levels::Three => THREE_LEVEL_MAX_EXPLICIT,
        };
        let k_adj = k.adjoint();
        Ok(Self {
            n_sites,
            levels,
            dim,
            k,
            k_adj,
            sandwiches,
            fast_rate: 1.0,
            max_explicit_sites,
            exec: Execution::default(),
        })
    }

    /// Lindblad form `−i[H, ρ] + Σ_j (J ρ J† − ½{J†J, ρ})`.
    pub fn lindblad(
        n_sites: usize,
        levels: Levels,
        h: &CsrMatrix,
        jumps: &[CsrMatrix],
    ) -> Result<Self> {
        let mut k = h.scale(-I);
        let mut sandwiches = Vec::with_capacity(jumps.len());
        for j in jumps {
            let jd = j.adjoint();
            k = k.add(&jd.matmul(j).scale(C64::new(-0.5, 0.0)));
            sandwiches.push((j.clone(), jd));
        }
        Self::from_parts(n_sites, levels, k, sandwiches)
    }

    /// Sum of two generators on the same space.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.levels != other.levels {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut sandwiches = self.sandwiches.clone();
        sandwiches.extend(other.sandwiches.iter().cloned());
        let mut out =
            Self::from_parts(self.n_sites, self.levels, self.k.add(&other.k), sandwiches)?;
        out.fast_rate = self.fast_rate.max(other.fast_rate);
        out.exec = self.exec;
        Ok(out)
    }

    pub fn with_fast_rate(mut self, rate: f64) -> Self {
        if rate > 0.0 && rate.is_finite() {
            self.fast_rate = rate;
        }
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    /// Hilbert-space dimension `b^N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fastest dissipative rate, used to set the first integration step.
    pub fn fast_rate(&self) -> f64 {
        self.fast_rate
    }

    /// `out = 𝓛 rho` on row-major `dim × dim` slices.
    pub fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        assert_eq!(rho.len(), d * d);
        assert_eq!(out.len(), d * d);
        let rows_per_chunk = (4096 / d).max(1);
        let exec = if d >= 64 {
            self.exec
        } else {
            Execution::Sequential
        };
        for_each_chunk_mut(exec, out, rows_per_chunk * d, |ci, chunk| {
            let mut tmp = vec![ZERO; d];
            for (r, out_row) in chunk.chunks_mut(d).enumerate() {
                self.apply_row(ci * rows_per_chunk + r, rho, out_row, &mut tmp);
            }
        });
    }

    fn apply_row(&self, i: usize, rho: &[C64], out_row: &mut [C64], tmp: &mut [C64]) {
        let d = self.dim;
        out_row.fill(ZERO);
        let (cols, vals) = self.k.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            axpy(a, &rho[j * d..(j + 1) * d], out_row);
        }
        right_mul_acc(&rho[i * d..(i + 1) * d], &self.k_adj, out_row);
        for (a, b) in &self.sandwiches {
            let (cols, vals) = a.row(i);
            if cols.is_empty() {
                continue;
            }
            tmp.fill(ZERO);
            for (&j, &x) in cols.iter().zip(vals) {
                axpy(x, &rho[j * d..(j + 1) * d], tmp);
            }
            right_mul_acc(tmp, b, out_row);
        }
    }

    /// Diagonal of the superoperator on row-major vectorizations.
    pub fn superoperator_diagonal(&self) -> Vec<C64> {
        let d = self.dim;
        let kd: Vec<C64> = (0..d).map(|i| self.k.get(i, i)).collect();
        let sd: Vec<(Vec<C64>, Vec<C64>)> = self
            .sandwiches
            .iter()
            .map(|(a, b)| {
                (
                    (0..d).map(|i| a.get(i, i)).collect(),
                    (0..d).map(|j| b.get(j, j)).collect(),
                )
            })
            .collect();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut x = kd[i] + kd[j].conj();
                for (a, b) in &sd {
                    x += a[i] * b[j];
                }
                out.push(x);
            }
        }
        out
    }

    /// Sparse superoperator on row-major vectorizations.
    pub fn superoperator_sparse(&self) -> Result<CsrMatrix> {
        if self.n_sites > self.max_explicit_sites {
            return Err(Error::DimensionGuard {
                what: "explicit superoperator",
                n_sites: self.n_sites,
                max: self.max_explicit_sites,
            });
        }
        let id = CsrMatrix::identity(self.dim);
        let mut s = self.k.kron(&id).add(&id.kron(&self.k.conj()));
        for (a, b) in &self.sandwiches {
            s = s.add(&a.kron(&b.transpose()));
        }
        Ok(s)
    }

    /// Dense superoperator; intended for Liouville dimensions up to a few thousand.
    pub fn superoperator_dense(&self) -> Result<DMatrix<C64>> {
        Ok(self.superoperator_sparse()?.to_dense())
    }

    pub fn k_matrix(&self) -> &CsrMatrix {
        &self.k
    }

    pub fn sandwiches(&self) -> &[(CsrMatrix, CsrMatrix)] {
        &self.sandwiches
    }
}

#[inline]
fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out += x B` for a row vector `x`.
#[inline]
fn right_mul_acc(x: &[C64], b: &CsrMatrix, out: &mut [C64]) {
    for (l, &xl) in x.iter().enumerate() {
        if xl == ZERO {
            continue;
        }
        let (cols, vals) = b.row(l);
        for (&m, &v) in cols.iter().zip(vals) {
            out[m] += xl * v;
        }
    }
}

/// Pieces of the two-level model kept apart for perturbative splittings.
#[derive(Debug, Clone)]
pub struct TwoLevelParts {
    pub h0: CsrMatrix,
    pub h1: CsrMatrix,
    pub dephasing_jumps: Vec<CsrMatrix>,
    pub decay_jumps: Vec<CsrMatrix>,
}

/// Operators of the two-level model: `H0`, `H1 = Ω Σσˣ`, `√γ n_k` and `√Γ σ⁻_k`.
pub fn two_level_parts(params: &DephasingParams, v: &InteractionMatrix) -> Result<TwoLevelParts> {
    params.validate()?;
    let n = v.n_sites();
    if n > TWO_LEVEL_MAX_SITES {
        return Err(Error::DimensionGuard {
            what: "two-level Liouvillian",
            n_sites: n,
            max: TWO_LEVEL_MAX_SITES,
        });
    }
    let e = two_level_energies(v, params.detuning);
    let h0 = CsrMatrix::diagonal(&e.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>());
    let mut h1 = CsrMatrix::zeros(1 << n, 1 << n);
    for k in 0..n {
        h1 = h1.add(&sigma_x_op(n, k));
    }
    let h1 = h1.scale(C64::new(params.rabi_omega, 0.0));
    let sg = C64::new(params.dephasing_gamma.sqrt(), 0.0);
    let sr = C64::new(params.decay_gamma_ryd.sqrt(), 0.0);
    let dephasing_jumps = if params.dephasing_gamma > 0.0 {
        (0..n).map(|k| number_op(n, k).scale(sg)).collect()
    } else {
        Vec::new()
    };
    let decay_jumps = if params.decay_gamma_ryd > 0.0 {
        (0..n).map(|k| lowering_op(n, k).scale(sr)).collect()
    } else {
        Vec::new()
    };
    Ok(TwoLevelParts {
        h0,
        h1,
        dephasing_jumps,
        decay_jumps,
    })
}

/// Full two-level master equation with dephasing and optional Rydberg decay.
pub fn build_two_level_liouvillian(
    params: &DephasingParams,
    v: &InteractionMatrix,
) -> Result<Liouvillian> {
    let parts = two_level_parts(params, v)?;
    let jumps: Vec<CsrMatrix> = parts
        .dephasing_jumps
        .iter()
        .chain(&parts.decay_jumps)
        .cloned()
        .collect();
    let fast = params
        .dephasing_gamma
        .max(params.decay_gamma_ryd)
        .max(params.rabi_omega);
    Ok(
        Liouvillian::lindblad(v.n_sites(), Levels::Two, &parts.h0.add(&parts.h1), &jumps)?
            .with_fast_rate(fast),
    )
}

/// Pieces of the three-level model.
#[derive(Debug, Clone)]
pub struct ThreeLevelParts {
    pub h0: CsrMatrix,
    pub h1: CsrMatrix,
    pub decay_jumps: Vec<CsrMatrix>,
}

/// Operators of the EIT model: `H0`, the probe/control couplings and `√Γ |↓⟩⟨←|`.
pub fn three_level_parts(params: &EitParams, v: &InteractionMatrix) -> Result<ThreeLevelParts> {
    params.validate()?;
    let n = v.n_sites();
    if n > THREE_LEVEL_MAX_SITES {
        return Err(Error::DimensionGuard {
            what: "three-level Liouvillian",
            n_sites: n,
            max: THREE_LEVEL_MAX_SITES,
        });
    }
    let dim = 3usize.pow(n as u32);
    let e = three_level_energies(v, params.detuning);
    let h0 = CsrMatrix::diagonal(&e.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>());
    let mut h1 = CsrMatrix::zeros(dim, dim);
    let (wp, wc) = (C64::new(params.omega_p, 0.0), C64::new(params.omega_c, 0.0));
    for k in 0..n {
        let probe = three_level_transition(n, k, TL_DOWN, TL_MID);
        let control = three_level_transition(n, k, TL_MID, TL_UP);
        h1 = h1
            .add(&probe.add(&probe.adjoint()).scale(wp))
            .add(&control.add(&control.adjoint()).scale(wc));
    }
    let sg = C64::new(params.decay_gamma.sqrt(), 0.0);
    let decay_jumps = (0..n)
        .map(|k| three_level_transition(n, k, TL_DOWN, TL_MID).scale(sg))
        .collect();
    Ok(ThreeLevelParts {
        h0,
        h1,
        decay_jumps,
    })
}

/// Full three-level EIT master equation.
pub fn build_three_level_liouvillian(
    params: &EitParams,
    v: &InteractionMatrix,
) -> Result<Liouvillian> {
    let parts = three_level_parts(params, v)?;
    Ok(Liouvillian::lindblad(
        v.n_sites(),
        Levels::Three,
        &parts.h0.add(&parts.h1),
        &parts.decay_jumps,
    )?
    .with_fast_rate(params.decay_gamma))
}
