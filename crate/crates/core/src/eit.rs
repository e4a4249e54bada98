//! Reduced dynamics of the three-level EIT gas on the `{↑, ↓}` subspace.
//!
//! Eliminating the fast intermediate level `←` leaves a `2^N`-dimensional
//! Lindblad equation with jumps `L_k = (2/√Γ)(Ω_c σ⁻_k + Ω_p p_k)`, where
//! `p_k = 1 − n_k`. In the hard-core limit excitations next to an existing one
//! are never created, giving purely dissipative jumps
//! `J_k = (2/√Γ)(Ω_c 𝒫_k σ⁻_k + Ω_p p_k)` with `𝒫_k = p_{k−1} p_{k+1}`. A third
//! variant keeps the interactions inside the eliminated propagator through the
//! diagonal factors `𝓕_k = 1/(1 − i(2/Γ) h_k(1))`.
//!
//! Full three-level indices use the digits `↑ = 0`, `← = 1`, `↓ = 2` (site 0 most
//! significant); reduced indices set bit `k` for `↑`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::basis::{
    checked_dim, occ, site_bit, ternary_digit, ternary_places, Levels, TL_DOWN, TL_MID, TL_UP,
};
use crate::error::{Error, Result};
use crate::evolution::{integrate, IntegrateOptions, TimeGrid, TrajectoryRecord};
use crate::model::{Boundary, EitParams, InteractionMatrix};
use crate::operators::{
    field_bits, lowering_op, number_op, three_level_energies, two_level_energies, Liouvillian,
    THREE_LEVEL_MAX_SITES, TWO_LEVEL_MAX_SITES,
};
use crate::sparse::CsrMatrix;
use crate::state::DensityMatrix;
use crate::steady::{self, FastSlowSplit};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Weight on forbidden configurations tolerated in an exclusion-limit initial state.
pub const FORBIDDEN_WEIGHT_TOL: f64 = 1e-10;

/// Which reduced equation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedVariant {
    SecondOrder,
    NnExclusion { boundary: Boundary },
    NonPerturbative,
}

/// A reduced generator together with the subspace it is valid on.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub liouvillian: Liouvillian,
    pub variant: ReducedVariant,
    allowed: Option<Vec<bool>>,
}

/// Jump operators of the reduced equations.
#[derive(Debug, Clone)]
pub struct ReducedJumpSet {
    pub variant: ReducedVariant,
    pub jumps: Vec<CsrMatrix>,
}

fn projector_down(n: usize, k: usize) -> CsrMatrix {
    CsrMatrix::identity(1 << n).add(&number_op(n, k).scale(C64::new(-1.0, 0.0)))
}

/// Sites adjacent to `k` on a chain.
fn chain_neighbours(n: usize, k: usize, boundary: Boundary) -> Vec<usize> {
    let mut out = Vec::with_capacity(2);
    let cand = match boundary {
        Boundary::Periodic if n > 1 => [Some((k + n - 1) % n), Some((k + 1) % n)],
        Boundary::Periodic => [None, None],
        Boundary::Open => [k.checked_sub(1), (k + 1 < n).then_some(k + 1)],
    };
    for q in cand.into_iter().flatten() {
        if q != k && !out.contains(&q) {
            out.push(q);
        }
    }
    out
}

/// Jump operators for the dissipative variants.
pub fn reduced_jumps(
    params: &EitParams,
    n: usize,
    variant: ReducedVariant,
) -> Result<ReducedJumpSet> {
    params.validate()?;
    if n > TWO_LEVEL_MAX_SITES {
        return Err(Error::DimensionGuard {
            what: "reduced EIT jumps",
            n_sites: n,
            max: TWO_LEVEL_MAX_SITES,
        });
    }
    let s = 2.0 / params.decay_gamma.sqrt();
    let (wc, wp) = (
        C64::new(s * params.omega_c, 0.0),
        C64::new(s * params.omega_p, 0.0),
    );
    let jumps = (0..n)
        .map(|k| {
            let lower = match variant {
                ReducedVariant::NnExclusion { boundary } => chain_neighbours(n, k, boundary)
                    .into_iter()
                    .fold(CsrMatrix::identity(1 << n), |acc, q| {
                        acc.matmul(&projector_down(n, q))
                    })
                    .matmul(&lowering_op(n, k)),
                _ => lowering_op(n, k),
            };
            lower.scale(wc).add(&projector_down(n, k).scale(wp))
        })
        .collect();
    Ok(ReducedJumpSet { variant, jumps })
}

/// Configurations without adjacent excitations.
pub fn allowed_configurations(n: usize, boundary: Boundary) -> Vec<bool> {
    (0..1usize << n)
        .map(|c| {
            (0..n).all(|k| {
                !occ(c, n, k)
                    || chain_neighbours(n, k, boundary)
                        .iter()
                        .all(|&q| !occ(c, n, q))
            })
        })
        .collect()
}

/// Builds a reduced Liouvillian on the `2^N` two-level space.
pub fn build_reduced_liouvillian(
    params: &EitParams,
    v: &InteractionMatrix,
    variant: ReducedVariant,
) -> Result<ReducedModel> {
    params.validate()?;
    let n = v.n_sites();
    let d = checked_dim(2, n)?;
    let gamma = params.decay_gamma;
    let rate = 4.0 * params.omega_c.max(params.omega_p).powi(2) / gamma;
    let h0 = CsrMatrix::diagonal(
        &two_level_energies(v, params.detuning)
            .into_iter()
            .map(|e| C64::new(e, 0.0))
            .collect::<Vec<_>>(),
    );
    let (liouvillian, allowed) = match variant {
        ReducedVariant::SecondOrder => {
            let set = reduced_jumps(params, n, variant)?;
            (
                Liouvillian::lindblad(n, Levels::Two, &h0, &set.jumps)?,
                None,
            )
        }
        ReducedVariant::NnExclusion { boundary } => {
            let set = reduced_jumps(params, n, variant)?;
            let zero = CsrMatrix::zeros(d, d);
            (
                Liouvillian::lindblad(n, Levels::Two, &zero, &set.jumps)?,
                Some(allowed_configurations(n, boundary)),
            )
        }
        ReducedVariant::NonPerturbative => (nonperturbative(params, v, &h0)?, None),
    };
    Ok(ReducedModel {
        liouvillian: liouvillian.with_fast_rate(rate.max(1e-12)),
        variant,
        allowed,
    })
}

/// `K = −iH0 − Σ_k [λ_cc 𝓕_k n_k + λ_cp (σ⁺_k + σ⁻_k 𝓕_k) + λ_pp p_k]` and the matching sandwiches.
fn nonperturbative(
    params: &EitParams,
    v: &InteractionMatrix,
    h0: &CsrMatrix,
) -> Result<Liouvillian> {
    let n = v.n_sites();
    let d = 1usize << n;
    let g = params.decay_gamma;
    let lcc = C64::new(2.0 * params.omega_c * params.omega_c / g, 0.0);
    let lcp = C64::new(2.0 * params.omega_c * params.omega_p / g, 0.0);
    let lpp = C64::new(2.0 * params.omega_p * params.omega_p / g, 0.0);
    let mut k_op = h0.scale(C64::new(0.0, -1.0));
    let mut sandwiches = Vec::with_capacity(7 * n);
    for k in 0..n {
        let f = CsrMatrix::diagonal(
            &(0..d)
                .map(|c| C64::new(1.0, -2.0 * field_bits(c, n, k, v, params.detuning) / g).inv())
                .collect::<Vec<_>>(),
        );
        let fd = f.adjoint();
        let sm = lowering_op(n, k);
        let sp = sm.adjoint();
        let nk = number_op(n, k);
        let pk = projector_down(n, k);
        let smf = sm.matmul(&f);
        k_op = k_op
            .add(&f.matmul(&nk).scale(-lcc))
            .add(&sp.scale(-lcp))
            .add(&smf.scale(-lcp))
            .add(&pk.scale(-lpp));
        sandwiches.push((smf.scale(lcc), sp.clone()));
        sandwiches.push((sm.scale(lcc), fd.matmul(&sp)));
        sandwiches.push((smf.scale(lcp), pk.clone()));
        sandwiches.push((pk.scale(lcp), sp.matmul(&fd)));
        sandwiches.push((sm.scale(lcp), pk.clone()));
        sandwiches.push((pk.scale(lcp), sp.clone()));
        sandwiches.push((pk.scale(lpp * 2.0), pk.clone()));
    }
    Liouvillian::from_parts(n, Levels::Two, k_op, sandwiches)
}

impl ReducedModel {
    pub fn allowed(&self) -> Option<&[bool]> {
        self.allowed.as_deref()
    }

    /// Rejects initial states outside the subspace an exclusion model is valid on.
    pub fn check_initial(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.levels() != Levels::Two || rho.dim() != self.liouvillian.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.liouvillian.dim(),
                found: rho.dim(),
            });
        }
        if let Some(mask) = &self.allowed {
            let weight = forbidden_weight(rho, mask);
            if weight > FORBIDDEN_WEIGHT_TOL {
                return Err(Error::InvalidInitialState { weight });
            }
        }
        Ok(())
    }

    pub fn integrate(
        &self,
        rho0: &DensityMatrix,
        grid: &TimeGrid,
        opts: &IntegrateOptions,
    ) -> Result<TrajectoryRecord> {
        self.check_initial(rho0)?;
        integrate(&self.liouvillian, rho0, grid, opts)
    }

    /// Stationary state; exclusion models are solved on the allowed subspace.
    pub fn steady_state(&self) -> Result<DensityMatrix> {
        match &self.allowed {
            None => steady::steady_state(&self.liouvillian),
            Some(mask) => restricted_steady_state(&self.liouvillian, mask),
        }
    }
}

fn forbidden_weight(rho: &DensityMatrix, mask: &[bool]) -> f64 {
    (0..rho.dim())
        .filter(|&i| !mask[i])
        .map(|i| rho.get(i, i).re.abs())
        .sum()
}

/// Dense null vector of the generator restricted to the configurations in `mask`.
fn restricted_steady_state(l: &Liouvillian, mask: &[bool]) -> Result<DensityMatrix> {
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let m = idx.len();
    if m * m > 4096 {
        return Err(Error::DimensionGuard {
            what: "restricted steady state",
            n_sites: l.n_sites(),
            max: 8,
        });
    }
    let sub = |a: &CsrMatrix| DMatrix::from_fn(m, m, |r, c| a.get(idx[r], idx[c]));
    let k = sub(l.k_matrix());
    let id = DMatrix::<C64>::identity(m, m);
    let mut s = k.kronecker(&id) + id.kronecker(&k.conjugate());
    for (a, b) in l.sandwiches() {
        s += sub(a).kronecker(&sub(b).transpose());
    }
    let svd = s.svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max().max(1.0);
    let multiplicity = sv.iter().filter(|&&x| x <= 1e-11 * smax).count();
    if multiplicity > 1 {
        return Err(Error::DegenerateSteadyState { multiplicity });
    }
    let imin = sv.argmin().0;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverFailed("SVD did not return V".into()))?;
    let d = l.dim();
    let mut data = vec![ZERO; d * d];
    for r in 0..m {
        for c in 0..m {
            data[idx[r] * d + idx[c]] = v_t[(imin, r * m + c)].conj();
        }
    }
    let tr: C64 = (0..d).map(|i| data[i * d + i]).sum();
    data.iter_mut().for_each(|z| *z /= tr);
    let mut rho = DensityMatrix::from_row_major(l.n_sites(), Levels::Two, data)?;
    rho.hermitize();
    rho.normalize_trace();
    Ok(rho)
}

/// Result of [`exclusion_projector`].
#[derive(Debug, Clone)]
pub struct ExclusionProjection {
    pub state: DensityMatrix,
    pub removed_weight: f64,
}

/// Zeroes every row and column of a forbidden configuration.
pub fn exclusion_projector(rho: &DensityMatrix, boundary: Boundary) -> Result<ExclusionProjection> {
    if rho.levels() != Levels::Two {
        return Err(Error::InvalidSpec(
            "exclusion projector acts on the two-level space".into(),
        ));
    }
    let d = rho.dim();
    let mask = allowed_configurations(rho.n_sites(), boundary);
    let removed_weight = forbidden_weight(rho, &mask);
    let data = (0..d * d)
        .map(|u| {
            if mask[u / d] && mask[u % d] {
                rho.as_slice()[u]
            } else {
                ZERO
            }
        })
        .collect();
    Ok(ExclusionProjection {
        state: DensityMatrix::from_row_major(rho.n_sites(), Levels::Two, data)?,
        removed_weight,
    })
}

/// Per full index: the `←` site mask and the `↑` bits of the reduced word.
fn mid_and_up(n: usize) -> (Vec<usize>, Vec<usize>) {
    let places = ternary_places(n);
    let d = 3usize.pow(n as u32);
    let mut mids = vec![0; d];
    let mut ups = vec![0; d];
    for a in 0..d {
        for k in 0..n {
            match ternary_digit(a, places[k]) {
                TL_UP => ups[a] |= site_bit(n, k),
                TL_MID => mids[a] |= site_bit(n, k),
                _ => {}
            }
        }
    }
    (mids, ups)
}

/// Applies the site-wise elimination projector and drops the `←` level.
///
/// Coherences with `←` on one side vanish, `|←⟩⟨←|` is added to `|↓⟩⟨↓|`.
pub fn project_and_reduce(rho_full: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_full.levels() != Levels::Three {
        return Err(Error::InvalidSpec(
            "projection expects a three-level state".into(),
        ));
    }
    let n = rho_full.n_sites();
    let (mids, ups) = mid_and_up(n);
    let d = rho_full.dim();
    let dr = 1usize << n;
    let mut out = vec![ZERO; dr * dr];
    let src = rho_full.as_slice();
    for a in 0..d {
        for b in 0..d {
            if mids[a] == mids[b] {
                out[ups[a] * dr + ups[b]] += src[a * d + b];
            }
        }
    }
    let mut rho = DensityMatrix::from_row_major(n, Levels::Two, out)?;
    rho.hermitize();
    Ok(rho)
}

/// Embeds a reduced state into the `←`-free part of the three-level space.
pub fn embed_reduced(rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.levels() != Levels::Two {
        return Err(Error::InvalidSpec(
            "embedding expects a two-level state".into(),
        ));
    }
    let n = rho.n_sites();
    let d = checked_dim(3, n)?;
    let map: Vec<usize> = (0..rho.dim())
        .map(|c| crate::basis::binary_to_ternary(c, n))
        .collect();
    let mut data = vec![ZERO; d * d];
    let dr = rho.dim();
    for a in 0..dr {
        for b in 0..dr {
            data[map[a] * d + map[b]] = rho.get(a, b);
        }
    }
    DensityMatrix::from_row_major(n, Levels::Three, data)
}

/// Fast/slow split of the full EIT model used to precondition stationary solves.
///
/// `𝓛₀ = −i[H0, ·] + decay` is triangular on matrix units ordered by their number
/// of `←` entries; `P` is the elimination projector.
pub struct EitSplit {
    d: usize,
    gamma: f64,
    places: Vec<usize>,
    slow: Vec<usize>,
    /// Units carrying `←`, sorted by decreasing `←` count, with their diagonal `λ_u`.
    fast: Vec<(usize, C64)>,
}

impl EitSplit {
    pub fn new(params: &EitParams, v: &InteractionMatrix) -> Result<Self> {
        params.validate()?;
        let n = v.n_sites();
        if n > THREE_LEVEL_MAX_SITES {
            return Err(Error::DimensionGuard {
                what: "EIT split",
                n_sites: n,
                max: THREE_LEVEL_MAX_SITES,
            });
        }
        let d = 3usize.pow(n as u32);
        let e = three_level_energies(v, params.detuning);
        let places = ternary_places(n);
        let count = |a: usize| {
            places
                .iter()
                .filter(|&&p| ternary_digit(a, p) == TL_MID)
                .count()
        };
        let counts: Vec<usize> = (0..d).map(count).collect();
        let mut slow = Vec::new();
        let mut fast = Vec::new();
        for a in 0..d {
            for b in 0..d {
                let m = counts[a] + counts[b];
                if m == 0 {
                    slow.push(a * d + b);
                } else {
                    let lam = C64::new(-0.5 * params.decay_gamma * m as f64, -(e[a] - e[b]));
                    fast.push((a * d + b, lam, m));
                }
            }
        }
        fast.sort_by_key(|x| std::cmp::Reverse(x.2));
        Ok(Self {
            d,
            gamma: params.decay_gamma,
            places,
            slow,
            fast: fast.into_iter().map(|(u, l, _)| (u, l)).collect(),
        })
    }
}

impl FastSlowSplit for EitSplit {
    fn slow_units(&self) -> &[usize] {
        &self.slow
    }

    fn project(&self, x: &[C64], out: &mut [C64]) {
        out.copy_from_slice(x);
        let d = self.d;
        for &p in &self.places {
            for a in 0..d {
                let da = ternary_digit(a, p);
                for b in 0..d {
                    let db = ternary_digit(b, p);
                    match (da == TL_MID, db == TL_MID) {
                        (true, true) => {
                            let z = std::mem::replace(&mut out[a * d + b], ZERO);
                            out[(a + p) * d + b + p] += z;
                        }
                        (true, false) | (false, true) => out[a * d + b] = ZERO,
                        _ => {}
                    }
                }
            }
        }
    }

    fn solve_fast(&self, r: &[C64], out: &mut [C64]) {
        let d = self.d;
        let mut z = vec![ZERO; d * d];
        for &(u, lam) in &self.fast {
            let (a, b) = (u / d, u % d);
            let mut acc = r[u];
            for &p in &self.places {
                if ternary_digit(a, p) == TL_DOWN && ternary_digit(b, p) == TL_DOWN {
                    acc -= z[(a - p) * d + (b - p)] * self.gamma;
                }
            }
            z[u] = acc / lam;
        }
        let mut pz = vec![ZERO; d * d];
        self.project(&z, &mut pz);
        for i in 0..d * d {
            out[i] = z[i] - pz[i];
        }
    }
}

/// Stationary state of the full EIT model, preconditioned by [`EitSplit`] when large.
pub fn full_steady_state(params: &EitParams, v: &InteractionMatrix) -> Result<DensityMatrix> {
    let l = crate::operators::build_three_level_liouvillian(params, v)?;
    let d = l.dim();
    if d * d <= steady::DENSE_LIMIT {
        return steady::steady_state(&l);
    }
    let split = EitSplit::new(params, v)?;
    let opts = steady::SteadyStateOptions {
        method: steady::SteadyStateMethod::Iterative(Some(&split)),
        residual_tol: 1e-8 * (params.decay_gamma.max(1.0)),
        ..Default::default()
    };
    steady::steady_state_with(&l, &opts)
}
