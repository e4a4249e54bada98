//! Stationary states of Liouvillians.
//!
//! Small systems use a dense singular value decomposition of the explicit
//! superoperator, which also reveals degenerate null spaces. Larger systems
//! solve `(𝓛 + |x₀⟩⟨tr|) x = x₀` with restarted GMRES, optionally
//! preconditioned by a block factorization along a fast/slow split
//! `𝓛 = 𝓛₀ + 𝓛₁` where `𝓛₀` is cheap to invert on the range of `Q = 1 − P`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::operators::Liouvillian;
use crate::state::DensityMatrix;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Liouville dimension up to which the dense route is used by default.
pub const DENSE_LIMIT: usize = 1024;

/// Fast/slow decomposition used to precondition the iterative solve.
pub trait FastSlowSplit: Sync {
    /// Row-major matrix units spanning the slow subspace `range(P)`.
    fn slow_units(&self) -> &[usize];
    /// `out = P x`.
    fn project(&self, x: &[C64], out: &mut [C64]);
    /// `out = z` with `z ∈ range(Q)` and `𝓛₀ z = r`, for `r ∈ range(Q)`.
    fn solve_fast(&self, r: &[C64], out: &mut [C64]);
}

/// Strategy selection for [`steady_state_with`].
#[derive(Clone, Copy, Default)]
pub enum SteadyStateMethod<'a> {
    #[default]
    Auto,
    Dense,
    Iterative(Option<&'a dyn FastSlowSplit>),
}

/// Solver settings.
#[derive(Clone, Copy)]
pub struct SteadyStateOptions<'a> {
    pub method: SteadyStateMethod<'a>,
    /// Tolerated Frobenius norm of `𝓛ρ` at the returned state.
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub exec: Execution,
}

impl Default for SteadyStateOptions<'_> {
    fn default() -> Self {
        Self {
            method: SteadyStateMethod::Auto,
            residual_tol: 1e-9,
            max_iterations: 2000,
            exec: Execution::default(),
        }
    }
}

/// Stationary state with default options.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, &SteadyStateOptions::default())
}

pub fn steady_state_with(l: &Liouvillian, opts: &SteadyStateOptions<'_>) -> Result<DensityMatrix> {
    let d = l.dim();
    let raw = match opts.method {
        SteadyStateMethod::Dense => dense_null_vector(l)?,
        SteadyStateMethod::Auto if d * d <= DENSE_LIMIT => dense_null_vector(l)?,
        SteadyStateMethod::Auto => iterative(l, None, opts)?,
        SteadyStateMethod::Iterative(split) => iterative(l, split, opts)?,
    };
    let mut rho = DensityMatrix::from_row_major(l.n_sites(), l.levels(), raw)?;
    let tr = rho.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::SolverFailed("null vector is traceless".into()));
    }
    rho.as_mut_slice().iter_mut().for_each(|z| *z /= tr);
    rho.hermitize();
    rho.normalize_trace();
    let res = residual(l, rho.as_slice());
    if !(res < opts.residual_tol) {
        return Err(Error::SolverFailed(format!(
            "stationary residual {res:e} above {:e}",
            opts.residual_tol
        )));
    }
    Ok(rho)
}

/// Frobenius norm of `𝓛ρ`.
pub fn residual(l: &Liouvillian, rho: &[C64]) -> f64 {
    let mut out = vec![ZERO; rho.len()];
    l.apply(rho, &mut out);
    out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dense_null_vector(l: &Liouvillian) -> Result<Vec<C64>> {
    let s = l.superoperator_dense()?;
    let svd = s.svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let multiplicity = sv.iter().filter(|&&x| x <= 1e-11 * smax.max(1.0)).count();
    if multiplicity > 1 {
        return Err(Error::DegenerateSteadyState { multiplicity });
    }
    let imin = sv.argmin().0;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverFailed("SVD did not return V".into()))?;
    Ok(v_t.row(imin).iter().map(|z| z.conj()).collect())
}

fn trace_of(x: &[C64], d: usize) -> C64 {
    (0..d).map(|i| x[i * d + i]).sum()
}

fn iterative(
    l: &Liouvillian,
    split: Option<&dyn FastSlowSplit>,
    opts: &SteadyStateOptions<'_>,
) -> Result<Vec<C64>> {
    let d = l.dim();
    let n = d * d;
    let mut x0 = vec![ZERO; n];
    for i in 0..d {
        x0[i * d + i] = C64::new(1.0 / d as f64, 0.0);
    }
    if let Some(sp) = split {
        let mut px = vec![ZERO; n];
        sp.project(&x0, &mut px);
        x0 = px;
    }
    let apply_a = |x: &[C64], out: &mut [C64]| {
        l.apply(x, out);
        let t = trace_of(x, d);
        for (o, b) in out.iter_mut().zip(&x0) {
            *o += b * t;
        }
    };
    let pre = match split {
        Some(sp) => Some(BlockPreconditioner::new(l, sp, &x0, opts.exec)?),
        None => None,
    };
    let apply_m = |r: &[C64], out: &mut [C64]| match &pre {
        Some(p) => p.apply(r, out),
        None => out.copy_from_slice(r),
    };
    let (x, rel) = gmres(
        apply_a,
        apply_m,
        &x0,
        x0.clone(),
        1e-13,
        60,
        opts.max_iterations,
    );
    log::debug!("steady state GMRES relative residual {rel:e}");
    Ok(x)
}

/// Block-LU preconditioner exact up to the `Q𝓛₁Q` coupling.
struct BlockPreconditioner<'a> {
    l: &'a Liouvillian,
    split: &'a dyn FastSlowSplit,
    slow: Vec<usize>,
    lu: nalgebra::linalg::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> BlockPreconditioner<'a> {
    fn new(
        l: &'a Liouvillian,
        split: &'a dyn FastSlowSplit,
        x0: &[C64],
        exec: Execution,
    ) -> Result<Self> {
        let d = l.dim();
        let n = d * d;
        let slow = split.slow_units().to_vec();
        let columns = map_indexed(exec, slow.len(), |j| {
            let mut e = vec![ZERO; n];
            e[slow[j]] = C64::new(1.0, 0.0);
            let mut w = vec![ZERO; n];
            l.apply(&e, &mut w);
            let mut pw = vec![ZERO; n];
            split.project(&w, &mut pw);
            for (a, b) in w.iter_mut().zip(&pw) {
                *a -= b;
            }
            let mut z = vec![ZERO; n];
            split.solve_fast(&w, &mut z);
            l.apply(&z, &mut w);
            let mut pz = vec![ZERO; n];
            split.project(&w, &mut pz);
            let tr = trace_of(&e, d);
            slow.iter()
                .map(|&u| pw[u] - pz[u] + x0[u] * tr)
                .collect::<Vec<C64>>()
        });
        let m = slow.len();
        let s = DMatrix::from_fn(m, m, |i, j| columns[j][i]);
        Ok(Self {
            l,
            split,
            slow,
            lu: s.lu(),
        })
    }

    fn apply(&self, r: &[C64], out: &mut [C64]) {
        let n = r.len();
        let mut rp = vec![ZERO; n];
        self.split.project(r, &mut rp);
        let rq: Vec<C64> = r.iter().zip(&rp).map(|(a, b)| a - b).collect();
        let mut zq = vec![ZERO; n];
        self.split.solve_fast(&rq, &mut zq);
        let mut t = vec![ZERO; n];
        self.l.apply(&zq, &mut t);
        let mut tp = vec![ZERO; n];
        self.split.project(&t, &mut tp);
        let rhs = DVector::from_iterator(self.slow.len(), self.slow.iter().map(|&u| rp[u] - tp[u]));
        let y = self
            .lu
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(self.slow.len()));
        let mut yv = vec![ZERO; n];
        for (&u, &v) in self.slow.iter().zip(y.iter()) {
            yv[u] = v;
        }
        self.l.apply(&yv, &mut t);
        self.split.project(&t, &mut tp);
        let rhs_q: Vec<C64> = (0..n).map(|i| rq[i] - (t[i] - tp[i])).collect();
        self.split.solve_fast(&rhs_q, &mut zq);
        for i in 0..n {
            out[i] = yv[i] + zq[i];
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted, right-preconditioned GMRES. Returns the iterate and its relative residual.
pub fn gmres<A, M>(
    apply_a: A,
    apply_m: M,
    b: &[C64],
    mut x: Vec<C64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<C64>, f64)
where
    A: Fn(&[C64], &mut [C64]),
    M: Fn(&[C64], &mut [C64]),
{
    let n = b.len();
    let bnorm = norm(b).max(1e-300);
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut iters = 0;
    let mut rel = f64::INFINITY;
    while iters < max_iter {
        apply_a(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel < tol {
            break;
        }
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![ZERO; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0f64; restart], vec![ZERO; restart]);
        let mut g = vec![ZERO; restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k = 0;
        while k < restart && iters < max_iter {
            apply_m(&v[k], &mut z);
            apply_a(&z, &mut w);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(vi, &w);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = C64::new(hn, 0.0);
            for i in 0..k {
                let (a, bb) = (h[i][k], h[i + 1][k]);
                h[i][k] = a * cs[i] + sn[i] * bb;
                h[i + 1][k] = -sn[i].conj() * a + bb * cs[i];
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let t = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = bb.conj() / bb.norm().max(1e-300);
            } else {
                cs[k] = a.norm() / t;
                sn[k] = (a / a.norm()) * bb.conj() / t;
            }
            h[k][k] = a * cs[k] + sn[k] * bb;
            h[k + 1][k] = ZERO;
            g[k + 1] = -sn[k].conj() * g[k];
            g[k] *= cs[k];
            k += 1;
            iters += 1;
            rel = g[k].norm() / bnorm;
            if rel < tol || hn < 1e-300 {
                break;
            }
            v.push(w.iter().map(|z| z / hn).collect());
        }
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let s: C64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut u = vec![ZERO; n];
        for (vi, yi) in v.iter().zip(&y) {
            for (uj, vj) in u.iter_mut().zip(vi) {
                *uj += yi * vj;
            }
        }
        apply_m(&u, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
        if rel < tol {
            apply_a(&x, &mut r);
            rel = norm(&b.iter().zip(&r).map(|(p, q)| p - q).collect::<Vec<_>>()) / bnorm;
            if rel < tol * 10.0 {
                break;
            }
        }
    }
    (x, rel)
}

/// Split of the dephased two-level model: `𝓛₀ = −i[H0, ·] + dephasing` is diagonal
/// on matrix units and `P` keeps the populations.
pub struct DephasingSplit {
    dim: usize,
    energies: Vec<f64>,
    gamma: f64,
    slow: Vec<usize>,
}

impl DephasingSplit {
    pub fn new(energies: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidSpec("dephasing split needs gamma > 0".into()));
        }
        let dim = energies.len();
        Ok(Self {
            dim,
            slow: (0..dim).map(|i| i * dim + i).collect(),
            energies,
            gamma,
        })
    }
}

impl FastSlowSplit for DephasingSplit {
    fn slow_units(&self) -> &[usize] {
        &self.slow
    }

    fn project(&self, x: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        for &u in &self.slow {
            out[u] = x[u];
        }
    }

    fn solve_fast(&self, r: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for a in 0..d {
            for b in 0..d {
                let u = a * d + b;
                out[u] = if a == b {
                    ZERO
                } else {
                    let ham = (a ^ b).count_ones() as f64;
                    r[u] / C64::new(
                        -0.5 * self.gamma * ham,
                        -(self.energies[a] - self.energies[b]),
                    )
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Levels;
    use crate::model::{
        build_chain_interactions, Boundary, DephasingParams, InteractionMatrix, LatticeSpec,
    };
    use crate::operators::{build_two_level_liouvillian, two_level_energies};

    #[test]
    fn dephased_gas_relaxes_to_identity() {
        for n in 1..=4 {
            let v = build_chain_interactions(&LatticeSpec::chain(n, 6, 10.0, Boundary::Periodic))
                .unwrap();
            let l = build_two_level_liouvillian(&DephasingParams::new(1.0, 2.0, 10.0), &v).unwrap();
            let rho = steady_state(&l).unwrap();
            let mixed = DensityMatrix::maximally_mixed(n, Levels::Two).unwrap();
            assert!(crate::evolution::trace_distance(&rho, &mixed).unwrap() < 1e-10);
        }
    }

    #[test]
    fn pure_decay_to_ground() {
        let l = build_two_level_liouvillian(
            &DephasingParams::new(0.0, 0.0, 0.0).with_decay(1.0),
            &InteractionMatrix::zeros(1),
        )
        .unwrap();
        let rho = steady_state(&l).unwrap();
        assert!((rho.get(0, 0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_null_space_reported() {
        let l = build_two_level_liouvillian(
            &DephasingParams::new(0.0, 0.0, 1.0),
            &InteractionMatrix::zeros(1),
        )
        .unwrap();
        assert!(matches!(
            steady_state(&l),
            Err(Error::DegenerateSteadyState { multiplicity: 2 })
        ));
    }

    #[test]
    fn iterative_matches_dense() {
        let n = 3;
        let v =
            build_chain_interactions(&LatticeSpec::chain(n, 6, 5.0, Boundary::Periodic)).unwrap();
        let p = DephasingParams::new(1.0, 1.0, 10.0).with_decay(0.5);
        let l = build_two_level_liouvillian(&p, &v).unwrap();
        let dense = steady_state_with(
            &l,
            &SteadyStateOptions {
                method: SteadyStateMethod::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        let plain = steady_state_with(
            &l,
            &SteadyStateOptions {
                method: SteadyStateMethod::Iterative(None),
                ..Default::default()
            },
        )
        .unwrap();
        let split =
            DephasingSplit::new(two_level_energies(&v, p.detuning), p.dephasing_gamma).unwrap();
        let pre = steady_state_with(
            &l,
            &SteadyStateOptions {
                method: SteadyStateMethod::Iterative(Some(&split)),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(crate::evolution::trace_distance(&dense, &plain).unwrap() < 1e-9);
        assert!(crate::evolution::trace_distance(&dense, &pre).unwrap() < 1e-9);
    }
}
