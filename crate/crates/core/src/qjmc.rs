//! Quantum-jump unravelling of the two-level master equation.
//!
//! Between jumps the unnormalized state evolves under
//! `H_eff = H − (i/2) Σ_j L_j†L_j`; a jump fires when `‖ψ‖²` crosses a uniform
//! random threshold, located by bisection on the integrator's dense output.
//! Both channel families (`√γ n_k` and `√Γ σ⁻_k`) have `L†L ∝ n_k`, so `H_eff`
//! is `H` with a diagonal loss term proportional to the excitation number.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{occ, site_bit, Levels};
use crate::error::{Error, Result};
use crate::evolution::{Series, TimeGrid, TrajectoryRecord};
use crate::exec::{try_map_indexed, Execution};
use crate::model::{DephasingParams, InteractionMatrix};
use crate::observables::{evaluate_many, Observable, StateRef};
use crate::ode::{DenseStep, DormandPrince, OdeOptions};
use crate::operators::{two_level_energies, TWO_LEVEL_MAX_SITES};

/// Jump channel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Dephasing,
    Decay,
}

/// A recorded jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: Channel,
    pub site: usize,
}

/// Effective Hamiltonian and jump channels of the dephased gas.
#[derive(Debug, Clone)]
pub struct JumpUnravelling {
    n_sites: usize,
    omega: f64,
    gamma: f64,
    decay: f64,
    /// Diagonal of `H_eff`: `E_c − (i/2)(γ + Γ)·#excitations`.
    diag: Vec<C64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl JumpUnravelling {
    pub fn new(params: &DephasingParams, v: &InteractionMatrix) -> Result<Self> {
        params.validate()?;
        let n = v.n_sites();
        if n > TWO_LEVEL_MAX_SITES {
            return Err(Error::DimensionGuard {
                what: "jump unravelling",
                n_sites: n,
                max: TWO_LEVEL_MAX_SITES,
            });
        }
        let loss = 0.5 * (params.dephasing_gamma + params.decay_gamma_ryd);
        let diag = two_level_energies(v, params.detuning)
            .into_iter()
            .enumerate()
            .map(|(c, e)| C64::new(e, -loss * c.count_ones() as f64))
            .collect();
        Ok(Self {
            n_sites: n,
            omega: params.rabi_omega,
            gamma: params.dephasing_gamma,
            decay: params.decay_gamma_ryd,
            diag,
            rel_tol: 1e-7,
            abs_tol: 1e-9,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `dψ = −i H_eff ψ`.
    pub fn rhs(&self, psi: &[C64], dpsi: &mut [C64]) {
        let n = self.n_sites;
        let mi = C64::new(0.0, -1.0);
        for (c, out) in dpsi.iter_mut().enumerate() {
            let mut acc = self.diag[c] * psi[c];
            let mut flip = C64::new(0.0, 0.0);
            for k in 0..n {
                flip += psi[c ^ site_bit(n, k)];
            }
            acc += flip * self.omega;
            *out = mi * acc;
        }
    }

    /// Picks a channel with probability `∝ ‖L_j ψ‖²` and applies it (unnormalized).
    fn jump(&self, psi: &mut [C64], u: f64) -> Result<(Channel, usize)> {
        let n = self.n_sites;
        let occupation: Vec<f64> = (0..n)
            .map(|k| {
                psi.iter()
                    .enumerate()
                    .filter(|(c, _)| occ(*c, n, k))
                    .map(|(_, z)| z.norm_sqr())
                    .sum()
            })
            .collect();
        let weights: Vec<(Channel, usize, f64)> = (0..n)
            .flat_map(|k| {
                [
                    (Channel::Dephasing, k, self.gamma * occupation[k]),
                    (Channel::Decay, k, self.decay * occupation[k]),
                ]
            })
            .filter(|w| w.2 > 0.0)
            .collect();
        let total: f64 = weights.iter().map(|w| w.2).sum();
        if !(total > 0.0) {
            return Err(Error::NormUnderflow { t: f64::NAN });
        }
        let mut target = u * total;
        let &(channel, site, _) = weights
            .iter()
            .find(|w| {
                target -= w.2;
                target < 0.0
            })
            .unwrap_or(weights.last().unwrap());
        let b = site_bit(n, site);
        match channel {
            Channel::Dephasing => {
                for (c, z) in psi.iter_mut().enumerate() {
                    if c & b == 0 {
                        *z = C64::new(0.0, 0.0);
                    }
                }
            }
            Channel::Decay => {
                for c in 0..psi.len() {
                    if c & b == 0 {
                        psi[c] = psi[c | b];
                        psi[c | b] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
        normalize(psi);
        Ok((channel, site))
    }
}

fn norm_sqr(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(psi: &mut [C64]) {
    let s = norm_sqr(psi).sqrt();
    psi.iter_mut().for_each(|z| *z /= s);
}

fn check_psi0(u: &JumpUnravelling, psi0: &[C64]) -> Result<()> {
    if psi0.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: psi0.len(),
        });
    }
    let s = norm_sqr(psi0);
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInitialState { weight: s });
    }
    Ok(())
}

/// Time at which `‖ψ‖²` falls to `r` inside a dense step.
fn locate_jump(dense: &DenseStep<C64>, t_end: f64, r: f64, buf: &mut [C64]) -> f64 {
    let (mut lo, mut hi) = (dense.t0, t_end);
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        dense.eval(mid, buf);
        if norm_sqr(buf) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Runs one trajectory, passing the normalized state at each grid sample to `sink`.
pub fn run_trajectory<S>(
    u: &JumpUnravelling,
    psi0: &[C64],
    grid: &TimeGrid,
    seed: u64,
    mut sink: S,
) -> Result<Vec<JumpEvent>>
where
    S: FnMut(usize, &[C64]) -> Result<()>,
{
    check_psi0(u, psi0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = grid.samples();
    let mut jumps = Vec::new();
    let mut normed = vec![C64::new(0.0, 0.0); psi0.len()];
    let mut emit = |i: usize, psi: &[C64]| -> Result<()> {
        let s = norm_sqr(psi);
        if !(s > 1e-300) {
            return Err(Error::NormUnderflow { t: times[i] });
        }
        let inv = 1.0 / s.sqrt();
        normed.iter_mut().zip(psi).for_each(|(o, z)| *o = z * inv);
        sink(i, &normed)
    };
    let opts = OdeOptions {
        rel_tol: u.rel_tol,
        abs_tol: u.abs_tol,
        initial_step: 0.01 / (u.gamma + u.decay + u.omega).max(1e-12),
        max_step: f64::INFINITY,
    };
    let mut dp = DormandPrince::new(
        |_t, y: &[C64], dy: &mut [C64]| u.rhs(y, dy),
        grid.t_start(),
        psi0.to_vec(),
        opts,
    );
    let mut threshold = 1.0 - rng.random::<f64>();
    let mut buf = psi0.to_vec();
    let mut next = 0;
    while next < times.len() && times[next] <= dp.t {
        emit(next, &dp.y)?;
        next += 1;
    }
    let Some(&t_end) = times.last() else {
        return Ok(jumps);
    };
    while next < times.len() {
        let dense = dp.step(t_end)?;
        let t1 = dp.t;
        let jump_at =
            (norm_sqr(&dp.y) <= threshold).then(|| locate_jump(&dense, t1, threshold, &mut buf));
        let horizon = jump_at.unwrap_or(t1);
        while next < times.len() && times[next] <= horizon {
            if times[next] == t1 {
                emit(next, &dp.y)?;
            } else {
                dense.eval(times[next], &mut buf);
                emit(next, &buf)?;
            }
            next += 1;
        }
        if let Some(tj) = jump_at {
            dense.eval(tj, &mut buf);
            if !(norm_sqr(&buf) > 1e-300) {
                return Err(Error::NormUnderflow { t: tj });
            }
            let (channel, site) = u.jump(&mut buf, rng.random::<f64>())?;
            jumps.push(JumpEvent {
                time: tj,
                channel,
                site,
            });
            threshold = 1.0 - rng.random::<f64>();
            dp.reset(tj, buf.clone());
        }
    }
    Ok(jumps)
}

/// One trajectory with its jump record.
pub fn sample_trajectory_with_jumps(
    u: &JumpUnravelling,
    psi0: &[C64],
    grid: &TimeGrid,
    seed: u64,
    observables: &[Observable],
) -> Result<(TrajectoryRecord, Vec<JumpEvent>)> {
    let mut rec = TrajectoryRecord::with_observables(grid.samples(), observables);
    let n = u.n_sites;
    let jumps = run_trajectory(u, psi0, grid, seed, |i, psi| {
        let state = StateRef::Pure {
            n_sites: n,
            levels: Levels::Two,
            amplitudes: psi,
        };
        rec.set_row(i, &evaluate_many(observables, state)?);
        Ok(())
    })?;
    Ok((rec, jumps))
}

pub fn sample_trajectory(
    u: &JumpUnravelling,
    psi0: &[C64],
    grid: &TimeGrid,
    seed: u64,
    observables: &[Observable],
) -> Result<TrajectoryRecord> {
    Ok(sample_trajectory_with_jumps(u, psi0, grid, seed, observables)?.0)
}

/// Mean and standard error over `n_traj` trajectories seeded `base_seed + i`.
pub fn average_trajectories(
    u: &JumpUnravelling,
    psi0: &[C64],
    grid: &TimeGrid,
    n_traj: usize,
    base_seed: u64,
    observables: &[Observable],
    exec: Execution,
) -> Result<TrajectoryRecord> {
    if n_traj < 2 {
        return Err(Error::InvalidSpec(
            "averaging needs at least two trajectories".into(),
        ));
    }
    let runs = try_map_indexed(exec, n_traj, |i| {
        sample_trajectory(u, psi0, grid, base_seed.wrapping_add(i as u64), observables)
    })?;
    let ns = grid.samples().len();
    let nt = n_traj as f64;
    let series = observables
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let mut mean = vec![0.0; ns];
            let mut sq = vec![0.0; ns];
            for r in &runs {
                for (t, &x) in r.series[j].values.iter().enumerate() {
                    mean[t] += x;
                    sq[t] += x * x;
                }
            }
            let mut se = vec![0.0; ns];
            for t in 0..ns {
                mean[t] /= nt;
                let var = ((sq[t] / nt - mean[t] * mean[t]) * nt / (nt - 1.0)).max(0.0);
                se[t] = (var / nt).sqrt();
            }
            Series {
                name: o.name(),
                values: mean,
                std_err: Some(se),
            }
        })
        .collect();
    Ok(TrajectoryRecord {
        times: grid.samples().to_vec(),
        series,
        states: None,
    })
}
