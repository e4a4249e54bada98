//! Classical rate equations of the strongly dephased two-level gas.
//!
//! To second order each spin flips with the kinetically constrained rate
//! `Γ_k = Ω²γ / ((γ/2)² + h_k(1)²)`. Fourth order renormalizes single flips
//! and adds correlated double flips whose rates can turn negative. The
//! operator-valued coefficients are evaluated lazily as scalars on a
//! configuration; conjugating a coefficient with `σˣ_k` amounts to evaluating it
//! on the configuration with site `k` flipped.

use num_complex::Complex64 as C64;

use crate::basis::{occ, site_bit, Configuration, Levels};
use crate::error::{Error, Result};
use crate::evolution::{TimeGrid, TrajectoryRecord};
use crate::exec::{map_indexed, Execution};
use crate::model::{build_chain_interactions, DephasingParams, InteractionMatrix, LatticeSpec};
use crate::observables::{evaluate_many, Observable, StateRef};
use crate::ode::{DormandPrince, OdeOptions};
use crate::operators::field_bits;
use crate::state::ProbabilityVector;

/// Largest chain for which a generator is assembled.
pub const GENERATOR_MAX_SITES: usize = 20;

/// Absolute guard below which a rate counts as negative.
pub const NEGATIVE_RATE_GUARD: f64 = -1e-12;

/// Scalar evaluation of all rate coefficients for one parameter set.
#[derive(Debug, Clone)]
pub struct RateModel<'a> {
    n: usize,
    v: &'a InteractionMatrix,
    omega: f64,
    delta: f64,
    gamma: f64,
    decay: f64,
}

impl<'a> RateModel<'a> {
    pub fn new(params: &DephasingParams, v: &'a InteractionMatrix) -> Result<Self> {
        params.validate()?;
        params.require_dephasing()?;
        Ok(Self {
            n: v.n_sites(),
            v,
            omega: params.rabi_omega,
            delta: params.detuning,
            gamma: params.dephasing_gamma,
            decay: params.decay_gamma_ryd,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// `h_k(1)` on a packed configuration.
    #[inline]
    pub fn h1(&self, c: usize, k: usize) -> f64 {
        field_bits(c, self.n, k, self.v, self.delta)
    }

    /// `(h_km(1,1), h_km(0,1) − h_km(1,0))` on a packed configuration.
    #[inline]
    fn h_pair(&self, c: usize, k: usize, m: usize) -> (f64, f64) {
        let (rk, rm) = (self.v.row(k), self.v.row(m));
        let (mut sk, mut sm) = (0.0, 0.0);
        for q in 0..self.n {
            if q != k && q != m && occ(c, self.n, q) {
                sk += rk[q];
                sm += rm[q];
            }
        }
        (2.0 * self.delta + sk + sm + rk[m], sm - sk)
    }

    /// `Γ_1^k = 1 / (γ/2 + i h_k(1))`.
    #[inline]
    pub fn gamma1(&self, c: usize, k: usize) -> C64 {
        C64::new(0.5 * self.gamma, self.h1(c, k)).inv()
    }

    /// `(Γ_2^km, Γ_3^km)`.
    #[inline]
    pub fn gamma23(&self, c: usize, k: usize, m: usize) -> (C64, C64) {
        let (h11, hd) = self.h_pair(c, k, m);
        (
            C64::new(self.gamma, h11).inv(),
            C64::new(self.gamma, hd).inv(),
        )
    }

    /// Second-order flip rate `Γ_k`.
    #[inline]
    pub fn rate2(&self, c: usize, k: usize) -> f64 {
        let h = self.h1(c, k);
        self.omega * self.omega * self.gamma / (0.25 * self.gamma * self.gamma + h * h)
    }

    /// Fourth-order diagonal correction `β_k = 64Ω⁴γ(γ² − 4h²)/(γ² + 4h²)³`.
    #[inline]
    pub fn beta(&self, c: usize, k: usize) -> f64 {
        let h = self.h1(c, k);
        let (g2, h2) = (self.gamma * self.gamma, 4.0 * h * h);
        64.0 * self.omega.powi(4) * self.gamma * (g2 - h2) / (g2 + h2).powi(3)
    }

    /// The four coefficients `R_i^km` on configuration `c`.
    pub fn r(&self, c: usize, k: usize, m: usize) -> [f64; 4] {
        let g1k = self.gamma1(c, k);
        let g1m = self.gamma1(c, m);
        [
            1.0,
            g1k.re,
            -g1k.im,
            2.0 * (g1m.im * g1m.im - g1m.re * g1m.re),
        ]
    }

    /// The four coefficients `R'_i^km` on configuration `c`.
    pub fn r_prime(&self, c: usize, k: usize, m: usize) -> [f64; 4] {
        let g1k = self.gamma1(c, k);
        let g1m = self.gamma1(c, m);
        let (g2, g3) = self.gamma23(c, k, m);
        let mix = g1k.conj() * (g2.conj() + g3);
        [
            2.0 * ((g1m.conj() * g2.conj() + g1m * g3) * g1k.conj()).re,
            2.0 * mix.re,
            -2.0 * mix.im,
            2.0 * g1k.re,
        ]
    }

    /// `Σ_i R_i^km(x) R'_i^km(y)`.
    #[inline]
    fn pair_sum(&self, x: usize, y: usize, k: usize, m: usize) -> f64 {
        let r = self.r(x, k, m);
        let rp = self.r_prime(y, k, m);
        r.iter().zip(&rp).map(|(a, b)| a * b).sum()
    }

    /// Fourth-order rate for flipping site `k` alone out of `c`.
    pub fn rate4_single(&self, c: usize, k: usize) -> f64 {
        let ck = c ^ site_bit(self.n, k);
        let corr: f64 = (0..self.n)
            .filter(|&m| m != k)
            .map(|m| self.pair_sum(ck, ck, k, m) + self.pair_sum(ck, c, m, k))
            .sum();
        self.rate2(c, k) + self.beta(c, k) - self.omega.powi(4) * corr
    }

    /// Fourth-order rate for flipping `k` and `m` together out of `c`.
    pub fn rate4_double(&self, c: usize, k: usize, m: usize) -> f64 {
        let (bk, bm) = (site_bit(self.n, k), site_bit(self.n, m));
        let ckm = c ^ bk ^ bm;
        self.omega.powi(4) * (self.pair_sum(ckm, c ^ bk, k, m) + self.pair_sum(ckm, c ^ bm, m, k))
    }

    /// Decay contribution to flipping site `k` out of `c`.
    #[inline]
    pub fn decay_rate(&self, c: usize, k: usize) -> f64 {
        if occ(c, self.n, k) {
            self.decay
        } else {
            0.0
        }
    }

    /// Smallest single or double fourth-order rate over all configurations.
    pub fn min_rate4(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for c in 0..1usize << self.n {
            for k in 0..self.n {
                worst = worst.min(self.rate4_single(c, k));
                for m in k + 1..self.n {
                    worst = worst.min(self.rate4_double(c, k, m));
                }
            }
        }
        worst
    }
}

fn packed(config: &Configuration, n: usize, k: usize) -> Result<usize> {
    if config.levels() != Levels::Two || config.n_sites() != n {
        return Err(Error::InvalidSpec(
            "expected a two-level configuration of matching size".into(),
        ));
    }
    config.check_site(k)?;
    Ok(config.index())
}

/// Second-order rate `Γ_k` on a configuration.
pub fn rate2(
    config: &Configuration,
    k: usize,
    params: &DephasingParams,
    v: &InteractionMatrix,
) -> Result<f64> {
    let m = RateModel::new(params, v)?;
    Ok(m.rate2(packed(config, v.n_sites(), k)?, k))
}

/// `β_k` including its `Ω⁴` prefactor.
pub fn rate4_beta(
    config: &Configuration,
    k: usize,
    params: &DephasingParams,
    v: &InteractionMatrix,
) -> Result<f64> {
    let m = RateModel::new(params, v)?;
    Ok(m.beta(packed(config, v.n_sites(), k)?, k))
}

/// Fourth-order single-flip rate `Γ^s_k`.
pub fn rate4_single(
    config: &Configuration,
    k: usize,
    params: &DephasingParams,
    v: &InteractionMatrix,
) -> Result<f64> {
    let m = RateModel::new(params, v)?;
    Ok(m.rate4_single(packed(config, v.n_sites(), k)?, k))
}

/// Fourth-order rate for the simultaneous flip of `k` and `m`.
pub fn rate4_double(
    config: &Configuration,
    k: usize,
    m: usize,
    params: &DephasingParams,
    v: &InteractionMatrix,
) -> Result<f64> {
    if k == m {
        return Err(Error::SameSite(k));
    }
    let model = RateModel::new(params, v)?;
    let c = packed(config, v.n_sites(), k)?;
    config.check_site(m)?;
    Ok(model.rate4_double(c, k, m))
}

/// Expansion order of a classical generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Order {
    Second,
    Fourth,
}

/// Generator `M` of `v̇ = M v`, stored by columns (one column per source configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalGenerator {
    n_sites: usize,
    order: Order,
    with_decay: bool,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    has_negative_rates: bool,
}

impl ClassicalGenerator {
    /// Builds a generator from `(destination, rate)` lists per source; diagonals are filled in.
    pub fn from_rates(
        n_sites: usize,
        order: Order,
        with_decay: bool,
        columns: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        let mut col_ptr = vec![0];
        let (mut rows, mut vals) = (Vec::new(), Vec::new());
        let mut negative = false;
        for (src, col) in columns.into_iter().enumerate() {
            let mut out = 0.0;
            for (dest, rate) in col {
                negative |= rate < NEGATIVE_RATE_GUARD;
                out += rate;
                rows.push(dest);
                vals.push(rate);
            }
            rows.push(src);
            vals.push(-out);
            col_ptr.push(rows.len());
        }
        Self {
            n_sites,
            order,
            with_decay,
            col_ptr,
            rows,
            vals,
            has_negative_rates: negative,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn with_decay(&self) -> bool {
        self.with_decay
    }

    pub fn has_negative_rates(&self) -> bool {
        self.has_negative_rates
    }

    /// Entry `M[dest][src]`.
    pub fn get(&self, dest: usize, src: usize) -> f64 {
        (self.col_ptr[src]..self.col_ptr[src + 1])
            .filter(|&i| self.rows[i] == dest)
            .map(|i| self.vals[i])
            .sum()
    }

    /// `y = M x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (src, &xs) in x.iter().enumerate() {
            if xs == 0.0 {
                continue;
            }
            for i in self.col_ptr[src]..self.col_ptr[src + 1] {
                y[self.rows[i]] += self.vals[i] * xs;
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let d = self.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for src in 0..d {
            for i in self.col_ptr[src]..self.col_ptr[src + 1] {
                m[(self.rows[i], src)] += self.vals[i];
            }
        }
        m
    }

    /// Largest absolute column sum.
    pub fn max_column_sum(&self) -> f64 {
        (0..self.dim())
            .map(|s| {
                self.vals[self.col_ptr[s]..self.col_ptr[s + 1]]
                    .iter()
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Assembles the classical generator to the given order.
pub fn build_generator(
    params: &DephasingParams,
    v: &InteractionMatrix,
    order: Order,
    with_decay: bool,
    exec: Execution,
) -> Result<ClassicalGenerator> {
    let n = v.n_sites();
    if n > GENERATOR_MAX_SITES {
        return Err(Error::DimensionGuard {
            what: "classical generator",
            n_sites: n,
            max: GENERATOR_MAX_SITES,
        });
    }
    if order == Order::Fourth && with_decay {
        return Err(Error::Unsupported(
            "radiative decay is only combined with second-order rates".into(),
        ));
    }
    let model = RateModel::new(params, v)?;
    let columns = map_indexed(exec, 1 << n, |s| {
        let mut col = Vec::with_capacity(n * (n + 1) / 2);
        for k in 0..n {
            let bk = site_bit(n, k);
            let rate = match order {
                Order::Second => {
                    model.rate2(s, k)
                        + if with_decay {
                            model.decay_rate(s, k)
                        } else {
                            0.0
                        }
                }
                Order::Fourth => model.rate4_single(s, k),
            };
            col.push((s ^ bk, rate));
            if order == Order::Fourth {
                for m in k + 1..n {
                    col.push((s ^ bk ^ site_bit(n, m), model.rate4_double(s, k, m)));
                }
            }
        }
        col
    });
    Ok(ClassicalGenerator::from_rates(
        n, order, with_decay, columns,
    ))
}

/// Solver for the linear rate equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSolver {
    RungeKutta {
        rel_tol: f64,
        abs_tol: f64,
    },
    /// Dense matrix exponential; limited to `N ≤ 10`.
    Exponential,
}

impl Default for RateSolver {
    fn default() -> Self {
        RateSolver::RungeKutta {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
        }
    }
}

/// Integrates `v̇ = M v` and records observables (and optionally the distributions).
pub fn integrate_rate_equation(
    gen: &ClassicalGenerator,
    v0: &ProbabilityVector,
    grid: &TimeGrid,
    solver: RateSolver,
    observables: &[Observable],
) -> Result<(TrajectoryRecord, Vec<ProbabilityVector>)> {
    let n = gen.n_sites();
    if v0.n_sites() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v0.n_sites(),
        });
    }
    let mut rec = TrajectoryRecord::with_observables(grid.samples(), observables);
    let mut states = Vec::with_capacity(grid.samples().len());
    let mut record = |i: usize, v: &[f64]| -> Result<()> {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            log::warn!("probability sum drifted to {s}");
        }
        let p = ProbabilityVector::unchecked(n, v.to_vec())?;
        rec.set_row(i, &evaluate_many(observables, StateRef::Probabilities(&p))?);
        states.push(p);
        Ok(())
    };
    match solver {
        RateSolver::RungeKutta { rel_tol, abs_tol } => {
            let fast = (0..gen.dim()).map(|s| -gen.get(s, s)).fold(1e-12, f64::max);
            let opts = OdeOptions {
                rel_tol,
                abs_tol,
                initial_step: 1e-3 / fast,
                max_step: f64::INFINITY,
            };
            let mut dp = DormandPrince::new(
                |_t, y: &[f64], dy: &mut [f64]| gen.mul_vec(y, dy),
                grid.t_start(),
                v0.values().to_vec(),
                opts,
            );
            dp.sample_at(grid.samples(), |i, y| record(i, y))?;
        }
        RateSolver::Exponential => {
            if n > 10 {
                return Err(Error::DimensionGuard {
                    what: "matrix exponential of the rate generator",
                    n_sites: n,
                    max: 10,
                });
            }
            let m = gen.to_dense();
            let mut v = v0.to_dvector();
            let mut t = grid.t_start();
            let mut cached: Option<(f64, nalgebra::DMatrix<f64>)> = None;
            for (i, &ts) in grid.samples().iter().enumerate() {
                let dt = ts - t;
                if dt > 0.0 {
                    let reuse = cached
                        .as_ref()
                        .is_some_and(|(h, _)| (h - dt).abs() <= 1e-14 * dt);
                    if !reuse {
                        cached = Some((dt, (&m * dt).exp()));
                    }
                    v = &cached.as_ref().unwrap().1 * v;
                }
                t = ts;
                record(i, v.as_slice())?;
            }
        }
    }
    Ok((rec, states))
}

/// Sign map of fourth-order rates over a `(V, Δ)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityMap {
    pub v_values: Vec<f64>,
    pub delta_values: Vec<f64>,
    /// Row-major over `(V, Δ)`: `flags[i * delta_values.len() + j]`.
    pub all_rates_nonnegative: Vec<bool>,
    /// Smallest rate found in each cell.
    pub min_rate: Vec<f64>,
}

impl PositivityMap {
    pub fn flag(&self, i_v: usize, i_delta: usize) -> bool {
        self.all_rates_nonnegative[i_v * self.delta_values.len() + i_delta]
    }
}

/// Inclusive equally spaced grid.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Scans the sign of all fourth-order rates over `V × Δ`.
pub fn scan_positivity(
    params: &DephasingParams,
    template: &LatticeSpec,
    v_range: (f64, f64),
    delta_range: (f64, f64),
    resolution: (usize, usize),
    exec: Execution,
) -> Result<PositivityMap> {
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(Error::InvalidSpec(
            "positivity scan needs at least 2 points per axis".into(),
        ));
    }
    params.require_dephasing()?;
    let v_values = linspace(v_range.0, v_range.1, resolution.0);
    let delta_values = linspace(delta_range.0, delta_range.1, resolution.1);
    let nd = delta_values.len();
    let cells = map_indexed(exec, v_values.len() * nd, |cell| -> Result<f64> {
        let mut spec = template.clone();
        spec.nn_strength = v_values[cell / nd];
        let v = build_chain_interactions(&spec)?;
        let mut p = *params;
        p.detuning = delta_values[cell % nd];
        Ok(RateModel::new(&p, &v)?.min_rate4())
    });
    let min_rate = cells.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(PositivityMap {
        all_rates_nonnegative: min_rate.iter().map(|&r| r >= NEGATIVE_RATE_GUARD).collect(),
        v_values,
        delta_values,
        min_rate,
    })
}
