//! Gillespie sampling of the second-order rate equation.
//!
//! Each site carries its current flip rate in a Fenwick tree, so drawing the
//! next event and updating rates after a flip are logarithmic in `N`. Local
//! fields are updated incrementally over a neighbour list truncated at a
//! coupling cutoff and rebuilt from scratch periodically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::Configuration;
use crate::error::{Error, Result};
use crate::evolution::{Series, TimeGrid, TrajectoryRecord};
use crate::exec::{try_map_indexed, Execution};
use crate::model::{Boundary, DephasingParams, InteractionMatrix, LatticeSpec};
use crate::observables::Observable;

/// Events between full recomputations of fields and rate sums.
pub const RESYNC_INTERVAL: u64 = 1_000_000;

/// Relative rate tolerance used by [`default_cutoff`].
pub const CUTOFF_EPSILON: f64 = 1e-6;

/// Binary indexed tree over nonnegative weights.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
    values: Vec<f64>,
}

impl Fenwick {
    pub fn new(values: Vec<f64>) -> Self {
        let mut f = Self {
            tree: vec![0.0; values.len() + 1],
            values,
        };
        f.rebuild();
        f
    }

    fn rebuild(&mut self) {
        let n = self.values.len();
        self.tree.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let j = i + 1;
            self.tree[j] += self.values[i];
            let parent = j + (j & j.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[j];
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.values[i];
        self.values[i] = value;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    pub fn total(&self) -> f64 {
        let mut j = self.values.len();
        let mut s = 0.0;
        while j > 0 {
            s += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        s
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    pub fn find(&self, mut target: f64) -> usize {
        let n = self.values.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        // Guard against roundoff pushing past the last positive weight.
        let mut i = pos.min(n - 1);
        while self.values[i] <= 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

/// Sparse symmetric couplings as per-site neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct KmcLattice {
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl KmcLattice {
    /// All nonzero couplings of an explicit matrix.
    pub fn from_matrix(v: &InteractionMatrix) -> Self {
        let n = v.n_sites();
        Self {
            neighbours: (0..n)
                .map(|k| {
                    (0..n)
                        .filter(|&q| q != k && v.get(k, q) != 0.0)
                        .map(|q| (q, v.get(k, q)))
                        .collect()
                })
                .collect(),
        }
    }

    /// Chain couplings up to `cutoff` lattice spacings; `None` keeps every pair.
    pub fn chain(spec: &LatticeSpec, cutoff: Option<usize>) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_sites;
        let reach = cutoff
            .unwrap_or(n)
            .min(spec.max_distance.unwrap_or(n))
            .min(n);
        let neighbours = (0..n)
            .map(|k| {
                let mut list: Vec<(usize, f64)> = Vec::new();
                for d in 1..=reach {
                    let v = spec.coupling_at(d);
                    if v == 0.0 {
                        continue;
                    }
                    let candidates = match spec.boundary {
                        Boundary::Periodic => [Some((k + d) % n), Some((k + n - d % n) % n)],
                        Boundary::Open => [(k + d < n).then_some(k + d), k.checked_sub(d)],
                    };
                    for q in candidates.into_iter().flatten() {
                        if q != k && spec.distance(k, q) == d && !list.iter().any(|&(x, _)| x == q)
                        {
                            list.push((q, v));
                        }
                    }
                }
                list
            })
            .collect();
        Ok(Self { neighbours })
    }

    pub fn n_sites(&self) -> usize {
        self.neighbours.len()
    }

    pub fn neighbours(&self, k: usize) -> &[(usize, f64)] {
        &self.neighbours[k]
    }
}

/// Smallest distance `d` with `V/dᵖ < ε (γ/2)² / (Ω²γ)` for all larger distances.
pub fn default_cutoff(spec: &LatticeSpec, params: &DephasingParams) -> usize {
    let g = params.dephasing_gamma;
    let om2 = params.rabi_omega * params.rabi_omega;
    if om2 == 0.0 || spec.nn_strength == 0.0 {
        return 1;
    }
    let threshold = CUTOFF_EPSILON * 0.25 * g * g / (om2 * g);
    let mut d = 1;
    while spec.nn_strength.abs() / (d as f64).powi(spec.exponent_p as i32) >= threshold
        && d < spec.n_sites
    {
        d += 1;
    }
    d
}

/// Live state of one Gillespie run.
#[derive(Debug, Clone)]
pub struct KmcState<'a> {
    lattice: &'a KmcLattice,
    omega2_gamma: f64,
    quarter_gamma2: f64,
    delta: f64,
    decay: f64,
    pub occupied: Vec<bool>,
    field: Vec<f64>,
    rates: Fenwick,
    pub time: f64,
    pub events: u64,
    rng: ChaCha8Rng,
}

impl<'a> KmcState<'a> {
    pub fn new(
        params: &DephasingParams,
        lattice: &'a KmcLattice,
        config0: &Configuration,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        params.require_dephasing()?;
        let n = lattice.n_sites();
        if config0.n_sites() != n || config0.levels() != crate::basis::Levels::Two {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: config0.n_sites(),
            });
        }
        let occupied: Vec<bool> = (0..n).map(|k| config0.occupied(k)).collect();
        Self::from_occupations(params, lattice, occupied, seed)
    }

    /// Starts from an explicit occupation list, for lattices too large for a packed index.
    pub fn from_occupations(
        params: &DephasingParams,
        lattice: &'a KmcLattice,
        occupied: Vec<bool>,
        seed: u64,
    ) -> Result<Self> {
        params.require_dephasing()?;
        let n = lattice.n_sites();
        if occupied.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: occupied.len(),
            });
        }
        let g = params.dephasing_gamma;
        let mut s = Self {
            lattice,
            omega2_gamma: params.rabi_omega * params.rabi_omega * g,
            quarter_gamma2: 0.25 * g * g,
            delta: params.detuning,
            decay: params.decay_gamma_ryd,
            occupied,
            field: vec![0.0; n],
            rates: Fenwick::new(vec![0.0; n]),
            time: 0.0,
            events: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.resync()?;
        Ok(s)
    }

    fn site_rate(&self, k: usize) -> Result<f64> {
        let h = self.field[k];
        let mut r = self.omega2_gamma / (self.quarter_gamma2 + h * h);
        if self.occupied[k] {
            r += self.decay;
        }
        if !(r >= 0.0) {
            return Err(Error::NegativeRate { site: k, rate: r });
        }
        Ok(r)
    }

    /// Recomputes all fields and rates from the configuration.
    pub fn resync(&mut self) -> Result<()> {
        let n = self.lattice.n_sites();
        for k in 0..n {
            self.field[k] = self.delta
                + self
                    .lattice
                    .neighbours(k)
                    .iter()
                    .filter(|&&(q, _)| self.occupied[q])
                    .map(|&(_, v)| v)
                    .sum::<f64>();
        }
        let rates = (0..n)
            .map(|k| self.site_rate(k))
            .collect::<Result<Vec<_>>>()?;
        self.rates = Fenwick::new(rates);
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    pub fn rate(&self, k: usize) -> f64 {
        self.rates.get(k)
    }

    pub fn field(&self, k: usize) -> f64 {
        self.field[k]
    }

    /// Flips `site` and refreshes the rates of its neighbourhood.
    pub fn flip(&mut self, site: usize) -> Result<()> {
        let sign = if self.occupied[site] { -1.0 } else { 1.0 };
        self.occupied[site] = !self.occupied[site];
        for &(q, v) in self.lattice.neighbours(site) {
            self.field[q] += sign * v;
            let r = self.site_rate(q)?;
            self.rates.set(q, r);
        }
        let r = self.site_rate(site)?;
        self.rates.set(site, r);
        self.events += 1;
        if self.events.is_multiple_of(RESYNC_INTERVAL) {
            self.resync()?;
        }
        Ok(())
    }

    /// Draws the next event. Returns `false` (and leaves time unchanged) when no event occurs
    /// before `t_limit`, in which case the clock is moved to `t_limit`.
    pub fn step_until(&mut self, t_limit: f64) -> Result<bool> {
        let total = self.total_rate();
        if !(total > 0.0) {
            self.time = t_limit;
            return Ok(false);
        }
        let u: f64 = self.rng.random();
        let dt = -(1.0 - u).ln() / total;
        if self.time + dt > t_limit {
            self.time = t_limit;
            return Ok(false);
        }
        self.time += dt;
        let site = self.rates.find(self.rng.random::<f64>() * total);
        self.flip(site)?;
        Ok(true)
    }

    pub fn density(&self) -> f64 {
        self.occupied.iter().filter(|&&b| b).count() as f64 / self.occupied.len() as f64
    }

    /// Packed configuration index (sites `≤ 63`).
    pub fn index(&self) -> usize {
        self.occupied
            .iter()
            .fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    fn observable(&self, o: &Observable) -> Result<f64> {
        let n = self.occupied.len();
        Ok(match o {
            Observable::MeanDensity => self.density(),
            Observable::DensityFluctuations => 0.0,
            Observable::G2(d) => {
                (0..n)
                    .filter(|&k| self.occupied[k] && self.occupied[(k + d) % n])
                    .count() as f64
                    / n as f64
            }
            Observable::CustomDiagonal { values, .. } => {
                *values
                    .get(self.index())
                    .ok_or_else(|| Error::DimensionMismatch {
                        expected: 1 << n.min(63),
                        found: values.len(),
                    })?
            }
            Observable::SigmaXMean => {
                return Err(Error::IncompatibleObservable {
                    observable: o.name(),
                    state: "a classical configuration",
                })
            }
        })
    }
}

/// Runs to the end of `grid`, handing the state to `sink` at every sample.
pub fn run_with<S>(state: &mut KmcState<'_>, grid: &TimeGrid, mut sink: S) -> Result<()>
where
    S: FnMut(usize, &KmcState<'_>) -> Result<()>,
{
    state.time = grid.t_start();
    for (i, &t) in grid.samples().iter().enumerate() {
        while state.step_until(t)? {}
        sink(i, state)?;
    }
    Ok(())
}

fn check_observables(observables: &[Observable], n: usize) -> Result<()> {
    for o in observables {
        if let Observable::G2(d) = o {
            if *d == 0 || *d >= n {
                return Err(Error::InvalidSpec(format!(
                    "g2 distance {d} outside [1, {})",
                    n
                )));
            }
        }
    }
    Ok(())
}

/// A single run; density fluctuations of one configuration are zero by definition.
pub fn gillespie_run(
    params: &DephasingParams,
    lattice: &KmcLattice,
    config0: &Configuration,
    seed: u64,
    grid: &TimeGrid,
    observables: &[Observable],
) -> Result<TrajectoryRecord> {
    check_observables(observables, lattice.n_sites())?;
    let mut state = KmcState::new(params, lattice, config0, seed)?;
    let mut rec = TrajectoryRecord::with_observables(grid.samples(), observables);
    run_with(&mut state, grid, |i, s| {
        let row = observables
            .iter()
            .map(|o| s.observable(o))
            .collect::<Result<Vec<_>>>()?;
        rec.set_row(i, &row);
        Ok(())
    })?;
    Ok(rec)
}

/// Ensemble means and standard errors over runs seeded `base_seed + i`.
///
/// Density fluctuations are the ensemble variance of the density, with the
/// standard error from the delta method.
pub fn gillespie_ensemble(
    params: &DephasingParams,
    lattice: &KmcLattice,
    config0: &Configuration,
    grid: &TimeGrid,
    n_runs: usize,
    base_seed: u64,
    observables: &[Observable],
    exec: Execution,
) -> Result<TrajectoryRecord> {
    if n_runs < 2 {
        return Err(Error::InvalidSpec(
            "an ensemble needs at least two runs".into(),
        ));
    }
    check_observables(observables, lattice.n_sites())?;
    let ns = grid.samples().len();
    let no = observables.len();
    // Per run: for each sample, the density followed by each observable's single-run value.
    let runs = try_map_indexed(exec, n_runs, |r| -> Result<Vec<f64>> {
        let mut state = KmcState::new(params, lattice, config0, base_seed.wrapping_add(r as u64))?;
        let mut out = vec![0.0; ns * (no + 1)];
        run_with(&mut state, grid, |i, s| {
            let row = &mut out[i * (no + 1)..(i + 1) * (no + 1)];
            row[0] = s.density();
            for (j, o) in observables.iter().enumerate() {
                row[j + 1] = s.observable(o)?;
            }
            Ok(())
        })?;
        Ok(out)
    })?;
    let nr = n_runs as f64;
    let mut mean = vec![0.0; ns * (no + 1)];
    let mut sq = vec![0.0; ns * (no + 1)];
    let mut m3 = vec![0.0; ns];
    let mut m4 = vec![0.0; ns];
    for run in &runs {
        for (i, &x) in run.iter().enumerate() {
            mean[i] += x;
            sq[i] += x * x;
        }
        for t in 0..ns {
            let x = run[t * (no + 1)];
            m3[t] += x * x * x;
            m4[t] += x * x * x * x;
        }
    }
    let se_of = |i: usize| {
        let m = mean[i] / nr;
        (((sq[i] / nr - m * m) * nr / (nr - 1.0)).max(0.0) / nr).sqrt()
    };
    let series = observables
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let mut values = vec![0.0; ns];
            let mut errs = vec![0.0; ns];
            for t in 0..ns {
                let i = t * (no + 1) + j + 1;
                if matches!(o, Observable::DensityFluctuations) {
                    let base = t * (no + 1);
                    let (e1, e2) = (mean[base] / nr, sq[base] / nr);
                    let var = (e2 - e1 * e1) * nr / (nr - 1.0);
                    values[t] = var;
                    let mu4 =
                        m4[t] / nr - 4.0 * e1 * m3[t] / nr + 6.0 * e1 * e1 * e2 - 3.0 * e1.powi(4);
                    errs[t] = ((mu4 - var * var).max(0.0) / nr).sqrt();
                } else {
                    values[t] = mean[i] / nr;
                    errs[t] = se_of(i);
                }
            }
            Series {
                name: o.name(),
                values,
                std_err: Some(errs),
            }
        })
        .collect();
    Ok(TrajectoryRecord {
        times: grid.samples().to_vec(),
        series,
        states: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_chain_interactions;
    use crate::rates::RateModel;
    use proptest::prelude::*;

    #[test]
    fn fenwick_prefix_search() {
        let mut f = Fenwick::new(vec![1.0, 0.0, 2.0, 3.0]);
        assert_eq!(f.total(), 6.0);
        assert_eq!(f.find(0.5), 0);
        assert_eq!(f.find(1.5), 2);
        assert_eq!(f.find(3.5), 3);
        f.set(1, 4.0);
        assert_eq!(f.find(1.5), 1);
        assert_eq!(f.total(), 10.0);
    }

    #[test]
    fn first_waiting_time_rate() {
        let spec = LatticeSpec::chain(3, 6, 10.0, Boundary::Periodic);
        let lat = KmcLattice::chain(&spec, None).unwrap();
        let s = KmcState::new(
            &DephasingParams::new(1.0, 0.0, 10.0),
            &lat,
            &Configuration::all_down(3, crate::basis::Levels::Two),
            0,
        )
        .unwrap();
        assert!((s.total_rate() - 1.2).abs() < 1e-14);
    }

    #[test]
    fn chain_lattice_matches_matrix() {
        for boundary in [Boundary::Periodic, Boundary::Open] {
            for n in [2, 3, 6, 7] {
                let spec = LatticeSpec::chain(n, 3, 4.0, boundary);
                let a = KmcLattice::chain(&spec, None).unwrap();
                let v = build_chain_interactions(&spec).unwrap();
                let b = KmcLattice::from_matrix(&v);
                for k in 0..n {
                    let mut x = a.neighbours(k).to_vec();
                    let mut y = b.neighbours(k).to_vec();
                    x.sort_by_key(|e| e.0);
                    y.sort_by_key(|e| e.0);
                    assert_eq!(x.len(), y.len(), "n={n} k={k}");
                    for (p, q) in x.iter().zip(&y) {
                        assert_eq!(p.0, q.0);
                        assert!((p.1 - q.1).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn cutoff_error_is_small() {
        let n = 100;
        let spec = LatticeSpec::chain(n, 6, 10.0, Boundary::Periodic);
        let params = DephasingParams::new(1.0, 0.0, 10.0);
        let full = KmcLattice::chain(&spec, None).unwrap();
        let cut = KmcLattice::chain(&spec, Some(10)).unwrap();
        let occ: Vec<bool> = (0..n).map(|k| k % 3 == 0 || k % 7 == 0).collect();
        let a = KmcState::from_occupations(&params, &full, occ.clone(), 0).unwrap();
        let b = KmcState::from_occupations(&params, &cut, occ, 0).unwrap();
        for k in 0..n {
            assert!((a.rate(k) - b.rate(k)).abs() / a.rate(k) < 1e-5);
        }
        assert!(default_cutoff(&spec, &params) >= 10);
    }

    #[test]
    fn incremental_updates_match_recompute() {
        let spec = LatticeSpec::chain(12, 6, 10.0, Boundary::Periodic);
        let params = DephasingParams::new(1.0, -5.0, 10.0).with_decay(0.3);
        let lat = KmcLattice::chain(&spec, None).unwrap();
        let v = build_chain_interactions(&spec).unwrap();
        let model = RateModel::new(&params, &v).unwrap();
        let mut s = KmcState::new(
            &params,
            &lat,
            &Configuration::all_down(12, crate::basis::Levels::Two),
            9,
        )
        .unwrap();
        for _ in 0..500 {
            s.step_until(f64::INFINITY).unwrap();
        }
        let c = s.index();
        for k in 0..12 {
            let expect = model.rate2(c, k) + model.decay_rate(c, k);
            assert!((s.rate(k) - expect).abs() < 1e-12);
        }
        let total: f64 = (0..12).map(|k| s.rate(k)).sum();
        assert!((s.total_rate() - total).abs() < 1e-9);
    }

    #[test]
    fn isolated_flip_is_local() {
        let n = 60;
        let spec = LatticeSpec::chain(n, 6, 10.0, Boundary::Periodic);
        let params = DephasingParams::new(1.0, 0.0, 10.0);
        let lat = KmcLattice::chain(&spec, Some(5)).unwrap();
        let mut s = KmcState::from_occupations(&params, &lat, vec![false; n], 0).unwrap();
        let before: Vec<f64> = (0..n).map(|k| s.rate(k)).collect();
        s.flip(30).unwrap();
        for k in (0..n).filter(|&k| spec.distance(k, 30) > 5) {
            assert_eq!(s.rate(k), before[k]);
        }
    }

    #[test]
    fn decay_without_drive_empties_lattice() {
        let spec = LatticeSpec::chain(5, 6, 1.0, Boundary::Periodic);
        let lat = KmcLattice::chain(&spec, None).unwrap();
        let params = DephasingParams::new(1e-6, 0.0, 10.0).with_decay(1.0);
        let c0 = Configuration::from_occupations(&[true; 5]);
        let grid = TimeGrid::uniform(0.0, 30.0, 4).unwrap();
        let rec = gillespie_run(&params, &lat, &c0, 4, &grid, &[Observable::MeanDensity]).unwrap();
        assert_eq!(*rec.values("mean_density").unwrap().last().unwrap(), 0.0);
    }

    #[test]
    fn rejects_sigma_x() {
        let lat = KmcLattice::from_matrix(&InteractionMatrix::zeros(2));
        let grid = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let r = gillespie_run(
            &DephasingParams::new(1.0, 0.0, 10.0),
            &lat,
            &Configuration::from_occupations(&[false; 2]),
            0,
            &grid,
            &[Observable::SigmaXMean],
        );
        assert!(matches!(r, Err(Error::IncompatibleObservable { .. })));
    }

    proptest! {
        #[test]
        fn fenwick_matches_linear_scan(values in proptest::collection::vec(0.0f64..5.0, 1..40), u in 0.0f64..1.0) {
            let f = Fenwick::new(values.clone());
            let total: f64 = values.iter().sum();
            prop_assume!(total > 0.0);
            let target = u * total;
            let mut acc = 0.0;
            let expect = values.iter().position(|&x| { acc += x; acc > target }).unwrap_or(values.len() - 1);
            let got = f.find(target);
            prop_assert!(got == expect || values[got] > 0.0 && (acc - target).abs() < 1e-9);
        }
    }
}
