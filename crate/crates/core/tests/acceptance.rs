//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `RYDEFF_ACCEPTANCE_ONLY=<n>` to run a single criterion.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rydeff_core::basis::{Configuration, Levels};
use rydeff_core::eit::{self, ReducedVariant};
use rydeff_core::evolution::{integrate, trace_distance, IntegrateOptions, TimeGrid};
use rydeff_core::exec::Execution;
use rydeff_core::kmc::{self, KmcLattice, KmcState};
use rydeff_core::model::{
    build_chain_interactions, Boundary, DephasingParams, EitParams, InteractionMatrix, LatticeSpec,
};
use rydeff_core::nz::{diagonal_units, restrict, SuperoperatorSplit};
use rydeff_core::observables::{evaluate, Observable, StateRef};
use rydeff_core::operators::{build_three_level_liouvillian, build_two_level_liouvillian};
use rydeff_core::qjmc::{average_trajectories, JumpUnravelling};
use rydeff_core::rates::{
    self, build_generator, integrate_rate_equation, scan_positivity, ClassicalGenerator, Order,
    RateModel, RateSolver,
};
use rydeff_core::state::{DensityMatrix, ProbabilityVector};
use rydeff_core::Result;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Result<Outcome>;

fn main() {
    let only: Option<usize> = std::env::var("RYDEFF_ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let criteria: [(&str, f64, Criterion); 9] = [
        ("oracle equivalence, order 2", 60.0, criterion_1),
        ("oracle equivalence, order 4", 600.0, criterion_2),
        ("vanishing odd orders", 60.0, criterion_3),
        ("dephased chain dynamics", 1800.0, criterion_4),
        ("rate positivity map", 1200.0, criterion_5),
        ("EIT reduced dynamics", 1800.0, criterion_6),
        ("EIT stationary distance", 1800.0, criterion_7),
        ("KMC equivalence", 300.0, criterion_8),
        ("structural invariants", 120.0, criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = run().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let secs = start.elapsed().as_secs_f64();
        if !out.pass {
            failed += 1;
        }
        let over = if secs > budget {
            " [over runtime budget]"
        } else {
            ""
        };
        println!(
            "criterion {id} ({name}): {} in {secs:.1}s (budget {budget:.0}s){over} | {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn chain(n: usize, v: f64) -> Result<InteractionMatrix> {
    build_chain_interactions(&LatticeSpec::chain(n, 6, v, Boundary::Periodic))
}

fn real(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Floor, relative to the largest oracle entry, below which entries are compared absolutely.
///
/// Structurally zero entries carry ~1e-16 roundoff from the resolvent solves.
const ENTRY_FLOOR: f64 = 1e-8;

/// Entrywise relative error, with entries below `ENTRY_FLOOR·max|b|` measured against that floor.
fn entry_rel_err(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let floor = ENTRY_FLOOR * b.camax();
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm() / y.norm().max(floor))
        .fold(0.0, f64::max)
}

fn parameter_grid() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for g in [5.0, 10.0, 20.0] {
        for v in [0.0, 5.0, 10.0] {
            for d in [-10.0, 0.0, 10.0] {
                out.push((g, v, d));
            }
        }
    }
    out
}

struct OraclePoint {
    split: SuperoperatorSplit,
    units: Vec<usize>,
}

impl OraclePoint {
    fn new(n: usize, p: &DephasingParams, v: &InteractionMatrix) -> Result<Self> {
        Ok(Self {
            split: SuperoperatorSplit::dephasing(p, v)?,
            units: diagonal_units(1 << n),
        })
    }

    fn order(&self, k: usize) -> Result<DMatrix<C64>> {
        Ok(restrict(
            &self.split.effective_generator(k)?.generator,
            &self.units,
        ))
    }
}

fn criterion_1() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in 1..=3 {
        for (g, v, d) in parameter_grid() {
            let p = DephasingParams::new(1.0, d, g);
            let m = chain(n, v)?;
            let o2 = OraclePoint::new(n, &p, &m)?.order(2)?;
            let g2 = real(
                &build_generator(&p, &m, Order::Second, false, Execution::default())?.to_dense(),
            );
            worst = worst.max(entry_rel_err(&g2, &o2));
            count += 1;
        }
    }
    Ok(Outcome {
        pass: worst < 1e-8,
        detail: format!("{count} points, max relative entry error {worst:.2e} (tolerance 1e-8)"),
    })
}

/// Order-4 generator with the alternative `β_k = 8 (ReΓ₁)² [(ReΓ₁)² − (ImΓ₁)²] Ω⁴`.
fn with_alternative_beta(
    gen: &ClassicalGenerator,
    p: &DephasingParams,
    v: &InteractionMatrix,
) -> Result<DMatrix<f64>> {
    let model = RateModel::new(p, v)?;
    let n = v.n_sites();
    let mut m = gen.to_dense();
    for s in 0..1usize << n {
        for k in 0..n {
            let g1 = model.gamma1(s, k);
            let alt = 8.0 * g1.re * g1.re * (g1.re * g1.re - g1.im * g1.im) * p.rabi_omega.powi(4);
            let delta = alt - model.beta(s, k);
            let t = s ^ (1 << (n - 1 - k));
            m[(t, s)] += delta;
            m[(s, s)] -= delta;
        }
    }
    Ok(m)
}

fn criterion_2() -> Result<Outcome> {
    let mut points: Vec<(usize, f64, f64, f64)> = parameter_grid()
        .into_iter()
        .map(|(g, v, d)| (2, g, v, d))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        points.push((
            3,
            rng.random_range(5.0..20.0),
            rng.random_range(0.0..10.0),
            rng.random_range(-10.0..10.0),
        ));
    }
    let (mut worst, mut alt_worst): (f64, f64) = (0.0, 0.0);
    for &(n, g, v, d) in &points {
        let p = DephasingParams::new(1.0, d, g);
        let m = chain(n, v)?;
        let o = OraclePoint::new(n, &p, &m)?;
        let target = o.order(2)? + o.order(4)?;
        let gen = build_generator(&p, &m, Order::Fourth, false, Execution::default())?;
        worst = worst.max(entry_rel_err(&real(&gen.to_dense()), &target));
        alt_worst = alt_worst.max(entry_rel_err(
            &real(&with_alternative_beta(&gen, &p, &m)?),
            &target,
        ));
    }
    let adjudicated = alt_worst > 1e-6;
    Ok(Outcome {
        pass: worst < 1e-6 && adjudicated,
        detail: format!(
            "{} points, beta max relative error {worst:.2e} (tolerance 1e-6); alternative beta form max error {alt_worst:.2e}{}",
            points.len(),
            if adjudicated { "" } else { " -- alternative form NOT excluded" }
        ),
    })
}

fn criterion_3() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for n in 1..=2 {
        for (g, v, d) in parameter_grid() {
            let split =
                SuperoperatorSplit::dephasing(&DephasingParams::new(1.0, d, g), &chain(n, v)?)?;
            for k in [1, 3] {
                worst = worst.max(split.effective_generator(k)?.generator.norm());
            }
        }
    }
    Ok(Outcome {
        pass: worst < 1e-10,
        detail: format!("max norm of L1, L3 over N <= 2 grid {worst:.2e} (tolerance 1e-10)"),
    })
}

fn classical_distance(v: &[f64]) -> f64 {
    let u = 1.0 / v.len() as f64;
    0.5 * v.iter().map(|x| (x - u).abs()).sum::<f64>()
}

/// Least-squares exponent of `y ∝ tᵇ`.
fn power_law_exponent(t: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

fn criterion_4() -> Result<Outcome> {
    let n = 9;
    let m = chain(n, 10.0)?;
    let mut samples: Vec<f64> = (0..=10).map(|i| 0.02 * i as f64).collect();
    samples.extend((3..=100).map(|i| 0.1 * i as f64));
    let grid = TimeGrid::new(0.0, 10.0, samples.clone())?;
    let obs = [Observable::MeanDensity];
    let mut pass = true;
    let mut notes = Vec::new();
    for delta in [-10.0, 0.0, 10.0] {
        let p = DephasingParams::new(1.0, delta, 10.0);
        let u = JumpUnravelling::new(&p, &m)?;
        let mut psi0 = vec![C64::new(0.0, 0.0); 1 << n];
        psi0[0] = C64::new(1.0, 0.0);
        let q = average_trajectories(&u, &psi0, &grid, 2000, 1000, &obs, Execution::default())?;
        let qn = q.values("mean_density").unwrap();
        let v0 = ProbabilityVector::from_configuration(&Configuration::all_down(n, Levels::Two))?;
        let mut dev: [f64; 2] = [0.0; 2];
        let mut slope_err: f64 = 0.0;
        let mut mixed: f64 = 0.0;
        for (j, order) in [Order::Second, Order::Fourth].into_iter().enumerate() {
            let gen = build_generator(&p, &m, order, false, Execution::default())?;
            let (rec, _) = integrate_rate_equation(&gen, &v0, &grid, RateSolver::default(), &obs)?;
            for (i, &t) in samples.iter().enumerate() {
                if (1.0..=10.0).contains(&t) {
                    dev[j] = dev[j].max((rec.values("mean_density").unwrap()[i] - qn[i]).abs());
                }
            }
            let late = TimeGrid::new(0.0, 50.0, vec![50.0])?;
            let (_, states) =
                integrate_rate_equation(&gen, &v0, &late, RateSolver::default(), &[])?;
            mixed = mixed.max(classical_distance(states[0].values()));
            if order == Order::Second {
                let mut dv = vec![0.0; 1 << n];
                gen.mul_vec(v0.values(), &mut dv);
                let slope: f64 = dv
                    .iter()
                    .enumerate()
                    .map(|(c, x)| x * c.count_ones() as f64 / n as f64)
                    .sum();
                let expect = rates::rate2(&Configuration::all_down(n, Levels::Two), 0, &p, &m)?;
                slope_err = if slope > 0.0 {
                    (slope - expect).abs() / expect
                } else {
                    f64::INFINITY
                };
            }
        }
        let exponent = power_law_exponent(&samples[1..=10], &qn[1..=10]);
        let l = build_two_level_liouvillian(&p, &m)?;
        let rho0 = DensityMatrix::from_configuration(&Configuration::all_down(n, Levels::Two))?;
        let rec = integrate(
            &l,
            &rho0,
            &TimeGrid::new(0.0, 50.0, vec![50.0])?,
            &IntegrateOptions::new(1e-8, 1e-10).keeping_states(),
        )?;
        let exact_mixed = trace_distance(
            &rec.states.unwrap()[0],
            &DensityMatrix::maximally_mixed(n, Levels::Two)?,
        )?;
        let ok = dev[0] < 0.05
            && dev[1] < 0.05
            && slope_err < 1e-10
            && exponent > 1.0
            && mixed < 0.02
            && exact_mixed < 0.02;
        pass &= ok;
        notes.push(format!(
            "D={delta}: dev rate2 {:.3} rate4 {:.3}, slope rel err {slope_err:.1e}, QJMC growth exponent {exponent:.2}, T(t=50) rate {mixed:.1e} exact {exact_mixed:.1e}",
            dev[0], dev[1]
        ));
    }
    Ok(Outcome {
        pass,
        detail: format!("N={n}; {}", notes.join("; ")),
    })
}

/// Smallest `V > 0` on `values` at which some order-4 rate is negative along `Δ = sign·V`.
fn ray_threshold(n: usize, values: &[f64], sign: f64) -> Result<Option<f64>> {
    for &v in values.iter().filter(|&&v| v > 0.0) {
        let m = chain(n, v)?;
        let model = RateModel::new(&DephasingParams::new(1.0, sign * v, 10.0), &m)?;
        if model.min_rate4() < rates::NEGATIVE_RATE_GUARD {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

fn criterion_5() -> Result<Outcome> {
    let p = DephasingParams::new(1.0, 0.0, 10.0);
    let full = scan_positivity(
        &p,
        &LatticeSpec::chain(4, 6, 0.0, Boundary::Periodic),
        (0.0, 30.0),
        (-30.0, 30.0),
        (60, 120),
        Execution::default(),
    )?;
    let v0_positive = (0..120).all(|j| full.flag(0, j));
    let negative4 = full.all_rates_nonnegative.iter().filter(|f| !**f).count();
    let sub_v: Vec<f64> = full.v_values.iter().step_by(5).copied().collect();
    let sub_d: Vec<f64> = full.delta_values.iter().step_by(5).copied().collect();
    let spec9 = LatticeSpec::chain(9, 6, 0.0, Boundary::Periodic);
    let sub9 = scan_positivity(
        &p,
        &spec9,
        (sub_v[0], *sub_v.last().unwrap()),
        (sub_d[0], *sub_d.last().unwrap()),
        (12, 24),
        Execution::default(),
    )?;
    let negative9 = sub9.all_rates_nonnegative.iter().filter(|f| !**f).count();
    let mut rays_ok = true;
    let mut notes = Vec::new();
    for sign in [1.0, -1.0] {
        let t4 = ray_threshold(4, &sub_v, sign)?;
        let t9 = ray_threshold(9, &sub_v, sign)?;
        let ok = match (t4, t9) {
            (Some(a), Some(b)) => b >= a,
            (_, None) => true,
            (None, Some(_)) => false,
        };
        rays_ok &= ok;
        notes.push(format!("ray D={sign:+}V onset N=4 {t4:?} N=9 {t9:?}"));
    }
    Ok(Outcome {
        pass: v0_positive && negative4 > 0 && rays_ok,
        detail: format!(
            "V=0 column positive: {v0_positive}; negative cells N=4 {negative4}/7200, N=9 sub-grid {negative9}/288; {}",
            notes.join(", ")
        ),
    })
}

fn criterion_6() -> Result<Outcome> {
    let n = 5;
    let m = chain(n, 100.0)?;
    let grid = TimeGrid::uniform(0.0, 50.0, 101)?;
    let obs = [
        Observable::MeanDensity,
        Observable::DensityFluctuations,
        Observable::SigmaXMean,
    ];
    let opts = IntegrateOptions::new(1e-7, 1e-9).observing(&obs);
    let mut devs = Vec::new();
    for wp in [0.1, 1.0, 10.0] {
        let p = EitParams::new(wp, 1.0, 0.0, 100.0);
        let full = integrate(
            &build_three_level_liouvillian(&p, &m)?,
            &DensityMatrix::from_configuration(&Configuration::all_down(n, Levels::Three))?,
            &grid,
            &opts,
        )?;
        let model = eit::build_reduced_liouvillian(&p, &m, ReducedVariant::SecondOrder)?;
        let red = model.integrate(
            &DensityMatrix::from_configuration(&Configuration::all_down(n, Levels::Two))?,
            &grid,
            &opts,
        )?;
        let (dev, _) = rydeff_core::evolution::compare_records(&full, &red)?;
        devs.push(dev.iter().map(|d| d.max_abs).fold(0.0, f64::max));
    }
    Ok(Outcome {
        pass: devs[0] < 0.02 && devs[1] < 0.02 && devs[2] > devs[1],
        detail: format!(
            "N={n}, max deviation over <n>, fluctuations, <sigma_x>: Op/Oc=0.1 {:.4}, 1 {:.4}, 10 {:.4} (tolerance 0.02; 10 must exceed 1)",
            devs[0], devs[1], devs[2]
        ),
    })
}

/// Relative tolerance under which a decrease in `T` with `N` still counts as flat.
const FLAT_TOLERANCE: f64 = 0.10;

fn criterion_7() -> Result<Outcome> {
    let v_sweep = [10.0, 100.0, 1000.0, 10000.0];
    let sizes = [2usize, 3, 4, 5];
    let gammas = [100.0, 1000.0];
    let mut table = vec![vec![vec![0.0; v_sweep.len()]; sizes.len()]; gammas.len()];
    for (gi, &g) in gammas.iter().enumerate() {
        let p = EitParams::new(10.0, 1.0, 0.0, g);
        for (ni, &n) in sizes.iter().enumerate() {
            let excl = eit::build_reduced_liouvillian(
                &p,
                &InteractionMatrix::zeros(n),
                ReducedVariant::NnExclusion {
                    boundary: Boundary::Periodic,
                },
            )?
            .steady_state()?;
            for (vi, &v) in v_sweep.iter().enumerate() {
                let spec = LatticeSpec {
                    max_distance: Some(1),
                    ..LatticeSpec::chain(n, 6, v, Boundary::Periodic)
                };
                let full = eit::full_steady_state(&p, &build_chain_interactions(&spec)?)?;
                table[gi][ni][vi] = trace_distance(&eit::project_and_reduce(&full)?, &excl)?;
            }
        }
    }
    let last = v_sweep.len() - 1;
    let mut ok_n = true;
    let mut ok_sat = true;
    let mut ok_gamma = true;
    for gi in 0..gammas.len() {
        for ni in 0..sizes.len() {
            let t = &table[gi][ni];
            ok_sat &= (t[last] - t[last - 1]).abs() < 0.1 * t[last - 1];
            if ni + 1 < sizes.len() {
                ok_n &= table[gi][ni + 1][last] >= t[last] * (1.0 - FLAT_TOLERANCE);
            }
        }
    }
    for ni in 0..sizes.len() {
        ok_gamma &= table[1][ni][last] < table[0][ni][last];
    }
    let rows: Vec<String> = gammas
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| {
            let table = &table;
            sizes.iter().enumerate().map(move |(ni, n)| {
                format!(
                    "G={g} N={n}: [{}]",
                    table[gi][ni]
                        .iter()
                        .map(|x| format!("{x:.3e}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                )
            })
        })
        .collect();
    Ok(Outcome {
        pass: ok_n && ok_sat && ok_gamma,
        detail: format!("non-decreasing in N: {ok_n}, saturated in V: {ok_sat}, smaller at larger Gamma: {ok_gamma}; T over V={v_sweep:?}: {}", rows.join("; ")),
    })
}

fn criterion_8() -> Result<Outcome> {
    let n = 4;
    let m = chain(n, 10.0)?;
    let p = DephasingParams::new(1.0, 0.0, 10.0);
    let lattice = KmcLattice::from_matrix(&m);
    let c0 = Configuration::all_down(n, Levels::Two);
    let grid = TimeGrid::new(0.0, 5.0, vec![5.0])?;
    let runs = 100_000;
    let finals =
        rydeff_core::exec::try_map_indexed(Execution::default(), runs, |r| -> Result<usize> {
            let mut s = KmcState::new(&p, &lattice, &c0, 77 + r as u64)?;
            let mut out = 0;
            kmc::run_with(&mut s, &grid, |_, st| {
                out = st.index();
                Ok(())
            })?;
            Ok(out)
        })?;
    let mut counts = vec![0.0; 1 << n];
    for c in finals {
        counts[c] += 1.0;
    }
    let gen = build_generator(&p, &m, Order::Second, false, Execution::default())?;
    let (_, states) = integrate_rate_equation(
        &gen,
        &ProbabilityVector::from_configuration(&c0)?,
        &grid,
        RateSolver::Exponential,
        &[],
    )?;
    let chi2: f64 = states[0]
        .values()
        .iter()
        .zip(&counts)
        .map(|(pr, o)| (o - pr * runs as f64).powi(2) / (pr * runs as f64))
        .sum();
    let p_value = 1.0 - ChiSquared::new(((1 << n) - 1) as f64).unwrap().cdf(chi2);

    let pd = DephasingParams::new(1.0, 0.0, 10.0).with_decay(0.2);
    let late = TimeGrid::new(0.0, 40.0, vec![40.0])?;
    let ens = kmc::gillespie_ensemble(
        &pd,
        &lattice,
        &c0,
        &late,
        20_000,
        5,
        &[Observable::MeanDensity],
        Execution::default(),
    )?;
    let s = ens.get("mean_density").unwrap();
    let (mean, se) = (s.values[0], s.std_err.as_ref().unwrap()[0]);
    let gd = build_generator(&pd, &m, Order::Second, true, Execution::default())?;
    let (rec, _) = integrate_rate_equation(
        &gd,
        &ProbabilityVector::from_configuration(&c0)?,
        &TimeGrid::new(0.0, 400.0, vec![400.0])?,
        RateSolver::Exponential,
        &[Observable::MeanDensity],
    )?;
    let exact = rec.values("mean_density").unwrap()[0];
    let z = (mean - exact).abs() / se;
    Ok(Outcome {
        pass: p_value > 0.001 && z < 3.0,
        detail: format!("chi2 {chi2:.2} (15 dof) p={p_value:.3} (needs > 0.001); decay stationary density KMC {mean:.4} +- {se:.4} vs exact {exact:.4} ({z:.2} SE, needs < 3)"),
    })
}

fn criterion_9() -> Result<Outcome> {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = TimeGrid::uniform(0.0, 2.0, 5)?;
    let opts = IntegrateOptions::new(1e-10, 1e-12).keeping_states();
    let random_rho = |n: usize, levels: Levels, rng: &mut ChaCha8Rng| -> Result<DensityMatrix> {
        let d = levels.base().pow(n as u32);
        let g = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let mut r = &g * g.adjoint();
        let tr = r.trace();
        r /= tr;
        DensityMatrix::from_dmatrix(n, levels, &r)
    };
    let preserved = |states: &[DensityMatrix]| {
        states.iter().all(|s| {
            (s.trace().re - 1.0).abs() < 1e-8
                && s.trace().im.abs() < 1e-8
                && s.hermiticity_error() < 1e-10
        })
    };

    // Trace and Hermiticity along trajectories of every generator.
    for n in 1..=3 {
        let p = DephasingParams::new(
            1.0,
            rng.random_range(-10.0..10.0),
            rng.random_range(5.0..20.0),
        )
        .with_decay(0.3);
        let m = chain(n, rng.random_range(0.0..10.0))?;
        let rec = integrate(
            &build_two_level_liouvillian(&p, &m)?,
            &random_rho(n, Levels::Two, &mut rng)?,
            &grid,
            &opts,
        )?;
        check(
            preserved(&rec.states.unwrap()),
            "two-level trace/Hermiticity",
        );
        let e = EitParams::new(rng.random_range(0.1..3.0), 1.0, 0.0, 50.0);
        if n <= 2 {
            let rec = integrate(
                &build_three_level_liouvillian(&e, &m)?,
                &random_rho(n, Levels::Three, &mut rng)?,
                &grid,
                &opts,
            )?;
            check(
                preserved(&rec.states.unwrap()),
                "three-level trace/Hermiticity",
            );
        }
        for variant in [ReducedVariant::SecondOrder, ReducedVariant::NonPerturbative] {
            let model = eit::build_reduced_liouvillian(&e, &m, variant)?;
            let rec = model.integrate(&random_rho(n, Levels::Two, &mut rng)?, &grid, &opts)?;
            check(preserved(&rec.states.unwrap()), "reduced trace/Hermiticity");
        }
    }

    // Generator column sums.
    for _ in 0..20 {
        let n = rng.random_range(1..=5);
        let p = DephasingParams::new(
            1.0,
            rng.random_range(-30.0..30.0),
            rng.random_range(5.0..20.0),
        );
        let m = chain(n, rng.random_range(0.0..30.0))?;
        for (order, decay) in [(Order::Second, true), (Order::Fourth, false)] {
            let pp = if decay { p.with_decay(0.5) } else { p };
            check(
                build_generator(&pp, &m, order, decay, Execution::default())?.max_column_sum()
                    < 1e-12,
                "column sums",
            );
        }
    }

    // Projector idempotency.
    for n in 1..=2 {
        let m = chain(n, 5.0)?;
        let s = SuperoperatorSplit::dephasing(&DephasingParams::new(1.0, 2.0, 10.0), &m)?;
        check(
            (&s.p * &s.p - &s.p).camax() < 1e-10,
            "dephasing P idempotent",
        );
        let s = SuperoperatorSplit::eit(&EitParams::new(1.0, 1.0, 0.0, 20.0), &m)?;
        check((&s.p * &s.p - &s.p).camax() < 1e-10, "EIT P idempotent");
    }

    // σˣ conjugation as the substitution n_k → 1 − n_k.
    let n = 3;
    let m = build_chain_interactions(&LatticeSpec::chain(n, 3, 6.0, Boundary::Open))?;
    let model = RateModel::new(&DephasingParams::new(1.0, -2.0, 10.0), &m)?;
    for k in 0..n {
        let bit = 1 << (n - 1 - k);
        let sx = DMatrix::from_fn(8, 8, |i, j| if i == j ^ bit { 1.0 } else { 0.0 });
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let f = |c: usize| {
                model.r_prime(c, a, b)[1] + model.gamma23(c, a, b).1.re + model.rate2(c, a)
            };
            let diag = DMatrix::from_fn(8, 8, |i, j| if i == j { f(i) } else { 0.0 });
            let conj = &sx * diag * &sx;
            check(
                (0..8).all(|c| (conj[(c, c)] - f(c ^ bit)).abs() < 1e-15),
                "sigma-x substitution",
            );
        }
    }

    // g2 symmetry on periodic chains.
    for n in 2..=5 {
        let rho = random_rho(n, Levels::Two, &mut rng)?;
        for d in 1..n {
            let a = evaluate(&Observable::G2(d), StateRef::Density(&rho))?;
            let b = evaluate(&Observable::G2(n - d), StateRef::Density(&rho))?;
            check((a - b).abs() < 1e-12, "g2 symmetry");
        }
    }

    // Exclusion-subspace non-leakage.
    let e = EitParams::new(3.0, 1.0, 0.0, 100.0);
    for n in [3, 4, 5] {
        let model = eit::build_reduced_liouvillian(
            &e,
            &InteractionMatrix::zeros(n),
            ReducedVariant::NnExclusion {
                boundary: Boundary::Periodic,
            },
        )?;
        let rho0 = DensityMatrix::from_configuration(&Configuration::from_occupations(
            &(0..n).map(|k| k == 0).collect::<Vec<_>>(),
        ))?;
        let rec = model.integrate(
            &rho0,
            &TimeGrid::uniform(0.0, 50.0, 26)?,
            &IntegrateOptions::new(1e-9, 1e-12).keeping_states(),
        )?;
        let mask = model.allowed().unwrap();
        let leak = rec
            .states
            .unwrap()
            .iter()
            .map(|s| {
                (0..s.dim())
                    .filter(|&i| !mask[i])
                    .map(|i| s.get(i, i).re.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        check(leak < 1e-8, "exclusion non-leakage");
    }

    failures.dedup();
    Ok(Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "trace/Hermiticity, column sums, P idempotency, sigma-x substitution, g2 symmetry, exclusion non-leakage all hold".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    })
}
