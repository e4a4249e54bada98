//! Executes a validated configuration and writes CSVs plus the run manifest.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64 as C64;
use rydeff_core::basis::{Configuration, Levels, SiteState};
use rydeff_core::eit::{self, ReducedVariant};
use rydeff_core::evolution::{
    integrate, trace_distance, IntegrateOptions, TimeGrid, TrajectoryRecord,
};
use rydeff_core::exec::Execution;
use rydeff_core::kmc::{default_cutoff, gillespie_ensemble, KmcLattice};
use rydeff_core::model::{build_chain_interactions, DephasingParams, EitParams, InteractionMatrix};
use rydeff_core::observables::{evaluate_many, Observable, StateRef};
use rydeff_core::operators::{
    build_three_level_liouvillian, build_two_level_liouvillian, two_level_energies,
};
use rydeff_core::qjmc::{average_trajectories, JumpUnravelling};
use rydeff_core::rates::{
    build_generator, integrate_rate_equation, scan_positivity, Order, RateSolver,
};
use rydeff_core::state::{DensityMatrix, ProbabilityVector};
use rydeff_core::steady::{
    steady_state_with, DephasingSplit, SteadyStateMethod, SteadyStateOptions,
};
use rydeff_core::Error as CoreError;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitialState, Method, Point};
use crate::table::{Table, TableError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{method}{suffix}: {source}")]
    Core {
        method: &'static str,
        suffix: String,
        source: CoreError,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    /// True when the failure stems from the requested parameters rather than the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            RunError::Core { source, .. } => matches!(
                source,
                CoreError::InvalidSpec(_)
                    | CoreError::SiteOutOfRange { .. }
                    | CoreError::SameSite(_)
                    | CoreError::DimensionGuard { .. }
                    | CoreError::DimensionMismatch { .. }
                    | CoreError::IncompatibleObservable { .. }
                    | CoreError::Unsupported(_)
                    | CoreError::InvalidInitialState { .. }
            ),
            RunError::Table(_) | RunError::Io { .. } => true,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    code_version: String,
    started_unix_seconds: u64,
    wall_time_seconds: f64,
    threads: usize,
    outputs: Vec<String>,
}

/// Runs every method at every sweep point; returns the files written.
pub fn run(
    cfg: &ExperimentConfig,
    output_dir: &Path,
    exec: Execution,
) -> Result<Vec<PathBuf>, RunError> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    std::fs::create_dir_all(output_dir).map_err(|source| RunError::Io {
        path: output_dir.to_path_buf(),
        source,
    })?;
    let observables = cfg.parsed_observables().expect("validated config");
    let points = cfg.points();
    let mut written = Vec::new();
    for &method in &cfg.methods {
        if method == Method::Compare {
            let table = stationary_distance_table(&points).map_err(|source| RunError::Core {
                method: method.name(),
                suffix: String::new(),
                source,
            })?;
            let path = output_dir.join("compare.csv");
            table.write(&path)?;
            written.push(path);
            continue;
        }
        for point in &points {
            let suffix = point.suffix();
            log::info!("running {}{suffix}", method.name());
            let table = run_point(cfg, method, point, &observables, exec).map_err(|source| {
                RunError::Core {
                    method: method.name(),
                    suffix: suffix.clone(),
                    source,
                }
            })?;
            let path = output_dir.join(format!("{}{suffix}.csv", method.name()));
            table.write(&path)?;
            written.push(path);
        }
    }
    let manifest = Manifest {
        config: cfg,
        code_version: format!("rydeff {}", env!("CARGO_PKG_VERSION")),
        started_unix_seconds: started,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        outputs: written
            .iter()
            .filter_map(|p| p.file_name())
            .map(|f| f.to_string_lossy().into_owned())
            .collect(),
    };
    let path = output_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(written)
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, CoreError> {
    let t = cfg.time.as_ref().expect("validated config");
    TimeGrid::uniform(t.t_start, t.t_end, t.samples)
}

fn initial(cfg: &ExperimentConfig, n: usize, levels: Levels) -> Result<Configuration, CoreError> {
    match &cfg.initial {
        InitialState::AllDown => Ok(Configuration::all_down(n, levels)),
        InitialState::Occupations(occ) => {
            let states: Vec<SiteState> = occ
                .iter()
                .map(|&o| if o { SiteState::Up } else { SiteState::Down })
                .collect();
            Configuration::from_states(&states, levels)
        }
    }
}

fn record_table(rec: &TrajectoryRecord) -> Table {
    let mut headers = vec!["t".to_string()];
    let mut columns = vec![rec.times.clone()];
    for s in &rec.series {
        headers.push(s.name.clone());
        columns.push(s.values.clone());
    }
    Table::new(headers, columns)
}

fn observable_row(observables: &[Observable], values: Vec<f64>) -> Table {
    Table::new(
        observables.iter().map(Observable::name).collect(),
        values.into_iter().map(|v| vec![v]).collect(),
    )
}

fn run_point(
    cfg: &ExperimentConfig,
    method: Method,
    point: &Point,
    observables: &[Observable],
    exec: Execution,
) -> Result<Table, CoreError> {
    let n = point.lattice.n_sites;
    let v = build_chain_interactions(&point.lattice)?;
    let opts = IntegrateOptions::new(cfg.tolerances.rel_tol, cfg.tolerances.abs_tol)
        .observing(observables);
    let dephasing = || point.dephasing.expect("validated config");
    let eit_params = || point.eit.expect("validated config");
    match method {
        Method::FullIntegrate => {
            let l = build_two_level_liouvillian(&dephasing(), &v)?.with_execution(exec);
            let rho0 = DensityMatrix::from_configuration(&initial(cfg, n, Levels::Two)?)?;
            Ok(record_table(&integrate(&l, &rho0, &grid(cfg)?, &opts)?))
        }
        Method::Qjmc => {
            let u = JumpUnravelling::new(&dephasing(), &v)?;
            let c0 = initial(cfg, n, Levels::Two)?;
            let mut psi0 = vec![C64::new(0.0, 0.0); 1 << n];
            psi0[c0.index()] = C64::new(1.0, 0.0);
            Ok(record_table(&average_trajectories(
                &u,
                &psi0,
                &grid(cfg)?,
                cfg.trajectories,
                cfg.seed,
                observables,
                exec,
            )?))
        }
        Method::Rate2 | Method::Rate4 => {
            let p = dephasing();
            let order = if method == Method::Rate2 {
                Order::Second
            } else {
                Order::Fourth
            };
            let gen = build_generator(&p, &v, order, p.decay_gamma_ryd > 0.0, exec)?;
            if gen.has_negative_rates() {
                log::warn!(
                    "{}: generator has negative rates; probabilities may leave [0, 1]",
                    method.name()
                );
            }
            let v0 = ProbabilityVector::from_configuration(&initial(cfg, n, Levels::Two)?)?;
            let solver = RateSolver::RungeKutta {
                rel_tol: cfg.tolerances.rel_tol,
                abs_tol: cfg.tolerances.abs_tol,
            };
            Ok(record_table(
                &integrate_rate_equation(&gen, &v0, &grid(cfg)?, solver, observables)?.0,
            ))
        }
        Method::Kmc => {
            let p = dephasing();
            let cutoff = cfg
                .kmc_cutoff
                .unwrap_or_else(|| default_cutoff(&point.lattice, &p));
            let lattice = KmcLattice::chain(&point.lattice, Some(cutoff))?;
            let c0 = initial(cfg, n, Levels::Two)?;
            Ok(record_table(&gillespie_ensemble(
                &p,
                &lattice,
                &c0,
                &grid(cfg)?,
                cfg.kmc_runs,
                cfg.seed,
                observables,
                exec,
            )?))
        }
        Method::EitFull => {
            let l = build_three_level_liouvillian(&eit_params(), &v)?.with_execution(exec);
            let rho0 = DensityMatrix::from_configuration(&initial(cfg, n, Levels::Three)?)?;
            Ok(record_table(&integrate(&l, &rho0, &grid(cfg)?, &opts)?))
        }
        Method::EitReduced | Method::EitExclusion | Method::EitNonpert => {
            let variant = match method {
                Method::EitReduced => ReducedVariant::SecondOrder,
                Method::EitExclusion => ReducedVariant::NnExclusion {
                    boundary: point.lattice.boundary,
                },
                _ => ReducedVariant::NonPerturbative,
            };
            let model = eit::build_reduced_liouvillian(&eit_params(), &v, variant)?;
            let rho0 = DensityMatrix::from_configuration(&initial(cfg, n, Levels::Two)?)?;
            Ok(record_table(&model.integrate(&rho0, &grid(cfg)?, &opts)?))
        }
        Method::SteadyState => {
            let rho = match point.eit {
                Some(e) => eit::full_steady_state(&e, &v)?,
                None => dephasing_steady_state(&dephasing(), &v, exec)?,
            };
            Ok(observable_row(
                observables,
                evaluate_many(observables, StateRef::Density(&rho))?,
            ))
        }
        Method::PositivityScan => {
            let s = cfg.scan.as_ref().expect("validated config");
            let map = scan_positivity(
                &dephasing(),
                &point.lattice,
                (s.v_min, s.v_max),
                (s.delta_min, s.delta_max),
                (s.n_v, s.n_delta),
                exec,
            )?;
            let nd = map.delta_values.len();
            let cells = map.v_values.len() * nd;
            let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(cells)).collect();
            for (i, &vv) in map.v_values.iter().enumerate() {
                for (j, &dd) in map.delta_values.iter().enumerate() {
                    cols[0].push(vv);
                    cols[1].push(dd);
                    cols[2].push(if map.flag(i, j) { 1.0 } else { 0.0 });
                    cols[3].push(map.min_rate[i * nd + j]);
                }
            }
            Ok(Table::new(
                vec![
                    "v".into(),
                    "delta".into(),
                    "all_rates_nonnegative".into(),
                    "min_rate".into(),
                ],
                cols,
            ))
        }
        Method::Compare => unreachable!("handled by the caller"),
    }
}

fn dephasing_steady_state(
    p: &DephasingParams,
    v: &InteractionMatrix,
    exec: Execution,
) -> Result<DensityMatrix, CoreError> {
    let l = build_two_level_liouvillian(p, v)?.with_execution(exec);
    let split;
    let mut opts = SteadyStateOptions {
        exec,
        ..Default::default()
    };
    if l.dim() > 32 && p.dephasing_gamma > 0.0 {
        split = DephasingSplit::new(two_level_energies(v, p.detuning), p.dephasing_gamma)?;
        opts.method = SteadyStateMethod::Iterative(Some(&split));
    }
    steady_state_with(&l, &opts)
}

/// Trace distance between the projected full EIT steady state and the exclusion steady state.
fn stationary_distance_table(points: &[Point]) -> Result<Table, CoreError> {
    let mut cols = vec![Vec::new(); 5];
    for point in points {
        log::info!("running compare{}", point.suffix());
        let e: EitParams = point.eit.expect("validated config");
        let v = build_chain_interactions(&point.lattice)?;
        let full = eit::full_steady_state(&e, &v)?;
        let variant = ReducedVariant::NnExclusion {
            boundary: point.lattice.boundary,
        };
        let excl = eit::build_reduced_liouvillian(
            &e,
            &InteractionMatrix::zeros(point.lattice.n_sites),
            variant,
        )?
        .steady_state()?;
        cols[0].push(point.lattice.n_sites as f64);
        cols[1].push(point.lattice.nn_strength);
        cols[2].push(e.decay_gamma);
        cols[3].push(e.omega_p);
        cols[4].push(trace_distance(&eit::project_and_reduce(&full)?, &excl)?);
    }
    Ok(Table::new(
        [
            "n_sites",
            "nn_strength",
            "decay_gamma",
            "omega_p",
            "trace_distance",
        ]
        .map(String::from)
        .to_vec(),
        cols,
    ))
}
