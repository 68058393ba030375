//! Command runners. Suites run one after another; each parallelizes over paths internally.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use swlp_core::gain::{gain_extension_curve, wellposed_constant, RefinedConstant, WellposedEstimate};
use swlp_core::heat::{build_heat_system, energy_identity_residual, gronwall_bound, neumann_eigenpairs, CellField, HeatModel};
use swlp_core::io::write_trajectory_csv;
use swlp_core::maps::{admissibility_curve, concatenation_check, input_map_phi, output_map_psi, AdmissibilityPoint};
use swlp_core::schrodinger::{
    backward_hidden_regularity, bstar_trace, build_schrodinger_system, duality_refinement, duality_residual,
    multiplier_identity_residual, multiplier_refinement, sine_mode, transformed_noise_sign, Affine, FieldSpec, Harmonic,
    MultiplierFieldSpec, Profile, SchrodingerModel, TERM_NAMES,
};
use swlp_core::solve::{mild_solve_picard, mild_solve_stepping};
use swlp_core::weak::weak_residual;
use swlp_core::{
    mc_estimate, refine_brownian, sample_brownian, BrownianEnsemble, Complex64, Field, InitialState, InputSignal,
    LinearMap, StochasticSystemRealization, TimeGrid, Trajectory,
};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::presets::{self, heat_initial, schrodinger_initial, Case, Setup};
use crate::report::{Environment, Record, RunReport, Tolerance};

type Res<T> = Result<T, HarnessError>;

/// Tolerance of the Picard iteration.
pub const PICARD_TOL: f64 = 1e-6;
/// Spatial cells of the multiplier-identity grid.
pub const MULTIPLIER_CELLS: usize = 64;
/// Paths used for pathwise (noise-free) checks.
const PATHWISE_PATHS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Admissibility,
    Verify,
    Wellposed,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Admissibility => "admissibility",
            Command::Verify => "verify",
            Command::Wellposed => "wellposed",
        }
    }
}

/// Validates the config, runs `command` on at most `threads` worker threads and writes the report.
pub fn run(command: Command, cfg: &ExperimentConfig, threads: Option<usize>) -> Res<RunReport> {
    cfg.validate()?;
    cfg.prepare_output()?;
    let setup = presets::build(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let env = Environment { seed: cfg.seed, version: env!("CARGO_PKG_VERSION").to_string(), config_hash: cfg.hash() };
    let mut ctx = Ctx { cfg, grid: cfg.time_grid()?, report: RunReport::new(command.name(), setup.label(), env) };
    pool.install(|| match command {
        Command::Simulate => simulate(&setup, &mut ctx),
        Command::Admissibility => admissibility(&setup, &mut ctx),
        Command::Verify => verify(&setup, &mut ctx),
        Command::Wellposed => wellposed(&setup, &mut ctx),
    })?;
    ctx.report.write(&cfg.output_dir)?;
    Ok(ctx.report)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    grid: TimeGrid,
    report: RunReport,
}

impl Ctx<'_> {
    fn suite(&mut self, f: impl FnOnce(&ExperimentConfig, TimeGrid) -> Res<Vec<Record>>) -> Res<()> {
        let start = Instant::now();
        let mut records = f(self.cfg, self.grid)?;
        let secs = start.elapsed().as_secs_f64();
        records.iter_mut().for_each(|r| r.wall_time = secs);
        self.report.extend(records);
        Ok(())
    }
}

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($v.to_string()),*] };
}

macro_rules! on_case {
    ($setup:expr, $c:ident => $body:expr) => {
        match $setup {
            Setup::Scalar { case: $c, .. } | Setup::Heat { case: $c, .. } | Setup::CustomReal($c) => $body,
            Setup::Schrodinger { case: $c, .. } | Setup::CustomComplex($c) => $body,
        }
    };
}

fn write_table(dir: &Path, file: &str, header: &[&str], rows: &[Vec<String>]) -> Res<()> {
    let mut w = csv::Writer::from_path(dir.join(file))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `3·sem + 5·Δt`.
fn stat_band(sem: f64, dt: f64) -> f64 {
    3.0 * sem + 5.0 * dt
}

fn rel_change(coarse: f64, fine: f64) -> f64 {
    (fine - coarse).abs() / coarse.abs()
}

/// `(mean, sem)`, with `sem = NaN` for a single sample.
fn estimate(samples: &[f64]) -> (f64, f64) {
    match mc_estimate(samples) {
        Ok(m) => (m.mean, m.sem),
        Err(_) => (samples[0], f64::NAN),
    }
}

fn sem_opt(sem: f64) -> Option<f64> {
    sem.is_finite().then_some(sem)
}

fn grid_input<T: Field>(case: &Case<T>, grid: &TimeGrid) -> Vec<DVector<T>> {
    (0..grid.steps()).map(|n| (case.input)(grid.time(n))).collect()
}

fn solve<T: Field>(case: &Case<T>, ens: &BrownianEnsemble) -> Res<Trajectory<T>> {
    let u = case.input_signal(ens.grid());
    Ok(mild_solve_stepping(&case.sys, &InitialState::Deterministic(case.y0.clone()), &u, ens)?)
}

/// `(mean |Y_n|², sem)` per node.
type Moments = Vec<(f64, f64)>;

/// `E|Y(t_n)|²_H` and its standard error at every node.
fn moments<T: Field>(sys: &StochasticSystemRealization<T>, traj: &Trajectory<T>) -> Moments {
    (0..=traj.grid().steps()).map(|n| estimate(&sys.h().column_norms_sq(&traj.node_block(n)))).collect()
}

// ---------------------------------------------------------------- simulate

fn simulate(setup: &Setup, ctx: &mut Ctx) -> Res<()> {
    let mut stats = Vec::new();
    ctx.suite(|cfg, grid| {
        let (records, m) = on_case!(setup, case => simulate_case(case, cfg, grid)?);
        stats = m;
        Ok(records)
    })?;
    match setup {
        Setup::Scalar { generator, sigma, .. } => ctx.suite(|_, grid| {
            let (mean, sem) = stats[grid.steps()];
            Ok(second_moment_record("simulate", *generator, *sigma, mean, sem, grid).into_iter().collect())
        }),
        Setup::Heat { case, model } => ctx.suite(|_, grid| {
            let e0 = case.sys.h().norm_sq(&case.y0)?;
            let bound = gronwall_bound(model, e0, &case.input_signal(&grid))?;
            let ratio = stats.iter().zip(&bound).skip(1).map(|(m, b)| m.0 / b).fold(0.0, f64::max);
            Ok(vec![Record::new("simulate", "gronwall-envelope", ratio, None, Tolerance::Max(1.0))])
        }),
        Setup::Schrodinger { model, .. } => ctx.suite(|cfg, grid| {
            let free = SchrodingerModel { coeff_a: Profile::Zero, coeff_b: Profile::Zero, ..model.clone() };
            let sys = build_schrodinger_system(&free)?;
            let y0 = schrodinger_initial(&free);
            let ens = sample_brownian(grid, 1, cfg.seed)?;
            let u = InputSignal::zero(sys.u().dim(), grid.steps());
            let traj = mild_solve_stepping(&sys, &InitialState::Deterministic(y0.clone()), &u, &ens)?;
            let e0 = sys.h().norm_sq(&y0)?;
            let drift = moments(&sys, &traj).iter().map(|m| (m.0 - e0).abs() / e0).fold(0.0, f64::max);
            Ok(vec![Record::new("simulate", "unitary-conservation", drift, None, Tolerance::Max(1e-10))])
        }),
        _ => Ok(()),
    }
}

fn simulate_case<T: Field>(case: &Case<T>, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<(Vec<Record>, Moments)> {
    let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let traj = solve(case, &ens)?;
    let export = cfg.export_paths.min(cfg.paths);
    if export > 0 {
        let head = solve(case, &ens.truncated(export)?)?;
        let mut w = BufWriter::new(File::create(cfg.output_dir.join("trajectory.csv"))?);
        write_trajectory_csv(&head, &mut w)?;
        w.flush()?;
    }
    let stats = moments(&case.sys, &traj);
    let rows: Vec<_> = stats
        .iter()
        .enumerate()
        .map(|(n, (m, s))| row![n, grid.time(n), m, sem_opt(*s).map_or(String::new(), |s| s.to_string())])
        .collect();
    write_table(&cfg.output_dir, "moments.csv", &["node", "time", "mean_norm_sq", "sem"], &rows)?;
    let bad = traj.data().iter().filter(|v| !(v.re().is_finite() && v.im().is_finite())).count();
    Ok((vec![Record::new("simulate", "non-finite-states", bad as f64, None, Tolerance::Max(0.0))], stats))
}

/// `E[Y(T)²] = e^{(2a+σ²)T}` for the scalar preset; needs at least two paths.
fn second_moment_record(
    suite: &str,
    a: f64,
    sigma: f64,
    mean: f64,
    sem: f64,
    grid: TimeGrid,
) -> Option<Record> {
    let sem = sem_opt(sem)?;
    let exact = ((2.0 * a + sigma * sigma) * grid.horizon()).exp();
    let band = stat_band(sem, grid.dt());
    Some(Record::new(suite, "second-moment", mean, Some(sem), Tolerance::Range([exact - band, exact + band])))
}

// ----------------------------------------------------------- admissibility

fn max_drop(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let scale = v.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    v.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max) / scale
}

/// `∫₀ᵗ e^{2as} ds`.
fn scalar_admissibility(a: f64, t: f64) -> f64 {
    if a == 0.0 {
        t
    } else {
        ((2.0 * a * t).exp() - 1.0) / (2.0 * a)
    }
}

fn curve<T: Field>(sys: &StochasticSystemRealization<T>, grid: &TimeGrid) -> Res<Vec<AdmissibilityPoint>> {
    Ok(admissibility_curve(sys, grid, &(1..=grid.steps()).collect::<Vec<_>>())?)
}

fn admissibility(setup: &Setup, ctx: &mut Ctx) -> Res<()> {
    let mut points = Vec::new();
    ctx.suite(|cfg, grid| {
        points = on_case!(setup, case => curve(&case.sys, &grid)?);
        let rows: Vec<_> = points.iter().map(|p| row![p.node, p.t, p.control, p.observation]).collect();
        write_table(&cfg.output_dir, "admissibility.csv", &["node", "t", "control", "observation"], &rows)?;
        Ok(vec![
            Record::new("admissibility", "control-monotone", max_drop(points.iter().map(|p| p.control)), None, Tolerance::Max(1e-12)),
            Record::new(
                "admissibility",
                "observation-monotone",
                max_drop(points.iter().map(|p| p.observation)),
                None,
                Tolerance::Max(1e-12),
            ),
        ])
    })?;
    let last = *points.last().expect("grid has at least one step");
    let refined = |cfg: &ExperimentConfig, label: &str, fine: AdmissibilityPoint, dims: [usize; 2]| -> Res<Vec<Record>> {
        let rows = vec![row![dims[0], last.control, last.observation], row![dims[1], fine.control, fine.observation]];
        write_table(&cfg.output_dir, "admissibility_refinement.csv", &[label, "control", "observation"], &rows)?;
        Ok(vec![
            Record::new("admissibility", "control-refinement", rel_change(last.control, fine.control), None, Tolerance::Max(0.25)),
            Record::new(
                "admissibility",
                "observation-refinement",
                rel_change(last.observation, fine.observation),
                None,
                Tolerance::Max(0.25),
            ),
        ])
    };
    match setup {
        Setup::Scalar { generator, .. } => ctx.suite(|_, grid| Ok(scalar_curve_records(*generator, &points, &grid))),
        Setup::Heat { model, .. } => ctx.suite(|cfg, grid| {
            let fine_model = model.refined_space();
            let fine = admissibility_curve(&build_heat_system(&fine_model)?, &grid, &[grid.steps()])?[0];
            refined(cfg, "cells", fine, [model.cells, fine_model.cells])
        }),
        // The grid sums resolve the k² frequencies only while K²Δt stays bounded, so doubling
        // the modes comes with four times the steps.
        Setup::Schrodinger { model, .. } => ctx.suite(|cfg, grid| {
            let fine_grid = grid.refined().refined();
            let fine_model = model.refined_modes().with_grid(fine_grid);
            let fine = admissibility_curve(&build_schrodinger_system(&fine_model)?, &fine_grid, &[fine_grid.steps()])?[0];
            refined(cfg, "modes", fine, [model.modes, fine_model.modes])
        }),
        _ => Ok(()),
    }
}

fn scalar_curve_records(a: f64, points: &[AdmissibilityPoint], grid: &TimeGrid) -> Vec<Record> {
    let err = |f: fn(&AdmissibilityPoint) -> f64| {
        points.iter().map(|p| (f(p) - scalar_admissibility(a, p.t)).abs()).fold(0.0, f64::max)
    };
    let tol = Tolerance::Max(5.0 * grid.dt());
    vec![
        Record::new("admissibility", "control-closed-form", err(|p| p.control), None, tol),
        Record::new("admissibility", "observation-closed-form", err(|p| p.observation), None, tol),
    ]
}

// ------------------------------------------------------------------ verify

fn verify(setup: &Setup, ctx: &mut Ctx) -> Res<()> {
    let suites = ctx.cfg.suites.clone();
    if suites.identities {
        ctx.suite(|cfg, grid| on_case!(setup, case => identities(case, cfg, grid)))?;
    }
    if suites.oracles {
        match setup {
            Setup::Scalar { case, generator, sigma } => ctx.suite(|cfg, grid| scalar_oracles(case, *generator, *sigma, cfg, grid))?,
            Setup::Heat { case, model } => ctx.suite(|_, _| heat_oracles(case, model))?,
            Setup::Schrodinger { case, model } => ctx.suite(|_, _| schrodinger_oracles(case, model))?,
            _ => {}
        }
    }
    if suites.weak {
        ctx.suite(|cfg, grid| on_case!(setup, case => weak(case, cfg, grid)))?;
    }
    if suites.picard {
        ctx.suite(|cfg, grid| on_case!(setup, case => picard(case, cfg, grid)))?;
    }
    match setup {
        Setup::Heat { model, .. } if suites.energy => ctx.suite(|cfg, _| energy(model, cfg))?,
        Setup::Schrodinger { case, model } => {
            if suites.multiplier {
                ctx.suite(multiplier)?;
            }
            if suites.duality {
                ctx.suite(|cfg, grid| duality(case, model, cfg, grid))?;
            }
            if suites.transform {
                ctx.suite(|cfg, grid| transform(case, model, cfg, grid))?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Test input `u_n = (cos 2t_n + ½) + i sin t_n` in every component (real part only for real systems).
fn test_signal<T: Field>(dim: usize, grid: &TimeGrid) -> InputSignal<T> {
    InputSignal::Deterministic(
        (0..grid.steps())
            .map(|n| {
                let t = grid.time(n);
                DVector::from_element(dim, T::from_parts((2.0 * t).cos() + 0.5, t.sin()))
            })
            .collect(),
    )
}

fn identities<T: Field>(case: &Case<T>, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let sys = &case.sys;
    let (h, us) = (sys.h(), sys.u());
    let gen = sys.generator();
    let horizon = grid.horizon();
    let s1 = gen.propagator(0.3 * horizon)?;
    let s2 = gen.propagator(0.5 * horizon)?;
    let s12 = gen.propagator(0.8 * horizon)?;
    let semigroup = (&s1 * &s2 - &s12).camax() / s12.camax().max(1.0);

    let u = DVector::from_fn(us.dim(), |k, _| T::from_parts(1.0 + k as f64, 0.5 - k as f64));
    let f = &case.y0 + &case.psi * T::from_parts(0.5, 0.25);
    let bu = sys.b().apply(&u)?;
    let lhs = h.inner(&bu, &f)?;
    let rhs = us.inner(&u, &sys.b().adjoint().apply(&f)?)?;
    let pairing = (lhs - rhs).modulus() / (h.norm(&bu)? * h.norm(&f)?).max(f64::MIN_POSITIVE);

    let node = (grid.steps() / 2).max(1);
    let concat = concatenation_check(sys, &grid, node, &test_signal(us.dim(), &grid))?;
    let concatenation = concat.residual / concat.input_norm.max(1.0);

    let ens = sample_brownian(grid, cfg.paths.min(PATHWISE_PATHS), cfg.seed)?;
    let fine = refine_brownian(&ens);
    let coupling = (0..ens.paths())
        .flat_map(|p| (0..grid.steps()).map(move |n| (p, n)))
        .map(|(p, n)| (ens.increment(p, n) - fine.increment(p, 2 * n) - fine.increment(p, 2 * n + 1)).abs())
        .fold(0.0, f64::max);

    let zero = mild_solve_stepping(
        sys,
        &InitialState::Deterministic(DVector::zeros(h.dim())),
        &InputSignal::zero(us.dim(), grid.steps()),
        &ens,
    )?;
    let zero_data = zero.data().iter().map(|v| v.modulus()).fold(0.0, f64::max);

    let tol = Tolerance::Max(1e-10);
    Ok(vec![
        Record::new("identities", "semigroup-law", semigroup, None, tol),
        Record::new("identities", "adjoint-pairing", pairing, None, tol),
        Record::new("identities", "concatenation", concatenation, None, tol),
        Record::new("identities", "refinement-coupling", coupling, None, tol),
        Record::new("identities", "zero-data", zero_data, None, tol),
    ])
}

fn scalar_oracles(case: &Case<f64>, a: f64, sigma: f64, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let sys = &case.sys;
    let n = grid.steps();
    let t = grid.horizon();
    let ones = InputSignal::Deterministic(vec![DVector::from_element(1, 1.0); n]);
    let phi = input_map_phi(sys, &grid, n, &ones)?[(0, 0)];
    let phi_exact = if a == 0.0 { t } else { ((a * t).exp() - 1.0) / a };
    let psi = output_map_psi(sys, &grid, n, &DVector::from_element(1, 1.0))?;
    let psi_err = psi.iter().enumerate().map(|(k, v)| (v[0] - (a * grid.time(k)).exp()).abs()).fold(0.0, f64::max);
    let points = admissibility_curve(sys, &grid, &(1..=n).collect::<Vec<_>>())?;

    let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let traj = solve(case, &ens)?;
    let (mean, sem) = estimate(&sys.h().column_norms_sq(&traj.node_block(n)));

    let mut out = vec![
        Record::new("oracles", "input-map", (phi - phi_exact).abs(), None, Tolerance::Max(5.0 * grid.dt())),
        Record::new("oracles", "output-map", psi_err, None, Tolerance::Max(1e-10)),
    ];
    out.extend(scalar_curve_records(a, &points, &grid).into_iter().map(|r| Record { suite: "oracles".into(), ..r }));
    out.extend(second_moment_record("oracles", a, sigma, mean, sem, grid));
    Ok(out)
}

fn heat_oracles(case: &Case<f64>, model: &HeatModel) -> Res<Vec<Record>> {
    let mut computed: Vec<f64> = case.sys.generator().matrix().clone().symmetric_eigenvalues().iter().cloned().collect();
    computed.sort_by(|a, b| b.total_cmp(a));
    let n = model.cells;
    let exact: Vec<f64> = (0..n).map(|k| -4.0 * (n as f64).powi(2) / model.length.powi(2) * (k as f64 * PI / (2.0 * n as f64)).sin().powi(2)).collect();
    let (listed, _) = neumann_eigenpairs(model);
    let scale = exact.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let err = computed
        .iter()
        .zip(&exact)
        .zip(listed.iter())
        .map(|((c, e), l)| (c - e).abs().max((l - e).abs()))
        .fold(0.0, f64::max);
    Ok(vec![Record::new("oracles", "neumann-eigenvalues", err / scale, None, Tolerance::Max(1e-10))])
}

fn schrodinger_oracles(case: &Case<Complex64>, model: &SchrodingerModel) -> Res<Vec<Record>> {
    let b_star = case.sys.b().adjoint();
    let c = (2.0 / PI).sqrt();
    let sides = model.control_side.endpoints();
    let mut err: f64 = 0.0;
    for k in 1..=model.modes {
        let e = sine_mode(model, k);
        let got = b_star.apply(&e)?;
        let independent = bstar_trace(model, &e)?;
        for (s, side) in sides.iter().enumerate() {
            let sign = if *side == 0 || k % 2 == 1 { 1.0 } else { -1.0 };
            let exact = Complex64::new(0.0, sign * c / k as f64);
            err = err.max((got[s] - exact).norm()).max((independent[s] - exact).norm());
        }
    }
    Ok(vec![Record::new("oracles", "bstar-basis-traces", err, None, Tolerance::Max(1e-10))])
}

fn weak<T: Field>(case: &Case<T>, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let mut ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut prev: Option<f64> = None;
    for level in 0..=cfg.refinement_levels {
        let g = *ens.grid();
        let traj = solve(case, &ens)?;
        let r = weak_residual(&case.sys, &traj, &case.psi, &case.input_signal(&g), &ens)?;
        let (mean, sem) = estimate(&r.abs_at(g.steps()));
        rows.push(row![level, g.steps(), g.dt(), mean, sem_opt(sem).map_or(String::new(), |s| s.to_string())]);
        if let Some(p) = prev {
            records.push(Record::new("weak", format!("weak-ratio-{level}"), p / mean, None, Tolerance::Range([1.3, 2.8])));
        }
        prev = Some(mean);
        if level < cfg.refinement_levels {
            ens = refine_brownian(&ens);
        }
    }
    write_table(&cfg.output_dir, "weak.csv", &["level", "steps", "dt", "mean_abs_residual", "sem"], &rows)?;
    Ok(records)
}

fn picard<T: Field>(case: &Case<T>, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let y0 = InitialState::Deterministic(case.y0.clone());
    let u = case.input_signal(&grid);
    let sol = mild_solve_picard(&case.sys, &y0, &u, &ens, PICARD_TOL, 100)?;
    let stepping = mild_solve_stepping(&case.sys, &y0, &u, &ens)?;
    let distance = sol.trajectory.distance(&stepping, case.sys.h())?;
    let rep = &sol.report;
    let rows: Vec<_> = rep.iterations.iter().zip(&rep.ratios).enumerate().map(|(w, (i, r))| row![w, rep.window, i, r]).collect();
    write_table(&cfg.output_dir, "picard.csv", &["window", "length", "iterations", "max_ratio"], &rows)?;
    let worst = rep.ratios.iter().cloned().filter(|r| r.is_finite()).fold(0.0, f64::max);
    Ok(vec![
        Record::new("picard", "picard-distance", distance, None, Tolerance::Max(5.0 * PICARD_TOL)),
        Record::new("picard", "picard-max-ratio", worst, None, Tolerance::Max(0.5)),
    ])
}

fn energy(model: &HeatModel, cfg: &ExperimentConfig) -> Res<Vec<Record>> {
    let run = |m: &HeatModel, paths: usize| -> Res<(f64, f64)> {
        let ens = sample_brownian(m.grid, paths, cfg.seed)?;
        let u = InputSignal::zero(2, m.grid.steps());
        let traj = mild_solve_stepping(&build_heat_system(m)?, &InitialState::Deterministic(heat_initial(m)), &u, &ens)?;
        let r = energy_identity_residual(m, &traj, &u, &ens)?;
        Ok((r.value, if paths > 1 { r.sem } else { f64::NAN }))
    };
    let mut rows = Vec::new();
    let (value, sem) = run(model, cfg.paths)?;
    rows.push(row!["stochastic", 0, model.grid.steps(), model.grid.dt(), value, sem_opt(sem).map_or(String::new(), |s| s.to_string())]);
    let band = stat_band(sem_opt(sem).unwrap_or(0.0), model.grid.dt());
    let mut records = vec![Record::new("energy", "energy-residual", value, sem_opt(sem), Tolerance::Max(band))];

    let mut det = HeatModel { coeff_b: CellField::constant(0.0, model.cells), ..model.clone() };
    let mut prev: Option<f64> = None;
    for level in 0..=cfg.refinement_levels {
        let (v, _) = run(&det, 1)?;
        rows.push(row!["deterministic", level, det.grid.steps(), det.grid.dt(), v, ""]);
        if let Some(p) = prev {
            records.push(Record::new("energy", format!("energy-order-{level}"), (p / v).log2(), None, Tolerance::Range([0.7, 1.3])));
        }
        prev = Some(v);
        det.grid = det.grid.refined();
    }
    write_table(&cfg.output_dir, "energy.csv", &["case", "level", "steps", "dt", "residual", "sem"], &rows)?;
    Ok(records)
}

/// `μ = x/π` against `sin x e^{−it}` (deterministic) and `sin x W(t) + i sin 2x t` (stochastic).
pub fn multiplier_specs() -> (MultiplierFieldSpec, MultiplierFieldSpec) {
    let mu = Affine { c0: 0.0, c1: 1.0 / PI };
    let det = MultiplierFieldSpec { mu, field: FieldSpec::Deterministic { profile: vec![Harmonic::sine(1.0)], omega: 1.0 } };
    let stoch = MultiplierFieldSpec {
        mu,
        field: FieldSpec::Semimartingale {
            f: vec![Harmonic::sine(1.0)],
            g: vec![Harmonic { re: 0.0, im: 1.0, k: 2.0, phase: 0.0 }],
            w_shift: 0.0,
        },
    };
    (det, stoch)
}

fn multiplier(cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let (det, stoch) = multiplier_specs();
    let study = multiplier_refinement(&det, MULTIPLIER_CELLS, &grid, None)?;
    let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let r = multiplier_identity_residual(&stoch, MULTIPLIER_CELLS, &grid, Some(&ens))?;
    let rows: Vec<_> = TERM_NAMES.iter().zip(&r.ablations).map(|(name, a)| row![name, a, a / r.mean]).collect();
    write_table(&cfg.output_dir, "multiplier_ablation.csv", &["term", "ablated_residual", "inflation"], &rows)?;
    let rows = vec![
        row!["deterministic", MULTIPLIER_CELLS, grid.steps(), study.coarse.mean, ""],
        row!["deterministic", 2 * MULTIPLIER_CELLS, 2 * grid.steps(), study.fine.mean, ""],
        row!["stochastic", MULTIPLIER_CELLS, grid.steps(), r.mean, sem_opt(r.sem).map_or(String::new(), |s| s.to_string())],
    ];
    write_table(&cfg.output_dir, "multiplier.csv", &["field", "cells", "steps", "residual", "sem"], &rows)?;
    let band = stat_band(sem_opt(r.sem).unwrap_or(0.0), grid.dt());
    Ok(vec![
        Record::new("multiplier", "multiplier-deterministic-order", study.order, None, Tolerance::Min(1.0)),
        Record::new("multiplier", "multiplier-stochastic-residual", r.mean, sem_opt(r.sem), Tolerance::Max(band)),
        Record::new("multiplier", "multiplier-min-ablation", r.min_inflation(), None, Tolerance::Min(10.0)),
    ])
}

/// Terminal datum of the duality check: `e1 + e3`.
pub fn duality_terminal(model: &SchrodingerModel) -> DVector<Complex64> {
    sine_mode(model, 1) + sine_mode(model, 3)
}

fn duality(case: &Case<Complex64>, model: &SchrodingerModel, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let v_t = duality_terminal(model);
    let u = grid_input(case, &grid);
    let free = SchrodingerModel { coeff_a: Profile::Zero, coeff_b: Profile::Zero, ..model.clone() };
    let ens_free = sample_brownian(grid, cfg.paths.min(PATHWISE_PATHS), cfg.seed)?;
    let unitary = duality_residual(&free, &case.y0, &InputSignal::Deterministic(u.clone()), &v_t, &ens_free)?;
    let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let study = duality_refinement(model, &case.y0, &u, &v_t, &ens)?;
    let opt = |s: f64| sem_opt(s).map_or(String::new(), |s| s.to_string());
    let rows = vec![
        row!["unitary", grid.steps(), unitary.value, opt(unitary.sem), unitary.max_abs, unitary.rms],
        row!["noisy", grid.steps(), study.coarse.value, opt(study.coarse.sem), study.coarse.max_abs, study.coarse.rms],
        row!["noisy", 2 * grid.steps(), study.fine.value, opt(study.fine.sem), study.fine.max_abs, study.fine.rms],
    ];
    write_table(&cfg.output_dir, "duality.csv", &["case", "steps", "mean_abs", "sem", "max_abs", "rms"], &rows)?;
    let sem = sem_opt(study.coarse.sem);
    Ok(vec![
        Record::new("duality", "duality-unitary", unitary.max_abs, None, Tolerance::Max(1e-9)),
        Record::new(
            "duality",
            "duality-noisy",
            study.coarse.value,
            sem,
            Tolerance::Max(stat_band(sem.unwrap_or(0.0), grid.dt())),
        ),
        Record::new("duality", "duality-halving", study.ratio, None, Tolerance::Range([1.5, 2.5])),
    ])
}

fn transform(case: &Case<Complex64>, model: &SchrodingerModel, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<Vec<Record>> {
    let ens = sample_brownian(grid, cfg.paths.min(PATHWISE_PATHS), cfg.seed)?;
    let sign = transformed_noise_sign(model, &case.y0, &case.input_signal(&grid), &ens)?;
    write_table(&cfg.output_dir, "transform.csv", &["sign", "relative_deviation"], &[row!["plus", sign.plus], row!["minus", sign.minus]])?;
    Ok(vec![
        Record::new("transform", "transform-sign-plus", sign.plus, None, Tolerance::Max(1e-10)),
        Record::new("transform", "transform-sign-minus", sign.minus, None, Tolerance::Min(1e-3)),
    ])
}

// --------------------------------------------------------------- wellposed

fn wellposed(setup: &Setup, ctx: &mut Ctx) -> Res<()> {
    let mut base = None;
    ctx.suite(|cfg, grid| {
        let (records, est) = on_case!(setup, case => wellposed_case(case, cfg, grid)?);
        base = Some(est);
        Ok(records)
    })?;
    let base = base.expect("suite ran");
    let refined = |cfg: &ExperimentConfig, fine: WellposedEstimate, label: &str, dims: [usize; 2]| -> Res<Vec<Record>> {
        let rc = RefinedConstant::new(base.clone(), fine);
        let rows = vec![
            row![dims[0], rc.coarse.total.max, rc.coarse.state.max, rc.coarse.output.max],
            row![dims[1], rc.fine.total.max, rc.fine.state.max, rc.fine.output.max],
        ];
        write_table(&cfg.output_dir, "wellposed_refinement.csv", &[label, "total", "state", "output"], &rows)?;
        Ok(vec![Record::new("wellposed", "space-refinement", rc.relative_change, None, Tolerance::Max(0.25))])
    };
    match setup {
        Setup::Heat { model, .. } => ctx.suite(|cfg, grid| {
            let fine_model = model.refined_space();
            let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
            let fine = wellposed_constant(&build_heat_system(&fine_model)?, grid.steps(), cfg.trials, &ens)?;
            refined(cfg, fine, "cells", [model.cells, fine_model.cells])
        }),
        Setup::Schrodinger { model, .. } => {
            ctx.suite(|cfg, grid| {
                let fine_model = model.refined_modes();
                let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
                let fine = wellposed_constant(&build_schrodinger_system(&fine_model)?, grid.steps(), cfg.trials, &ens)?;
                refined(cfg, fine, "modes", [model.modes, fine_model.modes])
            })?;
            ctx.suite(|cfg, _| {
                let support = 8.min(model.modes);
                let coarse = backward_hidden_regularity(model, cfg.trials, support, cfg.seed)?;
                let fine = backward_hidden_regularity(&model.refined_modes(), cfg.trials, support, cfg.seed)?;
                let rows = vec![row![model.modes, coarse.max], row![2 * model.modes, fine.max]];
                write_table(&cfg.output_dir, "backward_trace.csv", &["modes", "max_ratio"], &rows)?;
                Ok(vec![Record::new(
                    "wellposed",
                    "backward-trace-refinement",
                    rel_change(coarse.max, fine.max),
                    None,
                    Tolerance::Max(0.25),
                )])
            })
        }
        _ => Ok(()),
    }
}

fn wellposed_case<T: Field>(case: &Case<T>, cfg: &ExperimentConfig, grid: TimeGrid) -> Res<(Vec<Record>, WellposedEstimate)> {
    let sys = &case.sys;
    let node = grid.steps();
    let ens = sample_brownian(grid, cfg.paths, cfg.seed)?;
    let est = wellposed_constant(sys, node, cfg.trials, &ens)?;
    let doubled = sample_brownian(grid, 2 * cfg.paths, cfg.seed)?;
    let est2 = wellposed_constant(sys, node, cfg.trials, &doubled)?;

    let nodes: Vec<usize> = (1..=4).map(|q| (q * node / 4).max(1)).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let gains = gain_extension_curve(sys, &nodes, cfg.trials, &ens)?;
    let rows: Vec<_> = nodes.iter().zip(&gains).map(|(n, (t, g))| row![n, t, g.max, g.q90]).collect();
    write_table(&cfg.output_dir, "gain.csv", &["node", "t", "max", "q90"], &rows)?;

    let blind = sys.with_observation(LinearMap::zero(sys.h().clone(), sys.utilde().clone())?)?;
    let small = ens.truncated(cfg.paths.min(PATHWISE_PATHS))?;
    let z = wellposed_constant(&blind, node, cfg.trials, &small)?;
    let zero_obs = rel_change(z.state.max, z.total.max);

    let rows = vec![
        row!["paths", cfg.paths, est.total.max, est.state.max, est.output.max],
        row!["paths", 2 * cfg.paths, est2.total.max, est2.state.max, est2.output.max],
    ];
    write_table(&cfg.output_dir, "wellposed.csv", &["quantity", "count", "total", "state", "output"], &rows)?;
    let records = vec![
        Record::new("wellposed", "path-doubling", rel_change(est.total.max, est2.total.max), None, Tolerance::Max(0.25)),
        Record::new("wellposed", "zero-observation", zero_obs, None, Tolerance::Max(1e-12)),
    ];
    Ok((records, est))
}
