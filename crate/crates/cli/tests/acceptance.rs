//! Acceptance run. Prints one `criterion N: PASS|FAIL` line per criterion,
//! followed by the individual checks behind it.
//!
//! The process exits successfully after reporting so that the rest of the
//! workspace suite still runs; pass `-- --strict` to exit non-zero when a
//! criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3};
use podgpr_cli::stage::{StageManifest, TIMING};
use podgpr_cli::study::{self, EvaluationSummary, EvaluationTiming, McmcSummary, ModelChoice};
use podgpr_cli::StudyConfig;
use podgpr_core::bayes::{metropolis_hastings, InverseProblem, McmcConfig, Proposal};
use podgpr_core::container;
use podgpr_core::fom::material::DEFAULT_DENSITY;
use podgpr_core::fom::{piola_stress, strain_energy, FomConfig, FomSolver, MaterialParams, Mesh};
use podgpr_core::gpr::likelihood::log_marginal_likelihood;
use podgpr_core::gpr::{train_gp, GpConfig, Kernel, TrainedGp};
use podgpr_core::model::{FnModel, Model};
use podgpr_core::pod::{CoefficientTable, PodCriterion, ReducedBasis, SnapshotSet};
use podgpr_core::rom::bundle::write_rom;
use podgpr_core::rom::{train_global_rom, train_td_rom, GlobalConfig, Rom, RomVariant, TdConfig};
use podgpr_core::sampling::{lhs_sample, ParameterSpace};
use podgpr_core::seeds;
use podgpr_core::uq::{morris_design, morris_indices, saltelli_design, sobol_indices};
use rand::Rng;

type Outcome = std::result::Result<Verdict, Box<dyn std::error::Error>>;

#[derive(Default)]
struct Verdict {
    checks: Vec<(bool, String)>,
}

impl Verdict {
    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        self.checks.push((ok, msg.into()));
    }

    fn note(&mut self, msg: impl Into<String>) {
        self.checks.push((true, format!("note: {}", msg.into())));
    }

    fn runtime(&mut self, seconds: f64, limit: f64) {
        self.check(seconds < limit, format!("runtime {seconds:.1} s (limit {limit:.0} s)"));
    }

    fn pass(&self) -> bool {
        self.checks.iter().all(|(ok, _)| *ok)
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

// ---------------------------------------------------------------- criterion 1

/// Guccione energy written out component by component, fibre axis along x.
fn oracle_energy(f: &Matrix3<f64>, m: &MaterialParams) -> f64 {
    let c = f.transpose() * f;
    let e = |i: usize, j: usize| 0.5 * (c[(i, j)] - if i == j { 1.0 } else { 0.0 });
    let q = m.b_f * e(0, 0).powi(2)
        + m.b_s * e(1, 1).powi(2)
        + m.b_n * e(2, 2).powi(2)
        + m.b_fs * (e(0, 1).powi(2) + e(1, 0).powi(2))
        + m.b_fn * (e(0, 2).powi(2) + e(2, 0).powi(2))
        + m.b_sn * (e(1, 2).powi(2) + e(2, 1).powi(2));
    let j = f.determinant();
    0.5 * m.c * (q.exp() - 1.0) + 0.5 * m.bulk_modulus * (j - 1.0) * j.ln()
}

/// Fourth-order central difference of `g` along `F[(k, l)]`.
fn five_point<T, G>(f: &Matrix3<f64>, k: usize, l: usize, h: f64, g: G) -> T
where
    G: Fn(&Matrix3<f64>) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let at = |s: f64| {
        let mut fs = *f;
        fs[(k, l)] += s * h;
        g(&fs)
    };
    (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) * (1.0 / (12.0 * h))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let space = ParameterSpace::beam();
    let mut rng = seeds::rng(7001);
    let (mut worst_w, mut worst_p, mut worst_a) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let unit: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let mat = MaterialParams::from_vector(&space.from_unit(&unit), DEFAULT_DENSITY)?;
        let f = loop {
            let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-0.05..0.05));
            if f.determinant() > 0.0 {
                break f;
            }
        };
        let w = strain_energy(&f, &mat)?;
        worst_w = worst_w.max(rel(w, oracle_energy(&f, &mat), oracle_energy(&f, &mat).abs().max(1e-300)));
        let (p, a) = piola_stress(&f, &mat)?;
        let h = 1e-4;
        for k in 0..3 {
            for l in 0..3 {
                let dw = five_point(&f, k, l, h, |g| oracle_energy(g, &mat));
                worst_p = worst_p.max(rel(p[(k, l)], dw, p.norm()));
                let dp = five_point(&f, k, l, h, |g| piola_stress(g, &mat).expect("positive determinant").0);
                for i in 0..3 {
                    for j in 0..3 {
                        worst_a = worst_a.max(rel(a[(3 * i + j, 3 * k + l)], dp[(i, j)], a.norm()));
                    }
                }
            }
        }
    }
    v.check(worst_w < 1e-10, format!("strain energy vs written-out oracle: worst rel. err {worst_w:.2e}"));
    v.check(worst_p < 1e-6, format!("Piola stress vs finite differences on 100 states: worst rel. err {worst_p:.2e} (< 1e-6)"));
    v.check(worst_a < 1e-5, format!("tangent vs finite differences on 100 states: worst rel. err {worst_a:.2e} (< 1e-5)"));

    let solver = FomSolver::new(Mesh::default_beam(), FomConfig::default())?;
    let unit: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
    let mut mu = space.from_unit(&unit);
    mu[8] = 0.0;
    let (traj, report) = solver.solve(&MaterialParams::from_vector(&mu, DEFAULT_DENSITY)?)?;
    let max_abs = traj.displacements.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.check(max_abs == 0.0 && report.total_iterations() == 0, format!("zero load: max |u| = {max_abs:e} over {} steps", traj.n_steps()));

    let mesh = Mesh::beam(1, 1, 1, 1e-3, 1e-3, 1e-3)?;
    let config = FomConfig { dt: 0.25, t_final: 0.25, newton_tol: 1e-17, ..FomConfig::default() };
    let mat = MaterialParams { p_tilde: 0.6, ..MaterialParams::reference() };
    let (_, report) = FomSolver::new(mesh, config)?.solve(&mat)?;
    let hist = &report.residual_history[0];
    let r0 = hist[0];
    let ratios: Vec<f64> = hist.windows(2).filter(|w| w[0] / r0 > 1e-6 && w[0] / r0 < 1e-1).map(|w| (w[1] / r0) / (w[0] / r0).powi(2)).collect();
    let normalized: Vec<String> = hist.iter().map(|r| format!("{:.1e}", r / r0)).collect();
    v.check(
        !ratios.is_empty() && ratios.iter().all(|r| *r < 1e2),
        format!("Newton on one element: r_k/r_0 = [{}], r_(k+1)/r_k^2 normalized = [{}]", normalized.join(", "), ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join(", ")),
    );
    v.runtime(start.elapsed().as_secs_f64(), 60.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 2

fn eckart_young(a: &DMatrix<f64>, criterion: PodCriterion, sigma: &[f64]) -> Result<(usize, f64), Box<dyn std::error::Error>> {
    let basis = ReducedBasis::build(a, criterion)?;
    let n = basis.n();
    let resid = a - basis.reconstruct(&basis.project(a)?)?;
    let err2 = resid.norm_squared();
    let tail: f64 = sigma[n..].iter().map(|s| s * s).sum();
    Ok((n, rel(err2, tail, tail)))
}

fn criterion_2(study: &Study) -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let mut rng = seeds::rng(7002);
    let (m, n) = (60, 40);
    let u = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() - 0.5).qr().q();
    let w = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5).qr().q();
    let sigma: Vec<f64> = (0..n).map(|i| 10f64.powf(-(i as f64) / 8.0)).collect();
    let a = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sigma.clone())) * w.transpose();
    for crit in [PodCriterion::Fixed(5), PodCriterion::Fixed(15), PodCriterion::Energy(1e-3)] {
        let label = format!("{crit:?}");
        let (k, e) = eckart_young(&a, crit, &sigma)?;
        v.check(e < 1e-8, format!("random 60x40, known spectrum, {label}: N = {k}, |err^2 - tail| / tail = {e:.2e}"));
    }

    let cfg = &study.cfg;
    let snaps = StageManifest::read(&cfg.out_dir.join(study::SNAPSHOTS))?;
    let sp = study::split(cfg, &snaps)?;
    let train = study::load_samples(cfg, &snaps, &sp.train)?;
    let set = SnapshotSet::from_trajectories(&train.trajectories, train.params, cfg.fom.times()?)?;
    let sigma: Vec<f64> = set.matrix.clone().singular_values().iter().copied().collect();
    let mut sorted = sigma.clone();
    sorted.sort_by(|x, y| y.total_cmp(x));
    for crit in [PodCriterion::Energy(1e-2), PodCriterion::Energy(5e-4), PodCriterion::Energy(1e-5)] {
        let label = format!("{crit:?}");
        let (k, e) = eckart_young(&set.matrix, crit, &sorted)?;
        v.check(e < 1e-8, format!("beam snapshots {}x{}, {label}: N = {k}, |err^2 - tail| / tail = {e:.2e}", set.matrix.nrows(), set.matrix.ncols()));
    }

    let pod = StageManifest::read(&cfg.out_dir.join(study::POD))?;
    let table: Vec<(f64, usize)> = pod.detail("table")?;
    let mut by_eps = table.clone();
    by_eps.sort_by(|x, y| y.0.total_cmp(&x.0));
    let monotone = by_eps.windows(2).all(|w| w[1].1 >= w[0].1);
    let grows = by_eps.last().map(|l| l.1) > by_eps.first().map(|f| f.1);
    let shown: Vec<String> = by_eps.iter().map(|(e, n)| format!("{e:.0e}:{n}")).collect();
    v.check(monotone && grows, format!("N vs tolerance table [{}] grows as the tolerance shrinks", shown.join(", ")));
    v.runtime(start.elapsed().as_secs_f64(), 60.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let mut rng = seeds::rng(7003);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let d = 1 + case % 3;
        let n = 8 + case % 5;
        let x = DMatrix::from_fn(d, n, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let kernel = match case % 3 {
            0 => Kernel::rbf(rng.random_range(0.5..2.0), rng.random_range(0.2..1.5), d),
            1 => Kernel::ard(rng.random_range(0.5..2.0), (0..d).map(|_| rng.random_range(0.2..1.5)).collect()),
            _ => Kernel::polynomial(rng.random_range(0.5..2.0), rng.random_range(0.2..1.5), 2, d),
        };
        let noise: f64 = rng.random_range(0.05..0.5);
        let mean = rng.random_range(-0.2..0.2);
        let mut theta = kernel.log_params();
        theta.push(noise.ln());
        let eval = |t: &[f64]| {
            let k = Kernel::from_log_params(kernel.kind, d, &t[..t.len() - 1]);
            log_marginal_likelihood(&k, t[t.len() - 1].exp(), &x, &y, mean)
        };
        let (_, grad) = eval(&theta)?;
        let h = 1e-5;
        let mut fd = vec![0.0; theta.len()];
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            fd[j] = (eval(&tp)?.0 - eval(&tm)?.0) / (2.0 * h);
        }
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
        let err = grad.iter().zip(&fd).fold(0.0f64, |m, (g, f)| m.max((g - f).abs() / scale));
        worst = worst.max(err);
    }
    v.check(worst < 1e-5, format!("log-likelihood gradient vs central differences, 20 instances: worst rel. err {worst:.2e} (< 1e-5)"));

    let space = ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![1.0, 1.0])?;
    let pts = lhs_sample(&space, 25, 5)?;
    let x = pts.transpose();
    let y: Vec<f64> = (0..25).map(|i| (3.0 * x[(0, i)]).sin() * (2.0 * x[(1, i)]).cos() + x[(0, i)]).collect();
    let gp = train_gp(&x, &y, &GpConfig::default(), 3)?;
    let mean_y = y.iter().sum::<f64>() / 25.0;
    let sd_y = (y.iter().map(|t| (t - mean_y).powi(2)).sum::<f64>() / 24.0).sqrt();
    let mut worst = 0.0f64;
    for i in 0..25 {
        let p = gp.predict_mean(&[x[(0, i)], x[(1, i)]])?;
        worst = worst.max((p - y[i]).abs() / sd_y);
    }
    v.check(worst < 1e-4, format!("noise-free interpolation at 25 training points: worst |error| / sd(y) = {worst:.2e} (learned noise {:.1e})", gp.noise_std));

    let xm = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let gp = TrainedGp::condition(Kernel::rbf(1.0, 1.0, 1), 0.0, xm, &[0.0, 1.0], 0.0, None, None)?;
    let (m, _) = gp.predict_point(&[0.5])?;
    // explicit 2x2 inverse: K = [[1, k12], [k12, 1]], k* = (ks, ks), y = (0, 1)
    let k12 = (-0.5f64).exp();
    let ks = (-0.125f64).exp();
    let det = 1.0 - k12 * k12;
    let oracle = (ks * (-k12) + ks * 1.0) / det;
    v.check(
        (m - oracle).abs() < 1e-10 && (m - 0.54940).abs() < 1e-4,
        format!("two-point prediction {m:.6} vs 2x2 oracle {oracle:.6} vs 0.54940"),
    );
    v.runtime(start.elapsed().as_secs_f64(), 60.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 4

struct Synthetic {
    basis: ReducedBasis,
    times: Vec<f64>,
    params: DMatrix<f64>,
    table: CoefficientTable,
}

fn synthetic(f: impl Fn(usize, f64, &[f64]) -> f64, n: usize, n_samples: usize, seed: u64) -> Result<Synthetic, Box<dyn std::error::Error>> {
    let space = ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![1.0, 1.0])?;
    let times: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1).collect();
    let params = lhs_sample(&space, n_samples, seed)?;
    let mut q = DMatrix::zeros(n, times.len() * n_samples);
    for s in 0..n_samples {
        let mu: Vec<f64> = params.row(s).iter().copied().collect();
        for (k, &t) in times.iter().enumerate() {
            for l in 0..n {
                q[(l, s * times.len() + k)] = f(l, t, &mu);
            }
        }
    }
    let raw = DMatrix::from_fn(20, 6, |i, j| ((i * 5 + j * 3) as f64 * 0.41).cos());
    let basis = ReducedBasis::build(&raw, PodCriterion::Fixed(n))?;
    let table = CoefficientTable::new(q, times.len(), n_samples)?;
    Ok(Synthetic { basis, times, params, table })
}

/// Stored GPs: one JSON record (with a binary companion) per GP.
fn count_gps(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .map(|r| r.filter_map(|e| e.ok()).filter(|e| e.path().extension().is_some_and(|x| x == "json")).count())
        .unwrap_or(0)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let separable = |l: usize, t: f64, mu: &[f64]| match l {
        0 => (3.0 * t).sin() * (1.5 + (2.0 * mu[0]).cos() + mu[1] * mu[1]),
        1 => (1.0 + t * t) * (0.5 + (mu[0] + 2.0 * mu[1]).sin()),
        _ => (2.0 * t).cos() * (2.0 + mu[0] - mu[1]),
    };
    let d = synthetic(separable, 3, 9, 21)?;
    let td = train_td_rom(&d.basis, &d.table, &d.times, &d.params, &TdConfig { eps_svd: 1e-6, ..Default::default() }, 4)?;
    let global = train_global_rom(&d.basis, &d.table, &d.times, &d.params, &GlobalConfig { time_stride: 1, ..Default::default() }, 4)?;
    let mut worst = 0.0f64;
    for l in 0..3 {
        let row: Vec<f64> = d.table.q.row(l).iter().copied().collect();
        let m = row.iter().sum::<f64>() / row.len() as f64;
        let sd = (row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (row.len() - 1) as f64).sqrt();
        for s in 0..9 {
            let mu: Vec<f64> = d.params.row(s).iter().copied().collect();
            for &t in &d.times {
                let a = td.predict(t, &mu)?.mean[l];
                let b = global.predict(t, &mu)?.mean[l];
                worst = worst.max((a - b).abs() / sd);
            }
        }
    }
    v.check(worst < 1e-4, format!("separable data: TD ranks {:?}, worst |TD - global| / sd(q) at 90 training nodes = {worst:.2e}", td.ranks()));

    let coupled = |l: usize, t: f64, mu: &[f64]| match l {
        0 => (t * (1.0 + 3.0 * mu[0])).sin() + mu[1] * t,
        _ => (t * mu[1] * 4.0).cos() * (1.0 + mu[0]),
    };
    let d = synthetic(coupled, 2, 10, 22)?;
    let tmp = tempfile::tempdir()?;
    for (case, td) in [
        ("separable", td),
        ("coupled", train_td_rom(&d.basis, &d.table, &d.times, &d.params, &TdConfig { eps_svd: 1e-4, ..Default::default() }, 5)?),
    ] {
        let ranks = td.ranks();
        let expected = 2 * ranks.iter().sum::<usize>();
        let rom = Rom::Td(td);
        let dir = tmp.path().join(case);
        write_rom(&rom, &dir)?;
        let files = count_gps(&dir.join("gps"));
        v.check(
            rom.n_gps() == expected && files == expected,
            format!("{case}: ranks {ranks:?}, GP count {} and {files} stored GPs vs 2 * sum of ranks = {expected}", rom.n_gps()),
        );
    }
    v.runtime(start.elapsed().as_secs_f64(), 60.0);
    Ok(v)
}

// ---------------------------------------------------------------- desk study

struct Study {
    _dir: tempfile::TempDir,
    cfg: StudyConfig,
    build_seconds: f64,
    timings: Vec<(RomVariant, EvaluationTiming)>,
    morris_seconds: f64,
    sobol_seconds: f64,
    mcmc_seconds: f64,
}

const ROMS: [RomVariant; 2] = [RomVariant::Global, RomVariant::Td];
const ROM_MODELS: [ModelChoice; 2] = [ModelChoice::Global, ModelChoice::Td];

fn timed<T>(f: impl FnOnce() -> podgpr_cli::Result<T>) -> podgpr_cli::Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Runs every stage and returns the wall-clock seconds of the build, Morris,
/// Sobol and MCMC groups plus the evaluation timings.
fn run_all(cfg: &StudyConfig) -> podgpr_cli::Result<(f64, Vec<(RomVariant, EvaluationTiming)>, [f64; 3])> {
    let (timings, build) = timed(|| {
        let snaps = study::run_snapshots(cfg)?;
        println!("    study: snapshots {} of {}", snaps.detail::<Vec<usize>>("successes")?.len(), cfg.n_samples);
        study::run_pod(cfg)?;
        let mut timings = Vec::new();
        for v in ROMS {
            study::run_train(cfg, v)?;
            timings.push((v, study::run_evaluate(cfg, v)?.1));
        }
        Ok(timings)
    })?;
    let ((), morris) = timed(|| {
        for m in [ModelChoice::Fom, ModelChoice::Td, ModelChoice::Global] {
            study::run_morris(cfg, m)?;
        }
        Ok(())
    })?;
    let ((), sobol) = timed(|| {
        for m in ROM_MODELS {
            study::run_sobol(cfg, m)?;
        }
        Ok(())
    })?;
    let ((), mcmc) = timed(|| {
        for m in ROM_MODELS {
            study::run_mcmc(cfg, m)?;
        }
        Ok(())
    })?;
    study::run_report(cfg)?;
    Ok((build, timings, [morris, sobol, mcmc]))
}

fn desk_study() -> Result<Study, Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = StudyConfig { out_dir: dir.path().join("study"), ..StudyConfig::default() };
    let (build_seconds, timings, [morris_seconds, sobol_seconds, mcmc_seconds]) = run_all(&cfg)?;
    Ok(Study { _dir: dir, cfg, build_seconds, timings, morris_seconds, sobol_seconds, mcmc_seconds })
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(study: &Study) -> Outcome {
    let mut v = Verdict::default();
    let cfg = &study.cfg;
    let pod = StageManifest::read(&cfg.out_dir.join(study::POD))?;
    v.note(format!(
        "mesh {:?}, {} samples, train ratio {}, N = {} at tolerance {:?}",
        cfg.mesh.elements,
        cfg.n_samples,
        cfg.train_ratio,
        pod.detail::<usize>("n")?,
        cfg.pod
    ));
    for (variant, timing) in &study.timings {
        let name = format!("evaluate_{}", ModelChoice::from_variant(*variant).name());
        let s: EvaluationSummary = container::read_json(&cfg.out_dir.join(&name).join("summary.json"))?;
        let (tre, proj) = (s.mean_tre.unwrap_or(f64::INFINITY), s.projection_mean_tre.unwrap_or(f64::NAN));
        v.check(
            tre <= 10.0 * proj,
            format!("{variant:?}: mean tRE {tre:.3e} vs projection {proj:.3e} (ratio {:.1}, bound 10) on {} test samples", tre / proj, s.n_test),
        );
        v.check(
            timing.speedup >= 100.0,
            format!("{variant:?}: online query {:.2e} s vs FOM solve {:.3} s, speed-up {:.0}x (bound 100x)", timing.rom_seconds_per_query, timing.fom_seconds, timing.speedup),
        );
    }
    v.runtime(study.build_seconds, 1800.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 6

fn top3(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order.truncate(3);
    order
}

/// Spearman correlation between two score vectors restricted to `items`.
fn spearman(items: &[usize], a: &[f64], b: &[f64]) -> f64 {
    let rank = |s: &[f64]| -> Vec<f64> {
        items.iter().map(|&i| items.iter().filter(|&&j| s[j] > s[i]).count() as f64).collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = items.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn criterion_6(study: &Study) -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let space = ParameterSpace::new(vec!["a".into(), "b".into(), "c".into()], vec![0.0, -1.0, 2.0], vec![1.0, 3.0, 5.0])?;
    let coeffs = [2.0, -0.5, 7.0];
    let model = FnModel::new(3, 1, |mu: &[f64]| vec![1.0 + mu.iter().zip(&coeffs).map(|(m, a)| m * a).sum::<f64>()]);
    let design = morris_design(&space, 10, 4, 17)?;
    let out = model.evaluate_rows(&design.points)?;
    let res = &morris_indices(&design, &out, true)?.outputs[0];
    let err_m = res.mean.iter().zip(&coeffs).fold(0.0f64, |m, (x, a)| m.max((x - a).abs()));
    let err_sd = res.sd.iter().fold(0.0f64, |m, s| m.max(s.map_or(f64::INFINITY, f64::abs)));
    v.check(err_m < 1e-12 && err_sd < 1e-12, format!("additive model: max |m_i - a_i| = {err_m:.1e}, max sd_i = {err_sd:.1e}"));
    v.runtime(start.elapsed().as_secs_f64(), 1.0);

    let cfg = &study.cfg;
    let read = |m: ModelChoice| -> podgpr_cli::Result<Vec<Vec<f64>>> {
        StageManifest::read(&cfg.out_dir.join(format!("morris_{}", m.name())))?.detail("mean_abs")
    };
    let fom = read(ModelChoice::Fom)?;
    let names = &cfg.space.names;
    let expected: Vec<usize> = ["b_f", "C", "p_tilde"].iter().map(|n| cfg.space.index_of(n).expect("beam parameter")).collect();
    let set = |v: &[usize]| -> Vec<usize> {
        let mut s = v.to_vec();
        s.sort();
        s
    };
    let label = |idx: &[usize]| idx.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join(" > ");
    for (q, probe) in cfg.probes.iter().enumerate() {
        let f3 = top3(&fom[q]);
        v.check(set(&f3) == set(&expected), format!("QoI step {}: FOM top-3 {}", probe.step, label(&f3)));
        for m in ROM_MODELS {
            let rom = &read(m)?[q];
            let r3 = top3(rom);
            let rho = spearman(&f3, &fom[q], rom);
            v.check(set(&r3) == set(&f3), format!("QoI step {}: {} top-3 {} has the FOM set", probe.step, m.name(), label(&r3)));
            v.check(rho == 1.0, format!("QoI step {}: {} Spearman rho on the FOM top-3 = {rho:.2}", probe.step, m.name()));
        }
    }
    v.runtime(study.morris_seconds, 1200.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7(study: &Study) -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let pi = std::f64::consts::PI;
    let (a, b) = (7.0, 0.1);
    let space = ParameterSpace::new(vec!["x1".into(), "x2".into(), "x3".into()], vec![-pi; 3], vec![pi; 3])?;
    let ishigami = FnModel::new(3, 1, move |x: &[f64]| vec![x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()]);
    let v1 = 0.5 * (1.0 + b * pi.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = 8.0 * b * b * pi.powi(8) / 225.0;
    let var = v1 + v2 + v13;
    let exact_first = [v1 / var, v2 / var, 0.0];
    let exact_total = [(v1 + v13) / var, v2 / var, v13 / var];
    let design = saltelli_design(&space, 1 << 14, 23)?;
    let s = &sobol_indices(&design, &ishigami.evaluate_rows(&design.rows())?)?.outputs[0];
    let err = (0..3).fold(0.0f64, |m, i| m.max((s.first[i] - exact_first[i]).abs()).max((s.total[i] - exact_total[i]).abs()));
    v.check(
        err < 0.05,
        format!("Ishigami at 2^14: S = {:.3?} (exact {:.3?}), S_T = {:.3?} (exact {:.3?}), max err {err:.3}", s.first, exact_first, s.total, exact_total),
    );

    let space = ParameterSpace::new(vec!["x1".into(), "x2".into()], vec![0.0; 2], vec![1.0; 2])?;
    let additive = FnModel::new(2, 1, |x: &[f64]| vec![x[0] + 2.0 * x[1]]);
    let design = saltelli_design(&space, 1 << 12, 29)?;
    let s = &sobol_indices(&design, &additive.evaluate_rows(&design.rows())?)?.outputs[0];
    let err = (0..2).fold(0.0f64, |m, i| m.max((s.first[i] - [0.2, 0.8][i]).abs()));
    v.check(err < 0.03, format!("additive x1 + 2 x2: S = {:.3?} (exact [0.2, 0.8]), max err {err:.3}", s.first));
    v.runtime(start.elapsed().as_secs_f64(), 60.0);

    let cfg = &study.cfg;
    let key: Vec<usize> = ["b_f", "C", "p_tilde"].iter().map(|n| cfg.space.index_of(n).expect("beam parameter")).collect();
    for m in ROM_MODELS {
        let manifest = StageManifest::read(&cfg.out_dir.join(format!("sobol_{}", m.name())))?;
        let first: Vec<Vec<f64>> = manifest.detail("first")?;
        let total: Vec<Vec<f64>> = manifest.detail("total")?;
        for (q, probe) in cfg.probes.iter().enumerate() {
            let sum = |i: usize| first[q][i] + total[q][i];
            let rest: Vec<usize> = (0..cfg.space.dim()).filter(|i| !key.contains(i)).collect();
            let key_sum: f64 = key.iter().map(|&i| sum(i)).sum();
            let rest_sum: f64 = rest.iter().map(|&i| sum(i)).sum();
            let key_min = key.iter().map(|&i| sum(i)).fold(f64::INFINITY, f64::min);
            let rest_max = rest.iter().map(|&i| sum(i)).fold(f64::NEG_INFINITY, f64::max);
            v.check(
                key_sum > rest_sum,
                format!(
                    "{} QoI step {}: S + S_T of b_f, C, p_tilde sum to {key_sum:.3} vs {rest_sum:.3} for the rest (smallest of the three {key_min:.3}, largest other {rest_max:.3})",
                    m.name(),
                    probe.step
                ),
            );
        }
    }
    v.runtime(study.sobol_seconds, 900.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 8

/// Batch-means standard errors of the mean and of the standard deviation.
fn batch_errors(x: &[f64], batches: usize) -> (f64, f64, f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let size = n / batches;
    let (mut bm, mut bv) = (Vec::new(), Vec::new());
    for b in 0..batches {
        let chunk = &x[b * size..(b + 1) * size];
        let m = chunk.iter().sum::<f64>() / size as f64;
        bm.push(m);
        bv.push(chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / size as f64);
    }
    let se = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64 / s.len() as f64).sqrt()
    };
    let sd = var.sqrt();
    (mean, se(&bm), sd, se(&bv) / (2.0 * sd))
}

fn criterion_8(study: &Study) -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();

    let model = FnModel::new(1, 1, |mu: &[f64]| vec![mu[0]]);
    let prior = ParameterSpace::new(vec!["theta".into()], vec![-5.0], vec![5.0])?;
    let (y_obs, noise_var) = (0.3, 0.01);
    let problem = InverseProblem::new(&model, vec![y_obs], noise_var, prior)?;
    let config = McmcConfig { n_mc: 100_000, burn_in: 1000, thin: 1, proposal: Proposal::RandomWalk { step: vec![0.25] }, seed: 31, initial: None };
    let chain = metropolis_hastings(&problem, &config)?;
    let xs: Vec<f64> = chain.kept.column(0).iter().copied().collect();
    let (mean, se_mean, sd, se_sd) = batch_errors(&xs, 50);
    let exact_sd = noise_var.sqrt();
    v.check(
        (mean - y_obs).abs() < 3.0 * se_mean && (sd - exact_sd).abs() < 3.0 * se_sd,
        format!("conjugate Gaussian at 1e5: mean {mean:.4} +- {se_mean:.1e} (exact {y_obs}), std {sd:.4} +- {se_sd:.1e} (exact {exact_sd})"),
    );

    let flat = FnModel::new(2, 1, |_: &[f64]| vec![0.0]);
    let prior = ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, -2.0], vec![1.0, 2.0])?;
    let problem = InverseProblem::new(&flat, vec![0.0], 1.0, prior.clone())?;
    let config = McmcConfig { n_mc: 10_001, burn_in: 500, thin: 4, proposal: Proposal::IndependenceUniform, seed: 37, initial: None };
    let chain = metropolis_hastings(&problem, &config)?;
    let kept_rows: Vec<usize> = (config.burn_in..config.n_mc).filter(|i| (i + 1 - config.burn_in) % config.thin == 0).collect();
    let rows_match = kept_rows.len() == chain.kept.nrows()
        && kept_rows.iter().enumerate().all(|(r, &i)| chain.kept.row(r) == chain.samples.row(i));
    v.check(rows_match, format!("kept count {} (expected {}) and kept rows are every 4th draw after burn-in", chain.kept.nrows(), kept_rows.len()));
    let n = chain.samples.nrows();
    let mut ks_worst = 0.0f64;
    let mut rho_worst = 0.0f64;
    for d in 0..2 {
        let mut u: Vec<f64> = chain.samples.column(d).iter().map(|x| (x - prior.lower[d]) / prior.width(d)).collect();
        let m = u.iter().sum::<f64>() / n as f64;
        let c0: f64 = u.iter().map(|x| (x - m).powi(2)).sum();
        let c1: f64 = u.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        rho_worst = rho_worst.max((c1 / c0).abs());
        u.sort_by(f64::total_cmp);
        let ks = u.iter().enumerate().fold(0.0f64, |acc, (i, x)| acc.max((x - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - x).abs()));
        ks_worst = ks_worst.max(ks);
    }
    let (ks_bound, rho_bound) = (1.95 / (n as f64).sqrt(), 4.0 / (n as f64).sqrt());
    v.check(
        chain.acceptance_rate() == 1.0 && ks_worst < ks_bound && rho_worst < rho_bound,
        format!(
            "flat likelihood: acceptance {:.3}, KS distance to uniform {ks_worst:.4} (< {ks_bound:.4}), lag-1 autocorrelation {rho_worst:.4} (< {rho_bound:.4})",
            chain.acceptance_rate()
        ),
    );
    v.runtime(start.elapsed().as_secs_f64(), 60.0);

    let cfg = &study.cfg;
    let key: Vec<usize> = ["b_f", "C", "p_tilde"].iter().map(|n| cfg.space.index_of(n).expect("beam parameter")).collect();
    v.note(format!("rule: identified means posterior std < 0.7 prior std and |mean - target| < 2 std; near-prior means std > 0.7 prior std; noise variance {:e}", cfg.mcmc.noise_variance));
    for m in ROM_MODELS {
        let s: McmcSummary = serde_json::from_value(StageManifest::read(&cfg.out_dir.join(format!("mcmc_{}", m.name())))?.details)?;
        v.note(format!("{}: acceptance {:.3}, {} kept samples", m.name(), s.acceptance_rate, s.n_kept));
        for i in 0..cfg.space.dim() {
            let ratio = s.std[i] / s.prior_std[i];
            let line = format!(
                "{} {}: mean {:.4} (target {}), std ratio {ratio:.2}",
                m.name(),
                cfg.space.names[i],
                s.mean[i],
                s.target[i]
            );
            if key.contains(&i) {
                v.check(ratio < 0.7 && (s.mean[i] - s.target[i]).abs() < 2.0 * s.std[i], format!("{line}, identified"));
            } else {
                v.check(ratio > 0.7, format!("{line}, near prior"));
            }
        }
    }
    v.runtime(study.mcmc_seconds, 1800.0);
    Ok(v)
}

// ---------------------------------------------------------------- criterion 9

fn tree_hashes(dir: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if path.is_dir() {
                stack.push(path);
            } else if name != TIMING && !name.starts_with("report.") {
                let rel = path.strip_prefix(dir).expect("inside the tree").to_string_lossy().into_owned();
                out.insert(rel, seeds::sha256_hex(&std::fs::read(&path)?));
            }
        }
    }
    Ok(out)
}

fn report_without_timing(dir: &Path) -> Result<serde_json::Value, Box<dyn std::error::Error>> {
    let mut value: serde_json::Value = container::read_json(&dir.join("report.json"))?;
    if let Some(map) = value.as_object_mut() {
        for entry in map.values_mut() {
            if let Some(e) = entry.as_object_mut() {
                e.remove("timing");
            }
        }
    }
    Ok(value)
}

fn criterion_9(study: &Study) -> Outcome {
    let start = Instant::now();
    let mut v = Verdict::default();
    let cfg = &study.cfg;
    let first: PathBuf = cfg.out_dir.with_file_name("study_first");
    std::fs::rename(&cfg.out_dir, &first)?;
    run_all(cfg)?;
    let (a, b) = (tree_hashes(&first)?, tree_hashes(&cfg.out_dir)?);
    let differing: Vec<&String> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
    v.check(
        differing.is_empty(),
        format!("full rerun with seed {}: {} files compared outside timing.json, differing {differing:?}", cfg.seed, a.len()),
    );
    let same_report = report_without_timing(&first)? == report_without_timing(&cfg.out_dir)?;
    v.check(same_report, "report.json identical once timings are removed");

    let snaps = StageManifest::read(&cfg.out_dir.join(study::SNAPSHOTS))?;
    let n_dofs: usize = snaps.detail("n_dofs")?;
    let desk = Mesh::beam(10, 2, 2, 1e-2, 1e-3, 1e-3)?.n_dofs();
    v.check(
        cfg.mesh.elements.iter().product::<usize>() <= 40 && n_dofs <= desk,
        format!("every FOM run uses the {:?} mesh with {n_dofs} DOFs (desk scale {desk})", cfg.mesh.elements),
    );
    v.note("the unit and property suites run as part of cargo test --workspace");
    v.note(format!("rerun took {:.1} s", start.elapsed().as_secs_f64()));
    Ok(v)
}

// ---------------------------------------------------------------- driver

fn report(n: usize, outcome: Outcome, failed: &mut Vec<usize>) {
    match outcome {
        Ok(v) => {
            println!("criterion {n}: {}", if v.pass() { "PASS" } else { "FAIL" });
            for (ok, msg) in &v.checks {
                println!("    [{}] {msg}", if *ok { "ok" } else { "FAIL" });
            }
            if !v.pass() {
                failed.push(n);
            }
        }
        Err(e) => {
            println!("criterion {n}: FAIL");
            println!("    [FAIL] error: {e}");
            failed.push(n);
        }
    }
}

fn main() {
    let strict = std::env::args().any(|a| a == "--strict");
    let mut failed = Vec::new();
    report(1, criterion_1(), &mut failed);
    println!("    building the desk-scale study (snapshots, POD, both ROMs, Morris, Sobol, MCMC)");
    match desk_study() {
        Ok(study) => {
            report(2, criterion_2(&study), &mut failed);
            report(3, criterion_3(), &mut failed);
            report(4, criterion_4(), &mut failed);
            report(5, criterion_5(&study), &mut failed);
            report(6, criterion_6(&study), &mut failed);
            report(7, criterion_7(&study), &mut failed);
            report(8, criterion_8(&study), &mut failed);
            report(9, criterion_9(&study), &mut failed);
        }
        Err(e) => {
            let e = e.to_string();
            let missing = |n: usize, failed: &mut Vec<usize>| report(n, Err(format!("desk study failed: {e}").into()), failed);
            missing(2, &mut failed);
            report(3, criterion_3(), &mut failed);
            report(4, criterion_4(), &mut failed);
            for n in 5..=9 {
                missing(n, &mut failed);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: {} of 9 criteria pass; failing: {failed:?}", 9 - failed.len());
    }
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
