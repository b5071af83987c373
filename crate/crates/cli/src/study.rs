//! The pipeline stages: snapshots → pod → train → evaluate, and the
//! sensitivity and inversion studies on top of a chosen forward model.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use podgpr_core::bayes::{chain_summary, metropolis_hastings, InverseProblem};
use podgpr_core::fom::{FomSolver, MaterialParams, Probe, SnappedProbe, Trajectory};
use podgpr_core::model::{FomModel, Model, RomModel};
use podgpr_core::pod::{energy_rank, CoefficientTable, ReducedBasis, SnapshotSet};
use podgpr_core::rom::bundle::{read_rom, write_rom};
use podgpr_core::rom::metrics::{coefficient_errors, field_errors, projections};
use podgpr_core::rom::{train_global_rom, train_td_rom, Rom, RomVariant};
use podgpr_core::sampling::lhs_sample;
use podgpr_core::uq::{morris_design, morris_indices, saltelli_design, sobol_indices, time_integrated_sobol};
use podgpr_core::{container, seeds};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::StudyConfig;
use crate::error::{CliError, Result};
use crate::stage::{fmt, fmt_opt, hash_json, Stage, StageManifest};

pub const SNAPSHOTS: &str = "snapshots";
pub const POD: &str = "pod";

/// Which forward model drives a sensitivity or inversion study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Fom,
    Global,
    Td,
}

impl ModelChoice {
    pub fn from_variant(v: RomVariant) -> Self {
        match v {
            RomVariant::Global => Self::Global,
            RomVariant::Td => Self::Td,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fom => "fom",
            Self::Global => "global",
            Self::Td => "td",
        }
    }
}

impl FromStr for ModelChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fom" => Ok(Self::Fom),
            "global" => Ok(Self::Global),
            "td" => Ok(Self::Td),
            other => Err(CliError::Config(format!("unknown model `{other}` (expected fom, global or td)"))),
        }
    }
}

pub fn rom_dir_name(v: RomVariant) -> String {
    format!("rom_{}", ModelChoice::from_variant(v).name())
}

fn material(cfg: &StudyConfig, mu: &[f64]) -> podgpr_core::Result<MaterialParams> {
    MaterialParams::from_vector(mu, cfg.density)
}

fn trajectory_file(i: usize) -> String {
    format!("sample_{i:03}.bin")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub mu: Vec<f64>,
    pub error: String,
}

fn fom_hash(cfg: &StudyConfig) -> String {
    hash_json(&json!({ "mesh": cfg.mesh, "fom": cfg.fom, "density": cfg.density }))
}

fn snapshots_input(cfg: &StudyConfig) -> String {
    hash_json(&json!({ "stage": SNAPSHOTS, "seed": cfg.seed, "space": cfg.space, "n_samples": cfg.n_samples, "fom": fom_hash(cfg) }))
}

/// LHS design and full-order solves.
pub fn run_snapshots(cfg: &StudyConfig) -> Result<StageManifest> {
    let solver = FomSolver::new(cfg.mesh.build()?, cfg.fom)?;
    run_snapshots_with(cfg, &|mu: &[f64]| Ok(solver.solve(&material(cfg, mu)?)?.0))
}

/// As [`run_snapshots`] with a caller-supplied solver; failing samples are
/// recorded and skipped.
pub fn run_snapshots_with(cfg: &StudyConfig, solve: &(dyn Fn(&[f64]) -> podgpr_core::Result<Trajectory> + Sync)) -> Result<StageManifest> {
    cfg.validate()?;
    let mut stage = Stage::new(cfg, SNAPSHOTS, snapshots_input(cfg));
    if let Some(m) = stage.up_to_date() {
        return Ok(m);
    }
    stage.begin()?;
    let design = lhs_sample(&cfg.space, cfg.n_samples, seeds::derive(cfg.seed, "fom-sampling"))?;
    let results: Vec<(podgpr_core::Result<Trajectory>, f64)> = (0..design.nrows())
        .into_par_iter()
        .map(|i| {
            let mu: Vec<f64> = design.row(i).iter().copied().collect();
            let start = Instant::now();
            let r = solve(&mu);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut successes = Vec::new();
    let mut failures = Vec::new();
    let mut seconds = Vec::new();
    let mut n_steps = 0;
    let mut n_dofs = 0;
    for (i, (result, secs)) in results.into_iter().enumerate() {
        let mu: Vec<f64> = design.row(i).iter().copied().collect();
        match result {
            Ok(traj) => {
                n_steps = traj.n_steps();
                n_dofs = traj.n_dofs();
                stage.write_matrix(&trajectory_file(i), &traj.displacements, traj.dt)?;
                successes.push(i);
                seconds.push(secs);
            }
            Err(e) => failures.push(SampleFailure { index: i, mu, error: e.to_string() }),
        }
    }
    let status = |i: usize| if successes.contains(&i) { "ok" } else { "failed" };
    let mut header = vec!["sample"];
    header.extend(cfg.space.names.iter().map(String::as_str));
    header.push("status");
    let rows: Vec<Vec<String>> = (0..design.nrows())
        .map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(design.row(i).iter().map(|v| fmt(*v)));
            r.push(status(i).to_string());
            r
        })
        .collect();
    stage.write_csv("design.csv", &header, rows)?;
    if successes.is_empty() {
        return Err(CliError::Config(format!("all {} full-order solves failed", design.nrows())));
    }
    stage.write_timing(&json!({ "fom_seconds": seconds, "median_fom_seconds": median(seconds.clone()) }))?;
    let mesh_hash = cfg.mesh.build()?.content_hash();
    stage.finish(json!({
        "n_requested": cfg.n_samples,
        "successes": successes,
        "failures": failures,
        "n_steps": n_steps,
        "n_dofs": n_dofs,
        "mesh_hash": mesh_hash,
        "design": design.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
    }))
}

/// Successful samples split into training and test indices.
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split(cfg: &StudyConfig, snapshots: &StageManifest) -> Result<Split> {
    let ok: Vec<usize> = snapshots.detail("successes")?;
    if ok.len() < 2 {
        return Err(CliError::Config("fewer than two successful samples; no train/test split possible".into()));
    }
    let n_train = ((cfg.train_ratio * ok.len() as f64).round() as usize).clamp(1, ok.len() - 1);
    Ok(Split { train: ok[..n_train].to_vec(), test: ok[n_train..].to_vec() })
}

pub struct Samples {
    pub params: DMatrix<f64>,
    pub trajectories: Vec<DMatrix<f64>>,
}

pub fn load_samples(cfg: &StudyConfig, snapshots: &StageManifest, which: &[usize]) -> Result<Samples> {
    let design: Vec<Vec<f64>> = snapshots.detail("design")?;
    let dir = cfg.out_dir.join(SNAPSHOTS);
    let trajectories = which
        .iter()
        .map(|&i| Ok(container::read_matrix(&dir.join(trajectory_file(i)))?.0))
        .collect::<Result<Vec<_>>>()?;
    let params = DMatrix::from_fn(which.len(), cfg.space.dim(), |r, c| design[which[r]][c]);
    Ok(Samples { params, trajectories })
}

fn require(cfg: &StudyConfig, stage: &'static str) -> Result<StageManifest> {
    let dir = cfg.out_dir.join(stage);
    if !dir.join(crate::stage::MANIFEST).exists() {
        return Err(CliError::MissingArtifact { path: dir, stage });
    }
    StageManifest::read(&dir)
}

/// Reduced basis from the training snapshots and the basis-size table.
pub fn run_pod(cfg: &StudyConfig) -> Result<StageManifest> {
    let snaps = require(cfg, SNAPSHOTS)?;
    let input = hash_json(&json!({ "stage": POD, "up": snaps.input_hash, "ratio": cfg.train_ratio, "pod": cfg.pod, "table": cfg.pod_table }));
    let mut stage = Stage::new(cfg, POD, input);
    if let Some(m) = stage.up_to_date() {
        return Ok(m);
    }
    stage.begin()?;
    let sp = split(cfg, &snaps)?;
    let train = load_samples(cfg, &snaps, &sp.train)?;
    let set = SnapshotSet::from_trajectories(&train.trajectories, train.params, cfg.fom.times()?)?;
    let basis = ReducedBasis::build(&set.matrix, cfg.pod)?;
    basis.write(&stage.path("basis.bin"))?;
    stage.record("basis.bin")?;
    stage.record("basis.json")?;

    let sv = &basis.singular_values;
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut cum = 0.0;
    let rows: Vec<Vec<String>> = sv
        .iter()
        .enumerate()
        .map(|(i, s)| {
            cum += s * s;
            vec![(i + 1).to_string(), fmt(*s), fmt(cum / total)]
        })
        .collect();
    stage.write_csv("singular_values.csv", &["index", "singular_value", "cumulative_energy"], rows)?;
    let table: Vec<(f64, usize)> = cfg.pod_table.iter().map(|&eps| (eps, energy_rank(sv, eps))).collect();
    stage.write_csv("pod_table.csv", &["tolerance", "n"], table.iter().map(|(e, n)| vec![fmt(*e), n.to_string()]))?;
    stage.finish(json!({
        "n": basis.n(),
        "n_h": basis.n_h(),
        "train": sp.train,
        "test": sp.test,
        "tail_energy": basis.tail_energy(),
        "table": table,
    }))
}

fn load_basis(cfg: &StudyConfig) -> Result<ReducedBasis> {
    require(cfg, POD)?;
    Ok(ReducedBasis::read(&cfg.out_dir.join(POD).join("basis.bin"))?)
}

fn train_input(cfg: &StudyConfig, variant: RomVariant, pod: &StageManifest) -> String {
    let settings = match variant {
        RomVariant::Global => serde_json::to_value(cfg.global),
        RomVariant::Td => serde_json::to_value(cfg.td),
    }
    .expect("serializable");
    hash_json(&json!({ "stage": "train", "variant": variant, "up": pod.input_hash, "settings": settings, "seed": cfg.seed }))
}

/// Trains one ROM variant on the training coefficients.
pub fn run_train(cfg: &StudyConfig, variant: RomVariant) -> Result<StageManifest> {
    let pod = require(cfg, POD)?;
    let snaps = require(cfg, SNAPSHOTS)?;
    let mut stage = Stage::new(cfg, &rom_dir_name(variant), train_input(cfg, variant, &pod));
    if let Some(m) = stage.up_to_date() {
        return Ok(m);
    }
    stage.begin()?;
    let basis = load_basis(cfg)?;
    let train_idx: Vec<usize> = pod.detail("train")?;
    let train = load_samples(cfg, &snaps, &train_idx)?;
    let times = cfg.fom.times()?;
    let set = SnapshotSet::from_trajectories(&train.trajectories, train.params.clone(), times.clone())?;
    let table = CoefficientTable::from_snapshots(&basis, &set)?;
    let seed = seeds::derive(cfg.seed, "gp-starts");
    let start = Instant::now();
    let rom = match variant {
        RomVariant::Global => Rom::Global(train_global_rom(&basis, &table, &times, &train.params, &cfg.global, seed)?),
        RomVariant::Td => Rom::Td(train_td_rom(&basis, &table, &times, &train.params, &cfg.td, seed)?),
    };
    let training_seconds = start.elapsed().as_secs_f64();
    write_rom(&rom, &stage.path("bundle"))?;
    stage.record_dir("bundle")?;
    stage.write_timing(&json!({ "training_seconds": training_seconds }))?;
    let ranks = match &rom {
        Rom::Td(td) => Some(td.ranks()),
        Rom::Global(_) => None,
    };
    stage.finish(json!({ "variant": variant, "n": basis.n(), "n_gps": rom.n_gps(), "td_ranks": ranks }))
}

pub fn load_rom(cfg: &StudyConfig, variant: RomVariant) -> Result<(Rom, StageManifest)> {
    let dir = cfg.out_dir.join(rom_dir_name(variant));
    if !dir.join(crate::stage::MANIFEST).exists() {
        return Err(CliError::MissingArtifact { path: dir, stage: "train" });
    }
    let manifest = StageManifest::read(&dir)?;
    Ok((read_rom(&dir.join("bundle"))?, manifest))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub variant: RomVariant,
    pub n: usize,
    pub n_test: usize,
    pub mean_tae: f64,
    pub mean_tre: Option<f64>,
    pub projection_mean_tae: f64,
    pub projection_mean_tre: Option<f64>,
    pub coefficient_mse: Vec<f64>,
    pub coefficient_rse: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationTiming {
    /// Median over three repetitions of one full-trajectory ROM query with field reconstruction.
    pub rom_seconds_per_query: f64,
    /// Median recorded full-order solve time.
    pub fom_seconds: f64,
    pub speedup: f64,
}

/// Errors of one ROM variant on the test set, against the FOM and against projection.
pub fn run_evaluate(cfg: &StudyConfig, variant: RomVariant) -> Result<(StageManifest, EvaluationTiming)> {
    let snaps = require(cfg, SNAPSHOTS)?;
    let pod = require(cfg, POD)?;
    let (rom, train) = load_rom(cfg, variant)?;
    let name = format!("evaluate_{}", ModelChoice::from_variant(variant).name());
    let mut stage = Stage::new(cfg, &name, hash_json(&json!({ "stage": name, "up": train.input_hash })));
    let fom_seconds: f64 = {
        let timing: serde_json::Value = container::read_json(&cfg.out_dir.join(SNAPSHOTS).join(crate::stage::TIMING))?;
        timing["median_fom_seconds"].as_f64().ok_or_else(|| CliError::Config("snapshot timing lacks the FOM time".into()))?
    };
    if let Some(m) = stage.up_to_date() {
        let timing = container::read_json(&stage.path(crate::stage::TIMING))?;
        return Ok((m, timing));
    }
    stage.begin()?;
    let test_idx: Vec<usize> = pod.detail("test")?;
    let test = load_samples(cfg, &snaps, &test_idx)?;
    let times = cfg.fom.times()?;
    let basis = rom.basis();

    let mus: Vec<Vec<f64>> = test.params.row_iter().map(|r| r.iter().copied().collect()).collect();
    let coeffs = mus.iter().map(|mu| rom.predict_trajectory(mu, &times)).collect::<podgpr_core::Result<Vec<_>>>()?;
    let approx = coeffs.iter().map(|q| basis.reconstruct(q)).collect::<podgpr_core::Result<Vec<_>>>()?;
    let mut reps = Vec::new();
    for _ in 0..3 {
        let start = Instant::now();
        for mu in &mus {
            let q = rom.predict_trajectory(mu, &times)?;
            std::hint::black_box(basis.reconstruct(&q)?);
        }
        reps.push(start.elapsed().as_secs_f64() / mus.len() as f64);
    }
    let rom_seconds_per_query = median(reps);

    let errors = field_errors(&test.trajectories, &approx)?;
    let proj = field_errors(&test.trajectories, &projections(basis, &test.trajectories)?)?;
    let truth_q = DMatrix::from_columns(
        &test.trajectories.iter().flat_map(|u| basis.project(u).expect("shape checked").column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()).collect::<Vec<_>>(),
    );
    let pred_q = DMatrix::from_columns(&coeffs.iter().flat_map(|q| q.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()).collect::<Vec<_>>());
    let coef = coefficient_errors(&truth_q, &pred_q)?;

    let rows: Vec<Vec<String>> = (0..mus.len())
        .map(|s| {
            vec![
                test_idx[s].to_string(),
                fmt(errors.tae[s]),
                fmt_opt(errors.tre[s]),
                fmt(proj.tae[s]),
                fmt_opt(proj.tre[s]),
                rom.design().outside(times[0], &mus[s]).to_string(),
            ]
        })
        .collect();
    stage.write_csv("metrics.csv", &METRICS_HEADER, rows)?;
    let curves: Vec<Vec<String>> = (0..times.len())
        .map(|k| {
            vec![
                (k + 1).to_string(),
                fmt(times[k]),
                fmt(errors.abs_curve[k]),
                fmt_opt(errors.rel_curve[k]),
                fmt(proj.abs_curve[k]),
                fmt_opt(proj.rel_curve[k]),
            ]
        })
        .collect();
    stage.write_csv("curves.csv", &CURVES_HEADER, curves)?;
    let coef_rows = (0..coef.mse.len()).map(|l| vec![(l + 1).to_string(), fmt(coef.mse[l]), fmt_opt(coef.rse[l])]);
    stage.write_csv("coefficients.csv", &["coefficient", "mse", "rse"], coef_rows)?;
    let summary = EvaluationSummary {
        variant,
        n: basis.n(),
        n_test: mus.len(),
        mean_tae: errors.mean_tae,
        mean_tre: errors.mean_tre,
        projection_mean_tae: proj.mean_tae,
        projection_mean_tre: proj.mean_tre,
        coefficient_mse: coef.mse,
        coefficient_rse: coef.rse,
    };
    stage.write_json("summary.json", &summary)?;
    let timing = EvaluationTiming { rom_seconds_per_query, fom_seconds, speedup: fom_seconds / rom_seconds_per_query };
    stage.write_timing(&timing)?;
    let manifest = stage.finish(serde_json::to_value(&summary)?)?;
    Ok((manifest, timing))
}

pub const METRICS_HEADER: [&str; 6] = ["sample", "tae", "tre", "projection_tae", "projection_tre", "extrapolated"];
pub const CURVES_HEADER: [&str; 6] = ["step", "time", "abs_error", "rel_error", "projection_abs_error", "projection_rel_error"];

/// The forward model behind a study with its stage-input hash.
pub fn forward_model(cfg: &StudyConfig, choice: ModelChoice, probes: &[Probe]) -> Result<(Box<dyn Model>, String)> {
    let mesh = cfg.mesh.build()?;
    let n_steps = cfg.fom.n_steps()?;
    let snapped: Vec<SnappedProbe> = probes.iter().map(|p| p.snap(&mesh, n_steps)).collect::<podgpr_core::Result<_>>()?;
    match choice {
        ModelChoice::Fom => {
            let solver = FomSolver::new(mesh, cfg.fom)?;
            Ok((Box::new(FomModel { solver, probes: snapped, density: cfg.density }), fom_hash(cfg)))
        }
        ModelChoice::Global | ModelChoice::Td => {
            let variant = if choice == ModelChoice::Global { RomVariant::Global } else { RomVariant::Td };
            let (rom, manifest) = load_rom(cfg, variant)?;
            Ok((Box::new(RomModel::new(rom, snapped, cfg.fom.times()?)?), manifest.input_hash))
        }
    }
}

fn qoi_label(p: &Probe) -> String {
    format!("{}@{}", ["x", "y", "z"][p.component], p.step)
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }).collect()
}

/// Morris screening of the configured probes.
pub fn run_morris(cfg: &StudyConfig, choice: ModelChoice) -> Result<StageManifest> {
    cfg.validate()?;
    let (model, model_hash) = forward_model(cfg, choice, &cfg.probes)?;
    let name = format!("morris_{}", choice.name());
    let input = hash_json(&json!({ "stage": name, "model": model_hash, "settings": cfg.morris, "probes": cfg.probes, "space": cfg.space, "seed": cfg.seed }));
    let mut stage = Stage::new(cfg, &name, input);
    if let Some(m) = stage.up_to_date() {
        return Ok(m);
    }
    stage.begin()?;
    let design = morris_design(&cfg.space, cfg.morris.trajectories, cfg.morris.levels, seeds::derive(cfg.seed, "morris"))?;
    let start = Instant::now();
    let outputs = model.evaluate_rows(&design.points)?;
    let seconds = start.elapsed().as_secs_f64();
    let result = morris_indices(&design, &outputs, cfg.morris.physical)?;

    let p = cfg.space.dim();
    let mut header = vec!["trajectory".to_string(), "point".to_string()];
    header.extend(cfg.space.names.iter().cloned());
    header.extend(cfg.probes.iter().map(qoi_label));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..design.n_points()).map(|i| {
        let mut r = vec![(i / (p + 1)).to_string(), (i % (p + 1)).to_string()];
        r.extend(design.points.row(i).iter().map(|v| fmt(*v)));
        r.extend(outputs.row(i).iter().map(|v| fmt(*v)));
        r
    });
    stage.write_csv("design.csv", &header_ref, rows)?;

    let mut rows = Vec::new();
    let mut rankings = Vec::new();
    for (q, res) in result.outputs.iter().enumerate() {
        let sd: Vec<f64> = res.sd.iter().map(|s| s.unwrap_or(0.0)).collect();
        let (ms, ss) = (min_max(&res.mean_abs), min_max(&sd));
        for i in 0..p {
            rows.push(vec![
                qoi_label(&cfg.probes[q]),
                cfg.space.names[i].clone(),
                fmt(res.mean[i]),
                fmt(res.mean_abs[i]),
                fmt_opt(res.sd[i]),
                fmt(ms[i]),
                fmt(ss[i]),
            ]);
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| res.mean_abs[b].total_cmp(&res.mean_abs[a]));
        rankings.push(order.iter().map(|&i| cfg.space.names[i].clone()).collect::<Vec<_>>());
    }
    stage.write_csv("indices.csv", &["qoi", "input", "mean", "mean_abs", "sd", "mean_abs_scaled", "sd_scaled"], rows)?;
    stage.write_timing(&json!({ "model_seconds": seconds, "evaluations": design.n_points() }))?;
    stage.finish(json!({
        "model": choice,
        "evaluations": design.n_points(),
        "delta": design.delta,
        "rankings": rankings,
        "mean_abs": result.outputs.iter().map(|r| r.mean_abs.clone()).collect::<Vec<_>>(),
    }))
}

/// Sobol indices of the configured probes, plus the time-integrated indices
/// of the last probe's component over every step when enabled.
pub fn run_sobol(cfg: &StudyConfig, choice: ModelChoice) -> Result<StageManifest> {
    cfg.validate()?;
    let n_steps = cfg.fom.n_steps()?;
    let last = *cfg.probes.last().expect("validated");
    let mut probes = cfg.probes.clone();
    if cfg.sobol.time_resolved {
        probes.extend((1..=n_steps).map(|step| Probe { step, ..last }));
    }
    let (model, model_hash) = forward_model(cfg, choice, &probes)?;
    let name = format!("sobol_{}", choice.name());
    let input = hash_json(&json!({ "stage": name, "model": model_hash, "settings": cfg.sobol, "probes": cfg.probes, "space": cfg.space, "seed": cfg.seed }));
    let mut stage = Stage::new(cfg, &name, input);
    if let Some(m) = stage.up_to_date() {
        return Ok(m);
    }
    stage.begin()?;
    let design = saltelli_design(&cfg.space, cfg.sobol.n_samples, seeds::derive(cfg.seed, "sobol"))?;
    let start = Instant::now();
    let outputs = model.evaluate_rows(&design.rows())?;
    let seconds = start.elapsed().as_secs_f64();
    let n_q = cfg.probes.len();
    let result = sobol_indices(&design, &outputs.columns(0, n_q).into_owned())?;
    let p = cfg.space.dim();
    let mut rows = Vec::new();
    for (q, s) in result.outputs.iter().enumerate() {
        for i in 0..p {
            rows.push(vec![
                qoi_label(&cfg.probes[q]),
                cfg.space.names[i].clone(),
                fmt(s.first[i]),
                fmt(s.total[i]),
                fmt(s.first_noise[i]),
                fmt(s.total_noise[i]),
            ]);
        }
    }
    stage.write_csv("indices.csv", &["qoi", "input", "first", "total", "first_noise", "total_noise"], rows)?;

    let mut integrated_final = None;
    if cfg.sobol.time_resolved {
        let per_step = sobol_indices(&design, &outputs.columns(n_q, n_steps).into_owned())?;
        let times = cfg.fom.times()?;
        let integ = time_integrated_sobol(&times, &per_step.outputs)?;
        let mut rows = Vec::new();
        for k in 0..n_steps {
            for i in 0..p {
                let s = &per_step.outputs[k];
                rows.push(vec![
                    (k + 1).to_string(),
                    fmt(times[k]),
                    cfg.space.names[i].clone(),
                    fmt(s.first[i]),
                    fmt(s.total[i]),
                    fmt_opt(integ.first[k].as_ref().map(|v| v[i])),
                    fmt_opt(integ.total[k].as_ref().map(|v| v[i])),
                ]);
            }
        }
        stage.write_csv("time_resolved.csv", &["step", "time", "input", "first", "total", "integrated_first", "integrated_total"], rows)?;
        integrated_final = integ.first.last().cloned().flatten().zip(integ.total.last().cloned().flatten());
    }
    stage.write_timing(&json!({ "model_seconds": seconds, "evaluations": design.rows().nrows() }))?;
    stage.finish(json!({
        "model": choice,
        "evaluations": design.rows().nrows(),
        "first": result.outputs.iter().map(|s| s.first.clone()).collect::<Vec<_>>(),
        "total": result.outputs.iter().map(|s| s.total.clone()).collect::<Vec<_>>(),
        "integrated_final": integrated_final,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSummary {
    pub model: ModelChoice,
    pub y_obs: Vec<f64>,
    pub target: Vec<f64>,
    pub acceptance_rate: f64,
    pub stuck: bool,
    pub n_kept: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub prior_std: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

/// Synthetic observation from the FOM at the target, then a Metropolis-Hastings
/// chain driven by the chosen model.
pub fn run_mcmc(cfg: &StudyConfig, choice: ModelChoice) -> Result<StageManifest> {
    cfg.validate()?;
    let (model, model_hash) = forward_model(cfg, choice, &cfg.probes)?;
    let name = format!("mcmc_{}", choice.name());
    let input = hash_json(&json!({ "stage": name, "model": model_hash, "fom": fom_hash(cfg), "settings": cfg.mcmc, "probes": cfg.probes, "space": cfg.space, "seed": cfg.seed }));
    let mut stage = Stage::new(cfg, &name, input);
    if let Some(m) = stage.up_to_date() {
        return Ok(m);
    }
    stage.begin()?;
    let (truth_model, _) = forward_model(cfg, ModelChoice::Fom, &cfg.probes)?;
    let clean = truth_model.evaluate(&cfg.mcmc.target)?;
    let mut noise_rng = seeds::stream(cfg.seed, "mcmc-noise");
    let sigma = cfg.mcmc.noise_variance.sqrt();
    let y_obs: Vec<f64> = clean.iter().map(|y| y + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut noise_rng)).collect();

    let prior = cfg.mcmc.prior.clone().unwrap_or_else(|| cfg.space.clone());
    let problem = InverseProblem::new(model.as_ref(), y_obs.clone(), cfg.mcmc.noise_variance, prior.clone())?;
    let chain_cfg = podgpr_core::bayes::McmcConfig { seed: seeds::derive(cfg.seed, "mcmc"), ..cfg.mcmc.chain.clone() };
    let start = Instant::now();
    let chain = metropolis_hastings(&problem, &chain_cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let summary = chain_summary(&chain.kept)?;

    let names = &cfg.space.names;
    let mut header: Vec<&str> = vec!["iteration"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["log_posterior", "accepted"]);
    let rows = (0..chain.samples.nrows()).map(|i| {
        let mut r = vec![(i + 1).to_string()];
        r.extend(chain.samples.row(i).iter().map(|v| fmt(*v)));
        r.push(fmt(chain.log_posterior[i]));
        r.push(chain.accepted[i].to_string());
        r
    });
    stage.write_csv("chain.csv", &header, rows)?;
    let kept_header: Vec<&str> = names.iter().map(String::as_str).collect();
    stage.write_csv("kept.csv", &kept_header, chain.kept.row_iter().map(|r| r.iter().map(|v| fmt(*v)).collect::<Vec<_>>()))?;
    let mut kde_rows = Vec::new();
    for (i, d) in summary.densities.iter().enumerate() {
        for (x, f) in d.grid.iter().zip(&d.density) {
            kde_rows.push(vec![names[i].clone(), fmt(*x), fmt(*f)]);
        }
    }
    stage.write_csv("density.csv", &["input", "x", "density"], kde_rows)?;
    let out = McmcSummary {
        model: choice,
        y_obs,
        target: cfg.mcmc.target.clone(),
        acceptance_rate: chain.acceptance_rate(),
        stuck: chain.is_stuck(),
        n_kept: chain.kept.nrows(),
        mean: summary.mean,
        std: summary.std,
        prior_std: (0..prior.dim()).map(|i| prior.width(i) / 12f64.sqrt()).collect(),
        q05: summary.q05,
        q50: summary.q50,
        q95: summary.q95,
    };
    stage.write_json("summary.json", &out)?;
    stage.write_timing(&json!({ "chain_seconds": seconds }))?;
    stage.finish(serde_json::to_value(&out)?)
}

/// Collects the summaries of all finished stages into `report.json` and `report.md`.
pub fn run_report(cfg: &StudyConfig) -> Result<serde_json::Value> {
    let mut report = serde_json::Map::new();
    let mut md = String::from("# Study report\n\n");
    md.push_str(&format!("seed {}, config hash `{}`\n\n", cfg.seed, cfg.hash()));
    let entries = std::fs::read_dir(&cfg.out_dir).map_err(|source| CliError::Io { path: cfg.out_dir.clone(), source })?;
    let mut names: Vec<String> = entries.filter_map(|e| e.ok()).filter(|e| e.path().join(crate::stage::MANIFEST).exists()).map(|e| e.file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    for name in names {
        let m = StageManifest::read(&cfg.out_dir.join(&name))?;
        let timing: Option<serde_json::Value> = container::read_json(&cfg.out_dir.join(&name).join(crate::stage::TIMING)).ok();
        md.push_str(&format!("## {name}\n\n```json\n{}\n```\n\n", serde_json::to_string_pretty(&m.details)?));
        if let Some(t) = &timing {
            md.push_str(&format!("timing: `{t}`\n\n"));
        }
        report.insert(name, json!({ "details": m.details, "timing": timing }));
    }
    let value = serde_json::Value::Object(report);
    container::write_json(&cfg.out_dir.join("report.json"), &value)?;
    std::fs::write(cfg.out_dir.join("report.md"), md).map_err(|source| CliError::Io { path: cfg.out_dir.join("report.md"), source })?;
    Ok(value)
}
