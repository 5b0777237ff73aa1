//! Run configuration and the orchestration behind each command.
//!
//! Every command writes into one run directory. All artifacts except
//! `timing.json` are a pure function of the configuration and seed.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::env::{action_dim, rollout, rollout_return, state_dim, write_trace_csv};
use crate::error::{Error, Result};
use crate::es::{
    ackley_peak_objective, f1_objective, f2_objective, fitness, train_task, ClrObjective,
    EsConfig, FitnessShaping, Objective, TrainRecord,
};
use crate::grid::{ieee123_analog, ieee13_analog, GridSystem};
use crate::meta::{fine_tune, greedy_controller, meta_train, warm_start_train, MetaConfig};
use crate::metrics::{
    adaptation_metrics, reliability_report, write_adaptation_table, write_reliability_table,
    AdaptationRow, ReliabilityReport, SaidiMode,
};
use crate::policy::{init_params, Checkpoint, Normalizer, PolicyParams, DEFAULT_HIDDEN};
use crate::scenario::{lookahead_steps, make_task_family, save_tasks, Scenario, Task, TaskFamilySpec};
use crate::seed::{self, domain};

/// Overrides the output directory.
pub const ENV_OUT: &str = "CLRMETA_OUT";
/// Overrides the number of worker threads.
pub const ENV_PARALLEL: &str = "CLRMETA_PARALLEL";

pub const METHOD_MGF: &str = "mgf-rl";
pub const METHOD_WARM: &str = "warm-start";
pub const METHOD_ES: &str = "es-rl";
pub const METHOD_GREEDY: &str = "greedy";
pub const METHODS: [&str; 4] = [METHOD_MGF, METHOD_WARM, METHOD_ES, METHOD_GREEDY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSweepSpec {
    pub error_levels: Vec<f64>,
    /// Lookahead lengths in hours.
    pub kappas: Vec<f64>,
}

impl Default for ForecastSweepSpec {
    fn default() -> Self {
        Self {
            error_levels: vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25],
            kappas: vec![1.0, 2.0, 4.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `ieee13`, `ieee123`, or a path to a feeder JSON file.
    pub system: String,
    pub family: TaskFamilySpec,
    /// The first `n_train` tasks of the family train; the rest test.
    pub n_train: usize,
    pub hidden: Vec<usize>,
    /// Seeds inside are replaced by values derived from `seed`.
    pub meta: MetaConfig,
    /// Also run the sequential-transfer baseline during meta-training.
    pub warm_start: bool,
    pub forecast: ForecastSweepSpec,
    pub saidi: SaidiMode,
    pub output_dir: Option<PathBuf>,
    pub parallel: Option<usize>,
    /// Optimization seed (initialization, ES noise, evaluation episodes).
    /// The task family keeps its own `family.seed`.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: "ieee13".into(),
            family: TaskFamilySpec::default(),
            n_train: crate::scenario::DEFAULT_TRAIN_SPLIT,
            hidden: DEFAULT_HIDDEN.to_vec(),
            meta: MetaConfig::default(),
            warm_start: true,
            forecast: ForecastSweepSpec::default(),
            saidi: SaidiMode::Fractional,
            output_dir: None,
            parallel: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::input(format!("config: cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn system(&self) -> Result<GridSystem> {
        match self.system.as_str() {
            "ieee13" => Ok(ieee13_analog()),
            "ieee123" => Ok(ieee123_analog()),
            path => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::input(format!("system: cannot read feeder file {path}: {e}"))
                })?;
                GridSystem::from_json(&text).map_err(|e| e.in_field("system"))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let system = self.system()?;
        self.family
            .validate(&system)
            .map_err(|e| e.in_field("family"))?;
        if self.n_train == 0 || self.n_train > self.family.count {
            return Err(Error::input(format!(
                "n_train: must lie in [1, family.count = {}], got {}",
                self.family.count, self.n_train
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::input("hidden: layer sizes must be >= 1"));
        }
        self.meta.validate().map_err(|e| e.in_field("meta"))?;
        for &xi in &self.forecast.error_levels {
            if !(0.0..=1.0).contains(&xi) {
                return Err(Error::input(format!(
                    "forecast.error_levels: {xi} outside [0, 1]"
                )));
            }
        }
        for &kappa in &self.forecast.kappas {
            lookahead_steps(kappa, self.family.tau).map_err(|e| e.in_field("forecast.kappas"))?;
        }
        if self.parallel == Some(0) {
            return Err(Error::input("parallel: must be >= 1"));
        }
        if let SaidiMode::Binary { threshold } = self.saidi {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(Error::input("saidi.threshold: must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Meta configuration with seeds derived from the run seed.
    pub fn meta_config(&self) -> MetaConfig {
        MetaConfig {
            seed: seed::derive(self.seed, &[domain::META]),
            ..self.meta.clone()
        }
    }

    /// ES settings for test-time runs on the j-th test task, shared by all methods.
    pub fn finetune_es(&self, j: usize, budget: usize) -> EsConfig {
        EsConfig {
            seed: seed::derive(self.seed, &[domain::FINETUNE, j as u64]),
            iters: budget,
            ..self.meta.es.clone()
        }
    }

    pub fn init_seed(&self) -> u64 {
        seed::derive(self.seed, &[domain::INIT])
    }

    /// Output directory: the environment override wins over the config file.
    pub fn resolve_output(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
            .or_else(|| self.output_dir.clone())
    }
}

/// Tasks plus the shared starting policy.
pub struct Prepared {
    pub tasks: Vec<Task>,
    pub n_train: usize,
    pub template: PolicyParams,
}

impl Prepared {
    pub fn train(&self) -> &[Task] {
        &self.tasks[..self.n_train]
    }

    pub fn test(&self) -> &[Task] {
        &self.tasks[self.n_train..]
    }

    pub fn objective<'a>(&self, task: &'a Task) -> ClrObjective<'a> {
        ClrObjective::new(task, self.template.shape.clone(), self.template.normalizer.clone())
    }
}

pub fn prepare(cfg: &RunConfig, family: &TaskFamilySpec) -> Result<Prepared> {
    let system = cfg.system()?;
    let tasks = make_task_family(&system, family).map_err(|e| e.in_field("family"))?;
    let first = &tasks[0];
    let mut template = init_params(state_dim(first), action_dim(&first.system), &cfg.hidden, cfg.init_seed())?;
    template.normalizer = Normalizer::for_task(first);
    Ok(Prepared {
        n_train: cfg.n_train.min(tasks.len()),
        tasks,
        template,
    })
}

/// Advisory lock on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub const FILE: &'static str = ".lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Busy(format!(
                "{} is locked; remove {} if no other command is running",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct TrainMetaOutcome {
    pub final_meta_eval: f64,
    pub manifest_sha256: String,
    pub seconds: f64,
}

/// Meta-trains on the train split and, optionally, the warm-start chain.
pub fn train_meta(cfg: &RunConfig, out: &Path) -> Result<TrainMetaOutcome> {
    let _lock = RunLock::acquire(out)?;
    let started = Instant::now();
    let prep = prepare(cfg, &cfg.family)?;
    save_tasks(&out.join("tasks.json"), &prep.tasks)?;
    let objectives: Vec<ClrObjective> = prep.train().iter().map(|t| prep.objective(t)).collect();
    let ids: Vec<String> = prep.train().iter().map(|t| t.id.clone()).collect();
    let meta_cfg = cfg.meta_config();

    let (phi, record) = meta_train(&objectives, &ids, &prep.template.theta, &meta_cfg)?;
    record.save_dir(&out.join("meta"), &prep.template)?;
    let meta_seconds = record.total_seconds();

    let mut warm_seconds = 0.0;
    if cfg.warm_start {
        let (_, warm) = warm_start_train(&objectives, &ids, &prep.template.theta, &meta_cfg)?;
        warm.save_dir(&out.join("warm_start"), &prep.template)?;
        warm_seconds = warm.total_seconds();
    }

    let eval_at = crate::es::eval_seeds(&meta_cfg.es);
    let per_task: Vec<f64> = objectives.iter().map(|o| fitness(o, &phi, &eval_at)).collect();
    let final_meta_eval = mean(&per_task);

    let manifest = json!({
        "kind": "train-meta",
        "seed": cfg.seed,
        "family_seed": cfg.family.seed,
        "system": cfg.system,
        "train_ids": ids,
        "test_ids": prep.test().iter().map(|t| t.id.clone()).collect::<Vec<_>>(),
        "meta_dir": "meta",
        "warm_start_dir": if cfg.warm_start { Some("warm_start") } else { None },
        "final_meta_eval": final_meta_eval,
        "train_eval_per_task": per_task,
        "config": cfg,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    let seconds = started.elapsed().as_secs_f64();
    write_json(
        &out.join("timing.json"),
        &json!({"train_meta_seconds": seconds, "meta_es_seconds": meta_seconds, "warm_start_es_seconds": warm_seconds}),
    )?;
    Ok(TrainMetaOutcome {
        final_meta_eval,
        manifest_sha256: sha256_hex(&fs::read(out.join("manifest.json"))?),
        seconds,
    })
}

fn load_policy(path: &Path, template: &PolicyParams) -> Result<Option<PolicyParams>> {
    if !path.exists() {
        return Ok(None);
    }
    let ck = Checkpoint::load(path)?;
    if ck.params.shape != template.shape {
        return Err(Error::input(format!(
            "checkpoint {} has shape {:?}, tasks need {:?}",
            path.display(),
            ck.params.shape,
            template.shape
        )));
    }
    Ok(Some(ck.params))
}

fn read_manifest(dir: &Path) -> Result<Option<serde_json::Value>> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

/// Learning curve and final behavior of one method on one test task.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub task: String,
    pub method: String,
    pub record: TrainRecord,
    pub reliability: ReliabilityReport,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub runs: Vec<MethodRun>,
    pub adaptation: Vec<AdaptationRow>,
    pub budget: usize,
}

impl EvalOutcome {
    pub fn adaptation_for(&self, task: &str, method: &str) -> Option<&AdaptationRow> {
        self.adaptation.iter().find(|r| r.task == task && r.method == method)
    }
}

/// Fine-tunes the meta-policy on each test task and runs the baselines on the same seeds.
pub fn finetune_eval(cfg: &RunConfig, out: &Path, budget: Option<usize>) -> Result<EvalOutcome> {
    let _lock = RunLock::acquire(out)?;
    let started = Instant::now();
    let budget = budget.unwrap_or(cfg.meta.finetune_budget);
    let prep = prepare(cfg, &cfg.family)?;
    if prep.test().is_empty() {
        return Err(Error::input("n_train: leaves no test tasks for evaluation"));
    }
    if let Some(manifest) = read_manifest(out)? {
        let trained: Vec<&str> = manifest["train_ids"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str()).collect())
            .unwrap_or_default();
        if let Some(t) = prep.test().iter().find(|t| trained.contains(&t.id.as_str())) {
            return Err(Error::input(format!("test task {} was seen during meta-training", t.id)));
        }
    }
    let meta = load_policy(&out.join("meta").join("meta_policy.json"), &prep.template)?;
    let warm = load_policy(&out.join("warm_start").join("meta_policy.json"), &prep.template)?;

    let eval_dir = out.join("eval");
    let trace_dir = eval_dir.join("traces");
    fs::create_dir_all(&trace_dir)?;
    let mut runs = Vec::new();
    let mut adaptation = Vec::new();
    for (j, task) in prep.test().iter().enumerate() {
        let es = cfg.finetune_es(j, budget);
        let obj = prep.objective(task);
        let mut starts: Vec<(&str, &PolicyParams)> = Vec::new();
        if let Some(p) = &meta {
            starts.push((METHOD_MGF, p));
        }
        if let Some(p) = &warm {
            starts.push((METHOD_WARM, p));
        }
        starts.push((METHOD_ES, &prep.template));

        let mut task_runs = Vec::new();
        for (method, start) in starts {
            let (theta, record) = fine_tune(&obj, &start.theta, budget, &es);
            let policy = prep.template.with_theta(theta)?;
            let episode = rollout(&policy, task, Scenario::Stored)?;
            let file = File::create(trace_dir.join(format!("{}_{method}.csv", task.id)))?;
            write_trace_csv(BufWriter::new(file), &episode.trace, task)?;
            task_runs.push(MethodRun {
                task: task.id.clone(),
                method: method.into(),
                record,
                reliability: reliability_report(&episode.trace, task, cfg.saidi),
            });
        }

        let seeds = crate::es::eval_seeds(&es);
        let greedy_value = if task.error_level > 0.0 {
            mean(&seeds
                .iter()
                .map(|&s| rollout_return(&greedy_controller, task, Scenario::Resample(s)))
                .collect::<Result<Vec<_>>>()?)
        } else {
            rollout_return(&greedy_controller, task, Scenario::Resample(seeds[0]))?
        };
        let episode = rollout(&greedy_controller, task, Scenario::Stored)?;
        let file = File::create(trace_dir.join(format!("{}_{METHOD_GREEDY}.csv", task.id)))?;
        write_trace_csv(BufWriter::new(file), &episode.trace, task)?;
        task_runs.push(MethodRun {
            task: task.id.clone(),
            method: METHOD_GREEDY.into(),
            record: constant_record(greedy_value, budget),
            reliability: reliability_report(&episode.trace, task, cfg.saidi),
        });

        let baseline = task_runs
            .iter()
            .find(|r| r.method == METHOD_ES)
            .expect("es-rl always runs")
            .record
            .eval_curve();
        for run in &task_runs {
            adaptation.push(AdaptationRow {
                task: run.task.clone(),
                method: run.method.clone(),
                report: adaptation_metrics(&run.record.eval_curve(), &baseline)?,
            });
        }
        runs.extend(task_runs);
    }

    write_eval_artifacts(&eval_dir, &runs, &adaptation, budget)?;
    write_json(&eval_dir.join("timing.json"), &json!({"finetune_eval_seconds": started.elapsed().as_secs_f64()}))?;
    Ok(EvalOutcome {
        runs,
        adaptation,
        budget,
    })
}

fn constant_record(value: f64, budget: usize) -> TrainRecord {
    TrainRecord {
        rows: (0..=budget)
            .map(|i| crate::es::TrainRow {
                iteration: i,
                mean_fitness: value,
                eval_fitness: value,
                best_fitness: value,
                best_iteration: 0,
            })
            .collect(),
        wall_seconds: vec![0.0; budget + 1],
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_eval_artifacts(
    dir: &Path,
    runs: &[MethodRun],
    adaptation: &[AdaptationRow],
    budget: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("adaptation.csv"))?;
    w.write_record(["task", "method", "mean_reward", "delta_init", "delta_r", "episodes_to_threshold"])?;
    for r in adaptation {
        w.write_record([
            r.task.clone(),
            r.method.clone(),
            r.report.mean_reward.to_string(),
            r.report.delta_init.to_string(),
            r.report.delta_r.to_string(),
            r.report.episodes_to_threshold.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let present: Vec<&str> = METHODS
        .iter()
        .copied()
        .filter(|m| runs.iter().any(|r| r.method == *m))
        .collect();
    write_adaptation_table(File::create(dir.join("adaptation_table.csv"))?, adaptation, &present)?;

    let mut w = csv::Writer::from_path(dir.join("reliability.csv"))?;
    w.write_record(["task", "method", "saidi_minutes", "restore_50_minutes", "restore_90_minutes", "restore_95_minutes", "pct_restored_final"])?;
    for r in runs {
        let rel = &r.reliability;
        w.write_record([
            r.task.clone(),
            r.method.clone(),
            rel.saidi_minutes.to_string(),
            fmt_opt(rel.restore_50_minutes),
            fmt_opt(rel.restore_90_minutes),
            fmt_opt(rel.restore_95_minutes),
            rel.pct_restored_final.to_string(),
        ])?;
    }
    w.flush()?;

    let by_method: Vec<(&str, Vec<ReliabilityReport>)> = present
        .iter()
        .map(|m| {
            let reps = runs.iter().filter(|r| r.method == *m).map(|r| r.reliability.clone()).collect();
            (*m, reps)
        })
        .collect();
    let columns: Vec<(&str, &[ReliabilityReport])> =
        by_method.iter().map(|(m, r)| (*m, r.as_slice())).collect();
    write_reliability_table(File::create(dir.join("reliability_table.csv"))?, &columns)?;

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["task", "method", "iteration", "eval", "best"])?;
    for r in runs {
        for row in &r.record.rows {
            w.serialize((&r.task, &r.method, row.iteration, row.eval_fitness, row.best_fitness))?;
        }
    }
    w.flush()?;

    let tasks: Vec<&str> = {
        let mut t: Vec<&str> = runs.iter().map(|r| r.task.as_str()).collect();
        t.dedup();
        t
    };
    write_json(
        &dir.join("manifest.json"),
        &json!({"kind": "finetune-eval", "budget": budget, "tasks": tasks, "methods": present}),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub error_level: f64,
    pub kappa: f64,
    pub family_seed: u64,
    /// Held-out evaluation reward of the trained policy on each test task.
    pub per_task: Vec<f64>,
    pub mean_reward: f64,
}

/// Fresh evaluation seeds, disjoint from training and selection streams.
pub fn test_seeds(cfg: &EsConfig) -> Vec<u64> {
    (0..cfg.eval_episodes as u64)
        .map(|k| seed::derive(cfg.seed, &[domain::TEST_EPISODE, k]))
        .collect()
}

/// Trains ES-RL from scratch on each test task of one (error level, lookahead) cell.
pub fn sweep_cell(cfg: &RunConfig, error_level: f64, kappa: f64) -> Result<SweepCell> {
    let family = TaskFamilySpec {
        error_level,
        kappa,
        ..cfg.family.clone()
    };
    let prep = prepare(cfg, &family)?;
    let tasks = if prep.test().is_empty() { prep.train() } else { prep.test() };
    let mut per_task = Vec::with_capacity(tasks.len());
    for (j, task) in tasks.iter().enumerate() {
        let es = cfg.finetune_es(j, cfg.meta.es.iters);
        let obj = prep.objective(task);
        let (theta, _) = train_task(&obj, &prep.template.theta, &es);
        per_task.push(fitness(&obj, &theta, &test_seeds(&es)));
    }
    Ok(SweepCell {
        error_level,
        kappa,
        family_seed: family.seed,
        mean_reward: mean(&per_task),
        per_task,
    })
}

pub fn sweep(cfg: &RunConfig, out: &Path, error_levels: &[f64], kappas: &[f64]) -> Result<Vec<SweepCell>> {
    let _lock = RunLock::acquire(out)?;
    let started = Instant::now();
    if error_levels.is_empty() || kappas.is_empty() {
        return Err(Error::input("sweep needs at least one error level and one lookahead"));
    }
    let probe = RunConfig {
        forecast: ForecastSweepSpec {
            error_levels: error_levels.to_vec(),
            kappas: kappas.to_vec(),
        },
        ..cfg.clone()
    };
    probe.validate()?;
    let mut cells = Vec::new();
    for &xi in error_levels {
        for &kappa in kappas {
            cells.push(sweep_cell(cfg, xi, kappa)?);
        }
    }
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["error_level", "kappa", "task_index", "reward"])?;
    for c in &cells {
        for (j, r) in c.per_task.iter().enumerate() {
            w.serialize((c.error_level, c.kappa, j, r))?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("sweep_grid.csv"))?;
    let mut header = vec!["error_pct".to_string()];
    header.extend(kappas.iter().map(|k| format!("kappa_{k}h")));
    w.write_record(&header)?;
    for &xi in error_levels {
        let mut row = vec![format!("{}", (xi * 100.0).round())];
        for &kappa in kappas {
            let c = cells.iter().find(|c| c.error_level == xi && c.kappa == kappa).unwrap();
            row.push(format!("{:.4}", c.mean_reward));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    write_json(
        &out.join("manifest.json"),
        &json!({
            "kind": "sweep",
            "seed": cfg.seed,
            "cells": cells.iter().map(|c| json!({
                "error_level": c.error_level,
                "kappa": c.kappa,
                "family_seed": c.family_seed,
                "mean_reward": c.mean_reward,
            })).collect::<Vec<_>>(),
            "config": probe,
        }),
    )?;
    write_json(&out.join("timing.json"), &json!({"sweep_seconds": started.elapsed().as_secs_f64()}))?;
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub name: String,
    pub start: Vec<f64>,
    pub best_fitness: f64,
    pub optimum: f64,
    pub best_point: Vec<f64>,
}

/// Settings used for the two benchmark functions.
pub fn bench_configs(seed: u64) -> (EsConfig, EsConfig) {
    let f1 = EsConfig {
        n: 50,
        sigma: 0.1,
        alpha: 0.1,
        iters: 300,
        fitness_shaping: FitnessShaping::None,
        mirrored: true,
        seed,
        ..EsConfig::default()
    };
    let ackley = EsConfig {
        n: 50,
        sigma: 0.5,
        alpha: 0.05,
        iters: 300,
        fitness_shaping: FitnessShaping::CenteredRank,
        mirrored: true,
        seed,
        ..EsConfig::default()
    };
    (f1, ackley)
}

/// Runs the benchmark functions and writes their curves.
pub fn bench(out: &Path, seed: u64) -> Result<Vec<BenchResult>> {
    let _lock = RunLock::acquire(out)?;
    let started = Instant::now();
    let (f1_cfg, ackley_cfg) = bench_configs(seed);
    let mut results = Vec::new();
    let mut run = |name: &str, obj: &dyn DynObjective, start: Vec<f64>, cfg: &EsConfig, optimum: f64| -> Result<()> {
        let (best, record) = obj.train(&start, cfg);
        record.write_csv(File::create(out.join(format!("bench_{name}.csv")))?)?;
        results.push(BenchResult {
            name: name.into(),
            start,
            best_fitness: record.best_fitness(),
            optimum,
            best_point: best,
        });
        Ok(())
    };
    run("f1", &f1_objective(), vec![3.0], &f1_cfg, 10.0)?;
    run("ackley_peak", &ackley_peak_objective(), vec![3.0, -2.5], &ackley_cfg, 100.0)?;
    // The expression as printed has its minimum at the origin; maximizing it
    // is recorded for completeness.
    run("f2_as_printed", &f2_objective(), vec![3.0, -2.5], &ackley_cfg, f64::INFINITY)?;
    write_json(&out.join("bench.json"), &results)?;
    write_json(&out.join("manifest.json"), &json!({"kind": "bench", "seed": seed}))?;
    write_json(&out.join("timing.json"), &json!({"bench_seconds": started.elapsed().as_secs_f64()}))?;
    Ok(results)
}

/// Object-safe adapter so differently typed objectives share one code path.
trait DynObjective {
    fn train(&self, start: &[f64], cfg: &EsConfig) -> (Vec<f64>, TrainRecord);
}

impl<O: Objective> DynObjective for O {
    fn train(&self, start: &[f64], cfg: &EsConfig) -> (Vec<f64>, TrainRecord) {
        train_task(self, start, cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub files: Vec<String>,
}

/// Derives plot-ready tables from a finished run directory into `report/`.
pub fn report(run_dir: &Path) -> Result<ReportSummary> {
    if read_manifest(run_dir)?.is_none() {
        return Err(Error::input(format!(
            "{} has no manifest.json; not a run directory",
            run_dir.display()
        )));
    }
    let _lock = RunLock::acquire(run_dir)?;
    let out = run_dir.join("report");
    if out.exists() {
        fs::remove_dir_all(&out)?;
    }
    fs::create_dir_all(&out)?;
    let mut files = Vec::new();

    let meta_curves = run_dir.join("meta").join("curves.csv");
    if meta_curves.exists() {
        let mut r = csv::Reader::from_path(&meta_curves)?;
        let mut w = csv::Writer::from_path(out.join("curves.csv"))?;
        w.write_record(["task", "iteration", "mean", "best"])?;
        for rec in r.records() {
            let rec = rec?;
            w.write_record([&rec[0], &rec[1], &rec[2], &rec[4]])?;
        }
        w.flush()?;
        files.push("curves.csv".to_string());
    }

    for (src, dst) in [
        ("eval/curves.csv", "adaptation_curves.csv"),
        ("eval/adaptation_table.csv", "table_adaptation.csv"),
        ("eval/reliability_table.csv", "table_reliability.csv"),
        ("sweep_grid.csv", "table_forecast.csv"),
    ] {
        let p = run_dir.join(src);
        if p.exists() {
            fs::copy(&p, out.join(dst))?;
            files.push(dst.to_string());
        }
    }

    let trace_dir = run_dir.join("eval").join("traces");
    if trace_dir.exists() {
        let tasks: Vec<Task> = crate::scenario::load_tasks(&run_dir.join("tasks.json"))?;
        let demand: BTreeMap<(String, String), f64> = tasks
            .iter()
            .flat_map(|t| {
                t.system
                    .loads
                    .loads
                    .iter()
                    .map(move |l| ((t.id.clone(), l.id.clone()), l.demand_p))
            })
            .collect();
        let mut names: Vec<PathBuf> = fs::read_dir(&trace_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        names.sort();
        let mut heat = csv::Writer::from_path(out.join("heatmap.csv"))?;
        heat.write_record(["task", "method", "load", "t", "served_fraction"])?;
        let mut dispatch = csv::Writer::from_path(out.join("dispatch.csv"))?;
        dispatch.write_record(["task", "method", "device", "t", "p_kw"])?;
        for path in names {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let Some((task, method)) = stem.split_once('_') else {
                return Err(Error::input(format!("unexpected trace file name {}", path.display())));
            };
            let mut r = csv::Reader::from_path(&path)?;
            let header = r.headers()?.clone();
            for rec in r.records() {
                let rec = rec?;
                let t = &rec[0];
                for (k, col) in header.iter().enumerate() {
                    if let Some(load) = col.strip_prefix("served_") {
                        let d = demand.get(&(task.to_string(), load.to_string())).ok_or_else(|| {
                            Error::input(format!("trace {} names unknown load {load}", path.display()))
                        })?;
                        let served: f64 = rec[k].parse().map_err(|_| Error::input("non-numeric trace value"))?;
                        heat.write_record([task, method, load, t, &(served / d).to_string()])?;
                    } else if let Some(dev) = col.strip_prefix("p_") {
                        dispatch.write_record([task, method, dev, t, &rec[k]])?;
                    }
                }
            }
        }
        heat.flush()?;
        dispatch.flush()?;
        files.push("heatmap.csv".to_string());
        files.push("dispatch.csv".to_string());
    }
    files.sort();
    write_json(&out.join("summary.json"), &json!({"files": files}))?;
    Ok(ReportSummary { files })
}
