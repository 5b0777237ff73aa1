//! Sequential first-order meta-training, fine-tuning and the baselines.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{ActionBounds, Action, EnvState};
use crate::error::{Error, Result};
use crate::es::{train_task, EsConfig, Objective, TrainRecord};
use crate::policy::{Checkpoint, PolicyParams};
use crate::scenario::Task;
use crate::seed::{self, domain};

/// Meta-rate `eta_m` for the m-th task (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EtaSchedule {
    Constant {
        eta: f64,
    },
    #[default]
    InverseM,
    InverseSqrtM,
}

impl EtaSchedule {
    pub fn eta(&self, m: usize) -> f64 {
        let m = m.max(1) as f64;
        match *self {
            Self::Constant { eta } => eta,
            Self::InverseM => 1.0 / m,
            Self::InverseSqrtM => 1.0 / m.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Constant { eta } = *self {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::input(format!("meta.eta = {eta} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    /// Within-task optimizer; its seed is replaced per task.
    pub es: EsConfig,
    pub eta: EtaSchedule,
    /// Fine-tuning iterations on each test task.
    pub finetune_budget: usize,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            es: EsConfig::default(),
            eta: EtaSchedule::InverseM,
            finetune_budget: 10,
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.es.validate()?;
        self.eta.validate()
    }

    /// ES settings for the m-th task (0-based), with its own noise streams.
    pub fn task_es(&self, m: usize) -> EsConfig {
        EsConfig {
            seed: seed::derive(self.seed, &[domain::META, m as u64]),
            ..self.es.clone()
        }
    }
}

/// `phi0 + eta * (phi_hat - phi0)`; `eta == 1` returns `phi_hat` bit-exactly.
pub fn meta_update_vec(phi0: &[f64], phi_hat: &[f64], eta: f64) -> Vec<f64> {
    if eta == 1.0 {
        return phi_hat.to_vec();
    }
    phi0.iter()
        .zip(phi_hat)
        .map(|(a, b)| a + eta * (b - a))
        .collect()
}

pub fn meta_update(phi0: &PolicyParams, phi_hat: &PolicyParams, eta: f64) -> Result<PolicyParams> {
    if phi0.shape != phi_hat.shape {
        return Err(Error::input(format!(
            "meta update between shapes {:?} and {:?}",
            phi0.shape, phi_hat.shape
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::input(format!("meta rate {eta} must lie in (0, 1]")));
    }
    phi0.with_theta(meta_update_vec(&phi0.theta, &phi_hat.theta, eta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTaskEntry {
    pub task_id: String,
    pub eta: f64,
    pub es_seed: u64,
    /// Initialization handed to this task.
    pub phi_start: Vec<f64>,
    /// Best parameters found on this task.
    pub phi_hat: Vec<f64>,
    pub record: TrainRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub entries: Vec<MetaTaskEntry>,
    /// Initialization after the last meta-update; the returned meta-policy.
    pub final_params: Vec<f64>,
}

impl MetaRecord {
    /// Adapted parameters of the last task.
    pub fn last_adapted(&self) -> Option<&[f64]> {
        self.entries.last().map(|e| e.phi_hat.as_slice())
    }

    pub fn total_seconds(&self) -> f64 {
        self.entries.iter().map(|e| e.record.total_seconds()).sum()
    }

    /// Writes `manifest.json`, `curves.csv` and one checkpoint pair per task.
    pub fn save_dir(&self, dir: &Path, template: &PolicyParams) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let ckpt = |theta: &[f64], note: String| -> Result<Checkpoint> {
            Ok(Checkpoint {
                params: template.with_theta(theta.to_vec())?,
                lineage: vec![note],
            })
        };
        let mut tasks = Vec::new();
        for (m, e) in self.entries.iter().enumerate() {
            let start = format!("task{m:03}_start.json");
            let adapted = format!("task{m:03}_adapted.json");
            ckpt(&e.phi_start, format!("start of task {} (position {m})", e.task_id))?
                .save(&dir.join(&start))?;
            ckpt(&e.phi_hat, format!("adapted on task {} with es seed {}", e.task_id, e.es_seed))?
                .save(&dir.join(&adapted))?;
            tasks.push(serde_json::json!({
                "task_id": e.task_id,
                "eta": e.eta,
                "es_seed": e.es_seed,
                "iterations": e.record.rows.len().saturating_sub(1),
                "initial_eval": e.record.initial_eval(),
                "best_fitness": e.record.best_fitness(),
                "start_checkpoint": start,
                "adapted_checkpoint": adapted,
            }));
        }
        ckpt(&self.final_params, "meta-policy after the last meta-update".into())?
            .save(&dir.join("meta_policy.json"))?;
        let manifest = serde_json::json!({
            "kind": "meta-record",
            "tasks": tasks,
            "meta_policy": "meta_policy.json",
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
        w.write_record(["task", "iteration", "mean", "eval", "best"])?;
        for e in &self.entries {
            for r in &e.record.rows {
                w.serialize((&e.task_id, r.iteration, r.mean_fitness, r.eval_fitness, r.best_fitness))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_family<O: Objective>(objectives: &[O], ids: &[String], phi0: &[f64]) -> Result<()> {
    if objectives.is_empty() {
        return Err(Error::input("meta-training needs at least one task"));
    }
    if ids.len() != objectives.len() {
        return Err(Error::input("one task id per objective"));
    }
    if let Some(o) = objectives.iter().find(|o| o.dim() != phi0.len()) {
        return Err(Error::input(format!(
            "objective dimension {} differs from the initialization's {}",
            o.dim(),
            phi0.len()
        )));
    }
    Ok(())
}

/// Threads one parameter vector through the tasks in order.
pub fn meta_train<O: Objective>(
    objectives: &[O],
    ids: &[String],
    phi0: &[f64],
    cfg: &MetaConfig,
) -> Result<(Vec<f64>, MetaRecord)> {
    cfg.validate()?;
    check_family(objectives, ids, phi0)?;
    let mut phi = phi0.to_vec();
    let mut entries = Vec::with_capacity(objectives.len());
    for (m, (obj, id)) in objectives.iter().zip(ids).enumerate() {
        let es = cfg.task_es(m);
        let (phi_hat, record) = train_task(obj, &phi, &es);
        let eta = cfg.eta.eta(m + 1);
        let next = meta_update_vec(&phi, &phi_hat, eta);
        entries.push(MetaTaskEntry {
            task_id: id.clone(),
            eta,
            es_seed: es.seed,
            phi_start: std::mem::replace(&mut phi, next),
            phi_hat,
            record,
        });
    }
    let record = MetaRecord {
        entries,
        final_params: phi.clone(),
    };
    Ok((phi, record))
}

/// Sequential transfer: each task starts from the previous task's result.
pub fn warm_start_train<O: Objective>(
    objectives: &[O],
    ids: &[String],
    phi0: &[f64],
    cfg: &MetaConfig,
) -> Result<(Vec<f64>, MetaRecord)> {
    let cfg = MetaConfig {
        eta: EtaSchedule::Constant { eta: 1.0 },
        ..cfg.clone()
    };
    meta_train(objectives, ids, phi0, &cfg)
}

/// Test-time adaptation from `phi` for `budget` iterations.
pub fn fine_tune(
    objective: &impl Objective,
    phi: &[f64],
    budget: usize,
    es: &EsConfig,
) -> (Vec<f64>, TrainRecord) {
    let es = EsConfig {
        iters: budget,
        ..es.clone()
    };
    train_task(objective, phi, &es)
}

/// Serves `available` kW in descending priority (ties: larger demand, then
/// lower index), filling each load before the next.
pub fn allocate_by_priority(available: f64, loads: &[(f64, f64)]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..loads.len()).collect();
    order.sort_by(|&a, &b| {
        loads[b]
            .0
            .total_cmp(&loads[a].0)
            .then(loads[b].1.total_cmp(&loads[a].1))
            .then(a.cmp(&b))
    });
    let mut left = available.max(0.0);
    let mut out = vec![0.0; loads.len()];
    for i in order {
        let served = loads[i].1.min(left);
        out[i] = served;
        left -= served;
    }
    out
}

/// Rule-based controller used as a non-learned baseline.
///
/// Renewables run at their current availability and fuel at its feasible
/// maximum. Storage discharges fully when the mean renewable forecast over
/// the lookahead is below the load served last step; otherwise it absorbs
/// whatever generation exceeds total demand. Generation is then allocated to
/// loads by priority. Angles sit at the midpoint of their bounds.
pub fn greedy_dispatch(state: &EnvState, task: &Task) -> Action {
    let sys = &task.system;
    let bounds = ActionBounds::new(state, task);
    let h = task.lookahead_steps();
    let n_ren = sys.fleet.renewables().count();
    let renewable_now: f64 = (0..n_ren).map(|k| state.forecast[k * h]).sum();
    let renewable_ahead = if n_ren == 0 {
        0.0
    } else {
        state.forecast.iter().sum::<f64>() / h as f64
    };
    let fuel_p: Vec<f64> = bounds.fuel.iter().map(|b| b.hi).collect();
    let base = renewable_now + fuel_p.iter().sum::<f64>();
    let demand: f64 = sys.loads.loads.iter().map(|l| l.demand_p).sum();
    let served_last: f64 = state.prev_served.iter().sum();

    let mut storage_p = vec![0.0; bounds.storage.len()];
    if renewable_ahead < served_last {
        for (p, b) in storage_p.iter_mut().zip(&bounds.storage) {
            *p = b.hi;
        }
    } else {
        let mut surplus = base - demand;
        for (p, b) in storage_p.iter_mut().zip(&bounds.storage) {
            if surplus <= 0.0 {
                break;
            }
            let charge = surplus.min(-b.lo);
            *p = -charge;
            surplus -= charge;
        }
    }
    let discharge: f64 = storage_p.iter().filter(|p| **p > 0.0).sum();
    let loads: Vec<(f64, f64)> = sys.loads.loads.iter().map(|l| (l.priority, l.demand_p)).collect();
    let load_levels = allocate_by_priority(base + discharge, &loads);
    let angles = sys
        .fleet
        .angle_controlled()
        .into_iter()
        .map(|i| sys.fleet.ders[i].angle_mid())
        .collect();
    Action {
        load_levels,
        storage_p,
        fuel_p,
        angles,
    }
}

/// Helper: [`greedy_dispatch`] as an environment controller.
pub fn greedy_controller(state: &EnvState, task: &Task) -> crate::env::Command {
    crate::env::Command::Dispatch(greedy_dispatch(state, task))
}

/// `-||phi - center||^2`, maximized at `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTask {
    pub center: Vec<f64>,
}

impl Objective for QuadraticTask {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn evaluate(&self, theta: &[f64], _episode_seed: u64) -> f64 {
        -theta
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
    }
}

/// Centers drawn i.i.d. as `mean + spread * N(0, I)`.
pub fn quadratic_family(count: usize, mean: &[f64], spread: f64, seed: u64) -> Vec<QuadraticTask> {
    (0..count)
        .map(|m| {
            let mut rng = seed::rng_for(seed, &[domain::TASK, m as u64]);
            let center = mean
                .iter()
                .map(|mu| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + spread * z
                })
                .collect();
            QuadraticTask { center }
        })
        .collect()
}

/// Centers alternating between `a` and `b`, starting with `a`.
pub fn alternating_family(count: usize, a: &[f64], b: &[f64]) -> Vec<QuadraticTask> {
    (0..count)
        .map(|m| QuadraticTask {
            center: if m % 2 == 0 { a.to_vec() } else { b.to_vec() },
        })
        .collect()
}

pub fn task_ids(count: usize) -> Vec<String> {
    (0..count).map(|m| format!("task{m:03}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, rollout};
    use crate::es::FitnessShaping;
    use crate::fixtures::micro_task;
    use crate::policy::{init_params, param_distance, Normalizer};
    use crate::scenario::Scenario;

    fn quad_cfg(iters: usize, seed: u64) -> MetaConfig {
        MetaConfig {
            es: EsConfig {
                n: 10,
                sigma: 0.1,
                alpha: 0.05,
                iters,
                fitness_shaping: FitnessShaping::None,
                ..EsConfig::default()
            },
            seed,
            ..MetaConfig::default()
        }
    }

    #[test]
    fn meta_update_examples() {
        let p = |t: Vec<f64>| PolicyParams::new(vec![1, 1], t, Normalizer::identity(1)).unwrap();
        let out = meta_update(&p(vec![0.0, 0.0]), &p(vec![1.0, 2.0]), 0.5).unwrap();
        assert_eq!(out.theta, vec![0.5, 1.0]);
        let hat = p(vec![0.1, 0.7]);
        assert_eq!(meta_update(&p(vec![0.3, -2.0]), &hat, 1.0).unwrap().theta, hat.theta);
        let tiny = meta_update(&p(vec![0.3, -2.0]), &hat, 1e-300).unwrap();
        assert_eq!(tiny.theta, vec![0.3, -2.0]);
        assert!(meta_update(&p(vec![0.0, 0.0]), &hat, 0.0).is_err());
        let other = PolicyParams::new(vec![2, 1], vec![0.0; 3], Normalizer::identity(2)).unwrap();
        assert!(meta_update(&p(vec![0.0, 0.0]), &other, 0.5).is_err());
    }

    #[test]
    fn eta_schedules() {
        assert_eq!(EtaSchedule::InverseM.eta(4), 0.25);
        assert_eq!(EtaSchedule::InverseSqrtM.eta(4), 0.5);
        assert_eq!(EtaSchedule::Constant { eta: 0.3 }.eta(9), 0.3);
        assert!(EtaSchedule::Constant { eta: 1.5 }.validate().is_err());
    }

    #[test]
    fn single_task_collapses() {
        let tasks = quadratic_family(1, &[1.0, -1.0], 0.5, 3);
        let cfg = MetaConfig {
            eta: EtaSchedule::InverseM,
            ..quad_cfg(20, 1)
        };
        let (phi, rec) = meta_train(&tasks, &task_ids(1), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(phi, rec.entries[0].phi_hat);
        let (plain, _) = train_task(&tasks[0], &[0.0, 0.0], &cfg.task_es(0));
        assert_eq!(phi, plain);
    }

    #[test]
    fn threading_and_determinism() {
        let tasks = quadratic_family(5, &[0.5, 0.5, 0.5], 0.3, 8);
        let cfg = quad_cfg(10, 4);
        let (phi, a) = meta_train(&tasks, &task_ids(5), &[0.0; 3], &cfg).unwrap();
        let (_, b) = meta_train(&tasks, &task_ids(5), &[0.0; 3], &cfg).unwrap();
        assert_eq!(a, b);
        for w in a.entries.windows(2) {
            assert_eq!(w[1].phi_start, meta_update_vec(&w[0].phi_start, &w[0].phi_hat, w[0].eta));
        }
        let last = a.entries.last().unwrap();
        assert_eq!(phi, meta_update_vec(&last.phi_start, &last.phi_hat, last.eta));
    }

    #[test]
    fn repeated_task_converges_monotonically() {
        let task = QuadraticTask {
            center: vec![2.0, -1.0],
        };
        let tasks = vec![task.clone(); 8];
        let (_, rec) = meta_train(&tasks, &task_ids(8), &[0.0, 0.0], &quad_cfg(5, 2)).unwrap();
        let dist: Vec<f64> = rec
            .entries
            .iter()
            .map(|e| -task.evaluate(&e.phi_start, 0))
            .chain([-task.evaluate(&rec.final_params, 0)])
            .collect();
        for w in dist.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{dist:?}");
        }
        assert!(dist.last().unwrap() < &(dist[0] * 0.5));
    }

    #[test]
    fn warm_start_is_unit_rate_meta_training() {
        let tasks = quadratic_family(4, &[0.0, 1.0], 1.0, 5);
        let cfg = quad_cfg(8, 6);
        let (a, ra) = warm_start_train(&tasks, &task_ids(4), &[0.0, 0.0], &cfg).unwrap();
        let forced = MetaConfig {
            eta: EtaSchedule::Constant { eta: 1.0 },
            ..cfg.clone()
        };
        let (b, rb) = meta_train(&tasks, &task_ids(4), &[0.0, 0.0], &forced).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(a, ra.entries[3].phi_hat);
    }

    #[test]
    fn warm_start_tracks_recent_task() {
        let tasks = alternating_family(6, &[3.0, 0.0], &[-3.0, 0.0]);
        let cfg = quad_cfg(30, 9);
        let (warm, _) = warm_start_train(&tasks, &task_ids(6), &[0.0, 0.0], &cfg).unwrap();
        let (meta, _) = meta_train(&tasks, &task_ids(6), &[0.0, 0.0], &cfg).unwrap();
        let recent = &tasks[5];
        assert!(recent.evaluate(&warm, 0) > recent.evaluate(&meta, 0));
    }

    #[test]
    fn fine_tune_zero_budget_and_planted_optimum() {
        let task = QuadraticTask { center: vec![1.0, 2.0] };
        let es = quad_cfg(0, 0).es;
        let (phi, rec) = fine_tune(&task, &[0.5, 0.5], 0, &es);
        assert_eq!(phi, vec![0.5, 0.5]);
        assert_eq!(rec.rows.len(), 1);
        let (phi, rec) = fine_tune(&task, &[1.0, 2.0], 10, &es);
        assert_eq!(phi, vec![1.0, 2.0]);
        assert!(rec.rows.iter().all(|r| r.best_fitness == 0.0));
    }

    #[test]
    fn mismatched_family_is_rejected() {
        let tasks = quadratic_family(2, &[0.0, 0.0], 1.0, 0);
        assert!(meta_train(&tasks, &task_ids(2), &[0.0], &quad_cfg(1, 0)).is_err());
        let none: Vec<QuadraticTask> = vec![];
        assert!(meta_train(&none, &[], &[0.0], &quad_cfg(1, 0)).is_err());
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_by_priority(200.0, &[(1.0, 150.0), (0.5, 100.0)]), vec![150.0, 50.0]);
        assert_eq!(allocate_by_priority(0.0, &[(1.0, 150.0), (0.5, 100.0)]), vec![0.0, 0.0]);
        assert_eq!(allocate_by_priority(100.0, &[(0.7, 50.0), (0.7, 100.0)]), vec![0.0, 100.0]);
    }

    #[test]
    fn greedy_on_micro_task() {
        let task = micro_task(&[(1.0, 150.0), (0.5, 100.0)], 4, 200.0 / 12.0);
        let state = reset(&task);
        let a = greedy_dispatch(&state, &task);
        assert!((a.fuel_p[0] - 200.0).abs() < 1e-9);
        assert!((a.load_levels[0] - 150.0).abs() < 1e-9);
        assert!((a.load_levels[1] - 50.0).abs() < 1e-9);
        assert_eq!(ActionBounds::new(&state, &task).clip(&a), a);

        let mut dry = reset(&task);
        dry.fuel = vec![0.0];
        let a = greedy_dispatch(&dry, &task);
        assert!(a.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn greedy_is_feasible_through_an_episode() {
        let sys = crate::grid::ieee13_analog();
        let spec = crate::scenario::TaskFamilySpec {
            count: 1,
            horizon: 24,
            ..Default::default()
        };
        let task = crate::scenario::make_task_family(&sys, &spec).unwrap().remove(0);
        let mut env = crate::env::Environment::new(&task, Scenario::Stored);
        let mut total = 0.0;
        while !env.done() {
            let action = greedy_dispatch(env.state(), &task);
            assert_eq!(ActionBounds::new(env.state(), &task).clip(&action), action);
            let raw = action.to_raw(&task);
            total += env.step(&raw).unwrap().reward;
        }
        let ep = rollout(&greedy_controller, &task, Scenario::Stored).unwrap();
        assert!(ep.total_reward.is_finite() && total.is_finite());
    }

    #[test]
    fn param_distance_used_by_meta_snapshots() {
        let p = init_params(3, 2, &[4], 1).unwrap();
        let q = p.with_theta(meta_update_vec(&p.theta, &vec![0.0; p.theta.len()], 0.5)).unwrap();
        let full = 0.5 * p.theta.iter().map(|x| x * x).sum::<f64>();
        assert!((param_distance(&p, &q).unwrap() - 0.25 * full).abs() < 1e-12);
    }
}
