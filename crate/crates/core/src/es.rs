//! Evolution-strategies optimizer over flat parameter vectors.

use std::io::Write;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::rollout_return;
use crate::error::{Error, Result};
use crate::policy::{Normalizer, PolicyView};
use crate::scenario::{Scenario, Task};
use crate::seed::{self, domain};

pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitnessShaping {
    /// Raw fitness values.
    None,
    /// Ranks mapped linearly onto `[-0.5, 0.5]`, ties averaged.
    #[default]
    CenteredRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    /// Population size.
    pub n: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub iters: usize,
    /// Rollouts averaged per fitness evaluation of an episodic objective.
    pub eval_episodes: usize,
    pub fitness_shaping: FitnessShaping,
    pub mirrored: bool,
    pub seed: u64,
    /// Evaluate the population on the rayon pool. Never changes results.
    pub parallel: bool,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            n: 20,
            sigma: DEFAULT_SIGMA,
            alpha: DEFAULT_ALPHA,
            iters: 40,
            eval_episodes: 1,
            fitness_shaping: FitnessShaping::CenteredRank,
            mirrored: true,
            seed: 0,
            parallel: true,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::input("es.n must be >= 2"));
        }
        if self.mirrored && !self.n.is_multiple_of(2) {
            return Err(Error::input("es.n must be even when mirrored sampling is on"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::input("es.sigma must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::input("es.alpha must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::input("es.eval_episodes must be >= 1"));
        }
        Ok(())
    }

    /// Step size and smoothing prescribed by the ES convergence bound for an
    /// objective with known Lipschitz constant `lipschitz` and accuracy `epsilon`.
    pub fn theory_schedule(&self, dim: usize, lipschitz: f64, epsilon: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && epsilon > 0.0) || dim == 0 {
            return Err(Error::input("theory schedule needs dim >= 1, L > 0 and epsilon > 0"));
        }
        let d = dim as f64;
        let iters = self.iters as f64;
        Ok(Self {
            alpha: 1.0 / ((d + 4.0) * (iters + 1.0).sqrt() * lipschitz),
            sigma: epsilon / (2.0 * lipschitz * d.sqrt()),
            ..self.clone()
        })
    }
}

/// Something ES can maximize.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// Fitness of `theta` for one episode. Deterministic objectives ignore the seed.
    fn evaluate(&self, theta: &[f64], episode_seed: u64) -> f64;
    /// Whether fitness depends on the episode seed.
    fn episodic(&self) -> bool {
        false
    }
}

/// Deterministic objective from a closure.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, theta: &[f64], _episode_seed: u64) -> f64 {
        (self.f)(theta)
    }
}

pub fn bench_f1(x: f64) -> f64 {
    -x * x + 10.0
}

/// `100 + ackley(x, y)`: this expression has its global minimum, 100, at the origin.
pub fn bench_f2(x: f64, y: f64) -> f64 {
    use std::f64::consts::{E, PI};
    100.0 - 20.0 * (-0.2 * (0.5 * (x * x + y * y)).sqrt()).exp()
        - (0.5 * ((2.0 * PI * x).cos() + (2.0 * PI * y).cos())).exp()
        + E
        + 20.0
}

/// `100 - ackley(x, y)`: global maximum 100 at the origin.
pub fn ackley_peak(x: f64, y: f64) -> f64 {
    200.0 - bench_f2(x, y)
}

pub fn f1_objective() -> FnObjective<impl Fn(&[f64]) -> f64 + Sync> {
    FnObjective::new(1, |x: &[f64]| bench_f1(x[0]))
}

pub fn f2_objective() -> FnObjective<impl Fn(&[f64]) -> f64 + Sync> {
    FnObjective::new(2, |x: &[f64]| bench_f2(x[0], x[1]))
}

pub fn ackley_peak_objective() -> FnObjective<impl Fn(&[f64]) -> f64 + Sync> {
    FnObjective::new(2, |x: &[f64]| ackley_peak(x[0], x[1]))
}

/// Episode return of a policy on one task.
pub struct ClrObjective<'a> {
    pub task: &'a Task,
    pub shape: Vec<usize>,
    pub normalizer: Normalizer,
}

impl<'a> ClrObjective<'a> {
    pub fn new(task: &'a Task, shape: Vec<usize>, normalizer: Normalizer) -> Self {
        Self {
            task,
            shape,
            normalizer,
        }
    }
}

impl Objective for ClrObjective<'_> {
    fn dim(&self) -> usize {
        crate::policy::param_count(&self.shape)
    }

    fn evaluate(&self, theta: &[f64], episode_seed: u64) -> f64 {
        let policy = PolicyView {
            shape: &self.shape,
            theta,
            normalizer: &self.normalizer,
        };
        rollout_return(&policy, self.task, Scenario::Resample(episode_seed))
            .expect("policy dimensions match the task")
    }

    fn episodic(&self) -> bool {
        self.task.error_level > 0.0
    }
}

/// Centered ranks in `[-0.5, 0.5]`; tied values share their mean rank.
pub fn centered_ranks(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && fitness[order[j + 1]] == fitness[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean_rank / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks
}

/// `g = (1/(n sigma)) * sum_i shaped(F)_i * eps_i`.
///
/// Panics if `fitness` and `perturbations` differ in length or `sigma <= 0`.
pub fn es_gradient_estimate(
    fitness: &[f64],
    perturbations: &[Vec<f64>],
    sigma: f64,
    shaping: FitnessShaping,
) -> Vec<f64> {
    assert_eq!(fitness.len(), perturbations.len(), "one fitness per perturbation");
    assert!(sigma > 0.0, "sigma must be positive");
    let n = fitness.len();
    let dim = perturbations.first().map_or(0, Vec::len);
    let weights = match shaping {
        FitnessShaping::None => fitness.to_vec(),
        FitnessShaping::CenteredRank => centered_ranks(fitness),
    };
    let mut g = vec![0.0; dim];
    for (w, eps) in weights.iter().zip(perturbations) {
        for (gi, e) in g.iter_mut().zip(eps) {
            *gi += w * e;
        }
    }
    let scale = 1.0 / (n as f64 * sigma);
    g.iter_mut().for_each(|gi| *gi *= scale);
    g
}

/// Standard-normal perturbations for one iteration, `(eps, -eps)` adjacent when mirrored.
pub fn sample_perturbations(dim: usize, cfg: &EsConfig, iteration: u64) -> Vec<Vec<f64>> {
    let draws = if cfg.mirrored { cfg.n / 2 } else { cfg.n };
    let mut out = Vec::with_capacity(cfg.n);
    for k in 0..draws {
        let mut rng = seed::rng_for(cfg.seed, &[domain::PERTURBATION, iteration, k as u64]);
        let eps: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if cfg.mirrored {
            let neg = eps.iter().map(|e| -e).collect();
            out.push(eps);
            out.push(neg);
        } else {
            out.push(eps);
        }
    }
    out
}

fn episode_seeds(cfg: &EsConfig, stream: u64, iteration: u64) -> Vec<u64> {
    (0..cfg.eval_episodes as u64)
        .map(|j| seed::derive(cfg.seed, &[stream, iteration, j]))
        .collect()
}

/// Held-out episode seeds used for best-model selection.
pub fn eval_seeds(cfg: &EsConfig) -> Vec<u64> {
    episode_seeds(cfg, domain::EVAL_EPISODE, 0)
}

/// Mean fitness over `seeds` (a single call for deterministic objectives).
pub fn fitness(objective: &impl Objective, theta: &[f64], seeds: &[u64]) -> f64 {
    if objective.episodic() {
        seeds.iter().map(|&s| objective.evaluate(theta, s)).sum::<f64>() / seeds.len() as f64
    } else {
        objective.evaluate(theta, seeds.first().copied().unwrap_or(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterStats {
    pub mean_fitness: f64,
    pub max_fitness: f64,
}

/// One ascent step from `theta`. `iteration` selects the noise and episode streams.
pub fn es_step(
    theta: &[f64],
    objective: &impl Objective,
    cfg: &EsConfig,
    iteration: u64,
) -> (Vec<f64>, IterStats) {
    let eps = sample_perturbations(theta.len(), cfg, iteration);
    let seeds = episode_seeds(cfg, domain::TRAIN_EPISODE, iteration);
    let eval_one = |i: usize| {
        let candidate: Vec<f64> = theta
            .iter()
            .zip(&eps[i])
            .map(|(t, e)| t + cfg.sigma * e)
            .collect();
        fitness(objective, &candidate, &seeds)
    };
    let fit: Vec<f64> = if cfg.parallel {
        (0..eps.len()).into_par_iter().map(eval_one).collect()
    } else {
        (0..eps.len()).map(eval_one).collect()
    };
    let g = es_gradient_estimate(&fit, &eps, cfg.sigma, cfg.fitness_shaping);
    let next = theta.iter().zip(&g).map(|(t, gi)| t + cfg.alpha * gi).collect();
    let stats = IterStats {
        mean_fitness: fit.iter().sum::<f64>() / fit.len() as f64,
        max_fitness: fit.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    (next, stats)
}

/// One row per iteration; row 0 is the starting point before any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub iteration: usize,
    /// Population mean (the evaluation itself on row 0).
    pub mean_fitness: f64,
    /// Held-out evaluation of the current parameters.
    pub eval_fitness: f64,
    pub best_fitness: f64,
    /// Iteration whose parameters are the returned best model.
    pub best_iteration: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainRecord {
    pub rows: Vec<TrainRow>,
    /// Seconds per row; excluded from equality and CSV output.
    pub wall_seconds: Vec<f64>,
}

impl PartialEq for TrainRecord {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
    }
}

impl TrainRecord {
    pub fn eval_curve(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eval_fitness).collect()
    }

    pub fn best_fitness(&self) -> f64 {
        self.rows.last().map_or(f64::NEG_INFINITY, |r| r.best_fitness)
    }

    pub fn initial_eval(&self) -> f64 {
        self.rows.first().map_or(f64::NEG_INFINITY, |r| r.eval_fitness)
    }

    pub fn total_seconds(&self) -> f64 {
        self.wall_seconds.iter().sum()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "mean_fitness", "eval_fitness", "best_fitness", "best_iteration"])?;
        for r in &self.rows {
            w.serialize((r.iteration, r.mean_fitness, r.eval_fitness, r.best_fitness, r.best_iteration))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `cfg.iters` steps from `theta0` and returns the best-evaluated parameters.
pub fn train_task(
    objective: &impl Objective,
    theta0: &[f64],
    cfg: &EsConfig,
) -> (Vec<f64>, TrainRecord) {
    let eval_at = eval_seeds(cfg);
    let started = Instant::now();
    let e0 = fitness(objective, theta0, &eval_at);
    let mut record = TrainRecord::default();
    record.rows.push(TrainRow {
        iteration: 0,
        mean_fitness: e0,
        eval_fitness: e0,
        best_fitness: e0,
        best_iteration: 0,
    });
    record.wall_seconds.push(started.elapsed().as_secs_f64());
    let mut theta = theta0.to_vec();
    let mut best = (e0, theta.clone(), 0);
    for it in 1..=cfg.iters {
        let started = Instant::now();
        let (next, stats) = es_step(&theta, objective, cfg, it as u64);
        theta = next;
        let e = fitness(objective, &theta, &eval_at);
        if e > best.0 {
            best = (e, theta.clone(), it);
        }
        record.rows.push(TrainRow {
            iteration: it,
            mean_fitness: stats.mean_fitness,
            eval_fitness: e,
            best_fitness: best.0,
            best_iteration: best.2,
        });
        record.wall_seconds.push(started.elapsed().as_secs_f64());
    }
    (best.1, record)
}
