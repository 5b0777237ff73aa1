//! Renewable profiles, forecast tensors and task families.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DerKind, GridSystem, RenewableSource};
use crate::seed::{self, domain};

/// Default control interval, hours (5 minutes).
pub const DEFAULT_TAU: f64 = 1.0 / 12.0;
/// Default forecast lookahead, hours.
pub const DEFAULT_KAPPA: f64 = 4.0;
/// Default horizon: 6 hours of 5-minute steps.
pub const DEFAULT_HORIZON: usize = 72;
pub const DEFAULT_DEMAND_RANGE: (f64, f64) = (20.0, 160.0);
pub const DEFAULT_TRAIN_SPLIT: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum ProfileShape {
    DiurnalSolar,
    GustyWind,
    /// Column `column` of a CSV file whose header row names the devices.
    Csv { path: PathBuf, column: String },
}

impl ProfileShape {
    pub fn default_for(source: RenewableSource) -> Self {
        match source {
            RenewableSource::Solar => ProfileShape::DiurnalSolar,
            RenewableSource::Wind => ProfileShape::GustyWind,
        }
    }
}

/// Realized output of one renewable device over the horizon, kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableProfile {
    pub device: String,
    pub capacity: f64,
    pub actual: Vec<f64>,
}

impl RenewableProfile {
    pub fn horizon(&self) -> usize {
        self.actual.len()
    }

    fn validate(&self) -> Result<()> {
        if self.actual.is_empty() {
            return Err(Error::input(format!("profile '{}' is empty", self.device)));
        }
        if let Some(v) = self
            .actual
            .iter()
            .find(|v| !(**v >= 0.0 && **v <= self.capacity))
        {
            return Err(Error::input(format!(
                "profile '{}' value {v} outside [0, {}]",
                self.device, self.capacity
            )));
        }
        Ok(())
    }
}

/// Rolling forecasts for one device: row `t` holds the forecasts issued at
/// step `t` for steps `t..t + lookahead_steps`. Entry 0 of every row is the
/// realized value at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTensor {
    pub device: String,
    pub capacity: f64,
    /// Lookahead, hours.
    pub kappa: f64,
    /// Control interval, hours.
    pub tau: f64,
    pub lookahead_steps: usize,
    /// Row-major `[horizon][lookahead_steps]`.
    pub entries: Vec<f64>,
}

impl ForecastTensor {
    pub fn horizon(&self) -> usize {
        self.entries.len() / self.lookahead_steps.max(1)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let h = self.lookahead_steps;
        &self.entries[t * h..(t + 1) * h]
    }

    pub fn get(&self, t: usize, x: usize) -> f64 {
        self.entries[t * self.lookahead_steps + x]
    }
}

/// Number of forecast points `kappa / tau`, which must be a positive integer.
pub fn lookahead_steps(kappa: f64, tau: f64) -> Result<usize> {
    if !(kappa > 0.0 && tau > 0.0 && kappa.is_finite() && tau.is_finite()) {
        return Err(Error::input("kappa and tau must be positive"));
    }
    let ratio = kappa / tau;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::input(format!(
            "kappa / tau must be a positive integer (got {ratio})"
        )));
    }
    Ok(rounded as usize)
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Synthetic or file-backed generation profile for a device of capacity `cap`.
pub fn generate_profile(
    device: &str,
    cap: f64,
    horizon: usize,
    shape: &ProfileShape,
    seed: u64,
) -> Result<RenewableProfile> {
    if !(cap > 0.0) {
        return Err(Error::input("profile capacity must be positive"));
    }
    if horizon == 0 {
        return Err(Error::input("profile horizon must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let actual = match shape {
        ProfileShape::DiurnalSolar => {
            const NOISE: f64 = 0.15;
            const PEAK: f64 = 0.9;
            (0..horizon)
                .map(|t| {
                    let phase = (t as f64 + 0.5) / horizon as f64;
                    let bump = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos());
                    let factor = (NOISE * normal(&mut rng) - 0.5 * NOISE * NOISE).exp();
                    (PEAK * cap * bump * factor).clamp(0.0, cap)
                })
                .collect()
        }
        ProfileShape::GustyWind => {
            let mean = 0.45 * cap;
            let reversion = 0.15;
            let gust = 0.1 * cap;
            let mut level = (mean + 0.2 * cap * normal(&mut rng)).clamp(0.0, cap);
            (0..horizon)
                .map(|_| {
                    let out = level;
                    level = (level + reversion * (mean - level) + gust * normal(&mut rng))
                        .clamp(0.0, cap);
                    out
                })
                .collect()
        }
        ProfileShape::Csv { path, column } => {
            let file = std::fs::File::open(path).map_err(|e| {
                Error::input(format!("cannot open profile csv {}: {e}", path.display()))
            })?;
            let columns = read_profile_csv(file)?;
            let values = columns.get(column).ok_or_else(|| {
                Error::input(format!(
                    "profile csv {} has no column '{column}'",
                    path.display()
                ))
            })?;
            if values.len() < horizon {
                return Err(Error::input(format!(
                    "profile csv {} has {} rows, horizon needs {horizon}",
                    path.display(),
                    values.len()
                )));
            }
            values[..horizon].to_vec()
        }
    };
    let profile = RenewableProfile {
        device: device.to_string(),
        capacity: cap,
        actual,
    };
    profile.validate()?;
    Ok(profile)
}

/// Reads a profile CSV: a header row of device ids, one row per step, kW values.
pub fn read_profile_csv(reader: impl Read) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                Error::input(format!("profile csv row {} column {col}: '{field}' is not a number", row + 1))
            })?;
            columns[col].push(value);
        }
    }
    Ok(headers.into_iter().zip(columns).collect())
}

/// Rolling forecasts with relative Gaussian error growing linearly with lookahead.
///
/// For lookahead `x >= 1` the forecast is `actual[t+x] * (1 + e)`, clamped to
/// `[0, cap]`, with `e ~ N(0, (xi * x / H)^2)` and `H = kappa / tau`. Entry 0 is
/// the realized value. Targets past the horizon reuse the final actual value.
pub fn synthesize_forecast(
    profile: &RenewableProfile,
    xi: f64,
    kappa: f64,
    tau: f64,
    seed: u64,
) -> Result<ForecastTensor> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::input(format!("forecast error level {xi} outside [0, 1]")));
    }
    let h = lookahead_steps(kappa, tau)?;
    let horizon = profile.horizon();
    if horizon == 0 {
        return Err(Error::input("cannot forecast an empty profile"));
    }
    let cap = profile.capacity;
    let mut rng = seed::rng(seed);
    let mut entries = Vec::with_capacity(horizon * h);
    for t in 0..horizon {
        entries.push(profile.actual[t]);
        for x in 1..h {
            let target = profile.actual[(t + x).min(horizon - 1)];
            let z = normal(&mut rng);
            let scale = xi * x as f64 / h as f64;
            entries.push((target * (1.0 + scale * z)).clamp(0.0, cap));
        }
    }
    Ok(ForecastTensor {
        device: profile.device.clone(),
        capacity: cap,
        kappa,
        tau,
        lookahead_steps: h,
        entries,
    })
}

/// Which forecast realization an episode sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// The forecast tensors stored in the task.
    Stored,
    /// Fresh forecast noise drawn from the given episode seed.
    Resample(u64),
}

/// One restoration problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    /// Feeder with this task's demands applied.
    pub system: GridSystem,
    /// One profile per renewable device, in fleet order.
    pub profiles: Vec<RenewableProfile>,
    pub forecasts: Vec<ForecastTensor>,
    pub error_level: f64,
    pub horizon: usize,
    pub tau: f64,
    pub kappa: f64,
    /// Weight of the load-fluctuation penalty.
    pub mu: f64,
    /// Weight of the voltage-violation penalty.
    pub lambda: f64,
    pub seed: u64,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        let h = lookahead_steps(self.kappa, self.tau)?;
        if self.horizon == 0 {
            return Err(Error::input(format!("task '{}': horizon must be >= 1", self.id)));
        }
        if !(self.mu >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::input(format!("task '{}': penalty weights must be >= 0", self.id)));
        }
        if !(0.0..=1.0).contains(&self.error_level) {
            return Err(Error::input(format!("task '{}': error level outside [0, 1]", self.id)));
        }
        let renewables: Vec<&str> = self
            .system
            .fleet
            .renewables()
            .map(|(_, d)| d.id.as_str())
            .collect();
        if renewables.len() != self.profiles.len() || renewables.len() != self.forecasts.len() {
            return Err(Error::input(format!(
                "task '{}': every renewable needs exactly one profile and one forecast",
                self.id
            )));
        }
        for ((dev, prof), fc) in renewables.iter().zip(&self.profiles).zip(&self.forecasts) {
            if prof.device != *dev || fc.device != *dev {
                return Err(Error::input(format!(
                    "task '{}': profile/forecast order does not match renewable '{dev}'",
                    self.id
                )));
            }
            prof.validate()?;
            if prof.horizon() != self.horizon {
                return Err(Error::input(format!(
                    "task '{}': profile '{dev}' has {} steps, horizon is {}",
                    self.id,
                    prof.horizon(),
                    self.horizon
                )));
            }
            if fc.lookahead_steps != h || fc.entries.len() != h * self.horizon {
                return Err(Error::input(format!(
                    "task '{}': forecast '{dev}' has the wrong shape",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn lookahead_steps(&self) -> usize {
        lookahead_steps(self.kappa, self.tau).expect("validated task")
    }

    pub fn n_loads(&self) -> usize {
        self.system.loads.len()
    }

    /// Control horizon in minutes.
    pub fn horizon_minutes(&self) -> f64 {
        self.horizon as f64 * self.tau * 60.0
    }

    /// Forecast tensors for one episode.
    pub fn episode_forecasts(&self, scenario: Scenario) -> Cow<'_, [ForecastTensor]> {
        match scenario {
            Scenario::Resample(episode) if self.error_level > 0.0 => Cow::Owned(
                self.profiles
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let s = seed::derive(self.seed, &[domain::SCENARIO, episode, i as u64]);
                        synthesize_forecast(p, self.error_level, self.kappa, self.tau, s)
                            .expect("validated task")
                    })
                    .collect(),
            ),
            _ => Cow::Borrowed(&self.forecasts),
        }
    }
}

/// Parameters of a family of tasks sharing one feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskFamilySpec {
    pub count: usize,
    pub demand_range: (f64, f64),
    pub error_level: f64,
    pub kappa: f64,
    pub tau: f64,
    pub horizon: usize,
    pub mu: f64,
    /// Voltage penalty weight; `None` keeps the feeder's value.
    pub lambda: Option<f64>,
    /// Profile shape overrides by renewable device id.
    pub shapes: BTreeMap<String, ProfileShape>,
    pub seed: u64,
}

impl Default for TaskFamilySpec {
    fn default() -> Self {
        Self {
            count: 60,
            demand_range: DEFAULT_DEMAND_RANGE,
            error_level: 0.0,
            kappa: DEFAULT_KAPPA,
            tau: DEFAULT_TAU,
            horizon: DEFAULT_HORIZON,
            mu: 1.0,
            lambda: None,
            shapes: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl TaskFamilySpec {
    pub fn validate(&self, system: &GridSystem) -> Result<()> {
        if self.count == 0 {
            return Err(Error::input("task family count must be >= 1"));
        }
        let (lo, hi) = self.demand_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::input(format!(
                "demand_range must satisfy 0 < lo <= hi (got [{lo}, {hi}])"
            )));
        }
        if self.horizon == 0 {
            return Err(Error::input("horizon must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.error_level) {
            return Err(Error::input("error_level must lie in [0, 1]"));
        }
        lookahead_steps(self.kappa, self.tau)?;
        for id in self.shapes.keys() {
            match system.fleet.get(id) {
                Some(d) if matches!(d.kind, DerKind::Renewable { .. }) => {}
                _ => {
                    return Err(Error::input(format!(
                        "shape override names '{id}', which is not a renewable device"
                    )))
                }
            }
        }
        for (id, shape) in &self.shapes {
            if let ProfileShape::Csv { path, .. } = shape {
                if !path.exists() {
                    return Err(Error::input(format!(
                        "shapes.{id}.path: csv file {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds `spec.count` tasks: uniform per-load active demands in
/// `spec.demand_range` (reactive demand follows the base power factor) and
/// fresh renewable profiles and forecasts per task.
pub fn make_task_family(base: &GridSystem, spec: &TaskFamilySpec) -> Result<Vec<Task>> {
    spec.validate(base)?;
    (0..spec.count)
        .map(|m| make_task(base, spec, m))
        .collect()
}

fn make_task(base: &GridSystem, spec: &TaskFamilySpec, m: usize) -> Result<Task> {
    let task_seed = seed::derive(spec.seed, &[domain::TASK, m as u64]);
    let mut system = base.clone();
    let mut rng = seed::rng_for(task_seed, &[domain::DEMAND]);
    let (lo, hi) = spec.demand_range;
    for load in &mut system.loads.loads {
        let ratio = load.q_ratio();
        let p = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        load.demand_p = p;
        load.demand_q = p * ratio;
    }
    let mut profiles = Vec::new();
    let mut forecasts = Vec::new();
    for (k, (i, der)) in base.fleet.renewables().enumerate() {
        let DerKind::Renewable { capacity, source } = der.kind else {
            unreachable!()
        };
        let shape = spec
            .shapes
            .get(&der.id)
            .cloned()
            .unwrap_or_else(|| ProfileShape::default_for(source));
        let profile = generate_profile(
            &der.id,
            capacity,
            spec.horizon,
            &shape,
            seed::derive(task_seed, &[domain::PROFILE, i as u64]),
        )?;
        let forecast = synthesize_forecast(
            &profile,
            spec.error_level,
            spec.kappa,
            spec.tau,
            seed::derive(task_seed, &[domain::FORECAST, k as u64]),
        )?;
        profiles.push(profile);
        forecasts.push(forecast);
    }
    let task = Task {
        id: format!("task{m:03}"),
        system,
        profiles,
        forecasts,
        error_level: spec.error_level,
        horizon: spec.horizon,
        tau: spec.tau,
        kappa: spec.kappa,
        mu: spec.mu,
        lambda: spec.lambda.unwrap_or(base.voltage_penalty),
        seed: task_seed,
    };
    task.validate()?;
    Ok(task)
}

/// Splits a family by index: the first `n_train` tasks train, the rest test.
pub fn split_train_test(tasks: &[Task], n_train: usize) -> (&[Task], &[Task]) {
    tasks.split_at(n_train.min(tasks.len()))
}

pub fn save_tasks(path: &Path, tasks: &[Task]) -> Result<()> {
    let text = serde_json::to_string_pretty(tasks)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    let text = std::fs::read_to_string(path)?;
    let tasks: Vec<Task> = serde_json::from_str(&text)?;
    for t in &tasks {
        t.validate()?;
    }
    Ok(tasks)
}
