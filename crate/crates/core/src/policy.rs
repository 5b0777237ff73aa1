//! Feed-forward policy with a flat parameter vector.
//!
//! `theta` packs the layers in order; each layer stores its weight matrix
//! row-major (`[fan_out][fan_in]`) followed by its bias vector. Hidden and
//! output activations are `tanh`, so outputs lie in `(-1, 1)`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{Command, Controller, EnvState};
use crate::error::{Error, Result};
use crate::grid::DerKind;
use crate::scenario::Task;
use crate::seed::{self, domain};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const CHECKPOINT_FORMAT: &str = "clrmeta-policy/1";
pub const PACKING: &str = "layer-major; weights row-major [fan_out][fan_in], then bias";

/// Per-feature affine input map `x * scale + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            offset: vec![0.0; dim],
        }
    }

    /// Forecasts by device capacity, SOC by its maximum, fuel by its
    /// reserve, step index by the horizon; restoration fractions unchanged.
    pub fn for_task(task: &Task) -> Self {
        let fleet = &task.system.fleet;
        let h = task.lookahead_steps();
        let mut scale = Vec::new();
        for (_, d) in fleet.renewables() {
            let DerKind::Renewable { capacity, .. } = d.kind else {
                unreachable!()
            };
            scale.extend(std::iter::repeat_n(1.0 / capacity, h));
        }
        scale.extend(std::iter::repeat_n(1.0, task.n_loads()));
        for (_, d) in fleet.storage() {
            let DerKind::Storage { soc_max, .. } = d.kind else {
                unreachable!()
            };
            scale.push(1.0 / soc_max);
        }
        for (_, d) in fleet.fuel() {
            let DerKind::Fuel { reserve_kwh, .. } = d.kind else {
                unreachable!()
            };
            scale.push(1.0 / reserve_kwh);
        }
        scale.push(1.0 / task.horizon as f64);
        let offset = vec![0.0; scale.len()];
        Self { scale, offset }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }
}

/// Number of parameters for a layer-size list `[d_in, h_1, ..., d_out]`.
pub fn param_count(shape: &[usize]) -> usize {
    shape.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Layer sizes `[d_in, h_1, ..., d_out]`.
    pub shape: Vec<usize>,
    pub theta: Vec<f64>,
    pub normalizer: Normalizer,
}

impl PolicyParams {
    pub fn new(shape: Vec<usize>, theta: Vec<f64>, normalizer: Normalizer) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::input("policy shape needs >= 2 positive layer sizes"));
        }
        if theta.len() != param_count(&shape) {
            return Err(Error::input(format!(
                "theta has {} entries, shape {:?} needs {}",
                theta.len(),
                shape,
                param_count(&shape)
            )));
        }
        if normalizer.scale.len() != shape[0] || normalizer.offset.len() != shape[0] {
            return Err(Error::input("normalizer dimension must equal d_in"));
        }
        Ok(Self {
            shape,
            theta,
            normalizer,
        })
    }

    pub fn d_in(&self) -> usize {
        self.shape[0]
    }

    pub fn d_out(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), theta, self.normalizer.clone())
    }

    pub fn view(&self) -> PolicyView<'_> {
        PolicyView {
            shape: &self.shape,
            theta: &self.theta,
            normalizer: &self.normalizer,
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.view().forward(input)
    }
}

/// Weights ~ N(0, 1/fan_in), zero biases.
pub fn init_params(d_in: usize, d_out: usize, hidden: &[usize], seed: u64) -> Result<PolicyParams> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::input("policy dimensions must be >= 1"));
    }
    let mut shape = vec![d_in];
    shape.extend_from_slice(hidden);
    shape.push(d_out);
    let mut rng = seed::rng_for(seed, &[domain::INIT]);
    let mut theta = Vec::with_capacity(param_count(&shape));
    for w in shape.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let z: f64 = StandardNormal.sample(&mut rng);
            theta.push(std * z);
        }
        theta.extend(std::iter::repeat_n(0.0, fan_out));
    }
    PolicyParams::new(shape, theta, Normalizer::identity(d_in))
}

/// Borrowed policy: lets ES evaluate perturbed parameter vectors without copying shape data.
#[derive(Debug, Clone, Copy)]
pub struct PolicyView<'a> {
    pub shape: &'a [usize],
    pub theta: &'a [f64],
    pub normalizer: &'a Normalizer,
}

impl PolicyView<'_> {
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.shape[0] {
            return Err(Error::input(format!(
                "policy input has {} features, expected {}",
                input.len(),
                self.shape[0]
            )));
        }
        if self.theta.len() != param_count(self.shape) {
            return Err(Error::input("theta length does not match the policy shape"));
        }
        let mut act: Vec<f64> = input
            .iter()
            .zip(&self.normalizer.scale)
            .zip(&self.normalizer.offset)
            .map(|((x, s), o)| x * s + o)
            .collect();
        let mut offset = 0;
        for w in self.shape.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.theta[offset..offset + fan_in * fan_out];
            let bias = &self.theta[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            act = weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| {
                    let z: f64 = row.iter().zip(&act).map(|(w, x)| w * x).sum::<f64>() + b;
                    z.tanh()
                })
                .collect();
        }
        Ok(act)
    }
}

impl Controller for PolicyView<'_> {
    fn command(&self, state: &EnvState, _task: &Task) -> Command {
        let out = self
            .forward(&state.to_vector())
            .expect("policy input dimension matches the task");
        Command::Raw(out)
    }
}

impl Controller for PolicyParams {
    fn command(&self, state: &EnvState, task: &Task) -> Command {
        self.view().command(state, task)
    }
}

/// Half squared Euclidean distance between parameter vectors; the KL
/// divergence between unit-variance Gaussian policies centered at each.
pub fn param_distance(a: &PolicyParams, b: &PolicyParams) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::input(format!(
            "cannot compare policies of shape {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    Ok(half_sq_dist(&a.theta, &b.theta))
}

pub fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    packing: String,
    shape: Vec<usize>,
    normalizer: Normalizer,
    #[serde(default)]
    lineage: Vec<String>,
    theta_len: usize,
    /// Little-endian f64 payload, base64.
    theta_b64: String,
}

/// A policy plus free-form provenance notes (seeds, task ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub lineage: Vec<String>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let bytes: Vec<u8> = self
            .params
            .theta
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            packing: PACKING.into(),
            shape: self.params.shape.clone(),
            normalizer: self.params.normalizer.clone(),
            lineage: self.lineage.clone(),
            theta_len: self.params.theta.len(),
            theta_b64: B64.encode(bytes),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::input(format!(
                "unsupported checkpoint format '{}'",
                file.format
            )));
        }
        let bytes = B64
            .decode(file.theta_b64.as_bytes())
            .map_err(|e| Error::input(format!("checkpoint payload is not base64: {e}")))?;
        if bytes.len() != file.theta_len * 8 {
            return Err(Error::input("checkpoint payload length mismatch"));
        }
        let theta = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            params: PolicyParams::new(file.shape, theta, file.normalizer)?,
            lineage: file.lineage,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
