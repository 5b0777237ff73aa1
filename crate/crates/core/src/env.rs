//! Episodic restoration environment.
//!
//! The functional core is [`reset`] / [`step`]: a step projects the raw
//! action onto the state-dependent feasible boxes, repairs active power
//! balance, runs the linear power flow on the realized injections and scores
//! the result. [`Environment`] wraps the same functions in a gym-style object.

use std::borrow::Cow;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{solve_power_flow, voltage_penalty, DerKind, GridSystem};
use crate::scenario::{ForecastTensor, Scenario, Task};

/// Observation fed to the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Concatenated forecast rows, one block of `kappa / tau` values per renewable.
    pub forecast: Vec<f64>,
    /// Served fraction of every load at the previous step.
    pub prev_restoration: Vec<f64>,
    /// Served kW at the previous step (not part of the observation vector).
    pub prev_served: Vec<f64>,
    /// State of charge per storage device, kWh.
    pub soc: Vec<f64>,
    /// Remaining fuel per fuel device, kWh.
    pub fuel: Vec<f64>,
    /// 1-based step index; `horizon + 1` once the episode is over.
    pub t: usize,
}

impl EnvState {
    pub fn dim(&self) -> usize {
        self.forecast.len() + self.prev_restoration.len() + self.soc.len() + self.fuel.len() + 1
    }

    /// Observation vector `[forecasts, prev_restoration, soc, fuel, t]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write_vector(&mut v);
        v
    }

    pub fn write_vector(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.forecast);
        out.extend_from_slice(&self.prev_restoration);
        out.extend_from_slice(&self.soc);
        out.extend_from_slice(&self.fuel);
        out.push(self.t as f64);
    }

    pub fn is_terminal(&self, task: &Task) -> bool {
        self.t > task.horizon
    }
}

/// Observation dimension for a task.
pub fn state_dim(task: &Task) -> usize {
    let fleet = &task.system.fleet;
    fleet.renewable_indices().len() * task.lookahead_steps()
        + task.n_loads()
        + fleet.storage_indices().len()
        + fleet.fuel_indices().len()
        + 1
}

/// Action dimension for a feeder.
pub fn action_dim(system: &GridSystem) -> usize {
    let fleet = &system.fleet;
    system.loads.len()
        + fleet.storage_indices().len()
        + fleet.fuel_indices().len()
        + fleet.len().saturating_sub(1)
}

/// Physical control decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Commanded active restoration per load, kW.
    pub load_levels: Vec<f64>,
    /// Storage power per device, kW, positive when discharging.
    pub storage_p: Vec<f64>,
    /// Fuel generator output per device, kW.
    pub fuel_p: Vec<f64>,
    /// Power-factor angles of the angle-controlled devices, radians.
    pub angles: Vec<f64>,
}

impl Action {
    pub fn to_vec(&self) -> Vec<f64> {
        [
            self.load_levels.as_slice(),
            &self.storage_p,
            &self.fuel_p,
            &self.angles,
        ]
        .concat()
    }

    /// Inverse of the nominal raw-to-physical map, so that projecting the
    /// result reproduces a feasible action.
    pub fn to_raw(&self, task: &Task) -> Vec<f64> {
        let sys = &task.system;
        let mut raw = Vec::with_capacity(action_dim(sys));
        for (p, load) in self.load_levels.iter().zip(&sys.loads.loads) {
            raw.push(unmap(*p, 0.0, load.demand_p));
        }
        for (p, (_, der)) in self.storage_p.iter().zip(sys.fleet.storage()) {
            let DerKind::Storage {
                charge_max,
                discharge_max,
                ..
            } = der.kind
            else {
                unreachable!()
            };
            raw.push(if *p >= 0.0 { p / discharge_max } else { p / charge_max });
        }
        for (p, (_, der)) in self.fuel_p.iter().zip(sys.fleet.fuel()) {
            let DerKind::Fuel { p_min, p_max, .. } = der.kind else {
                unreachable!()
            };
            raw.push(unmap(*p, p_min, p_max));
        }
        for (a, i) in self.angles.iter().zip(sys.fleet.angle_controlled()) {
            let der = &sys.fleet.ders[i];
            raw.push(unmap(*a, der.angle_min, der.angle_max));
        }
        raw
    }
}

fn map_unit(u: f64, lo: f64, hi: f64) -> f64 {
    lo + 0.5 * (u + 1.0) * (hi - lo)
}

fn unmap(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        2.0 * (v - lo) / (hi - lo) - 1.0
    } else {
        0.0
    }
}

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// Feasible boxes for every action component given the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBounds {
    pub loads: Vec<Interval>,
    pub storage: Vec<Interval>,
    pub fuel: Vec<Interval>,
    pub angles: Vec<Interval>,
}

impl ActionBounds {
    pub fn new(state: &EnvState, task: &Task) -> Self {
        let sys = &task.system;
        let tau = task.tau;
        let loads = sys
            .loads
            .loads
            .iter()
            .map(|l| Interval {
                lo: 0.0,
                hi: l.demand_p,
            })
            .collect();
        let storage = sys
            .fleet
            .storage()
            .zip(&state.soc)
            .map(|((_, der), &soc)| {
                let DerKind::Storage {
                    charge_max,
                    discharge_max,
                    soc_min,
                    soc_max,
                    eta_charge,
                    eta_discharge,
                    ..
                } = der.kind
                else {
                    unreachable!()
                };
                let charge_room = ((soc_max - soc) / (eta_charge * tau)).max(0.0);
                let discharge_room = ((soc - soc_min) * eta_discharge / tau).max(0.0);
                Interval {
                    lo: -charge_max.min(charge_room),
                    hi: discharge_max.min(discharge_room),
                }
            })
            .collect();
        let fuel = sys
            .fleet
            .fuel()
            .zip(&state.fuel)
            .map(|((_, der), &remaining)| {
                let DerKind::Fuel { p_min, p_max, .. } = der.kind else {
                    unreachable!()
                };
                let hi = p_max.min((remaining / tau).max(0.0));
                Interval {
                    lo: p_min.min(hi),
                    hi,
                }
            })
            .collect();
        let angles = sys
            .fleet
            .angle_controlled()
            .into_iter()
            .map(|i| {
                let d = &sys.fleet.ders[i];
                Interval {
                    lo: d.angle_min,
                    hi: d.angle_max,
                }
            })
            .collect();
        Self {
            loads,
            storage,
            fuel,
            angles,
        }
    }

    pub fn clip(&self, action: &Action) -> Action {
        let clip = |vals: &[f64], boxes: &[Interval]| -> Vec<f64> {
            vals.iter().zip(boxes).map(|(v, b)| b.clip(*v)).collect()
        };
        Action {
            load_levels: clip(&action.load_levels, &self.loads),
            storage_p: clip(&action.storage_p, &self.storage),
            fuel_p: clip(&action.fuel_p, &self.fuel),
            angles: clip(&action.angles, &self.angles),
        }
    }

    pub fn contains(&self, action: &Action, tol: f64) -> bool {
        let ok = |vals: &[f64], boxes: &[Interval]| {
            vals.len() == boxes.len() && vals.iter().zip(boxes).all(|(v, b)| b.contains(*v, tol))
        };
        ok(&action.load_levels, &self.loads)
            && ok(&action.storage_p, &self.storage)
            && ok(&action.fuel_p, &self.fuel)
            && ok(&action.angles, &self.angles)
    }
}

/// Maps a raw policy output in `[-1, 1]^d` onto the feasible boxes.
///
/// Loads, fuel output and angles map affinely onto their nominal ranges;
/// storage maps sign-preserving (`+1` full discharge, `-1` full charge, `0`
/// idle). Every component is then clipped to the state-tightened box so SOC
/// and fuel cannot leave their limits this step.
pub fn project_action(raw: &[f64], state: &EnvState, task: &Task) -> Result<Action> {
    let sys = &task.system;
    let dim = action_dim(sys);
    if raw.len() != dim {
        return Err(Error::input(format!(
            "action has {} entries, expected {dim}",
            raw.len()
        )));
    }
    let mut it = raw.iter().map(|&u| if u.is_nan() { 0.0 } else { u.clamp(-1.0, 1.0) });
    let load_levels = sys
        .loads
        .loads
        .iter()
        .map(|l| map_unit(it.next().unwrap(), 0.0, l.demand_p))
        .collect();
    let storage_p = sys
        .fleet
        .storage()
        .map(|(_, der)| {
            let DerKind::Storage {
                charge_max,
                discharge_max,
                ..
            } = der.kind
            else {
                unreachable!()
            };
            let u = it.next().unwrap();
            if u >= 0.0 {
                u * discharge_max
            } else {
                u * charge_max
            }
        })
        .collect();
    let fuel_p = sys
        .fleet
        .fuel()
        .map(|(_, der)| {
            let DerKind::Fuel { p_min, p_max, .. } = der.kind else {
                unreachable!()
            };
            map_unit(it.next().unwrap(), p_min, p_max)
        })
        .collect();
    let angles = sys
        .fleet
        .angle_controlled()
        .into_iter()
        .map(|i| {
            let d = &sys.fleet.ders[i];
            map_unit(it.next().unwrap(), d.angle_min, d.angle_max)
        })
        .collect();
    let nominal = Action {
        load_levels,
        storage_p,
        fuel_p,
        angles,
    };
    Ok(ActionBounds::new(state, task).clip(&nominal))
}

/// Realized dispatch after balance repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    /// Served active power per load, kW.
    pub served: Vec<f64>,
    /// Realized storage power, kW, discharge-positive.
    pub storage_p: Vec<f64>,
    pub fuel_p: Vec<f64>,
    /// Renewable output after curtailment, kW.
    pub renewable_p: Vec<f64>,
    /// Total curtailed renewable power, kW.
    pub curtailment: f64,
}

impl Dispatch {
    /// Served plus charging minus all generation; zero when balanced.
    pub fn balance_residual(&self) -> f64 {
        let served: f64 = self.served.iter().sum();
        let charge: f64 = self.storage_p.iter().map(|p| (-p).max(0.0)).sum();
        let discharge: f64 = self.storage_p.iter().map(|p| p.max(0.0)).sum();
        let gen: f64 = self.renewable_p.iter().sum::<f64>() + discharge + self.fuel_p.iter().sum::<f64>();
        served + charge - gen
    }
}

/// Repairs active power balance for a projected action.
///
/// When commanded load fits the available generation, surplus first charges
/// storage up to its state-tightened limit, then curtails renewables (pro rata),
/// then backs down fuel units. Otherwise every load is scaled by the common
/// factor `G / L`, where `G` is generation net of commanded charging; if
/// charging alone exceeds supply the charge is scaled down too.
pub fn reconcile_balance(
    action: &Action,
    actual_renewables: &[f64],
    state: &EnvState,
    task: &Task,
) -> Dispatch {
    let bounds = ActionBounds::new(state, task);
    let mut storage_p = action.storage_p.clone();
    let mut fuel_p = action.fuel_p.clone();
    let mut renewable_p = actual_renewables.to_vec();

    let load_total: f64 = action.load_levels.iter().sum();
    let renewable_total: f64 = actual_renewables.iter().sum();
    let discharge: f64 = storage_p.iter().map(|p| p.max(0.0)).sum();
    let charge: f64 = storage_p.iter().map(|p| (-p).max(0.0)).sum();
    let fuel_total: f64 = fuel_p.iter().sum();
    let supply = renewable_total + discharge + fuel_total;

    let served;
    let mut curtailment = 0.0;
    if load_total + charge <= supply {
        served = action.load_levels.clone();
        let mut surplus = supply - load_total - charge;
        for (p, b) in storage_p.iter_mut().zip(&bounds.storage) {
            if surplus <= 0.0 {
                break;
            }
            let take = (*p - b.lo).max(0.0).min(surplus);
            *p -= take;
            surplus -= take;
        }
        if surplus > 0.0 && renewable_total > 0.0 {
            curtailment = surplus.min(renewable_total);
            let keep = 1.0 - curtailment / renewable_total;
            for r in &mut renewable_p {
                *r *= keep;
            }
            surplus -= curtailment;
        }
        for f in &mut fuel_p {
            if surplus <= 0.0 {
                break;
            }
            let take = f.min(surplus);
            *f -= take;
            surplus -= take;
        }
    } else {
        let net_generation = supply - charge;
        if net_generation >= 0.0 {
            let scale = net_generation / load_total;
            served = action.load_levels.iter().map(|p| p * scale).collect();
        } else {
            served = vec![0.0; action.load_levels.len()];
            let scale = supply / charge;
            for p in &mut storage_p {
                if *p < 0.0 {
                    *p *= scale;
                }
            }
        }
    }
    Dispatch {
        served,
        storage_p,
        fuel_p,
        renewable_p,
        curtailment,
    }
}

/// SOC after one interval at power `p` (discharge-positive).
pub fn soc_update(soc: f64, p: f64, eta_charge: f64, eta_discharge: f64, tau: f64) -> f64 {
    if p > 0.0 {
        soc - p / eta_discharge * tau
    } else if p < 0.0 {
        soc - eta_charge * p * tau
    } else {
        soc
    }
}

/// Reward components; `total = priority - fluctuation + voltage`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub priority: f64,
    /// Non-negative fluctuation penalty magnitude.
    pub fluctuation: f64,
    /// Voltage penalty (never positive).
    pub voltage: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.priority - self.fluctuation + self.voltage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Step index the outcome belongs to (1-based).
    pub t: usize,
    pub commanded: Action,
    pub dispatch: Dispatch,
    /// Power-factor angle used for every DER, fleet order.
    pub der_angles: Vec<f64>,
    /// Squared voltage magnitudes per bus.
    pub voltages: Vec<f64>,
    pub balance_residual: f64,
    /// Reactive power absorbed at the root bus to close the reactive balance, kVAr.
    pub reactive_slack: f64,
    pub terms: RewardTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub info: StepInfo,
}

fn forecast_block(forecasts: &[ForecastTensor], row: usize) -> Vec<f64> {
    forecasts
        .iter()
        .flat_map(|f| f.row(row.min(f.horizon() - 1)).iter().copied())
        .collect()
}

/// Initial state using the task's stored forecasts.
pub fn reset(task: &Task) -> EnvState {
    reset_with(task, &task.forecasts)
}

pub fn reset_with(task: &Task, forecasts: &[ForecastTensor]) -> EnvState {
    let fleet = &task.system.fleet;
    let n = task.n_loads();
    EnvState {
        forecast: forecast_block(forecasts, 0),
        prev_restoration: vec![0.0; n],
        prev_served: vec![0.0; n],
        soc: fleet
            .storage()
            .map(|(_, d)| match d.kind {
                DerKind::Storage { soc_init, .. } => soc_init,
                _ => unreachable!(),
            })
            .collect(),
        fuel: fleet
            .fuel()
            .map(|(_, d)| match d.kind {
                DerKind::Fuel { reserve_kwh, .. } => reserve_kwh,
                _ => unreachable!(),
            })
            .collect(),
        t: 1,
    }
}

/// One transition driven by a raw policy output.
pub fn step(
    state: &EnvState,
    raw: &[f64],
    task: &Task,
    forecasts: &[ForecastTensor],
) -> Result<StepOutcome> {
    check_live(state, task)?;
    let action = project_action(raw, state, task)?;
    Ok(advance(state, action, task, forecasts))
}

/// One transition driven by a physical action (clipped to the feasible boxes).
pub fn step_action(
    state: &EnvState,
    action: &Action,
    task: &Task,
    forecasts: &[ForecastTensor],
) -> Result<StepOutcome> {
    check_live(state, task)?;
    let expected = action_dim(&task.system);
    if action.to_vec().len() != expected {
        return Err(Error::input(format!("action must have {expected} entries")));
    }
    let action = ActionBounds::new(state, task).clip(action);
    Ok(advance(state, action, task, forecasts))
}

fn check_live(state: &EnvState, task: &Task) -> Result<()> {
    if state.t == 0 || state.is_terminal(task) {
        return Err(Error::Lifecycle(format!(
            "cannot step at t={} (horizon {})",
            state.t, task.horizon
        )));
    }
    Ok(())
}

fn advance(state: &EnvState, action: Action, task: &Task, forecasts: &[ForecastTensor]) -> StepOutcome {
    let sys = &task.system;
    let fleet = &sys.fleet;
    let idx = state.t - 1;
    let actual: Vec<f64> = task.profiles.iter().map(|p| p.actual[idx]).collect();
    let dispatch = reconcile_balance(&action, &actual, state, task);

    // Per-DER realized active power and angle, fleet order.
    let mut der_p = vec![0.0; fleet.len()];
    for (k, i) in fleet.storage_indices().into_iter().enumerate() {
        der_p[i] = dispatch.storage_p[k];
    }
    for (k, i) in fleet.fuel_indices().into_iter().enumerate() {
        der_p[i] = dispatch.fuel_p[k];
    }
    for (k, i) in fleet.renewable_indices().into_iter().enumerate() {
        der_p[i] = dispatch.renewable_p[k];
    }
    let mut der_angles: Vec<f64> = fleet.ders.iter().map(|d| d.angle_mid()).collect();
    for (a, i) in action.angles.iter().zip(fleet.angle_controlled()) {
        der_angles[i] = *a;
    }

    let n_bus = sys.network.n_buses();
    let mut p_inj = vec![0.0; n_bus];
    let mut q_inj = vec![0.0; n_bus];
    let mut q_load_total = 0.0;
    let mut q_der_total = 0.0;
    for ((bus, load), served) in sys.load_buses().into_iter().zip(&sys.loads.loads).zip(&dispatch.served) {
        let q = served * load.q_ratio();
        p_inj[bus] -= served;
        q_inj[bus] -= q;
        q_load_total += q;
    }
    for ((bus, p), angle) in sys.der_buses().into_iter().zip(&der_p).zip(&der_angles) {
        let q = p * angle.tan();
        p_inj[bus] += p;
        q_inj[bus] += q;
        q_der_total += q;
    }
    let reactive_slack = q_load_total - q_der_total;
    let root = sys.network.root_index();
    q_inj[root] += reactive_slack;
    let voltages = solve_power_flow(&sys.network, &p_inj, &q_inj, &sys.base)
        .expect("injection vectors sized to the network");

    let priorities = sys.loads.loads.iter().map(|l| l.priority);
    let mut priority_term = 0.0;
    let mut fluctuation = 0.0;
    for ((prio, served), prev) in priorities.zip(&dispatch.served).zip(&state.prev_served) {
        priority_term += prio * served;
        fluctuation += prio * (prev - served).max(0.0);
    }
    let terms = RewardTerms {
        priority: priority_term,
        fluctuation: task.mu * fluctuation,
        voltage: voltage_penalty(&voltages, &sys.network, task.lambda),
    };
    let reward = terms.total();

    let soc = fleet
        .storage()
        .zip(&state.soc)
        .zip(&dispatch.storage_p)
        .map(|(((_, der), &soc), &p)| {
            let DerKind::Storage {
                soc_min,
                soc_max,
                eta_charge,
                eta_discharge,
                ..
            } = der.kind
            else {
                unreachable!()
            };
            soc_update(soc, p, eta_charge, eta_discharge, task.tau).clamp(soc_min, soc_max)
        })
        .collect();
    let fuel = state
        .fuel
        .iter()
        .zip(&dispatch.fuel_p)
        .map(|(e, p)| (e - p * task.tau).max(0.0))
        .collect();
    let prev_restoration = dispatch
        .served
        .iter()
        .zip(&sys.loads.loads)
        .map(|(s, l)| (s / l.demand_p).clamp(0.0, 1.0))
        .collect();
    let next = EnvState {
        forecast: forecast_block(forecasts, state.t),
        prev_restoration,
        prev_served: dispatch.served.clone(),
        soc,
        fuel,
        t: state.t + 1,
    };
    let balance_residual = dispatch.balance_residual();
    StepOutcome {
        state: next,
        reward,
        info: StepInfo {
            t: state.t,
            commanded: action,
            dispatch,
            der_angles,
            voltages,
            balance_residual,
            reactive_slack,
            terms,
        },
    }
}

/// What a controller hands the environment each step.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Raw output in `[-1, 1]^d`, projected by the environment.
    Raw(Vec<f64>),
    /// Physical setpoints.
    Dispatch(Action),
}

/// Anything that maps observations to commands.
pub trait Controller {
    fn command(&self, state: &EnvState, task: &Task) -> Command;
}

impl<F> Controller for F
where
    F: Fn(&EnvState, &Task) -> Command,
{
    fn command(&self, state: &EnvState, task: &Task) -> Command {
        self(state, task)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub total_reward: f64,
    pub trace: Vec<StepOutcome>,
}

/// Runs a full episode, keeping the trace.
pub fn rollout(controller: &impl Controller, task: &Task, scenario: Scenario) -> Result<Episode> {
    let forecasts = task.episode_forecasts(scenario);
    let mut state = reset_with(task, &forecasts);
    let mut trace = Vec::with_capacity(task.horizon);
    let mut total_reward = 0.0;
    while !state.is_terminal(task) {
        let outcome = apply(controller, &state, task, &forecasts)?;
        total_reward += outcome.reward;
        state = outcome.state.clone();
        trace.push(outcome);
    }
    Ok(Episode {
        total_reward,
        trace,
    })
}

/// Episode return without materializing the trace.
pub fn rollout_return(controller: &impl Controller, task: &Task, scenario: Scenario) -> Result<f64> {
    let forecasts = task.episode_forecasts(scenario);
    let mut state = reset_with(task, &forecasts);
    let mut total = 0.0;
    while !state.is_terminal(task) {
        let outcome = apply(controller, &state, task, &forecasts)?;
        total += outcome.reward;
        state = outcome.state;
    }
    Ok(total)
}

fn apply(
    controller: &impl Controller,
    state: &EnvState,
    task: &Task,
    forecasts: &[ForecastTensor],
) -> Result<StepOutcome> {
    match controller.command(state, task) {
        Command::Raw(raw) => step(state, &raw, task, forecasts),
        Command::Dispatch(action) => step_action(state, &action, task, forecasts),
    }
}

/// Gym-style wrapper around [`reset`] and [`step`].
pub struct Environment<'t> {
    task: &'t Task,
    forecasts: Cow<'t, [ForecastTensor]>,
    state: EnvState,
}

impl<'t> Environment<'t> {
    pub fn new(task: &'t Task, scenario: Scenario) -> Self {
        let forecasts = task.episode_forecasts(scenario);
        let state = reset_with(task, &forecasts);
        Self {
            task,
            forecasts,
            state,
        }
    }

    pub fn reset(&mut self) -> &EnvState {
        self.state = reset_with(self.task, &self.forecasts);
        &self.state
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn done(&self) -> bool {
        self.state.is_terminal(self.task)
    }

    pub fn step(&mut self, raw: &[f64]) -> Result<StepOutcome> {
        let outcome = step(&self.state, raw, self.task, &self.forecasts)?;
        self.state = outcome.state.clone();
        Ok(outcome)
    }
}

/// Writes one CSV row per step: served kW per load, realized kW per DER,
/// SOC, fuel, voltage extremes, reward and its terms, curtailment.
pub fn write_trace_csv(out: impl Write, trace: &[StepOutcome], task: &Task) -> Result<()> {
    let sys = &task.system;
    let fleet = &sys.fleet;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(sys.loads.loads.iter().map(|l| format!("served_{}", l.id)));
    header.extend(fleet.ders.iter().map(|d| format!("p_{}", d.id)));
    header.extend(fleet.storage().map(|(_, d)| format!("soc_{}", d.id)));
    header.extend(fleet.fuel().map(|(_, d)| format!("fuel_{}", d.id)));
    header.extend(
        [
            "v_min",
            "v_max",
            "reward",
            "priority_term",
            "fluctuation_term",
            "voltage_term",
            "curtailment",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for o in trace {
        let info = &o.info;
        let mut der_p = vec![0.0; fleet.len()];
        for (k, i) in fleet.storage_indices().into_iter().enumerate() {
            der_p[i] = info.dispatch.storage_p[k];
        }
        for (k, i) in fleet.fuel_indices().into_iter().enumerate() {
            der_p[i] = info.dispatch.fuel_p[k];
        }
        for (k, i) in fleet.renewable_indices().into_iter().enumerate() {
            der_p[i] = info.dispatch.renewable_p[k];
        }
        let v_min = info.voltages.iter().cloned().fold(f64::INFINITY, f64::min);
        let v_max = info.voltages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut row = vec![info.t.to_string()];
        row.extend(info.dispatch.served.iter().map(f64::to_string));
        row.extend(der_p.iter().map(f64::to_string));
        row.extend(o.state.soc.iter().map(f64::to_string));
        row.extend(o.state.fuel.iter().map(f64::to_string));
        row.extend(
            [
                v_min,
                v_max,
                o.reward,
                info.terms.priority,
                info.terms.fluctuation,
                info.terms.voltage,
                info.dispatch.curtailment,
            ]
            .iter()
            .map(f64::to_string),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
