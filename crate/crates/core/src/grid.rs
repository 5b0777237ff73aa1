//! Static feeder description and the linearized branch-flow solver.
//!
//! A [`GridSystem`] bundles the radial [`NetworkModel`], the critical
//! [`LoadSet`] and the [`DerFleet`]. Voltages are handled as squared
//! magnitudes in per-unit², the natural variable of the linear branch-flow
//! model, so the 0.95/1.05 p.u. limits become 0.9025/1.1025.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_V_MIN: f64 = 0.95 * 0.95;
pub const DEFAULT_V_MAX: f64 = 1.05 * 1.05;
/// Penalty weight applied to squared voltage violations.
pub const DEFAULT_VOLTAGE_PENALTY: f64 = 1e8;

fn default_v_min() -> f64 {
    DEFAULT_V_MIN
}
fn default_v_max() -> f64 {
    DEFAULT_V_MAX
}
fn default_root_voltage() -> f64 {
    1.0
}

/// Per-unit bases used to convert kW/kVAr injections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBase {
    pub s_base_kva: f64,
    pub v_base_kv: f64,
}

impl Default for PowerBase {
    fn default() -> Self {
        Self {
            s_base_kva: 1000.0,
            v_base_kv: 4.16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Series resistance, per-unit.
    pub r: f64,
    /// Series reactance, per-unit.
    pub x: f64,
}

/// Uniform line impedance used by the built-in analog feeders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineImpedance {
    pub r: f64,
    pub x: f64,
}

impl Default for LineImpedance {
    fn default() -> Self {
        Self { r: 0.01, x: 0.02 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkSpec {
    buses: Vec<String>,
    root: String,
    lines: Vec<Line>,
    #[serde(default = "default_v_min")]
    v_min: f64,
    #[serde(default = "default_v_max")]
    v_max: f64,
    #[serde(default = "default_root_voltage")]
    root_voltage: f64,
}

/// Radial network with precomputed tree traversal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpec", into = "NetworkSpec")]
pub struct NetworkModel {
    buses: Vec<String>,
    root: String,
    lines: Vec<Line>,
    v_min: f64,
    v_max: f64,
    root_voltage: f64,
    index: HashMap<String, usize>,
    root_idx: usize,
    /// For each non-root bus, the index of the line feeding it.
    parent_line: Vec<Option<usize>>,
    parent_bus: Vec<Option<usize>>,
    /// Buses in breadth-first order from the root.
    order: Vec<usize>,
}

impl TryFrom<NetworkSpec> for NetworkModel {
    type Error = Error;

    fn try_from(spec: NetworkSpec) -> Result<Self> {
        NetworkModel::with_limits(
            spec.buses,
            spec.root,
            spec.lines,
            spec.v_min,
            spec.v_max,
            spec.root_voltage,
        )
    }
}

impl From<NetworkModel> for NetworkSpec {
    fn from(net: NetworkModel) -> Self {
        NetworkSpec {
            buses: net.buses,
            root: net.root,
            lines: net.lines,
            v_min: net.v_min,
            v_max: net.v_max,
            root_voltage: net.root_voltage,
        }
    }
}

impl NetworkModel {
    /// Builds a network with the default 0.95/1.05 p.u. limits and a 1.0 p.u. root.
    pub fn new(buses: Vec<String>, root: impl Into<String>, lines: Vec<Line>) -> Result<Self> {
        Self::with_limits(buses, root.into(), lines, DEFAULT_V_MIN, DEFAULT_V_MAX, 1.0)
    }

    pub fn with_limits(
        buses: Vec<String>,
        root: String,
        lines: Vec<Line>,
        v_min: f64,
        v_max: f64,
        root_voltage: f64,
    ) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::structural("network has no buses"));
        }
        if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
            return Err(Error::input(format!(
                "voltage bounds must satisfy v_min < v_max (got {v_min}, {v_max})"
            )));
        }
        if !(root_voltage.is_finite() && root_voltage > 0.0) {
            return Err(Error::input("root_voltage must be positive"));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.clone(), i).is_some() {
                return Err(Error::structural(format!("duplicate bus id '{b}'")));
            }
        }
        let root_idx = *index
            .get(&root)
            .ok_or_else(|| Error::structural(format!("root bus '{root}' is not in the bus list")))?;
        if lines.len() + 1 != buses.len() {
            return Err(Error::structural(format!(
                "radial network over {} buses needs {} lines, got {}",
                buses.len(),
                buses.len() - 1,
                lines.len()
            )));
        }

        let n = buses.len();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, line) in lines.iter().enumerate() {
            if !(line.r > 0.0 && line.r.is_finite() && line.x > 0.0 && line.x.is_finite()) {
                return Err(Error::input(format!(
                    "line {}-{} must have strictly positive r and x",
                    line.from, line.to
                )));
            }
            let a = *index
                .get(&line.from)
                .ok_or_else(|| Error::structural(format!("line references unknown bus '{}'", line.from)))?;
            let b = *index
                .get(&line.to)
                .ok_or_else(|| Error::structural(format!("line references unknown bus '{}'", line.to)))?;
            if a == b {
                return Err(Error::structural(format!("self-loop at bus '{}'", line.from)));
            }
            adjacency[a].push((b, k));
            adjacency[b].push((a, k));
        }

        let mut parent_line = vec![None; n];
        let mut parent_bus = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root_idx]);
        seen[root_idx] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, k) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent_line[v] = Some(k);
                    parent_bus[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        if order.len() != n {
            // n-1 edges and disconnected implies a cycle somewhere.
            return Err(Error::structural(
                "line set is not a spanning tree (network is disconnected or meshed)",
            ));
        }

        Ok(Self {
            buses,
            root,
            lines,
            v_min,
            v_max,
            root_voltage,
            index,
            root_idx,
            parent_line,
            parent_bus,
            order,
        })
    }

    pub fn buses(&self) -> &[String] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn root_index(&self) -> usize {
        self.root_idx
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn root_voltage(&self) -> f64 {
        self.root_voltage
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Parent bus of `bus` in the rooted tree (`None` for the root).
    pub fn parent(&self, bus: usize) -> Option<usize> {
        self.parent_bus[bus]
    }

    /// Line feeding `bus` from its parent (`None` for the root).
    pub fn feeding_line(&self, bus: usize) -> Option<&Line> {
        self.parent_line[bus].map(|k| &self.lines[k])
    }

    /// Breadth-first bus order starting at the root.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }
}

/// Linearized branch-flow voltages for per-bus net injections.
///
/// `p_kw` / `q_kvar` hold generation minus consumption at every bus, indexed
/// like [`NetworkModel::buses`]. The root injection is ignored (it is the slack
/// bus). Returns squared voltage magnitudes in per-unit².
pub fn solve_power_flow(
    net: &NetworkModel,
    p_kw: &[f64],
    q_kvar: &[f64],
    base: &PowerBase,
) -> Result<Vec<f64>> {
    let n = net.n_buses();
    if p_kw.len() != n || q_kvar.len() != n {
        return Err(Error::input(format!(
            "power flow needs one injection per bus ({n}); got p={} q={}",
            p_kw.len(),
            q_kvar.len()
        )));
    }
    if !(base.s_base_kva > 0.0) {
        return Err(Error::input("power base must be positive"));
    }
    // Branch flow into each bus = net withdrawal of its subtree.
    let mut flow_p: Vec<f64> = p_kw.iter().map(|p| -p / base.s_base_kva).collect();
    let mut flow_q: Vec<f64> = q_kvar.iter().map(|q| -q / base.s_base_kva).collect();
    for &bus in net.order.iter().rev() {
        if let Some(parent) = net.parent_bus[bus] {
            flow_p[parent] += flow_p[bus];
            flow_q[parent] += flow_q[bus];
        }
    }
    let mut v = vec![0.0; n];
    v[net.root_idx] = net.root_voltage;
    for &bus in net.order.iter().skip(1) {
        let parent = net.parent_bus[bus].expect("non-root bus has a parent");
        let line = &net.lines[net.parent_line[bus].expect("non-root bus has a line")];
        v[bus] = v[parent] - 2.0 * (line.r * flow_p[bus] + line.x * flow_q[bus]);
    }
    Ok(v)
}

/// Squared-norm penalty on bound violations, scaled by `-lambda` (never positive).
pub fn voltage_penalty(v: &[f64], net: &NetworkModel, lambda: f64) -> f64 {
    let sq: f64 = v
        .iter()
        .map(|&vi| {
            let viol = (vi - net.v_max).max(0.0) + (net.v_min - vi).max(0.0);
            viol * viol
        })
        .sum();
    if sq == 0.0 {
        0.0
    } else {
        -lambda * sq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus: String,
    /// Active demand, kW.
    pub demand_p: f64,
    /// Reactive demand, kVAr.
    pub demand_q: f64,
    pub priority: f64,
}

impl Load {
    /// Reactive-to-active ratio kept fixed during partial restoration.
    pub fn q_ratio(&self) -> f64 {
        self.demand_q / self.demand_p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadSet {
    pub loads: Vec<Load>,
}

impl LoadSet {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn priorities(&self) -> Vec<f64> {
        self.loads.iter().map(|l| l.priority).collect()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.loads.iter().map(|l| l.demand_p).collect()
    }

    fn validate(&self, net: &NetworkModel) -> Result<()> {
        if self.loads.is_empty() {
            return Err(Error::input("load set is empty"));
        }
        for l in &self.loads {
            if !(l.demand_p > 0.0 && l.demand_p.is_finite()) {
                return Err(Error::input(format!("load '{}' must have demand_p > 0", l.id)));
            }
            if !(l.demand_q >= 0.0 && l.demand_q.is_finite()) {
                return Err(Error::input(format!("load '{}' must have demand_q >= 0", l.id)));
            }
            if !(l.priority > 0.0 && l.priority <= 1.0) {
                return Err(Error::input(format!(
                    "load '{}' priority {} outside (0, 1]",
                    l.id, l.priority
                )));
            }
            if net.bus_index(&l.bus).is_none() {
                return Err(Error::input(format!(
                    "load '{}' attaches to unknown bus '{}'",
                    l.id, l.bus
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewableSource {
    Solar,
    Wind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DerKind {
    Fuel {
        #[serde(default)]
        p_min: f64,
        p_max: f64,
        /// Fuel reserve, kWh.
        reserve_kwh: f64,
    },
    Storage {
        charge_max: f64,
        discharge_max: f64,
        soc_min: f64,
        soc_max: f64,
        soc_init: f64,
        eta_charge: f64,
        eta_discharge: f64,
    },
    Renewable {
        capacity: f64,
        source: RenewableSource,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Der {
    pub id: String,
    pub bus: String,
    #[serde(flatten)]
    pub kind: DerKind,
    /// Power-factor angle bounds, radians.
    pub angle_min: f64,
    pub angle_max: f64,
}

impl Der {
    fn validate(&self, net: &NetworkModel) -> Result<()> {
        let bad = |msg: String| Err(Error::input(format!("DER '{}': {msg}", self.id)));
        if net.bus_index(&self.bus).is_none() {
            return bad(format!("unknown bus '{}'", self.bus));
        }
        if !(0.0 <= self.angle_min
            && self.angle_min <= self.angle_max
            && self.angle_max < std::f64::consts::FRAC_PI_2)
        {
            return bad("angle bounds must satisfy 0 <= lo <= hi < pi/2".into());
        }
        match self.kind {
            DerKind::Fuel {
                p_min,
                p_max,
                reserve_kwh,
            } => {
                if !(reserve_kwh > 0.0 && p_max > 0.0 && p_min >= 0.0 && p_min <= p_max) {
                    return bad("fuel needs reserve > 0 and 0 <= p_min <= p_max, p_max > 0".into());
                }
            }
            DerKind::Storage {
                charge_max,
                discharge_max,
                soc_min,
                soc_max,
                soc_init,
                eta_charge,
                eta_discharge,
            } => {
                if !(charge_max > 0.0 && discharge_max > 0.0) {
                    return bad("storage power bounds must be positive".into());
                }
                if !(soc_min <= soc_init && soc_init <= soc_max && soc_min < soc_max) {
                    return bad("storage needs soc_min <= soc_init <= soc_max".into());
                }
                if !(eta_charge > 0.0 && eta_charge <= 1.0 && eta_discharge > 0.0 && eta_discharge <= 1.0)
                {
                    return bad("storage efficiencies must lie in (0, 1]".into());
                }
            }
            DerKind::Renewable { capacity, .. } => {
                if !(capacity > 0.0) {
                    return bad("renewable capacity must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn angle_mid(&self) -> f64 {
        0.5 * (self.angle_min + self.angle_max)
    }
}

/// DER fleet in a fixed device order.
///
/// One device keeps a fixed power-factor angle (the midpoint of its bounds):
/// the first renewable if any exist, otherwise the last device. All others
/// are angle-controlled, giving the `|G| - 1` angle entries of an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DerFleet {
    pub ders: Vec<Der>,
}

impl DerFleet {
    pub fn len(&self) -> usize {
        self.ders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ders.is_empty()
    }

    pub fn fuel(&self) -> impl Iterator<Item = (usize, &Der)> {
        self.ders
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d.kind, DerKind::Fuel { .. }))
    }

    pub fn storage(&self) -> impl Iterator<Item = (usize, &Der)> {
        self.ders
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d.kind, DerKind::Storage { .. }))
    }

    pub fn renewables(&self) -> impl Iterator<Item = (usize, &Der)> {
        self.ders
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d.kind, DerKind::Renewable { .. }))
    }

    pub fn fuel_indices(&self) -> Vec<usize> {
        self.fuel().map(|(i, _)| i).collect()
    }

    pub fn storage_indices(&self) -> Vec<usize> {
        self.storage().map(|(i, _)| i).collect()
    }

    pub fn renewable_indices(&self) -> Vec<usize> {
        self.renewables().map(|(i, _)| i).collect()
    }

    /// Index of the device whose angle is not part of the action.
    pub fn fixed_angle_device(&self) -> usize {
        self.renewables()
            .map(|(i, _)| i)
            .next()
            .unwrap_or(self.ders.len().saturating_sub(1))
    }

    /// Devices selected for angle control, in fleet order.
    pub fn angle_controlled(&self) -> Vec<usize> {
        let fixed = self.fixed_angle_device();
        (0..self.ders.len()).filter(|&i| i != fixed).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Der> {
        self.ders.iter().find(|d| d.id == id)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridSystemSpec {
    name: String,
    #[serde(default)]
    base: PowerBase,
    #[serde(default = "default_voltage_penalty")]
    voltage_penalty: f64,
    #[serde(flatten)]
    network: NetworkSpec,
    loads: Vec<Load>,
    ders: Vec<Der>,
}

fn default_voltage_penalty() -> f64 {
    DEFAULT_VOLTAGE_PENALTY
}

/// A validated feeder: network, critical loads and DER fleet.
///
/// Serializes to a flat JSON object with `name`, `base`, `root`, `buses`,
/// `lines`, `v_min`, `v_max`, `root_voltage`, `voltage_penalty`, `loads` and
/// `ders`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridSystemSpec", into = "GridSystemSpec")]
pub struct GridSystem {
    pub name: String,
    pub base: PowerBase,
    /// Penalty weight lambda applied to squared voltage violations.
    pub voltage_penalty: f64,
    pub network: NetworkModel,
    pub loads: LoadSet,
    pub fleet: DerFleet,
}

impl TryFrom<GridSystemSpec> for GridSystem {
    type Error = Error;

    fn try_from(spec: GridSystemSpec) -> Result<Self> {
        let network = NetworkModel::try_from(spec.network)?;
        GridSystem::new(
            spec.name,
            network,
            LoadSet { loads: spec.loads },
            DerFleet { ders: spec.ders },
            spec.base,
            spec.voltage_penalty,
        )
    }
}

impl From<GridSystem> for GridSystemSpec {
    fn from(sys: GridSystem) -> Self {
        GridSystemSpec {
            name: sys.name,
            base: sys.base,
            voltage_penalty: sys.voltage_penalty,
            network: sys.network.into(),
            loads: sys.loads.loads,
            ders: sys.fleet.ders,
        }
    }
}

impl GridSystem {
    pub fn new(
        name: impl Into<String>,
        network: NetworkModel,
        loads: LoadSet,
        fleet: DerFleet,
        base: PowerBase,
        voltage_penalty: f64,
    ) -> Result<Self> {
        loads.validate(&network)?;
        if fleet.is_empty() {
            return Err(Error::input("DER fleet is empty"));
        }
        for der in &fleet.ders {
            der.validate(&network)?;
        }
        if !(voltage_penalty >= 0.0 && voltage_penalty.is_finite()) {
            return Err(Error::input("voltage_penalty must be >= 0"));
        }
        Ok(Self {
            name: name.into(),
            base,
            voltage_penalty,
            network,
            loads,
            fleet,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Bus index of every load, in load order.
    pub fn load_buses(&self) -> Vec<usize> {
        self.loads
            .loads
            .iter()
            .map(|l| self.network.bus_index(&l.bus).expect("validated"))
            .collect()
    }

    /// Bus index of every DER, in fleet order.
    pub fn der_buses(&self) -> Vec<usize> {
        self.fleet
            .ders
            .iter()
            .map(|d| self.network.bus_index(&d.bus).expect("validated"))
            .collect()
    }
}

fn line(from: &str, to: &str, z: LineImpedance) -> Line {
    Line {
        from: from.into(),
        to: to.into(),
        r: z.r,
        x: z.x,
    }
}

fn load(id: &str, bus: &str, p: f64, q: f64, priority: f64) -> Load {
    Load {
        id: id.into(),
        bus: bus.into(),
        demand_p: p,
        demand_q: q,
        priority,
    }
}

const QUARTER_PI: (f64, f64) = (0.0, FRAC_PI_4);

fn storage(id: &str, bus: &str) -> Der {
    Der {
        id: id.into(),
        bus: bus.into(),
        kind: DerKind::Storage {
            charge_max: 250.0,
            discharge_max: 250.0,
            soc_min: 160.0,
            soc_max: 1250.0,
            soc_init: 1000.0,
            eta_charge: 0.95,
            eta_discharge: 0.95,
        },
        angle_min: QUARTER_PI.0,
        angle_max: QUARTER_PI.1,
    }
}

fn microturbine(id: &str, bus: &str) -> Der {
    Der {
        id: id.into(),
        bus: bus.into(),
        kind: DerKind::Fuel {
            p_min: 0.0,
            p_max: 400.0,
            reserve_kwh: 1200.0,
        },
        angle_min: QUARTER_PI.0,
        angle_max: QUARTER_PI.1,
    }
}

fn renewable(id: &str, bus: &str, source: RenewableSource) -> Der {
    Der {
        id: id.into(),
        bus: bus.into(),
        kind: DerKind::Renewable {
            capacity: 300.0,
            source,
        },
        angle_min: QUARTER_PI.0,
        angle_max: QUARTER_PI.1,
    }
}

/// Priority vector of the 15 critical loads on the 13-bus analog.
pub const IEEE13_PRIORITIES: [f64; 15] = [
    1.0, 1.0, 0.9, 0.85, 0.8, 0.8, 0.75, 0.7, 0.65, 0.5, 0.45, 0.4, 0.3, 0.3, 0.2,
];

/// Balanced single-phase analog of the modified IEEE 13-bus feeder.
pub fn ieee13_analog() -> GridSystem {
    ieee13_analog_with(LineImpedance::default())
}

pub fn ieee13_analog_with(z: LineImpedance) -> GridSystem {
    let buses: Vec<String> = [
        "650", "632", "633", "634", "645", "646", "671", "692", "675", "684", "611", "652", "680",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let lines = vec![
        line("650", "632", z),
        line("632", "633", z),
        line("633", "634", z),
        line("632", "645", z),
        line("645", "646", z),
        line("632", "671", z),
        line("671", "692", z),
        line("692", "675", z),
        line("671", "684", z),
        line("684", "611", z),
        line("684", "652", z),
        line("671", "680", z),
    ];
    let network = NetworkModel::new(buses, "650", lines).expect("13-bus analog is radial");
    // Per-phase loads of the original feeder become separate loads on their bus;
    // the distributed 670 load is lumped at 632.
    let spec: [(&str, &str, f64, f64); 15] = [
        ("671", "671", 150.0, 86.0),
        ("634a", "634", 53.0, 37.0),
        ("634b", "634", 40.0, 30.0),
        ("634c", "634", 40.0, 30.0),
        ("675a", "675", 160.0, 62.0),
        ("675b", "675", 68.0, 27.0),
        ("675c", "675", 97.0, 38.0),
        ("645", "645", 57.0, 42.0),
        ("646", "646", 77.0, 44.0),
        ("692c", "692", 57.0, 50.0),
        ("611c", "611", 57.0, 27.0),
        ("652a", "652", 43.0, 29.0),
        ("670a", "632", 20.0, 11.0),
        ("670b", "632", 22.0, 13.0),
        ("670c", "632", 39.0, 23.0),
    ];
    let loads = LoadSet {
        loads: spec
            .iter()
            .zip(IEEE13_PRIORITIES)
            .map(|(&(id, bus, p, q), prio)| load(id, bus, p, q, prio))
            .collect(),
    };
    let fleet = DerFleet {
        ders: vec![
            storage("ST", "671"),
            microturbine("MT", "692"),
            renewable("PV", "634", RenewableSource::Solar),
            renewable("WT", "680", RenewableSource::Wind),
        ],
    };
    GridSystem::new(
        "ieee13",
        network,
        loads,
        fleet,
        PowerBase::default(),
        DEFAULT_VOLTAGE_PENALTY,
    )
    .expect("13-bus analog is valid")
}

/// Priority vector of the 20 critical loads on the 123-bus analog.
pub const IEEE123_PRIORITIES: [f64; 20] = [
    1.0, 1.0, 0.95, 0.9, 0.9, 0.85, 0.8, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4, 0.35,
    0.3, 0.25, 0.2,
];

/// Radial 123-bus analog: an 11-bus trunk with ten laterals, 20 critical
/// loads and six DERs (two of each kind).
pub fn ieee123_analog() -> GridSystem {
    ieee123_analog_with(LineImpedance::default())
}

pub fn ieee123_analog_with(z: LineImpedance) -> GridSystem {
    let name = |k: usize| k.to_string();
    let buses: Vec<String> = (1..=123).map(name).collect();
    let mut lines = Vec::with_capacity(122);
    for k in 2..=11 {
        lines.push(line(&name(k - 1), &name(k), z));
    }
    // Laterals start at buses 12..=21 (children of trunk buses 2..=11); every
    // deeper bus k extends the lateral through bus k - 10.
    for k in 12..=123 {
        lines.push(line(&name(k - 10), &name(k), z));
    }
    let network = NetworkModel::new(buses, "1", lines).expect("123-bus analog is radial");
    let load_buses = [
        2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30,
    ];
    let loads = LoadSet {
        loads: load_buses
            .iter()
            .zip(IEEE123_PRIORITIES)
            .enumerate()
            .map(|(i, (&bus, prio))| {
                let p = 40.0 + ((i * 37) % 100) as f64;
                let q = (p * (0.35 + 0.02 * (i % 10) as f64)).round();
                load(&format!("L{}", i + 1), &name(bus), p, q, prio)
            })
            .collect(),
    };
    let fleet = DerFleet {
        ders: vec![
            microturbine("MT1", "4"),
            microturbine("MT2", "9"),
            storage("ST1", "6"),
            storage("ST2", "11"),
            renewable("PV", "13", RenewableSource::Solar),
            renewable("WT", "17", RenewableSource::Wind),
        ],
    };
    GridSystem::new(
        "ieee123",
        network,
        loads,
        fleet,
        PowerBase::default(),
        DEFAULT_VOLTAGE_PENALTY,
    )
    .expect("123-bus analog is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> NetworkModel {
        NetworkModel::new(
            vec!["a".into(), "b".into()],
            "a",
            vec![Line {
                from: "a".into(),
                to: "b".into(),
                r: 0.01,
                x: 0.02,
            }],
        )
        .unwrap()
    }

    #[test]
    fn two_bus_drop() {
        let net = two_bus();
        let base = PowerBase::default();
        // Withdrawal of 0.1 + j0.05 p.u. at the child.
        let v = solve_power_flow(&net, &[0.0, -100.0], &[0.0, -50.0], &base).unwrap();
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 0.996).abs() < 1e-12);
    }

    #[test]
    fn zero_injection_is_flat() {
        let sys = ieee13_analog();
        let n = sys.network.n_buses();
        let v = solve_power_flow(&sys.network, &vec![0.0; n], &vec![0.0; n], &sys.base).unwrap();
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn missing_injection_is_input_error() {
        let net = two_bus();
        let err = solve_power_flow(&net, &[0.0], &[0.0, 0.0], &PowerBase::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn meshed_network_rejected() {
        let l = |a: &str, b: &str| Line {
            from: a.into(),
            to: b.into(),
            r: 0.01,
            x: 0.01,
        };
        let buses: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        // 3 lines over 4 buses but with a cycle a-b-c and d isolated.
        let err = NetworkModel::new(buses.clone(), "a", vec![l("a", "b"), l("b", "c"), l("c", "a")])
            .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
        let err = NetworkModel::new(buses, "a", vec![l("a", "b"), l("b", "c")]).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn nonpositive_impedance_rejected() {
        let err = NetworkModel::new(
            vec!["a".into(), "b".into()],
            "a",
            vec![Line {
                from: "a".into(),
                to: "b".into(),
                r: 0.0,
                x: 0.02,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn penalty_examples() {
        let net = two_bus();
        assert_eq!(voltage_penalty(&[1.0, 1.0], &net, 1e8), 0.0);
        let single = voltage_penalty(&[1.0, net.v_max() + 0.01], &net, 1e8);
        assert!((single + 1e4).abs() < 1e-6, "{single}");
        let double = voltage_penalty(&[net.v_min() - 0.01, net.v_max() + 0.01], &net, 1e8);
        assert!((double - 2.0 * single).abs() < 1e-6);
    }

    #[test]
    fn ieee13_inventory() {
        let sys = ieee13_analog();
        assert_eq!(sys.network.n_buses(), 13);
        assert_eq!(sys.network.lines().len(), 12);
        assert_eq!(sys.loads.len(), 15);
        assert_eq!(sys.loads.priorities(), IEEE13_PRIORITIES.to_vec());
        assert_eq!(sys.fleet.len(), 4);
        let st = sys.fleet.get("ST").unwrap();
        match st.kind {
            DerKind::Storage {
                charge_max,
                discharge_max,
                soc_min,
                soc_max,
                ..
            } => {
                assert_eq!((-charge_max, discharge_max), (-250.0, 250.0));
                assert_eq!((soc_min, soc_max), (160.0, 1250.0));
            }
            _ => panic!("ST is not storage"),
        }
        match sys.fleet.get("MT").unwrap().kind {
            DerKind::Fuel {
                p_min,
                p_max,
                reserve_kwh,
            } => assert_eq!((p_min, p_max, reserve_kwh), (0.0, 400.0, 1200.0)),
            _ => panic!("MT is not fuel"),
        }
        for d in &sys.fleet.ders {
            assert_eq!((d.angle_min, d.angle_max), (0.0, FRAC_PI_4));
        }
        assert_eq!(sys.fleet.angle_controlled().len(), 3);
    }

    #[test]
    fn ieee123_shape() {
        let sys = ieee123_analog();
        assert_eq!(sys.network.n_buses(), 123);
        assert_eq!(sys.network.lines().len(), 122);
        assert_eq!(sys.loads.len(), 20);
        assert_eq!(sys.fleet.len(), 6);
        assert_eq!(sys.fleet.fuel_indices().len(), 2);
        assert_eq!(sys.fleet.storage_indices().len(), 2);
        assert_eq!(sys.fleet.renewable_indices().len(), 2);
        for l in &sys.loads.loads {
            assert!((20.0..=160.0).contains(&l.demand_p));
        }
    }

    #[test]
    fn json_round_trip() {
        let sys = ieee13_analog();
        let text = sys.to_json().unwrap();
        let back = GridSystem::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.network.bfs_order(), sys.network.bfs_order());
    }

    #[test]
    fn json_rejects_bad_priority() {
        let mut value: serde_json::Value = serde_json::from_str(&ieee13_analog().to_json().unwrap()).unwrap();
        value["loads"][0]["priority"] = serde_json::json!(1.5);
        let err = GridSystem::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("priority"), "{err}");
    }
}
