//! Small hand-checkable feeders and tasks used by tests and examples.

use crate::grid::{
    Der, DerFleet, DerKind, GridSystem, Line, Load, LoadSet, NetworkModel, PowerBase,
    RenewableSource, DEFAULT_VOLTAGE_PENALTY,
};
use crate::scenario::{ForecastTensor, RenewableProfile, Task};

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
    .expect("two-bus network")
}

fn loads(spec: &[(f64, f64)]) -> LoadSet {
    LoadSet {
        loads: spec
            .iter()
            .enumerate()
            .map(|(i, &(priority, demand))| Load {
                id: format!("L{}", i + 1),
                bus: "b".into(),
                demand_p: demand,
                demand_q: 0.0,
                priority,
            })
            .collect(),
    }
}

/// Two-bus task with the given `(priority, demand_kw)` loads and a single
/// 400 kW fuel unit holding `reserve_kwh`; no renewables, 5-minute steps.
pub fn micro_task(load_spec: &[(f64, f64)], horizon: usize, reserve_kwh: f64) -> Task {
    let fleet = DerFleet {
        ders: vec![Der {
            id: "MT".into(),
            bus: "b".into(),
            kind: DerKind::Fuel {
                p_min: 0.0,
                p_max: 400.0,
                reserve_kwh,
            },
            angle_min: 0.0,
            angle_max: 0.0,
        }],
    };
    let system = GridSystem::new(
        "micro",
        two_bus(),
        loads(load_spec),
        fleet,
        PowerBase::default(),
        DEFAULT_VOLTAGE_PENALTY,
    )
    .expect("micro system");
    let tau = 1.0 / 12.0;
    Task {
        id: "micro".into(),
        system,
        profiles: vec![],
        forecasts: vec![],
        error_level: 0.0,
        horizon,
        tau,
        kappa: tau,
        mu: 1.0,
        lambda: DEFAULT_VOLTAGE_PENALTY,
        seed: 0,
    }
}

/// Two-bus task with one 100 kW load, one battery whose charge headroom for
/// the first hour-long step is `headroom_kw`, and one 300 kW renewable that
/// produces nothing. Unit efficiencies keep the arithmetic exact.
pub fn storage_micro_task(headroom_kw: f64) -> Task {
    let fleet = DerFleet {
        ders: vec![
            Der {
                id: "ST".into(),
                bus: "b".into(),
                kind: DerKind::Storage {
                    charge_max: 250.0,
                    discharge_max: 250.0,
                    soc_min: 0.0,
                    soc_max: 1000.0,
                    soc_init: 1000.0 - headroom_kw,
                    eta_charge: 1.0,
                    eta_discharge: 1.0,
                },
                angle_min: 0.0,
                angle_max: 0.5,
            },
            Der {
                id: "PV".into(),
                bus: "b".into(),
                kind: DerKind::Renewable {
                    capacity: 300.0,
                    source: RenewableSource::Solar,
                },
                angle_min: 0.0,
                angle_max: 0.5,
            },
        ],
    };
    let system = GridSystem::new(
        "storage-micro",
        two_bus(),
        loads(&[(1.0, 100.0)]),
        fleet,
        PowerBase::default(),
        DEFAULT_VOLTAGE_PENALTY,
    )
    .expect("storage micro system");
    let horizon = 3;
    let profile = RenewableProfile {
        device: "PV".into(),
        capacity: 300.0,
        actual: vec![0.0; horizon],
    };
    let forecast = ForecastTensor {
        device: "PV".into(),
        capacity: 300.0,
        kappa: 1.0,
        tau: 1.0,
        lookahead_steps: 1,
        entries: vec![0.0; horizon],
    };
    Task {
        id: "storage-micro".into(),
        system,
        profiles: vec![profile],
        forecasts: vec![forecast],
        error_level: 0.0,
        horizon,
        tau: 1.0,
        kappa: 1.0,
        mu: 1.0,
        lambda: DEFAULT_VOLTAGE_PENALTY,
        seed: 0,
    }
}
