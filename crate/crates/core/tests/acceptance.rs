//! Acceptance criteria, one line of output each. Runs without the libtest
//! harness so the summary is always visible; exits non-zero on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use clrmeta::env::{self, action_dim, state_dim};
use clrmeta::es::{
    es_gradient_estimate, sample_perturbations, EsConfig, FitnessShaping,
};
use clrmeta::experiment::{self, RunConfig, METHOD_MGF};
use clrmeta::grid::{ieee123_analog, ieee13_analog, solve_power_flow, DerKind, Line, NetworkModel, PowerBase};
use clrmeta::meta::{meta_train, quadratic_family, task_ids, warm_start_train, EtaSchedule, MetaConfig};
use clrmeta::metrics::{restoration_time_from_served, saidi_from_served, sign_test_p, theory_diagnostics, SaidiMode};
use clrmeta::policy::init_params;
use clrmeta::scenario::{make_task_family, Scenario, TaskFamilySpec};
use clrmeta::seed;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Every file under `a` except timing records, compared byte for byte with `b`.
fn dirs_identical(a: &Path, b: &Path) -> Result<usize, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().unwrap() != "timing.json" {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
    walk(a, a, &mut fa);
    walk(b, b, &mut fb);
    if fa.keys().ne(fb.keys()) {
        return Err("file sets differ".into());
    }
    for (name, bytes) in &fa {
        if fb[name] != *bytes {
            return Err(format!("{name} differs"));
        }
    }
    Ok(fa.len())
}

fn benchmark() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let results = experiment::bench(dir.path(), 0).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let get = |name: &str| results.iter().find(|r| r.name == name).unwrap().best_fitness;
    let (f1, ackley, printed) = (get("f1"), get("ackley_peak"), get("f2_as_printed"));
    outcome(
        f1 >= 10.0 - 1e-2 && ackley >= 100.0 - 0.5 && secs < 10.0,
        format!("f1 best {f1:.6}, ackley best {ackley:.4}, printed-form f2 best {printed:.3}, {secs:.2}s"),
    )
}

fn estimator() -> Outcome {
    let started = Instant::now();
    let center = [1.0, -2.0, 0.5];
    let theta = [0.3, 0.1, -0.4];
    let f = |x: &[f64]| -x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
    // Gaussian smoothing shifts a quadratic by a constant, so the gradient is unchanged.
    let truth: Vec<f64> = theta.iter().zip(&center).map(|(t, c)| -2.0 * (t - c)).collect();
    let sigma = 0.1;
    let mut worst_z: f64 = 0.0;
    for mirrored in [false, true] {
        let cfg = EsConfig {
            n: 10_000,
            sigma,
            mirrored,
            fitness_shaping: FitnessShaping::None,
            seed: 17,
            ..EsConfig::default()
        };
        let eps = sample_perturbations(3, &cfg, 1);
        let fit: Vec<f64> = eps
            .iter()
            .map(|e| f(&theta.iter().zip(e).map(|(t, e)| t + sigma * e).collect::<Vec<_>>()))
            .collect();
        let g = es_gradient_estimate(&fit, &eps, sigma, FitnessShaping::None);
        // Independent samples: single draws, or antithetic pair averages.
        let terms: Vec<Vec<f64>> = if mirrored {
            (0..eps.len() / 2)
                .map(|k| {
                    (0..3)
                        .map(|j| (fit[2 * k] * eps[2 * k][j] + fit[2 * k + 1] * eps[2 * k + 1][j]) / (2.0 * sigma))
                        .collect()
                })
                .collect()
        } else {
            eps.iter().zip(&fit).map(|(e, y)| e.iter().map(|ej| y * ej / sigma).collect()).collect()
        };
        let m = terms.len() as f64;
        for j in 0..3 {
            let mean = terms.iter().map(|t| t[j]).sum::<f64>() / m;
            let var = terms.iter().map(|t| (t[j] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let se = (var / m).sqrt();
            assert!((mean - g[j]).abs() < 1e-9 * (1.0 + mean.abs()));
            worst_z = worst_z.max((g[j] - truth[j]).abs() / se);
        }
    }

    // Affine objective: with mirrored pairs the constant offset drops out and
    // each pair contributes exactly 2 (a . eps) eps.
    let a = [1.5, -0.5, 2.0];
    let cfg = EsConfig {
        n: 20,
        sigma,
        mirrored: true,
        fitness_shaping: FitnessShaping::None,
        seed: 3,
        ..EsConfig::default()
    };
    let eps = sample_perturbations(3, &cfg, 1);
    let mut affine_err: f64 = 0.0;
    for offset in [0.0, 1000.0] {
        let fit: Vec<f64> = eps
            .iter()
            .map(|e| offset + (0..3).map(|j| a[j] * (theta[j] + sigma * e[j])).sum::<f64>())
            .collect();
        let g = es_gradient_estimate(&fit, &eps, sigma, FitnessShaping::None);
        for j in 0..3 {
            let oracle: f64 = (0..cfg.n / 2)
                .map(|k| {
                    let e = &eps[2 * k];
                    2.0 * (0..3).map(|i| a[i] * e[i]).sum::<f64>() * e[j]
                })
                .sum::<f64>()
                / cfg.n as f64;
            affine_err = affine_err.max((g[j] - oracle).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst_z <= 3.0 && affine_err < 1e-9 && secs < 5.0,
        format!("max |estimate - gradient| = {worst_z:.2} SE, affine deviation {affine_err:.1e}, {secs:.2}s"),
    )
}

/// Dense solve of flow conservation and the voltage-drop equations.
fn dense_voltages(net: &NetworkModel, p: &[f64], q: &[f64], base: &PowerBase) -> Vec<f64> {
    let n = net.n_buses();
    let root = net.root_index();
    let others: Vec<usize> = (0..n).filter(|&b| b != root).collect();
    let pos = |b: usize| others.iter().position(|&o| o == b);
    let lines = net.lines();
    let idx = |id: &str| net.bus_index(id).unwrap();
    // a[row(bus), line] = +1 if the line ends at the bus, -1 if it starts there.
    let mut a = DMatrix::<f64>::zeros(n - 1, lines.len());
    for (k, l) in lines.iter().enumerate() {
        if let Some(r) = pos(idx(&l.to)) {
            a[(r, k)] += 1.0;
        }
        if let Some(r) = pos(idx(&l.from)) {
            a[(r, k)] -= 1.0;
        }
    }
    let wp = DVector::from_iterator(n - 1, others.iter().map(|&b| -p[b] / base.s_base_kva));
    let wq = DVector::from_iterator(n - 1, others.iter().map(|&b| -q[b] / base.s_base_kva));
    let lu = a.clone().lu();
    let fp = lu.solve(&wp).unwrap();
    let fq = lu.solve(&wq).unwrap();
    let v0 = net.root_voltage();
    let rhs = DVector::from_iterator(
        lines.len(),
        lines.iter().enumerate().map(|(k, l)| {
            let drop = -2.0 * (l.r * fp[k] + l.x * fq[k]);
            if idx(&l.from) == root {
                drop + v0
            } else if idx(&l.to) == root {
                drop - v0
            } else {
                drop
            }
        }),
    );
    let v_rest = a.transpose().lu().solve(&rhs).unwrap();
    let mut v = vec![v0; n];
    for (r, &b) in others.iter().enumerate() {
        v[b] = v_rest[r];
    }
    v
}

fn random_radial(rng: &mut impl Rng) -> (NetworkModel, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(4..=30);
    let mut names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut lines = Vec::with_capacity(n - 1);
    for i in 1..n {
        let parent = rng.random_range(0..i);
        let (from, to) = if rng.random_bool(0.8) { (parent, i) } else { (i, parent) };
        lines.push(Line {
            from: names[from].clone(),
            to: names[to].clone(),
            r: rng.random_range(0.001..0.05),
            x: rng.random_range(0.001..0.05),
        });
    }
    let root = names[0].clone();
    for i in (1..n).rev() {
        names.swap(i, rng.random_range(0..=i));
    }
    let net = NetworkModel::new(names, root, lines).unwrap();
    let p = (0..n).map(|_| rng.random_range(-300.0..300.0)).collect();
    let q = (0..n).map(|_| rng.random_range(-150.0..150.0)).collect();
    (net, p, q)
}

fn power_flow_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = seed::rng(2024);
    let base = PowerBase::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (net, p, q) = random_radial(&mut rng);
        let v = solve_power_flow(&net, &p, &q, &base).unwrap();
        let oracle = dense_voltages(&net, &p, &q, &base);
        for (a, b) in v.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(worst < 1e-9 && secs < 5.0, format!("max |dv| {worst:.2e} p.u.^2 over 100 networks, {secs:.2}s"))
}

fn conservation() -> Outcome {
    let started = Instant::now();
    let spec = TaskFamilySpec {
        count: 10,
        error_level: 0.1,
        seed: 5,
        ..TaskFamilySpec::default()
    };
    let tasks = make_task_family(&ieee13_analog(), &spec).unwrap();
    let mut rng = seed::rng(99);
    let (mut worst_balance, mut worst_fuel, mut box_violations, mut reward_mismatch, mut steps) =
        (0.0f64, 0.0f64, 0usize, 0usize, 0usize);
    for e in 0..1000u64 {
        let task = &tasks[e as usize % tasks.len()];
        let forecasts = task.episode_forecasts(Scenario::Resample(e));
        let mut state = env::reset_with(task, &forecasts);
        let fuel_start = state.fuel.clone();
        let mut fuel_used = vec![0.0; state.fuel.len()];
        let d = action_dim(&task.system);
        let style = e % 4;
        while !state.is_terminal(task) {
            let raw: Vec<f64> = (0..d)
                .map(|_| match style {
                    0 => rng.random_range(-1.0..=1.0),
                    1 => if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    2 => rng.random_range(-3.0..3.0),
                    _ => rng.random_range(0.5..=1.0),
                })
                .collect();
            let out = env::step(&state, &raw, task, &forecasts).unwrap();
            let dsp = &out.info.dispatch;
            let charge: f64 = dsp.storage_p.iter().map(|p| (-p).max(0.0)).sum();
            let discharge: f64 = dsp.storage_p.iter().map(|p| p.max(0.0)).sum();
            let lhs = dsp.served.iter().sum::<f64>() + charge;
            let rhs = dsp.renewable_p.iter().sum::<f64>() + discharge + dsp.fuel_p.iter().sum::<f64>();
            worst_balance = worst_balance.max((lhs - rhs).abs()).max(out.info.balance_residual.abs());
            let t = &out.info.terms;
            if out.reward != t.priority - t.fluctuation + t.voltage {
                reward_mismatch += 1;
            }
            let fleet = &task.system.fleet;
            for (k, (_, der)) in fleet.storage().enumerate() {
                if let DerKind::Storage { soc_min, soc_max, .. } = der.kind {
                    let s = out.state.soc[k];
                    box_violations += usize::from(!(soc_min..=soc_max).contains(&s));
                }
            }
            for (k, (_, der)) in fleet.fuel().enumerate() {
                if let DerKind::Fuel { reserve_kwh, .. } = der.kind {
                    let f = out.state.fuel[k];
                    box_violations += usize::from(!(0.0..=reserve_kwh).contains(&f));
                }
                fuel_used[k] += task.tau * dsp.fuel_p[k];
            }
            state = out.state;
            steps += 1;
        }
        for k in 0..fuel_used.len() {
            worst_fuel = worst_fuel.max((fuel_start[k] - state.fuel[k] - fuel_used[k]).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst_balance < 1e-9 && worst_fuel < 1e-9 && box_violations == 0 && reward_mismatch == 0 && secs < 60.0,
        format!(
            "{steps} steps: max balance residual {worst_balance:.1e} kW, fuel identity error {worst_fuel:.1e} kWh, \
             {box_violations} box violations, {reward_mismatch} reward mismatches, {secs:.1}s"
        ),
    )
}

fn dimensions() -> Outcome {
    let spec = TaskFamilySpec {
        count: 1,
        ..TaskFamilySpec::default()
    };
    let dims: Vec<(usize, usize)> = [ieee13_analog(), ieee123_analog()]
        .iter()
        .map(|g| {
            let t = &make_task_family(g, &spec).unwrap()[0];
            (state_dim(t), action_dim(&t.system))
        })
        .collect();
    outcome(
        dims == [(114, 20), (121, 29)],
        format!("13-bus {:?}, 123-bus {:?}", dims[0], dims[1]),
    )
}

fn desk_config(seed: u64) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{"family": {{"count": 16, "horizon": 24, "seed": 1}}, "n_train": 12,
            "meta": {{"es": {{"n": 20, "iters": 40}}, "finetune_budget": 40}}, "seed": {seed}}}"#
    ))
    .unwrap()
}

const SEEDS: u64 = 5;

fn adaptation(root: &Path) -> Outcome {
    let started = Instant::now();
    let mut per_task: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in 0..SEEDS {
        let cfg = desk_config(s);
        let out = root.join(format!("seed{s}"));
        experiment::train_meta(&cfg, &out).unwrap();
        let eval = experiment::finetune_eval(&cfg, &out, None).unwrap();
        for row in eval.adaptation.iter().filter(|r| r.method == METHOD_MGF) {
            let e = per_task.entry(row.task.clone()).or_default();
            e.0.push(row.report.delta_init);
            e.1.push(row.report.delta_r);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let mut wins = 0;
    let mut parts = Vec::new();
    for (task, (di, dr)) in &per_task {
        let (mi, mr) = (median(di.clone()), median(dr.clone()));
        wins += usize::from(mi > 0.0 && mr >= 0.0);
        parts.push(format!("{task} ({mi:.1}, {mr:.1})"));
    }
    outcome(
        per_task.len() == 4 && wins >= 3 && secs < 1800.0,
        format!(
            "{wins}/4 test tasks with median delta_init > 0 and delta_r >= 0: {}; {secs:.0}s",
            parts.join(", ")
        ),
    )
}

fn warm_start_equivalence() -> Outcome {
    let family = quadratic_family(6, &[1.0, -1.0, 2.0, 0.0, 0.5], 0.5, 8);
    let ids = task_ids(family.len());
    let es = EsConfig {
        n: 10,
        sigma: 0.1,
        alpha: 0.05,
        iters: 15,
        ..EsConfig::default()
    };
    let cfg = MetaConfig {
        es: es.clone(),
        eta: EtaSchedule::Constant { eta: 1.0 },
        seed: 21,
        ..MetaConfig::default()
    };
    let phi0 = vec![0.0; 5];
    let (a, ra) = meta_train(&family, &ids, &phi0, &cfg).unwrap();
    let (b, rb) = warm_start_train(&family, &ids, &phi0, &MetaConfig { eta: EtaSchedule::InverseM, ..cfg.clone() }).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let quad_ok = bits(&a) == bits(&b) && ra == rb;

    // Same check on a small restoration family.
    let spec = TaskFamilySpec {
        count: 3,
        horizon: 6,
        error_level: 0.1,
        seed: 4,
        ..TaskFamilySpec::default()
    };
    let tasks = make_task_family(&ieee13_analog(), &spec).unwrap();
    let template = init_params(state_dim(&tasks[0]), action_dim(&tasks[0].system), &[8], 2).unwrap();
    let objs: Vec<_> = tasks
        .iter()
        .map(|t| clrmeta::es::ClrObjective::new(t, template.shape.clone(), template.normalizer.clone()))
        .collect();
    let ids: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
    let cfg = MetaConfig {
        es: EsConfig { n: 6, iters: 3, ..es },
        eta: EtaSchedule::Constant { eta: 1.0 },
        seed: 5,
        ..MetaConfig::default()
    };
    let (a, ra) = meta_train(&objs, &ids, &template.theta, &cfg).unwrap();
    let (b, rb) = warm_start_train(&objs, &ids, &template.theta, &cfg).unwrap();
    let clr_ok = bits(&a) == bits(&b) && ra == rb;
    outcome(
        quad_ok && clr_ok,
        format!("bit-identical parameters and records: quadratic {quad_ok}, restoration {clr_ok}"),
    )
}

fn forecast_monotonicity() -> Outcome {
    let started = Instant::now();
    let (mut clean, mut noisy) = (0.0, 0.0);
    for s in 0..SEEDS {
        let cfg = desk_config(s);
        clean += experiment::sweep_cell(&cfg, 0.0, 4.0).unwrap().mean_reward / SEEDS as f64;
        noisy += experiment::sweep_cell(&cfg, 0.25, 4.0).unwrap().mean_reward / SEEDS as f64;
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        noisy < clean,
        format!("mean reward {clean:.2} at 0% error vs {noisy:.2} at 25%, {secs:.0}s"),
    )
}

struct SyntheticRun {
    taog: Vec<f64>,
    path_length: f64,
    path_oracle: f64,
}

fn synthetic_run(seed: u64, iters: usize) -> SyntheticRun {
    let family = quadratic_family(10, &[2.0, -1.0, 0.5, 3.0], 0.3, seed);
    let ids = task_ids(family.len());
    let cfg = MetaConfig {
        es: EsConfig {
            n: 20,
            sigma: 0.1,
            alpha: 0.02,
            iters,
            fitness_shaping: FitnessShaping::None,
            ..EsConfig::default()
        },
        eta: EtaSchedule::InverseM,
        seed,
        ..MetaConfig::default()
    };
    let (_, record) = meta_train(&family, &ids, &[0.0; 4], &cfg).unwrap();
    let centers: Vec<Vec<f64>> = family.iter().map(|t| t.center.clone()).collect();
    let d = theory_diagnostics(&record, &family, &centers, &[0]).unwrap();
    let path_oracle = centers
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum();
    SyntheticRun {
        taog: d.taog,
        path_length: d.path_length,
        path_oracle,
    }
}

fn theory() -> Outcome {
    let started = Instant::now();
    let runs = 20u64;
    let mut successes = 0;
    let mut path_err: f64 = 0.0;
    let mut by_budget = Vec::new();
    for iters in [10, 40, 160] {
        let mut total = 0.0;
        for s in 0..runs {
            let r = synthetic_run(s, iters);
            path_err = path_err.max((r.path_length - r.path_oracle).abs());
            if iters == 40 && r.taog[r.taog.len() - 1] < r.taog[0] {
                successes += 1;
            }
            total += r.taog[r.taog.len() - 1] / runs as f64;
        }
        by_budget.push(total);
    }
    let p = sign_test_p(successes, runs as usize);
    let decreasing = by_budget.windows(2).all(|w| w[1] < w[0]);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        path_err < 1e-12 && p < 0.05 && decreasing && secs < 300.0,
        format!(
            "path length error {path_err:.1e}; TAOG(M) < TAOG(1) on {successes}/{runs} seeds (p = {p:.2e}); \
             mean TAOG(M) for T = 10/40/160: {:.4}/{:.4}/{:.6}; {secs:.1}s",
            by_budget[0], by_budget[1], by_budget[2]
        ),
    )
}

fn reliability_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = seed::rng(7);
    let mut mismatches = 0;
    for _ in 0..100 {
        let (tau, step_minutes) = [(1.0 / 12.0, 5usize), (0.25, 15), (1.0, 60)][rng.random_range(0..3)];
        let n_loads = rng.random_range(1..=8);
        let steps = rng.random_range(1..=60);
        // Dyadic demands and eighth fractions keep every sum exact.
        let demand: Vec<f64> = (0..n_loads).map(|_| 8.0 * rng.random_range(1..=32) as f64).collect();
        let monotone = rng.random_bool(0.5);
        let mut level = vec![0u32; n_loads];
        let served: Vec<Vec<f64>> = (0..steps)
            .map(|_| {
                (0..n_loads)
                    .map(|i| {
                        level[i] = if monotone {
                            (level[i] + rng.random_range(0..=2)).min(8)
                        } else {
                            rng.random_range(0..=8)
                        };
                        demand[i] * level[i] as f64 / 8.0
                    })
                    .collect()
            })
            .collect();

        // Minute-by-minute integration of each load's unserved fraction.
        let per_load: Vec<f64> = (0..n_loads)
            .map(|i| {
                (0..steps * step_minutes)
                    .map(|minute| 1.0 - served[minute / step_minutes][i] / demand[i])
                    .sum()
            })
            .collect();
        let saidi_oracle = per_load.iter().sum::<f64>() / n_loads as f64;
        if saidi_from_served(&served, &demand, tau, SaidiMode::Fractional) != saidi_oracle {
            mismatches += 1;
        }

        let total: f64 = demand.iter().sum();
        let mut previous = None;
        for pct in [12.5, 50.0, 75.0, 90.0, 95.0, 100.0] {
            let oracle = (0..steps * step_minutes)
                .find(|&minute| served[minute / step_minutes].iter().sum::<f64>() / total >= pct / 100.0)
                .map(|minute| ((minute / step_minutes + 1) * step_minutes) as f64);
            let got = restoration_time_from_served(&served, &demand, tau, pct);
            if got != oracle {
                mismatches += 1;
            }
            if monotone {
                if let (Some(a), Some(b)) = (previous, got) {
                    if b < a {
                        mismatches += 1;
                    }
                }
                if got.is_some() {
                    previous = got;
                }
            }
        }
    }

    let example: Vec<Vec<f64>> = (0..72).map(|k| vec![if k >= 24 { 50.0 } else { 0.0 }, 0.0]).collect();
    let worked = saidi_from_served(&example, &[50.0, 80.0], 1.0 / 12.0, SaidiMode::Fractional);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && worked == 240.0 && secs < 5.0,
        format!("{mismatches} mismatches over 100 traces, worked example {worked} min, {secs:.2}s"),
    )
}

fn determinism(desk_root: &Path) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    experiment::bench(&a, 0).unwrap();
    experiment::bench(&b, 0).unwrap();
    let bench = dirs_identical(&a, &b);

    let cfg = desk_config(0);
    let again = dir.path().join("desk");
    experiment::train_meta(&cfg, &again).unwrap();
    experiment::finetune_eval(&cfg, &again, None).unwrap();
    let desk = dirs_identical(&desk_root.join("seed0"), &again);
    let describe = |r: &Result<usize, String>| match r {
        Ok(n) => format!("{n} files identical"),
        Err(e) => e.clone(),
    };
    outcome(
        bench.is_ok() && desk.is_ok(),
        format!("bench: {}; desk run: {}", describe(&bench), describe(&desk)),
    )
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let desk = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("benchmark optimization", Box::new(benchmark)),
        ("estimator correctness", Box::new(estimator)),
        ("power-flow oracle", Box::new(power_flow_oracle)),
        ("environment conservation", Box::new(conservation)),
        ("dimension bookkeeping", Box::new(dimensions)),
        ("meta-adaptation advantage", Box::new(|| adaptation(desk.path()))),
        ("warm-start equivalence", Box::new(warm_start_equivalence)),
        ("forecast-error monotonicity", Box::new(forecast_monotonicity)),
        ("theory diagnostics", Box::new(theory)),
        ("reliability metrics oracle", Box::new(reliability_oracle)),
        ("determinism", Box::new(|| determinism(desk.path()))),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        // Determinism reuses the adaptation run directory.
        if only.is_some_and(|o| o != id && !(o == 11 && id == 6)) {
            continue;
        }
        let r = run();
        failed += usize::from(!r.pass);
        println!("{} [{id:>2}] {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
