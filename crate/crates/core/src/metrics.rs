//! Reliability indices, adaptation metrics and parameter-space diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::StepOutcome;
use crate::error::{Error, Result};
use crate::es::{fitness, Objective};
use crate::meta::MetaRecord;
use crate::policy::half_sq_dist;
use crate::scenario::Task;

pub const LAST_K: usize = 5;
pub const PROBE_POINTS: usize = 32;
pub const RESTORATION_THRESHOLDS: [f64; 3] = [50.0, 90.0, 95.0];

/// How partial service counts toward outage time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SaidiMode {
    /// A load at fraction `f` accrues outage at rate `1 - f`.
    #[default]
    Fractional,
    /// A load is out for the whole step while its fraction is below `threshold`.
    Binary { threshold: f64 },
}

/// Served kW per step (rows) and load (columns), taken from a trace.
pub fn served_matrix(trace: &[StepOutcome]) -> Vec<Vec<f64>> {
    trace.iter().map(|s| s.info.dispatch.served.clone()).collect()
}

fn demands(task: &Task) -> Vec<f64> {
    task.system.loads.loads.iter().map(|l| l.demand_p).collect()
}

/// Outage minutes per load.
pub fn outage_minutes(served: &[Vec<f64>], demand: &[f64], tau: f64, mode: SaidiMode) -> Vec<f64> {
    let step_min = tau * 60.0;
    (0..demand.len())
        .map(|i| {
            served
                .iter()
                .map(|row| {
                    let frac = (row[i] / demand[i]).clamp(0.0, 1.0);
                    let out = match mode {
                        SaidiMode::Fractional => 1.0 - frac,
                        SaidiMode::Binary { threshold } => f64::from(u8::from(frac < threshold)),
                    };
                    out * step_min
                })
                .sum()
        })
        .collect()
}

/// Average outage duration per load, minutes.
pub fn saidi_from_served(served: &[Vec<f64>], demand: &[f64], tau: f64, mode: SaidiMode) -> f64 {
    if demand.is_empty() {
        return 0.0;
    }
    outage_minutes(served, demand, tau, mode).iter().sum::<f64>() / demand.len() as f64
}

pub fn saidi(trace: &[StepOutcome], task: &Task, mode: SaidiMode) -> f64 {
    saidi_from_served(&served_matrix(trace), &demands(task), task.tau, mode)
}

/// Minutes until the served share of total demand first reaches `threshold_pct`.
/// Step `t` (1-based) ends at `t * tau * 60` minutes.
pub fn restoration_time_from_served(
    served: &[Vec<f64>],
    demand: &[f64],
    tau: f64,
    threshold_pct: f64,
) -> Option<f64> {
    let total: f64 = demand.iter().sum();
    let target = threshold_pct / 100.0;
    served
        .iter()
        .position(|row| row.iter().sum::<f64>() / total >= target)
        .map(|k| (k + 1) as f64 * (tau * 60.0))
}

pub fn restoration_time(trace: &[StepOutcome], task: &Task, threshold_pct: f64) -> Result<Option<f64>> {
    if !(threshold_pct > 0.0 && threshold_pct <= 100.0) {
        return Err(Error::input(format!("restoration threshold {threshold_pct} outside (0, 100]")));
    }
    Ok(restoration_time_from_served(
        &served_matrix(trace),
        &demands(task),
        task.tau,
        threshold_pct,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub saidi_minutes: f64,
    pub restore_50_minutes: Option<f64>,
    pub restore_90_minutes: Option<f64>,
    pub restore_95_minutes: Option<f64>,
    pub pct_restored_final: f64,
    pub outage_minutes: Vec<f64>,
}

pub fn reliability_report(trace: &[StepOutcome], task: &Task, mode: SaidiMode) -> ReliabilityReport {
    let served = served_matrix(trace);
    let demand = demands(task);
    let rt = |p| restoration_time_from_served(&served, &demand, task.tau, p);
    let total: f64 = demand.iter().sum();
    let last: f64 = served.last().map_or(0.0, |r| r.iter().sum());
    let outage = outage_minutes(&served, &demand, task.tau, mode);
    ReliabilityReport {
        saidi_minutes: outage.iter().sum::<f64>() / demand.len().max(1) as f64,
        restore_50_minutes: rt(RESTORATION_THRESHOLDS[0]),
        restore_90_minutes: rt(RESTORATION_THRESHOLDS[1]),
        restore_95_minutes: rt(RESTORATION_THRESHOLDS[2]),
        pct_restored_final: (100.0 * last / total).clamp(0.0, 100.0),
        outage_minutes: outage,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    /// Mean evaluation reward over the method's curve.
    pub mean_reward: f64,
    pub delta_init: f64,
    pub delta_r: f64,
    /// First iteration at which the method reaches the baseline's final
    /// last-k mean; absent if it never does.
    pub episodes_to_threshold: Option<usize>,
}

fn last_k_mean(curve: &[f64]) -> f64 {
    let k = LAST_K.min(curve.len());
    curve[curve.len() - k..].iter().sum::<f64>() / k as f64
}

pub fn adaptation_metrics(method: &[f64], baseline: &[f64]) -> Result<AdaptationReport> {
    if method.len() != baseline.len() {
        return Err(Error::input(format!(
            "curves differ in length ({} vs {})",
            method.len(),
            baseline.len()
        )));
    }
    if method.is_empty() {
        return Err(Error::input("adaptation metrics need non-empty curves"));
    }
    let target = last_k_mean(baseline);
    Ok(AdaptationReport {
        mean_reward: method.iter().sum::<f64>() / method.len() as f64,
        delta_init: method[0] - baseline[0],
        delta_r: last_k_mean(method) - target,
        episodes_to_threshold: method.iter().position(|&v| v >= target),
    })
}

/// Parameter-space stand-ins for the regret-analysis quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryDiagnostics {
    /// `taog[k]` averages the optimality gaps of the first `k + 1` tasks.
    pub taog: Vec<f64>,
    pub task_similarity: f64,
    pub path_length: f64,
    pub temporal_variability: f64,
    /// Always true: distances are measured between parameter vectors.
    pub proxy: bool,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    (2.0 * half_sq_dist(a, b)).sqrt()
}

/// Up to [`PROBE_POINTS`] evenly spaced points along the meta trajectory.
pub fn probe_set(record: &MetaRecord) -> Vec<Vec<f64>> {
    let mut all: Vec<&Vec<f64>> = Vec::new();
    for e in &record.entries {
        all.push(&e.phi_start);
        all.push(&e.phi_hat);
    }
    all.push(&record.final_params);
    if all.len() <= PROBE_POINTS {
        return all.into_iter().cloned().collect();
    }
    (0..PROBE_POINTS)
        .map(|j| all[j * (all.len() - 1) / (PROBE_POINTS - 1)].clone())
        .collect()
}

/// `objectives[m]` and `pseudo_optima[m]` belong to `record.entries[m]`;
/// stochastic objectives are averaged over `eval_seeds`.
pub fn theory_diagnostics<O: Objective>(
    record: &MetaRecord,
    objectives: &[O],
    pseudo_optima: &[Vec<f64>],
    eval_seeds: &[u64],
) -> Result<TheoryDiagnostics> {
    let m = record.entries.len();
    if pseudo_optima.len() != m {
        return Err(Error::input(format!(
            "need one pseudo-optimum per task ({m}), got {}",
            pseudo_optima.len()
        )));
    }
    if objectives.len() != m || m == 0 {
        return Err(Error::input("need one objective per recorded task"));
    }
    let f = |k: usize, theta: &[f64]| fitness(&objectives[k], theta, eval_seeds);

    let mut taog = Vec::with_capacity(m);
    let mut gap_sum = 0.0;
    for (k, e) in record.entries.iter().enumerate() {
        gap_sum += f(k, &pseudo_optima[k]) - f(k, &e.phi_hat);
        taog.push(gap_sum / (k + 1) as f64);
    }

    let dim = record.final_params.len();
    let mut mean_hat = vec![0.0; dim];
    for e in &record.entries {
        for (acc, v) in mean_hat.iter_mut().zip(&e.phi_hat) {
            *acc += v / m as f64;
        }
    }
    let avg_div = |phi: &[f64]| {
        record
            .entries
            .iter()
            .map(|e| half_sq_dist(&e.phi_hat, phi))
            .sum::<f64>()
            / m as f64
    };
    let task_similarity = avg_div(&record.final_params).min(avg_div(&mean_hat));

    let path_length = pseudo_optima.windows(2).map(|w| euclid(&w[1], &w[0])).sum();

    let probes = probe_set(record);
    let temporal_variability = (1..m)
        .map(|k| {
            probes
                .iter()
                .map(|p| (f(k, p) - f(k - 1, p)).abs())
                .fold(0.0, f64::max)
        })
        .sum();

    Ok(TheoryDiagnostics {
        taog,
        task_similarity,
        path_length,
        temporal_variability,
        proxy: true,
    })
}

/// One-sided sign-test p-value: `P(X >= successes)` for `X ~ Bin(n, 1/2)`.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in successes..=n {
        p += binomial(n, k);
    }
    p / 2f64.powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One row of the adaptation comparison: a test task under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRow {
    pub task: String,
    pub method: String,
    pub report: AdaptationReport,
}

/// Wide table: one line per task, a `(delta_init, delta_r)` pair per method.
pub fn write_adaptation_table(out: impl Write, rows: &[AdaptationRow], methods: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["task".to_string()];
    for m in methods {
        header.push(format!("{m}_delta_init"));
        header.push(format!("{m}_delta_r"));
    }
    w.write_record(&header)?;
    let mut tasks: Vec<&str> = Vec::new();
    for r in rows {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
    }
    for t in tasks {
        let mut line = vec![t.to_string()];
        for m in methods {
            match rows.iter().find(|r| r.task == t && r.method == *m) {
                Some(r) => {
                    line.push(format!("{:.2}", r.report.delta_init));
                    line.push(format!("{:.2}", r.report.delta_r));
                }
                None => line.extend(["".to_string(), "".to_string()]),
            }
        }
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// Reliability summary: metric rows, one column per method.
pub fn write_reliability_table(out: impl Write, columns: &[(&str, &[ReliabilityReport])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string()];
    header.extend(columns.iter().map(|(m, _)| m.to_string()));
    w.write_record(&header)?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let mut saidi = vec!["SAIDI (min)".to_string()];
    let mut r90 = vec!["90% restore (min)".to_string()];
    let mut pct = vec!["% restored".to_string()];
    for (_, reports) in columns {
        saidi.push(format!("{:.1}", mean(&reports.iter().map(|r| r.saidi_minutes).collect::<Vec<_>>())));
        let times: Vec<f64> = reports.iter().filter_map(|r| r.restore_90_minutes).collect();
        r90.push(if times.len() == reports.len() && !times.is_empty() {
            format!("{:.0}", mean(&times))
        } else {
            "not restored".to_string()
        });
        pct.push(format!(
            "{:.0}",
            mean(&reports.iter().map(|r| r.pct_restored_final).collect::<Vec<_>>())
        ));
    }
    for row in [saidi, r90, pct] {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{meta_train, quadratic_family, task_ids, MetaConfig, QuadraticTask};

    #[test]
    fn saidi_worked_example() {
        let tau = 1.0 / 12.0;
        // A restored from the 2-hour mark, B never; 6-hour horizon.
        let served: Vec<Vec<f64>> = (0..72).map(|k| vec![if k >= 24 { 50.0 } else { 0.0 }, 0.0]).collect();
        let s = saidi_from_served(&served, &[50.0, 80.0], tau, SaidiMode::Fractional);
        assert!((s - 240.0).abs() < 1e-9);
        let full: Vec<Vec<f64>> = vec![vec![50.0, 80.0]; 72];
        assert_eq!(saidi_from_served(&full, &[50.0, 80.0], tau, SaidiMode::Fractional), 0.0);
        let none: Vec<Vec<f64>> = vec![vec![0.0, 0.0]; 72];
        assert!((saidi_from_served(&none, &[50.0, 80.0], tau, SaidiMode::Fractional) - 360.0).abs() < 1e-9);
    }

    #[test]
    fn binary_mode_counts_partial_as_out() {
        let served = vec![vec![25.0]; 12];
        let frac = saidi_from_served(&served, &[50.0], 1.0 / 12.0, SaidiMode::Fractional);
        let bin = saidi_from_served(&served, &[50.0], 1.0 / 12.0, SaidiMode::Binary { threshold: 1.0 });
        assert!((frac - 30.0).abs() < 1e-9);
        assert!((bin - 60.0).abs() < 1e-9);
    }

    #[test]
    fn restoration_crossing_and_cap() {
        let tau = 1.0 / 12.0;
        let served: Vec<Vec<f64>> = (1..=72).map(|t| vec![if t >= 55 { 90.0 } else { 10.0 }]).collect();
        let rt = restoration_time_from_served(&served, &[100.0], tau, 90.0).unwrap();
        assert!((rt - 275.0).abs() < 1e-9);
        let capped = vec![vec![96.0]; 72];
        assert_eq!(restoration_time_from_served(&capped, &[100.0], tau, 100.0), None);
    }

    #[test]
    fn adaptation_examples() {
        let base = vec![10.0, 12.0, 13.0, 13.0, 13.0, 13.0, 13.0];
        let r = adaptation_metrics(&base, &base).unwrap();
        assert_eq!((r.delta_init, r.delta_r), (0.0, 0.0));
        let method: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, v)| v + if i == 0 { 279.37 } else { 6.19 })
            .collect();
        let r = adaptation_metrics(&method, &base).unwrap();
        assert!((r.delta_init - 279.37).abs() < 1e-9);
        assert!((r.delta_r - 6.19).abs() < 1e-9);
        assert_eq!(r.episodes_to_threshold, Some(0));
        let r = adaptation_metrics(&[4.0; 6], &[1.5; 6]).unwrap();
        assert_eq!((r.delta_init, r.delta_r), (2.5, 2.5));
        assert!(adaptation_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p(20, 20) - 0.5f64.powi(20)).abs() < 1e-18);
        assert!(sign_test_p(15, 20) < 0.05);
        assert!(sign_test_p(14, 20) > 0.05);
        assert_eq!(sign_test_p(0, 20), 1.0);
    }

    #[test]
    fn diagnostics_on_static_family() {
        let tasks = vec![QuadraticTask { center: vec![1.0, 1.0] }; 4];
        let (_, rec) = meta_train(&tasks, &task_ids(4), &[0.0, 0.0], &MetaConfig::default()).unwrap();
        let optima = vec![vec![1.0, 1.0]; 4];
        let d = theory_diagnostics(&rec, &tasks, &optima, &[0]).unwrap();
        assert_eq!(d.path_length, 0.0);
        assert_eq!(d.temporal_variability, 0.0);
        assert_eq!(d.taog.len(), 4);
        assert!(d.task_similarity >= 0.0);
        assert!(theory_diagnostics(&rec, &tasks, &optima[..3], &[0]).is_err());
    }

    #[test]
    fn path_length_matches_centers() {
        let tasks = quadratic_family(6, &[0.0, 0.0, 0.0], 1.0, 12);
        let (_, rec) = meta_train(&tasks, &task_ids(6), &[0.0; 3], &MetaConfig::default()).unwrap();
        let optima: Vec<Vec<f64>> = tasks.iter().map(|t| t.center.clone()).collect();
        let d = theory_diagnostics(&rec, &tasks, &optima, &[0]).unwrap();
        let mut expected = 0.0;
        for k in 1..6 {
            let diff: f64 = (0..3).map(|j| (optima[k][j] - optima[k - 1][j]).powi(2)).sum();
            expected += diff.sqrt();
        }
        assert_eq!(d.path_length, expected);
        assert!(d.temporal_variability > 0.0);
    }

    #[test]
    fn tables_have_expected_shape() {
        let rep = AdaptationReport {
            mean_reward: 1.0,
            delta_init: 2.0,
            delta_r: 0.5,
            episodes_to_threshold: None,
        };
        let rows = vec![
            AdaptationRow { task: "t1".into(), method: "mgf-rl".into(), report: rep.clone() },
            AdaptationRow { task: "t1".into(), method: "warm-start".into(), report: rep },
        ];
        let mut buf = Vec::new();
        write_adaptation_table(&mut buf, &rows, &["mgf-rl", "warm-start"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("task,mgf-rl_delta_init,mgf-rl_delta_r,warm-start_delta_init"));

        let rel = ReliabilityReport {
            saidi_minutes: 135.3,
            restore_50_minutes: Some(100.0),
            restore_90_minutes: None,
            restore_95_minutes: None,
            pct_restored_final: 96.0,
            outage_minutes: vec![],
        };
        let mut buf = Vec::new();
        write_reliability_table(&mut buf, &[("mgf-rl", std::slice::from_ref(&rel))]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("SAIDI (min),135.3"));
        assert!(text.contains("not restored"));
        assert!(text.contains("% restored,96"));
    }
}
