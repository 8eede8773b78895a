//! The nine experiments. Each expands into (point, seed) cells that run
//! independently; results come back in canonical order regardless of how
//! the cells were scheduled.

use std::time::Instant;

use daur_core::daur::{
    association_block, daur_run, random_association, run_method, starting_point, DaurConfig, Method, RunReport,
    ASSOCIATION_SALT,
};
use daur_core::model::{generate_network, Decision};
use daur_core::qcqp::{optimal_gamma, unstack_q};
use daur_core::rounding::compare_roundings;
use daur_core::sdp::extract_q;
use daur_core::{Preference, ScenarioParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::HarnessConfig;
use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    BaselineCompare,
    SweepBandwidth,
    SweepServerFreq,
    SweepUserFreq,
    SweepPower,
    SweepWeights,
    SweepPreference,
    RoundingCompare,
    DcPenaltyStudy,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::BaselineCompare,
        Experiment::SweepBandwidth,
        Experiment::SweepServerFreq,
        Experiment::SweepUserFreq,
        Experiment::SweepPower,
        Experiment::SweepWeights,
        Experiment::SweepPreference,
        Experiment::RoundingCompare,
        Experiment::DcPenaltyStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BaselineCompare => "baseline_compare",
            Experiment::SweepBandwidth => "sweep_bandwidth",
            Experiment::SweepServerFreq => "sweep_server_freq",
            Experiment::SweepUserFreq => "sweep_user_freq",
            Experiment::SweepPower => "sweep_power",
            Experiment::SweepWeights => "sweep_weights",
            Experiment::SweepPreference => "sweep_preference",
            Experiment::RoundingCompare => "rounding_compare",
            Experiment::DcPenaltyStudy => "dc_penalty_study",
        }
    }

    pub fn parse(name: &str) -> Result<Experiment, HarnessError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| HarnessError::UnknownExperiment(name.to_string()))
    }

    /// Default values for the numeric sweeps; `None` for the rest.
    pub fn default_sweep(self) -> Option<Vec<f64>> {
        let steps = |k: usize, f: fn(f64) -> f64| Some((1..=k).map(|i| f(i as f64)).collect());
        match self {
            Experiment::SweepBandwidth => steps(10, |i| i * 1e6),
            Experiment::SweepServerFreq => steps(10, |i| i * 2e9),
            Experiment::SweepUserFreq => steps(10, |i| i * 1e8),
            Experiment::SweepPower => steps(10, |i| i / 50.0),
            Experiment::SweepWeights => steps(9, |i| i / 10.0),
            _ => None,
        }
    }

    fn sweep_key(self) -> &'static str {
        match self {
            Experiment::SweepBandwidth => "bandwidth_hz",
            Experiment::SweepServerFreq => "server_freq_hz",
            Experiment::SweepUserFreq => "user_freq_hz",
            Experiment::SweepPower => "user_power_w",
            Experiment::SweepWeights => "omega_t",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub config: HarnessConfig,
}

/// One output line. Column order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub point: String,
    pub seed: u64,
    pub method: String,
    pub dpe: f64,
    pub outer_rounds: usize,
    pub fp_rounds: usize,
    pub qcqp_rounds: usize,
    pub wall_ms: f64,
    /// Empty unless the cell failed.
    pub error: String,
}

pub const ROW_HEADER: [&str; 10] =
    ["experiment", "point", "seed", "method", "dpe", "outer_rounds", "fp_rounds", "qcqp_rounds", "wall_ms", "error"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub point: String,
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_dpe: f64,
    pub std_dpe: f64,
    pub mean_outer_rounds: f64,
    pub mean_fp_rounds: f64,
    pub mean_qcqp_rounds: f64,
    pub mean_wall_ms: f64,
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "experiment",
    "point",
    "method",
    "runs",
    "failures",
    "mean_dpe",
    "std_dpe",
    "mean_outer_rounds",
    "mean_fp_rounds",
    "mean_qcqp_rounds",
    "mean_wall_ms",
];

/// DC iterations of the first association block at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcTraceRow {
    pub point: String,
    pub seed: u64,
    pub block: usize,
    pub round: usize,
    pub objective: f64,
    pub penalty: f64,
    pub trace: f64,
}

pub const DC_TRACE_HEADER: [&str; 7] = ["point", "seed", "block", "round", "objective", "penalty", "trace"];

#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord {
    pub experiment: String,
    pub point: String,
    pub seed: u64,
    pub report: RunReport,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
    pub dc_trace: Vec<DcTraceRow>,
    pub reports: Vec<ReportRecord>,
}

#[derive(Debug, Clone)]
enum Task {
    Methods(Vec<Method>),
    Rounding,
    DcVarpi,
    DcSize,
}

#[derive(Debug, Clone)]
struct Point {
    label: String,
    params: ScenarioParams,
    solver: DaurConfig,
    task: Task,
}

fn label_value(v: f64) -> String {
    format!("{v}")
}

fn points(spec: &ExperimentSpec) -> Result<Vec<Point>, HarnessError> {
    let cfg = &spec.config;
    let methods = cfg.methods()?;
    let base = |label: String, params: ScenarioParams, task: Task| Point { label, params, solver: cfg.solver.clone(), task };
    let exp = spec.experiment;
    if cfg.harness.sweep_values.is_some() && exp.default_sweep().is_none() {
        return Err(HarnessError::Config(format!("sweep_values does not apply to {}", exp.name())));
    }
    let out = match exp {
        Experiment::BaselineCompare => vec![base("default".into(), cfg.scenario.clone(), Task::Methods(methods))],
        Experiment::SweepPreference => [Preference::Low, Preference::Medium, Preference::High, Preference::Mixed]
            .into_iter()
            .map(|p| {
                let params = ScenarioParams { preference: p, ..cfg.scenario.clone() };
                base(format!("preference={}", p.name()), params, Task::Methods(methods.clone()))
            })
            .collect(),
        Experiment::RoundingCompare => vec![base("default".into(), cfg.scenario.clone(), Task::Rounding)],
        Experiment::DcPenaltyStudy => {
            let mut pts: Vec<Point> = cfg
                .harness
                .varpi_values
                .iter()
                .map(|&v| Point {
                    label: format!("varpi={}", label_value(v)),
                    params: cfg.scenario.clone(),
                    solver: DaurConfig { varpi: v, ..cfg.solver.clone() },
                    task: Task::DcVarpi,
                })
                .collect();
            for &[n, m] in &cfg.harness.dc_sizes {
                let params = ScenarioParams { n_users: n, n_servers: m, ..cfg.scenario.clone() };
                pts.push(base(format!("size={n}x{m}"), params, Task::DcSize));
            }
            pts
        }
        _ => {
            let values = cfg.harness.sweep_values.clone().or_else(|| exp.default_sweep()).unwrap_or_default();
            let key = exp.sweep_key();
            values
                .into_iter()
                .map(|v| {
                    let mut params = cfg.scenario.clone();
                    match exp {
                        Experiment::SweepBandwidth => params.bandwidth_hz = v,
                        Experiment::SweepServerFreq => params.server_freq_hz = v,
                        Experiment::SweepUserFreq => params.user_freq_hz = v,
                        Experiment::SweepPower => params.user_power_w = v,
                        Experiment::SweepWeights => {
                            params.omega_t = v;
                            params.omega_e = 1.0 - v;
                        }
                        _ => unreachable!("numeric sweeps only"),
                    }
                    base(format!("{key}={}", label_value(v)), params, Task::Methods(methods.clone()))
                })
                .collect()
        }
    };
    for p in &out {
        p.params.validate()?;
        p.solver.validate()?;
    }
    Ok(out)
}

#[derive(Default)]
struct CellOutput {
    rows: Vec<Row>,
    dc_trace: Vec<DcTraceRow>,
    reports: Vec<ReportRecord>,
}

struct Cell<'a> {
    experiment: &'a str,
    point: &'a Point,
    seed: u64,
    wall: bool,
}

impl Cell<'_> {
    fn row(&self, method: &str) -> Row {
        Row {
            experiment: self.experiment.to_string(),
            point: self.point.label.clone(),
            seed: self.seed,
            method: method.to_string(),
            dpe: f64::NAN,
            outer_rounds: 0,
            fp_rounds: 0,
            qcqp_rounds: 0,
            wall_ms: 0.0,
            error: String::new(),
        }
    }

    fn report_row(&self, label: &str, result: daur_core::Result<RunReport>, out: &mut CellOutput) {
        let mut row = self.row(label);
        match result {
            Ok(rep) => {
                row.dpe = rep.dpe;
                row.outer_rounds = rep.outer_rounds;
                row.fp_rounds = rep.fp_rounds;
                row.qcqp_rounds = rep.qcqp_rounds;
                if self.wall {
                    row.wall_ms = rep.times.total_ms;
                }
                out.reports.push(ReportRecord {
                    experiment: self.experiment.to_string(),
                    point: self.point.label.clone(),
                    seed: self.seed,
                    report: rep,
                });
            }
            Err(e) => row.error = e.to_string(),
        }
        out.rows.push(row);
    }

    fn fail(&self, label: &str, err: impl ToString, out: &mut CellOutput) {
        let mut row = self.row(label);
        row.error = err.to_string();
        out.rows.push(row);
    }

    fn run(&self) -> CellOutput {
        let mut out = CellOutput::default();
        let inst = match generate_network(&self.point.params, self.seed) {
            Ok(i) => i,
            Err(e) => {
                self.fail("", e, &mut out);
                return out;
            }
        };
        let solver = &self.point.solver;
        match &self.point.task {
            Task::Methods(methods) => {
                for &m in methods {
                    self.report_row(m.name(), run_method(m, &inst, solver, self.seed), &mut out);
                }
            }
            Task::DcSize => {
                for (label, retain) in [("retain_rank1", true), ("drop_rank1", false)] {
                    let cfg = DaurConfig { retain_rank1: retain, ..solver.clone() };
                    self.report_row(label, daur_run(&inst, &cfg), &mut out);
                }
            }
            Task::DcVarpi => {
                self.report_row(Method::Daur.name(), daur_run(&inst, solver), &mut out);
                let traces = starting_point(&inst).and_then(|start| association_block(&inst, &start, solver));
                match traces {
                    Ok(block) => {
                        for (b, t) in block.dc_traces.iter().enumerate() {
                            for r in &t.rounds {
                                out.dc_trace.push(DcTraceRow {
                                    point: self.point.label.clone(),
                                    seed: self.seed,
                                    block: b,
                                    round: r.round,
                                    objective: r.objective,
                                    penalty: r.penalty,
                                    trace: r.trace,
                                });
                            }
                        }
                    }
                    Err(e) => self.fail("dc_trace", e, &mut out),
                }
            }
            Task::Rounding => {
                if let Err(e) = self.rounding(&inst, &mut out) {
                    self.fail("rounding", e, &mut out);
                }
            }
        }
        out
    }

    /// Random association with equal shares, one association block, then
    /// every rounding technique applied to the same relaxed solution.
    fn rounding(&self, inst: &daur_core::NetworkInstance, out: &mut CellOutput) -> daur_core::Result<()> {
        let solver = &self.point.solver;
        let x = random_association(inst.n_users, inst.n_servers, self.seed ^ ASSOCIATION_SALT);
        let mut start = Decision::equal_shares(inst, x, 0.5, solver.baseline_rho, solver.baseline_psi);
        start.gamma.fill(optimal_gamma(inst.omega_b)?);
        let t0 = Instant::now();
        let block = association_block(inst, &start, solver)?;
        let block_ms = t0.elapsed().as_secs_f64() * 1e3;
        let (_, x_cont) = unstack_q(&extract_q(&block.s)?, inst.n_users, inst.n_servers);
        let mut base = start.clone();
        base.phi_off = block.decision.phi_off.clone();
        let table = compare_roundings(
            inst,
            &base,
            &block.s,
            &x_cont,
            1,
            self.seed,
            solver.eps1,
            solver.max_rounds,
            &solver.concave_options(),
        )?;
        for s in table {
            let mut row = self.row(s.technique.name());
            row.dpe = s.mean_objective;
            row.qcqp_rounds = block.rounds;
            if self.wall {
                row.wall_ms = s.mean_wall_ms + block_ms;
            }
            if !s.all_feasible {
                row.error = "rounded association is not one-hot".into();
            }
            out.rows.push(row);
        }
        Ok(())
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by (point, method) in order of first appearance.
pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.point.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(point, method)| {
            let group: Vec<&Row> = rows.iter().filter(|r| r.point == point && r.method == method).collect();
            let ok: Vec<&&Row> = group.iter().filter(|r| r.error.is_empty()).collect();
            let avg = |f: &dyn Fn(&Row) -> f64| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>()).0;
            let (mean_dpe, std_dpe) = mean_std(&ok.iter().map(|r| r.dpe).collect::<Vec<_>>());
            SummaryRow {
                experiment: group[0].experiment.clone(),
                point,
                method,
                runs: group.len(),
                failures: group.len() - ok.len(),
                mean_dpe,
                std_dpe,
                mean_outer_rounds: avg(&|r| r.outer_rounds as f64),
                mean_fp_rounds: avg(&|r| r.fp_rounds as f64),
                mean_qcqp_rounds: avg(&|r| r.qcqp_rounds as f64),
                mean_wall_ms: avg(&|r| r.wall_ms),
            }
        })
        .collect()
}

/// Runs every (point, seed) cell. A failing cell becomes a row with its
/// error message; the batch continues.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    if spec.seeds.is_empty() {
        return Err(HarnessError::NoSeeds);
    }
    spec.config.validate()?;
    let pts = points(spec)?;
    let name = spec.experiment.name();
    let wall = spec.config.harness.record_wall_time;
    let cells: Vec<Cell> = pts
        .iter()
        .flat_map(|p| spec.seeds.iter().map(move |&seed| Cell { experiment: name, point: p, seed, wall }))
        .collect();
    let work = || cells.par_iter().map(Cell::run).collect::<Vec<_>>();
    let results = if spec.config.harness.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.config.harness.threads)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let mut out = ExperimentOutput::default();
    for r in results {
        out.rows.extend(r.rows);
        out.dc_trace.extend(r.dc_trace);
        out.reports.extend(r.reports);
    }
    out.summary = summarize(&out.rows);
    Ok(out)
}
