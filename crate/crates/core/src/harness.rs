//! Replicated experiments: paired-seed runs per protocol, per-round
//! aggregation, post-transient summaries and degree-distribution fits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, ParamError, Result};
use crate::exec::{map_jobs, Execution};
use crate::graph::DegreeDistribution;
use crate::protocol::{ProtocolKind, ProtocolParams};
use crate::sim::{FailureMode, FailureModeKind, SimState};
use crate::topology::TopologyConfig;

/// Rounds a real to the 6 decimals used on disk, so rows read back from CSV
/// are bit-identical to rows kept in memory.
pub fn quantize(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted float parses")
}

fn real<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{x:.6}"))
}

/// Per-round network snapshot. Counters cover the round's activity only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub main_component_size: usize,
    #[serde(serialize_with = "real")]
    pub main_component_fraction: f64,
    pub isolated_count: usize,
    #[serde(serialize_with = "real")]
    pub avg_n1: f64,
    #[serde(serialize_with = "real")]
    pub avg_n2: f64,
    pub active_count: usize,
    pub links_total: usize,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    pub links_created: u64,
    pub links_pruned: u64,
    pub divergent: bool,
}

/// Metrics that are averaged across replicates.
pub const METRICS: [&str; 8] = [
    "main_component_size",
    "main_component_fraction",
    "isolated_count",
    "avg_n1",
    "avg_n2",
    "active_count",
    "links_total",
    "messages_sent",
];

impl MetricsRow {
    pub fn values(&self) -> [f64; 8] {
        [
            self.main_component_size as f64,
            self.main_component_fraction,
            self.isolated_count as f64,
            self.avg_n1,
            self.avg_n2,
            self.active_count as f64,
            self.links_total as f64,
            self.messages_sent as f64,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub mode: FailureMode,
    pub protocols: Vec<ProtocolKind>,
    pub params: ProtocolParams,
    pub replicates: u64,
    /// Ignored in failures-only mode, which runs until the overlay is empty.
    pub rounds: u64,
    /// Leading rounds left out of summaries. `None` means 10% of `rounds`
    /// with arrivals and 0 in failures-only mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_rounds: Option<u64>,
    pub base_seed: u64,
    /// Round at which the degree distribution is captured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_round: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: TopologyConfig::default(),
            mode: FailureMode::default(),
            protocols: ProtocolKind::ALL.to_vec(),
            params: ProtocolParams::default(),
            replicates: 20,
            rounds: 200,
            transient_rounds: None,
            base_seed: 1,
            snapshot_round: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.replicates == 0 {
            return Err(ParamError::new("replicates", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(ParamError::new("rounds", "must be at least 1"));
        }
        if self.protocols.is_empty() {
            return Err(ParamError::new("protocols", "must list at least one protocol"));
        }
        if self.mode.events_per_round == 0 {
            return Err(ParamError::new("mode.events_per_round", "must be at least 1"));
        }
        if let Some(t) = self.transient_rounds {
            if t >= self.rounds && self.mode.kind != FailureModeKind::FailuresOnly {
                return Err(ParamError::new(
                    "transient_rounds",
                    format!("{t} must be below rounds = {}", self.rounds),
                ));
            }
        }
        Ok(())
    }

    pub fn transient(&self) -> u64 {
        self.transient_rounds.unwrap_or(match self.mode.kind {
            FailureModeKind::FailuresOnly => 0,
            _ => self.rounds / 10,
        })
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.replicates).map(|i| self.base_seed.wrapping_add(i))
    }
}

/// One simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub protocol: ProtocolKind,
    pub seed: u64,
    /// Round 0 (the untouched overlay) followed by one row per round.
    pub rows: Vec<MetricsRow>,
    pub divergent: bool,
    pub original: DegreeDistribution,
    pub snapshot: Option<DegreeDistribution>,
}

/// Runs a single replicate.
pub fn run_once(cfg: &ExperimentConfig, protocol: ProtocolKind, seed: u64) -> Result<RunResult> {
    let topology = TopologyConfig {
        seed,
        ..cfg.topology.clone()
    };
    let mut sim = SimState::new(&topology, cfg.mode, &cfg.params, protocol)?;
    let original = sim.degree_distribution();
    let mut rows = vec![sim.metrics()];
    let mut snapshot = None;
    let capture = |sim: &SimState, snapshot: &mut Option<DegreeDistribution>| {
        if cfg.snapshot_round == Some(sim.round()) {
            *snapshot = Some(sim.degree_distribution());
        }
    };
    capture(&sim, &mut snapshot);
    if cfg.mode.kind == FailureModeKind::FailuresOnly {
        while !sim.is_finished() {
            rows.push(sim.run_round());
            capture(&sim, &mut snapshot);
        }
    } else {
        for _ in 0..cfg.rounds {
            rows.push(sim.run_round());
            capture(&sim, &mut snapshot);
        }
    }
    Ok(RunResult {
        protocol,
        seed,
        rows,
        divergent: sim.is_divergent(),
        original,
        snapshot,
    })
}

/// Every (protocol, seed) run of the experiment, protocol-major, seeds ascending.
pub fn run_all(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<RunResult>> {
    cfg.check()?;
    let jobs: Vec<(ProtocolKind, u64)> = cfg
        .protocols
        .iter()
        .flat_map(|p| cfg.seeds().map(move |s| (*p, s)))
        .collect();
    map_jobs(exec, jobs, |(p, s)| run_once(cfg, p, s)).into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub round: u64,
    /// Runs that reached this round.
    pub runs: usize,
    pub stats: [Stat; 8],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FitError {
    #[error("log-log fit needs at least 3 nonzero degrees, got {0}")]
    TooFewPoints(usize),
}

/// Least-squares line through `(ln d, ln p(d))` over degrees `d ≥ 1` with
/// `p(d) > 0`.
pub fn loglog_fit(dist: &DegreeDistribution) -> Result<Fit, FitError> {
    let pts: Vec<(f64, f64)> = dist
        .iter()
        .filter(|(d, p)| **d > 0 && **p > 0.0)
        .map(|(d, p)| ((*d as f64).ln(), p.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(FitError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(Fit { slope, intercept, r2 })
}

/// Mean distribution over several snapshots; absent degrees count as 0.
pub fn mean_distribution(dists: &[&DegreeDistribution]) -> DegreeDistribution {
    let mut sum: DegreeDistribution = BTreeMap::new();
    for d in dists {
        for (k, p) in d.iter() {
            *sum.entry(*k).or_default() += p;
        }
    }
    let n = dists.len().max(1) as f64;
    sum.into_iter().map(|(k, p)| (k, p / n)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolReport {
    pub protocol: ProtocolKind,
    pub rows: Vec<AggregateRow>,
    /// Across runs, of each run's post-transient mean.
    pub summary: [Stat; 8],
    pub runs: usize,
    pub divergent_runs: usize,
    pub degree_distribution: Option<DegreeDistribution>,
    pub fit: Option<Fit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateReport {
    pub transient_rounds: u64,
    pub protocols: Vec<ProtocolReport>,
    /// Mean pre-simulation degree distribution.
    pub original_distribution: DegreeDistribution,
    pub original_fit: Option<Fit>,
}

impl AggregateReport {
    pub fn protocol(&self, kind: ProtocolKind) -> Option<&ProtocolReport> {
        self.protocols.iter().find(|p| p.protocol == kind)
    }
}

/// Aggregates one protocol's runs. Runs are ordered by seed first, so the
/// result does not depend on the order they are passed in.
pub fn aggregate_protocol(protocol: ProtocolKind, runs: &[&RunResult], transient: u64) -> ProtocolReport {
    let mut runs: Vec<&RunResult> = runs.to_vec();
    runs.sort_by_key(|r| r.seed);
    let longest = runs.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(longest);
    for i in 0..longest {
        let present: Vec<&MetricsRow> = runs.iter().filter_map(|r| r.rows.get(i)).collect();
        let stats = std::array::from_fn(|m| {
            let vals: Vec<f64> = present.iter().map(|row| row.values()[m]).collect();
            Stat::of(&vals)
        });
        rows.push(AggregateRow {
            round: present[0].round,
            runs: present.len(),
            stats,
        });
    }
    let per_run: Vec<[f64; 8]> = runs
        .iter()
        .map(|r| {
            let post: Vec<&MetricsRow> = r.rows.iter().filter(|row| row.round > transient).collect();
            std::array::from_fn(|m| {
                let vals: Vec<f64> = post.iter().map(|row| row.values()[m]).collect();
                Stat::of(&vals).mean
            })
        })
        .collect();
    let summary = std::array::from_fn(|m| {
        let vals: Vec<f64> = per_run.iter().map(|v| v[m]).collect();
        Stat::of(&vals)
    });
    let snaps: Vec<&DegreeDistribution> = runs.iter().filter_map(|r| r.snapshot.as_ref()).collect();
    let degree_distribution = (!snaps.is_empty()).then(|| mean_distribution(&snaps));
    let fit = degree_distribution.as_ref().and_then(|d| loglog_fit(d).ok());
    ProtocolReport {
        protocol,
        rows,
        summary,
        runs: runs.len(),
        divergent_runs: runs.iter().filter(|r| r.divergent).count(),
        degree_distribution,
        fit,
    }
}

pub fn aggregate(cfg: &ExperimentConfig, runs: &[RunResult]) -> AggregateReport {
    let transient = cfg.transient();
    let protocols = cfg
        .protocols
        .iter()
        .map(|p| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.protocol == *p).collect();
            aggregate_protocol(*p, &mine, transient)
        })
        .collect();
    // every protocol starts from the same overlays, so any protocol's runs do
    let first = cfg.protocols[0];
    let mut originals: Vec<&RunResult> = runs.iter().filter(|r| r.protocol == first).collect();
    originals.sort_by_key(|r| r.seed);
    let dists: Vec<&DegreeDistribution> = originals.iter().map(|r| &r.original).collect();
    let original_distribution = mean_distribution(&dists);
    let original_fit = loglog_fit(&original_distribution).ok();
    AggregateReport {
        transient_rounds: transient,
        protocols,
        original_distribution,
        original_fit,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<(Vec<RunResult>, AggregateReport)> {
    let runs = run_all(cfg, exec)?;
    let report = aggregate(cfg, &runs);
    Ok((runs, report))
}

pub fn run_file_name(protocol: ProtocolKind, seed: u64) -> String {
    format!("run_{protocol}_{seed}.csv")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("cannot create {}", path.display()), e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("cannot access {}", path.display()), io),
        other => Error::Csv {
            path: path.display().to_string(),
            reason: format!("{other:?}"),
        },
    }
}

pub fn write_rows(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

pub fn write_aggregate(path: &Path, report: &ProtocolReport) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(format!("cannot write {}", path.display()), e);
    let mut header = vec!["round".to_string(), "runs".to_string()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.push("divergent_runs".into());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for row in &report.rows {
        let mut line = format!("{},{}", row.round, row.runs);
        for s in &row.stats {
            line.push_str(&format!(",{:.6},{:.6}", s.mean, s.std));
        }
        writeln!(out, "{line},{}", report.divergent_runs).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_distribution(path: &Path, dist: &DegreeDistribution, fit: Option<&Fit>) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(format!("cannot write {}", path.display()), e);
    if let Some(f) = fit {
        writeln!(out, "# slope={:.6} intercept={:.6} r2={:.6}", f.slope, f.intercept, f.r2).map_err(io)?;
    }
    writeln!(out, "degree,probability").map_err(io)?;
    for (d, p) in dist {
        writeln!(out, "{d},{p:.6}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_summary(path: &Path, report: &AggregateReport) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(format!("cannot write {}", path.display()), e);
    let mut header = vec!["protocol".to_string(), "runs".to_string(), "divergent_runs".to_string()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.extend(["loglog_slope".into(), "loglog_r2".into()]);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for p in &report.protocols {
        let mut line = format!("{},{},{}", p.protocol, p.runs, p.divergent_runs);
        for s in &p.summary {
            line.push_str(&format!(",{:.6},{:.6}", s.mean, s.std));
        }
        match &p.fit {
            Some(f) => line.push_str(&format!(",{:.6},{:.6}", f.slope, f.r2)),
            None => line.push_str(",,"),
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes the complete output set for an experiment into `dir`.
pub fn write_outputs(dir: &Path, runs: &[RunResult], report: &AggregateReport) -> Result<()> {
    for r in runs {
        write_rows(&dir.join(run_file_name(r.protocol, r.seed)), &r.rows)?;
    }
    for p in &report.protocols {
        write_aggregate(&dir.join(format!("aggregate_{}.csv", p.protocol)), p)?;
        if let Some(d) = &p.degree_distribution {
            write_distribution(&dir.join(format!("degree_dist_{}.csv", p.protocol)), d, p.fit.as_ref())?;
        }
    }
    if report.protocols.iter().any(|p| p.degree_distribution.is_some()) {
        write_distribution(
            &dir.join("degree_dist_original.csv"),
            &report.original_distribution,
            report.original_fit.as_ref(),
        )?;
    }
    write_summary(&dir.join("summary.csv"), report)
}

/// Rebuilds a protocol's per-round aggregate and summary from the run CSVs
/// in `dir`.
pub fn aggregate_from_dir(cfg: &ExperimentConfig, protocol: ProtocolKind, dir: &Path) -> Result<ProtocolReport> {
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        let rows = read_rows(&dir.join(run_file_name(protocol, seed)))?;
        runs.push(RunResult {
            protocol,
            seed,
            divergent: rows.iter().any(|r| r.divergent),
            rows,
            original: DegreeDistribution::new(),
            snapshot: None,
        });
    }
    let refs: Vec<&RunResult> = runs.iter().collect();
    Ok(aggregate_protocol(protocol, &refs, cfg.transient()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let dist: DegreeDistribution = (1..=20).map(|d| (d, 0.6 * (d as f64).powi(-2))).collect();
        let f = loglog_fit(&dist).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spike_cannot_be_fitted() {
        let dist = DegreeDistribution::from([(6, 1.0)]);
        assert_eq!(loglog_fit(&dist), Err(FitError::TooFewPoints(1)));
        let with_zero = DegreeDistribution::from([(0, 0.5), (1, 0.25), (2, 0.25)]);
        assert_eq!(loglog_fit(&with_zero), Err(FitError::TooFewPoints(2)));
    }

    #[test]
    fn stat_examples() {
        assert_eq!(Stat::of(&[3.0]), Stat { mean: 3.0, std: 0.0 });
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.290_994_448_735_805_6).abs() < 1e-12);
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [0.0, 1.0 / 3.0, 2.718281828, 1e-7, 123456.7890123] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
            assert_eq!(format!("{q:.6}").parse::<f64>().unwrap(), q);
        }
    }

    #[test]
    fn transient_defaults() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.transient(), 20);
        cfg.mode.kind = FailureModeKind::FailuresOnly;
        assert_eq!(cfg.transient(), 0);
        cfg.transient_rounds = Some(3);
        assert_eq!(cfg.transient(), 3);
    }

    #[test]
    fn validation_names_key() {
        let cfg = ExperimentConfig {
            replicates: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().key, "replicates");
        let cfg = ExperimentConfig {
            rounds: 10,
            transient_rounds: Some(10),
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().key, "transient_rounds");
    }
}
