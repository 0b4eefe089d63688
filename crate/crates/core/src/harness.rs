//! Evaluation of schedulers on seeded scenario streams, scarcity sweeps and
//! result export.
//!
//! Episode `e` of an evaluation always runs on the scenario seeded with
//! `derive_seed(config.seed, e)`, so every scheduler sees the same instances.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drn::{DrnParams, DrnPicker};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig};
use crate::sched::{run_baseline_all, run_episode, SchedulerKind, StaticOrder};

/// Environment variable capping the worker threads used for evaluation.
pub const THREADS_ENV: &str = "SLICEFORGE_THREADS";

/// A runnable scheduler: one of the fixed baselines or a trained network.
#[derive(Debug, Clone, Copy)]
pub enum Scheduler<'a> {
    Baseline(SchedulerKind),
    Drn(&'a DrnParams),
}

impl Scheduler<'_> {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            Scheduler::Baseline(k) => *k,
            Scheduler::Drn(_) => SchedulerKind::Drn,
        }
    }

    /// Accommodated slice count on one scenario.
    pub fn run(&self, scenario: &Scenario) -> Result<usize> {
        match *self {
            Scheduler::Baseline(SchedulerKind::All) => Ok(run_baseline_all(scenario).count),
            Scheduler::Baseline(SchedulerKind::Drn) => {
                Err(Error::Misuse("the drn scheduler needs trained parameters".into()))
            }
            Scheduler::Baseline(kind) => Ok(run_episode(&mut StaticOrder::baseline(kind, scenario)?, scenario)?.accommodated()),
            Scheduler::Drn(params) => Ok(run_episode(&mut DrnPicker { params }, scenario)?.accommodated()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub scheduler: SchedulerKind,
    pub config: ScenarioConfig,
    pub episodes: usize,
    pub mean_accommodated: f64,
    /// Sample standard deviation; zero for a single episode.
    pub std: f64,
    pub counts: Vec<usize>,
}

impl EvalResult {
    fn from_counts(scheduler: SchedulerKind, config: &ScenarioConfig, counts: Vec<usize>) -> Self {
        let (mean, std) = mean_std(&counts);
        EvalResult { scheduler, config: config.clone(), episodes: counts.len(), mean_accommodated: mean, std, counts }
    }
}

pub fn mean_std(counts: &[usize]) -> (f64, f64) {
    let n = counts.len() as f64;
    if counts.is_empty() {
        return (0.0, 0.0);
    }
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    if counts.len() < 2 {
        return (mean, 0.0);
    }
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scenario for episode `episode` of an evaluation under `config`.
pub fn episode_scenario(config: &ScenarioConfig, episode: usize) -> Result<Scenario> {
    generate_scenario(&config.with_seed(derive_seed(config.seed, episode as u64)))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Misuse(format!("cannot start worker threads: {e}")))
}

/// Runs `episodes` paired episodes of every scheduler; results follow the
/// order of `schedulers`.
pub fn evaluate_many(schedulers: &[Scheduler<'_>], config: &ScenarioConfig, episodes: usize) -> Result<Vec<EvalResult>> {
    config.validate()?;
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    for s in schedulers {
        if let Scheduler::Drn(p) = s {
            p.check_compatible(config)?;
        }
    }
    let per_episode: Vec<Vec<usize>> = thread_pool()?.install(|| {
        (0..episodes)
            .into_par_iter()
            .map(|e| {
                let scenario = episode_scenario(config, e)?;
                schedulers.iter().map(|s| s.run(&scenario)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(schedulers
        .iter()
        .enumerate()
        .map(|(k, s)| EvalResult::from_counts(s.kind(), config, per_episode.iter().map(|c| c[k]).collect()))
        .collect())
}

pub fn evaluate(scheduler: Scheduler<'_>, config: &ScenarioConfig, episodes: usize) -> Result<EvalResult> {
    Ok(evaluate_many(&[scheduler], config, episodes)?.remove(0))
}

/// Scenario parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SliceCount,
    VnfsPerSlice,
    /// Mean VNF demand μ, realised as the integer range [1, 2μ−1].
    MeanDemand,
    /// Mean node capacity μ, realised as the integer range [μ−10, μ+10].
    MeanCapacity,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::SliceCount, Axis::VnfsPerSlice, Axis::MeanDemand, Axis::MeanCapacity];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::SliceCount => "slice_count",
            Axis::VnfsPerSlice => "vnfs_per_slice",
            Axis::MeanDemand => "mean_demand",
            Axis::MeanCapacity => "mean_capacity",
        }
    }

    /// Default sweep points, each running from the base setting to the scarcest one.
    pub fn default_values(self) -> Vec<u32> {
        match self {
            Axis::SliceCount => (20..=25).collect(),
            Axis::VnfsPerSlice | Axis::MeanDemand => (10..=15).collect(),
            Axis::MeanCapacity => (15..=20).rev().collect(),
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: u32) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        match self {
            Axis::SliceCount => cfg.l = value as usize,
            Axis::VnfsPerSlice => cfg.s = value as usize,
            Axis::MeanDemand => {
                if value == 0 {
                    return Err(Error::Config("mean demand must be at least 1".into()));
                }
                cfg.demand_range = [1, 2 * value - 1];
            }
            Axis::MeanCapacity => {
                if value < 10 {
                    return Err(Error::Config(format!("mean capacity {value} is below 10")));
                }
                cfg.cap_range = [value - 10, value + 10];
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slices" | "slice_count" => Ok(Axis::SliceCount),
            "vnfs" | "vnfs_per_slice" => Ok(Axis::VnfsPerSlice),
            "demand" | "mean_demand" => Ok(Axis::MeanDemand),
            "capacity" | "mean_capacity" => Ok(Axis::MeanCapacity),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<u32>,
    pub base: ScenarioConfig,
    pub episodes: usize,
}

impl SweepSpec {
    pub fn new(axis: Axis, base: ScenarioConfig) -> Self {
        SweepSpec { axis, values: axis.default_values(), base, episodes: 100 }
    }

    /// Unit-step points from `from` to `to`, in either direction.
    pub fn range(from: u32, to: u32) -> Vec<u32> {
        if from <= to {
            (from..=to).collect()
        } else {
            (to..=from).rev().collect()
        }
    }
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Sweep axis name, or `none` for a plain evaluation.
    pub axis: String,
    pub value: Option<u32>,
    pub scheduler: SchedulerKind,
    pub episodes: usize,
    pub mean_accommodated: f64,
    pub std: f64,
    pub seed: u64,
}

impl ResultRow {
    pub fn from_eval(axis: Option<Axis>, value: Option<u32>, r: &EvalResult) -> Self {
        ResultRow {
            axis: axis.map_or("none", Axis::as_str).to_string(),
            value,
            scheduler: r.scheduler,
            episodes: r.episodes,
            mean_accommodated: r.mean_accommodated,
            std: r.std,
            seed: r.config.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    /// Resolved settings the table was produced with.
    pub config: Option<serde_json::Value>,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Chosen from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["axis", "value", "scheduler", "episodes", "mean_accommodated", "std", "seed"];
const CONFIG_PREFIX: &str = "# config: ";

impl ResultTable {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        if let Some(cfg) = &self.config {
            out.push_str(CONFIG_PREFIX);
            out.push_str(&serde_json::to_string(cfg).map_err(|e| Error::Misuse(e.to_string()))?);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let werr = |e: csv::Error| Error::Misuse(format!("csv encoding: {e}"));
        w.write_record(CSV_HEADER).map_err(werr)?;
        for r in &self.rows {
            w.write_record([
                r.axis.clone(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                r.scheduler.to_string(),
                r.episodes.to_string(),
                r.mean_accommodated.to_string(),
                r.std.to_string(),
                r.seed.to_string(),
            ])
            .map_err(werr)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Misuse(format!("csv encoding: {e}")))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Misuse(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let mut config = None;
        let mut body = String::new();
        for line in text.lines() {
            match line.strip_prefix(CONFIG_PREFIX) {
                Some(json) => config = Some(serde_json::from_str(json).map_err(|e| Error::json(path, e))?),
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), source: e };
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header = reader.headers().map_err(csv_err)?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Parse(format!("{}: unexpected CSV header {header:?}", path.display())));
        }
        let bad = |field: &str| Error::Parse(format!("{}: bad {field} field", path.display()));
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let value = match &rec[1] {
                "" => None,
                v => Some(v.parse().map_err(|_| bad("value"))?),
            };
            rows.push(ResultRow {
                axis: rec[0].to_string(),
                value,
                scheduler: rec[2].parse().map_err(|_| bad("scheduler"))?,
                episodes: rec[3].parse().map_err(|_| bad("episodes"))?,
                mean_accommodated: rec[4].parse().map_err(|_| bad("mean_accommodated"))?,
                std: rec[5].parse().map_err(|_| bad("std"))?,
                seed: rec[6].parse().map_err(|_| bad("seed"))?,
            });
        }
        Ok(ResultTable { config, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match Format::from_path(path) {
            Format::Json => serde_json::from_str(&text).map_err(|e| Error::json(path, e)),
            Format::Csv => Self::from_csv_str(&text, path),
        }
    }
}

/// Writes `table` to `path` as CSV or pretty JSON.
pub fn export_results(table: &ResultTable, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        Format::Csv => table.to_csv_string()?,
        Format::Json => {
            let mut s = serde_json::to_string_pretty(table).map_err(|e| Error::json(path, e))?;
            s.push('\n');
            s
        }
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Evaluates every scheduler at every axis point. `train_drn` supplies a
/// model for each point when `SchedulerKind::Drn` is requested; rows are
/// ordered by axis point, then by the order of `schedulers`.
pub fn sweep(
    spec: &SweepSpec,
    schedulers: &[SchedulerKind],
    mut train_drn: impl FnMut(&ScenarioConfig) -> Result<DrnParams>,
) -> Result<ResultTable> {
    if spec.values.is_empty() {
        return Err(Error::Config("sweep has no axis points".into()));
    }
    let mut rows = Vec::new();
    for &value in &spec.values {
        let cfg = spec.axis.apply(&spec.base, value)?;
        let params = if schedulers.contains(&SchedulerKind::Drn) { Some(train_drn(&cfg)?) } else { None };
        let runners: Vec<Scheduler<'_>> = schedulers
            .iter()
            .map(|&k| match (k, &params) {
                (SchedulerKind::Drn, Some(p)) => Scheduler::Drn(p),
                (k, _) => Scheduler::Baseline(k),
            })
            .collect();
        for r in evaluate_many(&runners, &cfg, spec.episodes)? {
            rows.push(ResultRow::from_eval(Some(spec.axis), Some(value), &r));
        }
    }
    let config = serde_json::json!({ "sweep": spec, "schedulers": schedulers });
    Ok(ResultTable { config: Some(config), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drn::DrnConfig;

    fn no_drn(_: &ScenarioConfig) -> Result<DrnParams> {
        unreachable!("no drn requested")
    }

    #[test]
    fn everything_fits_gives_full_mean() {
        let cfg = ScenarioConfig { n: 10, cap_range: [50, 50], l: 4, s: 3, demand_range: [1, 3], seed: 1 };
        for kind in SchedulerKind::BASELINES {
            let r = evaluate(Scheduler::Baseline(kind), &cfg, 20).unwrap();
            assert_eq!(r.mean_accommodated, 4.0);
            assert_eq!(r.std, 0.0);
        }
    }

    #[test]
    fn zero_capacity_gives_zero_mean() {
        let cfg = ScenarioConfig { n: 5, cap_range: [0, 0], l: 3, s: 2, demand_range: [1, 3], seed: 1 };
        for kind in SchedulerKind::BASELINES {
            assert_eq!(evaluate(Scheduler::Baseline(kind), &cfg, 10).unwrap().mean_accommodated, 0.0);
        }
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2, 4, 4, 4, 5, 5, 7, 9]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3]), (3.0, 0.0));
    }

    #[test]
    fn evaluation_is_paired_and_deterministic() {
        let cfg = ScenarioConfig::mini().with_seed(5);
        let kinds: Vec<_> = SchedulerKind::BASELINES.iter().map(|&k| Scheduler::Baseline(k)).collect();
        let a = evaluate_many(&kinds, &cfg, 30).unwrap();
        let b = evaluate_many(&kinds, &cfg, 30).unwrap();
        assert_eq!(a, b);
        for (k, r) in a.iter().enumerate() {
            assert_eq!(r, &evaluate(kinds[k], &cfg, 30).unwrap());
        }
        let s3 = episode_scenario(&cfg, 3).unwrap();
        assert_eq!(a[1].counts[3], kinds[1].run(&s3).unwrap());
    }

    #[test]
    fn drn_requires_params_and_matching_shape() {
        let cfg = ScenarioConfig::mini();
        assert!(evaluate(Scheduler::Baseline(SchedulerKind::Drn), &cfg, 1).is_err());
        let params = DrnParams::build(DrnConfig::for_scenario(&ScenarioConfig { n: 21, ..cfg.clone() }), 0).unwrap();
        assert!(evaluate(Scheduler::Drn(&params), &cfg, 1).is_err());
        let params = DrnParams::build(DrnConfig::for_scenario(&cfg), 0).unwrap();
        let r = evaluate(Scheduler::Drn(&params), &cfg, 4).unwrap();
        assert_eq!(r.scheduler, SchedulerKind::Drn);
        assert!(r.mean_accommodated <= cfg.l as f64);
    }

    #[test]
    fn axis_mapping_preserves_base_ranges() {
        let base = ScenarioConfig::base();
        assert_eq!(Axis::MeanDemand.apply(&base, 10).unwrap(), base);
        assert_eq!(Axis::MeanCapacity.apply(&base, 20).unwrap(), base);
        assert_eq!(Axis::MeanDemand.apply(&base, 15).unwrap().demand_range, [1, 29]);
        assert_eq!(Axis::MeanCapacity.apply(&base, 15).unwrap().cap_range, [5, 25]);
        assert_eq!(Axis::SliceCount.apply(&base, 25).unwrap().l, 25);
        assert!(Axis::MeanCapacity.apply(&base, 9).is_err());
        assert!(Axis::MeanDemand.apply(&base, 0).is_err());
        for a in Axis::ALL {
            assert_eq!(a.as_str().parse::<Axis>().unwrap(), a);
        }
        assert_eq!("vnfs".parse::<Axis>().unwrap(), Axis::VnfsPerSlice);
    }

    #[test]
    fn sweep_rows_per_point() {
        let base = ScenarioConfig::mini();
        let spec = SweepSpec { values: SweepSpec::range(6, 8), episodes: 5, ..SweepSpec::new(Axis::SliceCount, base.clone()) };
        let table = sweep(&spec, &SchedulerKind::BASELINES, no_drn).unwrap();
        assert_eq!(table.rows.len(), 12);
        assert_eq!(table.rows[4].value, Some(7));
        assert_eq!(table.rows[4].scheduler, SchedulerKind::All);
        let single = SweepSpec { values: vec![6], ..spec.clone() };
        assert_eq!(sweep(&single, &[SchedulerKind::Max], no_drn).unwrap().rows.len(), 1);
        assert_eq!(SweepSpec::range(20, 15), vec![20, 19, 18, 17, 16, 15]);
        assert_eq!(SweepSpec::new(Axis::SliceCount, base).values.len(), 6);
    }

    #[test]
    fn sweep_trains_one_model_per_point() {
        let spec = SweepSpec { values: vec![4, 5], episodes: 3, ..SweepSpec::new(Axis::VnfsPerSlice, ScenarioConfig::mini()) };
        let mut seen = Vec::new();
        let table = sweep(&spec, &[SchedulerKind::Drn, SchedulerKind::Max], |cfg| {
            seen.push(cfg.s);
            DrnParams::build(DrnConfig::for_scenario(cfg), 0)
        })
        .unwrap();
        assert_eq!(seen, vec![4, 5]);
        assert_eq!(table.rows.len(), 4);
        assert_eq!(table.rows[0].scheduler, SchedulerKind::Drn);
    }

    fn sample_table() -> ResultTable {
        let row = ResultRow {
            axis: "mean_demand".into(),
            value: Some(12),
            scheduler: SchedulerKind::Total,
            episodes: 100,
            mean_accommodated: 14.37,
            std: 1.0 / 3.0,
            seed: 7,
        };
        let eval_row = ResultRow { axis: "none".into(), value: None, scheduler: SchedulerKind::Drn, ..row.clone() };
        ResultTable { config: Some(serde_json::json!({"n": 100})), rows: vec![row, eval_row] }
    }

    #[test]
    fn csv_shapes() {
        let empty = ResultTable::default().to_csv_string().unwrap();
        assert_eq!(empty, "axis,value,scheduler,episodes,mean_accommodated,std,seed\n");
        let one = ResultTable { config: None, rows: sample_table().rows[..1].to_vec() };
        let text = one.to_csv_string().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap(), "mean_demand,12,total,100,14.37,0.3333333333333333,7");
    }

    #[test]
    fn export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let table = sample_table();
        for (name, fmt) in [("t.json", Format::Json), ("t.csv", Format::Csv)] {
            let path = dir.path().join(name);
            assert_eq!(Format::from_path(&path), fmt);
            export_results(&table, &path, fmt).unwrap();
            assert_eq!(ResultTable::load(&path).unwrap(), table);
        }
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(text.starts_with("# config: {\"n\":100}\naxis,"));
    }

    #[test]
    fn export_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("t.csv");
        let err = export_results(&ResultTable::default(), &path, Format::Csv).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }
}
