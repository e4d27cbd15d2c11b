//! Drift metrics, the four benchmark arms and report files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{plan_and_track, run_vanilla, PlannerConfig};
use crate::exec::Execution;
use crate::lidar::FeatureCloud;
use crate::mdp::sim::TrajectoryRow;
use crate::mdp::{EvalConfig, EvalEnv, EvalStatus, Policy};
use crate::scene::{rasterize_features, wrap_angle, Pose2D, Scenario};

/// Runs that end in a collision or breach before this fraction of the road
/// carry no drift metrics.
pub const MIN_PROGRESS: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: {est} estimated vs {gt} ground-truth poses")]
    LengthMismatch { est: usize, gt: usize },
    #[error("empty trajectory")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what} line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Setup(String),
}

impl EvalError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftMetrics {
    /// Mean xy error over all aligned steps, metres.
    pub average_drift: f64,
    /// xy error at the last step, metres.
    pub final_drift: f64,
    /// |wrapped yaw error| at the last step, radians.
    pub rotational_offset: f64,
}

/// Drift of `est` against `gt`, aligned by index.
pub fn compute_report(est: &[Pose2D], gt: &[Pose2D]) -> Result<DriftMetrics, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    let (Some(e_last), Some(g_last)) = (est.last(), gt.last()) else {
        return Err(EvalError::Empty);
    };
    let sum: f64 = est.iter().zip(gt).map(|(e, g)| e.distance(g)).sum();
    Ok(DriftMetrics {
        average_drift: sum / est.len() as f64,
        final_drift: e_last.distance(g_last),
        rotational_offset: wrap_angle(e_last.yaw - g_last.yaw).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "learned")]
    Learned,
    #[serde(rename = "learned+f")]
    LearnedFiltered,
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "vanilla+f")]
    VanillaFiltered,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Learned, Arm::LearnedFiltered, Arm::Vanilla, Arm::VanillaFiltered];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Learned => "learned",
            Arm::LearnedFiltered => "learned+f",
            Arm::Vanilla => "vanilla",
            Arm::VanillaFiltered => "vanilla+f",
        }
    }

    pub fn filtering(self) -> bool {
        matches!(self, Arm::LearnedFiltered | Arm::VanillaFiltered)
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Arm::Learned | Arm::LearnedFiltered)
    }

    /// The baseline this arm is compared against.
    pub fn baseline(self) -> Arm {
        if self.filtering() {
            Arm::VanillaFiltered
        } else {
            Arm::Vanilla
        }
    }

    /// Arms run on a scenario: static scenes skip the filtered variants.
    pub fn for_scenario(s: &Scenario) -> &'static [Arm] {
        if s.is_static() {
            &[Arm::Learned, Arm::Vanilla]
        } else {
            &Arm::ALL
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| format!("unknown arm `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub scenario: String,
    pub arm: Arm,
    pub lidar_range: f64,
    pub seed: u64,
    /// Absent when the run failed before [`MIN_PROGRESS`] of the road.
    pub metrics: Option<DriftMetrics>,
    pub collided: bool,
    pub lane_breach: bool,
    pub goal_reached: bool,
    pub status: EvalStatus,
    pub scans: usize,
    pub duration: f64,
}

/// Report plus the executed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub report: TrajectoryReport,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub eval: EvalConfig,
    pub planner: PlannerConfig,
    pub ranges: Vec<f64>,
    /// Number of seeds per cell.
    pub seeds: usize,
    /// Seeds are derived from this and the seed index, shared by all arms.
    pub base_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            eval: EvalConfig::default(),
            planner: PlannerConfig::default(),
            ranges: vec![45.0, 50.0, 55.0],
            seeds: 20,
            base_seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn run_seed(&self, index: usize) -> u64 {
        crate::seed::mix(self.base_seed, index as u64)
    }
}

/// Scenario with its rasterised features, shared across runs.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: Arc<Scenario>,
    pub cloud: Arc<FeatureCloud>,
}

impl PreparedScenario {
    pub fn new(scenario: Scenario) -> Self {
        let cloud = Arc::new(FeatureCloud::new(rasterize_features(&scenario)));
        PreparedScenario {
            scenario: Arc::new(scenario),
            cloud,
        }
    }

    /// Same world seen with a different LIDAR range.
    pub fn with_range(&self, lidar_range: f64) -> Self {
        let mut s = (*self.scenario).clone();
        s.lidar_range = lidar_range;
        PreparedScenario {
            scenario: Arc::new(s),
            cloud: Arc::clone(&self.cloud),
        }
    }
}

/// How the ego is driven in one run.
pub enum Driver<'a> {
    Policy(&'a (dyn Policy + Sync), PlannerConfig),
    Vanilla,
    /// Track a fixed path at a fixed speed.
    Scripted(&'a crate::control::SplinePath, f64),
}

/// Run one episode and collect its report.
pub fn run_episode(
    prepared: &PreparedScenario,
    driver: Driver<'_>,
    filtering: bool,
    eval: &EvalConfig,
    seed: u64,
) -> EvalEnv {
    let cfg = EvalConfig { filtering, ..*eval };
    let mut env = EvalEnv::new(Arc::clone(&prepared.scenario), Arc::clone(&prepared.cloud), cfg, seed);
    match driver {
        Driver::Policy(policy, planner) => {
            plan_and_track(policy, &mut env, &planner);
        }
        Driver::Vanilla => {
            run_vanilla(&mut env);
        }
        Driver::Scripted(path, speed) => {
            while !env.is_done() {
                let before = env.time();
                env.follow(path, speed);
                if env.time() == before || !env.is_done() {
                    env.abort(EvalStatus::Timeout);
                }
            }
        }
    }
    env
}

/// Report for a finished run.
pub fn report_for(env: &EvalEnv, arm: Arm, seed: u64) -> TrajectoryReport {
    let s = env.scenario();
    let status = env.status();
    let failed = matches!(status, EvalStatus::Collision | EvalStatus::Breach);
    let progress = env.truth().pose.x - s.ego_start.x;
    let log = env.pose_log();
    let metrics = if failed && progress < MIN_PROGRESS * s.road.length {
        None
    } else {
        let est: Vec<Pose2D> = log.iter().map(|e| e.est).collect();
        let gt: Vec<Pose2D> = log.iter().map(|e| e.gt).collect();
        compute_report(&est, &gt).ok()
    };
    TrajectoryReport {
        scenario: s.name.clone(),
        arm,
        lidar_range: s.lidar_range,
        seed,
        metrics,
        collided: status == EvalStatus::Collision,
        lane_breach: status == EvalStatus::Breach,
        goal_reached: status == EvalStatus::Goal,
        status,
        scans: log.len(),
        duration: env.time(),
    }
}

/// One arm on one scenario and seed.
pub fn run_arm(
    prepared: &PreparedScenario,
    arm: Arm,
    policy: &(dyn Policy + Sync),
    config: &BenchConfig,
    seed: u64,
) -> RunRecord {
    let driver = if arm.is_learned() {
        Driver::Policy(policy, config.planner)
    } else {
        Driver::Vanilla
    };
    let env = run_episode(prepared, driver, arm.filtering(), &config.eval, seed);
    RunRecord {
        report: report_for(&env, arm, seed),
        trajectory: env.trajectory().to_vec(),
    }
}

/// Mean and sample standard deviation; `std` is undefined below two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: None,
                std: None,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Stat {
            mean: Some(mean),
            std,
            n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "average_drift")]
    AverageDrift,
    #[serde(rename = "final_drift")]
    FinalDrift,
    #[serde(rename = "rotational_offset")]
    RotationalOffset,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::AverageDrift, Metric::FinalDrift, Metric::RotationalOffset];

    pub fn label(self) -> &'static str {
        match self {
            Metric::AverageDrift => "average_drift",
            Metric::FinalDrift => "final_drift",
            Metric::RotationalOffset => "rotational_offset",
        }
    }

    pub fn of(self, m: &DriftMetrics) -> f64 {
        match self {
            Metric::AverageDrift => m.average_drift,
            Metric::FinalDrift => m.final_drift,
            Metric::RotationalOffset => m.rotational_offset,
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Aggregate of one (scenario, arm, LIDAR range) over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub scenario: String,
    pub arm: Arm,
    pub lidar_range: f64,
    /// Runs in the cell.
    pub seeds: usize,
    pub collisions: usize,
    pub breaches: usize,
    pub goals: usize,
    /// Indexed like [`Metric::ALL`]; `n` counts runs with metrics.
    pub stats: [Stat; 3],
}

impl BenchCell {
    pub fn stat(&self, m: Metric) -> &Stat {
        &self.stats[m as usize]
    }

    fn from_reports(reports: &[&TrajectoryReport]) -> BenchCell {
        let r0 = reports[0];
        let with: Vec<&DriftMetrics> = reports.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let stats = Metric::ALL.map(|m| Stat::of(&with.iter().map(|d| m.of(d)).collect::<Vec<_>>()));
        BenchCell {
            scenario: r0.scenario.clone(),
            arm: r0.arm,
            lidar_range: r0.lidar_range,
            seeds: reports.len(),
            collisions: reports.iter().filter(|r| r.collided).count(),
            breaches: reports.iter().filter(|r| r.lane_breach).count(),
            goals: reports.iter().filter(|r| r.goal_reached).count(),
            stats,
        }
    }
}

/// Baseline mean over learned mean for one scenario, range and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub scenario: String,
    pub lidar_range: f64,
    pub arm: Arm,
    pub baseline: Arm,
    pub metric: Metric,
    pub factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub cells: Vec<BenchCell>,
}

fn range_key(r: f64) -> u64 {
    r.to_bits()
}

impl BenchmarkTable {
    /// Group reports by (scenario, arm, range) in first-seen scenario order.
    pub fn from_reports(reports: &[TrajectoryReport]) -> BenchmarkTable {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: BTreeMap<(usize, Arm, u64), Vec<&TrajectoryReport>> = BTreeMap::new();
        for r in reports {
            let si = match order.iter().position(|s| *s == r.scenario) {
                Some(i) => i,
                None => {
                    order.push(&r.scenario);
                    order.len() - 1
                }
            };
            groups.entry((si, r.arm, range_key(r.lidar_range))).or_default().push(r);
        }
        let mut cells: Vec<BenchCell> = groups.values().map(|g| BenchCell::from_reports(g)).collect();
        cells.sort_by(|a, b| {
            let sa = order.iter().position(|s| *s == a.scenario);
            let sb = order.iter().position(|s| *s == b.scenario);
            sa.cmp(&sb)
                .then(a.lidar_range.total_cmp(&b.lidar_range))
                .then(a.arm.cmp(&b.arm))
        });
        BenchmarkTable { cells }
    }

    pub fn cell(&self, scenario: &str, arm: Arm, lidar_range: f64) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.arm == arm && c.lidar_range == lidar_range)
    }

    pub fn scenarios(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.scenario.as_str()) {
                out.push(&c.scenario);
            }
        }
        out
    }

    /// Baseline mean / learned mean, per scenario, range and metric, for
    /// every learned arm present.
    pub fn improvements(&self) -> Vec<Improvement> {
        let mut out = Vec::new();
        for c in self.cells.iter().filter(|c| c.arm.is_learned()) {
            let Some(base) = self.cell(&c.scenario, c.arm.baseline(), c.lidar_range) else {
                continue;
            };
            for m in Metric::ALL {
                let factor = match (base.stat(m).mean, c.stat(m).mean) {
                    (Some(b), Some(l)) if l > 0.0 => Some(b / l),
                    _ => None,
                };
                out.push(Improvement {
                    scenario: c.scenario.clone(),
                    lidar_range: c.lidar_range,
                    arm: c.arm,
                    baseline: c.arm.baseline(),
                    metric: m,
                    factor,
                });
            }
        }
        out
    }

    /// Seed-pooled mean of `metric` for an arm on a scenario, over every
    /// range present.
    pub fn pooled_mean(&self, scenario: &str, arm: Arm, metric: Metric) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in self.cells.iter().filter(|c| c.scenario == scenario && c.arm == arm) {
            let s = c.stat(metric);
            if let Some(m) = s.mean {
                sum += m * s.n as f64;
                n += s.n;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// All runs of a benchmark, with the aggregated table.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub table: BenchmarkTable,
    pub reports: Vec<TrajectoryReport>,
}

/// Every scenario × range × seed × arm. Arms in a cell share the seed.
/// Static scenarios additionally check that filtering changes nothing.
pub fn run_benchmark(
    scenarios: &[PreparedScenario],
    policy: &(dyn Policy + Sync),
    config: &BenchConfig,
    exec: Execution,
) -> BenchmarkRun {
    let mut jobs = Vec::new();
    for (si, p) in scenarios.iter().enumerate() {
        for &range in &config.ranges {
            for k in 0..config.seeds {
                for &arm in Arm::for_scenario(&p.scenario) {
                    jobs.push((si, range, config.run_seed(k), arm));
                }
            }
        }
    }
    let ranged: Vec<Vec<(u64, PreparedScenario)>> = scenarios
        .iter()
        .map(|p| config.ranges.iter().map(|&r| (range_key(r), p.with_range(r))).collect())
        .collect();
    let reports = exec.map(&jobs, |&(si, range, seed, arm)| {
        let prepared = &ranged[si]
            .iter()
            .find(|(k, _)| *k == range_key(range))
            .expect("every range prepared")
            .1;
        run_arm(prepared, arm, policy, config, seed).report
    });
    BenchmarkRun {
        table: BenchmarkTable::from_reports(&reports),
        reports,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s == "NA" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("`{s}` is not a number"))
    }
}

const TABLE_HEADER: [&str; 12] = [
    "scenario",
    "arm",
    "lidar_range",
    "metric",
    "mean",
    "std",
    "n",
    "seeds",
    "collisions",
    "breaches",
    "goals",
    "marker",
];

/// One row per cell and metric. `std` is `NA` below two runs with metrics;
/// `marker` is `collision` for cells with any collision.
pub fn write_table_csv<W: Write>(out: W, table: &BenchmarkTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for c in &table.cells {
        for m in Metric::ALL {
            let s = c.stat(m);
            w.write_record([
                c.scenario.clone(),
                c.arm.label().to_string(),
                c.lidar_range.to_string(),
                m.label().to_string(),
                fmt_opt(s.mean),
                fmt_opt(s.std),
                s.n.to_string(),
                c.seeds.to_string(),
                c.collisions.to_string(),
                c.breaches.to_string(),
                c.goals.to_string(),
                if c.collisions > 0 { "collision" } else { "" }.to_string(),
            ])?;
        }
    }
    w.flush()
}

pub fn read_table_csv<R: Read>(input: R) -> Result<BenchmarkTable, EvalError> {
    let mut rdr = csv::Reader::from_reader(input);
    let fail = |line: usize, message: String| EvalError::Format {
        what: "benchmark table",
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    if header.iter().ne(TABLE_HEADER) {
        return Err(fail(1, "unexpected header".into()));
    }
    let mut table = BenchmarkTable::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| fail(line, e.to_string()))?;
        let f = |m: String| fail(line, m);
        let arm: Arm = rec[1].parse().map_err(f)?;
        let lidar_range: f64 = rec[2].parse().map_err(|_| fail(line, "bad lidar_range".into()))?;
        let metric: Metric = rec[3].parse().map_err(|m| fail(line, m))?;
        let int = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|_| fail(line, format!("column {} not an integer", k + 1)))
        };
        let stat = Stat {
            mean: parse_opt(&rec[4]).map_err(|m| fail(line, m))?,
            std: parse_opt(&rec[5]).map_err(|m| fail(line, m))?,
            n: int(6)?,
        };
        let pos = table
            .cells
            .iter()
            .position(|c| c.scenario == rec[0] && c.arm == arm && c.lidar_range == lidar_range);
        let cell = match pos {
            Some(p) => &mut table.cells[p],
            None => {
                table.cells.push(BenchCell {
                    scenario: rec[0].to_string(),
                    arm,
                    lidar_range,
                    seeds: int(7)?,
                    collisions: int(8)?,
                    breaches: int(9)?,
                    goals: int(10)?,
                    stats: [Stat::of(&[]); 3],
                });
                table.cells.last_mut().expect("just pushed")
            }
        };
        cell.stats[metric as usize] = stat;
    }
    Ok(table)
}

/// Structured summary: configuration echo, cells and improvement factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config: BenchConfig,
    pub checkpoint: Option<String>,
    pub improvements: Vec<Improvement>,
    pub table: BenchmarkTable,
}

/// Write `bench.csv`, `summary.json` and `runs.csv` into `dir`.
pub fn emit_report(
    dir: &Path,
    run: &BenchmarkRun,
    config: &BenchConfig,
    checkpoint: Option<&Path>,
) -> Result<Vec<PathBuf>, EvalError> {
    if run.table.cells.is_empty() {
        return Err(EvalError::Setup(
            "nothing to report: the benchmark table is empty".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let table_path = dir.join("bench.csv");
    let f = std::fs::File::create(&table_path).map_err(|e| EvalError::io(&table_path, e))?;
    write_table_csv(f, &run.table).map_err(|e| EvalError::io(&table_path, e))?;

    let summary_path = dir.join("summary.json");
    let summary = BenchSummary {
        config: config.clone(),
        checkpoint: checkpoint.map(|p| p.display().to_string()),
        improvements: run.table.improvements(),
        table: run.table.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| EvalError::Setup(e.to_string()))?;
    std::fs::write(&summary_path, json).map_err(|e| EvalError::io(&summary_path, e))?;

    let runs_path = dir.join("runs.csv");
    let f = std::fs::File::create(&runs_path).map_err(|e| EvalError::io(&runs_path, e))?;
    write_runs_csv(f, &run.reports).map_err(|e| EvalError::io(&runs_path, e))?;
    Ok(vec![table_path, summary_path, runs_path])
}

/// One row per run.
pub fn write_runs_csv<W: Write>(out: W, reports: &[TrajectoryReport]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "arm",
        "lidar_range",
        "seed",
        "status",
        "average_drift",
        "final_drift",
        "rotational_offset",
        "scans",
        "duration",
    ])?;
    for r in reports {
        let m = r.metrics;
        w.write_record([
            r.scenario.clone(),
            r.arm.label().to_string(),
            r.lidar_range.to_string(),
            r.seed.to_string(),
            format!("{:?}", r.status).to_lowercase(),
            fmt_opt(m.map(|m| m.average_drift)),
            fmt_opt(m.map(|m| m.final_drift)),
            fmt_opt(m.map(|m| m.rotational_offset)),
            r.scans.to_string(),
            r.duration.to_string(),
        ])?;
    }
    w.flush()
}

const TRAJ_HEADER: [&str; 11] = [
    "t", "gt_x", "gt_y", "gt_yaw", "est_x", "est_y", "est_yaw", "steer", "speed", "scan", "event",
];

/// Executed trajectory, one row per control step. `scan` marks rows whose
/// estimate came from scan matching; `event` is set on the last row to the
/// run outcome.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow], outcome: EvalStatus) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJ_HEADER)?;
    for (i, r) in rows.iter().enumerate() {
        let event = if i + 1 == rows.len() {
            format!("{outcome:?}").to_lowercase()
        } else {
            String::new()
        };
        w.write_record([
            r.t.to_string(),
            r.gt.x.to_string(),
            r.gt.y.to_string(),
            r.gt.yaw.to_string(),
            r.est.x.to_string(),
            r.est.y.to_string(),
            r.est.yaw.to_string(),
            r.steer.to_string(),
            r.speed.to_string(),
            u8::from(r.scan).to_string(),
            event,
        ])?;
    }
    w.flush()
}

/// Parsed trajectory log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
    /// Event column per row.
    pub events: Vec<String>,
}

impl TrajectoryLog {
    /// Drift over the scan rows, matching [`TrajectoryReport::metrics`].
    pub fn drift(&self) -> Result<DriftMetrics, EvalError> {
        let scans: Vec<&TrajectoryRow> = self.rows.iter().filter(|r| r.scan).collect();
        let est: Vec<Pose2D> = scans.iter().map(|r| r.est).collect();
        let gt: Vec<Pose2D> = scans.iter().map(|r| r.gt).collect();
        compute_report(&est, &gt)
    }
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<TrajectoryLog, EvalError> {
    let fail = |line: usize, message: String| EvalError::Format {
        what: "trajectory",
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rdr.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    if header.iter().ne(TRAJ_HEADER) {
        return Err(fail(1, format!("expected columns {}", TRAJ_HEADER.join(","))));
    }
    let mut log = TrajectoryLog {
        rows: Vec::new(),
        events: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| fail(line, e.to_string()))?;
        if rec.len() != TRAJ_HEADER.len() {
            return Err(fail(
                line,
                format!("expected {} fields, found {}", TRAJ_HEADER.len(), rec.len()),
            ));
        }
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| fail(line, format!("column `{}` is not a number", TRAJ_HEADER[k])))
        };
        log.rows.push(TrajectoryRow {
            t: num(0)?,
            gt: Pose2D {
                x: num(1)?,
                y: num(2)?,
                yaw: num(3)?,
            },
            est: Pose2D {
                x: num(4)?,
                y: num(5)?,
                yaw: num(6)?,
            },
            steer: num(7)?,
            speed: num(8)?,
            scan: match &rec[9] {
                "1" => true,
                "0" => false,
                other => return Err(fail(line, format!("scan flag `{other}` is not 0 or 1"))),
            },
        });
        log.events.push(rec[10].to_string());
    }
    Ok(log)
}
