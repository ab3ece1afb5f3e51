//! Experiment sweeps: flat `key = value` configs, per-run CSV rows, a cell
//! summary, and an SVG cost-versus-queries plot.
//!
//! A sweep runs every `(delta, constant)` cell `repeats` times. Repeat `r`
//! uses run seed `derive_seed(seed, r)` in every cell, and all cells share
//! the same baselines: the mean cost of the classical algorithm over the
//! same `repeats` run seeds, with the strong oracle and with the weak oracle
//! at the cell's `delta`.
//!
//! The budget constant `c` is turned into a strong-pair budget
//! `B = c k^2 log2(n)^2 / (1/2 - delta)^2`:
//!
//! * `kmeans-ws` picks `h` centers with `h (h - 1) / 2 <= B`, i.e. `t = h - init`
//!   sampling rounds;
//! * `kcenter-ws` picks the per-step sample size `s` with `s (s - 1) / 2 <= B`;
//! * `kmeans-strong` runs `max(k, B / n)` rounds of `n` strong queries;
//! * the Gonzalez baselines ignore it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{
    build_experiment_weak_matrix, generate_hard_instance, generate_sbm, load_matrix, load_points_csv,
    HardInstanceSpec, SbmSpec,
};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorParams, LogBase, BALL_FACTOR};
use crate::kcenter::{gonzalez_baseline, kcenter_weak_strong, KCenterWSParams, SearchMode};
use crate::kmeans::{kmeans_baseline, kmeans_strong_baseline, kmeans_weak_strong_final, KMeansWSParams, ITERATION_CONSTANT};
use crate::metric::{DistanceMatrix, Metric};
use crate::oracle::{Corruption, QueryLedger, StrongOracle, WeakOracle, WeakOracleConfig};
use crate::par;
use crate::prf::derive_seed;

/// Environment variable holding the worker cap.
pub const WORKERS_ENV: &str = "WS_WORKERS";

/// Reads [`WORKERS_ENV`]. Unset or empty means no cap.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    KmeansWs,
    KcenterWs,
    KmeansStrong,
    GonzalezStrong,
    GonzalezWeak,
}

impl Algo {
    pub const ALL: [Algo; 5] =
        [Algo::KmeansWs, Algo::KcenterWs, Algo::KmeansStrong, Algo::GonzalezStrong, Algo::GonzalezWeak];

    pub fn name(self) -> &'static str {
        match self {
            Algo::KmeansWs => "kmeans-ws",
            Algo::KcenterWs => "kcenter-ws",
            Algo::KmeansStrong => "kmeans-strong",
            Algo::GonzalezStrong => "gonzalez-strong",
            Algo::GonzalezWeak => "gonzalez-weak",
        }
    }

    pub fn is_kmeans(self) -> bool {
        matches!(self, Algo::KmeansWs | Algo::KmeansStrong)
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Sbm(SbmSpec),
    Hard(HardInstanceSpec),
    Points(PathBuf),
    Matrix(PathBuf),
}

impl DatasetSource {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSource::Sbm(_) => "sbm",
            DatasetSource::Hard(_) => "hard",
            DatasetSource::Points(_) => "points",
            DatasetSource::Matrix(_) => "matrix",
        }
    }

    pub fn build(&self) -> Result<Metric> {
        Ok(match self {
            DatasetSource::Sbm(s) => generate_sbm(s)?.into(),
            DatasetSource::Hard(h) => generate_hard_instance(h)?,
            DatasetSource::Points(p) => load_points_csv(p)?.into(),
            DatasetSource::Matrix(p) => load_matrix(p)?.into(),
        })
    }
}

/// How weak answers are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakMode {
    Live(Corruption),
    /// Label-swap answers materialized into a matrix up front.
    Matrix,
}

impl FromStr for WeakMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix" => Ok(WeakMode::Matrix),
            other => Ok(WeakMode::Live(other.parse()?)),
        }
    }
}

impl std::fmt::Display for WeakMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeakMode::Live(c) => write!(f, "{c}"),
            WeakMode::Matrix => f.write_str("matrix"),
        }
    }
}

/// A ready-to-instantiate weak oracle.
#[derive(Debug, Clone)]
pub enum WeakSource {
    Live(WeakOracleConfig),
    Matrix(Arc<DistanceMatrix>),
}

impl WeakSource {
    pub fn new(metric: &Metric, mode: WeakMode, delta: f64, seed: u64) -> Result<Self> {
        Ok(match mode {
            WeakMode::Live(c) => {
                let config = WeakOracleConfig::new(delta, c, seed);
                config.validate()?;
                WeakSource::Live(config)
            }
            WeakMode::Matrix => WeakSource::Matrix(build_experiment_weak_matrix(metric, delta, seed)?),
        })
    }

    pub fn oracle(&self, metric: &Metric) -> Result<WeakOracle> {
        match self {
            WeakSource::Live(c) => WeakOracle::new(metric, *c),
            WeakSource::Matrix(m) => WeakOracle::from_matrix(metric, m.clone()),
        }
    }
}

/// Ball constant used when none is configured.
pub fn default_c_ball(algo: Algo) -> f64 {
    match algo {
        Algo::KcenterWs => crate::kcenter::DEFAULT_C_BALL,
        _ => EstimatorParams::default().c_ball,
    }
}

/// Strong-pair budget for the budget constant `c`.
pub fn strong_pair_budget(c: f64, n: usize, k: usize, delta: f64) -> f64 {
    let log_n = LogBase::Two.log(n);
    c * (k * k) as f64 * log_n * log_n / (0.5 - delta).powi(2)
}

/// Largest `h` with `h (h - 1) / 2 <= budget`.
pub fn pairs_to_points(budget: f64) -> usize {
    let mut h = ((1.0 + (1.0 + 8.0 * budget.max(0.0)).sqrt()) / 2.0).floor() as usize;
    while h > 1 && (h * (h - 1)) as f64 / 2.0 > budget {
        h -= 1;
    }
    h.max(1)
}

/// Parameters of one algorithm run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub constant: Option<f64>,
    pub c_ball: f64,
    pub c_sample: f64,
    pub search_mode: SearchMode,
    pub strong_budget: Option<u64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(algo: Algo, k: usize, delta: f64, seed: u64) -> Self {
        Self {
            algo,
            k,
            epsilon: 0.1,
            delta,
            constant: None,
            c_ball: default_c_ball(algo),
            c_sample: 0.05,
            search_mode: SearchMode::Binary,
            strong_budget: None,
            seed,
        }
    }

    pub fn kmeans_params(&self, n: usize) -> KMeansWSParams {
        let mut p = KMeansWSParams::new(self.k, self.epsilon, self.seed);
        p.estimator = EstimatorParams { c_ball: self.c_ball, log_base: LogBase::Two };
        p.strong_budget = self.strong_budget;
        if let Some(c) = self.constant {
            let h = pairs_to_points(strong_pair_budget(c, n, self.k, self.delta));
            let t = h.saturating_sub(p.initial_centers(n)).max(self.k);
            p.t_override = Some(t);
            p.c_iter = t as f64 * self.epsilon.powi(3) / (ITERATION_CONSTANT * self.k as f64 * LogBase::Two.log(n));
        }
        p
    }

    pub fn kcenter_params(&self, n: usize) -> KCenterWSParams {
        let mut p = KCenterWSParams::new(self.k, self.epsilon, self.seed);
        p.c_ball = self.c_ball;
        p.c_sample = self.c_sample;
        p.search_mode = self.search_mode;
        if let Some(c) = self.constant {
            let s = pairs_to_points(strong_pair_budget(c, n, self.k, self.delta));
            p.c_sample = s as f64 / (BALL_FACTOR * self.k as f64 * LogBase::Two.log(n));
        }
        p
    }

    fn strong_rounds(&self, n: usize) -> usize {
        match self.constant {
            Some(c) => ((strong_pair_budget(c, n, self.k, self.delta) / n as f64) as usize).max(self.k),
            None => self.k,
        }
    }
}

/// What one run produced, before any baseline comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub ledger: QueryLedger,
    /// k-means: nearest-center cost of the `k` output centers. k-center: the
    /// largest true distance from a point to its assigned center.
    pub true_cost: Option<f64>,
    pub est_cost: Option<f64>,
    pub aborted: bool,
    pub status: String,
    pub found_rad: Option<f64>,
    pub c_iter: Option<f64>,
    pub c_sample: Option<f64>,
}

impl RunOutcome {
    fn failed(err: &Error) -> Self {
        Self {
            ledger: QueryLedger::default(),
            true_cost: None,
            est_cost: None,
            aborted: false,
            status: format!("error:{}", err.kind()),
            found_rad: None,
            c_iter: None,
            c_sample: None,
        }
    }
}

/// Runs `cfg.algo` with fresh oracles. Errors become a failed outcome.
pub fn run_algorithm(metric: &Metric, weak: &WeakSource, cfg: &RunConfig) -> RunOutcome {
    try_run(metric, weak, cfg).unwrap_or_else(|e| RunOutcome::failed(&e))
}

fn try_run(metric: &Metric, weak_src: &WeakSource, cfg: &RunConfig) -> Result<RunOutcome> {
    let n = metric.n();
    let mut strong = StrongOracle::new(metric);
    let mut weak = weak_src.oracle(metric)?;
    let plain = |r: crate::kmeans::ClusteringResult, cost: f64| RunOutcome {
        ledger: r.ledger,
        true_cost: Some(cost),
        est_cost: Some(r.est_cost),
        aborted: false,
        status: "ok".into(),
        found_rad: None,
        c_iter: None,
        c_sample: None,
    };
    Ok(match cfg.algo {
        Algo::KmeansWs => {
            let p = cfg.kmeans_params(n);
            let (out, fin) = kmeans_weak_strong_final(&mut weak, &mut strong, &p)?;
            RunOutcome {
                ledger: fin.ledger,
                true_cost: Some(fin.cost),
                est_cost: Some(out.bicriteria.est_cost),
                aborted: out.aborted,
                status: if out.aborted { "aborted".into() } else { "ok".into() },
                found_rad: None,
                c_iter: Some(p.c_iter),
                c_sample: None,
            }
        }
        Algo::KcenterWs => {
            let p = cfg.kcenter_params(n);
            let run = kcenter_weak_strong(&mut weak, &mut strong, &p)?;
            let ledger = QueryLedger::new(&strong, &weak);
            match &run.result {
                Some(r) => RunOutcome {
                    ledger,
                    true_cost: Some(r.assigned_cost),
                    est_cost: Some(r.est_cost),
                    aborted: false,
                    status: run.outcome.status.to_string(),
                    found_rad: run.found_rad,
                    c_iter: None,
                    c_sample: Some(p.c_sample),
                },
                None => RunOutcome {
                    ledger,
                    true_cost: None,
                    est_cost: None,
                    aborted: true,
                    status: Error::NoFeasibleRadius.kind().into(),
                    found_rad: None,
                    c_iter: None,
                    c_sample: Some(p.c_sample),
                },
            }
        }
        Algo::KmeansStrong => {
            let r = kmeans_strong_baseline(&mut strong, cfg.k, Some(cfg.strong_rounds(n)), cfg.seed)?;
            let cost = r.cost;
            plain(r, cost)
        }
        Algo::GonzalezStrong => {
            let r = gonzalez_baseline(&mut strong, cfg.k, cfg.seed)?;
            let cost = r.assigned_cost;
            plain(r, cost)
        }
        Algo::GonzalezWeak => {
            let r = gonzalez_baseline(&mut weak, cfg.k, cfg.seed)?;
            let cost = r.assigned_cost;
            plain(r, cost)
        }
    })
}

/// Cost of the classical algorithm for `algo`'s objective, run through the
/// strong oracle (`weak = None`) or through a weak oracle.
pub fn baseline_cost(metric: &Metric, algo: Algo, k: usize, weak: Option<&WeakSource>, seed: u64) -> Result<f64> {
    let mut oracle: Box<dyn crate::oracle::DistanceOracle> = match weak {
        None => Box::new(StrongOracle::new(metric)),
        Some(w) => Box::new(w.oracle(metric)?),
    };
    if algo.is_kmeans() {
        Ok(kmeans_baseline(oracle.as_mut(), k, seed)?.cost)
    } else {
        Ok(gonzalez_baseline(oracle.as_mut(), k, seed)?.assigned_cost)
    }
}

fn ratio(cost: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (cost, base) {
        (Some(c), Some(b)) if b > 0.0 => Some(c / b),
        (Some(c), Some(_)) if c == 0.0 => Some(1.0),
        _ => None,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One k-means run as a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRow {
    pub algo: Algo,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub eps: f64,
    pub c_ball: f64,
    pub c_iter: Option<f64>,
    pub seed: u64,
    pub strong_distinct: u64,
    pub weak_distinct: u64,
    pub true_cost: Option<f64>,
    pub est_cost: Option<f64>,
    pub approx_factor: Option<f64>,
    pub aborted: bool,
}

impl KMeansRow {
    pub const HEADER: &'static str =
        "algo,n,k,delta,eps,c_ball,c_iter,seed,strong_distinct,weak_distinct,true_cost,est_cost,approx_factor,aborted";

    pub fn new(n: usize, cfg: &RunConfig, out: &RunOutcome, baseline: Option<f64>) -> Self {
        Self {
            algo: cfg.algo,
            n,
            k: cfg.k,
            delta: cfg.delta,
            eps: cfg.epsilon,
            c_ball: cfg.c_ball,
            c_iter: out.c_iter,
            seed: cfg.seed,
            strong_distinct: out.ledger.strong_distinct,
            weak_distinct: out.ledger.weak_distinct,
            true_cost: out.true_cost,
            est_cost: out.est_cost,
            approx_factor: ratio(out.true_cost, baseline),
            aborted: out.aborted || out.status.starts_with("error"),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algo,
            self.n,
            self.k,
            self.delta,
            self.eps,
            self.c_ball,
            fmt_opt(self.c_iter),
            self.seed,
            self.strong_distinct,
            self.weak_distinct,
            fmt_opt(self.true_cost),
            fmt_opt(self.est_cost),
            fmt_opt(self.approx_factor),
            self.aborted
        )
    }
}

/// One k-center run as a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct KCenterRow {
    pub algo: Algo,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub eps: f64,
    pub c_sample: Option<f64>,
    pub c_ball: f64,
    pub seed: u64,
    pub search_mode: SearchMode,
    pub found_rad: Option<f64>,
    pub strong_distinct: u64,
    pub weak_distinct: u64,
    pub true_radius: Option<f64>,
    pub approx_factor: Option<f64>,
    pub status: String,
}

impl KCenterRow {
    pub const HEADER: &'static str = "algo,n,k,delta,eps,c_sample,c_ball,seed,search_mode,found_rad,strong_distinct,weak_distinct,true_radius,approx_factor,status";

    pub fn new(n: usize, cfg: &RunConfig, out: &RunOutcome, baseline: Option<f64>) -> Self {
        Self {
            algo: cfg.algo,
            n,
            k: cfg.k,
            delta: cfg.delta,
            eps: cfg.epsilon,
            c_sample: out.c_sample,
            c_ball: cfg.c_ball,
            seed: cfg.seed,
            search_mode: cfg.search_mode,
            found_rad: out.found_rad,
            strong_distinct: out.ledger.strong_distinct,
            weak_distinct: out.ledger.weak_distinct,
            true_radius: out.true_cost,
            approx_factor: ratio(out.true_cost, baseline),
            status: out.status.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algo,
            self.n,
            self.k,
            self.delta,
            self.eps,
            fmt_opt(self.c_sample),
            self.c_ball,
            self.seed,
            self.search_mode,
            fmt_opt(self.found_rad),
            self.strong_distinct,
            self.weak_distinct,
            fmt_opt(self.true_radius),
            fmt_opt(self.approx_factor),
            self.status
        )
    }
}

/// One sweep run, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub algo: Algo,
    pub dataset: String,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub constant: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub eps: f64,
    pub c_ball: f64,
    pub c_iter: Option<f64>,
    pub c_sample: Option<f64>,
    pub found_rad: Option<f64>,
    pub strong_raw: u64,
    pub strong_distinct: u64,
    pub weak_raw: u64,
    pub weak_distinct: u64,
    pub pct_strong: f64,
    pub true_cost: Option<f64>,
    pub est_cost: Option<f64>,
    pub baseline_cost: Option<f64>,
    pub weak_baseline_cost: Option<f64>,
    pub approx_factor: Option<f64>,
    pub aborted: bool,
    pub status: String,
    pub wall_ms: u64,
}

impl ExperimentRecord {
    /// The record with its timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_ms: 0, ..self.clone() }
    }
}

pub fn write_records(records: &[ExperimentRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        // serde only emits the header together with the first row
        w.write_record(RECORD_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

const RECORD_HEADER: [&str; 26] = [
    "algo",
    "dataset",
    "n",
    "k",
    "delta",
    "constant",
    "repeat",
    "seed",
    "eps",
    "c_ball",
    "c_iter",
    "c_sample",
    "found_rad",
    "strong_raw",
    "strong_distinct",
    "weak_raw",
    "weak_distinct",
    "pct_strong",
    "true_cost",
    "est_cost",
    "baseline_cost",
    "weak_baseline_cost",
    "approx_factor",
    "aborted",
    "status",
    "wall_ms",
];

pub fn read_records(input: impl Read) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<ExperimentRecord>> {
    read_records(std::fs::File::open(path)?)
}

/// A parsed sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dataset: DatasetSource,
    pub algo: Algo,
    pub k: usize,
    pub deltas: Vec<f64>,
    /// Budget constants; empty means "algorithm defaults".
    pub constants: Vec<f64>,
    pub repeats: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub oracle_seed: u64,
    pub weak_mode: WeakMode,
    pub c_ball: f64,
    pub c_sample: f64,
    pub search_mode: SearchMode,
    pub strong_budget: Option<u64>,
}

const SPEC_KEYS: &[&str] = &[
    "dataset",
    "path",
    "n",
    "k",
    "k_true",
    "dim",
    "mu_scale",
    "l",
    "data_seed",
    "algo",
    "deltas",
    "constants",
    "repeats",
    "eps",
    "seed",
    "oracle_seed",
    "corruption",
    "c_ball",
    "c_sample",
    "search_mode",
    "strong_budget",
];

impl SweepSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_named(&std::fs::read_to_string(path)?, path)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_named(text, Path::new("<config>"))
    }

    fn parse_named(text: &str, path: &Path) -> Result<Self> {
        let err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut kv: BTreeMap<&str, (u64, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(line_no, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            if !SPEC_KEYS.contains(&key) {
                return Err(err(line_no, format!("unknown key {key:?}")));
            }
            if kv.insert(key, (line_no, value.trim())).is_some() {
                return Err(err(line_no, format!("duplicate key {key:?}")));
            }
        }

        fn get<T: FromStr>(
            kv: &BTreeMap<&str, (u64, &str)>,
            key: &str,
            err: &dyn Fn(u64, String) -> Error,
        ) -> Result<Option<T>> {
            match kv.get(key) {
                None => Ok(None),
                Some((line, v)) => {
                    v.parse::<T>().map(Some).map_err(|_| err(*line, format!("bad value {v:?} for {key}")))
                }
            }
        }
        fn list(kv: &BTreeMap<&str, (u64, &str)>, key: &str, err: &dyn Fn(u64, String) -> Error) -> Result<Vec<f64>> {
            match kv.get(key) {
                None => Ok(Vec::new()),
                Some((line, v)) => v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>().map_err(|_| err(*line, format!("bad number {s:?} in {key}"))))
                    .collect(),
            }
        }

        let required = |key: &str| -> Result<usize> {
            get::<usize>(&kv, key, &err)?.ok_or_else(|| err(0, format!("missing key {key:?}")))
        };
        let k = required("k")?;
        let data_seed = get(&kv, "data_seed", &err)?.unwrap_or(0);
        let kind = kv.get("dataset").map_or("sbm", |(_, v)| v);
        let dataset = match kind {
            "sbm" => {
                let n = required("n")?;
                let k_true = get(&kv, "k_true", &err)?.unwrap_or(k);
                let mut s = SbmSpec::new(n, k_true, data_seed);
                s.dim = get(&kv, "dim", &err)?.unwrap_or(k_true);
                s.mu_scale = get(&kv, "mu_scale", &err)?.unwrap_or(s.mu_scale);
                DatasetSource::Sbm(s)
            }
            "hard" => {
                let n = required("n")?;
                let k_true = get(&kv, "k_true", &err)?.unwrap_or(k);
                let mut h = HardInstanceSpec::new(n, k_true, data_seed);
                h.l = get(&kv, "l", &err)?.unwrap_or(h.l);
                DatasetSource::Hard(h)
            }
            "points" | "matrix" => {
                let p = kv.get("path").ok_or_else(|| err(0, format!("dataset {kind} needs a path")))?;
                let p = path.parent().unwrap_or(Path::new("")).join(p.1);
                if kind == "points" {
                    DatasetSource::Points(p)
                } else {
                    DatasetSource::Matrix(p)
                }
            }
            other => return Err(err(kv["dataset"].0, format!("unknown dataset {other:?}"))),
        };
        let seed = get(&kv, "seed", &err)?.unwrap_or(0);
        let algo = get(&kv, "algo", &err)?.unwrap_or(Algo::KmeansWs);
        let spec = SweepSpec {
            dataset,
            algo,
            k,
            deltas: {
                let d = list(&kv, "deltas", &err)?;
                if d.is_empty() {
                    vec![0.0]
                } else {
                    d
                }
            },
            constants: list(&kv, "constants", &err)?,
            repeats: get(&kv, "repeats", &err)?.unwrap_or(5),
            epsilon: get(&kv, "eps", &err)?.unwrap_or(0.1),
            seed,
            oracle_seed: get(&kv, "oracle_seed", &err)?.unwrap_or_else(|| derive_seed(seed, ORACLE_TAG)),
            weak_mode: get(&kv, "corruption", &err)?.unwrap_or(WeakMode::Live(Corruption::UniformRange)),
            c_ball: get(&kv, "c_ball", &err)?.unwrap_or(default_c_ball(algo)),
            c_sample: get(&kv, "c_sample", &err)?.unwrap_or(0.05),
            search_mode: get(&kv, "search_mode", &err)?.unwrap_or_default(),
            strong_budget: get(&kv, "strong_budget", &err)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(0.0..0.5).contains(*d)) {
            return Err(Error::Config(format!("delta must lie in [0, 1/2), got {d}")));
        }
        if let Some(c) = self.constants.iter().find(|c| !(**c > 0.0)) {
            return Err(Error::Config(format!("constants must be positive, got {c}")));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(f64, Option<f64>)> {
        let consts: Vec<Option<f64>> =
            if self.constants.is_empty() { vec![None] } else { self.constants.iter().copied().map(Some).collect() };
        self.deltas.iter().flat_map(|&d| consts.iter().map(move |&c| (d, c))).collect()
    }

    pub fn run_config(&self, delta: f64, constant: Option<f64>, repeat: usize) -> RunConfig {
        RunConfig {
            algo: self.algo,
            k: self.k,
            epsilon: self.epsilon,
            delta,
            constant,
            c_ball: self.c_ball,
            c_sample: self.c_sample,
            search_mode: self.search_mode,
            strong_budget: self.strong_budget,
            seed: derive_seed(self.seed, repeat as u64),
        }
    }
}

const ORACLE_TAG: u64 = 0x6f72_6163;

/// Aggregates of one `(delta, constant)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub delta: f64,
    pub constant: Option<f64>,
    pub runs: usize,
    pub ok_runs: usize,
    pub mean_cost: f64,
    /// Sample variance of the run costs.
    pub cost_variance: f64,
    pub mean_strong_distinct: f64,
    pub pct_strong: f64,
    pub baseline_cost: Option<f64>,
    pub approx_factor: Option<f64>,
    /// `mean_strong_distinct * ln(mean_cost)`; lower is better.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub records: Vec<ExperimentRecord>,
    pub cells: Vec<CellSummary>,
    /// Index into `cells` of the lowest-score cell.
    pub best: Option<usize>,
}

/// Runs every cell of `spec`. Per-run failures land in the `status` column.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let metric = spec.dataset.build()?;
    let n = metric.n();
    let run_seeds: Vec<u64> = (0..spec.repeats).map(|r| derive_seed(spec.seed, r as u64)).collect();

    let mean_baseline = |weak: Option<&WeakSource>| -> Option<f64> {
        let costs = par::map_range(run_seeds.len(), |r| baseline_cost(&metric, spec.algo, spec.k, weak, run_seeds[r]));
        let costs: Vec<f64> = costs.into_iter().collect::<Result<_>>().ok()?;
        Some(costs.iter().sum::<f64>() / costs.len() as f64)
    };
    let strong_base = mean_baseline(None);
    let mut sources = Vec::new();
    for &delta in &spec.deltas {
        let src = WeakSource::new(&metric, spec.weak_mode, delta, spec.oracle_seed)?;
        let weak_base = mean_baseline(Some(&src));
        sources.push((src, weak_base));
    }

    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.repeats).map(move |r| (c, r))).collect();
    let pairs = (n * n.saturating_sub(1) / 2).max(1) as f64;
    let records = par::map_range(jobs.len(), |j| {
        let (c, r) = jobs[j];
        let (delta, constant) = cells[c];
        let di = spec.deltas.iter().position(|&d| d == delta).expect("cell delta");
        let (src, weak_base) = &sources[di];
        let cfg = spec.run_config(delta, constant, r);
        let start = Instant::now();
        let out = run_algorithm(&metric, src, &cfg);
        let wall_ms = start.elapsed().as_millis() as u64;
        ExperimentRecord {
            algo: spec.algo,
            dataset: spec.dataset.name().into(),
            n,
            k: spec.k,
            delta,
            constant,
            repeat: r,
            seed: cfg.seed,
            eps: spec.epsilon,
            c_ball: spec.c_ball,
            c_iter: out.c_iter,
            c_sample: out.c_sample,
            found_rad: out.found_rad,
            strong_raw: out.ledger.strong_raw,
            strong_distinct: out.ledger.strong_distinct,
            weak_raw: out.ledger.weak_raw,
            weak_distinct: out.ledger.weak_distinct,
            pct_strong: out.ledger.strong_distinct as f64 / pairs * 100.0,
            true_cost: out.true_cost,
            est_cost: out.est_cost,
            baseline_cost: strong_base,
            weak_baseline_cost: *weak_base,
            approx_factor: ratio(out.true_cost, strong_base),
            aborted: out.aborted,
            status: out.status,
            wall_ms,
        }
    });
    let summaries = summarize(&records, &cells, n);
    let best = best_cell(&summaries);
    Ok(SweepReport { records, cells: summaries, best })
}

fn summarize(records: &[ExperimentRecord], cells: &[(f64, Option<f64>)], n: usize) -> Vec<CellSummary> {
    let pairs = (n * n.saturating_sub(1) / 2).max(1) as f64;
    cells
        .iter()
        .map(|&(delta, constant)| {
            let rows: Vec<&ExperimentRecord> =
                records.iter().filter(|r| r.delta == delta && r.constant == constant).collect();
            let costs: Vec<f64> = rows.iter().filter_map(|r| r.true_cost).collect();
            let m = costs.len() as f64;
            let mean_cost = if costs.is_empty() { f64::NAN } else { costs.iter().sum::<f64>() / m };
            let cost_variance = if costs.len() > 1 {
                costs.iter().map(|c| (c - mean_cost).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            let mean_strong = rows.iter().map(|r| r.strong_distinct as f64).sum::<f64>() / rows.len().max(1) as f64;
            let baseline_cost = rows.first().and_then(|r| r.baseline_cost);
            let score = if costs.is_empty() { f64::INFINITY } else { mean_strong * mean_cost.max(f64::MIN_POSITIVE).ln() };
            CellSummary {
                delta,
                constant,
                runs: rows.len(),
                ok_runs: costs.len(),
                mean_cost,
                cost_variance,
                mean_strong_distinct: mean_strong,
                pct_strong: mean_strong / pairs * 100.0,
                baseline_cost,
                approx_factor: ratio((!costs.is_empty()).then_some(mean_cost), baseline_cost),
                score,
            }
        })
        .collect()
}

fn best_cell(cells: &[CellSummary]) -> Option<usize> {
    (0..cells.len()).filter(|&i| cells[i].score.is_finite()).min_by(|&a, &b| {
        cells[a]
            .score
            .total_cmp(&cells[b].score)
            .then(cells[a].mean_strong_distinct.total_cmp(&cells[b].mean_strong_distinct))
    })
}

impl SweepReport {
    /// Plain-text table of the cells, best cell marked with `*`.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>1} {:>6} {:>10} {:>5} {:>14} {:>12} {:>12} {:>9} {:>8}",
            "", "delta", "constant", "runs", "mean_cost", "variance", "strong_dist", "%strong", "approx"
        );
        for (i, c) in self.cells.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>1} {:>6} {:>10} {:>5} {:>14.6e} {:>12.4e} {:>12.1} {:>9.4} {:>8}",
                if Some(i) == self.best { "*" } else { "" },
                c.delta,
                c.constant.map_or("default".to_string(), |v| v.to_string()),
                format!("{}/{}", c.ok_runs, c.runs),
                c.mean_cost,
                c.cost_variance,
                c.mean_strong_distinct,
                c.pct_strong,
                c.approx_factor.map_or("-".to_string(), |a| format!("{a:.4}")),
            );
        }
        let _ = writeln!(
            s,
            "%strong counts distinct unordered pairs out of n(n-1)/2. A point-to-point query model charges the same \
             pairs; a model that charges one query per point of a batch would count each sampled center's row once."
        );
        s
    }
}

/// Cost-versus-strong-queries plot as a standalone SVG document. One
/// polyline per delta (cell means, log-scaled x), dashed horizontal rules at
/// the strong and weak baseline costs.
pub fn emit_plot(records: &[ExperimentRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidData("no records to plot".into()));
    }
    let mut groups: BTreeMap<u64, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for r in records {
        let Some(cost) = r.true_cost else { continue };
        let cell = groups.entry(r.delta.to_bits()).or_default().entry(r.constant.unwrap_or(0.0).to_bits()).or_default();
        cell.0 += r.strong_distinct.max(1) as f64;
        cell.1 += cost;
        cell.2 += 1;
    }
    let series: Vec<(f64, Vec<(f64, f64)>)> = groups
        .into_iter()
        .map(|(d, cells)| {
            let mut pts: Vec<(f64, f64)> = cells.values().map(|&(x, y, c)| (x / c as f64, y / c as f64)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            (f64::from_bits(d), pts)
        })
        .collect();
    let mean_of = |f: fn(&ExperimentRecord) -> Option<f64>| {
        let v: Vec<f64> = records.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let rules = [("strong baseline", mean_of(|r| r.baseline_cost)), ("weak baseline", mean_of(|r| r.weak_baseline_cost))];

    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    for y in rules.iter().filter_map(|r| r.1) {
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-12 * y1.abs().max(1.0) {
        let pad = y1.abs().max(1.0) * 0.05;
        (y0, y1) = (y0 - pad, y1 + pad);
    }

    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 80.0;
    const R: f64 = 150.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;
    let px = |x: f64| L + (x.log10() - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{L} {T} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    let mut decade = x0.floor() as i32;
    while decade as f64 <= x1.ceil() {
        let x = L + (decade as f64 - x0) / (x1 - x0) * (W - L - R);
        if (L..=W - R).contains(&x) {
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{decade}</text>"#, H - B + 16.0);
        }
        decade += 1;
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">distinct strong queries</text>"#, (L + W - R) / 2.0, H - 10.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4e}</text>"#, L - 4.0, T + 4.0, y1);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4e}</text>"#, L - 4.0, H - B, y0);
    for (i, (delta, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline class="series" points="{}" fill="none" stroke="{color}"/>"#, path.join(" "));
        }
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="{color}">delta = {delta}</text>"#, W - R + 10.0, T + 14.0 * (i as f64 + 1.0));
    }
    for (j, (name, y)) in rules.iter().enumerate() {
        if let Some(y) = y {
            let _ = writeln!(
                s,
                r#"<line class="baseline" x1="{L}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="{}" stroke-dasharray="6 4"/>"#,
                W - R,
                py(*y),
                py(*y),
                if j == 0 { "black" } else { "gray" }
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, W - R + 10.0, py(*y) + 4.0);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
