//! Metered distance oracles.
//!
//! [`StrongOracle`] answers with the exact distance. [`WeakOracle`] answers
//! each unordered pair correctly with probability `1 - delta` and otherwise
//! with a corrupted value; the decision and the corrupted value are a pure
//! function of `(seed, pair)`, so repeated queries always agree.
//!
//! Both oracles count raw queries and distinct unordered pairs.

use std::sync::Arc;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{DistanceMatrix, Metric, PointId};
use crate::prf::{pair_hash, pair_key, unit};

/// Per-run query accounting, shared layout for both oracle kinds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub strong_raw: u64,
    pub strong_distinct: u64,
    pub weak_raw: u64,
    pub weak_distinct: u64,
}

impl QueryLedger {
    pub fn new(strong: &StrongOracle, weak: &WeakOracle) -> Self {
        Self {
            strong_raw: strong.counter.raw,
            strong_distinct: strong.counter.distinct(),
            weak_raw: weak.counter.raw,
            weak_distinct: weak.counter.distinct(),
        }
    }

    pub const CSV_HEADER: &'static str = "strong_raw,strong_distinct,weak_raw,weak_distinct";

    pub fn to_csv_fields(&self) -> String {
        format!("{},{},{},{}", self.strong_raw, self.strong_distinct, self.weak_raw, self.weak_distinct)
    }
}

#[derive(Debug, Default, Clone)]
struct PairCounter {
    raw: u64,
    seen: FxHashSet<u64>,
}

impl PairCounter {
    #[inline]
    fn record(&mut self, a: usize, b: usize) {
        self.raw += 1;
        self.seen.insert(pair_key(a, b));
    }

    fn distinct(&self) -> u64 {
        self.seen.len() as u64
    }
}

/// Anything that answers distance queries between point ids.
pub trait DistanceOracle {
    fn query(&mut self, a: PointId, b: PointId) -> Result<f64>;
    fn metric(&self) -> &Metric;
    /// This oracle's counts; the other oracle kind's fields stay zero.
    fn ledger(&self) -> QueryLedger;
    fn n(&self) -> usize {
        self.metric().n()
    }
}

/// Exact, metered oracle.
#[derive(Debug, Clone)]
pub struct StrongOracle {
    metric: Metric,
    counter: PairCounter,
}

impl StrongOracle {
    pub fn new(metric: &Metric) -> Self {
        Self { metric: metric.clone(), counter: PairCounter::default() }
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn raw(&self) -> u64 {
        self.counter.raw
    }

    pub fn distinct(&self) -> u64 {
        self.counter.distinct()
    }

    #[inline]
    pub(crate) fn query_idx(&mut self, a: usize, b: usize) -> f64 {
        self.counter.record(a, b);
        self.metric.dist(a, b)
    }
}

impl DistanceOracle for StrongOracle {
    fn query(&mut self, a: PointId, b: PointId) -> Result<f64> {
        let (a, b) = (self.metric.check(a)?, self.metric.check(b)?);
        Ok(self.query_idx(a, b))
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }

    fn ledger(&self) -> QueryLedger {
        QueryLedger { strong_raw: self.raw(), strong_distinct: self.distinct(), ..Default::default() }
    }
}

/// How a corrupted weak answer is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Uniform in [min non-zero distance, max distance].
    #[default]
    UniformRange,
    /// Same-label pairs get a random cross-label true distance and vice
    /// versa. Needs ground-truth labels.
    LabelSwap,
}

impl std::str::FromStr for Corruption {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-range" | "uniform" => Ok(Corruption::UniformRange),
            "label-swap" | "swap" => Ok(Corruption::LabelSwap),
            _ => Err(Error::Config(format!("unknown corruption mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Corruption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Corruption::UniformRange => "uniform-range",
            Corruption::LabelSwap => "label-swap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakOracleConfig {
    pub delta: f64,
    pub corruption: Corruption,
    pub seed: u64,
}

impl WeakOracleConfig {
    pub fn new(delta: f64, corruption: Corruption, seed: u64) -> Self {
        Self { delta, corruption, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1/2), got {}", self.delta)));
        }
        Ok(())
    }
}

const COIN_STREAM: u64 = 0;
const VALUE_STREAM: u64 = 1;
const PICK_STREAM: u64 = 2;

// Points grouped by label, for drawing uniformly random intra- or
// inter-label pairs.
#[derive(Debug)]
struct LabelPools {
    labels: Vec<usize>,
    by_label: Vec<usize>,
    offsets: Vec<usize>,
    intra_cum: Vec<f64>,
    inter_cum: Vec<f64>,
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

fn pick(cum: &[f64], u: f64) -> usize {
    let target = u * cum.last().copied().unwrap_or(0.0);
    cum.partition_point(|&c| c <= target).min(cum.len() - 1)
}

impl LabelPools {
    fn new(labels: &[usize]) -> Result<Self> {
        let n = labels.len();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_label: Vec<usize> = (0..n).collect();
        by_label.sort_by_key(|&i| (labels[i], i));
        let mut offsets = vec![0; k + 1];
        for &l in labels {
            offsets[l + 1] += 1;
        }
        for i in 0..k {
            offsets[i + 1] += offsets[i];
        }
        let size = |i: usize| (offsets[i + 1] - offsets[i]) as f64;
        let intra_cum = cumulative((0..k).map(|i| size(i) * (size(i) - 1.0) / 2.0));
        let inter_cum = cumulative((0..k).map(|i| size(i) * (n as f64 - size(i))));
        if k < 2 {
            return Err(Error::Config("label-swap corruption needs at least two labels".into()));
        }
        if intra_cum.last().copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::Config("label-swap corruption needs a label with two or more points".into()));
        }
        Ok(Self { labels: labels.to_vec(), by_label, offsets, intra_cum, inter_cum })
    }

    // A uniformly random unordered pair with equal labels, as (u, v).
    fn intra_pair(&self, h: impl Fn(u64) -> f64) -> (usize, usize) {
        let c = pick(&self.intra_cum, h(0));
        let (start, len) = (self.offsets[c], self.offsets[c + 1] - self.offsets[c]);
        let i = ((h(1) * len as f64) as usize).min(len - 1);
        let mut j = ((h(2) * (len - 1) as f64) as usize).min(len - 2);
        if j >= i {
            j += 1;
        }
        (self.by_label[start + i], self.by_label[start + j])
    }

    fn inter_pair(&self, h: impl Fn(u64) -> f64) -> (usize, usize) {
        let n = self.by_label.len();
        let c = pick(&self.inter_cum, h(0));
        let (start, end) = (self.offsets[c], self.offsets[c + 1]);
        let len = end - start;
        let i = ((h(1) * len as f64) as usize).min(len - 1);
        let mut j = ((h(2) * (n - len) as f64) as usize).min(n - len - 1);
        if j >= start {
            j += len;
        }
        (self.by_label[start + i], self.by_label[j])
    }
}

#[derive(Debug)]
enum Model {
    Prf { config: WeakOracleConfig, lo: f64, hi: f64, pools: Option<LabelPools> },
    Matrix(Arc<DistanceMatrix>),
}

/// Deterministic corruption model for one `(config, metric)` pair. Cheap to
/// query; shared by the weak oracle and by the experiment-matrix builder.
#[derive(Debug)]
pub struct CorruptionModel {
    model: Model,
}

impl CorruptionModel {
    pub fn new(config: WeakOracleConfig, metric: &Metric) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1], got {}", config.delta)));
        }
        let (lo, hi) = match metric.distance_range(config.seed) {
            Some(r) => (r.min_nonzero, r.max),
            None => (0.0, 0.0),
        };
        let pools = match config.corruption {
            Corruption::UniformRange => None,
            Corruption::LabelSwap => {
                let labels = metric
                    .labels()
                    .ok_or_else(|| Error::Config("label-swap corruption requires ground-truth labels".into()))?;
                Some(LabelPools::new(labels)?)
            }
        };
        Ok(Self { model: Model::Prf { config, lo, hi, pools } })
    }

    /// Whether the pair's answer is corrupted.
    #[inline]
    pub fn is_corrupted(&self, a: usize, b: usize) -> bool {
        match &self.model {
            Model::Prf { config, .. } => {
                a != b && config.delta > 0.0 && unit(pair_hash(config.seed, a, b, COIN_STREAM)) < config.delta
            }
            Model::Matrix(_) => false,
        }
    }

    /// The value returned for the pair when it is corrupted.
    pub fn corrupted_value(&self, metric: &Metric, a: usize, b: usize) -> f64 {
        match &self.model {
            Model::Prf { config, lo, hi, pools } => {
                let h = |s: u64| unit(pair_hash(config.seed, a, b, PICK_STREAM + s));
                match pools {
                    None => lo + (hi - lo) * unit(pair_hash(config.seed, a, b, VALUE_STREAM)),
                    Some(p) => {
                        let (u, v) =
                            if p.labels[a] == p.labels[b] { p.inter_pair(h) } else { p.intra_pair(h) };
                        metric.dist(u, v)
                    }
                }
            }
            Model::Matrix(m) => m.get(a, b),
        }
    }

    #[inline]
    pub(crate) fn answer(&self, metric: &Metric, a: usize, b: usize) -> f64 {
        match &self.model {
            Model::Matrix(m) => m.get(a, b),
            Model::Prf { .. } => {
                if self.is_corrupted(a, b) {
                    self.corrupted_value(metric, a, b)
                } else {
                    metric.dist(a, b)
                }
            }
        }
    }
}

/// Corrupted value for a pair under the given configuration (assuming the
/// pair's coin came up "corrupt").
pub fn corrupted_value(config: WeakOracleConfig, metric: &Metric, a: PointId, b: PointId) -> Result<f64> {
    let (a, b) = (metric.check(a)?, metric.check(b)?);
    Ok(CorruptionModel::new(config, metric)?.corrupted_value(metric, a, b))
}

/// Persistent, metered weak oracle.
#[derive(Debug)]
pub struct WeakOracle {
    metric: Metric,
    model: Arc<CorruptionModel>,
    counter: PairCounter,
}

impl WeakOracle {
    /// Weak oracle with `0 <= delta < 1/2`.
    pub fn new(metric: &Metric, config: WeakOracleConfig) -> Result<Self> {
        config.validate()?;
        Self::with_any_delta(metric, config)
    }

    /// Like [`WeakOracle::new`] but accepts any `delta` in [0, 1]. Only
    /// useful for stress-testing corruption itself.
    pub fn with_any_delta(metric: &Metric, config: WeakOracleConfig) -> Result<Self> {
        let model = CorruptionModel::new(config, metric)?;
        Ok(Self { metric: metric.clone(), model: Arc::new(model), counter: PairCounter::default() })
    }

    /// Answers straight from a precomputed (perturbed) matrix.
    pub fn from_matrix(metric: &Metric, answers: Arc<DistanceMatrix>) -> Result<Self> {
        if answers.n() != metric.n() {
            return Err(Error::Config(format!(
                "weak matrix has {} points, metric has {}",
                answers.n(),
                metric.n()
            )));
        }
        let model = CorruptionModel { model: Model::Matrix(answers) };
        Ok(Self { metric: metric.clone(), model: Arc::new(model), counter: PairCounter::default() })
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn model(&self) -> &CorruptionModel {
        &self.model
    }

    pub fn raw(&self) -> u64 {
        self.counter.raw
    }

    pub fn distinct(&self) -> u64 {
        self.counter.distinct()
    }

    /// Unmetered answer. Callers must account for it with
    /// [`WeakOracle::record`] or [`WeakOracle::record_bulk`].
    #[inline]
    pub(crate) fn answer(&self, a: usize, b: usize) -> f64 {
        self.model.answer(&self.metric, a, b)
    }

    #[inline]
    pub(crate) fn query_idx(&mut self, a: usize, b: usize) -> f64 {
        self.counter.record(a, b);
        self.answer(a, b)
    }

    /// Adds `raw` raw queries and marks every pair in `pairs` as seen.
    pub(crate) fn record_bulk(&mut self, raw: u64, pairs: impl IntoIterator<Item = (usize, usize)>) {
        self.counter.raw += raw;
        for (a, b) in pairs {
            self.counter.seen.insert(pair_key(a, b));
        }
    }
}

impl DistanceOracle for WeakOracle {
    fn query(&mut self, a: PointId, b: PointId) -> Result<f64> {
        let (a, b) = (self.metric.check(a)?, self.metric.check(b)?);
        Ok(self.query_idx(a, b))
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }

    fn ledger(&self) -> QueryLedger {
        QueryLedger { weak_raw: self.raw(), weak_distinct: self.distinct(), ..Default::default() }
    }
}
