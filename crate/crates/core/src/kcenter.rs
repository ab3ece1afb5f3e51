//! k-center with a weak and a strong oracle.
//!
//! [`carve_once`] is weak-greedy ball carving at a fixed radius: sample a
//! set, strong-query it, pick its densest `2 rad` ball as center plus
//! companion points, then carve every remaining point whose median weak
//! distance to the companions is at most `4 rad`. [`kcenter_weak_strong`]
//! searches the `(1 + eps)` radius grid for the smallest radius at which
//! carving completes.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{ball_median, LogBase, BALL_FACTOR};
use crate::kmeans::ClusteringResult;
use crate::metric::{Metric, PointId};
use crate::oracle::{DistanceOracle, QueryLedger, StrongOracle, WeakOracle};
use crate::par;
use crate::prf::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    #[default]
    Binary,
    Linear,
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Binary => "binary",
            SearchMode::Linear => "linear",
        })
    }
}

impl std::str::FromStr for SearchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(SearchMode::Binary),
            "linear" => Ok(SearchMode::Linear),
            _ => Err(Error::Config(format!("unknown search mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCenterWSParams {
    pub k: usize,
    pub epsilon: f64,
    /// Scales the `180 k log n` sample size.
    pub c_sample: f64,
    /// Scales the `180 log n` ball threshold.
    pub c_ball: f64,
    pub log_base: LogBase,
    pub seed: u64,
    pub search_mode: SearchMode,
}

/// Default ball-threshold constant. Kept well below `c_sample` so a sample
/// spread evenly over `k` clusters still holds a dense enough ball.
pub const DEFAULT_C_BALL: f64 = 0.015;

impl KCenterWSParams {
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Self {
        Self { k, epsilon, c_sample: 0.05, c_ball: DEFAULT_C_BALL, log_base: LogBase::Two, seed, search_mode: SearchMode::Binary }
    }

    pub fn sample_size(&self, n: usize) -> usize {
        let raw = (self.c_sample * BALL_FACTOR * self.k as f64 * self.log_base.log(n)).round();
        (raw.max(0.0) as usize).max(self.k + 1)
    }

    pub fn ball_threshold(&self, n: usize) -> usize {
        let raw = (self.c_ball * BALL_FACTOR * self.log_base.log(n)).round();
        (raw.max(0.0) as usize).max(3)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.c_sample > 0.0) || !(self.c_ball > 0.0) {
            return Err(Error::Config("scaling constants must be positive".into()));
        }
        if self.sample_size(n) < self.ball_threshold(n) {
            return Err(Error::Config(format!(
                "sample size {} is below the ball threshold {}",
                self.sample_size(n),
                self.ball_threshold(n)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarveStatus {
    Completed,
    AbortTooManyCenters,
    AbortSparseBall,
    AbortSmallsetInfeasible,
}

impl CarveStatus {
    pub fn completed(self) -> bool {
        self == CarveStatus::Completed
    }
}

impl std::fmt::Display for CarveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CarveStatus::Completed => "completed",
            CarveStatus::AbortTooManyCenters => "abort-too-many-centers",
            CarveStatus::AbortSparseBall => "abort-sparse-ball",
            CarveStatus::AbortSmallsetInfeasible => "abort-smallset-infeasible",
        })
    }
}

/// A carved center with the points used to estimate distances to it. Centers
/// placed by the exact small-set path have no companions.
#[derive(Debug, Clone, PartialEq)]
pub struct CarvedCenter {
    pub center: PointId,
    pub companions: Vec<PointId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarveOutcome {
    pub status: CarveStatus,
    pub centers: Vec<CarvedCenter>,
    pub assignment: Vec<Option<usize>>,
    pub ledger: QueryLedger,
    /// Strong queries spent by each sampled carving step.
    pub strong_per_step: Vec<u64>,
    /// Largest distance (estimated or exact) that justified an assignment.
    pub max_assign_estimate: f64,
}

impl CarveOutcome {
    pub fn center_ids(&self) -> Vec<PointId> {
        self.centers.iter().map(|c| c.center).collect()
    }

    /// Largest true distance from a point to its assigned center, over
    /// assigned points. Evaluation only.
    pub fn true_radius(&self, metric: &Metric) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(x, a)| a.map(|c| metric.dist(x, self.centers[c].center.0)))
            .fold(0.0, f64::max)
    }
}

// Exact greedy cover of `order` (first uncovered point becomes a center,
// everything within 2 rad of it is carved). Fails once more than `budget`
// centers would be needed. Returns (center, carved) pairs.
fn greedy_cover(
    strong: &mut StrongOracle,
    order: &[usize],
    rad: f64,
    budget: usize,
    max_dist: &mut f64,
) -> Option<Vec<(usize, Vec<usize>)>> {
    let mut remaining = order.to_vec();
    let mut out = Vec::new();
    while let Some(&c) = remaining.first() {
        if out.len() == budget {
            return None;
        }
        let mut carved = Vec::new();
        remaining.retain(|&s| {
            let d = if s == c { 0.0 } else { strong.query_idx(c, s) };
            if d <= 2.0 * rad {
                *max_dist = max_dist.max(d);
                carved.push(s);
                false
            } else {
                true
            }
        });
        out.push((c, carved));
    }
    Some(out)
}

/// One round of weak-greedy ball carving at radius `rad`.
pub fn carve_once(
    weak: &mut WeakOracle,
    strong: &mut StrongOracle,
    params: &KCenterWSParams,
    rad: f64,
) -> Result<CarveOutcome> {
    if !(rad > 0.0) {
        return Err(Error::Precondition(format!("radius must be positive, got {rad}")));
    }
    let n = strong.metric().n();
    params.validate(n)?;
    let sample_size = params.sample_size(n);
    let threshold = params.ball_threshold(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, rad.to_bits()));

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut centers: Vec<CarvedCenter> = Vec::new();
    let mut strong_per_step = Vec::new();
    let mut max_est = 0.0f64;

    let status = loop {
        if remaining.is_empty() {
            break CarveStatus::Completed;
        }
        if centers.len() == params.k {
            break CarveStatus::AbortTooManyCenters;
        }
        if remaining.len() <= sample_size {
            remaining.shuffle(&mut rng);
            let budget = params.k - centers.len();
            match greedy_cover(strong, &remaining, rad, budget, &mut max_est) {
                None => break CarveStatus::AbortSmallsetInfeasible,
                Some(cover) => {
                    for (c, carved) in cover {
                        for s in carved {
                            assignment[s] = Some(centers.len());
                        }
                        centers.push(CarvedCenter { center: PointId(c), companions: Vec::new() });
                    }
                    remaining.clear();
                    continue;
                }
            }
        }

        let before = strong.raw();
        let sample: Vec<usize> =
            index::sample(&mut rng, remaining.len(), sample_size).into_iter().map(|i| remaining[i]).collect();
        let m = sample.len();
        let mut d = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let v = strong.query_idx(sample[i], sample[j]);
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        strong_per_step.push(strong.raw() - before);

        let count = |i: usize| d[i].iter().filter(|&&v| v <= 2.0 * rad).count();
        let best = (0..m)
            .map(|i| (count(i), sample[i], i))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .expect("non-empty sample");
        if best.0 < threshold {
            break CarveStatus::AbortSparseBall;
        }
        let ci = best.2;
        let mut ball: Vec<usize> = (0..m).filter(|&j| d[ci][j] <= 2.0 * rad).collect();
        ball.sort_by(|&a, &b| d[ci][a].total_cmp(&d[ci][b]).then(sample[a].cmp(&sample[b])));
        let companions: Vec<usize> = ball[..threshold].iter().map(|&j| sample[j]).collect();

        let weak_ref: &WeakOracle = weak;
        let estimates = par::map_range(remaining.len(), |i| {
            let mut scratch = Vec::with_capacity(companions.len());
            ball_median(weak_ref, remaining[i], &companions, &mut scratch)
        });
        weak.record_bulk(
            (remaining.len() * companions.len()) as u64,
            remaining.iter().flat_map(|&s| companions.iter().map(move |&z| (s, z))),
        );

        let idx = centers.len();
        let mut kept = Vec::with_capacity(remaining.len());
        for (s, est) in remaining.iter().zip(&estimates) {
            if *est <= 4.0 * rad {
                assignment[*s] = Some(idx);
                max_est = max_est.max(*est);
            } else {
                kept.push(*s);
            }
        }
        remaining = kept;
        centers.push(CarvedCenter {
            center: PointId(sample[ci]),
            companions: companions.into_iter().map(PointId).collect(),
        });
    };

    Ok(CarveOutcome {
        status,
        centers,
        assignment,
        ledger: QueryLedger::new(strong, weak),
        strong_per_step,
        max_assign_estimate: max_est,
    })
}

/// Exact greedy ball carving at radius `rad`, visiting points in a seeded
/// random order. Completes with at most `k` centers whenever `rad` is at
/// least the optimal k-center radius.
pub fn greedy_carve_exact(strong: &mut StrongOracle, k: usize, rad: f64, seed: u64) -> Result<CarveOutcome> {
    if !(rad > 0.0) {
        return Err(Error::Precondition(format!("radius must be positive, got {rad}")));
    }
    let n = strong.metric().n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut max_dist = 0.0;
    let (status, cover) = match greedy_cover(strong, &order, rad, k, &mut max_dist) {
        Some(c) => (CarveStatus::Completed, c),
        None => (CarveStatus::AbortTooManyCenters, Vec::new()),
    };
    let mut assignment = vec![None; n];
    let mut centers = Vec::new();
    for (i, (c, carved)) in cover.into_iter().enumerate() {
        for s in carved {
            assignment[s] = Some(i);
        }
        centers.push(CarvedCenter { center: PointId(c), companions: Vec::new() });
    }
    Ok(CarveOutcome {
        status,
        centers,
        assignment,
        ledger: DistanceOracle::ledger(strong),
        strong_per_step: Vec::new(),
        max_assign_estimate: max_dist,
    })
}

/// The radius grid `lo * (1 + eps)^i`, from `lo` up to the first value `>= hi`.
pub fn radius_grid(lo: f64, hi: f64, epsilon: f64) -> Vec<f64> {
    let mut grid = vec![lo];
    let mut r = lo;
    while r < hi {
        r *= 1.0 + epsilon;
        grid.push(r);
    }
    grid
}

#[derive(Debug, Clone)]
pub struct KCenterRun {
    pub grid: Vec<f64>,
    pub found_rad: Option<f64>,
    /// Outcome at `found_rad`, or at the top of the grid when nothing completed.
    pub outcome: CarveOutcome,
    pub result: Option<ClusteringResult>,
    pub carve_calls: usize,
}

impl KCenterRun {
    pub fn result(&self) -> Result<&ClusteringResult> {
        self.result.as_ref().ok_or(Error::NoFeasibleRadius)
    }
}

const GRID_TAG: u64 = 0x6772_6964;

/// Bounds for the radius grid from strong queries over one seeded sample of
/// `min(n, 2 * sample_size)` points.
pub fn grid_bounds(strong: &mut StrongOracle, params: &KCenterWSParams) -> (f64, f64) {
    let n = strong.metric().n();
    let m = n.min(2 * params.sample_size(n));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, GRID_TAG));
    let ids = index::sample(&mut rng, n, m).into_vec();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let d = strong.query_idx(a, b);
            if d > 0.0 {
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
    }
    if hi > 0.0 {
        (lo, hi)
    } else {
        (1.0, 1.0)
    }
}

/// Weak-greedy ball carving over the radius grid. Binary search assumes
/// completion is monotone in the radius; linear mode scans upward.
pub fn kcenter_weak_strong(
    weak: &mut WeakOracle,
    strong: &mut StrongOracle,
    params: &KCenterWSParams,
) -> Result<KCenterRun> {
    let n = strong.metric().n();
    params.validate(n)?;
    let (lo, hi) = grid_bounds(strong, params);
    let grid = radius_grid(lo, hi, params.epsilon);
    let mut calls = 0;
    let mut run = |i: usize, weak: &mut WeakOracle, strong: &mut StrongOracle| {
        calls += 1;
        carve_once(weak, strong, params, grid[i])
    };

    let mut found: Option<(usize, CarveOutcome)> = None;
    let mut top: Option<CarveOutcome> = None;
    match params.search_mode {
        SearchMode::Linear => {
            for i in 0..grid.len() {
                let o = run(i, weak, strong)?;
                if o.status.completed() {
                    found = Some((i, o));
                    break;
                }
                top = Some(o);
            }
        }
        SearchMode::Binary => {
            let (mut a, mut b) = (0usize, grid.len() - 1);
            let mut best: Option<(usize, CarveOutcome)> = None;
            while a < b {
                let mid = (a + b) / 2;
                let o = run(mid, weak, strong)?;
                if o.status.completed() {
                    b = mid;
                    best = Some((mid, o));
                } else {
                    a = mid + 1;
                }
            }
            found = match best {
                Some((i, o)) if i == a => Some((i, o)),
                _ => {
                    let o = run(a, weak, strong)?;
                    if o.status.completed() {
                        Some((a, o))
                    } else {
                        top = Some(o);
                        None
                    }
                }
            };
        }
    }

    let metric = strong.metric().clone();
    let ledger = QueryLedger::new(strong, weak);
    Ok(match found {
        Some((i, outcome)) => {
            let centers = outcome.center_ids();
            let assignment: Vec<usize> = outcome.assignment.iter().map(|a| a.expect("completed")).collect();
            let result = ClusteringResult {
                cost: kcenter_cost(&metric, &centers, None),
                assigned_cost: kcenter_cost(&metric, &centers, Some(&assignment)),
                est_cost: outcome.max_assign_estimate,
                centers,
                assignment,
                ledger,
            };
            KCenterRun { grid: grid.clone(), found_rad: Some(grid[i]), outcome, result: Some(result), carve_calls: calls }
        }
        None => KCenterRun {
            grid,
            found_rad: None,
            outcome: top.expect("at least one carve ran"),
            result: None,
            carve_calls: calls,
        },
    })
}

/// Completion indicator of [`carve_once`] at every grid radius.
pub fn completion_profile(
    weak: &mut WeakOracle,
    strong: &mut StrongOracle,
    params: &KCenterWSParams,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let (lo, hi) = grid_bounds(strong, params);
    let grid = radius_grid(lo, hi, params.epsilon);
    let done = grid
        .iter()
        .map(|&r| carve_once(weak, strong, params, r).map(|o| o.status.completed()))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, done))
}

/// k-center objective with true distances (evaluation only): the largest
/// distance from a point to its assigned center, or to its nearest center
/// when no assignment is given.
pub fn kcenter_cost(metric: &Metric, centers: &[PointId], assignment: Option<&[usize]>) -> f64 {
    let per_point = par::map_range(metric.n(), |x| match assignment {
        Some(a) => metric.dist(x, centers[a[x]].0),
        None => centers.iter().map(|c| metric.dist(x, c.0)).fold(f64::INFINITY, f64::min),
    });
    per_point.into_iter().fold(0.0, f64::max)
}

/// Farthest-point traversal started at `first`. Queries every point against
/// every chosen center: exactly `n * k` oracle queries. Points are assigned
/// to their nearest center by oracle answers.
pub fn gonzalez_from(oracle: &mut dyn DistanceOracle, k: usize, first: PointId) -> Result<ClusteringResult> {
    let n = oracle.n();
    if k == 0 || k > n {
        return Err(Error::Config(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    oracle.metric().check(first)?;
    let mut centers = vec![first];
    let mut near = vec![f64::INFINITY; n];
    let mut assignment = vec![0usize; n];
    loop {
        let ci = centers.len() - 1;
        let c = centers[ci];
        for x in 0..n {
            let d = oracle.query(PointId(x), c)?;
            if d < near[x] {
                near[x] = d;
                assignment[x] = ci;
            }
        }
        if centers.len() == k {
            break;
        }
        let far = (0..n).fold(0, |best, x| if near[x] > near[best] { x } else { best });
        centers.push(PointId(far));
    }
    let metric = oracle.metric();
    Ok(ClusteringResult {
        cost: kcenter_cost(metric, &centers, None),
        assigned_cost: kcenter_cost(metric, &centers, Some(&assignment)),
        est_cost: near.iter().copied().fold(0.0, f64::max),
        centers,
        assignment,
        ledger: oracle.ledger(),
    })
}

/// Farthest-point traversal with a seeded uniform first center.
pub fn gonzalez_baseline(oracle: &mut dyn DistanceOracle, k: usize, seed: u64) -> Result<ClusteringResult> {
    let n = oracle.n();
    let first = PointId(ChaCha8Rng::seed_from_u64(seed).random_range(0..n));
    gonzalez_from(oracle, k, first)
}
