//! k-means with a weak and a strong oracle.
//!
//! [`kmeans_weak_strong`] runs oversampling k-means++ where the sampling
//! distribution uses median-over-ball estimates instead of true distances.
//! Only center-to-center distances are strong-queried; every point-to-center
//! distance goes through the weak oracle. The sampled centers plus the
//! estimated assignment form a weighted instance whose pairwise distances are
//! all known exactly, so [`solve_weighted`] can reduce it to `k` centers
//! without further queries.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{build_sampling_distribution, CenterState, EstimateCache, EstimatorParams};
use crate::metric::{Metric, PointId};
use crate::oracle::{DistanceOracle, QueryLedger, StrongOracle, WeakOracle};
use crate::par;
use crate::prf::derive_seed;

/// The constant in front of `k log n / eps^3` in the iteration count.
pub const ITERATION_CONSTANT: f64 = 4320.0 * 29160.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansWSParams {
    pub k: usize,
    pub epsilon: f64,
    /// Scales `ITERATION_CONSTANT / eps^3 * k * log n`.
    pub c_iter: f64,
    pub estimator: EstimatorParams,
    pub t_override: Option<usize>,
    /// Defaults to the ball size.
    pub init_count: Option<usize>,
    pub seed: u64,
    /// Hard cap on raw strong queries.
    pub strong_budget: Option<u64>,
}

impl KMeansWSParams {
    /// Defaults: `c_ball = 0.05`, and `c_iter` chosen so that `t = 20 k log n`.
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            k,
            epsilon,
            c_iter: 20.0 * epsilon.powi(3) / ITERATION_CONSTANT,
            estimator: EstimatorParams::default(),
            t_override: None,
            init_count: None,
            seed,
            strong_budget: None,
        }
    }

    pub fn iterations(&self, n: usize) -> usize {
        if let Some(t) = self.t_override {
            return t;
        }
        let log_n = self.estimator.log_base.log(n);
        let t = (self.c_iter * ITERATION_CONSTANT / self.epsilon.powi(3) * self.k as f64 * log_n).round();
        (t.max(0.0) as usize).max(self.k)
    }

    pub fn ball_size(&self, n: usize) -> usize {
        self.estimator.ball_size(n)
    }

    pub fn initial_centers(&self, n: usize) -> usize {
        self.init_count.unwrap_or_else(|| self.ball_size(n))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.c_iter > 0.0) || !(self.estimator.c_ball > 0.0) {
            return Err(Error::Config("scaling constants must be positive".into()));
        }
        let init = self.initial_centers(n);
        if init < self.ball_size(n) {
            return Err(Error::Config(format!(
                "init_count {init} is below the ball size {}",
                self.ball_size(n)
            )));
        }
        if n < init {
            return Err(Error::Precondition(format!("{n} points but {init} initial centers requested")));
        }
        Ok(())
    }
}

/// Candidates with integer weights and exact pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInstance {
    pub candidates: Vec<PointId>,
    pub weights: Vec<u64>,
    pub exact_pairwise: Vec<Vec<f64>>,
    /// Candidate slot of every original point.
    pub assignment: Vec<usize>,
}

impl WeightedInstance {
    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// `sum_j w_j min_{c in chosen} d(j, c)^2`.
    pub fn weighted_cost(&self, chosen: &[usize]) -> f64 {
        (0..self.candidates.len())
            .map(|j| {
                let d = chosen.iter().map(|&c| self.exact_pairwise[j][c]).fold(f64::INFINITY, f64::min);
                self.weights[j] as f64 * d * d
            })
            .sum()
    }
}

/// Output of a clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub centers: Vec<PointId>,
    /// Index into `centers` for every point.
    pub assignment: Vec<usize>,
    /// Evaluation only: objective with true distances, each point charged to
    /// its nearest output center.
    pub cost: f64,
    /// Evaluation only: objective with true distances under `assignment`.
    pub assigned_cost: f64,
    /// Objective as seen by the algorithm through its oracles.
    pub est_cost: f64,
    pub ledger: QueryLedger,
}

#[derive(Debug, Clone)]
pub struct KMeansWSOutput {
    pub instance: WeightedInstance,
    /// All sampled candidates as centers.
    pub bicriteria: ClusteringResult,
    pub iterations: usize,
    /// Set when the strong budget stopped sampling early.
    pub aborted: bool,
}

/// Oversampling k-means++ driven by estimated distances, followed by the
/// weighted assignment pass.
///
/// Strong queries: `init(init-1)/2` for the initial centers plus `|C_i|` per
/// iteration, i.e. `h(h-1)/2` for `h = init + t`.
pub fn kmeans_weak_strong(
    weak: &mut WeakOracle,
    strong: &mut StrongOracle,
    params: &KMeansWSParams,
) -> Result<KMeansWSOutput> {
    let metric = strong.metric().clone();
    let n = metric.n();
    if weak.metric().n() != n {
        return Err(Error::Config("weak and strong oracles cover different point sets".into()));
    }
    params.validate(n)?;
    let ball_size = params.ball_size(n);
    let init = params.initial_centers(n);
    let t = params.iterations(n);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let initial: Vec<PointId> = index::sample(&mut rng, n, init).into_iter().map(PointId).collect();

    let init_queries = (init * init.saturating_sub(1) / 2) as u64;
    if let Some(budget) = params.strong_budget {
        if strong.raw() + init_queries > budget {
            return Err(Error::BudgetExceeded { budget, ledger: QueryLedger::new(strong, weak) });
        }
    }
    let mut state = CenterState::new(strong, &initial, ball_size)?;
    let mut cache = EstimateCache::new(n);

    let mut aborted = false;
    let mut iterations = 0;
    for _ in 0..t {
        let estimates = cache.refresh_all(weak, &state)?;
        let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
        let probs = build_sampling_distribution(&values);
        let sampled = sample_index(&probs, &mut rng);
        if let Some(budget) = params.strong_budget {
            if strong.raw() + state.len() as u64 > budget {
                aborted = true;
                break;
            }
        }
        state.refresh_balls(strong, PointId(sampled))?;
        iterations += 1;
    }

    let estimates = cache.refresh_all(weak, &state)?;
    let assignment: Vec<usize> = estimates.iter().map(|e| e.slot).collect();
    let mut weights = vec![0u64; state.len()];
    for &slot in &assignment {
        weights[slot] += 1;
    }
    let centers = state.centers();
    let est_cost = estimates.iter().map(|e| e.value * e.value).sum();
    let bicriteria = ClusteringResult {
        cost: evaluate_cost(&metric, &centers, None),
        assigned_cost: evaluate_cost(&metric, &centers, Some(&assignment)),
        est_cost,
        centers: centers.clone(),
        assignment: assignment.clone(),
        ledger: QueryLedger::new(strong, weak),
    };
    let instance = WeightedInstance {
        candidates: centers,
        weights,
        exact_pairwise: state.pairwise_matrix().to_vec(),
        assignment,
    };
    Ok(KMeansWSOutput { instance, bicriteria, iterations, aborted })
}

/// Runs [`kmeans_weak_strong`] and reduces its weighted instance to `k`
/// centers. The final step issues no oracle queries.
pub fn kmeans_weak_strong_final(
    weak: &mut WeakOracle,
    strong: &mut StrongOracle,
    params: &KMeansWSParams,
) -> Result<(KMeansWSOutput, ClusteringResult)> {
    let out = kmeans_weak_strong(weak, strong, params)?;
    let k = params.k.min(out.instance.candidates.len());
    let sol = solve_weighted(&out.instance, k, derive_seed(params.seed, 0x50_4c_56))?;
    let fin = sol.to_result(strong.metric(), &out.instance, out.bicriteria.ledger);
    Ok((out, fin))
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    match WeightedIndex::new(probs) {
        Ok(w) => w.sample(rng),
        Err(_) => rng.random_range(0..probs.len()),
    }
}

/// `k` chosen candidate slots of a weighted instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSolution {
    pub slots: Vec<usize>,
    pub weighted_cost: f64,
    /// Index into `slots` for every candidate.
    pub candidate_assignment: Vec<usize>,
    pub passes: usize,
}

impl WeightedSolution {
    /// Final clustering of the original points: each point follows its
    /// candidate to that candidate's chosen center.
    pub fn to_result(&self, metric: &Metric, instance: &WeightedInstance, ledger: QueryLedger) -> ClusteringResult {
        let centers: Vec<PointId> = self.slots.iter().map(|&s| instance.candidates[s]).collect();
        let assignment: Vec<usize> =
            instance.assignment.iter().map(|&slot| self.candidate_assignment[slot]).collect();
        ClusteringResult {
            cost: evaluate_cost(metric, &centers, None),
            assigned_cost: evaluate_cost(metric, &centers, Some(&assignment)),
            est_cost: self.weighted_cost,
            centers,
            assignment,
            ledger,
        }
    }
}

const MAX_SWAP_PASSES: usize = 50;
const SWAP_TOLERANCE: f64 = 1e-9;

/// Weighted k-means++ seeding on the candidates followed by single-swap
/// local search, using only the instance's exact pairwise distances.
pub fn solve_weighted(instance: &WeightedInstance, k: usize, seed: u64) -> Result<WeightedSolution> {
    let h = instance.candidates.len();
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if k > h {
        return Err(Error::Precondition(format!("k = {k} exceeds the {h} candidates")));
    }
    let d2 = |i: usize, j: usize| {
        let d = instance.exact_pairwise[i][j];
        d * d
    };
    let w: Vec<f64> = instance.weights.iter().map(|&x| x as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; h];
    let first = if w.iter().sum::<f64>() > 0.0 { sample_index(&w, &mut rng) } else { 0 };
    chosen.push(first);
    is_chosen[first] = true;
    let mut near: Vec<f64> = (0..h).map(|j| d2(j, first)).collect();
    while chosen.len() < k {
        let mass: Vec<f64> = (0..h).map(|j| if is_chosen[j] { 0.0 } else { w[j] * near[j] }).collect();
        let next = if mass.iter().sum::<f64>() > 0.0 {
            sample_index(&mass, &mut rng)
        } else {
            (0..h).find(|&j| !is_chosen[j]).expect("k <= h")
        };
        chosen.push(next);
        is_chosen[next] = true;
        for j in 0..h {
            near[j] = near[j].min(d2(j, next));
        }
    }

    // nearest and second-nearest chosen center per candidate
    let summarize = |chosen: &[usize]| -> (Vec<(usize, f64, f64)>, f64) {
        let mut cost = 0.0;
        let info = (0..h)
            .map(|j| {
                let (mut bi, mut b1, mut b2) = (0, f64::INFINITY, f64::INFINITY);
                for (ci, &c) in chosen.iter().enumerate() {
                    let v = d2(j, c);
                    if v < b1 {
                        b2 = b1;
                        b1 = v;
                        bi = ci;
                    } else if v < b2 {
                        b2 = v;
                    }
                }
                cost += w[j] * b1;
                (bi, b1, b2)
            })
            .collect();
        (info, cost)
    };

    let (mut info, mut cost) = summarize(&chosen);
    let mut passes = 0;
    while passes < MAX_SWAP_PASSES && cost > 0.0 {
        passes += 1;
        let mut improved = false;
        for out in 0..k {
            for cand in 0..h {
                if is_chosen[cand] {
                    continue;
                }
                let swapped: f64 = (0..h)
                    .map(|j| {
                        let (bi, b1, b2) = info[j];
                        let keep = if bi == out { b2 } else { b1 };
                        w[j] * keep.min(d2(j, cand))
                    })
                    .sum();
                if swapped < cost - SWAP_TOLERANCE * cost {
                    is_chosen[chosen[out]] = false;
                    chosen[out] = cand;
                    is_chosen[cand] = true;
                    (info, cost) = summarize(&chosen);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let candidate_assignment = info.iter().map(|(bi, _, _)| *bi).collect();
    Ok(WeightedSolution { slots: chosen, weighted_cost: cost, candidate_assignment, passes })
}

// D^2 seeding through an arbitrary oracle: `rounds` centers, one query per
// point per round.
fn d2_seeding(oracle: &mut dyn DistanceOracle, rounds: usize, seed: u64) -> Result<ClusteringResult> {
    let n = oracle.n();
    if rounds == 0 || rounds > n {
        return Err(Error::Config(format!("need 1 <= rounds <= n, got rounds = {rounds}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![PointId(rng.random_range(0..n))];
    let mut near = vec![f64::INFINITY; n];
    let mut assignment = vec![0usize; n];
    for round in 0..rounds {
        let c = centers[round];
        for x in 0..n {
            let d = oracle.query(PointId(x), c)?;
            if d < near[x] {
                near[x] = d;
                assignment[x] = round;
            }
        }
        if round + 1 < rounds {
            let probs = build_sampling_distribution(&near);
            centers.push(PointId(sample_index(&probs, &mut rng)));
        }
    }
    let metric = oracle.metric();
    Ok(ClusteringResult {
        cost: evaluate_cost(metric, &centers, None),
        assigned_cost: evaluate_cost(metric, &centers, Some(&assignment)),
        est_cost: near.iter().map(|d| d * d).sum(),
        centers,
        assignment,
        ledger: oracle.ledger(),
    })
}

/// k-means++ through any oracle. The first center is uniform; every round
/// queries all `n` points against the newest center.
pub fn kmeans_baseline(oracle: &mut dyn DistanceOracle, k: usize, seed: u64) -> Result<ClusteringResult> {
    d2_seeding(oracle, k, seed)
}

/// k-means++ (or oversampling k-means++ with `oversample_t` rounds) using
/// only the strong oracle: `n` strong queries per round.
pub fn kmeans_strong_baseline(
    strong: &mut StrongOracle,
    k: usize,
    oversample_t: Option<usize>,
    seed: u64,
) -> Result<ClusteringResult> {
    d2_seeding(strong, oversample_t.unwrap_or(k), seed)
}

/// k-means objective with true distances. Evaluation only: reads the metric
/// directly and never touches a ledger. With `assignment`, point `x` is
/// charged to `centers[assignment[x]]`; otherwise to its nearest center.
pub fn evaluate_cost(metric: &Metric, centers: &[PointId], assignment: Option<&[usize]>) -> f64 {
    if centers.is_empty() {
        return f64::INFINITY;
    }
    let per_point = par::map_range(metric.n(), |x| match assignment {
        Some(a) => metric.dist(x, centers[a[x]].0).powi(2),
        None => centers.iter().map(|c| metric.dist(x, c.0)).fold(f64::INFINITY, f64::min).powi(2),
    });
    per_point.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Dataset;
    use crate::oracle::{Corruption, WeakOracleConfig};

    fn line(xs: &[f64]) -> Metric {
        Dataset::from_line(xs).unwrap().into()
    }

    fn instance_1d(xs: &[f64], weights: &[u64]) -> WeightedInstance {
        WeightedInstance {
            candidates: (0..xs.len()).map(PointId).collect(),
            weights: weights.to_vec(),
            exact_pairwise: xs.iter().map(|a| xs.iter().map(|b| (a - b).abs()).collect()).collect(),
            assignment: vec![],
        }
    }

    #[test]
    fn evaluate_cost_examples() {
        let m = line(&[0.0, 2.0, 1.0]);
        // points {0, 2} charged to center 1, center itself costs 0
        assert_eq!(evaluate_cost(&m, &[PointId(2)], None), 2.0);
        assert_eq!(evaluate_cost(&m, &[PointId(0), PointId(1), PointId(2)], None), 0.0);
        let nearest = evaluate_cost(&m, &[PointId(0), PointId(1)], None);
        let forced = evaluate_cost(&m, &[PointId(0), PointId(1)], Some(&[1, 0, 1]));
        assert!(forced >= nearest);
    }

    #[test]
    fn solve_weighted_five_candidates() {
        let inst = instance_1d(&[0.0, 1.0, 10.0, 11.0, 100.0], &[5, 5, 5, 5, 1]);
        let best = (0..5)
            .flat_map(|a| (a + 1..5).flat_map(move |b| (b + 1..5).map(move |c| [a, b, c])))
            .map(|s| inst.weighted_cost(&s))
            .fold(f64::INFINITY, f64::min);
        // discrete centers: 5 * 1^2 on each of the two pairs
        assert_eq!(best, 10.0);
        for seed in 0..20 {
            let sol = solve_weighted(&inst, 3, seed).unwrap();
            assert_eq!(sol.weighted_cost, best);
            let mut s = sol.slots.clone();
            s.sort();
            assert!(s.contains(&4));
            assert!(s.contains(&0) || s.contains(&1));
            assert!(s.contains(&2) || s.contains(&3));
        }
    }

    #[test]
    fn solve_weighted_exact_cover() {
        let inst = instance_1d(&[0.0, 3.0, 9.0], &[2, 0, 7]);
        let sol = solve_weighted(&inst, 3, 1).unwrap();
        assert_eq!(sol.weighted_cost, 0.0);
        let mut s = sol.slots.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
        assert!(solve_weighted(&inst, 4, 1).is_err());
    }

    #[test]
    fn strong_baseline_examples() {
        let xs: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let m = line(&xs);
        let mut s = StrongOracle::new(&m);
        let r = kmeans_strong_baseline(&mut s, 1, None, 3).unwrap();
        assert_eq!(s.raw(), 12);
        assert_eq!(r.cost, evaluate_cost(&m, &r.centers, None));
        let mut s = StrongOracle::new(&m);
        let r = kmeans_strong_baseline(&mut s, 12, None, 3).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(s.raw(), 144);
    }

    #[test]
    fn t_override_zero_keeps_initial_centers() {
        let xs: Vec<f64> = (0..30).map(|i| (i % 10) as f64 + 100.0 * (i / 10) as f64).collect();
        let m = line(&xs);
        let mut p = KMeansWSParams::new(3, 0.5, 7);
        p.t_override = Some(0);
        p.estimator.c_ball = 0.001;
        let mut s = StrongOracle::new(&m);
        let mut w = WeakOracle::new(&m, WeakOracleConfig::new(0.2, Corruption::UniformRange, 1)).unwrap();
        let out = kmeans_weak_strong(&mut w, &mut s, &p).unwrap();
        assert_eq!(out.instance.candidates.len(), 3);
        assert_eq!(out.instance.total_weight(), 30);
        assert_eq!(s.raw(), 3);
    }

    #[test]
    fn budget_cap_aborts() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let m = line(&xs);
        let mut p = KMeansWSParams::new(2, 0.5, 7);
        p.t_override = Some(10);
        p.estimator.c_ball = 0.001;
        p.strong_budget = Some(3 + 3 + 4);
        let mut s = StrongOracle::new(&m);
        let mut w = WeakOracle::new(&m, WeakOracleConfig::new(0.0, Corruption::UniformRange, 1)).unwrap();
        let out = kmeans_weak_strong(&mut w, &mut s, &p).unwrap();
        assert!(out.aborted);
        assert_eq!(out.iterations, 2);
        assert_eq!(out.instance.total_weight(), 40);

        p.strong_budget = Some(2);
        let mut s = StrongOracle::new(&m);
        assert!(matches!(kmeans_weak_strong(&mut w, &mut s, &p), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn default_iterations_track_twenty_k_log_n() {
        let p = KMeansWSParams::new(3, 0.3, 0);
        let expect = (20.0 * 3.0 * 1024f64.log2()).round() as usize;
        assert_eq!(p.iterations(1024), expect);
    }
}
