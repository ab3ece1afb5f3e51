//! Exhaustive solvers for tiny instances. Centers are restricted to input
//! points for every objective.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Metric, PointId};

/// Largest number of center subsets [`exact_solve`] will enumerate.
pub const SUBSET_BUDGET: u64 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    KMeans,
    KCenter,
    KMedian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub centers: Vec<PointId>,
    pub cost: f64,
    pub objective: Objective,
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

/// Cost of nearest-center assignment under `objective`.
pub fn objective_cost(metric: &Metric, centers: &[usize], objective: Objective) -> f64 {
    let nearest = (0..metric.n()).map(|x| centers.iter().map(|&c| metric.dist(x, c)).fold(f64::INFINITY, f64::min));
    match objective {
        Objective::KMeans => nearest.map(|d| d * d).sum(),
        Objective::KMedian => nearest.sum(),
        Objective::KCenter => nearest.fold(0.0, f64::max),
    }
}

/// Optimal discrete solution by enumerating every `k`-subset in
/// lexicographic order; the first subset attaining the minimum wins.
pub fn exact_solve(metric: &Metric, k: usize, objective: Objective) -> Result<ExactSolution> {
    let n = metric.n();
    if k == 0 || k > n {
        return Err(Error::Config(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if binomial(n, k) > SUBSET_BUDGET {
        return Err(Error::EnumerationGuard { n, k });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..n).combinations(k) {
        let cost = objective_cost(metric, &subset, objective);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, subset));
        }
    }
    let (cost, centers) = best.expect("at least one subset");
    Ok(ExactSolution { centers: centers.into_iter().map(PointId).collect(), cost, objective })
}
