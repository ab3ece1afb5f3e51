//! Median-over-ball distance estimates.
//!
//! For a point `y` with a ball `B(y, r_y)` of at least `ball_size` points,
//! the estimate of `d(x, y)` is the median of the weak answers `WO(x, z)` over
//! the ball members `z`. It is off by at most `r_y` unless half the ball's
//! answers are corrupted. Against a center set `C` with per-center radii
//! `r_c`, `min_c (est(x, c) + r_c)` upper-bounds `d(x, C)` with high
//! probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::PointId;
use crate::oracle::{StrongOracle, WeakOracle};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Two,
    E,
}

impl LogBase {
    pub fn log(self, n: usize) -> f64 {
        let n = n.max(1) as f64;
        match self {
            LogBase::Two => n.log2(),
            LogBase::E => n.ln(),
        }
    }
}

/// The `180 log n` multiplier shared by ball sizes and sample sizes.
pub const BALL_FACTOR: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Scales `180 log n`.
    pub c_ball: f64,
    pub log_base: LogBase,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self { c_ball: 0.05, log_base: LogBase::Two }
    }
}

impl EstimatorParams {
    /// `max(3, round(c_ball * 180 * log n))`, never more than `n`.
    pub fn ball_size(&self, n: usize) -> usize {
        let raw = (self.c_ball * BALL_FACTOR * self.log_base.log(n)).round();
        let raw = if raw.is_finite() && raw > 0.0 { raw as usize } else { 0 };
        raw.max(3).min(n)
    }
}

/// A ball around `center` listing the points used for its estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    pub center: PointId,
    pub radius: f64,
    pub members: Vec<PointId>,
}

/// Lower median (element `(m - 1) / 2` in sorted order). Reorders `values`.
pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mid = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    Some(*m)
}

/// Median of the weak answers from `x` to every ball member. Issues exactly
/// one weak query per member.
pub fn point_to_point_estimate(weak: &mut WeakOracle, x: PointId, ball: &BallSpec) -> Result<f64> {
    if ball.members.is_empty() {
        return Err(Error::Precondition("estimate over an empty ball".into()));
    }
    let x = weak.metric().check(x)?;
    let mut vals = Vec::with_capacity(ball.members.len());
    for z in &ball.members {
        let z = weak.metric().check(*z)?;
        vals.push(weak.query_idx(x, z));
    }
    Ok(lower_median(&mut vals).expect("non-empty"))
}

// Same estimate without metering, for batched passes.
#[inline]
pub(crate) fn ball_median(weak: &WeakOracle, x: usize, members: &[usize], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(members.iter().map(|&z| weak.answer(x, z)));
    lower_median(scratch).expect("non-empty ball")
}

/// `p(x) = est(x)^2 / sum est^2`, or uniform when every estimate is zero.
pub fn build_sampling_distribution(estimates: &[f64]) -> Vec<f64> {
    let total: f64 = estimates.iter().map(|e| e * e).sum();
    if estimates.is_empty() {
        return Vec::new();
    }
    if !(total > 0.0) || !total.is_finite() {
        return vec![1.0 / estimates.len() as f64; estimates.len()];
    }
    estimates.iter().map(|e| e * e / total).collect()
}

/// Evolving multiset of centers with exact pairwise distances and per-center
/// balls. A center's ball is the smallest radius holding `ball_size` centers,
/// counting the center itself.
#[derive(Debug, Clone)]
pub struct CenterState {
    ball_size: usize,
    centers: Vec<usize>,
    dist: Vec<Vec<f64>>,
    radii: Vec<f64>,
    members: Vec<Vec<usize>>,
    member_points: Vec<Vec<usize>>,
    versions: Vec<u64>,
    next_version: u64,
}

impl CenterState {
    /// Strong-queries every pair of `initial` and builds the balls.
    pub fn new(strong: &mut StrongOracle, initial: &[PointId], ball_size: usize) -> Result<Self> {
        if ball_size == 0 {
            return Err(Error::Config("ball size must be positive".into()));
        }
        if initial.len() < ball_size {
            return Err(Error::Precondition(format!(
                "{} initial centers, need at least the ball size {ball_size}",
                initial.len()
            )));
        }
        let ids = initial.iter().map(|&c| strong.metric().check(c)).collect::<Result<Vec<_>>>()?;
        let h = ids.len();
        let mut dist = vec![vec![0.0; h]; h];
        for i in 0..h {
            for j in i + 1..h {
                let d = strong.query_idx(ids[i], ids[j]);
                dist[i][j] = d;
                dist[j][i] = d;
            }
        }
        let mut s = Self {
            ball_size,
            centers: ids,
            dist,
            radii: vec![0.0; h],
            members: vec![Vec::new(); h],
            member_points: vec![Vec::new(); h],
            versions: vec![0; h],
            next_version: 0,
        };
        for c in 0..h {
            s.rebuild_ball(c);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn ball_size(&self) -> usize {
        self.ball_size
    }

    pub fn centers(&self) -> Vec<PointId> {
        self.centers.iter().map(|&c| PointId(c)).collect()
    }

    pub(crate) fn center_indices(&self) -> &[usize] {
        &self.centers
    }

    pub fn radius(&self, slot: usize) -> f64 {
        self.radii[slot]
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// Exact distance between two center slots (already strong-queried).
    pub fn pairwise(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub(crate) fn pairwise_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn ball(&self, slot: usize) -> BallSpec {
        BallSpec {
            center: PointId(self.centers[slot]),
            radius: self.radii[slot],
            members: self.member_points[slot].iter().map(|&p| PointId(p)).collect(),
        }
    }

    pub(crate) fn ball_points(&self, slot: usize) -> &[usize] {
        &self.member_points[slot]
    }

    pub(crate) fn version(&self, slot: usize) -> u64 {
        self.versions[slot]
    }

    fn rebuild_ball(&mut self, c: usize) -> bool {
        let row = &self.dist[c];
        let mut scratch = row.clone();
        let k = self.ball_size.min(scratch.len()) - 1;
        let (_, r, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
        let r = *r;
        let members: Vec<usize> = (0..row.len()).filter(|&j| row[j] <= r).collect();
        if members == self.members[c] && r == self.radii[c] {
            return false;
        }
        self.member_points[c] = members.iter().map(|&j| self.centers[j]).collect();
        self.members[c] = members;
        self.radii[c] = r;
        self.next_version += 1;
        self.versions[c] = self.next_version;
        true
    }

    /// Appends `new_center` (duplicates allowed), strong-querying it against
    /// every current center, and recomputes the affected balls. Returns the
    /// slots whose balls changed, the new slot included.
    pub fn refresh_balls(&mut self, strong: &mut StrongOracle, new_center: PointId) -> Result<Vec<usize>> {
        let s = strong.metric().check(new_center)?;
        let h = self.centers.len();
        let row: Vec<f64> = (0..h).map(|j| strong.query_idx(s, self.centers[j])).collect();
        for (j, d) in row.iter().enumerate() {
            self.dist[j].push(*d);
        }
        let mut own = row.clone();
        own.push(0.0);
        self.dist.push(own);
        self.centers.push(s);
        self.radii.push(f64::NAN);
        self.members.push(Vec::new());
        self.member_points.push(Vec::new());
        self.versions.push(0);

        let mut changed = Vec::new();
        for (j, d) in row.iter().enumerate() {
            // a center outside the ball leaves the order statistic alone
            if *d <= self.radii[j] && self.rebuild_ball(j) {
                changed.push(j);
            }
        }
        self.rebuild_ball(h);
        changed.push(h);
        Ok(changed)
    }
}

/// `min_c est(x, c) + r_c` together with the first slot attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetEstimate {
    pub value: f64,
    pub slot: usize,
}

/// Per-point cache of `est(x, c)` keyed on the ball version of `c`, so an
/// estimate is recomputed only after that center's ball changes.
#[derive(Debug, Clone)]
pub struct EstimateCache {
    entries: Vec<Vec<(u64, f64)>>,
}

const STALE: u64 = u64::MAX;

impl EstimateCache {
    pub fn new(n: usize) -> Self {
        Self { entries: vec![Vec::new(); n] }
    }

    /// Cached `est(x, slot)`, if current for the state it was computed against.
    pub fn get(&self, x: PointId, state: &CenterState, slot: usize) -> Option<f64> {
        self.entries
            .get(x.0)
            .and_then(|e| e.get(slot))
            .filter(|(v, _)| *v == state.version(slot))
            .map(|(_, e)| *e)
    }

    /// Recomputes stale estimates for every point and returns each point's
    /// set estimate. Weak queries are accounted exactly as if every
    /// recomputed estimate had called [`point_to_point_estimate`].
    pub fn refresh_all(&mut self, weak: &mut WeakOracle, state: &CenterState) -> Result<Vec<SetEstimate>> {
        let n = weak.metric().n();
        if self.entries.len() != n {
            return Err(Error::Precondition("estimate cache sized for a different metric".into()));
        }
        let weak_ref: &WeakOracle = weak;
        let results = par::map_mut(&mut self.entries, |x, entry| {
            let mut scratch = Vec::new();
            let mut recomputed = Vec::new();
            entry.resize(state.len(), (STALE, 0.0));
            for (slot, cell) in entry.iter_mut().enumerate() {
                if cell.0 != state.version(slot) {
                    *cell = (state.version(slot), ball_median(weak_ref, x, state.ball_points(slot), &mut scratch));
                    recomputed.push(slot);
                }
            }
            (best_slot(entry, state), recomputed)
        });
        record_recomputed(weak, state, results.iter().map(|(_, r)| r.as_slice()));
        Ok(results.into_iter().map(|(e, _)| e).collect())
    }
}

fn best_slot(entry: &[(u64, f64)], state: &CenterState) -> SetEstimate {
    let mut best = SetEstimate { value: f64::INFINITY, slot: 0 };
    for (slot, (_, e)) in entry.iter().enumerate() {
        let v = e + state.radius(slot);
        if v < best.value {
            best = SetEstimate { value: v, slot };
        }
    }
    best
}

fn record_recomputed<'a>(weak: &mut WeakOracle, state: &CenterState, per_point: impl Iterator<Item = &'a [usize]>) {
    let n = weak.metric().n();
    let mut stamp = vec![usize::MAX; n];
    let mut union = Vec::new();
    for (x, slots) in per_point.enumerate() {
        if slots.is_empty() {
            continue;
        }
        union.clear();
        let mut raw = 0u64;
        for &slot in slots {
            let pts = state.ball_points(slot);
            raw += pts.len() as u64;
            for &z in pts {
                if stamp[z] != x {
                    stamp[z] = x;
                    union.push(z);
                }
            }
        }
        weak.record_bulk(raw, union.iter().map(|&z| (x, z)));
    }
}

/// `min_c est(x, c) + r_c` over the state's centers, reusing cached
/// per-center estimates that are still current. Ties go to the earliest slot.
pub fn point_to_set_estimate(
    weak: &mut WeakOracle,
    x: PointId,
    state: &CenterState,
    cache: &mut EstimateCache,
) -> Result<(f64, PointId)> {
    if state.len() < state.ball_size() {
        return Err(Error::Precondition(format!(
            "{} centers, estimates need at least {}",
            state.len(),
            state.ball_size()
        )));
    }
    let xi = weak.metric().check(x)?;
    let mut entry = std::mem::take(&mut cache.entries[xi]);
    entry.resize(state.len(), (STALE, 0.0));
    for slot in 0..state.len() {
        if entry[slot].0 != state.version(slot) {
            entry[slot] = (state.version(slot), point_to_point_estimate(weak, x, &state.ball(slot))?);
        }
    }
    let best = best_slot(&entry, state);
    cache.entries[xi] = entry;
    Ok((best.value, PointId(state.center_indices()[best.slot])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{Dataset, Metric};
    use crate::oracle::{Corruption, WeakOracleConfig};

    fn line(xs: &[f64]) -> Metric {
        Dataset::from_line(xs).unwrap().into()
    }

    fn exact_weak(m: &Metric) -> WeakOracle {
        WeakOracle::new(m, WeakOracleConfig::new(0.0, Corruption::UniformRange, 0)).unwrap()
    }

    #[test]
    fn lower_median_examples() {
        assert_eq!(lower_median(&mut [1.0, 2.0, 100.0, 2.0, 3.0]), Some(2.0));
        assert_eq!(lower_median(&mut [4.0, 1.0]), Some(1.0));
        assert_eq!(lower_median(&mut []), None);
    }

    #[test]
    fn constant_answers_give_constant_estimate() {
        // x at 0, ball members all at distance 4
        let m: Metric = Dataset::from_rows(
            &[vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0], vec![-4.0, 0.0], vec![0.0, -4.0]],
            None,
        )
        .unwrap()
        .into();
        let mut w = exact_weak(&m);
        let ball = BallSpec { center: PointId(1), radius: 8.0, members: (1..5).map(PointId).collect() };
        assert_eq!(point_to_point_estimate(&mut w, PointId(0), &ball).unwrap(), 4.0);
        assert_eq!((w.raw(), w.distinct()), (4, 4));
        let empty = BallSpec { center: PointId(1), radius: 0.0, members: vec![] };
        assert!(point_to_point_estimate(&mut w, PointId(0), &empty).is_err());
    }

    #[test]
    fn concentration_with_large_ball() {
        // y = 0 with 1800 members spread over [-1, 1], x = 10, delta = 1/3
        let ball_size = (180.0 * 1024f64.log2()) as usize;
        assert_eq!(ball_size, 1800);
        let mut xs: Vec<f64> = (0..ball_size).map(|i| -1.0 + 2.0 * i as f64 / (ball_size - 1) as f64).collect();
        xs.push(10.0);
        let m = line(&xs);
        let x = ball_size;
        let members: Vec<PointId> = (0..ball_size).map(PointId).collect();
        let ball = BallSpec { center: PointId(ball_size / 2), radius: 1.0, members };
        let mut ok = 0;
        for seed in 0..1000 {
            let cfg = WeakOracleConfig::new(1.0 / 3.0, Corruption::UniformRange, seed);
            let mut w = WeakOracle::new(&m, cfg).unwrap();
            let e = point_to_point_estimate(&mut w, PointId(x), &ball).unwrap();
            if (9.0..=11.0).contains(&e) {
                ok += 1;
            }
        }
        assert!(ok >= 999, "{ok}/1000");
    }

    #[test]
    fn sampling_distribution_examples() {
        assert_eq!(build_sampling_distribution(&[3.0, 4.0]), vec![9.0 / 25.0, 16.0 / 25.0]);
        assert_eq!(build_sampling_distribution(&[0.0, 0.0, 0.0, 0.0]), vec![0.25; 4]);
        assert_eq!(build_sampling_distribution(&[0.0, 0.0, 5.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn ball_radius_order_statistic() {
        let m = line(&(0..10).map(f64::from).collect::<Vec<_>>());
        let mut s = StrongOracle::new(&m);
        let ids: Vec<PointId> = (0..10).map(PointId).collect();
        let st = CenterState::new(&mut s, &ids, 3).unwrap();
        assert_eq!(st.radius(0), 2.0);
        assert_eq!(st.ball(0).members, vec![PointId(0), PointId(1), PointId(2)]);
        assert_eq!(st.radius(5), 1.0);
        assert_eq!(s.raw(), 45);
    }

    #[test]
    fn coincident_centers_have_zero_radius() {
        let m = line(&[5.0; 6]);
        let mut s = StrongOracle::new(&m);
        let ids: Vec<PointId> = (0..6).map(PointId).collect();
        let st = CenterState::new(&mut s, &ids, 3).unwrap();
        assert!((0..6).all(|c| st.radius(c) == 0.0));
        let mut w = exact_weak(&m);
        let mut cache = EstimateCache::new(6);
        let (v, c) = point_to_set_estimate(&mut w, PointId(2), &st, &mut cache).unwrap();
        assert_eq!((v, c), (0.0, PointId(0)));
    }

    #[test]
    fn adding_a_center_costs_one_query_per_center() {
        let m = line(&(0..20).map(f64::from).collect::<Vec<_>>());
        let mut s = StrongOracle::new(&m);
        let ids: Vec<PointId> = (0..5).map(PointId).collect();
        let mut st = CenterState::new(&mut s, &ids, 3).unwrap();
        let before = s.raw();
        st.refresh_balls(&mut s, PointId(12)).unwrap();
        assert_eq!(s.raw() - before, 5);
        // duplicates are appended, not rejected
        st.refresh_balls(&mut s, PointId(12)).unwrap();
        assert_eq!(st.len(), 7);
        assert_eq!(st.pairwise(5, 6), 0.0);
    }

    #[test]
    fn needs_ball_size_centers() {
        let m = line(&[0.0, 1.0, 2.0]);
        let mut s = StrongOracle::new(&m);
        let e = CenterState::new(&mut s, &[PointId(0), PointId(1)], 3).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }

    #[test]
    fn one_dimensional_sandwich() {
        // centers at 0..=4 (ball_size 3), x = 7: nearest center 4 at distance 3
        let m = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 7.0]);
        let mut s = StrongOracle::new(&m);
        let ids: Vec<PointId> = (0..5).map(PointId).collect();
        let st = CenterState::new(&mut s, &ids, 3).unwrap();
        assert_eq!(st.radius(4), 2.0);
        let mut w = exact_weak(&m);
        let mut cache = EstimateCache::new(6);
        let (v, _) = point_to_set_estimate(&mut w, PointId(5), &st, &mut cache).unwrap();
        assert!((3.0..=5.0).contains(&v), "{v}");
    }

    #[test]
    fn batched_pass_matches_single_point_api() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64 * 0.7).collect();
        let m = line(&xs);
        let cfg = WeakOracleConfig::new(0.3, Corruption::UniformRange, 11);
        let ids: Vec<PointId> = (0..8).map(|i| PointId(i * 3)).collect();

        let mut s1 = StrongOracle::new(&m);
        let mut st = CenterState::new(&mut s1, &ids, 4).unwrap();
        st.refresh_balls(&mut s1, PointId(39)).unwrap();

        let mut w1 = WeakOracle::new(&m, cfg).unwrap();
        let mut c1 = EstimateCache::new(40);
        let batched = c1.refresh_all(&mut w1, &st).unwrap();

        let mut w2 = WeakOracle::new(&m, cfg).unwrap();
        let mut c2 = EstimateCache::new(40);
        for x in 0..40 {
            let (v, c) = point_to_set_estimate(&mut w2, PointId(x), &st, &mut c2).unwrap();
            assert_eq!(v, batched[x].value);
            assert_eq!(c.0, st.center_indices()[batched[x].slot]);
        }
        assert_eq!((w1.raw(), w1.distinct()), (w2.raw(), w2.distinct()));
    }
}
