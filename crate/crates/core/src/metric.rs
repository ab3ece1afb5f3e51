//! Ground-truth geometry. Algorithms never call into this module directly
//! for distances; they go through [`crate::oracle`]. Evaluation code (true
//! costs, test oracles) is the exception.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index of a point in its owning dataset or metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointId(pub usize);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for PointId {
    fn from(i: usize) -> Self {
        PointId(i)
    }
}

/// Points in R^dim, stored row-major, with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    coords: Vec<f64>,
    dim: usize,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(coords: Vec<f64>, dim: usize, labels: Option<Vec<usize>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidData("dimension must be at least 1".into()));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidData(format!(
                "{} coordinates do not form a non-empty set of {dim}-dimensional points",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite coordinate in point {}", i / dim)));
        }
        let n = coords.len() / dim;
        if let Some(l) = &labels {
            validate_labels(l, n)?;
        }
        Ok(Self { coords, dim, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::InvalidData(format!("point {i} has the wrong dimension")));
        }
        Self::new(rows.concat(), dim, labels)
    }

    /// 1-D convenience constructor, mostly for tests and examples.
    pub fn from_line(xs: &[f64]) -> Result<Self> {
        Self::new(xs.to_vec(), 1, None)
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        validate_labels(&labels, self.n())?;
        self.labels = Some(labels);
        Ok(self)
    }
}

pub(crate) fn validate_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::InvalidData(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l] = true;
    }
    if let Some(gap) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidData(format!("label {gap} unused; labels must be contiguous from 0")));
    }
    Ok(())
}

/// Symmetric distance matrix stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
    labels: Option<Vec<usize>>,
}

#[inline]
pub(crate) fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    /// `upper` holds d(i, j) for i < j in row-major order.
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Result<Self> {
        let m = Self::answers_from_upper(n, upper)?;
        if n <= TRIANGLE_CHECK_LIMIT {
            m.check_triangle()?;
        }
        Ok(m)
    }

    /// Like [`DistanceMatrix::from_upper`] without the triangle check. Meant
    /// for weak-oracle answer tables, which need not form a metric.
    pub fn answers_from_upper(n: usize, upper: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidData("matrix must have at least one point".into()));
        }
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::InvalidData(format!(
                "expected {} upper-triangle entries for n={n}, got {}",
                n * (n - 1) / 2,
                upper.len()
            )));
        }
        if let Some(v) = upper.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidData(format!("invalid distance entry {v}")));
        }
        Ok(Self { n, upper, labels: None })
    }

    /// Builds from a full square matrix, rejecting asymmetric input or a
    /// non-zero diagonal.
    pub fn from_square(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidData(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidData(format!("d({i},{i}) = {} is not zero", row[i])));
            }
            for j in i + 1..n {
                if row[j] != rows[j][i] {
                    return Err(Error::InvalidData(format!("matrix not symmetric at ({i},{j})")));
                }
                upper.push(row[j]);
            }
        }
        Self::from_upper(n, upper)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        validate_labels(&labels, self.n)?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.upper[condensed_index(self.n, j, i)],
        }
    }

    fn check_triangle(&self) -> Result<()> {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.get(a, c) > self.get(a, b) + self.get(b, c) + 1e-9 {
                        return Err(Error::InvalidData(format!(
                            "triangle inequality violated by ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Matrices up to this size get an exhaustive triangle-inequality scan at load.
pub const TRIANGLE_CHECK_LIMIT: usize = 64;
/// Exact pair scans for aspect ratio and distance range run up to this size.
pub const EXACT_SCAN_LIMIT: usize = 4096;

/// The true metric (X, d). Cheap to clone; the backing data is shared.
#[derive(Debug, Clone)]
pub enum Metric {
    Euclidean(Arc<Dataset>),
    Matrix(Arc<DistanceMatrix>),
}

impl From<Dataset> for Metric {
    fn from(d: Dataset) -> Self {
        Metric::Euclidean(Arc::new(d))
    }
}

impl From<DistanceMatrix> for Metric {
    fn from(m: DistanceMatrix) -> Self {
        Metric::Matrix(Arc::new(m))
    }
}

/// Range of pairwise distances: smallest non-zero and largest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRange {
    pub min_nonzero: f64,
    pub max: f64,
    pub estimated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AspectRatio {
    pub value: f64,
    pub estimated: bool,
}

impl Metric {
    pub fn n(&self) -> usize {
        match self {
            Metric::Euclidean(d) => d.n(),
            Metric::Matrix(m) => m.n(),
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Metric::Euclidean(d) => d.labels(),
            Metric::Matrix(m) => m.labels(),
        }
    }

    pub fn check(&self, id: PointId) -> Result<usize> {
        let n = self.n();
        if id.0 < n {
            Ok(id.0)
        } else {
            Err(Error::OutOfRange { id: id.0, n })
        }
    }

    /// Exact distance between two points.
    pub fn true_distance(&self, a: PointId, b: PointId) -> Result<f64> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        Ok(self.dist(a, b))
    }

    #[inline]
    pub(crate) fn dist(&self, a: usize, b: usize) -> f64 {
        match self {
            Metric::Euclidean(d) => {
                if a == b {
                    return 0.0;
                }
                let (p, q) = (d.point(a), d.point(b));
                p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Metric::Matrix(m) => m.get(a, b),
        }
    }

    /// Smallest non-zero and largest pairwise distance. Exact up to
    /// [`EXACT_SCAN_LIMIT`] points; beyond that the scan covers all pairs of a
    /// seeded sample of that many points and the result is flagged estimated.
    /// `None` when every pairwise distance is zero.
    pub fn distance_range(&self, seed: u64) -> Option<DistanceRange> {
        let n = self.n();
        let (ids, estimated): (Vec<usize>, bool) = if n <= EXACT_SCAN_LIMIT {
            ((0..n).collect(), false)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (index::sample(&mut rng, n, EXACT_SCAN_LIMIT).into_vec(), true)
        };
        self.range_over(&ids).map(|(min_nonzero, max)| DistanceRange { min_nonzero, max, estimated })
    }

    pub(crate) fn range_over(&self, ids: &[usize]) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let d = self.dist(a, b);
                if d > 0.0 {
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
        (hi > 0.0).then_some((lo, hi))
    }

    /// Max pairwise distance over min non-zero pairwise distance.
    pub fn aspect_ratio(&self, seed: u64) -> Result<AspectRatio> {
        if self.n() < 2 {
            return Err(Error::Precondition("aspect ratio needs at least two points".into()));
        }
        let r = self.distance_range(seed).ok_or(Error::DegenerateMetric)?;
        Ok(AspectRatio { value: r.max / r.min_nonzero, estimated: r.estimated })
    }
}
