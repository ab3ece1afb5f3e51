//! Synthetic instances and file I/O.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Dataset, DistanceMatrix, Metric};
use crate::oracle::{Corruption, CorruptionModel, WeakOracleConfig};

/// Gaussian blobs `N(mu_scale * e_i, I)` in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n: usize,
    pub k_true: usize,
    pub dim: usize,
    pub mu_scale: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn new(n: usize, k_true: usize, seed: u64) -> Self {
        Self { n, k_true, dim: k_true, mu_scale: 1e5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_true == 0 || self.n < self.k_true {
            return Err(Error::Config(format!("need 1 <= k_true <= n, got k_true = {}, n = {}", self.k_true, self.n)));
        }
        if self.dim < self.k_true {
            return Err(Error::Config(format!("dim {} is below k_true {}", self.dim, self.k_true)));
        }
        if !self.mu_scale.is_finite() {
            return Err(Error::Config("mu_scale must be finite".into()));
        }
        Ok(())
    }
}

// Label of point `i` when `n` points are split into `k` contiguous blocks
// whose sizes differ by at most one.
fn block_label(i: usize, n: usize, k: usize) -> usize {
    let (q, r) = (n / k, n % k);
    let big = r * (q + 1);
    if i < big {
        i / (q + 1)
    } else {
        r + (i - big) / q
    }
}

pub fn generate_sbm(spec: &SbmSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..spec.n).map(|i| block_label(i, spec.n, spec.k_true)).collect();
    let mut coords = Vec::with_capacity(spec.n * spec.dim);
    for &l in &labels {
        for j in 0..spec.dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            coords.push(if j == l { spec.mu_scale + z } else { z });
        }
    }
    Dataset::new(coords, spec.dim, Some(labels))
}

/// `k_true` groups at distance 1 internally and `l` across.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub n: usize,
    pub k_true: usize,
    pub l: f64,
    pub seed: u64,
}

impl HardInstanceSpec {
    /// Uses `l = max(2, n - k)`.
    pub fn new(n: usize, k_true: usize, seed: u64) -> Self {
        Self { n, k_true, l: (n.saturating_sub(k_true) as f64).max(2.0), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_true == 0 || self.n < self.k_true {
            return Err(Error::Config(format!("need 1 <= k_true <= n, got k_true = {}, n = {}", self.k_true, self.n)));
        }
        if !(self.l > 1.0) || !self.l.is_finite() {
            return Err(Error::Config(format!("l must be a finite value above 1, got {}", self.l)));
        }
        Ok(())
    }
}

/// The instance is fully determined by `(n, k_true, l)`; the seed is kept
/// for bookkeeping only.
pub fn generate_hard_instance(spec: &HardInstanceSpec) -> Result<Metric> {
    spec.validate()?;
    let n = spec.n;
    let labels: Vec<usize> = (0..n).map(|i| block_label(i, n, spec.k_true)).collect();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(if labels[i] == labels[j] { 1.0 } else { spec.l });
        }
    }
    Ok(DistanceMatrix::from_upper(n, upper)?.with_labels(labels)?.into())
}

/// Materializes the label-swap weak oracle for `metric` as a matrix: every
/// entry is kept with probability `1 - delta`, otherwise a same-label entry
/// becomes a uniformly random cross-label distance and vice versa. The
/// matrix agrees entry for entry with an on-the-fly label-swap weak oracle
/// built from the same seed.
pub fn build_experiment_weak_matrix(metric: &Metric, delta: f64, seed: u64) -> Result<Arc<DistanceMatrix>> {
    let labels = metric.labels().ok_or_else(|| Error::Config("experiment weak matrix needs labels".into()))?;
    let config = WeakOracleConfig::new(delta, Corruption::LabelSwap, seed);
    config.validate()?;
    let model = CorruptionModel::new(config, metric)?;
    let n = metric.n();
    let rows = crate::par::map_range(n, |i| (i + 1..n).map(|j| model.answer(metric, i, j)).collect::<Vec<_>>());
    let upper: Vec<f64> = rows.into_iter().flatten().collect();
    let m = DistanceMatrix::answers_from_upper(n, upper)?.with_labels(labels.to_vec())?;
    Ok(Arc::new(m))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Reads `label,dim=<d>` followed by `label,x_1,...,x_d` rows. Labels are
/// either all present or all empty.
pub fn load_points_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    read_points_csv(file, path)
}

fn read_points_csv(input: impl Read, path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let dim = match (header.get(0), header.get(1), header.len()) {
        (Some("label"), Some(d), 2) => d
            .strip_prefix("dim=")
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| parse_err(path, 1, format!("bad dimension field {d:?}")))?,
        _ => return Err(parse_err(path, 1, "expected header `label,dim=<d>`")),
    };

    let mut coords = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != dim + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", dim + 1, rec.len())));
        }
        let label = match &rec[0] {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| parse_err(path, line, format!("bad label {s:?}")))?),
        };
        labels.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| parse_err(path, line, format!("bad coordinate {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite coordinate {field:?}")));
            }
            coords.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(path, 2, "no points"));
    }
    let labels = match labels.iter().filter(|l| l.is_some()).count() {
        0 => None,
        c if c == labels.len() => Some(labels.into_iter().flatten().collect()),
        _ => return Err(parse_err(path, 2, "labels must be given for all rows or for none")),
    };
    Dataset::new(coords, dim, labels)
}

pub fn write_points_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_points(data, &mut out)?;
    out.flush()?;
    Ok(())
}

fn write_points(data: &Dataset, out: &mut impl Write) -> Result<()> {
    writeln!(out, "label,dim={}", data.dim())?;
    for i in 0..data.n() {
        if let Some(l) = data.labels() {
            write!(out, "{}", l[i])?;
        }
        for x in data.point(i) {
            // `{}` on f64 prints the shortest string that parses back exactly.
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads `n` followed by the `n (n - 1) / 2` upper-triangle entries in
/// row-major order, separated by any whitespace.
pub fn load_matrix(path: &Path) -> Result<DistanceMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut n: Option<usize> = None;
    let mut upper = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        for tok in line.split_whitespace() {
            match n {
                None => {
                    n = Some(tok.parse().map_err(|_| parse_err(path, i as u64 + 1, format!("bad point count {tok:?}")))?)
                }
                Some(_) => upper.push(
                    tok.parse::<f64>().map_err(|_| parse_err(path, i as u64 + 1, format!("bad distance {tok:?}")))?,
                ),
            }
        }
    }
    let n = n.ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let want = n * n.saturating_sub(1) / 2;
    if upper.len() != want {
        return Err(parse_err(path, 0, format!("expected {want} distances, found {}", upper.len())));
    }
    DistanceMatrix::from_upper(n, upper)
}

pub fn write_matrix(m: &DistanceMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", m.n())?;
    let n = m.n();
    let mut vals = m.upper().iter();
    for i in 0..n {
        let row: Vec<String> = vals.by_ref().take(n - 1 - i).map(|v| v.to_string()).collect();
        if !row.is_empty() {
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}
