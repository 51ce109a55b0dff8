//! Incomplete matrices: the observed entry set, synthetic generation,
//! held-out splits, and triplet CSV ingestion.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{SeedStreams, Stream};
use crate::smalldense::{dot, orthonormalize_columns, DenseMat};
use crate::solvers::FactorPair;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("requested {requested} samples but the matrix only has {available} entries")]
    TooManySamples { requested: usize, available: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("entry ({i}, {j}) is outside a {n}x{m} matrix")]
    OutOfBounds {
        i: usize,
        j: usize,
        n: usize,
        m: usize,
    },
    #[error("duplicate entry ({0}, {1})")]
    DuplicateEntry(usize, usize),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One known entry `(i, j, value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(i: usize, j: usize, value: f64) -> Self {
        Self { i, j, value }
    }
}

/// The sampled entries of an `n x m` matrix, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    n: usize,
    m: usize,
    entries: Vec<Entry>,
}

impl ObservedMatrix {
    /// Validates bounds and uniqueness, then sorts entries canonically.
    pub fn new(n: usize, m: usize, mut entries: Vec<Entry>) -> Result<Self, ProblemError> {
        for e in &entries {
            if e.i >= n || e.j >= m {
                return Err(ProblemError::OutOfBounds {
                    i: e.i,
                    j: e.j,
                    n,
                    m,
                });
            }
        }
        entries.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j))
        {
            return Err(ProblemError::DuplicateEntry(w[0].i, w[0].j));
        }
        Ok(Self { n, m, entries })
    }

    pub fn empty(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            entries: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `||P_Omega(X*)||_F`.
    pub fn value_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.value * e.value)
            .sum::<f64>()
            .sqrt()
    }

    /// Entry positions grouped by row: `by_row()[i]` lists indices into `entries()`.
    pub fn by_row(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n];
        for (k, e) in self.entries.iter().enumerate() {
            groups[e.i].push(k);
        }
        groups
    }

    pub fn by_col(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.m];
        for (k, e) in self.entries.iter().enumerate() {
            groups[e.j].push(k);
        }
        groups
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.entries
            .binary_search_by_key(&(i, j), |e| (e.i, e.j))
            .is_ok()
    }

    /// Keeps only entries whose value differs from `sentinel`.
    pub fn without_value(&self, sentinel: f64) -> Self {
        Self {
            n: self.n,
            m: self.m,
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| e.value != sentinel)
                .collect(),
        }
    }

    /// Picks `count` distinct non-empty rows uniformly and re-indexes them
    /// `0..count` in ascending order of their original index.
    pub fn sample_rows(&self, count: usize, seed: u64) -> Result<Self, ProblemError> {
        let groups = self.by_row();
        let candidates: Vec<usize> = (0..self.n).filter(|&i| !groups[i].is_empty()).collect();
        if count > candidates.len() {
            return Err(ProblemError::TooManySamples {
                requested: count,
                available: candidates.len(),
            });
        }
        let mut rng = SeedStreams::new(seed).rng(Stream::Subset);
        let mut chosen: Vec<usize> = index::sample(&mut rng, candidates.len(), count)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        chosen.sort_unstable();
        let mut entries = Vec::new();
        for (new_i, &old_i) in chosen.iter().enumerate() {
            entries.extend(groups[old_i].iter().map(|&k| Entry {
                i: new_i,
                ..self.entries[k]
            }));
        }
        Ok(Self {
            n: count,
            m: self.m,
            entries,
        })
    }
}

/// Parameters of a synthetic rank-`r` completion problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    /// Over-sampling ratio: `|Omega| = round(os * (n + m - r) * r)`.
    pub os: f64,
    #[serde(default = "one")]
    pub condition_number: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn new(n: usize, m: usize, r: usize, os: f64) -> Self {
        Self {
            n,
            m,
            r,
            os,
            condition_number: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_condition_number(mut self, cn: f64) -> Self {
        self.condition_number = cn;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Degrees of freedom of an `n x m` rank-`r` matrix.
    pub fn dimension(&self) -> f64 {
        ((self.n + self.m - self.r) * self.r) as f64
    }

    pub fn sample_count(&self) -> usize {
        (self.os * self.dimension()).round() as usize
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |msg: String| Err(ProblemError::InvalidSpec(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!(
                "dimensions must be positive, got {}x{}",
                self.n, self.m
            ));
        }
        if self.r == 0 || self.r > self.n.min(self.m) {
            return bad(format!(
                "rank {} must lie in [1, min(n, m) = {}]",
                self.r,
                self.n.min(self.m)
            ));
        }
        if !(self.os >= 1.0) || !self.os.is_finite() {
            return bad(format!(
                "over-sampling ratio {} must be a finite value >= 1",
                self.os
            ));
        }
        if !(self.condition_number >= 1.0) || !self.condition_number.is_finite() {
            return bad(format!(
                "condition number {} must be >= 1",
                self.condition_number
            ));
        }
        if self.condition_number > 1.0 && self.r < 2 {
            return bad("a condition number > 1 needs rank >= 2".into());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        let requested = self.sample_count();
        let available = self.n * self.m;
        if requested > available {
            return Err(ProblemError::TooManySamples {
                requested,
                available,
            });
        }
        Ok(())
    }
}

/// Singular values `10^linspace(-log10(cn), 0, r)` in descending order,
/// largest equal to one.
pub fn singular_value_profile(r: usize, condition_number: f64) -> Vec<f64> {
    if r == 1 {
        return vec![1.0];
    }
    let decades = condition_number.log10();
    (0..r)
        .map(|k| 10f64.powf(-decades * k as f64 / (r - 1) as f64))
        .collect()
}

/// Draws a rank-`r` ground truth and samples `P_Omega` of it.
///
/// Well-conditioned instances use the Gaussian product `A B^T` directly.
/// When `condition_number > 1`, the Gaussian factors are orthonormalized and
/// the log-spaced spectrum of [`singular_value_profile`] is split evenly
/// between them, scaled so that `||X||_F^2 = n m r` like the Gaussian case.
pub fn generate(spec: &GeneratorSpec) -> Result<(ObservedMatrix, FactorPair), ProblemError> {
    spec.validate()?;
    let streams = SeedStreams::new(spec.seed);
    let truth = ground_truth(spec, &streams)?;

    let count = spec.sample_count();
    let mut sampler = streams.rng(Stream::Sampling);
    let mut positions: Vec<usize> = index::sample(&mut sampler, spec.n * spec.m, count).into_vec();
    positions.sort_unstable();

    let mut noise = streams.rng(Stream::Noise);
    let entries = positions
        .into_iter()
        .map(|p| {
            let (i, j) = (p / spec.m, p % spec.m);
            let mut value = truth.predict(i, j);
            if spec.noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut noise);
                value += spec.noise_sigma * z;
            }
            Entry { i, j, value }
        })
        .collect();
    Ok((
        ObservedMatrix {
            n: spec.n,
            m: spec.m,
            entries,
        },
        truth,
    ))
}

fn ground_truth(spec: &GeneratorSpec, streams: &SeedStreams) -> Result<FactorPair, ProblemError> {
    let mut rng = streams.rng(Stream::Factors);
    let mut gaussian =
        |rows: usize| DenseMat::from_fn(rows, spec.r, |_, _| StandardNormal.sample(&mut rng));
    let a = gaussian(spec.n);
    let b = gaussian(spec.m);
    if spec.condition_number <= 1.0 {
        return Ok(FactorPair::new(a, b));
    }
    let degenerate = || ProblemError::InvalidSpec("Gaussian factor was rank deficient".into());
    let qa = orthonormalize_columns(&a).ok_or_else(degenerate)?;
    let qb = orthonormalize_columns(&b).ok_or_else(degenerate)?;
    let profile = singular_value_profile(spec.r, spec.condition_number);
    let target = ((spec.n * spec.m * spec.r) as f64).sqrt();
    let scale = target / dot(&profile, &profile).sqrt();
    let root: Vec<f64> = profile.iter().map(|s| (s * scale).sqrt()).collect();
    let d = DenseMat::diag(&root);
    Ok(FactorPair::new(qa.matmul(&d), qb.matmul(&d)))
}

/// Noiseless entries of `truth` at `count` uniformly chosen positions
/// outside `train`.
pub fn holdout_entries(
    truth: &FactorPair,
    train: &ObservedMatrix,
    count: usize,
    seed: u64,
) -> Result<ObservedMatrix, ProblemError> {
    let (n, m) = (train.n, train.m);
    let available = n * m - train.len();
    if count > available {
        return Err(ProblemError::TooManySamples {
            requested: count,
            available,
        });
    }
    let mut rng = SeedStreams::new(seed).rng(Stream::Holdout);
    let mut taken = HashSet::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    // Rejection sampling over the complement; fine while |Omega| is a modest
    // fraction of n*m, which holds for every completion workload.
    while entries.len() < count {
        let p = rand::Rng::random_range(&mut rng, 0..n * m);
        let (i, j) = (p / m, p % m);
        if train.contains(i, j) || !taken.insert(p) {
            continue;
        }
        entries.push(Entry::new(i, j, truth.predict(i, j)));
    }
    ObservedMatrix::new(n, m, entries)
}

/// Train/test pair with disjoint index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: ObservedMatrix,
    pub test: ObservedMatrix,
}

/// Moves `per_row_holdout` uniformly chosen entries of every row that has
/// more than that many entries into the test set.
pub fn split(data: &ObservedMatrix, per_row_holdout: usize, seed: u64) -> SplitDataset {
    let mut rng = SeedStreams::new(seed).rng(Stream::Split);
    let mut train = Vec::with_capacity(data.len());
    let mut test = Vec::new();
    for row in data.by_row() {
        if per_row_holdout == 0 || row.len() <= per_row_holdout {
            train.extend(row.iter().map(|&k| data.entries[k]));
            continue;
        }
        let mut shuffled = row.clone();
        shuffled.shuffle(&mut rng);
        let (held, kept) = shuffled.split_at(per_row_holdout);
        test.extend(held.iter().map(|&k| data.entries[k]));
        train.extend(kept.iter().map(|&k| data.entries[k]));
    }
    train.sort_by_key(|e| (e.i, e.j));
    test.sort_by_key(|e| (e.i, e.j));
    SplitDataset {
        train: ObservedMatrix {
            n: data.n,
            m: data.m,
            entries: train,
        },
        test: ObservedMatrix {
            n: data.n,
            m: data.m,
            entries: test,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOptions {
    /// Declared dimensions; inferred from the largest indices when absent.
    pub dims: Option<(usize, usize)>,
    /// Rows carrying this value are dropped (e.g. a "not rated" marker).
    pub skip_value: Option<f64>,
}

/// Loads `i,j,value` triplets with 0-based indices. A non-numeric first line
/// is treated as a header; blank lines are ignored.
pub fn load_csv(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<ObservedMatrix, ProblemError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_triplet(trimmed) {
            Ok(e) => {
                if options.skip_value == Some(e.value) {
                    continue;
                }
                entries.push(e);
            }
            Err(_) if lineno == 1 && looks_like_header(trimmed) => continue,
            Err(message) => {
                return Err(ProblemError::ParseError {
                    line: lineno,
                    message,
                })
            }
        }
    }
    let (n, m) = match options.dims {
        Some(d) => d,
        None => (
            entries.iter().map(|e| e.i + 1).max().unwrap_or(0),
            entries.iter().map(|e| e.j + 1).max().unwrap_or(0),
        ),
    };
    ObservedMatrix::new(n, m, entries)
}

fn looks_like_header(line: &str) -> bool {
    line.split(',')
        .next()
        .is_some_and(|f| f.trim().parse::<f64>().is_err())
}

fn parse_triplet(line: &str) -> Result<Entry, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!(
            "expected 3 fields `i,j,value`, found {}",
            fields.len()
        ));
    }
    let i = fields[0]
        .parse::<usize>()
        .map_err(|e| format!("bad row index {:?}: {e}", fields[0]))?;
    let j = fields[1]
        .parse::<usize>()
        .map_err(|e| format!("bad column index {:?}: {e}", fields[1]))?;
    let value = fields[2]
        .parse::<f64>()
        .map_err(|e| format!("bad value {:?}: {e}", fields[2]))?;
    if !value.is_finite() {
        return Err(format!("non-finite value {value}"));
    }
    Ok(Entry { i, j, value })
}

/// Writes `i,j,value` with a header. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn save_csv(data: &ObservedMatrix, path: impl AsRef<Path>) -> Result<(), ProblemError> {
    let mut out = String::with_capacity(data.len() * 24 + 16);
    out.push_str("i,j,value\n");
    for e in &data.entries {
        writeln!(out, "{},{},{}", e.i, e.j, e.value).expect("writing to a String");
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::train_cost;

    #[test]
    fn sample_count_follows_oversampling_formula() {
        let spec = GeneratorSpec::new(100, 100, 5, 8.0);
        assert_eq!(spec.sample_count(), 7800);
        let (data, _) = generate(&spec).unwrap();
        assert_eq!(data.len(), 7800);
    }

    #[test]
    fn too_many_samples_is_rejected() {
        let spec = GeneratorSpec::new(5, 5, 2, 3.0);
        assert!(matches!(
            generate(&spec),
            Err(ProblemError::TooManySamples {
                requested: 48,
                available: 25
            })
        ));
    }

    #[test]
    fn invalid_rank_is_rejected() {
        assert!(matches!(
            GeneratorSpec::new(5, 4, 5, 1.0).validate(),
            Err(ProblemError::InvalidSpec(_))
        ));
    }

    #[test]
    fn profile_is_logspace() {
        let p = singular_value_profile(10, 100.0);
        assert_eq!(p.len(), 10);
        // logspace(-2, 0, 10), reversed
        for (k, v) in p.iter().rev().enumerate() {
            let expected = 10f64.powf(-2.0 + 2.0 * k as f64 / 9.0);
            assert!(
                (v - expected).abs() <= 1e-15 * expected.max(1.0),
                "{k}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn fully_observed_noiseless_has_zero_loss_at_truth() {
        let (n, m, r) = (12, 9, 3);
        let os = (n * m) as f64 / ((n + m - r) * r) as f64;
        let spec = GeneratorSpec::new(n, m, r, os).with_seed(4);
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(data.len(), n * m);
        let c = train_cost(&truth, &data).unwrap();
        assert_eq!(c.cost, 0.0);
        assert_eq!(c.mse, 0.0);
    }

    #[test]
    fn noise_perturbs_values() {
        let spec = GeneratorSpec::new(20, 20, 2, 3.0).with_seed(1);
        let (clean, truth) = generate(&spec).unwrap();
        let (noisy, _) = generate(&spec.clone().with_noise(1e-4)).unwrap();
        assert_eq!(clean.len(), noisy.len());
        let cost = train_cost(&truth, &noisy).unwrap();
        let per_entry = (cost.mse).sqrt();
        assert!(
            per_entry > 5e-5 && per_entry < 2e-4,
            "rms noise {per_entry}"
        );
    }

    #[test]
    fn split_edge_cases() {
        let data = ObservedMatrix::new(
            3,
            3,
            vec![
                Entry::new(0, 0, 1.0),
                Entry::new(1, 0, 2.0),
                Entry::new(1, 1, 3.0),
                Entry::new(1, 2, 4.0),
            ],
        )
        .unwrap();
        let s = split(&data, 0, 1);
        assert!(s.test.is_empty());
        assert_eq!(s.train, data);

        let s = split(&data, 2, 1);
        // row 0 has a single entry and stays in train; row 1 loses two
        assert_eq!(s.test.len(), 2);
        assert!(s.train.contains(0, 0));
        assert!(s.test.entries().iter().all(|e| e.i == 1));
    }

    #[test]
    fn load_rejects_duplicates_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.csv");
        fs::write(&p, "0,1,2.0\n0,1,3.0\n").unwrap();
        assert!(matches!(
            load_csv(&p, &LoadOptions::default()),
            Err(ProblemError::DuplicateEntry(0, 1))
        ));

        fs::write(&p, "i,j,value\n0,1,2.0\n0,x,3.0\n").unwrap();
        match load_csv(&p, &LoadOptions::default()) {
            Err(ProblemError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_header_only_with_dims() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        fs::write(&p, "i,j,value\n").unwrap();
        let opts = LoadOptions {
            dims: Some((4, 6)),
            ..Default::default()
        };
        let data = load_csv(&p, &opts).unwrap();
        assert_eq!((data.n(), data.m(), data.len()), (4, 6, 0));
    }

    #[test]
    fn load_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("three.csv");
        fs::write(&p, "0,1,2.5\n1,0,-1.0\n2,2,0.0\n").unwrap();
        let data = load_csv(&p, &LoadOptions::default()).unwrap();
        assert_eq!(data.len(), 3);
        assert!(data.n() >= 3 && data.m() >= 3);
    }

    #[test]
    fn load_skips_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "0,0,99\n0,1,3.5\n").unwrap();
        let opts = LoadOptions {
            dims: None,
            skip_value: Some(99.0),
        };
        let data = load_csv(&p, &opts).unwrap();
        assert_eq!(data.entries(), &[Entry::new(0, 1, 3.5)]);
    }

    #[test]
    fn sample_rows_reindexes() {
        let spec = GeneratorSpec::new(30, 10, 2, 2.0).with_seed(3);
        let (data, _) = generate(&spec).unwrap();
        let sub = data.sample_rows(5, 9).unwrap();
        assert_eq!(sub.n(), 5);
        assert!(sub.entries().iter().all(|e| e.i < 5));
        assert!(data.sample_rows(31, 9).is_err());
    }
}
