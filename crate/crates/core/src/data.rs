//! Datasets: synthetic label-noise generation, CSV ingestion, group-aware
//! fold assignment, minority oversampling and epoch batching.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Observed label, possibly corrupted.
    pub label: usize,
    /// Uncorrupted label; only known for synthetic data.
    pub clean_label: Option<usize>,
    pub group_id: String,
}

impl Sample {
    /// `Some(true)` when the observed label differs from the clean one.
    pub fn corrupted(&self) -> Option<bool> {
        self.clean_label.map(|c| c != self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::Data(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.label > 1 || s.clean_label.is_some_and(|c| c > 1) {
                return Err(Error::Data(format!("sample {i} has a non-binary label")));
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Whether every sample carries a clean label.
    pub fn has_clean_labels(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.clean_label.is_some())
    }

    pub fn class_counts(&self, indices: &[usize]) -> [usize; 2] {
        let mut counts = [0; 2];
        for &i in indices {
            counts[self.samples[i].label] += 1;
        }
        counts
    }

    /// Writes `group_id,label,f0..fD` CSV. Clean labels are not written.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group_id".to_string(), "label".to_string()];
        header.extend((0..self.feature_dim()).map(|d| format!("f{d}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.group_id.clone(), s.label.to_string()];
            rec.extend(s.features.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV format plus `clean_label` and `corrupted` columns.
    pub fn write_annotated_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group_id".to_string(), "label".to_string()];
        header.extend((0..self.feature_dim()).map(|d| format!("f{d}")));
        header.push("clean_label".into());
        header.push("corrupted".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.group_id.clone(), s.label.to_string()];
            rec.extend(s.features.iter().map(|v| v.to_string()));
            rec.push(s.clean_label.map(|c| c.to_string()).unwrap_or_default());
            rec.push(s.corrupted().map(|c| c.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses `group_id,label,f0..fD` CSV, optionally followed by the
    /// `clean_label,corrupted` columns of the annotated format. Line numbers
    /// in errors count the header as line 1.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = reader.headers()?.clone();
        let mut cols: Vec<&str> = header.iter().map(str::trim).collect();
        let annotated = cols.ends_with(&["clean_label", "corrupted"]);
        if annotated {
            cols.truncate(cols.len() - 2);
        }
        let extra = if annotated { 2 } else { 0 };
        if cols.len() < 3 || cols[0] != "group_id" || cols[1] != "label" {
            return Err(Error::Parse {
                line: 1,
                message: "header must be `group_id,label,f0,...`".into(),
            });
        }
        for (d, name) in cols[2..].iter().enumerate() {
            if *name != format!("f{d}") {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected column f{d}, found {name:?}"),
                });
            }
        }
        let dim = cols.len() - 2;
        let mut samples = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != dim + 2 + extra {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "expected {} fields, found {}",
                        dim + 2 + extra,
                        record.len()
                    ),
                });
            }
            let group_id = record[0].trim().to_string();
            if group_id.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty group_id".into(),
                });
            }
            let parse_label = |field: &str| match field.trim() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::Parse {
                    line,
                    message: format!("unknown label {other:?}, expected 0 or 1"),
                }),
            };
            let label = parse_label(&record[1])?;
            let clean_label = match annotated {
                true if !record[dim + 2].trim().is_empty() => Some(parse_label(&record[dim + 2])?),
                _ => None,
            };
            let features = record
                .iter()
                .skip(2)
                .take(dim)
                .map(|f| match f.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Parse {
                        line,
                        message: format!("bad feature value {f:?}"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample {
                features,
                label,
                clean_label,
                group_id,
            });
        }
        Ok(Self { samples })
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::read_csv(std::fs::File::open(path)?)
}

/// How labels are chosen for corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Every sample is flipped independently with probability `noise_rate`.
    #[default]
    Uniform,
    /// Flip probability grows towards the Bayes boundary; the mean rate stays `noise_rate`.
    Boundary,
}

/// Two isotropic unit-variance Gaussian classes with labels flipped at rate `noise_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Total number of samples over both classes.
    pub n_samples: usize,
    pub feature_dim: usize,
    /// Distance between the two class means.
    pub separation: f64,
    pub noise_rate: f64,
    /// Majority (label 0) to minority (label 1) ratio.
    pub imbalance_ratio: f64,
    pub flip_mode: FlipMode,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            feature_dim: 2,
            separation: 2.0,
            noise_rate: 0.2,
            imbalance_ratio: 1905.0 / 974.0,
            flip_mode: FlipMode::Uniform,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise rate {} outside [0, 0.5)",
                self.noise_rate
            )));
        }
        if !(self.separation > 0.0) {
            return Err(Error::Config("separation must be positive".into()));
        }
        if !(self.imbalance_ratio >= 1.0) || !self.imbalance_ratio.is_finite() {
            return Err(Error::Config("imbalance ratio must be >= 1".into()));
        }
        if self.feature_dim == 0 || self.n_samples < 2 {
            return Err(Error::Config(
                "need at least one feature and two samples".into(),
            ));
        }
        Ok(())
    }

    /// `[negatives, positives]`.
    pub fn class_sizes(&self) -> [usize; 2] {
        let neg = (self.n_samples as f64 * self.imbalance_ratio / (1.0 + self.imbalance_ratio))
            .round() as usize;
        let neg = neg.clamp(1, self.n_samples - 1);
        [neg, self.n_samples - neg]
    }
}

/// Group-size weights for sizes 1, 2 and 3, averaging 1.44 samples per group.
const GROUP_SIZE_WEIGHTS: [f64; 3] = [0.68, 0.20, 0.12];

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;
    let half = config.separation / 2.0;
    // means at ∓half along the unit diagonal
    let axis = 1.0 / (dim as f64).sqrt();

    let mut samples = Vec::with_capacity(config.n_samples);
    let mut margins = Vec::with_capacity(config.n_samples);
    for (class, &count) in config.class_sizes().iter().enumerate() {
        let sign = if class == 0 { -1.0 } else { 1.0 };
        for _ in 0..count {
            let features: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sign * half * axis + z
                })
                .collect();
            // signed distance from the perpendicular bisector of the means
            margins.push(features.iter().sum::<f64>() * axis);
            samples.push(Sample {
                features,
                label: class,
                clean_label: Some(class),
                group_id: String::new(),
            });
        }
    }

    let flip_prob: Vec<f64> = match config.flip_mode {
        FlipMode::Uniform => vec![config.noise_rate; samples.len()],
        FlipMode::Boundary => {
            let weights: Vec<f64> = margins.iter().map(|m| (-m.abs()).exp()).collect();
            let mean = weights.iter().sum::<f64>() / weights.len() as f64;
            weights
                .iter()
                .map(|w| (config.noise_rate * w / mean).min(1.0))
                .collect()
        }
    };
    for (s, p) in samples.iter_mut().zip(flip_prob) {
        if rng.random_bool(p) {
            s.label = 1 - s.label;
        }
    }

    // groups never mix clean classes: one "patient" has one pathology
    let mut next_group = 0usize;
    let sizes = config.class_sizes();
    let mut start = 0;
    for count in sizes {
        let mut order: Vec<usize> = (start..start + count).collect();
        order.shuffle(&mut rng);
        let mut rest = order.as_slice();
        while !rest.is_empty() {
            let u: f64 = rng.random();
            let size = if u < GROUP_SIZE_WEIGHTS[0] {
                1
            } else if u < GROUP_SIZE_WEIGHTS[0] + GROUP_SIZE_WEIGHTS[1] {
                2
            } else {
                3
            };
            let (head, tail) = rest.split_at(size.min(rest.len()));
            for &i in head {
                samples[i].group_id = format!("g{next_group}");
            }
            next_group += 1;
            rest = tail;
        }
        start += count;
    }

    Dataset::new(samples)
}

/// Fold index for every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub folds: usize,
    pub assignment: Vec<usize>,
}

impl SplitPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Assigns whole groups to folds, largest group first, each to the currently
/// smallest fold (lowest index on ties). Groups of equal size are visited in
/// a seed-dependent order.
pub fn group_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        groups.entry(s.group_id.as_str()).or_default().push(i);
    }
    if groups.len() < k {
        return Err(Error::Data(format!(
            "{} groups cannot fill {k} folds",
            groups.len()
        )));
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().collect();
    members.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    members.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let mut sizes = vec![0usize; k];
    let mut assignment = vec![0usize; dataset.len()];
    for group in &members {
        let (fold, _) = sizes
            .iter()
            .enumerate()
            .min_by_key(|&(f, &n)| (n, f))
            .expect("k >= 2");
        for &i in group {
            assignment[i] = fold;
        }
        sizes[fold] += group.len();
    }
    Ok(SplitPlan {
        folds: k,
        assignment,
    })
}

/// Returns `indices` plus minority-class duplicates drawn with replacement
/// until both classes have equal counts.
pub fn oversample_minority(dataset: &Dataset, indices: &[usize], seed: u64) -> Result<Vec<usize>> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for &i in indices {
        by_class[dataset.samples[i].label].push(i);
    }
    if by_class.iter().any(Vec::is_empty) {
        return Err(Error::Data(
            "oversampling needs both classes present".into(),
        ));
    }
    let (minority, deficit) = if by_class[0].len() < by_class[1].len() {
        (&by_class[0], by_class[1].len() - by_class[0].len())
    } else {
        (&by_class[1], by_class[0].len() - by_class[1].len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = indices.to_vec();
    out.extend((0..deficit).map(|_| minority[rng.random_range(0..minority.len())]));
    Ok(out)
}

/// Shuffles `indices` with `seed` and cuts them into batches of `batch_size`;
/// the last batch may be short.
pub fn batch_iterator(indices: &[usize], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Number of samples sharing each group id.
pub fn group_sizes(dataset: &Dataset) -> HashMap<&str, usize> {
    let mut sizes = HashMap::new();
    for s in &dataset.samples {
        *sizes.entry(s.group_id.as_str()).or_insert(0) += 1;
    }
    sizes
}
