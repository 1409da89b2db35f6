//! Adaptive curriculum scheduler.
//!
//! Every batch, the scheduler
//!
//! 1. reads each sample's *confidence* (probability of its labelled class)
//!    and *certainty* (largest class probability),
//! 2. pushes all certainties into the certainty queue and the confidences of
//!    misclassified samples into the hard-sample queue,
//! 3. sets `θ` to the mean of the certainty queue and the adaptive threshold
//!    to `mean(hard) + θ · std(hard)`,
//! 4. masks out (drops from the loss) every sample of the batch whose
//!    confidence is strictly below the threshold.
//!
//! Both queues are filled from the first batch on, but no sample is dropped
//! until the warmup epochs have passed. A fixed `α` can stand in for `θ` to
//! run the classic mean-plus-α-sigma threshold.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OUTPUT_CLASSES;
use crate::numerics::ProbabilityRow;
use crate::scalar::Scalar;

/// Divisor used for the standard deviation of the hard-sample queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1` (zero for a single element).
    Sample,
}

/// Fixed-capacity FIFO of reals. Pushing into a full queue evicts the oldest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedStatQueue<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T: Scalar> BoundedStatQueue<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("queue capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    pub fn push(&mut self, value: T) {
        if self.is_full() {
            self.items.pop_front();
        }
        self.items.push_back(value);
    }

    /// Pushes `values` in order. When more than `capacity` values arrive at
    /// once only the newest `capacity` survive.
    pub fn extend<I: IntoIterator<Item = T>>(&mut self, values: I) {
        for v in values {
            self.push(v);
        }
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Oldest first.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &T> {
        self.items.iter()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.items.iter().copied().collect()
    }

    pub fn mean(&self) -> Option<T> {
        if self.items.is_empty() {
            return None;
        }
        let sum: T = self.items.iter().copied().sum();
        Some(sum / T::of_usize(self.items.len()))
    }

    pub fn std(&self, convention: StdConvention) -> Option<T> {
        let mean = self.mean()?;
        let n = self.items.len();
        let divisor = match convention {
            StdConvention::Population => n,
            StdConvention::Sample if n < 2 => return Some(T::zero()),
            StdConvention::Sample => n - 1,
        };
        let ss: T = self.items.iter().map(|&v| (v - mean) * (v - mean)).sum();
        Some((ss / T::of_usize(divisor)).sqrt())
    }
}

/// Probability the model assigns to the labelled class.
pub fn sample_confidence<T: Scalar>(probs: &ProbabilityRow<T>, label: usize) -> Result<T> {
    probs.get(label)
}

/// Largest class probability.
pub fn sample_certainty<T: Scalar>(probs: &ProbabilityRow<T>) -> T {
    probs.max().1
}

/// True when some other class has strictly higher probability than `label`.
/// A tie with the labelled class counts as a correct prediction.
pub fn is_misclassified<T: Scalar>(probs: &ProbabilityRow<T>, label: usize) -> Result<bool> {
    let own = probs.get(label)?;
    Ok(probs
        .values()
        .iter()
        .enumerate()
        .any(|(c, &p)| c != label && p > own))
}

/// How the standard deviation of the hard-sample queue is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Weight by `θ`, the running mean certainty.
    #[default]
    Certainty,
    /// Weight by a constant `α`.
    FixedAlpha(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Capacity `L` of both queues.
    pub queue_length: usize,
    pub batch_size: usize,
    /// Epochs trained on the full loss before any sample is dropped.
    pub warmup_epochs: usize,
    pub mode: ThresholdMode,
    pub std: StdConvention,
    /// When false the scheduler only tracks statistics and never masks.
    pub masking: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            queue_length: 32,
            batch_size: 16,
            warmup_epochs: 3,
            mode: ThresholdMode::Certainty,
            std: StdConvention::Population,
            masking: true,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.queue_length == 0 || !self.queue_length.is_multiple_of(self.batch_size) {
            return Err(Error::Config(format!(
                "queue length {} must be a positive multiple of batch size {}",
                self.queue_length, self.batch_size
            )));
        }
        if let ThresholdMode::FixedAlpha(a) = self.mode {
            if !a.is_finite() {
                return Err(Error::Config("alpha must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn alpha_override(&self) -> Option<f64> {
        match self.mode {
            ThresholdMode::Certainty => None,
            ThresholdMode::FixedAlpha(a) => Some(a),
        }
    }
}

/// Per-batch snapshot handed to the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    pub t_ada: Option<T>,
    pub theta: T,
    pub hard_queue_len: usize,
    pub discard_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    /// `true` keeps the sample in the loss.
    pub mask: Vec<bool>,
    pub confidences: Vec<T>,
    pub diagnostics: Diagnostics<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState<T> {
    config: SchedulerConfig,
    hard_queue: BoundedStatQueue<T>,
    certainty_queue: BoundedStatQueue<T>,
    t_ada: Option<T>,
    theta: T,
    epoch: usize,
}

impl<T: Scalar> SchedulerState<T> {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        let theta = T::of(config.alpha_override().unwrap_or(0.5));
        Ok(Self {
            hard_queue: BoundedStatQueue::new(config.queue_length)?,
            certainty_queue: BoundedStatQueue::new(config.queue_length)?,
            config,
            t_ada: None,
            theta,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn hard_queue(&self) -> &BoundedStatQueue<T> {
        &self.hard_queue
    }

    pub fn certainty_queue(&self) -> &BoundedStatQueue<T> {
        &self.certainty_queue
    }

    /// Threshold produced by the latest [`step`](Self::step).
    pub fn t_ada(&self) -> Option<T> {
        self.t_ada
    }

    /// `θ` produced by the latest [`step`](Self::step).
    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Zero-based index of the epoch the following batches belong to.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn in_warmup(&self) -> bool {
        self.epoch < self.config.warmup_epochs
    }

    fn check_batch(probs: &[ProbabilityRow<T>], labels: &[usize]) -> Result<()> {
        if probs.len() != labels.len() {
            return Err(Error::LengthMismatch {
                op: "scheduler batch",
                expected: probs.len(),
                actual: labels.len(),
            });
        }
        for (p, &y) in probs.iter().zip(labels) {
            if p.classes() != OUTPUT_CLASSES {
                return Err(Error::Data(format!(
                    "scheduler supports {OUTPUT_CLASSES} classes, got {}",
                    p.classes()
                )));
            }
            if y >= OUTPUT_CLASSES {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: OUTPUT_CLASSES,
                });
            }
        }
        Ok(())
    }

    /// Feeds one batch into both queues, in sample order.
    pub fn update_queues(&mut self, probs: &[ProbabilityRow<T>], labels: &[usize]) -> Result<()> {
        Self::check_batch(probs, labels)?;
        self.certainty_queue
            .extend(probs.iter().map(sample_certainty));
        for (p, &y) in probs.iter().zip(labels) {
            if is_misclassified(p, y)? {
                self.hard_queue.push(sample_confidence(p, y)?);
            }
        }
        Ok(())
    }

    /// Mean of the certainty queue; before anything has been queued, the
    /// fixed `α` if one is configured and otherwise 0.5.
    pub fn compute_theta(&self) -> T {
        self.certainty_queue
            .mean()
            .unwrap_or_else(|| T::of(self.config.alpha_override().unwrap_or(0.5)))
    }

    /// `mean(hard) + w · std(hard)` with `w` the fixed `α` or the current `θ`.
    /// `None` while warming up, when masking is disabled, or while the hard
    /// queue is empty.
    pub fn compute_t_ada(&self) -> Option<T> {
        if !self.config.masking || self.in_warmup() {
            return None;
        }
        let mean = self.hard_queue.mean()?;
        let std = self.hard_queue.std(self.config.std)?;
        let weight = match self.config.mode {
            ThresholdMode::Certainty => self.theta,
            ThresholdMode::FixedAlpha(a) => T::of(a),
        };
        Some(mean + weight * std)
    }

    /// Keeps sample `i` iff `confidences[i] >= t_ada`; keeps all when inactive.
    pub fn build_mask(&self, confidences: &[T]) -> Vec<bool> {
        build_mask(self.t_ada, confidences)
    }

    /// Runs the full per-batch update and returns this batch's loss mask.
    pub fn step(&mut self, probs: &[ProbabilityRow<T>], labels: &[usize]) -> Result<StepOutput<T>> {
        Self::check_batch(probs, labels)?;
        let confidences = probs
            .iter()
            .zip(labels)
            .map(|(p, &y)| sample_confidence(p, y))
            .collect::<Result<Vec<T>>>()?;
        self.update_queues(probs, labels)?;
        self.theta = self.compute_theta();
        self.t_ada = self.compute_t_ada();
        let mask = self.build_mask(&confidences);
        let discard_count = mask.iter().filter(|&&keep| !keep).count();
        Ok(StepOutput {
            mask,
            confidences,
            diagnostics: Diagnostics {
                t_ada: self.t_ada,
                theta: self.theta,
                hard_queue_len: self.hard_queue.len(),
                discard_count,
            },
        })
    }
}

/// Loss mask for a threshold: keep iff confidence `>=` threshold.
pub fn build_mask<T: Scalar>(t_ada: Option<T>, confidences: &[T]) -> Vec<bool> {
    match t_ada {
        None => vec![true; confidences.len()],
        Some(t) => confidences.iter().map(|&c| c >= t).collect(),
    }
}

/// One row of the per-batch trajectory export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub epoch: usize,
    pub batch: usize,
    pub t_ada: Option<f64>,
    pub theta: f64,
    pub hard_queue_len: usize,
    pub discard_count: usize,
    pub batch_loss: f64,
}

pub const TRAJECTORY_HEADER: [&str; 7] = [
    "epoch",
    "batch",
    "t_ada",
    "theta",
    "hard_queue_len",
    "discard_count",
    "batch_loss",
];

/// Writes trajectory rows as CSV; an inactive threshold is an empty cell.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.batch.to_string(),
            r.t_ada.map(|t| t.to_string()).unwrap_or_default(),
            r.theta.to_string(),
            r.hard_queue_len.to_string(),
            r.discard_count.to_string(),
            r.batch_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: std::io::Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str> {
            record.get(k).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column {}", TRAJECTORY_HEADER[k]),
            })
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {}", TRAJECTORY_HEADER[k]),
            })
        };
        let t_ada = match field(2)? {
            "" => None,
            _ => Some(num(2)?),
        };
        rows.push(TrajectoryRow {
            epoch: num(0)? as usize,
            batch: num(1)? as usize,
            t_ada,
            theta: num(3)?,
            hard_queue_len: num(4)? as usize,
            discard_count: num(5)? as usize,
            batch_loss: num(6)?,
        });
    }
    Ok(rows)
}
