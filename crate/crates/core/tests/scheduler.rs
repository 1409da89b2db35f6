mod common;

use acl::numerics::ProbabilityRow;
use acl::scheduler::{
    build_mask, sample_certainty, BoundedStatQueue, SchedulerConfig, SchedulerState, StdConvention,
    ThresholdMode,
};
use approx::assert_abs_diff_eq;
use common::replay_case_table;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(a: f64, b: f64) -> ProbabilityRow<f64> {
    ProbabilityRow::new(vec![a, b]).unwrap()
}

fn cfg(queue_length: usize, batch_size: usize) -> SchedulerConfig {
    SchedulerConfig {
        queue_length,
        batch_size,
        warmup_epochs: 0,
        ..SchedulerConfig::default()
    }
}

#[test]
fn two_batch_trace_matches_hand_execution() {
    let mut s = SchedulerState::<f64>::new(cfg(4, 2)).unwrap();

    // batch 1: sample 0 wrong (confidence 0.2), sample 1 right
    let out = s.step(&[p(0.8, 0.2), p(0.3, 0.7)], &[1, 1]).unwrap();
    assert_eq!(s.certainty_queue().to_vec(), vec![0.8, 0.7]);
    assert_eq!(s.hard_queue().to_vec(), vec![0.2]);
    assert_abs_diff_eq!(out.diagnostics.theta, 0.75, epsilon = 1e-15);
    assert_eq!(out.diagnostics.t_ada, Some(0.2));
    assert_eq!(out.mask, vec![true, true]);

    // batch 2: both wrong
    let out = s.step(&[p(0.6, 0.4), p(0.9, 0.1)], &[1, 1]).unwrap();
    assert_eq!(s.certainty_queue().to_vec(), vec![0.8, 0.7, 0.6, 0.9]);
    assert_eq!(s.hard_queue().to_vec(), vec![0.2, 0.4, 0.1]);
    assert_abs_diff_eq!(out.diagnostics.theta, 0.75, epsilon = 1e-15);
    assert_abs_diff_eq!(
        out.diagnostics.t_ada.unwrap(),
        0.3268747680026819,
        epsilon = 1e-12
    );
    assert_eq!(out.mask, vec![true, false]);
    assert_eq!(out.diagnostics.discard_count, 1);
    assert_eq!(out.diagnostics.hard_queue_len, 3);
}

#[test]
fn fifo_middle_case_keeps_newest() {
    // l = 3, L = 4, k = 2
    let mut q = BoundedStatQueue::new(4).unwrap();
    q.extend([1.0, 2.0, 3.0]);
    q.extend([4.0, 5.0]);
    assert_eq!(q.to_vec(), vec![2.0, 3.0, 4.0, 5.0]);
}

#[test]
fn queue_matches_case_table_over_random_operations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut seen_cases = [0usize; 3];
    for _ in 0..200 {
        let cap = rng.random_range(1..12);
        let mut q = BoundedStatQueue::<f64>::new(cap).unwrap();
        let mut mirror: Vec<u64> = Vec::new();
        let mut next = 0u64;
        for _ in 0..50 {
            let k = rng.random_range(0..=cap);
            let arrivals: Vec<u64> = (next..next + k as u64).collect();
            next += k as u64;
            let l = mirror.len();
            seen_cases[if l + k <= cap {
                0
            } else if l < cap {
                1
            } else {
                2
            }] += 1;
            mirror = replay_case_table(&mirror, &arrivals, cap);
            q.extend(arrivals.iter().map(|&v| v as f64));
            let got: Vec<u64> = q.iter().map(|&v| v as u64).collect();
            assert_eq!(got, mirror);
            assert!(q.len() <= cap);
        }
    }
    assert!(seen_cases.iter().all(|&c| c > 0), "{seen_cases:?}");
}

#[test]
fn threshold_matches_recomputation_from_history() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for &(l, b) in &[(16usize, 16usize), (32, 16), (64, 16), (8, 4)] {
        let mut s = SchedulerState::<f64>::new(cfg(l, b)).unwrap();
        let mut hard_history = Vec::new();
        let mut certainty_history = Vec::new();
        for _ in 0..300 {
            let n = rng.random_range(1..=b);
            let probs: Vec<_> = (0..n)
                .map(|_| {
                    let a: f64 = rng.random();
                    p(a, 1.0 - a)
                })
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let out = s.step(&probs, &labels).unwrap();
            for (row, &y) in probs.iter().zip(&labels) {
                let v = row.values();
                certainty_history.push(v[0].max(v[1]));
                if v[y] < v[1 - y] {
                    hard_history.push(v[y]);
                }
            }
            let window = |h: &[f64]| h[h.len().saturating_sub(l)..].to_vec();
            let cq = window(&certainty_history);
            let theta = cq.iter().sum::<f64>() / cq.len() as f64;
            assert_abs_diff_eq!(out.diagnostics.theta, theta, epsilon = 1e-12);
            let hq = window(&hard_history);
            match out.diagnostics.t_ada {
                None => assert!(hq.is_empty()),
                Some(t) => {
                    let mu = hq.iter().sum::<f64>() / hq.len() as f64;
                    let var = hq.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / hq.len() as f64;
                    assert_abs_diff_eq!(t, mu + theta * var.sqrt(), epsilon = 1e-10);
                }
            }
        }
    }
}

#[test]
fn fixed_alpha_reduces_to_mean_plus_alpha_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for alpha in [0.0, 1.0, 2.0] {
        let mut s = SchedulerState::<f64>::new(SchedulerConfig {
            mode: ThresholdMode::FixedAlpha(alpha),
            ..cfg(32, 16)
        })
        .unwrap();
        for _ in 0..20 {
            let probs: Vec<_> = (0..16)
                .map(|_| {
                    let a: f64 = rng.random();
                    p(a, 1.0 - a)
                })
                .collect();
            let labels: Vec<usize> = (0..16).map(|_| rng.random_range(0..2)).collect();
            let out = s.step(&probs, &labels).unwrap();
            if let Some(t) = out.diagnostics.t_ada {
                let q = s.hard_queue();
                let expected =
                    q.mean().unwrap() + alpha * q.std(StdConvention::Population).unwrap();
                assert_eq!(t, expected);
            }
        }
    }
}

#[test]
fn sample_std_convention_is_respected() {
    let mut s = SchedulerState::<f64>::new(SchedulerConfig {
        std: StdConvention::Sample,
        mode: ThresholdMode::FixedAlpha(1.0),
        ..cfg(4, 2)
    })
    .unwrap();
    let out = s.step(&[p(0.9, 0.1), p(0.7, 0.3)], &[1, 1]).unwrap();
    // sample std of {0.1, 0.3} is √0.02
    assert_abs_diff_eq!(
        out.diagnostics.t_ada.unwrap(),
        0.2 + 0.02f64.sqrt(),
        epsilon = 1e-12
    );
}

#[test]
fn certainty_matches_loop_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let row = ProbabilityRow::new(raw.iter().map(|v| v / total).collect()).unwrap();
        let mut best = f64::MIN;
        for &v in row.values() {
            if v > best {
                best = v;
            }
        }
        assert_eq!(sample_certainty(&row), best);
    }
}

#[test]
fn theta_matches_summation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut s = SchedulerState::<f64>::new(cfg(64, 16)).unwrap();
    let mut all = Vec::new();
    for _ in 0..4 {
        let probs: Vec<_> = (0..16)
            .map(|_| {
                let a: f64 = rng.random();
                p(a, 1.0 - a)
            })
            .collect();
        all.extend(probs.iter().map(sample_certainty));
        s.update_queues(&probs, &[0; 16]).unwrap();
    }
    assert_eq!(s.certainty_queue().len(), 64);
    let mut sum = 0.0;
    for v in &all {
        sum += v;
    }
    assert_abs_diff_eq!(s.compute_theta(), sum / 64.0, epsilon = 1e-12);

    let mut constant = SchedulerState::<f64>::new(cfg(4, 2)).unwrap();
    constant
        .update_queues(&[p(0.8, 0.2), p(0.2, 0.8)], &[0, 1])
        .unwrap();
    assert_abs_diff_eq!(constant.compute_theta(), 0.8, epsilon = 1e-15);
}

#[test]
fn single_precision_scheduler() {
    let mut s = acl::SchedulerState32::new(cfg(4, 2)).unwrap();
    let rows = [
        ProbabilityRow::new(vec![0.75f32, 0.25]).unwrap(),
        ProbabilityRow::new(vec![0.5f32, 0.5]).unwrap(),
    ];
    let out = s.step(&rows, &[1, 0]).unwrap();
    assert_eq!(out.diagnostics.t_ada, Some(0.25f32));
    assert_eq!(s.certainty_queue().to_vec(), vec![0.75f32, 0.5]);
}

proptest! {
    #[test]
    fn queue_invariants(cap in 1usize..40, pushes in proptest::collection::vec(0.0f64..1.0, 0..200)) {
        let mut q = BoundedStatQueue::new(cap).unwrap();
        for (i, &v) in pushes.iter().enumerate() {
            q.push(v);
            prop_assert!(q.len() <= cap);
            prop_assert_eq!(q.len(), (i + 1).min(cap));
        }
        let tail = &pushes[pushes.len().saturating_sub(cap)..];
        prop_assert_eq!(q.to_vec(), tail.to_vec());
        if !tail.is_empty() {
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tail.len() as f64;
            prop_assert!((q.mean().unwrap() - mean).abs() <= 1e-12);
            prop_assert!((q.std(StdConvention::Population).unwrap() - var.sqrt()).abs() <= 1e-12);
        }
    }

    #[test]
    fn queues_hold_values_in_expected_ranges(
        batches in proptest::collection::vec(
            proptest::collection::vec((0.0f64..=1.0, 0usize..2), 16),
            1..20,
        )
    ) {
        let mut s = SchedulerState::<f64>::new(cfg(32, 16)).unwrap();
        for batch in &batches {
            let probs: Vec<_> = batch.iter().map(|&(a, _)| p(a, 1.0 - a)).collect();
            let labels: Vec<usize> = batch.iter().map(|&(_, y)| y).collect();
            let out = s.step(&probs, &labels).unwrap();
            prop_assert!(s.hard_queue().iter().all(|&c| c < 0.5));
            prop_assert!(s.certainty_queue().iter().all(|&c| (0.5..=1.0).contains(&c)));
            prop_assert!((0.5..=1.0).contains(&out.diagnostics.theta));
        }
    }

    #[test]
    fn mask_is_monotone_in_threshold(
        confidences in proptest::collection::vec(0.0f64..1.0, 1..50),
        lo in 0.0f64..1.0,
        delta in 0.0f64..1.0,
    ) {
        let a = build_mask(Some(lo), &confidences);
        let b = build_mask(Some(lo + delta), &confidences);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*x || !*y, "raising the threshold re-admitted a sample");
        }
    }
}
