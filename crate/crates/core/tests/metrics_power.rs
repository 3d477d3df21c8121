//! Classification metrics and the power model.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile::eval::{argmax, random_folds, top_k_accuracy, ConfusionMatrix};
use tactile::frames::NUM_CLASSES;
use tactile::power::{average_power, duty_cycle, energy_and_lifetime, PowerProfile};

/// Sorts class indices by descending score with ties to the lower index and
/// checks membership of the label among the first `k`.
fn naive_top_k(probs: &[f64], labels: &[u8], k: usize) -> f64 {
    let mut hits = 0;
    for (row, &l) in probs.chunks(NUM_CLASSES).zip(labels) {
        let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        if order[..k].contains(&(l as usize)) {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

fn random_scores(rng: &mut impl Rng, n: usize, coarse: bool) -> Vec<f64> {
    (0..n * NUM_CLASSES)
        .map(|_| {
            if coarse {
                rng.random_range(0..4) as f64
            } else {
                rng.random()
            }
        })
        .collect()
}

#[test]
fn top_k_matches_sorting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for case in 0..50 {
        let n = rng.random_range(1..60);
        // Every other case uses a handful of score levels to exercise ties.
        let probs = random_scores(&mut rng, n, case % 2 == 1);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..NUM_CLASSES as u8)).collect();
        for k in [1, 3, 5, 17] {
            assert_eq!(top_k_accuracy(&probs, &labels, k).unwrap(), naive_top_k(&probs, &labels, k));
        }
    }
}

#[test]
fn top_k_edge_cases() {
    let mut row = vec![0.0; NUM_CLASSES];
    row[4] = 1.0;
    assert_eq!(top_k_accuracy(&row, &[4], 1).unwrap(), 1.0);
    assert_eq!(top_k_accuracy(&row, &[5], 1).unwrap(), 0.0);
    assert_eq!(top_k_accuracy(&row, &[5], 17).unwrap(), 1.0);
    assert!(top_k_accuracy(&row, &[5], 0).is_err());
    assert!(top_k_accuracy(&row, &[5], 18).is_err());
    assert!(top_k_accuracy(&row, &[17], 1).is_err());
    assert!(top_k_accuracy(&row[1..], &[0], 1).is_err());
    let flat = vec![0.5; NUM_CLASSES];
    assert_eq!(argmax(&flat), 0);
    assert_eq!(top_k_accuracy(&flat, &[2], 2).unwrap(), 0.0);
    assert_eq!(top_k_accuracy(&flat, &[1], 2).unwrap(), 1.0);
}

#[test]
fn confusion_matrix_matches_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let n = 500;
    let probs = random_scores(&mut rng, n, false);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..NUM_CLASSES as u8)).collect();
    let cm = ConfusionMatrix::from_predictions(&probs, &labels).unwrap();
    let mut expected = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for (row, &l) in probs.chunks(NUM_CLASSES).zip(&labels) {
        expected[l as usize][argmax(row)] += 1;
    }
    assert_eq!(cm.counts, expected);
    assert_eq!(cm.total(), n as u64);
    let mut per_class = vec![0u64; NUM_CLASSES];
    labels.iter().for_each(|&l| per_class[l as usize] += 1);
    assert_eq!(cm.row_sums(), per_class);
    let diag: u64 = (0..NUM_CLASSES).map(|i| cm.counts[i][i]).sum();
    assert_eq!(diag as f64 / n as f64, top_k_accuracy(&probs, &labels, 1).unwrap());

    let mut doubled = cm.clone();
    doubled.add(&cm);
    assert_eq!(doubled.total(), 2 * n as u64);

    let names: Vec<String> = (0..NUM_CLASSES).map(|i| format!("c{i}")).collect();
    let csv = cm.to_csv(&names);
    assert_eq!(csv.lines().count(), NUM_CLASSES + 1);
    let pgm = cm.to_pgm(4);
    assert!(pgm.starts_with(b"P5\n68 68\n255\n"));
}

#[test]
fn random_folds_partition_the_samples() {
    let folds = random_folds(103, 7, 9);
    assert_eq!(folds.len(), 7);
    let mut all: Vec<usize> = folds.concat();
    all.sort_unstable();
    assert_eq!(all, (0..103).collect::<Vec<_>>());
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert_eq!(folds, random_folds(103, 7, 9));
}

#[test]
fn reference_power_figures() {
    let p = PowerProfile::default();
    let dc = duty_cycle(1.0, 9.0).unwrap();
    assert_eq!(average_power(dc, &p).unwrap(), 50.6665);
    let e = energy_and_lifetime(dc, 20.0, 1.0, &p).unwrap();
    assert!((e.energy_wh_per_day - 1.01333).abs() < 1e-6);
    assert!((e.lifetime_days.unwrap() - 1.0 / 1.01333).abs() < 1e-6);
    assert!((e.lifetime_hours.unwrap() - 20.0 / 1.01333).abs() < 1e-4);
}

#[test]
fn power_rejects_bad_inputs() {
    let p = PowerProfile::default();
    assert!(duty_cycle(0.0, 0.0).is_err());
    assert!(duty_cycle(-1.0, 2.0).is_err());
    assert!(average_power(1.5, &p).is_err());
    assert!(energy_and_lifetime(0.1, 25.0, 1.0, &p).is_err());
    assert!(energy_and_lifetime(0.1, 20.0, 0.0, &p).is_err());
}

proptest! {
    #[test]
    fn top_k_is_monotone_in_k(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = random_scores(&mut rng, n, seed % 2 == 0);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..NUM_CLASSES as u8)).collect();
        let mut prev = 0.0;
        for k in 1..=NUM_CLASSES {
            let acc = top_k_accuracy(&probs, &labels, k).unwrap();
            prop_assert!(acc >= prev);
            prev = acc;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn top_k_ignores_positive_scaling_and_shifts(seed in any::<u64>(), scale in 0.01f64..100.0, shift in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let probs = random_scores(&mut rng, n, false);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..NUM_CLASSES as u8)).collect();
        let moved: Vec<f64> = probs.iter().map(|p| p * scale + shift).collect();
        for k in [1, 3] {
            prop_assert_eq!(top_k_accuracy(&probs, &labels, k).unwrap(), top_k_accuracy(&moved, &labels, k).unwrap());
        }
    }

    #[test]
    fn average_power_is_affine_in_duty_cycle(a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let p = PowerProfile::default();
        let mix = t * a + (1.0 - t) * b;
        let lhs = average_power(mix, &p).unwrap();
        let rhs = t * average_power(a, &p).unwrap() + (1.0 - t) * average_power(b, &p).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
        prop_assert!(lhs >= p.p_off_mw() - 1e-12 && lhs <= p.p_on_mw() + 1e-12);
    }

    #[test]
    fn energy_scales_with_hours_and_life_with_capacity(dc in 0.0f64..=1.0, h in 0.5f64..24.0, wh in 0.1f64..10.0) {
        let p = PowerProfile::default();
        let one = energy_and_lifetime(dc, h, wh, &p).unwrap();
        let two = energy_and_lifetime(dc, h / 2.0, 2.0 * wh, &p).unwrap();
        prop_assert!((one.energy_wh_per_day - 2.0 * two.energy_wh_per_day).abs() < 1e-12);
        prop_assert!((two.lifetime_days.unwrap() - 4.0 * one.lifetime_days.unwrap()).abs() < 1e-9 * two.lifetime_days.unwrap());
    }
}
