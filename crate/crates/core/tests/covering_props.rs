use breakprobe_core::covering::{
    generate_ipog, generate_ipog_with, load_array, save_array, verify_coverage, CoveringArray, IpogOptions, Strength,
    VerifyMode,
};
use breakprobe_core::model::Guide;
use proptest::prelude::*;

/// Missing (column subset, value combination) pairs found by scanning rows.
fn naive_missing(array: &CoveringArray, t: usize) -> usize {
    let n = array.columns().len();
    let mut missing = 0;
    let mut cols: Vec<usize> = (0..t).collect();
    loop {
        for code in 0..1usize << t {
            let hit = array
                .rows()
                .iter()
                .any(|r| cols.iter().enumerate().all(|(k, &c)| r[c] == (code >> k & 1 == 1)));
            missing += usize::from(!hit);
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..t).rev().find(|&i| cols[i] < n - t + i) else {
            return missing;
        };
        cols[i] += 1;
        for j in i + 1..t {
            cols[j] = cols[j - 1] + 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_arrays_cover_every_combination(n in 4usize..16, t in 2usize..=4, seed in any::<u64>()) {
        prop_assume!(t <= n);
        let g = Guide::synthetic("g", n);
        let array = generate_ipog(&g, Strength::new(t).unwrap(), seed).unwrap();
        prop_assert_eq!(naive_missing(&array, t), 0);
        prop_assert!(verify_coverage(&array, VerifyMode::Exhaustive).covered);
        prop_assert!(array.num_rows() >= 1 << t);
    }
}

#[test]
fn same_seed_same_array() {
    let g = Guide::synthetic("g", 40);
    let s = Strength::new(3).unwrap();
    assert_eq!(generate_ipog(&g, s, 5).unwrap(), generate_ipog(&g, s, 5).unwrap());
}

#[test]
fn row_count_grows_with_strength() {
    for n in [8, 20, 60] {
        let g = Guide::synthetic("g", n);
        let rows: Vec<usize> = (2..=4)
            .map(|t| generate_ipog(&g, Strength::new(t).unwrap(), 0).unwrap().num_rows())
            .collect();
        assert!(rows.windows(2).all(|w| w[0] <= w[1]), "n={n}: {rows:?}");
    }
}

#[test]
fn removing_a_row_is_detected() {
    let g = Guide::synthetic("g", 12);
    let array = generate_ipog(&g, Strength::new(3).unwrap(), 0).unwrap();
    let mut rows = array.rows().to_vec();
    rows.remove(0);
    let damaged = CoveringArray::new("g", array.strength(), "x", array.columns().to_vec(), rows).unwrap();
    let report = verify_coverage(&damaged, VerifyMode::Exhaustive);
    let naive = naive_missing(&damaged, 3);
    assert_eq!(report.missing_total as usize, naive);
    assert_eq!(report.covered, naive == 0);
}

#[test]
fn high_strength_needs_force_on_large_guides() {
    let g = Guide::synthetic("g", 101);
    let s = Strength::new(5).unwrap();
    assert!(generate_ipog(&g, s, 0).is_err());
    assert!(generate_ipog(&Guide::synthetic("g", 4), s, 0).is_err());
    let small = Guide::synthetic("g", 12);
    let array = generate_ipog_with(&small, s, IpogOptions { seed: 0, force: false }).unwrap();
    assert!(verify_coverage(&array, VerifyMode::Exhaustive).covered);
}

#[test]
fn array_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    let array = generate_ipog(&Guide::synthetic("g", 9), Strength::new(2).unwrap(), 1).unwrap();
    save_array(&path, &array).unwrap();
    assert_eq!(load_array(&path).unwrap(), array);
}
