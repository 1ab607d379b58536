use std::path::Path;

use proptest::prelude::*;
use qtkit::bank::{
    bank_from_jsonl, bank_to_jsonl, build_bank, build_bank_with, load_bank, pareto, sample_table, save_bank, BankError,
    QtBank, ValueOrder, Weighting,
};
use qtkit::fixtures::{distinct_tables, write_table_corpus};
use qtkit::par::Exec;
use qtkit::qt::fingerprint;
use qtkit::rng::SeededRng;

#[test]
fn distinct_count_matches_generator() {
    for k in 1..=20 {
        let dir = tempfile::tempdir().unwrap();
        let tables = write_table_corpus(dir.path(), k, k + 7, 1000 + k as u64).unwrap();
        let bank = build_bank(dir.path(), true).unwrap();
        assert_eq!(bank.distinct_count(), k, "k={k}");
        assert_eq!(bank.total_count(), (k + 7) as u64);
        for t in &tables {
            assert!(bank.get(&fingerprint(t)).is_some());
        }
    }
}

#[test]
fn non_jpeg_files_are_ignored_and_broken_ones_counted() {
    let dir = tempfile::tempdir().unwrap();
    write_table_corpus(dir.path(), 3, 6, 9).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "hello").unwrap();
    std::fs::write(dir.path().join("broken.jpg"), [0xFF, 0xD8, 0xFF, 0xDB, 0x00]).unwrap();
    let bank = build_bank(dir.path(), false).unwrap();
    assert_eq!(bank.distinct_count(), 3);
    assert_eq!((bank.scanned, bank.failed), (7, 1));
}

#[test]
fn missing_root_is_an_error() {
    assert!(matches!(build_bank(Path::new("/nonexistent/qtkit"), true), Err(BankError::UnreadableRoot { .. })));
}

#[test]
fn sequential_and_parallel_builds_agree() {
    let dir = tempfile::tempdir().unwrap();
    write_table_corpus(dir.path(), 9, 40, 4).unwrap();
    let a = build_bank_with(dir.path(), true, Exec::Sequential).unwrap();
    let b = build_bank_with(dir.path(), true, Exec::Parallel).unwrap();
    assert_eq!(bank_to_jsonl(&a, ValueOrder::Natural), bank_to_jsonl(&b, ValueOrder::Natural));
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_table_corpus(&dir.path().join("c"), 5, 12, 2).unwrap();
    let bank = build_bank(&dir.path().join("c"), true).unwrap();
    let path = dir.path().join("bank.jsonl");
    save_bank(&bank, &path).unwrap();
    let back = load_bank(&path, ValueOrder::Natural).unwrap();
    assert_eq!(bank_to_jsonl(&back, ValueOrder::Natural), std::fs::read_to_string(&path).unwrap());
    let report = pareto(&back).unwrap();
    assert!(report.to_text(10).ends_with("sum of shares: 1.000\n"));
}

#[test]
fn frequency_sampling_follows_counts() {
    let mut rng = SeededRng::new(1);
    let t = distinct_tables(2, &mut rng);
    let mut bank = QtBank::new();
    bank.insert(t[0], 9, vec![]);
    bank.insert(t[1], 1, vec![]);
    let hits = (0..5000).filter(|_| sample_table(&bank, &mut rng, Weighting::Frequency).unwrap() == t[0]).count();
    assert!((4300..=4700).contains(&hits), "{hits}");
    let hits = (0..5000).filter(|_| sample_table(&bank, &mut rng, Weighting::Uniform).unwrap() == t[0]).count();
    assert!((2300..=2700).contains(&hits), "{hits}");
}

fn shuffle<T>(v: &mut [T], rng: &mut SeededRng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.below(i as u64 + 1) as usize);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_order_does_not_change_bytes(seed in any::<u64>(), k in 1usize..12, parts in 2usize..6) {
        let mut rng = SeededRng::new(seed);
        let tables = distinct_tables(k, &mut rng);
        let mut singles: Vec<QtBank> = (0..parts * 4)
            .map(|i| QtBank::single(tables[rng.below(k as u64) as usize], &format!("f{i:03}.jpg")))
            .collect();
        let reference = singles.iter().cloned().fold(QtBank::new(), QtBank::merge);
        shuffle(&mut singles, &mut rng);
        let chunked: Vec<QtBank> = singles
            .chunks(parts)
            .map(|c| c.iter().cloned().fold(QtBank::new(), QtBank::merge))
            .collect();
        let merged = chunked.into_iter().rev().fold(QtBank::new(), |a, b| b.merge(a));
        prop_assert_eq!(bank_to_jsonl(&merged, ValueOrder::Natural), bank_to_jsonl(&reference, ValueOrder::Natural));
    }

    #[test]
    fn jsonl_round_trips_in_both_orders(seed in any::<u64>(), k in 1usize..8) {
        let mut rng = SeededRng::new(seed);
        let mut bank = QtBank::new();
        for (i, t) in distinct_tables(k, &mut rng).into_iter().enumerate() {
            bank.insert(t, i as u64 + 1, vec![format!("s{i}")]);
        }
        bank.scanned = bank.total_count();
        for order in [ValueOrder::Natural, ValueOrder::Zigzag] {
            let text = bank_to_jsonl(&bank, order);
            let back = bank_from_jsonl(&text, order).unwrap();
            prop_assert_eq!(bank_to_jsonl(&back, order), text);
        }
    }
}
