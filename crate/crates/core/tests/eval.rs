use std::path::Path;

use proptest::prelude::*;
use qtkit::eval::{
    evaluate_set, f1_iou, fpr_pix, pixel_counts, BinaryMask, EvalError, EvalMode, GroundTruth, MetricsReport,
    PixelCounts, DEFAULT_TAU,
};
use qtkit::forensics::ProbMap;
use qtkit::par::Exec;
use qtkit::pnm::{write_pgm16, Gray16};
use qtkit::rng::SeededRng;

/// Written map plus the exact 16-bit values it holds.
struct Case {
    id: String,
    width: u32,
    height: u32,
    pred16: Vec<u16>,
    mask: Vec<bool>,
}

fn random_case(rng: &mut SeededRng, id: String) -> Case {
    let width = rng.range_inclusive(1, 64) as u32;
    let height = rng.range_inclusive(1, 64) as u32;
    let n = (width * height) as usize;
    // spread values around the threshold so both sides are common
    let pred16 = (0..n)
        .map(|_| match rng.below(4) {
            0 => 32768,
            1 => 32767,
            _ => rng.below(65536) as u16,
        })
        .collect();
    let density = rng.unit_f64();
    let mask = (0..n).map(|_| rng.unit_f64() < density).collect();
    Case { id, width, height, pred16, mask }
}

fn mask_pgm8(c: &Case) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", c.width, c.height).into_bytes();
    out.extend(c.mask.iter().map(|&m| if m { 255u8 } else { 0 }));
    out
}

fn write_case(c: &Case, pred: &Path, gt: &Path) {
    let g = Gray16 { width: c.width, height: c.height, data: c.pred16.clone() };
    std::fs::write(pred.join(format!("{}.pgm", c.id)), write_pgm16(&g)).unwrap();
    std::fs::write(gt.join(format!("{}.pgm", c.id)), mask_pgm8(c)).unwrap();
}

/// Per-pixel recount straight from the stored integers:
/// `v / 65535 >= 0.5` is `2v >= 65535`.
fn oracle(c: &Case) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&v, &m) in c.pred16.iter().zip(&c.mask) {
        let p = 2 * u32::from(v) >= 65535;
        match (p, m) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

#[test]
fn evaluate_set_matches_brute_force_recount() {
    let mut rng = SeededRng::new(2024);
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let cases: Vec<Case> = (0..100).map(|i| random_case(&mut rng, format!("img{i:03}"))).collect();
    for c in &cases {
        write_case(c, &pred, &gt);
    }
    let report = evaluate_set(&pred, GroundTruth::Masks(&gt), DEFAULT_TAU, "Std", Exec::default()).unwrap();
    assert_eq!(report.rows.len(), 100);
    let (mut f1_sum, mut fpr_sum) = (0.0, 0.0);
    for (c, r) in cases.iter().zip(&report.rows) {
        assert_eq!(r.image_id, c.id);
        let (tp, fp, fn_) = oracle(c);
        assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_), (tp, fp, fn_));
        let (f1n, f1d) = if tp + fp + fn_ == 0 { (1, 1) } else { (2 * tp, 2 * tp + fp + fn_) };
        assert_eq!(r.counts.f1_ratio(), (f1n, f1d));
        let f1 = f1n as f64 / f1d as f64;
        assert!((r.f1 - f1).abs() <= 1e-12);
        let fpr = fp as f64 / (c.width * c.height) as f64;
        assert!((r.fpr_pix - fpr).abs() <= 1e-12);
        f1_sum += f1;
        fpr_sum += fpr;
    }
    assert!((report.mean_f1().unwrap() - f1_sum / 100.0).abs() <= 1e-12);
    assert!((report.mean_fpr().unwrap() - fpr_sum / 100.0).abs() <= 1e-12);

    let seq = evaluate_set(&pred, GroundTruth::Masks(&gt), DEFAULT_TAU, "Std", Exec::Sequential).unwrap();
    assert_eq!(seq.to_csv(), report.to_csv());
}

#[test]
fn means_are_arithmetic() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    // a: tp=1 fp=1 fn=2 -> f1 0.4; b: tp=3 fp=2 fn=2 -> f1 0.6
    let mk = |id: &str, pred_on: &[bool], gt_on: &[bool]| Case {
        id: id.into(),
        width: pred_on.len() as u32,
        height: 1,
        pred16: pred_on.iter().map(|&b| if b { 65535 } else { 0 }).collect(),
        mask: gt_on.to_vec(),
    };
    let t = true;
    let f = false;
    write_case(&mk("a", &[t, t, f, f], &[t, f, t, t]), &pred, &gt);
    write_case(&mk("b", &[t, t, t, t, t, f, f], &[t, t, t, f, f, t, t]), &pred, &gt);
    let r = evaluate_set(&pred, GroundTruth::Masks(&gt), 0.5, "Orig.", Exec::default()).unwrap();
    assert!((r.rows[0].f1 - 0.4).abs() < 1e-12 && (r.rows[1].f1 - 0.6).abs() < 1e-12);
    assert!((r.mean_f1().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn unaltered_mode_reports_only_false_positives() {
    let tmp = tempfile::tempdir().unwrap();
    let map = ProbMap::new(4, 4, (0..16).map(|i| if i < 3 { 0.9 } else { 0.1 }).collect()).unwrap();
    std::fs::write(tmp.path().join("x.pgm"), map.to_pgm16()).unwrap();
    let r = evaluate_set(tmp.path(), GroundTruth::Unaltered, 0.5, "Real", Exec::default()).unwrap();
    assert_eq!(r.mode, EvalMode::Unaltered);
    assert_eq!(r.mean_fpr(), Some(0.1875));
    assert_eq!(r.mean_f1(), None);
    let csv = r.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "image_id,condition,fp,pixels,fpr_pix,flags");
    assert_eq!(MetricsReport::from_csv(&csv).unwrap().mean_fpr(), Some(0.1875));
}

#[test]
fn mismatches_and_strays_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let good = Case { id: "good".into(), width: 2, height: 2, pred16: vec![65535, 0, 0, 0], mask: vec![true, false, false, false] };
    write_case(&good, &pred, &gt);
    let wrong = Case { id: "wrong".into(), width: 2, height: 2, pred16: vec![0; 4], mask: vec![false; 4] };
    write_case(&wrong, &pred, &gt);
    std::fs::write(gt.join("wrong.pgm"), b"P5\n3 1\n255\n\0\0\0").unwrap();
    std::fs::write(pred.join("lonely.pgm"), ProbMap::zeros(2, 2).to_pgm16()).unwrap();
    std::fs::write(pred.join("notes.txt"), "x").unwrap();
    let r = evaluate_set(&pred, GroundTruth::Masks(&gt), 0.5, "Std", Exec::default()).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.rows[1].is_error());
    assert_eq!(r.unmatched, vec!["prediction:lonely".to_string()]);
    assert_eq!(r.mean_f1(), Some(1.0));

    std::fs::write(pred.join("good.pgm16"), ProbMap::zeros(2, 2).to_pgm16()).unwrap();
    assert!(matches!(
        evaluate_set(&pred, GroundTruth::Masks(&gt), 0.5, "Std", Exec::default()),
        Err(EvalError::StemCollision { .. })
    ));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        evaluate_set(empty.path(), GroundTruth::Unaltered, 0.5, "Std", Exec::default()),
        Err(EvalError::NoPairs)
    ));
}

#[test]
fn metrics_csv_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let mut rng = SeededRng::new(3);
    for i in 0..5 {
        write_case(&random_case(&mut rng, format!("c{i}")), &pred, &gt);
    }
    let r = evaluate_set(&pred, GroundTruth::Masks(&gt), 0.5, "Std", Exec::default()).unwrap();
    let back = MetricsReport::from_csv(&r.to_csv()).unwrap();
    assert_eq!(back.to_csv(), r.to_csv());
    assert!((back.mean_f1().unwrap() - r.mean_f1().unwrap()).abs() < 1e-6);
}

proptest! {
    #[test]
    fn f1_is_a_function_of_iou(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000) {
        let (f1, iou, _) = f1_iou(&PixelCounts { tp, fp, fn_ });
        prop_assert!((f1 - 2.0 * iou / (1.0 + iou)).abs() < 1e-12);
        prop_assert!(iou <= f1 + 1e-15);
    }

    #[test]
    fn fpr_agrees_with_counts_on_empty_truth(bits in prop::collection::vec(any::<bool>(), 1..200)) {
        let n = bits.len() as u32;
        let pred = BinaryMask::new(n, 1, bits).unwrap();
        let gt = BinaryMask::new(n, 1, vec![false; n as usize]).unwrap();
        let c = pixel_counts(&pred, &gt).unwrap();
        prop_assert_eq!(c.tp + c.fn_, 0);
        prop_assert_eq!(fpr_pix(&pred), c.fp as f64 / f64::from(n));
    }
}
