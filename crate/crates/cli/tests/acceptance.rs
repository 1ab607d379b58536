//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL ...` line (written straight to stdout so it shows
//! even when the harness captures output).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use qtkit::bank::{bank_to_jsonl, build_bank, QtBank, ValueOrder, Weighting};
use qtkit::codec::{decode, encode, fdct_8x8, EncodeParams};
use qtkit::eval::{
    binarize, evaluate_set, f1_iou, factorial_report, pixel_counts, roc_auc, BinaryMask, EvalMode, GroundTruth,
    Metric, MetricsReport, MetricsRow, PixelCounts, RunRecord,
};
use qtkit::fixtures::{document_image, ela_splice, half_double_compressed, std_params, write_table_corpus};
use qtkit::forensics::{dq_block_scores, ela_map};
use qtkit::par::{with_threads, Exec};
use qtkit::parse::luminance_table;
use qtkit::pnm::{read_pnm, write_pgm16, write_pnm, Gray16};
use qtkit::qt::{fingerprint, is_standard, standard_table, Precision, QualityFactor, QuantTable, StandardRole};
use qtkit::recompress::{materialize_condition, PipelineSpec};
use qtkit::rng::SeededRng;
use qtkit::{ColorModel, PixelImage, Subsampling};

fn verdict(n: u8, ok: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "criterion {n} failed: {detail}");
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn qf(q: u8) -> QualityFactor {
    QualityFactor::new(q.into()).unwrap()
}

/// Every file under `dir` as (relative path, bytes), sorted.
fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn criterion_1_standard_table_goldens() {
    let golden = |name: &str| -> Vec<u16> {
        std::fs::read_to_string(manifest_dir().join("tests/golden").join(name))
            .unwrap()
            .split_whitespace()
            .map(|v| v.parse().unwrap())
            .collect()
    };
    let t50 = standard_table(qf(50), StandardRole::Luminance);
    let t90 = standard_table(qf(90), StandardRole::Luminance);
    let ok = t50.max_step() == 121
        && t90.max_step() == 24
        && t50.values().to_vec() == golden("qt_lum_q50.txt")
        && t90.values().to_vec() == golden("qt_lum_q90.txt");
    verdict(
        1,
        ok,
        &format!("max(q50)={} (want 121), max(q90)={} (want 24), 64-entry grids equal goldens", t50.max_step(), t90.max_step()),
    );
}

struct OracleCase {
    id: String,
    w: u32,
    h: u32,
    pred: Vec<u16>,
    gt: Vec<bool>,
}

#[test]
fn criterion_2_metric_oracle() {
    let mut rng = SeededRng::new(0xACCE2);
    let tmp = tempfile::tempdir().unwrap();
    let (pred_dir, gt_dir) = (tmp.path().join("pred"), tmp.path().join("gt"));
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    let cases: Vec<OracleCase> = (0..100)
        .map(|i| {
            let w = rng.range_inclusive(1, 64) as u32;
            let h = rng.range_inclusive(1, 64) as u32;
            let n = (w * h) as usize;
            let pred = (0..n).map(|_| if rng.below(5) == 0 { 32767 + rng.below(2) as u16 } else { rng.below(65536) as u16 }).collect();
            let density = rng.unit_f64();
            let gt = (0..n).map(|_| rng.unit_f64() < density).collect();
            OracleCase { id: format!("case_{i:03}"), w, h, pred, gt }
        })
        .collect();
    for c in &cases {
        std::fs::write(pred_dir.join(format!("{}.pgm", c.id)), write_pgm16(&Gray16 { width: c.w, height: c.h, data: c.pred.clone() }))
            .unwrap();
        let mut mask = format!("P5\n{} {}\n255\n", c.w, c.h).into_bytes();
        mask.extend(c.gt.iter().map(|&g| if g { 255u8 } else { 0 }));
        std::fs::write(gt_dir.join(format!("{}.pgm", c.id)), mask).unwrap();
    }
    let report = evaluate_set(&pred_dir, GroundTruth::Masks(&gt_dir), 0.5, "Std", Exec::default()).unwrap();

    let mut mismatches = 0;
    let (mut f1_sum, mut iou_sum, mut fpr_sum) = (0.0, 0.0, 0.0);
    for (c, row) in cases.iter().zip(&report.rows) {
        // v/65535 >= 1/2  <=>  2v >= 65535
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (&v, &g) in c.pred.iter().zip(&c.gt) {
            match (2 * u32::from(v) >= 65535, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let f1 = if tp + fp + fn_ == 0 { (1, 1) } else { (2 * tp, 2 * tp + fp + fn_) };
        let iou = if tp + fp + fn_ == 0 { (1, 1) } else { (tp, tp + fp + fn_) };
        let fpr = (fp, u64::from(c.w * c.h));
        let exact = row.image_id == c.id
            && row.counts == PixelCounts { tp, fp, fn_ }
            && row.counts.f1_ratio() == f1
            && row.counts.iou_ratio() == iou
            && row.pixels == fpr.1;
        let ratio = |(n, d): (u64, u64)| n as f64 / d as f64;
        let close = (row.f1 - ratio(f1)).abs() <= 1e-12
            && (row.iou - ratio(iou)).abs() <= 1e-12
            && (row.fpr_pix - ratio(fpr)).abs() <= 1e-12;
        if !(exact && close) {
            mismatches += 1;
        }
        f1_sum += ratio(f1);
        iou_sum += ratio(iou);
        fpr_sum += ratio(fpr);
    }
    let means_ok = (report.mean_f1().unwrap() - f1_sum / 100.0).abs() <= 1e-12
        && (report.mean_iou().unwrap() - iou_sum / 100.0).abs() <= 1e-12
        && (report.mean_fpr().unwrap() - fpr_sum / 100.0).abs() <= 1e-12;
    let ok = report.rows.len() == 100 && mismatches == 0 && means_ok;
    verdict(2, ok, &format!("100 random pairs up to 64x64: {mismatches} mismatches vs brute-force recount, means within 1e-12: {means_ok}"));
}

#[test]
fn criterion_3_bank_distinct_count() {
    let mut wrong = Vec::new();
    let mut permutation_failures = 0;
    for k in 1..=20usize {
        let tmp = tempfile::tempdir().unwrap();
        write_table_corpus(tmp.path(), k, 2 * k + 3, 300 + k as u64).unwrap();
        let bank = build_bank(tmp.path(), true).unwrap();
        if bank.distinct_count() != k {
            wrong.push(k);
        }
        // the same observations merged in several orders
        let singles: Vec<QtBank> = {
            let mut files: Vec<PathBuf> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
            files.sort();
            files
                .iter()
                .map(|f| {
                    let t = luminance_table(&std::fs::read(f).unwrap()).unwrap().table;
                    QtBank::single(t, &f.file_name().unwrap().to_string_lossy())
                })
                .collect()
        };
        let reference = bank_to_jsonl(&bank, ValueOrder::Natural);
        let mut rng = SeededRng::new(k as u64);
        for _ in 0..5 {
            let mut order = singles.clone();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.below(i as u64 + 1) as usize);
            }
            let merged = order.into_iter().fold(QtBank::new(), QtBank::merge);
            if bank_to_jsonl(&merged, ValueOrder::Natural) != reference {
                permutation_failures += 1;
            }
        }
    }
    let ok = wrong.is_empty() && permutation_failures == 0;
    verdict(
        3,
        ok,
        &format!("k=1..20: distinct_count wrong for {wrong:?}; {permutation_failures} of 100 merge permutations differ in bytes"),
    );
}

fn pipeline_corpus(dir: &Path) {
    std::fs::create_dir_all(dir.join("nested")).unwrap();
    let mut rng = SeededRng::new(44);
    for i in 0..200u64 {
        let color = if i % 3 == 0 { ColorModel::Gray } else { ColorModel::Rgb };
        let img = document_image(48, 40, i, color);
        let sub = if i % 5 == 0 { "nested/" } else { "" };
        if i % 10 == 7 {
            std::fs::write(dir.join(format!("{sub}src_{i:03}.ppm")), write_pnm(&img)).unwrap();
        } else {
            let q = rng.range_inclusive(60, 95) as u8;
            std::fs::write(dir.join(format!("{sub}src_{i:03}.jpg")), encode(&img, &std_params(q)).unwrap()).unwrap();
        }
    }
}

#[test]
fn criterion_4_pipeline_closure() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    pipeline_corpus(&src);
    write_table_corpus(&tmp.path().join("bankcorpus"), 16, 40, 5).unwrap();
    let bank = build_bank(&tmp.path().join("bankcorpus"), true).unwrap();

    let std_spec = PipelineSpec::standard(77, 30, 100).unwrap();
    let real_spec = PipelineSpec::real(77, bank.clone(), Weighting::Frequency).unwrap();
    let run = |spec: &PipelineSpec, name: &str, threads: usize, exec: Exec| {
        let out = tmp.path().join(name);
        let m = with_threads(threads, || materialize_condition(&src, &out, spec, exec).unwrap());
        (m, read_tree(&out))
    };

    let (std_m, std_tree) = run(&std_spec, "std_a", 4, Exec::Parallel);
    let (real_m, real_tree) = run(&real_spec, "real_a", 4, Exec::Parallel);
    let reproducible = run(&std_spec, "std_b", 1, Exec::Parallel).1 == std_tree
        && run(&std_spec, "std_c", 0, Exec::Sequential).1 == std_tree
        && run(&real_spec, "real_b", 1, Exec::Parallel).1 == real_tree
        && run(&real_spec, "real_c", 0, Exec::Sequential).1 == real_tree;

    let out_table = |dir: &str, rel: &str| -> QuantTable {
        luminance_table(&std::fs::read(tmp.path().join(dir).join(rel)).unwrap()).unwrap().table
    };
    let std_closed = std_m
        .rows
        .iter()
        .filter(|r| r.error.is_empty())
        .filter(|r| is_standard(&out_table("std_a", &r.output), StandardRole::Luminance).is_some_and(|q| q.get() >= 30))
        .count();
    let real_closed = real_m
        .rows
        .iter()
        .filter(|r| r.error.is_empty())
        .filter(|r| bank.get(&fingerprint(&out_table("real_a", &r.output))).is_some())
        .count();
    let ok = std_m.rows.len() == 200
        && real_m.rows.len() == 200
        && std_closed == 200
        && real_closed == 200
        && reproducible;
    verdict(
        4,
        ok,
        &format!(
            "200 files: Std standard q in [30,100] {std_closed}/200, Real bank members {real_closed}/200, \
             byte-identical across reruns and 1/4/sequential workers: {reproducible}"
        ),
    );
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(manifest_dir().join("../core/tests/fixtures").join(name)).unwrap()
}

fn naive_fdct(block: &[f64; 64]) -> [f64; 64] {
    let pi = std::f64::consts::PI;
    let c = |k: usize| if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
    std::array::from_fn(|i| {
        let (v, u) = (i / 8, i % 8);
        let mut s = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                s += block[y * 8 + x]
                    * ((2 * x + 1) as f64 * u as f64 * pi / 16.0).cos()
                    * ((2 * y + 1) as f64 * v as f64 * pi / 16.0).cos();
            }
        }
        0.25 * c(u) * c(v) * s
    })
}

#[test]
fn criterion_5_codec_conformance() {
    // lossless-table round trip on grayscale fixtures
    let ones = QuantTable::new([1; 64], Precision::Bits8).unwrap();
    let params = EncodeParams::new(ones, ones).subsampling(Subsampling::S444);
    let mut round_trip_max = 0u8;
    for (i, (w, h)) in [(64, 48), (33, 17), (8, 8), (100, 75)].into_iter().enumerate() {
        for img in [document_image(w, h, i as u64, ColorModel::Gray), qtkit::fixtures::textured_image(w, h, i as u64, ColorModel::Gray)] {
            let back = decode(&encode(&img, &params).unwrap()).unwrap();
            let max = img.data().iter().zip(back.data()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
            round_trip_max = round_trip_max.max(max);
        }
    }

    // our encoder's committed output vs libjpeg-turbo's decode of it
    let mut differing = 0usize;
    let mut samples = 0usize;
    for name in ["golden_gray_q90", "golden_gray_q50_ri", "golden_rgb444_q90", "golden_rgb420_q75"] {
        let ours: PixelImage = decode(&fixture(&format!("{name}.jpg"))).unwrap();
        let ext = if ours.color() == ColorModel::Gray { "pgm" } else { "ppm" };
        let theirs = read_pnm(&fixture(&format!("{name}.{ext}"))).unwrap();
        assert_eq!((ours.width(), ours.height()), (theirs.width(), theirs.height()));
        differing += ours.data().iter().zip(theirs.data()).filter(|(a, b)| a != b).count();
        samples += ours.data().len();
    }

    let mut rng = SeededRng::new(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let block: [f64; 64] = std::array::from_fn(|_| rng.unit_f64() * 255.0 - 128.0);
        let (fast, slow) = (fdct_8x8(&block), naive_fdct(&block));
        worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let ok = round_trip_max <= 1 && differing == 0 && worst <= 1e-9;
    verdict(
        5,
        ok,
        &format!(
            "unit-table gray round trip max error {round_trip_max} (<= 1); libjpeg-turbo golden dumps: \
             {differing} of {samples} samples differ; fdct vs naive max {worst:.2e} (<= 1e-9)"
        ),
    );
}

#[test]
fn criterion_6_forensic_baselines() {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xD0B1E);
    let mut worst_f1 = f64::INFINITY;
    let mut worst_auc = f64::INFINITY;
    let mut pairs = Vec::new();
    for i in 0..10u64 {
        // a primary lattice only survives when the second step is finer
        let q1 = rng.range_inclusive(30, 85) as u8;
        let q2 = rng.range_inclusive(u64::from(q1) + 15, 100) as u8;
        let f = half_double_compressed(256, 256, 500 + i, q1, q2).unwrap();
        let bs = dq_block_scores(&f.jpeg).unwrap();
        let w = f.mask.width as usize;
        let labels: Vec<bool> = (0..bs.rows).flat_map(|r| (0..bs.cols).map(move |c| (r, c))).map(|(r, c)| f.mask.data[r * 8 * w + c * 8]).collect();
        let auc = roc_auc(&bs.scores, &labels).unwrap_or(0.0);
        let gt = BinaryMask::new(f.mask.width, f.mask.height, f.mask.data.clone()).unwrap();
        let f1 = f1_iou(&pixel_counts(&binarize(&bs.to_prob_map(), 0.5), &gt).unwrap()).0;
        worst_f1 = worst_f1.min(f1);
        worst_auc = worst_auc.min(auc);
        pairs.push(format!("({q1},{q2})"));
    }

    let mut splices_ok = 0;
    for seed in 0..5u64 {
        let s = ela_splice(192, 160, seed, 60, 95, 95).unwrap();
        let e = ela_map(&s.jpeg, qf(75)).unwrap();
        let mean = |inside: bool| {
            let v: Vec<f64> = e.values().iter().zip(&s.mask.data).filter(|(_, &m)| m == inside).map(|(v, _)| *v).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        if mean(true) > mean(false) {
            splices_ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_f1 > 0.5 && worst_auc > 0.7 && splices_ok == 5 && secs < 120.0;
    verdict(
        6,
        ok,
        &format!(
            "dq on 10 (q1,q2) pairs {}: min F1 {worst_f1:.3} (> 0.5), min AUC {worst_auc:.3} (> 0.7); \
             ELA in-patch > out-of-patch on {splices_ok}/5 splices; {secs:.1}s (< 120s)",
            pairs.join(" ")
        ),
    );
}

fn synthetic_report(f1: f64) -> MetricsReport {
    // two images whose mean is `f1`
    let row = |id: &str, v: f64| MetricsRow {
        image_id: id.into(),
        counts: PixelCounts::default(),
        pixels: 100,
        f1: v,
        iou: v / (2.0 - v),
        fpr_pix: v,
        flags: Vec::new(),
    };
    MetricsReport {
        condition: String::new(),
        tau: 0.5,
        mode: EvalMode::Tampered,
        rows: vec![row("a", f1 - 0.05), row("b", f1 + 0.05)],
        unmatched: Vec::new(),
    }
}

#[test]
fn criterion_7_report_layout() {
    let cells = [
        ("modelA", "std", [0.70, 0.50, 0.30]),
        ("modelA", "real", [0.65, 0.55, 0.45]),
        ("modelB", "std", [0.60, 0.40, 0.20]),
        ("modelB", "real", [0.60, 0.45, 0.35]),
    ];
    // conditions deliberately fed out of order
    let mut runs = Vec::new();
    for (ci, cond) in [(2, "real"), (0, "orig"), (1, "std")] {
        for (model, training, vals) in &cells {
            runs.push(RunRecord {
                model: model.to_string(),
                training: training.to_string(),
                dataset: "docs".into(),
                condition: cond.into(),
                report: synthetic_report(vals[ci]),
            });
        }
    }
    let golden = |name: &str| std::fs::read_to_string(manifest_dir().join("tests/golden").join(name)).unwrap();
    let f1 = factorial_report(&runs, Metric::F1).unwrap().to_csv();
    let fpr = factorial_report(&runs, Metric::Fpr).unwrap().to_csv();
    let library_ok = f1 == golden("report_f1.csv") && fpr == golden("report_fpr.csv");

    // same runs through the binary, metrics files on disk
    let tmp = tempfile::tempdir().unwrap();
    let mut runs_csv = String::from("model,training,dataset,condition,metrics\n");
    for (i, r) in runs.iter().enumerate() {
        let name = format!("m{i}.csv");
        std::fs::write(tmp.path().join(&name), r.report.to_csv()).unwrap();
        runs_csv += &format!("{},{},{},{},{name}\n", r.model, r.training, r.dataset, r.condition);
    }
    std::fs::write(tmp.path().join("runs.csv"), runs_csv).unwrap();
    let cli_table = |metric: &str| {
        let out = tmp.path().join(format!("report_{metric}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_qtkit"))
            .args(["report", "--runs"])
            .arg(tmp.path().join("runs.csv"))
            .args(["--metric", metric, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out).unwrap()
    };
    let cli_ok = cli_table("f1") == golden("report_f1.csv") && cli_table("fpr") == golden("report_fpr.csv");
    verdict(
        7,
        library_ok && cli_ok,
        &format!(
            "2 models x 2 trainings x 3 conditions: F1 (max) and FPR (min) tables equal golden CSVs \
             with per-family best marks (library: {library_ok}, qtkit report: {cli_ok})"
        ),
    );
}

#[test]
fn criterion_8_end_to_end_determinism() {
    let script = manifest_dir().join("../../scripts/reproduce.sh");
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    let mut times = Vec::new();
    for (name, threads) in [("run1", "1"), ("run2", "0")] {
        let out = tmp.path().join(name);
        let start = Instant::now();
        let status = Command::new("bash")
            .arg(&script)
            .arg(&out)
            .env("QTKIT", env!("CARGO_BIN_EXE_qtkit"))
            .env("QTKIT_THREADS", threads)
            .env_remove("QTKIT_SEED")
            .output()
            .unwrap();
        times.push(start.elapsed().as_secs_f64());
        assert!(status.status.success(), "script failed: {}", String::from_utf8_lossy(&status.stderr));
        trees.push(read_tree(&out));
    }
    let files = trees[0].len();
    let identical = trees[0] == trees[1];
    let has_reports = trees[0].iter().any(|(p, _)| p == "report_f1.csv") && trees[0].iter().any(|(p, _)| p == "report_fpr.csv");
    let slowest = times.iter().cloned().fold(0.0, f64::max);
    let ok = identical && has_reports && slowest < 300.0;
    verdict(
        8,
        ok,
        &format!("reproduction script twice (1 thread, all threads): {files} files byte-identical: {identical}; slowest run {slowest:.1}s (< 300s)"),
    );
}
