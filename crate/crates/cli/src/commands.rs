use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use qtkit::bank::{build_bank, list_files, load_bank, pareto, save_bank_with_order, ValueOrder, Weighting};
use qtkit::eval::{evaluate_set, factorial_report, parse_runs_csv, GroundTruth, Metric, MetricsReport, RunRecord};
use qtkit::fixtures::{generate_corpus, write_table_corpus, CorpusSpec};
use qtkit::forensics::{dq_block_scores_with, ela_map_pixels, DqParams, ProbMap};
use qtkit::par::{self, Exec};
use qtkit::parse::{extract_dqt, has_jpeg_magic, luminance_table};
use qtkit::qt::{estimate_quality, standard_table, QualityFactor, QuantTable, StandardRole};
use qtkit::recompress::{decode_source, is_image, materialize_condition, Condition, PipelineSpec};
use qtkit::Subsampling;

use crate::{
    BankCommand, Cli, Command, DqArgs, ElaArgs, EvalArgs, FixturesCommand, Format, QtCommand, RecompressArgs,
    ReportArgs, UsageError,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn quality(q: i64) -> Result<QualityFactor> {
    QualityFactor::new(q).map_err(|e| usage(e.to_string()))
}

fn order(s: &str) -> Result<ValueOrder> {
    ValueOrder::parse(s).ok_or_else(|| usage(format!("unknown order {s:?} (natural or zigzag)")))
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let out = match &cli.command {
        Command::Qt(c) => qt(c, g.format)?,
        Command::Bank(c) => bank(c, g.format)?,
        Command::Recompress(a) => recompress(a, g.seed, g.format)?,
        Command::Ela(a) => ela(a, g.format)?,
        Command::Dq(a) => dq(a, g.format)?,
        Command::Eval(a) => eval(a, g.format)?,
        Command::Report(a) => report(a, g.format)?,
        Command::Fixtures(c) => fixtures(c, g.seed)?,
    };
    print!("{out}");
    Ok(())
}

fn role_for_id(id: u8) -> StandardRole {
    if id == 0 {
        StandardRole::Luminance
    } else {
        StandardRole::Chrominance
    }
}

fn describe_quality(t: &QuantTable, role: StandardRole) -> String {
    let e = estimate_quality(t, role);
    if e.exact() {
        format!("exact q={}", e.quality.get())
    } else {
        format!("nearest q={} distance={:.3}", e.quality.get(), e.distance())
    }
}

fn qt(c: &QtCommand, format: Format) -> Result<String> {
    let mut s = String::new();
    match c {
        QtCommand::Show { file } => {
            let records = extract_dqt(&read(file)?)?;
            if format == Format::Csv {
                s.push_str("table_id,precision,fp,quality,values\n");
            }
            for r in &records {
                let role = role_for_id(r.table_id);
                let values: Vec<String> = r.table.values().iter().map(u16::to_string).collect();
                match format {
                    Format::Csv => {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{}",
                            r.table_id,
                            r.precision.bits(),
                            r.table.fingerprint().as_str(),
                            describe_quality(&r.table, role),
                            values.join(" ")
                        );
                    }
                    Format::Text => {
                        let _ = writeln!(
                            s,
                            "table {} fp {} precision {} {}",
                            r.table_id,
                            r.table.fingerprint().as_str(),
                            r.precision.bits(),
                            describe_quality(&r.table, role)
                        );
                        s.push_str(&r.table.render_grid());
                    }
                }
            }
        }
        QtCommand::Gen { quality: q, chroma } => {
            let role = if *chroma { StandardRole::Chrominance } else { StandardRole::Luminance };
            let grid = standard_table(quality(*q)?, role).render_grid();
            match format {
                Format::Text => s.push_str(&grid),
                Format::Csv => s.push_str(&grid.replace(' ', ",")),
            }
        }
        QtCommand::Estimate { file } => {
            let r = luminance_table(&read(file)?)?;
            let _ = writeln!(s, "{}", describe_quality(&r.table, StandardRole::Luminance));
        }
        QtCommand::Fingerprint { file } => {
            let r = luminance_table(&read(file)?)?;
            let _ = writeln!(s, "{}", r.table.fingerprint().as_str());
        }
    }
    Ok(s)
}

fn bank(c: &BankCommand, format: Format) -> Result<String> {
    let mut s = String::new();
    match c {
        BankCommand::Build { input, out, no_recursive, order: o } => {
            let o = order(o)?;
            let b = build_bank(input, !no_recursive)?;
            save_bank_with_order(&b, out, o)?;
            let _ = writeln!(
                s,
                "scanned {} failed {} distinct {} -> {}",
                b.scanned,
                b.failed,
                b.distinct_count(),
                out.display()
            );
        }
        BankCommand::Stats { bank, order: o } => {
            let b = load_bank(bank, order(o)?)?;
            let rows = [
                ("distinct", b.distinct_count().to_string()),
                ("occurrences", b.total_count().to_string()),
                ("scanned", b.scanned.to_string()),
                ("failed", b.failed.to_string()),
            ];
            match format {
                Format::Csv => {
                    s.push_str("key,value\n");
                    for (k, v) in rows {
                        let _ = writeln!(s, "{k},{v}");
                    }
                }
                Format::Text => {
                    for (k, v) in rows {
                        let _ = writeln!(s, "{k}: {v}");
                    }
                }
            }
        }
        BankCommand::Pareto { bank, order: o, limit, out } => {
            let report = pareto(&load_bank(bank, order(o)?)?)?;
            if let Some(out) = out {
                write(out, report.to_csv().as_bytes())?;
            }
            match format {
                Format::Csv => s.push_str(&report.to_csv()),
                Format::Text => s.push_str(&report.to_text(*limit)),
            }
        }
    }
    Ok(s)
}

fn recompress(a: &RecompressArgs, seed: u64, format: Format) -> Result<String> {
    let condition = Condition::parse(&a.condition)
        .ok_or_else(|| usage(format!("unknown condition {:?} (orig, std or real)", a.condition)))?;
    let subsampling =
        Subsampling::parse(&a.subsampling).ok_or_else(|| usage(format!("unknown subsampling {:?}", a.subsampling)))?;
    let spec = match condition {
        Condition::Orig => PipelineSpec::orig(seed),
        Condition::Std => {
            let (lo, hi) = a
                .qf_range
                .split_once(':')
                .and_then(|(l, h)| Some((l.trim().parse::<u8>().ok()?, h.trim().parse::<u8>().ok()?)))
                .ok_or_else(|| usage(format!("--qf-range expects LOW:HIGH, got {:?}", a.qf_range)))?;
            PipelineSpec::standard(seed, lo, hi).map_err(|e| usage(e.to_string()))?
        }
        Condition::Real => {
            let path = a.bank.as_ref().ok_or_else(|| usage("--condition real needs --bank FILE"))?;
            let weighting = Weighting::parse(&a.weighting)
                .ok_or_else(|| usage(format!("unknown weighting {:?} (uniform or frequency)", a.weighting)))?;
            PipelineSpec::real(seed, load_bank(path, ValueOrder::Natural)?, weighting)?.with_bank_path(path)
        }
    }
    .with_subsampling(subsampling);
    let m = materialize_condition(&a.input, &a.out, &spec, Exec::default())?;
    Ok(match format {
        Format::Csv => m.to_csv(),
        Format::Text => format!(
            "seed={seed}\ncondition={} files={} failed={} manifest={}\n",
            condition.label(),
            m.rows.len(),
            m.failed(),
            a.out.join("manifest.csv").display()
        ),
    })
}

/// Applies `analyze` to one file or to every image under a directory,
/// writing 16-bit PGM maps that mirror the input tree.
fn map_images(
    input: &Path,
    out: &Path,
    format: Format,
    analyze: impl Fn(&[u8]) -> Result<ProbMap> + Sync + Send,
) -> Result<String> {
    if input.is_file() {
        let map = analyze(&read(input)?)?;
        write(out, &map.to_pgm16())?;
        return Ok(format!("{} -> {} ({}x{})\n", input.display(), out.display(), map.width(), map.height()));
    }
    let files: Vec<(PathBuf, String)> = list_files(input, true)?
        .into_iter()
        .filter(|(abs, _)| std::fs::read(abs).map(|b| is_image(&b)).unwrap_or(false))
        .collect();
    let results = par::map(Exec::default(), &files, |(abs, rel)| {
        let stem = rel.rsplit_once('.').map_or(rel.as_str(), |(s, _)| s);
        let out_rel = format!("{stem}.pgm");
        let r = read(abs).and_then(|b| analyze(&b)).and_then(|m| write(&out.join(&out_rel), &m.to_pgm16()));
        (rel.clone(), out_rel, r.err().map(|e| format!("{e:#}")))
    });
    let failed = results.iter().filter(|r| r.2.is_some()).count();
    let mut s = String::new();
    match format {
        Format::Csv => {
            s.push_str("input,output,error\n");
            for (rel, out_rel, err) in &results {
                let _ = writeln!(s, "{rel},{},{}", if err.is_some() { "" } else { out_rel }, err.as_deref().unwrap_or(""));
            }
        }
        Format::Text => {
            for (rel, _, err) in &results {
                if let Some(e) = err {
                    let _ = writeln!(s, "failed {rel}: {e}");
                }
            }
            let _ = writeln!(s, "wrote {} maps to {} ({failed} failed)", results.len() - failed, out.display());
        }
    }
    if failed > 0 {
        print!("{s}");
        return Err(anyhow!("{failed} of {} inputs failed", results.len()));
    }
    Ok(s)
}

fn ela(a: &ElaArgs, format: Format) -> Result<String> {
    let q = quality(a.quality)?;
    map_images(&a.input, &a.out, format, |bytes| Ok(ela_map_pixels(&decode_source(bytes)?, q)?))
}

fn dq(a: &DqArgs, format: Format) -> Result<String> {
    let p = DqParams { smoothing_radius: a.smoothing, ..DqParams::default() };
    if let Some(csv) = &a.blocks_csv {
        if !a.input.is_file() {
            return Err(usage("--blocks-csv needs a single input file"));
        }
        write(csv, dq_block_scores_with(&read(&a.input)?, &p)?.to_csv().as_bytes())?;
    }
    map_images(&a.input, &a.out, format, |bytes| {
        if has_jpeg_magic(bytes) {
            Ok(dq_block_scores_with(bytes, &p)?.to_prob_map())
        } else {
            // never JPEG-compressed: no quantization history to find
            let img = decode_source(bytes)?;
            Ok(ProbMap::zeros(img.width(), img.height()))
        }
    })
}

fn eval(a: &EvalArgs, format: Format) -> Result<String> {
    if !(0.0..=1.0).contains(&a.tau) {
        return Err(usage(format!("--tau must lie in [0, 1], got {}", a.tau)));
    }
    let gt = match &a.gt {
        Some(dir) => GroundTruth::Masks(dir),
        None => GroundTruth::Unaltered,
    };
    let report = evaluate_set(&a.pred, gt, a.tau, &a.condition, Exec::default())?;
    if let Some(out) = &a.out {
        write(out, report.to_csv().as_bytes())?;
    }
    Ok(match format {
        Format::Csv => report.to_csv(),
        Format::Text => {
            let mut s = report.summary();
            for u in &report.unmatched {
                let _ = writeln!(s, "unmatched {u}");
            }
            s
        }
    })
}

fn report(a: &ReportArgs, format: Format) -> Result<String> {
    let metric =
        Metric::parse(&a.metric).ok_or_else(|| usage(format!("unknown metric {:?} (f1, iou or fpr)", a.metric)))?;
    let text = String::from_utf8(read(&a.runs)?).context("runs file is not UTF-8")?;
    let base = a.runs.parent().unwrap_or(Path::new(""));
    let mut runs = Vec::new();
    for spec in parse_runs_csv(&text)? {
        let path = if spec.metrics.is_absolute() { spec.metrics.clone() } else { base.join(&spec.metrics) };
        let csv = String::from_utf8(read(&path)?).context("metrics file is not UTF-8")?;
        let report = MetricsReport::from_csv(&csv).with_context(|| format!("in {}", path.display()))?;
        runs.push(RunRecord {
            model: spec.model,
            training: spec.training,
            dataset: spec.dataset,
            condition: spec.condition,
            report,
        });
    }
    let table = factorial_report(&runs, metric)?;
    if let Some(out) = &a.out {
        write(out, table.to_csv().as_bytes())?;
    }
    Ok(match format {
        Format::Csv => table.to_csv(),
        Format::Text => table.to_text(),
    })
}

fn fixtures(c: &FixturesCommand, seed: u64) -> Result<String> {
    match c {
        FixturesCommand::Gen { out, bank_files, bank_tables, tampered, unaltered, width, height } => {
            if *width < 32 || *height < 32 {
                return Err(usage("fixture images must be at least 32x32"));
            }
            let spec = CorpusSpec {
                bank_files: *bank_files,
                bank_tables: *bank_tables,
                tampered: *tampered,
                unaltered: *unaltered,
                width: *width,
                height: *height,
            };
            generate_corpus(out, seed, &spec)?;
            Ok(format!("seed={seed}\nfixtures written to {}\n", out.display()))
        }
        FixturesCommand::Tables { out, k, files } => {
            if *k == 0 {
                return Err(usage("-k must be positive"));
            }
            let files = if *files == 0 { 2 * k } else { *files };
            write_table_corpus(out, *k, files, seed)?;
            Ok(format!("seed={seed}\n{files} files with {k} tables written to {}\n", out.display()))
        }
    }
}
