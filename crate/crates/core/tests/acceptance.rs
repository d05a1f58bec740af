//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 4 8`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqclass::cli::experiment::expected_band;
use reqclass::cli::{render_text, run_experiment, CheckpointPolicy, ExperimentConfig, RunReport, Timings, ROW_NAMES};
use reqclass::corpus::{keyword_corpus, write_csv, Label, RequirementRecord};
use reqclass::ensemble::{hard_vote, soft_vote, VotePanel};
use reqclass::evaluation::{confusion, format_cell, weighted_metrics};
use reqclass::models::{gru_step, lstm_step, toy_gradient_check, toy_spec, ModelKind, TOY_VOCAB};
use reqclass::textprep::{stem_token, Preprocessor};
use reqclass::vocab_embed::EmbeddingMode;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_verification() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for kind in ModelKind::ALL {
        let s = toy_spec(kind);
        assert_eq!((s.embed_dim, s.hidden, s.max_len, s.conv_filters, s.conv_width), (4, 5, 6, 3, 2));
        assert_eq!(TOY_VOCAB, 20);
        for seed in [1, 2] {
            let r = toy_gradient_check(kind, seed).map_err(|e| e.to_string())?;
            ok &= r.passed && r.max_relative_error < 1e-4;
            worst = worst.max(r.max_relative_error);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        ok && secs < 60.0,
        format!("max relative error {worst:.2e} (limit 1e-4), {secs:.2}s (limit 60s)"),
    )
}

fn cell_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (d, h) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let cell = random_lstm(&mut rng, d, h);
        let x = random_vec(&mut rng, d, 2.0);
        let hp = random_vec(&mut rng, h, 1.0);
        let cp = random_vec(&mut rng, h, 3.0);
        let (h1, c1) = lstm_step(&x, &hp, &cp, &cell).map_err(|e| e.to_string())?;
        let (h2, c2) = ref_lstm_step(&x, &hp, &cp, &cell);
        worst = worst.max(max_abs_diff(&h1, &h2)).max(max_abs_diff(&c1, &c2));

        let cell = random_gru(&mut rng, d, h);
        let out = gru_step(&x, &hp, &cell).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&out, &ref_gru_step(&x, &hp, &cell)));
    }
    check(worst < 1e-12, format!("100 LSTM + 100 GRU instances, max deviation {worst:.1e} (limit 1e-12)"))
}

fn stemmer_oracle() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/porter_reference.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let mut total = 0;
    let mut mismatches = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let (word, stem) = line.split_once(' ').ok_or(format!("bad line {line:?}"))?;
        total += 1;
        let got = stem_token(word);
        if got != stem {
            mismatches.push(format!("{word}: {got} != {stem}"));
        }
    }
    check(
        mismatches.is_empty() && total > 20_000,
        format!("{}/{total} words agree {:?}", total - mismatches.len(), mismatches.iter().take(3).collect::<Vec<_>>()),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut recall_gap: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..300);
        let fr_rate: f64 = rng.gen();
        let skill: f64 = rng.gen();
        let truth: Vec<Label> = (0..n)
            .map(|_| if rng.gen_bool(fr_rate) { Label::Fr } else { Label::Nfr })
            .collect();
        let pred: Vec<Label> = truth
            .iter()
            .map(|&t| if rng.gen_bool(skill) { t } else { t.other() })
            .collect();
        let counts = confusion(&pred, &truth).map_err(|e| e.to_string())?;
        let got = weighted_metrics(&counts).map_err(|e| e.to_string())?.values();
        let want = brute_force_weighted(&pred, &truth);
        worst = worst.max(max_abs_diff(&got, &want));
        recall_gap = recall_gap.max((got[1] - 100.0 * counts.accuracy()).abs());
    }
    check(
        worst < 1e-12 && recall_gap < 1e-12,
        format!("1000 instances, max deviation {worst:.1e}, max |recall - accuracy| {recall_gap:.1e} (limit 1e-12)"),
    )
}

fn voting_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad_patterns = 0;
    for mask in 0u32..32 {
        let probs: Vec<f64> = (0..5)
            .map(|i| if mask >> i & 1 == 1 { rng.gen_range(0.5..1.0) } else { rng.gen_range(0.0..0.5) })
            .collect();
        let majority = if (0..5).filter(|i| mask >> i & 1 == 1).count() >= 3 { Label::Fr } else { Label::Nfr };
        let panel = VotePanel::new(probs).map_err(|e| e.to_string())?;
        if hard_vote(&panel, 0.5) != majority {
            bad_patterns += 1;
        }
    }
    let mut flips = 0;
    for _ in 0..1000 {
        let probs: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
        let mut raised = probs.clone();
        let i = rng.gen_range(0..5);
        raised[i] = rng.gen_range(raised[i]..=1.0);
        let before = soft_vote(&VotePanel::new(probs).map_err(|e| e.to_string())?, 0.5);
        let after = soft_vote(&VotePanel::new(raised).map_err(|e| e.to_string())?, 0.5);
        if before == Label::Fr && after == Label::Nfr {
            flips += 1;
        }
    }
    check(
        bad_patterns == 0 && flips == 0,
        format!("{bad_patterns}/32 hard-vote mismatches, {flips}/1000 soft-vote flips"),
    )
}

fn vocabulary_of(records: &[RequirementRecord]) -> Vec<String> {
    let pre = Preprocessor::default();
    let words: std::collections::BTreeSet<String> = records
        .iter()
        .flat_map(|r| pre.preprocess(&r.text).0)
        .collect();
    words.into_iter().collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let records = realistic_corpus(200, 300, 6);
    let data = dir.path().join("corpus.csv");
    write_csv(&data, &records).map_err(|e| e.to_string())?;
    let vectors = dir.path().join("vectors.txt");
    write_vector_file(&vectors, &vocabulary_of(&records), 12, 6);
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "data = {}\nmode = both\nglove_path = {}\nreps = 2\nseed = 99\nhidden = 6\nfilters = 6\nembed_dim = 8\n",
            data.display(),
            vectors.display()
        ),
    )
    .map_err(|e| e.to_string())?;

    let mut reports = Vec::new();
    for (run, workers) in [(1, "1"), (2, "3")] {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_reqclass"))
            .args(["experiment", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--workers", workers])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    check(
        reports[0] == reports[1],
        format!("two CLI runs (1 and 3 workers), report.json {} bytes, identical = {}", reports[0].len(), reports[0] == reports[1]),
    )
}

fn synthetic_end_to_end() -> Outcome {
    let records = keyword_corpus(400, 7);
    let config = ExperimentConfig {
        reps: 1,
        checkpoints: CheckpointPolicy::None,
        ..Default::default()
    };
    let t = &config.training;
    assert_eq!((t.epochs, t.batch_size, t.validation_split), (3, 64, 0.2));
    let (report, _) = run_experiment(&config, &records, None).map_err(|e| e.to_string())?;
    let f1: Vec<f64> = report.modes[0]
        .rows
        .iter()
        .map(|r| r.runs[0].metrics.map_or(f64::NAN, |m| m.f1))
        .collect();
    let min_member = f1[..5].iter().copied().fold(f64::INFINITY, f64::min);
    let ok = f1[..5].iter().all(|&f| f >= 95.0) && f1[5] >= min_member && f1[6] >= min_member;
    let listing: Vec<String> = ROW_NAMES.iter().zip(&f1).map(|(n, f)| format!("{n} {f:.2}")).collect();
    check(ok, format!("weighted F1: {}", listing.join(", ")))
}

fn is_cell(s: &str) -> bool {
    let Some((mean, std)) = s.strip_suffix(')').and_then(|s| s.split_once('(')) else {
        return false;
    };
    [mean, std].iter().all(|part| {
        part.split_once('.').is_some_and(|(i, f)| {
            !i.is_empty() && i.bytes().all(|b| b.is_ascii_digit()) && f.len() == 2 && f.bytes().all(|b| b.is_ascii_digit())
        })
    })
}

fn format_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let records = realistic_corpus(240, 400, 8);
    let vectors = dir.path().join("vectors.txt");
    write_vector_file(&vectors, &vocabulary_of(&records), 10, 8);
    let config = ExperimentConfig {
        reps: 3,
        modes: vec![EmbeddingMode::CorpusTrained, EmbeddingMode::PretrainedStatic],
        glove_path: Some(vectors),
        hidden: 6,
        filters: 6,
        embed_dim: 8,
        checkpoints: CheckpointPolicy::None,
        ..Default::default()
    };
    let (report, _) = run_experiment(&config, &records, None).map_err(|e| e.to_string())?;
    let text = render_text(&report);
    let mut problems = Vec::new();
    let sections: Vec<&str> = text.split("\n\n").filter(|s| s.contains("Method")).collect();
    if sections.len() != 2 {
        problems.push(format!("{} mode tables", sections.len()));
    }
    for section in &sections {
        let rows: Vec<&str> = section
            .lines()
            .skip_while(|l| !l.starts_with("Method"))
            .skip(1)
            .take_while(|l| !l.starts_with("note"))
            .collect();
        let names: Vec<&str> = rows
            .iter()
            .map(|l| l.split("  ").next().unwrap_or("").trim())
            .collect();
        if names != ROW_NAMES {
            problems.push(format!("rows {names:?}"));
        }
        for (row, name) in rows.iter().zip(ROW_NAMES) {
            let cells: Vec<&str> = row[name.len()..].split_whitespace().collect();
            if cells.len() != 3 || !cells.iter().all(|c| is_cell(c)) {
                problems.push(format!("row {row:?}"));
            }
        }
    }
    let fixture = format_cell(80.164, 1.322);
    if fixture != "80.16(1.32)" {
        problems.push(format!("fixture rendered {fixture}"));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("2 modes x 7 rows of MM.MM(S.SS) cells; fixture {fixture}")
        } else {
            problems.join("; ")
        },
    )
}

/// One full-size repetition (both modes, five models) on a requirement-like
/// corpus of 4,661 records, single worker.
fn desk_scale_run() -> Result<(RunReport, Timings), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let records = realistic_corpus(4661, 6000, 10);
    let vectors = dir.path().join("vectors.txt");
    write_vector_file(&vectors, &vocabulary_of(&records), 300, 10);
    let config = ExperimentConfig {
        reps: 1,
        workers: 1,
        modes: vec![EmbeddingMode::CorpusTrained, EmbeddingMode::PretrainedStatic],
        glove_path: Some(vectors),
        checkpoints: CheckpointPolicy::None,
        ..Default::default()
    };
    run_experiment(&config, &records, None).map_err(|e| e.to_string())
}

fn band_flags(report: &RunReport) -> Outcome {
    let mut expected = Vec::new();
    let mut values = Vec::new();
    for mode in &report.modes {
        let (lo, hi) = expected_band(mode.mode);
        for row in &mode.rows {
            let f = row.cells.ok_or(format!("{} has no cells", row.name))?[2].mean;
            values.push(format!("{}/{} {f:.2}", mode.mode.name(), row.name));
            if f < lo || f > hi {
                expected.push(row.name.clone());
            }
            if row.outside_band != (f < lo || f > hi) {
                return Err(format!("{} flag does not match its F-score {f}", row.name));
            }
        }
    }
    let text = render_text(report);
    let ok = report.band_divergences.len() == expected.len()
        && report.all_completed()
        && text.contains("informational") == !expected.is_empty();
    check(
        ok,
        format!(
            "{} of 14 rows flagged outside 70-85 / 68-80, run still complete [{}]",
            expected.len(),
            values.join(", ")
        ),
    )
}

/// Greedy list schedule of `reps` copies of the measured jobs on `workers`.
fn projected_wall_time(job_seconds: &[f64], reps: usize, workers: usize) -> f64 {
    let mut free = vec![0.0f64; workers];
    for _ in 0..reps {
        for &s in job_seconds {
            let slot = (0..workers).min_by(|&a, &b| free[a].total_cmp(&free[b])).unwrap();
            free[slot] += s;
        }
    }
    free.into_iter().fold(0.0, f64::max)
}

fn desk_scale_runtime(timings: &Timings) -> Outcome {
    let seconds: Vec<f64> = timings.jobs.iter().map(|j| j.seconds).collect();
    let projected = projected_wall_time(&seconds, 10, 4);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    check(
        projected < 1800.0,
        format!(
            "one repetition ({} jobs) took {:.0}s on 1 worker; 10 repetitions on 4 workers project to {:.0}s (limit 1800s; host has {cores} core(s))",
            seconds.len(),
            timings.total_seconds,
            projected
        ),
    )
}

const NAMES: [&str; 10] = [
    "gradient verification",
    "dual-implementation cell oracles",
    "stemmer oracle",
    "metric oracle",
    "voting oracle",
    "determinism",
    "synthetic end-to-end",
    "protocol/format fidelity",
    "replication band flags (report-only)",
    "desk-scale runtime",
];

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut run = |n: usize, f: &dyn Fn() -> Outcome| {
        if wanted(n) {
            let outcome = guarded(f);
            let (tag, detail) = match &outcome {
                Ok(d) => ("PASS", d),
                Err(d) => ("FAIL", d),
            };
            println!("[{tag}] criterion {n:>2} {}: {detail}", NAMES[n - 1]);
            results.push((n, outcome));
        }
    };
    run(1, &gradient_verification);
    run(2, &cell_oracles);
    run(3, &stemmer_oracle);
    run(4, &metric_oracle);
    run(5, &voting_oracle);
    run(6, &determinism);
    run(7, &synthetic_end_to_end);
    run(8, &format_fidelity);
    if wanted(9) || wanted(10) {
        let desk = catch_unwind(AssertUnwindSafe(desk_scale_run)).unwrap_or_else(|_| Err("panicked".into()));
        match &desk {
            Ok((report, timings)) => {
                run(9, &|| band_flags(report));
                run(10, &|| desk_scale_runtime(timings));
            }
            Err(e) => {
                run(9, &|| Err(format!("desk-scale run failed: {e}")));
                run(10, &|| Err(format!("desk-scale run failed: {e}")));
            }
        }
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| o.is_err()).map(|(n, _)| *n).collect();
    println!(
        "{} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
