//! The acceptance suite: one PASS/FAIL line per criterion, nonzero exit if
//! any fails. Runs without the libtest harness so the lines print cleanly.

mod common;

use std::fs;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use dtdmn::corpus::{flatten_tree, Label, PAIRS_FILE, VOCAB_FILE};
use dtdmn::experiment::{run_experiment, ExperimentOptions, ExperimentReport};
use dtdmn::factor::{kl_discourse, kl_normal};
use dtdmn::memory::{read_memory, update_memory, MemoryState};
use dtdmn::predictor::pairwise_loss;
use dtdmn::Variant;
use proptest::test_runner::{Config, TestRunner};

use common::*;

const SEED: u64 = 42;
const OTHER_SEED: u64 = 7;

struct Verdict {
    name: &'static str,
    failures: Vec<String>,
    detail: String,
}

fn verdict(name: &'static str, failures: Vec<String>, detail: impl Into<String>) -> Verdict {
    Verdict {
        name,
        failures,
        detail: detail.into(),
    }
}

/// Collect a failure message unless `ok`.
fn expect(failures: &mut Vec<String>, ok: bool, what: String) {
    if !ok {
        failures.push(what);
    }
}

fn close(failures: &mut Vec<String>, name: &str, got: f64, want: f64) {
    expect(
        failures,
        (got - want).abs() <= 1e-6,
        format!("{name}: got {got}, want {want}"),
    );
}

fn criterion_1_closed_form_identities() -> Verdict {
    let mut f = Vec::new();
    close(
        &mut f,
        "pairwise_loss(0,0)",
        pairwise_loss(0.0, 0.0),
        2f64.ln(),
    );
    close(
        &mut f,
        "pairwise_loss(1,0)",
        pairwise_loss(1.0, 0.0),
        (-1f64).exp().ln_1p(),
    );
    close(&mut f, "kl_normal(0,0)", kl_normal(&[0.0], &[0.0]), 0.0);
    close(&mut f, "kl_normal([1],[0])", kl_normal(&[1.0], &[0.0]), 0.5);
    close(
        &mut f,
        "kl_discourse(uniform)",
        kl_discourse(&[0.25; 4]),
        0.0,
    );

    let m = MemoryState::new(3, 2, vec![0.5, -1.0, 2.0, 0.25, -3.0, 1.5]);
    let same = update_memory(&m, &[0.0; 3], &[0.7, 0.2], &[0.9, -0.4]).unwrap();
    expect(
        &mut f,
        same.data == m.data,
        format!("w=0 update changed memory to {:?}", same.data),
    );
    let row = read_memory(&m, &[0.0, 1.0, 0.0]).unwrap();
    expect(
        &mut f,
        row == [2.0, 0.25],
        format!("one-hot read gave {row:?}"),
    );

    // one slot [1, 1], w = 0.5, erase [0.5, 0.5], add [1, -1]:
    // 1 * (1 - 0.25) + 0.5 * 1 = 1.25 and 1 * (1 - 0.25) - 0.5 * 1 = 0.25
    let hand = update_memory(
        &MemoryState::new(1, 2, vec![1.0, 1.0]),
        &[0.5],
        &[0.5, 0.5],
        &[1.0, -1.0],
    )
    .unwrap();
    close(&mut f, "hand case [0]", hand.data[0], 1.25);
    close(&mut f, "hand case [1]", hand.data[1], 0.25);
    verdict("closed-form identities to 1e-6", f, "9 identities")
}

fn criterion_2_gradient_checks() -> Verdict {
    let mut f = Vec::new();
    let mut detail = Vec::new();
    for (name, check) in gradient_checks() {
        detail.push(format!("{name} {:.1e}", check.max_relative_error));
        expect(
            &mut f,
            check.entries > 0 && check.max_relative_error < GRAD_TOLERANCE,
            format!(
                "{name}: {:e} at {}",
                check.max_relative_error, check.location
            ),
        );
    }
    verdict(
        "analytic gradients match finite differences within 1e-3",
        f,
        detail.join(", "),
    )
}

fn criterion_3_normalization_properties() -> Verdict {
    const DRAWS: u32 = 1000;
    let mut runner = TestRunner::new(Config {
        cases: DRAWS,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        proptest::num::u64::ANY,
        0.2f64..2.0,
        0.05f64..2.0,
        turns_strategy(),
        proptest::bool::ANY,
        0usize..5,
    );
    let ran = std::cell::Cell::new(0u32);
    let result = runner.run(
        &strategy,
        |(seed, scale, temperature, turns, sampled, component)| {
            ran.set(ran.get() + 1);
            let m = scaled_model(seed, scale, temperature);
            let conv = conversation(&turns);
            check_factor_outputs(&m, &conv, sampled)?;
            check_memory_weight(&m, &conv)?;
            check_attention(&m, &conv)?;
            check_masked_effect(&m, &conv, component)?;
            Ok(())
        },
    );
    let mut f: Vec<String> = result.err().map(|e| e.to_string()).into_iter().collect();
    expect(
        &mut f,
        ran.get() >= DRAWS,
        format!("only {} draws ran", ran.get()),
    );
    verdict(
        "simplex outputs, w sums to 2, masked effect in (0,1)",
        f,
        format!("{} draws", ran.get()),
    )
}

fn desk_report() -> &'static ExperimentReport {
    static REPORT: OnceLock<ExperimentReport> = OnceLock::new();
    REPORT.get_or_init(|| run_experiment(&ExperimentOptions::desk(SEED)).unwrap())
}

fn criterion_4_planted_signal_experiment() -> Verdict {
    let r = desk_report();
    let full = r.accuracy(Variant::Full);
    let no_topic = r.accuracy(Variant::NoTopic);
    let no_discourse = r.accuracy(Variant::NoDiscourse);
    let mut f = Vec::new();
    expect(
        &mut f,
        full >= 0.90,
        format!("full accuracy {full:.4} < 0.90"),
    );
    expect(
        &mut f,
        (r.permuted.accuracy - 0.5).abs() <= 0.03,
        format!(
            "permuted control {:.4} outside 0.5 +- 0.03",
            r.permuted.accuracy
        ),
    );
    expect(
        &mut f,
        full >= no_discourse && no_discourse >= no_topic,
        format!("ordering full {full:.4} >= no_discourse {no_discourse:.4} >= no_topic {no_topic:.4} fails"),
    );
    expect(
        &mut f,
        full - no_topic >= 0.05,
        format!("full - no_topic = {:.4} < 0.05", full - no_topic),
    );
    expect(
        &mut f,
        r.baseline.accuracy > 0.5,
        format!("lr_tfidf {:.4} not above 0.5", r.baseline.accuracy),
    );
    let detail = format!(
        "full {full:.3}, no_discourse {no_discourse:.3}, no_topic {no_topic:.3}, no_memory {:.3}, permuted {:.3}, lr_tfidf {:.3}, {:.0}s",
        r.accuracy(Variant::NoMemory),
        r.permuted.accuracy,
        r.baseline.accuracy,
        r.seconds
    );
    verdict("planted-signal experiment", f, detail)
}

fn criterion_5_factor_separation() -> Verdict {
    let r = desk_report();
    let mut f = Vec::new();
    expect(
        &mut f,
        r.marker_discourse_share >= 0.8,
        format!(
            "marker discourse share {:.3} < 0.8",
            r.marker_discourse_share
        ),
    );
    for (k, c) in r.cluster_coverage.iter().enumerate() {
        expect(
            &mut f,
            *c >= 6,
            format!("cluster {k} covers only {c} of 10 top-word slots"),
        );
    }
    let detail = format!(
        "marker share {:.3}, coverage {:?}",
        r.marker_discourse_share, r.cluster_coverage
    );
    verdict("factor separation on the planted corpus", f, detail)
}

fn criterion_6_corpus_golden() -> Verdict {
    let mut f = Vec::new();
    let convs = flatten_tree(&fixture_posts(), fixture_options(0.5).flatten).unwrap();
    let paths: Vec<(String, Vec<String>, Label)> = convs
        .into_iter()
        .map(|c| (c.conv_id, c.post_ids, c.label))
        .collect();
    let want = |id: &str, posts: &[&str], label| {
        (
            id.to_string(),
            posts.iter().map(|p| p.to_string()).collect(),
            label,
        )
    };
    let expected = vec![
        want("m1/b", &["a", "b"], Label::Winning),
        want("m1/c", &["a", "c"], Label::Losing),
        want("m1/e", &["a", "d", "e"], Label::Losing),
    ];
    expect(&mut f, paths == expected, format!("paths {paths:?}"));

    let (one, two) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    fixture_corpus(0.5).write(one.path()).unwrap();
    fixture_corpus(0.5).write(two.path()).unwrap();
    for (file, golden) in [
        (PAIRS_FILE, "debate_tree.pairs.jsonl"),
        (VOCAB_FILE, "debate_tree.vocab.txt"),
    ] {
        let got = fs::read(one.path().join(file)).unwrap();
        expect(
            &mut f,
            got == fs::read(fixture(golden)).unwrap(),
            format!("{file} differs from {golden}"),
        );
        expect(
            &mut f,
            got == fs::read(two.path().join(file)).unwrap(),
            format!("{file} differs between runs"),
        );
    }
    verdict(
        "fixture tree gives the hand-enumerated paths and pairs",
        f,
        "3 paths, 2 pairs",
    )
}

fn criterion_7_determinism() -> Verdict {
    let first = desk_report().metrics_csv();
    let again = run_experiment(&ExperimentOptions::desk(SEED))
        .unwrap()
        .metrics_csv();
    let other = run_experiment(&ExperimentOptions::desk(OTHER_SEED))
        .unwrap()
        .metrics_csv();
    let mut f = Vec::new();
    expect(
        &mut f,
        first == again,
        format!("seed {SEED} runs differ:\n{first}\n{again}"),
    );
    expect(
        &mut f,
        first != other,
        format!("seed {OTHER_SEED} reproduced seed {SEED}"),
    );
    verdict(
        "same seed gives identical metrics, another seed does not",
        f,
        "3 complete runs",
    )
}

fn main() -> ExitCode {
    let criteria: [fn() -> Verdict; 7] = [
        criterion_1_closed_form_identities,
        criterion_2_gradient_checks,
        criterion_3_normalization_properties,
        criterion_4_planted_signal_experiment,
        criterion_5_factor_separation,
        criterion_6_corpus_golden,
        criterion_7_determinism,
    ];
    let mut failed = 0;
    for (i, criterion) in criteria.iter().enumerate() {
        let started = Instant::now();
        let v = criterion();
        let status = if v.failures.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        println!(
            "[{status}] criterion {}: {} ({}; {:.1}s)",
            i + 1,
            v.name,
            v.detail,
            started.elapsed().as_secs_f64()
        );
        for f in &v.failures {
            println!("    {f}");
        }
        failed += usize::from(!v.failures.is_empty());
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
