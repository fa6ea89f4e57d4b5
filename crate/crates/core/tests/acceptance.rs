//! One line per acceptance criterion. Runs the suites at full size; exits
//! nonzero on any failure other than the documented one in criterion 1.

use std::process::ExitCode;
use std::time::Instant;

use entropic::verifier::{default_corpus, run_suite, Report, SuiteOptions, TOL};

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    /// A failure that the run has characterized and accepts.
    expected_failure: bool,
}

fn run(suite: &str) -> (Report, f64) {
    let corpus = default_corpus(suite).expect("registered suite");
    let start = Instant::now();
    let r = run_suite(suite, &corpus, &SuiteOptions::default()).expect("suite runs");
    (r, start.elapsed().as_secs_f64())
}

fn violating_keys(r: &Report) -> Vec<(usize, String)> {
    r.trials
        .iter()
        .flat_map(|t| {
            t.values
                .iter()
                .filter(|(k, v)| k.starts_with("slack.") && **v < -TOL)
                .map(move |(k, _)| (t.index, k.clone()))
        })
        .collect()
}

fn criterion_1(r: &Report, secs: f64) -> Line {
    let bad = violating_keys(r);
    let stated_only = bad.iter().all(|(i, k)| {
        let t = &r.trials[*i];
        k == "slack.mo.slack" && t.values["mo.p_zero"] > 0.0 && t.values["slack.mo.corrected"] >= -TOL
    });
    let globals_ok = r.summary.extra.get("cauchy_davenport_f7").map(|v| v["pass"] == true).unwrap_or(false);
    let pass = bad.is_empty() && globals_ok && secs < 120.0;
    Line {
        id: 1,
        name: "exact-constant inequality suite",
        pass,
        detail: format!(
            "{} trials, {} violations ({} of the stated Mathe-O'Regan form, all with P(X=0)>0; corrected form holds: {}), {:.1}s",
            r.summary.trials,
            bad.len(),
            bad.iter().filter(|(_, k)| k == "slack.mo.slack").count(),
            stated_only,
            secs
        ),
        expected_failure: !pass && stated_only && globals_ok,
    }
}

fn simple(id: u32, name: &'static str, r: &Report, secs: f64, limit: f64, extra: bool, note: String) -> Line {
    let pass = r.summary.violations == 0 && extra && secs < limit;
    Line {
        id,
        name,
        pass,
        detail: format!("{} trials, {} violations, {note}{:.2}s (limit {limit}s)", r.summary.trials, r.summary.violations, secs),
        expected_failure: false,
    }
}

fn main() -> ExitCode {
    let mut lines = Vec::new();

    let (r1, s1) = run("exact-inequalities");
    lines.push(criterion_1(&r1, s1));

    let (r, s) = run("cauchy-davenport");
    let pairs = r.summary.extra["pairs"].as_u64().unwrap_or(0);
    lines.push(simple(2, "Cauchy-Davenport over F_7", &r, s, 1.0, pairs == 127 * 127, format!("{pairs} pairs, ")));

    let (r, s) = run("binomial");
    let at = |n: f64, k: &str| r.trials.iter().find(|t| t.values["n"] == n).map(|t| t.values[k]).unwrap_or(f64::NAN);
    let note = format!("doubling(1024) {:.4}, gap(4096) {:.4}, ", at(1024.0, "doubling"), at(4096.0, "gap"));
    lines.push(simple(3, "binomial half-bit doubling", &r, s, 10.0, r.trials.len() == 7, note));

    let (r4, s) = run("flat-decomposition");
    let ok = r4.summary.trials == 500 && r4.summary.extra["worked_example"]["pass"] == true;
    lines.push(simple(4, "flat decomposition", &r4, s, 30.0, ok, "worked example checked, ".into()));

    let (r, s) = run("energy-oracle");
    lines.push(simple(5, "energy and incidence oracles", &r, s, 60.0, r.summary.trials == 400, String::new()));

    let (r, s) = run("collision-growth");
    let finite = r.summary.empirical_constant.is_some_and(f64::is_finite);
    let note = format!("deficit max {:.4}, ", r.summary.deficit_max.unwrap_or(f64::NAN));
    lines.push(simple(6, "collision-entropy growth", &r, s, 120.0, finite, note));

    let (r7, s) = run("extractor-exact");
    let ok = r7.summary.trials == 100 && r7.summary.extra["f5_worked_example"]["pass"] == true;
    lines.push(simple(7, "extractor exact mode", &r7, s, 120.0, ok, "F_5 example checked, ".into()));

    let (r, s) = run("gradients");
    let worst = r
        .trials
        .iter()
        .flat_map(|t| t.values.iter().filter(|(k, _)| k.starts_with("fd_error.")).map(|(_, v)| *v))
        .fold(0.0, f64::max);
    lines.push(simple(8, "gradient correctness", &r, s, 30.0, r.summary.trials == 200, format!("max error {worst:.2e}, ")));

    let (r, s) = run("freiman");
    let ok = r.summary.extra["f11_rejection"]["pass"] == true && r.summary.skipped == 0;
    lines.push(simple(9, "Freiman machinery", &r, s, 60.0, ok, "F_11 rejection checked, ".into()));

    let reruns = [("exact-inequalities", &r1), ("flat-decomposition", &r4), ("extractor-exact", &r7)];
    let same: Vec<bool> = reruns.iter().map(|(suite, first)| run(suite).0.digest() == first.digest()).collect();
    lines.push(Line {
        id: 10,
        name: "reproducibility",
        pass: same.iter().all(|&b| b),
        detail: format!("digest match for suites 1, 4, 7: {same:?}"),
        expected_failure: false,
    });

    let mut unexpected = 0;
    for l in &lines {
        let tag = match (l.pass, l.expected_failure) {
            (true, _) => "PASS",
            (false, true) => "FAIL (characterized)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2} {tag}: {}: {}", l.id, l.name, l.detail);
        unexpected += (!l.pass && !l.expected_failure) as u32;
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
