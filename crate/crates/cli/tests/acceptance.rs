//! Runs every built-in preset and reports one line per acceptance criterion.
//!
//! A criterion passes when every check tagged with it passes on every preset
//! that carries it, the presets it must cover actually produced such checks,
//! and no study feeding it stopped with an error.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use dfsl::presets::load_preset;
use dfsl::{run, Report, Study};

const PRESETS: [&str; 4] = ["gaussian-baseline", "cellular-vortex", "singular-vortex-3d", "mu1-envelope"];
const BASELINE_BUDGET_SECONDS: f64 = 60.0;

struct Criterion {
    number: u8,
    title: &'static str,
    required_on: &'static [&'static str],
}

const ALL: &[&str] = &PRESETS;

const CRITERIA: [Criterion; 10] = [
    Criterion { number: 1, title: "Gaussian baseline", required_on: &["gaussian-baseline"] },
    Criterion { number: 2, title: "conservativeness", required_on: ALL },
    Criterion { number: 3, title: "Chapman-Kolmogorov", required_on: &["singular-vortex-3d"] },
    Criterion { number: 4, title: "energy identity", required_on: ALL },
    Criterion { number: 5, title: "resolvent bounds", required_on: ALL },
    Criterion { number: 6, title: "weighted estimate", required_on: ALL },
    Criterion { number: 7, title: "approximation convergence", required_on: &["singular-vortex-3d"] },
    Criterion { number: 8, title: "Aronson envelope", required_on: ALL },
    Criterion { number: 9, title: "Monte Carlo consistency", required_on: ALL },
    Criterion { number: 10, title: "cross-route uniqueness", required_on: ALL },
];

fn criteria_of(study: Study) -> &'static [u8] {
    match study {
        Study::Baseline => &[1],
        Study::Conservativeness => &[2],
        Study::Chapman => &[3],
        Study::Energy => &[4],
        Study::Resolvent => &[5, 10],
        Study::Weighted => &[6],
        Study::Convergence | Study::Duhamel => &[7],
        Study::Envelope => &[8],
        Study::Mc => &[9],
    }
}

#[derive(Default)]
struct Tally {
    checks: usize,
    failures: Vec<String>,
    covered: Vec<&'static str>,
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut tallies: BTreeMap<u8, Tally> = CRITERIA.iter().map(|c| (c.number, Tally::default())).collect();
    let mut baseline_seconds = f64::NAN;

    for name in PRESETS {
        let started = Instant::now();
        let report: Report = match load_preset(name).and_then(|loaded| run(loaded, Some(&scratch.path().join(name)))) {
            Ok(r) => r,
            Err(e) => {
                for t in tallies.values_mut() {
                    t.failures.push(format!("{name}: run failed before any study ({e})"));
                }
                continue;
            }
        };
        let seconds = started.elapsed().as_secs_f64();
        eprintln!("{name}: {} in {seconds:.1} s", if report.passed() { "all studies passed" } else { "some checks failed" });
        if name == "gaussian-baseline" {
            baseline_seconds = seconds;
        }

        for outcome in &report.outcomes {
            if let Some(err) = &outcome.error {
                for n in criteria_of(outcome.study) {
                    tallies.get_mut(n).unwrap().failures.push(format!("{name}/{}: stopped ({err})", outcome.study));
                }
            }
            for check in &outcome.checks {
                let Some(n) = check.criterion else { continue };
                let tally = tallies.get_mut(&n).unwrap();
                tally.checks += 1;
                if !tally.covered.contains(&name) {
                    tally.covered.push(name);
                }
                if !check.passed {
                    tally.failures.push(format!(
                        "{name}/{}: {} = {:.4e}, needs {} {:.4e}",
                        outcome.study,
                        check.name,
                        check.value,
                        check.relation.symbol(),
                        check.threshold
                    ));
                }
            }
        }
    }

    let baseline = tallies.get_mut(&1).unwrap();
    if !(baseline_seconds < BASELINE_BUDGET_SECONDS) {
        baseline.failures.push(format!("gaussian-baseline took {baseline_seconds:.1} s, budget {BASELINE_BUDGET_SECONDS} s"));
    }

    let mut all_passed = true;
    for c in &CRITERIA {
        let tally = &tallies[&c.number];
        let mut failures = tally.failures.clone();
        for preset in c.required_on {
            if !tally.covered.contains(preset) {
                failures.push(format!("{preset}: no checks recorded"));
            }
        }
        let mut line = format!(
            "{} criterion {}: {} ({} checks on {})",
            if failures.is_empty() { "PASS" } else { "FAIL" },
            c.number,
            c.title,
            tally.checks,
            tally.covered.join(", ")
        );
        if c.number == 1 {
            line.push_str(&format!(", gaussian-baseline ran in {baseline_seconds:.1} s"));
        }
        if !failures.is_empty() {
            all_passed = false;
            line.push_str(&format!("; {}", failures.join("; ")));
        }
        println!("{line}");
    }

    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
