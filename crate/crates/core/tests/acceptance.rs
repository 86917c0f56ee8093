//! Acceptance battery: every criterion runs, one status line each.

use std::io::Write;
use std::time::Instant;

use jumpflow::analysis::{run_criterion, SuiteSettings, CRITERIA};

#[test]
fn acceptance_criteria() {
    let settings = SuiteSettings::default();
    // Written to the raw stream so the lines show without --nocapture.
    let mut err = std::io::stderr().lock();
    let mut failures = Vec::new();
    writeln!(err).unwrap();
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = run_criterion(c.id, &settings);
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match &outcome {
            Ok(reports) => {
                let failed: Vec<&str> = reports.iter().filter(|r| !r.ok()).map(|r| r.name.as_str()).collect();
                if !failed.is_empty() {
                    ("FAIL", format!("failed checks: {}", failed.join(", ")))
                } else if secs > c.limit_s {
                    ("FAIL", format!("over the {} s budget", c.limit_s))
                } else {
                    ("PASS", format!("{} checks", reports.len()))
                }
            }
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        writeln!(
            err,
            "criterion {:>2} {:<34} {status} ({secs:.2} s; {detail})",
            c.id, c.name
        )
        .unwrap();
        if status == "FAIL" {
            failures.push(format!("criterion {} {}: {detail}", c.id, c.name));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
