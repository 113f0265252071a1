//! Acceptance suite: runs `towerlab all` twice with the same configuration,
//! reports criteria 1 to 12 from the first summary and criterion 13 from a
//! byte comparison of the two summaries. One PASS/FAIL line per criterion.

use serde_json::Value;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

fn run_all(dir: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_towerlab"))
        .arg("all")
        .arg("--output-dir")
        .arg(dir)
        .env_remove("TOWERLAB_OUTPUT_DIR")
        .output()
        .map_err(|e| format!("cannot start towerlab: {e}"))?;
    // Exit status 1 means some check failed; 2 means the run itself broke.
    if out.status.code() == Some(2) || out.status.code().is_none() {
        return Err(format!("towerlab all aborted: {}", String::from_utf8_lossy(&out.stderr)));
    }
    std::fs::read(dir.join("summary.json")).map_err(|e| format!("summary.json missing: {e}"))
}

fn brief(details: &Value) -> String {
    if let Some(e) = details.get("error") {
        return format!("error: {e}");
    }
    let s = details.to_string();
    if s.len() > 160 {
        format!("{}...", &s[..s.char_indices().take_while(|(i, _)| *i < 160).last().map_or(0, |(i, c)| i + c.len_utf8())])
    } else {
        s
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_all(a.path());
    let second = run_all(b.path());
    let mut failures = 0;
    let mut line = |id: &str, title: &str, ok: bool, note: String| {
        if !ok {
            failures += 1;
        }
        println!("{} criterion {id:>2}: {title}  [{note}]", if ok { "PASS" } else { "FAIL" });
    };
    match &first {
        Ok(bytes) => {
            let summary: Value = serde_json::from_slice(bytes).expect("summary is JSON");
            let checks = summary["checks"].as_array().cloned().unwrap_or_default();
            for id in 1..=12 {
                let id = id.to_string();
                match checks.iter().find(|c| c["id"] == id.as_str()) {
                    Some(c) => line(
                        &id,
                        c["title"].as_str().unwrap_or(""),
                        c["passed"].as_bool() == Some(true),
                        brief(&c["details"]),
                    ),
                    None => line(&id, "missing", false, "not reported".into()),
                }
            }
        }
        Err(e) => {
            for id in 1..=12 {
                line(&id.to_string(), "not run", false, e.clone());
            }
        }
    }
    let identical = matches!((&first, &second), (Ok(x), Ok(y)) if x == y);
    line(
        "13",
        "determinism",
        identical,
        format!("summaries byte-identical: {identical}"),
    );
    println!("acceptance: {} of 13 criteria failed ({:.1} s)", failures, start.elapsed().as_secs_f64());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
