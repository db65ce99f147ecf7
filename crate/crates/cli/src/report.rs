//! JSON run reports.

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

/// Key of the only field allowed to differ between identical runs.
pub const WALL_CLOCK_KEY: &str = "wall_clock_seconds";

#[derive(Debug, Serialize)]
pub struct Software {
    pub name: &'static str,
    pub version: &'static str,
}

pub const SOFTWARE: Software = Software { name: "cbscan", version: env!("CARGO_PKG_VERSION") };

/// Assemble a report. `config` is the config echo; `body` holds the
/// command-specific fields and is merged into the top level.
pub fn build(command: &str, seed: u64, config: &toml::Table, body: Value, elapsed: Duration) -> Value {
    let mut report = json!({
        "command": command,
        "software": SOFTWARE,
        "seed": seed,
        "config": config,
        WALL_CLOCK_KEY: elapsed.as_secs_f64(),
    });
    if let (Some(r), Value::Object(extra)) = (report.as_object_mut(), body) {
        r.extend(extra);
    }
    report
}

/// Write `text` to `out`, or to stdout when no path is given.
pub fn emit(text: &str, out: Option<&Path>) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()
        }
    }
}

pub fn to_text(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report values are serializable");
    s.push('\n');
    s
}
