//! CSV tables and JSON reports.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::experiments::Row;

pub const VERSION: &str = env!("BUNDLEHEAT_VERSION");

/// Run-level columns repeated on every CSV line.
pub struct RunInfo<'a> {
    pub geometry: &'a str,
    pub bundle: &'a str,
    pub seed: u64,
    pub scheme: &'a str,
    pub dt: f64,
}

fn coords(c: &[f64]) -> String {
    c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_csv(path: &Path, rows: &[Row], info: &RunInfo<'_>) -> std::io::Result<()> {
    let width = rows.iter().map(|r| r.value.len()).max().unwrap_or(1);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["quantity", "geometry", "bundle", "t", "x", "y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..width).map(|i| format!("value_{i}")));
    header.extend((0..width).map(|i| format!("se_{i}")));
    header.extend(["n", "seed", "scheme", "dt"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.quantity.clone(),
            info.geometry.to_string(),
            info.bundle.to_string(),
            r.t.to_string(),
            coords(&r.x),
            coords(&r.y),
        ];
        for v in [&r.value, &r.se] {
            rec.extend((0..width).map(|i| v.get(i).map_or(String::new(), |x| x.to_string())));
        }
        rec.extend([
            r.n.to_string(),
            info.seed.to_string(),
            info.scheme.to_string(),
            info.dt.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()
}

/// RFC 3339 UTC timestamp from the system clock.
pub fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let (days, rem) = (secs / 86_400, secs % 86_400);
    // civil-from-days, valid for the proleptic Gregorian calendar
    let z = days as i64 + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        rem % 3600 / 60,
        rem % 60
    )
}

/// Report skeleton; `body` fields are merged in after the header.
pub fn report(command: &str, config: Value, body: Value, pass: bool) -> Value {
    let mut r = json!({
        "tool": "bundleheat",
        "version": VERSION,
        "timestamp": timestamp(),
        "command": command,
        "config": config,
    });
    if let (Value::Object(r), Value::Object(b)) = (&mut r, body) {
        r.extend(b);
    }
    r["pass"] = Value::Bool(pass);
    r
}

pub fn write_json(path: &Path, report: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}
