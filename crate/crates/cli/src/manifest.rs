//! Run manifests: one `manifest.txt` per output directory, recording what
//! produced the files next to it. Replaying the recorded command on the
//! recorded inputs reproduces the outputs byte for byte; the two wall-clock
//! lines at the end are the only part that varies.

use std::fmt::Display;
use std::fmt::Write as _;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        let mut manifest = RunManifest {
            entries: Vec::new(),
        };
        manifest.record("command", command);
        manifest.record("tool", format!("specdet {}", env!("CARGO_PKG_VERSION")));
        manifest
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Render the manifest, appending the timing lines.
    pub fn render(mut self, elapsed: Duration) -> String {
        self.record("elapsed_ms", elapsed.as_millis());
        self.record("timestamp", rfc3339_utc(SystemTime::now()));
        let mut out = String::new();
        for (key, value) in &self.entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

/// UTC timestamp in RFC 3339 form, to whole seconds.
fn rfc3339_utc(t: SystemTime) -> String {
    let secs = t
        .duration_since(UNIX_EPOCH)
        .unwrap_or(Duration::ZERO)
        .as_secs();
    let (hour, minute, second) = (secs / 3600 % 24, secs / 60 % 60, secs % 60);
    let (year, month, day) = civil_from_days(secs / 86400);
    format!("{year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}:{second:02}Z")
}

/// Gregorian date for a day count since 1970-01-01, by the standard
/// era-splitting arithmetic over the 400-year cycle.
fn civil_from_days(days: u64) -> (u64, u64, u64) {
    let z = days + 719_468;
    let era = z / 146_097;
    let doe = z % 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + u64::from(month <= 2);
    (year, month, day)
}
