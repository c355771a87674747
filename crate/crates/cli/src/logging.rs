//! Line-delimited JSON log events on stderr, or plain warnings with `--quiet`.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{Level, Log, Metadata, Record};

struct Logger {
    json: bool,
    level: Level,
}

impl Log for Logger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = if self.json {
            let ts = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis());
            serde_json::json!({
                "ts_ms": ts as u64,
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            })
            .to_string()
        } else {
            format!(
                "{}: {}",
                record.level().as_str().to_ascii_lowercase(),
                record.args()
            )
        };
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

pub fn init(quiet: bool) {
    let (json, level) = if quiet {
        (false, Level::Warn)
    } else {
        (true, Level::Info)
    };
    if log::set_logger(Box::leak(Box::new(Logger { json, level }))).is_ok() {
        log::set_max_level(level.to_level_filter());
    }
}
