//! Line-oriented `LEVEL key=value ...` logging to stderr.
//!
//! No timestamps: runs are deterministic, so two invocations of the same
//! command should produce byte-identical logs.

use log::{LevelFilter, Log, Metadata, Record};

struct LineLogger {
    max: LevelFilter,
}

impl Log for LineLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.max
    }

    fn log(&self, record: &Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{} {}", record.level(), record.args());
        }
    }

    fn flush(&self) {}
}

/// Install the logger; harmless to call more than once.
pub fn init_logging(max: LevelFilter) {
    if log::set_boxed_logger(Box::new(LineLogger { max })).is_ok() {
        log::set_max_level(max);
    }
}
