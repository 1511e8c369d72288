//! Minimal stderr logger controlled by the `ITRACK_LOG` environment
//! variable: `quiet`, `info` (default), or `debug`.

pub struct Log {
    level: u8,
}

impl Log {
    pub fn from_env() -> Self {
        let level = match std::env::var("ITRACK_LOG").as_deref() {
            Ok("quiet") => 0,
            Ok("debug") => 2,
            _ => 1,
        };
        Log { level }
    }

    pub fn info(&self, msg: &str) {
        if self.level >= 1 {
            eprintln!("{msg}");
        }
    }

    pub fn debug(&self, msg: &str) {
        if self.level >= 2 {
            eprintln!("{msg}");
        }
    }
}
