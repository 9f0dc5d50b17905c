use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use oscguard_core::tuner::Metrics;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Common;
use crate::config::{self, FileConfig};
use crate::error::CliError;

/// Resolved common flags plus the parsed config file.
pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub file: FileConfig,
    pub started: Instant,
}

impl Context {
    pub fn new(common: &Common) -> Result<Self, CliError> {
        let file = config::load(common.config.as_deref())?;
        if !common.out.is_dir() {
            return Err(CliError::Usage(format!("output directory {} does not exist", common.out.display())));
        }
        Ok(Context { seed: common.seed.or(file.seed).unwrap_or(0), out: common.out.clone(), file, started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    /// Writes `{"results": .., "timing": ..}`; only `timing` may differ
    /// between identical runs.
    pub fn write_summary(&self, name: &str, results: Value, mut timing: Value) -> Result<(), CliError> {
        if let Value::Object(m) = &mut timing {
            m.insert("wall_s".into(), json!(self.started.elapsed().as_secs_f64()));
        }
        let doc = json!({ "results": results, "timing": timing });
        let mut text = serde_json::to_string_pretty(&doc).expect("json values serialize");
        text.push('\n');
        self.write_text(name, &text)
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// Metrics without the wall-clock fields.
pub fn scores(m: &Metrics) -> Value {
    let mut v = to_value(m);
    if let Value::Object(o) = &mut v {
        o.remove("training_time_s");
        o.remove("mean_prediction_time_s");
    }
    v
}

pub fn timing_of(m: &Metrics) -> Value {
    json!({ "training_time_s": m.training_time_s, "mean_prediction_time_s": m.mean_prediction_time_s })
}

pub fn require<'a>(flag: Option<&'a Path>, file: Option<&'a Path>, what: &str) -> Result<&'a Path, CliError> {
    flag.or(file).ok_or_else(|| CliError::Usage(format!("missing --{what} (or `{what}` in the config file)")))
}

pub fn flush(mut w: impl Write, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}
