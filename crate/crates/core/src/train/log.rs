use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::Phase;
use crate::{Error, Result};

pub const LOG_HEADER: &str = "epoch,phase,split,landmark_term,emotion_term,total,acc7,acc3,nme";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// One line of the metric log. Emotion fields are `None` when the emotion head did
/// not run (phase A) and are written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub phase: Phase,
    pub split: Split,
    pub landmark_term: f64,
    pub emotion_term: Option<f64>,
    pub total: f64,
    pub acc7: Option<f64>,
    pub acc3: Option<f64>,
    pub nme: f64,
}

impl LogRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{:.8},{},{:.8},{},{},{:.8}",
            self.epoch,
            self.phase.name(),
            self.split.name(),
            self.landmark_term,
            opt(self.emotion_term),
            self.total,
            opt(self.acc7),
            opt(self.acc3),
            self.nme
        )
        .expect("writing to a String");
        s
    }
}

/// Append-only CSV writer, flushed after every epoch.
pub(crate) struct MetricLog {
    path: PathBuf,
    file: File,
}

impl MetricLog {
    /// Truncates and writes the header, or appends when `resume` is set.
    pub(crate) fn open(path: &Path, resume: bool) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut opts = OpenOptions::new();
        if resume {
            opts.append(true).create(true);
        } else {
            opts.write(true).create(true).truncate(true);
        }
        let mut file = opts.open(path).map_err(|e| Error::io(path, e))?;
        let fresh = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        if fresh {
            writeln!(file, "{LOG_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(MetricLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub(crate) fn write_epoch(&mut self, rows: &[LogRow]) -> Result<()> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&r.to_csv_line());
            text.push('\n');
        }
        self.file
            .write_all(text.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}
