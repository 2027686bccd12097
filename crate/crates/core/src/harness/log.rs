use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{io_err, HarnessError};

/// Newline-delimited JSON records. A log without a file discards records.
#[derive(Debug, Default)]
pub struct NdjsonLog {
    out: Option<(BufWriter<File>, std::path::PathBuf)>,
    records: u64,
}

impl NdjsonLog {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            out: Some((BufWriter::new(file), path.to_path_buf())),
            records: 0,
        })
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn record<T: Serialize>(&mut self, value: &T) -> Result<(), HarnessError> {
        self.records += 1;
        if let Some((w, path)) = &mut self.out {
            serde_json::to_writer(&mut *w, value)?;
            w.write_all(b"\n").map_err(io_err(path.as_path()))?;
        }
        Ok(())
    }

    /// Records seen so far, written or not.
    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn flush(&mut self) -> Result<(), HarnessError> {
        if let Some((w, path)) = &mut self.out {
            w.flush().map_err(io_err(path.as_path()))?;
        }
        Ok(())
    }
}
