//! CSV and plot-file emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Destination directory for a run's files.
#[derive(Clone, Debug)]
pub struct OutputSink {
    dir: PathBuf,
    plots: bool,
}

impl OutputSink {
    pub fn new(dir: impl Into<PathBuf>, plots: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, plots })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn plots_enabled(&self) -> bool {
        self.plots
    }

    /// Writes `header` and one line per row.
    pub fn write_csv<I>(&self, name: &str, header: &str, rows: I) -> Result<PathBuf>
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let path = self.dir.join(name);
        let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
        writeln!(out, "{header}")?;
        for row in rows {
            writeln!(out, "{}", row.as_ref())?;
        }
        out.flush()?;
        Ok(path)
    }

    /// Two-column whitespace-separated curve, written only when plots are on.
    pub fn write_curve(&self, name: &str, points: &[(f64, f64)]) -> Result<Option<PathBuf>> {
        if !self.plots {
            return Ok(None);
        }
        let path = self.dir.join(name);
        let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
        for (x, y) in points {
            writeln!(out, "{x:e} {y:e}")?;
        }
        out.flush()?;
        Ok(Some(path))
    }
}
