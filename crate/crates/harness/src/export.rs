//! JSON archives and CSV tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gmc_core::estimators::{BlockValue, Statistic};

use crate::config::Format;
use crate::ensemble::EnsembleResult;
use crate::error::{io_err, HarnessError, Result};
use crate::report::block_statistics;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| HarnessError::Json { path: path.into(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn load_json(path: &Path) -> Result<EnsembleResult> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
}

/// `block_lo,block_hi,stat` rows.
pub fn write_blocks_csv<W: Write>(blocks: &[BlockValue<f64>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "block_lo,block_hi,stat")?;
    for b in blocks {
        writeln!(w, "{},{},{}", b.lo, b.hi, b.value)?;
    }
    Ok(())
}

/// Ensemble mean spectrum as `n,re,im,abs2` rows (`abs2` is the mean of `|mu^(n)|^2`).
pub fn write_spectrum_csv<W: Write>(result: &EnsembleResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,re,im,abs2")?;
    for n in 1..=result.moments.n_max() {
        let z = result.moments.mean(n);
        writeln!(w, "{},{},{},{}", n, z.re, z.im, result.moments.mean_abs2(n))?;
    }
    Ok(())
}

pub fn write_csv_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// JSON archive, or the per-block `log |mu^(n)|^2` statistic as CSV.
pub fn export(result: &EnsembleResult, format: Format, statistic: Statistic, path: &Path) -> Result<()> {
    match format {
        Format::Json => write_json(result, path),
        Format::Csv => {
            let blocks = block_statistics(result, statistic)?;
            write_csv_file(path, |w| write_blocks_csv(&blocks, w))
        }
    }
}
