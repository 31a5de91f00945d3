use std::fs::File;
use std::path::{Path, PathBuf};

use crate::inference::{ChainDraws, SamplerStats};

use super::DataError;

/// Writes one chain as CSV: a header of coordinate names, then one row per
/// kept draw.
pub fn write_draws_csv(path: &Path, chain: &ChainDraws) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::io(path, e))?;
    w.write_record(&chain.names).map_err(|e| DataError::io(path, e))?;
    let mut row = Vec::with_capacity(chain.dim());
    for i in 0..chain.n_draws() {
        row.clear();
        row.extend(chain.draw(i).iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Reads a chain written by [`write_draws_csv`]. Sampler statistics are not
/// stored in the file and come back as defaults.
pub fn read_draws_csv(path: &Path, chain: usize) -> Result<ChainDraws, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let names: Vec<String> = r.headers().map_err(|e| DataError::io(path, e))?.iter().map(String::from).collect();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| DataError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(DataError::parse(path, line, format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        for raw in rec.iter() {
            values.push(raw.parse::<f64>().map_err(|e| DataError::parse(path, line, format!("`{raw}`: {e}")))?);
        }
    }
    Ok(ChainDraws { chain, names, values, stats: SamplerStats::default() })
}

pub(crate) fn chain_file(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("draws_chain{chain}.csv"))
}

/// Writes `draws_chain<k>.csv` for every chain into `dir`.
pub fn export_draws(dir: &Path, chains: &[ChainDraws]) -> Result<Vec<PathBuf>, DataError> {
    if chains.is_empty() {
        return Err(DataError::invalid(dir, "no chains to export"));
    }
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    chains
        .iter()
        .map(|c| {
            let path = chain_file(dir, c.chain);
            write_draws_csv(&path, c)?;
            Ok(path)
        })
        .collect()
}

/// Reads every `draws_chain<k>.csv` in `dir`, in chain order.
pub fn import_draws(dir: &Path) -> Result<Vec<ChainDraws>, DataError> {
    let mut out = Vec::new();
    while chain_file(dir, out.len()).exists() {
        let k = out.len();
        out.push(read_draws_csv(&chain_file(dir, k), k)?);
    }
    if out.is_empty() {
        return Err(DataError::invalid(dir, "no draws_chain<k>.csv files found"));
    }
    if out.iter().any(|c| c.names != out[0].names) {
        return Err(DataError::invalid(dir, "chains have different columns"));
    }
    Ok(out)
}
