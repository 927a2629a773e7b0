//! Data directory conventions: input tables live in `<dir>/tables/` (or in
//! `<dir>` itself when it has no `tables/`), gold labels in
//! `<dir>/gold.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chartsel_core::table::{parse_table_report, split_series, TableFormat};
use chartsel_core::{DataTable, Error, PlotType};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TABLES_DIR: &str = "tables";
pub const GOLD_FILE: &str = "gold.json";

/// Reads one table file and splits it into two-column series. A table that
/// already has two columns keeps its id.
pub fn load_table(path: &Path) -> Result<Vec<DataTable>, CliError> {
    let format = TableFormat::from_extension(path)
        .ok_or_else(|| Error::MalformedInput(format!("{}: expected a .csv or .json file", path.display())))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::MalformedInput(format!("{}: unusable file name", path.display())))?;
    let parsed = parse_table_report(id, &bytes, format)?;
    if !parsed.dropped.is_empty() {
        log::warn!("{}: dropped non-numeric columns {:?}", path.display(), parsed.dropped);
    }
    let t = parsed.table;
    if t.num_columns() == 2 {
        return Ok(vec![t]);
    }
    if t.num_columns() > chartsel_core::table::MAX_SERIES + 1 {
        log::warn!("{}: only the first {} series are used", path.display(), chartsel_core::table::MAX_SERIES);
    }
    Ok(split_series(&t))
}

pub fn table_dir(data_dir: &Path) -> PathBuf {
    let sub = data_dir.join(TABLES_DIR);
    if sub.is_dir() {
        sub
    } else {
        data_dir.to_path_buf()
    }
}

/// Table files of a directory, sorted by name.
pub fn table_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && TableFormat::from_extension(&path).is_some() && !is_gold(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn is_gold(path: &Path) -> bool {
    path.file_name().is_some_and(|n| n == GOLD_FILE)
}

/// Every series of every table file under `data_dir`.
pub fn load_tables(data_dir: &Path) -> Result<Vec<DataTable>, CliError> {
    let dir = table_dir(data_dir);
    let files = table_files(&dir)?;
    if files.is_empty() {
        return Err(Error::MalformedInput(format!("no .csv or .json tables in {}", dir.display())).into());
    }
    let mut out = Vec::new();
    for f in files {
        out.extend(load_table(&f)?);
    }
    Ok(out)
}

/// A gold entry is one plot type or a set of tied ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldEntry {
    One(PlotType),
    Tied(BTreeSet<PlotType>),
}

pub fn read_gold(path: &Path) -> Result<BTreeMap<String, BTreeSet<PlotType>>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, GoldEntry> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::MalformedInput(format!("{}: {e}", path.display())))?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let set = match v {
                GoldEntry::One(p) => [p].into(),
                GoldEntry::Tied(s) => s,
            };
            (k, set)
        })
        .collect())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}
