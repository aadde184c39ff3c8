//! Merging of result tables into one aligned comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use musefm_core::datastore::crc64;

use crate::commands::RESULT_HEADER;
use crate::{CliError, CliResult};

/// One value per method for every `(task, metric, snr)` point found in
/// `inputs`. Methods become columns in order of first appearance; missing
/// points are left empty. The config hash column covers all input hashes.
pub fn report(inputs: &[PathBuf], out: &Path) -> CliResult<()> {
    let mut methods: Vec<String> = Vec::new();
    let mut hashes: Vec<String> = Vec::new();
    let mut points: BTreeMap<(String, String, u64), (f64, BTreeMap<String, String>)> = BTreeMap::new();
    for path in inputs {
        if !path.is_file() {
            return Err(CliError::Invalid(format!("no result table at {}", path.display())));
        }
        let mut rdr = csv::Reader::from_path(path)?;
        if rdr.headers()?.iter().ne(RESULT_HEADER) {
            return Err(CliError::Invalid(format!("{} is not a baseline or eval table", path.display())));
        }
        for rec in rdr.records() {
            let rec = rec?;
            let snr: f64 = rec[2].parse().map_err(|_| CliError::Invalid(format!("bad SNR '{}' in {}", &rec[2], path.display())))?;
            let method = rec[1].to_string();
            if !methods.contains(&method) {
                methods.push(method.clone());
            }
            if !hashes.iter().any(|h| h == &rec[6]) {
                hashes.push(rec[6].to_string());
            }
            // order by SNR value through its monotone bit pattern
            let key = (rec[0].to_string(), rec[3].to_string(), ordered(snr));
            points.entry(key).or_insert_with(|| (snr, BTreeMap::new())).1.insert(method, rec[4].to_string());
        }
    }
    hashes.sort();
    let hash = format!("{:016x}", crc64(hashes.join("\n").as_bytes()));
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("report.csv"))?;
    let mut header = vec!["task".to_string(), "metric".to_string(), "snr_db".to_string()];
    header.extend(methods.iter().cloned());
    header.push("config_hash".into());
    w.write_record(&header)?;
    for ((task, metric, _), (snr, values)) in &points {
        let mut row = vec![task.clone(), metric.clone(), snr.to_string()];
        row.extend(methods.iter().map(|m| values.get(m).cloned().unwrap_or_default()));
        row.push(hash.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}
