//! Reading RAPL counters from a Linux powercap tree:
//! `<root>/intel-rapl:N[/intel-rapl:N:M]/{name,energy_uj,max_energy_range_uj}`.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EnergyError;

pub const DEFAULT_ROOT: &str = "/sys/class/powercap";
pub const ROOT_ENV: &str = "PET_RAPL_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Package,
    Memory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    /// Zone name from the `name` file, e.g. `package-0` or `dram`.
    pub name: String,
    pub kind: DomainKind,
    pub dir: PathBuf,
    pub max_energy_uj: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterReading {
    pub energy_uj: u64,
    pub max_energy_uj: u64,
}

/// µJ consumed between two readings of a counter that wraps at `max`, and
/// whether a wrap happened. At most one wrap is assumed.
pub fn consumed_uj(start: u64, end: u64, max: u64) -> (u64, bool) {
    if end >= start {
        (end - start, false)
    } else {
        let c = (u128::from(end) + u128::from(max) - u128::from(start)) % u128::from(max.max(1));
        (c as u64, true)
    }
}

fn read_u64(path: &Path) -> Result<u64, EnergyError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::PermissionDenied => EnergyError::PermissionDenied { path: path.to_owned() },
        _ => EnergyError::Io { path: path.to_owned(), source: e },
    })?;
    text.trim().parse().map_err(|_| EnergyError::BadCounter { path: path.to_owned(), text: text.trim().to_owned() })
}

fn read_name(dir: &Path) -> String {
    fs::read_to_string(dir.join("name")).map(|s| s.trim().to_owned()).unwrap_or_default()
}

/// `intel-rapl:N` → depth 1, `intel-rapl:N:M` → depth 2.
fn zone_depth(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("intel-rapl:")?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.iter().all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit())) {
        Some(parts.len())
    } else {
        None
    }
}

fn sorted_entries(dir: &Path) -> Vec<(String, PathBuf)> {
    let mut out: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    out.sort();
    out
}

fn domain(dir: &Path, kind: DomainKind) -> Result<Domain, EnergyError> {
    let max_energy_uj = read_u64(&dir.join("max_energy_range_uj"))?;
    // make sure the counter itself is readable now rather than mid-run
    read_u64(&dir.join("energy_uj"))?;
    Ok(Domain { name: read_name(dir), kind, dir: dir.to_owned(), max_energy_uj })
}

/// Package zones and their `dram` subzones. Core/uncore subzones are already
/// included in the package counter and are skipped.
pub fn discover(root: &Path) -> Result<Vec<Domain>, EnergyError> {
    let unsupported = || EnergyError::UnsupportedPlatform { root: root.to_owned() };
    if !root.is_dir() {
        return Err(unsupported());
    }
    let mut domains = Vec::new();
    for (name, path) in sorted_entries(root) {
        if zone_depth(&name) != Some(1) {
            continue;
        }
        if !read_name(&path).starts_with("package") {
            continue;
        }
        domains.push(domain(&path, DomainKind::Package)?);
        for (sub, sub_path) in sorted_entries(&path) {
            if zone_depth(&sub) == Some(2) && read_name(&sub_path) == "dram" {
                domains.push(domain(&sub_path, DomainKind::Memory)?);
            }
        }
    }
    if domains.is_empty() {
        return Err(unsupported());
    }
    Ok(domains)
}

pub fn read(domain: &Domain) -> Result<CounterReading, EnergyError> {
    Ok(CounterReading { energy_uj: read_u64(&domain.dir.join("energy_uj"))?, max_energy_uj: domain.max_energy_uj })
}
