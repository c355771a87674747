//! JSON-lines dataset cache: one header line with the spec, then one line
//! per sample tagged with its domain index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{generate, DomainData, EnvironmentSpec, Sample};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    spec: EnvironmentSpec,
    num_domains: usize,
}

#[derive(Serialize, Deserialize)]
struct Line {
    domain: usize,
    x: Vec<f64>,
    y: usize,
}

/// Stable file stem for a spec (FNV-1a over its JSON form).
pub fn cache_key(spec: &EnvironmentSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{}-{h:016x}", spec.kind.name())
}

pub fn write_jsonl(path: &Path, spec: &EnvironmentSpec, domains: &[DomainData]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(
        &mut w,
        &Header {
            spec: spec.clone(),
            num_domains: domains.len(),
        },
    )?;
    w.write_all(b"\n").map_err(io)?;
    for d in domains {
        for s in d.samples() {
            serde_json::to_writer(
                &mut w,
                &Line {
                    domain: d.index(),
                    x: s.x.clone(),
                    y: s.y,
                },
            )?;
            w.write_all(b"\n").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_jsonl(path: &Path) -> Result<(EnvironmentSpec, Vec<DomainData>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first)?;
    let mut per: Vec<Vec<Sample>> = vec![Vec::new(); header.num_domains];
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line)?;
        let slot = per.get_mut(l.domain).ok_or_else(|| {
            Error::Config(format!(
                "{}: domain {} out of range",
                path.display(),
                l.domain
            ))
        })?;
        slot.push(Sample::new(l.x, l.y));
    }
    let k = header.spec.num_classes();
    let domains = per
        .into_iter()
        .enumerate()
        .map(|(i, s)| DomainData::new(i, s, k))
        .collect::<Result<_>>()?;
    Ok((header.spec, domains))
}

/// Generates the dataset, reusing `<dir>/<cache_key>.jsonl` when present.
pub fn generate_cached(spec: &EnvironmentSpec, dir: Option<&Path>) -> Result<Vec<DomainData>> {
    let Some(dir) = dir else {
        return generate(spec);
    };
    let path: PathBuf = dir.join(format!("{}.jsonl", cache_key(spec)));
    if path.exists() {
        let (cached, domains) = read_jsonl(&path)?;
        if &cached == spec {
            return Ok(domains);
        }
    }
    let domains = generate(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&path, spec, &domains)?;
    Ok(domains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic_data::DatasetKind;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = EnvironmentSpec::new(DatasetKind::EvolCircle, 3);
        spec.num_domains = 4;
        spec.samples_per_domain = 10;
        let first = generate_cached(&spec, Some(dir.path())).unwrap();
        let path = dir.path().join(format!("{}.jsonl", cache_key(&spec)));
        assert!(path.exists());
        let second = generate_cached(&spec, Some(dir.path())).unwrap();
        assert_eq!(first, second);
        let (s, d) = read_jsonl(&path).unwrap();
        assert_eq!(s, spec);
        assert_eq!(d, first);
    }

    #[test]
    fn key_depends_on_spec() {
        let a = EnvironmentSpec::new(DatasetKind::RPlate, 1);
        let b = EnvironmentSpec::new(DatasetKind::RPlate, 2);
        assert_ne!(cache_key(&a), cache_key(&b));
        assert_eq!(cache_key(&a), cache_key(&a.clone()));
    }
}
