use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::peppr::read_curves_csv;
use crate::report::{meta_value, read_meta};
use crate::synthdata::{load_manifest, Split};

/// Artifacts a run directory needs before it can be summarized, in the
/// order they are checked.
pub const REQUIRED_ARTIFACTS: [&str; 4] = [
    "data/manifest.csv",
    "train/history.csv",
    "aggregate/overall.axf",
    "peppr/curves.csv",
];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn walk(root: &Path, dir: &Path, skip: &[&str], out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        let rel = p.strip_prefix(root).expect("under root");
        if skip.iter().any(|s| rel == Path::new(s)) {
            continue;
        }
        if p.is_dir() {
            walk(root, &p, skip, out)?;
        } else {
            out.push(rel.to_path_buf());
        }
    }
    Ok(())
}

/// Sorted `(relative path, size, fnv1a-64)` of every file under `dir`,
/// skipping the top-level entries named in `skip`.
pub fn file_inventory(dir: &Path, skip: &[&str]) -> Result<Vec<(String, u64, u64)>> {
    let mut files = Vec::new();
    walk(dir, dir, skip, &mut files)?;
    files
        .into_iter()
        .map(|rel| {
            let p = dir.join(&rel);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let name = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            Ok((name, bytes.len() as u64, fnv1a(&bytes)))
        })
        .collect()
}

/// Plain-text report of a completed run directory.
pub fn summarize_run(dir: &Path) -> Result<String> {
    for a in REQUIRED_ARTIFACTS {
        if !dir.join(a).is_file() {
            return Err(Error::Prerequisite(format!(
                "{} not found",
                dir.join(a).display()
            )));
        }
    }
    let manifest = load_manifest(&dir.join("data/manifest.csv"))?;
    let history_path = dir.join("train/history.csv");
    let history = fs::read_to_string(&history_path).map_err(|e| Error::io(&history_path, e))?;
    let rows = read_curves_csv(&dir.join("peppr/curves.csv"))?;

    let mut labels: Vec<String> = Vec::new();
    for r in &rows {
        if !labels.contains(&r.label) {
            labels.push(r.label.clone());
        }
    }

    let mut s = String::new();
    writeln!(s, "# run summary").unwrap();
    writeln!(s, "labels: {}", labels.join(",")).unwrap();
    let count = |sp| manifest.records.iter().filter(|r| r.split == sp).count();
    writeln!(
        s,
        "samples: train={} val={} test={}",
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    )
    .unwrap();

    writeln!(s, "\n## training history").unwrap();
    for line in history.lines() {
        writeln!(s, "{line}").unwrap();
    }

    writeln!(s, "\n## baseline auc").unwrap();
    for l in &labels {
        if let Some(r) = rows.iter().find(|r| &r.label == l) {
            writeln!(s, "{l}: {:.6}", r.baseline_auc).unwrap();
        }
    }

    writeln!(s, "\n## global explanations").unwrap();
    for l in &labels {
        let p = dir.join(format!("aggregate/label_{l}.meta"));
        if p.is_file() {
            let m = read_meta(&p)?;
            writeln!(
                s,
                "{l}: n_positives={} weight_sum={}",
                meta_value(&m, "n_positives").unwrap_or("?"),
                meta_value(&m, "weight_sum").unwrap_or("?")
            )
            .unwrap();
        }
    }

    writeln!(s, "\n## peppr").unwrap();
    writeln!(
        s,
        "direction,quantile,label,auc,retained_importance,delta_vs_baseline"
    )
    .unwrap();
    for r in &rows {
        writeln!(
            s,
            "{},{:.2},{},{:.6},{:.6},{:+.6}",
            r.direction,
            r.quantile,
            r.label,
            r.auc,
            r.retained_importance,
            r.auc - r.baseline_auc
        )
        .unwrap();
    }

    writeln!(s, "\n## files").unwrap();
    writeln!(s, "dir,count,bytes,digest").unwrap();
    let inv = file_inventory(dir, &["report"])?;
    let mut i = 0;
    while i < inv.len() {
        let top = inv[i].0.split('/').next().unwrap_or("").to_string();
        let (mut count, mut bytes, mut digest) = (0usize, 0u64, Vec::new());
        while i < inv.len() && inv[i].0.split('/').next() == Some(top.as_str()) {
            count += 1;
            bytes += inv[i].1;
            digest.extend_from_slice(inv[i].0.as_bytes());
            digest.extend_from_slice(&inv[i].2.to_le_bytes());
            i += 1;
        }
        writeln!(s, "{top},{count},{bytes},{:016x}", fnv1a(&digest)).unwrap();
    }
    Ok(s)
}
