//! Manifest CSV and on-disk dataset layout.
//!
//! ```text
//! sample_id,subject_id,laterality,split,labels,image_path
//! s00000_l,p00000,left,train,0;1;0,images/s00000_l.axf
//! ```
//!
//! Tokens are matched exactly. Image paths are relative to the manifest's
//! directory.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{Dataset, DatasetManifest, SampleRecord};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::report;

pub const HEADER: [&str; 6] = [
    "sample_id",
    "subject_id",
    "laterality",
    "split",
    "labels",
    "image_path",
];

fn parse_labels(s: &str) -> std::result::Result<Vec<bool>, String> {
    if s.is_empty() {
        return Err("empty label list".into());
    }
    s.split(';')
        .map(|t| match t {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(format!("label flag {t:?} is not 0 or 1")),
        })
        .collect()
}

fn format_labels(labels: &[bool]) -> String {
    labels
        .iter()
        .map(|&b| if b { "1" } else { "0" })
        .collect::<Vec<_>>()
        .join(";")
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub(crate) fn parse_manifest(bytes: &[u8], name: &str) -> Result<DatasetManifest> {
    let perr = |line: u64, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(perr(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut n_labels = None;
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            perr(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let laterality = row[2].parse().map_err(|m| perr(line, m))?;
        let split = row[3].parse().map_err(|m| perr(line, m))?;
        let labels = parse_labels(&row[4]).map_err(|m| perr(line, m))?;
        if *n_labels.get_or_insert(labels.len()) != labels.len() {
            return Err(perr(line, "inconsistent number of labels".into()));
        }
        if row[0].is_empty() || row[1].is_empty() {
            return Err(perr(line, "empty sample or subject id".into()));
        }
        if !ids.insert(row[0].to_string()) {
            return Err(perr(line, format!("duplicate sample_id {:?}", &row[0])));
        }
        records.push(SampleRecord {
            sample_id: row[0].to_string(),
            subject_id: row[1].to_string(),
            laterality,
            split,
            labels,
            image_path: row[5].to_string(),
        });
    }
    let manifest = DatasetManifest { records };
    manifest.check_subject_exclusivity()?;
    Ok(manifest)
}

pub(crate) fn manifest_to_bytes(manifest: &DatasetManifest) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Contract(format!("manifest serialization: {e}"));
    w.write_record(HEADER).map_err(csv_err)?;
    for r in &manifest.records {
        w.write_record([
            r.sample_id.as_str(),
            r.subject_id.as_str(),
            r.laterality.token(),
            r.split.token(),
            &format_labels(&r.labels),
            r.image_path.as_str(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Contract(format!("manifest serialization: {e}")))
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let bytes = manifest_to_bytes(manifest)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.csv` and every image under `dir`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    for (rec, img) in dataset.manifest.records.iter().zip(&dataset.images) {
        let path = dir.join(&rec.image_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        report::write_image(img, &path)?;
    }
    save_manifest(&dataset.manifest, &dir.join("manifest.csv"))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = load_manifest(&dir.join("manifest.csv"))?;
    let images = manifest
        .records
        .iter()
        .map(|r| report::read_image(&dir.join(&r.image_path)))
        .collect::<Result<Vec<Image>>>()?;
    Ok(Dataset { manifest, images })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{Laterality, Split};

    fn sample() -> DatasetManifest {
        DatasetManifest {
            records: vec![
                SampleRecord {
                    sample_id: "a".into(),
                    subject_id: "A".into(),
                    laterality: Laterality::Left,
                    labels: vec![true, false, false],
                    split: Split::Train,
                    image_path: "images/a.axf".into(),
                },
                SampleRecord {
                    sample_id: "b,odd".into(),
                    subject_id: "B".into(),
                    laterality: Laterality::Right,
                    labels: vec![false, false, true],
                    split: Split::Test,
                    image_path: "images/b.pgm".into(),
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let bytes = manifest_to_bytes(&m).unwrap();
        assert!(!bytes.contains(&b'\r'));
        assert_eq!(parse_manifest(&bytes, "m").unwrap(), m);
    }

    #[test]
    fn header_only_is_empty() {
        let m = parse_manifest(
            b"sample_id,subject_id,laterality,split,labels,image_path\n",
            "m",
        )
        .unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn trailing_space_in_split_names_the_line() {
        let text = "sample_id,subject_id,laterality,split,labels,image_path\n\
                    a,A,left,train,1;0,x.axf\n\
                    b,B,left,TEST ,0;1,y.axf\n";
        match parse_manifest(text.as_bytes(), "m") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_bad_flags_are_rejected() {
        let dup = "sample_id,subject_id,laterality,split,labels,image_path\n\
                   a,A,left,train,1,x.axf\na,A,left,train,0,y.axf\n";
        assert!(matches!(
            parse_manifest(dup.as_bytes(), "m"),
            Err(Error::Parse { line: 3, .. })
        ));
        let flag = "sample_id,subject_id,laterality,split,labels,image_path\n\
                    a,A,left,train,2,x.axf\n";
        assert!(matches!(
            parse_manifest(flag.as_bytes(), "m"),
            Err(Error::Parse { line: 2, .. })
        ));
        let short = "sample_id,subject_id,laterality,split,labels,image_path\na,A,left\n";
        assert!(matches!(
            parse_manifest(short.as_bytes(), "m"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn subject_straddling_splits_is_rejected() {
        let text = "sample_id,subject_id,laterality,split,labels,image_path\n\
                    a,A,left,train,1,x.axf\nb,A,right,val,0,y.axf\n";
        assert!(matches!(
            parse_manifest(text.as_bytes(), "m"),
            Err(Error::Contract(_))
        ));
    }
}
