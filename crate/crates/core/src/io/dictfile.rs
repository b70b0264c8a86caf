//! Dictionary CSV files (one atom per column, optional label header) with a
//! JSON sidecar, and region files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hsi::sidecar_path;
use super::write_atomic;
use crate::dictionary::{CountConstraint, Dictionary, DictionarySource, PixelCoord, RegionSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySidecar {
    pub id: String,
    pub name: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_coords: Option<Vec<PixelCoord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<CountConstraint>,
}

/// Parses a numeric CSV with one column per atom. A first row that does not
/// parse as numbers is taken as atom labels.
pub fn parse_columns_csv(text: &str) -> Result<(Matrix, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("csv row {i}: {e}")))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("csv row {i} column {bad}: non-finite value")));
                }
                rows.push(values)
            }
            Err(_) if i == 0 => labels = Some(record.iter().map(|s| s.trim().to_string()).collect()),
            Err(e) => return Err(Error::Parse(format!("csv row {i}: {e}"))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("csv has no numeric rows".into()));
    }
    let cols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::Parse(format!("csv row {i} has {} columns, expected {cols}", r.len())));
    }
    if let Some(l) = &labels {
        if l.len() != cols {
            return Err(Error::Parse(format!("{} labels for {cols} columns", l.len())));
        }
    }
    Ok((Matrix::from_rows(&rows).map_err(|e| Error::Parse(e.to_string()))?, labels))
}

/// Inverse of [`parse_columns_csv`]; values use shortest round-trip formatting.
pub fn columns_to_csv(m: &Matrix, labels: Option<&[String]>) -> String {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    if let Some(labels) = labels {
        writer.write_record(labels).expect("in-memory write");
    }
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| m.get(i, j).to_string()).collect();
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn source_tag(source: &DictionarySource) -> &'static str {
    match source {
        DictionarySource::ExternalLibrary => "external-library",
        DictionarySource::ImageRegion => "image-region",
        DictionarySource::Augmented { .. } => "augmented",
    }
}

/// Loads a dictionary CSV and its sidecar (`foo.csv` → `foo.json`). Without a
/// sidecar the file stem becomes the id.
pub fn load_dictionary(path: &Path) -> Result<(Dictionary, Option<CountConstraint>)> {
    let text = super::read_text(path)?;
    let (atoms, labels) = parse_columns_csv(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let side = sidecar_path(path);
    let sidecar: Option<DictionarySidecar> = if side.exists() {
        let text = super::read_text(&side)?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", side.display())))?)
    } else {
        None
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dictionary").to_string();
    let mut dict = Dictionary::external(stem, atoms);
    dict.atom_labels = labels;
    let mut constraint = None;
    if let Some(sc) = sidecar {
        dict.id = sc.id;
        dict.name = sc.name;
        dict.source = match sc.source.as_str() {
            "external-library" => DictionarySource::ExternalLibrary,
            "image-region" => DictionarySource::ImageRegion,
            // Augmented dictionaries are rebuilt by normalization; on disk they are plain atoms.
            "augmented" => DictionarySource::ExternalLibrary,
            other => return Err(Error::Parse(format!("{}: unknown source `{other}`", side.display()))),
        };
        if let Some(p) = &sc.pixel_coords {
            if p.len() != dict.len() {
                return Err(Error::Parse(format!(
                    "{}: {} pixel coords for {} atoms",
                    side.display(),
                    p.len(),
                    dict.len()
                )));
            }
        }
        dict.pixels = sc.pixel_coords;
        constraint = sc.constraint;
    }
    Ok((dict, constraint))
}

pub fn save_dictionary(dict: &Dictionary, constraint: Option<CountConstraint>, path: &Path) -> Result<()> {
    write_atomic(path, columns_to_csv(&dict.atoms, dict.atom_labels.as_deref()).as_bytes())?;
    let source_ids = match &dict.source {
        DictionarySource::Augmented { parts } => Some(parts.iter().map(|p| p.source_id.clone()).collect()),
        _ => None,
    };
    let sidecar = DictionarySidecar {
        id: dict.id.clone(),
        name: dict.name.clone(),
        source: source_tag(&dict.source).into(),
        pixel_coords: dict.pixels.clone(),
        source_ids,
        constraint,
    };
    write_atomic(
        &sidecar_path(path),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes").as_bytes(),
    )?;
    Ok(())
}

pub fn parse_regions(text: &str) -> Result<Vec<RegionSpec>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("region file: {e}")))
}

pub fn load_regions(path: &Path) -> Result<Vec<RegionSpec>> {
    parse_regions(&super::read_text(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
