use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::dictionary::PixelCoord;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hyperspectral cube stored band-sequential: `data[b·h·w + row·w + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub data: Vec<f32>,
    pub wavelengths: Option<Vec<f64>>,
}

/// JSON sidecar shared by the CSV and raw encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsiHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    #[serde(default = "default_interleave")]
    pub interleave: String,
}

fn default_dtype() -> String {
    "float32".into()
}

fn default_interleave() -> String {
    "bsq".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsiFormat {
    Csv,
    Raw,
}

impl HsiFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(HsiFormat::Csv),
            Some("raw" | "bsq" | "bin" | "img") => Ok(HsiFormat::Raw),
            _ => Err(Error::Parse(format!(
                "cannot infer cube format from `{}` (expected .csv or .raw)",
                path.display()
            ))),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        let cube = HsiCube {
            height,
            width,
            bands,
            data,
            wavelengths: None,
        };
        cube.validate()?;
        Ok(cube)
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(Error::Parse("cube dimensions must be positive".into()));
        }
        let expected = self.height * self.width * self.bands;
        if self.data.len() != expected {
            return Err(Error::Parse(format!(
                "cube holds {} values, expected {}x{}x{} = {expected}",
                self.data.len(),
                self.height,
                self.width,
                self.bands
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("non-finite value at index {pos}")));
        }
        if let Some(w) = &self.wavelengths {
            if w.len() != self.bands {
                return Err(Error::Parse(format!("{} wavelengths for {} bands", w.len(), self.bands)));
            }
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn header(&self) -> HsiHeader {
        HsiHeader {
            height: self.height,
            width: self.width,
            bands: self.bands,
            wavelengths: self.wavelengths.clone(),
            dtype: default_dtype(),
            interleave: default_interleave(),
        }
    }

    pub fn value(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.pixels() + row * self.width + col]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[band * n..(band + 1) * n]
    }

    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.value(b, row, col) as f64).collect()
    }

    /// `bands × (height·width)`, column `row·width + col` holding that pixel.
    pub fn to_matrix(&self) -> Matrix {
        let (m, n) = (self.bands, self.pixels());
        let mut data = vec![0.0; m * n];
        for b in 0..m {
            for (j, &v) in self.band(b).iter().enumerate() {
                data[j * m + b] = v as f64;
            }
        }
        Matrix::from_col_major(m, n, data).expect("validated cube is finite and non-empty")
    }

    pub fn from_matrix(m: &Matrix, height: usize, width: usize) -> Result<Self> {
        if height * width != m.cols() {
            return Err(Error::dims("HsiCube::from_matrix", format!("{height}x{width} pixels"), m.cols()));
        }
        let n = m.cols();
        let mut data = vec![0f32; m.rows() * n];
        for j in 0..n {
            for (b, &v) in m.column(j).iter().enumerate() {
                data[b * n + j] = v as f32;
            }
        }
        HsiCube::new(height, width, m.rows(), data)
    }

    pub fn pixel_of(&self, column: usize) -> PixelCoord {
        PixelCoord::of_column(column, self.width)
    }

    fn check_header(header: &HsiHeader) -> Result<()> {
        if header.dtype != "float32" {
            return Err(Error::Parse(format!("unsupported dtype `{}` (expected float32)", header.dtype)));
        }
        if header.interleave != "bsq" {
            return Err(Error::Parse(format!("unsupported interleave `{}` (expected bsq)", header.interleave)));
        }
        Ok(())
    }

    pub fn from_raw_bytes(header: &HsiHeader, bytes: &[u8]) -> Result<Self> {
        Self::check_header(header)?;
        let expected = header.height * header.width * header.bands * 4;
        if bytes.len() != expected {
            return Err(Error::Parse(format!(
                "raw payload has {} bytes, header {}x{}x{} implies {expected} bytes",
                bytes.len(),
                header.height,
                header.width,
                header.bands
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let cube = HsiCube {
            height: header.height,
            width: header.width,
            bands: header.bands,
            data,
            wavelengths: header.wavelengths.clone(),
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// CSV body: one row per band, one column per pixel in flatten order.
    pub fn from_csv_str(header: &HsiHeader, text: &str) -> Result<Self> {
        Self::check_header(header)?;
        let n = header.height * header.width;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut data = Vec::with_capacity(n * header.bands);
        let mut rows = 0;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(format!("csv row {i}: {e}")))?;
            if record.len() != n {
                return Err(Error::Parse(format!(
                    "csv row {i} has {} columns, expected h·w = {n}",
                    record.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f32 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("csv row {i} column {j}: `{field}` is not a number")))?;
                data.push(v);
            }
            rows += 1;
        }
        if rows != header.bands {
            return Err(Error::Parse(format!("csv has {rows} rows, expected {} bands", header.bands)));
        }
        let cube = HsiCube {
            height: header.height,
            width: header.width,
            bands: header.bands,
            data,
            wavelengths: header.wavelengths.clone(),
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for b in 0..self.bands {
            let row: Vec<String> = self.band(b).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn load_hsi(path: &Path, format: Option<HsiFormat>) -> Result<HsiCube> {
    let format = match format {
        Some(f) => f,
        None => HsiFormat::from_path(path)?,
    };
    let header_path = sidecar_path(path);
    let header_text = std::fs::read_to_string(&header_path)
        .map_err(|e| Error::Parse(format!("reading header `{}`: {e}", header_path.display())))?;
    let header: HsiHeader = serde_json::from_str(&header_text)
        .map_err(|e| Error::Parse(format!("header `{}`: {e}", header_path.display())))?;
    match format {
        HsiFormat::Raw => HsiCube::from_raw_bytes(&header, &super::read_bytes(path)?),
        HsiFormat::Csv => HsiCube::from_csv_str(&header, &super::read_text(path)?),
    }
}

pub fn save_hsi(cube: &HsiCube, path: &Path, format: HsiFormat) -> Result<()> {
    let header = serde_json::to_string_pretty(&cube.header()).expect("header serializes");
    match format {
        HsiFormat::Raw => write_atomic(path, &cube.to_raw_bytes())?,
        HsiFormat::Csv => write_atomic(path, cube.to_csv_string().as_bytes())?,
    }
    write_atomic(&sidecar_path(path), header.as_bytes())?;
    Ok(())
}
