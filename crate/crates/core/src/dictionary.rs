//! Dictionaries of candidate spectra, per-dictionary atom-count rules, and the
//! reduction of lower bounds to exact counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, InfeasibilityReport, Issue, Result};
use crate::io::HsiCube;
use crate::linalg::Matrix;

/// Image position of a pixel, serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct PixelCoord {
    pub row: usize,
    pub col: usize,
}

impl PixelCoord {
    pub fn new(row: usize, col: usize) -> Self {
        PixelCoord { row, col }
    }

    /// Column index in the flattened `bands × (height·width)` matrix.
    pub fn column(self, width: usize) -> usize {
        self.row * width + self.col
    }

    pub fn of_column(column: usize, width: usize) -> Self {
        PixelCoord::new(column / width, column % width)
    }
}

impl From<[usize; 2]> for PixelCoord {
    fn from([row, col]: [usize; 2]) -> Self {
        PixelCoord { row, col }
    }
}

impl From<PixelCoord> for [usize; 2] {
    fn from(p: PixelCoord) -> Self {
        [p.row, p.col]
    }
}

/// A contiguous block of an augmented dictionary copied from one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedPart {
    /// Index of the source in the dictionary list passed to normalization.
    pub source: usize,
    pub source_id: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DictionarySource {
    ExternalLibrary,
    ImageRegion,
    Augmented { parts: Vec<AugmentedPart> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub id: String,
    pub name: String,
    /// One atom per column.
    pub atoms: Matrix,
    pub source: DictionarySource,
    /// Image position of each atom, when atoms were taken from an image.
    pub pixels: Option<Vec<PixelCoord>>,
    pub atom_labels: Option<Vec<String>>,
}

impl Dictionary {
    pub fn external(id: impl Into<String>, atoms: Matrix) -> Self {
        let id = id.into();
        Dictionary {
            name: id.clone(),
            id,
            atoms,
            source: DictionarySource::ExternalLibrary,
            pixels: None,
            atom_labels: None,
        }
    }

    pub fn from_pixels(id: impl Into<String>, atoms: Matrix, pixels: Vec<PixelCoord>) -> Result<Self> {
        if pixels.len() != atoms.cols() {
            return Err(Error::dims("Dictionary pixels", atoms.cols(), pixels.len()));
        }
        let id = id.into();
        Ok(Dictionary {
            name: id.clone(),
            id,
            atoms,
            source: DictionarySource::ImageRegion,
            pixels: Some(pixels),
            atom_labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bands(&self) -> usize {
        self.atoms.rows()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        self.atoms.column(k)
    }

    pub fn pixel(&self, k: usize) -> Option<PixelCoord> {
        self.pixels.as_ref().map(|p| p[k])
    }

    /// Display label of atom `k`: the file label when present, else its index.
    pub fn atom_label(&self, k: usize) -> String {
        match &self.atom_labels {
            Some(labels) => labels[k].clone(),
            None => k.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    Exact,
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountConstraint {
    pub kind: CountKind,
    pub count: usize,
}

impl CountConstraint {
    pub fn exact(count: usize) -> Self {
        CountConstraint { kind: CountKind::Exact, count }
    }

    pub fn at_most(count: usize) -> Self {
        CountConstraint { kind: CountKind::AtMost, count }
    }

    pub fn at_least(count: usize) -> Self {
        CountConstraint { kind: CountKind::AtLeast, count }
    }

    /// Fewest atoms this rule lets a dictionary contribute.
    pub fn lower(self) -> usize {
        match self.kind {
            CountKind::AtMost => 0,
            _ => self.count,
        }
    }
}

impl std::str::FromStr for CountConstraint {
    type Err = Error;

    /// Parses `exact:2`, `at_most:3`, `at_least:1`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, count) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("constraint `{s}` is not KIND:COUNT")))?;
        let kind = match kind.trim().replace('-', "_").as_str() {
            "exact" => CountKind::Exact,
            "at_most" => CountKind::AtMost,
            "at_least" => CountKind::AtLeast,
            other => return Err(Error::Parse(format!("unknown constraint kind `{other}`"))),
        };
        let count = count
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("constraint count `{count}` is not a nonnegative integer")))?;
        Ok(CountConstraint { kind, count })
    }
}

/// A user-drawn area believed to contain pure pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    /// `[row0, col0, height, width]`
    pub rect: [usize; 4],
    pub constraint: CountConstraint,
    pub label: String,
    /// Explicit pixel list; when present it replaces the rectangle scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels: Option<Vec<PixelCoord>>,
}

impl RegionSpec {
    pub fn rect(row0: usize, col0: usize, height: usize, width: usize, constraint: CountConstraint) -> Self {
        RegionSpec {
            rect: [row0, col0, height, width],
            constraint,
            label: String::new(),
            pixels: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Pixels in row-major scan order (or the explicit list).
    pub fn pixel_list(&self) -> Vec<PixelCoord> {
        if let Some(p) = &self.pixels {
            return p.clone();
        }
        let [r0, c0, h, w] = self.rect;
        (r0..r0 + h).flat_map(|r| (c0..c0 + w).map(move |c| PixelCoord::new(r, c))).collect()
    }
}

/// One dictionary per region; atoms are the raw pixel spectra.
pub fn from_regions(image: &HsiCube, regions: &[RegionSpec]) -> Result<(Vec<Dictionary>, Vec<CountConstraint>)> {
    let mut dicts = Vec::with_capacity(regions.len());
    let mut constraints = Vec::with_capacity(regions.len());
    for (k, region) in regions.iter().enumerate() {
        let [r0, c0, h, w] = region.rect;
        if region.pixels.is_none() && (h == 0 || w == 0 || r0 + h > image.height || c0 + w > image.width) {
            return Err(Error::Contract(format!(
                "region {k} rect {:?} outside {}x{} image",
                region.rect, image.height, image.width
            )));
        }
        let pixels = region.pixel_list();
        if pixels.is_empty() {
            return Err(Error::Contract(format!("region {k} has no pixels")));
        }
        if let Some(p) = pixels.iter().find(|p| p.row >= image.height || p.col >= image.width) {
            return Err(Error::Contract(format!("region {k} pixel {:?} outside image", [p.row, p.col])));
        }
        let spectra: Vec<Vec<f64>> = pixels.iter().map(|p| image.spectrum(p.row, p.col)).collect();
        let atoms = Matrix::from_columns(&spectra)?;
        let id = if region.label.is_empty() {
            format!("region-{k}")
        } else {
            region.label.clone()
        };
        dicts.push(Dictionary::from_pixels(id, atoms, pixels)?);
        constraints.push(region.constraint);
    }
    Ok((dicts, constraints))
}

/// Checks band agreement and count feasibility, collecting every problem found.
pub fn validate_problem(
    dicts: &[Dictionary],
    constraints: &[CountConstraint],
    r: usize,
) -> std::result::Result<(), InfeasibilityReport> {
    let mut issues = Vec::new();
    if r == 0 {
        issues.push(Issue::ZeroRank);
    }
    if dicts.is_empty() {
        issues.push(Issue::NoDictionaries);
    }
    if dicts.len() != constraints.len() {
        issues.push(Issue::ConstraintCountMismatch {
            dictionaries: dicts.len(),
            constraints: constraints.len(),
        });
    }
    if let Some(first) = dicts.first() {
        for d in dicts.iter().skip(1) {
            if d.bands() != first.bands() {
                issues.push(Issue::BandMismatch {
                    dictionary: d.id.clone(),
                    expected: first.bands(),
                    actual: d.bands(),
                });
            }
        }
    }
    for (d, c) in dicts.iter().zip(constraints) {
        if c.kind != CountKind::AtMost && c.count > d.len() {
            issues.push(Issue::CountExceedsAtoms {
                dictionary: d.id.clone(),
                count: c.count,
                atoms: d.len(),
            });
        }
    }
    if !issues.is_empty() {
        return Err(InfeasibilityReport { issues });
    }

    let sum_of = |kind: CountKind| -> usize {
        constraints.iter().filter(|c| c.kind == kind).map(|c| c.count).sum()
    };
    let has = |kind: CountKind| constraints.iter().any(|c| c.kind == kind);
    let exact = sum_of(CountKind::Exact);
    let lower = exact + sum_of(CountKind::AtLeast);

    if has(CountKind::AtLeast) {
        if lower > r {
            issues.push(Issue::LowerBoundsExceedRank { sum: lower, rank: r });
        }
    } else if has(CountKind::AtMost) {
        let capacity: usize = dicts
            .iter()
            .zip(constraints)
            .map(|(d, c)| c.count.min(d.len()))
            .sum();
        if exact > r {
            issues.push(Issue::ExactSumExceedsRank { sum: exact, rank: r });
        } else if capacity < r {
            issues.push(Issue::CapacityBelowRank { capacity, rank: r });
        }
    } else if exact != r {
        issues.push(Issue::ExactSumMismatch { sum: exact, rank: r });
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(InfeasibilityReport { issues })
    }
}

/// Rewrites lower bounds as exact counts: every `AtLeast(l)` becomes `Exact(l)`
/// on its dictionary, and one extra dictionary concatenating all lower-bounded
/// dictionaries absorbs the remaining `r − Σ lower` picks. Inputs without
/// `AtLeast` pass through unchanged.
pub fn normalize_constraints(
    dicts: &[Dictionary],
    constraints: &[CountConstraint],
    r: usize,
) -> Result<(Vec<Dictionary>, Vec<CountConstraint>)> {
    validate_problem(dicts, constraints, r).map_err(Error::Infeasible)?;
    if !constraints.iter().any(|c| c.kind == CountKind::AtLeast) {
        return Ok((dicts.to_vec(), constraints.to_vec()));
    }

    let lower: usize = constraints.iter().map(|c| c.lower()).sum();
    let slack = r - lower;
    let has_at_most = constraints.iter().any(|c| c.kind == CountKind::AtMost);

    let mut out_dicts = dicts.to_vec();
    let mut out_constraints: Vec<CountConstraint> = constraints
        .iter()
        .map(|c| match c.kind {
            CountKind::AtLeast => CountConstraint::exact(c.count),
            _ => *c,
        })
        .collect();

    if slack > 0 {
        let sources: Vec<usize> = constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == CountKind::AtLeast)
            .map(|(i, _)| i)
            .collect();
        let mut parts = Vec::with_capacity(sources.len());
        let mut offset = 0;
        for &i in &sources {
            parts.push(AugmentedPart {
                source: i,
                source_id: dicts[i].id.clone(),
                offset,
                len: dicts[i].len(),
            });
            offset += dicts[i].len();
        }
        let mats: Vec<&Matrix> = sources.iter().map(|&i| &dicts[i].atoms).collect();
        let atoms = Matrix::hcat(&mats)?;
        if !has_at_most && atoms.cols() < slack {
            return Err(Error::infeasible(Issue::CountExceedsAtoms {
                dictionary: "augmented".into(),
                count: slack,
                atoms: atoms.cols(),
            }));
        }
        let pixels = sources
            .iter()
            .map(|&i| dicts[i].pixels.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat());
        let names: Vec<&str> = sources.iter().map(|&i| dicts[i].name.as_str()).collect();
        out_dicts.push(Dictionary {
            id: "augmented".into(),
            name: format!("augmented({})", names.join("+")),
            atoms,
            source: DictionarySource::Augmented { parts },
            pixels,
            atom_labels: None,
        });
        // With at-most dictionaries present the slack may be filled by either side.
        out_constraints.push(if has_at_most {
            CountConstraint::at_most(slack)
        } else {
            CountConstraint::exact(slack)
        });
    }
    Ok((out_dicts, out_constraints))
}

/// Maps a pick `(dictionary, atom)` in a normalized problem back to the original
/// dictionary list. Augmented picks are attributed by position.
pub fn attribute_pick(dicts: &[Dictionary], dict: usize, atom: usize) -> (usize, usize) {
    match &dicts[dict].source {
        DictionarySource::Augmented { parts } => parts
            .iter()
            .find(|p| atom >= p.offset && atom < p.offset + p.len)
            .map(|p| (p.source, atom - p.offset))
            .unwrap_or((dict, atom)),
        _ => (dict, atom),
    }
}
