//! Labeled planar point sets and their CSV representation.
//!
//! The on-disk format is a CSV file with the mandatory header `x,y,label`.
//! Coordinates are 64-bit floats and labels arbitrary UTF-8 strings. Class
//! indices are assigned in order of first appearance of each label.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnctError, Result};

/// Planar points, each carrying one class label.
///
/// Labels are stored as 0-based class indices into `class_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPointSet {
    coords: Vec<[f64; 2]>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    class_sizes: Vec<usize>,
    /// Free-form unit annotation; statistics never depend on it.
    pub units: Option<String>,
}

impl LabeledPointSet {
    /// Build a point set from coordinates, 0-based class indices and class names.
    pub fn new(coords: Vec<[f64; 2]>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if coords.len() != labels.len() {
            return Err(NnctError::Validation(format!(
                "{} coordinates but {} labels",
                coords.len(),
                labels.len()
            )));
        }
        if coords.is_empty() {
            return Err(NnctError::Validation("no points".into()));
        }
        if class_names.is_empty() {
            return Err(NnctError::Validation("no classes".into()));
        }
        let mut seen_names = HashSet::new();
        for name in &class_names {
            if !seen_names.insert(name.as_str()) {
                return Err(NnctError::Validation(format!("duplicate class name {name:?}")));
            }
        }
        let mut class_sizes = vec![0usize; class_names.len()];
        for (idx, &label) in labels.iter().enumerate() {
            match class_sizes.get_mut(label) {
                Some(c) => *c += 1,
                None => {
                    return Err(NnctError::Validation(format!(
                        "point {idx} has label {label} but only {} classes exist",
                        class_names.len()
                    )))
                }
            }
        }
        let mut seen = HashMap::with_capacity(coords.len());
        for (idx, p) in coords.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(NnctError::Validation(format!("point {idx} has a non-finite coordinate")));
            }
            // +0.0 folds -0.0 onto 0.0 so that numerically equal points collide.
            let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
            if let Some(prev) = seen.insert(key, idx) {
                return Err(NnctError::Validation(format!(
                    "points {prev} and {idx} share coordinates ({}, {})",
                    p[0], p[1]
                )));
            }
        }
        Ok(LabeledPointSet {
            coords,
            labels,
            class_names,
            class_sizes,
            units: None,
        })
    }

    /// Build a point set from label strings, assigning class indices by first
    /// appearance.
    pub fn from_label_strings<S: AsRef<str>>(coords: Vec<[f64; 2]>, labels: &[S]) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut ids = Vec::with_capacity(labels.len());
        for label in labels {
            let label = label.as_ref();
            let id = *index.entry(label).or_insert_with(|| {
                names.push(label.to_string());
                names.len() - 1
            });
            ids.push(id);
        }
        Self::new(coords, ids, names)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Number of classes `m`.
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Per-class counts `n_i`.
    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// Same locations, new labels. Class sizes may change.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        let mut out = Self::new(self.coords.clone(), labels, self.class_names.clone())?;
        out.units = self.units.clone();
        Ok(out)
    }

    /// Axis-aligned bounding box as `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.coords.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p[0]), y0.min(p[1]), x1.max(p[0]), y1.max(p[1])),
        )
    }

    /// Parse CSV text with header `x,y,label`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names != ["x", "y", "label"] {
            return Err(NnctError::Parse {
                line: 1,
                message: format!("expected header `x,y,label`, found `{}`", names.join(",")),
            });
        }
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(e, 0))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 3 {
                return Err(NnctError::Parse {
                    line,
                    message: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let parse = |field: &str, what: &str| -> Result<f64> {
                field.trim().parse::<f64>().map_err(|_| NnctError::Parse {
                    line,
                    message: format!("non-numeric {what} coordinate {field:?}"),
                })
            };
            coords.push([parse(&record[0], "x")?, parse(&record[1], "y")?]);
            labels.push(record[2].to_string());
        }
        if coords.is_empty() {
            return Err(NnctError::Validation("file contains no data rows".into()));
        }
        Self::from_label_strings(coords, &labels)
    }

    /// Write CSV with header `x,y,label`. Coordinates use the shortest
    /// representation that round-trips exactly.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| NnctError::Numeric(format!("csv write failed: {e}"));
        wtr.write_record(["x", "y", "label"]).map_err(io)?;
        for (p, &l) in self.coords.iter().zip(&self.labels) {
            let x = p[0].to_string();
            let y = p[1].to_string();
            wtr.write_record([x.as_str(), y.as_str(), self.class_names[l].as_str()])
                .map_err(io)?;
        }
        wtr.flush()
            .map_err(|e| NnctError::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> NnctError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    NnctError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Load a point set from a CSV file.
pub fn load_points(path: impl AsRef<Path>) -> Result<LabeledPointSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NnctError::io(path, e))?;
    LabeledPointSet::from_csv_reader(std::io::BufReader::new(file))
}

/// Save a point set as CSV.
pub fn save_points(points: &LabeledPointSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NnctError::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    points.to_csv_writer(&mut buf)?;
    buf.flush().map_err(|e| NnctError::io(path, e))
}
