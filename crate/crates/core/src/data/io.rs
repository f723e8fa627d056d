//! CSV and IDX ingestion.

use std::fs;
use std::path::Path;

use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    /// Header name; requires a header line.
    Name(String),
    Last,
}

/// Reads a comma-separated file whose label column holds class indices and
/// every other column a decimal number.
pub fn load_csv<T: Scalar>(
    path: &Path,
    label: &LabelColumn,
    has_header: bool,
) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;

    let header_label = match label {
        LabelColumn::Name(name) => {
            if !has_header {
                return Err(Error::config("a named label column needs a header line"));
            }
            let headers = reader
                .headers()
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
            Some(headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::data(format!("{}: no column named {name:?}", path.display()))
            })?)
        }
        _ => None,
    };

    let mut features = Vec::new();
    let mut indices = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let cols = record.len();
        let label_col = match label {
            LabelColumn::Index(i) => *i,
            LabelColumn::Name(_) => header_label.unwrap_or(0),
            LabelColumn::Last => cols.saturating_sub(1),
        };
        if label_col >= cols {
            return Err(Error::data(format!(
                "{} line {line}: label column {label_col} but only {cols} fields",
                path.display()
            )));
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(Error::data(format!(
                    "{} line {line}: {cols} fields, expected {w}",
                    path.display()
                )))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            if c == label_col {
                let class: usize = field.parse().map_err(|_| {
                    Error::data(format!(
                        "{} line {line}: label {field:?} is not a class index",
                        path.display()
                    ))
                })?;
                indices.push(class);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::data(format!(
                        "{} line {line}, column {c}: {field:?} is not a number",
                        path.display()
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::data(format!(
                        "{} line {line}, column {c}: non-finite value",
                        path.display()
                    )));
                }
                features.push(T::from_f64_lossy(v));
            }
        }
    }
    let rows = indices.len();
    if rows == 0 {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    let n = features.len() / rows;
    let num_classes = indices.iter().max().map_or(0, |m| m + 1);
    Dataset::new(
        Tensor::new(vec![rows, n], features)?,
        Labels::Classes {
            indices,
            num_classes,
        },
        path.display().to_string(),
    )
}

/// Writes a classification dataset as `x1..xn,y` with a header line. Values
/// use the shortest representation that parses back to the same scalar.
pub fn write_csv<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let Labels::Classes { indices, .. } = &dataset.labels else {
        return Err(Error::data("write_csv supports class labels only"));
    };
    let n = dataset.num_features();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    writer
        .write_record(&header)
        .map_err(|e| Error::data(e.to_string()))?;
    for (row, label) in dataset.features.data().chunks(n).zip(indices) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(label.to_string());
        writer
            .write_record(&fields)
            .map_err(|e| Error::data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::data(format!(
                "{}: truncated header, expected at least {} bytes, found {}",
                path.display(),
                offset + 4,
                bytes.len()
            ))
        })
}

fn idx_payload<'a>(
    bytes: &'a [u8],
    header: usize,
    expected: usize,
    path: &Path,
) -> Result<&'a [u8]> {
    let total = header + expected;
    if bytes.len() != total {
        return Err(Error::data(format!(
            "{}: expected {total} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(&bytes[header..])
}

/// Reads an IDX image file (magic `0x00000803`) and its label file (magic
/// `0x00000801`). Pixels are scaled to `[0, 1]`.
pub fn load_idx<T: Scalar>(images: &Path, labels: &Path) -> Result<Dataset<T>> {
    let img = fs::read(images)?;
    let magic = be_u32(&img, 0, images)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::data(format!(
            "{}: magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            images.display()
        )));
    }
    let count = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let pixels = idx_payload(&img, 16, count * rows * cols, images)?;

    let lab = fs::read(labels)?;
    let magic = be_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::data(format!(
            "{}: magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            labels.display()
        )));
    }
    let label_count = be_u32(&lab, 4, labels)? as usize;
    if label_count != count {
        return Err(Error::data(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let classes = idx_payload(&lab, 8, count, labels)?;

    let scale = T::from_f64_lossy(1.0 / 255.0);
    let features = Tensor::new(
        vec![count, rows * cols],
        pixels
            .iter()
            .map(|&p| T::from_f64_lossy(p as f64) * scale)
            .collect(),
    )?;
    let indices: Vec<usize> = classes.iter().map(|&c| c as usize).collect();
    let num_classes = indices.iter().max().map_or(0, |m| m + 1);
    Dataset::new(
        features,
        Labels::Classes {
            indices,
            num_classes,
        },
        images.display().to_string(),
    )
}

/// Writes raw pixels as an IDX image file.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    if rows * cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
        return Err(Error::dim("pixel buffer is not a whole number of images"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [pixels.len() / (rows * cols), rows, cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}
