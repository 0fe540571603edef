//! Delimited dataset files: one example per row, class id first, then the
//! feature values. A header row is optional and is recognised by a first
//! field that is not an integer.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use dwml_core::Dataset;

use crate::config::ExperimentConfig;
use crate::error::CliError;

fn row_error(row: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::config(format!("row {row}: {msg}"))
}

/// Parses a dataset. Class ids are remapped to `0..classes` in ascending
/// order, so the held-out split still takes the largest ids.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut dim = None;
    let mut raw_labels = Vec::new();
    let mut features = Vec::new();
    let mut first_row = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            row_error(row, e)
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let is_first = std::mem::replace(&mut first_row, false);
        let first = record.get(0).unwrap_or("");
        let label: u64 = match first.parse() {
            Ok(l) => l,
            Err(_) if is_first => continue,
            Err(_) => {
                return Err(row_error(
                    row,
                    format!("class id `{first}` is not a nonnegative integer"),
                ))
            }
        };
        let width = record.len() - 1;
        match dim {
            None if width == 0 => return Err(row_error(row, "no feature values")),
            None => dim = Some(width),
            Some(d) if d != width => return Err(row_error(row, format!("expected {d} feature values, found {width}"))),
            Some(_) => {}
        }
        for (col, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| row_error(row, format!("column {}: `{field}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(row_error(row, format!("column {}: non-finite value", col + 1)));
            }
            features.push(v);
        }
        raw_labels.push(label);
    }
    let dim = dim.ok_or_else(|| CliError::config("dataset has no rows"))?;
    let ids: BTreeMap<u64, usize> = {
        let mut distinct: Vec<u64> = raw_labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(k, c)| (c, k)).collect()
    };
    if ids.len() < 2 {
        return Err(CliError::config(format!(
            "dataset needs at least 2 classes, found {}",
            ids.len()
        )));
    }
    let labels = raw_labels.iter().map(|c| ids[c]).collect();
    Ok(Dataset::new(dim, features, labels)?)
}

pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["class".to_string()];
    header.extend((0..data.dim()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row = vec![data.label(i).to_string()];
        row.extend(data.features(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The file named by `data.path`, or the synthetic generator.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    match &cfg.data_path {
        Some(path) => load_file(path),
        None => Ok(cfg.synthetic.generate()?),
    }
}

pub fn load_file(path: &Path) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    read_dataset(file).map_err(|e| CliError::new(e.category, format!("{}: {}", path.display(), e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_two_classes() {
        let d = read_dataset("0,1,2,3,4\n1,5,6,7,8\n0,0,0,0,1\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.num_classes(), 2);
    }

    #[test]
    fn header_is_optional_and_ids_are_remapped() {
        let d = read_dataset("class,a,b\n7,1,2\n3,3,4\n7,5,6\n".as_bytes()).unwrap();
        assert_eq!(d.labels(), &[1, 0, 1]);
    }

    #[test]
    fn ragged_row_is_named() {
        let e = read_dataset("0,1,2\n1,3\n".as_bytes()).unwrap_err();
        assert!(e.message().contains("row 2"), "{}", e.message());
    }

    #[test]
    fn non_numeric_field_is_named() {
        let e = read_dataset("0,1,2\n1,3,x\n".as_bytes()).unwrap_err();
        assert!(e.message().contains("row 2") && e.message().contains("column 3"));
        assert!(read_dataset("0,1\nfoo,2\n".as_bytes())
            .unwrap_err()
            .message()
            .contains("row 2"));
    }

    #[test]
    fn one_class_is_rejected() {
        assert!(read_dataset("0,1\n0,2\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read() {
        let d = dwml_core::SyntheticSpec {
            classes: 3,
            per_class: 2,
            dim: 4,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);
    }
}
