//! CSV datasets, score files and the versioned model file.
//!
//! Model files are JSON. Finite floats are written in shortest round-trip
//! form and parsed back exactly, so a reloaded detector produces
//! bit-identical scores; infinite rectangle bounds are spelled `"inf"` /
//! `"-inf"`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregateScore;
use crate::dataset::Dataset;
use crate::detector::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::experiments::RankTable;
use crate::forest::ForestModel;

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub label_column: Option<LabelColumn>,
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { label_column: None, delimiter: b',', has_header: false }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    read_dataset(File::open(path)?, options)
}

/// Parses a rectangular numeric table. Row and column numbers in errors are
/// 0-based and count data rows only (the header is not a row).
pub fn read_dataset<R: Read>(reader: R, options: &LoadOptions) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut label_idx = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows { row, expected, found: record.len() });
        }
        let label_col = *label_idx.get_or_insert(match options.label_column {
            None => None,
            Some(LabelColumn::Last) => Some(expected.saturating_sub(1)),
            Some(LabelColumn::Index(i)) if i < expected => Some(i),
            Some(LabelColumn::Index(i)) => {
                return Err(Error::InvalidDataset(format!("label column {i} out of range for {expected} columns")))
            }
        });
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse { row, col, text: cell.to_string() })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, col });
            }
            if Some(col) == label_col {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::LabelNotBinary { row, value: v });
                }
                labels.push(v as u8);
            } else {
                values.push(v);
            }
        }
    }
    let width = width.ok_or_else(|| Error::InvalidDataset("no data rows".into()))?;
    let n_features = width - usize::from(label_idx.flatten().is_some());
    let data = Dataset::new(values, n_features)?;
    if label_idx.flatten().is_some() {
        data.with_labels(labels)
    } else {
        Ok(data)
    }
}

/// Writes `index,score` rows, one per input row, in input order.
pub fn write_scores<W: Write>(mut out: W, scores: &[AggregateScore]) -> Result<()> {
    writeln!(out, "index,score")?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i},{}", s.value())?;
    }
    out.flush()?;
    Ok(())
}

/// On-disk representation of a fitted detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub config: DetectorConfig,
    pub forest: ForestModel,
    pub fitted_tau: Option<f64>,
}

impl ModelFile {
    pub fn from_detector(det: &Detector) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            config: det.config().clone(),
            forest: det.model().clone(),
            fitted_tau: det.fitted_tau(),
        }
    }

    pub fn into_detector(self) -> Result<Detector> {
        Detector::from_parts(self.forest, self.config, self.fitted_tau).map_err(|e| match e {
            Error::CorruptFile(_) => e,
            other => Error::CorruptFile(other.to_string()),
        })
    }
}

pub fn write_model<W: Write>(out: W, det: &Detector) -> Result<()> {
    let mut out = BufWriter::new(out);
    serde_json::to_writer(&mut out, &ModelFile::from_detector(det)).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<Detector> {
    let value: serde_json::Value =
        serde_json::from_reader(BufReader::new(reader)).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptFile("missing format_version".into()))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, supported: MODEL_FORMAT_VERSION });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::CorruptFile(e.to_string()))?;
    file.into_detector()
}

pub fn save_model(path: impl AsRef<Path>, det: &Detector) -> Result<()> {
    write_model(File::create(path)?, det)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Detector> {
    read_model(File::open(path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `dataset,<algorithm>...` with one row per dataset; missing cells empty.
pub fn write_auc_matrix<W: Write>(mut out: W, table: &RankTable, auc: &[Vec<Option<f64>>]) -> Result<()> {
    writeln!(out, "dataset,{}", table.algorithms.join(","))?;
    for (k, name) in table.datasets.iter().enumerate() {
        let cells: Vec<String> = auc.iter().map(|row| fmt_opt(row[k])).collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// `algorithm,average_rank,mean_auc,incomplete`, best average rank first.
pub fn write_rank_table<W: Write>(mut out: W, table: &RankTable) -> Result<()> {
    writeln!(out, "algorithm,average_rank,mean_auc,incomplete")?;
    let mut order: Vec<usize> = (0..table.algorithms.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| table.average_rank[i].unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    for a in order {
        writeln!(
            out,
            "{},{},{},{}",
            table.algorithms[a],
            fmt_opt(table.average_rank[a]),
            fmt_opt(table.mean_auc[a]),
            table.incomplete[a]
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::Alpha;
    use crate::detector::ScorerChoice;
    use crate::forest::HyperRectangle;
    use crate::scoring::BoundingPolicy;
    use proptest::prelude::*;

    fn parse(text: &str, options: &LoadOptions) -> Result<Dataset> {
        read_dataset(text.as_bytes(), options)
    }

    fn fitted(seed: u64, scorer: ScorerChoice) -> (Detector, Dataset) {
        let rows: Vec<[f64; 2]> = (0..60).map(|i| [f64::from(i).sin() * 3.0, f64::from(i * i % 17) / 7.0]).collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let cfg = DetectorConfig {
            n_estimators: 12,
            subsample_size: 32,
            seed,
            scorer,
            alpha: Alpha::Finite(0.5),
            contamination: Some(0.1),
            ..Default::default()
        };
        (Detector::fit(&data, cfg).unwrap(), data)
    }

    #[test]
    fn loads_plain_csv() {
        let ds = parse("1,2\n3,4\n5,6", &LoadOptions::default()).unwrap();
        assert_eq!((ds.n_rows(), ds.n_cols()), (3, 2));
        assert!(ds.labels().is_none());
        assert_eq!(ds.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn label_column_validation() {
        let opts = LoadOptions { label_column: Some(LabelColumn::Index(1)), ..Default::default() };
        assert!(matches!(parse("1,2\n3,4\n5,6", &opts), Err(Error::LabelNotBinary { row: 0, .. })));
        let ds = parse("1,0\n3,1\n5,0", &opts).unwrap();
        assert_eq!(ds.n_cols(), 1);
        assert_eq!(ds.labels(), Some(&[0u8, 1, 0][..]));
        let last = LoadOptions { label_column: Some(LabelColumn::Last), has_header: true, ..Default::default() };
        let ds = parse("a,b,label\n1,2,1\n3,4,0\n", &last).unwrap();
        assert_eq!(ds.n_cols(), 2);
        assert_eq!(ds.labels(), Some(&[1u8, 0][..]));
        let out_of_range = LoadOptions { label_column: Some(LabelColumn::Index(5)), ..Default::default() };
        assert!(parse("1,0", &out_of_range).is_err());
        // label as the only column leaves no features
        assert!(parse("1\n0", &last).is_err());
    }

    #[test]
    fn rejects_bad_cells() {
        let opts = LoadOptions::default();
        assert!(matches!(parse("1,2\nNaN,4", &opts), Err(Error::NonFiniteValue { row: 1, col: 0 })));
        assert!(matches!(parse("1,inf", &opts), Err(Error::NonFiniteValue { row: 0, col: 1 })));
        assert!(matches!(parse("1,x", &opts), Err(Error::Parse { row: 0, col: 1, .. })));
        assert!(matches!(parse("1,2\n3", &opts), Err(Error::RaggedRows { row: 1, expected: 2, found: 1 })));
        assert!(matches!(parse("", &opts), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn quoted_and_semicolon_delimited() {
        let opts = LoadOptions { delimiter: b';', ..Default::default() };
        let ds = parse("\"1.5\"; 2\n3;4e-1", &opts).unwrap();
        assert_eq!(ds.row(0), &[1.5, 2.0]);
        assert_eq!(ds.row(1), &[3.0, 0.4]);
    }

    #[test]
    fn score_file_format() {
        let mut buf = Vec::new();
        let scores = [0.25, 0.1 + 0.2].map(|v| serde_json::from_value::<AggregateScore>(v.into()).unwrap());
        write_scores(&mut buf, &scores).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,score\n0,0.25\n1,0.30000000000000004\n");
    }

    #[test]
    fn model_round_trip_is_bitwise() {
        for scorer in [ScorerChoice::Depth, ScorerChoice::Volume] {
            let (det, data) = fitted(3, scorer);
            let mut buf = Vec::new();
            write_model(&mut buf, &det).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            assert_eq!(back, det);
            let a = det.score_samples(&data).unwrap();
            let b = back.score_samples(&data).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.value().to_bits() == y.value().to_bits()));
        }
    }

    #[test]
    fn fixed_bounding_policy_survives_round_trip() {
        let data = Dataset::from_rows(&[[0.0, 1.0], [2.0, 3.0], [1.0, 0.5]]).unwrap();
        let rect = HyperRectangle::new(vec![-1.0, -1.0], vec![4.0, 4.0]).unwrap();
        let cfg = DetectorConfig {
            n_estimators: 3,
            scorer: ScorerChoice::Volume,
            bounding_policy: BoundingPolicy::Fixed(rect),
            alpha: Alpha::Infinity,
            ..Default::default()
        };
        let det = Detector::fit(&data, cfg).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &det).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), det);
    }

    #[test]
    fn truncated_and_versioned_files() {
        let (det, _) = fitted(4, ScorerChoice::Depth);
        let mut buf = Vec::new();
        write_model(&mut buf, &det).unwrap();
        let truncated = &buf[..buf.len() / 2];
        assert!(matches!(read_model(truncated), Err(Error::CorruptFile(_))));

        let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        value["format_version"] = 2.into();
        let bumped = serde_json::to_vec(&value).unwrap();
        assert!(matches!(read_model(bumped.as_slice()), Err(Error::VersionMismatch { found: 2, supported: 1 })));

        let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        value["config"]["n_estimators"] = 99.into();
        let inconsistent = serde_json::to_vec(&value).unwrap();
        assert!(matches!(read_model(inconsistent.as_slice()), Err(Error::CorruptFile(_))));

        assert!(matches!(read_model(&b"{}"[..]), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn file_helpers() {
        let dir = tempfile::tempdir().unwrap();
        let (det, data) = fitted(5, ScorerChoice::Volume);
        let path = dir.path().join("model.json");
        save_model(&path, &det).unwrap();
        assert_eq!(load_model(&path).unwrap().score_samples(&data).unwrap(), det.score_samples(&data).unwrap());
        assert!(matches!(load_model(dir.path().join("missing.json")), Err(Error::Io(_))));
    }

    proptest! {
        #[test]
        fn csv_round_trips_finite_floats(rows in proptest::collection::vec(proptest::collection::vec(-1e12f64..1e12, 3), 1..20)) {
            let text: String = rows.iter().map(|r| format!("{},{},{}\n", r[0], r[1], r[2])).collect();
            let ds = parse(&text, &LoadOptions::default()).unwrap();
            for (i, r) in rows.iter().enumerate() {
                prop_assert_eq!(ds.row(i), &r[..]);
            }
        }
    }
}
