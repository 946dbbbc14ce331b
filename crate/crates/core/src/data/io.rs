//! CSV and JSON-lines readers and writers.
//!
//! Matrix CSVs share one layout: a header `id,<prefix>_0,…,<prefix>_{K-1}`
//! followed by one row per example. Reals are written with 17 significant
//! digits so that a save/load cycle reproduces every bit.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, LabelMatrix, MultiLabelDataset, ProbMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Labels CSV, `id,label_0,…`.
    Csv,
    /// One JSON object per line with `id`, `labels` and optionally `probs`.
    JsonLines,
}

/// Formats a real with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_label(s: &str) -> std::result::Result<u8, String> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(format!("label value `{other}` is not 0 or 1")),
    }
}

fn parse_real(s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{}` is not a number", s.trim()))
}

fn read_table<T: Copy>(
    path: &Path,
    prefix: &str,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<(Vec<String>, Matrix<T>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.get(0).map(str::trim) != Some("id") {
        return Err(Error::Header {
            path: path.to_owned(),
            message: "first column must be `id`".into(),
        });
    }
    let width = header.len() - 1;
    for (j, name) in header.iter().skip(1).enumerate() {
        let expected = format!("{prefix}_{j}");
        if name.trim() != expected {
            return Err(Error::Header {
                path: path.to_owned(),
                message: format!("column {} is `{name}`, expected `{expected}`", j + 1),
            });
        }
    }

    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width + 1 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                column: "*".into(),
                message: format!("expected {} fields, found {}", width + 1, record.len()),
            });
        }
        let id = record[0].trim().to_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_owned(),
                id,
                line,
            });
        }
        for j in 0..width {
            let value = parse(&record[j + 1]).map_err(|message| Error::Parse {
                path: path.to_owned(),
                line,
                column: format!("{prefix}_{j}"),
                message,
            })?;
            data.push(value);
        }
        ids.push(id);
    }
    let matrix = Matrix::from_vec(ids.len(), width, data).expect("row widths checked");
    Ok((ids, matrix))
}

fn write_table<T: Copy>(
    path: &Path,
    prefix: &str,
    ids: &[String],
    matrix: &Matrix<T>,
    fmt: impl Fn(T) -> String,
) -> Result<()> {
    if ids.len() != matrix.n_rows() {
        return Err(Error::shape("ids vs matrix rows", matrix.n_rows(), ids.len()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_owned()];
    header.extend((0..matrix.n_cols()).map(|j| format!("{prefix}_{j}")));
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(matrix.n_cols() + 1);
    for (id, row) in ids.iter().zip(matrix.rows()) {
        record.clear();
        record.push(id.clone());
        record.extend(row.iter().map(|&v| fmt(v)));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, LabelMatrix)> {
    read_table(path.as_ref(), "label", parse_label)
}

pub fn write_labels_csv(path: impl AsRef<Path>, ids: &[String], labels: &LabelMatrix) -> Result<()> {
    write_table(path.as_ref(), "label", ids, labels, |b| b.to_string())
}

pub fn write_probs_csv(path: impl AsRef<Path>, ids: &[String], probs: &ProbMatrix) -> Result<()> {
    write_table(path.as_ref(), "prob", ids, probs, fmt_f64)
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, FeatureMatrix)> {
    read_table(path.as_ref(), "feat", parse_real)
}

pub fn write_features_csv(
    path: impl AsRef<Path>,
    ids: &[String],
    features: &FeatureMatrix,
) -> Result<()> {
    write_table(path.as_ref(), "feat", ids, features, fmt_f64)
}

/// Reads a probabilities CSV. Values are parsed but not range-checked; use
/// [`super::validate`] for that.
pub fn load_probs(path: impl AsRef<Path>) -> Result<(Vec<String>, ProbMatrix)> {
    read_table(path.as_ref(), "prob", parse_real)
}

/// Reads a probabilities CSV and checks that its ids match `ids` row by row.
pub fn load_probs_aligned(path: impl AsRef<Path>, ids: &[String]) -> Result<ProbMatrix> {
    let (prob_ids, probs) = load_probs(path)?;
    check_alignment(ids, &prob_ids)?;
    Ok(probs)
}

pub(crate) fn check_alignment(left: &[String], right: &[String]) -> Result<()> {
    for (row, (a, b)) in left.iter().zip(right).enumerate() {
        if a != b {
            return Err(Error::IdMismatch {
                row,
                left: a.clone(),
                right: b.clone(),
            });
        }
    }
    if left.len() != right.len() {
        return Err(Error::shape("number of example ids", left.len(), right.len()));
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<MultiLabelDataset> {
    match format {
        DatasetFormat::Csv => {
            let (ids, labels) = read_labels_csv(path)?;
            MultiLabelDataset::new(ids, labels)
        }
        DatasetFormat::JsonLines => read_jsonl(path).map(|(ds, _)| ds),
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    labels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
}

/// Reads the JSON-lines format. Probabilities are returned only when every
/// record carries them.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<(MultiLabelDataset, Option<ProbMatrix>)> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut labels = Vec::new();
    let mut probs: Option<Vec<f64>> = Some(Vec::new());
    let mut width = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |column: &str, message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            column: column.to_owned(),
            message,
        };
        let rec: JsonRecord =
            serde_json::from_str(&line).map_err(|e| parse_err("*", e.to_string()))?;
        let k = *width.get_or_insert(rec.labels.len());
        if rec.labels.len() != k {
            return Err(parse_err(
                "labels",
                format!("expected {k} labels, found {}", rec.labels.len()),
            ));
        }
        if let Some(j) = rec.labels.iter().position(|&b| b > 1) {
            return Err(parse_err(
                &format!("labels[{j}]"),
                format!("label value `{}` is not 0 or 1", rec.labels[j]),
            ));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_owned(),
                id: rec.id,
                line: lineno,
            });
        }
        match (&mut probs, rec.probs) {
            (Some(acc), Some(p)) if p.len() == k => acc.extend(p),
            (Some(_), Some(p)) => {
                return Err(parse_err(
                    "probs",
                    format!("expected {k} probabilities, found {}", p.len()),
                ))
            }
            (slot, None) => *slot = None,
            (None, Some(_)) => {}
        }
        labels.extend(rec.labels);
        ids.push(rec.id);
    }
    let n = ids.len();
    let k = width.unwrap_or(0);
    let labels = Matrix::from_vec(n, k, labels).expect("widths checked");
    let probs = probs
        .filter(|p| n == 0 || !p.is_empty())
        .map(|p| Matrix::from_vec(n, k, p).expect("widths checked"));
    Ok((MultiLabelDataset::new(ids, labels)?, probs))
}

pub fn write_jsonl(
    path: impl AsRef<Path>,
    dataset: &MultiLabelDataset,
    probs: Option<&ProbMatrix>,
) -> Result<()> {
    if let Some(p) = probs {
        super::ensure_same_shape(&dataset.given_labels, p)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    for (i, id) in dataset.example_ids.iter().enumerate() {
        let rec = JsonRecord {
            id: id.clone(),
            labels: dataset.given_labels.row(i).to_vec(),
            probs: probs.map(|p| p.row(i).to_vec()),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Contents of a scores CSV (`id,score[,flagged]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub flags: Option<Vec<bool>>,
}

pub fn save_scores(
    path: impl AsRef<Path>,
    ids: &[String],
    scores: &[f64],
    flags: Option<&[bool]>,
) -> Result<()> {
    if ids.len() != scores.len() {
        return Err(Error::shape("ids vs scores", scores.len(), ids.len()));
    }
    if let Some(f) = flags {
        if f.len() != scores.len() {
            return Err(Error::shape("flags vs scores", scores.len(), f.len()));
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    if flags.is_some() {
        writer.write_record(["id", "score", "flagged"])?;
    } else {
        writer.write_record(["id", "score"])?;
    }
    for (i, (id, &s)) in ids.iter().zip(scores).enumerate() {
        match flags {
            Some(f) => writer.write_record([id.as_str(), &fmt_f64(s), bool_str(f[i])])?,
            None => writer.write_record([id.as_str(), &fmt_f64(s)])?,
        }
    }
    writer.flush()?;
    Ok(())
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let with_flags = match header.iter().collect::<Vec<_>>().as_slice() {
        ["id", "score"] => false,
        ["id", "score", "flagged"] => true,
        _ => {
            return Err(Error::Header {
                path: path.to_owned(),
                message: "expected header `id,score` or `id,score,flagged`".into(),
            })
        }
    };
    let mut table = ScoreTable {
        ids: Vec::new(),
        scores: Vec::new(),
        flags: with_flags.then(Vec::new),
    };
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |column: &str, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            column: column.into(),
            message,
        };
        table.ids.push(record[0].to_owned());
        table.scores.push(parse_real(&record[1]).map_err(|m| err("score", m))?);
        if let Some(flags) = &mut table.flags {
            flags.push(parse_label(&record[2]).map_err(|m| err("flagged", m))? == 1);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn parses_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "id,label_0,label_1\na,1,0\n");
        let ds = load_dataset(&p, DatasetFormat::Csv).unwrap();
        assert_eq!(ds.n_examples(), 1);
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.given_labels.row(0), &[1, 0]);
        assert_eq!(ds.example_ids, vec!["a"]);
    }

    #[test]
    fn bad_label_names_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "id,label_0,label_1\na,1,0\nb,0,2\n");
        let err = read_labels_csv(&p).unwrap_err();
        match &err {
            Error::Parse { line, column, .. } => {
                assert_eq!(*line, 3);
                assert_eq!(column, "label_1");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("`2`"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "id,label_0\na,1\na,0\n");
        assert!(matches!(read_labels_csv(&p), Err(Error::DuplicateId { line: 3, .. })));
    }

    #[test]
    fn header_and_width_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "id,label_1\na,1\n");
        assert!(matches!(read_labels_csv(&p), Err(Error::Header { .. })));
        let p = write(dir.path(), "m.csv", "id,label_0,label_1\na,1\n");
        assert!(matches!(read_labels_csv(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn misaligned_probability_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "id,prob_0\na,0.5\nc,0.1\n");
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            load_probs_aligned(&p, &ids),
            Err(Error::IdMismatch { row: 1, .. })
        ));
    }

    #[test]
    fn random_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, k) = (50, 10);
        let labels = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.random_range(0..2u8)).collect())
            .unwrap();
        let probs = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.random::<f64>()).collect())
            .unwrap();
        let ids = super::super::default_ids(n);

        let lp = dir.path().join("l.csv");
        let pp = dir.path().join("p.csv");
        write_labels_csv(&lp, &ids, &labels).unwrap();
        write_probs_csv(&pp, &ids, &probs).unwrap();
        let (ids2, labels2) = read_labels_csv(&lp).unwrap();
        let probs2 = load_probs_aligned(&pp, &ids2).unwrap();
        assert_eq!(ids, ids2);
        assert_eq!(labels, labels2);
        assert!(probs
            .as_slice()
            .iter()
            .zip(probs2.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = Matrix::from_rows(&[[1u8, 0, 1], [0, 0, 0]]).unwrap();
        let probs = Matrix::from_rows(&[[0.1, 0.2, 1.0 / 3.0], [0.0, 1.0, 0.5]]).unwrap();
        let ds = MultiLabelDataset::new(vec!["x".into(), "y".into()], labels).unwrap();
        let p = dir.path().join("d.jsonl");
        write_jsonl(&p, &ds, Some(&probs)).unwrap();
        let (ds2, probs2) = read_jsonl(&p).unwrap();
        assert_eq!(ds, ds2);
        assert_eq!(Some(probs), probs2);

        write_jsonl(&p, &ds, None).unwrap();
        let (_, none) = read_jsonl(&p).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn jsonl_rejects_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "d.jsonl",
            "{\"id\":\"a\",\"labels\":[0,1]}\n{\"id\":\"b\",\"labels\":[3,1]}\n",
        );
        assert!(matches!(read_jsonl(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let ids = vec!["a".to_string(), "b".to_string()];
        let scores = vec![0.1 + 0.2, -18.420680743952367];
        save_scores(&p, &ids, &scores, Some(&[true, false])).unwrap();
        let t = load_scores(&p).unwrap();
        assert_eq!(t.ids, ids);
        assert_eq!(t.scores, scores);
        assert_eq!(t.flags, Some(vec![true, false]));

        save_scores(&p, &ids, &scores, None).unwrap();
        assert_eq!(load_scores(&p).unwrap().flags, None);
    }
}
