//! CSV tables.
//!
//! Predictions: `sample_id,score,label[,fold]`. Probability matrices:
//! `sample_id,label,p_0,...,p_{T-1}`. Floats are written in the shortest
//! form that parses back to the same value.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::IoError;
use crate::metrics::{MetricsError, PredictionSet, Record};
use crate::reliability::{ProbMatrix, ReliabilityBin, SampleStats};
use crate::roi::RoiStats;
use crate::volume::Cuboid;

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|e| IoError::io(path, e))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    ReaderBuilder::new().has_headers(false).trim(Trim::None).flexible(true).from_reader(r)
}

fn csv_err(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::Io {
            path: "<csv>".into(),
            source,
        },
        other => IoError::Schema {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn schema(line: u64, message: impl Into<String>) -> IoError {
    IoError::Schema {
        line,
        message: message.into(),
    }
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Reads every record, returning the header and the data rows.
fn records<R: Read>(r: R) -> Result<(StringRecord, Vec<StringRecord>), IoError> {
    let mut rd = reader(r);
    let mut rows = rd.records();
    let header = match rows.next() {
        Some(h) => h.map_err(csv_err)?,
        None => return Err(schema(1, "missing header")),
    };
    let rows = rows.collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
    Ok((header, rows))
}

fn parse_label(field: &str, line: u64) -> Result<u8, IoError> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(schema(line, format!("label must be 0 or 1, got `{other}`"))),
    }
}

fn parse_prob(field: &str, line: u64, what: &str) -> Result<f64, IoError> {
    let v: f64 = field
        .parse()
        .map_err(|_| schema(line, format!("{what} `{field}` is not a number")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(IoError::Range {
            line,
            message: format!("{what} {field} outside [0, 1]"),
        });
    }
    Ok(v)
}

pub fn read_predictions_from<R: Read>(r: R) -> Result<PredictionSet, IoError> {
    let (header, rows) = records(r)?;
    let with_fold = match header.iter().collect::<Vec<_>>().as_slice() {
        ["sample_id", "score", "label"] => false,
        ["sample_id", "score", "label", "fold"] => true,
        _ => {
            return Err(schema(
                1,
                format!(
                    "expected header `sample_id,score,label[,fold]`, got `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ))
        }
    };
    let width = header.len();
    let mut out = Vec::with_capacity(rows.len());
    let mut lines = Vec::with_capacity(rows.len());
    for rec in &rows {
        let line = line_of(rec);
        if rec.len() != width {
            return Err(schema(line, format!("expected {width} fields, got {}", rec.len())));
        }
        if rec[0].is_empty() {
            return Err(schema(line, "empty sample_id"));
        }
        let score = parse_prob(&rec[1], line, "score")?;
        let label = parse_label(&rec[2], line)?;
        let fold = match with_fold.then(|| &rec[3]) {
            None | Some("") => None,
            Some(f) => Some(
                f.parse::<u32>()
                    .map_err(|_| schema(line, format!("fold `{f}` is not a non-negative integer")))?,
            ),
        };
        out.push(Record::new(&rec[0], score, label, fold));
        lines.push(line);
    }
    PredictionSet::new(out).map_err(|e| match e {
        MetricsError::DuplicateId { id, fold } => {
            let dup = rows
                .iter()
                .zip(&lines)
                .filter(|(r, _)| r[0] == *id && (!with_fold || fold.map(|f| f.to_string()).unwrap_or_default() == r[3]))
                .nth(1)
                .map_or(0, |(_, &l)| l);
            schema(dup, format!("duplicate sample_id `{id}`"))
        }
        other => schema(0, other.to_string()),
    })
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet, IoError> {
    read_predictions_from(open(path)?)
}

pub fn write_predictions<W: Write>(w: W, p: &PredictionSet) -> Result<(), IoError> {
    let with_fold = p.records().iter().any(|r| r.fold.is_some());
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["sample_id", "score", "label"];
    if with_fold {
        header.push("fold");
    }
    wr.write_record(&header).map_err(csv_err)?;
    for r in p.records() {
        let mut row = vec![r.id.clone(), r.score.to_string(), r.label.to_string()];
        if with_fold {
            row.push(r.fold.map(|f| f.to_string()).unwrap_or_default());
        }
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| IoError::io(Path::new("<csv>"), e))
}

pub fn read_probmatrix_from<R: Read>(r: R) -> Result<ProbMatrix, IoError> {
    let (header, rows) = records(r)?;
    let names: Vec<&str> = header.iter().collect();
    let t = names.len().saturating_sub(2);
    let expected: Vec<String> = ["sample_id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..t).map(|i| format!("p_{i}")))
        .collect();
    if t < 2 || names != expected {
        return Err(schema(1, "expected header `sample_id,label,p_0,...,p_{T-1}` with T >= 2"));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * t);
    let mut seen = std::collections::HashSet::new();
    for rec in &rows {
        let line = line_of(rec);
        if rec.len() != t + 2 {
            return Err(schema(line, format!("expected {} fields, got {}", t + 2, rec.len())));
        }
        if !seen.insert(rec[0].to_string()) {
            return Err(schema(line, format!("duplicate sample_id `{}`", &rec[0])));
        }
        ids.push(rec[0].to_string());
        labels.push(parse_label(&rec[1], line)?);
        for field in rec.iter().skip(2) {
            values.push(parse_prob(field, line, "probability")?);
        }
    }
    ProbMatrix::new(ids, labels, t, values).map_err(|e| schema(0, e.to_string()))
}

pub fn read_probmatrix(path: &Path) -> Result<ProbMatrix, IoError> {
    read_probmatrix_from(open(path)?)
}

pub fn write_probmatrix<W: Write>(w: W, m: &ProbMatrix) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend((0..m.columns()).map(|i| format!("p_{i}")));
    wr.write_record(&header).map_err(csv_err)?;
    for i in 0..m.rows() {
        let mut row = vec![m.ids()[i].clone(), m.labels()[i].to_string()];
        row.extend(m.row(i).iter().map(f64::to_string));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| IoError::io(Path::new("<csv>"), e))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `bin_lo,bin_hi,mean_pred,pos_rate,count`; empty bins leave the rates
/// blank.
pub fn write_reliability<W: Write>(w: W, bins: &[ReliabilityBin]) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["bin_lo", "bin_hi", "mean_pred", "pos_rate", "count"]).map_err(csv_err)?;
    for b in bins {
        wr.write_record([
            b.lo.to_string(),
            b.hi.to_string(),
            opt(b.mean_pred),
            opt(b.pos_rate),
            b.count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| IoError::io(Path::new("<csv>"), e))
}

/// `sample_id,label,mean,std,spread`.
pub fn write_sample_stats<W: Write>(w: W, stats: &[SampleStats]) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["sample_id", "label", "mean", "std", "spread"]).map_err(csv_err)?;
    for s in stats {
        wr.write_record([
            s.id.clone(),
            s.label.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.spread.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| IoError::io(Path::new("<csv>"), e))
}

/// Labels in row order from the `label` column of a CSV with a header.
pub fn read_labels(path: &Path) -> Result<Vec<u8>, IoError> {
    let (header, rows) = records(open(path)?)?;
    let col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| schema(1, "header has no `label` column"))?;
    rows.iter()
        .map(|rec| {
            let line = line_of(rec);
            if rec.len() != header.len() {
                return Err(schema(line, format!("expected {} fields, got {}", header.len(), rec.len())));
            }
            parse_label(&rec[col], line)
        })
        .collect()
}

/// One batch of indices per line.
pub fn write_batches<W: Write>(mut w: W, batches: &[Vec<usize>]) -> Result<(), IoError> {
    let io = |e| IoError::io(Path::new("<batches>"), e);
    for b in batches {
        let line: Vec<String> = b.iter().map(usize::to_string).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Cuboids from a CSV with header `f0,f1,r0,r1,c0,c1`.
pub fn read_cuboids(path: &Path) -> Result<Vec<Cuboid>, IoError> {
    let (header, rows) = records(open(path)?)?;
    if header.iter().collect::<Vec<_>>() != ["f0", "f1", "r0", "r1", "c0", "c1"] {
        return Err(schema(1, "expected header `f0,f1,r0,r1,c0,c1`"));
    }
    rows.iter()
        .map(|rec| {
            let line = line_of(rec);
            let v = rec
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| schema(line, "bounds must be non-negative integers"))?;
            if v.len() != 6 || v[1] < v[0] || v[3] < v[2] || v[5] < v[4] {
                return Err(schema(line, "need six bounds with lo <= hi per axis"));
            }
            Ok(Cuboid::new(v[0]..v[1], v[2]..v[3], v[4]..v[5]))
        })
        .collect()
}

const AXES: [&str; 3] = ["frames", "rows", "cols"];

/// `axis,count,mean,std,min,max,p5,p25,p50,p75,p95`.
pub fn write_roi_summary<W: Write>(w: W, s: &RoiStats) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["axis", "count", "mean", "std", "min", "max", "p5", "p25", "p50", "p75", "p95"])
        .map_err(csv_err)?;
    for (name, a) in AXES.iter().zip(&s.axes) {
        let row = [
            name.to_string(),
            s.count.to_string(),
            a.mean.to_string(),
            a.std.to_string(),
            a.min.to_string(),
            a.max.to_string(),
            a.p5.to_string(),
            a.p25.to_string(),
            a.p50.to_string(),
            a.p75.to_string(),
            a.p95.to_string(),
        ];
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| IoError::io(Path::new("<csv>"), e))
}

/// `axis,bin_lo,bin_hi,count` with half-open bins.
pub fn write_roi_histogram<W: Write>(w: W, s: &RoiStats) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["axis", "bin_lo", "bin_hi", "count"]).map_err(csv_err)?;
    for (name, a) in AXES.iter().zip(&s.axes) {
        for &(lo, n) in &a.histogram {
            wr.write_record([name.to_string(), lo.to_string(), (lo + s.bin_width).to_string(), n.to_string()])
                .map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| IoError::io(Path::new("<csv>"), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(text: &str) -> Result<PredictionSet, IoError> {
        read_predictions_from(text.as_bytes())
    }

    #[test]
    fn one_record() {
        let p = preds("sample_id,score,label\na,0.7,1\n").unwrap();
        assert_eq!(p.records(), &[Record::new("a", 0.7, 1, None)]);
    }

    #[test]
    fn score_out_of_range() {
        assert!(matches!(
            preds("sample_id,score,label\na,0.7,1\nb,1.3,0\n"),
            Err(IoError::Range { line: 3, .. })
        ));
    }

    #[test]
    fn duplicates_and_schema() {
        assert!(matches!(
            preds("sample_id,score,label,fold\na,0.1,0,1\nb,0.2,1,1\na,0.3,1,1\n"),
            Err(IoError::Schema { line: 4, .. })
        ));
        assert!(preds("sample_id,score,label,fold\na,0.1,0,1\na,0.3,1,2\n").is_ok());
        assert!(matches!(preds("id,score,label\n"), Err(IoError::Schema { line: 1, .. })));
        assert!(matches!(preds("sample_id,score,label\na,0.1\n"), Err(IoError::Schema { line: 2, .. })));
        assert!(matches!(preds("sample_id,score,label\na,0.1,2\n"), Err(IoError::Schema { line: 2, .. })));
        assert!(matches!(preds("sample_id,score,label\na, 0.1,1\n"), Err(IoError::Schema { .. })));
        assert!(matches!(preds("sample_id,score,label\na,NaN,1\n"), Err(IoError::Range { .. })));
        assert!(matches!(preds(""), Err(IoError::Schema { line: 1, .. })));
    }

    #[test]
    fn predictions_round_trip() {
        let p = PredictionSet::new(vec![
            Record::new("x,1", 0.1 + 0.2, 1, Some(0)),
            Record::new("y\"q", 1e-300, 0, Some(3)),
            Record::new("z", 1.0, 1, Some(3)),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_predictions(&mut buf, &p).unwrap();
        let back = read_predictions_from(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        let mut again = Vec::new();
        write_predictions(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn blank_fold_is_none() {
        let p = preds("sample_id,score,label,fold\na,0.1,0,\nb,0.2,1,4\na,0.3,1,\n");
        assert!(matches!(p, Err(IoError::Schema { line: 4, .. })));
        let p = preds("sample_id,score,label,fold\na,0.1,0,\nb,0.2,1,4\n").unwrap();
        assert_eq!(p.records()[0].fold, None);
        assert_eq!(p.records()[1].fold, Some(4));
    }

    #[test]
    fn probmatrix_round_trip() {
        let m = ProbMatrix::new(vec!["a".into(), "b".into()], vec![0, 1], 3, vec![0.1, 0.2, 0.3, 1.0, 0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_probmatrix(&mut buf, &m).unwrap();
        assert!(buf.starts_with(b"sample_id,label,p_0,p_1,p_2\n"));
        assert_eq!(read_probmatrix_from(buf.as_slice()).unwrap(), m);
        assert!(read_probmatrix_from("sample_id,label,p_0\na,0,0.1\n".as_bytes()).is_err());
        assert!(matches!(
            read_probmatrix_from("sample_id,label,p_0,p_1\na,0,0.1,2\n".as_bytes()),
            Err(IoError::Range { line: 2, .. })
        ));
    }

    #[test]
    fn reliability_blanks() {
        let bins = vec![ReliabilityBin {
            lo: 0.0,
            hi: 0.5,
            mean_pred: None,
            pos_rate: None,
            count: 0,
        }];
        let mut buf = Vec::new();
        write_reliability(&mut buf, &bins).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_lo,bin_hi,mean_pred,pos_rate,count\n0,0.5,,,0\n");
    }

    #[test]
    fn batches_lines() {
        let mut buf = Vec::new();
        write_batches(&mut buf, &[vec![3, 1], vec![0, 2]]).unwrap();
        assert_eq!(buf, b"3,1\n0,2\n");
    }
}
