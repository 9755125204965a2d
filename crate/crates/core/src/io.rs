//! File formats.
//!
//! * Annotation file: CSV with header `video_id,participant_id,lag,response`.
//!   Lines starting with `#` are comments; writers emit `# format_version=1`.
//! * Score file: JSON lines. An optional first line
//!   `{"format_version":1,"kind":"decay_scores",...}` carries provenance; every
//!   other line is `{"video_id":..,"m80":..,"alpha":..,"ref_lag":..,"n":..}`.
//! * Evaluation and consistency reports: one JSON object.
//! * Plot tables: CSV with a `# format_version=1` comment and a header row.
//!
//! Reals are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{DecileTable, TrendComparison};
use crate::error::{Error, Result};
use crate::metrics::FORMAT_VERSION;
use crate::model::{AnnotationRecord, DecayCurve, FitProvenance, VideoScoreTable};

pub const ANNOTATION_COLUMNS: [&str; 4] = ["video_id", "participant_id", "lag", "response"];

/// Source column names for the four annotation fields.
///
/// The default expects the canonical header exactly. A custom map (for a
/// third-party export) only requires the named columns to be present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub video_id: String,
    pub participant_id: String,
    pub lag: String,
    pub response: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            video_id: "video_id".into(),
            participant_id: "participant_id".into(),
            lag: "lag".into(),
            response: "response".into(),
        }
    }
}

impl ColumnMap {
    fn is_canonical(&self) -> bool {
        *self == Self::default()
    }
}

/// Parses `field=column` pairs separated by commas, e.g.
/// `video_id=url,participant_id=worker,lag=lag_videos,response=hit`.
/// Unmentioned fields keep their canonical names.
impl FromStr for ColumnMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for pair in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (field, column) = pair.split_once('=').ok_or_else(|| {
                Error::InvalidValue(format!("column mapping `{pair}` is not FIELD=COLUMN"))
            })?;
            let column = column.trim().to_owned();
            match field.trim() {
                "video_id" => map.video_id = column,
                "participant_id" => map.participant_id = column,
                "lag" => map.lag = column,
                "response" => map.response = column,
                other => {
                    return Err(Error::InvalidValue(format!(
                        "unknown annotation field `{other}` in column mapping"
                    )))
                }
            }
        }
        Ok(map)
    }
}

/// Counts printed after ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_records: usize,
    pub n_videos: usize,
    pub n_participants: usize,
    pub lag_min: u32,
    pub lag_max: u32,
}

impl IngestSummary {
    pub fn of(records: &[AnnotationRecord]) -> Self {
        let videos: BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
        let participants: BTreeSet<&str> =
            records.iter().map(|r| r.participant_id.as_str()).collect();
        Self {
            n_records: records.len(),
            n_videos: videos.len(),
            n_participants: participants.len(),
            lag_min: records.iter().map(|r| r.lag).min().unwrap_or(0),
            lag_max: records.iter().map(|r| r.lag).max().unwrap_or(0),
        }
    }
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} annotations, {} videos, {} participants, lags {}..={}",
            self.n_records, self.n_videos, self.n_participants, self.lag_min, self.lag_max
        )
    }
}

/// An ingested annotation file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<AnnotationRecord>,
    pub summary: IngestSummary,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates an annotation file.
pub fn ingest(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Ingested> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let records = read_annotations(bytes.as_slice(), &path.display().to_string(), columns)?;
    Ok(Ingested {
        summary: IngestSummary::of(&records),
        sha256: sha256_hex(&bytes),
        records,
    })
}

/// Parses annotation CSV from any reader. `source_name` prefixes errors.
pub fn read_annotations<R: Read>(
    reader: R,
    source_name: &str,
    columns: &ColumnMap,
) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let schema = |line: u64, message: String| Error::Schema {
        source_name: source_name.to_owned(),
        line,
        message,
    };
    let value = |line: u64, message: String| Error::Value {
        source_name: source_name.to_owned(),
        line,
        message,
    };

    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Err(schema(1, "missing header row".into())),
        Some(h) => h.map_err(|e| csv_schema_error(source_name, e))?,
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let names: Vec<&str> = header.iter().collect();
    let idx = if columns.is_canonical() {
        if names != ANNOTATION_COLUMNS {
            return Err(schema(
                header_line,
                format!(
                    "header must be exactly `{}`, found `{}`",
                    ANNOTATION_COLUMNS.join(","),
                    names.join(",")
                ),
            ));
        }
        [0, 1, 2, 3]
    } else {
        let find = |col: &str| {
            names
                .iter()
                .position(|n| *n == col)
                .ok_or_else(|| schema(header_line, format!("mapped column `{col}` not in header")))
        };
        [
            find(&columns.video_id)?,
            find(&columns.participant_id)?,
            find(&columns.lag)?,
            find(&columns.response)?,
        ]
    };

    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_schema_error(source_name, e))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != names.len() {
            return Err(schema(
                line,
                format!("expected {} fields, found {}", names.len(), row.len()),
            ));
        }
        let field = |i: usize| row.get(idx[i]).unwrap_or("");
        let video_id = field(0);
        let participant_id = field(1);
        if video_id.is_empty() {
            return Err(value(line, "empty video_id".into()));
        }
        if participant_id.is_empty() {
            return Err(value(line, "empty participant_id".into()));
        }
        let lag: u32 = field(2).parse().ok().filter(|&l| l >= 1).ok_or_else(|| {
            value(
                line,
                format!("lag must be an integer >= 1, found `{}`", field(2)),
            )
        })?;
        let response = match field(3) {
            "0" => false,
            "1" => true,
            other => {
                return Err(value(
                    line,
                    format!("response must be 0 or 1, found `{other}`"),
                ))
            }
        };
        out.push(AnnotationRecord {
            video_id: video_id.to_owned(),
            participant_id: participant_id.to_owned(),
            lag,
            response,
        });
    }
    Ok(out)
}

fn csv_schema_error(source_name: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Schema {
        source_name: source_name.to_owned(),
        line,
        message: e.to_string(),
    }
}

/// Writes records in the canonical annotation format.
pub fn write_annotations<W: Write>(mut w: W, records: &[AnnotationRecord]) -> Result<()> {
    writeln!(w, "# format_version={FORMAT_VERSION}").map_err(io_err)?;
    let mut wtr = csv::WriterBuilder::new().from_writer(w);
    wtr.write_record(ANNOTATION_COLUMNS)?;
    for r in records {
        let lag = r.lag.to_string();
        wtr.write_record([
            r.video_id.as_str(),
            r.participant_id.as_str(),
            lag.as_str(),
            if r.response { "1" } else { "0" },
        ])?;
    }
    wtr.flush().map_err(io_err)?;
    Ok(())
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<output>".into(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreHeader {
    format_version: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<FitProvenance>,
}

const SCORE_KIND: &str = "decay_scores";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRow {
    video_id: String,
    m80: f64,
    alpha: f64,
    ref_lag: u32,
    n: u64,
}

/// Writes a score table as JSON lines, header first.
pub fn write_scores<W: Write>(mut w: W, table: &VideoScoreTable) -> Result<()> {
    let header = ScoreHeader {
        format_version: FORMAT_VERSION,
        kind: SCORE_KIND.into(),
        provenance: table.provenance.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w).map_err(io_err)?;
    for (id, c) in table.iter() {
        let row = ScoreRow {
            video_id: id.to_owned(),
            m80: c.m_ref,
            alpha: c.alpha,
            ref_lag: c.ref_lag,
            n: c.n_annotations,
        };
        serde_json::to_writer(&mut w, &row)?;
        writeln!(w).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a score file. The header line is optional.
pub fn read_scores<R: Read>(reader: R, source_name: &str) -> Result<VideoScoreTable> {
    let schema = |line: u64, message: String| Error::Schema {
        source_name: source_name.to_owned(),
        line,
        message,
    };
    let mut table = VideoScoreTable::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| Error::Io {
            path: source_name.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| schema(line_no, e.to_string()))?;
        if value.get("format_version").is_some() {
            if line_no != 1 {
                return Err(schema(
                    line_no,
                    "header object must be the first line".into(),
                ));
            }
            let h: ScoreHeader =
                serde_json::from_value(value).map_err(|e| schema(line_no, e.to_string()))?;
            if h.format_version != FORMAT_VERSION || h.kind != SCORE_KIND {
                return Err(schema(
                    line_no,
                    format!(
                        "unsupported score file (format_version={}, kind={})",
                        h.format_version, h.kind
                    ),
                ));
            }
            table.provenance = h.provenance;
            continue;
        }
        let row: ScoreRow =
            serde_json::from_value(value).map_err(|e| schema(line_no, e.to_string()))?;
        let curve =
            DecayCurve::new(row.m80, row.alpha, row.ref_lag, row.n).map_err(|e| Error::Value {
                source_name: source_name.to_owned(),
                line: line_no,
                message: e.to_string(),
            })?;
        table
            .insert(row.video_id, curve)
            .map_err(|e| Error::Value {
                source_name: source_name.to_owned(),
                line: line_no,
                message: e.to_string(),
            })?;
    }
    Ok(table)
}

pub fn read_scores_file(path: impl AsRef<Path>) -> Result<VideoScoreTable> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    read_scores(bytes.as_slice(), &path.display().to_string())
}

/// Writes any report as a single JSON object followed by a newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(io_err)?;
    Ok(())
}

/// `group,lag_bin,lag_bin_center,mean_hit_rate,n`; empty cells have a blank
/// mean.
pub fn write_decile_table<W: Write>(mut w: W, table: &DecileTable) -> Result<()> {
    writeln!(w, "# format_version={FORMAT_VERSION}").map_err(io_err)?;
    writeln!(w, "# grouping={}", table.grouping).map_err(io_err)?;
    let sizes: Vec<String> = table.group_sizes.iter().map(usize::to_string).collect();
    writeln!(w, "# group_sizes={}", sizes.join(";")).map_err(io_err)?;
    writeln!(w, "group,lag_bin,lag_bin_center,mean_hit_rate,n").map_err(io_err)?;
    for r in &table.rows {
        let mean = r.mean_hit_rate.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.group, r.lag_bin, r.lag_bin_center, mean, r.n
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// `lag_bin_center,log_lag_bin_center,mean_hit_rate,n` with both
/// correlations in comment lines.
pub fn write_trend_table<W: Write>(mut w: W, trend: &TrendComparison) -> Result<()> {
    writeln!(w, "# format_version={FORMAT_VERSION}").map_err(io_err)?;
    writeln!(w, "# r_linear={}", trend.r_linear).map_err(io_err)?;
    writeln!(w, "# r_loglinear={}", trend.r_loglinear).map_err(io_err)?;
    writeln!(w, "lag_bin_center,log_lag_bin_center,mean_hit_rate,n").map_err(io_err)?;
    for b in &trend.bins {
        writeln!(
            w,
            "{},{},{},{}",
            b.lag_bin_center,
            b.lag_bin_center.ln(),
            b.mean_hit_rate,
            b.n
        )
        .map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Vec<AnnotationRecord>> {
        read_annotations(text.as_bytes(), "test.csv", &ColumnMap::default())
    }

    #[test]
    fn reads_valid_file() {
        let text = "video_id,participant_id,lag,response\nv1,p1,40,1\nv1,p2,120,0\nv2,p1,9,1\n";
        let recs = parse(text).unwrap();
        assert_eq!(recs.len(), 3);
        let s = IngestSummary::of(&recs);
        assert_eq!(
            (s.n_videos, s.n_participants, s.lag_min, s.lag_max),
            (2, 2, 9, 120)
        );
    }

    #[test]
    fn rejects_bad_response_with_line() {
        let text = "video_id,participant_id,lag,response\nv1,p1,40,1\nv1,p2,120,2\n";
        match parse(text) {
            Err(Error::Value { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("response"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_lag_and_header() {
        let zero_lag = "video_id,participant_id,lag,response\nv1,p1,0,1\n";
        assert!(matches!(parse(zero_lag), Err(Error::Value { line: 2, .. })));
        let text_lag = "video_id,participant_id,lag,response\nv1,p1,abc,1\n";
        assert!(matches!(parse(text_lag), Err(Error::Value { line: 2, .. })));
        let swapped = "participant_id,video_id,lag,response\np1,v1,3,1\n";
        assert!(matches!(parse(swapped), Err(Error::Schema { line: 1, .. })));
        let short = "video_id,participant_id,lag,response\nv1,p1,3\n";
        assert!(matches!(parse(short), Err(Error::Schema { line: 2, .. })));
        assert!(matches!(parse(""), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn comment_lines_skipped() {
        let text = "# format_version=1\nvideo_id,participant_id,lag,response\nv1,p1,40,1\n";
        assert_eq!(parse(text).unwrap().len(), 1);
        let bad = "# format_version=1\nvideo_id,participant_id,lag,response\nv1,p1,40,7\n";
        assert!(matches!(parse(bad), Err(Error::Value { line: 3, .. })));
    }

    #[test]
    fn column_mapping() {
        let map: ColumnMap = "video_id=url,participant_id=worker,lag=t,response=hit"
            .parse()
            .unwrap();
        let text = "worker,extra,url,hit,t\nw1,x,clip.mp4,1,55\n";
        let recs = read_annotations(text.as_bytes(), "export.csv", &map).unwrap();
        assert_eq!(
            recs,
            [AnnotationRecord::new("clip.mp4", "w1", 55, true).unwrap()]
        );
        let missing: ColumnMap = "lag=delay".parse().unwrap();
        assert!(read_annotations(text.as_bytes(), "x", &missing).is_err());
        assert!("colour=red".parse::<ColumnMap>().is_err());
    }

    #[test]
    fn score_file_rejects_garbage() {
        let bad = "{\"video_id\":\"a\",\"m80\":0.5}\n";
        assert!(matches!(
            read_scores(bad.as_bytes(), "s"),
            Err(Error::Schema { line: 1, .. })
        ));
        let dup = "{\"video_id\":\"a\",\"m80\":0.5,\"alpha\":0,\"ref_lag\":80,\"n\":3}\n\
                   {\"video_id\":\"a\",\"m80\":0.5,\"alpha\":0,\"ref_lag\":80,\"n\":3}\n";
        assert!(matches!(
            read_scores(dup.as_bytes(), "s"),
            Err(Error::Value { line: 2, .. })
        ));
        let late_header = "{\"video_id\":\"a\",\"m80\":0.5,\"alpha\":0,\"ref_lag\":80,\"n\":3}\n\
                           {\"format_version\":1,\"kind\":\"decay_scores\"}\n";
        assert!(read_scores(late_header.as_bytes(), "s").is_err());
    }

    fn arb_table() -> impl Strategy<Value = VideoScoreTable> {
        prop::collection::btree_map(
            "[a-z0-9_]{1,8}",
            (any::<f64>(), any::<f64>(), 1u32..500, 1u64..10_000),
            0..20,
        )
        .prop_map(|m| {
            m.into_iter()
                .filter(|(_, (a, b, _, _))| {
                    a.is_finite() && b.is_finite() && (a - b * 500.0).is_finite()
                })
                .map(|(k, (m, a, t, n))| (k, DecayCurve::new(m, a, t, n).unwrap()))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn score_file_round_trip(mut table in arb_table(), with_prov: bool) {
            if with_prov {
                table.provenance = Some(FitProvenance {
                    fit_config: Default::default(),
                    input_sha256: Some(sha256_hex(b"x")),
                });
            }
            let mut buf = Vec::new();
            write_scores(&mut buf, &table).unwrap();
            let back = read_scores(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, table);
        }

        #[test]
        fn annotation_round_trip(rows in prop::collection::vec(("[a-z0-9]{1,6}", "[a-z0-9]{1,6}", 1u32..1000, any::<bool>()), 0..50)) {
            let records: Vec<AnnotationRecord> = rows.into_iter()
                .map(|(v, p, l, r)| AnnotationRecord::new(v, p, l, r).unwrap()).collect();
            let mut buf = Vec::new();
            write_annotations(&mut buf, &records).unwrap();
            prop_assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), records);
        }
    }
}
