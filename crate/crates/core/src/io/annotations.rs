use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::Candidate;
use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::geometry::{AABox, Polygon};
use crate::label::AnnotationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetFormat {
    Icdar2015,
    Ctw1500,
    TotalText,
    CanonicalJsonl,
}

impl DatasetFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::Icdar2015 => "icdar2015",
            DatasetFormat::Ctw1500 => "ctw1500",
            DatasetFormat::TotalText => "totaltext",
            DatasetFormat::CanonicalJsonl => "canonical_jsonl",
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "icdar2015" | "icdar" => Ok(DatasetFormat::Icdar2015),
            "ctw1500" | "ctw" => Ok(DatasetFormat::Ctw1500),
            "totaltext" | "total_text" => Ok(DatasetFormat::TotalText),
            "canonical_jsonl" | "canonical" | "jsonl" => Ok(DatasetFormat::CanonicalJsonl),
            other => Err(Error::InvalidConfig(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// CTW1500 lines carry `xmin,ymin,xmax,ymax` followed by 28 offsets
    /// relative to `(xmin, ymin)`.
    pub ctw_relative: bool,
}

const CTW_POINTS: usize = 14;

/// Parses an annotation file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_annotations(text: &str, format: DatasetFormat, opts: ParseOptions) -> Result<Vec<AnnotationRecord>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    match format {
        DatasetFormat::TotalText => parse_totaltext(text),
        _ => {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let rec = match format {
                    DatasetFormat::Icdar2015 => parse_icdar_line(line),
                    DatasetFormat::Ctw1500 => parse_ctw_line(line, opts.ctw_relative),
                    _ => parse_canonical_line(line).and_then(CanonicalRow::into_record),
                };
                out.push(rec.map_err(|e| at_line(e, i + 1))?);
            }
            Ok(out)
        }
    }
}

fn at_line(e: Error, line: usize) -> Error {
    match e {
        Error::Parse { message, .. } => Error::Parse { line, message },
        other => Error::Parse {
            line,
            message: other.to_string(),
        },
    }
}

fn bad(message: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        message: message.into(),
    }
}

fn number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v: f64 = s.parse().map_err(|_| bad(format!("bad number {s:?}")))?;
    if !v.is_finite() {
        return Err(bad(format!("non-finite number {s:?}")));
    }
    Ok(v)
}

fn ignore_mark(t: &str) -> bool {
    matches!(t.trim(), "###" | "#")
}

fn transcription(t: &str) -> Option<String> {
    let t = t.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn parse_icdar_line(line: &str) -> Result<AnnotationRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() < 8 {
        return Err(bad(format!("expected 8 coordinates, got {} fields", fields.len())));
    }
    let coords = fields[..8].iter().map(|f| number(f)).collect::<Result<Vec<_>>>()?;
    let rest = fields[8..].join(",");
    let mut rec = AnnotationRecord::new(Polygon::from_flat(&coords)?);
    rec.ignore = rest.trim() == "###";
    rec.transcription = transcription(&rest);
    Ok(rec)
}

fn parse_ctw_line(line: &str, relative: bool) -> Result<AnnotationRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    let n = if relative { 4 + 2 * CTW_POINTS } else { 2 * CTW_POINTS };
    if fields.len() < n {
        return Err(bad(format!("expected {n} numbers, got {} fields", fields.len())));
    }
    let nums = fields[..n].iter().map(|f| number(f)).collect::<Result<Vec<_>>>()?;
    let coords: Vec<f64> = if relative {
        let (x0, y0) = (nums[0], nums[1]);
        nums[4..].chunks_exact(2).flat_map(|c| [x0 + c[0], y0 + c[1]]).collect()
    } else {
        nums
    };
    let rest = fields[n..].join(",");
    let mut rec = AnnotationRecord::new(Polygon::from_flat(&coords)?);
    rec.ignore = ignore_mark(&rest);
    rec.transcription = transcription(&rest);
    Ok(rec)
}

/// Total-Text txt export:
/// `x: [[x1 x2 ...]], y: [[y1 y2 ...]], ornt: [u'c'], transcriptions: [u'word']`.
/// A record may wrap over several lines; each record starts with `x:`.
fn parse_totaltext(text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut chunks: Vec<(usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with("x:") {
            chunks.push((i + 1, t.to_string()));
        } else if let Some((_, buf)) = chunks.last_mut() {
            buf.push(' ');
            buf.push_str(t);
        } else {
            return Err(Error::Parse {
                line: i + 1,
                message: "record must start with \"x:\"".into(),
            });
        }
    }
    chunks
        .into_iter()
        .map(|(line, chunk)| parse_totaltext_record(&chunk).map_err(|e| at_line(e, line)))
        .collect()
}

fn bracketed<'a>(chunk: &'a str, key: &str) -> Result<&'a str> {
    let start = chunk.find(key).ok_or_else(|| bad(format!("missing {key:?}")))?;
    let after = &chunk[start + key.len()..];
    let open = after
        .find('[')
        .ok_or_else(|| bad(format!("missing '[' after {key:?}")))?;
    let close = after[open..]
        .find(']')
        .ok_or_else(|| bad(format!("unclosed list after {key:?}")))?;
    Ok(after[open..open + close].trim_start_matches('['))
}

fn parse_totaltext_record(chunk: &str) -> Result<AnnotationRecord> {
    let list = |key: &str| -> Result<Vec<f64>> {
        bracketed(chunk, key)?
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(number)
            .collect()
    };
    let xs = list("x:")?;
    let ys = list("y:")?;
    if xs.len() != ys.len() {
        return Err(bad(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    let coords: Vec<f64> = xs.iter().zip(&ys).flat_map(|(&x, &y)| [x, y]).collect();
    let mut rec = AnnotationRecord::new(Polygon::from_flat(&coords)?);
    if let Ok(raw) = bracketed(chunk, "transcriptions:") {
        let word = raw
            .trim()
            .trim_start_matches('u')
            .trim_matches(|c| c == '\'' || c == '"');
        rec.ignore = ignore_mark(word);
        rec.transcription = transcription(word);
    }
    Ok(rec)
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalRow {
    polygon: Vec<f64>,
    #[serde(default)]
    ignore: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transcription: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

impl CanonicalRow {
    fn into_record(self) -> Result<AnnotationRecord> {
        Ok(AnnotationRecord {
            polygon: Polygon::from_flat(&self.polygon)?,
            ignore: self.ignore,
            transcription: self.transcription,
        })
    }
}

fn parse_canonical_line(line: &str) -> Result<CanonicalRow> {
    serde_json::from_str(line).map_err(|e| bad(e.to_string()))
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(&row).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn serialize_canonical(records: &[AnnotationRecord]) -> String {
    jsonl(records.iter().map(|r| CanonicalRow {
        polygon: r.polygon.to_flat(),
        ignore: r.ignore,
        transcription: r.transcription.clone(),
        score: None,
    }))
}

/// Detections use the canonical row shape plus `score`.
pub fn serialize_detections(dets: &[Detection]) -> String {
    jsonl(dets.iter().map(|d| CanonicalRow {
        polygon: d.polygon.to_flat(),
        ignore: false,
        transcription: None,
        score: Some(d.score),
    }))
}

/// Reads detection rows; a missing `score` counts as 1.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    rows(text, |line| {
        let row = parse_canonical_line(line)?;
        let score = row.score.unwrap_or(1.0);
        Detection::new(Polygon::from_flat(&row.polygon)?, score)
    })
}

pub fn serialize_candidates(cands: &[Candidate]) -> String {
    jsonl(cands)
}

pub fn parse_candidates(text: &str) -> Result<Vec<Candidate>> {
    rows(text, |line| {
        let c: Candidate = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if !c.confidence.is_finite() {
            return Err(bad("confidence must be finite"));
        }
        Ok(c)
    })
}

#[derive(Serialize)]
struct BoxRow<'a> {
    index: usize,
    bbox: [f64; 4],
    ignore: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    transcription: &'a Option<String>,
}

/// GT-box sidecar: one `{"index", "bbox": [x_tl, y_tl, x_rb, y_rb], "ignore"}`
/// row per annotation.
pub fn serialize_boxes(records: &[AnnotationRecord], boxes: &[AABox]) -> String {
    jsonl(records.iter().zip(boxes).enumerate().map(|(index, (r, b))| BoxRow {
        index,
        bbox: b.to_array(),
        ignore: r.ignore,
        transcription: &r.transcription,
    }))
}

fn rows<T>(text: &str, mut f: impl FnMut(&str) -> Result<T>) -> Result<Vec<T>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| f(l.trim()).map_err(|e| at_line(e, i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use proptest::prelude::*;

    fn parse(text: &str, f: DatasetFormat) -> Result<Vec<AnnotationRecord>> {
        parse_annotations(text, f, ParseOptions::default())
    }

    #[test]
    fn icdar_quad_and_ignore() {
        let recs = parse(
            "0,0,10,0,10,5,0,5,hello\n\n1,1,4,1,4,3,1,3,###\n",
            DatasetFormat::Icdar2015,
        )
        .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].polygon.to_flat(), vec![0., 0., 10., 0., 10., 5., 0., 5.]);
        assert!(!recs[0].ignore);
        assert_eq!(recs[0].transcription.as_deref(), Some("hello"));
        assert!(recs[1].ignore);
    }

    #[test]
    fn icdar_keeps_commas_in_transcription_and_strips_bom() {
        let recs = parse("\u{feff}0,0,1,0,1,1,0,1,a,b", DatasetFormat::Icdar2015).unwrap();
        assert_eq!(recs[0].transcription.as_deref(), Some("a,b"));
    }

    #[test]
    fn icdar_errors_carry_line_numbers() {
        let e = parse("0,0,10,0,10,5,0,5,ok\n0,0,x,0,10,5,0,5,bad", DatasetFormat::Icdar2015).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse("0,0,1,0", DatasetFormat::Icdar2015).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn ctw_absolute_and_relative() {
        let abs: Vec<String> = (0..28).map(|i| (i * 3 % 17).to_string()).collect();
        let recs = parse(&abs.join(","), DatasetFormat::Ctw1500).unwrap();
        assert_eq!(recs[0].polygon.len(), 14);
        let mut rel = vec!["10".to_string(), "20".into(), "50".into(), "60".into()];
        rel.extend((0..28).map(|i| i.to_string()));
        let line = rel.join(",") + ",###";
        let recs = parse_annotations(&line, DatasetFormat::Ctw1500, ParseOptions { ctw_relative: true }).unwrap();
        assert_eq!(recs[0].polygon.vertices()[1], Point2::new(12.0, 23.0));
        assert!(recs[0].ignore);
        assert!(parse(&abs[..27].join(","), DatasetFormat::Ctw1500).is_err());
    }

    #[test]
    fn totaltext_multiline_record() {
        let text = "x: [[115 503 494 115]], y: [[322 346 426 404]], ornt: [u'h'], transcriptions: [u'ASTRO']\n\
                    x: [[1 9 9\n 1]], y: [[1 1 5 5]], ornt: [u'#'],\n transcriptions: [u'#']\n";
        let recs = parse(text, DatasetFormat::TotalText).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].transcription.as_deref(), Some("ASTRO"));
        assert_eq!(recs[0].polygon.vertices()[1], Point2::new(503.0, 346.0));
        assert!(recs[1].ignore);
        assert_eq!(recs[1].polygon.len(), 4);
        let e = parse("x: [[1 2 3]], y: [[1 2]]", DatasetFormat::TotalText).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn canonical_errors() {
        let e = parse("{\"polygon\":[0,0,1,0,1,1,0]}", DatasetFormat::CanonicalJsonl).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(parse("not json", DatasetFormat::CanonicalJsonl).is_err());
    }

    #[test]
    fn detections_and_candidates_round_trip() {
        let poly = Polygon::from_flat(&[0.1, 0.2, 5.0, 0.0, 3.3, 4.4]).unwrap();
        let dets = vec![Detection::new(poly, 0.123456789).unwrap()];
        assert_eq!(parse_detections(&serialize_detections(&dets)).unwrap(), dets);
        let d = parse_detections("{\"polygon\":[0,0,1,0,1,1]}").unwrap();
        assert_eq!(d[0].score, 1.0);
        let cands = vec![Candidate {
            row: 3,
            col: 4,
            confidence: 0.75,
        }];
        assert_eq!(parse_candidates(&serialize_candidates(&cands)).unwrap(), cands);
    }

    #[test]
    fn format_names() {
        for f in [
            DatasetFormat::Icdar2015,
            DatasetFormat::Ctw1500,
            DatasetFormat::TotalText,
            DatasetFormat::CanonicalJsonl,
        ] {
            assert_eq!(f.as_str().parse::<DatasetFormat>().unwrap(), f);
        }
        assert!("coco".parse::<DatasetFormat>().is_err());
    }

    proptest! {
        #[test]
        fn canonical_round_trip_is_exact(
            coords in prop::collection::vec(-1e6f64..1e6, 3..12),
            ignore in any::<bool>(),
            word in prop::option::of("[a-zA-Z0-9 ,\"#]{0,8}"),
        ) {
            let flat: Vec<f64> = coords.iter().flat_map(|&c| [c, c * 0.37 + 1.0 / 3.0]).collect();
            let rec = AnnotationRecord {
                polygon: Polygon::from_flat(&flat).unwrap(),
                ignore,
                transcription: word.filter(|w| !w.is_empty()),
            };
            let text = serialize_canonical(std::slice::from_ref(&rec));
            let back = parse(&text, DatasetFormat::CanonicalJsonl).unwrap();
            prop_assert_eq!(back, vec![rec]);
        }
    }
}
