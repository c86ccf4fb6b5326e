//! On-disk formats: manifest, detection and recognition tables, curve and
//! summary reports, plots, and the augmentation audit log.
//!
//! Submissions are flat CSV (UTF-8, '.' decimal separator, mandatory header
//! row); writers prepend a `#`-comment version line which readers skip.
//! Rejected rows always carry their line number. A JSON manifest variant
//! carries metadata that does not flatten well: face-free images and the
//! per-identity training-day map. Writers are byte-deterministic: identical
//! inputs produce identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::AugmentAudit;
use crate::curves::{Curve, CurveKind, OperatingPoint, SummaryTable};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::matching::{Candidate, DetectionRecord, RecognitionRecord};
use crate::protocol::{FaceAnnotation, IdentityLabel, MaskingCategory, ProtocolManifest, Split};

pub const MANIFEST_VERSION_LINE: &str = "# faceval manifest v1";
pub const DETECTION_VERSION_LINE: &str = "# faceval detections v1";
pub const RECOGNITION_VERSION_LINE: &str = "# faceval recognitions v1";
pub const CURVE_VERSION_LINE: &str = "# faceval curve v1";

const MANIFEST_HEADER: [&str; 8] = [
    "IMAGE_ID", "DAY_ID", "X", "Y", "WIDTH", "HEIGHT", "LABEL", "CATEGORY",
];
const DETECTION_HEADER: [&str; 6] = ["IMAGE_ID", "X", "Y", "WIDTH", "HEIGHT", "CONFIDENCE"];
const RECOGNITION_FIXED_HEADER: [&str; 5] = ["IMAGE_ID", "X", "Y", "WIDTH", "HEIGHT"];

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path_str(path), io),
            other => Error::Validation(format!("{}: {other:?}", path_str(path))),
        })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rows = Vec::new();
    for item in reader(path)?.records() {
        let record = item.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path_str(path), line, e.to_string())
        })?;
        // skip blank records
        if record.len() == 1 && record.get(0).map(str::is_empty).unwrap_or(true) {
            continue;
        }
        rows.push(record);
    }
    Ok(rows)
}

fn check_header(path: &Path, rows: &[csv::StringRecord], expected: &[&str]) -> Result<()> {
    let Some(header) = rows.first() else {
        return Err(Error::parse(path_str(path), 0, "file has no header row"));
    };
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::parse(
            path_str(path),
            record_line(header),
            format!("unexpected header {got:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: u64, field: &str, value: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|_| {
        Error::parse(
            path_str(path),
            line,
            format!("field {field} is not a number: {value:?}"),
        )
    })
}

fn parse_i64(path: &Path, line: u64, field: &str, value: &str) -> Result<i64> {
    value.trim().parse::<i64>().map_err(|_| {
        Error::parse(
            path_str(path),
            line,
            format!("field {field} is not an integer: {value:?}"),
        )
    })
}

fn parse_bbox(path: &Path, line: u64, fields: [&str; 4]) -> Result<BoundingBox> {
    let x = parse_f64(path, line, "X", fields[0])?;
    let y = parse_f64(path, line, "Y", fields[1])?;
    let w = parse_f64(path, line, "WIDTH", fields[2])?;
    let h = parse_f64(path, line, "HEIGHT", fields[3])?;
    BoundingBox::new(x, y, w, h).map_err(|e| Error::parse(path_str(path), line, e.to_string()))
}

fn with_line<T>(path: &Path, line: u64, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::parse(path_str(path), line, e.to_string()))
}

struct FileWriter {
    path: PathBuf,
    buffer: Vec<u8>,
}

impl FileWriter {
    fn new(path: &Path) -> Self {
        FileWriter {
            path: path.to_path_buf(),
            buffer: Vec::new(),
        }
    }

    fn line(&mut self, text: &str) {
        self.buffer.extend_from_slice(text.as_bytes());
        self.buffer.push(b'\n');
    }

    fn csv_row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fields: Vec<String> = fields.into_iter().map(|f| f.as_ref().to_string()).collect();
        // a bare '#' at line start would read back as a comment line
        let style = if fields.first().map(|f| f.starts_with('#')).unwrap_or(false) {
            csv::QuoteStyle::Always
        } else {
            csv::QuoteStyle::Necessary
        };
        let mut writer = csv::WriterBuilder::new()
            .quote_style(style)
            .from_writer(Vec::new());
        writer
            .write_record(&fields)
            .expect("writing to memory cannot fail");
        self.buffer
            .extend_from_slice(&writer.into_inner().expect("flushed"));
    }

    fn finish(self) -> Result<()> {
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(path_str(&self.path), e))?;
            }
        }
        let mut file =
            fs::File::create(&self.path).map_err(|e| Error::io(path_str(&self.path), e))?;
        file.write_all(&self.buffer)
            .map_err(|e| Error::io(path_str(&self.path), e))
    }
}

fn fnum(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// manifests

/// Loads a manifest, picking the format by extension: `.json` for the
/// metadata-rich variant, CSV otherwise. CSV manifests do not embed their
/// split, so the caller supplies it.
pub fn load_manifest(path: impl AsRef<Path>, csv_split: Split) -> Result<ProtocolManifest> {
    let path = path.as_ref();
    if path.extension().map(|e| e == "json").unwrap_or(false) {
        load_manifest_json(path)
    } else {
        load_manifest_csv(path, csv_split)
    }
}

pub fn load_manifest_csv(path: impl AsRef<Path>, split: Split) -> Result<ProtocolManifest> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    check_header(path, &rows, &MANIFEST_HEADER)?;
    let mut annotations = Vec::with_capacity(rows.len().saturating_sub(1));
    for row in &rows[1..] {
        let line = record_line(row);
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::parse(
                path_str(path),
                line,
                format!(
                    "expected {} fields, got {}",
                    MANIFEST_HEADER.len(),
                    row.len()
                ),
            ));
        }
        let bbox = parse_bbox(path, line, [&row[2], &row[3], &row[4], &row[5]])?;
        let label = with_line(
            path,
            line,
            IdentityLabel::new(parse_i64(path, line, "LABEL", &row[6])?),
        )?;
        let category = with_line(path, line, MaskingCategory::from_code(row[7].trim()))?;
        let annotation = FaceAnnotation {
            image_id: row[0].to_string(),
            day_id: row[1].to_string(),
            bbox,
            label,
            category,
        };
        with_line(path, line, annotation.validate().map(|_| ()))?;
        annotations.push(annotation);
    }
    ProtocolManifest::new(split, annotations, None)
}

pub fn write_manifest_csv(manifest: &ProtocolManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut out = FileWriter::new(path.as_ref());
    out.line(MANIFEST_VERSION_LINE);
    out.csv_row(MANIFEST_HEADER);
    for ann in manifest.annotations() {
        out.csv_row([
            ann.image_id.as_str(),
            ann.day_id.as_str(),
            &fnum(ann.bbox.x),
            &fnum(ann.bbox.y),
            &fnum(ann.bbox.width),
            &fnum(ann.bbox.height),
            &ann.label.to_string(),
            ann.category.code(),
        ]);
    }
    out.finish()
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    format: String,
    version: u32,
    split: Split,
    #[serde(default)]
    images: Vec<String>,
    annotations: Vec<AnnotationDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training_days: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationDoc {
    image_id: String,
    day_id: String,
    x: f64,
    y: f64,
    width: f64,
    height: f64,
    label: i64,
    category: String,
}

pub fn load_manifest_json(path: impl AsRef<Path>) -> Result<ProtocolManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let doc: ManifestDoc = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path_str(path), e.line() as u64, e.to_string()))?;
    if doc.format != "faceval-manifest" || doc.version != 1 {
        return Err(Error::Validation(format!(
            "{}: unsupported manifest format {:?} v{}",
            path_str(path),
            doc.format,
            doc.version
        )));
    }
    let mut annotations = Vec::with_capacity(doc.annotations.len());
    for a in &doc.annotations {
        annotations.push(FaceAnnotation {
            image_id: a.image_id.clone(),
            day_id: a.day_id.clone(),
            bbox: BoundingBox::new(a.x, a.y, a.width, a.height)?,
            label: IdentityLabel::new(a.label)?,
            category: MaskingCategory::from_code(&a.category)?,
        });
    }
    let mut manifest = ProtocolManifest::new(doc.split, annotations, doc.images)?;
    if let Some(days) = doc.training_days {
        let mut map = BTreeMap::new();
        for (label, day_list) in days {
            let id: i64 = label.parse().map_err(|_| {
                Error::Validation(format!("training_days key {label:?} is not an identity"))
            })?;
            map.insert(id, day_list.into_iter().collect());
        }
        manifest.set_training_days(map);
    }
    Ok(manifest)
}

pub fn write_manifest_json(manifest: &ProtocolManifest, path: impl AsRef<Path>) -> Result<()> {
    let doc = ManifestDoc {
        format: "faceval-manifest".to_string(),
        version: 1,
        split: manifest.split(),
        images: manifest.images().iter().cloned().collect(),
        annotations: manifest
            .annotations()
            .iter()
            .map(|a| AnnotationDoc {
                image_id: a.image_id.clone(),
                day_id: a.day_id.clone(),
                x: a.bbox.x,
                y: a.bbox.y,
                width: a.bbox.width,
                height: a.bbox.height,
                label: a.label.value(),
                category: a.category.code().to_string(),
            })
            .collect(),
        training_days: if manifest.training_days().is_empty() {
            None
        } else {
            Some(
                manifest
                    .training_days()
                    .iter()
                    .map(|(id, days)| (id.to_string(), days.iter().cloned().collect()))
                    .collect(),
            )
        },
    };
    let mut out = FileWriter::new(path.as_ref());
    out.line(&serde_json::to_string_pretty(&doc).expect("manifest serializes"));
    out.finish()
}

// ---------------------------------------------------------------------------
// submissions

pub fn parse_detection_file(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    check_header(path, &rows, &DETECTION_HEADER)?;
    let mut records = Vec::with_capacity(rows.len().saturating_sub(1));
    for row in &rows[1..] {
        let line = record_line(row);
        if row.len() != DETECTION_HEADER.len() {
            return Err(Error::parse(
                path_str(path),
                line,
                format!(
                    "expected {} fields, got {}",
                    DETECTION_HEADER.len(),
                    row.len()
                ),
            ));
        }
        let bbox = parse_bbox(path, line, [&row[1], &row[2], &row[3], &row[4]])?;
        let confidence = parse_f64(path, line, "CONFIDENCE", &row[5])?;
        let record = with_line(path, line, DetectionRecord::new(&row[0], bbox, confidence))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_detection_file(records: &[DetectionRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = FileWriter::new(path.as_ref());
    out.line(DETECTION_VERSION_LINE);
    out.csv_row(DETECTION_HEADER);
    for r in records {
        out.csv_row([
            r.image_id.as_str(),
            &fnum(r.bbox.x),
            &fnum(r.bbox.y),
            &fnum(r.bbox.width),
            &fnum(r.bbox.height),
            &fnum(r.confidence),
        ]);
    }
    out.finish()
}

/// Parsed recognition submission. Rows whose candidates arrived out of order
/// are accepted after a stable re-sort; each reorder is reported.
#[derive(Debug, Clone)]
pub struct RecognitionFile {
    pub records: Vec<RecognitionRecord>,
    pub warnings: Vec<String>,
}

fn recognition_header(pairs: usize) -> Vec<String> {
    let mut header: Vec<String> = RECOGNITION_FIXED_HEADER
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 1..=pairs {
        header.push(format!("LABEL_{k}"));
        header.push(format!("SCORE_{k}"));
    }
    header
}

pub fn parse_recognition_file(path: impl AsRef<Path>) -> Result<RecognitionFile> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    let Some(header) = rows.first() else {
        return Err(Error::parse(path_str(path), 0, "file has no header row"));
    };
    let fields = header.len();
    let fixed = RECOGNITION_FIXED_HEADER.len();
    if fields < fixed + 2 || !(fields - fixed).is_multiple_of(2) {
        return Err(Error::parse(
            path_str(path),
            record_line(header),
            "header must list the box columns plus at least one (LABEL_k, SCORE_k) pair",
        ));
    }
    let header_pairs = (fields - fixed) / 2;
    if header_pairs > RecognitionRecord::MAX_CANDIDATES {
        return Err(Error::parse(
            path_str(path),
            record_line(header),
            format!(
                "header declares {header_pairs} candidate pairs, at most {} allowed",
                RecognitionRecord::MAX_CANDIDATES
            ),
        ));
    }
    let expected = recognition_header(header_pairs);
    let got: Vec<&str> = header.iter().collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::parse(
            path_str(path),
            record_line(header),
            format!("unexpected header {got:?}, expected {expected:?}"),
        ));
    }

    let mut records = Vec::with_capacity(rows.len().saturating_sub(1));
    let mut warnings = Vec::new();
    for row in &rows[1..] {
        let line = record_line(row);
        if row.len() < fixed + 2 || !(row.len() - fixed).is_multiple_of(2) {
            return Err(Error::parse(
                path_str(path),
                line,
                format!(
                    "expected the box fields plus complete (label, score) pairs, got {} fields",
                    row.len()
                ),
            ));
        }
        let pairs = (row.len() - fixed) / 2;
        if pairs > header_pairs {
            return Err(Error::parse(
                path_str(path),
                line,
                format!("row has {pairs} candidate pairs but the header declares {header_pairs}"),
            ));
        }
        let bbox = parse_bbox(path, line, [&row[1], &row[2], &row[3], &row[4]])?;
        let mut candidates = Vec::with_capacity(pairs);
        for k in 0..pairs {
            let label_field = &row[fixed + 2 * k];
            let score_field = &row[fixed + 2 * k + 1];
            let label = with_line(
                path,
                line,
                IdentityLabel::new(parse_i64(
                    path,
                    line,
                    &format!("LABEL_{}", k + 1),
                    label_field,
                )?),
            )?;
            let score = parse_f64(path, line, &format!("SCORE_{}", k + 1), score_field)?;
            candidates.push(Candidate { label, score });
        }
        let sorted = candidates.windows(2).all(|p| p[0].score >= p[1].score);
        if !sorted {
            candidates.sort_by(|a, b| f64::total_cmp(&b.score, &a.score));
            warnings.push(format!(
                "{}:{line}: candidates reordered by descending score",
                path_str(path)
            ));
        }
        let record = with_line(
            path,
            line,
            RecognitionRecord::new(&row[0], bbox, candidates),
        )?;
        records.push(record);
    }
    Ok(RecognitionFile { records, warnings })
}

pub fn write_recognition_file(records: &[RecognitionRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = FileWriter::new(path.as_ref());
    out.line(RECOGNITION_VERSION_LINE);
    out.csv_row(recognition_header(RecognitionRecord::MAX_CANDIDATES));
    for r in records {
        let mut fields = vec![
            r.image_id.clone(),
            fnum(r.bbox.x),
            fnum(r.bbox.y),
            fnum(r.bbox.width),
            fnum(r.bbox.height),
        ];
        for c in &r.candidates {
            fields.push(c.label.to_string());
            fields.push(fnum(c.score));
        }
        out.csv_row(fields);
    }
    out.finish()
}

// ---------------------------------------------------------------------------
// reports

const CURVE_HEADER: [&str; 5] = ["budget", "threshold", "count", "rate", "saturated"];

pub fn write_curve_csv(curve: &Curve, path: impl AsRef<Path>) -> Result<()> {
    let mut out = FileWriter::new(path.as_ref());
    out.line(CURVE_VERSION_LINE);
    out.line(&format!(
        "# kind={} denominator={}",
        curve.kind, curve.denominator
    ));
    out.csv_row(CURVE_HEADER);
    for p in &curve.points {
        out.csv_row([
            p.budget.to_string(),
            fnum(p.threshold),
            p.positive_count.to_string(),
            fnum(p.rate),
            p.saturated.to_string(),
        ]);
    }
    out.finish()
}

/// Reads back an emitted curve. The per-point admitted-negative count is not
/// part of the format and is restored as zero.
pub fn parse_curve_csv(path: impl AsRef<Path>) -> Result<Curve> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut kind = None;
    let mut denominator = None;
    for line in text.lines().filter(|l| l.starts_with('#')) {
        for token in line.trim_start_matches('#').split_whitespace() {
            if let Some(value) = token.strip_prefix("kind=") {
                kind = Some(value.parse::<CurveKind>()?);
            }
            if let Some(value) = token.strip_prefix("denominator=") {
                denominator = Some(value.parse::<usize>().map_err(|_| {
                    Error::Validation(format!("{}: bad denominator {value:?}", path_str(path)))
                })?);
            }
        }
    }
    let (Some(kind), Some(denominator)) = (kind, denominator) else {
        return Err(Error::Validation(format!(
            "{}: missing kind/denominator comment line",
            path_str(path)
        )));
    };

    let rows = read_rows(path)?;
    check_header(path, &rows, &CURVE_HEADER)?;
    let mut points = Vec::new();
    for row in &rows[1..] {
        let line = record_line(row);
        if row.len() != CURVE_HEADER.len() {
            return Err(Error::parse(
                path_str(path),
                line,
                format!("expected {} fields, got {}", CURVE_HEADER.len(), row.len()),
            ));
        }
        let budget = parse_i64(path, line, "budget", &row[0])? as usize;
        let threshold = parse_f64(path, line, "threshold", &row[1])?;
        let count = parse_i64(path, line, "count", &row[2])? as usize;
        let rate = parse_f64(path, line, "rate", &row[3])?;
        let saturated = match row[4].trim() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::parse(
                    path_str(path),
                    line,
                    format!("field saturated is not a boolean: {other:?}"),
                ))
            }
        };
        points.push(OperatingPoint {
            budget,
            threshold,
            rate,
            positive_count: count,
            negative_count: 0,
            saturated,
        });
    }
    Ok(Curve {
        kind,
        points,
        denominator,
    })
}

/// Writes the budgets-by-participants count table. Saturated cells carry a
/// trailing `*`.
pub fn write_summary_csv(table: &SummaryTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = FileWriter::new(path.as_ref());
    out.line("# faceval summary v1");
    let mut header = vec!["budget".to_string()];
    header.extend(table.participants.iter().cloned());
    out.csv_row(header);
    for (i, budget) in table.budgets.iter().enumerate() {
        let mut fields = vec![budget.to_string()];
        for cell in &table.rows[i] {
            let mut text = cell.positive_count.to_string();
            if cell.saturated {
                text.push('*');
            }
            fields.push(text);
        }
        out.csv_row(fields);
    }
    out.finish()
}

pub fn write_audit_log(audit: &AugmentAudit, path: impl AsRef<Path>) -> Result<()> {
    let mut out = FileWriter::new(path.as_ref());
    for line in &audit.lines {
        out.line(line);
    }
    out.line(&format!(
        "# added={} skipped-duplicates={} assigned={} rejected-assignments={}",
        audit.added, audit.skipped_duplicates, audit.assigned, audit.rejected_assignments
    ));
    out.finish()
}

// ---------------------------------------------------------------------------
// plots

/// Renders one curve as a standalone SVG line chart with a log-scaled budget
/// axis and a [0, 1] rate axis.
pub fn write_curve_svg(curve: &Curve, title: &str, path: impl AsRef<Path>) -> Result<()> {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 30.0;
    const TOP: f64 = 50.0;
    const BOTTOM: f64 = 70.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let budgets: Vec<f64> = curve.points.iter().map(|p| p.budget as f64).collect();
    let (bmin, bmax) = match (budgets.first(), budgets.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a / 2.0, a * 2.0),
        _ => (1.0, 10.0),
    };
    let (lmin, lmax) = (bmin.log10(), bmax.log10());
    let x_of = |budget: f64| LEFT + (budget.log10() - lmin) / (lmax - lmin) * plot_w;
    let y_of = |rate: f64| TOP + (1.0 - rate) * plot_h;

    let x_label = match curve.kind {
        CurveKind::Froc => "false accepts",
        CurveKind::Dir => "false identifications",
        CurveKind::Crr => "correct identifications",
    };
    let y_label = match curve.kind {
        CurveKind::Froc => "detection rate",
        CurveKind::Dir => "identification rate",
        CurveKind::Crr => "correct rejection rate",
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    ));

    // horizontal grid and y ticks
    for i in 0..=4 {
        let rate = i as f64 / 4.0;
        let y = y_of(rate);
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
            W - RIGHT
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"12\">{rate}</text>\n",
            LEFT - 8.0,
            y + 4.0
        ));
    }
    // vertical grid at powers of ten, plus the sampled budgets as ticks
    let first_decade = lmin.ceil() as i64;
    let last_decade = lmax.floor() as i64;
    for d in first_decade..=last_decade {
        let x = x_of(10f64.powi(d as i32));
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{TOP}\" x2=\"{x}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            H - BOTTOM
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"12\">1e{d}</text>\n",
            H - BOTTOM + 18.0
        ));
    }

    // axes
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - BOTTOM
    ));
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">{x_label}</text>\n",
        LEFT + plot_w / 2.0,
        H - 22.0
    ));
    svg.push_str(&format!(
        "<text x=\"22\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\" transform=\"rotate(-90 22 {})\">{y_label}</text>\n",
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    ));

    // the curve itself: straight segments between sampled points
    let coords: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{},{}", x_of(p.budget as f64), y_of(p.rate)))
        .collect();
    if coords.len() > 1 {
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
            coords.join(" ")
        ));
    }
    for p in &curve.points {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
            x_of(p.budget as f64),
            y_of(p.rate),
            if p.saturated { "#d62728" } else { "#1f77b4" }
        ));
    }
    svg.push_str("</svg>\n");

    let mut out = FileWriter::new(path.as_ref());
    out.buffer = svg.into_bytes();
    out.finish()
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes every curve as CSV (and optionally SVG) plus a joint summary table.
/// Returns the created paths in deterministic order.
pub fn emit_report(
    curves: &BTreeMap<String, Curve>,
    table: Option<&SummaryTable>,
    dir: impl AsRef<Path>,
    with_svg: bool,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(path_str(dir), e))?;
    let mut written = Vec::new();
    for (name, curve) in curves {
        let csv_path = dir.join(format!("{name}.csv"));
        write_curve_csv(curve, &csv_path)?;
        written.push(csv_path);
        if with_svg {
            let svg_path = dir.join(format!("{name}.svg"));
            write_curve_svg(curve, name, &svg_path)?;
            written.push(svg_path);
        }
    }
    if let Some(table) = table {
        let table_path = dir.join("summary.csv");
        write_summary_csv(table, &table_path)?;
        written.push(table_path);
    }
    Ok(written)
}
