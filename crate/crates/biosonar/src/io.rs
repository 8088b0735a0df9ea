//! Persistence: echo files (binary and CSV), the target database, and
//! result emission as CSV tables or SVG plots.
//!
//! All file writes go through a write-temp-then-rename step, so a crashed
//! run never leaves a torn file behind. Binary echo files round-trip
//! bit-exactly; text formats use shortest round-trip float notation, which
//! is also exact for f64.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::harness::{ThresholdPoint, ThresholdValue};
use crate::signal::SampledEcho;
use crate::target::{TargetDatabase, TargetImage};
use crate::Result;

const ECHO_MAGIC: &[u8; 4] = b"ECH1";
const DB_SCHEMA_VERSION: u32 = 1;
const MAX_LABEL_BYTES: usize = 1 << 20;

/// Write bytes to `path` atomically: write a sibling temp file, then rename
/// over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write echoes as a little-endian binary file. All echoes must share one
/// sample interval and length (the format is rectangular); the first echo's
/// label, if any, becomes the file label.
pub fn write_echoes(path: &Path, echoes: &[SampledEcho]) -> Result<()> {
    if echoes.is_empty() {
        return Err(Error::FormatError("refusing to write zero echoes".into()));
    }
    let interval = echoes[0].sample_interval_us;
    let len = echoes[0].samples.len();
    for (i, e) in echoes.iter().enumerate() {
        if e.sample_interval_us != interval || e.samples.len() != len {
            return Err(Error::FormatError(format!(
                "echo {i} has interval {} us / {} samples, file is {} us / {} samples",
                e.sample_interval_us,
                e.samples.len(),
                interval,
                len
            )));
        }
    }
    let label = echoes[0].label.as_deref().unwrap_or("");
    let mut buf = Vec::with_capacity(24 + label.len() + echoes.len() * len * 8);
    buf.extend_from_slice(ECHO_MAGIC);
    buf.extend_from_slice(&interval.to_le_bytes());
    buf.extend_from_slice(&(echoes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(len as u32).to_le_bytes());
    buf.extend_from_slice(&(label.len() as u32).to_le_bytes());
    buf.extend_from_slice(label.as_bytes());
    for e in echoes {
        for s in &e.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::FormatError("truncated echo file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Read a binary echo file written by [`write_echoes`].
pub fn read_echoes(path: &Path) -> Result<Vec<SampledEcho>> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != ECHO_MAGIC {
        return Err(Error::FormatError(format!(
            "{} is not an echo file (bad magic)",
            path.display()
        )));
    }
    let interval = cur.f64()?;
    let echo_count = cur.u32()? as usize;
    let samples_per_echo = cur.u32()? as usize;
    let label_len = cur.u32()? as usize;
    if label_len > MAX_LABEL_BYTES {
        return Err(Error::FormatError("label longer than 1 MiB".into()));
    }
    if echo_count == 0 || samples_per_echo == 0 {
        return Err(Error::FormatError("echo file declares zero data".into()));
    }
    let label_bytes = cur.take(label_len)?;
    let label = std::str::from_utf8(label_bytes)
        .map_err(|_| Error::FormatError("label is not valid UTF-8".into()))?
        .to_string();
    let payload = echo_count
        .checked_mul(samples_per_echo)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::FormatError("echo counts overflow".into()))?;
    if bytes.len() - cur.pos != payload {
        return Err(Error::FormatError(format!(
            "expected {payload} payload bytes, found {}",
            bytes.len() - cur.pos
        )));
    }
    let mut echoes = Vec::with_capacity(echo_count);
    for _ in 0..echo_count {
        let mut samples = Vec::with_capacity(samples_per_echo);
        for _ in 0..samples_per_echo {
            samples.push(cur.f64()?);
        }
        let mut echo = SampledEcho::new(samples, interval)?;
        if !label.is_empty() {
            echo = echo.with_label(label.clone());
        }
        echoes.push(echo);
    }
    Ok(echoes)
}

/// Write echoes as CSV: a header row carrying the sample interval, then one
/// echo per row. Float text is shortest round-trip notation, so reading the
/// file back reproduces every sample exactly.
pub fn write_echoes_csv(path: &Path, echoes: &[SampledEcho]) -> Result<()> {
    write_atomic(path, render_echoes_csv(echoes)?.as_bytes())
}

pub fn render_echoes_csv(echoes: &[SampledEcho]) -> Result<String> {
    if echoes.is_empty() {
        return Err(Error::FormatError("refusing to write zero echoes".into()));
    }
    let interval = echoes[0].sample_interval_us;
    let mut out = String::new();
    let _ = writeln!(out, "sample_interval_us,{interval}");
    for (i, e) in echoes.iter().enumerate() {
        if e.sample_interval_us != interval {
            return Err(Error::FormatError(format!(
                "echo {i} has interval {} us, file header says {interval}",
                e.sample_interval_us
            )));
        }
        let row: Vec<String> = e.samples.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}

/// Read echoes from the CSV layout of [`write_echoes_csv`]. Every row must
/// have the same number of samples.
pub fn read_echoes_csv(path: &Path) -> Result<Vec<SampledEcho>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::FormatError("empty CSV file".into()))?;
    let interval = header
        .strip_prefix("sample_interval_us,")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| {
            Error::FormatError("CSV header must be 'sample_interval_us,<value>'".into())
        })?;
    let mut echoes = Vec::new();
    let mut expected_len = None;
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let samples: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::FormatError(format!("row {}: bad number {cell:?}", row + 1))
                })
            })
            .collect::<Result<_>>()?;
        if *expected_len.get_or_insert(samples.len()) != samples.len() {
            return Err(Error::FormatError(format!(
                "row {}: {} samples, expected {}",
                row + 1,
                samples.len(),
                expected_len.unwrap()
            )));
        }
        echoes.push(SampledEcho::new(samples, interval)?);
    }
    if echoes.is_empty() {
        return Err(Error::FormatError("CSV file contains no echoes".into()));
    }
    Ok(echoes)
}

#[derive(Serialize, Deserialize)]
struct DatabaseFile {
    schema_version: u32,
    images: Vec<TargetImage>,
}

/// Save the database as pretty-printed structured text (JSON), diffable and
/// lossless at full float precision.
pub fn save_db(path: &Path, db: &TargetDatabase) -> Result<()> {
    let file = DatabaseFile {
        schema_version: DB_SCHEMA_VERSION,
        images: db.images().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::SerializationError(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Load a database saved by [`save_db`]. Rejects files from a newer schema
/// and any file with duplicate target names.
pub fn load_db(path: &Path) -> Result<TargetDatabase> {
    let text = fs::read_to_string(path)?;
    let file: DatabaseFile =
        serde_json::from_str(&text).map_err(|e| Error::FormatError(e.to_string()))?;
    if file.schema_version > DB_SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion(file.schema_version));
    }
    TargetDatabase::from_images(file.images)
}

/// Append images to the database at `path`, creating it if missing. Name
/// collisions abort the merge before anything is written.
pub fn merge_db(path: &Path, new_images: Vec<TargetImage>) -> Result<TargetDatabase> {
    let mut db = if path.exists() {
        load_db(path)?
    } else {
        TargetDatabase::new()
    };
    for img in new_images {
        db.append(img)?;
    }
    save_db(path, &db)?;
    Ok(db)
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::SerializationError(format!(
            "{what} is not finite: {v}"
        )));
    }
    Ok(())
}

/// Render threshold points as a CSV table with header `x,y,feature`.
/// Unreached thresholds serialize as `not_reached,none`; non-finite numbers
/// are rejected rather than silently written.
pub fn render_csv(points: &[ThresholdPoint]) -> Result<String> {
    let mut out = String::from("x,y,feature\n");
    for p in points {
        check_finite(p.x, "x")?;
        let feature = match p.feature_used {
            Some(level) => level.to_string(),
            None => "none".to_string(),
        };
        match p.value {
            ThresholdValue::Reached(y) => {
                check_finite(y, "y")?;
                let _ = writeln!(out, "{},{},{feature}", p.x, y);
            }
            ThresholdValue::NotReached => {
                let _ = writeln!(out, "{},not_reached,{feature}", p.x);
            }
        }
    }
    Ok(out)
}

/// Write the CSV table of [`render_csv`] to a file.
pub fn emit_csv(points: &[ThresholdPoint], path: &Path) -> Result<()> {
    write_atomic(path, render_csv(points)?.as_bytes())
}

/// Reference geometry drawn behind the measured curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Overlay {
    /// Shaded band between two polylines (e.g. a tolerance corridor).
    Band {
        label: String,
        lower: Vec<(f64, f64)>,
        upper: Vec<(f64, f64)>,
    },
    /// Individual reference points drawn as crosses.
    Markers { label: String, points: Vec<(f64, f64)> },
}

impl Overlay {
    fn coords(&self) -> Vec<(f64, f64)> {
        match self {
            Overlay::Band { lower, upper, .. } => {
                lower.iter().chain(upper.iter()).copied().collect()
            }
            Overlay::Markers { points, .. } => points.clone(),
        }
    }

    fn label(&self) -> &str {
        match self {
            Overlay::Band { label, .. } => label,
            Overlay::Markers { label, .. } => label,
        }
    }
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 25.0;
const MARGIN_B: f64 = 55.0;

fn level_color(level: Option<crate::target::FeatureLevel>) -> &'static str {
    match level {
        Some(crate::target::FeatureLevel::Maps) => "#1f6fb4",
        Some(crate::target::FeatureLevel::Mips) => "#c23b22",
        Some(crate::target::FeatureLevel::Power) => "#2a9d4e",
        None => "#777777",
    }
}

/// Render points and overlays as a self-contained SVG plot. Output bytes are
/// a pure function of the inputs.
pub fn render_svg(
    points: &[ThresholdPoint],
    overlays: &[Overlay],
    x_label: &str,
    y_label: &str,
) -> Result<String> {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for p in points {
        check_finite(p.x, "x")?;
        xs.push(p.x);
        if let ThresholdValue::Reached(y) = p.value {
            check_finite(y, "y")?;
            ys.push(y);
        }
    }
    for o in overlays {
        for (x, y) in o.coords() {
            check_finite(x, "overlay x")?;
            check_finite(y, "overlay y")?;
            xs.push(x);
            ys.push(y);
        }
    }
    let (x_lo, x_hi) = padded_range(&xs);
    let (y_lo, y_hi) = padded_range(&ys);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (SVG_W - MARGIN_L - MARGIN_R);
        let py = SVG_H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (SVG_H - MARGIN_T - MARGIN_B);
        (px, py)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_W} {SVG_H}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>"
    );

    // grid and tick labels
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let (px, _) = to_px(fx, y_lo);
        let (_, py) = to_px(x_lo, fy);
        let _ = writeln!(
            svg,
            "<line x1=\"{px:.2}\" y1=\"{MARGIN_T}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\"/>",
            SVG_H - MARGIN_B
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\"/>",
            SVG_W - MARGIN_R
        );
        let _ = writeln!(
            svg,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            SVG_H - MARGIN_B + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 6.0,
            py + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"#333333\"/>",
        SVG_W - MARGIN_L - MARGIN_R,
        SVG_H - MARGIN_T - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + (SVG_W - MARGIN_L - MARGIN_R) / 2.0,
        SVG_H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        MARGIN_T + (SVG_H - MARGIN_T - MARGIN_B) / 2.0,
        MARGIN_T + (SVG_H - MARGIN_T - MARGIN_B) / 2.0,
        escape(y_label)
    );

    for o in overlays {
        match o {
            Overlay::Band { lower, upper, .. } => {
                if lower.is_empty() || upper.is_empty() {
                    continue;
                }
                let mut d = String::new();
                for (i, &(x, y)) in lower.iter().enumerate() {
                    let (px, py) = to_px(x, y);
                    let _ = write!(d, "{}{px:.2},{py:.2} ", if i == 0 { "M" } else { "L" });
                }
                for &(x, y) in upper.iter().rev() {
                    let (px, py) = to_px(x, y);
                    let _ = write!(d, "L{px:.2},{py:.2} ");
                }
                let _ = writeln!(
                    svg,
                    "<path d=\"{}Z\" fill=\"#bbbbbb\" fill-opacity=\"0.35\" \
                     stroke=\"#888888\" stroke-dasharray=\"5 4\"/>",
                    d
                );
            }
            Overlay::Markers { points, .. } => {
                for &(x, y) in points {
                    let (px, py) = to_px(x, y);
                    let _ = writeln!(
                        svg,
                        "<path d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" \
                         stroke=\"#555555\" stroke-width=\"1.5\"/>",
                        px - 5.0,
                        py - 5.0,
                        px + 5.0,
                        py + 5.0,
                        px - 5.0,
                        py + 5.0,
                        px + 5.0,
                        py - 5.0
                    );
                }
            }
        }
    }

    // measured curve: polyline through reached points, markers colored by level
    let mut d = String::new();
    let mut started = false;
    for p in points {
        if let ThresholdValue::Reached(y) = p.value {
            let (px, py) = to_px(p.x, y);
            let _ = write!(d, "{}{px:.2},{py:.2} ", if started { "L" } else { "M" });
            started = true;
        }
    }
    if started {
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1.2\"/>",
            d.trim_end()
        );
    }
    for p in points {
        match p.value {
            ThresholdValue::Reached(y) => {
                let (px, py) = to_px(p.x, y);
                let feature = match p.feature_used {
                    Some(level) => level.to_string(),
                    None => "none".to_string(),
                };
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"{}\">\
                     <title>x={} y={} ({feature})</title></circle>",
                    level_color(p.feature_used),
                    p.x,
                    y
                );
            }
            ThresholdValue::NotReached => {
                let (px, _) = to_px(p.x, y_lo);
                let _ = writeln!(
                    svg,
                    "<path d=\"M{:.2},{:.2} L{px:.2},{:.2} L{:.2},{:.2} Z\" fill=\"none\" \
                     stroke=\"#999999\"><title>x={} not reached</title></path>",
                    px - 5.0,
                    MARGIN_T + 12.0,
                    MARGIN_T + 2.0,
                    px + 5.0,
                    MARGIN_T + 12.0,
                    p.x
                );
            }
        }
    }

    // legend
    let mut legend_y = MARGIN_T + 16.0;
    for o in overlays {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{legend_y:.2}\" text-anchor=\"end\" fill=\"#666666\">{}</text>",
            SVG_W - MARGIN_R - 8.0,
            escape(o.label())
        );
        legend_y += 16.0;
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Write the SVG plot of [`render_svg`] to a file.
pub fn emit_svg(
    points: &[ThresholdPoint],
    overlays: &[Overlay],
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    write_atomic(
        path,
        render_svg(points, overlays, x_label, y_label)?.as_bytes(),
    )
}

fn padded_range(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    format!("{r}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
