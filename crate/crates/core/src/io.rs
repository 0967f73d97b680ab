//! Pattern CSV with a JSON sidecar, curve CSV, and JSON helpers.
//!
//! Floats are written in shortest round-trip form, so a pattern read back
//! is bit-identical to the one written.

use crate::error::{domain, Error, Result};
use crate::geometry::{ShapeConfig, Vec3};
use crate::simulate::SurfacePattern;
use crate::summaries::{CurveKind, SummaryCurve};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Sidecar metadata of a pattern file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternMeta {
    pub shape: ShapeConfig,
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Path of the sidecar belonging to a pattern CSV: `points.csv` →
/// `points.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn pattern_csv_string(points: &[Vec3]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "z"])?;
    for p in points {
        w.serialize((p.x1, p.x2, p.x3))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn parse_pattern_csv(text: &str) -> Result<Vec<Vec3>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let head = r.headers()?.clone();
    if head.iter().collect::<Vec<_>>() != ["x", "y", "z"] {
        return domain(format!("pattern header must be x,y,z, got {}", head.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(f64, f64, f64)>().enumerate() {
        let (x, y, z) = rec.map_err(|e| Error::Domain(format!("row {}: {e}", i + 1)))?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return domain(format!("row {}: non-finite coordinate", i + 1));
        }
        out.push(Vec3::new(x, y, z));
    }
    Ok(out)
}

/// Writes `pattern` to `csv` and `meta` to its sidecar.
pub fn write_pattern(csv: &Path, pattern: &SurfacePattern, meta: &PatternMeta) -> Result<()> {
    fs::write(csv, pattern_csv_string(&pattern.points)?)?;
    write_json(&sidecar_path(csv), meta)
}

/// Reads a pattern CSV and, if present, its sidecar.
pub fn read_pattern(csv: &Path) -> Result<(Vec<Vec3>, Option<PatternMeta>)> {
    let points = parse_pattern_csv(&fs::read_to_string(csv)?)?;
    let side = sidecar_path(csv);
    let meta = if side.exists() { Some(read_json(&side)?) } else { None };
    Ok((points, meta))
}

fn kind_name(k: CurveKind) -> &'static str {
    match k {
        CurveKind::K => "K",
        CurveKind::F => "F",
        CurveKind::H => "H",
        CurveKind::J => "J",
        CurveKind::KTilde => "KTilde",
    }
}

fn kind_from(s: &str) -> Result<CurveKind> {
    Ok(match s {
        "K" => CurveKind::K,
        "F" => CurveKind::F,
        "H" => CurveKind::H,
        "J" => CurveKind::J,
        "KTilde" => CurveKind::KTilde,
        _ => return domain(format!("unknown curve kind {s:?}")),
    })
}

/// SHA-256 of the metadata map in its JSON form.
pub fn meta_hash(meta: &BTreeMap<String, String>) -> String {
    sha256_hex(serde_json::to_string(meta).expect("string map serializes").as_bytes())
}

/// `# kind=<kind> meta=<hash>` followed by `r,value` rows. Missing values
/// are empty fields.
pub fn curve_csv_string(c: &SummaryCurve) -> Result<String> {
    let mut s = format!("# kind={} meta={}\n", kind_name(c.kind), meta_hash(&c.meta));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "value"])?;
    for (r, v) in c.r.iter().zip(&c.values) {
        w.serialize((r, if v.is_nan() { None } else { Some(v) }))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    s.push_str(&String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?);
    Ok(s)
}

/// Parses a curve CSV. The metadata map itself is not stored in the file,
/// only its hash, which is returned under the key `meta_hash`.
pub fn parse_curve_csv(text: &str) -> Result<SummaryCurve> {
    let (first, rest) = text.split_once('\n').ok_or_else(|| Error::Domain("empty curve file".into()))?;
    let mut kind = None;
    let mut meta = BTreeMap::new();
    for tok in first.strip_prefix('#').ok_or_else(|| Error::Domain("missing curve header comment".into()))?.split_whitespace() {
        match tok.split_once('=') {
            Some(("kind", k)) => kind = Some(kind_from(k)?),
            Some(("meta", h)) => {
                meta.insert("meta_hash".to_string(), h.to_string());
            }
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| Error::Domain("curve header has no kind".into()))?;
    let mut rd = csv::Reader::from_reader(rest.as_bytes());
    let (mut r, mut values) = (Vec::new(), Vec::new());
    for rec in rd.deserialize::<(f64, Option<f64>)>() {
        let (x, v) = rec?;
        r.push(x);
        values.push(v.unwrap_or(f64::NAN));
    }
    Ok(SummaryCurve { r, values, kind, meta })
}

pub fn write_curve(path: &Path, c: &SummaryCurve) -> Result<()> {
    Ok(fs::write(path, curve_csv_string(c)?)?)
}

pub fn read_curve(path: &Path) -> Result<SummaryCurve> {
    parse_curve_csv(&fs::read_to_string(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
