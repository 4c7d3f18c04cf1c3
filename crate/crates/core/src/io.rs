//! JSON and CSV formats.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gaussian::{CovarianceMatrix4, StandardFormCM, TwoModeGaussian};
use crate::homodyne::{HomodyneTrace, TraceKind};

pub const CONVENTION: &str = "sql_half";
pub const ORDER: &str = "X1 Y1 X2 Y2";
/// Version of every CSV layout written by this crate.
pub const CSV_VERSION: u32 = 1;

/// First line of every CSV table written by this crate.
pub fn csv_preamble(kind: &str, bits: bool) -> String {
    format!(
        "# gaussmark {kind} v{CSV_VERSION} convention={CONVENTION} entropy={}\n",
        if bits { "bits" } else { "nats" }
    )
}

/// Covariance matrix as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmDocument {
    pub convention: String,
    pub order: String,
    pub matrix: [[f64; 4]; 4],
}

impl CmDocument {
    pub fn new(cm: &CovarianceMatrix4) -> Self {
        Self {
            convention: CONVENTION.into(),
            order: ORDER.into(),
            matrix: cm.rows(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Shorthand {
    n: f64,
    m: f64,
    c1: f64,
    c2: f64,
}

#[derive(Deserialize)]
struct LooseDocument {
    convention: Option<String>,
    order: Option<String>,
    matrix: [[f64; 4]; 4],
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn shape_error(message: impl Into<String>) -> Error {
    Error::Parse {
        line: 1,
        column: 1,
        message: message.into(),
    }
}

/// Reads either a full CM document or the `{"n","m","c1","c2"}` shorthand.
pub fn parse_cm_json(text: &str) -> Result<CovarianceMatrix4> {
    let value: Value = serde_json::from_str(text).map_err(parse_error)?;
    cm_from_value(value)
}

/// Same as [`parse_cm_json`] for an already parsed value.
pub fn cm_from_value(value: Value) -> Result<CovarianceMatrix4> {
    let obj = value
        .as_object()
        .ok_or_else(|| shape_error("expected a JSON object"))?;
    if obj.contains_key("matrix") {
        let doc: LooseDocument =
            serde_json::from_value(value).map_err(|e| shape_error(e.to_string()))?;
        if let Some(c) = doc.convention.as_deref() {
            if c != CONVENTION {
                return Err(shape_error(format!(
                    "unsupported convention '{c}', expected '{CONVENTION}'"
                )));
            }
        }
        if let Some(o) = doc.order.as_deref() {
            if o.split_whitespace().collect::<Vec<_>>() != ORDER.split(' ').collect::<Vec<_>>() {
                return Err(shape_error(format!(
                    "unsupported order '{o}', expected '{ORDER}'"
                )));
            }
        }
        CovarianceMatrix4::from_rows(doc.matrix)
    } else {
        let s: Shorthand = serde_json::from_value(value).map_err(|e| shape_error(e.to_string()))?;
        Ok(StandardFormCM::new(s.n, s.m, s.c1, s.c2)?.covariance())
    }
}

pub fn cm_to_json(cm: &CovarianceMatrix4) -> String {
    serde_json::to_string_pretty(&CmDocument::new(cm)).expect("plain data serializes")
}

/// Trace CSV: one header comment line, the column row, then samples.
pub fn write_trace(trace: &HomodyneTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 40 + 128);
    out.push_str(&trace_header(trace));
    out.push('\n');
    out.push_str("phase,value\n");
    for (p, v) in trace.phases.iter().zip(&trace.values) {
        out.push_str(&format!("{p},{v}\n"));
    }
    out
}

pub fn trace_header(trace: &HomodyneTrace) -> String {
    let mut h = format!(
        "# mode={} seed={} samples={} calibrated={}",
        trace.kind,
        trace.seed,
        trace.len(),
        trace.calibrated
    );
    if let Some(f) = trace.noise_floor {
        h.push_str(&format!(" noise_floor={f}"));
    }
    h
}

fn header_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: 1,
        message: message.into(),
    }
}

/// Parses the trace CSV format written by [`write_trace`].
pub fn parse_trace(text: &str) -> Result<HomodyneTrace> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| header_error(1, "empty trace file"))?;
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| header_error(1, "missing '# mode=...' header"))?;
    let (mut kind, mut seed, mut samples, mut calibrated, mut noise_floor) =
        (None, None, None, None, None);
    for token in body.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| header_error(1, format!("malformed header token '{token}'")))?;
        let bad = |what: &str| header_error(1, format!("invalid {what} '{v}'"));
        match k {
            "mode" => kind = Some(v.parse::<TraceKind>().map_err(|_| bad("mode"))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad("seed"))?),
            "samples" => samples = Some(v.parse::<usize>().map_err(|_| bad("samples"))?),
            "calibrated" => calibrated = Some(v.parse::<bool>().map_err(|_| bad("calibrated"))?),
            "noise_floor" => noise_floor = Some(v.parse::<f64>().map_err(|_| bad("noise_floor"))?),
            _ => {}
        }
    }
    let missing = |what: &str| header_error(1, format!("header lacks '{what}'"));
    let kind = kind.ok_or_else(|| missing("mode"))?;
    let seed = seed.ok_or_else(|| missing("seed"))?;
    let samples = samples.ok_or_else(|| missing("samples"))?;
    let calibrated = calibrated.ok_or_else(|| missing("calibrated"))?;

    match lines.next() {
        Some((_, l)) if l.trim() == "phase,value" => {}
        _ => return Err(header_error(2, "expected column row 'phase,value'")),
    }
    let mut phases = Vec::with_capacity(samples);
    let mut values = Vec::with_capacity(samples);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (p, v) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: idx + 1,
            column: 1,
            message: "expected 'phase,value'".into(),
        })?;
        let num = |s: &str, col: usize| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 1,
                column: col,
                message: e.to_string(),
            })
        };
        phases.push(num(p, 1)?);
        values.push(num(v, p.len() + 2)?);
    }
    if phases.len() != samples {
        return Err(header_error(
            1,
            format!("header declares {samples} samples, file has {}", phases.len()),
        ));
    }
    Ok(HomodyneTrace {
        kind,
        seed,
        calibrated,
        noise_floor,
        phases,
        values,
    })
}
