//! Tabular and JSON exports of decompositions, oracle tables and scores.

use std::path::Path;

use migate_core::metrics::{DiagnosisDelta, StabilityReport};
use migate_core::pid::{AggregateInteractions, OracleResult, PointwiseInteraction, RelativeChange, SampleInteraction};

use crate::error::{Error, Result};

/// Renders `x` like C's `%.{digits}g`.
pub fn format_g(x: f64, digits: usize) -> String {
    let p = digits.max(1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `%.9g`, the rendering used for every exported float.
pub fn g9(x: f64) -> String {
    format_g(x, 9)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Record {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

pub const DECOMPOSITION_HEADER: [&str; 7] = ["sample_id", "r_plus", "r_minus", "r", "u_V", "u_T", "s"];

pub fn write_decomposition(path: impl AsRef<Path>, samples: &[SampleInteraction]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(DECOMPOSITION_HEADER).map_err(|e| csv_error(path, e))?;
    for s in samples {
        let p = &s.interaction;
        let row = [p.r_plus, p.r_minus, p.r, p.u_v, p.u_t, p.s].map(g9);
        w.write_record(std::iter::once(s.sample_id.as_str()).chain(row.iter().map(String::as_str)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows of a decomposition file in file order.
pub fn read_decomposition(path: impl AsRef<Path>) -> Result<Vec<(String, PointwiseInteraction)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(DECOMPOSITION_HEADER) {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected columns {}", DECOMPOSITION_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let mut v = [0.0f64; 6];
        for (slot, field) in v.iter_mut().zip(rec.iter().skip(1)) {
            *slot = field.parse().map_err(|_| bad(format!("{field:?} is not a number")))?;
        }
        if rec.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", rec.len())));
        }
        out.push((
            rec[0].to_string(),
            PointwiseInteraction {
                r_plus: v[0],
                r_minus: v[1],
                r: v[2],
                u_v: v[3],
                u_t: v[4],
                s: v[5],
            },
        ));
    }
    Ok(out)
}

pub fn write_oracle(path: impl AsRef<Path>, oracle: &OracleResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record([
        "v",
        "t",
        "y",
        "probability",
        "r_plus",
        "r_minus",
        "r",
        "u_V",
        "u_T",
        "s",
    ])
    .map_err(|e| csv_error(path, e))?;
    for o in &oracle.outcomes {
        let p = &o.interaction;
        let mut row = vec![o.v.to_string(), o.t.to_string(), o.y.to_string(), g9(o.probability)];
        row.extend([p.r_plus, p.r_minus, p.r, p.u_v, p.u_t, p.s].map(g9));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `{"R", "U_V", "U_T", "S"}`.
pub fn write_aggregates(path: impl AsRef<Path>, a: &AggregateInteractions) -> Result<()> {
    crate::jsonl::write_json(path, a)
}

/// Before/after/percent-change table for two aggregate sets.
pub fn write_relative_change(
    path: impl AsRef<Path>,
    before: &AggregateInteractions,
    after: &AggregateInteractions,
    change: &RelativeChange,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["component", "baseline", "augmented", "change_pct"])
        .map_err(|e| csv_error(path, e))?;
    let pct = [change.r, change.u_v, change.u_t, change.s];
    for (i, name) in AggregateInteractions::NAMES.iter().enumerate() {
        let cell = pct[i].map_or_else(String::new, |p| format!("{p:+.1}"));
        w.write_record([
            name.to_string(),
            g9(before.as_array()[i]),
            g9(after.as_array()[i]),
            cell,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per `(kind, level)` with ΔP as a percentage, then the per-level
/// mean and population standard deviation.
pub fn write_stability(path: impl AsRef<Path>, report: &StabilityReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["kind", "level", "accuracy", "delta_p_pct"])
        .map_err(|e| csv_error(path, e))?;
    for c in &report.cells {
        w.write_record([
            c.kind.clone(),
            c.level.to_string(),
            g9(c.accuracy),
            format!("{:+.1}", 100.0 * c.delta_p),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    for l in &report.levels {
        w.write_record([
            "mean".to_string(),
            l.level.to_string(),
            String::new(),
            format!("{:+.1}", 100.0 * l.mean_delta_p),
        ])
        .map_err(|e| csv_error(path, e))?;
        w.write_record([
            "std".to_string(),
            l.level.to_string(),
            String::new(),
            format!("{:.1}", 100.0 * l.std_delta_p),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Comparison row: accuracy change in absolute percentage points, every
/// other column a relative percentage change.
pub fn write_comparison(path: impl AsRef<Path>, model: &str, rate: &str, d: &DiagnosisDelta) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record([
        "model",
        "rate",
        "dAcc_pp",
        "dLI_pct",
        "dVI_pct",
        "dMix_pct",
        "dConsist_pct",
    ])
    .map_err(|e| csv_error(path, e))?;
    let rel = |v: Option<f64>| v.map_or_else(String::new, |p| format!("{p:+.1}"));
    w.write_record([
        model.to_string(),
        rate.to_string(),
        format!("{:+.2}", d.accuracy_pp),
        rel(d.li_pct),
        rel(d.vi_pct),
        rel(d.mixed_pct),
        rel(d.consistency_pct),
    ])
    .map_err(|e| csv_error(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
