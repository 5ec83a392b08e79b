//! Number formatting and table emission.

use std::io::Write;

use anyhow::Result;
use dpmix::{CalibrationResult, SweepRow};
use serde::Serialize;
use serde_json::{Map, Value};

/// Significant digits kept in machine-readable output.
pub const SIG_DIGITS: usize = 12;

/// Rounds `x` to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes `value` as pretty JSON with every float rounded.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

fn row_value(row: &SweepRow) -> Result<Value> {
    let mut obj = match &row.result {
        Some(r) => match serde_json::to_value(r)? {
            Value::Object(m) => m,
            _ => Map::new(),
        },
        None => {
            let mut m = Map::new();
            m.insert("mechanism".into(), serde_json::to_value(row.mechanism)?);
            m.insert("params".into(), serde_json::to_value(row.params)?);
            for key in [
                "sigma",
                "chosen_k",
                "eta",
                "l1",
                "l2",
                "improvement_vs_baseline_pct",
                "verify_slack",
                "wall_ms",
            ] {
                m.insert(key.into(), Value::Null);
            }
            m
        }
    };
    obj.insert("reason".into(), row.reason.clone().map_or(Value::Null, Value::String));
    Ok(Value::Object(obj))
}

/// Sweep rows as a JSON array of calibration results.
pub fn sweep_json(rows: &[SweepRow]) -> Result<String> {
    let mut v = Value::Array(rows.iter().map(row_value).collect::<Result<_>>()?);
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

pub const CSV_HEADER: [&str; 13] = [
    "mechanism",
    "epsilon",
    "delta",
    "sensitivity",
    "sigma",
    "k",
    "eta",
    "l1",
    "l2",
    "improvement_pct",
    "verify_slack",
    "wall_ms",
    "reason",
];

fn num(x: f64) -> String {
    round_sig(x).to_string()
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

fn result_fields(r: &CalibrationResult) -> [String; 8] {
    [
        num(r.sigma),
        r.chosen_k.map_or_else(|| "NA".to_string(), |k| k.to_string()),
        opt_num(r.eta),
        num(r.l1),
        num(r.l2),
        num(r.improvement_vs_baseline_pct),
        opt_num(r.verify_slack),
        num(r.wall_ms),
    ]
}

/// Writes sweep rows as CSV; failed cells carry `NA` and a reason.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let mut rec = vec![
            row.mechanism.to_string(),
            num(row.params.epsilon),
            num(row.params.delta),
            num(row.params.sensitivity),
        ];
        match &row.result {
            Some(r) => rec.extend(result_fields(r)),
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 8)),
        }
        rec.push(row.reason.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(0.123456789012345), 0.123456789012);
        assert_eq!(round_sig(-98765.43210987654), -98765.4321099);
        assert_eq!(round_sig(5e-7), 5e-7);
        assert_eq!(round_sig(0.0), 0.0);
    }
}
