//! Output rendering. Every command yields a JSON document and a list of
//! fixed-column CSV rows.

use serde::Serialize;
use serde_json::Value;

pub const CSV_HEADER: &str = "instance,benchmark,value,method,seed,runtime_ms";

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub benchmark: String,
    pub value: f64,
    pub method: String,
}

impl Row {
    pub fn new(benchmark: impl Into<String>, value: f64, method: impl Into<String>) -> Self {
        Row {
            benchmark: benchmark.into(),
            value,
            method: method.into(),
        }
    }
}

pub struct Report {
    pub json: Value,
    pub rows: Vec<Row>,
}

/// Quotes a CSV field when it needs it.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip form, with `-0` shown as `0`.
fn number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:?}")
}

/// Rewrites `-0.0` as `0.0` throughout a JSON value.
fn clean(v: &mut Value) {
    match v {
        Value::Number(n) if n.as_f64() == Some(0.0) && n.is_f64() => *v = serde_json::json!(0.0),
        Value::Array(a) => a.iter_mut().for_each(clean),
        Value::Object(o) => o.values_mut().for_each(clean),
        _ => {}
    }
}

/// `runtime_ms` is left empty unless timing was requested, so that output is
/// byte-identical across runs.
pub fn render_csv(instance: &str, seed: u64, rows: &[Row], runtime_ms: Option<f64>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let rt = runtime_ms.map(|t| format!("{t:.3}")).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            field(instance),
            field(&r.benchmark),
            number(r.value),
            field(&r.method),
            seed,
            rt
        ));
    }
    out
}

pub fn render_json(instance: &str, command: &str, seed: u64, mut body: Value, runtime_ms: Option<f64>) -> String {
    clean(&mut body);
    let mut doc = serde_json::json!({
        "instance": instance,
        "command": command,
        "seed": seed,
        "result": body,
    });
    if let Some(t) = runtime_ms {
        doc["runtime_ms"] = serde_json::json!(t);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize");
    s.push('\n');
    s
}
