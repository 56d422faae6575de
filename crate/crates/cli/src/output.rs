//! CSV and JSON emission with a reproducible metadata header.

use serde::Serialize;

pub const TOOL_VERSION: &str = concat!("cvqkd ", env!("CARGO_PKG_VERSION"));

/// Shortest round-trip decimal, scientific below 1e-3 in magnitude.
pub fn fmt_num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub defaults: Vec<String>,
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str, config_sha256: &str, defaults: &[String]) -> Self {
        Self {
            tool: TOOL_VERSION.into(),
            command: command.into(),
            config_sha256: config_sha256.into(),
            defaults: defaults.to_vec(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.extra.push((key.into(), value.into()));
        self
    }
}

pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(meta: &Metadata, header: &[&str]) -> Self {
        let mut text = String::new();
        text.push_str(&format!("# tool: {}\n", meta.tool));
        text.push_str(&format!("# command: {}\n", meta.command));
        text.push_str(&format!("# config_sha256: {}\n", meta.config_sha256));
        text.push_str(&format!("# defaults: {}\n", meta.defaults.join("; ")));
        for (k, v) in &meta.extra {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        text.push_str(&header.join(","));
        text.push('\n');
        Self {
            text,
            width: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.width);
        let line: Vec<String> = fields.iter().map(|f| quote(f)).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    body: T,
}

pub fn json<T: Serialize>(meta: &Metadata, body: T) -> String {
    let mut s = serde_json::to_string_pretty(&JsonDoc { metadata: meta, body }).expect("serializable");
    s.push('\n');
    s
}
