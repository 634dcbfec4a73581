//! Reports are small TOML documents with fixed decimal places, so reruns
//! produce identical bytes.

use std::fmt::Write as _;

#[derive(Debug, Default)]
pub struct Report(String);

impl Report {
    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.0.is_empty() {
            self.0.push('\n');
        }
        let _ = writeln!(self.0, "[{name}]");
        self
    }

    pub fn text(&mut self, key: &str, value: &str) -> &mut Self {
        let _ = writeln!(self.0, "{key} = {}", toml::Value::String(value.to_string()));
        self
    }

    pub fn int(&mut self, key: &str, value: impl Into<i64>) -> &mut Self {
        let _ = writeln!(self.0, "{key} = {}", value.into());
        self
    }

    pub fn count(&mut self, key: &str, value: usize) -> &mut Self {
        self.int(key, i64::try_from(value).unwrap_or(i64::MAX))
    }

    pub fn flag(&mut self, key: &str, value: bool) -> &mut Self {
        let _ = writeln!(self.0, "{key} = {value}");
        self
    }

    pub fn real(&mut self, key: &str, value: f64, decimals: usize) -> &mut Self {
        let v = if value.is_nan() {
            "nan".to_string()
        } else if value.is_infinite() {
            if value > 0.0 { "inf" } else { "-inf" }.to_string()
        } else {
            format!("{value:.decimals$}")
        };
        let _ = writeln!(self.0, "{key} = {v}");
        self
    }

    pub fn list(&mut self, key: &str, values: &[String]) -> &mut Self {
        let items: Vec<String> = values
            .iter()
            .map(|v| toml::Value::String(v.clone()).to_string())
            .collect();
        let _ = writeln!(self.0, "{key} = [{}]", items.join(", "));
        self
    }

    pub fn reals(&mut self, key: &str, values: &[f64], decimals: usize) -> &mut Self {
        let items: Vec<String> = values.iter().map(|v| format!("{v:.decimals$}")).collect();
        let _ = writeln!(self.0, "{key} = [{}]", items.join(", "));
        self
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}
