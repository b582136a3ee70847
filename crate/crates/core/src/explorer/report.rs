//! Plain-text reports: `[section]` headers and `key: value` lines with numbers at 17
//! significant digits.

use std::fmt::Write as _;

use num_complex::Complex64;

pub fn fmt_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_complex(z: Complex64) -> String {
    format!("{} {}", fmt_number(z.re), fmt_number(z.im))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    title: String,
    sections: Vec<(String, Vec<(String, String)>)>,
    failures: Vec<String>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        self.sections.push((name.into(), Vec::new()));
        self
    }

    pub fn text(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        if self.sections.is_empty() {
            self.section("summary");
        }
        let (_, lines) = self.sections.last_mut().expect("section exists");
        lines.push((key.into(), value.to_string()));
        self
    }

    pub fn number(&mut self, key: &str, x: f64) -> &mut Self {
        self.text(key, fmt_number(x))
    }

    pub fn numbers(&mut self, key: &str, xs: &[f64]) -> &mut Self {
        let joined: Vec<String> = xs.iter().map(|&x| fmt_number(x)).collect();
        self.text(key, joined.join(" "))
    }

    pub fn complex(&mut self, key: &str, z: Complex64) -> &mut Self {
        self.text(key, fmt_complex(z))
    }

    /// Records a pass/fail verdict; any failure fails the report.
    pub fn verdict(&mut self, key: &str, pass: bool) -> &mut Self {
        if !pass {
            let section = self.sections.last().map(|s| s.0.clone()).unwrap_or_default();
            self.failures.push(format!("{section}/{key}"));
        }
        self.text(key, if pass { "pass" } else { "fail" })
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failures(&self) -> &[String] {
        &self.failures
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        for (name, lines) in &self.sections {
            let _ = writeln!(out, "\n[{name}]");
            for (k, v) in lines {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
        let _ = writeln!(out, "\n[verdict]");
        let _ = writeln!(out, "status: {}", if self.passed() { "pass" } else { "fail" });
        out
    }
}
