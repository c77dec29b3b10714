//! Output plumbing: 12-significant-digit floats, CSV/JSON emission, file
//! or stdout sinks.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Formats a float at 12 significant digits (scientific), the stable form
/// used by every emitter.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

/// JSON number rounded to 12 significant digits.
pub fn json_num(x: f64) -> serde_json::Value {
    if !x.is_finite() {
        return serde_json::Value::String(format!("{x}"));
    }
    let rounded: f64 = fmt_f64(x).parse().unwrap();
    serde_json::json!(rounded)
}

/// A CSV table with a fixed header.
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes `content` to `out` (or stdout when absent).
pub fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            if !content.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Parses a `lo:hi:step` grid with `step > 0`, inclusive of `hi` up to a
/// half-step slack.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    anyhow::ensure!(
        parts.len() == 3,
        tiltwalk_core::CoreError::InvalidParameter(format!("grid `{spec}`: expected lo:hi:step"))
    );
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| tiltwalk_core::CoreError::InvalidParameter(format!("grid `{spec}`: bad lo")))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| tiltwalk_core::CoreError::InvalidParameter(format!("grid `{spec}`: bad hi")))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| tiltwalk_core::CoreError::InvalidParameter(format!("grid `{spec}`: bad step")))?;
    if step <= 0.0 || hi < lo {
        return Err(tiltwalk_core::CoreError::InvalidParameter(format!(
            "grid `{spec}`: need step > 0 and hi >= lo"
        ))
        .into());
    }
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let x = lo + step * k as f64;
        if x > hi + 0.5 * step {
            break;
        }
        grid.push(x.min(hi));
        k += 1;
    }
    Ok(grid)
}
