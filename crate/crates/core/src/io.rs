//! Comma-separated trajectories and `key=value` summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::grid::GridFunction;

/// Fixed formatting for every number written to disk.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.12e}")
}

/// Rows `τ, t, v_1, ..., v_d` under a header with the given component prefix.
pub fn grid_function_csv(f: &GridFunction, prefix: &str) -> String {
    let mut out = String::from("tau,t");
    for c in 1..=f.dim() {
        write!(out, ",{prefix}{c}").unwrap();
    }
    out.push('\n');
    let grid = f.grid();
    for (i, v) in f.values().iter().enumerate() {
        out.push_str(&fmt_num(grid.tau(i)));
        out.push(',');
        out.push_str(&fmt_num(grid.t(i)));
        for x in v.iter() {
            out.push(',');
            out.push_str(&fmt_num(*x));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, f: &GridFunction, prefix: &str) -> Result<()> {
    fs::write(path, grid_function_csv(f, prefix))?;
    Ok(())
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_num(&mut self, key: &str, v: f64) {
        self.set(key, fmt_num(v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let mut s = Self::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                s.set(k.trim(), v.trim());
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FractionalOrder, TimeGrid};
    use nalgebra::DVector;

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::from_tau(FractionalOrder::new(1.0).unwrap(), 0.0, 1.0, 3).unwrap();
        let f = GridFunction::sample(grid, |t| DVector::from_vec(vec![t, -t])).unwrap();
        let csv = grid_function_csv(&f, "x");
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "tau,t,x1,x2");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "5.000000000000e-1,5.000000000000e-1,5.000000000000e-1,-5.000000000000e-1");
    }

    #[test]
    fn summary_round_trip() {
        let mut s = Summary::new();
        s.set("status", "ok");
        s.set_num("final_state_norm", 1.5e-9);
        s.set("status", "failed");
        assert_eq!(s.render(), "status=failed\nfinal_state_norm=1.500000000000e-9\n");
        assert_eq!(Summary::parse(&s.render()), s);
    }
}
