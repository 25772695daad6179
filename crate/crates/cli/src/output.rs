//! Plot-ready CSV and JSON writers.
//!
//! Numbers are written with 17 significant digits so doubles round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use semiclassical::domain::MadelungFields;
use semiclassical::{Result, Vec3};

const AXES: [&str; 3] = ["x", "y", "z"];

/// `{:.16e}` gives 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects the files of one run under a single directory.
pub struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        body.push('\n');
        self.text(name, &body)
    }

    /// One row per node: coordinates, `rho`, `S`, `Q` (NaN off the support).
    pub fn fields(&mut self, name: &str, fields: &MadelungFields<f64>, q: Option<&[f64]>, hbar: f64, mass: f64) -> Result<()> {
        let grid = &fields.grid;
        let dim = grid.dim();
        let mut s = String::new();
        writeln!(
            s,
            "# time = {}; units: natural (mass = {}, hbar = {}); rho in 1/length^{dim}, S in action, Q in energy",
            num(fields.time),
            num(mass),
            num(hbar)
        )
        .expect("string write");
        s.push_str(&AXES[..dim].join(","));
        s.push_str(",rho,S,Q\n");
        for i in 0..grid.len() {
            let x = grid.position(i);
            for xa in x.iter().take(dim) {
                s.push_str(&num(*xa));
                s.push(',');
            }
            let qi = match q {
                Some(q) if fields.support[i] => q[i],
                _ => f64::NAN,
            };
            let action = if fields.support[i] { fields.action[i] } else { f64::NAN };
            writeln!(s, "{},{},{}", num(fields.rho[i]), num(action), num(qi)).expect("string write");
        }
        self.text(name, &s)
    }

    /// One row per time: `time` then every sample's position, axis by axis.
    pub fn trajectories(&mut self, name: &str, times: &[f64], positions: &[Vec<Vec3<f64>>], dim: usize) -> Result<()> {
        let n = positions.first().map_or(0, Vec::len);
        let mut s = String::new();
        writeln!(s, "# units: natural; {n} samples, {dim} axes; flagged samples keep their last position").expect("string write");
        s.push_str("time");
        for j in 0..n {
            for axis in AXES.iter().take(dim) {
                write!(s, ",p{j}_{axis}").expect("string write");
            }
        }
        s.push('\n');
        for (t, row) in times.iter().zip(positions) {
            s.push_str(&num(*t));
            for x in row {
                for xa in x.iter().take(dim) {
                    s.push(',');
                    s.push_str(&num(*xa));
                }
            }
            s.push('\n');
        }
        self.text(name, &s)
    }

    /// Plain table with a header row.
    pub fn table(&mut self, name: &str, comment: &str, columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let mut s = format!("# {comment}\n{}\n", columns.join(","));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        self.text(name, &s)
    }
}

pub fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    AXES[..dim].iter().map(|a| format!("{prefix}_{a}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}
