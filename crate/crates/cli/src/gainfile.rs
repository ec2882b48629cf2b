//! Gain file: structured TOML written by hand so the bytes depend only on the numbers.
//!
//! Matrices are stored row-major as nested arrays, every entry in `{:.16e}` (17
//! significant digits, enough to round-trip any `f64`).

use std::fmt::Write as _;
use std::path::Path;

use lpv_core::nalgebra::DMatrix;
use lpv_core::sim::Gain;
use serde::Deserialize;

use crate::error::CliError;

pub const FORMAT_TAG: &str = "lpv-gain-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub passed: bool,
    pub vertex_count: usize,
    pub offending_count: usize,
    /// Largest real part over all closed-loop vertex eigenvalues.
    pub max_real_per_s: f64,
    pub min_real_per_s: f64,
    pub worst_lmi_residual: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRecord {
    pub mode: String,
    /// Region parameters: `[beta]` for contractivity, `[strip_max, strip_min]` for dstab.
    pub region_per_s: Vec<f64>,
    pub seed: u64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: Gain,
    pub certification: Certification,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_matrix(out: &mut String, name: &str, rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) {
    let _ = writeln!(out, "{name} = [");
    for i in 0..rows {
        let row: Vec<String> = (0..cols).map(|j| num(at(i, j))).collect();
        let _ = writeln!(out, "  [{}],", row.join(", "));
    }
    out.push_str("]\n");
}

impl GainRecord {
    pub fn render(&self) -> String {
        let c = &self.certification;
        let mut out = String::new();
        let _ = writeln!(out, "format = \"{FORMAT_TAG}\"");
        let _ = writeln!(out, "mode = \"{}\"", self.mode);
        let region: Vec<String> = self.region_per_s.iter().map(|&x| num(x)).collect();
        let _ = writeln!(out, "region_per_s = [{}]", region.join(", "));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "states = {}", self.q.nrows());
        let _ = writeln!(out, "inputs = {}", self.r.nrows());
        out.push_str("\n[certification]\n");
        let _ = writeln!(out, "passed = {}", c.passed);
        let _ = writeln!(out, "vertex_count = {}", c.vertex_count);
        let _ = writeln!(out, "offending_count = {}", c.offending_count);
        let _ = writeln!(out, "max_real_per_s = {}", num(c.max_real_per_s));
        let _ = writeln!(out, "min_real_per_s = {}", num(c.min_real_per_s));
        let _ = writeln!(out, "worst_lmi_residual = {}", num(c.worst_lmi_residual));
        let _ = writeln!(out, "solver_iterations = {}", c.solver_iterations);
        out.push_str("\n[matrices]\n");
        write_matrix(&mut out, "q", self.q.nrows(), self.q.ncols(), |i, j| self.q[(i, j)]);
        write_matrix(&mut out, "r", self.r.nrows(), self.r.ncols(), |i, j| self.r[(i, j)]);
        write_matrix(&mut out, "k", 3, 8, |i, j| self.k[(i, j)]);
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()).map_err(CliError::io(path))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: RawGainFile = toml::from_str(text).map_err(|e| e.to_string())?;
        if raw.format != FORMAT_TAG {
            return Err(format!("unsupported format tag {:?}", raw.format));
        }
        let q = to_matrix(&raw.matrices.q, raw.states, raw.states, "q")?;
        let r = to_matrix(&raw.matrices.r, raw.inputs, raw.states, "r")?;
        let k = to_matrix(&raw.matrices.k, 3, 8, "k")?;
        if raw.states != 8 || raw.inputs != 3 {
            return Err("gain must map 8 states to 3 inputs".into());
        }
        let c = raw.certification;
        Ok(GainRecord {
            mode: raw.mode,
            region_per_s: raw.region_per_s,
            seed: raw.seed,
            q,
            r,
            k: Gain::from_fn(|i, j| k[(i, j)]),
            certification: Certification {
                passed: c.passed,
                vertex_count: c.vertex_count,
                offending_count: c.offending_count,
                max_real_per_s: c.max_real_per_s,
                min_real_per_s: c.min_real_per_s,
                worst_lmi_residual: c.worst_lmi_residual,
                solver_iterations: c.solver_iterations,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::GainFile {
            path: path.into(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|message| CliError::GainFile {
            path: path.into(),
            message,
        })
    }
}

fn to_matrix(rows: &[Vec<f64>], nr: usize, nc: usize, name: &str) -> Result<DMatrix<f64>, String> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(format!("matrix {name} must be {nr} x {nc}"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(format!("matrix {name} has non-finite entries"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGainFile {
    format: String,
    mode: String,
    region_per_s: Vec<f64>,
    seed: u64,
    states: usize,
    inputs: usize,
    certification: RawCertification,
    matrices: RawMatrices,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertification {
    passed: bool,
    vertex_count: usize,
    offending_count: usize,
    max_real_per_s: f64,
    min_real_per_s: f64,
    worst_lmi_residual: f64,
    solver_iterations: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrices {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GainRecord {
        GainRecord {
            mode: "dstab".into(),
            region_per_s: vec![-2.0, -40.0],
            seed: 7,
            q: DMatrix::from_fn(8, 8, |i, j| {
                if i == j {
                    1.0 + i as f64 / 3.0
                } else {
                    1e-3 * (i + j) as f64
                }
            }),
            r: DMatrix::from_fn(3, 8, |i, j| (i as f64 - j as f64) / 7.0),
            k: Gain::from_fn(|i, j| -0.1 * (i * 8 + j) as f64 + 1.0 / 3.0),
            certification: Certification {
                passed: true,
                vertex_count: 256,
                offending_count: 0,
                max_real_per_s: -2.1,
                min_real_per_s: -39.9,
                worst_lmi_residual: -1e-7,
                solver_iterations: 84,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let g = sample();
        let text = g.render();
        let back = GainRecord::parse(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.render(), text);
    }

    #[test]
    fn entries_use_seventeen_digits() {
        let text = sample().render();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
    }

    #[test]
    fn rejects_wrong_shapes() {
        let text = sample().render().replacen("k = [\n  [", "k = [\n  [0.0, ", 1);
        assert!(GainRecord::parse(&text).is_err());
    }
}
