//! CSV writers. Floats use Rust's shortest round-trip formatting.

use std::path::Path;

use lpv_core::sim::{ReferenceTrajectory, SimTrace, SweepPoint};
use lpv_core::vehicle::{SigmaVector, Vector8, VehicleInput, VehicleState, CHANNEL_NAMES};

use crate::error::CliError;

pub const TRACE_HEADER: [&str; 18] = [
    "t", "v", "u", "r", "omega_wf", "omega_wr", "x", "y", "psi", "delta_f", "tau_wf", "tau_wr", "x_L", "y_L", "dpsi",
    "dv", "du", "dr",
];

pub const SWEEP_HEADER: [&str; 4] = ["dv0", "du0", "converged", "terminal_error"];

fn trace_row(t: f64, s: &VehicleState, u: &VehicleInput, e: &Vector8) -> [String; 18] {
    [
        t, s.v, s.u, s.r, s.omega_f, s.omega_r, s.x, s.y, s.psi, u.delta_f, u.tau_f, u.tau_r, e[5], e[6], e[7], e[0],
        e[1], e[2],
    ]
    .map(|x| x.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(CliError::csv(path))
}

pub fn write_trace(path: &Path, trace: &SimTrace) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER).map_err(CliError::csv(path))?;
    for k in 0..trace.times.len() {
        w.write_record(trace_row(
            trace.times[k],
            &trace.states[k],
            &trace.inputs[k],
            &trace.errors[k],
        ))
        .map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// The reference in trace layout; its error columns are zero by definition.
pub fn write_reference(path: &Path, reference: &ReferenceTrajectory) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER).map_err(CliError::csv(path))?;
    let zero = Vector8::zeros();
    for s in &reference.samples {
        w.write_record(trace_row(s.t, &s.state, &s.input, &zero))
            .map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER).map_err(CliError::csv(path))?;
    for p in points {
        let converged = if p.converged { "1" } else { "0" };
        w.write_record([
            p.dv0.to_string(),
            p.du0.to_string(),
            converged.into(),
            p.terminal_error.to_string(),
        ])
        .map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Long format: one row per channel and reference sample.
pub fn write_sectors(path: &Path, slopes: &[(f64, SigmaVector)]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["channel", "t", "slope"]).map_err(CliError::csv(path))?;
    for (i, name) in CHANNEL_NAMES.iter().enumerate() {
        for (t, k) in slopes {
            w.write_record([name.to_string(), t.to_string(), k[i].to_string()])
                .map_err(CliError::csv(path))?;
        }
    }
    w.flush().map_err(CliError::io(path))
}
