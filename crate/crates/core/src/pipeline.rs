//! End-to-end orchestration shared by the command-line driver and the tests:
//! reference maneuver, linearization, sector closure, polytope and synthesis.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linearize::{
    build_polytope, linearize_reference, lpv_family, sector_slopes, select_varying_parameters, LinearizedSystem,
    LpvSample, ParameterSelection, PolytopicModel, SectorBounds,
};
use crate::lmi::{certify_gain, synthesize, CertificationReport, Synthesis, SynthesisMode, SynthesisOptions, Vertex};
use crate::sim::{
    calibrate_sine_amplitude, generate_reference, Gain, ManeuverPlan, ReferenceTrajectory, SteeringProfile,
};
use crate::vehicle::Vehicle;

/// Resolves the steering amplitude and integrates the reference.
///
/// A sine profile with a lateral target is calibrated to hit the target exactly; any
/// other profile is used as given.
pub fn reference_for(vehicle: &Vehicle, plan: &ManeuverPlan, dt: f64) -> Result<ReferenceTrajectory> {
    let mut plan = *plan;
    if let (Some(target), SteeringProfile::Sine { period, .. }) = (plan.lateral_target, plan.steering) {
        let amplitude = calibrate_sine_amplitude(vehicle, &plan, target, dt)?;
        plan.steering = SteeringProfile::Sine { amplitude, period };
    }
    generate_reference(vehicle, &plan, dt)
}

/// Everything derived from a reference on the way to the vertex systems.
#[derive(Debug, Clone)]
pub struct LpvBuild {
    pub linearized: Vec<LinearizedSystem>,
    pub sectors: SectorBounds,
    pub family: Vec<LpvSample>,
    pub selection: ParameterSelection,
    pub polytope: PolytopicModel,
}

impl LpvBuild {
    pub fn vertices(&self) -> Vec<Vertex> {
        self.polytope.vertices().iter().map(Vertex::from).collect()
    }
}

/// Linearizes the reference, closes the saturations with sector midpoints and builds the
/// polytope over `parameter_count` entries plus the two heading entries.
pub fn build_lpv(
    vehicle: &Vehicle,
    reference: &ReferenceTrajectory,
    parameter_count: usize,
    fd_step: f64,
) -> Result<LpvBuild> {
    let linearized = linearize_reference(vehicle, reference, fd_step)?;
    let sectors = sector_slopes(vehicle, reference);
    let family = lpv_family(reference, &linearized, &sectors.k_sigma)?;
    let selection = select_varying_parameters(&family, parameter_count)?;
    let polytope = build_polytope(&family, &selection.descriptors)?;
    Ok(LpvBuild {
        linearized,
        sectors,
        family,
        selection,
        polytope,
    })
}

/// A synthesized gain with its vertex certification.
#[derive(Debug, Clone)]
pub struct CertifiedGain {
    pub synthesis: crate::lmi::SynthesisResult,
    pub gain: Gain,
    pub report: CertificationReport,
}

/// Result of [`synthesize_certified`].
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum SynthesisOutcome {
    Certified(CertifiedGain),
    /// No strictly feasible point; the smallest worst-constraint eigenvalue reached.
    NotFound {
        best_residual: f64,
    },
}

/// Solves the LMIs over `vertices` and certifies the resulting gain against the region
/// the LMIs encode. A certified gain whose report does not pass signals numerical trouble.
pub fn synthesize_certified(
    vertices: &[Vertex],
    mode: &SynthesisMode,
    options: &SynthesisOptions,
) -> Result<SynthesisOutcome> {
    // A stall with a positive best eigenvalue is as good an infeasibility verdict as we get.
    let result = match synthesize(vertices, mode, options) {
        Ok(Synthesis::Feasible(r)) => r,
        Ok(Synthesis::Infeasible { best_residual })
        | Err(Error::SolverStalled {
            best: best_residual, ..
        }) => return Ok(SynthesisOutcome::NotFound { best_residual }),
        Err(e) => return Err(e),
    };
    if result.k.nrows() != 3 || result.k.ncols() != 8 {
        return Err(Error::InvalidParameter("gain must be 3 x 8"));
    }
    let gain = Gain::from_column_slice(result.k.as_slice());
    let region = match mode {
        SynthesisMode::DStability(region) => region.clone(),
        SynthesisMode::Contractivity { beta } => crate::lmi::half_plane_region(-*beta),
    };
    let report = certify_gain(&result.k, vertices, &region);
    Ok(SynthesisOutcome::Certified(CertifiedGain {
        synthesis: result,
        gain,
        report,
    }))
}
