//! Subcommand bodies. Each reads the resolved [`Context`] and writes into its output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lpv_core::linearize::slope_series;
use lpv_core::pipeline::{build_lpv, reference_for, synthesize_certified, CertifiedGain, LpvBuild, SynthesisOutcome};
use lpv_core::sim::{
    classify_offset, simulate_closed_loop, speed_offset, summarize_region, ReferenceTrajectory, SimStatus, SweepPoint,
};
use lpv_core::tire::slip_quantities;
use lpv_core::vehicle::SigmaVector;
use lpv_core::vehicle::Vehicle;
use rayon::prelude::*;

use crate::config::{ModeKind, RunConfig};
use crate::error::CliError;
use crate::gainfile::{Certification, GainRecord};
use crate::output;

#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    /// Recorded in the gain file; the pipeline itself draws no random numbers.
    pub seed: u64,
    /// Worker threads for sweeps, 0 for one per core.
    pub threads: usize,
    /// Suppress console reports; files are written either way.
    pub quiet: bool,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        let out_dir = PathBuf::from(&config.output_dir);
        Self {
            config,
            out_dir,
            seed: 0,
            threads: 0,
            quiet: false,
        }
    }

    fn ensure_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(CliError::io(&self.out_dir))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn default_gain_path(&self) -> PathBuf {
        self.out("gain.toml")
    }
}

/// Vehicle model and calibrated reference shared by every subcommand.
pub fn prepare(config: &RunConfig) -> Result<(Vehicle, ReferenceTrajectory), CliError> {
    let vehicle = config.vehicle()?;
    let reference = reference_for(&vehicle, &config.maneuver(), config.maneuver.time_step_s)?;
    Ok((vehicle, reference))
}

pub fn reference(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let (vehicle, reference) = prepare(&ctx.config)?;
    output::write_reference(&ctx.out("reference.csv"), &reference)?;
    let summary = reference_summary(&vehicle, &reference);
    let path = ctx.out("reference_summary.txt");
    std::fs::write(&path, &summary).map_err(CliError::io(&path))?;
    if !ctx.quiet {
        print!("{summary}");
    }
    Ok(())
}

pub fn reference_summary(vehicle: &Vehicle, reference: &ReferenceTrajectory) -> String {
    // peak |kappa_f|, |kappa_r|, |alpha_f|, |alpha_r|
    let mut slips = [0.0f64; 4];
    for smp in &reference.samples {
        if let Ok(q) = slip_quantities(&smp.state.dynamic(), &smp.input, &vehicle.params) {
            for (peak, x) in slips.iter_mut().zip([q.kappa_f, q.kappa_r, q.alpha_f, q.alpha_r]) {
                *peak = peak.max(x.abs());
            }
        }
    }
    let peak_steer = reference
        .samples
        .iter()
        .map(|s| s.input.delta_f.abs())
        .fold(0.0, f64::max);
    let worst_loop = reference.samples.iter().map(|s| s.loop_residual).fold(0.0, f64::max);
    let most_iterations = reference.samples.iter().map(|s| s.loop_iterations).max().unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(s, "samples                {}", reference.len());
    let _ = writeln!(s, "time_step_s            {}", reference.dt);
    let _ = writeln!(
        s,
        "final_lateral_m        {:.6}",
        reference.final_lateral_displacement()
    );
    let _ = writeln!(s, "peak_abs_heading_rad   {:.6}", reference.peak_abs_heading());
    let _ = writeln!(s, "peak_abs_steer_rad     {:.6}", peak_steer);
    let _ = writeln!(s, "peak_abs_kappa_f       {:.6e}", slips[0]);
    let _ = writeln!(s, "peak_abs_kappa_r       {:.6e}", slips[1]);
    let _ = writeln!(s, "peak_abs_alpha_f_rad   {:.6e}", slips[2]);
    let _ = writeln!(s, "peak_abs_alpha_r_rad   {:.6e}", slips[3]);
    let _ = writeln!(s, "worst_loop_residual_n  {:.3e}", worst_loop);
    let _ = writeln!(s, "most_loop_iterations   {}", most_iterations);
    s
}

/// Result of the synthesis pipeline before anything is written.
pub struct SynthesisRun {
    pub build: LpvBuild,
    /// `(t, per-channel secant slope)` along the reference.
    pub slopes: Vec<(f64, SigmaVector)>,
    pub outcome: SynthesisOutcome,
}

impl SynthesisRun {
    pub fn certified(&self) -> Option<&CertifiedGain> {
        match &self.outcome {
            SynthesisOutcome::Certified(cg) => Some(cg),
            SynthesisOutcome::NotFound { .. } => None,
        }
    }
}

pub fn run_synthesis(config: &RunConfig) -> Result<SynthesisRun, CliError> {
    let (vehicle, reference) = prepare(config)?;
    let lin = &config.linearization;
    let build = build_lpv(&vehicle, &reference, lin.parameter_count, lin.fd_relative_step)?;
    let slopes = reference
        .samples
        .iter()
        .map(|smp| smp.t)
        .zip(slope_series(&vehicle, &reference))
        .collect();
    let outcome = synthesize_certified(
        &build.vertices(),
        &config.synthesis_mode()?,
        &config.synthesis_options(),
    )?;
    Ok(SynthesisRun { build, slopes, outcome })
}

pub fn gain_record(config: &RunConfig, seed: u64, vertex_count: usize, cg: &CertifiedGain) -> GainRecord {
    let s = &config.synthesis;
    let (mode, region_per_s) = match s.mode {
        ModeKind::Contractivity => ("contractivity", vec![s.beta_per_s]),
        ModeKind::Dstab => ("dstab", vec![s.strip_max_per_s, s.strip_min_per_s]),
    };
    GainRecord {
        mode: mode.into(),
        region_per_s,
        seed,
        q: cg.synthesis.q.clone(),
        r: cg.synthesis.r.clone(),
        k: cg.gain,
        certification: Certification {
            passed: cg.report.passed(),
            vertex_count,
            offending_count: cg.report.offending.len(),
            max_real_per_s: cg.report.max_real(),
            min_real_per_s: cg.report.min_real(),
            worst_lmi_residual: cg.synthesis.worst_residual,
            solver_iterations: cg.synthesis.iterations,
        },
    }
}

fn synthesis_report(run: &SynthesisRun, record: Option<&GainRecord>) -> String {
    let b = &run.build;
    let mut s = String::new();
    let _ = writeln!(s, "vertices {}", b.polytope.vertex_count());
    let _ = writeln!(s, "varying entries {}", b.selection.varying_entries);
    let _ = writeln!(s, "parameters:");
    for d in &b.polytope.descriptors {
        let _ = writeln!(
            s,
            "  {:?}[{}][{}] in [{:.6e}, {:.6e}]",
            d.matrix, d.row, d.col, d.min, d.max
        );
    }
    let _ = writeln!(s, "sector slopes (channel k_min k_max k_sigma):");
    for (i, name) in lpv_core::vehicle::CHANNEL_NAMES.iter().enumerate() {
        let k = &b.sectors;
        let _ = writeln!(
            s,
            "  {name:<5} {:.6} {:.6} {:.6}",
            k.k_min[i],
            k.k_max[i],
            k.k_sigma[(i, i)]
        );
    }
    match (record, &run.outcome) {
        (Some(r), SynthesisOutcome::Certified(cg)) => {
            let c = &r.certification;
            let _ = writeln!(s, "mode {} region {:?}", r.mode, r.region_per_s);
            let _ = writeln!(s, "solver iterations {}", c.solver_iterations);
            let _ = writeln!(s, "worst lmi residual {:.6e}", c.worst_lmi_residual);
            let _ = writeln!(
                s,
                "closed-loop real parts in [{:.6}, {:.6}]",
                c.min_real_per_s, c.max_real_per_s
            );
            let _ = writeln!(s, "certification {}", if c.passed { "passed" } else { "FAILED" });
            for &j in &cg.report.offending {
                let v = &cg.report.vertices[j];
                let _ = writeln!(
                    s,
                    "  vertex {} outside region: real parts [{:.6}, {:.6}]",
                    v.index, v.min_real, v.spectral_abscissa
                );
            }
        }
        (_, SynthesisOutcome::NotFound { best_residual }) => {
            let _ = writeln!(
                s,
                "no feasible point found (best worst-constraint eigenvalue {best_residual:.6e})"
            );
        }
        _ => {}
    }
    s
}

/// Writes gain.toml (when feasible), report.txt and sectors.csv. Fails with exit code 1
/// when the LMIs are infeasible or the gain does not certify.
pub fn synthesize(ctx: &Context) -> Result<GainRecord, CliError> {
    ctx.ensure_out_dir()?;
    let start = Instant::now();
    let run = run_synthesis(&ctx.config)?;
    let record = run
        .certified()
        .map(|cg| gain_record(&ctx.config, ctx.seed, run.build.polytope.vertex_count(), cg));
    output::write_sectors(&ctx.out("sectors.csv"), &run.slopes)?;
    let report = synthesis_report(&run, record.as_ref());
    let report_path = ctx.out("report.txt");
    std::fs::write(&report_path, &report).map_err(CliError::io(&report_path))?;
    if !ctx.quiet {
        print!("{report}");
        println!("elapsed {:.2} s", start.elapsed().as_secs_f64());
    }
    let Some(record) = record else {
        let best = match run.outcome {
            SynthesisOutcome::NotFound { best_residual } => best_residual,
            SynthesisOutcome::Certified(_) => f64::NAN,
        };
        return Err(CliError::Synthesis(format!(
            "LMIs infeasible, best residual {best:.6e}"
        )));
    };
    record.write(&ctx.default_gain_path())?;
    if !record.certification.passed {
        return Err(CliError::Synthesis(format!(
            "{} vertices fail certification",
            record.certification.offending_count
        )));
    }
    Ok(record)
}

fn offset_name(dv: f64, du: f64) -> String {
    format!("trace_dv{dv:+.3}_du{du:+.3}.csv")
}

fn status_text(status: SimStatus) -> String {
    match status {
        SimStatus::Converged => "converged".into(),
        SimStatus::NotConverged => "not converged".into(),
        SimStatus::Diverged { time } => format!("diverged at t = {time:.3} s"),
    }
}

/// Closed-loop runs from each `(dv, du)` offset; returns the trace paths.
pub fn simulate(ctx: &Context, gain_path: &Path, offsets: &[(f64, f64)]) -> Result<Vec<PathBuf>, CliError> {
    let gain = GainRecord::load(gain_path)?;
    ctx.ensure_out_dir()?;
    let (vehicle, reference) = prepare(&ctx.config)?;
    let settings = ctx.config.closed_loop();
    let mut paths = Vec::new();
    let mut report =
        String::from("dv0 du0 status terminal_error peak_abs_delta_f_rad peak_abs_tau_f_nm peak_abs_tau_r_nm\n");
    for &(dv, du) in offsets {
        let offset = speed_offset(&vehicle, dv, du);
        let trace = simulate_closed_loop(&vehicle, &gain.k, &reference, &offset, &settings);
        let path = ctx.out(&offset_name(dv, du));
        output::write_trace(&path, &trace)?;
        let peak = trace.peak_command();
        let _ = writeln!(
            report,
            "{dv:+.3} {du:+.3} {} {:.6e} {:.6e} {:.6e} {:.6e}",
            status_text(trace.status).replace(' ', "_"),
            trace.terminal_error_norm(),
            peak.delta_f,
            peak.tau_f,
            peak.tau_r
        );
        if !ctx.quiet {
            println!(
                "dv0 {dv:+.3} du0 {du:+.3}: {} terminal error {:.3e}, peak |delta_f| {:.4} rad -> {}",
                status_text(trace.status),
                trace.terminal_error_norm(),
                peak.delta_f,
                path.display()
            );
        }
        paths.push(path);
    }
    let report_path = ctx.out("simulate_report.txt");
    std::fs::write(&report_path, report).map_err(CliError::io(&report_path))?;
    Ok(paths)
}

/// Classifies every grid offset in parallel; the result order is the grid order.
pub fn sweep_points(ctx: &Context, gain_path: &Path) -> Result<Vec<SweepPoint>, CliError> {
    let gain = GainRecord::load(gain_path)?;
    let (vehicle, reference) = prepare(&ctx.config)?;
    let settings = ctx.config.closed_loop();
    let grid = ctx.config.sweep_grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        grid.points()
            .par_iter()
            .map(|&(dv, du)| classify_offset(&vehicle, &gain.k, &reference, dv, du, &settings))
            .collect()
    }))
}

pub fn sweep(ctx: &Context, gain_path: &Path) -> Result<Vec<SweepPoint>, CliError> {
    let start = Instant::now();
    let points = sweep_points(ctx, gain_path)?;
    ctx.ensure_out_dir()?;
    output::write_sweep(&ctx.out("sweep.csv"), &points)?;
    let summary = summarize_region(&ctx.config.sweep_grid(), &points);
    if ctx.quiet {
        return Ok(points);
    }
    println!(
        "{} of {} offsets converged; origin {}; simply connected {}; half-widths dv {:.3} du {:.3} m/s ({:.2} s)",
        summary.converged_count,
        points.len(),
        if summary.contains_origin { "inside" } else { "outside" },
        summary.simply_connected,
        summary.max_abs_dv,
        summary.max_abs_du,
        start.elapsed().as_secs_f64()
    );
    Ok(points)
}
