use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::obj::write_obj;
use crate::dynamics::{Simulation, StepReport};
use crate::error::{Error, Result};

/// Column set of `diagnostics.csv`.
pub const CSV_HEADER: &str =
    "step,time,fp_iterations,used_fallback,max_abs_g,bending_energy,kinetic_energy,max_edge_strain,momentum";

/// Totals of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub frames_written: usize,
    pub fallback_steps: usize,
    pub max_abs_g: f64,
    pub final_report: Option<StepReport>,
}

fn csv_row(r: &StepReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.step,
        r.time,
        r.fp_iterations,
        r.used_fallback as u8,
        r.final_abs_g,
        r.bending_energy,
        r.kinetic_energy,
        r.max_edge_strain,
        r.momentum
    )
}

/// Runs `sim` for its scene's duration, writing `frame_%06d.obj` every
/// `frame_stride` steps (step 0 included) and one `diagnostics.csv` row per
/// step.
///
/// The `max_abs_g` column is measured at the end of each step, after
/// collision correction. A solver failure stops the run after the rows
/// written so far are flushed.
pub fn run(
    sim: &mut Simulation,
    triangles: &[[usize; 3]],
    out_dir: &Path,
    frames: bool,
    diagnostics: bool,
) -> Result<RunSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stride = sim.scene.frame_stride;
    let steps = sim.scene.steps();
    let csv_path = out_dir.join("diagnostics.csv");
    let mut csv = if diagnostics {
        let f = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{CSV_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
        let initial = sim.report(0, false, 0.0, 0);
        writeln!(w, "{}", csv_row(&initial)).map_err(|e| Error::io(&csv_path, e))?;
        Some(w)
    } else {
        None
    };
    let mut summary = RunSummary {
        steps: 0,
        frames_written: 0,
        fallback_steps: 0,
        max_abs_g: 0.0,
        final_report: None,
    };
    let write_frame = |sim: &Simulation, summary: &mut RunSummary| -> Result<()> {
        if frames && sim.steps_taken().is_multiple_of(stride) {
            let path = out_dir.join(format!("frame_{:06}.obj", sim.steps_taken()));
            write_obj(&path, &sim.state.positions, triangles)?;
            summary.frames_written += 1;
        }
        Ok(())
    };
    write_frame(sim, &mut summary)?;
    let mut failure = None;
    for _ in 0..steps {
        match sim.step() {
            Ok(report) => {
                if let Some(w) = csv.as_mut() {
                    writeln!(w, "{}", csv_row(&report)).map_err(|e| Error::io(&csv_path, e))?;
                }
                summary.steps += 1;
                summary.fallback_steps += report.used_fallback as usize;
                summary.max_abs_g = summary.max_abs_g.max(report.final_abs_g);
                summary.final_report = Some(report);
                write_frame(sim, &mut summary)?;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(mut w) = csv {
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
