//! `isoplate` command line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input (or failed acceptance
//! criteria), 2 when a solve fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use isoplate::scene_io;
use isoplate::{suite, Error, Simulation};

#[derive(Parser)]
#[command(name = "isoplate", version, about = "Inextensible thin plates with meshless isometry constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene, writing OBJ frames and diagnostics.csv.
    Run {
        scene: PathBuf,
        /// Output directory; defaults to the scene's `[output] directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scene without simulating it.
    Validate { scene: PathBuf },
    /// Run a reference suite and print one pass/fail line per criterion.
    Bench {
        #[arg(value_enum, default_value_t = Suite::Acceptance)]
        suite: Suite,
    },
    /// Simulate a scene with per-edge length constraints instead.
    Baseline {
        scene: PathBuf,
        /// Output directory; defaults to the scene's directory plus `-edge`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// Every criterion, including the simulated scenes (several minutes).
    Acceptance,
    /// Only the criteria without time stepping.
    Static,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scene, out } => simulate(&scene, out, false),
        Command::Baseline { scene, out } => simulate(&scene, out, true),
        Command::Validate { scene } => validate(&scene),
        Command::Bench { suite } => return bench(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn simulate(path: &Path, out: Option<PathBuf>, edge: bool) -> Result<(), Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = scene_io::parse_scene(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (mut scene, triangles) = file.to_scene(base)?;
    let mut dir = base.join(&file.output.directory).into_os_string();
    if edge {
        scene = scene_io::baseline_edge_constraints(scene);
        dir.push("-edge");
    }
    let dir = out.unwrap_or(dir.into());
    let mut sim = Simulation::new(scene)?;
    eprintln!(
        "{} points, {} constraints, {} steps; setup {:.3} s",
        sim.state.positions.len(),
        sim.constraints.len(),
        sim.scene.steps(),
        sim.setup_time.as_secs_f64()
    );
    let start = std::time::Instant::now();
    let summary = scene_io::run(&mut sim, &triangles, &dir, file.output.frames, file.output.diagnostics)?;
    println!(
        "{} steps in {:.2} s, {} frames in {}, {} fallback steps, max |g| {:.3e}",
        summary.steps,
        start.elapsed().as_secs_f64(),
        summary.frames_written,
        dir.display(),
        summary.fallback_steps,
        summary.max_abs_g
    );
    Ok(())
}

fn validate(path: &Path) -> Result<(), Error> {
    let (_, scene) = scene_io::validate_scene(path)?;
    println!(
        "{}: ok ({} points, {} pins, {} steps of {} s, tolerance {})",
        path.display(),
        scene.surface.len(),
        scene.pins.len(),
        scene.steps(),
        scene.dt,
        scene.projection.tolerance
    );
    Ok(())
}

fn bench(suite: Suite) -> ExitCode {
    let outcomes = match suite {
        Suite::Acceptance => suite::run_all(),
        Suite::Static => suite::run_static(),
    };
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
