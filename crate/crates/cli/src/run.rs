use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bearing_servo::log::write_csv;
use bearing_servo::scenario::{paper_scenario, ConfigError, ScenarioConfig};
use bearing_servo::sim::{RunOutcome, RunSummary, Simulation};

use crate::{plot, RunOptions, EXIT_CONFIG, EXIT_FAULT};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

/// Loads `paper` or a scenario file; returns a short name for output paths.
pub fn load_scenario(arg: &str) -> Result<(String, ScenarioConfig), ConfigError> {
    if arg == "paper" {
        return Ok(("paper".to_string(), paper_scenario()));
    }
    let path = Path::new(arg);
    let name = path.file_stem().map_or_else(
        || "scenario".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    Ok((name, ScenarioConfig::load(path)?))
}

fn apply_overrides(cfg: &mut ScenarioConfig, opts: &RunOptions) {
    if let Some(seed) = opts.seed {
        cfg.noise.rng_seed = seed;
    }
    if opts.no_noise {
        cfg.noise.enabled = false;
    }
    if opts.include_wd_dot {
        cfg.gains.include_wd_dot = true;
    }
    if let Some(d) = opts.duration {
        cfg.duration = d;
    }
    if let Some(dt) = opts.dt_physics {
        cfg.dt_physics = dt;
    }
    if let Some(dt) = opts.dt_control {
        cfg.dt_control = dt;
    }
}

pub fn write_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    records: &[bearing_servo::LogRecord],
) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.to_json_pretty() + "\n")
        .map_err(|e| format!("cannot write {RESOLVED_CONFIG_FILE}: {e}"))?;
    let file = File::create(dir.join(TRAJECTORY_FILE))
        .map_err(|e| format!("cannot write {TRAJECTORY_FILE}: {e}"))?;
    write_csv(BufWriter::new(file), records)
        .map_err(|e| format!("cannot write {TRAJECTORY_FILE}: {e}"))
}

fn print_summary(summary: &RunSummary, outcome: &RunOutcome, dir: &Path) {
    println!("output: {}", dir.display());
    match outcome {
        RunOutcome::Completed => println!("outcome: completed"),
        RunOutcome::Faulted { t, reason, detail } => {
            println!("outcome: fault {reason} at t = {t:.3} s ({detail})")
        }
    }
    println!("steps: {}", summary.steps);
    println!("final |delta1|: {:.6e}", summary.delta1_norm);
    println!("final |delta2|: {:.6e}", summary.delta2_abs);
    println!("final |delta3|: {:.6e}", summary.delta3_norm);
    println!("final r_hat: {:.6}", summary.r_hat);
    println!(
        "final rho_hat: [{:.6e}, {:.6e}, {:.6e}]",
        summary.rho_hat[0], summary.rho_hat[1], summary.rho_hat[2]
    );
    println!(
        "min visibility margin (commanded): {:.6e}",
        summary.min_commanded_margin
    );
    println!(
        "min visibility margin (body axis): {:.6e}",
        summary.min_body_margin
    );
    println!("converged: {}", summary.converged);
}

pub fn cmd_run(opts: &RunOptions) -> u8 {
    let (name, mut cfg) = match load_scenario(&opts.scenario) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    apply_overrides(&mut cfg, opts);
    let scenario = match cfg.resolve() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir: PathBuf = opts
        .out
        .clone()
        .unwrap_or_else(|| opts.output_root.join(&name));
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!(
            "error: cannot create output directory {}: {e}",
            dir.display()
        );
        return EXIT_CONFIG;
    }

    let output = Simulation::new(scenario).run_to_end();
    if let Err(e) = write_outputs(&dir, &cfg, &output.records) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if opts.plot {
        if let Err(e) = plot::render(&output.records, &dir) {
            eprintln!("error: plotting failed: {e}");
        }
    }
    let summary = RunSummary::new(&output, &scenario.visibility);
    print_summary(&summary, &output.outcome, &dir);
    match output.outcome {
        RunOutcome::Completed => 0,
        RunOutcome::Faulted { reason, .. } => {
            eprintln!("error: run stopped early: {reason}");
            EXIT_FAULT
        }
    }
}
