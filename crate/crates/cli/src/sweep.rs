use std::fs;
use std::path::{Path, PathBuf};

use bearing_servo::scenario::ScenarioConfig;
use bearing_servo::sim::{RunSummary, Simulation};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::run::{load_scenario, write_outputs};
use crate::{plot, SweepOptions, EXIT_CONFIG};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_INVALID: &str = "ConfigInvalid";

/// Parameter grid: dotted paths into the scenario JSON, each with a list of
/// values. Array elements are addressed by index, e.g. `gains.k3.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<Value>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self, String> {
        let map: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| format!("grid must be a JSON object: {e}"))?;
        let mut axes = Vec::with_capacity(map.len());
        for (path, values) in map {
            match values {
                Value::Array(v) if !v.is_empty() => axes.push((path, v)),
                _ => return Err(format!("{path}: expected a non-empty list of values")),
            }
        }
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Values of cell `index`; the last axis varies fastest.
    pub fn cell(&self, mut index: usize) -> Vec<&Value> {
        let mut out = vec![&Value::Null; self.axes.len()];
        for (slot, (_, values)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = &values[index % values.len()];
            index /= values.len();
        }
        out
    }
}

fn lookup<'a>(root: &'a mut Value, path: &str) -> Result<&'a mut Value, String> {
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(m) => m.get_mut(key),
            Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("{path}: no such parameter"))?;
    }
    Ok(node)
}

/// Checks that every grid path names an existing scenario field.
pub fn check_paths(base: &ScenarioConfig, grid: &Grid) -> Result<(), String> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    grid.axes
        .iter()
        .try_for_each(|(p, _)| lookup(&mut value, p).map(|_| ()))
}

pub fn cell_config(
    base: &ScenarioConfig,
    grid: &Grid,
    values: &[&Value],
) -> Result<ScenarioConfig, String> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    for ((path, _), v) in grid.axes.iter().zip(values) {
        *lookup(&mut value, path)? = (*v).clone();
    }
    let cfg: ScenarioConfig = serde_json::from_value(value).map_err(|e| e.to_string())?;
    cfg.resolve().map_err(|e| e.to_string())?;
    Ok(cfg)
}

struct Row {
    cell: String,
    values: Vec<String>,
    fault: String,
    summary: Option<RunSummary>,
    detail: String,
}

fn run_cell(base: &ScenarioConfig, grid: &Grid, index: usize, dir: &Path) -> Row {
    let values = grid.cell(index);
    let cell = format!("cell_{index:04}");
    let cell_dir = dir.join(&cell);
    let mut row = Row {
        cell,
        values: values.iter().map(|v| v.to_string()).collect(),
        fault: String::new(),
        summary: None,
        detail: String::new(),
    };
    if let Err(e) = fs::create_dir_all(&cell_dir) {
        row.fault = "Io".into();
        row.detail = e.to_string();
        return row;
    }
    let cfg = match cell_config(base, grid, &values) {
        Ok(c) => c,
        Err(e) => {
            let _ = fs::write(cell_dir.join("error.txt"), format!("{e}\n"));
            row.fault = CONFIG_INVALID.into();
            row.detail = e;
            return row;
        }
    };
    let scenario = cfg.resolve().expect("validated above");
    let output = Simulation::new(scenario).run_to_end();
    if let Err(e) = write_outputs(&cell_dir, &cfg, &output.records) {
        row.fault = "Io".into();
        row.detail = e;
        return row;
    }
    let summary = RunSummary::new(&output, &scenario.visibility);
    if let Some(reason) = summary.fault {
        row.fault = reason.to_string();
    }
    row.summary = Some(summary);
    row
}

fn write_summary(path: &Path, grid: &Grid, rows: &[Row]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    let mut header = vec!["cell".to_string()];
    header.extend(grid.axes.iter().map(|(p, _)| p.clone()));
    header.extend(
        [
            "delta1_norm",
            "delta2_abs",
            "delta3_norm",
            "r_hat",
            "min_commanded_margin",
            "min_body_margin",
            "converged",
            "fault_reason",
            "detail",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(|e| e.to_string())?;
    for row in rows {
        let mut rec = vec![row.cell.clone()];
        rec.extend(row.values.iter().cloned());
        match &row.summary {
            Some(s) => rec.extend([
                format!("{:.6e}", s.delta1_norm),
                format!("{:.6e}", s.delta2_abs),
                format!("{:.6e}", s.delta3_norm),
                format!("{:.6e}", s.r_hat),
                format!("{:.6e}", s.min_commanded_margin),
                format!("{:.6e}", s.min_body_margin),
                s.converged.to_string(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 6).chain(["false".to_string()])),
        }
        rec.push(row.fault.clone());
        rec.push(row.detail.clone());
        w.write_record(&rec).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

pub fn cmd_sweep(opts: &SweepOptions) -> u8 {
    let (_, base) = match load_scenario(&opts.scenario) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let grid = match fs::read_to_string(&opts.grid)
        .map_err(|e| format!("cannot read {}: {e}", opts.grid.display()))
        .and_then(|t| Grid::parse(&t))
        .and_then(|g| check_paths(&base, &g).map(|_| g))
    {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir: PathBuf = opts
        .out
        .clone()
        .unwrap_or_else(|| opts.output_root.join("sweep"));
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!(
            "error: cannot create output directory {}: {e}",
            dir.display()
        );
        return EXIT_CONFIG;
    }

    let rows: Vec<Row> = (0..grid.len())
        .into_par_iter()
        .map(|i| run_cell(&base, &grid, i, &dir))
        .collect();
    if opts.plot {
        for row in rows.iter().filter(|r| r.summary.is_some()) {
            let cell_dir = dir.join(&row.cell);
            let plotted = fs::File::open(cell_dir.join(crate::run::TRAJECTORY_FILE))
                .map_err(|e| e.to_string())
                .and_then(|f| bearing_servo::log::read_csv(f).map_err(|e| e.to_string()))
                .and_then(|recs| plot::render(&recs, &cell_dir));
            if let Err(e) = plotted {
                eprintln!("warning: {}: plotting failed: {e}", row.cell);
            }
        }
    }
    if let Err(e) = write_summary(&dir.join(SUMMARY_FILE), &grid, &rows) {
        eprintln!("error: cannot write {SUMMARY_FILE}: {e}");
        return 1;
    }
    for row in &rows {
        let status = match (&row.summary, row.fault.as_str()) {
            (_, "") => format!(
                "converged={}",
                row.summary.as_ref().is_some_and(|s| s.converged)
            ),
            (_, f) => f.to_string(),
        };
        println!("{} {} {status}", row.cell, row.values.join(" "));
    }
    println!("{}", dir.join(SUMMARY_FILE).display());
    0
}
