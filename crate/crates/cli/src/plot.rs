use std::fs::{self, File};
use std::path::Path;

use bearing_servo::log::{read_csv, LogError, LogRecord};
use plotters::coord::Shift;
use plotters::prelude::*;

use crate::{PlotOptions, EXIT_CONFIG};

pub const TRAJECTORY_SVG: &str = "trajectory.svg";
pub const ERRORS_SVG: &str = "errors.svg";

const MAX_POINTS: usize = 2000;
const TRIADS: usize = 12;

type DrawResult<T> = Result<T, Box<dyn std::error::Error>>;

pub fn cmd_plot(opts: &PlotOptions) -> u8 {
    let records = match File::open(&opts.csv)
        .map_err(LogError::from)
        .and_then(read_csv)
    {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", opts.csv.display());
            return EXIT_CONFIG;
        }
    };
    let dir = opts.out.clone().unwrap_or_else(|| {
        opts.csv
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf()
    });
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    match render(&records, &dir) {
        Ok(()) => {
            println!("{}", dir.join(TRAJECTORY_SVG).display());
            println!("{}", dir.join(ERRORS_SVG).display());
            0
        }
        Err(e) => {
            eprintln!("error: plotting failed: {e}");
            1
        }
    }
}

/// Writes the trajectory and error figures into `dir`.
pub fn render(records: &[LogRecord], dir: &Path) -> Result<(), String> {
    trajectory(records, &dir.join(TRAJECTORY_SVG)).map_err(|e| e.to_string())?;
    errors(records, &dir.join(ERRORS_SVG)).map_err(|e| e.to_string())
}

fn subsample(records: &[LogRecord]) -> Vec<&LogRecord> {
    let stride = (records.len() / MAX_POINTS).max(1);
    records.iter().step_by(stride).collect()
}

/// Finite min/max padded by 5 %; `[-1, 1]` when there is nothing to show.
fn range(values: impl IntoIterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return -1.0..1.0;
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        lo.abs().max(1.0) * 0.05
    };
    (lo - pad)..(hi + pad)
}

/// Display coordinates: plotters' 3D y axis is vertical, and the inertial
/// frame is z-down, so altitude is `-z`.
fn display(p: &nalgebra::Vector3<f64>) -> (f64, f64, f64) {
    (p.x, -p.z, p.y)
}

fn trajectory(records: &[LogRecord], path: &Path) -> DrawResult<()> {
    let root = SVGBackend::new(path, (900, 800)).into_drawing_area();
    root.fill(&WHITE)?;
    let pts = subsample(records);
    let all = || pts.iter().flat_map(|r| [display(&r.p_b), display(&r.p_t)]);
    let xr = range(all().map(|p| p.0));
    let yr = range(all().map(|p| p.1));
    let zr = range(all().map(|p| p.2));
    let span = (xr.end - xr.start)
        .max(yr.end - yr.start)
        .max(zr.end - zr.start);
    let arm = 0.06 * span;

    let mut chart = ChartBuilder::on(&root)
        .caption("Vehicle and target trajectories", ("sans-serif", 24))
        .margin(20)
        .build_cartesian_3d(xr, yr, zr)?;
    chart.with_projection(|mut p| {
        p.yaw = 0.7;
        p.pitch = 0.35;
        p.scale = 0.85;
        p.into_matrix()
    });
    chart
        .configure_axes()
        .light_grid_style(BLACK.mix(0.1))
        .max_light_lines(4)
        .draw()?;

    chart
        .draw_series(LineSeries::new(
            pts.iter().map(|r| display(&r.p_b)),
            BLUE.stroke_width(2),
        ))?
        .label("vehicle")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(
            pts.iter().map(|r| display(&r.p_t)),
            GREEN.stroke_width(2),
        ))?
        .label("target")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], GREEN));

    let every = (records.len() / TRIADS).max(1);
    for r in records.iter().step_by(every) {
        for (axis, color) in [(0, RED), (1, GREEN), (2, BLUE)] {
            let tip = r.p_b + r.attitude.column(axis) * arm;
            chart.draw_series(std::iter::once(PathElement::new(
                [display(&r.p_b), display(&tip)],
                color.stroke_width(2),
            )))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

struct Series {
    name: &'static str,
    values: Vec<f64>,
    color: RGBColor,
}

fn series(
    name: &'static str,
    color: RGBColor,
    pts: &[&LogRecord],
    f: impl Fn(&LogRecord) -> f64,
) -> Series {
    Series {
        name,
        values: pts.iter().map(|r| f(r)).collect(),
        color,
    }
}

fn panel(
    area: &DrawingArea<SVGBackend, Shift>,
    title: &str,
    t: &[f64],
    lines: &[Series],
) -> DrawResult<()> {
    let xr = range(t.iter().copied());
    let yr = range(lines.iter().flat_map(|s| s.values.iter().copied()));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(xr, yr)?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .max_light_lines(3)
        .draw()?;
    for s in lines {
        let pts = t
            .iter()
            .zip(&s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(t, v)| (*t, *v));
        chart
            .draw_series(LineSeries::new(pts, s.color))?
            .label(s.name)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], s.color));
    }
    if lines.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
    }
    Ok(())
}

fn errors(records: &[LogRecord], path: &Path) -> DrawResult<()> {
    let root = SVGBackend::new(path, (1200, 1100)).into_drawing_area();
    root.fill(&WHITE)?;
    let pts = subsample(records);
    let t: Vec<f64> = pts.iter().map(|r| r.t).collect();
    let areas = root.split_evenly((3, 2));
    let xyz = |f: fn(&LogRecord) -> nalgebra::Vector3<f64>| {
        [
            series("x", RED, &pts, move |r| f(r).x),
            series("y", GREEN, &pts, move |r| f(r).y),
            series("z", BLUE, &pts, move |r| f(r).z),
        ]
    };
    panel(
        &areas[0],
        "|delta1| (bearing error)",
        &t,
        &[series("|delta1|", BLUE, &pts, |r| r.delta1.norm())],
    )?;
    panel(
        &areas[1],
        "delta2 (relative size error)",
        &t,
        &[series("delta2", BLUE, &pts, |r| r.delta2)],
    )?;
    panel(
        &areas[2],
        "|delta3| (scaled velocity error)",
        &t,
        &[series("|delta3|", BLUE, &pts, |r| r.delta3.norm())],
    )?;
    panel(
        &areas[3],
        "w_d (desired scaled velocity)",
        &t,
        &xyz(|r| r.w_d),
    )?;
    panel(
        &areas[4],
        "rho_hat (acceleration estimate)",
        &t,
        &xyz(|r| r.rho_hat),
    )?;
    panel(
        &areas[5],
        "r_hat (radius estimate)",
        &t,
        &[series("r_hat", BLUE, &pts, |r| r.r_hat)],
    )?;
    root.present()?;
    Ok(())
}
