//! Per-step log records and their CSV form.
//!
//! One header row, columns in [`LogRecord::COLUMNS`] order, floats written
//! with 17 significant digits so a trajectory file round-trips bit-exactly.

use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("CSV schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("bad value in row {row}, column {column}: {value:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub p_b: Vector3<f64>,
    pub v_b: Vector3<f64>,
    pub attitude: Matrix3<f64>,
    pub p_t: Vector3<f64>,
    pub v_t: Vector3<f64>,
    pub b: Vector3<f64>,
    pub theta: f64,
    pub x: f64,
    pub delta1: Vector3<f64>,
    pub delta2: f64,
    pub delta3: Vector3<f64>,
    pub w_d: Vector3<f64>,
    pub u: Vector3<f64>,
    pub u0: Vector3<f64>,
    pub thrust: f64,
    pub psi: f64,
    pub r_hat: f64,
    pub rho_hat: Vector3<f64>,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub noisy: bool,
}

impl LogRecord {
    pub const COLUMNS: [&'static str; 53] = [
        "t",
        "p_B_x",
        "p_B_y",
        "p_B_z",
        "v_B_x",
        "v_B_y",
        "v_B_z", //
        "R_00",
        "R_01",
        "R_02",
        "R_10",
        "R_11",
        "R_12",
        "R_20",
        "R_21",
        "R_22", //
        "p_T_x",
        "p_T_y",
        "p_T_z",
        "v_T_x",
        "v_T_y",
        "v_T_z", //
        "b_x",
        "b_y",
        "b_z",
        "theta",
        "x", //
        "delta1_x",
        "delta1_y",
        "delta1_z",
        "delta2",
        "delta3_x",
        "delta3_y",
        "delta3_z", //
        "w_d_x",
        "w_d_y",
        "w_d_z",
        "u_x",
        "u_y",
        "u_z",
        "u0_x",
        "u0_y",
        "u0_z", //
        "T",
        "psi",
        "r_hat",
        "rho_hat_x",
        "rho_hat_y",
        "rho_hat_z", //
        "V1",
        "V2",
        "V3",
        "noisy",
    ];

    pub fn header() -> Vec<&'static str> {
        Self::COLUMNS.to_vec()
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(53);
        out.push(self.t);
        out.extend(self.p_b.iter());
        out.extend(self.v_b.iter());
        out.extend(self.attitude.transpose().iter()); // row-major
        out.extend(self.p_t.iter());
        out.extend(self.v_t.iter());
        out.extend(self.b.iter());
        out.push(self.theta);
        out.push(self.x);
        out.extend(self.delta1.iter());
        out.push(self.delta2);
        out.extend(self.delta3.iter());
        out.extend(self.w_d.iter());
        out.extend(self.u.iter());
        out.extend(self.u0.iter());
        out.push(self.thrust);
        out.push(self.psi);
        out.push(self.r_hat);
        out.extend(self.rho_hat.iter());
        out.push(self.v1);
        out.push(self.v2);
        out.push(self.v3);
        out.push(if self.noisy { 1.0 } else { 0.0 });
        out
    }

    pub fn from_values(v: &[f64]) -> Self {
        assert_eq!(v.len(), 53, "log rows have 53 columns");
        let v3 = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
        Self {
            t: v[0],
            p_b: v3(1),
            v_b: v3(4),
            attitude: Matrix3::from_row_slice(&v[7..16]),
            p_t: v3(16),
            v_t: v3(19),
            b: v3(22),
            theta: v[25],
            x: v[26],
            delta1: v3(27),
            delta2: v[30],
            delta3: v3(31),
            w_d: v3(34),
            u: v3(37),
            u0: v3(40),
            thrust: v[43],
            psi: v[44],
            r_hat: v[45],
            rho_hat: v3(46),
            v1: v[49],
            v2: v[50],
            v3: v[51],
            noisy: v[52] != 0.0,
        }
    }

    /// Scaled velocity the controller used: `δ3 + w_d`.
    pub fn w_used(&self) -> Vector3<f64> {
        self.delta3 + self.w_d
    }

    /// Body z-axis in the inertial frame.
    pub fn z_body(&self) -> Vector3<f64> {
        self.attitude.column(2).into_owned()
    }
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // NaN/inf keep their Rust spelling so they parse back.
        format!("{v}")
    }
}

pub fn write_csv<W: Write>(out: W, records: &[LogRecord]) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LogRecord::header())?;
    for r in records {
        w.write_record(r.values().into_iter().map(format_value))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trajectory file. The header must match [`LogRecord::header`]
/// exactly.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<LogRecord>, LogError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let expected = LogRecord::header();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != *b) {
        let unknown: Vec<&str> = header.iter().filter(|h| !expected.contains(h)).collect();
        return Err(LogError::SchemaMismatch(if unknown.is_empty() {
            format!(
                "expected {} columns in log order, got {}",
                expected.len(),
                header.len()
            )
        } else {
            format!("unknown columns {unknown:?}")
        }));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .zip(&expected)
            .map(|(s, col)| {
                s.trim().parse::<f64>().map_err(|_| LogError::BadValue {
                    row: row + 1,
                    column: (*col).to_string(),
                    value: s.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(LogRecord::from_values(&values));
    }
    Ok(out)
}
