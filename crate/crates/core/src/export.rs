//! Artifact formats: certificate summaries, binary matrix dumps, trajectory
//! and region CSV files.
//!
//! Matrix dumps are three little-endian `u64` header words
//! `(rows, cols, version)` followed by the entries in row-major order as
//! little-endian `f64`.

use std::io::{Read, Write};

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::Condition1Record;
use crate::linearization::{DecreaseSample, LyapunovCertificate, QMode};
use crate::simulation::region::RegionEstimate;
use crate::simulation::Trajectory;

pub const MATRIX_DUMP_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed matrix dump: {0}")]
    Format(String),
}

pub fn write_matrix<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<(), ExportError> {
    for word in [m.nrows() as u64, m.ncols() as u64, MATRIX_DUMP_VERSION] {
        w.write_all(&word.to_le_bytes())?;
    }
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<DMatrix<f64>, ExportError> {
    let mut word = [0u8; 8];
    let mut header = [0u64; 3];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word);
    }
    let [rows, cols, version] = header;
    if version != MATRIX_DUMP_VERSION {
        return Err(ExportError::Format(format!("unsupported version {version}")));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ExportError::Format("trailing bytes after matrix data".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn pairs(ev: &[Complex<f64>]) -> Vec<[f64; 2]> {
    ev.iter().map(|e| [e.re, e.im]).collect()
}

/// JSON-friendly digest of a certificate; the matrices themselves go to
/// binary dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub dim: usize,
    pub q1: f64,
    pub q2: f64,
    pub sigma: f64,
    pub q_mode: QMode,
    /// `(re, im)` pairs.
    pub a_eigenvalues: Vec<[f64; 2]>,
    pub reduced_eigenvalues: Vec<[f64; 2]>,
    pub zero_eigenvalues: usize,
    pub pi_eigenvalues: Vec<f64>,
    pub pi_rank: usize,
    pub p_positive_definite: bool,
    /// `‖Π v‖ / (‖Π‖ ‖v‖)`.
    pub pi_v_residual: f64,
    pub decrease_eigenvalues: Vec<f64>,
    pub block_deviation: f64,
    pub rank_one_q_kernel_dim: usize,
    pub v_star: Vec<f64>,
    pub condition1: Vec<Condition1Record>,
    pub sampled_decrease: Option<DecreaseSample>,
}

impl CertificateSummary {
    pub fn new(cert: &LyapunovCertificate, sampled_decrease: Option<DecreaseSample>) -> Self {
        let pi_v = (&cert.pi_matrix * &cert.v_star).norm();
        Self {
            dim: cert.dim(),
            q1: cert.q1,
            q2: cert.q2,
            sigma: cert.sigma(),
            q_mode: cert.q_mode,
            a_eigenvalues: pairs(&cert.a_spectrum),
            reduced_eigenvalues: pairs(&cert.reduced_spectrum),
            zero_eigenvalues: cert.zero_eigenvalue_count(),
            pi_eigenvalues: cert.pi_spectrum.clone(),
            pi_rank: cert.pi_rank(),
            p_positive_definite: cert.p_positive_definite(),
            pi_v_residual: pi_v / (cert.pi_matrix.norm() * cert.v_star.norm()),
            decrease_eigenvalues: cert.decrease_spectrum.clone(),
            block_deviation: cert.block_deviation,
            rank_one_q_kernel_dim: cert.rank_one_q_kernel_dim(),
            v_star: cert.v_star.iter().copied().collect(),
            condition1: cert.condition1.clone(),
            sampled_decrease,
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Columns: `time, gamma_k, vdc_k, i_d_k, i_q_k, v_d_k, v_q_k, il_d_e, il_q_e,
/// V, dist`. `vdc_k` is the absolute DC voltage; `V` and `dist` are empty
/// when not recorded.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory, v_dc_star: f64) -> Result<(), ExportError> {
    let l = traj.layout;
    let mut header = vec!["time".to_string()];
    header.extend((1..=l.n).map(|k| format!("gamma_{k}")));
    header.extend((1..=l.n).map(|k| format!("vdc_{k}")));
    for prefix in ["i", "v"] {
        for k in 1..=l.n {
            header.push(format!("{prefix}_d_{k}"));
            header.push(format!("{prefix}_q_{k}"));
        }
    }
    for e in 1..=l.m {
        header.push(format!("il_d_{e}"));
        header.push(format!("il_q_{e}"));
    }
    header.push("V".into());
    header.push("dist".into());

    let mut out = csv::Writer::from_writer(w);
    out.write_record(&header)?;
    for (k, (t, z)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![num(*t)];
        row.extend(z.gamma().iter().map(|g| num(*g)));
        row.extend(z.v_dc_tilde().iter().map(|v| num(v + v_dc_star)));
        row.extend(z.ac().iter().map(|x| num(*x)));
        let optional = |col: &Option<Vec<f64>>| col.as_ref().map_or(String::new(), |c| num(c[k]));
        row.push(optional(&traj.lyapunov));
        row.push(optional(&traj.distances));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns: `dgamma1, dgamma2, v0, converged, final_distance`, one row per
/// grid point in grid order.
pub fn write_region_csv<W: Write>(w: W, estimate: &RegionEstimate) -> Result<(), ExportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dgamma1", "dgamma2", "v0", "converged", "final_distance"])?;
    for s in &estimate.samples {
        out.write_record([
            num(s.dgamma1),
            num(s.dgamma2),
            num(s.v0),
            s.converged.to_string(),
            num(s.final_distance),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layout, SystemState};

    #[test]
    fn matrix_dump_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0, 1e-300, f64::MAX, 0.0]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 24 + 6 * 8);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[24..32], &1.0f64.to_le_bytes());
        assert_eq!(&buf[32..40], &(-2.5f64).to_le_bytes());
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn matrix_dump_rejects_bad_input() {
        let m = DMatrix::<f64>::identity(2, 2);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert!(read_matrix(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_matrix(extra.as_slice()).is_err());
        buf[16] = 9;
        assert!(matches!(read_matrix(buf.as_slice()), Err(ExportError::Format(_))));
    }

    #[test]
    fn trajectory_csv_layout() {
        let layout = Layout::new(2, 1);
        let mut z = SystemState::zeros(layout);
        z.gamma_mut()[1] = 0.5;
        let traj = Trajectory {
            layout,
            times: vec![0.0, 0.25],
            states: vec![z.clone(), z],
            variational: None,
            lyapunov: Some(vec![1.0, 0.5]),
            distances: None,
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, 1000.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "time,gamma_1,gamma_2,vdc_1,vdc_2,i_d_1,i_q_1,i_d_2,i_q_2,v_d_1,v_q_1,v_d_2,v_q_2,il_d_1,il_q_1,V,dist"
        );
        assert_eq!(lines[2], "0.25,0,0.5,1000,1000,0,0,0,0,0,0,0,0,0,0,0.5,");
    }
}
