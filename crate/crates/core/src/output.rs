//! CSV emission with 15 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::integrator::Trajectory;
use crate::model::BankModel;
use crate::regulation::ReserveReport;

pub const TRAJECTORY_HEADER: &str =
    "t,D,L,r_D,r_L,r,alpha_D,alpha_L,lambda,gwm_ldr,reserve_primary,reserve_secondary,reserve_total";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("reserve report has {rows} rows for {samples} samples")]
    LengthMismatch { samples: usize, rows: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// `printf("%.15g")`.
pub fn format_g15(x: f64) -> String {
    const PREC: i32 = 15;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PREC - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..PREC).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PREC - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn join_row(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|&v| format_g15(v)).collect();
    cells.join(",")
}

pub fn trajectory_csv(
    model: &BankModel,
    trajectory: &Trajectory,
    report: &ReserveReport,
) -> Result<String, OutputError> {
    if trajectory.samples.is_empty() {
        return Err(OutputError::EmptyTrajectory);
    }
    if report.rows.len() != trajectory.samples.len() {
        return Err(OutputError::LengthMismatch {
            samples: trajectory.samples.len(),
            rows: report.rows.len(),
        });
    }
    let rates = &model.rates;
    let mut out = String::with_capacity(trajectory.samples.len() * 200);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (s, row) in trajectory.samples.iter().zip(&report.rows) {
        let (t, d, l) = (s.t, s.deposits, s.loans);
        let line = join_row(&[
            t,
            d,
            l,
            rates.deposit.value(t),
            rates.loan.value(t),
            rates.interbank.value(t),
            model.alpha_deposit(d, l, t),
            model.alpha_loan(d, l, t),
            row.lambda,
            row.gwm_ldr,
            row.primary,
            row.secondary,
            row.total,
        ]);
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let io_err = |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
    }
    fs::write(path, text).map_err(io_err)
}

pub fn write_trajectory_csv(
    model: &BankModel,
    trajectory: &Trajectory,
    report: &ReserveReport,
    path: &Path,
) -> Result<(), OutputError> {
    write_text(path, &trajectory_csv(model, trajectory, report)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegratorConfig, Termination};
    use crate::model::BankState;
    use crate::regulation::{reserve_series, RegulationParams};

    #[test]
    fn g15_matches_printf() {
        let cases = [
            (2.0, "2"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333333"),
            (-1145e-5, "-0.01145"),
            (1e-5, "1e-05"),
            (1.5e-7, "1.5e-07"),
            (123456789012345.0, "123456789012345"),
            (1234567890123456.0, "1.23456789012346e+15"),
            (0.0001, "0.0001"),
            (9.999999999999999e14, "1e+15"),
            (0.0, "0"),
            (f64::NAN, "nan"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g15(x), want, "{x:e}");
        }
    }

    #[test]
    fn single_sample_gives_header_and_row() {
        let model = BankModel::default();
        let traj = Trajectory {
            samples: vec![BankState::new(0.0, 10.0, 20.0)],
            events: vec![],
            termination: Termination::Completed,
        };
        let rep = reserve_series(&model.params, &RegulationParams::default(), &traj).unwrap();
        let csv = trajectory_csv(&model, &traj, &rep).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells.len(), 13);
        assert_eq!(cells[8], "2");
        assert_eq!(cells[9], "2");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn empty_trajectory_rejected() {
        let model = BankModel::default();
        let traj = Trajectory {
            samples: vec![],
            events: vec![],
            termination: Termination::Completed,
        };
        let rep = ReserveReport {
            rows: vec![],
            integrated_gwm: 0.0,
        };
        assert!(matches!(
            trajectory_csv(&model, &traj, &rep),
            Err(OutputError::EmptyTrajectory)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let model = BankModel::default();
        let cfg = IntegratorConfig {
            t_end: 0.1,
            ..Default::default()
        };
        let traj = integrate(&model, BankState::new(0.0, 10.0, 20.0), &cfg).unwrap();
        let rep = reserve_series(&model.params, &RegulationParams::default(), &traj).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/run.csv");
        write_trajectory_csv(&model, &traj, &rep, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for (line, s) in text.lines().skip(1).zip(&traj.samples) {
            let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            for (got, want) in [(v[0], s.t), (v[1], s.deposits), (v[2], s.loans)] {
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
        assert_eq!(text.lines().count(), traj.samples.len() + 1);
    }
}
