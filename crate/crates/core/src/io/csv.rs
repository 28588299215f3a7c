//! CSV export: header row, comma separators, LF line endings, 17 significant
//! digits for floats.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::compressed::CompressionErrorReport;
use crate::error::Result;
use crate::evaluation::EvalResult;
use crate::nmf::FactorisationTrace;
use crate::solver::SolveTrace;

/// 17-significant-digit formatting shared by all exports.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    writeln!(f, "{}", header.join(","))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| g17(m[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Deterministic trace export: stage, expected-value sum, vector count, with
/// the divergence verdict as the final row. Wall-clock timings go to the
/// `_timed` sidecar so this file is byte-reproducible across runs.
pub fn write_solve_trace_csv(path: &Path, trace: &SolveTrace) -> Result<()> {
    let verdict = crate::evaluation::divergence_verdict(trace);
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "stage,sum_values,n_vectors")?;
    for (stage, &sum) in trace.stage_sums.iter().enumerate() {
        writeln!(f, "{stage},{},{}", g17(sum), trace.gamma_sizes[stage])?;
    }
    writeln!(f, "verdict,{verdict},")?;
    Ok(())
}

/// Trace export including per-stage wall time (non-reproducible by nature).
pub fn write_solve_trace_timed_csv(path: &Path, trace: &SolveTrace) -> Result<()> {
    let verdict = crate::evaluation::divergence_verdict(trace);
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "stage,sum_values,n_vectors,wall_time_s")?;
    for (stage, &sum) in trace.stage_sums.iter().enumerate() {
        let wall = if stage == 0 {
            0.0
        } else {
            trace.wall_times_s[stage - 1]
        };
        writeln!(
            f,
            "{stage},{},{},{}",
            g17(sum),
            trace.gamma_sizes[stage],
            g17(wall)
        )?;
    }
    writeln!(f, "verdict,{verdict},,")?;
    Ok(())
}

pub fn write_factorisation_trace_csv(path: &Path, trace: &FactorisationTrace) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "iteration,objective")?;
    for (i, &g) in trace.objective.iter().enumerate() {
        writeln!(f, "{i},{}", g17(g))?;
    }
    Ok(())
}

pub fn write_error_report_csv(path: &Path, report: &CompressionErrorReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "eps_r,eps_t,a_inf,i_minus_a_inf,contraction_margin,value_loss_bound"
    )?;
    let bound = report
        .value_loss_bound
        .map(g17)
        .unwrap_or_else(|| "unavailable".into());
    writeln!(
        f,
        "{},{},{},{},{},{bound}",
        g17(report.eps_r),
        g17(report.eps_t),
        g17(report.a_inf),
        g17(report.i_minus_a_inf),
        g17(report.contraction_margin)
    )?;
    Ok(())
}

pub fn write_eval_csv(path: &Path, result: &EvalResult) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "repeat,mean_reward")?;
    for (i, &r) in result.per_repeat.iter().enumerate() {
        writeln!(f, "{i},{}", g17(r))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_preserves_seventeen_digits() {
        let x = 0.123456789012345678;
        let s = g17(x);
        assert!(s.parse::<f64>().unwrap() == x, "{s} reparses inexactly");
    }

    #[test]
    fn matrix_csv_shape() {
        let dir = std::env::temp_dir().join("bsqz-csv-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        write_matrix_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "c0,c1,c2");
        assert!(!text.contains('\r'));
    }
}
