use std::fmt::Write as _;

use clustseg_core::em::{em_cluster, forgy_init, CenterUpdate, EStepKind, EmConfig};
use clustseg_core::linalg::Matrix;
use serde::Serialize;

use super::{print_line, to_json, write_file};
use crate::error::{data, usage, CliResult};
use crate::settings::Settings;
use crate::ClusterArgs;

const KEYS: &[&str] = &["input", "k", "mode", "assign", "t-max", "tol", "seed", "out"];

#[derive(Serialize)]
struct IterationLine {
    iteration: usize,
    objective: f64,
}

#[derive(Serialize)]
struct SummaryLine {
    converged: bool,
    iterations: usize,
    k: usize,
    n: usize,
    seed: u64,
}

/// Parses uniform-width float rows; `#` lines and blank lines are skipped.
pub fn parse_points(text: &str) -> CliResult<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(data(format!("line {lineno}: {f:?} is not a finite number"))),
                }
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(data(format!(
                    "line {lineno}: expected {} fields as on line {width_line}, found {}",
                    first.len(),
                    row.len()
                )));
            }
        } else {
            width_line = lineno;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data("input contains no points"));
    }
    Ok(Matrix::from_rows(&rows)?)
}

pub fn run(args: ClusterArgs) -> CliResult<()> {
    let s = Settings::load(args.config.as_deref(), KEYS)?;
    let input = s.required(args.input, "input")?;
    let out = s.required(args.out, "out")?;
    let k: usize = s.required(args.k, "k")?;
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let update: CenterUpdate = s
        .or(args.mode, "mode", "weighted_mean".to_string())?
        .parse()
        .map_err(|e| usage(format!("--mode: {e}")))?;
    let e_step = match s.or(args.assign, "assign", "soft".to_string())?.as_str() {
        "soft" => EStepKind::Soft,
        "hard" => EStepKind::Hard,
        other => return Err(usage(format!("--assign must be soft or hard, got {other:?}"))),
    };
    let t_max = s.or(args.t_max, "t-max", 100usize)?;
    if t_max == 0 {
        return Err(usage("--t-max must be at least 1"));
    }
    let tol = s.or(args.tol, "tol", 1e-9f64)?;
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(usage("--tol must be finite and non-negative"));
    }
    let seed = s.seed(args.seed)?;

    let text = std::fs::read_to_string(&input).map_err(|e| data(format!("cannot read {}: {e}", input.display())))?;
    let x = parse_points(&text)?;
    let init = forgy_init(&x, k, seed)?;
    let cfg = EmConfig {
        t_max,
        tol,
        update,
        e_step,
    };
    let result = em_cluster(&x, &init, &cfg)?;

    let labels = result.hard.labels();
    let probs = result.soft.probs();
    let mut csv = String::from("point_index,hard_label");
    for j in 0..k {
        write!(csv, ",p_{j}").unwrap();
    }
    csv.push('\n');
    for (n, label) in labels.iter().enumerate() {
        write!(csv, "{n},{label}").unwrap();
        for j in 0..k {
            write!(csv, ",{}", probs[(j, n)]).unwrap();
        }
        csv.push('\n');
    }
    write_file(&out, csv.as_bytes())?;

    for (i, &objective) in result.objective_trace.iter().enumerate() {
        print_line(&to_json(&IterationLine {
            iteration: i + 1,
            objective,
        }))?;
    }
    print_line(&to_json(&SummaryLine {
        converged: result.converged,
        iterations: result.iterations_run,
        k,
        n: x.rows(),
        seed,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_blank_lines_skipped() {
        let m = parse_points("# x,y\n1,2\n\n3.5, -4\n").unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.row(1), &[3.5, -4.0]);
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse_points("1,2\n3,4\n5\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_number_reports_line() {
        let err = parse_points("# h\n1,2\n1,nan\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_points("# only a header\n").is_err());
    }
}
