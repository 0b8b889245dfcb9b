use std::fmt::Write as _;
use std::path::Path;

use super::acceptance::{sweep_checks, CheckLine};
use super::sweep::{read_rows, summarize, SweepResult, RAW_CSV, SUMMARY_JSON};
use crate::error::{Error, Result};
use crate::numeric::fmt_f64;

pub const PLOT_CSV: &str = "plot.csv";

/// Rendered report for a sweep directory.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: SweepResult,
    pub table: String,
    pub plot_csv: String,
    pub checks: Vec<CheckLine>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Reads `raw.csv` and `summary.json`, re-derives the summary from the raw
/// rows, renders the table and plot data (also written to `plot.csv`) and
/// evaluates every applicable check.
pub fn report(dir: &Path) -> Result<Report> {
    let rows = read_rows(&dir.join(RAW_CSV))?;
    if rows.is_empty() {
        return Err(Error::NoData(format!("{} holds no rows", dir.join(RAW_CSV).display())));
    }
    let path = dir.join(SUMMARY_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let stored: SweepResult = serde_json::from_str(&text)?;
    let derived = summarize(&rows, &stored.model, stored.sigma, stored.n_out, stored.d, stored.volume_fit.clone())?;

    let mut checks = vec![aggregation_check(&stored, &derived)];
    checks.extend(sweep_checks(&derived, &rows));
    let table = render_table(&derived);
    let plot_csv = render_plot_csv(&derived);
    let plot_path = dir.join(PLOT_CSV);
    std::fs::write(&plot_path, &plot_csv).map_err(|e| Error::io(&plot_path, e))?;
    Ok(Report {
        summary: derived,
        table,
        plot_csv,
        checks,
    })
}

fn aggregation_check(stored: &SweepResult, derived: &SweepResult) -> CheckLine {
    let mut worst = 0.0f64;
    let mut shape_ok = stored.cells.len() == derived.cells.len();
    for (a, b) in stored.cells.iter().zip(&derived.cells) {
        shape_ok &= a.n == b.n && a.beta == b.beta && a.converged == b.converged;
        for (k, v) in &a.fields {
            match b.fields.get(k) {
                Some(w) => {
                    worst = worst.max((v.mean - w.mean).abs()).max((v.se - w.se).abs());
                }
                None => shape_ok = false,
            }
        }
    }
    CheckLine::new(
        "aggregation reproducible from raw rows",
        shape_ok && worst <= 1e-12,
        format!("largest difference {worst:.3e}"),
    )
}

fn render_table(res: &SweepResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {}  sigma {}  d {}  rows {} ({} flagged)", res.model, res.sigma, res.d, res.total_rows, res.flagged_rows);
    if let Some(v) = &res.volume_fit {
        let _ = writeln!(
            s,
            "volume fit: lambda {:.4} ± {:.4}, m {}",
            v.lambda.unwrap_or(f64::NAN),
            v.lambda_se.unwrap_or(f64::NAN),
            v.multiplicity.unwrap_or(0)
        );
    }
    let _ = writeln!(
        s,
        "{:>6} {:>6} {:>5} {:>20} {:>20} {:>18} {:>8} {:>18} {:>18} {:>20}",
        "n", "beta", "R", "n(G-S)", "n(T-S)", "mean V", "nu(V)", "lambda(inv)", "nu(inv)", "mean G_hat - G"
    );
    for c in &res.cells {
        let pm = |m: f64, se: f64, p: usize| format!("{m:.p$} ± {se:.p$}");
        let inv = &c.error_inversion;
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>5} {:>20} {:>20} {:>18} {:>8.4} {:>18} {:>18} {:>20}",
            c.n,
            c.beta,
            c.converged,
            pm(c.g_scaled.mean, c.g_scaled.se, 5),
            pm(c.t_scaled.mean, c.t_scaled.se, 5),
            pm(c.mean_v.mean, c.mean_v.se, 4),
            c.nu_from_v.nu.unwrap_or(f64::NAN),
            pm(inv.lambda.unwrap_or(f64::NAN), inv.lambda_se.unwrap_or(f64::NAN), 3),
            pm(inv.nu.unwrap_or(f64::NAN), inv.nu_se.unwrap_or(f64::NAN), 3),
            format!("{:.2e} ± {:.1e}", c.ghat_minus_g.mean, c.ghat_minus_g.se),
        );
    }
    s
}

/// Long-format plot data: one row per `(n, β, series)` with SE bands.
fn render_plot_csv(res: &SweepResult) -> String {
    let mut s = String::from("n,inv_n,beta,series,value,se\n");
    for c in &res.cells {
        let nf = c.n as f64;
        let inv = &c.error_inversion;
        let series = [
            ("g_scaled", c.g_scaled.mean, c.g_scaled.se),
            ("t_scaled", c.t_scaled.mean, c.t_scaled.se),
            ("mean_v", c.mean_v.mean, c.mean_v.se),
            ("ghat_minus_g_scaled", nf * c.ghat_minus_g.mean, nf * c.ghat_minus_g.se),
            ("lambda_inversion", inv.lambda.unwrap_or(f64::NAN), inv.lambda_se.unwrap_or(f64::NAN)),
            ("nu_inversion", inv.nu.unwrap_or(f64::NAN), inv.nu_se.unwrap_or(f64::NAN)),
            ("nu_v", c.nu_from_v.nu.unwrap_or(f64::NAN), c.nu_from_v.nu_se.unwrap_or(f64::NAN)),
        ];
        for (name, v, se) in series {
            let _ = writeln!(s, "{},{},{},{name},{},{}", c.n, fmt_f64(1.0 / nf), fmt_f64(c.beta), fmt_f64(v), fmt_f64(se));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_sweep, ExperimentConfig};
    use crate::posterior::McmcConfig;

    #[test]
    fn report_on_small_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new("linear-1", 0.1, vec![1.0], vec![20, 40], 3, 5);
        cfg.mcmc = McmcConfig {
            burn_in: 200,
            draws_per_chain: 400,
            ..McmcConfig::default()
        };
        cfg.xq_size = 200;
        run_sweep(&cfg, dir.path()).unwrap();
        let rep = report(dir.path()).unwrap();
        assert!(rep.checks[0].passed, "{}", rep.checks[0]);
        assert!(rep.checks.iter().any(|c| c.name.starts_with("generalization limit")));
        assert!(rep.table.contains("n(G-S)"));
        assert_eq!(rep.plot_csv.lines().count(), 1 + 2 * 7);
        assert!(dir.path().join(PLOT_CSV).exists());
    }

    #[test]
    fn missing_column_and_empty_rows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(RAW_CSV), "n,beta\n100,1\n").unwrap();
        match report(dir.path()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "replication"),
            other => panic!("{other:?}"),
        }
        let header = crate::estimators::REPORT_COLUMNS.join(",");
        std::fs::write(dir.path().join(RAW_CSV), format!("{header}\n")).unwrap();
        assert!(matches!(report(dir.path()), Err(Error::NoData(_))));
    }
}
