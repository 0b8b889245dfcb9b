//! Pass/fail checks of the asymptotic limits against sweep summaries. Every
//! tolerance is a named constant here; the report command and the acceptance
//! test target share these functions.

use std::fmt;

use super::sweep::{CellSummary, SweepResult};
use crate::birational::InvariantEstimate;
use crate::estimators::ErrorReport;
use crate::numeric::combined_se;

/// Width of every statistical band, in standard errors.
pub const SE_MULT: f64 = 3.0;
/// Relative tolerance of the cross-method `λ` comparison.
pub const CROSS_METHOD_REL: f64 = 0.15;
/// Minimum fraction of converged replications for an acceptance run.
pub const MIN_CONVERGED_FRACTION: f64 = 0.95;
/// Relative tolerance of the MCMC-versus-grid comparison.
pub const ORACLE_REL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckLine {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// `|value − target| ≤ SE_MULT · se`.
pub fn within_band(value: f64, se: f64, target: f64) -> bool {
    (value - target).abs() <= SE_MULT * se
}

/// Nonincreasing allowing SE overlap: each value may exceed its
/// predecessor by at most `SE_MULT` combined SEs.
pub fn nonincreasing(series: &[(f64, f64)]) -> bool {
    series
        .windows(2)
        .all(|p| p[1].0 <= p[0].0 + SE_MULT * combined_se(p[0].1, p[1].1))
}

fn cells_at_beta(res: &SweepResult, beta: f64) -> Vec<&CellSummary> {
    let mut cells: Vec<&CellSummary> = res.cells.iter().filter(|c| c.beta == beta).collect();
    cells.sort_by_key(|c| c.n);
    cells
}

fn betas(res: &SweepResult) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for c in &res.cells {
        if !out.contains(&c.beta) {
            out.push(c.beta);
        }
    }
    out
}

/// `λ = ν = d/2` for the linear family.
pub fn regular_invariant(res: &SweepResult) -> Option<f64> {
    res.model.starts_with("linear-").then(|| res.d as f64 / 2.0)
}

fn fmt_ms(mean: f64, se: f64) -> String {
    format!("{mean:.5} ± {se:.5}")
}

/// `n(E[G] − S) → dσ²/2` at the largest `n`, with the gap to the limit
/// shrinking across `n`.
pub fn generalization_limit(res: &SweepResult, beta: f64) -> Option<CheckLine> {
    let half_d = regular_invariant(res)?;
    let target = 2.0 * half_d * res.sigma * res.sigma / 2.0;
    let cells = cells_at_beta(res, beta);
    let last = cells.last()?;
    let gaps: Vec<(f64, f64)> = cells
        .iter()
        .map(|c| ((c.g_scaled.mean - target).abs(), c.g_scaled.se))
        .collect();
    let ok_band = within_band(last.g_scaled.mean, last.g_scaled.se, target);
    let ok_trend = nonincreasing(&gaps);
    Some(CheckLine::new(
        format!("generalization limit (beta={beta})"),
        ok_band && ok_trend,
        format!(
            "n(G-S) at n={} is {} vs {target:.5}; gaps {:?} {}",
            last.n,
            fmt_ms(last.g_scaled.mean, last.g_scaled.se),
            gaps.iter().map(|g| format!("{:.5}", g.0)).collect::<Vec<_>>(),
            if ok_trend { "shrink" } else { "do not shrink" }
        ),
    ))
}

/// `n(E[T] − S) → −dσ²/2` at the largest `n`.
pub fn training_limit(res: &SweepResult, beta: f64) -> Option<CheckLine> {
    let half_d = regular_invariant(res)?;
    let target = -2.0 * half_d * res.sigma * res.sigma / 2.0;
    let last = *cells_at_beta(res, beta).last()?;
    Some(CheckLine::new(
        format!("training limit (beta={beta})"),
        within_band(last.t_scaled.mean, last.t_scaled.se, target),
        format!("n(T-S) at n={} is {} vs {target:.5}", last.n, fmt_ms(last.t_scaled.mean, last.t_scaled.se)),
    ))
}

/// `E[V] → 2ν/β` with `ν = d/2`, at the largest `n`.
pub fn v_limit(res: &SweepResult, beta: f64) -> Option<CheckLine> {
    let half_d = regular_invariant(res)?;
    let target = 2.0 * half_d / beta;
    let last = *cells_at_beta(res, beta).last()?;
    Some(CheckLine::new(
        format!("functional variance limit (beta={beta})"),
        within_band(last.mean_v.mean, last.mean_v.se, target),
        format!("mean V at n={} is {} vs {target:.5}", last.n, fmt_ms(last.mean_v.mean, last.mean_v.se)),
    ))
}

/// `|mean Ĝ − mean G| < SE_MULT` combined SEs at every `n`, and
/// `n·|mean Ĝ − mean G|` nonincreasing in `n` allowing SE overlap.
pub fn waic_identity(res: &SweepResult, beta: f64) -> Option<CheckLine> {
    let cells = cells_at_beta(res, beta);
    if cells.is_empty() {
        return None;
    }
    let mut failures = Vec::new();
    let mut scaled = Vec::new();
    for c in &cells {
        let d = c.ghat_minus_g;
        if d.mean.abs() >= SE_MULT * d.se {
            failures.push(format!("n={}: |diff| {:.3e} >= {SE_MULT}·{:.3e}", c.n, d.mean.abs(), d.se));
        }
        scaled.push((c.n as f64 * d.mean.abs(), c.n as f64 * d.se));
    }
    let trend = nonincreasing(&scaled);
    if !trend {
        failures.push("n·|diff| increases".into());
    }
    Some(CheckLine::new(
        format!("{} WAIC identity (beta={beta})", res.model),
        failures.is_empty(),
        format!(
            "n·|mean G_hat - mean G| = {:?}{}",
            scaled.iter().map(|s| format!("{:.4} ± {:.4}", s.0, s.1)).collect::<Vec<_>>(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    ))
}

/// Error-inversion `λ̂`, `ν̂` at the largest `n` equal to `d/2` within
/// `SE_MULT` SEs for each `β`, and mutually consistent across `β`.
pub fn inversion_consistency(res: &SweepResult) -> Option<CheckLine> {
    let half_d = regular_invariant(res)?;
    let mut parts = Vec::new();
    let mut ok = true;
    let mut estimates: Vec<(f64, &InvariantEstimate)> = Vec::new();
    for beta in betas(res) {
        let last = *cells_at_beta(res, beta).last()?;
        let e = &last.error_inversion;
        let (l, ls) = (e.lambda?, e.lambda_se?);
        let (v, vs) = (e.nu?, e.nu_se?);
        let pass = within_band(l, ls, half_d) && within_band(v, vs, half_d);
        ok &= pass;
        parts.push(format!("beta={beta}: lambda {} nu {}", fmt_ms(l, ls), fmt_ms(v, vs)));
        estimates.push((beta, e));
    }
    for i in 0..estimates.len() {
        for j in 0..i {
            let (a, b) = (estimates[i].1, estimates[j].1);
            let dl = (a.lambda? - b.lambda?).abs();
            let dv = (a.nu? - b.nu?).abs();
            if dl > SE_MULT * combined_se(a.lambda_se?, b.lambda_se?)
                || dv > SE_MULT * combined_se(a.nu_se?, b.nu_se?)
            {
                ok = false;
                parts.push(format!("beta {} vs {} disagree", estimates[i].0, estimates[j].0));
            }
        }
    }
    Some(CheckLine::new(
        "error-inversion invariants (regular)",
        ok,
        format!("target {half_d}; {}", parts.join("; ")),
    ))
}

/// Error-inversion `λ̂` against the volume-fit `λ̂`: agreement within
/// `max(CROSS_METHOD_REL·λ̂_vol, SE_MULT·combined SE)`, and `ν̂ ≥ 0`.
pub fn cross_method(cell: &CellSummary, volume: &InvariantEstimate) -> Option<CheckLine> {
    let inv = &cell.error_inversion;
    let (li, lis) = (inv.lambda?, inv.lambda_se?);
    let (lv, lvs) = (volume.lambda?, volume.lambda_se.unwrap_or(0.0));
    let tol = (CROSS_METHOD_REL * lv.abs()).max(SE_MULT * combined_se(lis, lvs));
    let nu = inv.nu?;
    Some(CheckLine::new(
        format!("cross-method lambda (n={}, beta={})", cell.n, cell.beta),
        (li - lv).abs() <= tol && nu >= 0.0,
        format!(
            "inversion {} vs volume fit {} (m={}), tolerance {tol:.4}; nu {}",
            fmt_ms(li, lis),
            fmt_ms(lv, lvs),
            volume.multiplicity.unwrap_or(0),
            fmt_ms(nu, inv.nu_se.unwrap_or(f64::NAN))
        ),
    ))
}

/// `mean(stein) = σ²β·mean(V)` within `SE_MULT` combined SEs.
pub fn stein_identity(cell: &CellSummary) -> CheckLine {
    let g = cell.stein_gap;
    CheckLine::new(
        format!("Stein identity (n={}, beta={})", cell.n, cell.beta),
        g.mean.abs() < SE_MULT * g.se,
        format!("mean(stein) - sigma^2 beta mean(V) = {}", fmt_ms(g.mean, g.se)),
    )
}

/// Per-row identities plus the converged fraction.
pub fn structural(rows: &[ErrorReport], n_out: usize) -> CheckLine {
    let violations: Vec<String> = rows
        .iter()
        .filter_map(|r| {
            r.check_identities(n_out)
                .err()
                .map(|e| format!("n={} beta={} rep={}: {e}", r.n, r.beta, r.replication))
        })
        .collect();
    let converged = rows.iter().filter(|r| r.converged).count();
    let frac = converged as f64 / rows.len().max(1) as f64;
    let ok = violations.is_empty() && frac >= MIN_CONVERGED_FRACTION && !rows.is_empty();
    CheckLine::new(
        "structural invariants",
        ok,
        format!(
            "{} rows, {} identity violations{}, converged fraction {frac:.4}",
            rows.len(),
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

/// `|a − b| ≤ ORACLE_REL · |b|`.
pub fn relative_match(name: &str, mcmc: f64, oracle: f64) -> CheckLine {
    let rel = (mcmc - oracle).abs() / oracle.abs();
    CheckLine::new(
        name,
        rel <= ORACLE_REL,
        format!("mcmc {mcmc:.6e} vs grid {oracle:.6e}, relative difference {rel:.4}"),
    )
}

/// Every check applicable to a sweep summary.
pub fn sweep_checks(res: &SweepResult, rows: &[ErrorReport]) -> Vec<CheckLine> {
    let mut out = Vec::new();
    for beta in betas(res) {
        out.extend(generalization_limit(res, beta));
        out.extend(training_limit(res, beta));
        out.extend(v_limit(res, beta));
        out.extend(waic_identity(res, beta));
    }
    out.extend(inversion_consistency(res));
    if let Some(vol) = &res.volume_fit {
        for beta in betas(res) {
            if let Some(last) = cells_at_beta(res, beta).last() {
                out.extend(cross_method(last, vol));
            }
        }
    }
    for c in &res.cells {
        if c.converged >= 2 {
            out.push(stein_identity(c));
        }
    }
    out.push(structural(rows, res.n_out));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_and_trend_helpers() {
        assert!(within_band(1.0, 0.1, 1.29));
        assert!(!within_band(1.0, 0.1, 1.31));
        assert!(nonincreasing(&[(3.0, 0.1), (2.0, 0.1), (2.3, 0.1)]));
        assert!(!nonincreasing(&[(1.0, 0.01), (2.0, 0.01)]));
    }

    #[test]
    fn line_format() {
        let l = CheckLine::new("x", true, "ok");
        assert_eq!(l.to_string(), "PASS x: ok");
        assert!(CheckLine::new("y", false, "bad").to_string().starts_with("FAIL y"));
    }
}
