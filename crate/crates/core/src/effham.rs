//! Closed-form effective Hamiltonians of the controlled problem, regime
//! classification and the convexity characterization.
//!
//! With control strength `delta` and the equivalent exponential tilt
//! `c = (1/2) log((1+delta)/(1-delta))`, the homogenized Hamiltonian is
//! expressed entirely through the uncontrolled free energy `Lambda`:
//!
//! * `delta = 0`: `Lambda_beta(theta)` itself;
//! * `delta = 1`: piecewise linear: `0` on `|theta| < beta E V`, then
//!   `beta E V - |theta|`;
//! * weak control (`log cosh c <= beta`): `beta - log cosh c` on
//!   `|theta| < c`, else `Lambda_beta(|theta| - c) - log cosh c`;
//! * strong control (`log cosh c > beta`): flat at `0` up to the root
//!   `theta_bar` of `Lambda_beta(theta - c) = log cosh c`, then the same
//!   shifted-`Lambda` branch.
//!
//! Convexity of the result holds exactly when `log cosh c <= beta`,
//! equivalently `delta <= sqrt(1 - e^{-2 beta})`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numeric::{ln_cosh, second_differences};

/// Control regime labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    None,
    Full,
    Weak,
    Strong,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::None => "none",
            Regime::Full => "full",
            Regime::Weak => "weak",
            Regime::Strong => "strong",
        };
        f.write_str(s)
    }
}

/// Regime classification plus the derived constants of one `(delta, beta)`
/// instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub delta: f64,
    pub beta: f64,
    /// `c = (1/2) log((1+delta)/(1-delta))`; infinite at `delta = 1`.
    pub c: f64,
    pub mean_v: f64,
    pub regime: Regime,
    /// Flat-edge root in `(0, c)`, present in the strong regime.
    pub theta_bar: Option<f64>,
    /// `sqrt(1 - e^{-2 beta})`: the convexity threshold in `delta`.
    pub threshold_delta: f64,
    pub convex: bool,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(CoreError::InvalidParameter(format!("delta = {delta} outside [0, 1]")));
    }
    Ok(())
}

/// `c = (1/2) log((1+delta)/(1-delta))`; `+inf` at `delta = 1`.
pub fn c_of_delta(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if delta == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(0.5 * ((1.0 + delta) / (1.0 - delta)).ln())
}

/// The deterministic part of the original Hamiltonian:
/// `log cosh theta` (no control), `log cosh(|theta| - c) - log cosh c`
/// (partial), `-|theta|` (full).
pub fn k_delta(theta: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if delta == 0.0 {
        Ok(ln_cosh(theta))
    } else if delta == 1.0 {
        Ok(-theta.abs())
    } else {
        let c = c_of_delta(delta)?;
        Ok(ln_cosh(theta.abs() - c) - ln_cosh(c))
    }
}

/// Classifies the control regime and computes the derived constants.
/// `lambda_fn` is consulted only in the strong regime (for `theta_bar`).
pub fn classify<F>(delta: f64, beta: f64, mean_v: f64, lambda_fn: F) -> Result<RegimeReport>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_delta(delta)?;
    if beta <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("beta = {beta} must be > 0")));
    }
    let c = c_of_delta(delta)?;
    let threshold_delta = (1.0 - (-2.0 * beta).exp()).sqrt();
    let (regime, theta_bar) = if delta == 0.0 {
        (Regime::None, None)
    } else if delta == 1.0 {
        (Regime::Full, None)
    } else if ln_cosh(c) <= beta {
        (Regime::Weak, None)
    } else {
        (Regime::Strong, Some(theta_bar(beta, c, lambda_fn)?))
    };
    let convex = matches!(regime, Regime::None | Regime::Weak);
    Ok(RegimeReport {
        delta,
        beta,
        c,
        mean_v,
        regime,
        theta_bar,
        threshold_delta,
        convex,
    })
}

/// Effective Hamiltonian at one `theta`, dispatching on the regime.
///
/// `lambda_fn` supplies the uncontrolled free energy `Lambda_beta` (it must
/// be even in its argument); it is injected so closed-form oracles and the
/// numeric solver are interchangeable.
pub fn effective_hamiltonian<F>(
    delta: f64,
    beta: f64,
    mean_v: f64,
    mut lambda_fn: F,
    theta: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_delta(delta)?;
    let ta = theta.abs();
    if delta == 0.0 {
        return lambda_fn(ta);
    }
    if delta == 1.0 {
        let edge = beta * mean_v;
        return Ok(if ta < edge { 0.0 } else { edge - ta });
    }
    let c = c_of_delta(delta)?;
    let lcc = ln_cosh(c);
    if lcc <= beta {
        // Weak control.
        if ta < c {
            Ok(beta - lcc)
        } else {
            Ok(lambda_fn(ta - c)? - lcc)
        }
    } else {
        // Strong control.
        let tb = theta_bar(beta, c, &mut lambda_fn)?;
        if ta < tb {
            Ok(0.0)
        } else {
            Ok(lambda_fn(ta - c)? - lcc)
        }
    }
}

/// Unique root of `Lambda_beta(theta - c) = log cosh c` in `(0, c)`,
/// by bisection; defined in the strong regime `beta < log cosh c`.
pub fn theta_bar<F>(beta: f64, c: f64, mut lambda_fn: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let lcc = ln_cosh(c);
    if beta >= lcc {
        return Err(CoreError::Precondition(format!(
            "theta_bar needs the strong regime beta < log cosh c ({beta} >= {lcc})"
        )));
    }
    let eps = 1e-10;
    // g(theta) = Lambda(theta - c) - log cosh c is decreasing on (0, c):
    // positive near 0 (Lambda(c) > log cosh c), negative near c
    // (Lambda(0) = flat level <= beta < log cosh c).
    let mut lo = eps;
    let mut hi = c - eps;
    let g_lo = lambda_fn(lo - c)? - lcc;
    let g_hi = lambda_fn(hi - c)? - lcc;
    if g_lo < 0.0 || g_hi > 0.0 {
        return Err(CoreError::BracketFailure(format!(
            "theta_bar bracket invalid: g({lo}) = {g_lo}, g({hi}) = {g_hi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = lambda_fn(mid - c)? - lcc;
        if g.abs() < 1e-8 && (hi - lo) < 1e-9 {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grid-based convexity verdict compared against the closed predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub delta: f64,
    pub beta: f64,
    pub min_second_diff: f64,
    /// Verdict from the grid second differences.
    pub convex_grid: bool,
    /// `log cosh c <= beta`, the closed characterization.
    pub convex_predicate: bool,
    pub agree: bool,
}

/// Scans `H_bar` on the grid for negative second differences and compares
/// the verdict with the closed predicate `log cosh c <= beta`.
pub fn convexity_check<F>(
    delta: f64,
    beta: f64,
    mean_v: f64,
    mut lambda_fn: F,
    theta_grid: &[f64],
) -> Result<ConvexityReport>
where
    F: FnMut(f64) -> Result<f64>,
{
    if theta_grid.len() < 3 {
        return Err(CoreError::InvalidParameter("grid needs at least 3 points".into()));
    }
    let mut grid = theta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| effective_hamiltonian(delta, beta, mean_v, &mut lambda_fn, t))
        .collect::<Result<_>>()?;
    let min_second_diff = second_differences(&values)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let convex_grid = min_second_diff >= -1e-8;
    let c = c_of_delta(delta)?;
    let convex_predicate = delta == 0.0 || (delta < 1.0 && ln_cosh(c) <= beta);
    Ok(ConvexityReport {
        delta,
        beta,
        min_second_diff,
        convex_grid,
        convex_predicate,
        agree: convex_grid == convex_predicate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Constant-potential oracle: `Lambda(xi) = beta v + log cosh xi`.
    fn const_lambda(beta: f64, v: f64) -> impl FnMut(f64) -> Result<f64> {
        move |xi: f64| Ok(beta * v + ln_cosh(xi))
    }

    /// Flat-capped oracle `max(beta, beta v + log cosh xi)`: the shape of
    /// the free energy of an assumption-satisfying potential (flat level
    /// beta, curved tail). The regime formulas presume Lambda(0) = beta, so
    /// agreement checks use this one rather than the bare constant oracle.
    fn proper_lambda(beta: f64, v: f64) -> impl FnMut(f64) -> Result<f64> {
        move |xi: f64| Ok((beta * v + ln_cosh(xi)).max(beta))
    }

    #[test]
    fn c_of_delta_values() {
        assert_eq!(c_of_delta(0.0).unwrap(), 0.0);
        assert!((c_of_delta((1.0f64).tanh()).unwrap() - 1.0).abs() < 1e-12);
        assert!(c_of_delta(1.0).unwrap().is_infinite());
        assert!(c_of_delta(1.2).is_err());
    }

    #[test]
    fn k_delta_branches() {
        assert!((k_delta(0.7, 0.0).unwrap() - ln_cosh(0.7)).abs() < 1e-15);
        assert_eq!(k_delta(0.7, 1.0).unwrap(), -0.7);
        // Well depth at theta = +-c equals -log cosh c.
        let delta = 0.6;
        let c = c_of_delta(delta).unwrap();
        assert!((k_delta(c, delta).unwrap() + ln_cosh(c)).abs() < 1e-14);
        assert!((k_delta(-c, delta).unwrap() + ln_cosh(c)).abs() < 1e-14);
    }

    #[test]
    fn full_control_branches() {
        let f = |theta: f64| effective_hamiltonian(1.0, 1.0, 0.5, const_lambda(1.0, 0.5), theta).unwrap();
        assert_eq!(f(0.2), 0.0);
        assert!((f(2.0) - (0.5 - 2.0)).abs() < 1e-15);
        assert_eq!(f(-0.2), 0.0);
        assert!((f(-2.0) - (-1.5)).abs() < 1e-15);
    }

    #[test]
    fn weak_at_c_to_zero_reduces_to_lambda() {
        // Small delta: H_bar approximately Lambda(theta); exact at delta = 0.
        let lam = const_lambda(1.0, 0.5);
        let h0 = effective_hamiltonian(0.0, 1.0, 0.5, lam, 1.3).unwrap();
        assert!((h0 - (0.5 + ln_cosh(1.3))).abs() < 1e-15);
        let mut prev_gap = f64::INFINITY;
        for delta in [0.3, 0.1, 0.01] {
            let h = effective_hamiltonian(delta, 1.0, 0.5, const_lambda(1.0, 0.5), 1.3).unwrap();
            let gap = (h - h0).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn theta_bar_constant_oracle_closed_form() {
        // Lambda(theta_bar - c) = log cosh c with the constant-V oracle
        // solves to theta_bar = c - arccosh(e^{-beta v} cosh c).
        let (beta, v) = (1.0, 0.5);
        let delta = 0.99;
        let c = c_of_delta(delta).unwrap();
        assert!(ln_cosh(c) > beta, "instance should be strong");
        let tb = theta_bar(beta, c, const_lambda(beta, v)).unwrap();
        let target = (-beta * v).exp() * c.cosh();
        let closed = c - (target + (target * target - 1.0).sqrt()).ln();
        assert!((tb - closed).abs() < 1e-8, "{tb} vs {closed}");
        assert!(tb > 0.0 && tb < c);
    }

    #[test]
    fn theta_bar_requires_strong_regime() {
        assert!(theta_bar(1.0, 0.5, const_lambda(1.0, 0.5)).is_err());
    }

    #[test]
    fn theta_bar_boundary_scan() {
        // As beta rises to log cosh c the root moves continuously (and
        // monotonically) toward the value with Lambda(theta_bar - c) at the
        // boundary level.
        let delta = 0.95;
        let c = c_of_delta(delta).unwrap();
        let lcc = ln_cosh(c);
        let v = 0.5;
        let mut prev_tb = 0.0;
        let mut prev_beta = 0.0;
        for k in 1..=6 {
            let beta = lcc * (0.5 + 0.49 * k as f64 / 6.0);
            let tb = theta_bar(beta, c, const_lambda(beta, v)).unwrap();
            assert!(tb > prev_tb, "theta_bar should increase with beta");
            // Continuity: steps in beta produce proportionate steps in the
            // root (no jumps): |d theta_bar| <= |d beta| / (v * min slope).
            if k > 1 {
                let slope_bound = (tb - prev_tb) / (beta - prev_beta);
                assert!(slope_bound < 50.0, "slope {slope_bound}");
            }
            prev_tb = tb;
            prev_beta = beta;
            // The defining equation holds at the root.
            let mut lam = const_lambda(beta, v);
            assert!((lam(tb - c).unwrap() - lcc).abs() < 1e-7);
        }
    }

    #[test]
    fn strong_regime_continuity_at_the_boundary() {
        // As beta approaches log cosh c from below, the strong flat level 0
        // matches the weak flat level beta - log cosh c -> 0.
        let delta = 0.95;
        let c = c_of_delta(delta).unwrap();
        let lcc = ln_cosh(c);
        let h_strong =
            effective_hamiltonian(delta, lcc - 1e-6, 0.5, const_lambda(lcc - 1e-6, 0.5), 0.05).unwrap();
        let h_weak = effective_hamiltonian(delta, lcc + 1e-6, 0.5, const_lambda(lcc + 1e-6, 0.5), 0.05).unwrap();
        assert!(h_strong.abs() < 1e-12);
        assert!(h_weak.abs() < 1e-5);
    }

    #[test]
    fn strong_to_full_trend_as_c_grows() {
        // Taking c -> infinity in the strong formula reproduces the
        // full-control values.
        let (beta, v) = (1.0, 0.5);
        let theta = 2.0;
        let full = effective_hamiltonian(1.0, beta, v, const_lambda(beta, v), theta).unwrap();
        let mut prev_gap = f64::INFINITY;
        for delta in [0.99, 0.9999, 0.999999] {
            let h = effective_hamiltonian(delta, beta, v, const_lambda(beta, v), theta).unwrap();
            let gap = (h - full).abs();
            assert!(gap < prev_gap + 1e-12, "delta={delta}: {gap} vs {prev_gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn evenness_on_grid() {
        for delta in [0.0, 0.5, 0.99, 1.0] {
            for theta in [0.1, 0.7, 2.5] {
                let a = effective_hamiltonian(delta, 1.0, 0.5, const_lambda(1.0, 0.5), theta).unwrap();
                let b = effective_hamiltonian(delta, 1.0, 0.5, const_lambda(1.0, 0.5), -theta).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn lower_envelope_against_lambda() {
        // Control can only reduce the cost: H_bar <= Lambda pointwise.
        for delta in [0.25, 0.5, 0.99, 1.0] {
            for theta in [0.0, 0.4, 1.0, 3.0] {
                let h = effective_hamiltonian(delta, 1.0, 0.5, proper_lambda(1.0, 0.5), theta).unwrap();
                let lam = (0.5 + ln_cosh(theta)).max(1.0);
                assert!(h <= lam + 1e-12, "delta={delta} theta={theta}");
            }
        }
    }

    #[test]
    fn convexity_threshold_at_beta_one() {
        // sqrt(1 - e^{-2}) is about 0.93.
        let threshold = (1.0f64 - (-2.0f64).exp()).sqrt();
        assert!((threshold - 0.93).abs() < 0.003);
        let grid: Vec<f64> = (-60..=60).map(|k| k as f64 * 0.05).collect();
        let below = convexity_check(0.5, 1.0, 0.5, proper_lambda(1.0, 0.5), &grid).unwrap();
        assert!(below.convex_grid && below.convex_predicate && below.agree, "{below:?}");
        let above = convexity_check(0.99, 1.0, 0.5, proper_lambda(1.0, 0.5), &grid).unwrap();
        assert!(!above.convex_predicate);
        assert!(above.agree, "{above:?}");
    }

    #[test]
    fn nonconvex_grid_finds_negative_second_difference() {
        // delta = 0.99, beta = 0.05: strongly nonconvex; the junction at
        // theta_bar carries a strictly negative second difference. The bare
        // constant-potential oracle suffices here (per the nonconvex side).
        let grid: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.01).collect();
        let rep = convexity_check(0.99, 0.05, 0.5, const_lambda(0.05, 0.5), &grid).unwrap();
        assert!(!rep.convex_predicate);
        assert!(rep.min_second_diff < -1e-6, "{rep:?}");
        assert!(rep.agree);
    }

    #[test]
    fn classify_reports_regimes() {
        let rep = classify(0.5, 1.0, 0.5, const_lambda(1.0, 0.5)).unwrap();
        assert_eq!(rep.regime, Regime::Weak);
        assert!(rep.convex);
        assert!(rep.theta_bar.is_none());
        let rep = classify(0.99, 0.5, 0.5, const_lambda(0.5, 0.5)).unwrap();
        assert_eq!(rep.regime, Regime::Strong);
        assert!(!rep.convex);
        let tb = rep.theta_bar.unwrap();
        assert!(tb > 0.0 && tb < rep.c);
        assert_eq!(classify(0.0, 1.0, 0.5, const_lambda(1.0, 0.5)).unwrap().regime, Regime::None);
        assert_eq!(classify(1.0, 1.0, 0.5, const_lambda(1.0, 0.5)).unwrap().regime, Regime::Full);
    }

    #[test]
    fn flat_region_widths() {
        // Full control: flat on (-beta mean V, beta mean V).
        let f = |theta: f64| effective_hamiltonian(1.0, 1.0, 0.5, const_lambda(1.0, 0.5), theta).unwrap();
        assert_eq!(f(0.49), 0.0);
        assert!(f(0.51) < 0.0);
        // Weak control flat width at least 2c.
        let delta = 0.5;
        let c = c_of_delta(delta).unwrap();
        let w = |theta: f64| effective_hamiltonian(delta, 1.0, 0.5, const_lambda(1.0, 0.5), theta).unwrap();
        let level = 1.0 - ln_cosh(c);
        assert!((w(0.9 * c) - level).abs() < 1e-12);
        // Strong control flat width 2 theta_bar.
        let delta = 0.99;
        let c = c_of_delta(delta).unwrap();
        let tb = theta_bar(1.0, c, const_lambda(1.0, 0.5)).unwrap();
        let s = |theta: f64| effective_hamiltonian(delta, 1.0, 0.5, const_lambda(1.0, 0.5), theta).unwrap();
        assert_eq!(s(0.9 * tb), 0.0);
        assert!(s(1.1 * tb) != 0.0);
    }
}
