//! Simple-symmetric-random-walk primitives: exact log-domain path-sum
//! expectations, confinement exponents, hitting-time Laplace transforms and
//! the left-excursion large-deviation toolkit.

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{CoreError, Result};
use crate::numeric::{log_add_exp, log_sum_exp, power_iteration};

/// One rolling slice of a log-domain lattice DP.
///
/// `log_weights[j]` is the log-mass at site `lo + j` after `time` steps;
/// unoccupied sites carry `-inf`. The support grows by at most one site per
/// step from the initial singleton.
#[derive(Debug, Clone)]
pub struct LatticeDP {
    pub log_weights: Vec<f64>,
    pub lo: i64,
    pub time: usize,
}

impl LatticeDP {
    /// Unit mass at `start`.
    pub fn singleton(start: i64) -> Self {
        LatticeDP {
            log_weights: vec![0.0],
            lo: start,
            time: 0,
        }
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.log_weights.len() as i64 - 1
    }

    /// Total log-mass of the slice.
    pub fn total(&self) -> f64 {
        log_sum_exp(&self.log_weights)
    }

    /// One SSRW step with a per-site log-weight collected at the departure
    /// site: mass at `x` contributes `w(x) + site_cost(x) + ln(1/2)` to both
    /// neighbors, plus an optional extra log-weight on each directed edge.
    pub fn step<C, E>(&mut self, site_cost: C, edge_cost: E)
    where
        C: Fn(i64) -> f64,
        E: Fn(i64, i64) -> f64,
    {
        let old_lo = self.lo;
        let n = self.log_weights.len();
        let mut next = vec![f64::NEG_INFINITY; n + 2];
        const LN_HALF: f64 = -std::f64::consts::LN_2;
        for (j, &w) in self.log_weights.iter().enumerate() {
            if w == f64::NEG_INFINITY {
                continue;
            }
            let x = old_lo + j as i64;
            let base = w + site_cost(x) + LN_HALF;
            let up = base + edge_cost(x, x + 1);
            let down = base + edge_cost(x, x - 1);
            next[j + 2] = log_add_exp(next[j + 2], up);
            next[j] = log_add_exp(next[j], down);
        }
        self.log_weights = next;
        self.lo = old_lo - 1;
        self.time += 1;
    }
}

/// Parameters of an excursion-count experiment: tilt `c`, optional
/// confinement half-length and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSpec {
    pub c: f64,
    pub ell: Option<i64>,
    pub m: usize,
}

impl ExcursionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c <= 0.0 {
            return Err(CoreError::InvalidParameter(format!("tilt c = {} must be > 0", self.c)));
        }
        if let Some(ell) = self.ell {
            if ell < 1 {
                return Err(CoreError::InvalidParameter(format!("ell = {ell} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// `log E_start[exp(beta * sum_{i<n} V(X_i) + theta * X_n)]` by exact
/// forward DP, log-sum-exp stabilized.
pub fn path_sum_log_expectation(
    env: &Environment,
    beta: f64,
    theta: f64,
    n: usize,
    start: i64,
) -> Result<f64> {
    if n < 1 {
        return Err(CoreError::InvalidParameter("horizon n must be >= 1".into()));
    }
    let m = n as i64;
    env.require_window(start - m, start + m)?;
    let pot = env.collect_window(start - m, start + m)?;
    let bv = |x: i64| beta * pot[(x - (start - m)) as usize];

    let mut dp = LatticeDP::singleton(start);
    for _ in 0..n {
        dp.step(bv, |_, _| 0.0);
    }
    let lo = dp.lo;
    let terms: Vec<f64> = dp
        .log_weights
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            if w == f64::NEG_INFINITY {
                w
            } else {
                w + theta * (lo + j as i64) as f64
            }
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Closed-form confinement exponent `log cos(pi / (2 ell + 1))`:
/// the decay rate of staying in `[-ell, ell - 1]`.
pub fn confinement_exponent(ell: i64) -> Result<f64> {
    if ell < 1 {
        return Err(CoreError::InvalidParameter(format!("ell = {ell} must be >= 1")));
    }
    Ok((std::f64::consts::PI / (2 * ell + 1) as f64).cos().ln())
}

/// Spectral route to the same exponent: top eigenvalue of the 1/2-adjacency
/// operator on the `2 ell` absorbing sites, by power iteration.
///
/// The path graph is bipartite, so the iteration runs on the operator
/// shifted by `+I` and the shift is removed from the Rayleigh quotient.
pub fn confinement_exponent_spectral(ell: i64) -> Result<f64> {
    if ell < 1 {
        return Err(CoreError::InvalidParameter(format!("ell = {ell} must be >= 1")));
    }
    let dim = (2 * ell) as usize;
    let apply = |v: &[f64], w: &mut [f64]| {
        for i in 0..dim {
            let mut acc = 0.0;
            if i > 0 {
                acc += 0.5 * v[i - 1];
            }
            if i + 1 < dim {
                acc += 0.5 * v[i + 1];
            }
            w[i] = acc;
        }
    };
    let lam = power_iteration(dim, apply, 1.0, 1e-12, 100_000)?;
    Ok(lam.ln())
}

/// Log-probability that the walk stays in `[-ell, ell-1]` for `n` steps,
/// from 0; the finite-horizon witness of the confinement exponent.
pub fn confinement_survival_log(ell: i64, n: usize) -> Result<f64> {
    if ell < 1 {
        return Err(CoreError::InvalidParameter(format!("ell = {ell} must be >= 1")));
    }
    let dim = (2 * ell) as usize;
    let origin = (ell - 1) as usize; // index of site 0 within [-ell, ell-1]
    let mut v = vec![0.0f64; dim];
    v[origin] = 1.0;
    let mut log_scale = 0.0;
    let mut w = vec![0.0f64; dim];
    for _ in 0..n {
        for i in 0..dim {
            let mut acc = 0.0;
            if i > 0 {
                acc += 0.5 * v[i - 1];
            }
            if i + 1 < dim {
                acc += 0.5 * v[i + 1];
            }
            w[i] = acc;
        }
        std::mem::swap(&mut v, &mut w);
        let total: f64 = v.iter().sum();
        log_scale += total.ln();
        let inv = 1.0 / total;
        v.iter_mut().for_each(|x| *x *= inv);
    }
    Ok(log_scale)
}

/// `E_0[e^{-lambda tau_1} 1{tau_1 < inf}] = e^lambda - sqrt(e^{2 lambda} - 1)`.
pub fn hitting_laplace_tau1(lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(CoreError::InvalidParameter(format!("lambda = {lambda} must be >= 0")));
    }
    let e = lambda.exp();
    Ok(e - (e * e - 1.0).sqrt())
}

/// Transform of a complete left excursion (first traversal of the edge
/// `-1 -> 0`): `(1 - sqrt(1 - e^{-2 lambda})) / (1 + sqrt(1 - e^{-2 lambda}))`.
pub fn hitting_laplace_excursion(lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(CoreError::InvalidParameter(format!("lambda = {lambda} must be >= 0")));
    }
    let s = (1.0 - (-2.0 * lambda).exp()).sqrt();
    Ok((1.0 - s) / (1.0 + s))
}

/// Truncated first-passage series for the `tau_1` transform: exact DP up to
/// `horizon` steps. The dropped tail is below `e^{-lambda * horizon}`.
pub fn hitting_tau1_truncated(lambda: f64, horizon: usize) -> f64 {
    // Mass confined to sites <= 0 (index j holds site j - horizon); the
    // move 0 -> 1 is absorbed into the transform sum. Mass pushed below
    // -horizon can no longer reach 1 in the remaining steps, so dropping it
    // leaves the truncated sum exact.
    let n = horizon;
    let decay = (-lambda).exp();
    let mut mass = vec![0.0f64; n + 1];
    mass[n] = 1.0; // site 0
    let mut sum = 0.0;
    let mut step_weight = 1.0;
    for _ in 0..n {
        step_weight *= decay;
        let mut next = vec![0.0f64; n + 1];
        sum += step_weight * 0.5 * mass[n]; // 0 -> 1 absorbed
        for j in (1..=n).rev() {
            let m = mass[j];
            if m > 0.0 {
                if j < n {
                    next[j + 1] += 0.5 * m;
                }
                next[j - 1] += 0.5 * m;
            }
        }
        mass = next;
    }
    sum
}

/// Truncated series for the complete-left-excursion transform: DP over
/// `[-horizon, horizon]`, absorbing the `-1 -> 0` traversal.
pub fn hitting_excursion_truncated(lambda: f64, horizon: usize) -> f64 {
    let n = horizon;
    let width = 2 * n + 1;
    let origin = n; // site 0
    let decay = (-lambda).exp();
    let mut mass = vec![0.0f64; width];
    mass[origin] = 1.0;
    let mut sum = 0.0;
    let mut step_weight = 1.0;
    for _ in 0..n {
        step_weight *= decay;
        let mut next = vec![0.0f64; width];
        for (j, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            if j + 1 < width {
                if j + 1 == origin {
                    sum += step_weight * 0.5 * m; // -1 -> 0 completes
                } else {
                    next[j + 1] += 0.5 * m;
                }
            }
            if j > 0 {
                next[j - 1] += 0.5 * m;
            }
        }
        mass = next;
    }
    sum
}

/// Cramer rate of the left-excursion count per step:
/// `I(xi) = ((1-2xi)/2) log(1-2xi) + ((1+2xi)/2) log(1+2xi)` on `[0, 1/2]`,
/// `+inf` outside, with `0 log 0 = 0`.
pub fn excursion_rate(xi: f64) -> f64 {
    if !(0.0..=0.5).contains(&xi) {
        return f64::INFINITY;
    }
    let xlogx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    0.5 * (xlogx(1.0 - 2.0 * xi) + xlogx(1.0 + 2.0 * xi))
}

/// Exponential growth rate of `E[e^{2c L_0}]` for the free walk: `log cosh c`.
pub fn excursion_j(c: f64) -> Result<f64> {
    if c <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("c = {c} must be > 0")));
    }
    Ok(crate::numeric::ln_cosh(c))
}

/// Same rate for the reflected chain on `[-ell, ell-1]` (holding at both
/// ends): log of the top eigenvalue of the tilted transfer operator where
/// the `-1 -> 0` transition carries weight `e^{2c}`. Always `>= log cosh c`,
/// converging to it as `ell` grows.
pub fn excursion_j_ell(c: f64, ell: i64) -> Result<f64> {
    if c <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("c = {c} must be > 0")));
    }
    if ell < 1 {
        return Err(CoreError::InvalidParameter(format!("ell = {ell} must be >= 1")));
    }
    let dim = (2 * ell) as usize;
    let idx = |y: i64| (y + ell) as usize;
    let tilt = (2.0 * c).exp();
    // Row-stochastic reflected kernel plus the excursion tilt. The holding
    // self-loops sit at the two ends, far from the localized tilted mode,
    // so the spectrum is near-symmetric for large ell; the +I shift keeps
    // the power iteration from mixing the +-lambda pair.
    let mut mat = vec![vec![0.0f64; dim]; dim];
    for y in -ell..=(ell - 1) {
        let targets: [i64; 2] = if y == -ell {
            [-ell, -ell + 1]
        } else if y == ell - 1 {
            [ell - 1, ell - 2]
        } else {
            [y - 1, y + 1]
        };
        for t in targets {
            let w = if y == -1 && t == 0 { 0.5 * tilt } else { 0.5 };
            mat[idx(y)][idx(t)] += w;
        }
    }
    let apply = |v: &[f64], w: &mut [f64]| {
        for (i, row) in mat.iter().enumerate() {
            w[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
    };
    let lam = power_iteration(dim, apply, 1.0, 1e-12, 100_000)?;
    Ok(lam.ln())
}

/// `(1/n) log E_0[e^{2c L_0}]` by exact DP; with `confined = Some(ell)` the
/// reflected chain on `[-ell, ell-1]` replaces the free walk.
pub fn excursion_count_mgf(n: usize, c: f64, confined: Option<i64>) -> Result<f64> {
    if n < 1 {
        return Err(CoreError::InvalidParameter("horizon n must be >= 1".into()));
    }
    if c < 0.0 {
        return Err(CoreError::InvalidParameter(format!("c = {c} must be >= 0")));
    }
    if let Some(ell) = confined {
        if ell < 1 {
            return Err(CoreError::InvalidParameter(format!("ell = {ell} must be >= 1")));
        }
    }
    match confined {
        None => {
            // Free walk on [-n, n]; the 2c reward rides the -1 -> 0 edge.
            let mut dp = LatticeDP::singleton(0);
            let edge = |from: i64, to: i64| if from == -1 && to == 0 { 2.0 * c } else { 0.0 };
            for _ in 0..n {
                dp.step(|_| 0.0, edge);
            }
            Ok(dp.total() / n as f64)
        }
        Some(ell) => {
            let dim = (2 * ell) as usize;
            let idx = |y: i64| (y + ell) as usize;
            let mut w = vec![f64::NEG_INFINITY; dim];
            w[idx(0)] = 0.0;
            let mut next = vec![f64::NEG_INFINITY; dim];
            const LN_HALF: f64 = -std::f64::consts::LN_2;
            for _ in 0..n {
                next.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
                for y in -ell..=(ell - 1) {
                    let from = w[idx(y)];
                    if from == f64::NEG_INFINITY {
                        continue;
                    }
                    let targets: [i64; 2] = if y == -ell {
                        [-ell, -ell + 1]
                    } else if y == ell - 1 {
                        [ell - 1, ell - 2]
                    } else {
                        [y - 1, y + 1]
                    };
                    for t in targets {
                        let bonus = if y == -1 && t == 0 { 2.0 * c } else { 0.0 };
                        let j = idx(t);
                        next[j] = log_add_exp(next[j], from + LN_HALF + bonus);
                    }
                }
                std::mem::swap(&mut w, &mut next);
            }
            Ok(log_sum_exp(&w) / n as f64)
        }
    }
}
