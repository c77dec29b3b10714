//! Small numerical kernels: stabilized log-sums, bisection and power
//! iteration.

use crate::error::{CoreError, Result};

/// log(w*e^a + (1-w)*e^b), stabilized around the larger exponent.
///
/// Handles w in {0, 1} without producing -inf * 0 artifacts, which the
/// fully-controlled (delta = 1) Bellman recursion relies on.
#[inline]
pub fn log_mix(w: f64, a: f64, b: f64) -> f64 {
    if w <= 0.0 {
        return b;
    }
    if w >= 1.0 {
        return a;
    }
    let m = a.max(b);
    m + (w * (a - m).exp() + (1.0 - w) * (b - m).exp()).ln()
}

/// log(e^a + e^b), stabilized.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log of the sum of exponentials of a slice, -inf for an empty/all -inf slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// ln cosh with a large-|x| branch that avoids overflow.
#[inline]
pub fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 20.0 {
        ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
    } else {
        ax.cosh().ln()
    }
}

/// Outcome of a monotone bisection.
#[derive(Debug, Clone, Copy)]
pub struct BisectResult {
    pub root: f64,
    /// f evaluated at the returned root.
    pub residual: f64,
    pub iterations: usize,
}

/// Bisection for an increasing function f on [lo, hi] with f(lo) <= 0 <= f(hi).
///
/// Stops when |f(mid)| < f_tol or the bracket is narrower than x_tol.
pub fn bisect_increasing<F>(
    mut lo: f64,
    mut hi: f64,
    mut f: F,
    f_tol: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<BisectResult>
where
    F: FnMut(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    if flo > 0.0 || fhi < 0.0 {
        return Err(CoreError::BracketFailure(format!(
            "f({lo}) = {flo}, f({hi}) = {fhi} does not bracket an increasing root"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    let mut fmid = f(mid);
    for it in 0..max_iter {
        if fmid.abs() < f_tol || (hi - lo) < x_tol {
            return Ok(BisectResult {
                root: mid,
                residual: fmid,
                iterations: it,
            });
        }
        if fmid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        fmid = f(mid);
    }
    Ok(BisectResult {
        root: mid,
        residual: fmid,
        iterations: max_iter,
    })
}

/// Top eigenvalue of a nonnegative matrix given as `apply: v -> Mv`,
/// by power iteration from the uniform positive vector.
///
/// `shift` adds `shift * I` to the operator before iterating (and subtracts
/// it from the returned Rayleigh quotient); bipartite operators such as the
/// path-graph adjacency need a positive shift to kill the -lambda_max mode.
/// Stops on the eigen-residual `||Mv - rq v|| <= tol * max(1, |rq|)`, which
/// is robust to the rounding noise floor that successive Rayleigh quotients
/// bottom out at.
pub fn power_iteration<F>(dim: usize, mut apply: F, shift: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert!(dim > 0);
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut w = vec![0.0; dim];
    for _ in 0..max_iter {
        apply(&v, &mut w);
        if shift != 0.0 {
            for i in 0..dim {
                w[i] += shift * v[i];
            }
        }
        let rq: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let res = v
            .iter()
            .zip(w.iter())
            .map(|(vi, wi)| (wi - rq * vi) * (wi - rq * vi))
            .sum::<f64>()
            .sqrt();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CoreError::NoConvergence("power iteration hit the zero vector".into()));
        }
        for i in 0..dim {
            v[i] = w[i] / norm;
        }
        if res <= tol * rq.abs().max(1.0) {
            return Ok(rq - shift);
        }
    }
    Err(CoreError::NoConvergence(format!(
        "power iteration: residual still above tolerance after {max_iter} iterations"
    )))
}

/// Centered second differences (f(x-h) + f(x+h) - 2 f(x)) over a uniform grid.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    if values.len() < 3 {
        return Vec::new();
    }
    values
        .windows(3)
        .map(|w| w[0] + w[2] - 2.0 * w[1])
        .collect()
}

/// Sliding-window maximum of `xs` over windows `[i - half, i + half]`
/// clamped to the slice, one output per index.
pub fn sliding_max(xs: &[f64], half: usize) -> Vec<f64> {
    sliding_extreme(xs, half, |a, b| a >= b)
}

/// Sliding-window minimum, same window convention as [`sliding_max`].
pub fn sliding_min(xs: &[f64], half: usize) -> Vec<f64> {
    sliding_extreme(xs, half, |a, b| a <= b)
}

/// Maximum over each length-`w` window `xs[i..i+w]`; output length
/// `xs.len() - w + 1`.
pub fn sliding_max_len(xs: &[f64], w: usize) -> Vec<f64> {
    sliding_extreme_len(xs, w, |a, b| a >= b)
}

/// Minimum over each length-`w` window, same convention as
/// [`sliding_max_len`].
pub fn sliding_min_len(xs: &[f64], w: usize) -> Vec<f64> {
    sliding_extreme_len(xs, w, |a, b| a <= b)
}

fn sliding_extreme_len(xs: &[f64], w: usize, better: fn(f64, f64) -> bool) -> Vec<f64> {
    use std::collections::VecDeque;
    assert!(w >= 1 && w <= xs.len());
    let mut out = Vec::with_capacity(xs.len() - w + 1);
    let mut dq: VecDeque<usize> = VecDeque::new();
    for (i, &x) in xs.iter().enumerate() {
        while let Some(&back) = dq.back() {
            if better(x, xs[back]) {
                dq.pop_back();
            } else {
                break;
            }
        }
        dq.push_back(i);
        if i + 1 >= w {
            let lo = i + 1 - w;
            while let Some(&front) = dq.front() {
                if front < lo {
                    dq.pop_front();
                } else {
                    break;
                }
            }
            out.push(xs[*dq.front().unwrap()]);
        }
    }
    out
}

fn sliding_extreme(xs: &[f64], half: usize, better: fn(f64, f64) -> bool) -> Vec<f64> {
    use std::collections::VecDeque;
    let n = xs.len();
    let mut out = Vec::with_capacity(n);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut right = 0usize;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while right <= hi {
            while let Some(&back) = dq.back() {
                if better(xs[right], xs[back]) {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(right);
            right += 1;
        }
        let lo = i.saturating_sub(half);
        while let Some(&front) = dq.front() {
            if front < lo {
                dq.pop_front();
            } else {
                break;
            }
        }
        out.push(xs[*dq.front().expect("window nonempty")]);
    }
    out
}
