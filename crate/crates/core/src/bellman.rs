//! Exact finite-horizon dynamic programming for the controlled walk.
//!
//! The value recursion starts from the linear slice `u(0, x) = theta x` and
//! applies
//!
//! ```text
//! u(i+1, x) = beta V(x) + min_{q in {(1-delta)/2, (1+delta)/2}}
//!             log( q e^{u(i, x+1)} + (1-q) e^{u(i, x-1)} )
//! ```
//!
//! in shifted log domain over the space-time cone; the minimum over the
//! full admissible band is attained at one of the two bang-bang endpoints,
//! so only those are compared. Fixed policies are evaluated by the same
//! recursion without the minimum, and the exponential-tilt (change of
//! measure) formulation is provided as an algebraically equal alternative
//! for bang-bang policies.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{CoreError, Result};
use crate::numeric::{ln_cosh, log_mix};

/// One controlled-walk instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub delta: f64,
    pub beta: f64,
    pub theta: f64,
    pub horizon: usize,
    pub start: i64,
}

impl ControlProblem {
    pub fn new(delta: f64, beta: f64, theta: f64, horizon: usize) -> Self {
        ControlProblem {
            delta,
            beta,
            theta,
            horizon,
            start: 0,
        }
    }

    pub fn with_start(mut self, start: i64) -> Self {
        self.start = start;
        self
    }

    /// Bang-bang jump probabilities `((1-delta)/2, (1+delta)/2)`.
    pub fn q_band(&self) -> (f64, f64) {
        ((1.0 - self.delta) / 2.0, (1.0 + self.delta) / 2.0)
    }

    /// Equivalent exponential tilt `c`.
    pub fn c(&self) -> Result<f64> {
        crate::effham::c_of_delta(self.delta)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(CoreError::InvalidParameter(format!("delta = {} outside [0, 1]", self.delta)));
        }
        if self.beta <= 0.0 {
            return Err(CoreError::InvalidParameter(format!("beta = {} must be > 0", self.beta)));
        }
        if self.horizon < 1 {
            return Err(CoreError::InvalidParameter("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Argmin choice per space-time cell: which bang-bang endpoint attains the
/// minimum (`Left` is drift-left, `q = (1-delta)/2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    Left,
    Right,
    Tie,
}

/// Recorded argmin field: row `i` (1-based slice index) covers the cone
/// sites of slice `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminTable {
    pub start: i64,
    pub horizon: usize,
    /// `rows[i - 1]` is the choice row for slice `i`, covering sites
    /// `start - (horizon - i) ..= start + (horizon - i)`.
    pub rows: Vec<Vec<Choice>>,
}

impl ArgminTable {
    /// Choice made when computing slice `i` (from `i-1`) at `site`.
    pub fn choice(&self, i: usize, site: i64) -> Option<Choice> {
        if i < 1 || i > self.horizon {
            return None;
        }
        let lo = self.start - (self.horizon - i) as i64;
        let hi = self.start + (self.horizon - i) as i64;
        if site < lo || site > hi {
            return None;
        }
        Some(self.rows[i - 1][(site - lo) as usize])
    }
}

/// Output of a DP run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub problem: ControlProblem,
    /// `u(horizon, start)`.
    pub value: f64,
    /// Final slice values (just the start site unless recording asked for
    /// more; the cone collapses to one site at the final time anyway).
    pub final_slice: Vec<f64>,
    pub final_lo: i64,
    /// Slices recorded at requested times: `(i, lo, values)`.
    pub recorded: Vec<(usize, i64, Vec<f64>)>,
    pub argmin: Option<ArgminTable>,
    /// Number of cells where both endpoints tied.
    pub ties: usize,
}

impl ValueTable {
    /// Binary dump of a slice: header `{n, lo, hi}` (little-endian u64/i64)
    /// followed by the values as little-endian doubles.
    pub fn write_slice<W: Write>(&self, w: &mut W, which: usize) -> std::io::Result<()> {
        let (i, lo, values) = if which == self.problem.horizon {
            (self.problem.horizon, self.final_lo, &self.final_slice)
        } else {
            let found = self
                .recorded
                .iter()
                .find(|(t, _, _)| *t == which)
                .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "slice not recorded"))?;
            (found.0, found.1, &found.2)
        };
        w.write_all(&(i as u64).to_le_bytes())?;
        w.write_all(&lo.to_le_bytes())?;
        let hi = lo + values.len() as i64 - 1;
        w.write_all(&hi.to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// What the DP should keep besides the final value.
#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub record_argmin: bool,
    /// Slice times to keep (0 = the initial slice).
    pub record_times: Vec<usize>,
}

/// A fixed (possibly space-dependent) policy for the evaluator. All jump
/// probabilities must lie in the `delta`-band of the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    /// Bang-bang drift-left everywhere: `q = (1-delta)/2`.
    MarchLeft,
    /// Bang-bang drift-right everywhere: `q = (1+delta)/2`.
    MarchRight,
    /// Drift toward `x_star`: right of it go left, left of it go right.
    ValleyBangBang { x_star: i64 },
    /// Constant jump probability.
    ConstantQ { q: f64 },
    /// Explicit per-site probabilities starting at `lo`; `default` is used
    /// outside the listed range.
    Table { lo: i64, q: Vec<f64>, default: f64 },
}

impl PolicySpec {
    fn q_at(&self, problem: &ControlProblem, site: i64) -> f64 {
        let (qm, qp) = problem.q_band();
        match self {
            PolicySpec::MarchLeft => qm,
            PolicySpec::MarchRight => qp,
            PolicySpec::ValleyBangBang { x_star } => {
                if site < *x_star {
                    qp
                } else {
                    qm
                }
            }
            PolicySpec::ConstantQ { q } => *q,
            PolicySpec::Table { lo, q, default } => {
                let idx = site - lo;
                if idx >= 0 && (idx as usize) < q.len() {
                    q[idx as usize]
                } else {
                    *default
                }
            }
        }
    }

    fn check_admissible(&self, problem: &ControlProblem) -> Result<()> {
        let (qm, qp) = problem.q_band();
        let check = |q: f64| -> Result<()> {
            if q < qm - 1e-12 || q > qp + 1e-12 {
                Err(CoreError::InadmissiblePolicy(format!(
                    "q = {q} outside [{qm}, {qp}]"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            PolicySpec::ConstantQ { q } => check(*q),
            PolicySpec::Table { q, default, .. } => {
                for &qq in q {
                    check(qq)?;
                }
                check(*default)
            }
            _ => Ok(()),
        }
    }
}

struct DpRun {
    value_table: ValueTable,
}

/// Shared cone recursion; `decide` returns the jump probability (and the
/// recorded choice) for the transition computing slice `i` at `site`.
fn run_dp<D>(
    env: &Environment,
    problem: &ControlProblem,
    opts: &SolveOptions,
    mut decide: D,
) -> Result<DpRun>
where
    D: FnMut(usize, i64, f64, f64) -> (f64, Choice),
{
    problem.validate()?;
    let n = problem.horizon;
    let start = problem.start;
    let m = n as i64;
    env.require_window(start - m, start + m)?;
    let pot = env.collect_window(start - m, start + m)?;
    let bv = |x: i64| problem.beta * pot[(x - (start - m)) as usize];

    // Slice 0 on the full cone.
    let mut cur: Vec<f64> = (-m..=m)
        .map(|dx| problem.theta * (start + dx) as f64)
        .collect();
    let mut cur_lo = start - m;

    let mut recorded = Vec::new();
    if opts.record_times.contains(&0) {
        recorded.push((0usize, cur_lo, cur.clone()));
    }
    let mut argmin_rows: Vec<Vec<Choice>> = Vec::new();
    let mut ties = 0usize;

    for i in 1..=n {
        let half = m - i as i64;
        let new_lo = start - half;
        let width = (2 * half + 1) as usize;
        let mut next = vec![0.0f64; width];
        let mut row = if opts.record_argmin {
            Vec::with_capacity(width)
        } else {
            Vec::new()
        };
        for (j, slot) in next.iter_mut().enumerate() {
            let x = new_lo + j as i64;
            let up = cur[(x + 1 - cur_lo) as usize];
            let down = cur[(x - 1 - cur_lo) as usize];
            let (q, choice) = decide(i, x, up, down);
            if choice == Choice::Tie {
                ties += 1;
            }
            *slot = bv(x) + log_mix(q, up, down);
            if opts.record_argmin {
                row.push(choice);
            }
        }
        cur = next;
        cur_lo = new_lo;
        if opts.record_argmin {
            argmin_rows.push(row);
        }
        if opts.record_times.contains(&i) {
            recorded.push((i, cur_lo, cur.clone()));
        }
    }

    let value = cur[(start - cur_lo) as usize];
    Ok(DpRun {
        value_table: ValueTable {
            problem: *problem,
            value,
            final_slice: cur,
            final_lo: cur_lo,
            recorded,
            argmin: if opts.record_argmin {
                Some(ArgminTable {
                    start,
                    horizon: n,
                    rows: argmin_rows,
                })
            } else {
                None
            },
            ties,
        },
    })
}

/// Optimal value by backward recursion with bang-bang minimization.
/// Ties break toward the drift-left endpoint and are counted.
pub fn solve(env: &Environment, problem: &ControlProblem, opts: &SolveOptions) -> Result<ValueTable> {
    let (qm, qp) = problem.q_band();
    let degenerate = qm == qp; // delta = 0: both endpoints coincide
    let run = run_dp(env, problem, opts, |_, _, up, down| {
        if degenerate || up == down {
            (qm, Choice::Tie)
        } else if up > down {
            (qm, Choice::Left)
        } else {
            (qp, Choice::Right)
        }
    })?;
    Ok(run.value_table)
}

/// Exact log-cost of a fixed policy (same recursion, no minimum).
///
/// The policy is consulted at the path time `n - i` of the transition that
/// computes slice `i`, which only matters for time-dependent tables.
pub fn evaluate_policy(
    env: &Environment,
    problem: &ControlProblem,
    policy: &PolicySpec,
) -> Result<ValueTable> {
    policy.check_admissible(problem)?;
    let run = run_dp(env, problem, &SolveOptions::default(), |_, x, _, _| {
        (policy.q_at(problem, x), Choice::Tie)
    })?;
    let mut table = run.value_table;
    table.ties = 0;
    Ok(table)
}

/// Replays a solved argmin table as a fixed policy; the result must equal
/// the optimal value (consistency of argmin extraction).
pub fn evaluate_argmin_policy(
    env: &Environment,
    problem: &ControlProblem,
    argmin: &ArgminTable,
) -> Result<f64> {
    if argmin.horizon != problem.horizon || argmin.start != problem.start {
        return Err(CoreError::InvalidParameter("argmin table does not match the problem".into()));
    }
    let (qm, qp) = problem.q_band();
    let run = run_dp(env, problem, &SolveOptions::default(), |i, x, _, _| {
        match argmin.choice(i, x).unwrap_or(Choice::Tie) {
            Choice::Right => (qp, Choice::Right),
            _ => (qm, Choice::Left),
        }
    })?;
    Ok(run.value_table.value)
}

/// Value of the exponential-tilt formulation for a bang-bang policy given
/// as tilts `alpha(j, x) in {-c, +c}` (path time `j`):
/// SSRW expectation of `exp(sum beta V + (theta + alpha) Z)` plus
/// `theta * start - n log cosh c`. Algebraically equal to
/// [`evaluate_policy`] on the corresponding `pi`.
pub fn tilt_formulation_value<A>(
    env: &Environment,
    problem: &ControlProblem,
    mut alpha: A,
) -> Result<f64>
where
    A: FnMut(usize, i64) -> f64,
{
    problem.validate()?;
    if problem.delta <= 0.0 || problem.delta >= 1.0 {
        return Err(CoreError::Precondition(
            "the tilt formulation needs delta in (0, 1)".into(),
        ));
    }
    let c = problem.c()?;
    let n = problem.horizon;
    let start = problem.start;
    let m = n as i64;
    env.require_window(start - m, start + m)?;
    let pot = env.collect_window(start - m, start + m)?;
    let bv = |x: i64| problem.beta * pot[(x - (start - m)) as usize];
    let theta = problem.theta;

    // Y(k, x): value with k steps remaining at site x, path time j = n - k.
    // The k = 0 slice is zero on the whole cone |x - start| <= n.
    let mut cur: Vec<f64> = (-m..=m).map(|_| 0.0).collect();
    let mut cur_lo = start - m;
    const LN_HALF: f64 = -std::f64::consts::LN_2;
    for k in 1..=n {
        let j = n - k; // path time of this transition
        let half = m - k as i64;
        let new_lo = start - half;
        let width = (2 * half + 1) as usize;
        let mut next = vec![0.0f64; width];
        for (idx, slot) in next.iter_mut().enumerate() {
            let x = new_lo + idx as i64;
            let a = alpha(j, x);
            if (a.abs() - c).abs() > 1e-9 {
                return Err(CoreError::InadmissiblePolicy(format!(
                    "alpha = {a} is not a +-{c} tilt"
                )));
            }
            let up = cur[(x + 1 - cur_lo) as usize];
            let down = cur[(x - 1 - cur_lo) as usize];
            let hi = LN_HALF + (theta + a) + up;
            let lo_term = LN_HALF - (theta + a) + down;
            let mx = hi.max(lo_term);
            *slot = bv(x) + mx + ((hi - mx).exp() + (lo_term - mx).exp()).ln();
        }
        cur = next;
        cur_lo = new_lo;
    }
    let y = cur[(start - cur_lo) as usize];
    Ok(y + theta * start as f64 - n as f64 * ln_cosh(c))
}

/// Sup-norm error of the rescaled value function against the homogenized
/// limit, one entry per lattice scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationReport {
    /// `(n, sup |u_eps - u_o|)` per scale `eps = 1/n`.
    pub sup_errors: Vec<(usize, f64)>,
    /// Errors shrink along the scale list (10% slack allowed).
    pub decreasing: bool,
    pub lipschitz_time_max: f64,
    pub lipschitz_time_bound: f64,
    pub lipschitz_space_max: f64,
    pub lipschitz_space_bound: f64,
    pub lipschitz_ok: bool,
}

/// Computes `u_eps(t, x) = eps * u([t/eps], [x/eps])` on the `(t, x)` grid
/// for each `eps = 1/n`, compares against `t * h_bar + theta x`, and checks
/// the discrete Lipschitz bounds on the visited slices (`delta < 1`).
#[allow(clippy::too_many_arguments)]
pub fn homogenization_diagnostics(
    env: &Environment,
    delta: f64,
    beta: f64,
    theta: f64,
    h_bar: f64,
    n_grid: &[usize],
    t_grid: &[f64],
    x_grid: &[f64],
) -> Result<HomogenizationReport> {
    if n_grid.is_empty() || t_grid.is_empty() || x_grid.is_empty() {
        return Err(CoreError::InvalidParameter("empty grid".into()));
    }
    let t_max = t_grid.iter().copied().fold(0.0f64, f64::max);
    let mut sup_errors = Vec::new();
    let mut lip_t_max = 0.0f64;
    let mut lip_x_max = 0.0f64;
    for &n in n_grid {
        let horizon = (n as f64 * t_max).floor() as usize;
        let mut times: Vec<usize> = t_grid
            .iter()
            .map(|&t| (n as f64 * t).floor() as usize)
            .collect();
        // Neighbor slices feed the discrete time-Lipschitz check.
        let extra: Vec<usize> = times.iter().map(|&i| i + 1).filter(|&i| i <= horizon).collect();
        times.extend(extra);
        times.sort_unstable();
        times.dedup();
        let problem = ControlProblem::new(delta, beta, theta, horizon.max(1));
        let table = solve(
            env,
            &problem,
            &SolveOptions {
                record_argmin: false,
                record_times: times,
            },
        )?;
        let slice = |i: usize| -> Option<(i64, &Vec<f64>)> {
            table
                .recorded
                .iter()
                .find(|(t, _, _)| *t == i)
                .map(|(_, lo, v)| (*lo, v))
        };
        let eps = 1.0 / n as f64;
        let mut sup = 0.0f64;
        for &t in t_grid {
            let i = (n as f64 * t).floor() as usize;
            if let Some((lo, values)) = slice(i) {
                for &x in x_grid {
                    let xs = (n as f64 * x).floor() as i64;
                    let idx = xs - lo;
                    if idx < 0 || idx as usize >= values.len() {
                        continue; // outside the cone at this scale
                    }
                    let u_eps = eps * values[idx as usize];
                    let u_o = t * h_bar + theta * x;
                    sup = sup.max((u_eps - u_o).abs());
                }
                // Discrete Lipschitz checks on the visited slice.
                for w in values.windows(2) {
                    lip_x_max = lip_x_max.max((w[1] - w[0]).abs());
                }
                if let Some((lo2, values2)) = slice(i + 1) {
                    for (j, &v2) in values2.iter().enumerate() {
                        let x_site = lo2 + j as i64;
                        let idx = x_site - lo;
                        if idx >= 0 && (idx as usize) < values.len() {
                            lip_t_max = lip_t_max.max((v2 - values[idx as usize]).abs());
                        }
                    }
                }
            }
        }
        sup_errors.push((n, sup));
    }
    let decreasing = sup_errors
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * 1.10);
    let lipschitz_time_bound = beta + theta.abs();
    let lipschitz_space_bound = if delta < 1.0 {
        beta + theta.abs() - ((1.0 - delta) / 2.0).ln()
    } else {
        f64::INFINITY
    };
    let lipschitz_ok = lip_t_max <= lipschitz_time_bound + 1e-9
        && (delta >= 1.0 || lip_x_max <= lipschitz_space_bound + 1e-9);
    Ok(HomogenizationReport {
        sup_errors,
        decreasing,
        lipschitz_time_max: lip_t_max,
        lipschitz_time_bound,
        lipschitz_space_max: lip_x_max,
        lipschitz_space_bound,
        lipschitz_ok,
    })
}

/// Structure summary of a solved argmin field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub frac_left: f64,
    pub frac_right: f64,
    pub frac_tie: f64,
    /// Among decided (non-tie) cells away from `valley_center`: fraction
    /// whose drift points at the valley (right of it drift left, left of it
    /// drift right).
    pub valley_alignment: Option<f64>,
    pub cells: usize,
}

/// Classifies the argmin field; `valley_center` (if given) triggers the
/// drift-toward-valley alignment count.
pub fn optimal_policy_structure(table: &ValueTable, valley_center: Option<i64>) -> Result<StructureReport> {
    let argmin = table
        .argmin
        .as_ref()
        .ok_or_else(|| CoreError::InvalidParameter("table was solved without argmin recording".into()))?;
    let mut left = 0usize;
    let mut right = 0usize;
    let mut tie = 0usize;
    let mut aligned = 0usize;
    let mut near = 0usize;
    for (row_idx, row) in argmin.rows.iter().enumerate() {
        let i = row_idx + 1;
        let lo = argmin.start - (argmin.horizon - i) as i64;
        for (j, &choice) in row.iter().enumerate() {
            let x = lo + j as i64;
            match choice {
                Choice::Left => left += 1,
                Choice::Right => right += 1,
                Choice::Tie => tie += 1,
            }
            if let Some(center) = valley_center {
                if x != center && choice != Choice::Tie {
                    near += 1;
                    let toward = if x > center { Choice::Left } else { Choice::Right };
                    if choice == toward {
                        aligned += 1;
                    }
                }
            }
        }
    }
    let cells = left + right + tie;
    let denom = cells.max(1) as f64;
    Ok(StructureReport {
        frac_left: left as f64 / denom,
        frac_right: right as f64 / denom,
        frac_tie: tie as f64 / denom,
        valley_alignment: valley_center.map(|_| aligned as f64 / near.max(1) as f64),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_environment, EnvSpec};
    use crate::tfe;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    /// Decision-tree brute force in plain probability domain: the minimum
    /// over all bang-bang tables, by explicit recursion over the full path
    /// tree (subtree decisions are independent, so this enumerates the
    /// optimal table exactly). O(2^n).
    fn brute_force_optimal(env: &Environment, p: &ControlProblem) -> f64 {
        fn go(env: &Environment, p: &ControlProblem, j: usize, x: i64) -> f64 {
            if j == p.horizon {
                return (p.theta * x as f64).exp();
            }
            let up = go(env, p, j + 1, x + 1);
            let down = go(env, p, j + 1, x - 1);
            let (qm, qp) = p.q_band();
            let a = qm * up + (1.0 - qm) * down;
            let b = qp * up + (1.0 - qp) * down;
            (p.beta * env.value(x).unwrap()).exp() * a.min(b)
        }
        go(env, p, 0, p.start).ln()
    }

    /// Literal enumeration over every bang-bang table on the cone (only
    /// feasible for tiny horizons).
    fn enumerate_tables_optimal(env: &Environment, p: &ControlProblem) -> f64 {
        // Cells: (path time j, site x) with |x - start| <= j.
        let mut cells = Vec::new();
        for j in 0..p.horizon {
            for dx in -(j as i64)..=(j as i64) {
                if (dx + j as i64) % 2 == 0 {
                    cells.push((j, p.start + dx));
                }
            }
        }
        assert!(cells.len() <= 20, "table enumeration explodes");
        let (qm, qp) = p.q_band();
        let mut best = f64::INFINITY;
        for mask in 0u64..(1 << cells.len()) {
            let q_of = |j: usize, x: i64| -> f64 {
                let idx = cells.iter().position(|&(cj, cx)| cj == j && cx == x).unwrap();
                if (mask >> idx) & 1 == 1 {
                    qp
                } else {
                    qm
                }
            };
            // Evaluate this table by forward path expansion.
            fn eval(
                env: &Environment,
                p: &ControlProblem,
                q_of: &dyn Fn(usize, i64) -> f64,
                j: usize,
                x: i64,
            ) -> f64 {
                if j == p.horizon {
                    return (p.theta * x as f64).exp();
                }
                let q = q_of(j, x);
                (p.beta * env.value(x).unwrap()).exp()
                    * (q * eval(env, p, q_of, j + 1, x + 1) + (1.0 - q) * eval(env, p, q_of, j + 1, x - 1))
            }
            let v = eval(env, p, &q_of, 0, p.start);
            best = best.min(v);
        }
        best.ln()
    }

    #[test]
    fn delta_zero_matches_uncontrolled_dp() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 40 }, 8).unwrap();
        let p = ControlProblem::new(0.0, 1.0, 0.7, 24);
        let table = solve(&env, &p, &opts()).unwrap();
        let want = crate::walk::path_sum_log_expectation(&env, 1.0, 0.7, 24, 0).unwrap();
        assert!((table.value - want).abs() < 1e-11);
    }

    #[test]
    fn one_step_theta_zero_is_potential() {
        let env = Environment::periodic(&[0.3, 0.8, 0.1]).unwrap();
        for start in -2i64..=2 {
            let p = ControlProblem::new(0.7, 1.3, 0.0, 1).with_start(start);
            let table = solve(&env, &p, &opts()).unwrap();
            assert!((table.value - 1.3 * env.value(start).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn full_control_constant_env_exact() {
        let env = Environment::constant(0.4).unwrap();
        for &(theta, n) in &[(1.5f64, 3usize), (0.7, 8), (-1.2, 6)] {
            let p = ControlProblem::new(1.0, 1.0, theta, n);
            let table = solve(&env, &p, &opts()).unwrap();
            let want = n as f64 * (0.4 - theta.abs());
            assert!((table.value - want).abs() < 1e-12, "theta={theta} n={n}");
        }
    }

    #[test]
    fn brute_force_tree_and_tables_agree_small() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 10 }, 4).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 0.8, 4);
        let dp = solve(&env, &p, &opts()).unwrap().value;
        let tree = brute_force_optimal(&env, &p);
        let tables = enumerate_tables_optimal(&env, &p);
        assert!((dp - tree).abs() < 1e-12);
        assert!((dp - tables).abs() < 1e-12);
    }

    #[test]
    fn brute_force_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let seed: u64 = rng.gen();
            let env = make_environment(EnvSpec::Iid { p: 0.5, window: 12 }, seed).unwrap();
            let delta = [0.0, 0.25, 0.5, 0.75, 1.0][rng.gen_range(0..5)];
            let beta = 0.5 + rng.gen::<f64>();
            let theta = -1.5 + 3.0 * rng.gen::<f64>();
            let n = rng.gen_range(1..=8);
            let p = ControlProblem::new(delta, beta, theta, n);
            let dp = solve(&env, &p, &opts()).unwrap().value;
            let bf = brute_force_optimal(&env, &p);
            assert!(
                (dp - bf).abs() < 1e-10,
                "delta={delta} beta={beta} theta={theta} n={n}: {dp} vs {bf}"
            );
        }
    }

    #[test]
    fn march_left_on_constant_env_is_deterministic_sum() {
        let env = Environment::constant(0.25).unwrap();
        let p = ControlProblem::new(1.0, 1.0, 0.9, 7).with_start(3);
        let table = evaluate_policy(&env, &p, &PolicySpec::MarchLeft).unwrap();
        let want = 0.9 * 3.0 + 7.0 * (0.25 - 0.9);
        assert!((table.value - want).abs() < 1e-12);
    }

    #[test]
    fn valley_policy_confines_at_full_control() {
        // Potential 0 on {0, 1}, high elsewhere (period 8); at delta = 1 the
        // bang-bang valley policy at x_star = 1 oscillates on the zero pair.
        let env = Environment::periodic(&[0.0, 0.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9]).unwrap();
        let n = 40;
        let p = ControlProblem::new(1.0, 1.0, 0.0, n);
        let table = evaluate_policy(&env, &p, &PolicySpec::ValleyBangBang { x_star: 1 }).unwrap();
        // Start at 0: steps alternate 0 -> 1 -> 0 ...; total potential 0.
        assert!(table.value.abs() < 1e-12, "value = {}", table.value);
    }

    #[test]
    fn optimal_policy_replay_matches_solve() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 40 }, 11).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 1.2, 30);
        let table = solve(
            &env,
            &p,
            &SolveOptions {
                record_argmin: true,
                record_times: vec![],
            },
        )
        .unwrap();
        let replay = evaluate_argmin_policy(&env, &p, table.argmin.as_ref().unwrap()).unwrap();
        assert!((replay - table.value).abs() < 1e-12);
    }

    #[test]
    fn dominance_of_fixed_policies() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 30 }, 5).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 0.6, 20);
        let best = solve(&env, &p, &opts()).unwrap().value;
        for policy in [
            PolicySpec::MarchLeft,
            PolicySpec::MarchRight,
            PolicySpec::ValleyBangBang { x_star: 2 },
            PolicySpec::ConstantQ { q: 0.4 },
        ] {
            let v = evaluate_policy(&env, &p, &policy).unwrap().value;
            assert!(v >= best - 1e-10, "{policy:?}: {v} < {best}");
        }
    }

    #[test]
    fn monotone_in_delta() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 30 }, 9).unwrap();
        let mut prev = f64::INFINITY;
        for &delta in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = ControlProblem::new(delta, 1.0, 0.8, 20);
            let v = solve(&env, &p, &opts()).unwrap().value;
            assert!(v <= prev + 1e-12, "delta={delta}: {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn inadmissible_policy_rejected() {
        let env = Environment::constant(0.5).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 0.0, 5);
        assert!(matches!(
            evaluate_policy(&env, &p, &PolicySpec::ConstantQ { q: 0.9 }),
            Err(CoreError::InadmissiblePolicy(_))
        ));
    }

    #[test]
    fn tilt_matches_policy_march_left() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 20 }, 3).unwrap();
        let p = ControlProblem::new(0.6, 1.0, 0.9, 12);
        let c = p.c().unwrap();
        let via_tilt = tilt_formulation_value(&env, &p, |_, _| -c).unwrap();
        let via_policy = evaluate_policy(&env, &p, &PolicySpec::MarchLeft).unwrap().value;
        assert!((via_tilt - via_policy).abs() < 1e-12, "{via_tilt} vs {via_policy}");
    }

    #[test]
    fn tilt_matches_policy_random_table() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 15 }, 6).unwrap();
        let p = ControlProblem::new(0.3, 0.8, -0.4, 10);
        let c = p.c().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Random alpha table on (time, site), dense over the cone.
        let n = p.horizon;
        let signs: Vec<Vec<bool>> = (0..n).map(|_| (0..=4 * n).map(|_| rng.gen_bool(0.5)).collect()).collect();
        let alpha = |j: usize, x: i64| {
            let idx = (x + 2 * n as i64) as usize;
            if signs[j][idx] {
                c
            } else {
                -c
            }
        };
        let (qm, qp) = p.q_band();
        let via_tilt = tilt_formulation_value(&env, &p, alpha).unwrap();
        // Same table as probabilities: q = e^{alpha} / (2 cosh c).
        // evaluate_policy consults the policy at path time n - i, so wrap a
        // time-aware run through run_dp directly.
        let run = super::run_dp(&env, &p, &SolveOptions::default(), |i, x, _, _| {
            let j = n - i;
            if alpha(j, x) > 0.0 {
                (qp, Choice::Tie)
            } else {
                (qm, Choice::Tie)
            }
        })
        .unwrap();
        assert!(
            (via_tilt - run.value_table.value).abs() < 1e-12,
            "{via_tilt} vs {}",
            run.value_table.value
        );
    }

    #[test]
    fn tilt_to_zero_control_reduces_to_untilted() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 20 }, 7).unwrap();
        let theta = 0.5;
        let n = 10;
        let uncontrolled = crate::walk::path_sum_log_expectation(&env, 1.0, theta, n, 0).unwrap();
        let mut prev_gap = f64::INFINITY;
        for delta in [0.2, 0.02, 0.002] {
            let p = ControlProblem::new(delta, 1.0, theta, n);
            let c = p.c().unwrap();
            let v = tilt_formulation_value(&env, &p, |_, _| -c).unwrap();
            // As c -> 0 the tilted value approaches the uncontrolled one
            // (the gap is O(n c)).
            let gap = (v - uncontrolled).abs();
            assert!(gap < prev_gap + 1e-12);
            prev_gap = gap;
        }
        assert!(prev_gap < 0.02, "gap {prev_gap}");
    }

    #[test]
    fn homogenization_initial_slice_exact() {
        let env = Environment::periodic(&[0.0, 1.0]).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 1.0, 8);
        let table = solve(
            &env,
            &p,
            &SolveOptions {
                record_argmin: false,
                record_times: vec![0],
            },
        )
        .unwrap();
        let (_, lo, values) = &table.recorded[0];
        for (j, &v) in values.iter().enumerate() {
            let x = lo + j as i64;
            assert_eq!(v, 1.0 * x as f64);
        }
    }

    #[test]
    fn homogenization_errors_shrink() {
        let env = Environment::periodic(&[0.0, 1.0]).unwrap();
        // Weak regime delta = 0.5, beta = 1, theta = 1.2 > c: the effective
        // Hamiltonian is Lambda(theta - c) - log cosh c, with the shifted
        // tilt far enough from the flat edge that Lambda is exact.
        let delta = 0.5;
        let theta = 1.2;
        let c = crate::effham::c_of_delta(delta).unwrap();
        let tolv = tfe::Tolerances::default();
        let lam = tfe::lambda_at(&env, 1.0, theta - c, &tolv).unwrap();
        let h_bar = lam - ln_cosh(c);
        let report = homogenization_diagnostics(
            &env,
            delta,
            1.0,
            theta,
            h_bar,
            &[500, 1000, 2000],
            &[0.5, 1.0],
            &[-0.4, 0.0, 0.4],
        )
        .unwrap();
        assert!(report.decreasing, "{:?}", report.sup_errors);
        assert!(report.lipschitz_ok, "{report:?}");
    }

    #[test]
    fn structure_all_ties_at_delta_zero() {
        let env = Environment::constant(0.5).unwrap();
        let p = ControlProblem::new(0.0, 1.0, 0.3, 10);
        let table = solve(
            &env,
            &p,
            &SolveOptions {
                record_argmin: true,
                record_times: vec![],
            },
        )
        .unwrap();
        let rep = optimal_policy_structure(&table, None).unwrap();
        assert_eq!(rep.frac_tie, 1.0);
    }

    #[test]
    fn structure_marches_left_for_large_theta() {
        let env = make_environment(EnvSpec::Iid { p: 0.5, window: 80 }, 13).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 3.0, 60);
        let table = solve(
            &env,
            &p,
            &SolveOptions {
                record_argmin: true,
                record_times: vec![],
            },
        )
        .unwrap();
        let rep = optimal_policy_structure(&table, None).unwrap();
        assert!(rep.frac_left >= 0.99, "frac_left = {}", rep.frac_left);
    }

    #[test]
    fn structure_drifts_toward_valley() {
        // Deep zero-valley right of the start; theta = 0: the argmin field
        // drifts right before the valley and left after it. The period is
        // long enough that the cone sees a single copy of the valley.
        let mut vals = vec![0.8f64; 40];
        for v in vals.iter_mut().take(10).skip(6) {
            *v = 0.0;
        }
        let env = Environment::periodic(&vals).unwrap();
        let p = ControlProblem::new(0.8, 1.5, 0.0, 6).with_start(5);
        let table = solve(
            &env,
            &p,
            &SolveOptions {
                record_argmin: true,
                record_times: vec![],
            },
        )
        .unwrap();
        let rep = optimal_policy_structure(&table, Some(7)).unwrap();
        assert!(
            rep.valley_alignment.unwrap() > 0.7,
            "alignment = {:?}",
            rep.valley_alignment
        );
    }

    #[test]
    fn binary_slice_dump_round_trips() {
        let env = Environment::constant(0.5).unwrap();
        let p = ControlProblem::new(0.5, 1.0, 0.4, 6);
        let table = solve(&env, &p, &opts()).unwrap();
        let mut buf = Vec::new();
        table.write_slice(&mut buf, 6).unwrap();
        let n = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let lo = i64::from_le_bytes(buf[8..16].try_into().unwrap());
        let hi = i64::from_le_bytes(buf[16..24].try_into().unwrap());
        assert_eq!(n, 6);
        assert_eq!(lo, 0);
        assert_eq!(hi, 0);
        let v = f64::from_le_bytes(buf[24..32].try_into().unwrap());
        assert_eq!(v, table.value);
    }
}
