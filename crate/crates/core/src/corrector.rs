//! Cocycle algebra and the machinery built on correctors: sublinearity of
//! path sums, the full-control cocycle, the per-site kernel inequalities
//! behind the control bounds, the corrector-induced random walk in random
//! environment (velocity, invariant density), variational-formula
//! verification and the nondifferentiability bound at the flat edge.

use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment};
use crate::error::{CoreError, Result};
use crate::numeric::{ln_cosh, sliding_max_len, sliding_min_len};
use crate::tfe::{self, corrector_f_lambda, solve_lambda_implicit, FreeEnergyQuery, Tolerances};

/// A site-indexed cocycle: increments `F(x, +1)` stored per site with
/// `F(x, -1) = -F(x-1, +1)` derived, cyclic over the stored range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cocycle {
    plus: Vec<f64>,
    base_site: i64,
    /// Site range on which the cocycle is literal (None: every site).
    coverage: Option<(i64, i64)>,
}

impl Cocycle {
    /// Wraps per-site `F(x, 1)` values aligned with the environment storage.
    pub fn from_plus(env: &Environment, plus: Vec<f64>) -> Result<Self> {
        if plus.len() != env.len() {
            return Err(CoreError::InvalidParameter(format!(
                "profile length {} does not match environment ({})",
                plus.len(),
                env.len()
            )));
        }
        let base_site = env.coverage().map_or(0, |(lo, _)| lo);
        Ok(Cocycle {
            plus,
            base_site,
            coverage: env.coverage(),
        })
    }

    pub fn zero(env: &Environment) -> Self {
        Cocycle {
            plus: vec![0.0; env.len()],
            base_site: env.coverage().map_or(0, |(lo, _)| lo),
            coverage: env.coverage(),
        }
    }

    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    pub fn plus_values(&self) -> &[f64] {
        &self.plus
    }

    #[inline]
    fn index(&self, site: i64) -> usize {
        (site - self.base_site).rem_euclid(self.plus.len() as i64) as usize
    }

    /// `F(site, +1)`, cyclic beyond the stored range.
    pub fn plus_at(&self, site: i64) -> f64 {
        self.plus[self.index(site)]
    }

    /// `F(site, -1) = -F(site - 1, +1)`.
    pub fn minus_at(&self, site: i64) -> f64 {
        -self.plus_at(site - 1)
    }

    /// `F(site, z)` for a step `z = +-1`.
    pub fn at(&self, site: i64, z: i64) -> f64 {
        if z >= 0 {
            self.plus_at(site)
        } else {
            self.minus_at(site)
        }
    }

    /// Spatial mean of `F(., 1)` over the stored sites.
    pub fn mean(&self) -> f64 {
        self.plus.iter().sum::<f64>() / self.plus.len() as f64
    }

    pub fn is_centered(&self, tol: f64) -> bool {
        self.mean().abs() <= tol
    }

    /// The telescoping potential `f` with `f(0) = 0` and
    /// `f(y+1) - f(y) = F(y, 1)`, materialized on `[lo, hi]`.
    pub fn potential_range(&self, lo: i64, hi: i64) -> Result<Vec<f64>> {
        if let Some((c_lo, c_hi)) = self.coverage {
            // One extra site of slack: f(hi) only needs increments up to hi-1.
            if lo < c_lo || hi > c_hi + 1 {
                return Err(CoreError::WindowTooSmall {
                    need_lo: lo,
                    need_hi: hi,
                    lo: c_lo,
                    hi: c_hi,
                });
            }
        }
        let mut out = Vec::with_capacity((hi - lo + 1) as usize);
        // f(lo) first, then extend increment by increment.
        let mut f_lo = 0.0;
        if lo > 0 {
            for y in 0..lo {
                f_lo += self.plus_at(y);
            }
        } else {
            for y in lo..0 {
                f_lo -= self.plus_at(y);
            }
        }
        let mut f = f_lo;
        out.push(f);
        for y in lo..hi {
            f += self.plus_at(y);
            out.push(f);
        }
        Ok(out)
    }
}

/// The full-control corrector: `G(x, -1) = -beta V(x) + beta mean V`,
/// so `G(x, 1) = beta V(x+1) - beta mean V`. Centered by construction.
pub fn full_control_cocycle(env: &Environment, beta: f64) -> Cocycle {
    let l = env.len();
    let vals = env.raw_values();
    let mean = env.mean();
    let plus: Vec<f64> = (0..l).map(|k| beta * vals[(k + 1) % l] - beta * mean).collect();
    Cocycle {
        plus,
        base_site: env.coverage().map_or(0, |(lo, _)| lo),
        coverage: env.coverage(),
    }
}

/// Builds the cocycle view of a solved free-energy corrector profile.
pub fn cocycle_from_profile(env: &Environment, profile: &tfe::CorrectorProfile) -> Result<Cocycle> {
    Cocycle::from_plus(env, profile.plus.clone())
}

/// Exact `max |path sum| / n` over all `n`-step nearest-neighbor paths
/// started in `[-nB, nB]`, computed through the telescoping identity
/// `sum F(x_i, z_{i+1}) = f(x_n) - f(x_0)` (so the max is over endpoint
/// pairs, parity-respecting).
pub fn sublinearity_profile(cocycle: &Cocycle, n: usize, b: f64) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::InvalidParameter("n must be >= 1".into()));
    }
    if !cocycle.is_centered(1e-7) {
        return Err(CoreError::Precondition(format!(
            "cocycle not centered: mean {:.3e}",
            cocycle.mean()
        )));
    }
    let nb = (n as f64 * b).floor() as i64;
    let reach = nb + n as i64;
    let f = cocycle.potential_range(-reach, reach)?;
    let site_of = |idx: usize| -reach + idx as i64;

    // Per parity class, sliding max/min of f over windows of n+1 sites
    // (the reachable endpoints x_n = x_0 - n, x_0 - n + 2, ..., x_0 + n).
    let mut class: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut class_first_site: [i64; 2] = [0, 0];
    for (idx, &fv) in f.iter().enumerate() {
        let s = site_of(idx);
        let p = s.rem_euclid(2) as usize;
        if class[p].is_empty() {
            class_first_site[p] = s;
        }
        class[p].push(fv);
    }
    let w = n + 1;
    let smax: [Vec<f64>; 2] = [sliding_max_len(&class[0], w), sliding_max_len(&class[1], w)];
    let smin: [Vec<f64>; 2] = [sliding_min_len(&class[0], w), sliding_min_len(&class[1], w)];

    let mut worst = 0.0f64;
    for x0 in -nb..=nb {
        let f_x0 = f[(x0 + reach) as usize];
        let target = (x0 + n as i64).rem_euclid(2) as usize;
        let first_endpoint = x0 - n as i64;
        let j0 = ((first_endpoint - class_first_site[target]) / 2) as usize;
        let hi = smax[target][j0] - f_x0;
        let lo = f_x0 - smin[target][j0];
        worst = worst.max(hi.max(lo));
    }
    Ok(worst / n as f64)
}

/// `max |path sum| / n` across several horizons; diagnostics for the
/// decreasing trend.
pub fn sublinearity_sequence(cocycle: &Cocycle, ns: &[usize], b: f64) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| sublinearity_profile(cocycle, n, b).map(|v| (n, v)))
        .collect()
}

/// Which kernel inequality to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GVariant {
    Full,
    Partial,
}

/// Outcome of a kernel-inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GInequalityReport {
    pub variant: GVariant,
    /// min over sites (and mixture weights / tilt pair) of the inequality
    /// margin.
    pub min_margin: f64,
    /// Anchor equality residual: `|g(x, 0) - e^{beta mean V - theta}|`
    /// (full) or `|g(x, theta - c) - e^Lambda|` (partial), max over sites.
    pub anchor_residual_max: f64,
    /// Partial only: the margin sign matches the corrector-side criterion
    /// at every site.
    pub sign_agreement: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl GInequalityReport {
    /// Uniform report shape `{check, instance, residuals, margins, pass}`.
    pub fn to_report_json(&self, instance: &str) -> serde_json::Value {
        serde_json::json!({
            "check": match self.variant {
                GVariant::Full => "g-inequality-full",
                GVariant::Partial => "g-inequality-partial",
            },
            "instance": instance,
            "residuals": { "anchor_max": self.anchor_residual_max },
            "margins": { "min": self.min_margin, "sign_agreement": self.sign_agreement },
            "pass": self.pass,
        })
    }
}

/// Dispatches on the inequality variant; `c` is required for
/// [`GVariant::Partial`] and ignored otherwise.
pub fn g_inequality_check(
    env: &Environment,
    beta: f64,
    theta: f64,
    variant: GVariant,
    c: Option<f64>,
    tol: &Tolerances,
) -> Result<GInequalityReport> {
    match variant {
        GVariant::Full => g_inequality_full(env, beta, theta),
        GVariant::Partial => {
            let c = c.ok_or_else(|| {
                CoreError::Precondition("partial variant needs the tilt parameter c".into())
            })?;
            g_inequality_partial(env, beta, theta, c, tol)
        }
    }
}

/// Full-control inequality: for `theta >= beta mean V`, the one-step kernel
/// `g(x, p)` tilted by the full-control cocycle is minimized at `p = 0`,
/// where it equals `e^{beta mean V - theta}` exactly.
pub fn g_inequality_full(env: &Environment, beta: f64, theta: f64) -> Result<GInequalityReport> {
    let mean_v = env.mean();
    if theta < beta * mean_v {
        return Err(CoreError::Precondition(format!(
            "full-control inequality needs theta >= beta * mean V = {}",
            beta * mean_v
        )));
    }
    let g = full_control_cocycle(env, beta);
    let base = env.coverage().map_or(0, |(lo, _)| lo);
    let anchor = (beta * mean_v - theta).exp();
    let mut min_margin = f64::INFINITY;
    let mut anchor_residual_max = 0.0f64;
    for k in 0..env.len() as i64 {
        let site = base + k;
        let v = env.value(site)?;
        let up = (beta * v + theta + g.plus_at(site)).exp();
        let down = (beta * v - theta + g.minus_at(site)).exp();
        anchor_residual_max = anchor_residual_max.max((down - anchor).abs());
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let gp = p * up + (1.0 - p) * down;
            min_margin = min_margin.min(gp - down);
        }
    }
    let pass = min_margin >= -1e-10 && anchor_residual_max < 1e-12;
    Ok(GInequalityReport {
        variant: GVariant::Full,
        min_margin,
        anchor_residual_max,
        sign_agreement: true,
        pass,
        notes: Vec::new(),
    })
}

/// Partial-control inequality around the corrector at tilt `theta - c`:
/// `g(x, theta + c) >= g(x, theta - c) = e^Lambda`, with the equivalence
/// `g(x, theta+c) >= g(x, theta-c)  <=>  theta + F(x,1) >= -theta + F(x,-1)`
/// checked per site.
pub fn g_inequality_partial(
    env: &Environment,
    beta: f64,
    theta: f64,
    c: f64,
    tol: &Tolerances,
) -> Result<GInequalityReport> {
    if c <= 0.0 {
        return Err(CoreError::Precondition("partial variant needs c > 0".into()));
    }
    let shifted = theta - c;
    let res = solve_lambda_implicit(env, &FreeEnergyQuery {
        beta,
        theta: shifted,
        method: tfe::Method::Implicit,
        tolerances: *tol,
        horizon: 0,
    })?;
    let mut notes = Vec::new();
    if res.flat {
        return Err(CoreError::Precondition(format!(
            "Lambda_beta(theta - c) = {} is flat; the corrector is undefined there",
            res.lambda
        )));
    }
    let lcc = ln_cosh(c);
    let case_a = theta > c;
    let case_b = theta > 0.0 && theta < c && beta < res.lambda && res.lambda <= lcc + 1e-12;
    if !case_a && !case_b {
        return Err(CoreError::Precondition(format!(
            "hypotheses failed: need theta > c, or 0 < theta < c with beta < Lambda(theta-c) <= log cosh c \
             (theta = {theta}, c = {c}, Lambda = {}, log cosh c = {lcc})",
            res.lambda
        )));
    }
    if case_b {
        notes.push("confined-tilt case: 0 < theta < c".into());
    }
    let profile = corrector_f_lambda(env, beta, shifted, res.lambda, tol)?;
    let base = env.coverage().map_or(0, |(lo, _)| lo);
    let e_lambda = res.lambda.exp();
    let mut min_margin = f64::INFINITY;
    let mut anchor_residual_max = 0.0f64;
    let mut sign_agreement = true;
    for k in 0..env.len() as i64 {
        let site = base + k;
        let v = env.value(site)?;
        let fp = profile.plus_at(env, site);
        let fm = profile.minus_at(env, site);
        let g_at = |xi: f64| 0.5 * (beta * v + xi + fp).exp() + 0.5 * (beta * v - xi + fm).exp();
        let low = g_at(theta - c);
        let high = g_at(theta + c);
        anchor_residual_max = anchor_residual_max.max((low - e_lambda).abs());
        let margin = high - low;
        min_margin = min_margin.min(margin);
        let kernel_ge = margin >= -1e-10;
        let corrector_ge = (theta + fp) - (-theta + fm) >= -1e-10;
        if kernel_ge != corrector_ge {
            sign_agreement = false;
        }
    }
    let pass = min_margin >= -1e-10 && anchor_residual_max < 1e-9 && sign_agreement;
    Ok(GInequalityReport {
        variant: GVariant::Partial,
        min_margin,
        anchor_residual_max,
        sign_agreement,
        pass,
        notes,
    })
}

/// The corrector-induced random walk in random environment at a non-flat
/// tilt: jump probabilities, ratio sequence, Green-type series, invariant
/// density and limiting velocity (`= dLambda/dtheta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwreProfile {
    pub beta: f64,
    pub theta: f64,
    pub lambda: f64,
    /// Right-jump probability per stored site.
    pub q: Vec<f64>,
    /// `r = (1-q)/q` per stored site.
    pub r: Vec<f64>,
    /// `S(x) = 1 + r(x+1) S(x+1)` per stored site.
    pub s: Vec<f64>,
    /// Invariant density, normalized to sum 1 over the stored sites.
    pub phi: Vec<f64>,
    pub velocity: f64,
}

impl RwreProfile {
    /// Max residual of the stationarity equations
    /// `q(x-1) phi(x-1) + (1 - q(x+1)) phi(x+1) = phi(x)` (cyclic).
    pub fn stationarity_residual(&self) -> f64 {
        let l = self.phi.len();
        let mut worst = 0.0f64;
        for k in 0..l {
            let prev = (k + l - 1) % l;
            let next = (k + 1) % l;
            let lhs = self.q[prev] * self.phi[prev] + (1.0 - self.q[next]) * self.phi[next];
            worst = worst.max((lhs - self.phi[k]).abs());
        }
        worst
    }
}

/// Builds the RWRE profile from the solved corrector. Requires `theta > 0`
/// and a non-flat free energy.
pub fn rwre_profile(env: &Environment, beta: f64, theta: f64, tol: &Tolerances) -> Result<RwreProfile> {
    if theta <= 0.0 {
        return Err(CoreError::Precondition("rwre profile needs theta > 0".into()));
    }
    let res = solve_lambda_implicit(env, &FreeEnergyQuery {
        beta,
        theta,
        method: tfe::Method::Implicit,
        tolerances: *tol,
        horizon: 0,
    })?;
    if res.flat {
        return Err(CoreError::Precondition(
            "flat region: the corrector (and the induced walk) is undefined".into(),
        ));
    }
    let lambda = res.lambda;
    let plus = res.corrector.expect("non-flat result carries the corrector");
    let l = env.len();
    let vals = env.raw_values();
    let mut q = Vec::with_capacity(l);
    for k in 0..l {
        let qk = 0.5 * (beta * vals[k] + theta + plus[k] - lambda).exp();
        if !(0.0 < qk && qk < 1.0) {
            return Err(CoreError::Precondition(format!(
                "degenerate jump probability q = {qk} at index {k}"
            )));
        }
        q.push(qk);
    }
    let r: Vec<f64> = q.iter().map(|&qk| (1.0 - qk) / qk).collect();

    // S(x) = 1 + r(x+1) S(x+1): backward sweeps, contraction prod(r) < 1
    // per cycle.
    let mut s = vec![1.0f64; l];
    let mut converged = false;
    for _ in 0..100_000 {
        let mut max_update = 0.0f64;
        for k in (0..l).rev() {
            let nxt = (k + 1) % l;
            let new = 1.0 + r[nxt] * s[nxt];
            max_update = max_update.max((new - s[k]).abs());
            s[k] = new;
        }
        if max_update < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoreError::NoConvergence("Green series sweeps".into()));
    }

    // phi proportional to S/q solves the constant-current stationarity
    // system exactly; normalize to a probability vector over the period.
    let mut phi: Vec<f64> = (0..l).map(|k| s[k] / q[k]).collect();
    let total: f64 = phi.iter().sum();
    phi.iter_mut().for_each(|p| *p /= total);

    let mean_drag = (0..l).map(|k| (1.0 + r[k]) * s[k]).sum::<f64>() / l as f64;
    let velocity = 1.0 / mean_drag;
    Ok(RwreProfile {
        beta,
        theta,
        lambda,
        q,
        r,
        s,
        phi,
        velocity,
    })
}

/// Residuals of the two variational formulas evaluated at the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    pub lambda: f64,
    /// Site-constancy residual of the kernel form at the corrector.
    pub kernel_residual_max: f64,
    /// `|entropy-form value - lambda|` at `(q, phi)`.
    pub entropy_residual: f64,
    pub pass: bool,
}

impl VariationalReport {
    /// Uniform report shape `{check, instance, residuals, margins, pass}`.
    pub fn to_report_json(&self, instance: &str) -> serde_json::Value {
        serde_json::json!({
            "check": "variational-formulas",
            "instance": instance,
            "residuals": {
                "kernel_max": self.kernel_residual_max,
                "entropy": self.entropy_residual,
            },
            "margins": {},
            "pass": self.pass,
        })
    }
}

/// Relative entropy `I(q | p) = q log(q/p) + (1-q) log((1-q)/(1-p))`.
pub fn relative_entropy(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(q, p) + term(1.0 - q, 1.0 - p)
}

/// Evaluates both variational formulas at the solved corrector / induced
/// walk and reports the residuals against the free energy.
pub fn variational_check(env: &Environment, beta: f64, theta: f64, tol: &Tolerances) -> Result<VariationalReport> {
    let profile = rwre_profile(env, beta, theta, tol)?;
    let lambda = profile.lambda;
    let f = corrector_f_lambda(env, beta, theta, lambda, tol)?;
    let base = env.coverage().map_or(0, |(lo, _)| lo);
    let mut kernel_residual_max = 0.0f64;
    for k in 0..env.len() as i64 {
        let site = base + k;
        let v = env.value(site)?;
        let inner = beta * v
            + (0.5 * (theta + f.plus_at(env, site)).exp() + 0.5 * (-theta + f.minus_at(env, site)).exp()).ln();
        kernel_residual_max = kernel_residual_max.max((inner - lambda).abs());
    }

    let p = theta.exp() / (theta.exp() + (-theta).exp());
    let vals = env.raw_values();
    let mut value = 0.0;
    for ((&phi_k, &v_k), &q_k) in profile.phi.iter().zip(vals.iter()).zip(profile.q.iter()) {
        value += phi_k * (beta * v_k - relative_entropy(q_k, p));
    }
    value += ln_cosh(theta);
    let entropy_residual = (value - lambda).abs();
    let pass = kernel_residual_max < 1e-9 && entropy_residual < 1e-8;
    Ok(VariationalReport {
        lambda,
        kernel_residual_max,
        entropy_residual,
        pass,
    })
}

/// Nondifferentiability diagnostics at the flat edge `theta_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondiffReport {
    pub theta_b: f64,
    /// Bisection resolution on the flat flag.
    pub band: f64,
    pub r_bar_mean: f64,
    /// `(1 - E rbar) / (1 + E rbar)`: lower bound on the right derivative.
    pub derivative_lower_bound: f64,
    /// Sampled derivative inside the flat interval (should vanish).
    pub left_derivative: f64,
    /// Forward difference quotient just above `theta_b`.
    pub right_quotient: f64,
    pub hypothesis_note: String,
    pub pass: bool,
}

impl NondiffReport {
    /// Uniform report shape `{check, instance, residuals, margins, pass}`.
    pub fn to_report_json(&self, instance: &str) -> serde_json::Value {
        serde_json::json!({
            "check": "nondifferentiability-at-flat-edge",
            "instance": instance,
            "residuals": {
                "theta_b": self.theta_b,
                "band": self.band,
                "left_derivative": self.left_derivative,
            },
            "margins": {
                "right_quotient": self.right_quotient,
                "derivative_lower_bound": self.derivative_lower_bound,
                "hypothesis": self.hypothesis_note,
            },
            "pass": self.pass,
        })
    }
}

/// Locates `theta_b = sup { theta : Lambda = flat }` by bisection on the
/// solver's flat flag, computes the ratio bound `rbar` and samples both
/// one-sided derivatives around the edge.
pub fn nondifferentiability_check(env: &Environment, beta: f64, tol: &Tolerances) -> Result<NondiffReport> {
    let is_flat = |theta: f64| -> Result<bool> {
        Ok(solve_lambda_implicit(env, &FreeEnergyQuery {
            beta,
            theta,
            method: tfe::Method::Implicit,
            tolerances: *tol,
            horizon: 0,
        })?
        .flat)
    };
    let lambda_of = |theta: f64| -> Result<f64> {
        tfe::lambda_at(env, beta, theta, tol)
    };

    if !is_flat(0.0)? {
        return Err(CoreError::Precondition(
            "no flat interval at theta = 0; flat-edge diagnostics do not apply".into(),
        ));
    }
    let mut hi = beta * (env.max_value() - env.mean()) + 0.25;
    let mut guard = 0;
    while is_flat(hi)? {
        hi += 0.5;
        guard += 1;
        if guard > 40 {
            return Err(CoreError::NoConvergence("flat edge not found below theta = 20".into()));
        }
    }
    let mut lo = 0.0f64;
    let band = 1e-6;
    while hi - lo > band {
        let mid = 0.5 * (lo + hi);
        if is_flat(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta_b = 0.5 * (lo + hi);

    let r_bar_mean = env
        .raw_values()
        .iter()
        .map(|&v| 0.5 * ((beta * (v - 1.0)).exp() + 1.0))
        .sum::<f64>()
        / env.len() as f64;
    let derivative_lower_bound = (1.0 - r_bar_mean) / (1.0 + r_bar_mean);

    // Left derivative sampled strictly inside the flat interval.
    let off = (0.05f64).min(theta_b / 2.0).max(band);
    let h = (0.01f64).min(theta_b / 4.0).max(band / 2.0);
    let left_derivative = (lambda_of(theta_b - off)? - lambda_of(theta_b - off - h)?) / h;

    // Right difference quotient just above the edge; by convexity it
    // underestimates the derivative further out, and it must clear the
    // ratio bound.
    let dr = 0.01;
    let right_quotient = (lambda_of(theta_b + dr)? - lambda_of(theta_b)?) / dr;

    let hypothesis_note = match env.spec() {
        EnvSpec::Iid { .. } => "iid potential: nondifferentiability hypothesis holds".to_string(),
        _ => {
            // Empirical return time to a low-potential site.
            let h_level = 0.5;
            let vals = env.raw_values();
            let mut gaps = Vec::new();
            let mut last: Option<usize> = None;
            for (i, &v) in vals.iter().enumerate() {
                if v <= h_level {
                    if let Some(prev) = last {
                        gaps.push((i - prev) as f64);
                    }
                    last = Some(i);
                }
            }
            if gaps.is_empty() {
                "no low-potential sites in the window; hypothesis not witnessed".to_string()
            } else {
                let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
                format!("hypothesis sampled, not proved: mean return gap {mean_gap:.3} sites")
            }
        }
    };

    let pass = derivative_lower_bound > 0.0
        && derivative_lower_bound < 1.0
        && left_derivative.abs() < 1e-8
        && right_quotient >= derivative_lower_bound - 1e-4;
    Ok(NondiffReport {
        theta_b,
        band,
        r_bar_mean,
        derivative_lower_bound,
        left_derivative,
        right_quotient,
        hypothesis_note,
        pass,
    })
}
