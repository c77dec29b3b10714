//! Random and periodic potential environments on the integer lattice.
//!
//! An [`Environment`] is a realization of a potential `V` with values in
//! `[0, 1]`, either one period of a periodic sequence (readable at every
//! integer site through the period) or a sampled window `[-W, W]` drawn
//! reproducibly from a seeded generator. Valleys and hills (maximal runs
//! of low / high potential) are the geometric features the control and
//! free-energy machinery keys on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numeric::{sliding_max, sliding_min};

/// Generator family plus its parameters. `window` is the half-width `W` of
/// the generated range `[-W, W]` for sampled kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    /// Explicit periodic potential; one period of values.
    Periodic { values: Vec<f64> },
    /// I.i.d. sites, `V = 1` with probability `p`, else `0`.
    Iid { p: f64, window: i64 },
    /// Stationary two-state {0,1} chain flipping with probability `flip`
    /// at each step, started from its uniform stationary law.
    Markov { flip: f64, window: i64 },
    /// Adjacent pairs share one Bernoulli(p) value, with a random phase:
    /// sites `s + 2k - 1` and `s + 2k` carry the same value.
    GluedPairs { p: f64, window: i64 },
}

impl EnvSpec {
    /// Parses the CLI environment string: `periodic:v0,v1,...`,
    /// `iid:p=<prob>`, `markov:flip=<prob>`, `glued:p=<prob>`.
    pub fn parse(s: &str, window: i64) -> Result<Self> {
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| CoreError::InvalidParameter(format!("environment spec `{s}`: expected `kind:params`")))?;
        let bad = |msg: &str| CoreError::InvalidParameter(format!("environment spec `{s}`: {msg}"));
        match head {
            "periodic" => {
                let values = rest
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("could not parse period values"))?;
                Ok(EnvSpec::Periodic { values })
            }
            "iid" => {
                let p = parse_kv(rest, "p").ok_or_else(|| bad("expected p=<prob>"))?;
                Ok(EnvSpec::Iid { p, window })
            }
            "markov" => {
                let flip = parse_kv(rest, "flip").ok_or_else(|| bad("expected flip=<prob>"))?;
                Ok(EnvSpec::Markov { flip, window })
            }
            "glued" => {
                let p = parse_kv(rest, "p").ok_or_else(|| bad("expected p=<prob>"))?;
                Ok(EnvSpec::GluedPairs { p, window })
            }
            other => Err(bad(&format!("unknown kind `{other}`"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let check_prob = |name: &str, p: f64| {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                Err(CoreError::InvalidParameter(format!("{name} = {p} outside [0, 1]")))
            } else {
                Ok(())
            }
        };
        let check_window = |w: i64| {
            if w < 1 {
                Err(CoreError::InvalidParameter(format!("window half-width {w} < 1")))
            } else {
                Ok(())
            }
        };
        match self {
            EnvSpec::Periodic { values } => {
                if values.is_empty() {
                    return Err(CoreError::InvalidParameter("period < 1".into()));
                }
                for &v in values {
                    check_prob("period value", v)?;
                }
                Ok(())
            }
            EnvSpec::Iid { p, window } | EnvSpec::GluedPairs { p, window } => {
                check_prob("p", *p)?;
                check_window(*window)
            }
            EnvSpec::Markov { flip, window } => {
                check_prob("flip", *flip)?;
                check_window(*window)
            }
        }
    }
}

fn parse_kv(s: &str, key: &str) -> Option<f64> {
    let (k, v) = s.split_once('=')?;
    if k.trim() != key {
        return None;
    }
    v.trim().parse().ok()
}

/// A realized potential: one period, or a window `[-W, W]` of samples.
///
/// Immutable after construction; the same `(spec, seed)` always reproduces
/// the identical value sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    spec: EnvSpec,
    seed: u64,
    values: Vec<f64>,
}

/// Builds an environment from a generator spec and a seed.
pub fn make_environment(spec: EnvSpec, seed: u64) -> Result<Environment> {
    spec.validate()?;
    let values = match &spec {
        EnvSpec::Periodic { values } => values.clone(),
        EnvSpec::Iid { p, window } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..2 * *window + 1)
                .map(|_| if rng.gen::<f64>() < *p { 1.0 } else { 0.0 })
                .collect()
        }
        EnvSpec::Markov { flip, window } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Stationary law of the symmetric two-state flip chain is uniform.
            let mut state = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let mut vals = Vec::with_capacity((2 * *window + 1) as usize);
            vals.push(state);
            for _ in 0..2 * *window {
                if rng.gen::<f64>() < *flip {
                    state = 1.0 - state;
                }
                vals.push(state);
            }
            vals
        }
        EnvSpec::GluedPairs { p, window } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: i64 = if rng.gen::<f64>() < 0.5 { 1 } else { 0 };
            // Site y belongs to pair k = floor((y - s + 1) / 2); generate the
            // pair values covering the window in one deterministic sweep.
            let pair_of = |y: i64| (y - s + 1).div_euclid(2);
            let k_lo = pair_of(-*window);
            let k_hi = pair_of(*window);
            let alphas: Vec<f64> = (k_lo..=k_hi)
                .map(|_| if rng.gen::<f64>() < *p { 1.0 } else { 0.0 })
                .collect();
            (-*window..=*window)
                .map(|y| alphas[(pair_of(y) - k_lo) as usize])
                .collect()
        }
    };
    Ok(Environment { spec, seed, values })
}

impl Environment {
    /// Convenience constructor for explicit periodic potentials.
    pub fn periodic(values: &[f64]) -> Result<Self> {
        make_environment(
            EnvSpec::Periodic {
                values: values.to_vec(),
            },
            0,
        )
    }

    /// Constant potential `V = v` (1-periodic).
    pub fn constant(v: f64) -> Result<Self> {
        Self::periodic(&[v])
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.spec, EnvSpec::Periodic { .. })
    }

    /// Number of stored values: the period, or the window site count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Raw stored values (one period, or the window `[-W, W]` left to right).
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Covered site range; `None` means every site (periodic).
    pub fn coverage(&self) -> Option<(i64, i64)> {
        match &self.spec {
            EnvSpec::Periodic { .. } => None,
            EnvSpec::Iid { window, .. }
            | EnvSpec::Markov { window, .. }
            | EnvSpec::GluedPairs { window, .. } => Some((-window, *window)),
        }
    }

    /// Potential at a site. Out-of-window sites of sampled kinds are an
    /// error rather than a silent extension.
    pub fn value(&self, site: i64) -> Result<f64> {
        match self.coverage() {
            None => {
                let n = self.values.len() as i64;
                Ok(self.values[site.rem_euclid(n) as usize])
            }
            Some((lo, hi)) => {
                if site < lo || site > hi {
                    Err(CoreError::OutOfWindow { site, lo, hi })
                } else {
                    Ok(self.values[(site - lo) as usize])
                }
            }
        }
    }

    /// Checks that `[lo, hi]` is covered, for DP cone preconditions.
    pub fn require_window(&self, need_lo: i64, need_hi: i64) -> Result<()> {
        match self.coverage() {
            None => Ok(()),
            Some((lo, hi)) => {
                if need_lo < lo || need_hi > hi {
                    Err(CoreError::WindowTooSmall {
                        need_lo,
                        need_hi,
                        lo,
                        hi,
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Materializes `V` on `[lo, hi]` as a dense vector.
    pub fn collect_window(&self, lo: i64, hi: i64) -> Result<Vec<f64>> {
        self.require_window(lo, hi)?;
        (lo..=hi).map(|s| self.value(s)).collect()
    }

    /// Spatial mean of the stored values (period mean, or window mean:
    /// the Birkhoff surrogate for `E[V]`).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Largest stored value; the attained essential supremum.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest stored value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Diagnostic view with potential `1 - V` (valleys and hills swap).
    /// Site alignment and coverage are preserved; the spec still describes
    /// the pre-flip construction.
    pub fn flipped(&self) -> Environment {
        Environment {
            spec: self.spec.clone(),
            seed: self.seed,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Stable JSON form `{kind, params, seed, values}`.
    pub fn to_json(&self) -> serde_json::Value {
        let (kind, params) = match &self.spec {
            EnvSpec::Periodic { values } => ("periodic", serde_json::json!({ "values": values })),
            EnvSpec::Iid { p, window } => ("iid", serde_json::json!({ "p": p, "window": window })),
            EnvSpec::Markov { flip, window } => ("markov", serde_json::json!({ "flip": flip, "window": window })),
            EnvSpec::GluedPairs { p, window } => ("glued-pairs", serde_json::json!({ "p": p, "window": window })),
        };
        serde_json::json!({
            "kind": kind,
            "params": params,
            "seed": self.seed,
            "values": self.values,
        })
    }
}

/// Valley / hill discriminator for interval features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Valley,
    Hill,
}

/// A lattice interval on which the potential stays below (valley) or above
/// (hill) the level `h`. Features span `2*ell - 1` sites centered at
/// `center`, so `ell = 1` features are single sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalFeature {
    pub lo: i64,
    pub hi: i64,
    pub kind: FeatureKind,
    pub level: f64,
}

impl IntervalFeature {
    pub fn center(&self) -> i64 {
        (self.lo + self.hi) / 2
    }

    pub fn site_count(&self) -> i64 {
        self.hi - self.lo + 1
    }
}

fn check_feature_params(h: f64, ell: i64) -> Result<()> {
    if !(0.0 < h && h < 1.0) {
        return Err(CoreError::InvalidParameter(format!("level h = {h} outside (0, 1)")));
    }
    if ell < 1 {
        return Err(CoreError::InvalidParameter(format!("half-length ell = {ell} < 1")));
    }
    Ok(())
}

/// All placements of `2*ell - 1`-site features of the requested kind whose
/// span lies inside `window`, sorted by position.
pub fn scan_features(
    env: &Environment,
    h: f64,
    ell: i64,
    window: (i64, i64),
    kind: FeatureKind,
) -> Result<Vec<IntervalFeature>> {
    check_feature_params(h, ell)?;
    let (w_lo, w_hi) = window;
    if w_lo > w_hi {
        return Err(CoreError::InvalidParameter("empty window".into()));
    }
    let span = 2 * ell - 1;
    if w_hi - w_lo + 1 < span {
        return Ok(Vec::new());
    }
    let vals = env.collect_window(w_lo, w_hi)?;
    let half = (ell - 1) as usize;
    // A center works iff the window extreme over its span clears the level.
    let extremes = match kind {
        FeatureKind::Valley => sliding_max(&vals, half),
        FeatureKind::Hill => sliding_min(&vals, half),
    };
    let mut out = Vec::new();
    for c in (w_lo + ell - 1)..=(w_hi - ell + 1) {
        let e = extremes[(c - w_lo) as usize];
        let ok = match kind {
            FeatureKind::Valley => e <= h,
            FeatureKind::Hill => e >= h,
        };
        if ok {
            out.push(IntervalFeature {
                lo: c - (ell - 1),
                hi: c + (ell - 1),
                kind,
                level: h,
            });
        }
    }
    Ok(out)
}

/// The feature of the requested kind whose center is closest to `around`,
/// ties broken toward the smaller site index. Searches centers out to
/// `max_radius` from `around`.
pub fn nearest_feature(
    env: &Environment,
    h: f64,
    ell: i64,
    around: i64,
    kind: FeatureKind,
    max_radius: i64,
) -> Result<IntervalFeature> {
    check_feature_params(h, ell)?;
    let fits = |c: i64| -> bool {
        env.require_window(c - (ell - 1), c + (ell - 1)).is_ok()
    };
    let is_feature = |c: i64| -> Result<bool> {
        for s in (c - (ell - 1))..=(c + (ell - 1)) {
            let v = env.value(s)?;
            let ok = match kind {
                FeatureKind::Valley => v <= h,
                FeatureKind::Hill => v >= h,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    };
    for d in 0..=max_radius {
        // Smaller site index first on ties.
        for c in [around - d, around + d] {
            if d == 0 && c != around {
                continue;
            }
            if fits(c) && is_feature(c)? {
                return Ok(IntervalFeature {
                    lo: c - (ell - 1),
                    hi: c + (ell - 1),
                    kind,
                    level: h,
                });
            }
        }
    }
    Err(CoreError::FeatureNotFound {
        kind: match kind {
            FeatureKind::Valley => "valley",
            FeatureKind::Hill => "hill",
        },
        around,
        radius: max_radius,
    })
}
