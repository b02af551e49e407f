//! Reaction terms `f(x, t)` with derivative and primitive, sign truncations
//! and a sampling checker for the asymptotic and small-amplitude hypotheses.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};
use crate::spectral::{EigenSet, CLUSTER_GAP};

/// Declared properties used by the checker and by the energy quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionMeta {
    pub name: String,
    /// Values of `t` where `f` or `f′` is not smooth (quadrature splits there).
    pub kinks: Vec<f64>,
    /// Constant band `(η₁, η₂)` containing `f(t)/t` near zero.
    pub zero_band: Option<(f64, f64)>,
    /// Constant cap `η₀` with `2F(t)/t² ≤ η₀` near zero.
    pub zero_cap: Option<f64>,
    /// Declared range of `f(t)/t` as `|t| → ∞`.
    pub slope_at_infinity: Option<(f64, f64)>,
    pub growth_exponent: f64,
}

pub trait Reaction: Send + Sync {
    fn f(&self, x: f64, t: f64) -> f64;
    /// `∂f/∂t`.
    fn df(&self, x: f64, t: f64) -> f64;
    /// `F(x, t) = ∫₀ᵗ f(x, τ) dτ`.
    fn primitive(&self, x: f64, t: f64) -> f64;
    fn meta(&self) -> &ReactionMeta;
}

pub type SharedReaction = Arc<dyn Reaction>;

/// `f(t) = λ t`.
#[derive(Debug, Clone)]
pub struct LinearReaction {
    slope: f64,
    meta: ReactionMeta,
}

impl LinearReaction {
    pub fn new(slope: f64) -> Result<Self> {
        if !slope.is_finite() {
            return Err(precondition("linear reaction slope must be finite"));
        }
        Ok(LinearReaction {
            slope,
            meta: ReactionMeta {
                name: format!("linear({slope})"),
                kinks: Vec::new(),
                zero_band: Some((slope, slope)),
                zero_cap: Some(slope),
                slope_at_infinity: Some((slope, slope)),
                growth_exponent: 2.0,
            },
        })
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }
}

impl Reaction for LinearReaction {
    fn f(&self, _x: f64, t: f64) -> f64 {
        self.slope * t
    }

    fn df(&self, _x: f64, _t: f64) -> f64 {
        self.slope
    }

    fn primitive(&self, _x: f64, t: f64) -> f64 {
        0.5 * self.slope * t * t
    }

    fn meta(&self) -> &ReactionMeta {
        &self.meta
    }
}

/// Which hypothesis family an example reaction is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleVariant {
    /// One-solution setting: slope `μ` at zero between `λ_h` and `λ_{h+1}`.
    H1 { h: usize },
    /// Three-solution setting: slope `μ` at zero below `λ₁`.
    H2,
}

/// `f(t) = μ t` on `[−1, 1]`, and for `|t| > 1`
/// `f(t) = λ_k t + sgn(t) (μ − λ_k)(½ ln|t| + √|t|)`.
///
/// The branches meet with matching value and slope at `|t| = 1`.
#[derive(Debug, Clone)]
pub struct ExampleReaction {
    mu: f64,
    k: usize,
    lambda_k: f64,
    variant: ExampleVariant,
    meta: ReactionMeta,
}

impl ExampleReaction {
    /// `lambdas[k-1]` supplies `λ_k`.
    pub fn new(mu: f64, k: usize, lambdas: &[f64], variant: ExampleVariant) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(precondition(format!("mu={mu} must be positive")));
        }
        if k == 0 || k > lambdas.len() {
            return Err(precondition(format!(
                "k={k} needs lambdas[0..{k}], got {} values",
                lambdas.len()
            )));
        }
        let lambda_k = lambdas[k - 1];
        if !(lambda_k > 0.0 && lambda_k.is_finite()) {
            return Err(precondition(format!("lambda_{k}={lambda_k} must be positive")));
        }
        let name = match variant {
            ExampleVariant::H1 { h } => format!("example_h1(mu={mu},h={h},k={k})"),
            ExampleVariant::H2 => format!("example_h2(mu={mu},k={k})"),
        };
        let (zero_band, zero_cap) = match variant {
            ExampleVariant::H1 { .. } => (Some((mu, mu)), None),
            ExampleVariant::H2 => (None, Some(mu)),
        };
        Ok(ExampleReaction {
            mu,
            k,
            lambda_k,
            variant,
            meta: ReactionMeta {
                name,
                kinks: vec![-1.0, 1.0],
                zero_band,
                zero_cap,
                slope_at_infinity: Some((lambda_k, lambda_k)),
                growth_exponent: 2.0,
            },
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda_k(&self) -> f64 {
        self.lambda_k
    }

    pub fn variant(&self) -> ExampleVariant {
        self.variant
    }

    /// Outer branch for `t ≥ 1`.
    fn outer(&self, t: f64) -> f64 {
        self.lambda_k * t + (self.mu - self.lambda_k) * (0.5 * t.ln() + t.sqrt())
    }

    fn outer_slope(&self, t: f64) -> f64 {
        self.lambda_k + (self.mu - self.lambda_k) * (0.5 / t + 0.5 / t.sqrt())
    }

    fn outer_primitive(&self, t: f64) -> f64 {
        let (mu, lk) = (self.mu, self.lambda_k);
        0.5 * mu
            + 0.5 * lk * (t * t - 1.0)
            + (mu - lk) * (0.5 * (t * t.ln() - t + 1.0) + 2.0 / 3.0 * (t * t.sqrt() - 1.0))
    }
}

impl Reaction for ExampleReaction {
    fn f(&self, _x: f64, t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            self.mu * t
        } else {
            t.signum() * self.outer(a)
        }
    }

    // at |t| = 1 the inner slope is used; both branches give μ there
    fn df(&self, _x: f64, t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            self.mu
        } else {
            self.outer_slope(a)
        }
    }

    fn primitive(&self, _x: f64, t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            0.5 * self.mu * t * t
        } else {
            self.outer_primitive(a)
        }
    }

    fn meta(&self) -> &ReactionMeta {
        &self.meta
    }
}

/// `x`-independent reaction interpolating a table of `(t, f)` samples by
/// cubic Hermite pieces (slopes from three-point differences), extended
/// linearly outside the table. The result is `C¹`.
#[derive(Debug, Clone)]
pub struct TableReaction {
    ts: Vec<f64>,
    fs: Vec<f64>,
    slopes: Vec<f64>,
    /// Antiderivative from `ts[0]` at every table node.
    cumulative: Vec<f64>,
    offset: f64,
    meta: ReactionMeta,
}

impl TableReaction {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(precondition("a reaction table needs at least two points"));
        }
        if points.iter().any(|(t, f)| !(t.is_finite() && f.is_finite())) {
            return Err(precondition("reaction table contains non-finite values"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(precondition("reaction table abscissae must be strictly increasing"));
        }
        let ts: Vec<f64> = points.iter().map(|p| p.0).collect();
        let fs: Vec<f64> = points.iter().map(|p| p.1).collect();
        let m = ts.len();
        let mut slopes = vec![0.0; m];
        for i in 0..m {
            slopes[i] = if i == 0 {
                (fs[1] - fs[0]) / (ts[1] - ts[0])
            } else if i == m - 1 {
                (fs[m - 1] - fs[m - 2]) / (ts[m - 1] - ts[m - 2])
            } else {
                let (h0, h1) = (ts[i] - ts[i - 1], ts[i + 1] - ts[i]);
                let (d0, d1) = ((fs[i] - fs[i - 1]) / h0, (fs[i + 1] - fs[i]) / h1);
                (h1 * d0 + h0 * d1) / (h0 + h1)
            };
        }
        let mut table = TableReaction {
            ts: ts.clone(),
            fs,
            slopes,
            cumulative: vec![0.0; m],
            offset: 0.0,
            meta: ReactionMeta {
                name: format!("custom_table({m} points)"),
                kinks: ts,
                zero_band: None,
                zero_cap: None,
                slope_at_infinity: None,
                growth_exponent: 2.0,
            },
        };
        for i in 1..m {
            table.cumulative[i] = table.cumulative[i - 1] + table.piece_integral(i - 1, 1.0);
        }
        table.offset = table.antiderivative(0.0);
        let (lo, hi) = (table.slopes[0], table.slopes[m - 1]);
        table.meta.slope_at_infinity = Some((lo.min(hi), lo.max(hi)));
        Ok(table)
    }

    /// `∫` over the first `tau` fraction of piece `i`.
    fn piece_integral(&self, i: usize, tau: f64) -> f64 {
        let d = self.ts[i + 1] - self.ts[i];
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let t4 = t3 * tau;
        let h00 = 0.5 * t4 - t3 + tau;
        let h10 = 0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2;
        let h01 = -0.5 * t4 + t3;
        let h11 = 0.25 * t4 - t3 / 3.0;
        d * (self.fs[i] * h00 + d * self.slopes[i] * h10 + self.fs[i + 1] * h01 + d * self.slopes[i + 1] * h11)
    }

    fn piece(&self, t: f64) -> usize {
        let m = self.ts.len();
        self.ts[1..m - 1].partition_point(|&v| v <= t)
    }

    fn antiderivative(&self, t: f64) -> f64 {
        let m = self.ts.len();
        if t < self.ts[0] {
            let d = t - self.ts[0];
            return self.fs[0] * d + 0.5 * self.slopes[0] * d * d;
        }
        if t > self.ts[m - 1] {
            let d = t - self.ts[m - 1];
            return self.cumulative[m - 1] + self.fs[m - 1] * d + 0.5 * self.slopes[m - 1] * d * d;
        }
        let i = self.piece(t);
        let tau = (t - self.ts[i]) / (self.ts[i + 1] - self.ts[i]);
        self.cumulative[i] + self.piece_integral(i, tau)
    }
}

impl Reaction for TableReaction {
    fn f(&self, _x: f64, t: f64) -> f64 {
        let m = self.ts.len();
        if t < self.ts[0] {
            return self.fs[0] + self.slopes[0] * (t - self.ts[0]);
        }
        if t > self.ts[m - 1] {
            return self.fs[m - 1] + self.slopes[m - 1] * (t - self.ts[m - 1]);
        }
        let i = self.piece(t);
        let d = self.ts[i + 1] - self.ts[i];
        let tau = (t - self.ts[i]) / d;
        let t2 = tau * tau;
        let t3 = t2 * tau;
        self.fs[i] * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d * self.slopes[i] * (t3 - 2.0 * t2 + tau)
            + self.fs[i + 1] * (3.0 * t2 - 2.0 * t3)
            + d * self.slopes[i + 1] * (t3 - t2)
    }

    fn df(&self, _x: f64, t: f64) -> f64 {
        let m = self.ts.len();
        if t < self.ts[0] {
            return self.slopes[0];
        }
        if t > self.ts[m - 1] {
            return self.slopes[m - 1];
        }
        let i = self.piece(t);
        let d = self.ts[i + 1] - self.ts[i];
        let tau = (t - self.ts[i]) / d;
        let t2 = tau * tau;
        (self.fs[i] * (6.0 * t2 - 6.0 * tau) + self.fs[i + 1] * (6.0 * tau - 6.0 * t2)) / d
            + self.slopes[i] * (3.0 * t2 - 4.0 * tau + 1.0)
            + self.slopes[i + 1] * (3.0 * t2 - 2.0 * tau)
    }

    fn primitive(&self, _x: f64, t: f64) -> f64 {
        self.antiderivative(t) - self.offset
    }

    fn meta(&self) -> &ReactionMeta {
        &self.meta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// `f_±(x, t) = f(x, ±t^±)`: the base reaction on one half-line, zero on the other.
#[derive(Clone)]
pub struct TruncatedReaction {
    base: SharedReaction,
    sign: Sign,
    meta: ReactionMeta,
}

impl TruncatedReaction {
    pub fn base(&self) -> &SharedReaction {
        &self.base
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    fn active(&self, t: f64) -> bool {
        match self.sign {
            Sign::Plus => t > 0.0,
            Sign::Minus => t < 0.0,
        }
    }
}

pub fn truncate(base: SharedReaction, sign: Sign) -> TruncatedReaction {
    let bm = base.meta();
    let mut kinks: Vec<f64> = bm
        .kinks
        .iter()
        .copied()
        .filter(|&k| match sign {
            Sign::Plus => k > 0.0,
            Sign::Minus => k < 0.0,
        })
        .collect();
    kinks.push(0.0);
    kinks.sort_by(f64::total_cmp);
    let meta = ReactionMeta {
        name: format!("{}[{}]", bm.name, sign.symbol()),
        kinks,
        zero_band: None,
        zero_cap: bm.zero_cap.map(|c| c.max(0.0)),
        slope_at_infinity: bm.slope_at_infinity,
        growth_exponent: bm.growth_exponent,
    };
    TruncatedReaction { base, sign, meta }
}

impl Reaction for TruncatedReaction {
    fn f(&self, x: f64, t: f64) -> f64 {
        if self.active(t) {
            self.base.f(x, t)
        } else {
            self.base.f(x, 0.0)
        }
    }

    // at t = 0 the slope of the base is used, so the Hessian at the origin
    // agrees with the untruncated one
    fn df(&self, x: f64, t: f64) -> f64 {
        if t == 0.0 || self.active(t) {
            self.base.df(x, t)
        } else {
            0.0
        }
    }

    fn primitive(&self, x: f64, t: f64) -> f64 {
        if self.active(t) {
            self.base.primitive(x, t)
        } else {
            self.base.f(x, 0.0) * t
        }
    }

    fn meta(&self) -> &ReactionMeta {
        &self.meta
    }
}

/// Which set of hypotheses to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HypothesisMode {
    H1 { h: usize },
    H2,
}

#[derive(Debug, Clone)]
pub struct HypothesisParams {
    pub k: usize,
    pub delta0: f64,
    /// Points of `Ω` where the reaction is sampled.
    pub x_samples: Vec<f64>,
    /// Magnitudes for the divergence test of `f t − 2F`.
    pub tail_grid: Vec<f64>,
    /// Tolerance on `f/t` at the largest tail sample, relative to `λ_{k+1}`.
    pub tail_tol: f64,
    /// Number of magnitudes sampled in `(0, δ₀]`.
    pub small_samples: usize,
    /// Relative margin for strict inequalities.
    pub strict_tol: f64,
}

impl HypothesisParams {
    pub fn new(k: usize, x_samples: Vec<f64>) -> Self {
        HypothesisParams {
            k,
            delta0: 1.0,
            x_samples,
            tail_grid: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            tail_tol: 5e-3,
            small_samples: 100,
            strict_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub clause: String,
    pub passed: bool,
    pub detail: String,
    /// Sample closest to (or furthest past) the bound.
    pub worst: Option<Sample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub reaction: String,
    #[serde(flatten)]
    pub mode: HypothesisMode,
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub clauses: Vec<ClauseReport>,
    /// Smallest `a₀` with `|f(t)| ≤ a₀ (1 + |t|)` on the sample grid.
    pub growth_a0: f64,
    pub all_passed: bool,
}

impl HypothesisReport {
    pub fn clause(&self, name: &str) -> Option<&ClauseReport> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

fn clause(name: &str, passed: bool, detail: String, worst: Option<Sample>) -> ClauseReport {
    ClauseReport {
        clause: name.to_string(),
        passed,
        detail,
        worst,
    }
}

/// Samples the reaction against the computed spectrum.
///
/// Clauses: `c1_continuity` (value and slope continuous across the declared
/// kinks), `ii_divergence` (`f t − 2F` increasing and positive along the tail
/// grid, both signs), `iii_slope_at_infinity` (`f/t` at the largest tail
/// sample within `[λ_k, λ_{k+1}]` up to the tail tolerance, with the distance
/// to that interval nonincreasing along the grid) and `iv_near_zero`
/// (band or cap condition for `|t| ≤ δ₀`), plus index checks on `k`, `h`.
pub fn check_hypotheses(
    r: &dyn Reaction,
    spectrum: &EigenSet,
    mode: HypothesisMode,
    params: &HypothesisParams,
) -> Result<HypothesisReport> {
    let k = params.k;
    let need = match mode {
        HypothesisMode::H1 { h } => (k + 1).max(h + 1),
        HypothesisMode::H2 => k + 1,
    };
    if k == 0 || spectrum.len() < need {
        return Err(precondition(format!(
            "hypothesis check needs {need} eigenvalues, spectrum has {}",
            spectrum.len()
        )));
    }
    if params.x_samples.is_empty() || params.tail_grid.is_empty() || !(params.delta0 > 0.0) {
        return Err(precondition("hypothesis check needs x samples, a tail grid and delta0 > 0"));
    }
    let lam = |j: usize| spectrum.lambda(j);
    let mut clauses = Vec::new();

    // index conditions
    match mode {
        HypothesisMode::H1 { h } => {
            let ok = h >= 1 && (lam(k) - lam(h)).abs() > CLUSTER_GAP * lam(k);
            clauses.push(clause(
                "index",
                ok,
                format!("h={h}, k={k}: need h >= 1 and lambda_h != lambda_k"),
                None,
            ));
        }
        HypothesisMode::H2 => {
            clauses.push(clause("index", k >= 2, format!("k={k}: need k >= 2"), None));
        }
    }

    // C¹ across kinks
    {
        let mut worst: Option<Sample> = None;
        let mut ok = true;
        for &x in &params.x_samples {
            for &kink in &r.meta().kinks {
                let eps = 1e-12 * kink.abs().max(1.0);
                let gap_f = (r.f(x, kink + eps) - r.f(x, kink - eps)).abs();
                let gap_d = (r.df(x, kink + eps) - r.df(x, kink - eps)).abs();
                let scale = r.df(x, kink).abs().max(1.0);
                let bound = 1e-8 * scale;
                let value = gap_f.max(gap_d);
                if value > bound {
                    ok = false;
                }
                if worst.as_ref().is_none_or(|w| value - bound > w.value - w.bound) {
                    worst = Some(Sample { x, t: kink, value, bound });
                }
            }
        }
        clauses.push(clause(
            "c1_continuity",
            ok,
            "one-sided values and slopes agree across kinks to 1e-8".into(),
            worst,
        ));
    }

    // (ii) divergence of f t − 2F
    {
        let mut ok = true;
        let mut worst: Option<Sample> = None;
        for &x in &params.x_samples {
            for sign in [1.0, -1.0] {
                let mut prev = f64::NEG_INFINITY;
                for &m in &params.tail_grid {
                    let t = sign * m;
                    let v = r.f(x, t) * t - 2.0 * r.primitive(x, t);
                    let good = v.is_finite() && v > prev && v > 0.0;
                    if !good {
                        ok = false;
                        if worst.is_none() {
                            worst = Some(Sample { x, t, value: v, bound: prev.max(0.0) });
                        }
                    }
                    prev = v;
                }
            }
        }
        clauses.push(clause(
            "ii_divergence",
            ok,
            "f(t)t - 2F(t) positive and strictly increasing along the tail grid".into(),
            worst,
        ));
    }

    // (iii) slope at infinity
    {
        let (lo, hi) = (lam(k), lam(k + 1));
        let tol = params.tail_tol * hi;
        let mut ok = true;
        let mut worst: Option<Sample> = None;
        for &x in &params.x_samples {
            for sign in [1.0, -1.0] {
                let mut prev_dist = f64::INFINITY;
                for (j, &m) in params.tail_grid.iter().enumerate() {
                    let t = sign * m;
                    let q = r.f(x, t) / t;
                    let dist = (lo - q).max(q - hi).max(0.0);
                    if !q.is_finite() || dist > prev_dist {
                        ok = false;
                    }
                    prev_dist = dist;
                    if j + 1 == params.tail_grid.len() {
                        if dist > tol {
                            ok = false;
                        }
                        if worst.as_ref().is_none_or(|w| dist > w.value) {
                            worst = Some(Sample { x, t, value: dist, bound: tol });
                        }
                    }
                }
            }
        }
        clauses.push(clause(
            "iii_slope_at_infinity",
            ok,
            format!(
                "f(t)/t within [{lo:.10e}, {hi:.10e}] up to {tol:.3e} at |t|={:.0e}, approaching monotonically",
                params.tail_grid.last().copied().unwrap_or(f64::NAN)
            ),
            worst,
        ));
    }

    // (iv) near zero
    let small: Vec<f64> = (1..=params.small_samples)
        .flat_map(|j| {
            let t = params.delta0 * j as f64 / params.small_samples as f64;
            [t, -t]
        })
        .collect();
    match mode {
        HypothesisMode::H1 { h } => {
            let sampled = || {
                params
                    .x_samples
                    .iter()
                    .flat_map(|&x| small.iter().map(move |&t| (x, t)))
                    .map(|(x, t)| (x, t, r.f(x, t) / t))
            };
            let (eta1, eta2) = r.meta().zero_band.unwrap_or_else(|| {
                let lo = sampled().map(|s| s.2).fold(f64::INFINITY, f64::min);
                let hi = sampled().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            });
            let (lh, lh1) = (lam(h.max(1)), lam(h.max(1) + 1));
            let tol = params.strict_tol * lh1;
            let mut ok = h >= 1 && lh - tol <= eta1 && eta1 <= eta2 && eta2 <= lh1 + tol;
            let strict = eta1 > lh + tol && eta2 < lh1 - tol;
            ok &= strict;
            let mut worst: Option<Sample> = None;
            for (x, t, q) in sampled() {
                let excess = (eta1 - q).max(q - eta2);
                if !(excess <= tol) {
                    ok = false;
                }
                if worst.as_ref().is_none_or(|w| excess > w.value) {
                    worst = Some(Sample { x, t, value: excess, bound: tol });
                }
            }
            clauses.push(clause(
                "iv_near_zero",
                ok,
                format!(
                    "lambda_h={lh:.10e} <= eta1={eta1:.10e} <= f/t <= eta2={eta2:.10e} <= lambda_(h+1)={lh1:.10e} for |t| <= {}, strict={strict}",
                    params.delta0
                ),
                worst,
            ));
        }
        HypothesisMode::H2 => {
            let sampled = || {
                params
                    .x_samples
                    .iter()
                    .flat_map(|&x| small.iter().map(move |&t| (x, t)))
                    .map(|(x, t)| (x, t, 2.0 * r.primitive(x, t) / (t * t)))
            };
            let eta0 = r
                .meta()
                .zero_cap
                .unwrap_or_else(|| sampled().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max));
            let l1 = lam(1);
            let tol = params.strict_tol * l1;
            let strict = eta0 < l1 - tol;
            let mut ok = eta0 >= 0.0 && strict;
            let mut worst: Option<Sample> = None;
            for (x, t, q) in sampled() {
                let excess = q - eta0;
                if !(excess <= tol) {
                    ok = false;
                }
                if worst.as_ref().is_none_or(|w| excess > w.value) {
                    worst = Some(Sample { x, t, value: excess, bound: tol });
                }
            }
            clauses.push(clause(
                "iv_near_zero",
                ok,
                format!(
                    "2F(t)/t^2 <= eta0={eta0:.10e} for |t| <= {} with 0 <= eta0 < lambda_1={l1:.10e}, strict={strict}",
                    params.delta0
                ),
                worst,
            ));
        }
    }

    let growth_a0 = growth_constant(r, &params.x_samples, params.tail_grid.last().copied().unwrap_or(1.0));
    let all_passed = clauses.iter().all(|c| c.passed);
    Ok(HypothesisReport {
        reaction: r.meta().name.clone(),
        mode,
        k,
        lambdas: spectrum.lambdas.iter().take(need).copied().collect(),
        clauses,
        growth_a0,
        all_passed,
    })
}

/// `max |f(x, t)| / (1 + |t|)` over a logarithmic grid up to `t_max`.
pub fn growth_constant(r: &dyn Reaction, xs: &[f64], t_max: f64) -> f64 {
    let mut a0: f64 = 0.0;
    let decades = t_max.max(1.0).log10().ceil() as i32 + 3;
    for &x in xs {
        for j in 0..=(20 * decades) {
            let t = 10f64.powf(-3.0 + j as f64 / 20.0).min(t_max);
            for s in [t, -t] {
                a0 = a0.max(r.f(x, s).abs() / (1.0 + s.abs()));
            }
        }
    }
    a0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lambdas() -> Vec<f64> {
        vec![7.0, 17.0, 27.0]
    }

    #[test]
    fn example_inner_branch() {
        let r = ExampleReaction::new(3.0, 2, &lambdas(), ExampleVariant::H2).unwrap();
        assert_eq!(r.f(0.0, 0.5), 1.5);
        assert_eq!(r.f(0.0, -0.5), -1.5);
        assert_eq!(r.primitive(0.0, 0.0), 0.0);
    }

    #[test]
    fn example_rejects_nonpositive_mu() {
        assert!(ExampleReaction::new(0.0, 2, &lambdas(), ExampleVariant::H2).is_err());
        assert!(ExampleReaction::new(-1.0, 2, &lambdas(), ExampleVariant::H2).is_err());
        assert!(ExampleReaction::new(1.0, 4, &lambdas(), ExampleVariant::H2).is_err());
    }

    #[test]
    fn branches_meet_at_one() {
        let r = ExampleReaction::new(3.0, 2, &lambdas(), ExampleVariant::H2).unwrap();
        assert!((r.outer(1.0) - 3.0).abs() < 1e-15);
        assert!((r.outer_slope(1.0) - 3.0).abs() < 1e-14);
        assert!((r.outer_primitive(1.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn truncation_sign_rules() {
        let base: SharedReaction =
            Arc::new(ExampleReaction::new(3.0, 2, &lambdas(), ExampleVariant::H2).unwrap());
        let p = truncate(base.clone(), Sign::Plus);
        let m = truncate(base.clone(), Sign::Minus);
        assert_eq!(p.f(0.0, -3.0), 0.0);
        assert_eq!(p.f(0.0, 2.0), base.f(0.0, 2.0));
        assert_eq!(m.primitive(0.0, -1.0), base.primitive(0.0, -1.0));
        assert_eq!(m.primitive(0.0, 1.0), 0.0);
        assert_eq!(p.df(0.0, -2.0), 0.0);
        assert_eq!(p.meta().kinks, vec![0.0, 1.0]);
        assert_eq!(m.meta().kinks, vec![-1.0, 0.0]);
    }

    #[test]
    fn table_reproduces_cubic_data_and_primitive() {
        let pts: Vec<(f64, f64)> = (-4..=4).map(|i| i as f64 * 0.5).map(|t| (t, 2.0 * t)).collect();
        let r = TableReaction::new(&pts).unwrap();
        for t in [-3.0, -1.1, 0.0, 0.3, 1.9, 5.0] {
            assert!((r.f(0.0, t) - 2.0 * t).abs() < 1e-13);
            assert!((r.df(0.0, t) - 2.0).abs() < 1e-12);
            assert!((r.primitive(0.0, t) - t * t).abs() < 1e-12);
        }
        assert!(TableReaction::new(&[(0.0, 0.0)]).is_err());
        assert!(TableReaction::new(&[(1.0, 0.0), (0.0, 1.0)]).is_err());
    }
}
