//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dotted
//! (`mesh.n = 128`). Values may be quoted. Unknown and repeated keys are
//! rejected, and every value is validated before any computation starts.

use std::collections::BTreeMap;
use std::path::Path;

use fracmorse::experiment::Pipeline;
use fracmorse::mesh::{Mesh1D, WeightField};
use fracmorse::variational::SolverConfig;
use serde::Serialize;

/// Every key the parser accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "domain.a",
    "domain.b",
    "mesh.n",
    "operator.s",
    "weight.kind",
    "weight.value",
    "weight.values",
    "weight.center",
    "weight.radius",
    "weight.height",
    "weight.slope",
    "reaction.kind",
    "reaction.mu",
    "reaction.k",
    "reaction.h",
    "reaction.table",
    "reaction.slope",
    "hypotheses.mode",
    "solver.tol",
    "solver.max_iter",
    "solver.seed",
    "solver.n_starts",
    "solver.kernel_tol",
    "solver.pipeline",
    "spectrum.k_max",
    "verify.trials",
    "verify.inject_fault",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Parses the raw text into a sorted key map.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {}: expected `key = value`, got `{line}`", lineno + 1));
        };
        let key = key.trim();
        let value = unquote(value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return err(format!("line {}: unknown key `{key}`", lineno + 1));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return err(format!("line {}: key `{key}` given twice", lineno + 1));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    // '#' inside quotes is kept
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v)
}

/// A linear combination of constants and discrete eigenvalues, such as
/// `0.5*lambda_1` or `lambda_1 + 0.25*lambda_2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralExpr {
    pub text: String,
    /// `(coefficient, eigenvalue index)`; index `None` is a constant term.
    pub terms: Vec<(f64, Option<usize>)>,
}

impl SpectralExpr {
    pub fn parse(key: &str, text: &str) -> Result<Self, ConfigError> {
        let bad = |why: &str| ConfigError(format!("{key}: cannot parse `{text}` ({why})"));
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad("empty"));
        }
        // split before every '+' or '-' that is not an exponent sign
        let chars: Vec<char> = compact.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        for i in 1..chars.len() {
            let sign = chars[i] == '+' || chars[i] == '-';
            let exponent = matches!(chars[i - 1], 'e' | 'E') && i >= 2 && chars[i - 2].is_ascii_digit();
            if sign && !exponent && chars[i - 1] != '*' {
                pieces.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        pieces.push(chars[start..].iter().collect());

        let mut terms = Vec::new();
        for piece in pieces {
            let (neg, body) = match piece.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, piece.strip_prefix('+').unwrap_or(&piece)),
            };
            let (coef, index) = match body.split_once('*') {
                Some((c, l)) => (c.parse::<f64>().map_err(|_| bad("bad coefficient"))?, Some(lambda_index(l))),
                None if body.starts_with("lambda_") => (1.0, Some(lambda_index(body))),
                None => (body.parse::<f64>().map_err(|_| bad("bad number"))?, None),
            };
            let index = match index {
                Some(Some(j)) => Some(j),
                Some(None) => return Err(bad("expected lambda_<j> with j >= 1")),
                None => None,
            };
            if !coef.is_finite() {
                return Err(bad("non-finite coefficient"));
            }
            terms.push((if neg { -coef } else { coef }, index));
        }
        Ok(SpectralExpr {
            text: text.to_string(),
            terms,
        })
    }

    pub fn max_index(&self) -> usize {
        self.terms.iter().filter_map(|t| t.1).max().unwrap_or(0)
    }

    /// `lambdas[j-1]` is `λ_j`.
    pub fn eval(&self, lambdas: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(c, j)| match j {
                Some(j) => c * lambdas[j - 1],
                None => c,
            })
            .sum()
    }
}

fn lambda_index(s: &str) -> Option<usize> {
    s.strip_prefix("lambda_")?.parse::<usize>().ok().filter(|&j| j >= 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Constant { value: f64 },
    Table { values: Vec<f64> },
    Bump { center: f64, radius: f64, height: f64 },
    Ramp { slope: f64 },
}

impl WeightSpec {
    pub fn build(&self, mesh: &Mesh1D) -> fracmorse::Result<WeightField> {
        match self {
            WeightSpec::Constant { value } => WeightField::constant(mesh.n(), *value),
            WeightSpec::Table { values } => {
                let eta0 = values.iter().copied().fold(f64::INFINITY, f64::min);
                WeightField::new(values.clone(), eta0, "table")
            }
            WeightSpec::Bump { center, radius, height } => WeightField::bump(mesh, *center, *radius, *height),
            WeightSpec::Ramp { slope } => WeightField::ramp(mesh, *slope),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionSpec {
    ExampleH1 { mu: SpectralExpr, k: usize, h: usize },
    ExampleH2 { mu: SpectralExpr, k: usize },
    CustomTable { points: Vec<(f64, f64)>, k: usize },
    Linear { slope: SpectralExpr, k: usize },
}

impl ReactionSpec {
    pub fn k(&self) -> usize {
        match self {
            ReactionSpec::ExampleH1 { k, .. }
            | ReactionSpec::ExampleH2 { k, .. }
            | ReactionSpec::CustomTable { k, .. }
            | ReactionSpec::Linear { k, .. } => *k,
        }
    }

    /// Largest eigenvalue index the reaction refers to.
    pub fn max_lambda_index(&self) -> usize {
        match self {
            ReactionSpec::ExampleH1 { mu, .. } | ReactionSpec::ExampleH2 { mu, .. } => mu.max_index(),
            ReactionSpec::Linear { slope, .. } => slope.max_index(),
            ReactionSpec::CustomTable { .. } => 0,
        }
    }
}

/// Which hypothesis set `solve` samples before running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisChoice {
    H1,
    H2,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub domain: (f64, f64),
    pub n: usize,
    pub s: f64,
    pub weight: WeightSpec,
    pub reaction: ReactionSpec,
    pub hypotheses: HypothesisChoice,
    pub h: usize,
    pub solver: SolverConfig,
    pub pipeline: Pipeline,
    pub k_max: usize,
    pub verify_trials: usize,
    pub inject_fault: bool,
    #[serde(skip)]
    pub output_dir: Option<String>,
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T, ConfigError> {
        match self.get(key) {
            Some(v) => v
                .parse::<T>()
                .map_err(|_| ConfigError(format!("{key}: cannot parse `{v}`"))),
            None => default.ok_or_else(|| ConfigError(format!("missing required key `{key}`"))),
        }
    }

    fn real(&self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let v: f64 = self.num(key, default)?;
        if !v.is_finite() {
            return err(format!("{key}: value must be finite"));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let v = self.real(key, default)?;
        if v <= 0.0 {
            return err(format!("{key}: value must be positive, got {v}"));
        }
        Ok(v)
    }
}

fn reals(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ConfigError(format!("{key}: cannot parse `{}`", t.trim())))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let e = Entries(parse_entries(text)?);

        let a = e.real("domain.a", Some(-1.0))?;
        let b = e.real("domain.b", Some(1.0))?;
        if a >= b {
            return err(format!("domain: need a < b, got a={a}, b={b}"));
        }
        let n: usize = e.num("mesh.n", None)?;
        if n == 0 {
            return err("mesh.n: must be at least 1");
        }
        e.required("operator.s")?;
        let s = e.real("operator.s", None)?;
        if !(s > 0.0 && s < 1.0) {
            return err(format!("operator.s: must lie in (0, 1), got {s}"));
        }

        let weight = match e.get("weight.kind").unwrap_or("constant") {
            "constant" => WeightSpec::Constant {
                value: e.positive("weight.value", Some(1.0))?,
            },
            "table" => {
                let values = reals("weight.values", e.required("weight.values")?)?;
                if values.len() != n {
                    return err(format!("weight.values: expected {n} nodal values, got {}", values.len()));
                }
                if values.iter().any(|v| *v <= 0.0) {
                    return err("weight.values: all values must be positive");
                }
                WeightSpec::Table { values }
            }
            "bump" => {
                let height = e.real("weight.height", Some(1.0))?;
                if height < 0.0 {
                    return err("weight.height: must be nonnegative");
                }
                WeightSpec::Bump {
                    center: e.real("weight.center", Some(0.5 * (a + b)))?,
                    radius: e.positive("weight.radius", Some(0.25 * (b - a)))?,
                    height,
                }
            }
            "ramp" => {
                let slope = e.real("weight.slope", Some(1.0))?;
                if slope <= -1.0 {
                    return err("weight.slope: must exceed -1 so the weight stays positive");
                }
                WeightSpec::Ramp { slope }
            }
            other => return err(format!("weight.kind: unknown kind `{other}`")),
        };

        let k: usize = e.num("reaction.k", Some(2))?;
        if k == 0 {
            return err("reaction.k: must be at least 1");
        }
        let h: usize = e.num("reaction.h", Some(1))?;
        let kind = e.get("reaction.kind").unwrap_or("example_h2");
        let reaction = match kind {
            "example_h1" => {
                if h == 0 || h >= k {
                    return err(format!("reaction.h: need 1 <= h < k, got h={h}, k={k}"));
                }
                ReactionSpec::ExampleH1 {
                    mu: SpectralExpr::parse("reaction.mu", e.required("reaction.mu")?)?,
                    k,
                    h,
                }
            }
            "example_h2" => ReactionSpec::ExampleH2 {
                mu: SpectralExpr::parse("reaction.mu", e.get("reaction.mu").unwrap_or("0.5*lambda_1"))?,
                k,
            },
            "custom_table" => {
                let mut points = Vec::new();
                for pair in e.required("reaction.table")?.split(',') {
                    let Some((t, f)) = pair.split_once(':') else {
                        return err(format!("reaction.table: expected `t:f`, got `{}`", pair.trim()));
                    };
                    let t = reals("reaction.table", t)?[0];
                    let f = reals("reaction.table", f)?[0];
                    points.push((t, f));
                }
                ReactionSpec::CustomTable { points, k }
            }
            "linear" => ReactionSpec::Linear {
                slope: SpectralExpr::parse("reaction.slope", e.required("reaction.slope")?)?,
                k,
            },
            other => return err(format!("reaction.kind: unknown kind `{other}`")),
        };
        let hypotheses = match e.get("hypotheses.mode") {
            Some("h1") => HypothesisChoice::H1,
            Some("h2") => HypothesisChoice::H2,
            Some(other) => return err(format!("hypotheses.mode: expected h1 or h2, got `{other}`")),
            None if kind == "example_h1" => HypothesisChoice::H1,
            None => HypothesisChoice::H2,
        };
        if hypotheses == HypothesisChoice::H1 && (h == 0 || h >= k) {
            return err(format!("reaction.h: need 1 <= h < k, got h={h}, k={k}"));
        }

        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            tol: e.positive("solver.tol", Some(defaults.tol))?,
            max_iter: e.num("solver.max_iter", Some(defaults.max_iter))?,
            seed: e.num("solver.seed", Some(defaults.seed))?,
            n_starts: e.num("solver.n_starts", Some(defaults.n_starts))?,
            k,
            kernel_tol: e.positive("solver.kernel_tol", Some(defaults.kernel_tol))?,
            ..defaults
        };
        if solver.max_iter == 0 {
            return err("solver.max_iter: must be at least 1");
        }
        let pipeline = match e.get("solver.pipeline").unwrap_or("all") {
            "minimize" => Pipeline::Minimize,
            "mountain_pass" => Pipeline::MountainPass,
            "newton_multistart" => Pipeline::NewtonMultistart,
            "all" => Pipeline::All,
            other => return err(format!("solver.pipeline: unknown pipeline `{other}`")),
        };

        let k_max: usize = e.num("spectrum.k_max", Some(n.min(6)))?;
        if k_max == 0 || k_max > n {
            return err(format!("spectrum.k_max: must lie in 1..={n}, got {k_max}"));
        }
        let needed = (k + 1).max(h + 1).max(reaction.max_lambda_index());
        if needed > n {
            return err(format!("mesh.n={n} is too small: the reaction needs {needed} eigenvalues"));
        }
        let verify_trials: usize = e.num("verify.trials", Some(100))?;
        let inject_fault = match e.get("verify.inject_fault").unwrap_or("false") {
            "true" => true,
            "false" => false,
            other => return err(format!("verify.inject_fault: expected true or false, got `{other}`")),
        };

        Ok(RunConfig {
            domain: (a, b),
            n,
            s,
            weight,
            reaction,
            hypotheses,
            h,
            solver,
            pipeline,
            k_max,
            verify_trials,
            inject_fault,
            output_dir: e.get("output.dir").map(str::to_string),
        })
    }

    pub fn mesh(&self) -> fracmorse::Result<Mesh1D> {
        Mesh1D::new(self.domain.0, self.domain.1, self.n, self.s)
    }

    /// Number of discrete eigenvalues the reaction and its hypothesis check need.
    pub fn spectrum_needed(&self) -> usize {
        let k = self.reaction.k();
        let h = if self.hypotheses == HypothesisChoice::H1 { self.h } else { 0 };
        (k + 1).max(h + 1).max(self.reaction.max_lambda_index())
    }
}
