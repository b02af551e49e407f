//! Uniform interval meshes and nodal weight fields.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};

/// Uniform partition of `(a, b)` into `n + 1` cells with hat functions on the
/// `n` interior nodes. Every basis function vanishes outside `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    n: usize,
    s: f64,
}

impl Mesh1D {
    pub fn new(a: f64, b: f64, n: usize, s: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(precondition(format!("need a < b, got a={a}, b={b}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(precondition(format!("fractional order s={s} must lie in (0,1)")));
        }
        if n == 0 {
            return Err(precondition("mesh needs at least one interior node"));
        }
        Ok(Mesh1D { a, b, n, s })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of interior nodes (degrees of freedom).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n as f64 + 1.0)
    }

    pub fn n_cells(&self) -> usize {
        self.n + 1
    }

    /// Coordinate of node `i` for `i` in `0..=n+1`; nodes `0` and `n+1` are the endpoints.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n + 1 {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    /// Coordinates of the interior nodes `x_1..x_n`.
    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.node(i)).collect()
    }

    /// Same interval and order with a different number of interior nodes.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Mesh1D::new(self.a, self.b, n, self.s)
    }
}

/// Nodal values of a positive weight `η` on the interior nodes.
///
/// Between nodes the weight is interpolated linearly; on the two boundary
/// cells it is held at the value of the nearest interior node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    values: Vec<f64>,
    eta0: f64,
    label: String,
}

impl WeightField {
    pub fn new(values: Vec<f64>, eta0: f64, label: impl Into<String>) -> Result<Self> {
        if !(eta0 > 0.0) {
            return Err(precondition(format!("weight lower bound eta0={eta0} must be > 0")));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= eta0))
        {
            return Err(precondition(format!(
                "weight value {v} at node {} is below eta0={eta0}",
                i + 1
            )));
        }
        Ok(WeightField {
            values,
            eta0,
            label: label.into(),
        })
    }

    /// `η ≡ c`.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        WeightField::new(vec![c; n], c, format!("constant({c})"))
    }

    /// Samples `f` at the interior nodes; the certified bound is the sampled minimum.
    pub fn from_fn(mesh: &Mesh1D, label: &str, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = mesh.interior_nodes().into_iter().map(f).collect();
        let eta0 = values.iter().copied().fold(f64::INFINITY, f64::min);
        WeightField::new(values, eta0, label)
    }

    /// `1 + height · cos²` bump supported on `[center − radius, center + radius]`.
    pub fn bump(mesh: &Mesh1D, center: f64, radius: f64, height: f64) -> Result<Self> {
        let label = format!("bump(center={center},radius={radius},height={height})");
        WeightField::from_fn(mesh, &label, |x| 1.0 + bump_profile(x, center, radius) * height)
    }

    /// `1 + slope · (x − a)/(b − a)`.
    pub fn ramp(mesh: &Mesh1D, slope: f64) -> Result<Self> {
        let (a, b) = (mesh.a(), mesh.b());
        WeightField::from_fn(mesh, &format!("ramp({slope})"), |x| 1.0 + slope * (x - a) / (b - a))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightField::new(
            self.values.iter().map(|v| v * c).collect(),
            self.eta0 * c,
            format!("{}*{c}", self.label),
        )
    }

    /// Pointwise sum, used to build `η₂ = η₁ + bump`.
    pub fn plus(&self, other: &WeightField) -> Result<Self> {
        if self.len() != other.len() {
            return Err(precondition("weight fields have different lengths"));
        }
        WeightField::new(
            self.values.iter().zip(&other.values).map(|(x, y)| x + y).collect(),
            self.eta0 + other.eta0,
            format!("{}+{}", self.label, other.label),
        )
    }

    /// Nodal value including the constant extension to the endpoints
    /// (`i` in `0..=n+1`).
    pub(crate) fn extended(&self, i: usize) -> f64 {
        let n = self.values.len();
        self.values[i.clamp(1, n) - 1]
    }
}

/// Smooth `cos²` bump with unit height.
pub fn bump_profile(x: f64, center: f64, radius: f64) -> f64 {
    let r = (x - center) / radius;
    if r.abs() >= 1.0 {
        0.0
    } else {
        let c = (0.5 * std::f64::consts::PI * r).cos();
        c * c
    }
}
