//! Gauss-Legendre rules on reference intervals.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule, computed by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess for the i-th root on [-1, 1].
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map to [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.5;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = hi - lo;
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(lo + len * t);
        }
        acc * len
    }
}

/// Adaptive bisection with a 10/20-point Gauss pair; returns the estimate and
/// whether every accepted piece met `tol` (absolute, split by length).
pub fn integrate_adaptive(lo: f64, hi: f64, tol: f64, f: &impl Fn(f64) -> f64) -> (f64, bool) {
    let coarse = GaussRule::new(10);
    let fine = GaussRule::new(20);
    fn step(
        lo: f64,
        hi: f64,
        tol: f64,
        depth: usize,
        f: &impl Fn(f64) -> f64,
        coarse: &GaussRule,
        fine: &GaussRule,
    ) -> (f64, bool) {
        let c = coarse.integrate(lo, hi, f);
        let g = fine.integrate(lo, hi, f);
        if (g - c).abs() <= tol || depth == 0 {
            return (g, (g - c).abs() <= tol);
        }
        let mid = 0.5 * (lo + hi);
        let (l, okl) = step(lo, mid, 0.5 * tol, depth - 1, f, coarse, fine);
        let (r, okr) = step(mid, hi, 0.5 * tol, depth - 1, f, coarse, fine);
        (l + r, okl && okr)
    }
    step(lo, hi, tol, 40, f, &coarse, &fine)
}

/// Value and derivative of the Legendre polynomial `P_n` at `z`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
