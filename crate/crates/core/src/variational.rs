//! Discrete energy `φ(u) = ½ uᵀAu − ∫ F(x, u_h)`, its derivatives, and
//! solvers that locate and classify critical points.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SymmetricTridiagonal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::OperatorPair;
use crate::error::{precondition, Error, Result};
use crate::mesh::Mesh1D;
use crate::quadrature::GaussRule;
use crate::reaction::SharedReaction;
use crate::spectral::solve_pencil;

/// Gauss points per cell (and per kink-free piece of a cell).
pub const CELL_QUAD_ORDER: usize = 4;
/// Nodal magnitude below which a value counts as zero for sign classes.
pub const SIGN_TOL: f64 = 1e-10;

/// Energy of a reaction on a mesh. The reaction integral uses the unweighted
/// mass structure: `CELL_QUAD_ORDER`-point Gauss on every piece of a cell
/// between crossings of the reaction's kinks by the linear interpolant.
#[derive(Clone)]
pub struct EnergyModel {
    pub ops: OperatorPair,
    pub reaction: SharedReaction,
    rule: GaussRule,
    a_chol: Cholesky<f64, nalgebra::Dyn>,
    scale: f64,
}

impl EnergyModel {
    pub fn new(ops: OperatorPair, reaction: SharedReaction) -> Result<Self> {
        let a_chol = Cholesky::new(ops.a.clone()).ok_or(Error::NotPositiveDefinite("A"))?;
        let scale = spectral_norm_estimate(&ops.a);
        Ok(EnergyModel {
            ops,
            reaction,
            rule: GaussRule::new(CELL_QUAD_ORDER),
            a_chol,
            scale,
        })
    }

    /// Same operators, different reaction (e.g. a truncation).
    pub fn with_reaction(&self, reaction: SharedReaction) -> Self {
        EnergyModel {
            reaction,
            ..self.clone()
        }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.ops.mesh
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    /// `‖A‖₂`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn a_norm(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.ops.a * u)).max(0.0).sqrt()
    }

    /// `√(gᵀ A⁻¹ g)`.
    pub fn dual_norm(&self, g: &DVector<f64>) -> f64 {
        g.dot(&self.a_chol.solve(g)).max(0.0).sqrt()
    }

    /// `A⁻¹ g`, the gradient in the energy inner product.
    pub fn riesz(&self, g: &DVector<f64>) -> DVector<f64> {
        self.a_chol.solve(g)
    }

    fn check_len(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.n() {
            return Err(precondition(format!(
                "vector has length {}, mesh has {} interior nodes",
                u.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Visits every quadrature point: `(cell, x, t, ψ₀, ψ₁, weight)` with
    /// `ψ` the two local hat values and `t = u_h(x)`.
    fn for_each_point(&self, u: &DVector<f64>, mut visit: impl FnMut(usize, f64, f64, f64, f64, f64)) {
        let mesh = &self.ops.mesh;
        let (a, h, n) = (mesh.a(), mesh.h(), mesh.n());
        let kinks = &self.reaction.meta().kinks;
        let nodal = |i: usize| if i == 0 || i > n { 0.0 } else { u[i - 1] };
        let mut cuts: Vec<f64> = Vec::with_capacity(kinks.len() + 2);
        for c in 0..mesh.n_cells() {
            let (u0, u1) = (nodal(c), nodal(c + 1));
            cuts.clear();
            cuts.push(0.0);
            for &k in kinks {
                if (u0 - k) * (u1 - k) < 0.0 {
                    cuts.push((k - u0) / (u1 - u0));
                }
            }
            cuts.push(1.0);
            cuts.sort_by(f64::total_cmp);
            for piece in cuts.windows(2) {
                let (lo, hi) = (piece[0], piece[1]);
                let len = hi - lo;
                if len <= 0.0 {
                    continue;
                }
                for (q, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
                    let tau = lo + len * q;
                    let x = a + (c as f64 + tau) * h;
                    let t = u0 * (1.0 - tau) + u1 * tau;
                    visit(c, x, t, 1.0 - tau, tau, w * len * h);
                }
            }
        }
    }

    /// `∫ F(x, u_h)`.
    pub fn reaction_integral(&self, u: &DVector<f64>) -> Result<f64> {
        self.check_len(u)?;
        let mut acc = 0.0;
        self.for_each_point(u, |_, x, t, _, _, w| acc += w * self.reaction.primitive(x, t));
        if !acc.is_finite() {
            return Err(Error::NumericalDomain("reaction primitive"));
        }
        Ok(acc)
    }

    pub fn energy(&self, u: &DVector<f64>) -> Result<f64> {
        let quad = self.reaction_integral(u)?;
        Ok(0.5 * u.dot(&(&self.ops.a * u)) - quad)
    }

    /// `b(u)_i = ∫ f(x, u_h) φ_i`.
    pub fn load(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(u)?;
        let n = self.n();
        let mut b = DVector::<f64>::zeros(n);
        self.for_each_point(u, |c, x, t, p0, p1, w| {
            let v = w * self.reaction.f(x, t);
            if c >= 1 {
                b[c - 1] += v * p0;
            }
            if c < n {
                b[c] += v * p1;
            }
        });
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain("reaction"));
        }
        Ok(b)
    }

    pub fn gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.ops.a * u - self.load(u)?)
    }

    /// `C(u)_ij = ∫ f′(x, u_h) φ_i φ_j` (tridiagonal).
    pub fn reaction_hessian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(u)?;
        let n = self.n();
        let mut cm = DMatrix::<f64>::zeros(n, n);
        let mut bad = false;
        self.for_each_point(u, |c, x, t, p0, p1, w| {
            let d = w * self.reaction.df(x, t);
            bad |= !d.is_finite();
            if c >= 1 {
                cm[(c - 1, c - 1)] += d * (p0 * p0);
            }
            if c < n {
                cm[(c, c)] += d * (p1 * p1);
            }
            if c >= 1 && c < n {
                let off = d * (p0 * p1);
                cm[(c - 1, c)] += off;
                cm[(c, c - 1)] += off;
            }
        });
        if bad {
            return Err(Error::NumericalDomain("reaction derivative"));
        }
        Ok(cm)
    }

    pub fn hessian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.ops.a - self.reaction_hessian(u)?)
    }

    /// Euclidean and dual norms of the gradient.
    pub fn residuals(&self, u: &DVector<f64>) -> Result<(f64, f64)> {
        let g = self.gradient(u)?;
        Ok((g.norm(), self.dual_norm(&g)))
    }
}

/// `‖A‖₂` of a symmetric positive semidefinite matrix (its largest eigenvalue).
pub fn spectral_norm_estimate(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().symmetric_eigenvalues().max()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    /// Dual-norm residual at which a critical point is accepted.
    pub tol: f64,
    /// Iteration budget of descent and Newton loops.
    pub max_iter: usize,
    pub seed: u64,
    pub n_starts: usize,
    /// Starts of the multistart search are drawn from `span{e_1..e_{k+1}}`.
    pub k: usize,
    pub kernel_tol: f64,
    pub path_nodes: usize,
    pub path_max_iter: usize,
    /// Transverse residual of the path maximum (relative to its norm) at which
    /// the path search hands over to Newton.
    pub path_handoff_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 200,
            seed: 0,
            n_starts: 64,
            k: 2,
            kernel_tol: 1e-6,
            path_nodes: 41,
            path_max_iter: 2000,
            path_handoff_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    Zero,
    Positive,
    Negative,
    Mixed,
}

pub fn sign_class(u: &DVector<f64>) -> SignClass {
    if u.is_empty() || u.amax() <= SIGN_TOL {
        SignClass::Zero
    } else if u.min() >= -SIGN_TOL {
        SignClass::Positive
    } else if u.max() <= SIGN_TOL {
        SignClass::Negative
    } else {
        SignClass::Mixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Minimizer,
    MountainPass,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseData {
    pub morse_index: usize,
    pub nullity: usize,
    /// Absolute threshold `kernel_tol · ‖A‖₂`.
    pub threshold: f64,
    /// Set when an eigenvalue lies close to `±threshold`; the counts then come
    /// from a full eigensolve.
    pub warning: Option<String>,
}

/// Number of eigenvalues below `sigma` of a symmetric tridiagonal matrix.
fn sturm_count(diag: &[f64], off: &[f64], sigma: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - sigma - b2 / d;
        if d == 0.0 {
            d = -tiny;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Morse index and nullity of `hessian(u)` by Sturm counts on its
/// tridiagonal form, with an eigensolve when the spectrum crowds the threshold.
pub fn morse_data(model: &EnergyModel, u: &DVector<f64>, kernel_tol: f64) -> Result<MorseData> {
    if !(kernel_tol > 0.0) {
        return Err(precondition("kernel_tol must be positive"));
    }
    let h = model.hessian(u)?;
    let threshold = kernel_tol * model.scale();
    let tri = SymmetricTridiagonal::new(h.clone());
    let (diag, off) = tri.unpack_tridiagonal();
    let (diag, off): (Vec<f64>, Vec<f64>) = (diag.iter().copied().collect(), off.iter().copied().collect());
    let below = |sigma: f64| sturm_count(&diag, &off, sigma);
    let morse_index = below(-threshold);
    let upto = below(threshold);
    let crowded = below(-2.0 * threshold) != below(-0.5 * threshold)
        || below(0.5 * threshold) != below(2.0 * threshold);
    if !crowded {
        return Ok(MorseData {
            morse_index,
            nullity: upto - morse_index,
            threshold,
            warning: None,
        });
    }
    let eig = SymmetricEigen::new(h).eigenvalues;
    let morse_index = eig.iter().filter(|v| **v < -threshold).count();
    let nullity = eig.iter().filter(|v| v.abs() <= threshold).count();
    let mut near: Vec<f64> = eig
        .iter()
        .copied()
        .filter(|v| v.abs() >= 0.5 * threshold && v.abs() <= 2.0 * threshold)
        .collect();
    near.sort_by(f64::total_cmp);
    Ok(MorseData {
        morse_index,
        nullity,
        threshold,
        warning: Some(format!(
            "Hessian eigenvalues {near:?} lie within a factor 2 of the kernel threshold {threshold:.3e}"
        )),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    #[serde(skip)]
    pub u: DVector<f64>,
    pub energy: f64,
    pub residual_euclid: f64,
    pub residual_dual: f64,
    pub a_norm: f64,
    pub morse_index: usize,
    pub nullity: usize,
    pub degeneracy_warning: Option<String>,
    pub sign_class: SignClass,
    pub provenance: Provenance,
    pub min_value: f64,
    pub max_value: f64,
}

impl CriticalPoint {
    pub fn classify(model: &EnergyModel, u: DVector<f64>, provenance: Provenance, kernel_tol: f64) -> Result<Self> {
        let (residual_euclid, residual_dual) = model.residuals(&u)?;
        let morse = morse_data(model, &u, kernel_tol)?;
        let warning = match (morse.warning, morse.nullity) {
            (Some(w), _) => Some(w),
            (None, 0) => None,
            (None, k) => Some(format!("degenerate critical point: nullity {k}")),
        };
        Ok(CriticalPoint {
            energy: model.energy(&u)?,
            residual_euclid,
            residual_dual,
            a_norm: model.a_norm(&u),
            morse_index: morse.morse_index,
            nullity: morse.nullity,
            degeneracy_warning: warning,
            sign_class: sign_class(&u),
            provenance,
            min_value: if u.is_empty() { 0.0 } else { u.min() },
            max_value: if u.is_empty() { 0.0 } else { u.max() },
            u,
        })
    }

    pub fn is_trivial(&self) -> bool {
        self.sign_class == SignClass::Zero
    }
}

const ARMIJO_C: f64 = 1e-4;

/// Descent on `φ`: Newton steps while the Hessian is positive definite and
/// the step passes the Armijo test, otherwise the energy gradient `−A⁻¹∇φ`
/// with Armijo backtracking.
pub fn minimize(model: &EnergyModel, u0: &DVector<f64>, cfg: &SolverConfig) -> Result<CriticalPoint> {
    model.check_len(u0)?;
    let mut u = u0.clone();
    let mut phi = model.energy(&u)?;
    let mut residual = f64::INFINITY;
    let budget = cfg.max_iter.max(1) * 25;
    let blowup = 1e8 * (1.0 + model.a_norm(u0));
    for _ in 0..budget {
        let g = model.gradient(&u)?;
        let d = model.riesz(&g);
        let slope = g.dot(&d);
        residual = slope.max(0.0).sqrt();
        if residual <= cfg.tol {
            return CriticalPoint::classify(model, u, Provenance::Minimizer, cfg.kernel_tol);
        }
        let h = model.hessian(&u)?;
        let mut moved = false;
        if let Some(ch) = Cholesky::new(h) {
            let step = -ch.solve(&g);
            let trial = &u + &step;
            let phi_t = model.energy(&trial)?;
            let slope_n = g.dot(&step);
            let accept = phi_t <= phi + ARMIJO_C * slope_n
                || model.dual_norm(&model.gradient(&trial)?) < 0.5 * residual;
            if accept {
                u = trial;
                phi = phi_t;
                moved = true;
            }
        }
        if !moved {
            let mut alpha = 1.0;
            for _ in 0..60 {
                let trial = &u - &d * alpha;
                let phi_t = model.energy(&trial)?;
                if phi_t <= phi - ARMIJO_C * alpha * slope {
                    u = trial;
                    phi = phi_t;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if !moved || model.a_norm(&u) > blowup {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: budget,
        residual,
    })
}

/// Damped Newton on `∇φ = 0` with the dual residual as merit function.
pub fn newton(model: &EnergyModel, u0: &DVector<f64>, cfg: &SolverConfig) -> Result<DVector<f64>> {
    model.check_len(u0)?;
    let mut u = u0.clone();
    let mut g = model.gradient(&u)?;
    let mut r = model.dual_norm(&g);
    let shift = 1e-8 * model.scale();
    let blowup = 1e8 * (1.0 + model.a_norm(u0));
    for it in 0..cfg.max_iter {
        if r <= cfg.tol {
            return Ok(u);
        }
        let h = model.hessian(&u)?;
        let mut step = h.clone().lu().solve(&(-&g));
        if step.as_ref().is_none_or(|s| s.iter().any(|v| !v.is_finite())) {
            let shifted = h + DMatrix::identity(u.len(), u.len()) * shift;
            step = shifted.lu().solve(&(-&g));
        }
        let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
            return Err(Error::NonConvergence { iterations: it, residual: r });
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = &u + &step * alpha;
            let g_t = model.gradient(&trial)?;
            let r_t = model.dual_norm(&g_t);
            if r_t < r {
                u = trial;
                g = g_t;
                r = r_t;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || model.a_norm(&u) > blowup {
            return Err(Error::NonConvergence { iterations: it + 1, residual: r });
        }
    }
    if r <= cfg.tol {
        Ok(u)
    } else {
        Err(Error::NonConvergence {
            iterations: cfg.max_iter,
            residual: r,
        })
    }
}

/// Radius and sampled minimum of `φ` on the sphere `‖u‖_A = r` separating
/// the origin from `endpoint`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RingCheck {
    pub radius: f64,
    pub level: f64,
    pub samples: usize,
}

/// Sample directions for the ring: the endpoint, the lowest unit-mass
/// eigenvectors with both signs, random combinations of them and random
/// nodal vectors.
fn ring_directions(model: &EnergyModel, endpoint: &DVector<f64>, seed: u64) -> Result<Vec<DVector<f64>>> {
    let n = model.n();
    let modes = n.min(8);
    let eig = solve_pencil(&model.ops.a, &model.ops.m, modes, "unit".into())?;
    let mut dirs = vec![endpoint.clone()];
    for k in 0..modes {
        let e = eig.vectors.column(k).into_owned();
        dirs.push(-&e);
        dirs.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151_7a7a);
    for _ in 0..48 {
        let c = DVector::<f64>::from_fn(modes, |_, _| StandardNormal.sample(&mut rng));
        dirs.push(&eig.vectors * c);
    }
    for _ in 0..16 {
        dirs.push(DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)));
    }
    Ok(dirs)
}

/// Descent on the sphere `‖u‖_A = radius` from `u`, by the projected
/// energy gradient with Armijo backtracking and radial retraction.
fn sphere_descent(model: &EnergyModel, u: &DVector<f64>, radius: f64, steps: usize) -> Result<f64> {
    let onto = |v: DVector<f64>| {
        let nv = model.a_norm(&v);
        v * (radius / nv)
    };
    let mut u = onto(u.clone());
    let mut e = model.energy(&u)?;
    for _ in 0..steps {
        let d = model.riesz(&model.gradient(&u)?);
        // remove the radial part: ⟨d, u⟩_A = gᵀu
        let radial = d.dot(&(&model.ops.a * &u)) / (radius * radius);
        let d = d - &u * radial;
        let slope = d.dot(&(&model.ops.a * &d));
        if !(slope > 1e-30 * radius * radius) {
            break;
        }
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = onto(&u - &d * alpha);
            let et = model.energy(&trial)?;
            if et <= e - ARMIJO_C * alpha * slope {
                u = trial;
                e = et;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(e)
}

/// Largest radius `‖endpoint‖_A · 2^{−j}` (`j ≥ 1`) on which the energy
/// minimum, sampled and then refined by descent on the sphere from the best
/// samples, exceeds `max(φ(0), φ(endpoint))`.
pub fn ring_check(model: &EnergyModel, endpoint: &DVector<f64>, seed: u64) -> Result<RingCheck> {
    let dirs = ring_directions(model, endpoint, seed)?;
    let floor = model.energy(endpoint)?.max(model.energy(&DVector::zeros(model.n()))?);
    let full = model.a_norm(endpoint);
    for j in 1..=30 {
        let radius = full * 0.5f64.powi(j);
        let mut samples: Vec<(f64, DVector<f64>)> = Vec::with_capacity(dirs.len());
        for d in &dirs {
            let nd = model.a_norm(d);
            if nd > 0.0 {
                let p = d * (radius / nd);
                samples.push((model.energy(&p)?, p));
            }
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut level = samples.first().map_or(f64::INFINITY, |s| s.0);
        for (_, p) in samples.iter().take(4) {
            level = level.min(sphere_descent(model, p, radius, 200)?);
        }
        if level > floor {
            return Ok(RingCheck {
                radius,
                level,
                samples: dirs.len(),
            });
        }
    }
    Err(Error::Geometry("no sampled ring around the origin rises above the endpoint levels".into()))
}

/// Re-spaces the path nodes at equal `A`-norm arc length.
fn reparametrize(model: &EnergyModel, path: &mut [DVector<f64>]) {
    let m = path.len();
    let mut cum = vec![0.0; m];
    for j in 1..m {
        cum[j] = cum[j - 1] + model.a_norm(&(&path[j] - &path[j - 1]));
    }
    let total = cum[m - 1];
    if !(total > 0.0) {
        return;
    }
    let old = path.to_vec();
    let mut seg = 0;
    for (j, node) in path.iter_mut().enumerate().take(m - 1).skip(1) {
        let target = total * j as f64 / (m - 1) as f64;
        while seg + 1 < m - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        *node = &old[seg] * (1.0 - w) + &old[seg + 1] * w;
    }
}

/// Golden-section maximization of `φ` on the polyline `p_{j−1} p_j p_{j+1}`.
fn refine_path_max(model: &EnergyModel, path: &[DVector<f64>], j: usize) -> Result<DVector<f64>> {
    let point = |s: f64| -> DVector<f64> {
        if s <= 0.0 {
            &path[j] * (1.0 + s) - &path[j - 1] * s
        } else {
            &path[j] * (1.0 - s) + &path[j + 1] * s
        }
    };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = model.energy(&point(x1))?;
    let mut f2 = model.energy(&point(x2))?;
    for _ in 0..60 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = model.energy(&point(x1))?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = model.energy(&point(x2))?;
        }
    }
    Ok(point(0.5 * (lo + hi)))
}

/// Outcome of the path search, kept for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MountainPassRun {
    pub ring: RingCheck,
    pub path_iterations: usize,
    pub path_max_energy: f64,
    pub handoff_residual: f64,
}

/// Path-deformation minimax between `0` and `endpoint`, finished by Newton
/// from the refined path maximum.
pub fn mountain_pass(model: &EnergyModel, endpoint: &DVector<f64>, cfg: &SolverConfig) -> Result<CriticalPoint> {
    mountain_pass_run(model, endpoint, cfg).map(|(cp, _)| cp)
}

pub fn mountain_pass_run(
    model: &EnergyModel,
    endpoint: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(CriticalPoint, MountainPassRun)> {
    model.check_len(endpoint)?;
    if cfg.path_nodes < 3 {
        return Err(precondition("a path needs at least three nodes"));
    }
    let end_energy = model.energy(endpoint)?;
    if !(end_energy < 0.0) {
        return Err(Error::Geometry(format!(
            "mountain pass needs energy(endpoint) < 0, got {end_energy:.6e}"
        )));
    }
    let ring = ring_check(model, endpoint, cfg.seed)?;
    let m = cfg.path_nodes;
    let mut path: Vec<DVector<f64>> = (0..m).map(|j| endpoint * (j as f64 / (m - 1) as f64)).collect();
    let mut energies: Vec<f64> = path.iter().map(|p| model.energy(p)).collect::<Result<_>>()?;
    let mut iterations = 0;
    let mut handoff_residual;
    let mut jmax;
    loop {
        jmax = (1..m - 1).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).unwrap_or(1);
        if !(energies[jmax] > energies[0].max(energies[m - 1])) {
            return Err(Error::Geometry(
                "path maximum collapsed onto an endpoint level".into(),
            ));
        }
        // transverse part of the energy gradient at the maximum
        let tangent = &path[jmax + 1] - &path[jmax - 1];
        let tn = model.a_norm(&tangent);
        let g = model.gradient(&path[jmax])?;
        let d = model.riesz(&g);
        let along = if tn > 0.0 { g.dot(&tangent) / tn } else { 0.0 };
        let transverse = (g.dot(&d) - along * along).max(0.0).sqrt();
        handoff_residual = transverse / model.a_norm(&path[jmax]).max(1.0);
        if handoff_residual <= cfg.path_handoff_tol || iterations >= cfg.path_max_iter {
            break;
        }
        iterations += 1;
        for j in 1..m - 1 {
            let g = model.gradient(&path[j])?;
            let d = model.riesz(&g);
            let slope = g.dot(&d);
            if !(slope > 0.0) {
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial = &path[j] - &d * alpha;
                let e = model.energy(&trial)?;
                if e <= energies[j] - ARMIJO_C * alpha * slope {
                    path[j] = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
        reparametrize(model, &mut path);
        energies = path.iter().map(|p| model.energy(p)).collect::<Result<_>>()?;
    }
    if iterations >= cfg.path_max_iter && handoff_residual > cfg.path_handoff_tol {
        return Err(Error::NonConvergence {
            iterations,
            residual: handoff_residual,
        });
    }
    let path_max_energy = energies[jmax];
    let start = refine_path_max(model, &path, jmax)?;
    let u = newton(model, &start, cfg)?;
    let cp = CriticalPoint::classify(model, u, Provenance::MountainPass, cfg.kernel_tol)?;
    if cp.is_trivial() {
        return Err(Error::Geometry("path search converged to the origin".into()));
    }
    if cp.energy < ring.level {
        return Err(Error::Geometry(format!(
            "critical level {:.6e} below the ring level {:.6e}",
            cp.energy, ring.level
        )));
    }
    Ok((
        cp,
        MountainPassRun {
            ring,
            path_iterations: iterations,
            path_max_energy,
            handoff_residual,
        },
    ))
}

/// Whether two nodal vectors coincide up to `1e-4` relative in the `A`-norm.
pub fn same_point(model: &EnergyModel, u: &DVector<f64>, v: &DVector<f64>) -> bool {
    let d = model.a_norm(&(u - v));
    d <= 1e-4 * model.a_norm(u).max(model.a_norm(v)) || d <= SIGN_TOL
}

/// Appends the points of `found` not already in `into`.
pub fn merge_distinct(model: &EnergyModel, into: &mut Vec<CriticalPoint>, found: impl IntoIterator<Item = CriticalPoint>) {
    for cp in found {
        if !into.iter().any(|q| same_point(model, &q.u, &cp.u)) {
            into.push(cp);
        }
    }
}

/// Magnitudes of the multistart guesses, in units of `‖e_1‖_A`.
pub const START_MAGNITUDES: [f64; 3] = [0.1, 1.0, 10.0];

/// Initial guesses: random combinations of the lowest `k + 1` unit-mass
/// eigenvectors, cycled through [`START_MAGNITUDES`].
pub fn multistart_guesses(model: &EnergyModel, n_starts: usize, seed: u64, k: usize) -> Result<Vec<DVector<f64>>> {
    let n = model.n();
    let modes = (k + 1).min(n);
    let eig = solve_pencil(&model.ops.a, &model.ops.m, modes, "unit".into())?;
    let unit = model.a_norm(&eig.vectors.column(0).into_owned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_starts);
    for i in 0..n_starts {
        let c = DVector::<f64>::from_fn(modes, |_, _| StandardNormal.sample(&mut rng));
        let u = &eig.vectors * c;
        let nu = model.a_norm(&u);
        let target = START_MAGNITUDES[i % START_MAGNITUDES.len()] * unit;
        out.push(if nu > 0.0 { u * (target / nu) } else { u });
    }
    Ok(out)
}

/// Damped Newton from every guess (in parallel); converged points are
/// classified and deduplicated in start order.
pub fn newton_multistart(model: &EnergyModel, n_starts: usize, seed: u64, cfg: &SolverConfig) -> Result<Vec<CriticalPoint>> {
    let guesses = multistart_guesses(model, n_starts, seed, cfg.k)?;
    let converged: Vec<Option<DVector<f64>>> = guesses
        .par_iter()
        .map(|u0| newton(model, u0, cfg).ok())
        .collect();
    let mut out: Vec<CriticalPoint> = Vec::new();
    for u in converged.into_iter().flatten() {
        if out.iter().any(|q| same_point(model, &q.u, &u)) {
            continue;
        }
        out.push(CriticalPoint::classify(model, u, Provenance::Newton, cfg.kernel_tol)?);
    }
    Ok(out)
}

/// Worst relative errors of the derivative checks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DerivativeCheck {
    pub probes: usize,
    pub step: f64,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
}

/// Compares `∇φ·v` with `(φ(u+εv) − φ(u−εv))/2ε` and `H(u)v` with
/// `(∇φ(u+εv) − ∇φ(u−εv))/2ε` at `probes` random pairs. States `u` are random
/// combinations of the lowest eight unit-mass eigenvectors scaled to
/// `max|u| = amplitude` (rough nodal noise would leave the per-cell Gauss
/// rule unresolved), with nodal values kept `1e-3` away from the reaction's
/// kinks; directions `v` are nodal noise. Errors are relative to `|∇φ·v|`
/// and `‖H v‖`.
pub fn derivative_check(model: &EnergyModel, probes: usize, amplitude: f64, seed: u64) -> Result<DerivativeCheck> {
    let n = model.n();
    let step = 1e-5;
    let kinks = model.reaction.meta().kinks.clone();
    let modes = n.min(8);
    let eig = solve_pencil(&model.ops.a, &model.ops.m, modes, "unit".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_g: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    for _ in 0..probes {
        let c = DVector::<f64>::from_fn(modes, |_, _| StandardNormal.sample(&mut rng));
        let mut u = &eig.vectors * c;
        u *= amplitude / u.amax();
        for v in u.iter_mut() {
            for &k in &kinks {
                if (*v - k).abs() < 1e-3 {
                    *v = k + 2e-3;
                }
            }
        }
        let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let g = model.gradient(&u)?;
        let up = &u + &v * step;
        let um = &u - &v * step;
        let fd = (model.energy(&up)? - model.energy(&um)?) / (2.0 * step);
        let gv = g.dot(&v);
        max_g = max_g.max((fd - gv).abs() / gv.abs());
        let hv = model.hessian(&u)? * &v;
        let fdh = (model.gradient(&up)? - model.gradient(&um)?) / (2.0 * step);
        max_h = max_h.max((fdh - &hv).norm() / hv.norm());
    }
    Ok(DerivativeCheck {
        probes,
        step,
        max_gradient_error: max_g,
        max_hessian_error: max_h,
    })
}
