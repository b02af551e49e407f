//! Weighted eigenpairs `A e = λ M_η e` and checks of their variational
//! characterizations.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::OperatorPair;
use crate::error::{precondition, Error, Result};
use crate::mesh::{Mesh1D, WeightField};

/// Relative gap below which neighbouring eigenvalues are treated as one cluster.
pub const CLUSTER_GAP: f64 = 1e-8;
/// Residual bound `‖A e − λ M_η e‖ ≤ RESIDUAL_TOL · ‖A‖`.
pub const RESIDUAL_TOL: f64 = 1e-9;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Lowest eigenpairs, ascending, with `‖e_k‖_η = 1` and the largest-magnitude
/// entry of every eigenvector positive.
#[derive(Debug, Clone)]
pub struct EigenSet {
    pub lambdas: Vec<f64>,
    /// Column `k` holds `e_{k+1}`.
    pub vectors: DMatrix<f64>,
    /// `‖A e − λ M_η e‖₂` per mode.
    pub residuals: Vec<f64>,
    /// `‖e‖_η` after normalization (one up to rounding).
    pub eta_norms: Vec<f64>,
    pub eta_label: String,
}

impl EigenSet {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `λ_k`, one-based as in the usual numbering.
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    /// `e_k`, one-based.
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k - 1).into_owned()
    }

    /// `max_{j,k} |e_jᵀ M e_k − δ_jk|`.
    pub fn orthonormality_defect(&self, m: &DMatrix<f64>) -> f64 {
        let g = self.vectors.transpose() * m * &self.vectors;
        let mut worst: f64 = 0.0;
        for j in 0..g.nrows() {
            for k in 0..g.ncols() {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g[(j, k)] - target).abs());
            }
        }
        worst
    }

    /// Indices `(first, last)` (one-based, inclusive) of eigenvalue clusters
    /// with more than one member.
    pub fn clusters(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.lambdas.len() {
            let split = k == self.lambdas.len()
                || (self.lambdas[k] - self.lambdas[k - 1]) > CLUSTER_GAP * self.lambdas[k].abs();
            if split {
                if k - start > 1 {
                    out.push((start + 1, k));
                }
                start = k;
            }
        }
        out
    }
}

/// Infinity norm, an upper bound for the spectral norm of a symmetric matrix.
pub fn norm_bound(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// First `k_max` eigenpairs of the pencil `(A, M_η)` by Cholesky reduction
/// to a standard symmetric problem.
pub fn solve_eigen(ops: &OperatorPair, k_max: usize) -> Result<EigenSet> {
    solve_pencil(&ops.a, &ops.m_eta, k_max, ops.eta_label())
}

pub(crate) fn solve_pencil(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    k_max: usize,
    eta_label: String,
) -> Result<EigenSet> {
    let n = a.nrows();
    if k_max == 0 || k_max > n {
        return Err(precondition(format!("k_max={k_max} must lie in 1..={n}")));
    }
    let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite("M_eta"))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(a)
        .ok_or(Error::NotPositiveDefinite("M_eta"))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NotPositiveDefinite("M_eta"))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or_else(|| {
        Error::Eigensolver {
            iterations: EIGEN_MAX_SWEEPS,
            reason: "implicit QR sweeps exhausted".into(),
        }
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let mut lambdas = Vec::with_capacity(k_max);
    let mut vectors = DMatrix::zeros(n, k_max);
    let mut residuals = Vec::with_capacity(k_max);
    let mut eta_norms = Vec::with_capacity(k_max);
    let a_norm = norm_bound(a);
    for (col, &idx) in order.iter().take(k_max).enumerate() {
        let lambda = eig.eigenvalues[idx];
        let y = eig.eigenvectors.column(idx).into_owned();
        let mut e = lt
            .solve_upper_triangular(&y)
            .ok_or(Error::NotPositiveDefinite("M_eta"))?;
        let norm = e.dot(&(m * &e)).sqrt();
        e /= norm;
        if e[sign_anchor(&e)] < 0.0 {
            e.neg_mut();
        }
        let r = (a * &e - m * &e * lambda).norm();
        if !(r <= RESIDUAL_TOL * a_norm) {
            return Err(Error::Eigensolver {
                iterations: EIGEN_MAX_SWEEPS,
                reason: format!("mode {} residual {r:.3e} exceeds {:.1e}·‖A‖", col + 1, RESIDUAL_TOL),
            });
        }
        eta_norms.push(e.dot(&(m * &e)).sqrt());
        residuals.push(r);
        lambdas.push(lambda);
        vectors.set_column(col, &e);
    }
    Ok(EigenSet {
        lambdas,
        vectors,
        residuals,
        eta_norms,
        eta_label,
    })
}

/// Index of the entry fixing the sign: the largest in magnitude, where
/// near-ties (antisymmetric modes) go to the lowest index.
fn sign_anchor(e: &DVector<f64>) -> usize {
    let top = e.amax();
    e.iter().position(|v| v.abs() >= top * (1.0 - 1e-8)).unwrap_or(0)
}

/// `uᵀ A u / uᵀ M_η u`.
pub fn rayleigh_quotient(ops: &OperatorPair, u: &DVector<f64>) -> Result<f64> {
    if u.len() != ops.n() {
        return Err(precondition("vector length does not match the mesh"));
    }
    if u.iter().all(|v| *v == 0.0) {
        return Err(precondition("Rayleigh quotient of the zero vector"));
    }
    Ok(u.dot(&(&ops.a * u)) / u.dot(&(&ops.m_eta * u)))
}

/// Settings of the deflated Rayleigh minimization.
#[derive(Debug, Clone, Copy)]
pub struct DeflationOptions {
    pub max_iter: usize,
    /// Stationarity: `‖A x − ρ M_η x‖ ≤ tol · ‖A‖` for `‖x‖_η = 1`.
    pub tol: f64,
}

impl Default for DeflationOptions {
    fn default() -> Self {
        DeflationOptions {
            max_iter: 5_000,
            tol: 1e-11,
        }
    }
}

/// Minimizes the Rayleigh quotient over the `M_η`-orthogonal complement of
/// `e_1..e_{k−1}` (taken from `lower`).
///
/// Each step moves along the `A`-inner-product gradient `A⁻¹(A x − ρ M_η x)`,
/// projected onto the complement, with the step (and a momentum term along
/// the previous step) chosen by Rayleigh-Ritz on the spanned subspace.
pub fn deflated_minimize(
    ops: &OperatorPair,
    lower: &EigenSet,
    k: usize,
    restarts: usize,
    seed: u64,
    opts: DeflationOptions,
) -> Result<(f64, DVector<f64>)> {
    let n = ops.n();
    if k == 0 || k > n {
        return Err(precondition(format!("k={k} must lie in 1..={n}")));
    }
    if lower.len() < k - 1 {
        return Err(precondition(format!(
            "need e_1..e_{} but only {} eigenvectors are available",
            k - 1,
            lower.len()
        )));
    }
    let a = &ops.a;
    let m = &ops.m_eta;
    let deflate: DMatrix<f64> = lower.vectors.columns(0, k - 1).into_owned();
    let m_deflate = m * &deflate;
    let project = |v: &DVector<f64>| -> DVector<f64> {
        if k == 1 {
            v.clone()
        } else {
            v - &deflate * (m_deflate.transpose() * v)
        }
    };
    let a_chol = Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite("A"))?;
    let a_norm = norm_bound(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = f64::INFINITY;
    let mut total_iter = 0;

    for _ in 0..restarts.max(1) {
        let start = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let mut x = project(&start);
        let nx = x.dot(&(m * &x)).sqrt();
        if !(nx > 0.0) {
            continue;
        }
        x /= nx;
        let mut prev: Option<DVector<f64>> = None;
        for _ in 0..opts.max_iter {
            total_iter += 1;
            let ax = a * &x;
            let mx = m * &x;
            let rho = x.dot(&ax);
            let r = &ax - &mx * rho;
            last = r.norm() / a_norm;
            if last <= opts.tol {
                let x = project(&x);
                let x = &x / x.dot(&(m * &x)).sqrt();
                return Ok((rayleigh_quotient(ops, &x)?, x));
            }
            let w = project(&a_chol.solve(&r));
            let mut dirs = vec![x.clone(), w];
            if let Some(p) = prev.take() {
                dirs.push(p);
            }
            let basis = m_orthonormalize(&dirs, m);
            let ab = basis.transpose() * a * &basis;
            let ab = (&ab + ab.transpose()) * 0.5;
            let small = SymmetricEigen::new(ab);
            let imin = small.eigenvalues.imin();
            let coeff = small.eigenvectors.column(imin).into_owned();
            let mut x_new = project(&(&basis * coeff));
            x_new /= x_new.dot(&(m * &x_new)).sqrt();
            if x_new.dot(&(m * &x)) < 0.0 {
                x_new.neg_mut();
            }
            prev = Some(&x_new - &x);
            x = x_new;
        }
    }
    Err(Error::NonConvergence {
        iterations: total_iter,
        residual: last,
    })
}

/// Gram-Schmidt in the `M` inner product, dropping nearly dependent vectors.
fn m_orthonormalize(vs: &[DVector<f64>], m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let norm0 = v.dot(&(m * v)).sqrt();
        if !(norm0 > 0.0) {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&(m * &w));
                w -= q * c;
            }
        }
        let nw = w.dot(&(m * &w)).sqrt();
        if nw > 1e-10 * norm0 {
            out.push(w / nw);
        }
    }
    DMatrix::from_columns(&out)
}

/// Outcome of sampling the max-min characterization
/// `1/λ_k = sup_F inf_{u ∈ F, ‖u‖ = 1} uᵀ M_η u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CourantFischerReport {
    pub k: usize,
    pub trials: usize,
    pub target: f64,
    pub eigen_subspace_value: f64,
    pub attained_error: f64,
    pub max_sampled: f64,
    pub max_excess: f64,
    pub violations: usize,
    pub bound_tol: f64,
    pub attain_tol: f64,
    pub passed: bool,
}

/// `inf` over the unit `A`-sphere of `span(Q)` of `uᵀ M_η u`.
pub fn subspace_min_weighted_norm(ops: &OperatorPair, q: &DMatrix<f64>) -> Result<f64> {
    let qr = q.clone().qr();
    let q = qr.q();
    let aq = q.transpose() * &ops.a * &q;
    let mq = q.transpose() * &ops.m_eta * &q;
    let chol = Cholesky::new((&aq + aq.transpose()) * 0.5).ok_or(Error::NotPositiveDefinite("QᵀAQ"))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&mq).ok_or(Error::NotPositiveDefinite("QᵀAQ"))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NotPositiveDefinite("QᵀAQ"))?;
    let c = (&c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.min())
}

/// Samples `trials` `k`-dimensional subspaces (Gaussian ones and
/// perturbations of `span{e_1..e_k}`) and checks that none beats `1/λ_k`,
/// while the eigen-subspace attains it.
pub fn courant_fischer_check(
    ops: &OperatorPair,
    eig: &EigenSet,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<CourantFischerReport> {
    let n = ops.n();
    if k == 0 || k > n || k > eig.len() {
        return Err(precondition(format!(
            "k={k} must lie in 1..={} (mesh n={n}, {} eigenpairs)",
            n.min(eig.len()),
            eig.len()
        )));
    }
    let bound_tol = 1e-10;
    let attain_tol = 1e-8;
    let target = 1.0 / eig.lambda(k);
    let ek: DMatrix<f64> = eig.vectors.columns(0, k).into_owned();
    let eigen_subspace_value = subspace_min_weighted_norm(ops, &ek)?;
    let attained_error = (eigen_subspace_value - target).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_sampled = f64::NEG_INFINITY;
    let mut violations = 0;
    let scales: [f64; 4] = [0.0, 1e-3, 1e-2, 1e-1];
    for t in 0..trials {
        let g = DMatrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
        // every other trial hugs the optimal subspace
        let q = if t % 2 == 0 {
            g
        } else {
            let eps = scales[(t / 2) % scales.len()].max(1e-4);
            let col_scale = ek.column(0).norm();
            &ek + g * (eps * col_scale)
        };
        let v = subspace_min_weighted_norm(ops, &q)?;
        max_sampled = max_sampled.max(v);
        if v > target + bound_tol {
            violations += 1;
        }
    }
    let max_excess = max_sampled - target;
    Ok(CourantFischerReport {
        k,
        trials,
        target,
        eigen_subspace_value,
        attained_error,
        max_sampled,
        max_excess,
        violations,
        bound_tol,
        attain_tol,
        passed: violations == 0 && attained_error <= attain_tol,
    })
}

/// Sign structure of an eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSign {
    OneSigned,
    Nodal,
    Indeterminate,
}

pub fn mode_sign(e: &DVector<f64>) -> ModeSign {
    let pos = e.iter().any(|v| *v > 0.0);
    let neg = e.iter().any(|v| *v < 0.0);
    match (pos, neg) {
        (true, true) => ModeSign::Nodal,
        (true, false) if e.iter().all(|v| *v > 0.0) => ModeSign::OneSigned,
        (false, true) if e.iter().all(|v| *v < 0.0) => ModeSign::OneSigned,
        _ => ModeSign::Indeterminate,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MonotonicityRecord {
    pub eta1: String,
    pub eta2: String,
    pub k: usize,
    pub lambda_eta1: f64,
    pub lambda_eta2: f64,
    pub margin: f64,
    pub relative_margin: f64,
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub gap_1_2: f64,
    pub sign_class_per_mode: Vec<ModeSign>,
    pub monotonicity_records: Vec<MonotonicityRecord>,
    pub violations: usize,
    pub violation_tol: f64,
    pub strict_threshold: f64,
}

impl SpectrumReport {
    pub fn from_eigen(eig: &EigenSet) -> Self {
        let gap_1_2 = if eig.len() >= 2 {
            eig.lambdas[1] - eig.lambdas[0]
        } else {
            f64::NAN
        };
        SpectrumReport {
            gap_1_2,
            sign_class_per_mode: (1..=eig.len()).map(|k| mode_sign(&eig.vector(k))).collect(),
            monotonicity_records: Vec::new(),
            violations: 0,
            violation_tol: MONOTONE_VIOLATION_TOL,
            strict_threshold: MONOTONE_STRICT_THRESHOLD,
        }
    }
}

/// Relative slack allowed before `λ_k(η₁) ≥ λ_k(η₂)` counts as violated.
pub const MONOTONE_VIOLATION_TOL: f64 = 1e-10;
/// Relative margin above which the inequality is reported as strict.
pub const MONOTONE_STRICT_THRESHOLD: f64 = 1e-8;

/// Compares the spectra of two ordered weights `η₂ ≥ η₁`, `η₂ ≢ η₁`.
pub fn monotonicity_check(
    mesh: &Mesh1D,
    eta1: &WeightField,
    eta2: &WeightField,
    k_max: usize,
) -> Result<SpectrumReport> {
    let ops = OperatorPair::new(mesh, Some(eta1))?;
    monotonicity_check_with(&ops, eta1, eta2, k_max)
}

/// As [`monotonicity_check`], reusing the stiffness matrix of `ops`.
pub fn monotonicity_check_with(
    ops: &OperatorPair,
    eta1: &WeightField,
    eta2: &WeightField,
    k_max: usize,
) -> Result<SpectrumReport> {
    if eta1.len() != eta2.len() || eta1.len() != ops.n() {
        return Err(precondition("weights must match the mesh"));
    }
    if eta1.values().iter().zip(eta2.values()).any(|(x, y)| y < x) {
        return Err(precondition("monotonicity needs eta2 >= eta1 at every node"));
    }
    if eta1.values() == eta2.values() {
        return Err(precondition("monotonicity needs eta1 and eta2 to differ"));
    }
    let e1 = solve_eigen(&ops.reweighted(Some(eta1))?, k_max)?;
    let e2 = solve_eigen(&ops.reweighted(Some(eta2))?, k_max)?;
    let mut report = SpectrumReport::from_eigen(&e1);
    for k in 1..=k_max {
        let (l1, l2) = (e1.lambda(k), e2.lambda(k));
        let margin = l1 - l2;
        let relative_margin = margin / l2.abs();
        if relative_margin < -MONOTONE_VIOLATION_TOL {
            report.violations += 1;
        }
        report.monotonicity_records.push(MonotonicityRecord {
            eta1: eta1.label().to_string(),
            eta2: eta2.label().to_string(),
            k,
            lambda_eta1: l1,
            lambda_eta2: l2,
            margin,
            relative_margin,
            strict: relative_margin > MONOTONE_STRICT_THRESHOLD,
        });
    }
    Ok(report)
}

/// Principal-angle cosines between the column spans of `x` and `y` in the
/// `M` inner product (all close to one for equal subspaces).
pub fn subspace_cosines(x: &DMatrix<f64>, y: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let cols = |mat: &DMatrix<f64>| (0..mat.ncols()).map(|j| mat.column(j).into_owned()).collect::<Vec<_>>();
    let qx = m_orthonormalize(&cols(x), m);
    let qy = m_orthonormalize(&cols(y), m);
    let c = qx.transpose() * m * qy;
    let svd = c.svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}


/// Aitken extrapolation of three successive values of a sequence converging
/// geometrically.
pub fn aitken_limit(x0: f64, x1: f64, x2: f64) -> f64 {
    let (d1, d2) = (x1 - x0, x2 - x1);
    if d2 == d1 {
        return x2;
    }
    x2 - d2 * d2 / (d2 - d1)
}
