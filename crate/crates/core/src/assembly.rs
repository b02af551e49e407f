//! Discrete Gagliardo form and (weighted) mass matrices for hat functions.
//!
//! The stiffness entry of two hats is the double integral of
//! `(φ_i(x) − φ_i(y))(φ_j(x) − φ_j(y)) |x − y|^{−1−2s}` over the whole plane.
//! It is split into the `Ω × Ω` part, integrated cell pair by cell pair on
//! the half-plane `y ≥ x`, and the two `Ω × Ωᶜ` strips, which collapse to
//! `2 ∫_Ω φ_i φ_j k_c` with `k_c(x) = ((x − a)^{−2s} + (b − x)^{−2s}) / (2s)`.
//!
//! On a uniform mesh every cell-pair integral depends only on the cell offset,
//! so one local matrix per offset is computed in reference coordinates and
//! scaled by `h^{1−2s}`.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh1D, WeightField};
use crate::quadrature::GaussRule;

/// Absolute per-entry tolerance of the stiffness assembly (before the
/// `h^{1−2s}` scaling, which is at most of order one on desk meshes).
pub const ASSEMBLY_TOL: f64 = 1e-10;

const COARSE_ORDER: usize = 16;
const FINE_ORDER: usize = 24;

/// Stiffness matrix `A` with the Gagliardo inner product (normalization constant 1).
pub fn assemble_stiffness(mesh: &Mesh1D) -> Result<DMatrix<f64>> {
    let coarse = LocalRules::new(COARSE_ORDER);
    let fine = LocalRules::new(FINE_ORDER);
    let n = mesh.n();
    let s = mesh.s();
    let cells = mesh.n_cells();
    let scale = mesh.h().powf(1.0 - 2.0 * s);
    let mut a = DMatrix::<f64>::zeros(n, n);

    // Same-cell contribution, exact.
    let c0 = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
    let same = [[c0, -c0], [-c0, c0]];
    for c in 0..cells {
        scatter(&mut a, &[c, c + 1], &same, scale, n);
    }

    // Adjacent cells share a vertex: Duffy split around it.
    if cells > 1 {
        let adj = adjacent_local(s, &fine);
        check_local(&adj, &adjacent_local(s, &coarse), 1, n)?;
        for c in 0..cells - 1 {
            scatter(&mut a, &[c, c + 1, c + 2], &adj, 2.0 * scale, n);
        }
    }

    // Separated cells, smooth kernel.
    for m in 2..cells {
        let far = separated_local(s, m, &fine);
        check_local(&far, &separated_local(s, m, &coarse), m, n)?;
        for c in 0..cells - m {
            scatter(&mut a, &[c, c + 1, c + m, c + m + 1], &far, 2.0 * scale, n);
        }
    }

    // Ω × Ωᶜ strips.
    let tail = 1.0 / s;
    for c in 0..cells {
        let fine_loc = complement_local(s, c, cells, &fine);
        let coarse_loc = complement_local(s, c, cells, &coarse);
        check_local(&fine_loc, &coarse_loc, c, n)?;
        scatter(&mut a, &[c, c + 1], &fine_loc, tail * scale, n);
    }

    Ok(a)
}

/// Weighted mass matrix `∫ η φ_i φ_j`; `None` means `η ≡ 1`.
pub fn assemble_mass(mesh: &Mesh1D, eta: Option<&WeightField>) -> Result<DMatrix<f64>> {
    let n = mesh.n();
    if let Some(w) = eta {
        if w.len() != n {
            return Err(Error::Precondition(format!(
                "weight has {} values for {n} nodes",
                w.len()
            )));
        }
        if let Some(v) = w.values().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Precondition(format!("non-positive weight value {v}")));
        }
    }
    let h = mesh.h();
    let rule = GaussRule::new(3);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for c in 0..mesh.n_cells() {
        let (wl, wr) = match eta {
            Some(w) => (w.extended(c), w.extended(c + 1)),
            None => (1.0, 1.0),
        };
        let mut local = [[0.0; 2]; 2];
        for (t, wq) in rule.nodes.iter().zip(&rule.weights) {
            let psi = [1.0 - t, *t];
            let eta_q = wl * (1.0 - t) + wr * t;
            for p in 0..2 {
                for q in 0..2 {
                    local[p][q] += wq * eta_q * (psi[p] * psi[q]);
                }
            }
        }
        scatter(&mut m, &[c, c + 1], &local, h, n);
    }
    Ok(m)
}

/// `A`, the unweighted mass `M` and the weighted mass `M_η`.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub mesh: Mesh1D,
    pub a: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub m_eta: DMatrix<f64>,
    pub eta: Option<WeightField>,
}

impl OperatorPair {
    pub fn new(mesh: &Mesh1D, eta: Option<&WeightField>) -> Result<Self> {
        let a = assemble_stiffness(mesh)?;
        Self::with_stiffness(mesh, a, eta)
    }

    /// Reuses an already assembled stiffness matrix.
    pub fn with_stiffness(mesh: &Mesh1D, a: DMatrix<f64>, eta: Option<&WeightField>) -> Result<Self> {
        let m = assemble_mass(mesh, None)?;
        let m_eta = match eta {
            Some(_) => assemble_mass(mesh, eta)?,
            None => m.clone(),
        };
        Ok(OperatorPair {
            mesh: *mesh,
            a,
            m,
            m_eta,
            eta: eta.cloned(),
        })
    }

    /// Same stiffness, different weight.
    pub fn reweighted(&self, eta: Option<&WeightField>) -> Result<Self> {
        Self::with_stiffness(&self.mesh, self.a.clone(), eta)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn eta_label(&self) -> String {
        self.eta
            .as_ref()
            .map(|w| w.label().to_string())
            .unwrap_or_else(|| "unit".to_string())
    }

    /// Checks symmetry of all three matrices and positive definiteness via Cholesky.
    pub fn validate(&self) -> Result<()> {
        for (name, mat) in [("A", &self.a), ("M", &self.m), ("M_eta", &self.m_eta)] {
            if !is_symmetric(mat) {
                return Err(Error::Precondition(format!("{name} is not symmetric")));
            }
        }
        if Cholesky::new(self.a.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("A"));
        }
        if Cholesky::new(self.m_eta.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("M_eta"));
        }
        Ok(())
    }
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)].to_bits() == m[(j, i)].to_bits()))
}

/// Adds `factor · local` into `global`; `nodes` are mesh node indices in
/// `0..=n+1`, and the two endpoint nodes are dropped.
fn scatter<const K: usize>(
    global: &mut DMatrix<f64>,
    nodes: &[usize; K],
    local: &[[f64; K]; K],
    factor: f64,
    n: usize,
) {
    for p in 0..K {
        let gp = nodes[p];
        if gp == 0 || gp > n {
            continue;
        }
        for q in 0..K {
            let gq = nodes[q];
            if gq == 0 || gq > n {
                continue;
            }
            global[(gp - 1, gq - 1)] += factor * local[p][q];
        }
    }
}

fn check_local<const K: usize>(
    fine: &[[f64; K]; K],
    coarse: &[[f64; K]; K],
    offset: usize,
    n: usize,
) -> Result<()> {
    let mut worst = (0.0, 0, 0);
    for p in 0..K {
        for q in 0..K {
            let d = (fine[p][q] - coarse[p][q]).abs();
            if d > worst.0 || d.is_nan() {
                worst = (d, p, q);
            }
        }
    }
    if !(worst.0 <= ASSEMBLY_TOL) {
        return Err(Error::Assembly {
            row: (offset + worst.1).min(n),
            col: (offset + worst.2).min(n),
            discrepancy: worst.0,
        });
    }
    Ok(())
}

struct LocalRules {
    rule: GaussRule,
}

impl LocalRules {
    fn new(order: usize) -> Self {
        LocalRules {
            rule: GaussRule::new(order),
        }
    }
}

/// Cells `[0,1]` and `[1,2]`, local dofs (left, shared, right). With
/// `ξ = 1 − x`, `η = y − 1` the difference `u(x) − u(y)` is homogeneous of
/// degree one in `(ξ, η)`, so the radial integral is `1/(3 − 2s)`.
fn adjacent_local(s: f64, rules: &LocalRules) -> [[f64; 3]; 3] {
    let radial = 1.0 / (3.0 - 2.0 * s);
    let mut out = [[0.0; 3]; 3];
    for (t, w) in rules.rule.nodes.iter().zip(&rules.rule.weights) {
        let kern = (1.0 + t).powf(-1.0 - 2.0 * s);
        // η ≤ ξ: ξ = ρ, η = ρt ; ξ ≤ η: η = ρ, ξ = ρt
        let v1 = [1.0, t - 1.0, -t];
        let v2 = [*t, 1.0 - t, -1.0];
        for p in 0..3 {
            for q in 0..3 {
                out[p][q] += w * kern * (v1[p] * v1[q] + v2[p] * v2[q]);
            }
        }
    }
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= radial;
        }
    }
    out
}

/// Cells `[0,1]` and `[m, m+1]`, `m ≥ 2`, dofs (cL, cR, dL, dR).
fn separated_local(s: f64, m: usize, rules: &LocalRules) -> [[f64; 4]; 4] {
    let mf = m as f64;
    let mut out = [[0.0; 4]; 4];
    let g = &rules.rule;
    for (x, wx) in g.nodes.iter().zip(&g.weights) {
        for (y, wy) in g.nodes.iter().zip(&g.weights) {
            let kern = (mf + y - x).powf(-1.0 - 2.0 * s);
            let u = [1.0 - x, *x, -(1.0 - y), -y];
            let w = wx * wy * kern;
            for p in 0..4 {
                for q in 0..4 {
                    out[p][q] += w * (u[p] * u[q]);
                }
            }
        }
    }
    out
}

/// `∫_0^1 ψ_p ψ_q [(c + t)^{−2s} + (N − c − t)^{−2s}] dt` on cell `c` of `N`.
fn complement_local(s: f64, c: usize, cells: usize, rules: &LocalRules) -> [[f64; 2]; 2] {
    let e = 2.0 * s;
    // Exact moments against t^{-2s} on the cell touching the boundary:
    // ∫t(1−t) t^{-2s} and ∫t² t^{-2s}. The (1−t)² moment belongs to the
    // endpoint node, which carries no dof (and diverges for s ≥ 1/2).
    let ll = 0.0;
    let lr = 1.0 / (2.0 - e) - 1.0 / (3.0 - e);
    let rr = 1.0 / (3.0 - e);
    let mut out = [[0.0; 2]; 2];
    let nf = cells as f64;
    let cf = c as f64;
    let g = &rules.rule;

    // left boundary: distance (c + t)
    if c == 0 {
        out[0][0] += ll;
        out[0][1] += lr;
        out[1][0] += lr;
        out[1][1] += rr;
    } else {
        for (t, w) in g.nodes.iter().zip(&g.weights) {
            let k = (cf + t).powf(-e);
            let psi = [1.0 - t, *t];
            for p in 0..2 {
                for q in 0..2 {
                    out[p][q] += w * k * (psi[p] * psi[q]);
                }
            }
        }
    }
    // right boundary: distance (N − c − t); mirror of the left case
    if c + 1 == cells {
        out[1][1] += ll;
        out[0][1] += lr;
        out[1][0] += lr;
        out[0][0] += rr;
    } else {
        for (t, w) in g.nodes.iter().zip(&g.weights) {
            let k = (nf - cf - t).powf(-e);
            let psi = [1.0 - t, *t];
            for p in 0..2 {
                for q in 0..2 {
                    out[p][q] += w * k * (psi[p] * psi[q]);
                }
            }
        }
    }
    out
}

/// Manifest accompanying an exported matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixManifest {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub s: f64,
    pub tolerance: f64,
    pub checksum: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hat_mass() {
        let mesh = Mesh1D::new(-1.0, 1.0, 1, 0.5).unwrap();
        let m = assemble_mass(&mesh, None).unwrap();
        assert!((m[(0, 0)] - 2.0 * mesh.h() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_weight_scales_mass_exactly() {
        let mesh = Mesh1D::new(0.0, 3.0, 9, 0.3).unwrap();
        let m = assemble_mass(&mesh, None).unwrap();
        let w = WeightField::constant(9, 4.0).unwrap();
        let mw = assemble_mass(&mesh, Some(&w)).unwrap();
        assert_eq!(mw, m * 4.0);
    }

    #[test]
    fn mass_is_tridiagonal() {
        let mesh = Mesh1D::new(0.0, 1.0, 7, 0.3).unwrap();
        let w = WeightField::ramp(&mesh, 2.0).unwrap();
        let m = assemble_mass(&mesh, Some(&w)).unwrap();
        for i in 0..7usize {
            for j in 0..7usize {
                if i.abs_diff(j) > 1 {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn mass_rejects_mismatched_weight() {
        let mesh = Mesh1D::new(0.0, 1.0, 7, 0.3).unwrap();
        let w = WeightField::constant(6, 1.0).unwrap();
        assert!(matches!(
            assemble_mass(&mesh, Some(&w)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn stiffness_symmetric_positive_definite() {
        for &s in &[0.1, 0.5, 0.9] {
            let mesh = Mesh1D::new(-1.0, 1.0, 20, s).unwrap();
            let a = assemble_stiffness(&mesh).unwrap();
            assert!(is_symmetric(&a));
            assert!(Cholesky::new(a.clone()).is_some());
            // hats with disjoint supports give −2∬φ_i(x)φ_j(y)K < 0
            for i in 0..20usize {
                for j in 0..20usize {
                    if i.abs_diff(j) >= 2 {
                        assert!(a[(i, j)] < 0.0, "s={s} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn operator_pair_validates() {
        let mesh = Mesh1D::new(-1.0, 1.0, 10, 0.4).unwrap();
        let ops = OperatorPair::new(&mesh, None).unwrap();
        ops.validate().unwrap();
        assert_eq!(ops.m, ops.m_eta);
    }
}
