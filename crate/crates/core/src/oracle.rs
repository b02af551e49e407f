//! Brute-force reference for the stiffness matrix.
//!
//! Instead of splitting the plane into `Ω × Ω` and the exterior strips, each
//! entry is written as a one-dimensional integral over the shift `z = x − y`:
//!
//! `A_ij = 2 ∫_0^∞ z^{−1−2s} g_ij(z) dz`,  `g_ij(z) = ∫ (φ_i(x) − φ_i(x−z))(φ_j(x) − φ_j(x−z)) dx`.
//!
//! `g_ij` is evaluated exactly by piecewise Gauss integration of a piecewise
//! quadratic, the `z` integral uses subcells graded dyadically toward `z = 0`
//! and the tail beyond the support width is integrated in closed form.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::quadrature::GaussRule;

/// Largest mesh accepted by the oracle.
pub const ORACLE_MAX_N: usize = 64;

const DYADIC_LEVELS: usize = 48;
const SELF_CHECK_TOL: f64 = 1e-12;

pub fn oracle_stiffness(mesh: &Mesh1D) -> Result<DMatrix<f64>> {
    let n = mesh.n();
    if n > ORACLE_MAX_N {
        return Err(Error::Precondition(format!(
            "oracle limited to n <= {ORACLE_MAX_N}, got n = {n}"
        )));
    }
    let ctx = Ctx::new(mesh);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<Result<f64>> = pairs.par_iter().map(|&(i, j)| ctx.entry(i + 1, j + 1)).collect();
    let mut a = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        a[(i, j)] = v;
        a[(j, i)] = v;
    }
    Ok(a)
}

struct Ctx {
    h: f64,
    s: f64,
    g2: GaussRule,
    near: GaussRule,
    mid: GaussRule,
    mid_check: GaussRule,
}

impl Ctx {
    fn new(mesh: &Mesh1D) -> Self {
        Ctx {
            h: mesh.h(),
            s: mesh.s(),
            g2: GaussRule::new(2),
            near: GaussRule::new(12),
            mid: GaussRule::new(16),
            mid_check: GaussRule::new(20),
        }
    }

    /// `g_ij(z)` by exact integration of the piecewise quadratic integrand,
    /// in coordinates relative to node `i` and in units of `h`.
    fn g(&self, i: usize, j: usize, z: f64) -> f64 {
        let zeta = z / self.h;
        let off = j as f64 - i as f64;
        let mut br: Vec<f64> = Vec::with_capacity(12);
        for c in [0.0, off] {
            for d in [-1.0, 0.0, 1.0] {
                br.push(c + d);
                br.push(c + d + zeta);
            }
        }
        br.sort_by(|p, q| p.partial_cmp(q).unwrap());
        br.dedup();
        let mut acc = 0.0;
        for w in br.windows(2) {
            if w[1] > w[0] {
                acc += self
                    .g2
                    .integrate(w[0], w[1], |t| hat_jump(t, zeta) * hat_jump(t - off, zeta));
            }
        }
        acc * self.h
    }

    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        let (h, s) = (self.h, self.s);
        let kern = |z: f64| z.powf(-1.0 - 2.0 * s);
        let span = i.abs_diff(j) + 2;

        // [0, h]: dyadic subcells plus the z² remainder on [0, ε].
        let mut near = 0.0;
        let mut hi = h;
        for _ in 0..DYADIC_LEVELS {
            let lo = 0.5 * hi;
            near += self.near.integrate(lo, hi, |z| kern(z) * self.g(i, j, z));
            hi = lo;
        }
        let eps = hi;
        let c2 = self.g(i, j, eps) / (eps * eps);
        near += c2 * eps.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);

        // [h, span·h]: g is a cubic on each [kh, (k+1)h].
        let mut mid = 0.0;
        let mut mid_check = 0.0;
        for k in 1..span {
            let (lo, hi) = (k as f64 * h, (k + 1) as f64 * h);
            mid += self.mid.integrate(lo, hi, |z| kern(z) * self.g(i, j, z));
            mid_check += self.mid_check.integrate(lo, hi, |z| kern(z) * self.g(i, j, z));
        }

        // Beyond the support width g ≡ 2 ∫ φ_i φ_j.
        let z0 = span as f64 * h;
        let plateau = self.g(i, j, z0 + h);
        let tail = plateau * z0.powf(-2.0 * s) / (2.0 * s);

        let total = 2.0 * (near + mid + tail);
        let scale = total.abs().max(f64::MIN_POSITIVE);
        if !total.is_finite() || (mid - mid_check).abs() > SELF_CHECK_TOL * scale {
            return Err(Error::Oracle(format!(
                "entry ({i},{j}) unresolved: mid-range rules differ by {:.3e}",
                (mid - mid_check).abs()
            )));
        }
        Ok(total)
    }
}

/// `tri(t) − tri(t − ζ)` for the unit hat `tri(t) = (1 − |t|)₊`, exact when
/// both arguments fall on the same linear piece.
fn hat_jump(t: f64, zeta: f64) -> f64 {
    fn piece(t: f64) -> (u8, f64) {
        if t <= -1.0 {
            (0, 0.0)
        } else if t <= 0.0 {
            (1, 1.0)
        } else if t <= 1.0 {
            (2, -1.0)
        } else {
            (3, 0.0)
        }
    }
    let (p, slope) = piece(t);
    if piece(t - zeta).0 == p {
        slope * zeta
    } else {
        (1.0 - t.abs()).max(0.0) - (1.0 - (t - zeta).abs()).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_large_meshes() {
        let mesh = Mesh1D::new(0.0, 1.0, 65, 0.5).unwrap();
        assert!(matches!(oracle_stiffness(&mesh), Err(Error::Precondition(_))));
    }

    #[test]
    fn deterministic() {
        let mesh = Mesh1D::new(-1.0, 1.0, 6, 0.3).unwrap();
        let a = oracle_stiffness(&mesh).unwrap();
        let b = oracle_stiffness(&mesh).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn plateau_is_twice_the_mass() {
        let mesh = Mesh1D::new(0.0, 1.0, 5, 0.5).unwrap();
        let ctx = Ctx::new(&mesh);
        let h = mesh.h();
        assert!((ctx.g(2, 2, 10.0) - 4.0 * h / 3.0).abs() < 1e-15);
        assert!((ctx.g(2, 3, 10.0) - h / 3.0).abs() < 1e-15);
        assert!(ctx.g(2, 4, 10.0).abs() < 1e-15);
    }
}
