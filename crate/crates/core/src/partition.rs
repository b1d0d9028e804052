//! Conic covering of the plane: sector matrices Q_c, region membership and
//! the per-region multiplier search used by the offline mechanisms.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymmetricMatrix};
use crate::num;

const PI: f64 = core::f64::consts::PI;

/// N sign-symmetric conic regions R_c = {x : x^T Q_c x >= 0} covering R^2.
///
/// Sector c has axis direction at angle (c - 1/2) pi / N over [0, pi) and
/// half-angle pi/(2N) widened by a small relative overlap, with
/// Q_c = d d^T - cos^2(theta) I.
#[derive(Debug, Clone)]
pub struct ConicPartition {
    regions: Vec<SymmetricMatrix>,
    half_angle: f64,
}

impl ConicPartition {
    pub fn build(state_dim: usize, region_count: usize) -> Result<Self> {
        Self::build_with_overlap(state_dim, region_count, 1e-6)
    }

    pub fn build_with_overlap(
        state_dim: usize,
        region_count: usize,
        overlap: f64,
    ) -> Result<Self> {
        if state_dim != 2 {
            return Err(Error::Dimension(format!(
                "conic partitions are only constructed for planar states, got n = {state_dim}"
            )));
        }
        if region_count < 1 {
            return Err(Error::Domain("need at least one region".into()));
        }
        if !(overlap >= 0.0) {
            return Err(Error::Domain("overlap must be nonnegative".into()));
        }
        let n = region_count as f64;
        let half_angle = (PI / (2.0 * n) * (1.0 + overlap)).min(PI / 2.0);
        let cos2 = num::cos(half_angle) * num::cos(half_angle);
        let mut regions = Vec::with_capacity(region_count);
        for c in 0..region_count {
            let angle = (c as f64 + 0.5) * PI / n;
            let d = [num::cos(angle), num::sin(angle)];
            let q = Matrix::from_rows(&[
                &[d[0] * d[0] - cos2, d[0] * d[1]],
                &[d[0] * d[1], d[1] * d[1] - cos2],
            ])?;
            regions.push(SymmetricMatrix::enforce(q));
        }
        Ok(Self {
            regions,
            half_angle,
        })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn region_matrix(&self, c: usize) -> &SymmetricMatrix {
        &self.regions[c]
    }

    pub fn regions(&self) -> &[SymmetricMatrix] {
        &self.regions
    }

    /// Smallest region index c with x^T Q_c x >= 0. The origin belongs to
    /// every cone and maps to region 0 by convention.
    pub fn region_of(&self, x: &[f64]) -> usize {
        for (c, q) in self.regions.iter().enumerate() {
            if q.quad(x) >= 0.0 {
                return c;
            }
        }
        // The cones cover the plane; landing here means x sits exactly on a
        // numerical gap between sectors. Fall back to the nearest axis.
        let mut angle = num::atan2(x[1], x[0]) % PI;
        if angle < 0.0 {
            angle += PI;
        }
        let n = self.regions.len() as f64;
        let c = (angle / (PI / n)) as usize;
        c.min(self.regions.len() - 1)
    }
}

/// Maximize lambda_min(base + eps * bump) over eps in [1e-9, 1e9] by
/// golden-section search on a log scale, exploiting concavity of the minimum
/// eigenvalue of an affine symmetric family.
///
/// Returns (eps, margin) for the best eps whose margin clears -tol, or an
/// infeasibility error carrying the best margin found.
pub fn affine_epsilon_search(
    base: &SymmetricMatrix,
    bump: &SymmetricMatrix,
    tol: f64,
) -> Result<(f64, f64)> {
    if base.dim() != bump.dim() {
        return Err(Error::Dimension(
            "epsilon search needs matching dimensions".into(),
        ));
    }
    let eval = |log_eps: f64| -> f64 {
        let eps = num::exp(log_eps);
        SymmetricMatrix::enforce(
            base.matrix()
                .add(&bump.matrix().scale(eps))
                .expect("same shape"),
        )
        .min_eigenvalue()
    };

    let lo0 = num::ln(1e-9);
    let hi0 = num::ln(1e9);
    // cheap early accept at the smallest multiplier
    let g_lo = eval(lo0);
    if g_lo >= -tol {
        return Ok((1e-9, g_lo));
    }

    let phi = (num::sqrt(5.0) - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo0, hi0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..120 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1);
        }
    }
    let (best_log, best) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if best >= -tol {
        Ok((num::exp(best_log), best))
    } else {
        Err(Error::Infeasible(format!(
            "no multiplier in [1e-9, 1e9] reaches margin -{tol:.1e}; best {best:.6e}"
        )))
    }
}

/// Search for eps_c > 0 with W + eps_c Q_c <= 0 (up to tolerance), i.e.
/// lambda_min(-W - eps Q_c) >= -tol.
pub fn epsilon_search(
    w: &SymmetricMatrix,
    q_c: &SymmetricMatrix,
    tol: f64,
) -> Result<(f64, f64)> {
    let neg_w = SymmetricMatrix::enforce(w.matrix().scale(-1.0));
    let neg_q = SymmetricMatrix::enforce(q_c.matrix().scale(-1.0));
    affine_epsilon_search(&neg_w, &neg_q, tol)
}
