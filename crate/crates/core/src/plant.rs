//! Plant/controller definition and exact zero-order-hold discretization,
//! including the disturbance-related constants for the perturbed case.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{expm, two_norm, Matrix};

/// Continuous-time LTI plant with a fixed state-feedback gain and an
/// optional disturbance channel.
#[derive(Debug, Clone)]
pub struct PlantModel {
    a: Matrix,
    b: Matrix,
    k: Matrix,
    d: Option<Matrix>,
    w_max: f64,
    closed_loop_hurwitz: bool,
}

impl PlantModel {
    pub fn new(a: Matrix, b: Matrix, k: Matrix, d: Option<Matrix>, w_max: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("A must be square".into()));
        }
        let n = a.rows();
        if b.rows() != n {
            return Err(Error::Dimension(format!(
                "B must have {n} rows, got {}",
                b.rows()
            )));
        }
        if k.rows() != b.cols() || k.cols() != n {
            return Err(Error::Dimension(format!(
                "K must be {}x{n}, got {}x{}",
                b.cols(),
                k.rows(),
                k.cols()
            )));
        }
        if let Some(d) = &d {
            if d.rows() != n {
                return Err(Error::Dimension(format!(
                    "D must have {n} rows, got {}",
                    d.rows()
                )));
            }
        }
        if !(w_max >= 0.0) {
            return Err(Error::Domain("w_max must be nonnegative".into()));
        }
        // Advisory only: the designs assume A+BK Hurwitz but only sampled
        // behavior matters downstream.
        let a_cl = a.add(&b.mul(&k)?)?;
        let closed_loop_hurwitz = continuous_stable(&a_cl);
        Ok(Self {
            a,
            b,
            k,
            d,
            w_max,
            closed_loop_hurwitz,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn gain(&self) -> &Matrix {
        &self.k
    }

    pub fn disturbance_channel(&self) -> Option<&Matrix> {
        self.d.as_ref()
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// Whether A + BK has all eigenvalues in the open left half plane.
    pub fn closed_loop_hurwitz(&self) -> bool {
        self.closed_loop_hurwitz
    }

    /// Exact ZOH discretization over one interval: returns (A_T, B_T, Atilde_T)
    /// with Atilde_T = A_T + B_T K, computed from one augmented matrix
    /// exponential exp([[A, B], [0, 0]] T).
    pub fn discretize(&self, t: f64) -> Result<Discretization> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "sampling interval must be positive, got {t}"
            )));
        }
        let n = self.a.rows();
        let m = self.b.cols();
        let mut aug = Matrix::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, self.a.get(i, j) * t);
            }
            for j in 0..m {
                aug.set(i, n + j, self.b.get(i, j) * t);
            }
        }
        let e = expm(&aug)?;
        let mut a_t = Matrix::zeros(n, n);
        let mut b_t = Matrix::zeros(n, m);
        for i in 0..n {
            for j in 0..n {
                a_t.set(i, j, e.get(i, j));
            }
            for j in 0..m {
                b_t.set(i, j, e.get(i, n + j));
            }
        }
        let closed = a_t.add(&b_t.mul(&self.k)?)?;
        Ok(Discretization {
            interval: t,
            a_t,
            b_t,
            closed,
        })
    }

    /// Upper bound on the discretized disturbance contribution over one
    /// interval: w_max * integral_0^T |e^{As} D|_2 ds, by composite Simpson
    /// quadrature with step at most T/200.
    pub fn perturbation_bound(&self, t: f64) -> Result<f64> {
        let d = self
            .d
            .as_ref()
            .ok_or_else(|| Error::Domain("plant has no disturbance channel D".into()))?;
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "sampling interval must be positive, got {t}"
            )));
        }
        if self.w_max == 0.0 || d.max_abs() == 0.0 {
            return Ok(0.0);
        }
        let steps = 200usize; // even, step = T/200
        let h = t / steps as f64;
        let e_step = expm(&self.a.scale(h))?;
        // f(s) = |e^{As} D|_2 evaluated at the quadrature nodes by
        // incremental propagation of the exponential.
        let mut e_s = Matrix::identity(self.a.rows());
        let mut values = Vec::with_capacity(steps + 1);
        values.push(two_norm(&e_s.mul(d)?));
        for _ in 0..steps {
            e_s = e_step.mul(&e_s)?;
            values.push(two_norm(&e_s.mul(d)?));
        }
        let mut acc = values[0] + values[steps];
        for (i, v) in values.iter().enumerate().take(steps).skip(1) {
            acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        Ok(self.w_max * acc * h / 3.0)
    }

    /// C = max over T in gammas of |Atilde_T|_2.
    pub fn growth_constant(&self, gammas: &[f64]) -> Result<f64> {
        if gammas.is_empty() {
            return Err(Error::Domain("growth constant needs a nonempty Gamma".into()));
        }
        let mut best = 0.0f64;
        for &t in gammas {
            best = best.max(two_norm(&self.discretize(t)?.closed));
        }
        Ok(best)
    }

    /// C' = |Atilde_{T_max}|_2.
    pub fn fallback_norm(&self, t_max: f64) -> Result<f64> {
        Ok(two_norm(&self.discretize(t_max)?.closed))
    }
}

fn continuous_stable(a_cl: &Matrix) -> bool {
    // Lyapunov-free check: all characteristic roots in the left half plane,
    // assessed through the bilinear map z = (1 + hs)/(1 - hs) being a
    // contraction for small h. A direct small-step discretization is enough
    // for an advisory flag.
    match expm(&a_cl.scale(1e-3)) {
        Ok(e) => crate::matrix::spectral_radius(&e).map(|r| r < 1.0).unwrap_or(false),
        Err(_) => false,
    }
}

/// One interval's discretization triple.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub interval: f64,
    pub a_t: Matrix,
    pub b_t: Matrix,
    /// Atilde_T = A_T + B_T K.
    pub closed: Matrix,
}

/// Read-only map from sampling interval to its discretization triple.
/// Built once, then shared.
#[derive(Debug, Clone)]
pub struct DiscretizationCache {
    entries: BTreeMap<u64, Discretization>,
}

impl DiscretizationCache {
    pub fn build(plant: &PlantModel, intervals: &[f64]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &t in intervals {
            entries.insert(t.to_bits(), plant.discretize(t)?);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, t: f64) -> Result<&Discretization> {
        self.entries.get(&t.to_bits()).ok_or_else(|| {
            Error::Domain(format!("no cached discretization for interval {t}"))
        })
    }

    pub fn intervals(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.keys().map(|k| f64::from_bits(*k))
    }
}
