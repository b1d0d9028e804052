//! Sampling-horizon combinatorics: the horizon set S_{lmin}^{lmax}(Gamma),
//! per-horizon transition matrices and averages.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::plant::DiscretizationCache;

/// The admissible intervals and length bounds defining S_{lmin}^{lmax}(Gamma).
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSpace {
    gamma: Vec<f64>,
    l_min: usize,
    l_max: usize,
}

impl HorizonSpace {
    pub fn new(gamma: Vec<f64>, l_min: usize, l_max: usize) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::Domain("Gamma must be nonempty".into()));
        }
        if gamma.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Domain("all sampling intervals must be positive".into()));
        }
        if gamma.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("Gamma must be strictly increasing".into()));
        }
        if l_min < 1 || l_max < l_min {
            return Err(Error::Domain(format!(
                "need 1 <= l_min <= l_max, got l_min={l_min}, l_max={l_max}"
            )));
        }
        Ok(Self { gamma, l_min, l_max })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn l_min(&self) -> usize {
        self.l_min
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn t_max(&self) -> f64 {
        *self.gamma.last().expect("nonempty Gamma")
    }

    /// Closed-form |S| = sum over l of |Gamma|^l.
    pub fn count(&self) -> u64 {
        let m = self.gamma.len() as u64;
        (self.l_min..=self.l_max)
            .map(|l| m.pow(l as u32))
            .sum()
    }

    /// Restartable stream over every horizon exactly once, in length-major
    /// then lexicographic-by-Gamma order. Memory O(l_max).
    pub fn enumerate(&self) -> HorizonIter<'_> {
        HorizonIter {
            space: self,
            len: self.l_min,
            counters: vec![0; self.l_min],
            started: false,
        }
    }

    /// Walks the same horizons as `enumerate`, handing each one to `f`
    /// together with its transition matrix. Prefix products are reused along
    /// the lexicographic walk, so each horizon costs one matrix multiply.
    pub fn visit_transitions<F>(&self, cache: &DiscretizationCache, mut f: F) -> Result<()>
    where
        F: FnMut(&SamplingHorizon, &Matrix),
    {
        let factors: Vec<&Matrix> = self
            .gamma
            .iter()
            .map(|t| cache.get(*t).map(|d| &d.closed))
            .collect::<Result<_>>()?;
        let m = self.gamma.len();
        for len in self.l_min..=self.l_max {
            // DFS over the fixed-depth tree with a product stack; products[d]
            // is Atilde(T^d) ... Atilde(T^1) for the current prefix.
            let mut counters = vec![0usize; len];
            let mut products: Vec<Matrix> = Vec::with_capacity(len);
            let mut depth = 0usize;
            loop {
                while depth < len {
                    let idx = counters[depth];
                    let prod = if depth == 0 {
                        factors[idx].clone()
                    } else {
                        factors[idx].mul(&products[depth - 1])?
                    };
                    products.push(prod);
                    depth += 1;
                }
                let horizon = SamplingHorizon::from_indices(&counters, &self.gamma);
                f(&horizon, &products[len - 1]);

                // advance the rightmost counter, carrying left
                loop {
                    if depth == 0 {
                        break;
                    }
                    products.pop();
                    depth -= 1;
                    if counters[depth] + 1 < m {
                        counters[depth] += 1;
                        break;
                    }
                    counters[depth] = 0;
                }
                if depth == 0 && counters[0] == 0 {
                    break;
                }
            }
        }
        Ok(())
    }
}

/// Iterator state for `HorizonSpace::enumerate`.
pub struct HorizonIter<'a> {
    space: &'a HorizonSpace,
    len: usize,
    counters: Vec<usize>,
    started: bool,
}

impl Iterator for HorizonIter<'_> {
    type Item = SamplingHorizon;

    fn next(&mut self) -> Option<SamplingHorizon> {
        let m = self.space.gamma.len();
        if self.started {
            let mut pos = self.len;
            loop {
                if pos == 0 {
                    self.len += 1;
                    if self.len > self.space.l_max {
                        return None;
                    }
                    self.counters = vec![0; self.len];
                    break;
                }
                pos -= 1;
                if self.counters[pos] + 1 < m {
                    self.counters[pos] += 1;
                    for c in &mut self.counters[pos + 1..] {
                        *c = 0;
                    }
                    break;
                }
            }
        }
        self.started = true;
        Some(SamplingHorizon::from_indices(
            &self.counters,
            &self.space.gamma,
        ))
    }
}

/// An ordered finite list of sampling intervals drawn from Gamma; the
/// decision object committed at each sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingHorizon {
    intervals: Vec<f64>,
}

impl SamplingHorizon {
    pub fn new(intervals: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Domain("a horizon needs at least one interval".into()));
        }
        if intervals.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Domain("horizon intervals must be positive".into()));
        }
        Ok(Self { intervals })
    }

    fn from_indices(indices: &[usize], gamma: &[f64]) -> Self {
        Self {
            intervals: indices.iter().map(|i| gamma[*i]).collect(),
        }
    }

    pub fn singleton(t: f64) -> Self {
        Self { intervals: vec![t] }
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.intervals.iter().sum()
    }

    pub fn average_interval(&self) -> f64 {
        self.duration() / self.len() as f64
    }

    /// Phi_sigma = Atilde(T^l) ... Atilde(T^1): the transition over the
    /// horizon, newest factor multiplying on the left.
    pub fn transition(&self, cache: &DiscretizationCache) -> Result<Matrix> {
        let mut product: Option<Matrix> = None;
        for &t in &self.intervals {
            let factor = &cache.get(t)?.closed;
            product = Some(match product {
                None => factor.clone(),
                Some(p) => factor.mul(&p)?,
            });
        }
        Ok(product.expect("nonempty horizon"))
    }
}
