//! Quadratic stability certificates: construction and verification of the
//! unperturbed decay certificate, the two perturbed variants with their
//! feasibility matrices, and the ellipsoid geometry around the ultimate bound.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::horizons::{HorizonSpace, SamplingHorizon};
use crate::matrix::{inverse, spectral_radius, Matrix, SymmetricMatrix};
use crate::num;
use crate::plant::{DiscretizationCache, PlantModel};

/// Strictness margins for definiteness tests: "< 0" is min-eig <= -STRICT *
/// scale of the negation, ">= 0" is min-eig >= -SEMI * scale.
const STRICT_MARGIN: f64 = 1e-9;
const SEMI_MARGIN: f64 = 1e-8;

/// Which ultimate-bound formula to use. `Paper` divides C' by the smallest
/// eigenvalue of P, matching the published form; `Corrected` divides by its
/// square root, which is what the bound |x|^2 <= V/lambda_min(P) yields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuVariant {
    #[default]
    Paper,
    Corrected,
}

/// Exponential-decay certificate: P > 0 with
/// Phi_sigma*^T P Phi_sigma* - rho P < 0, rho = e^{-beta * duration(sigma*)}.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub p: SymmetricMatrix,
    pub beta: f64,
    pub sigma_star: SamplingHorizon,
    pub rho: f64,
}

impl StabilityCertificate {
    /// Builds P by solving the Stein equation Phi^T P Phi - rho P = -I and
    /// re-verifies the strict inequality before returning.
    pub fn construct(
        phi_star: &Matrix,
        beta: f64,
        sigma_star: SamplingHorizon,
    ) -> Result<Self> {
        let rho = num::exp(-beta * sigma_star.duration());
        let sr = spectral_radius(phi_star)?;
        if sr * sr >= rho {
            return Err(Error::Infeasible(format!(
                "decay certificate needs spectral_radius(Phi)^2 < e^(-beta*duration): \
                 rho(Phi)^2 = {:.6e} vs bound {:.6e}; pick a different sigma* or a smaller beta",
                sr * sr,
                rho
            )));
        }
        let q = SymmetricMatrix::identity(phi_star.rows());
        let p = crate::matrix::solve_stein(phi_star, rho, &q)?;
        let cert = Self {
            p,
            beta,
            sigma_star,
            rho,
        };
        let margin = cert.verify(phi_star)?;
        if margin <= 0.0 {
            return Err(Error::Infeasible(format!(
                "constructed certificate failed its own strict check (margin {margin:.3e})"
            )));
        }
        Ok(cert)
    }

    /// Verifies the construction against an externally supplied P.
    pub fn from_parts(
        p: SymmetricMatrix,
        beta: f64,
        sigma_star: SamplingHorizon,
        phi_star: &Matrix,
    ) -> Result<Self> {
        let rho = num::exp(-beta * sigma_star.duration());
        let cert = Self {
            p,
            beta,
            sigma_star,
            rho,
        };
        let margin = cert.verify(phi_star)?;
        if margin <= 0.0 {
            return Err(Error::Infeasible(format!(
                "supplied P does not satisfy the strict decay inequality (margin {margin:.3e})"
            )));
        }
        Ok(cert)
    }

    /// Margin by which Phi^T P Phi - rho P < 0 holds: the amount the largest
    /// eigenvalue sits below the strictness threshold. Positive means valid.
    pub fn verify(&self, phi_star: &Matrix) -> Result<f64> {
        if !self.p.is_psd(0.0) || self.p.min_eigenvalue() <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let lhs = self.decay_form(phi_star)?;
        let scale = lhs.matrix().max_abs().max(self.p.matrix().max_abs());
        Ok(-(lhs.max_eigenvalue()) - STRICT_MARGIN * scale)
    }

    /// Phi^T P Phi - e^{-beta * duration} P for the certificate's own rho.
    fn decay_form(&self, phi: &Matrix) -> Result<SymmetricMatrix> {
        let ptp = phi.transpose().mul(self.p.matrix())?.mul(phi)?;
        Ok(SymmetricMatrix::enforce(
            ptp.sub(&self.p.matrix().scale(self.rho))?,
        ))
    }

    /// Pointwise feasibility test of the online unperturbed mechanism:
    /// x^T (Phi^T P Phi - e^{-beta*duration(sigma)} P) x <= 0.
    pub fn pointwise_value(&self, phi: &Matrix, duration: f64, x: &[f64]) -> f64 {
        let rho = num::exp(-self.beta * duration);
        let px = self.p.matrix().mul_vec(x);
        let phix = phi.mul_vec(x);
        let pphix = self.p.matrix().mul_vec(&phix);
        let quad_phi: f64 = phix.iter().zip(&pphix).map(|(a, b)| a * b).sum();
        let quad_p: f64 = x.iter().zip(&px).map(|(a, b)| a * b).sum();
        quad_phi - rho * quad_p
    }

    pub fn lyapunov(&self, x: &[f64]) -> f64 {
        self.p.quad(x)
    }
}

/// Online variant carries (M, gamma); offline carries (gamma1, gamma2).
#[derive(Debug, Clone)]
pub enum PerturbedVariant {
    Online { m: SymmetricMatrix, gamma: f64 },
    Offline { gamma1: f64, gamma2: f64 },
}

/// Certificate for the perturbed mechanisms: the decay pair plus the
/// disturbance constants and ellipsoid data.
#[derive(Debug, Clone)]
pub struct PerturbedCertificate {
    pub p: SymmetricMatrix,
    pub variant: PerturbedVariant,
    pub beta: f64,
    pub sigma_star: SamplingHorizon,
    /// Uniform bound on the one-interval discretized disturbance.
    pub varpi: f64,
    /// C = max over Gamma of |Atilde_T|_2.
    pub growth: f64,
    /// C' = |Atilde_{T_max}|_2.
    pub fallback: f64,
    pub t_max: f64,
    pub mu_variant: MuVariant,
    /// lambda_max(P M^{-1} P + P), cached for the online per-horizon test.
    lambda_term: f64,
}

impl PerturbedCertificate {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: SymmetricMatrix,
        variant: PerturbedVariant,
        beta: f64,
        sigma_star: SamplingHorizon,
        varpi: f64,
        growth: f64,
        fallback: f64,
        t_max: f64,
        mu_variant: MuVariant,
    ) -> Result<Self> {
        let lambda_term = match &variant {
            PerturbedVariant::Online { m, .. } => {
                let m_inv = inverse(m.matrix()).map_err(|_| {
                    Error::NonConvergence("M is singular; cannot form P M^-1 P".into())
                })?;
                let pmp = p.matrix().mul(&m_inv)?.mul(p.matrix())?;
                SymmetricMatrix::enforce(pmp.add(p.matrix())?).max_eigenvalue()
            }
            PerturbedVariant::Offline { .. } => 0.0,
        };
        Ok(Self {
            p,
            variant,
            beta,
            sigma_star,
            varpi,
            growth,
            fallback,
            t_max,
            mu_variant,
            lambda_term,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.p.dim()
    }

    /// Geometric sum 1 + C + ... + C^{l-1}.
    pub fn growth_sum(&self, horizon_len: usize) -> f64 {
        let mut acc = 0.0;
        let mut pw = 1.0;
        for _ in 0..horizon_len {
            acc += pw;
            pw *= self.growth;
        }
        acc
    }

    /// The disturbance amplification term: squared for the online variant,
    /// unsquared for the offline one.
    pub fn chi(&self) -> f64 {
        let theta = self.varpi * self.growth_sum(self.sigma_star.len());
        match self.variant {
            PerturbedVariant::Online { .. } => theta * theta,
            PerturbedVariant::Offline { .. } => theta,
        }
    }

    /// Ultimate-bound level mu = lambda_max(P) (C'/lambda_min(P) + varpi)^2
    /// (or the corrected divisor, by configuration).
    pub fn ultimate_bound(&self) -> f64 {
        let lmax = self.p.max_eigenvalue();
        let lmin = self.p.min_eigenvalue();
        let divisor = match self.mu_variant {
            MuVariant::Paper => lmin,
            MuVariant::Corrected => num::sqrt(lmin),
        };
        let r = self.fallback / divisor + self.varpi;
        lmax * r * r
    }

    /// Radius-squared of the smallest ball containing E(P, mu).
    pub fn tangent_ball(&self) -> f64 {
        self.ultimate_bound() / self.p.min_eigenvalue()
    }

    /// Both Prop-3 LMIs for the online variant, returned as (matrix, margin)
    /// pairs; margin >= 0 means the semidefinite test passes.
    pub fn online_lmis(&self, phi_star: &Matrix) -> Result<Vec<(SymmetricMatrix, f64)>> {
        let PerturbedVariant::Online { m, gamma } = &self.variant else {
            return Err(Error::Domain("online LMIs need the online variant".into()));
        };
        let n = self.state_dim();
        let rho = num::exp(-self.beta * self.sigma_star.duration());

        // LMI 1: Phi^T (P+M) Phi + (rho - gamma) P >= 0
        let pm = self.p.matrix().add(m.matrix())?;
        let lmi1 = SymmetricMatrix::enforce(
            phi_star
                .transpose()
                .mul(&pm)?
                .mul(phi_star)?
                .add(&self.p.matrix().scale(rho - gamma))?,
        );

        // LMI 2: [[M, P], [P, (gamma/chi) I - P]] >= 0. With chi = 0 (no
        // disturbance) the lower-right block diverges; the limit test is M >= 0.
        let chi = self.chi();
        let lmi2 = if chi > 0.0 {
            let mut blk = Matrix::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    blk.set(i, j, m.matrix().get(i, j));
                    blk.set(i, n + j, self.p.matrix().get(i, j));
                    blk.set(n + i, j, self.p.matrix().get(i, j));
                    blk.set(n + i, n + j, -self.p.matrix().get(i, j));
                }
                let v = blk.get(n + i, n + i) + gamma / chi;
                blk.set(n + i, n + i, v);
            }
            SymmetricMatrix::enforce(blk)
        } else {
            m.clone()
        };

        let margin = |s: &SymmetricMatrix| {
            let scale = s.matrix().max_abs().max(1.0);
            s.min_eigenvalue() + SEMI_MARGIN * scale
        };
        let m1 = margin(&lmi1);
        let m2 = margin(&lmi2);
        Ok(alloc::vec![(lmi1, m1), (lmi2, m2)])
    }

    /// The Prop-3 block-diagonal test matrix U_sigma for a candidate horizon.
    pub fn build_u_sigma(&self, sigma: &SamplingHorizon, phi: &Matrix) -> Result<SymmetricMatrix> {
        let PerturbedVariant::Online { m, gamma } = &self.variant else {
            return Err(Error::Domain("U_sigma needs the online variant".into()));
        };
        let n = self.state_dim();
        let rho = num::exp(-self.beta * sigma.duration());
        let pm = self.p.matrix().add(m.matrix())?;
        let block1 = self
            .p
            .matrix()
            .scale(rho - gamma)
            .sub(&phi.transpose().mul(&pm)?.mul(phi)?)?;
        let theta = self.varpi * self.growth_sum(sigma.len());
        let block2 = gamma - theta * theta * self.lambda_term;

        let mut u = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                u.set(i, j, block1.get(i, j));
            }
        }
        u.set(n, n, block2);
        Ok(SymmetricMatrix::enforce(u))
    }

    /// Value of (x; 1)^T U_sigma (x; 1) without materializing the matrix.
    pub fn u_sigma_value(&self, sigma_len: usize, duration: f64, phi: &Matrix, x: &[f64]) -> f64 {
        let PerturbedVariant::Online { m, gamma } = &self.variant else {
            return f64::NEG_INFINITY;
        };
        let rho = num::exp(-self.beta * duration);
        let phix = phi.mul_vec(x);
        let p_phix = self.p.matrix().mul_vec(&phix);
        let m_phix = m.matrix().mul_vec(&phix);
        let quad_pm: f64 = phix
            .iter()
            .zip(p_phix.iter().zip(&m_phix))
            .map(|(a, (b, c))| a * (b + c))
            .sum();
        let quad_p = self.p.quad(x);
        let theta = self.varpi * self.growth_sum(sigma_len);
        (rho - gamma) * quad_p - quad_pm + gamma - theta * theta * self.lambda_term
    }

    /// The Prop-4 offline feasibility matrix for a candidate horizon,
    /// optionally with the conic term eps_c Q_c added to the top-left block.
    ///
    /// With eps_c = 0 and Q_c absent this is the plain Prop-4 matrix U.
    pub fn build_u_offline(
        &self,
        sigma: &SamplingHorizon,
        phi: &Matrix,
        conic: Option<(&SymmetricMatrix, f64)>,
    ) -> Result<SymmetricMatrix> {
        let PerturbedVariant::Offline { gamma1, gamma2 } = self.variant else {
            return Err(Error::Domain("U_c needs the offline variant".into()));
        };
        let n = self.state_dim();
        let rho = num::exp(-self.beta * sigma.duration());
        let theta = self.varpi * self.growth_sum(sigma.len());

        let mut u11 = self
            .p
            .matrix()
            .scale(rho - gamma1)
            .sub(&phi.transpose().mul(self.p.matrix())?.mul(phi)?)?;
        if let Some((q_c, eps)) = conic {
            u11 = u11.add(&q_c.matrix().scale(eps))?;
        }
        let u21 = self.p.matrix().mul(phi)?.scale(-1.0);

        let mut u = Matrix::zeros(2 * n + 1, 2 * n + 1);
        for i in 0..n {
            for j in 0..n {
                u.set(i, j, u11.get(i, j));
                u.set(n + i, j, u21.get(i, j));
                u.set(j, n + i, u21.get(i, j));
                u.set(n + i, n + j, -self.p.matrix().get(i, j));
            }
        }
        if theta > 0.0 {
            for i in 0..n {
                let v = u.get(n + i, n + i) + gamma2 / theta;
                u.set(n + i, n + i, v);
            }
        } else {
            // No disturbance: the middle block is +infinity on the diagonal in
            // the limit; stand in a large finite surrogate so the PSD test
            // degenerates to the u11 block.
            let big = 1e12 * (1.0 + self.p.matrix().max_abs());
            for i in 0..n {
                u.set(n + i, n + i, big);
            }
        }
        u.set(2 * n, 2 * n, gamma1 - gamma2);
        Ok(SymmetricMatrix::enforce(u))
    }

    /// Semidefinite margin of the Prop-4 matrix U for sigma*.
    pub fn offline_lmi_margin(&self, phi_star: &Matrix) -> Result<f64> {
        let u = self.build_u_offline(&self.sigma_star.clone(), phi_star, None)?;
        let scale = u.matrix().max_abs().max(1.0);
        Ok(u.min_eigenvalue() + SEMI_MARGIN * scale)
    }

    /// Full verification: P > 0, variant-specific positivity, and the
    /// variant's LMIs. Returns the smallest margin (>= 0 passes).
    pub fn verify(&self, phi_star: &Matrix) -> Result<f64> {
        let mut worst = self.p.min_eigenvalue();
        match &self.variant {
            PerturbedVariant::Online { m, gamma } => {
                worst = worst.min(m.min_eigenvalue());
                if !(*gamma > 0.0) {
                    return Err(Error::Domain("gamma must be positive".into()));
                }
                for (_, margin) in self.online_lmis(phi_star)? {
                    worst = worst.min(margin);
                }
            }
            PerturbedVariant::Offline { gamma1, gamma2 } => {
                if !(*gamma1 > 0.0 && *gamma2 > 0.0) {
                    return Err(Error::Domain("gamma1 and gamma2 must be positive".into()));
                }
                worst = worst.min(self.offline_lmi_margin(phi_star)?);
            }
        }
        Ok(worst)
    }

    /// Largest varpi in (0, varpi_cap] for which the certificate's LMIs pass,
    /// found by bisection. Feasibility is monotone: growing varpi only shrinks
    /// the gamma/chi terms.
    pub fn largest_feasible_varpi(&self, phi_star: &Matrix, varpi_cap: f64) -> Result<Option<f64>> {
        let probe = |varpi: f64| -> Result<bool> {
            let mut c = self.clone();
            c.varpi = varpi;
            Ok(c.verify(phi_star)? >= 0.0)
        };
        if probe(varpi_cap)? {
            return Ok(Some(varpi_cap));
        }
        if !probe(0.0)? {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0.0, varpi_cap);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if probe(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > 0.0 {
            Ok(Some(lo))
        } else {
            Ok(None)
        }
    }

    pub fn lyapunov(&self, x: &[f64]) -> f64 {
        self.p.quad(x)
    }
}

/// x in E(P, level)?
pub fn in_ellipsoid(p: &SymmetricMatrix, level: f64, x: &[f64]) -> bool {
    p.quad(x) <= level + 1e-12 * (1.0 + num::abs(level))
}

/// Parameters for the heuristic grid search over externally unconstrained
/// certificate degrees of freedom.
pub struct PerturbedSearch {
    pub beta: f64,
    pub sigma_star: SamplingHorizon,
    pub variant_gammas: VariantGammas,
    pub varpi: f64,
    pub mu_variant: MuVariant,
}

pub enum VariantGammas {
    Online { gamma: f64 },
    Offline { gamma1: f64, gamma2: f64 },
}

/// Two-parameter log-grid search for a perturbed certificate: P = s P0 with
/// P0 the Stein solution of the unperturbed certificate, and (online only)
/// M = alpha I. First grid point passing every PSD test wins.
pub fn find_perturbed_certificate(
    plant: &PlantModel,
    space: &HorizonSpace,
    cache: &DiscretizationCache,
    search: &PerturbedSearch,
) -> Result<PerturbedCertificate> {
    let phi_star = search.sigma_star.transition(cache)?;
    let seed = StabilityCertificate::construct(&phi_star, search.beta, search.sigma_star.clone())?;
    let growth = plant.growth_constant(space.gamma())?;
    let t_max = space.t_max();
    let fallback = plant.fallback_norm(t_max)?;

    let log_grid = |lo: f64, hi: f64, count: usize| -> Vec<f64> {
        let (llo, lhi) = (num::ln(lo), num::ln(hi));
        (0..count)
            .map(|i| num::exp(llo + (lhi - llo) * i as f64 / (count - 1) as f64))
            .collect()
    };

    let mut best_margin = f64::NEG_INFINITY;
    for &s in &log_grid(1e-3, 1e3, 61) {
        let p = SymmetricMatrix::enforce(seed.p.matrix().scale(s));
        match &search.variant_gammas {
            VariantGammas::Online { gamma } => {
                for &alpha in &log_grid(1e-2, 1e3, 51) {
                    let m = SymmetricMatrix::enforce(Matrix::identity(p.dim()).scale(alpha));
                    let cand = PerturbedCertificate::new(
                        p.clone(),
                        PerturbedVariant::Online { m, gamma: *gamma },
                        search.beta,
                        search.sigma_star.clone(),
                        search.varpi,
                        growth,
                        fallback,
                        t_max,
                        search.mu_variant,
                    )?;
                    let margin = cand.verify(&phi_star)?;
                    if margin >= 0.0 {
                        return Ok(cand);
                    }
                    best_margin = best_margin.max(margin);
                }
            }
            VariantGammas::Offline { gamma1, gamma2 } => {
                let cand = PerturbedCertificate::new(
                    p.clone(),
                    PerturbedVariant::Offline {
                        gamma1: *gamma1,
                        gamma2: *gamma2,
                    },
                    search.beta,
                    search.sigma_star.clone(),
                    search.varpi,
                    growth,
                    fallback,
                    t_max,
                    search.mu_variant,
                )?;
                let margin = cand.verify(&phi_star)?;
                if margin >= 0.0 {
                    return Ok(cand);
                }
                best_margin = best_margin.max(margin);
            }
        }
    }
    Err(Error::Infeasible(format!(
        "certificate grid exhausted; best min-eigenvalue margin {best_margin:.6e} \
         (supply an external SDP solution or relax gamma)"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_certificate() {
        let phi = Matrix::from_rows(&[&[0.5]]).unwrap();
        let cert =
            StabilityCertificate::construct(&phi, 0.0, SamplingHorizon::singleton(1.0)).unwrap();
        assert!((cert.p.matrix().get(0, 0) - 4.0 / 3.0).abs() < 1e-12);
        assert!(cert.verify(&phi).unwrap() > 0.0);
    }

    #[test]
    fn boundary_beta_infeasible() {
        let phi = Matrix::from_rows(&[&[0.9]]).unwrap();
        // e^{-beta} < 0.81 for beta > 0.2107
        let res = StabilityCertificate::construct(&phi, 0.5, SamplingHorizon::singleton(1.0));
        assert!(matches!(res, Err(Error::Infeasible(_))));
    }

    fn toy_perturbed(varpi: f64, gamma: f64) -> (PerturbedCertificate, Matrix) {
        let phi = Matrix::from_rows(&[&[0.5, 0.0], &[0.0, 0.4]]).unwrap();
        let p = SymmetricMatrix::identity(2);
        let m = SymmetricMatrix::enforce(Matrix::identity(2).scale(2.0));
        let cert = PerturbedCertificate::new(
            p,
            PerturbedVariant::Online { m, gamma },
            0.0,
            SamplingHorizon::singleton(1.0),
            varpi,
            0.5,
            0.5,
            1.0,
            MuVariant::Paper,
        )
        .unwrap();
        (cert, phi)
    }

    #[test]
    fn u_sigma_zero_disturbance_block() {
        let (cert, phi) = toy_perturbed(0.0, 1e-9);
        let sigma = SamplingHorizon::singleton(1.0);
        let u = cert.build_u_sigma(&sigma, &phi).unwrap();
        // varpi = 0, gamma -> 0+: the scalar block is just gamma > 0
        let last = u.dim() - 1;
        assert!(u.matrix().get(last, last) > 0.0);
        assert!((u.matrix().get(last, last) - 1e-9).abs() < 1e-18);
    }

    #[test]
    fn u_sigma_scalar_hand_computed() {
        let phi = Matrix::from_rows(&[&[0.5]]).unwrap();
        let p = SymmetricMatrix::identity(1);
        let m = SymmetricMatrix::enforce(Matrix::identity(1).scale(2.0));
        let cert = PerturbedCertificate::new(
            p,
            PerturbedVariant::Online { m, gamma: 0.1 },
            0.0,
            SamplingHorizon::singleton(1.0),
            0.3,
            0.5,
            0.5,
            1.0,
            MuVariant::Paper,
        )
        .unwrap();
        let sigma = SamplingHorizon::singleton(1.0);
        let u = cert.build_u_sigma(&sigma, &phi).unwrap();
        // block1 = -0.25*(1+2) + (1 - 0.1)*1 = 0.15
        assert!((u.matrix().get(0, 0) - 0.15).abs() < 1e-12);
        // lambda_term = 1*0.5*1 + 1 = 1.5; theta = 0.3 * 1 = 0.3
        // block2 = -(0.09)*1.5 + 0.1 = -0.035
        assert!((u.matrix().get(1, 1) - (-0.035)).abs() < 1e-12);
        // fast path agrees with the materialized matrix
        let x = [2.0];
        let v = cert.u_sigma_value(1, 1.0, &phi, &x);
        assert!((v - (0.15 * 4.0 - 0.035)).abs() < 1e-12);
    }

    #[test]
    fn u_offline_block_symmetry_and_additivity() {
        let phi = Matrix::from_rows(&[&[0.5, 0.1], &[0.0, 0.4]]).unwrap();
        let p = SymmetricMatrix::identity(2);
        let cert = PerturbedCertificate::new(
            p,
            PerturbedVariant::Offline {
                gamma1: 0.3,
                gamma2: 0.25,
            },
            0.0,
            SamplingHorizon::singleton(1.0),
            0.2,
            0.6,
            0.6,
            1.0,
            MuVariant::Paper,
        )
        .unwrap();
        let sigma = SamplingHorizon::singleton(1.0);
        let q_c = SymmetricMatrix::enforce(
            Matrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap(),
        );
        let base = cert.build_u_offline(&sigma, &phi, None).unwrap();
        let with_cone = cert.build_u_offline(&sigma, &phi, Some((&q_c, 0.7))).unwrap();
        // exact block symmetry
        let asym = with_cone
            .matrix()
            .sub(&with_cone.matrix().transpose())
            .unwrap()
            .max_abs();
        assert_eq!(asym, 0.0);
        // additive structure: the conic term only touches the top-left block
        let diff = with_cone.matrix().sub(base.matrix()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((diff.get(i, j) - 0.7 * q_c.matrix().get(i, j)).abs() < 1e-12);
            }
        }
        for i in 2..5 {
            for j in 0..5 {
                assert_eq!(diff.get(i, j), 0.0);
            }
        }
        // u33
        assert!((base.matrix().get(4, 4) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn mu_trivial_cases() {
        let (mut cert, _) = toy_perturbed(0.0, 0.1);
        // P = I, varpi = 0: mu = C'^2, psi = C'^2
        assert!((cert.ultimate_bound() - 0.25).abs() < 1e-12);
        assert!((cert.tangent_ball() - 0.25).abs() < 1e-12);
        cert.fallback = 0.0;
        assert_eq!(cert.ultimate_bound(), 0.0);
    }

    #[test]
    fn ellipsoid_membership() {
        let p = SymmetricMatrix::identity(2);
        assert!(in_ellipsoid(&p, 1.0, &[0.0, 0.0]));
        assert!(in_ellipsoid(&p, 1.0, &[1.0, 0.0])); // boundary
        assert!(!in_ellipsoid(&p, 1.0, &[1.1, 0.0]));
    }

    #[test]
    fn gamma_zero_with_disturbance_infeasible() {
        // gamma / chi -> 0 makes the lower-right LMI2 block -P, never PSD.
        let (cert, phi) = toy_perturbed(0.5, 1e-12);
        let lmis = cert.online_lmis(&phi).unwrap();
        assert!(lmis[1].1 < 0.0);
    }

    #[test]
    fn published_online_certificate_accepted_under_small_varpi() {
        // Benchmark perturbed-online data: published (P, M) with gamma=0.35.
        // Feasibility depends on varpi; at varpi -> 0 both LMIs must pass.
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[-2.0, 3.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        let k = Matrix::from_rows(&[&[1.0, -4.0]]).unwrap();
        let plant = PlantModel::new(a, b, k, None, 0.0).unwrap();
        let gamma_set = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let cache = DiscretizationCache::build(&plant, &gamma_set).unwrap();
        let sigma_star = SamplingHorizon::singleton(0.1);
        let phi_star = sigma_star.transition(&cache).unwrap();

        let p = SymmetricMatrix::new(
            Matrix::from_rows(&[&[1.1403, -0.1484], &[-0.1484, 1.7694]]).unwrap(),
        )
        .unwrap();
        let m = SymmetricMatrix::new(
            Matrix::from_rows(&[&[9.5808, 2.0305], &[2.0305, 8.0881]]).unwrap(),
        )
        .unwrap();
        let growth = plant.growth_constant(&gamma_set).unwrap();
        let fallback = plant.fallback_norm(0.7).unwrap();
        let cert = PerturbedCertificate::new(
            p,
            PerturbedVariant::Online { m, gamma: 0.35 },
            0.0,
            sigma_star,
            1e-6,
            growth,
            fallback,
            0.7,
            MuVariant::Paper,
        )
        .unwrap();
        assert!(cert.verify(&phi_star).unwrap() >= 0.0);
    }
}
