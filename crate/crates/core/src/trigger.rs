//! The four self-triggering mechanisms: online/offline crossed with
//! unperturbed/perturbed, plus the per-region policy precomputation the
//! offline mechanisms rely on.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::certificates::{
    in_ellipsoid, PerturbedCertificate, PerturbedVariant, StabilityCertificate,
};
use crate::error::{Error, Result};
use crate::horizons::{HorizonSpace, SamplingHorizon};
use crate::matrix::{Matrix, SymmetricMatrix};
use crate::num;
use crate::partition::{affine_epsilon_search, ConicPartition};

/// Averages closer than this are treated as tied.
const AVG_TIE_TOL: f64 = 1e-9;
/// Semidefinite slack for the region feasibility searches.
const REGION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerMode {
    OnlineUnperturbed,
    OfflineUnperturbed,
    OnlinePerturbed,
    OfflinePerturbed,
    FallbackTmax,
}

/// Outcome of one triggering decision.
#[derive(Debug, Clone)]
pub struct TriggerDecision {
    pub horizon: SamplingHorizon,
    pub feasible_count: u64,
    pub tie_count: u64,
    pub mode: TriggerMode,
}

/// How to resolve ties among equal-average feasible horizons. Random picks
/// spread the load across equally good horizons; the deterministic default
/// keeps runs reproducible (first in enumeration order, with sigma* seeded ahead of the
/// scan).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Deterministic,
    SeededRandom,
}

/// Tracks the argmax set incrementally; with a RNG present, reservoir
/// sampling gives each tied horizon equal probability.
struct ArgmaxTracker<'r> {
    best: SamplingHorizon,
    best_avg: f64,
    tie_count: u64,
    feasible_count: u64,
    rng: Option<&'r mut dyn RngCore>,
}

impl<'r> ArgmaxTracker<'r> {
    fn seeded(sigma_star: &SamplingHorizon, rng: Option<&'r mut dyn RngCore>) -> Self {
        Self {
            best: sigma_star.clone(),
            best_avg: sigma_star.average_interval(),
            tie_count: 1,
            feasible_count: 1,
            rng,
        }
    }

    fn offer(&mut self, horizon: &SamplingHorizon) {
        self.feasible_count += 1;
        let avg = horizon.average_interval();
        if avg > self.best_avg + AVG_TIE_TOL {
            self.best = horizon.clone();
            self.best_avg = avg;
            self.tie_count = 1;
        } else if (avg - self.best_avg).abs() <= AVG_TIE_TOL {
            self.tie_count += 1;
            if let Some(rng) = self.rng.as_deref_mut() {
                if rng.next_u64() % self.tie_count == 0 {
                    self.best = horizon.clone();
                }
            }
        }
    }

    fn finish(self, mode: TriggerMode) -> TriggerDecision {
        TriggerDecision {
            horizon: self.best,
            feasible_count: self.feasible_count,
            tie_count: self.tie_count,
            mode,
        }
    }
}

/// Online unperturbed mechanism: full scan of the horizon set with the
/// pointwise quadratic feasibility test, argmax of the average interval.
pub fn decide_online_unperturbed(
    x: &[f64],
    cert: &StabilityCertificate,
    space: &HorizonSpace,
    cache: &crate::plant::DiscretizationCache,
    rng: Option<&mut dyn RngCore>,
) -> Result<TriggerDecision> {
    let mut tracker = ArgmaxTracker::seeded(&cert.sigma_star, rng);
    space.visit_transitions(cache, |h, phi| {
        if h == &cert.sigma_star {
            return; // seeded
        }
        if cert.pointwise_value(phi, h.duration(), x) <= 0.0 {
            tracker.offer(h);
        }
    })?;
    Ok(tracker.finish(TriggerMode::OnlineUnperturbed))
}

/// Online perturbed mechanism: fallback to the singleton (T_max) inside
/// E(P,1); otherwise scan with the U_sigma affine test.
pub fn decide_online_perturbed(
    x: &[f64],
    cert: &PerturbedCertificate,
    space: &HorizonSpace,
    cache: &crate::plant::DiscretizationCache,
    rng: Option<&mut dyn RngCore>,
) -> Result<TriggerDecision> {
    if !matches!(cert.variant, PerturbedVariant::Online { .. }) {
        return Err(Error::Domain(
            "online perturbed decisions need an online-variant certificate".into(),
        ));
    }
    if in_ellipsoid(&cert.p, 1.0, x) {
        return Ok(TriggerDecision {
            horizon: SamplingHorizon::singleton(cert.t_max),
            feasible_count: 1,
            tie_count: 1,
            mode: TriggerMode::FallbackTmax,
        });
    }
    let mut tracker = ArgmaxTracker::seeded(&cert.sigma_star, rng);
    space.visit_transitions(cache, |h, phi| {
        if h == &cert.sigma_star {
            return;
        }
        if cert.u_sigma_value(h.len(), h.duration(), phi, x) >= 0.0 {
            tracker.offer(h);
        }
    })?;
    Ok(tracker.finish(TriggerMode::OnlinePerturbed))
}

/// Per-region optimal horizon table.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPolicy {
    pub mode: PolicyMode,
    pub entries: Vec<RegionEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Unperturbed,
    Perturbed,
}

/// All maximal-average horizons admissible in one conic region, with the
/// multipliers that certified them (for audit output).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEntry {
    pub horizons: Vec<SamplingHorizon>,
    pub epsilons: Vec<f64>,
    pub average: f64,
}

/// Horizon table shared across regions during precomputation: transition
/// matrices are computed once, then sorted by average interval (descending,
/// enumeration order within ties).
struct HorizonTable {
    records: Vec<HorizonRecord>,
}

struct HorizonRecord {
    horizon: SamplingHorizon,
    phi: Matrix,
    average: f64,
}

impl HorizonTable {
    fn build(space: &HorizonSpace, cache: &crate::plant::DiscretizationCache) -> Result<Self> {
        let mut records = Vec::with_capacity(space.count().min(1 << 22) as usize);
        space.visit_transitions(cache, |h, phi| {
            records.push(HorizonRecord {
                horizon: h.clone(),
                phi: phi.clone(),
                average: h.average_interval(),
            });
        })?;
        records.sort_by(|a, b| b.average.partial_cmp(&a.average).expect("finite averages"));
        Ok(Self { records })
    }

    /// Index ranges of equal-average classes, best average first.
    fn classes(&self) -> Vec<core::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len()
                || (self.records[i].average - self.records[start].average).abs() > AVG_TIE_TOL
            {
                out.push(start..i);
                start = i;
            }
        }
        out
    }
}

/// Offline unperturbed precomputation: for every conic region, the set of
/// maximal-average horizons that admit a multiplier eps_c > 0 with
/// Phi^T P Phi - e^{-beta*duration} P + eps_c Q_c <= 0.
///
/// Horizon classes are scanned in descending average order and the scan stops
/// at the first class with a feasible member (or at sigma*'s class, which is
/// always feasible by the certificate).
pub fn precompute_offline_unperturbed(
    cert: &StabilityCertificate,
    space: &HorizonSpace,
    cache: &crate::plant::DiscretizationCache,
    partition: &ConicPartition,
) -> Result<RegionPolicy> {
    let table = HorizonTable::build(space, cache)?;
    let classes = table.classes();
    let sigma_star_avg = cert.sigma_star.average_interval();

    // Negated decay forms -W_sigma, shared across regions.
    let neg_w: Vec<SymmetricMatrix> = table
        .records
        .iter()
        .map(|r| {
            let rho = num::exp(-cert.beta * r.horizon.duration());
            let w = r
                .phi
                .transpose()
                .mul(cert.p.matrix())
                .and_then(|m| m.mul(&r.phi))
                .and_then(|m| m.sub(&cert.p.matrix().scale(rho)))
                .expect("square forms");
            SymmetricMatrix::enforce(w.scale(-1.0))
        })
        .collect();
    // Horizons already negative semidefinite globally are feasible in every
    // region with the smallest multiplier.
    let globally_ok: Vec<bool> = neg_w
        .iter()
        .map(|nw| nw.min_eigenvalue() >= -REGION_TOL * (1.0 + nw.matrix().max_abs()))
        .collect();

    let mut entries = Vec::with_capacity(partition.len());
    for c in 0..partition.len() {
        let q_c = partition.region_matrix(c);
        let neg_q = SymmetricMatrix::enforce(q_c.matrix().scale(-1.0));
        let axis_dirs = witness_directions(partition, c);
        let mut entry: Option<RegionEntry> = None;
        for class in &classes {
            let class_avg = table.records[class.start].average;
            if class_avg < sigma_star_avg - AVG_TIE_TOL && entry.is_none() {
                break; // sigma* class passed without a hit; fall through to seed
            }
            let mut horizons = Vec::new();
            let mut epsilons = Vec::new();
            for idx in class.clone() {
                let rec = &table.records[idx];
                let tol = REGION_TOL * (1.0 + neg_w[idx].matrix().max_abs());
                if globally_ok[idx] {
                    horizons.push(rec.horizon.clone());
                    epsilons.push(1e-9);
                    continue;
                }
                // cheap sound reject: a direction inside the cone where the
                // decay form is already positive stays positive for any eps
                if axis_dirs
                    .iter()
                    .any(|d| q_c.quad(d) >= 0.0 && -neg_w[idx].quad(d) > tol)
                {
                    continue;
                }
                if let Ok((eps, _)) = affine_epsilon_search(&neg_w[idx], &neg_q, tol) {
                    horizons.push(rec.horizon.clone());
                    epsilons.push(eps);
                }
            }
            if !horizons.is_empty() {
                entry = Some(RegionEntry {
                    horizons,
                    epsilons,
                    average: class_avg,
                });
                break;
            }
        }
        let entry = entry.unwrap_or_else(|| RegionEntry {
            horizons: vec![cert.sigma_star.clone()],
            epsilons: vec![1e-9],
            average: sigma_star_avg,
        });
        entries.push(entry);
    }
    Ok(RegionPolicy {
        mode: PolicyMode::Unperturbed,
        entries,
    })
}

/// Offline perturbed precomputation: same region sweep, feasibility through
/// the Prop-4 block matrix U_c >= 0 with the multiplier entering the
/// top-left block.
pub fn precompute_offline_perturbed(
    cert: &PerturbedCertificate,
    space: &HorizonSpace,
    cache: &crate::plant::DiscretizationCache,
    partition: &ConicPartition,
) -> Result<RegionPolicy> {
    let PerturbedVariant::Offline { .. } = cert.variant else {
        return Err(Error::Domain(
            "offline perturbed precomputation needs the offline variant".into(),
        ));
    };
    let n = cert.state_dim();
    let table = HorizonTable::build(space, cache)?;
    let classes = table.classes();
    let sigma_star_avg = cert.sigma_star.average_interval();

    // U_c(eps) = base + eps * embed(Q_c); bases shared across regions.
    let bases: Vec<SymmetricMatrix> = table
        .records
        .iter()
        .map(|r| cert.build_u_offline(&r.horizon, &r.phi, None))
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(partition.len());
    for c in 0..partition.len() {
        let q_c = partition.region_matrix(c);
        let mut bump = Matrix::zeros(2 * n + 1, 2 * n + 1);
        for i in 0..n {
            for j in 0..n {
                bump.set(i, j, q_c.matrix().get(i, j));
            }
        }
        let bump = SymmetricMatrix::enforce(bump);
        let perp = witness_perpendicular(partition, c, 2 * n + 1);

        let mut entry: Option<RegionEntry> = None;
        for class in &classes {
            let class_avg = table.records[class.start].average;
            if class_avg < sigma_star_avg - AVG_TIE_TOL && entry.is_none() {
                break;
            }
            let mut horizons = Vec::new();
            let mut epsilons = Vec::new();
            for idx in class.clone() {
                let rec = &table.records[idx];
                let base = &bases[idx];
                let tol = REGION_TOL * (1.0 + base.matrix().max_abs());
                // sound reject: along a direction with x^T Q_c x <= 0 the
                // multiplier cannot raise the quadratic form
                if base.quad(&perp) < -tol {
                    continue;
                }
                if let Ok((eps, _)) = affine_epsilon_search(base, &bump, tol) {
                    horizons.push(rec.horizon.clone());
                    epsilons.push(eps);
                }
            }
            if !horizons.is_empty() {
                entry = Some(RegionEntry {
                    horizons,
                    epsilons,
                    average: class_avg,
                });
                break;
            }
        }
        let entry = entry.unwrap_or_else(|| RegionEntry {
            horizons: vec![cert.sigma_star.clone()],
            epsilons: vec![1e-9],
            average: sigma_star_avg,
        });
        entries.push(entry);
    }
    Ok(RegionPolicy {
        mode: PolicyMode::Perturbed,
        entries,
    })
}

/// Directions to probe for the cheap infeasibility reject: the cone axis and
/// both nominal boundary rays.
fn witness_directions(partition: &ConicPartition, c: usize) -> Vec<[f64; 2]> {
    let n = partition.len() as f64;
    let axis = (c as f64 + 0.5) * core::f64::consts::PI / n;
    let theta = partition.half_angle();
    [axis, axis - theta, axis + theta]
        .iter()
        .map(|a| [num::cos(*a), num::sin(*a)])
        .collect()
}

/// A padded direction perpendicular to the cone axis (outside the cone),
/// embedded in the block dimension.
fn witness_perpendicular(partition: &ConicPartition, c: usize, dim: usize) -> Vec<f64> {
    let n = partition.len() as f64;
    let axis = (c as f64 + 0.5) * core::f64::consts::PI / n;
    let mut v = vec![0.0; dim];
    v[0] = -num::sin(axis);
    v[1] = num::cos(axis);
    v
}

/// Offline decision: region lookup plus constant-time selection from the
/// stored set. For the perturbed variant pass the ellipsoid matrix and T_max
/// so states inside E(P,1) fall back to the singleton (T_max).
pub fn decide_offline(
    x: &[f64],
    policy: &RegionPolicy,
    partition: &ConicPartition,
    fallback: Option<(&SymmetricMatrix, f64)>,
    rng: Option<&mut dyn RngCore>,
) -> Result<TriggerDecision> {
    if policy.entries.len() != partition.len() {
        return Err(Error::Domain(
            "policy was built for a different partition".into(),
        ));
    }
    let mode = match policy.mode {
        PolicyMode::Unperturbed => TriggerMode::OfflineUnperturbed,
        PolicyMode::Perturbed => TriggerMode::OfflinePerturbed,
    };
    if let Some((p, t_max)) = fallback {
        if policy.mode == PolicyMode::Perturbed && in_ellipsoid(p, 1.0, x) {
            return Ok(TriggerDecision {
                horizon: SamplingHorizon::singleton(t_max),
                feasible_count: 1,
                tie_count: 1,
                mode: TriggerMode::FallbackTmax,
            });
        }
    }
    let entry = &policy.entries[partition.region_of(x)];
    let count = entry.horizons.len() as u64;
    let pick = match rng {
        Some(rng) if count > 1 => (rng.next_u64() % count) as usize,
        _ => 0,
    };
    Ok(TriggerDecision {
        horizon: entry.horizons[pick].clone(),
        feasible_count: count,
        tie_count: count,
        mode,
    })
}
