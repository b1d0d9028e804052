//! Closed-loop simulation of the self-triggered sampling mechanisms, trace
//! verification against the certificate guarantees, and the two-interval
//! stability interplay report.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::certificates::{PerturbedCertificate, StabilityCertificate};
use crate::error::{Error, Result};
use crate::horizons::{HorizonSpace, SamplingHorizon};
use crate::matrix::spectral_radius;
use crate::num;
use crate::partition::ConicPartition;
use crate::plant::{DiscretizationCache, PlantModel};
use crate::trigger::{
    decide_offline, decide_online_perturbed, decide_online_unperturbed, RegionPolicy, TieBreak,
    TriggerDecision, TriggerMode,
};

/// Monotonic time source for decision timing. Injected so the core stays
/// independent of the host clock.
pub trait Clock {
    fn now_micros(&mut self) -> u64;
}

/// Clock that always reads zero; timing fields come out as zero.
pub struct NoClock;

impl Clock for NoClock {
    fn now_micros(&mut self) -> u64 {
        0
    }
}

#[cfg(feature = "std")]
pub struct WallClock {
    start: std::time::Instant,
}

#[cfg(feature = "std")]
impl WallClock {
    pub fn new() -> Self {
        Self {
            start: std::time::Instant::now(),
        }
    }
}

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn now_micros(&mut self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }
}

/// Exogenous disturbance signal. Scalar-valued; it feeds every column of the
/// disturbance channel D uniformly. `UniformNoise` holds a fresh draw from
/// [-bound, bound] over each integration substep.
#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    None,
    Sine { amplitude: f64, angular_frequency: f64 },
    Constant(f64),
    UniformNoise { bound: f64 },
}

impl Disturbance {
    fn is_none(&self) -> bool {
        matches!(self, Disturbance::None)
    }
}

/// Which triggering mechanism drives the loop.
pub enum Mechanism<'a> {
    OnlineUnperturbed(&'a StabilityCertificate),
    OfflineUnperturbed {
        cert: &'a StabilityCertificate,
        policy: &'a RegionPolicy,
        partition: &'a ConicPartition,
    },
    OnlinePerturbed(&'a PerturbedCertificate),
    OfflinePerturbed {
        cert: &'a PerturbedCertificate,
        policy: &'a RegionPolicy,
        partition: &'a ConicPartition,
    },
}

impl Mechanism<'_> {
    fn lyapunov(&self, x: &[f64]) -> f64 {
        match self {
            Mechanism::OnlineUnperturbed(c) | Mechanism::OfflineUnperturbed { cert: c, .. } => {
                c.lyapunov(x)
            }
            Mechanism::OnlinePerturbed(c) | Mechanism::OfflinePerturbed { cert: c, .. } => {
                c.lyapunov(x)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t_end: f64,
    /// Integration substep for the continuous trajectory.
    pub substep: f64,
    pub seed: u64,
    pub tie_break: TieBreak,
    /// Record the substep-resolution trajectory (sampling instants are always
    /// recorded).
    pub record_dense: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_end: 40.0,
            substep: 1e-3,
            seed: 0,
            tie_break: TieBreak::Deterministic,
            record_dense: false,
        }
    }
}

/// One triggering decision as it happened.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub time: f64,
    pub state: Vec<f64>,
    pub horizon: SamplingHorizon,
    pub lyapunov: f64,
    pub feasible_count: u64,
    pub tie_count: u64,
    pub mode: TriggerMode,
    pub wall_micros: u64,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub decisions: Vec<DecisionRecord>,
    /// State at every sampling instant, including t = 0 and the final one.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Substep-resolution trajectory, empty unless requested.
    pub dense: Vec<(f64, Vec<f64>)>,
    pub final_time: f64,
    pub final_state: Vec<f64>,
}

impl SimulationTrace {
    /// Elapsed time divided by the number of sampling intervals.
    pub fn average_interval(&self) -> f64 {
        let intervals = self.samples.len().saturating_sub(1);
        if intervals == 0 {
            0.0
        } else {
            self.final_time / intervals as f64
        }
    }
}

const STATE_LIMIT: f64 = 1e150;

fn check_finite(t: f64, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && num::abs(*v) < STATE_LIMIT) {
        Ok(())
    } else {
        Err(Error::Divergence(alloc::format!(
            "state left the representable range at t = {t:.6}"
        )))
    }
}

/// Runs the closed loop from x0 until at least t_end, committing whole
/// horizons. The state is measured and the control refreshed at every
/// sampling instant; decisions happen at horizon boundaries.
#[allow(clippy::too_many_arguments)]
pub fn run(
    plant: &PlantModel,
    space: &HorizonSpace,
    cache: &DiscretizationCache,
    mechanism: &Mechanism,
    x0: &[f64],
    disturbance: &Disturbance,
    opts: &SimOptions,
    clock: &mut dyn Clock,
) -> Result<SimulationTrace> {
    if x0.len() != plant.state_dim() {
        return Err(Error::Dimension(alloc::format!(
            "initial state has {} entries, plant expects {}",
            x0.len(),
            plant.state_dim()
        )));
    }
    check_finite(0.0, x0)?;
    if !(opts.t_end > 0.0) || !(opts.substep > 0.0) {
        return Err(Error::Domain(
            "t_end and substep must be positive".into(),
        ));
    }
    if !disturbance.is_none() && plant.disturbance_channel().is_none() {
        return Err(Error::Domain(
            "disturbance signal given but the plant has no channel D".into(),
        ));
    }

    let mut tie_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut t = 0.0f64;
    let mut x = x0.to_vec();
    let mut decisions = Vec::new();
    let mut samples = vec![(0.0, x.clone())];
    let mut dense = Vec::new();
    if opts.record_dense {
        dense.push((0.0, x.clone()));
    }

    while t < opts.t_end - 1e-12 {
        let t0 = clock.now_micros();
        let rng: Option<&mut dyn RngCore> = match opts.tie_break {
            TieBreak::Deterministic => None,
            TieBreak::SeededRandom => Some(&mut tie_rng),
        };
        let decision: TriggerDecision = match mechanism {
            Mechanism::OnlineUnperturbed(cert) => {
                decide_online_unperturbed(&x, cert, space, cache, rng)?
            }
            Mechanism::OfflineUnperturbed {
                policy, partition, ..
            } => decide_offline(&x, policy, partition, None, rng)?,
            Mechanism::OnlinePerturbed(cert) => {
                decide_online_perturbed(&x, cert, space, cache, rng)?
            }
            Mechanism::OfflinePerturbed {
                cert,
                policy,
                partition,
            } => decide_offline(&x, policy, partition, Some((&cert.p, cert.t_max)), rng)?,
        };
        let wall_micros = clock.now_micros().saturating_sub(t0);
        decisions.push(DecisionRecord {
            time: t,
            state: x.clone(),
            horizon: decision.horizon.clone(),
            lyapunov: mechanism.lyapunov(&x),
            feasible_count: decision.feasible_count,
            tie_count: decision.tie_count,
            mode: decision.mode,
            wall_micros,
        });

        for &interval in decision.horizon.intervals() {
            step_interval(
                plant,
                cache,
                decision.mode,
                disturbance,
                &mut noise_rng,
                opts,
                t,
                interval,
                &mut x,
                &mut dense,
            )?;
            t += interval;
            check_finite(t, &x)?;
            samples.push((t, x.clone()));
        }
    }

    Ok(SimulationTrace {
        decisions,
        samples,
        dense,
        final_time: t,
        final_state: x,
    })
}

/// Advances the state over one sampling interval with the control held at
/// K x(start). Disturbance-free intervals whose length is in the cache use
/// the exact discretized map; everything else integrates with classic RK4.
#[allow(clippy::too_many_arguments)]
fn step_interval(
    plant: &PlantModel,
    cache: &DiscretizationCache,
    mode: TriggerMode,
    disturbance: &Disturbance,
    noise_rng: &mut ChaCha8Rng,
    opts: &SimOptions,
    t_start: f64,
    interval: f64,
    x: &mut Vec<f64>,
    dense: &mut Vec<(f64, Vec<f64>)>,
) -> Result<()> {
    let x_start = x.clone();
    let exact = disturbance.is_none();
    // exact map: cached for the horizon intervals, direct for the T_max
    // fallback length which may fall outside Gamma
    let exact_map = if exact {
        match cache.get(interval) {
            Ok(d) => Some(d.closed.clone()),
            Err(_) if mode == TriggerMode::FallbackTmax => {
                Some(plant.discretize(interval)?.closed)
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    if opts.record_dense || exact_map.is_none() {
        let n = plant.state_dim();
        // held input term B K x(start)
        let u = plant.gain().mul_vec(x);
        let mut bu = vec![0.0; n];
        for i in 0..n {
            for (j, uj) in u.iter().enumerate() {
                bu[i] += plant.b().get(i, j) * uj;
            }
        }
        let d_cols: Option<Vec<f64>> = plant.disturbance_channel().map(|d| {
            (0..d.rows())
                .map(|i| (0..d.cols()).map(|j| d.get(i, j)).sum())
                .collect()
        });

        let steps = num::ceil(interval / opts.substep).max(1.0) as usize;
        let h = interval / steps as f64;
        let mut y = x.clone();
        for s in 0..steps {
            let tau = t_start + s as f64 * h;
            let w_held = match disturbance {
                Disturbance::UniformNoise { bound } => {
                    let u01 = (noise_rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    bound * (2.0 * u01 - 1.0)
                }
                _ => 0.0,
            };
            let w_at = |tt: f64| -> f64 {
                match disturbance {
                    Disturbance::None => 0.0,
                    Disturbance::Sine {
                        amplitude,
                        angular_frequency,
                    } => amplitude * num::sin(angular_frequency * tt),
                    Disturbance::Constant(c) => *c,
                    Disturbance::UniformNoise { .. } => w_held,
                }
            };
            let deriv = |tt: f64, state: &[f64]| -> Vec<f64> {
                let mut dx = bu.clone();
                for i in 0..n {
                    for j in 0..n {
                        dx[i] += plant.a().get(i, j) * state[j];
                    }
                }
                if let Some(dc) = &d_cols {
                    let w = w_at(tt);
                    for i in 0..n {
                        dx[i] += dc[i] * w;
                    }
                }
                dx
            };
            let k1 = deriv(tau, &y);
            let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = deriv(tau + 0.5 * h, &y2);
            let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = deriv(tau + 0.5 * h, &y3);
            let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = deriv(tau + h, &y4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if opts.record_dense {
                dense.push((tau + h, y.clone()));
            }
        }
        *x = y;
    }

    if let Some(map) = exact_map {
        // the exact endpoint supersedes the integrated one so sampling-instant
        // invariants hold to matrix precision
        *x = map.mul_vec(&x_start);
        if opts.record_dense {
            if let Some(last) = dense.last_mut() {
                last.1 = x.clone();
            }
        }
    }
    Ok(())
}

/// What a trace is checked against.
pub enum TraceCheck<'a> {
    /// Exponential decay at decision instants:
    /// V(x_{k+1}) <= e^{-beta (t_{k+1}-t_k)} V(x_k), with relative slack.
    Unperturbed(&'a StabilityCertificate),
    /// Ultimate boundedness: once V drops to the bound mu at a decision
    /// instant, it stays below mu (with relative slack) forever after.
    Perturbed(&'a PerturbedCertificate),
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest relative excess over the allowed value (negative means all
    /// checks passed with room).
    pub worst: f64,
    /// First decision time at which the trajectory was inside E(P, mu)
    /// (perturbed checks only).
    pub entered_bound_at: Option<f64>,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub fn verify_trace(trace: &SimulationTrace, check: &TraceCheck) -> TraceReport {
    const REL_SLACK: f64 = 1e-9;
    match check {
        TraceCheck::Unperturbed(cert) => {
            // decision instants plus the final state close the last step
            let mut points: Vec<(f64, &[f64])> = trace
                .decisions
                .iter()
                .map(|d| (d.time, d.state.as_slice()))
                .collect();
            points.push((trace.final_time, trace.final_state.as_slice()));
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            let mut checked = 0;
            for w in points.windows(2) {
                let (t0, x0) = w[0];
                let (t1, x1) = w[1];
                let v0 = cert.lyapunov(x0);
                let v1 = cert.lyapunov(x1);
                let allowed = num::exp(-cert.beta * (t1 - t0)) * v0;
                let excess = if allowed > 0.0 {
                    v1 / allowed - 1.0
                } else {
                    v1
                };
                checked += 1;
                worst = worst.max(excess);
                if excess > REL_SLACK {
                    violations += 1;
                }
            }
            TraceReport {
                checked,
                violations,
                worst,
                entered_bound_at: None,
            }
        }
        TraceCheck::Perturbed(cert) => {
            let mu = cert.ultimate_bound();
            let mut entered_at = None;
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            let mut checked = 0;
            let mut points: Vec<(f64, &[f64])> = trace
                .decisions
                .iter()
                .map(|d| (d.time, d.state.as_slice()))
                .collect();
            points.push((trace.final_time, trace.final_state.as_slice()));
            for (t, x) in points {
                let v = cert.lyapunov(x);
                if entered_at.is_none() {
                    if v <= mu {
                        entered_at = Some(t);
                    }
                    continue;
                }
                checked += 1;
                let excess = if mu > 0.0 { v / mu - 1.0 } else { v };
                worst = worst.max(excess);
                if excess > 1e-6 {
                    violations += 1;
                }
            }
            TraceReport {
                checked,
                violations,
                worst,
                entered_bound_at: entered_at,
            }
        }
    }
}

/// Schur stability of one interval's closed-loop map.
#[derive(Debug, Clone)]
pub struct IntervalStability {
    pub interval: f64,
    pub spectral_radius: f64,
    pub schur_stable: bool,
}

/// Stability of a two-interval cycle versus its parts.
#[derive(Debug, Clone)]
pub struct PairCase {
    pub intervals: (f64, f64),
    pub individually_stable: (bool, bool),
    pub product_radius: f64,
    pub product_stable: bool,
}

#[derive(Debug, Clone)]
pub struct MotivationalReport {
    pub sweep: Vec<IntervalStability>,
    pub cases: Vec<PairCase>,
}

/// Spectral-radius sweep over candidate intervals plus an analysis of
/// alternating two-interval schedules, showing that per-interval stability
/// neither implies nor is implied by stability of the cycle.
pub fn motivational_report(
    plant: &PlantModel,
    sweep: &[f64],
    pairs: &[(f64, f64)],
) -> Result<MotivationalReport> {
    let mut out_sweep = Vec::with_capacity(sweep.len());
    for &t in sweep {
        let rho = spectral_radius(&plant.discretize(t)?.closed)?;
        out_sweep.push(IntervalStability {
            interval: t,
            spectral_radius: rho,
            schur_stable: rho < 1.0,
        });
    }
    let mut cases = Vec::with_capacity(pairs.len());
    for &(t1, t2) in pairs {
        let m1 = plant.discretize(t1)?.closed;
        let m2 = plant.discretize(t2)?.closed;
        let r1 = spectral_radius(&m1)?;
        let r2 = spectral_radius(&m2)?;
        let prod = m2.mul(&m1)?;
        let rp = spectral_radius(&prod)?;
        cases.push(PairCase {
            intervals: (t1, t2),
            individually_stable: (r1 < 1.0, r2 < 1.0),
            product_radius: rp,
            product_stable: rp < 1.0,
        });
    }
    Ok(MotivationalReport {
        sweep: out_sweep,
        cases,
    })
}
