//! On-disk artifact formats: certificate JSON, policy JSON, trace CSV + JSON.
//! All matrices are serialized as row-major nested arrays.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use selftrig::{
    MuVariant, PerturbedCertificate, PerturbedVariant, PolicyMode, RegionEntry, RegionPolicy,
    SamplingHorizon, SimulationTrace, StabilityCertificate, TriggerMode,
};

use crate::errors::{CliError, CliResult};
use crate::scenario::{matrix_to_rows, symmetric_from};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serialization: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CertificateFile {
    Unperturbed {
        beta: f64,
        sigma_star: Vec<f64>,
        p: Vec<Vec<f64>>,
        rho: f64,
        margin: f64,
    },
    OnlinePerturbed {
        beta: f64,
        sigma_star: Vec<f64>,
        p: Vec<Vec<f64>>,
        m: Vec<Vec<f64>>,
        gamma: f64,
        varpi: f64,
        growth: f64,
        fallback: f64,
        t_max: f64,
        mu_variant: String,
        mu: f64,
        margin: f64,
        /// Only present when the requested varpi failed the LMIs.
        largest_feasible_varpi: Option<f64>,
    },
    OfflinePerturbed {
        beta: f64,
        sigma_star: Vec<f64>,
        p: Vec<Vec<f64>>,
        gamma1: f64,
        gamma2: f64,
        varpi: f64,
        growth: f64,
        fallback: f64,
        t_max: f64,
        mu_variant: String,
        mu: f64,
        margin: f64,
        largest_feasible_varpi: Option<f64>,
    },
}

fn mu_variant_str(v: MuVariant) -> String {
    match v {
        MuVariant::Paper => "paper".into(),
        MuVariant::Corrected => "corrected".into(),
    }
}

fn mu_variant_parse(s: &str) -> CliResult<MuVariant> {
    match s {
        "paper" => Ok(MuVariant::Paper),
        "corrected" => Ok(MuVariant::Corrected),
        other => Err(CliError::Validation(format!("unknown mu_variant {other}"))),
    }
}

impl CertificateFile {
    pub fn from_unperturbed(cert: &StabilityCertificate, margin: f64) -> Self {
        CertificateFile::Unperturbed {
            beta: cert.beta,
            sigma_star: cert.sigma_star.intervals().to_vec(),
            p: matrix_to_rows(cert.p.matrix()),
            rho: cert.rho,
            margin,
        }
    }

    pub fn from_perturbed(
        cert: &PerturbedCertificate,
        margin: f64,
        largest_feasible_varpi: Option<f64>,
    ) -> Self {
        let common_p = matrix_to_rows(cert.p.matrix());
        match &cert.variant {
            PerturbedVariant::Online { m, gamma } => CertificateFile::OnlinePerturbed {
                beta: cert.beta,
                sigma_star: cert.sigma_star.intervals().to_vec(),
                p: common_p,
                m: matrix_to_rows(m.matrix()),
                gamma: *gamma,
                varpi: cert.varpi,
                growth: cert.growth,
                fallback: cert.fallback,
                t_max: cert.t_max,
                mu_variant: mu_variant_str(cert.mu_variant),
                mu: cert.ultimate_bound(),
                margin,
                largest_feasible_varpi,
            },
            PerturbedVariant::Offline { gamma1, gamma2 } => CertificateFile::OfflinePerturbed {
                beta: cert.beta,
                sigma_star: cert.sigma_star.intervals().to_vec(),
                p: common_p,
                gamma1: *gamma1,
                gamma2: *gamma2,
                varpi: cert.varpi,
                growth: cert.growth,
                fallback: cert.fallback,
                t_max: cert.t_max,
                mu_variant: mu_variant_str(cert.mu_variant),
                mu: cert.ultimate_bound(),
                margin,
                largest_feasible_varpi,
            },
        }
    }

    /// Reconstructs the library certificate. Unperturbed files yield Left,
    /// perturbed ones Right.
    pub fn into_certificates(
        self,
    ) -> CliResult<Result<StabilityCertificate, PerturbedCertificate>> {
        match self {
            CertificateFile::Unperturbed {
                beta,
                sigma_star,
                p,
                rho: _,
                margin: _,
            } => {
                let p = symmetric_from(&p, "certificate.p")?;
                let sigma = SamplingHorizon::new(sigma_star).map_err(CliError::from)?;
                // bypass re-verification here; `verify` recomputes margins
                // against the scenario transition matrix
                Ok(Ok(StabilityCertificate {
                    rho: (-beta * sigma.duration()).exp(),
                    p,
                    beta,
                    sigma_star: sigma,
                }))
            }
            CertificateFile::OnlinePerturbed {
                beta,
                sigma_star,
                p,
                m,
                gamma,
                varpi,
                growth,
                fallback,
                t_max,
                mu_variant,
                ..
            } => {
                let cert = PerturbedCertificate::new(
                    symmetric_from(&p, "certificate.p")?,
                    PerturbedVariant::Online {
                        m: symmetric_from(&m, "certificate.m")?,
                        gamma,
                    },
                    beta,
                    SamplingHorizon::new(sigma_star).map_err(CliError::from)?,
                    varpi,
                    growth,
                    fallback,
                    t_max,
                    mu_variant_parse(&mu_variant)?,
                )?;
                Ok(Err(cert))
            }
            CertificateFile::OfflinePerturbed {
                beta,
                sigma_star,
                p,
                gamma1,
                gamma2,
                varpi,
                growth,
                fallback,
                t_max,
                mu_variant,
                ..
            } => {
                let cert = PerturbedCertificate::new(
                    symmetric_from(&p, "certificate.p")?,
                    PerturbedVariant::Offline { gamma1, gamma2 },
                    beta,
                    SamplingHorizon::new(sigma_star).map_err(CliError::from)?,
                    varpi,
                    growth,
                    fallback,
                    t_max,
                    mu_variant_parse(&mu_variant)?,
                )?;
                Ok(Err(cert))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub mode: String,
    pub regions: usize,
    pub overlap: f64,
    pub gamma: Vec<f64>,
    pub l_min: usize,
    pub l_max: usize,
    pub beta: f64,
    pub entries: Vec<PolicyEntryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyEntryFile {
    pub average: f64,
    pub horizons: Vec<Vec<f64>>,
    pub epsilons: Vec<f64>,
}

impl PolicyFile {
    #[allow(clippy::too_many_arguments)]
    pub fn from_policy(
        policy: &RegionPolicy,
        regions: usize,
        overlap: f64,
        gamma: &[f64],
        l_min: usize,
        l_max: usize,
        beta: f64,
    ) -> Self {
        PolicyFile {
            mode: match policy.mode {
                PolicyMode::Unperturbed => "unperturbed".into(),
                PolicyMode::Perturbed => "perturbed".into(),
            },
            regions,
            overlap,
            gamma: gamma.to_vec(),
            l_min,
            l_max,
            beta,
            entries: policy
                .entries
                .iter()
                .map(|e| PolicyEntryFile {
                    average: e.average,
                    horizons: e.horizons.iter().map(|h| h.intervals().to_vec()).collect(),
                    epsilons: e.epsilons.clone(),
                })
                .collect(),
        }
    }

    pub fn into_policy(self) -> CliResult<RegionPolicy> {
        let mode = match self.mode.as_str() {
            "unperturbed" => PolicyMode::Unperturbed,
            "perturbed" => PolicyMode::Perturbed,
            other => {
                return Err(CliError::Validation(format!("unknown policy mode {other}")))
            }
        };
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in self.entries {
            let horizons = e
                .horizons
                .into_iter()
                .map(SamplingHorizon::new)
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::from)?;
            if horizons.len() != e.epsilons.len() || horizons.is_empty() {
                return Err(CliError::Validation(
                    "policy entry with mismatched horizons/epsilons".into(),
                ));
            }
            entries.push(RegionEntry {
                horizons,
                epsilons: e.epsilons,
                average: e.average,
            });
        }
        Ok(RegionPolicy { mode, entries })
    }

    /// A stored policy applies only if it was computed for the same space,
    /// partition and decay rate.
    #[allow(clippy::too_many_arguments)]
    pub fn matches(
        &self,
        regions: usize,
        overlap: f64,
        gamma: &[f64],
        l_min: usize,
        l_max: usize,
        beta: f64,
        perturbed: bool,
    ) -> bool {
        self.regions == regions
            && self.overlap == overlap
            && self.gamma == gamma
            && self.l_min == l_min
            && self.l_max == l_max
            && self.beta == beta
            && (self.mode == "perturbed") == perturbed
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceFile {
    pub scenario: String,
    pub mechanism: String,
    pub average_interval: f64,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    pub mu: Option<f64>,
    pub decisions: Vec<DecisionFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionFile {
    pub time: f64,
    pub state: Vec<f64>,
    pub horizon: Vec<f64>,
    pub lyapunov: f64,
    pub feasible: u64,
    pub ties: u64,
    pub mode: String,
    pub wall_micros: u64,
}

pub fn mode_str(mode: TriggerMode) -> &'static str {
    match mode {
        TriggerMode::OnlineUnperturbed => "online-unperturbed",
        TriggerMode::OfflineUnperturbed => "offline-unperturbed",
        TriggerMode::OnlinePerturbed => "online-perturbed",
        TriggerMode::OfflinePerturbed => "offline-perturbed",
        TriggerMode::FallbackTmax => "fallback-tmax",
    }
}

impl TraceFile {
    pub fn from_trace(
        trace: &SimulationTrace,
        scenario: String,
        mechanism: String,
        mu: Option<f64>,
    ) -> Self {
        TraceFile {
            scenario,
            mechanism,
            average_interval: trace.average_interval(),
            final_time: trace.final_time,
            final_state: trace.final_state.clone(),
            mu,
            decisions: trace
                .decisions
                .iter()
                .map(|d| DecisionFile {
                    time: d.time,
                    state: d.state.clone(),
                    horizon: d.horizon.intervals().to_vec(),
                    lyapunov: d.lyapunov,
                    feasible: d.feasible_count,
                    ties: d.tie_count,
                    mode: mode_str(d.mode).into(),
                    wall_micros: d.wall_micros,
                })
                .collect(),
        }
    }

    /// Rebuilds the minimal trace the verifier needs: decision instants plus
    /// the final state.
    pub fn into_trace(self) -> CliResult<SimulationTrace> {
        let mut decisions = Vec::with_capacity(self.decisions.len());
        for d in self.decisions {
            let horizon = SamplingHorizon::new(d.horizon).map_err(CliError::from)?;
            decisions.push(selftrig::DecisionRecord {
                time: d.time,
                state: d.state,
                lyapunov: d.lyapunov,
                feasible_count: d.feasible,
                tie_count: d.ties,
                mode: match d.mode.as_str() {
                    "online-unperturbed" => TriggerMode::OnlineUnperturbed,
                    "offline-unperturbed" => TriggerMode::OfflineUnperturbed,
                    "online-perturbed" => TriggerMode::OnlinePerturbed,
                    "offline-perturbed" => TriggerMode::OfflinePerturbed,
                    "fallback-tmax" => TriggerMode::FallbackTmax,
                    other => {
                        return Err(CliError::Validation(format!(
                            "unknown decision mode {other}"
                        )))
                    }
                },
                wall_micros: d.wall_micros,
                horizon,
            });
        }
        Ok(SimulationTrace {
            decisions,
            samples: Vec::new(),
            dense: Vec::new(),
            final_time: self.final_time,
            final_state: self.final_state,
        })
    }
}

/// Column contract: t, x1..xn, v, horizon_id, interval. `horizon_id` is the
/// index into the JSON decision list that produced the row's interval;
/// the first row carries horizon_id -1 and interval 0.
pub fn write_trace_csv(
    path: &Path,
    trace: &SimulationTrace,
    lyapunov: impl Fn(&[f64]) -> f64,
) -> CliResult<()> {
    let n = trace.final_state.len();
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    writeln!(f, "t,{},v,horizon_id,interval", cols.join(","))?;

    // map each sample to the decision whose horizon covers it
    let mut decision_idx = 0usize;
    let mut interval_in_horizon = 0usize;
    let mut prev_t = 0.0f64;
    for (row, (t, x)) in trace.samples.iter().enumerate() {
        let (hid, interval): (i64, f64) = if row == 0 {
            (-1, 0.0)
        } else {
            let d = &trace.decisions[decision_idx];
            let iv = t - prev_t;
            let hid = decision_idx as i64;
            interval_in_horizon += 1;
            if interval_in_horizon >= d.horizon.len() {
                interval_in_horizon = 0;
                decision_idx = (decision_idx + 1).min(trace.decisions.len() - 1);
            }
            (hid, iv)
        };
        let xs: Vec<String> = x.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(
            f,
            "{t:.9},{},{:.12e},{hid},{interval:.9}",
            xs.join(","),
            lyapunov(x)
        )?;
        prev_t = *t;
    }
    Ok(())
}
