//! Subcommand implementations. Each command takes the parsed scenario plus
//! the flag overrides and writes its artifacts under the output directory.

use std::io::Write;
use std::path::Path;

use selftrig::{
    find_perturbed_certificate, ConicPartition, DiscretizationCache, HorizonSpace, Mechanism,
    MuVariant, PerturbedCertificate, PerturbedSearch, PerturbedVariant, PlantModel, RegionPolicy,
    SamplingHorizon, SimOptions, StabilityCertificate, SymmetricMatrix, TraceCheck, VariantGammas,
};

use crate::artifacts::{
    read_json, write_json, write_trace_csv, CertificateFile, PolicyFile, TraceFile,
};
use crate::errors::{CliError, CliResult};
use crate::scenario::{MechanismKind, ScenarioFile, SweepSection, VarpiKeyword, VarpiSpec};

/// Flag overrides that take precedence over scenario values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub substep: Option<f64>,
    pub mu_variant: Option<MuVariant>,
}

/// Worker cap for batch runs: SELFTRIG_THREADS, else available parallelism.
pub fn worker_cap() -> usize {
    std::env::var("SELFTRIG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn ensure_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))
}

/// Everything the triggering mechanisms need, resolved from the scenario.
pub struct Setup {
    pub name: String,
    pub kind: MechanismKind,
    pub plant: PlantModel,
    pub space: HorizonSpace,
    pub cache: DiscretizationCache,
    pub unperturbed: Option<StabilityCertificate>,
    pub perturbed: Option<PerturbedCertificate>,
    /// Margin of the certificate verification, and the largest feasible varpi
    /// when the requested one fails.
    pub margin: f64,
    pub largest_feasible_varpi: Option<f64>,
}

impl Setup {
    pub fn resolve(
        scenario: &ScenarioFile,
        path: &Path,
        overrides: &Overrides,
    ) -> CliResult<Self> {
        let name = scenario.display_name(path);
        let kind = scenario.mechanism()?.kind;
        let beta = scenario.mechanism()?.beta;
        let plant = scenario.plant()?;
        let space = scenario.horizon_space()?;
        let cache = scenario.cache(&plant, &space)?;
        let sigma_star = scenario.sigma_star(&space)?;
        let phi_star = sigma_star.transition(&cache)?;

        let cert_section = scenario.certificate.as_ref();
        let mu_variant = overrides
            .mu_variant
            .or_else(|| cert_section.and_then(|c| c.mu_variant).map(Into::into))
            .unwrap_or_default();

        let mut largest_feasible_varpi = None;
        let (unperturbed, perturbed, margin);
        if kind.is_perturbed() {
            let growth = plant.growth_constant(space.gamma())?;
            let t_max = space.t_max();
            let fallback = plant.fallback_norm(t_max)?;
            let derived_varpi = if plant.disturbance_channel().is_some() && plant.w_max() > 0.0 {
                plant.perturbation_bound(t_max)?
            } else {
                0.0
            };
            let varpi_spec = cert_section
                .and_then(|c| c.varpi.clone())
                .unwrap_or_default();
            let requested_varpi = match varpi_spec {
                VarpiSpec::Value(v) if v >= 0.0 => v,
                VarpiSpec::Value(v) => {
                    return Err(CliError::Validation(format!(
                        "varpi must be nonnegative, got {v}"
                    )))
                }
                VarpiSpec::Keyword(_) => derived_varpi,
            };
            let variant = match kind {
                MechanismKind::OnlinePerturbed => {
                    let gamma = cert_section.and_then(|c| c.gamma).ok_or_else(|| {
                        CliError::Validation("online perturbed mechanism needs certificate.gamma".into())
                    })?;
                    let m = cert_section
                        .and_then(|c| c.m.as_ref())
                        .map(|m| crate::scenario::symmetric_from(m, "certificate.m"))
                        .transpose()?;
                    OnlineOrOffline::Online { gamma, m }
                }
                MechanismKind::OfflinePerturbed => {
                    let gamma1 = cert_section.and_then(|c| c.gamma1).ok_or_else(|| {
                        CliError::Validation("offline perturbed mechanism needs certificate.gamma1".into())
                    })?;
                    let gamma2 = cert_section.and_then(|c| c.gamma2).ok_or_else(|| {
                        CliError::Validation("offline perturbed mechanism needs certificate.gamma2".into())
                    })?;
                    OnlineOrOffline::Offline { gamma1, gamma2 }
                }
                _ => unreachable!(),
            };
            let p_inline = cert_section
                .and_then(|c| c.p.as_ref())
                .map(|p| crate::scenario::symmetric_from(p, "certificate.p"))
                .transpose()?;
            let cert = build_perturbed(
                &plant,
                &space,
                &cache,
                &sigma_star,
                beta,
                requested_varpi,
                growth,
                fallback,
                t_max,
                mu_variant,
                p_inline,
                variant,
            )?;
            let mut m = cert.verify(&phi_star)?;
            if m < 0.0 {
                // report the largest disturbance level the LMIs tolerate
                largest_feasible_varpi = cert.largest_feasible_varpi(&phi_star, requested_varpi.max(1e-12))?;
            }
            let cert = match varpi_spec {
                VarpiSpec::Keyword(VarpiKeyword::MaxFeasible) if m < 0.0 => {
                    let v = largest_feasible_varpi.ok_or_else(|| {
                        CliError::Infeasible(
                            "LMIs fail even as varpi approaches zero".into(),
                        )
                    })?;
                    let mut c = cert;
                    c.varpi = v;
                    m = c.verify(&phi_star)?;
                    c
                }
                _ => cert,
            };
            margin = m;
            unperturbed = None;
            perturbed = Some(cert);
        } else {
            let p_inline = cert_section
                .and_then(|c| c.p.as_ref())
                .map(|p| crate::scenario::symmetric_from(p, "certificate.p"))
                .transpose()?;
            let cert = match p_inline {
                Some(p) => {
                    StabilityCertificate::from_parts(p, beta, sigma_star.clone(), &phi_star)?
                }
                None => StabilityCertificate::construct(&phi_star, beta, sigma_star.clone())?,
            };
            margin = cert.verify(&phi_star)?;
            unperturbed = Some(cert);
            perturbed = None;
        }

        Ok(Setup {
            name,
            kind,
            plant,
            space,
            cache,
            unperturbed,
            perturbed,
            margin,
            largest_feasible_varpi,
        })
    }

    fn certificate_file(&self) -> CertificateFile {
        match (&self.unperturbed, &self.perturbed) {
            (Some(c), None) => CertificateFile::from_unperturbed(c, self.margin),
            (None, Some(c)) => {
                CertificateFile::from_perturbed(c, self.margin, self.largest_feasible_varpi)
            }
            _ => unreachable!("exactly one certificate is always resolved"),
        }
    }
}

enum OnlineOrOffline {
    Online { gamma: f64, m: Option<SymmetricMatrix> },
    Offline { gamma1: f64, gamma2: f64 },
}

#[allow(clippy::too_many_arguments)]
fn build_perturbed(
    plant: &PlantModel,
    space: &HorizonSpace,
    cache: &DiscretizationCache,
    sigma_star: &SamplingHorizon,
    beta: f64,
    varpi: f64,
    growth: f64,
    fallback: f64,
    t_max: f64,
    mu_variant: MuVariant,
    p_inline: Option<SymmetricMatrix>,
    variant: OnlineOrOffline,
) -> CliResult<PerturbedCertificate> {
    match (p_inline, variant) {
        (Some(p), OnlineOrOffline::Online { gamma, m: Some(m) }) => {
            PerturbedCertificate::new(
                p,
                PerturbedVariant::Online { m, gamma },
                beta,
                sigma_star.clone(),
                varpi,
                growth,
                fallback,
                t_max,
                mu_variant,
            )
            .map_err(Into::into)
        }
        (Some(p), OnlineOrOffline::Offline { gamma1, gamma2 }) => PerturbedCertificate::new(
            p,
            PerturbedVariant::Offline { gamma1, gamma2 },
            beta,
            sigma_star.clone(),
            varpi,
            growth,
            fallback,
            t_max,
            mu_variant,
        )
        .map_err(Into::into),
        (None, variant) => {
            let gammas = match variant {
                OnlineOrOffline::Online { gamma, .. } => VariantGammas::Online { gamma },
                OnlineOrOffline::Offline { gamma1, gamma2 } => {
                    VariantGammas::Offline { gamma1, gamma2 }
                }
            };
            find_perturbed_certificate(
                plant,
                space,
                cache,
                &PerturbedSearch {
                    beta,
                    sigma_star: sigma_star.clone(),
                    variant_gammas: gammas,
                    varpi,
                    mu_variant,
                },
            )
            .map_err(Into::into)
        }
        (Some(_), OnlineOrOffline::Online { m: None, .. }) => Err(CliError::Validation(
            "inline P for the online perturbed mechanism also needs inline M".into(),
        )),
    }
}

pub fn cmd_analyze(scenario: &ScenarioFile, path: &Path, out: &Path) -> CliResult<()> {
    ensure_out(out)?;
    let plant = scenario.plant()?;
    let analysis = scenario.analysis.as_ref().ok_or_else(|| {
        CliError::Validation("analyze needs an [analysis] section with a sweep grid".into())
    })?;
    let pairs: Vec<(f64, f64)> = analysis.pairs.iter().map(|p| (p[0], p[1])).collect();
    let report = selftrig::motivational_report(&plant, &analysis.sweep, &pairs)?;

    let sweep_path = out.join("sweep.csv");
    let mut f = std::fs::File::create(&sweep_path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", sweep_path.display())))?;
    writeln!(f, "interval,spectral_radius,schur_stable")?;
    for s in &report.sweep {
        writeln!(f, "{:.9},{:.12e},{}", s.interval, s.spectral_radius, s.schur_stable)?;
    }

    let cases_path = out.join("cases.csv");
    let mut f = std::fs::File::create(&cases_path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cases_path.display())))?;
    writeln!(f, "t1,t2,stable1,stable2,product_radius,product_stable")?;
    for c in &report.cases {
        writeln!(
            f,
            "{:.9},{:.9},{},{},{:.12e},{}",
            c.intervals.0,
            c.intervals.1,
            c.individually_stable.0,
            c.individually_stable.1,
            c.product_radius,
            c.product_stable
        )?;
    }

    let gp = out.join("analyze.gp");
    std::fs::write(
        &gp,
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'sampling interval T'\n\
         set ylabel 'spectral radius'\n\
         plot 'sweep.csv' using 1:2 with linespoints, 1 with lines dashtype 2 notitle\n",
    )
    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", gp.display())))?;

    println!(
        "analyze {}: {} sweep points, {} interval pairs -> {}",
        scenario.display_name(path),
        report.sweep.len(),
        report.cases.len(),
        out.display()
    );
    for c in &report.cases {
        println!(
            "  pair ({}, {}): factors {}/{}, cycle rho = {:.4} ({})",
            c.intervals.0,
            c.intervals.1,
            stab(c.individually_stable.0),
            stab(c.individually_stable.1),
            c.product_radius,
            stab(c.product_stable),
        );
    }
    Ok(())
}

fn stab(b: bool) -> &'static str {
    if b {
        "stable"
    } else {
        "unstable"
    }
}

pub fn cmd_certify(
    scenario: &ScenarioFile,
    path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> CliResult<()> {
    ensure_out(out)?;
    let setup = Setup::resolve(scenario, path, overrides)?;
    let file = setup.certificate_file();
    write_json(&out.join("certificate.json"), &file)?;
    println!(
        "certify {}: {} margin {:.6e}",
        setup.name,
        setup.kind.as_str(),
        setup.margin
    );
    if let Some(v) = setup.largest_feasible_varpi {
        println!("  requested varpi fails the LMIs; largest feasible varpi = {v:.6e}");
    }
    if setup.margin >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "certificate margin {:.6e} < 0",
            setup.margin
        )))
    }
}

/// Builds (or loads, when a matching file exists) the offline region policy.
pub fn policy_for(setup: &Setup, scenario: &ScenarioFile, out: &Path) -> CliResult<(ConicPartition, RegionPolicy)> {
    let part = scenario
        .partition
        .as_ref()
        .ok_or_else(|| CliError::Validation("offline mechanisms need a [partition] section".into()))?;
    let h = scenario.horizons.as_ref().expect("checked by setup");
    let partition = ConicPartition::build_with_overlap(
        setup.plant.state_dim(),
        part.regions,
        part.overlap,
    )?;
    let beta = scenario.mechanism()?.beta;
    let perturbed = setup.kind.is_perturbed();

    let policy_path = out.join("policy.json");
    if policy_path.exists() {
        let file: PolicyFile = read_json(&policy_path)?;
        if file.matches(part.regions, part.overlap, &h.gamma, h.l_min, h.l_max, beta, perturbed) {
            return Ok((partition, file.into_policy()?));
        }
    }

    let policy = match setup.kind {
        MechanismKind::OfflineUnperturbed => selftrig::precompute_offline_unperturbed(
            setup.unperturbed.as_ref().expect("unperturbed setup"),
            &setup.space,
            &setup.cache,
            &partition,
        )?,
        MechanismKind::OfflinePerturbed => selftrig::precompute_offline_perturbed(
            setup.perturbed.as_ref().expect("perturbed setup"),
            &setup.space,
            &setup.cache,
            &partition,
        )?,
        _ => {
            return Err(CliError::Validation(
                "policy precomputation applies to offline mechanisms only".into(),
            ))
        }
    };
    let file = PolicyFile::from_policy(
        &policy,
        part.regions,
        part.overlap,
        &h.gamma,
        h.l_min,
        h.l_max,
        beta,
    );
    write_json(&policy_path, &file)?;
    Ok((partition, policy))
}

pub fn cmd_partition(
    scenario: &ScenarioFile,
    path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> CliResult<()> {
    ensure_out(out)?;
    let setup = Setup::resolve(scenario, path, overrides)?;
    if !setup.kind.is_offline() {
        return Err(CliError::Validation(
            "partition applies to offline mechanisms only".into(),
        ));
    }
    let (partition, policy) = policy_for(&setup, scenario, out)?;
    let best = policy
        .entries
        .iter()
        .map(|e| e.average)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "partition {}: {} regions, best region average {:.4} -> {}",
        setup.name,
        partition.len(),
        best,
        out.join("policy.json").display()
    );
    Ok(())
}

pub struct SimulateOutcome {
    pub average_interval: f64,
}

pub fn cmd_simulate(
    scenario: &ScenarioFile,
    path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> CliResult<SimulateOutcome> {
    ensure_out(out)?;
    let setup = Setup::resolve(scenario, path, overrides)?;
    if setup.margin < 0.0 {
        eprintln!(
            "warning: certificate margin {:.3e} < 0; simulating anyway (see certify)",
            setup.margin
        );
    }
    let sim = scenario
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::Validation("simulate needs a [simulation] section".into()))?;
    let opts = SimOptions {
        t_end: sim.t_end,
        substep: overrides.substep.unwrap_or(sim.substep),
        seed: overrides.seed.unwrap_or(sim.seed),
        tie_break: sim.tie_break.into(),
        record_dense: false,
    };

    let offline = setup.kind.is_offline();
    let (partition, policy) = if offline {
        let (p, q) = policy_for(&setup, scenario, out)?;
        (Some(p), Some(q))
    } else {
        (None, None)
    };
    let mechanism = match setup.kind {
        MechanismKind::OnlineUnperturbed => {
            Mechanism::OnlineUnperturbed(setup.unperturbed.as_ref().unwrap())
        }
        MechanismKind::OfflineUnperturbed => Mechanism::OfflineUnperturbed {
            cert: setup.unperturbed.as_ref().unwrap(),
            policy: policy.as_ref().unwrap(),
            partition: partition.as_ref().unwrap(),
        },
        MechanismKind::OnlinePerturbed => {
            Mechanism::OnlinePerturbed(setup.perturbed.as_ref().unwrap())
        }
        MechanismKind::OfflinePerturbed => Mechanism::OfflinePerturbed {
            cert: setup.perturbed.as_ref().unwrap(),
            policy: policy.as_ref().unwrap(),
            partition: partition.as_ref().unwrap(),
        },
    };

    let mut clock = selftrig::WallClock::new();
    let trace = selftrig::run(
        &setup.plant,
        &setup.space,
        &setup.cache,
        &mechanism,
        &sim.x0,
        &scenario.disturbance(),
        &opts,
        &mut clock,
    )?;

    let mu = setup.perturbed.as_ref().map(|c| c.ultimate_bound());
    let lyap = |x: &[f64]| match (&setup.unperturbed, &setup.perturbed) {
        (Some(c), _) => c.lyapunov(x),
        (_, Some(c)) => c.lyapunov(x),
        _ => 0.0,
    };
    write_trace_csv(&out.join("trace.csv"), &trace, lyap)?;
    let file = TraceFile::from_trace(
        &trace,
        setup.name.clone(),
        setup.kind.as_str().into(),
        mu,
    );
    write_json(&out.join("trace.json"), &file)?;
    write_json(&out.join("certificate.json"), &setup.certificate_file())?;

    println!(
        "simulate {}: {} decisions, {} samples, average interval {:.4}",
        setup.name,
        trace.decisions.len(),
        trace.samples.len(),
        trace.average_interval()
    );
    Ok(SimulateOutcome {
        average_interval: trace.average_interval(),
    })
}

pub fn cmd_verify(scenario: &ScenarioFile, path: &Path, out: &Path, overrides: &Overrides) -> CliResult<()> {
    let trace_file: TraceFile = read_json(&out.join("trace.json"))?;
    let cert_file: CertificateFile = read_json(&out.join("certificate.json"))?;
    let trace = trace_file.into_trace()?;
    let report = match cert_file.into_certificates()? {
        Ok(cert) => selftrig::verify_trace(&trace, &TraceCheck::Unperturbed(&cert)),
        Err(cert) => selftrig::verify_trace(&trace, &TraceCheck::Perturbed(&cert)),
    };
    let _ = (scenario, path, overrides);
    write_json(
        &out.join("verify.json"),
        &serde_json::json!({
            "checked": report.checked,
            "violations": report.violations,
            "worst_relative_excess": report.worst,
            "entered_bound_at": report.entered_bound_at,
        }),
    )?;
    println!(
        "verify: {} checks, {} violations, worst excess {:.3e}{}",
        report.checked,
        report.violations,
        report.worst,
        report
            .entered_bound_at
            .map(|t| format!(", entered bound at t = {t:.3}"))
            .unwrap_or_default()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "{} trajectory invariant violations",
            report.violations
        )))
    }
}

pub fn cmd_sweep(
    scenario_path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> CliResult<()> {
    let scenario = ScenarioFile::load(scenario_path)?;
    let SweepSection { runs } = *scenario
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Validation("sweep needs a [sweep] section with runs".into()))?;
    if runs == 0 {
        return Err(CliError::Validation("sweep.runs must be at least 1".into()));
    }
    ensure_out(out)?;
    let workers = worker_cap().min(runs);
    let base_seed = overrides.seed.unwrap_or(0);

    // one simulation per seed, farmed out to a bounded worker pool
    let jobs: Vec<u64> = (0..runs as u64).map(|i| base_seed + i).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: std::sync::Mutex<Vec<(u64, Result<f64, String>)>> =
        std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&seed) = jobs.get(i) else { break };
                let run_out = out.join(format!("run-{seed}"));
                let run_overrides = Overrides {
                    seed: Some(seed),
                    ..overrides.clone()
                };
                let res = ScenarioFile::load(scenario_path).and_then(|sc| {
                    cmd_simulate(&sc, scenario_path, &run_out, &run_overrides)
                        .map(|o| o.average_interval)
                });
                results
                    .lock()
                    .unwrap()
                    .push((seed, res.map_err(|e| e.to_string())));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(s, _)| *s);
    let ok: Vec<(u64, f64)> = results
        .iter()
        .filter_map(|(s, r)| r.as_ref().ok().map(|v| (*s, *v)))
        .collect();
    let failures: Vec<(u64, String)> = results
        .iter()
        .filter_map(|(s, r)| r.as_ref().err().map(|e| (*s, e.clone())))
        .collect();
    let mean = if ok.is_empty() {
        0.0
    } else {
        ok.iter().map(|(_, v)| v).sum::<f64>() / ok.len() as f64
    };
    write_json(
        &out.join("sweep_summary.json"),
        &serde_json::json!({
            "runs": runs,
            "workers": workers,
            "averages": ok.iter().map(|(s, v)| serde_json::json!({"seed": s, "average_interval": v})).collect::<Vec<_>>(),
            "mean_average_interval": mean,
            "failures": failures.iter().map(|(s, e)| serde_json::json!({"seed": s, "error": e})).collect::<Vec<_>>(),
        }),
    )?;
    println!(
        "sweep: {} runs on {} workers, mean average interval {:.4}, {} failures",
        runs,
        workers,
        mean,
        failures.len()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "{} of {} sweep runs failed",
            failures.len(),
            runs
        )))
    }
}
