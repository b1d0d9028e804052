//! Scenario file schema (TOML) and its resolution into library objects.

use serde::Deserialize;
use std::path::Path;

use selftrig::{
    DiscretizationCache, HorizonSpace, Matrix, MuVariant, PlantModel, SamplingHorizon,
    SymmetricMatrix, TieBreak,
};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub plant: PlantSection,
    pub horizons: Option<HorizonSection>,
    pub mechanism: Option<MechanismSection>,
    pub partition: Option<PartitionSection>,
    pub certificate: Option<CertificateSection>,
    pub simulation: Option<SimulationSection>,
    pub disturbance: Option<DisturbanceSection>,
    pub analysis: Option<AnalysisSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub d: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub w_max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub gamma: Vec<f64>,
    pub l_min: usize,
    pub l_max: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub kind: MechanismKind,
    #[serde(default)]
    pub beta: f64,
    /// Seed horizon sigma*; defaults to the singleton of the smallest interval.
    pub sigma_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    OnlineUnperturbed,
    OfflineUnperturbed,
    OnlinePerturbed,
    OfflinePerturbed,
}

impl MechanismKind {
    pub fn is_offline(self) -> bool {
        matches!(
            self,
            MechanismKind::OfflineUnperturbed | MechanismKind::OfflinePerturbed
        )
    }

    pub fn is_perturbed(self) -> bool {
        matches!(
            self,
            MechanismKind::OnlinePerturbed | MechanismKind::OfflinePerturbed
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::OnlineUnperturbed => "online-unperturbed",
            MechanismKind::OfflineUnperturbed => "offline-unperturbed",
            MechanismKind::OnlinePerturbed => "online-perturbed",
            MechanismKind::OfflinePerturbed => "offline-perturbed",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub regions: usize,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

fn default_overlap() -> f64 {
    1e-6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub p: Option<Vec<Vec<f64>>>,
    pub m: Option<Vec<Vec<f64>>>,
    pub gamma: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub varpi: Option<VarpiSpec>,
    pub mu_variant: Option<MuVariantSpec>,
}

/// Either a policy keyword or an explicit value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VarpiSpec {
    Keyword(VarpiKeyword),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarpiKeyword {
    /// Quadrature bound w_max * integral |e^(As) D| ds over the largest interval.
    Derived,
    /// Largest varpi (capped at the derived bound) for which the LMIs pass.
    MaxFeasible,
}

impl Default for VarpiSpec {
    fn default() -> Self {
        VarpiSpec::Keyword(VarpiKeyword::Derived)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuVariantSpec {
    Paper,
    Corrected,
}

impl From<MuVariantSpec> for MuVariant {
    fn from(v: MuVariantSpec) -> Self {
        match v {
            MuVariantSpec::Paper => MuVariant::Paper,
            MuVariantSpec::Corrected => MuVariant::Corrected,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub x0: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_substep")]
    pub substep: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreakSpec,
}

fn default_t_end() -> f64 {
    40.0
}

fn default_substep() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreakSpec {
    #[default]
    Deterministic,
    SeededRandom,
}

impl From<TieBreakSpec> for TieBreak {
    fn from(v: TieBreakSpec) -> Self {
        match v {
            TieBreakSpec::Deterministic => TieBreak::Deterministic,
            TieBreakSpec::SeededRandom => TieBreak::SeededRandom,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum DisturbanceSection {
    Sine {
        amplitude: f64,
        angular_frequency: f64,
    },
    Constant {
        value: f64,
    },
    UniformNoise {
        bound: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub pairs: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub runs: usize,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn display_name(&self, path: &Path) -> String {
        self.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        })
    }

    pub fn plant(&self) -> CliResult<PlantModel> {
        let a = matrix_from(&self.plant.a, "plant.a")?;
        let b = matrix_from(&self.plant.b, "plant.b")?;
        let k = matrix_from(&self.plant.k, "plant.k")?;
        let d = self
            .plant
            .d
            .as_ref()
            .map(|d| matrix_from(d, "plant.d"))
            .transpose()?;
        PlantModel::new(a, b, k, d, self.plant.w_max).map_err(Into::into)
    }

    pub fn horizon_space(&self) -> CliResult<HorizonSpace> {
        let h = self
            .horizons
            .as_ref()
            .ok_or_else(|| CliError::Validation("scenario needs a [horizons] section".into()))?;
        HorizonSpace::new(h.gamma.clone(), h.l_min, h.l_max).map_err(Into::into)
    }

    pub fn mechanism(&self) -> CliResult<&MechanismSection> {
        self.mechanism
            .as_ref()
            .ok_or_else(|| CliError::Validation("scenario needs a [mechanism] section".into()))
    }

    pub fn sigma_star(&self, space: &HorizonSpace) -> CliResult<SamplingHorizon> {
        let mech = self.mechanism()?;
        let intervals = match &mech.sigma_star {
            Some(v) => v.clone(),
            None => vec![space.gamma()[0]],
        };
        for t in &intervals {
            if !space.gamma().iter().any(|g| g == t) {
                return Err(CliError::Validation(format!(
                    "sigma_star interval {t} is not a member of gamma"
                )));
            }
        }
        SamplingHorizon::new(intervals).map_err(Into::into)
    }

    /// Cache over gamma plus T_max (the perturbed fallback interval).
    pub fn cache(&self, plant: &PlantModel, space: &HorizonSpace) -> CliResult<DiscretizationCache> {
        let mut intervals = space.gamma().to_vec();
        intervals.push(space.t_max());
        DiscretizationCache::build(plant, &intervals).map_err(Into::into)
    }

    pub fn disturbance(&self) -> selftrig::Disturbance {
        match &self.disturbance {
            None => selftrig::Disturbance::None,
            Some(DisturbanceSection::Sine {
                amplitude,
                angular_frequency,
            }) => selftrig::Disturbance::Sine {
                amplitude: *amplitude,
                angular_frequency: *angular_frequency,
            },
            Some(DisturbanceSection::Constant { value }) => {
                selftrig::Disturbance::Constant(*value)
            }
            Some(DisturbanceSection::UniformNoise { bound }) => {
                selftrig::Disturbance::UniformNoise { bound: *bound }
            }
        }
    }
}

pub fn matrix_from(rows: &[Vec<f64>], what: &str) -> CliResult<Matrix> {
    let slices: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&slices)
        .map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

pub fn symmetric_from(rows: &[Vec<f64>], what: &str) -> CliResult<SymmetricMatrix> {
    let m = matrix_from(rows, what)?;
    SymmetricMatrix::new(m).map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}
