//! Run configuration, read from a TOML file. Relative paths are resolved
//! against the directory holding the file.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::fusion::{FusionSettings, SmaxPolicy, StructureKind};
use crate::observation::{ModalityModel, ModalityRole, SpatialDegradation, SpectralResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default, rename = "modality")]
    pub modalities: Vec<ModalitySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub observations: PathBuf,
    pub historical: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Truth manifest used by `evaluate`.
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("fused")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// `diag`, `pixel`, `coarse` or `dense`.
    pub structure: String,
    pub p0_scale: f64,
    pub epsilon2: f64,
    pub window: usize,
    pub s_max: SmaxSetting,
    pub smoother: bool,
    /// Set to false for the prediction-only baseline.
    pub assimilate: bool,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = FusionSettings::<f64>::default();
        FusionSection {
            structure: d.structure.label().to_string(),
            p0_scale: d.p0_scale,
            epsilon2: d.epsilon2,
            window: d.window,
            s_max: SmaxSetting::Named("historical".into()),
            smoother: d.smoother,
            assimilate: d.assimilate,
        }
    }
}

/// `"historical"`, `"observed"` or a fixed number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SmaxSetting {
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMode {
    /// Fit once on the initializing high-resolution image and reuse.
    Initial,
    PerDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub nir_band: usize,
    pub centroids: CentroidMode,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection { nir_band: 1, centroids: CentroidMode::Initial }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleSetting {
    HighRes,
    LowRes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSetting {
    /// Only `"uniform"` is recognized.
    Named(String),
    /// Row-major `factor × factor` weights summing to one.
    Weights(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarianceSetting {
    Shared(f64),
    PerBand(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySection {
    pub name: String,
    pub role: RoleSetting,
    #[serde(default = "one")]
    pub factor: usize,
    #[serde(default)]
    pub kernel: Option<KernelSetting>,
    /// Per-band gains (diagonal spectral response).
    #[serde(default)]
    pub gains: Option<Vec<f64>>,
    /// Full spectral response, one row per measured band.
    #[serde(default)]
    pub spectral: Option<Vec<Vec<f64>>>,
    /// Defaults to 1e-10 for high-resolution and 1e-4 for low-resolution modalities.
    #[serde(default)]
    pub noise_variance: Option<VarianceSetting>,
}

fn one() -> usize {
    1
}

impl ModalitySection {
    pub fn role(&self) -> ModalityRole {
        match self.role {
            RoleSetting::HighRes => ModalityRole::HighRes,
            RoleSetting::LowRes => ModalityRole::LowRes,
        }
    }

    pub fn model(&self, state_bands: usize) -> Result<ModalityModel<f64>> {
        let cfg = |m: String| FusionError::Config(format!("modality {:?}: {m}", self.name));
        let spectral = match (&self.spectral, &self.gains) {
            (Some(_), Some(_)) => return Err(cfg("give either gains or spectral, not both".into())),
            (Some(rows), None) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
                    return Err(cfg("spectral rows must be non-empty and of equal length".into()));
                }
                SpectralResponse::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])).map_err(|e| cfg(e.to_string()))?
            }
            (None, Some(g)) => SpectralResponse::diagonal_gains(g).map_err(|e| cfg(e.to_string()))?,
            (None, None) => SpectralResponse::identity(state_bands),
        };
        if spectral.state_bands() != state_bands {
            return Err(cfg(format!("spectral response expects {} state bands, images have {state_bands}", spectral.state_bands())));
        }
        let spatial = match &self.kernel {
            None => SpatialDegradation::uniform(self.factor),
            Some(KernelSetting::Named(n)) if n == "uniform" => SpatialDegradation::uniform(self.factor),
            Some(KernelSetting::Named(n)) => return Err(cfg(format!("unknown kernel {n:?}"))),
            Some(KernelSetting::Weights(w)) => SpatialDegradation::new(w.clone(), self.factor).map_err(|e| cfg(e.to_string()))?,
        };
        let bands = spectral.measured_bands();
        let variances = match &self.noise_variance {
            None => vec![if self.role == RoleSetting::HighRes { 1e-10 } else { 1e-4 }; bands],
            Some(VarianceSetting::Shared(v)) => vec![*v; bands],
            Some(VarianceSetting::PerBand(v)) => v.clone(),
        };
        ModalityModel::new(self.name.clone(), self.role(), spectral, spatial, variances).map_err(|e| cfg(e.to_string()))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| FusionError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file and makes every data path absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FusionError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.data.observations = abs(&cfg.data.observations);
        cfg.data.historical = abs(&cfg.data.historical);
        cfg.data.output = abs(&cfg.data.output);
        cfg.data.truth = cfg.data.truth.as_deref().map(abs);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.structure()?;
        self.s_max()?;
        if self.modalities.is_empty() {
            return Err(FusionError::Config("at least one [[modality]] block is required".into()));
        }
        if !self.modalities.iter().any(|m| m.role == RoleSetting::HighRes) {
            return Err(FusionError::Config("no high_res modality configured".into()));
        }
        let mut names: Vec<&str> = self.modalities.iter().map(|m| m.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(FusionError::Config("modality names must be unique".into()));
        }
        if self.modalities.iter().any(|m| m.factor == 0) {
            return Err(FusionError::Config("modality factor must be positive".into()));
        }
        let f = &self.fusion;
        if !(f.p0_scale > 0.0 && f.epsilon2 > 0.0 && f.window >= 1) {
            return Err(FusionError::Config("p0_scale and epsilon2 must be positive, window at least 1".into()));
        }
        Ok(())
    }

    pub fn structure(&self) -> Result<StructureKind> {
        self.fusion.structure.parse()
    }

    pub fn s_max(&self) -> Result<SmaxPolicy<f64>> {
        match &self.fusion.s_max {
            SmaxSetting::Named(n) if n == "historical" => Ok(SmaxPolicy::Historical),
            SmaxSetting::Named(n) if n == "observed" => Ok(SmaxPolicy::Observed),
            SmaxSetting::Value(v) if *v > 0.0 => Ok(SmaxPolicy::Fixed(*v)),
            other => Err(FusionError::Config(format!("s_max must be \"historical\", \"observed\" or a positive number, got {other:?}"))),
        }
    }

    pub fn settings(&self) -> Result<FusionSettings<f64>> {
        Ok(FusionSettings {
            structure: self.structure()?,
            p0_scale: self.fusion.p0_scale,
            epsilon2: self.fusion.epsilon2,
            window: self.fusion.window,
            s_max: self.s_max()?,
            assimilate: self.fusion.assimilate,
            smoother: self.fusion.smoother,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
