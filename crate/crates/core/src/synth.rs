//! Synthetic reservoir scenes and acquisitions with known ground truth.
//!
//! The scene is two-band (red, NIR) with a static per-pixel texture. A water
//! body grows or shrinks around a fixed centre: at each frame the `round(a·N)`
//! pixels with the smallest value of a wavy distance field are water, so the
//! water fraction follows the area curve `a` to one pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::observation::{mask_from_qa, ModalityModel, ModalityRole, OutlierMask, SpatialDegradation, SpectralResponse};
use crate::qcal::HistoricalDataset;
use crate::raster::{Day, RasterImage, StateOrdering};
use crate::fusion::{FusionInput, Observation};

pub const HR_MODALITY: &str = "hr";
pub const LR_MODALITY: &str = "lr";

/// Terrain whose rank order decides which pixels flood first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shoreline {
    /// Round lake with a wavy shore; the shore moves slowly.
    Bowl,
    /// Tilted plane: a straight shore crossing the scene.
    Plane,
    /// Smooth random terrain built from a few Gaussian basins.
    Terrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub shoreline: Shoreline,
    pub height: usize,
    pub width: usize,
    pub coarse_factor: usize,
    /// Reflectance of water, `[red, nir]`.
    pub water: [f64; 2],
    pub land: [f64; 2],
    /// Variance of the static per-pixel texture.
    pub texture_variance: f64,
    pub s_max: f64,
    /// Water fraction per frame; when empty a linear ramp from `area_start` to `area_end`.
    pub area_curve: Vec<f64>,
    pub area_start: f64,
    pub area_end: f64,
    pub n_frames: usize,
    pub start_date: String,
    pub step_days: i64,
    /// Water fraction of each archived high-resolution frame.
    pub history_areas: Vec<f64>,
    pub history_start_date: String,
    pub history_step_days: i64,
    pub lr_noise_variance: f64,
    pub hr_noise_variance: f64,
    pub qa_outage_rate: f64,
    /// Frame indices with a high-resolution acquisition; empty means first and last.
    pub hr_frames: Vec<usize>,
    /// Frame indices with a low-resolution acquisition; empty means all but the first.
    pub lr_frames: Vec<usize>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            shoreline: Shoreline::Plane,
            height: 81,
            width: 81,
            coarse_factor: 9,
            water: [0.04, 0.02],
            land: [0.10, 0.30],
            texture_variance: 1e-4,
            s_max: 1.0,
            area_curve: Vec::new(),
            area_start: 0.2,
            area_end: 0.4,
            n_frames: 17,
            start_date: "2018-07-03".into(),
            step_days: 5,
            history_areas: vec![0.10, 0.18, 0.42, 0.50, 0.60],
            history_start_date: "2017-08-01".into(),
            history_step_days: 32,
            lr_noise_variance: 1e-4,
            hr_noise_variance: 0.0,
            qa_outage_rate: 0.1,
            hr_frames: Vec::new(),
            lr_frames: Vec::new(),
            seed: 42,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FusionError::Config(format!("scene spec: {m}")));
        if self.height == 0 || self.width == 0 || self.coarse_factor == 0 {
            return bad("grid sizes must be positive");
        }
        if !self.height.is_multiple_of(self.coarse_factor) || !self.width.is_multiple_of(self.coarse_factor) {
            return bad("grid must be divisible by the coarse factor");
        }
        if self.n_frames == 0 || self.step_days <= 0 || self.history_step_days <= 0 {
            return bad("need at least one frame and positive date steps");
        }
        let in_unit = |a: &f64| (0.0..=1.0).contains(a);
        if !self.area_curve.is_empty() && self.area_curve.len() != self.n_frames {
            return bad("area_curve length must equal n_frames");
        }
        if !self.area_curve.iter().chain(&self.history_areas).chain([&self.area_start, &self.area_end]).all(in_unit) {
            return bad("areas must lie in [0, 1]");
        }
        if !self.water.iter().chain(&self.land).all(|v| (0.0..=self.s_max).contains(v)) {
            return bad("reflectances must lie in [0, s_max]");
        }
        if !in_unit(&self.qa_outage_rate) || self.lr_noise_variance < 0.0 || self.hr_noise_variance < 0.0 || self.texture_variance < 0.0 {
            return bad("rates in [0, 1] and variances nonnegative");
        }
        if self.hr_frames.iter().chain(&self.lr_frames).any(|&f| f >= self.n_frames) {
            return bad("acquisition frame index out of range");
        }
        if self.hr_schedule().first() != Some(&0) {
            return bad("the first frame needs a high-resolution acquisition");
        }
        self.start()?;
        self.history_start()?;
        Ok(())
    }

    fn start(&self) -> Result<Day> {
        self.start_date.parse().map_err(|e| FusionError::Config(format!("start_date: {e}")))
    }

    fn history_start(&self) -> Result<Day> {
        self.history_start_date.parse().map_err(|e| FusionError::Config(format!("history_start_date: {e}")))
    }

    pub fn frame_dates(&self) -> Result<Vec<Day>> {
        let start = self.start()?;
        Ok((0..self.n_frames).map(|i| start.offset(i as i64 * self.step_days)).collect())
    }

    pub fn history_dates(&self) -> Result<Vec<Day>> {
        let start = self.history_start()?;
        Ok((0..self.history_areas.len()).map(|i| start.offset(i as i64 * self.history_step_days)).collect())
    }

    pub fn areas(&self) -> Vec<f64> {
        if !self.area_curve.is_empty() {
            return self.area_curve.clone();
        }
        let n = self.n_frames;
        (0..n)
            .map(|i| if n == 1 { self.area_start } else { self.area_start + (self.area_end - self.area_start) * i as f64 / (n - 1) as f64 })
            .collect()
    }

    pub fn hr_schedule(&self) -> Vec<usize> {
        let mut frames = if self.hr_frames.is_empty() {
            let mut v = vec![0, self.n_frames - 1];
            v.dedup();
            v
        } else {
            self.hr_frames.clone()
        };
        frames.sort();
        frames.dedup();
        frames
    }

    pub fn lr_schedule(&self) -> Vec<usize> {
        if self.lr_frames.is_empty() {
            (1..self.n_frames).collect()
        } else {
            let mut v = self.lr_frames.clone();
            v.sort();
            v.dedup();
            v
        }
    }

    pub fn ordering(&self) -> Result<StateOrdering> {
        StateOrdering::new(self.height, self.width, 2, self.coarse_factor)
    }

    pub fn hr_model(&self) -> ModalityModel<f64> {
        ModalityModel::high_res(HR_MODALITY, 2, 1e-10)
    }

    pub fn lr_model(&self) -> ModalityModel<f64> {
        ModalityModel::new(
            LR_MODALITY,
            ModalityRole::LowRes,
            SpectralResponse::identity(2),
            SpatialDegradation::uniform(self.coarse_factor),
            vec![1e-4; 2],
        )
        .expect("valid low-resolution model")
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn elevation(spec: &SceneSpec) -> Vec<f64> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let at = |p: usize| (((p / spec.width) as f64 + 0.5) / h, ((p % spec.width) as f64 + 0.5) / w);
    let n = spec.height * spec.width;
    match spec.shoreline {
        Shoreline::Bowl => (0..n)
            .map(|p| {
                let (y, x) = at(p);
                let (dy, dx) = (y - 0.45, x - 0.35);
                let theta = dy.atan2(dx);
                (dy * dy + dx * dx).sqrt() * (1.0 + 0.25 * (3.0 * theta).sin() + 0.1 * (5.0 * theta).cos())
            })
            .collect(),
        Shoreline::Plane => (0..n)
            .map(|p| {
                let (y, x) = at(p);
                x + 0.3 * y + 0.03 * (6.0 * y).sin()
            })
            .collect(),
        Shoreline::Terrain => {
            let mut r = rng(spec.seed, 4);
            let basins: Vec<[f64; 4]> = (0..6).map(|_| [r.random(), r.random(), 0.08 + 0.2 * r.random::<f64>(), 0.5 + r.random::<f64>()]).collect();
            (0..n)
                .map(|p| {
                    let (y, x) = at(p);
                    -basins.iter().map(|[by, bx, s, a]| a * (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * s * s)).exp()).sum::<f64>()
                })
                .collect()
        }
    }
}

/// Pixel indices (raster order) from lowest to highest ground.
fn flood_order(spec: &SceneSpec) -> Vec<usize> {
    let field = elevation(spec);
    let mut order: Vec<usize> = (0..field.len()).collect();
    order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    order
}

fn texture(spec: &SceneSpec) -> Vec<f64> {
    let n = spec.height * spec.width * 2;
    if spec.texture_variance == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, spec.texture_variance.sqrt()).expect("finite variance");
    let mut r = rng(spec.seed, 1);
    (0..n).map(|_| normal.sample(&mut r)).collect()
}

/// High-resolution frames for the given water fractions.
pub fn generate_frames(spec: &SceneSpec, areas: &[f64], dates: &[Day]) -> Result<Vec<RasterImage<f64>>> {
    spec.validate()?;
    if areas.len() != dates.len() {
        return Err(FusionError::Dimension { what: "areas vs dates", a: areas.len(), b: dates.len() });
    }
    let order = flood_order(spec);
    let tex = texture(spec);
    let np = spec.height * spec.width;
    areas
        .iter()
        .zip(dates)
        .map(|(&a, &date)| {
            let n_water = (a * np as f64).round() as usize;
            let mut is_water = vec![false; np];
            for &p in &order[..n_water] {
                is_water[p] = true;
            }
            let values = (0..2)
                .flat_map(|b| {
                    let (is_water, tex) = (&is_water, &tex);
                    (0..np).map(move |p| {
                        let base = if is_water[p] { spec.water[b] } else { spec.land[b] };
                        (base + tex[b * np + p]).clamp(0.0, spec.s_max)
                    })
                })
                .collect();
            RasterImage::new(spec.height, spec.width, 2, values, date, "truth")
        })
        .collect()
}

/// Ground-truth frames on the spec's dates and area curve.
pub fn generate_truth(spec: &SceneSpec) -> Result<Vec<RasterImage<f64>>> {
    generate_frames(spec, &spec.areas(), &spec.frame_dates()?)
}

pub fn generate_history(spec: &SceneSpec) -> Result<Vec<RasterImage<f64>>> {
    generate_frames(spec, &spec.history_areas, &spec.history_dates()?)
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    pub modality: String,
    pub image: RasterImage<f64>,
    /// Per-pixel quality code, 0 = ideal.
    pub qa: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SceneSpec,
    pub truth: Vec<RasterImage<f64>>,
    pub history: Vec<RasterImage<f64>>,
    pub acquisitions: Vec<Acquisition>,
}

/// Applies the forward observation model to the truth frames: degraded and
/// noisy low-resolution frames with random quality outages, and noisy copies
/// of the truth at the high-resolution dates.
pub fn acquire(spec: &SceneSpec, truth: &[RasterImage<f64>]) -> Result<Vec<Acquisition>> {
    spec.validate()?;
    if truth.len() != spec.n_frames {
        return Err(FusionError::Dimension { what: "truth frames vs n_frames", a: truth.len(), b: spec.n_frames });
    }
    let ordering = spec.ordering()?;
    let lr_model = spec.lr_model();
    let (lr_h, lr_w) = lr_model.grid(&ordering);
    let full = lr_model.operator(&ordering, OutlierMask::full(lr_h * lr_w))?;
    let mut noise_rng = rng(spec.seed, 2);
    let mut qa_rng = rng(spec.seed, 3);
    let lr_noise = Normal::new(0.0, spec.lr_noise_variance.sqrt()).expect("finite variance");
    let hr_noise = Normal::new(0.0, spec.hr_noise_variance.sqrt()).expect("finite variance");

    let mut out = Vec::new();
    for &f in &spec.hr_schedule() {
        let frame = &truth[f];
        let values = frame
            .values()
            .iter()
            .map(|&v| if spec.hr_noise_variance > 0.0 { v + hr_noise.sample(&mut noise_rng) } else { v })
            .collect();
        let image = RasterImage::new(spec.height, spec.width, 2, values, frame.date, HR_MODALITY)?;
        out.push(Acquisition { modality: HR_MODALITY.into(), image, qa: vec![0; spec.height * spec.width] });
    }
    for &f in &spec.lr_schedule() {
        let frame = &truth[f];
        let clean = full.apply(&ordering.vectorize(frame)?)?;
        let values = clean
            .into_iter()
            .map(|v| if spec.lr_noise_variance > 0.0 { v + lr_noise.sample(&mut noise_rng) } else { v })
            .collect();
        let image = RasterImage::new(lr_h, lr_w, 2, values, frame.date, LR_MODALITY)?;
        let qa = (0..lr_h * lr_w).map(|_| u32::from(qa_rng.random::<f64>() < spec.qa_outage_rate)).collect();
        out.push(Acquisition { modality: LR_MODALITY.into(), image, qa });
    }
    out.sort_by(|a, b| (a.image.date, &a.modality).cmp(&(b.image.date, &b.modality)));
    Ok(out)
}

pub fn generate(spec: &SceneSpec) -> Result<SynthDataset> {
    let truth = generate_truth(spec)?;
    let history = generate_history(spec)?;
    let acquisitions = acquire(spec, &truth)?;
    Ok(SynthDataset { spec: spec.clone(), truth, history, acquisitions })
}

impl SynthDataset {
    /// In-memory fusion input equivalent to the dataset written to disk.
    pub fn fusion_input(&self) -> Result<FusionInput<f64>> {
        let ordering = self.spec.ordering()?;
        let history = HistoricalDataset::new(
            self.history.iter().map(|img| Ok((img.date, ordering.vectorize(img)?))).collect::<Result<Vec<_>>>()?,
        )?;
        let observations = self
            .acquisitions
            .iter()
            .map(|a| Observation { modality: a.modality.clone(), image: a.image.clone(), mask: mask_from_qa(&a.qa), source: None })
            .collect();
        Ok(FusionInput { ordering, modalities: vec![self.spec.hr_model(), self.spec.lr_model()], observations, history })
    }

    /// Truth frames at dates without a high-resolution acquisition.
    pub fn held_out_truth(&self) -> Vec<&RasterImage<f64>> {
        let hr = self.spec.hr_schedule();
        self.truth.iter().enumerate().filter(|(i, _)| !hr.contains(i)).map(|(_, t)| t).collect()
    }
}
