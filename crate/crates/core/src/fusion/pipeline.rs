//! The online fusion loop: calibrate process noise, predict, assimilate every
//! modality observed at the instant, constrain; optionally followed by the
//! backward smoothing pass.

use std::collections::BTreeSet;
use std::path::PathBuf;

use crate::error::{FusionError, Result};
use crate::fusion::kalman::{clamp_mean, predict, update_in_place, TransitionModel, UpdateStats};
use crate::fusion::smoother::smooth;
use crate::fusion::structure::{BeliefTag, BlockCovariance, CovarianceStructure, StateBelief, StructureKind};
use crate::observation::{ModalityModel, ModalityRole, OutlierMask};
use crate::qcal::{change_rate, ChangeRate, HistoricalDataset};
use crate::raster::{Day, RasterImage, StateOrdering};
use crate::scalar::Scalar;

/// One acquired image, already screened into an outlier mask.
#[derive(Debug, Clone)]
pub struct Observation<T: Scalar> {
    pub modality: String,
    pub image: RasterImage<T>,
    pub mask: OutlierMask,
    pub source: Option<PathBuf>,
}

impl<T: Scalar> Observation<T> {
    pub fn date(&self) -> Day {
        self.image.date
    }

    /// Keeps every pixel whose bands are all valid.
    pub fn unmasked(modality: impl Into<String>, image: RasterImage<T>) -> Self {
        let mask = OutlierMask::full(image.n_pixels()).restrict(|p| image.pixel_valid(p));
        Observation { modality: modality.into(), image, mask, source: None }
    }
}

#[derive(Debug, Clone)]
pub struct FusionInput<T: Scalar> {
    pub ordering: StateOrdering,
    pub modalities: Vec<ModalityModel<T>>,
    pub observations: Vec<Observation<T>>,
    pub history: HistoricalDataset<T>,
}

/// Source of the reflectance upper bound used by the constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmaxPolicy<T> {
    /// Maximum over the historical archive.
    Historical,
    /// Running maximum over the high-resolution images observed so far.
    Observed,
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSettings<T> {
    pub structure: StructureKind,
    /// `P_{0|0} = p0_scale · P0`.
    pub p0_scale: T,
    pub epsilon2: T,
    /// Historical window length `n`.
    pub window: usize,
    pub s_max: SmaxPolicy<T>,
    /// When false only the initial image is assimilated (prediction-only baseline).
    pub assimilate: bool,
    pub smoother: bool,
}

impl<T: Scalar> Default for FusionSettings<T> {
    fn default() -> Self {
        FusionSettings {
            structure: StructureKind::PerHrPixel,
            p0_scale: T::lit(1e-10),
            epsilon2: T::lit(1e-5),
            window: 1,
            s_max: SmaxPolicy::Historical,
            assimilate: true,
            smoother: false,
        }
    }
}

/// Point in the pipeline at which a belief is handed to an observer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Initialized,
    Predicted,
    Updated(String),
    Constrained,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstantRecord {
    pub instant: usize,
    pub date: Day,
    pub modalities: Vec<String>,
    pub assimilated_pixels: usize,
    pub skipped_pixels: usize,
    pub mean_innovation_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedObservation {
    pub date: Day,
    pub modality: String,
    pub source: Option<PathBuf>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FusionTimeline<T: Scalar> {
    pub filtered: Vec<StateBelief<T>>,
    pub smoothed: Option<Vec<StateBelief<T>>>,
    pub records: Vec<InstantRecord>,
    pub dropped: Vec<DroppedObservation>,
    /// `transitions[k]` carried instant `k` to `k + 1`.
    pub transitions: Vec<TransitionModel<T>>,
    /// Matched archive index and window span for each transition.
    pub calibration: Vec<(usize, i64)>,
    pub s_max: T,
}

impl<T: Scalar> FusionTimeline<T> {
    pub fn dates(&self) -> Vec<Day> {
        self.filtered.iter().map(|b| b.date).collect()
    }
}

/// Order in which modalities are assimilated within an instant:
/// high-resolution first, then by name.
pub fn canonical_order<T: Scalar>(observations: &mut [&Observation<T>], models: &[ModalityModel<T>]) {
    let role = |name: &str| models.iter().find(|m| m.name == name).map(|m| m.role).unwrap_or(ModalityRole::LowRes);
    observations.sort_by(|a, b| (role(&a.modality), &a.modality).cmp(&(role(&b.modality), &b.modality)));
}

pub fn run_filter<T: Scalar>(input: &FusionInput<T>, settings: &FusionSettings<T>) -> Result<FusionTimeline<T>> {
    run_filter_observed(input, settings, &mut |_, _| {})
}

/// Like [`run_filter`], handing every intermediate belief to `observer`.
pub fn run_filter_observed<T: Scalar>(
    input: &FusionInput<T>,
    settings: &FusionSettings<T>,
    observer: &mut dyn FnMut(&Stage, &StateBelief<T>),
) -> Result<FusionTimeline<T>> {
    let ordering = &input.ordering;
    let model_of = |name: &str| -> Result<&ModalityModel<T>> {
        input
            .modalities
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| FusionError::Data(format!("observation of unconfigured modality {name:?}")))
    };
    let mut seen = BTreeSet::new();
    for obs in &input.observations {
        model_of(&obs.modality)?;
        if !seen.insert((obs.date(), obs.modality.clone())) {
            return Err(FusionError::Data(format!("duplicate {} observation on {}", obs.modality, obs.date())));
        }
    }
    let dates: Vec<Day> = input.observations.iter().map(|o| o.date()).collect::<BTreeSet<_>>().into_iter().collect();
    let Some(&first_date) = dates.first() else {
        return Err(FusionError::Data("no observations to fuse".into()));
    };
    let at = |date: Day| {
        let mut obs: Vec<&Observation<T>> = input.observations.iter().filter(|o| o.date() == date).collect();
        canonical_order(&mut obs, &input.modalities);
        obs
    };
    let is_high_res = |o: &Observation<T>| model_of(&o.modality).map(|m| m.role == ModalityRole::HighRes).unwrap_or(false);

    let first_obs = at(first_date);
    let Some(init) = first_obs.iter().copied().find(|o| is_high_res(o)) else {
        return Err(FusionError::Data(format!("first instant {first_date} has no high-resolution image to initialize from")));
    };

    let structure = CovarianceStructure::new(settings.structure, ordering)?;
    let mut reference = ordering.vectorize(&init.image)?;
    let mut observed_max = init.image.max_value();
    let historical_max = input.history.max_value();
    let s_max_now = |observed_max: T| -> Result<T> {
        match settings.s_max {
            SmaxPolicy::Historical => historical_max.ok_or_else(|| FusionError::Data("s_max from history needs a historical archive".into())),
            SmaxPolicy::Observed => Ok(observed_max),
            SmaxPolicy::Fixed(v) => Ok(v),
        }
    };

    let mut belief = StateBelief::new(reference.clone(), BlockCovariance::initial(structure, settings.p0_scale), 0, first_date)?;
    observer(&Stage::Initialized, &belief);

    let mut filtered = Vec::with_capacity(dates.len());
    let mut records = Vec::with_capacity(dates.len());
    let mut dropped = Vec::new();
    let mut transitions = Vec::new();
    let mut calibration = Vec::new();
    let mut rate: Option<ChangeRate<T>> = None;

    for (k, &date) in dates.iter().enumerate() {
        if k > 0 {
            let rate = match &rate {
                Some(r) => r,
                None => rate.insert(change_rate(&reference, &input.history, settings.window, settings.epsilon2)?),
            };
            let delta = T::lit(dates[k - 1].days_until(date) as f64);
            let noise = rate.scaled(delta);
            calibration.push((noise.matched_index, noise.window_span_days));
            let model = TransitionModel::from_process_noise(&noise);
            belief = predict(&belief, &model)?;
            belief.instant = k;
            belief.date = date;
            observer(&Stage::Predicted, &belief);
            transitions.push(model);
        }

        let mut stats = UpdateStats::default();
        let mut used = Vec::new();
        for obs in at(date) {
            if k == 0 && std::ptr::eq(obs, init) {
                used.push(obs.modality.clone());
                continue;
            }
            let drop = |reason: &str| DroppedObservation {
                date,
                modality: obs.modality.clone(),
                source: obs.source.clone(),
                reason: reason.to_string(),
            };
            if !settings.assimilate {
                dropped.push(drop("prediction-only run"));
                continue;
            }
            if obs.mask.is_empty() {
                dropped.push(drop("no pixel passed quality screening"));
                continue;
            }
            let model = model_of(&obs.modality)?;
            let op = model.operator(ordering, obs.mask.clone())?;
            let y = op.stack_measurement(&obs.image)?;
            let s = update_in_place(&mut belief, &op, &y)?;
            observer(&Stage::Updated(obs.modality.clone()), &belief);
            if model.role == ModalityRole::HighRes {
                reference = ordering.vectorize(&obs.image)?;
                observed_max = observed_max.max(obs.image.max_value());
                rate = None;
            }
            used.push(obs.modality.clone());
            stats.merge(s);
        }

        clamp_mean(&mut belief.mean, s_max_now(observed_max)?)?;
        if belief.tag != BeliefTag::Initial {
            belief.tag = BeliefTag::Updated;
        }
        observer(&Stage::Constrained, &belief);
        records.push(InstantRecord {
            instant: k,
            date,
            modalities: used,
            assimilated_pixels: stats.assimilated,
            skipped_pixels: stats.skipped.len(),
            mean_innovation_norm: stats.mean_innovation_norm(),
        });
        filtered.push(belief.clone());
    }

    let s_max = s_max_now(observed_max)?;
    let smoothed = if settings.smoother {
        let s = smooth(&filtered, &transitions, Some(s_max))?;
        for b in &s {
            observer(&Stage::Smoothed, b);
        }
        Some(s)
    } else {
        None
    };
    Ok(FusionTimeline { filtered, smoothed, records, dropped, transitions, calibration, s_max })
}
