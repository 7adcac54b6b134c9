//! Batch commands: fuse, evaluate, synth, calibrate-q and classify. Every
//! command validates its inputs before touching the output directory and
//! refuses to replace existing outputs unless forced.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{CentroidMode, KernelSetting, ModalitySection, RoleSetting, RunConfig, VarianceSetting};
use crate::downstream::{classify_water, image_pixels, kmeans2, misclassification, sam, WaterMap};
use crate::error::{FusionError, Result};
use crate::fusion::{run_filter_observed, FusionInput, FusionSettings, FusionTimeline, Observation, Stage, StateBelief, StructureKind};
use crate::observation::{mask_from_qa, ModalityModel, ModalityRole, OutlierMask};
use crate::qcal::HistoricalDataset;
use crate::raster::io::{read_frst, read_manifest, read_qa_codes, write_frst, write_manifest, write_qa_codes, ManifestRow};
use crate::raster::{Day, RasterImage, StateOrdering};
use crate::synth::{self, SceneSpec};

pub const FILTERED: &str = "filtered";
pub const SMOOTHED: &str = "smoothed";
pub const FUSED_MANIFEST: &str = "fused.csv";

/// Observations and archive loaded from a run configuration.
pub struct Loaded {
    pub config: RunConfig,
    pub input: FusionInput<f64>,
    /// The earliest high-resolution observation.
    pub init_image: RasterImage<f64>,
}

impl Loaded {
    pub fn high_res_dates(&self) -> BTreeSet<Day> {
        let hr: BTreeSet<&str> = self.input.modalities.iter().filter(|m| m.role == ModalityRole::HighRes).map(|m| m.name.as_str()).collect();
        self.input.observations.iter().filter(|o| hr.contains(o.modality.as_str())).map(|o| o.date()).collect()
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(FusionError::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn modality_section<'a>(config: &'a RunConfig, name: &str) -> Result<&'a ModalitySection> {
    config
        .modalities
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| FusionError::Config(format!("manifest references unconfigured modality {name:?}")))
}

pub fn load(config: &RunConfig) -> Result<Loaded> {
    require_file(&config.data.observations, "observation manifest")?;
    require_file(&config.data.historical, "historical manifest")?;
    let rows = read_manifest(&config.data.observations)?;
    let hist_rows = read_manifest(&config.data.historical)?;
    for row in rows.iter().chain(&hist_rows) {
        require_file(&row.path, "raster")?;
        if let Some(m) = &row.mask_path {
            require_file(m, "quality mask")?;
        }
    }
    let mut first_hr: Option<&ManifestRow> = None;
    for row in &rows {
        if modality_section(config, &row.modality)?.role == RoleSetting::HighRes && first_hr.is_none_or(|f| row.date < f.date) {
            first_hr = Some(row);
        }
    }
    let first_hr = first_hr.ok_or_else(|| FusionError::Data("observation manifest has no high-resolution image".into()))?;
    let init_image: RasterImage<f64> = read_frst(&first_hr.path, first_hr.date, &first_hr.modality)?;

    let coarse = config.modalities.iter().map(|m| m.factor).max().unwrap_or(1);
    let ordering = StateOrdering::new(init_image.height(), init_image.width(), init_image.bands(), coarse)?;
    let modalities = config.modalities.iter().map(|m| m.model(init_image.bands())).collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::with_capacity(rows.len());
    for row in &rows {
        let image: RasterImage<f64> = read_frst(&row.path, row.date, &row.modality)?;
        let mask = match &row.mask_path {
            Some(m) => {
                let codes = read_qa_codes(m)?;
                if codes.len() != image.n_pixels() {
                    return Err(FusionError::Dimension { what: "quality codes vs raster pixels", a: codes.len(), b: image.n_pixels() });
                }
                let qa = mask_from_qa(&codes);
                qa.restrict(|p| image.pixel_valid(p))
            }
            None => OutlierMask::full(image.n_pixels()).restrict(|p| image.pixel_valid(p)),
        };
        observations.push(Observation { modality: row.modality.clone(), image, mask, source: Some(row.path.clone()) });
    }

    let mut archive = Vec::with_capacity(hist_rows.len());
    for row in &hist_rows {
        let image: RasterImage<f64> = read_frst(&row.path, row.date, &row.modality)?;
        archive.push((row.date, ordering.vectorize(&image)?));
    }
    let history = HistoricalDataset::new(archive)?;
    Ok(Loaded { config: config.clone(), input: FusionInput { ordering, modalities, observations, history }, init_image })
}

/// Refuses to replace any of `names` inside `dir` unless `force`; with
/// `force`, removes them. Creates `dir`.
fn prepare_output(dir: &Path, names: &[&str], force: bool) -> Result<()> {
    let existing: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).filter(|p| p.exists()).collect();
    if !existing.is_empty() && !force {
        return Err(FusionError::Config(format!("refusing to overwrite {} (pass --force)", existing[0].display())));
    }
    for p in existing {
        let r = if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) };
        r.map_err(|e| FusionError::io(&p, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| FusionError::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| FusionError::Csv { path: path.to_path_buf(), source })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let err = |source| FusionError::Csv { path: path.to_path_buf(), source };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| FusionError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn frame_name(date: Day) -> String {
    format!("{date}.frst")
}

#[derive(Debug, Clone, Default)]
pub struct FuseOptions {
    pub out: Option<PathBuf>,
    pub structure: Option<StructureKind>,
    /// Runs the smoother even if the config leaves it off.
    pub smoother: bool,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct FuseSummary {
    pub out: PathBuf,
    pub instants: usize,
    pub smoothed: bool,
    pub dropped: usize,
    pub s_max: f64,
}

struct HealthRow {
    instant: usize,
    date: Day,
    pass: &'static str,
    max_asymmetry: f64,
    min_eigenvalue: f64,
    min_variance: f64,
    mean_variance: f64,
}

fn health_row(pass: &'static str, b: &StateBelief<f64>) -> HealthRow {
    let h = b.cov.health();
    let diag = b.cov.diagonal();
    HealthRow {
        instant: b.instant,
        date: b.date,
        pass,
        max_asymmetry: h.max_asymmetry,
        min_eigenvalue: h.min_eigenvalue,
        min_variance: h.min_diagonal,
        mean_variance: diag.iter().sum::<f64>() / diag.len() as f64,
    }
}

fn write_pass(out: &Path, variant: &str, ordering: &StateOrdering, beliefs: &[StateBelief<f64>], manifest: &mut Vec<ManifestRow>) -> Result<()> {
    let var_dir = format!("{variant}_var");
    for d in [variant, var_dir.as_str()] {
        fs::create_dir_all(out.join(d)).map_err(|e| FusionError::io(out.join(d), e))?;
    }
    for b in beliefs {
        let rel = Path::new(variant).join(frame_name(b.date));
        write_frst(&out.join(&rel), &ordering.devectorize(&b.mean, b.date, variant)?)?;
        let var = ordering.devectorize(&b.cov.diagonal(), b.date, &var_dir)?;
        write_frst(&out.join(&var_dir).join(frame_name(b.date)), &var)?;
        manifest.push(ManifestRow { date: b.date, modality: variant.to_string(), path: rel, mask_path: None });
    }
    Ok(())
}

pub fn cmd_fuse(config: &RunConfig, opts: &FuseOptions) -> Result<FuseSummary> {
    let loaded = load(config)?;
    let mut settings = config.settings()?;
    if let Some(s) = opts.structure {
        settings.structure = s;
    }
    settings.smoother |= opts.smoother;
    let out = opts.out.clone().unwrap_or_else(|| config.data.output.clone());
    let names = [FILTERED, "filtered_var", SMOOTHED, "smoothed_var", FUSED_MANIFEST, "fusion_log.csv", "dropped.csv", "covariance.csv"];
    prepare_output(&out, &names, opts.force)?;

    let mut health = Vec::new();
    let timeline = run_filter_observed(&loaded.input, &settings, &mut |stage, belief| match stage {
        Stage::Constrained => health.push(health_row(FILTERED, belief)),
        Stage::Smoothed => health.push(health_row(SMOOTHED, belief)),
        _ => {}
    })?;
    write_fuse_outputs(&out, &loaded.input.ordering, &timeline, &health)?;
    Ok(FuseSummary {
        out,
        instants: timeline.filtered.len(),
        smoothed: timeline.smoothed.is_some(),
        dropped: timeline.dropped.len(),
        s_max: timeline.s_max,
    })
}

fn write_fuse_outputs(out: &Path, ordering: &StateOrdering, tl: &FusionTimeline<f64>, health: &[HealthRow]) -> Result<()> {
    let mut manifest = Vec::new();
    write_pass(out, FILTERED, ordering, &tl.filtered, &mut manifest)?;
    if let Some(s) = &tl.smoothed {
        write_pass(out, SMOOTHED, ordering, s, &mut manifest)?;
    }
    write_manifest(&out.join(FUSED_MANIFEST), &manifest)?;
    write_rows(
        &out.join("fusion_log.csv"),
        &["k", "date", "modalities", "assimilated_pixels", "skipped_pixels", "mean_innovation_norm"],
        tl.records.iter().map(|r| {
            [
                r.instant.to_string(),
                r.date.to_string(),
                r.modalities.join("+"),
                r.assimilated_pixels.to_string(),
                r.skipped_pixels.to_string(),
                r.mean_innovation_norm.to_string(),
            ]
        }),
    )?;
    write_rows(
        &out.join("dropped.csv"),
        &["date", "modality", "source", "reason"],
        tl.dropped.iter().map(|d| {
            [d.date.to_string(), d.modality.clone(), d.source.as_ref().map(|p| p.display().to_string()).unwrap_or_default(), d.reason.clone()]
        }),
    )?;
    write_rows(
        &out.join("covariance.csv"),
        &["k", "date", "pass", "max_asymmetry", "min_eigenvalue", "min_variance", "mean_variance"],
        health.iter().map(|h| {
            [
                h.instant.to_string(),
                h.date.to_string(),
                h.pass.to_string(),
                h.max_asymmetry.to_string(),
                h.min_eigenvalue.to_string(),
                h.min_variance.to_string(),
                h.mean_variance.to_string(),
            ]
        }),
    )
}

/// Water/land classification with either fixed or per-image centroids.
pub struct Classifier {
    nir_band: usize,
    fixed: Option<[Vec<f64>; 2]>,
}

impl Classifier {
    pub fn new(config: &RunConfig, init_image: &RasterImage<f64>) -> Result<Self> {
        let (mode, nir_band) = (config.classify.centroids, config.classify.nir_band);
        if nir_band >= init_image.bands() {
            return Err(FusionError::Config(format!("nir_band {nir_band} out of range for {} bands", init_image.bands())));
        }
        let fixed = match mode {
            CentroidMode::Initial => Some(kmeans2(&image_pixels(init_image), nir_band)?),
            CentroidMode::PerDate => None,
        };
        Ok(Classifier { nir_band, fixed })
    }

    pub fn centroids(&self) -> Option<&[Vec<f64>; 2]> {
        self.fixed.as_ref()
    }

    pub fn classify(&self, image: &RasterImage<f64>) -> Result<WaterMap> {
        match &self.fixed {
            Some(c) => classify_water(image, c, self.nir_band),
            None => classify_water(image, &kmeans2(&image_pixels(image), self.nir_band)?, self.nir_band),
        }
    }
}

fn read_fused(out: &Path, manifest: Option<&Path>) -> Result<Vec<(String, RasterImage<f64>)>> {
    let path = manifest.map(Path::to_path_buf).unwrap_or_else(|| out.join(FUSED_MANIFEST));
    require_file(&path, "fused manifest (run fuse first)")?;
    let rows = read_manifest(&path)?;
    rows.iter()
        .map(|r| {
            require_file(&r.path, "fused raster")?;
            Ok((r.modality.clone(), read_frst(&r.path, r.date, &r.modality)?))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub out: Option<PathBuf>,
    /// Overrides the config's truth manifest.
    pub truth: Option<PathBuf>,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub variant: String,
    pub date: Day,
    /// Truth exists and no high-resolution image was fused on this date.
    pub held_out: bool,
    pub sam_deg: Option<f64>,
    pub sam_excluded: usize,
    pub miscls_pct: Option<f64>,
    pub water_fraction: f64,
    pub truth_water_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<EvaluationRow>,
}

impl EvaluationReport {
    /// Mean SAM over held-out dates with a defined angle.
    pub fn mean_held_out_sam(&self, variant: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.variant == variant && r.held_out).filter_map(|r| r.sam_deg).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_held_out_miscls(&self, variant: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.variant == variant && r.held_out).filter_map(|r| r.miscls_pct).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn variants(&self) -> Vec<String> {
        let mut v: Vec<String> = self.rows.iter().map(|r| r.variant.clone()).collect();
        v.dedup();
        v
    }
}

pub fn cmd_evaluate(config: &RunConfig, opts: &EvaluateOptions) -> Result<EvaluationReport> {
    let out = opts.out.clone().unwrap_or_else(|| config.data.output.clone());
    let truth_path = opts
        .truth
        .clone()
        .or_else(|| config.data.truth.clone())
        .ok_or_else(|| FusionError::Config("no truth manifest given".into()))?;
    require_file(&truth_path, "truth manifest")?;
    let loaded = load(config)?;
    let fused = read_fused(&out, None)?;
    let mut truth = Vec::new();
    for row in read_manifest(&truth_path)? {
        require_file(&row.path, "truth raster")?;
        truth.push(read_frst::<f64>(&row.path, row.date, &row.modality)?);
    }
    prepare_output(&out, &["evaluation.csv"], opts.force)?;

    let classifier = Classifier::new(config, &loaded.init_image)?;
    let hr_dates = loaded.high_res_dates();
    let mut rows = Vec::with_capacity(fused.len());
    for (variant, est) in &fused {
        let map = classifier.classify(est)?;
        let mut row = EvaluationRow {
            variant: variant.clone(),
            date: est.date,
            held_out: false,
            sam_deg: None,
            sam_excluded: 0,
            miscls_pct: None,
            water_fraction: map.water_fraction(),
            truth_water_fraction: None,
        };
        if let Some(t) = truth.iter().find(|t| t.date == est.date) {
            if !t.same_shape(est) {
                return Err(FusionError::Shape(format!("truth and estimate differ in shape on {}", est.date)));
            }
            let s = sam(t, est)?;
            let truth_map = classifier.classify(t)?;
            row.held_out = !hr_dates.contains(&est.date);
            row.sam_deg = s.mean_deg;
            row.sam_excluded = s.excluded;
            row.miscls_pct = Some(misclassification(&map, &truth_map)?);
            row.truth_water_fraction = Some(truth_map.water_fraction());
        }
        rows.push(row);
    }
    write_rows(
        &out.join("evaluation.csv"),
        &["variant", "date", "held_out", "sam_deg", "sam_excluded", "miscls_pct", "water_fraction", "truth_water_fraction"],
        rows.iter().map(|r| {
            [
                r.variant.clone(),
                r.date.to_string(),
                r.held_out.to_string(),
                opt(r.sam_deg),
                r.sam_excluded.to_string(),
                opt(r.miscls_pct),
                r.water_fraction.to_string(),
                opt(r.truth_water_fraction),
            ]
        }),
    )?;
    Ok(EvaluationReport { rows })
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub spec: SceneSpec,
    pub config_path: PathBuf,
    pub acquisitions: usize,
}

/// Reads a scene spec from TOML; `None` gives the default scene.
pub fn load_scene_spec(path: Option<&Path>) -> Result<SceneSpec> {
    let spec = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| FusionError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| FusionError::Config(format!("{}: {e}", p.display())))?
        }
        None => SceneSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Generates a scene and writes rasters, manifests, the effective scene spec
/// (with its seed) and a ready-to-run config into `out`.
pub fn cmd_synth(spec: &SceneSpec, out: &Path, force: bool) -> Result<SynthSummary> {
    spec.validate()?;
    let ds = synth::generate(spec)?;
    let names = ["hr", "lr", "qa", "history", "truth", "observations.csv", "historical.csv", "truth.csv", "scene.toml", "fusion.toml"];
    prepare_output(out, &names, force)?;
    for d in ["hr", "lr", "qa", "history", "truth"] {
        fs::create_dir_all(out.join(d)).map_err(|e| FusionError::io(out.join(d), e))?;
    }

    let mut obs_rows = Vec::new();
    for a in &ds.acquisitions {
        let rel = Path::new(&a.modality).join(frame_name(a.image.date));
        write_frst(&out.join(&rel), &a.image)?;
        let mask_path = if a.modality == synth::LR_MODALITY {
            let q = Path::new("qa").join(frame_name(a.image.date));
            write_qa_codes(&out.join(&q), a.image.height(), a.image.width(), &a.qa)?;
            Some(q)
        } else {
            None
        };
        obs_rows.push(ManifestRow { date: a.image.date, modality: a.modality.clone(), path: rel, mask_path });
    }
    write_manifest(&out.join("observations.csv"), &obs_rows)?;
    for (dir, manifest, frames) in [("history", "historical.csv", &ds.history), ("truth", "truth.csv", &ds.truth)] {
        let mut rows = Vec::new();
        for f in frames.iter() {
            let rel = Path::new(dir).join(frame_name(f.date));
            write_frst(&out.join(&rel), f)?;
            rows.push(ManifestRow { date: f.date, modality: dir.to_string(), path: rel, mask_path: None });
        }
        write_manifest(&out.join(manifest), &rows)?;
    }
    let scene = toml::to_string(spec).map_err(|e| FusionError::Config(e.to_string()))?;
    fs::write(out.join("scene.toml"), scene).map_err(|e| FusionError::io(out.join("scene.toml"), e))?;

    let config = synth_run_config(spec);
    let config_path = out.join("fusion.toml");
    fs::write(&config_path, config.to_toml()).map_err(|e| FusionError::io(&config_path, e))?;
    Ok(SynthSummary { spec: spec.clone(), config_path, acquisitions: ds.acquisitions.len() })
}

fn section_of(model: &ModalityModel<f64>, role: RoleSetting) -> ModalitySection {
    ModalitySection {
        name: model.name.clone(),
        role,
        factor: model.factor(),
        kernel: Some(KernelSetting::Named("uniform".into())),
        gains: None,
        spectral: None,
        noise_variance: Some(VarianceSetting::PerBand(model.variances().to_vec())),
    }
}

/// Run config matching a synthetic dataset written by [`cmd_synth`].
pub fn synth_run_config(spec: &SceneSpec) -> RunConfig {
    RunConfig {
        data: crate::config::DataSection {
            observations: "observations.csv".into(),
            historical: "historical.csv".into(),
            output: "fused".into(),
            truth: Some("truth.csv".into()),
        },
        fusion: Default::default(),
        classify: Default::default(),
        modalities: vec![section_of(&spec.hr_model(), RoleSetting::HighRes), section_of(&spec.lr_model(), RoleSetting::LowRes)],
    }
}

#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    pub out: Option<PathBuf>,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QRecord {
    pub instant: usize,
    pub date: Day,
    pub delta_days: i64,
    pub matched_date: Day,
    pub window_span_days: i64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Writes the process-noise diagonal used at every predict step as a raster.
pub fn cmd_calibrate_q(config: &RunConfig, opts: &OutputOptions) -> Result<Vec<QRecord>> {
    let loaded = load(config)?;
    let out = opts.out.clone().unwrap_or_else(|| config.data.output.clone());
    prepare_output(&out, &["q", "q_log.csv"], opts.force)?;
    // Q does not depend on the covariance structure; the diagonal one is cheapest.
    let settings = FusionSettings { structure: StructureKind::Diagonal, smoother: false, ..config.settings()? };
    let tl = run_filter_observed(&loaded.input, &settings, &mut |_, _| {})?;
    let dates = tl.dates();
    fs::create_dir_all(out.join("q")).map_err(|e| FusionError::io(out.join("q"), e))?;
    let mut records = Vec::new();
    for (k, (model, &(matched, span))) in tl.transitions.iter().zip(&tl.calibration).enumerate() {
        let date = dates[k + 1];
        let q = &model.noise;
        write_frst(&out.join("q").join(frame_name(date)), &loaded.input.ordering.devectorize(q, date, "q")?)?;
        records.push(QRecord {
            instant: k + 1,
            date,
            delta_days: dates[k].days_until(date),
            matched_date: loaded.input.history.date(matched),
            window_span_days: span,
            min: q.iter().copied().fold(f64::INFINITY, f64::min),
            max: q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: q.iter().sum::<f64>() / q.len() as f64,
        });
    }
    write_rows(
        &out.join("q_log.csv"),
        &["k", "date", "delta_days", "matched_date", "window_span_days", "q_min", "q_max", "q_mean"],
        records.iter().map(|r| {
            [
                r.instant.to_string(),
                r.date.to_string(),
                r.delta_days.to_string(),
                r.matched_date.to_string(),
                r.window_span_days.to_string(),
                r.min.to_string(),
                r.max.to_string(),
                r.mean.to_string(),
            ]
        }),
    )?;
    Ok(records)
}

#[derive(Debug, Clone, Default)]
pub struct ClassifyOptions {
    pub out: Option<PathBuf>,
    /// Manifest of rasters to classify; defaults to the fused manifest.
    pub input: Option<PathBuf>,
    pub force: bool,
}

/// Water maps and the water-fraction series for every raster in a manifest.
pub fn cmd_classify(config: &RunConfig, opts: &ClassifyOptions) -> Result<Vec<(String, Day, f64)>> {
    let out = opts.out.clone().unwrap_or_else(|| config.data.output.clone());
    let loaded = load(config)?;
    let images = read_fused(&out, opts.input.as_deref())?;
    prepare_output(&out, &["water", "water_fraction.csv"], opts.force)?;
    let classifier = Classifier::new(config, &loaded.init_image)?;
    let mut series = Vec::with_capacity(images.len());
    for (variant, img) in &images {
        let map = classifier.classify(img)?;
        let dir = out.join("water").join(variant);
        fs::create_dir_all(&dir).map_err(|e| FusionError::io(&dir, e))?;
        write_frst(&dir.join(frame_name(img.date)), &map.to_raster::<f64>())?;
        series.push((variant.clone(), img.date, map.water_fraction()));
    }
    write_rows(
        &out.join("water_fraction.csv"),
        &["variant", "date", "water_fraction"],
        series.iter().map(|(v, d, f)| [v.clone(), d.to_string(), f.to_string()]),
    )?;
    Ok(series)
}
