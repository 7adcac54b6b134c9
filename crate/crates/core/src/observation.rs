//! Linear observation operators: spatial degradation, spectral response and
//! outlier removal for one modality at one instant.
//!
//! With the state in coarse-pixel-major order and a kernel whose support is a
//! single low-resolution footprint, the row-permuted stacked operator is
//! block-diagonal with one identical `L_m x d²·L_H` block per low-resolution
//! pixel. Everything here works on that per-pixel block; the dense stacked
//! matrix is only materialized for diagnostics and tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{FusionError, Result};
use crate::raster::{MeasurementPermutation, RasterImage, StateOrdering};
use crate::scalar::Scalar;

/// Quality code of a low-resolution pixel that may be assimilated.
pub const QA_IDEAL: u32 = 0;

/// `L_m x L_H` nonnegative weights mapping high-resolution bands to measured bands.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse<T: Scalar> {
    matrix: DMatrix<T>,
}

impl<T: Scalar> SpectralResponse<T> {
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(FusionError::Invalid("empty spectral response".into()));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(FusionError::Invalid("spectral gains must be finite and nonnegative".into()));
        }
        for (i, row) in matrix.row_iter().enumerate() {
            if row.iter().all(|v| *v == T::zero()) {
                return Err(FusionError::Invalid(format!("spectral response row {i} is all zero")));
            }
        }
        Ok(SpectralResponse { matrix })
    }

    pub fn identity(bands: usize) -> Self {
        SpectralResponse { matrix: DMatrix::identity(bands, bands) }
    }

    /// One measured band per high-resolution band, each with its own gain.
    pub fn diagonal_gains(gains: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(gains)))
    }

    pub fn measured_bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn state_bands(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }
}

/// Weights over the `d x d` high-resolution pixels inside one low-resolution
/// pixel (row-major), with decimation factor `d` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDegradation<T: Scalar> {
    kernel: Vec<T>,
    factor: usize,
}

impl<T: Scalar> SpatialDegradation<T> {
    pub fn new(kernel: Vec<T>, factor: usize) -> Result<Self> {
        if factor == 0 || kernel.len() != factor * factor {
            return Err(FusionError::Dimension { what: "kernel length vs factor²", a: kernel.len(), b: factor * factor });
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::Invalid("non-finite kernel weight".into()));
        }
        let sum = kernel.iter().fold(T::zero(), |a, &b| a + b);
        if (sum - T::one()).abs() > T::lit(1e-6) {
            return Err(FusionError::Invalid(format!("kernel weights sum to {} instead of 1", sum.as_f64())));
        }
        Ok(SpatialDegradation { kernel, factor })
    }

    pub fn uniform(factor: usize) -> Self {
        let w = T::one() / T::from_usize_lossy(factor * factor);
        SpatialDegradation { kernel: vec![w; factor * factor], factor }
    }

    pub fn identity() -> Self {
        Self::uniform(1)
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn kernel(&self) -> &[T] {
        &self.kernel
    }
}

/// The per-low-resolution-pixel block `H = h ⊗ C`, of shape `L_m x d²·L_H`.
pub fn build_pixel_block<T: Scalar>(spectral: &SpectralResponse<T>, spatial: &SpatialDegradation<T>) -> DMatrix<T> {
    let h = DMatrix::from_row_slice(1, spatial.kernel.len(), &spatial.kernel);
    h.kronecker(&spectral.matrix)
}

/// Retained low-resolution pixels (raster order) for one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlierMask {
    kept: Vec<usize>,
    n_pixels: usize,
}

impl OutlierMask {
    pub fn new(kept: Vec<usize>, n_pixels: usize) -> Result<Self> {
        if kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FusionError::Invalid("outlier mask rows must be strictly increasing".into()));
        }
        if kept.last().is_some_and(|&last| last >= n_pixels) {
            return Err(FusionError::Invalid("outlier mask row out of range".into()));
        }
        Ok(OutlierMask { kept, n_pixels })
    }

    pub fn full(n_pixels: usize) -> Self {
        OutlierMask { kept: (0..n_pixels).collect(), n_pixels }
    }

    /// The modality is not observed at this instant.
    pub fn empty(n_pixels: usize) -> Self {
        OutlierMask { kept: Vec::new(), n_pixels }
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn n_kept(&self) -> usize {
        self.kept.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Drops pixels for which `keep` is false.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> OutlierMask {
        OutlierMask { kept: self.kept.iter().copied().filter(|&p| keep(p)).collect(), n_pixels: self.n_pixels }
    }
}

/// Keeps exactly the pixels whose quality code is [`QA_IDEAL`].
pub fn mask_from_qa(qa_codes: &[u32]) -> OutlierMask {
    OutlierMask {
        kept: qa_codes.iter().enumerate().filter(|(_, &c)| c == QA_IDEAL).map(|(i, _)| i).collect(),
        n_pixels: qa_codes.len(),
    }
}

/// One diagonal `L_m x L_m` noise block per kept pixel.
pub fn build_noise_covariance<T: Scalar>(per_band_variances: &[T], mask: &OutlierMask) -> Result<Vec<DMatrix<T>>> {
    if per_band_variances.is_empty() {
        return Err(FusionError::Invalid("no noise variances given".into()));
    }
    if let Some(v) = per_band_variances.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
        return Err(FusionError::Invalid(format!("noise variance must be positive, got {}", v.as_f64())));
    }
    let block = DMatrix::from_diagonal(&DVector::from_column_slice(per_band_variances));
    Ok(vec![block; mask.n_kept()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModalityRole {
    HighRes,
    LowRes,
}

/// Time-invariant description of one modality: everything but the outlier mask.
#[derive(Debug, Clone)]
pub struct ModalityModel<T: Scalar> {
    pub name: String,
    pub role: ModalityRole,
    spectral: SpectralResponse<T>,
    spatial: SpatialDegradation<T>,
    block: DMatrix<T>,
    variances: Vec<T>,
}

impl<T: Scalar> ModalityModel<T> {
    pub fn new(
        name: impl Into<String>,
        role: ModalityRole,
        spectral: SpectralResponse<T>,
        spatial: SpatialDegradation<T>,
        variances: Vec<T>,
    ) -> Result<Self> {
        if variances.len() != spectral.measured_bands() {
            return Err(FusionError::Dimension { what: "noise variances vs measured bands", a: variances.len(), b: spectral.measured_bands() });
        }
        build_noise_covariance(&variances, &OutlierMask::empty(0))?;
        let block = build_pixel_block(&spectral, &spatial);
        Ok(ModalityModel { name: name.into(), role, spectral, spatial, block, variances })
    }

    /// Identity spatial and spectral response with the given per-band variance.
    pub fn high_res(name: impl Into<String>, bands: usize, variance: T) -> Self {
        Self::new(name, ModalityRole::HighRes, SpectralResponse::identity(bands), SpatialDegradation::identity(), vec![variance; bands])
            .expect("valid high-resolution model")
    }

    pub fn spectral(&self) -> &SpectralResponse<T> {
        &self.spectral
    }

    pub fn spatial(&self) -> &SpatialDegradation<T> {
        &self.spatial
    }

    pub fn factor(&self) -> usize {
        self.spatial.factor
    }

    pub fn measured_bands(&self) -> usize {
        self.spectral.measured_bands()
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn pixel_block(&self) -> &DMatrix<T> {
        &self.block
    }

    /// Grid of this modality over the high-resolution scene, `(rows, cols)`.
    pub fn grid(&self, ordering: &StateOrdering) -> (usize, usize) {
        (ordering.hr_height() / self.factor(), ordering.hr_width() / self.factor())
    }

    pub fn operator(&self, ordering: &StateOrdering, mask: OutlierMask) -> Result<ObservationOperator<T>> {
        ObservationOperator::new(self, ordering, mask)
    }
}

/// Stacked observation operator of one modality at one instant, with its noise.
///
/// Measurements are exchanged in band-major stacked order (all kept pixels of
/// band 1, then band 2, ...), the natural order of band-sequential rasters.
#[derive(Debug, Clone)]
pub struct ObservationOperator<T: Scalar> {
    pub modality: String,
    pub role: ModalityRole,
    block: DMatrix<T>,
    mask: OutlierMask,
    noise: Vec<DMatrix<T>>,
    run_starts: Vec<usize>,
    run_len: usize,
    state_len: usize,
    grid: (usize, usize),
}

impl<T: Scalar> ObservationOperator<T> {
    pub fn new(model: &ModalityModel<T>, ordering: &StateOrdering, mask: OutlierMask) -> Result<Self> {
        let d = model.factor();
        if model.spectral.state_bands() != ordering.n_bands() {
            return Err(FusionError::Dimension { what: "spectral response columns vs state bands", a: model.spectral.state_bands(), b: ordering.n_bands() });
        }
        // A footprint is a contiguous state run only for single HR pixels or whole coarse pixels.
        if d != 1 && d != ordering.coarse_factor() {
            return Err(FusionError::Dimension { what: "modality factor must be 1 or the coarse factor", a: d, b: ordering.coarse_factor() });
        }
        let grid = model.grid(ordering);
        if mask.n_pixels() != grid.0 * grid.1 {
            return Err(FusionError::Dimension { what: "mask pixel count vs modality grid", a: mask.n_pixels(), b: grid.0 * grid.1 });
        }
        let run_starts = mask
            .kept()
            .iter()
            .map(|&p| ordering.forward_index(0, (p / grid.1) * d, (p % grid.1) * d))
            .collect();
        Ok(ObservationOperator {
            modality: model.name.clone(),
            role: model.role,
            block: model.block.clone(),
            noise: build_noise_covariance(&model.variances, &mask)?,
            mask,
            run_starts,
            run_len: d * d * ordering.n_bands(),
            state_len: ordering.state_len(),
            grid,
        })
    }

    pub fn pixel_block(&self) -> &DMatrix<T> {
        &self.block
    }

    pub fn mask(&self) -> &OutlierMask {
        &self.mask
    }

    pub fn noise_blocks(&self) -> &[DMatrix<T>] {
        &self.noise
    }

    /// First state index of each kept pixel's footprint.
    pub fn run_starts(&self) -> &[usize] {
        &self.run_starts
    }

    pub fn run_len(&self) -> usize {
        self.run_len
    }

    pub fn measured_bands(&self) -> usize {
        self.block.nrows()
    }

    pub fn output_len(&self) -> usize {
        self.measured_bands() * self.mask.n_kept()
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn permutation(&self) -> Option<MeasurementPermutation> {
        MeasurementPermutation::new(self.mask.n_kept(), self.measured_bands()).ok()
    }

    /// Noiseless stacked measurement of `state`, band-major.
    pub fn apply(&self, state: &[T]) -> Result<Vec<T>> {
        if state.len() != self.state_len {
            return Err(FusionError::Dimension { what: "state length vs operator", a: state.len(), b: self.state_len });
        }
        let n = self.mask.n_kept();
        let mut out = vec![T::zero(); self.output_len()];
        for (i, &start) in self.run_starts.iter().enumerate() {
            let slice = DVector::from_column_slice(&state[start..start + self.run_len]);
            let y = &self.block * slice;
            for (b, v) in y.iter().enumerate() {
                out[b * n + i] = *v;
            }
        }
        Ok(out)
    }

    /// Extracts the kept pixels of a measured raster as a band-major stack.
    pub fn stack_measurement(&self, image: &RasterImage<T>) -> Result<Vec<T>> {
        if image.height() != self.grid.0 || image.width() != self.grid.1 || image.bands() != self.measured_bands() {
            return Err(FusionError::Shape(format!(
                "{} raster is {}x{}x{}, operator expects {}x{}x{}",
                self.modality,
                image.height(),
                image.width(),
                image.bands(),
                self.grid.0,
                self.grid.1,
                self.measured_bands()
            )));
        }
        let np = image.n_pixels();
        let values = image.values();
        Ok((0..self.measured_bands())
            .flat_map(|b| self.mask.kept().iter().map(move |&p| values[b * np + p]))
            .collect())
    }

    /// Dense stacked operator in band-major row order. Test and diagnostic use only.
    pub fn materialize_dense(&self) -> DMatrix<T> {
        let n = self.mask.n_kept();
        let mut dense = DMatrix::zeros(self.output_len(), self.state_len);
        for (i, &start) in self.run_starts.iter().enumerate() {
            for b in 0..self.measured_bands() {
                for c in 0..self.run_len {
                    dense[(b * n + i, start + c)] = self.block[(b, c)];
                }
            }
        }
        dense
    }

    /// Dense stacked noise covariance in band-major order.
    pub fn materialize_noise_dense(&self) -> DMatrix<T> {
        let n = self.mask.n_kept();
        let mut dense = DMatrix::zeros(self.output_len(), self.output_len());
        for (i, block) in self.noise.iter().enumerate() {
            for a in 0..self.measured_bands() {
                for b in 0..self.measured_bands() {
                    dense[(a * n + i, b * n + i)] = block[(a, b)];
                }
            }
        }
        dense
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_block_is_identity() {
        let h = build_pixel_block(&SpectralResponse::<f64>::identity(2), &SpatialDegradation::identity());
        assert_eq!(h, DMatrix::identity(2, 2));
    }

    #[test]
    fn uniform_nine_by_nine_single_band_selection() {
        let c = SpectralResponse::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let h = build_pixel_block(&c, &SpatialDegradation::<f64>::uniform(9));
        assert_eq!(h.shape(), (1, 162));
        for col in 0..162 {
            let expected = if col % 2 == 0 { 1.0 / 81.0 } else { 0.0 };
            assert_eq!(h[(0, col)], expected);
        }
    }

    #[test]
    fn kronecker_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.1).collect();
        let total: f64 = raw.iter().sum();
        let spatial = SpatialDegradation::new(raw.iter().map(|v| v / total).collect(), 2).unwrap();
        let spectral = SpectralResponse::new(DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() + 0.01)).unwrap();
        let h = build_pixel_block(&spectral, &spatial);
        assert_eq!(h.shape(), (2, 8));
        for l in 0..2 {
            for p in 0..4 {
                for b in 0..2 {
                    assert_eq!(h[(l, p * 2 + b)], spatial.kernel()[p] * spectral.matrix()[(l, b)]);
                }
            }
        }
    }

    #[test]
    fn dimension_errors() {
        assert!(SpatialDegradation::new(vec![0.5f64, 0.5], 2).is_err());
        assert!(SpatialDegradation::new(vec![0.5f64; 4], 2).is_err());
        assert!(SpectralResponse::new(DMatrix::from_row_slice(1, 2, &[0.0f64, 0.0])).is_err());
        let model = ModalityModel::new("m", ModalityRole::LowRes, SpectralResponse::identity(3), SpatialDegradation::<f64>::uniform(3), vec![1e-4; 3]).unwrap();
        let ordering = StateOrdering::new(6, 6, 2, 3).unwrap();
        assert!(model.operator(&ordering, OutlierMask::full(4)).is_err());
    }

    #[test]
    fn qa_masks() {
        assert_eq!(mask_from_qa(&[0, 0, 0]).kept(), &[0, 1, 2]);
        assert!(mask_from_qa(&[1, 2, 3]).is_empty());
        let codes: Vec<u32> = (0..9).map(|i| (i % 2) as u32).collect();
        let oracle: Vec<usize> = (0..9).filter(|i| codes[*i] == 0).collect();
        assert_eq!(mask_from_qa(&codes).kept(), oracle.as_slice());
        assert_eq!(oracle, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn noise_blocks() {
        let mask = OutlierMask::full(3);
        let blocks = build_noise_covariance(&[1e-10f64, 1e-10], &mask).unwrap();
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|b| *b == DMatrix::identity(2, 2) * 1e-10));
        let blocks = build_noise_covariance(&[1e-4f64], &mask).unwrap();
        assert!(blocks.iter().all(|b| b[(0, 0)] == 1e-4));
        assert!(build_noise_covariance(&[1e-4f64], &OutlierMask::empty(3)).unwrap().is_empty());
        assert!(build_noise_covariance(&[0.0f64], &mask).is_err());
        assert!(build_noise_covariance(&[-1.0f64], &mask).is_err());
    }

    #[test]
    fn constant_state_maps_to_constant_measurement() {
        let ordering = StateOrdering::new(9, 9, 2, 3).unwrap();
        let model = ModalityModel::new("lr", ModalityRole::LowRes, SpectralResponse::identity(2), SpatialDegradation::<f64>::uniform(3), vec![1e-4; 2]).unwrap();
        let op = model.operator(&ordering, OutlierMask::full(9)).unwrap();
        let y = op.apply(&vec![0.37; ordering.state_len()]).unwrap();
        assert_eq!(y.len(), 18);
        assert!(y.iter().all(|v| (v - 0.37).abs() < 1e-15));

        let gains = SpectralResponse::diagonal_gains(&[2.0f64, 0.5]).unwrap();
        let model = ModalityModel::new("lr", ModalityRole::LowRes, gains, SpatialDegradation::uniform(3), vec![1e-4; 2]).unwrap();
        let y = model.operator(&ordering, OutlierMask::full(9)).unwrap().apply(&vec![0.4; ordering.state_len()]).unwrap();
        assert!(y[..9].iter().all(|v| (v - 0.8).abs() < 1e-14));
        assert!(y[9..].iter().all(|v| (v - 0.2).abs() < 1e-14));
    }

    #[test]
    fn empty_mask_gives_empty_output() {
        let ordering = StateOrdering::new(9, 9, 2, 3).unwrap();
        let model = ModalityModel::new("lr", ModalityRole::LowRes, SpectralResponse::identity(2), SpatialDegradation::<f64>::uniform(3), vec![1e-4; 2]).unwrap();
        let op = model.operator(&ordering, OutlierMask::empty(9)).unwrap();
        assert!(op.apply(&vec![0.1; 162]).unwrap().is_empty());
        assert!(op.permutation().is_none());
    }

    #[test]
    fn apply_matches_dense_materialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ordering = StateOrdering::new(6, 9, 2, 3).unwrap();
        let c = SpectralResponse::new(DMatrix::from_row_slice(1, 2, &[0.7, 0.3])).unwrap();
        let model = ModalityModel::new("lr", ModalityRole::LowRes, c, SpatialDegradation::<f64>::uniform(3), vec![1e-4]).unwrap();
        let mask = OutlierMask::new(vec![0, 2, 3, 5], 6).unwrap();
        let op = model.operator(&ordering, mask).unwrap();
        let state: Vec<f64> = (0..ordering.state_len()).map(|_| rng.random()).collect();
        let dense = op.materialize_dense() * DVector::from_column_slice(&state);
        let fast = op.apply(&state).unwrap();
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(op.apply(&state[1..]).is_err());
    }

    #[test]
    fn high_res_operator_follows_state_ordering() {
        let ordering = StateOrdering::new(6, 6, 2, 3).unwrap();
        let model = ModalityModel::<f64>::high_res("hr", 2, 1e-10);
        let op = model.operator(&ordering, OutlierMask::full(36)).unwrap();
        let mut img = RasterImage::filled(6, 6, 2, 0.0, crate::raster::Day(0), "hr");
        for b in 0..2 {
            for r in 0..6 {
                for c in 0..6 {
                    img.set(b, r, c, (b * 100 + r * 6 + c) as f64);
                }
            }
        }
        let state = ordering.vectorize(&img).unwrap();
        assert_eq!(op.apply(&state).unwrap(), op.stack_measurement(&img).unwrap());
    }
}
