use crate::error::{FusionError, Result};
use crate::raster::{Day, RasterImage};
use crate::scalar::Scalar;

/// Layout of the latent high-resolution image as a flat state vector.
///
/// Nesting, outermost first: coarse pixel (row-major over the coarse grid),
/// high-resolution pixel inside that coarse pixel (row-major), band. Every
/// coarse pixel therefore owns one contiguous run of `d² · L` state entries and
/// every high-resolution pixel a contiguous run of `L` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateOrdering {
    hr_height: usize,
    hr_width: usize,
    n_bands: usize,
    coarse_factor: usize,
    /// raster flat index (band, row, col) -> state index
    forward: Vec<usize>,
    /// state index -> raster flat index
    inverse: Vec<usize>,
}

impl StateOrdering {
    pub fn new(hr_height: usize, hr_width: usize, n_bands: usize, coarse_factor: usize) -> Result<Self> {
        if coarse_factor == 0 || n_bands == 0 || hr_height == 0 || hr_width == 0 {
            return Err(FusionError::Invalid("state ordering needs positive sizes".into()));
        }
        if !hr_height.is_multiple_of(coarse_factor) {
            return Err(FusionError::Dimension { what: "hr_height not divisible by coarse_factor", a: hr_height, b: coarse_factor });
        }
        if !hr_width.is_multiple_of(coarse_factor) {
            return Err(FusionError::Dimension { what: "hr_width not divisible by coarse_factor", a: hr_width, b: coarse_factor });
        }
        let n = hr_height * hr_width * n_bands;
        let mut forward = vec![0; n];
        let mut inverse = vec![0; n];
        for band in 0..n_bands {
            for row in 0..hr_height {
                for col in 0..hr_width {
                    let raster = (band * hr_height + row) * hr_width + col;
                    let state = state_index(hr_width, n_bands, coarse_factor, band, row, col);
                    forward[raster] = state;
                    inverse[state] = raster;
                }
            }
        }
        Ok(StateOrdering { hr_height, hr_width, n_bands, coarse_factor, forward, inverse })
    }

    pub fn hr_height(&self) -> usize {
        self.hr_height
    }

    pub fn hr_width(&self) -> usize {
        self.hr_width
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn coarse_factor(&self) -> usize {
        self.coarse_factor
    }

    pub fn n_hr_pixels(&self) -> usize {
        self.hr_height * self.hr_width
    }

    /// Length of the state vector, `L_H · N_H`.
    pub fn state_len(&self) -> usize {
        self.forward.len()
    }

    pub fn n_coarse_pixels(&self) -> usize {
        self.n_hr_pixels() / (self.coarse_factor * self.coarse_factor)
    }

    /// State entries per coarse pixel, `d² · L_H`.
    pub fn coarse_run_len(&self) -> usize {
        self.coarse_factor * self.coarse_factor * self.n_bands
    }

    #[inline]
    pub fn forward_index(&self, band: usize, row: usize, col: usize) -> usize {
        self.forward[(band * self.hr_height + row) * self.hr_width + col]
    }

    /// Returns `(band, row, col)` for a state index.
    pub fn inverse_index(&self, state: usize) -> (usize, usize, usize) {
        let raster = self.inverse[state];
        let plane = self.hr_height * self.hr_width;
        (raster / plane, (raster % plane) / self.hr_width, raster % self.hr_width)
    }

    fn check_image<T: Scalar>(&self, image: &RasterImage<T>) -> Result<()> {
        if image.height() != self.hr_height || image.width() != self.hr_width || image.bands() != self.n_bands {
            return Err(FusionError::Shape(format!(
                "image {}x{}x{} does not match state ordering {}x{}x{}",
                image.height(),
                image.width(),
                image.bands(),
                self.hr_height,
                self.hr_width,
                self.n_bands
            )));
        }
        Ok(())
    }

    pub fn vectorize<T: Scalar>(&self, image: &RasterImage<T>) -> Result<Vec<T>> {
        self.check_image(image)?;
        let mut state = vec![T::zero(); self.state_len()];
        for (raster, &value) in image.values().iter().enumerate() {
            state[self.forward[raster]] = value;
        }
        Ok(state)
    }

    pub fn devectorize<T: Scalar>(&self, state: &[T], date: Day, modality: &str) -> Result<RasterImage<T>> {
        if state.len() != self.state_len() {
            return Err(FusionError::Dimension { what: "state length vs ordering", a: state.len(), b: self.state_len() });
        }
        let values = self.inverse.iter().enumerate().fold(vec![T::zero(); state.len()], |mut acc, (s, &r)| {
            acc[r] = state[s];
            acc
        });
        RasterImage::new(self.hr_height, self.hr_width, self.n_bands, values, date, modality)
    }
}

#[inline]
fn state_index(width: usize, bands: usize, d: usize, band: usize, row: usize, col: usize) -> usize {
    let coarse = (row / d) * (width / d) + col / d;
    let inner = (row % d) * d + col % d;
    (coarse * d * d + inner) * bands + band
}
