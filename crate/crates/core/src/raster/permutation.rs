use crate::error::{FusionError, Result};

/// Reorders a band-major stacked measurement (all pixels of band 1, then band
/// 2, ...) into pixel-major order, so the bands of each low-resolution pixel
/// become contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementPermutation {
    n_pixels: usize,
    n_bands: usize,
    /// `source[i]` is the band-major index feeding pixel-major position `i`.
    source: Vec<usize>,
}

impl MeasurementPermutation {
    pub fn new(n_pixels: usize, n_bands: usize) -> Result<Self> {
        if n_pixels == 0 || n_bands == 0 {
            return Err(FusionError::Invalid("measurement permutation needs positive counts".into()));
        }
        let source = (0..n_pixels * n_bands)
            .map(|i| {
                let (pixel, band) = (i / n_bands, i % n_bands);
                band * n_pixels + pixel
            })
            .collect();
        Ok(MeasurementPermutation { n_pixels, n_bands, source })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    /// Index map: position `i` of the permuted vector takes input `source()[i]`.
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn apply<T: Copy>(&self, band_major: &[T]) -> Result<Vec<T>> {
        if band_major.len() != self.len() {
            return Err(FusionError::Dimension { what: "measurement length vs permutation", a: band_major.len(), b: self.len() });
        }
        Ok(self.source.iter().map(|&s| band_major[s]).collect())
    }

    pub fn apply_inverse<T: Copy + Default>(&self, pixel_major: &[T]) -> Result<Vec<T>> {
        if pixel_major.len() != self.len() {
            return Err(FusionError::Dimension { what: "measurement length vs permutation", a: pixel_major.len(), b: self.len() });
        }
        let mut out = vec![T::default(); self.len()];
        for (i, &s) in self.source.iter().enumerate() {
            out[s] = pixel_major[i];
        }
        Ok(out)
    }
}
