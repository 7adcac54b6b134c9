use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{FusionError, Result};
use crate::scalar::Scalar;

/// Calendar day stored as days since 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i64);

impl Day {
    fn epoch() -> NaiveDate {
        NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(|d| Day((d - Self::epoch()).num_days()))
    }

    /// Signed number of days from `self` to `later`.
    pub fn days_until(self, later: Day) -> i64 {
        later.0 - self.0
    }

    pub fn offset(self, days: i64) -> Day {
        Day(self.0 + days)
    }
}

impl FromStr for Day {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Day> {
        let date = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map_err(|e| FusionError::Data(format!("bad date {s:?}: {e}")))?;
        Ok(Day((date - Self::epoch()).num_days()))
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let date = Self::epoch() + chrono::Duration::days(self.0);
        write!(f, "{}", date.format("%Y-%m-%d"))
    }
}

/// One dated multiband image of one modality.
///
/// Values are band-sequential, row-major: entry `(b, i, j)` lives at
/// `b * height * width + i * width + j`. Entries flagged invalid by the mask
/// are stored as zero so numeric code never sees a non-finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage<T> {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<T>,
    pub date: Day,
    pub modality: String,
    valid_mask: Option<Vec<bool>>,
}

impl<T: Scalar> RasterImage<T> {
    pub fn new(
        height: usize,
        width: usize,
        bands: usize,
        values: Vec<T>,
        date: Day,
        modality: impl Into<String>,
    ) -> Result<Self> {
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(FusionError::Dimension {
                what: "raster value count vs height*width*bands",
                a: values.len(),
                b: expected,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FusionError::Data(format!("non-finite raster value at flat index {pos}")));
        }
        Ok(RasterImage { height, width, bands, values, date, modality: modality.into(), valid_mask: None })
    }

    pub fn filled(height: usize, width: usize, bands: usize, value: T, date: Day, modality: &str) -> Self {
        Self::new(height, width, bands, vec![value; height * width * bands], date, modality)
            .expect("consistent shape")
    }

    /// Attaches a validity mask; invalid entries are zeroed.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(FusionError::Dimension { what: "mask length vs value count", a: mask.len(), b: self.values.len() });
        }
        for (v, ok) in self.values.iter_mut().zip(&mask) {
            if !ok {
                *v = T::zero();
            }
        }
        self.valid_mask = Some(mask);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid_mask.as_deref()
    }

    #[inline]
    pub fn flat_index(&self, band: usize, row: usize, col: usize) -> usize {
        (band * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> T {
        self.values[self.flat_index(band, row, col)]
    }

    pub fn set(&mut self, band: usize, row: usize, col: usize, value: T) {
        let idx = self.flat_index(band, row, col);
        self.values[idx] = value;
    }

    /// Band vector of the pixel with raster-order index `pixel`.
    pub fn pixel(&self, pixel: usize) -> Vec<T> {
        let np = self.n_pixels();
        (0..self.bands).map(|b| self.values[b * np + pixel]).collect()
    }

    /// True when every band of the pixel is valid.
    pub fn pixel_valid(&self, pixel: usize) -> bool {
        match &self.valid_mask {
            None => true,
            Some(mask) => {
                let np = self.n_pixels();
                (0..self.bands).all(|b| mask[b * np + pixel])
            }
        }
    }

    pub fn same_shape<U>(&self, other: &RasterImage<U>) -> bool {
        self.height == other.height && self.width == other.width && self.bands == other.bands
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), |a, b| a.max(b))
    }
}
