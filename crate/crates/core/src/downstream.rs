//! Evaluation and water mapping: spectral angle, two-cluster K-means,
//! nearest-centroid water maps, misclassification and water fraction.

use std::cmp::Ordering;

use crate::error::{FusionError, Result};
use crate::raster::{Day, RasterImage};
use crate::scalar::Scalar;

pub const LAND: u8 = 1;
pub const WATER: u8 = 0;

/// Mean spectral angle, in degrees, over pixels with nonzero norm in both images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamResult {
    /// `None` when every pixel was excluded.
    pub mean_deg: Option<f64>,
    pub counted: usize,
    pub excluded: usize,
}

pub fn sam<T: Scalar>(reference: &RasterImage<T>, estimate: &RasterImage<T>) -> Result<SamResult> {
    if !reference.same_shape(estimate) {
        return Err(FusionError::Shape("SAM needs images of identical shape".into()));
    }
    let (mut sum, mut counted, mut excluded) = (0.0f64, 0usize, 0usize);
    for p in 0..reference.n_pixels() {
        let (r, e) = (reference.pixel(p), estimate.pixel(p));
        let norm = |v: &[T]| v.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
        let (rn, en) = (norm(&r), norm(&e));
        if rn == 0.0 || en == 0.0 {
            excluded += 1;
            continue;
        }
        // 2·atan2(|u - v|, |u + v|) for unit vectors u, v: accurate near 0 and 180 degrees
        let (mut diff, mut plus) = (0.0f64, 0.0f64);
        for (a, b) in r.iter().zip(&e) {
            let (u, v) = (a.as_f64() / rn, b.as_f64() / en);
            diff += (u - v).powi(2);
            plus += (u + v).powi(2);
        }
        sum += 2.0 * diff.sqrt().atan2(plus.sqrt());
        counted += 1;
    }
    let mean_deg = (counted > 0).then(|| (sum / counted as f64).to_degrees());
    Ok(SamResult { mean_deg, counted, excluded })
}

fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn lexical<T: Scalar>(nir: usize) -> impl Fn(&Vec<T>, &Vec<T>) -> Ordering {
    move |a, b| {
        let key = |v: &Vec<T>| std::iter::once(v[nir]).chain(v.iter().copied()).map(|x| x.as_f64()).collect::<Vec<_>>();
        key(a).iter().zip(key(b).iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    }
}

/// Two-cluster Lloyd iteration, deterministically seeded with the pixels at
/// the 10th and 90th percentile of the NIR band. Runs until assignments stop
/// changing or 100 iterations. The result does not depend on input order.
pub fn kmeans2<T: Scalar>(pixels: &[Vec<T>], nir_band: usize) -> Result<[Vec<T>; 2]> {
    const MAX_ITER: usize = 100;
    let Some(first) = pixels.first() else {
        return Err(FusionError::Invalid("k-means needs pixels".into()));
    };
    let dim = first.len();
    if nir_band >= dim || pixels.iter().any(|p| p.len() != dim) {
        return Err(FusionError::Invalid("k-means pixels must share a dimension containing the NIR band".into()));
    }
    let mut sorted = pixels.to_vec();
    sorted.sort_by(lexical(nir_band));
    let n = sorted.len();
    let pick = |q: f64| ((n - 1) as f64 * q).round() as usize;
    let low = sorted[pick(0.1)].clone();
    let mut high = sorted[pick(0.9)].clone();
    if high == low {
        // percentile seeds collide; take the farthest pixel instead
        let far = sorted
            .iter()
            .max_by(|a, b| dist2(a, &low).as_f64().total_cmp(&dist2(b, &low).as_f64()).then(Ordering::Greater))
            .unwrap();
        if *far == low {
            return Err(FusionError::Invalid("k-means needs at least two distinct pixels".into()));
        }
        high = far.clone();
    }

    let mut centroids = [low, high];
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(&sorted) {
            let c = usize::from(dist2(p, &centroids[1]) < dist2(p, &centroids[0]));
            changed |= *a != c;
            *a = c;
        }
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<T>> = sorted.iter().zip(&assignment).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let count = T::from_usize_lossy(members.len());
            *centroid = (0..dim).map(|d| members.iter().fold(T::zero(), |acc, p| acc + p[d]) / count).collect();
        }
    }
    Ok(centroids)
}

/// Binary map, [`LAND`] or [`WATER`] per high-resolution pixel (raster order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaterMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
    pub date: Day,
}

impl WaterMap {
    pub fn to_raster<T: Scalar>(&self) -> RasterImage<T> {
        let values = self.labels.iter().map(|&l| T::from_usize_lossy(l as usize)).collect();
        RasterImage::new(self.height, self.width, 1, values, self.date, "watermap").expect("consistent shape")
    }

    pub fn from_raster<T: Scalar>(image: &RasterImage<T>) -> Result<Self> {
        if image.bands() != 1 {
            return Err(FusionError::Shape("water map raster must be single-band".into()));
        }
        let labels = image.values().iter().map(|v| if *v > T::lit(0.5) { LAND } else { WATER }).collect();
        Ok(WaterMap { height: image.height(), width: image.width(), labels, date: image.date })
    }

    pub fn water_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == WATER).count() as f64 / self.labels.len() as f64
    }
}

/// Labels each pixel by its nearest centroid. The centroid with the smaller
/// NIR value is water; equidistant pixels are land.
pub fn classify_water<T: Scalar>(image: &RasterImage<T>, centroids: &[Vec<T>; 2], nir_band: usize) -> Result<WaterMap> {
    if centroids.iter().any(|c| c.len() != image.bands()) || nir_band >= image.bands() {
        return Err(FusionError::Dimension { what: "centroid dimension vs image bands", a: centroids[0].len(), b: image.bands() });
    }
    let (water, land) = if centroids[0][nir_band] <= centroids[1][nir_band] {
        (&centroids[0], &centroids[1])
    } else {
        (&centroids[1], &centroids[0])
    };
    let labels = (0..image.n_pixels())
        .map(|p| {
            let px = image.pixel(p);
            if dist2(&px, water) < dist2(&px, land) { WATER } else { LAND }
        })
        .collect();
    Ok(WaterMap { height: image.height(), width: image.width(), labels, date: image.date })
}

/// Percentage of pixels whose labels differ.
pub fn misclassification(map: &WaterMap, truth: &WaterMap) -> Result<f64> {
    if map.height != truth.height || map.width != truth.width {
        return Err(FusionError::Shape("water maps differ in shape".into()));
    }
    let differing = map.labels.iter().zip(&truth.labels).filter(|(a, b)| a != b).count();
    Ok(100.0 * differing as f64 / map.labels.len() as f64)
}

pub fn water_fraction_series(maps: &[WaterMap]) -> Result<Vec<(Day, f64)>> {
    if maps.is_empty() {
        return Err(FusionError::Invalid("water fraction series needs at least one map".into()));
    }
    Ok(maps.iter().map(|m| (m.date, m.water_fraction())).collect())
}

/// Every pixel of an image as a band vector.
pub fn image_pixels<T: Scalar>(image: &RasterImage<T>) -> Vec<Vec<T>> {
    (0..image.n_pixels()).map(|p| image.pixel(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn image(h: usize, w: usize, bands: usize, values: Vec<f64>) -> RasterImage<f64> {
        RasterImage::new(h, w, bands, values, Day(0), "x").unwrap()
    }

    #[test]
    fn sam_of_identical_images_is_zero() {
        let a = image(2, 2, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let r = sam(&a, &a).unwrap();
        assert!(r.mean_deg.unwrap().abs() < 1e-6);
        assert_eq!(r.counted, 4);
    }

    #[test]
    fn sam_of_orthogonal_pixels_is_ninety_degrees() {
        let a = image(1, 3, 2, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let b = image(1, 3, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!((sam(&a, &b).unwrap().mean_deg.unwrap() - 90.0).abs() < 1e-12);
    }

    #[test]
    fn sam_matches_per_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = image(3, 3, 3, (0..27).map(|_| rng.random()).collect());
        let b = image(3, 3, 3, (0..27).map(|_| rng.random()).collect());
        let mut total = 0.0;
        for p in 0..9 {
            let x: Vec<f64> = (0..3).map(|k| a.values()[k * 9 + p]).collect();
            let y: Vec<f64> = (0..3).map(|k| b.values()[k * 9 + p]).collect();
            let dot: f64 = x.iter().zip(&y).map(|(u, v)| u * v).sum();
            let nx: f64 = x.iter().map(|u| u * u).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|u| u * u).sum::<f64>().sqrt();
            total += (dot / (nx * ny)).acos();
        }
        let oracle = (total / 9.0).to_degrees();
        assert!((sam(&a, &b).unwrap().mean_deg.unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn sam_is_scale_invariant_and_excludes_zero_pixels() {
        let a = image(1, 2, 2, vec![0.3, 0.0, 0.4, 0.0]);
        let b = image(1, 2, 2, vec![0.6, 0.5, 0.8, 0.5]);
        let r = sam(&a, &b).unwrap();
        assert!(r.mean_deg.unwrap().abs() < 1e-6);
        assert_eq!((r.counted, r.excluded), (1, 1));
        let zero = image(1, 2, 2, vec![0.0; 4]);
        assert_eq!(sam(&a, &zero).unwrap().mean_deg, None);
        assert!(sam(&a, &image(2, 1, 2, vec![0.0; 4])).is_err());
    }

    #[test]
    fn kmeans_recovers_cloud_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut pts = Vec::new();
        let (m0, m1): ([f64; 2], [f64; 2]) = ([0.05, 0.02], [0.12, 0.35]);
        let mut sums = [[0.0f64; 2]; 2];
        for i in 0..400 {
            let m = if i % 2 == 0 { m0 } else { m1 };
            let p = vec![m[0] + noise.sample(&mut rng), m[1] + noise.sample(&mut rng)];
            for d in 0..2 {
                sums[i % 2][d] += p[d];
            }
            pts.push(p);
        }
        let c = kmeans2(&pts, 1).unwrap();
        // the generating clouds are separated by ~30 sigma, so Lloyd converges to their sample means
        for (k, centroid) in c.iter().enumerate() {
            for d in 0..2 {
                assert!((centroid[d] - sums[k][d] / 200.0).abs() < 1e-6);
            }
        }
        for d in 0..2 {
            assert!((c[0][d] - m0[d]).abs() < 5e-3 && (c[1][d] - m1[d]).abs() < 5e-3);
        }
    }

    #[test]
    fn kmeans_on_two_points_and_permutation() {
        let mut pts = vec![vec![0.1f64, 0.0]; 5];
        pts.extend(vec![vec![0.2, 0.4]; 3]);
        let c = kmeans2(&pts, 1).unwrap();
        let expected: [[f64; 2]; 2] = [[0.1, 0.0], [0.2, 0.4]];
        for k in 0..2 {
            assert!(c[k].iter().zip(expected[k]).all(|(a, b)| (a - b).abs() < 1e-15));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        let (a, b) = (kmeans2(&pts, 1).unwrap(), kmeans2(&shuffled, 1).unwrap());
        assert!(a == b || (a[0] == b[1] && a[1] == b[0]));
    }

    #[test]
    fn kmeans_rejects_identical_pixels() {
        assert!(kmeans2(&vec![vec![0.3, 0.3]; 10], 1).is_err());
        assert!(kmeans2::<f64>(&[], 1).is_err());
    }

    #[test]
    fn classification_and_ties() {
        let water = vec![0.05, 0.02];
        let land = vec![0.1, 0.3];
        // pixels: water centroid, land centroid, exact midpoint
        let img = image(1, 3, 2, vec![0.05, 0.1, 0.075, 0.02, 0.3, 0.16]);
        for cents in [[water.clone(), land.clone()], [land.clone(), water.clone()]] {
            let map = classify_water(&img, &cents, 1).unwrap();
            assert_eq!(map.labels, vec![WATER, LAND, LAND]);
        }
        assert!(classify_water(&img, &[vec![0.1], vec![0.2]], 0).is_err());
    }

    #[test]
    fn misclassification_counts() {
        let m = |labels: Vec<u8>| WaterMap { height: 9, width: 9, labels, date: Day(0) };
        let a = m(vec![0; 81]);
        assert_eq!(misclassification(&a, &a).unwrap(), 0.0);
        assert_eq!(misclassification(&a, &m(vec![1; 81])).unwrap(), 100.0);
        let mut one = vec![0; 81];
        one[40] = 1;
        let oracle = 100.0 * 1.0 / 81.0;
        assert!((misclassification(&a, &m(one.clone())).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 1.2346).abs() < 1e-4);
        assert_eq!(misclassification(&m(one.clone()), &a).unwrap(), misclassification(&a, &m(one)).unwrap());
    }

    #[test]
    fn water_fractions() {
        let m = |labels: Vec<u8>| WaterMap { height: 2, width: 2, labels, date: Day(3) };
        let s = water_fraction_series(&[m(vec![0; 4]), m(vec![1; 4]), m(vec![0, 1, 1, 0])]).unwrap();
        assert_eq!(s.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1.0, 0.0, 0.5]);
        assert!(water_fraction_series(&[]).is_err());
    }
}
