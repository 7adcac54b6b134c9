//! Process-noise calibration from an archive of past high-resolution images.
//!
//! The archive entry most similar (cosine similarity) to the latest observed
//! high-resolution image anchors a window of `n + 1` consecutive entries. The
//! per-entry sample variance over that window, normalized by the window's
//! span in days, gives a daily change rate; it is floored at `ε²` and scaled
//! by the gap to the next estimate.

use crate::error::{FusionError, Result};
use crate::raster::Day;
use crate::scalar::Scalar;

/// Dated archive of vectorized high-resolution images, in state ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalDataset<T> {
    entries: Vec<(Day, Vec<T>)>,
}

impl<T: Scalar> HistoricalDataset<T> {
    pub fn new(mut entries: Vec<(Day, Vec<T>)>) -> Result<Self> {
        entries.sort_by_key(|(d, _)| *d);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(FusionError::Data("historical dataset has duplicate dates".into()));
        }
        if let Some((_, first)) = entries.first() {
            let len = first.len();
            if let Some((d, v)) = entries.iter().find(|(_, v)| v.len() != len) {
                return Err(FusionError::Shape(format!("historical image {d} has {} entries, expected {len}", v.len())));
            }
        }
        Ok(HistoricalDataset { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Day, Vec<T>)] {
        &self.entries
    }

    pub fn date(&self, index: usize) -> Day {
        self.entries[index].0
    }

    /// Largest value over every archived image.
    pub fn max_value(&self) -> Option<T> {
        self.entries.iter().flat_map(|(_, v)| v.iter().copied()).reduce(|a, b| a.max(b))
    }
}

/// Diagonal process noise for one prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessNoise<T> {
    pub diag: Vec<T>,
    pub epsilon2: T,
    pub delta_days: T,
    pub matched_index: usize,
    pub window_span_days: i64,
}

/// Per-entry daily change rate `max(var / span, ε²)`, independent of the step length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeRate<T> {
    pub rate: Vec<T>,
    pub epsilon2: T,
    pub matched_index: usize,
    pub window_span_days: i64,
}

impl<T: Scalar> ChangeRate<T> {
    /// Scales the daily rate by the gap (in days) to the next estimate.
    pub fn scaled(&self, delta_days: T) -> ProcessNoise<T> {
        ProcessNoise {
            diag: self.rate.iter().map(|&r| r * delta_days).collect(),
            epsilon2: self.epsilon2,
            delta_days,
            matched_index: self.matched_index,
            window_span_days: self.window_span_days,
        }
    }
}

fn cosine<T: Scalar>(a: &[T], b: &[T], a_norm: T) -> T {
    let dot = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let b_norm = b.iter().fold(T::zero(), |acc, &y| acc + y * y).sqrt();
    if b_norm == T::zero() {
        return -T::one() - T::one();
    }
    dot / (a_norm * b_norm)
}

/// Index of the archive entry most similar to `reference`, restricted to
/// indices whose `n`-step window stays inside the archive. Ties go to the
/// earliest index.
pub fn find_most_similar<T: Scalar>(reference: &[T], dataset: &HistoricalDataset<T>, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(FusionError::Invalid("window length n must be at least 1".into()));
    }
    if dataset.len() < n + 1 {
        return Err(FusionError::Data(format!("historical dataset has {} entries, needs at least {}", dataset.len(), n + 1)));
    }
    let len = dataset.entries[0].1.len();
    if reference.len() != len {
        return Err(FusionError::Dimension { what: "reference length vs historical images", a: reference.len(), b: len });
    }
    let norm = reference.iter().fold(T::zero(), |acc, &y| acc + y * y).sqrt();
    if norm == T::zero() {
        return Err(FusionError::Invalid("reference image has zero norm".into()));
    }
    let mut best = 0;
    let mut best_sim = T::min_value().unwrap();
    for (idx, (_, entry)) in dataset.entries[..dataset.len() - n].iter().enumerate() {
        let sim = cosine(reference, entry, norm);
        if sim > best_sim {
            best_sim = sim;
            best = idx;
        }
    }
    Ok(best)
}

/// Unbiased sample variance (divisor `n`) across the `n + 1` window images,
/// per state entry.
pub fn window_variance<T: Scalar>(dataset: &HistoricalDataset<T>, start: usize, n: usize) -> Vec<T> {
    let window = &dataset.entries[start..=start + n];
    let count = T::from_usize_lossy(n + 1);
    let divisor = T::from_usize_lossy(n);
    (0..window[0].1.len())
        .map(|j| {
            let mean = window.iter().fold(T::zero(), |a, (_, v)| a + v[j]) / count;
            window.iter().fold(T::zero(), |a, (_, v)| {
                let dev = v[j] - mean;
                a + dev * dev
            }) / divisor
        })
        .collect()
}

/// Matches the reference and computes the floored daily change rate.
pub fn change_rate<T: Scalar>(reference: &[T], dataset: &HistoricalDataset<T>, n: usize, epsilon2: T) -> Result<ChangeRate<T>> {
    if !(epsilon2 > T::zero()) {
        return Err(FusionError::Invalid("epsilon² must be positive".into()));
    }
    let matched = find_most_similar(reference, dataset, n)?;
    let span = dataset.date(matched).days_until(dataset.date(matched + n));
    if span <= 0 {
        return Err(FusionError::Data(format!("historical window starting at {} spans {span} days", dataset.date(matched))));
    }
    let span_t = T::lit(span as f64);
    let rate = window_variance(dataset, matched, n).into_iter().map(|v| (v / span_t).max(epsilon2)).collect();
    Ok(ChangeRate { rate, epsilon2, matched_index: matched, window_span_days: span })
}

/// `q²_j = max(var_j / span, ε²) · Δ` for every state entry.
pub fn compute_q<T: Scalar>(reference: &[T], dataset: &HistoricalDataset<T>, n: usize, epsilon2: T, delta_days: T) -> Result<ProcessNoise<T>> {
    if !(delta_days >= T::zero()) {
        return Err(FusionError::Invalid("time step must be nonnegative".into()));
    }
    Ok(change_rate(reference, dataset, n, epsilon2)?.scaled(delta_days))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(vectors: Vec<Vec<f64>>) -> HistoricalDataset<f64> {
        HistoricalDataset::new(vectors.into_iter().enumerate().map(|(i, v)| (Day(10 * i as i64), v)).collect()).unwrap()
    }

    #[test]
    fn exact_copy_wins() {
        let r = vec![0.1, 0.5, 0.2];
        let ds = dataset(vec![vec![0.5, 0.1, 0.1], r.clone(), vec![0.3, 0.3, 0.3]]);
        assert_eq!(find_most_similar(&r, &ds, 1).unwrap(), 1);
    }

    #[test]
    fn parallel_vector_beats_orthogonal_ones() {
        let r = vec![1.0, 0.0, 0.0, 0.0];
        let ds = dataset(vec![vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0], vec![3.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]);
        assert_eq!(find_most_similar(&r, &ds, 1).unwrap(), 2);
    }

    #[test]
    fn argmax_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let vs: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
            let r: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let mut oracle = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, v) in vs.iter().enumerate().take(4) {
                let dot: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
                let c = dot / (r.iter().map(|a| a * a).sum::<f64>().sqrt() * v.iter().map(|a| a * a).sum::<f64>().sqrt());
                if c > best {
                    best = c;
                    oracle = i;
                }
            }
            assert_eq!(find_most_similar(&r, &dataset(vs), 1).unwrap(), oracle);
        }
    }

    #[test]
    fn last_entry_cannot_anchor_a_window() {
        let r = vec![1.0, 0.0];
        let ds = dataset(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(find_most_similar(&r, &ds, 1).unwrap(), 1);
    }

    #[test]
    fn error_paths() {
        let ds = dataset(vec![vec![1.0, 0.0]]);
        assert!(find_most_similar(&[1.0, 0.0], &ds, 1).is_err());
        let ds = dataset(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert!(find_most_similar(&[0.0, 0.0], &ds, 1).is_err());
        assert!(HistoricalDataset::new(vec![(Day(1), vec![1.0]), (Day(1), vec![2.0])]).is_err());
    }

    #[test]
    fn identical_window_floors_everywhere() {
        let v = vec![0.2, 0.4, 0.1];
        let ds = dataset(vec![v.clone(), v.clone(), v.clone()]);
        let q = compute_q(&v, &ds, 1, 1e-5, 8.0).unwrap();
        assert!(q.diag.iter().all(|&x| x == 1e-5 * 8.0));
    }

    #[test]
    fn two_image_window_matches_hand_formula() {
        let delta = 0.3f64;
        let a = vec![0.2, 0.4, 0.1];
        let mut b = a.clone();
        b[1] += delta;
        let ds = HistoricalDataset::new(vec![(Day(0), a.clone()), (Day(1), b)]).unwrap();
        let q = compute_q(&a, &ds, 1, 1e-5, 1.0).unwrap();
        assert_eq!(q.matched_index, 0);
        assert_eq!(q.window_span_days, 1);
        assert!((q.diag[1] - delta * delta / 2.0).abs() < 1e-14);
        assert_eq!(q.diag[0], 1e-5);
        assert_eq!(q.diag[2], 1e-5);
    }

    #[test]
    fn doubling_gap_doubles_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vs: Vec<Vec<f64>> = (0..4).map(|_| (0..10).map(|_| rng.random::<f64>()).collect()).collect();
        let ds = dataset(vs.clone());
        let q1 = compute_q(&vs[0], &ds, 2, 1e-5, 3.0).unwrap();
        let q2 = compute_q(&vs[0], &ds, 2, 1e-5, 6.0).unwrap();
        for (a, b) in q1.diag.iter().zip(&q2.diag) {
            assert_eq!(2.0 * a, *b);
            assert!(*a >= 1e-5 * 3.0);
        }
    }
}
