//! Dense reference Kalman filter and RTS smoother, plus random instance
//! builders, used to check the distributed implementation.
#![allow(dead_code)]

use fusion_core::fusion::{BlockCovariance, CovarianceStructure, StateBelief, StructureKind};
use fusion_core::observation::{ModalityModel, ModalityRole, ObservationOperator, OutlierMask, SpatialDegradation, SpectralResponse};
use fusion_core::raster::{Day, RasterImage, StateOrdering};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Dense {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Dense {
    pub fn of(belief: &StateBelief<f64>) -> Self {
        Dense { mean: DVector::from_column_slice(&belief.mean), cov: belief.cov.to_dense() }
    }

    pub fn predict(&self, q: &[f64]) -> Self {
        let mut cov = self.cov.clone();
        for (i, v) in q.iter().enumerate() {
            cov[(i, i)] += v;
        }
        Dense { mean: self.mean.clone(), cov }
    }

    /// Textbook update with the full stacked operator.
    pub fn update(&self, h: &DMatrix<f64>, r: &DMatrix<f64>, y: &[f64]) -> Self {
        let s = h * &self.cov * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance invertible");
        let k = &self.cov * h.transpose() * s_inv;
        let v = DVector::from_column_slice(y) - h * &self.mean;
        let mean = &self.mean + &k * v;
        let n = self.cov.nrows();
        let cov = (DMatrix::identity(n, n) - &k * h) * &self.cov;
        Dense { mean, cov: (&cov + cov.transpose()) * 0.5 }
    }

    pub fn update_with(&self, op: &ObservationOperator<f64>, y: &[f64]) -> Self {
        self.update(&op.materialize_dense(), &op.materialize_noise_dense(), y)
    }
}

/// Dense RTS with identity transitions; `q[k]` carries instant `k` to `k + 1`.
pub fn dense_rts(filtered: &[Dense], q: &[Vec<f64>]) -> Vec<Dense> {
    let mut out = vec![filtered.last().unwrap().clone()];
    for k in (0..filtered.len() - 1).rev() {
        let f = &filtered[k];
        let pred = f.predict(&q[k]);
        let g = &f.cov * pred.cov.clone().try_inverse().expect("predicted covariance invertible");
        let next = out.last().unwrap();
        let mean = &f.mean + &g * (&next.mean - &pred.mean);
        let cov = &f.cov + &g * (&next.cov - &pred.cov) * g.transpose();
        out.push(Dense { mean, cov });
    }
    out.reverse();
    out
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs_diff_vec(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random grid for a coarse factor: whole coarse pixels, at most 81 HR pixels.
pub fn random_ordering(rng: &mut ChaCha8Rng, d: usize, bands: usize) -> StateOrdering {
    let max = 9 / d;
    let (h, w) = (rng.random_range(1..=max) * d, rng.random_range(1..=max) * d);
    StateOrdering::new(h, w, bands, d).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    (&a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.05) * scale
}

pub fn random_belief(rng: &mut ChaCha8Rng, ordering: &StateOrdering, kind: StructureKind) -> StateBelief<f64> {
    let structure = CovarianceStructure::new(kind, ordering).unwrap();
    let blocks = (0..structure.n_groups()).map(|_| random_spd(rng, structure.group_size(), 0.02)).collect();
    let mean = (0..ordering.state_len()).map(|_| rng.random::<f64>()).collect();
    StateBelief::new(mean, BlockCovariance::from_blocks(structure, blocks).unwrap(), 0, Day(0)).unwrap()
}

pub fn random_modality(rng: &mut ChaCha8Rng, name: &str, factor: usize, state_bands: usize, measured: usize) -> ModalityModel<f64> {
    let mut kernel: Vec<f64> = (0..factor * factor).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let spectral = DMatrix::from_fn(measured, state_bands, |_, _| 0.2 + rng.random::<f64>());
    let variances = (0..measured).map(|_| 1e-4 + 1e-2 * rng.random::<f64>()).collect();
    let role = if factor == 1 { ModalityRole::HighRes } else { ModalityRole::LowRes };
    ModalityModel::new(name, role, SpectralResponse::new(spectral).unwrap(), SpatialDegradation::new(kernel, factor).unwrap(), variances).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize, keep: f64) -> OutlierMask {
    OutlierMask::new((0..n).filter(|_| rng.random::<f64>() < keep).collect(), n).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, bands: usize, name: &str) -> RasterImage<f64> {
    RasterImage::new(h, w, bands, (0..h * w * bands).map(|_| rng.random::<f64>()).collect(), Day(0), name).unwrap()
}

/// A measurement for `model` with a random mask, as an operator plus stacked vector.
pub fn random_measurement(rng: &mut ChaCha8Rng, ordering: &StateOrdering, model: &ModalityModel<f64>) -> (ObservationOperator<f64>, Vec<f64>) {
    let (h, w) = model.grid(ordering);
    let op = model.operator(ordering, random_mask(rng, h * w, 0.8)).unwrap();
    let y = op.stack_measurement(&random_image(rng, h, w, model.measured_bands(), &model.name)).unwrap();
    (op, y)
}
