use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{FusionError, Result};
use crate::fusion::structure::{BeliefTag, StateBelief};
use crate::observation::ObservationOperator;
use crate::qcal::ProcessNoise;
use crate::scalar::Scalar;

/// State transition matrix. Only forms whose row slices stay inside a group
/// are supported, so per-group prediction needs no cross-group terms.
#[derive(Debug, Clone, PartialEq)]
pub enum Transition<T> {
    Identity,
    Diagonal(Vec<T>),
}

/// Random-walk dynamics `s_{k+1} = F s_k + q_k`, `q_k ~ N(0, diag(noise))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel<T> {
    pub transition: Transition<T>,
    pub noise: Vec<T>,
}

impl<T: Scalar> TransitionModel<T> {
    pub fn identity(noise: Vec<T>) -> Self {
        TransitionModel { transition: Transition::Identity, noise }
    }

    pub fn from_process_noise(q: &ProcessNoise<T>) -> Self {
        Self::identity(q.diag.clone())
    }

    /// Diagonal transition; its spectral norm `max |f_i|` must not exceed one.
    pub fn diagonal(factors: Vec<T>, noise: Vec<T>) -> Result<Self> {
        if factors.len() != noise.len() {
            return Err(FusionError::Dimension { what: "transition diagonal vs noise", a: factors.len(), b: noise.len() });
        }
        if factors.iter().any(|f| !(f.abs() <= T::one())) {
            return Err(FusionError::Invalid("transition spectral norm exceeds one".into()));
        }
        Ok(TransitionModel { transition: Transition::Diagonal(factors), noise })
    }

    pub(crate) fn factor(&self, i: usize) -> T {
        match &self.transition {
            Transition::Identity => T::one(),
            Transition::Diagonal(f) => f[i],
        }
    }

    pub(crate) fn check(&self, state_len: usize) -> Result<()> {
        if self.noise.len() != state_len {
            return Err(FusionError::Dimension { what: "process noise length vs state", a: self.noise.len(), b: state_len });
        }
        if let Transition::Diagonal(f) = &self.transition {
            if f.len() != state_len {
                return Err(FusionError::Dimension { what: "transition length vs state", a: f.len(), b: state_len });
            }
        }
        if self.noise.iter().any(|q| !(*q >= T::zero())) {
            return Err(FusionError::Invalid("process noise must be nonnegative".into()));
        }
        Ok(())
    }

    /// `F_g P_g F_gᵀ + Q_g` for the group starting at `offset`.
    pub(crate) fn propagate_block(&self, block: &DMatrix<T>, offset: usize) -> DMatrix<T> {
        let n = block.nrows();
        DMatrix::from_fn(n, n, |a, b| {
            let v = self.factor(offset + a) * block[(a, b)] * self.factor(offset + b);
            if a == b { v + self.noise[offset + a] } else { v }
        })
    }
}

/// Prediction step, group by group.
pub fn predict<T: Scalar>(belief: &StateBelief<T>, model: &TransitionModel<T>) -> Result<StateBelief<T>> {
    let structure = *belief.structure();
    model.check(structure.state_len())?;
    let mean = belief.mean.iter().enumerate().map(|(i, &m)| model.factor(i) * m).collect();
    let gs = structure.group_size();
    let blocks: Vec<DMatrix<T>> = belief
        .cov
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(g, block)| model.propagate_block(block, g * gs))
        .collect();
    let mut out = StateBelief::new(mean, crate::fusion::BlockCovariance::from_blocks(structure, blocks)?, belief.instant, belief.date)?;
    out.tag = BeliefTag::Predicted;
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub assimilated: usize,
    /// Raster indices of pixels whose innovation block stayed singular after jitter.
    pub skipped: Vec<usize>,
    pub innovation_norm_sum: f64,
}

impl UpdateStats {
    pub fn mean_innovation_norm(&self) -> f64 {
        if self.assimilated == 0 { 0.0 } else { self.innovation_norm_sum / self.assimilated as f64 }
    }

    pub fn merge(&mut self, other: UpdateStats) {
        self.assimilated += other.assimilated;
        self.skipped.extend(other.skipped);
        self.innovation_norm_sum += other.innovation_norm_sum;
    }
}

/// Measurement update with one modality; returns a new belief.
pub fn update<T: Scalar>(belief: &StateBelief<T>, op: &ObservationOperator<T>, measurement: &[T]) -> Result<StateBelief<T>> {
    let mut out = belief.clone();
    update_in_place(&mut out, op, measurement)?;
    Ok(out)
}

struct Cluster<T: Scalar> {
    first_group: usize,
    pixels: Vec<usize>,
    blocks: Vec<DMatrix<T>>,
    mean: Vec<T>,
    stats: UpdateStats,
}

/// Measurement update with one modality.
///
/// The innovation of each kept low-resolution pixel depends only on the state
/// entries of its footprint. Pixels whose footprints fall in the same
/// covariance group are assimilated one after another (equivalent to a joint
/// update because their noise is independent); pixels in different groups are
/// independent and run in parallel. When a footprint spans several groups
/// the update runs on their joint block and the cross-group terms are then
/// dropped to stay within the declared structure.
pub fn update_in_place<T: Scalar>(belief: &mut StateBelief<T>, op: &ObservationOperator<T>, measurement: &[T]) -> Result<UpdateStats> {
    let structure = *belief.structure();
    if op.state_len() != structure.state_len() {
        return Err(FusionError::Dimension { what: "operator state length vs belief", a: op.state_len(), b: structure.state_len() });
    }
    if measurement.len() != op.output_len() {
        return Err(FusionError::Dimension { what: "measurement length vs operator output", a: measurement.len(), b: op.output_len() });
    }
    belief.tag = BeliefTag::Updated;
    let Some(perm) = op.permutation() else {
        return Ok(UpdateStats::default());
    };
    let y = perm.apply(measurement)?;
    let gs = structure.group_size();
    let len = op.run_len();

    let mut spans: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, &start) in op.run_starts().iter().enumerate() {
        let (g0, g1) = (start / gs, (start + len - 1) / gs);
        let entry = spans.entry(g0).or_insert_with(|| (g1, Vec::new()));
        if entry.0 != g1 {
            return Err(FusionError::Shape("observation footprints straddle covariance groups".into()));
        }
        entry.1.push(i);
    }
    if spans.iter().zip(spans.iter().skip(1)).any(|((_, (g1, _)), (g0, _))| g1 >= g0) {
        return Err(FusionError::Shape("observation footprints straddle covariance groups".into()));
    }

    let mut clusters: Vec<Cluster<T>> = spans
        .into_iter()
        .map(|(g0, (g1, pixels))| Cluster {
            first_group: g0,
            pixels,
            blocks: belief.cov.take_blocks(g0..=g1),
            mean: belief.mean[g0 * gs..(g1 + 1) * gs].to_vec(),
            stats: UpdateStats::default(),
        })
        .collect();

    clusters.par_iter_mut().for_each(|c| assimilate_cluster(c, op, &y, gs));

    let mut stats = UpdateStats::default();
    for c in clusters {
        let start = c.first_group * gs;
        belief.mean[start..start + c.mean.len()].copy_from_slice(&c.mean);
        belief.cov.put_blocks(c.first_group, c.blocks);
        stats.merge(c.stats);
    }
    for &p in &stats.skipped {
        log::warn!("{}: singular innovation at pixel {p}, update skipped", op.modality);
    }
    Ok(stats)
}

fn assimilate_cluster<T: Scalar>(c: &mut Cluster<T>, op: &ObservationOperator<T>, y: &[T], gs: usize) {
    let m = c.blocks.len() * gs;
    let mut p = if c.blocks.len() == 1 {
        std::mem::replace(&mut c.blocks[0], DMatrix::zeros(0, 0))
    } else {
        let mut joint = DMatrix::zeros(m, m);
        for (k, b) in c.blocks.iter().enumerate() {
            joint.view_mut((k * gs, k * gs), (gs, gs)).copy_from(b);
        }
        joint
    };
    let h = op.pixel_block();
    let ht = h.transpose();
    let lm = h.nrows();
    let len = op.run_len();
    let union_start = c.first_group * gs;

    for &i in &c.pixels {
        let o = op.run_starts()[i] - union_start;
        // Σ = P[:, run] Hᵀ, and T = H P[run, run] Hᵀ + R = H Σ[run, :] + R
        let sigma = p.columns(o, len) * &ht;
        let t = h * sigma.rows(o, len) + &op.noise_blocks()[i];
        let x_run = DVector::from_column_slice(&c.mean[o..o + len]);
        let v = DVector::from_column_slice(&y[i * lm..(i + 1) * lm]) - h * x_run;

        let chol = t.clone().cholesky().or_else(|| {
            let jitter = t.trace() * T::lit(1e-12) / T::from_usize_lossy(lm);
            (t + DMatrix::identity(lm, lm) * jitter).cholesky()
        });
        let Some(chol) = chol else {
            c.stats.skipped.push(op.mask().kept()[i]);
            continue;
        };
        let kt = chol.solve(&sigma.transpose());
        let gain_v = kt.transpose() * &v;
        for (mi, dv) in c.mean.iter_mut().zip(gain_v.iter()) {
            *mi += *dv;
        }
        p.gemm(-T::one(), &sigma, &kt, T::one());
        symmetrize(&mut p);
        c.stats.assimilated += 1;
        c.stats.innovation_norm_sum += v.norm().as_f64();
    }

    if c.blocks.len() == 1 {
        c.blocks[0] = p;
    } else {
        for (k, b) in c.blocks.iter_mut().enumerate() {
            *b = p.view((k * gs, k * gs), (gs, gs)).into_owned();
        }
    }
}

pub(crate) fn symmetrize<T: Scalar>(p: &mut DMatrix<T>) {
    let n = p.nrows();
    let half = T::lit(0.5);
    for a in 0..n {
        for b in a + 1..n {
            let v = (p[(a, b)] + p[(b, a)]) * half;
            p[(a, b)] = v;
            p[(b, a)] = v;
        }
    }
}

/// Clamps the mean to `[0, s_max]`; the covariance is left untouched.
pub fn constrain<T: Scalar>(belief: &StateBelief<T>, s_max: T) -> Result<StateBelief<T>> {
    let mut out = belief.clone();
    clamp_mean(&mut out.mean, s_max)?;
    Ok(out)
}

pub(crate) fn clamp_mean<T: Scalar>(mean: &mut [T], s_max: T) -> Result<()> {
    if !(s_max > T::zero()) {
        return Err(FusionError::Invalid("s_max must be positive".into()));
    }
    for v in mean.iter_mut() {
        *v = v.min(s_max).max(T::zero());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{BlockCovariance, CovarianceStructure, StructureKind};
    use crate::observation::{ModalityModel, ModalityRole, OutlierMask, SpatialDegradation, SpectralResponse};
    use crate::raster::{Day, StateOrdering};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    fn belief(kind: StructureKind, ordering: &StateOrdering, rng: &mut ChaCha8Rng) -> StateBelief<f64> {
        let s = CovarianceStructure::new(kind, ordering).unwrap();
        let blocks = (0..s.n_groups()).map(|_| random_spd(rng, s.group_size())).collect();
        let mean = (0..s.state_len()).map(|_| rng.random()).collect();
        StateBelief::new(mean, BlockCovariance::from_blocks(s, blocks).unwrap(), 0, Day(0)).unwrap()
    }

    #[test]
    fn identity_without_noise_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o = StateOrdering::new(2, 2, 2, 2).unwrap();
        let b = belief(StructureKind::PerHrPixel, &o, &mut rng);
        let p = predict(&b, &TransitionModel::identity(vec![0.0; 8])).unwrap();
        assert_eq!(p.mean, b.mean);
        assert_eq!(p.cov, b.cov);
        assert_eq!(p.tag, BeliefTag::Predicted);
    }

    #[test]
    fn diagonal_prediction_adds_noise() {
        let o = StateOrdering::new(2, 2, 2, 2).unwrap();
        let s = CovarianceStructure::new(StructureKind::Diagonal, &o).unwrap();
        let b = StateBelief::new(vec![0.1; 8], BlockCovariance::initial(s, 0.25), 0, Day(0)).unwrap();
        let p = predict(&b, &TransitionModel::identity(vec![0.5; 8])).unwrap();
        assert_eq!(p.cov.to_dense(), DMatrix::identity(8, 8) * 0.75);
    }

    #[test]
    fn prediction_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = StateOrdering::new(2, 2, 2, 2).unwrap();
        let b = belief(StructureKind::Dense, &o, &mut rng);
        let f: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let q: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let model = TransitionModel::diagonal(f.clone(), q.clone()).unwrap();
        let p = predict(&b, &model).unwrap();
        let fm = DMatrix::from_diagonal(&DVector::from_vec(f));
        let dense = &fm * b.cov.to_dense() * fm.transpose() + DMatrix::from_diagonal(&DVector::from_vec(q));
        let mean = &fm * DVector::from_vec(b.mean.clone());
        assert!((p.cov.to_dense() - dense).amax() < 1e-12);
        assert!(p.mean.iter().zip(mean.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn rejects_expanding_transition() {
        assert!(TransitionModel::diagonal(vec![1.5f64], vec![0.0]).is_err());
    }

    #[test]
    fn scalar_textbook_update() {
        let o = StateOrdering::new(1, 1, 1, 1).unwrap();
        let s = CovarianceStructure::new(StructureKind::Diagonal, &o).unwrap();
        let b = StateBelief::new(vec![0.0f64], BlockCovariance::initial(s, 1.0), 0, Day(0)).unwrap();
        let model = ModalityModel::new("m", ModalityRole::LowRes, SpectralResponse::identity(1), SpatialDegradation::identity(), vec![1.0]).unwrap();
        let op = model.operator(&o, OutlierMask::full(1)).unwrap();
        let u = update(&b, &op, &[2.0]).unwrap();
        assert!((u.mean[0] - 1.0).abs() < 1e-15);
        assert!((u.cov.blocks()[0][(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_mask_leaves_belief_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = StateOrdering::new(3, 3, 1, 3).unwrap();
        let b = belief(StructureKind::PerCoarsePixel, &o, &mut rng);
        let model = ModalityModel::new("m", ModalityRole::LowRes, SpectralResponse::identity(1), SpatialDegradation::uniform(3), vec![1e-4]).unwrap();
        let op = model.operator(&o, OutlierMask::empty(1)).unwrap();
        let u = update(&b, &op, &[]).unwrap();
        assert_eq!(u.mean, b.mean);
        assert_eq!(u.cov, b.cov);
        assert!(update(&b, &op, &[1.0]).is_err());
    }

    #[test]
    fn coarse_update_matches_dense_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let o = StateOrdering::new(6, 6, 1, 3).unwrap();
        let b = belief(StructureKind::PerCoarsePixel, &o, &mut rng);
        let model = ModalityModel::new("m", ModalityRole::LowRes, SpectralResponse::identity(1), SpatialDegradation::uniform(3), vec![1e-2]).unwrap();
        let op = model.operator(&o, OutlierMask::full(4)).unwrap();
        let y: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let u = update(&b, &op, &y).unwrap();

        let h = op.materialize_dense();
        let p = b.cov.to_dense();
        let t = &h * &p * h.transpose() + op.materialize_noise_dense();
        let k = &p * h.transpose() * t.clone().try_inverse().unwrap();
        let s = DVector::from_vec(b.mean.clone());
        let mean = &s + &k * (DVector::from_vec(y) - &h * &s);
        let cov = &p - &k * &t * k.transpose();
        assert!((u.cov.to_dense() - cov).amax() < 1e-10);
        assert!(u.mean.iter().zip(mean.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn clamp_mean() {
        let o = StateOrdering::new(1, 3, 1, 1).unwrap();
        let s = CovarianceStructure::new(StructureKind::Diagonal, &o).unwrap();
        let b = StateBelief::new(vec![-0.1, 0.3, 0.7], BlockCovariance::initial(s, 1.0), 0, Day(0)).unwrap();
        let c = constrain(&b, 0.5).unwrap();
        assert_eq!(c.mean, vec![0.0, 0.3, 0.5]);
        assert_eq!(c.cov, b.cov);
        assert!(constrain(&b, 0.0).is_err());
        let inside = StateBelief::new(vec![0.1, 0.2, 0.3], BlockCovariance::initial(s, 1.0), 0, Day(0)).unwrap();
        assert_eq!(constrain(&inside, 0.5).unwrap().mean, inside.mean);
    }

    #[test]
    fn clamp_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        let oracle: Vec<f64> = v.iter().map(|x| x.clamp(0.0, 0.8)).collect();
        super::clamp_mean(&mut v, 0.8).unwrap();
        assert_eq!(v, oracle);
    }
}
