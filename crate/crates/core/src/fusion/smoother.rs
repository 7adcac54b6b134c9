use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{FusionError, Result};
use crate::fusion::kalman::{clamp_mean, symmetrize, TransitionModel};
use crate::fusion::structure::{BeliefTag, BlockCovariance, StateBelief};
use crate::scalar::Scalar;

/// Rauch-Tung-Striebel backward pass over a completed filter run.
///
/// `filtered[k]` is the final (all modalities, constrained) belief at instant
/// `k`; `transitions[k]` is the model that carried instant `k` to `k + 1`.
/// The smoother gain is block-diagonal with the covariance structure, so each
/// group is smoothed independently. Smoothed means are clamped to
/// `[0, s_max]` when a bound is given.
pub fn smooth<T: Scalar>(filtered: &[StateBelief<T>], transitions: &[TransitionModel<T>], s_max: Option<T>) -> Result<Vec<StateBelief<T>>> {
    let Some(last) = filtered.last() else {
        return Err(FusionError::Invalid("cannot smooth an empty timeline".into()));
    };
    if transitions.len() + 1 != filtered.len() {
        return Err(FusionError::Dimension { what: "transitions vs filtered instants - 1", a: transitions.len(), b: filtered.len() - 1 });
    }
    let structure = *last.structure();
    let gs = structure.group_size();

    let mut next = last.clone();
    if let Some(bound) = s_max {
        clamp_mean(&mut next.mean, bound)?;
    }
    next.tag = BeliefTag::Smoothed;
    let mut out = vec![next];

    for k in (0..filtered.len() - 1).rev() {
        let cur = &filtered[k];
        let model = &transitions[k];
        model.check(structure.state_len())?;
        if cur.structure() != &structure {
            return Err(FusionError::Shape(format!("instant {k} uses a different covariance structure")));
        }
        let later = out.last().unwrap();
        let results: Vec<Result<(Vec<T>, DMatrix<T>)>> = cur
            .cov
            .blocks()
            .par_iter()
            .enumerate()
            .map(|(g, p)| {
                let off = g * gs;
                let range = off..off + gs;
                let p_pred = model.propagate_block(p, off);
                // G = P Fᵀ P_pred⁻¹, so Gᵀ = P_pred⁻¹ F P (P symmetric, F diagonal)
                let fp = DMatrix::from_fn(gs, gs, |a, b| model.factor(off + a) * p[(a, b)]);
                let chol = p_pred.clone().cholesky().ok_or(FusionError::SingularPredicted { group: g, instant: k })?;
                let gain = chol.solve(&fp).transpose();
                let s = DVector::from_column_slice(&cur.mean[range.clone()]);
                let s_pred = DVector::from_fn(gs, |a, _| model.factor(off + a) * s[a]);
                let s_next = DVector::from_column_slice(&later.mean[range]);
                let mean = &s + &gain * (s_next - s_pred);
                let mut cov = p + &gain * (&later.cov.blocks()[g] - &p_pred) * gain.transpose();
                symmetrize(&mut cov);
                Ok((mean.iter().copied().collect(), cov))
            })
            .collect();

        let mut mean = Vec::with_capacity(structure.state_len());
        let mut blocks = Vec::with_capacity(structure.n_groups());
        for r in results {
            let (m, c) = r?;
            mean.extend(m);
            blocks.push(c);
        }
        if let Some(bound) = s_max {
            clamp_mean(&mut mean, bound)?;
        }
        let mut belief = StateBelief::new(mean, BlockCovariance::from_blocks(structure, blocks)?, cur.instant, cur.date)?;
        belief.tag = BeliefTag::Smoothed;
        out.push(belief);
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{CovarianceStructure, StructureKind};
    use crate::raster::{Day, StateOrdering};

    fn scalar_belief(mean: f64, var: f64, k: usize) -> StateBelief<f64> {
        let o = StateOrdering::new(1, 1, 1, 1).unwrap();
        let s = CovarianceStructure::new(StructureKind::Diagonal, &o).unwrap();
        let mut b = StateBelief::new(vec![mean], BlockCovariance::initial(s, var), k, Day(k as i64)).unwrap();
        b.tag = BeliefTag::Updated;
        b
    }

    #[test]
    fn single_instant_is_its_own_smoothed_estimate() {
        let b = scalar_belief(0.3, 0.2, 0);
        let s = smooth(std::slice::from_ref(&b), &[], None).unwrap();
        assert_eq!(s[0].mean, b.mean);
        assert_eq!(s[0].cov, b.cov);
        assert_eq!(s[0].tag, BeliefTag::Smoothed);
    }

    #[test]
    fn huge_process_noise_decouples_instants() {
        let f = vec![scalar_belief(0.3, 0.2, 0), scalar_belief(0.9, 0.1, 1)];
        let s = smooth(&f, &[TransitionModel::identity(vec![1e6])], None).unwrap();
        assert!(((s[0].mean[0] - 0.3) / 0.3).abs() < 1e-4);
        assert!(((s[0].cov.blocks()[0][(0, 0)] - 0.2) / 0.2).abs() < 1e-4);
    }

    #[test]
    fn three_step_scalar_matches_hand_recursion() {
        let f = vec![scalar_belief(0.2, 0.5, 0), scalar_belief(0.6, 0.3, 1), scalar_belief(0.4, 0.1, 2)];
        let q = [0.05, 0.2];
        let models: Vec<_> = q.iter().map(|&q| TransitionModel::identity(vec![q])).collect();
        let s = smooth(&f, &models, None).unwrap();

        let (mut ms, mut ps) = (0.4, 0.1);
        let mut expected = vec![(ms, ps)];
        for k in (0..2).rev() {
            let (m, p) = (f[k].mean[0], f[k].cov.blocks()[0][(0, 0)]);
            let pp = p + q[k];
            let g = p / pp;
            ms = m + g * (ms - m);
            ps = p + g * (ps - pp) * g;
            expected.push((ms, ps));
        }
        expected.reverse();
        for (b, (m, p)) in s.iter().zip(expected) {
            assert!((b.mean[0] - m).abs() < 1e-14);
            assert!((b.cov.blocks()[0][(0, 0)] - p).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_prediction_is_reported() {
        let f = vec![scalar_belief(0.2, 0.0, 0), scalar_belief(0.6, 0.0, 1)];
        let err = smooth(&f, &[TransitionModel::identity(vec![0.0])], None).unwrap_err();
        assert!(matches!(err, FusionError::SingularPredicted { group: 0, instant: 0 }));
    }

    #[test]
    fn smoothed_mean_is_clamped() {
        let f = vec![scalar_belief(0.2, 0.5, 0), scalar_belief(2.0, 0.01, 1)];
        let s = smooth(&f, &[TransitionModel::identity(vec![0.01])], Some(1.0)).unwrap();
        assert_eq!(s[1].mean[0], 1.0);
        assert!(s[0].mean[0] <= 1.0);
    }
}
