use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{FusionError, Result};
use crate::raster::{Day, StateOrdering};
use crate::scalar::Scalar;

/// Largest state the dense reference structure accepts.
pub const DENSE_STATE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureKind {
    /// One group per state entry.
    Diagonal,
    /// One group per high-resolution pixel (all its bands).
    PerHrPixel,
    /// One group per coarse pixel (all bands of its `d²` high-resolution pixels).
    PerCoarsePixel,
    /// A single group: the full Kalman filter.
    Dense,
}

impl StructureKind {
    pub fn label(self) -> &'static str {
        match self {
            StructureKind::Diagonal => "diag",
            StructureKind::PerHrPixel => "pixel",
            StructureKind::PerCoarsePixel => "coarse",
            StructureKind::Dense => "dense",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StructureKind {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" | "diagonal" => Ok(StructureKind::Diagonal),
            "pixel" => Ok(StructureKind::PerHrPixel),
            "coarse" => Ok(StructureKind::PerCoarsePixel),
            "dense" => Ok(StructureKind::Dense),
            other => Err(FusionError::Config(format!("unknown covariance structure {other:?} (diag|pixel|coarse|dense)"))),
        }
    }
}

/// Partition of the state into equally sized contiguous groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CovarianceStructure {
    kind: StructureKind,
    group_size: usize,
    state_len: usize,
}

impl CovarianceStructure {
    pub fn new(kind: StructureKind, ordering: &StateOrdering) -> Result<Self> {
        let state_len = ordering.state_len();
        let group_size = match kind {
            StructureKind::Diagonal => 1,
            StructureKind::PerHrPixel => ordering.n_bands(),
            StructureKind::PerCoarsePixel => ordering.coarse_run_len(),
            StructureKind::Dense => {
                if state_len > DENSE_STATE_CAP {
                    return Err(FusionError::Config(format!(
                        "dense covariance limited to {DENSE_STATE_CAP} state entries, got {state_len}"
                    )));
                }
                state_len
            }
        };
        Ok(CovarianceStructure { kind, group_size, state_len })
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn n_groups(&self) -> usize {
        self.state_len / self.group_size
    }

    #[inline]
    pub fn group_of(&self, index: usize) -> usize {
        index / self.group_size
    }

    pub fn group_range(&self, group: usize) -> std::ops::Range<usize> {
        group * self.group_size..(group + 1) * self.group_size
    }
}

/// Summary of symmetry and definiteness over all blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceHealth {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub min_diagonal: f64,
}

impl CovarianceHealth {
    pub fn is_healthy(&self, sym_tol: f64, eig_tol: f64) -> bool {
        self.max_asymmetry <= sym_tol && self.min_eigenvalue >= -eig_tol && self.min_diagonal >= -eig_tol
    }
}

/// Block-diagonal covariance, one dense block per group.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance<T: Scalar> {
    structure: CovarianceStructure,
    blocks: Vec<DMatrix<T>>,
}

impl<T: Scalar> BlockCovariance<T> {
    pub fn from_blocks(structure: CovarianceStructure, blocks: Vec<DMatrix<T>>) -> Result<Self> {
        if blocks.len() != structure.n_groups() {
            return Err(FusionError::Dimension { what: "covariance blocks vs groups", a: blocks.len(), b: structure.n_groups() });
        }
        let gs = structure.group_size();
        if let Some(b) = blocks.iter().find(|b| b.shape() != (gs, gs)) {
            return Err(FusionError::Shape(format!("covariance block {:?}, expected {gs}x{gs}", b.shape())));
        }
        Ok(BlockCovariance { structure, blocks })
    }

    /// `scale · P0` with `P0 = I` for the diagonal structure and blocks of
    /// `½·ones + ½·I` otherwise.
    pub fn initial(structure: CovarianceStructure, scale: T) -> Self {
        let gs = structure.group_size();
        let half = T::lit(0.5);
        let block = match structure.kind() {
            StructureKind::Diagonal => DMatrix::identity(gs, gs) * scale,
            _ => DMatrix::from_fn(gs, gs, |i, j| if i == j { scale } else { half * scale }),
        };
        BlockCovariance { structure, blocks: vec![block; structure.n_groups()] }
    }

    /// Keeps only the diagonal blocks of a dense covariance.
    pub fn from_dense(structure: CovarianceStructure, dense: &DMatrix<T>) -> Result<Self> {
        if dense.shape() != (structure.state_len(), structure.state_len()) {
            return Err(FusionError::Shape(format!("dense covariance {:?} vs state {}", dense.shape(), structure.state_len())));
        }
        let gs = structure.group_size();
        let blocks = (0..structure.n_groups())
            .map(|g| dense.view((g * gs, g * gs), (gs, gs)).into_owned())
            .collect();
        Ok(BlockCovariance { structure, blocks })
    }

    pub fn structure(&self) -> &CovarianceStructure {
        &self.structure
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [DMatrix<T>] {
        &mut self.blocks
    }

    pub(crate) fn take_blocks(&mut self, range: std::ops::RangeInclusive<usize>) -> Vec<DMatrix<T>> {
        range.map(|g| std::mem::replace(&mut self.blocks[g], DMatrix::zeros(0, 0))).collect()
    }

    pub(crate) fn put_blocks(&mut self, first: usize, blocks: Vec<DMatrix<T>>) {
        for (i, b) in blocks.into_iter().enumerate() {
            self.blocks[first + i] = b;
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        self.blocks.iter().flat_map(|b| b.diagonal().iter().copied().collect::<Vec<_>>()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.structure.state_len();
        let gs = self.structure.group_size();
        let mut dense = DMatrix::zeros(n, n);
        for (g, b) in self.blocks.iter().enumerate() {
            dense.view_mut((g * gs, g * gs), (gs, gs)).copy_from(b);
        }
        dense
    }

    pub fn health(&self) -> CovarianceHealth {
        self.blocks
            .par_iter()
            .map(|b| {
                let asym = (b - b.transpose()).amax().as_f64();
                let sym = (b + b.transpose()) * T::lit(0.5);
                let min_eig = sym.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
                let min_diag = b.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
                CovarianceHealth { max_asymmetry: asym, min_eigenvalue: min_eig, min_diagonal: min_diag }
            })
            .reduce(
                || CovarianceHealth { max_asymmetry: 0.0, min_eigenvalue: f64::INFINITY, min_diagonal: f64::INFINITY },
                |a, b| CovarianceHealth {
                    max_asymmetry: a.max_asymmetry.max(b.max_asymmetry),
                    min_eigenvalue: a.min_eigenvalue.min(b.min_eigenvalue),
                    min_diagonal: a.min_diagonal.min(b.min_diagonal),
                },
            )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefTag {
    Initial,
    Predicted,
    Updated,
    Smoothed,
}

/// Gaussian belief over the state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBelief<T: Scalar> {
    pub mean: Vec<T>,
    pub cov: BlockCovariance<T>,
    pub instant: usize,
    pub date: Day,
    pub tag: BeliefTag,
}

impl<T: Scalar> StateBelief<T> {
    pub fn new(mean: Vec<T>, cov: BlockCovariance<T>, instant: usize, date: Day) -> Result<Self> {
        if mean.len() != cov.structure().state_len() {
            return Err(FusionError::Dimension { what: "mean length vs covariance", a: mean.len(), b: cov.structure().state_len() });
        }
        Ok(StateBelief { mean, cov, instant, date, tag: BeliefTag::Initial })
    }

    pub fn structure(&self) -> &CovarianceStructure {
        self.cov.structure()
    }
}
