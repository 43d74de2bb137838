//! Sums of grid patches living at different dyadic levels.
//!
//! Profiles concentrating at scale `2^-k` far away from a unit-scale bump
//! cannot share one grid without blowing the memory guard. A [`DyadicSum`]
//! keeps each cluster of interacting terms flattened on its own finest level
//! and keeps clusters apart by at least one cell of the coarser neighbour, so
//! that integrals, rearrangements and total variation are sums over patches.

use crate::error::{Error, Result};
use crate::grid::{linear_combine_guarded, GridFunction, Region, DEFAULT_MEMORY_GUARD};
use crate::rearrange::Rearrangeable;

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicSum {
    dim: usize,
    patches: Vec<GridFunction>,
}

/// Real-space boxes of two patches are closer than one cell of the coarser
/// of the two along every axis.
fn interacts(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>), gap: f64) -> bool {
    (0..a.0.len()).all(|ax| a.0[ax] < b.1[ax] + gap && b.0[ax] < a.1[ax] + gap)
}

impl DyadicSum {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            patches: Vec::new(),
        }
    }

    pub fn from_grid(u: GridFunction) -> Self {
        let dim = u.dim();
        Self {
            dim,
            patches: u.trimmed().into_iter().collect(),
        }
    }

    /// Build from arbitrary (possibly overlapping) patches.
    pub fn from_patches(dim: usize, patches: impl IntoIterator<Item = GridFunction>) -> Result<Self> {
        let mut s = Self::zero(dim);
        for p in patches {
            s.add(1.0, &p)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patches(&self) -> &[GridFunction] {
        &self.patches
    }

    pub fn is_zero(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn add(&mut self, coefficient: f64, term: &GridFunction) -> Result<()> {
        self.add_guarded(coefficient, term, DEFAULT_MEMORY_GUARD)
    }

    /// `self += coefficient * term`, merging every patch that interacts with
    /// the new term.
    pub fn add_guarded(&mut self, coefficient: f64, term: &GridFunction, limit: usize) -> Result<()> {
        if term.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: term.dim(),
            });
        }
        if coefficient == 0.0 {
            return Ok(());
        }
        let Some(term) = term.trimmed() else {
            return Ok(());
        };
        let mut members: Vec<GridFunction> = Vec::new();
        let mut bounds = term.bounds();
        let mut width = term.cell_width();
        loop {
            let hit = self.patches.iter().position(|p| {
                interacts(&p.bounds(), &bounds, p.cell_width().max(width))
            });
            let Some(i) = hit else { break };
            let p = self.patches.swap_remove(i);
            let pb = p.bounds();
            for ax in 0..self.dim {
                bounds.0[ax] = bounds.0[ax].min(pb.0[ax]);
                bounds.1[ax] = bounds.1[ax].max(pb.1[ax]);
            }
            width = width.max(p.cell_width());
            members.push(p);
        }
        let merged = if members.is_empty() {
            Some(term.scale(coefficient))
        } else {
            let mut coefficients = vec![1.0; members.len()];
            coefficients.push(coefficient);
            members.push(term);
            linear_combine_guarded(&coefficients, &members, limit)?.trimmed()
        };
        self.patches.extend(merged);
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(self.dim);
        }
        Self {
            dim: self.dim,
            patches: self.patches.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// `self - other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for p in &other.patches {
            out.add(-1.0, p)?;
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.patches.iter().map(|p| p.eval(x)).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.patches.iter().map(GridFunction::l1_norm).fold(0.0, |a, b| a + b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.patches.iter().fold(0.0, |m, p| m.max(p.sup_norm()))
    }

    pub fn restrict(&self, region: &Region) -> Result<Self> {
        let mut patches = Vec::new();
        for p in &self.patches {
            if let Some(r) = p.restrict(region)?.trimmed() {
                patches.push(r);
            }
        }
        Ok(Self {
            dim: self.dim,
            patches,
        })
    }

    /// Single-grid representation at the finest level.
    pub fn flatten(&self) -> Result<GridFunction> {
        self.flatten_guarded(DEFAULT_MEMORY_GUARD)
    }

    pub fn flatten_guarded(&self, limit: usize) -> Result<GridFunction> {
        if self.patches.is_empty() {
            return Err(Error::Usage("cannot flatten an empty sum".into()));
        }
        let coefficients = vec![1.0; self.patches.len()];
        linear_combine_guarded(&coefficients, &self.patches, limit)
    }

    pub fn map_patches(&self, f: impl Fn(&GridFunction) -> Result<GridFunction>) -> Result<Self> {
        let patches = self.patches.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: self.dim,
            patches,
        })
    }
}

impl From<GridFunction> for DyadicSum {
    fn from(u: GridFunction) -> Self {
        Self::from_grid(u)
    }
}

impl Rearrangeable for DyadicSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pieces(&self) -> Vec<(f64, f64)> {
        self.patches.iter().flat_map(|p| p.pieces()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellBox;

    fn block(level: i32, origin: Vec<i64>, side: usize, value: f64) -> GridFunction {
        let dim = origin.len();
        GridFunction::new(
            level,
            CellBox::new(origin, vec![side; dim]).unwrap(),
            vec![value; side.pow(dim as u32)],
        )
        .unwrap()
    }

    #[test]
    fn separated_terms_stay_separate() {
        let mut s = DyadicSum::zero(2);
        s.add(1.0, &block(2, vec![0, 0], 4, 1.0)).unwrap();
        s.add(1.0, &block(10, vec![8 << 10, 0], 4, 3.0)).unwrap();
        assert_eq!(s.patches().len(), 2);
        assert_eq!(s.l1_norm(), 1.0 + 3.0 * 16.0 * 2f64.powi(-20));
    }

    #[test]
    fn touching_terms_merge() {
        let mut s = DyadicSum::zero(1);
        s.add(1.0, &block(0, vec![0], 2, 1.0)).unwrap();
        s.add(2.0, &block(1, vec![4], 2, 1.0)).unwrap();
        assert_eq!(s.patches().len(), 1);
        assert_eq!(s.eval(&[0.5]), 1.0);
        assert_eq!(s.eval(&[2.25]), 2.0);
    }

    #[test]
    fn subtracting_a_term_removes_it() {
        let a = block(3, vec![0, 0], 8, 1.5);
        let b = block(12, vec![5 << 12, 0], 8, -2.0);
        let s = DyadicSum::from_patches(2, [a.clone(), b.clone()]).unwrap();
        let mut r = s.clone();
        r.add(-1.0, &b).unwrap();
        assert_eq!(r.patches(), std::slice::from_ref(&a));
        r.add(-1.0, &a).unwrap();
        assert!(r.is_zero());
        assert!(s.difference(&s).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = DyadicSum::zero(2);
        assert!(matches!(
            s.add(1.0, &block(0, vec![0], 1, 1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
