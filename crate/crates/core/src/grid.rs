//! Piecewise-constant functions on dyadic uniform grids.
//!
//! A [`GridFunction`] at level `L` lives on cells of width `h = 2^-L`. Cell
//! `c` (an integer vector) is the half-open box `[c h, (c + 1) h)`. Values are
//! constant per cell and the function vanishes outside the stored box, so
//! every integral, distribution function and rearrangement reduces to a
//! finite computation over cell values.
//!
//! Levels may be negative (cells wider than one unit), which is what the
//! dilation group produces for negative scale exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of cells an operation may materialise.
pub const DEFAULT_MEMORY_GUARD: usize = 1 << 27;

pub const MAX_DIM: usize = 3;

pub fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

/// Width `2^-level` of a cell. Exact for any level a grid can hold.
pub fn cell_width(level: i32) -> f64 {
    2f64.powi(-level)
}

/// Index of the level-`coarse` cell containing the level-`fine` cell `idx`.
fn ancestor(idx: i64, fine: i32, coarse: i32) -> i64 {
    debug_assert!(fine >= coarse);
    idx >> (fine - coarse) as u32
}

/// Visit every multi-index in the box `origin + [0, extents)` in row-major
/// order (last axis fastest).
pub fn for_each_index(origin: &[i64], extents: &[usize], mut f: impl FnMut(&[i64])) {
    if extents.contains(&0) {
        return;
    }
    let mut idx = origin.to_vec();
    loop {
        f(&idx);
        let mut axis = idx.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < origin[axis] + extents[axis] as i64 {
                break;
            }
            idx[axis] = origin[axis];
        }
    }
}

/// An axis-aligned box of cells at a fixed level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub origin: Vec<i64>,
    pub extents: Vec<usize>,
}

impl CellBox {
    pub fn new(origin: Vec<i64>, extents: Vec<usize>) -> Result<Self> {
        if origin.len() != extents.len() {
            return Err(Error::DimensionMismatch {
                left: origin.len(),
                right: extents.len(),
            });
        }
        check_dim(origin.len())?;
        if extents.contains(&0) {
            return Err(Error::NonPositiveExtent(
                extents.iter().map(|&e| e as i64).collect(),
            ));
        }
        Ok(Self { origin, extents })
    }

    /// Smallest box of level-`level` cells covering the real box `[lo, hi]`.
    pub fn covering(lo: &[f64], hi: &[f64], level: i32) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                left: lo.len(),
                right: hi.len(),
            });
        }
        check_dim(lo.len())?;
        let inv_h = 2f64.powi(level);
        let mut origin = Vec::with_capacity(lo.len());
        let mut raw = Vec::with_capacity(lo.len());
        for (&a, &b) in lo.iter().zip(hi) {
            let start = (a * inv_h).floor() as i64;
            let end = (b * inv_h).ceil() as i64;
            origin.push(start);
            raw.push(end - start);
        }
        if raw.iter().any(|&e| e <= 0) {
            return Err(Error::NonPositiveExtent(raw));
        }
        Ok(Self {
            origin,
            extents: raw.into_iter().map(|e| e as usize).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn cell_count(&self) -> u128 {
        self.extents.iter().map(|&e| e as u128).product()
    }

    pub fn end(&self, axis: usize) -> i64 {
        self.origin[axis] + self.extents[axis] as i64
    }

    pub fn contains(&self, idx: &[i64]) -> bool {
        idx.iter()
            .enumerate()
            .all(|(a, &i)| i >= self.origin[a] && i < self.end(a))
    }

    pub fn flat_index(&self, idx: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            let off = i - self.origin[a];
            if off < 0 || off >= self.extents[a] as i64 {
                return None;
            }
            flat = flat * self.extents[a] + off as usize;
        }
        Some(flat)
    }

    /// The same region expressed with cells `2^k` times finer.
    pub fn refined(&self, k: u32) -> Self {
        Self {
            origin: self.origin.iter().map(|&o| o << k).collect(),
            extents: self.extents.iter().map(|&e| e << k).collect(),
        }
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Self) -> Self {
        let mut origin = Vec::with_capacity(self.dim());
        let mut extents = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let lo = self.origin[a].min(other.origin[a]);
            let hi = self.end(a).max(other.end(a));
            origin.push(lo);
            extents.push((hi - lo) as usize);
        }
        Self { origin, extents }
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let mut origin = Vec::with_capacity(self.dim());
        let mut extents = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let lo = self.origin[a].max(other.origin[a]);
            let hi = self.end(a).min(other.end(a));
            if hi <= lo {
                return None;
            }
            origin.push(lo);
            extents.push((hi - lo) as usize);
        }
        Some(Self { origin, extents })
    }

    pub fn for_each(&self, f: impl FnMut(&[i64])) {
        for_each_index(&self.origin, &self.extents, f);
    }
}

fn guard(cells: u128, limit: usize) -> Result<()> {
    if cells > limit as u128 {
        Err(Error::ResourceLimit { cells, limit })
    } else {
        Ok(())
    }
}

/// A real-valued function, constant on the cells of a dyadic grid and zero
/// outside its box. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    level: i32,
    cells: CellBox,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(level: i32, cells: CellBox, values: Vec<f64>) -> Result<Self> {
        let n = cells.cell_count();
        if n != values.len() as u128 {
            return Err(Error::Domain(format!(
                "box holds {n} cells but {} values were supplied",
                values.len()
            )));
        }
        Ok(Self {
            level,
            cells,
            values,
        })
    }

    pub fn zeros(level: i32, cells: CellBox) -> Self {
        let n = cells.cell_count() as usize;
        Self {
            level,
            cells,
            values: vec![0.0; n],
        }
    }

    /// Sample `sampler` at every cell centre of the level-`level` grid
    /// covering the real box `[lo, hi]`.
    pub fn from_sampler(
        dim: usize,
        level: i32,
        lo: &[f64],
        hi: &[f64],
        sampler: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        check_dim(dim)?;
        if lo.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: lo.len(),
            });
        }
        let cells = CellBox::covering(lo, hi, level)?;
        guard(cells.cell_count(), DEFAULT_MEMORY_GUARD)?;
        let h = cell_width(level);
        let mut values = Vec::with_capacity(cells.cell_count() as usize);
        let mut x = vec![0.0; dim];
        cells.for_each(|idx| {
            for (xa, &i) in x.iter_mut().zip(idx) {
                *xa = (i as f64 + 0.5) * h;
            }
            values.push(sampler(&x));
        });
        Ok(Self {
            level,
            cells,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.cells.dim()
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn cell_box(&self) -> &CellBox {
        &self.cells
    }

    pub fn origin(&self) -> &[i64] {
        &self.cells.origin
    }

    pub fn extents(&self) -> &[usize] {
        &self.cells.extents
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cell_width(&self) -> f64 {
        cell_width(self.level)
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_width().powi(self.dim() as i32)
    }

    /// Value on cell `idx` of this grid's own level.
    pub fn value_at(&self, idx: &[i64]) -> f64 {
        self.cells
            .flat_index(idx)
            .map_or(0.0, |flat| self.values[flat])
    }

    /// Value on cell `idx` of a level at least as fine as this grid's.
    pub fn value_at_level(&self, idx: &[i64], level: i32) -> f64 {
        debug_assert!(level >= self.level);
        if level == self.level {
            return self.value_at(idx);
        }
        let mut flat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            let off = ancestor(i, level, self.level) - self.cells.origin[a];
            if off < 0 || off >= self.cells.extents[a] as i64 {
                return 0.0;
            }
            flat = flat * self.cells.extents[a] + off as usize;
        }
        self.values[flat]
    }

    /// Point evaluation.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let inv_h = 2f64.powi(self.level);
        let idx: Vec<i64> = x.iter().map(|&xa| (xa * inv_h).floor() as i64).collect();
        self.value_at(&idx)
    }

    /// Lower and upper corners of the stored box in real coordinates.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.cell_width();
        let lo = self.cells.origin.iter().map(|&o| o as f64 * h).collect();
        let hi = (0..self.dim())
            .map(|a| self.cells.end(a) as f64 * h)
            .collect();
        (lo, hi)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn nonzero_cells(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// Lebesgue measure of `{u != 0}`.
    pub fn support_measure(&self) -> f64 {
        self.nonzero_cells() as f64 * self.cell_measure()
    }

    pub fn l1_norm(&self) -> f64 {
        self.cell_measure() * self.values.iter().map(|v| v.abs()).fold(0.0, |a, b| a + b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            level: self.level,
            cells: self.cells.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise-identical representation on a finer level.
    pub fn refine(&self, to_level: i32) -> Result<Self> {
        self.refine_guarded(to_level, DEFAULT_MEMORY_GUARD)
    }

    pub fn refine_guarded(&self, to_level: i32, limit: usize) -> Result<Self> {
        if to_level < self.level {
            return Err(Error::RefinementDirection {
                from: self.level,
                to: to_level,
            });
        }
        if to_level == self.level {
            return Ok(self.clone());
        }
        let k = (to_level - self.level) as u32;
        let cells = self.cells.refined(k);
        guard(cells.cell_count(), limit)?;
        let mut values = Vec::with_capacity(cells.cell_count() as usize);
        cells.for_each(|idx| values.push(self.value_at_level(idx, to_level)));
        Ok(Self {
            level: to_level,
            cells,
            values,
        })
    }

    /// `x -> u(x - z h)`: a pure relabelling of cells.
    pub fn translate_cells(&self, z: &[i64]) -> Self {
        let origin = self.cells.origin.iter().zip(z).map(|(o, d)| o + d).collect();
        Self {
            level: self.level,
            cells: CellBox {
                origin,
                extents: self.cells.extents.clone(),
            },
            values: self.values.clone(),
        }
    }

    /// Box expressed at a finer level.
    pub fn box_at_level(&self, level: i32) -> CellBox {
        self.cells.refined((level - self.level) as u32)
    }

    /// Restriction to `region`: equal to `self` on the region, zero elsewhere.
    /// Works at the finer of the two levels.
    pub fn restrict(&self, region: &Region) -> Result<Self> {
        self.restrict_guarded(region, DEFAULT_MEMORY_GUARD)
    }

    pub fn restrict_guarded(&self, region: &Region, limit: usize) -> Result<Self> {
        if region.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: region.dim,
            });
        }
        let level = self.level.max(region.level);
        let own = self.box_at_level(level);
        let target = match region.bounding_box(level) {
            Some(b) => match own.intersection(&b) {
                Some(i) => i,
                None => return Ok(Self::zeros(level, single_cell(&own))),
            },
            None => own,
        };
        guard(target.cell_count(), limit)?;
        let mut values = Vec::with_capacity(target.cell_count() as usize);
        target.for_each(|idx| {
            let v = if region.contains_cell(idx, level) {
                self.value_at_level(idx, level)
            } else {
                0.0
            };
            values.push(v);
        });
        Ok(Self {
            level,
            cells: target,
            values,
        })
    }

    /// Shrink the box to the bounding box of the nonzero cells; `None` when
    /// the function is identically zero.
    pub fn trimmed(&self) -> Option<Self> {
        let dim = self.dim();
        let mut lo = vec![i64::MAX; dim];
        let mut hi = vec![i64::MIN; dim];
        let mut any = false;
        let mut k = 0usize;
        self.cells.for_each(|idx| {
            if self.values[k] != 0.0 {
                any = true;
                for a in 0..dim {
                    lo[a] = lo[a].min(idx[a]);
                    hi[a] = hi[a].max(idx[a]);
                }
            }
            k += 1;
        });
        if !any {
            return None;
        }
        let cells = CellBox {
            extents: lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as usize).collect(),
            origin: lo,
        };
        if cells == self.cells {
            return Some(self.clone());
        }
        let mut values = Vec::with_capacity(cells.cell_count() as usize);
        cells.for_each(|idx| values.push(self.value_at(idx)));
        Some(Self {
            level: self.level,
            cells,
            values,
        })
    }

    /// Largest absolute pointwise difference, compared on a common level.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let diff = linear_combine(&[1.0, -1.0], &[self.clone(), other.clone()])?;
        Ok(diff.sup_norm())
    }
}

fn single_cell(b: &CellBox) -> CellBox {
    CellBox {
        origin: b.origin.clone(),
        extents: vec![1; b.dim()],
    }
}

/// Pointwise linear combination, lifted to the finest level and the union box.
pub fn linear_combine(coefficients: &[f64], terms: &[GridFunction]) -> Result<GridFunction> {
    linear_combine_guarded(coefficients, terms, DEFAULT_MEMORY_GUARD)
}

pub fn linear_combine_guarded(
    coefficients: &[f64],
    terms: &[GridFunction],
    limit: usize,
) -> Result<GridFunction> {
    if coefficients.len() != terms.len() {
        return Err(Error::Usage(format!(
            "{} coefficients for {} terms",
            coefficients.len(),
            terms.len()
        )));
    }
    let first = terms
        .first()
        .ok_or_else(|| Error::Usage("linear combination of no terms".into()))?;
    let dim = first.dim();
    if let Some(bad) = terms.iter().find(|t| t.dim() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: bad.dim(),
        });
    }
    let level = terms.iter().map(|t| t.level).max().unwrap_or(first.level);
    let mut cells = first.box_at_level(level);
    for t in &terms[1..] {
        cells = cells.union(&t.box_at_level(level));
    }
    guard(cells.cell_count(), limit)?;
    let mut out = GridFunction::zeros(level, cells);
    for (&c, t) in coefficients.iter().zip(terms) {
        if c == 0.0 {
            continue;
        }
        let tb = t.box_at_level(level);
        let mut k = 0usize;
        let out_box = out.cells.clone();
        out_box.for_each(|idx| {
            if tb.contains(idx) {
                out.values[k] += c * t.value_at_level(idx, level);
            }
            k += 1;
        });
    }
    Ok(out)
}

/// A finite cell mask: a boolean grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    pub cells: CellBox,
    pub bits: Vec<bool>,
}

impl CellMask {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionKind {
    Everything,
    /// Cube with lower corner `corner` and `side` cells per axis.
    Cube { corner: Vec<i64>, side: i64 },
    /// Cells whose centre satisfies `r_in < |x| <= r_out`.
    Annulus { r_in: f64, r_out: f64 },
    Mask(CellMask),
}

/// A set of cells at a given level. At finer levels a cell belongs to the
/// region iff its ancestor at the region's level does.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub dim: usize,
    pub level: i32,
    pub kind: RegionKind,
}

impl Region {
    pub fn everything(dim: usize) -> Self {
        Self {
            dim,
            level: i32::MIN / 2,
            kind: RegionKind::Everything,
        }
    }

    pub fn empty(dim: usize, level: i32) -> Self {
        Self {
            dim,
            level,
            kind: RegionKind::Mask(CellMask {
                cells: CellBox {
                    origin: vec![0; dim],
                    extents: vec![1; dim],
                },
                bits: vec![false],
            }),
        }
    }

    pub fn cube(level: i32, corner: Vec<i64>, side: i64) -> Self {
        Self {
            dim: corner.len(),
            level,
            kind: RegionKind::Cube { corner, side },
        }
    }

    /// The unit cube `(0,1)^N + y` for an integer vector `y`.
    pub fn unit_cube(y: &[i64]) -> Self {
        Self::cube(0, y.to_vec(), 1)
    }

    pub fn annulus(dim: usize, level: i32, r_in: f64, r_out: f64) -> Self {
        Self {
            dim,
            level,
            kind: RegionKind::Annulus { r_in, r_out },
        }
    }

    pub fn mask(level: i32, mask: CellMask) -> Self {
        Self {
            dim: mask.cells.dim(),
            level,
            kind: RegionKind::Mask(mask),
        }
    }

    /// Membership of a cell given at a level no coarser than the region's.
    pub fn contains_cell(&self, idx: &[i64], level: i32) -> bool {
        match &self.kind {
            RegionKind::Everything => true,
            RegionKind::Cube { corner, side } => idx.iter().zip(corner).all(|(&i, &c)| {
                let a = ancestor(i, level, self.level);
                a >= c && a < c + side
            }),
            RegionKind::Annulus { r_in, r_out } => {
                let h = cell_width(self.level);
                let r2: f64 = idx
                    .iter()
                    .map(|&i| {
                        let x = (ancestor(i, level, self.level) as f64 + 0.5) * h;
                        x * x
                    })
                    .sum();
                let r = r2.sqrt();
                *r_in < r && r <= *r_out
            }
            RegionKind::Mask(mask) => {
                let anc: Vec<i64> = idx.iter().map(|&i| ancestor(i, level, self.level)).collect();
                mask.cells.flat_index(&anc).is_some_and(|f| mask.bits[f])
            }
        }
    }

    /// Box (at `level`, no coarser than the region's) outside which no cell
    /// belongs to the region; `None` for unbounded regions.
    pub fn bounding_box(&self, level: i32) -> Option<CellBox> {
        let native = match &self.kind {
            RegionKind::Everything => return None,
            RegionKind::Cube { corner, side } => CellBox {
                origin: corner.clone(),
                extents: vec![(*side).max(0) as usize; corner.len()],
            },
            RegionKind::Annulus { r_out, .. } => {
                let inv_h = 2f64.powi(self.level);
                let m = (r_out * inv_h).ceil() as i64 + 1;
                CellBox {
                    origin: vec![-m; self.dim],
                    extents: vec![(2 * m) as usize; self.dim],
                }
            }
            RegionKind::Mask(mask) => mask.cells.clone(),
        };
        Some(native.refined((level - self.level) as u32))
    }

    /// Lebesgue measure: cell measure times the number of member cells.
    pub fn measure(&self) -> f64 {
        let cell = cell_width(self.level).powi(self.dim as i32);
        match &self.kind {
            RegionKind::Everything => f64::INFINITY,
            RegionKind::Mask(mask) => mask.count() as f64 * cell,
            _ => {
                let b = self.bounding_box(self.level).expect("bounded region");
                let mut count = 0usize;
                b.for_each(|idx| {
                    if self.contains_cell(idx, self.level) {
                        count += 1;
                    }
                });
                count as f64 * cell
            }
        }
    }
}
