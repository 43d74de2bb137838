//! The dilation-translation group `g[j, y] u = 2^{(N-1) j} u(2^j (. - y))`.
//!
//! With `y` restricted to dyadic rationals, the action on a dyadic grid
//! function is a relabelling of cells (level `L -> L + j`, index shift
//! `y 2^{L+j}`) followed by multiplication by a power of two, so it is exact
//! in floating point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, DEFAULT_MEMORY_GUARD};
use crate::multiscale::DyadicSum;
use crate::norms::FunctionNorm;

/// Default bound on `|j|`.
pub const DEFAULT_MAX_SCALE: i32 = 20;

/// A vector with dyadic rational entries `numerators * 2^-level`, kept in
/// lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicVec {
    numerators: Vec<i64>,
    level: i32,
}

impl DyadicVec {
    pub fn new(numerators: Vec<i64>, level: i32) -> Self {
        let mut v = Self { numerators, level };
        v.normalize();
        v
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            numerators: vec![0; dim],
            level: 0,
        }
    }

    pub fn integer(y: &[i64]) -> Self {
        Self::new(y.to_vec(), 0)
    }

    fn normalize(&mut self) {
        if self.numerators.iter().all(|&n| n == 0) {
            self.level = 0;
            return;
        }
        while self.numerators.iter().all(|n| n % 2 == 0) {
            for n in &mut self.numerators {
                *n /= 2;
            }
            self.level -= 1;
        }
    }

    pub fn dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn numerators(&self) -> &[i64] {
        &self.numerators
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn is_zero(&self) -> bool {
        self.numerators.iter().all(|&n| n == 0)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let s = 2f64.powi(-self.level);
        self.numerators.iter().map(|&n| n as f64 * s).collect()
    }

    /// Numerators over the common denominator `2^level`; requires
    /// `level >= self.level`.
    fn numerators_at(&self, level: i32) -> Vec<i64> {
        let k = (level - self.level) as u32;
        self.numerators.iter().map(|&n| n << k).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        let level = self.level.max(other.level);
        let a = self.numerators_at(level);
        let b = other.numerators_at(level);
        Self::new(a.iter().zip(&b).map(|(x, y)| x + y).collect(), level)
    }

    pub fn neg(&self) -> Self {
        Self {
            numerators: self.numerators.iter().map(|n| -n).collect(),
            level: self.level,
        }
    }

    /// `2^k * self`.
    pub fn scale_pow2(&self, k: i32) -> Self {
        Self::new(self.numerators.clone(), self.level - k)
    }

    /// Euclidean length.
    pub fn norm(&self) -> f64 {
        self.to_f64().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// The isometry `g[j, y]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub j: i32,
    pub y: DyadicVec,
}

#[derive(Serialize, Deserialize)]
struct GroupElementJson {
    j: i32,
    y_numerators: Vec<i64>,
    y_level: i32,
}

impl Serialize for GroupElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GroupElementJson {
            j: self.j,
            y_numerators: self.y.numerators.clone(),
            y_level: self.y.level,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GroupElementJson::deserialize(d)?;
        Ok(Self {
            j: raw.j,
            y: DyadicVec::new(raw.y_numerators, raw.y_level),
        })
    }
}

impl GroupElement {
    pub fn identity(dim: usize) -> Self {
        Self {
            j: 0,
            y: DyadicVec::zero(dim),
        }
    }

    pub fn new(j: i32, y: DyadicVec) -> Self {
        Self { j, y }
    }

    /// `g[j, y]` with an integer translation.
    pub fn integer(j: i32, y: &[i64]) -> Self {
        Self::new(j, DyadicVec::integer(y))
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn is_identity(&self) -> bool {
        self.j == 0 && self.y.is_zero()
    }

    pub fn check_scale(&self, max_scale: i32) -> Result<()> {
        if self.j.abs() > max_scale {
            Err(Error::ScaleOutOfRange {
                j: self.j,
                max: max_scale,
            })
        } else {
            Ok(())
        }
    }

    /// `self o other`: `j = j1 + j2`, `y = y2 + 2^{-j2} y1`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            j: self.j + other.j,
            y: self.y.add(&other.y.scale_pow2(-self.j)),
        }
    }

    /// `g^{-1} = g[-j, -2^j y]`.
    pub fn inverse(&self) -> Self {
        Self {
            j: -self.j,
            y: self.y.scale_pow2(self.j).neg(),
        }
    }

    /// Separation `|j - j'| + |y - y'|` between two elements.
    pub fn distance(&self, other: &Self) -> f64 {
        (self.j - other.j).abs() as f64 + self.y.add(&other.y.neg()).norm()
    }

    pub fn act(&self, u: &GridFunction) -> Result<GridFunction> {
        self.act_with(u, DEFAULT_MAX_SCALE, DEFAULT_MEMORY_GUARD)
    }

    pub fn act_with(&self, u: &GridFunction, max_scale: i32, limit: usize) -> Result<GridFunction> {
        self.check_scale(max_scale)?;
        if self.dim() != u.dim() {
            return Err(Error::DimensionMismatch {
                left: u.dim(),
                right: self.dim(),
            });
        }
        // the translation must be a whole number of output cells
        let needed = self.y.level - self.j;
        let refined;
        let u = if needed > u.level() && !self.y.is_zero() {
            refined = u.refine_guarded(needed, limit).map_err(|e| {
                Error::Representability(format!(
                    "translation at level {} needs input level {needed}: {e}",
                    self.y.level
                ))
            })?;
            &refined
        } else {
            u
        };
        let out_level = u.level() + self.j;
        let shift: Vec<i64> = if self.y.is_zero() {
            vec![0; u.dim()]
        } else {
            self.y.numerators_at(out_level)
        };
        let factor = 2f64.powi((u.dim() as i32 - 1) * self.j);
        let origin: Vec<i64> = u.origin().iter().zip(&shift).map(|(o, s)| o + s).collect();
        let cells = crate::grid::CellBox {
            origin,
            extents: u.extents().to_vec(),
        };
        GridFunction::new(out_level, cells, u.values().iter().map(|v| v * factor).collect())
    }

    pub fn act_sum(&self, u: &DyadicSum) -> Result<DyadicSum> {
        u.map_patches(|p| self.act(p))
    }
}

/// `| ||g u|| - ||u|| | / ||u||`, zero for `u = 0`.
pub fn isometry_defect(g: &GroupElement, u: &GridFunction, norm: &dyn FunctionNorm) -> Result<f64> {
    let before = norm.eval(u)?;
    let after = norm.eval(&g.act(u)?)?;
    if before == 0.0 {
        return Ok(if after == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((after - before).abs() / before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bv::total_variation;
    use crate::grid::CellBox;
    use crate::norms::norm_by_id;
    use crate::rearrange::{decreasing_rearrangement, LorentzIndex, lorentz_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bump(level: i32) -> GridFunction {
        GridFunction::from_sampler(2, level, &[-1.0, -0.5], &[1.5, 1.0], |x| {
            (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0) + if x[0] > 0.5 { 0.75 } else { 0.0 }
        })
        .unwrap()
    }

    fn random_element(rng: &mut ChaCha8Rng) -> GroupElement {
        let j = rng.gen_range(-4..=4);
        let level = rng.gen_range(0..=3);
        let y = DyadicVec::new(vec![rng.gen_range(-20..20), rng.gen_range(-20..20)], level);
        GroupElement::new(j, y)
    }

    /// `2^{(N-1) j} u(2^j (x - y))` evaluated directly.
    fn act_pointwise(g: &GroupElement, u: &GridFunction, x: &[f64]) -> f64 {
        let y = g.y.to_f64();
        let s = 2f64.powi(g.j);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| s * (a - b)).collect();
        2f64.powi((u.dim() as i32 - 1) * g.j) * u.eval(&z)
    }

    #[test]
    fn identity_acts_trivially() {
        let u = bump(4);
        assert_eq!(GroupElement::identity(2).act(&u).unwrap(), u);
    }

    #[test]
    fn action_matches_pointwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = bump(4);
        for _ in 0..20 {
            let g = random_element(&mut rng);
            let gu = g.act(&u).unwrap();
            let y = g.y.to_f64();
            let s = 2f64.powi(-g.j);
            for _ in 0..100 {
                // points drawn in the image of the support box
                let x = [
                    y[0] + s * rng.gen_range(-1.2..1.7),
                    y[1] + s * rng.gen_range(-0.7..1.2),
                ];
                assert_eq!(gu.eval(&x), act_pointwise(&g, &u, &x));
            }
        }
    }

    #[test]
    fn composition_law_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = bump(3);
        for _ in 0..20 {
            let (g1, g2) = (random_element(&mut rng), random_element(&mut rng));
            let both = g2.act(&g1.act(&u).unwrap()).unwrap();
            let once = g2.compose(&g1).act(&u).unwrap();
            assert_eq!(both.max_abs_diff(&once).unwrap(), 0.0);
            let (lo, hi) = once.bounds();
            for _ in 0..100 {
                let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
                assert_eq!(both.eval(&x), once.eval(&x));
            }
        }
    }

    #[test]
    fn group_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = GroupElement::identity(2);
        assert_eq!(e.inverse(), e);
        for _ in 0..50 {
            let (a, b, c) = (
                random_element(&mut rng),
                random_element(&mut rng),
                random_element(&mut rng),
            );
            assert_eq!(e.compose(&a), a);
            assert_eq!(a.compose(&e), a);
            assert_eq!(a.compose(&a.inverse()), e);
            assert_eq!(a.inverse().compose(&a), e);
            assert_eq!(a.inverse().inverse(), a);
            assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
        }
    }

    #[test]
    fn inverse_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = bump(4);
        for _ in 0..20 {
            let g = random_element(&mut rng);
            let back = g.inverse().act(&g.act(&u).unwrap()).unwrap();
            assert_eq!(back.max_abs_diff(&u).unwrap(), 0.0);
        }
    }

    #[test]
    fn isometries_of_tv_and_critical_lorentz() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = bump(4);
        let zero = GridFunction::zeros(2, CellBox::new(vec![0, 0], vec![2, 2]).unwrap());
        for id in ["bv", "critical:1", "critical:1.2", "critical:2", "critical:inf", "lorentz:2:1.5"] {
            let norm = norm_by_id(id).unwrap();
            for _ in 0..10 {
                let g = random_element(&mut rng);
                assert!(isometry_defect(&g, &u, norm.as_ref()).unwrap() <= 1e-12, "{id}");
                assert_eq!(isometry_defect(&g, &zero, norm.as_ref()).unwrap(), 0.0);
            }
            assert_eq!(isometry_defect(&GroupElement::identity(2), &u, norm.as_ref()).unwrap(), 0.0);
        }
        let g = GroupElement::integer(2, &[1, 0]);
        assert_eq!(total_variation(&g.act(&u).unwrap()), total_variation(&u));
    }

    #[test]
    fn lebesgue_norms_other_than_critical_are_not_preserved() {
        let g = GroupElement::integer(1, &[0, 0]);
        let defect = isometry_defect(&g, &bump(3), norm_by_id("lp:1").unwrap().as_ref()).unwrap();
        assert!((defect - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rearrangement_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = bump(3);
        let star = decreasing_rearrangement(&u);
        for _ in 0..20 {
            let g = random_element(&mut rng);
            let expect = star.rescaled(2f64.powi(g.j), 2f64.powi(-2 * g.j));
            assert_eq!(decreasing_rearrangement(&g.act(&u).unwrap()), expect);
            let idx = LorentzIndex::new(2.0, 1.0).unwrap();
            let a = lorentz_norm(&expect, idx);
            let b = lorentz_norm(&star, idx);
            assert!((a - b).abs() <= 1e-13 * b);
        }
    }

    #[test]
    fn scale_window_and_representability() {
        let u = bump(2);
        assert!(matches!(
            GroupElement::integer(25, &[0, 0]).act(&u),
            Err(Error::ScaleOutOfRange { j: 25, .. })
        ));
        let fine = GroupElement::new(0, DyadicVec::new(vec![1, 1], 40));
        assert!(matches!(fine.act(&u), Err(Error::Representability(_))));
    }

    #[test]
    fn json_shape() {
        let g = GroupElement::new(3, DyadicVec::new(vec![2, 6], 2));
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"j":3,"y_numerators":[1,3],"y_level":1}"#);
        assert_eq!(serde_json::from_str::<GroupElement>(&text).unwrap(), g);
    }
}
