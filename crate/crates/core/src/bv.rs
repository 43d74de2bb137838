//! Discrete total variation on dyadic grids.
//!
//! The isotropic forward-difference variation
//!
//! ```text
//! TV(u) = sum_x h^N sqrt( sum_k ((u(x + h e_k) - u(x)) / h)^2 )
//! ```
//!
//! is summed over base points `x` of the box extended by one cell on the
//! lower side of each axis, with `u` extended by zero. Restricting the sum
//! to base points inside a region gives `||Du||_Omega`; since a difference
//! read at a base point may reach one cell outside the region, neighbouring
//! cubes share boundary contributions.
//!
//! Sharp indicators converge to an anisotropic perimeter under refinement, so
//! exact Euclidean perimeters live in [`crate::radial`].

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{for_each_index, GridFunction, Region};
use crate::layers::{BrokenChi, TruncationProfile};
use crate::multiscale::DyadicSum;
use crate::rearrange::{critical_exponent, decreasing_rearrangement, lorentz_norm, LorentzIndex};

/// Visit each base point of the extended box with its gradient magnitude
/// (without the `h^{N-1}` factor).
fn for_each_base_point(u: &GridFunction, mut f: impl FnMut(&[i64], f64)) {
    let dim = u.dim();
    let origin: Vec<i64> = u.origin().iter().map(|o| o - 1).collect();
    let extents: Vec<usize> = u.extents().iter().map(|e| e + 1).collect();
    let mut neighbour = vec![0i64; dim];
    for_each_index(&origin, &extents, |idx| {
        let here = u.value_at(idx);
        let mut s = 0.0;
        for k in 0..dim {
            neighbour.copy_from_slice(idx);
            neighbour[k] += 1;
            let d = u.value_at(&neighbour) - here;
            s += d * d;
        }
        if s > 0.0 {
            f(idx, s.sqrt());
        }
    });
}

fn face_measure(u: &GridFunction) -> f64 {
    u.cell_width().powi(u.dim() as i32 - 1)
}

/// Isotropic discrete total variation `||Du||`.
pub fn total_variation(u: &GridFunction) -> f64 {
    let mut acc = 0.0;
    for_each_base_point(u, |_, g| acc += g);
    acc * face_measure(u)
}

/// The `W^{1,1}` seminorm `||grad u||_{L^1}`; for grid functions it coincides
/// with [`total_variation`].
pub fn grad_l1_norm(u: &GridFunction) -> f64 {
    total_variation(u)
}

/// Sum of patch variations. Patches of a [`DyadicSum`] are separated, so for
/// patches sharing a level this is the variation of the flattened function.
pub fn total_variation_sum(u: &DyadicSum) -> f64 {
    u.patches().iter().map(total_variation).fold(0.0, |a, b| a + b)
}

/// `||Du||_Omega`: the variation sum restricted to base points in `region`.
pub fn total_variation_on(u: &GridFunction, region: &Region) -> Result<f64> {
    if region.dim != u.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: region.dim,
        });
    }
    let refined;
    let u = if region.level > u.level() {
        refined = u.refine(region.level)?;
        &refined
    } else {
        u
    };
    let level = u.level();
    let mut acc = 0.0;
    for_each_base_point(u, |idx, g| {
        if region.contains_cell(idx, level) {
            acc += g;
        }
    });
    Ok(acc * face_measure(u))
}

/// `||u||_{BV(Omega)} = ||Du||_Omega + ||u||_{L^1(Omega)}`.
pub fn bv_norm(u: &GridFunction, region: &Region) -> Result<f64> {
    Ok(total_variation_on(u, region)? + u.restrict(region)?.l1_norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeVariation {
    pub cube: Vec<i64>,
    pub tv: f64,
}

/// Variation over the integer lattice of unit cubes `(0,1)^N + y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TVReport {
    pub total: f64,
    pub per_cube: Vec<CubeVariation>,
    /// `3^N * total`
    pub splitting_bound: f64,
    pub sum_per_cube: f64,
}

impl TVReport {
    pub fn bound_holds(&self) -> bool {
        self.sum_per_cube <= self.splitting_bound * (1.0 + 1e-9)
    }

    pub fn write_per_cube_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let dim = self.per_cube.first().map_or(0, |c| c.cube.len());
        let mut header: Vec<String> = (0..dim).map(|a| format!("y{a}")).collect();
        header.push("tv".into());
        out.write_record(&header)?;
        for c in &self.per_cube {
            let mut row: Vec<String> = c.cube.iter().map(i64::to_string).collect();
            row.push(c.tv.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn lattice_tv_sum(u: &GridFunction) -> Result<TVReport> {
    let refined;
    let u = if u.level() < 0 {
        refined = u.refine(0)?;
        &refined
    } else {
        u
    };
    let shift = u.level() as u32;
    let face = face_measure(u);
    let mut total = 0.0;
    let mut cubes: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for_each_base_point(u, |idx, g| {
        total += g;
        let cube: Vec<i64> = idx.iter().map(|&i| i >> shift).collect();
        *cubes.entry(cube).or_insert(0.0) += g;
    });
    let total = total * face;
    let per_cube: Vec<CubeVariation> = cubes
        .into_iter()
        .map(|(cube, g)| CubeVariation { cube, tv: g * face })
        .collect();
    let sum_per_cube = per_cube.iter().map(|c| c.tv).fold(0.0, |a, b| a + b);
    Ok(TVReport {
        total,
        splitting_bound: 3f64.powi(u.dim() as i32) * total,
        per_cube,
        sum_per_cube,
    })
}

/// A scalar map `R -> R` with a known Lipschitz bound on its derivative.
pub trait ScalarMap: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, t: f64) -> f64;
    /// Claimed `||phi'||_inf`.
    fn derivative_bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl ScalarMap for Identity {
    fn name(&self) -> &str {
        "identity"
    }
    fn eval(&self, t: f64) -> f64 {
        t
    }
    fn derivative_bound(&self) -> f64 {
        1.0
    }
}

/// `t -> c t`.
#[derive(Debug, Clone)]
pub struct Linear {
    name: String,
    slope: f64,
}

impl Linear {
    pub fn new(slope: f64) -> Self {
        Self {
            name: format!("linear({slope})"),
            slope,
        }
    }

    pub fn half() -> Self {
        Self {
            name: "half".into(),
            slope: 0.5,
        }
    }
}

impl ScalarMap for Linear {
    fn name(&self) -> &str {
        &self.name
    }
    fn eval(&self, t: f64) -> f64 {
        self.slope * t
    }
    fn derivative_bound(&self) -> f64 {
        self.slope.abs()
    }
}

/// `3t^2 - 2t^3` on `[0, 1]`, clamped to 0 below and 1 above.
#[derive(Debug, Clone, Copy)]
pub struct Smoothstep;

impl ScalarMap for Smoothstep {
    fn name(&self) -> &str {
        "smoothstep"
    }
    fn eval(&self, t: f64) -> f64 {
        let s = t.clamp(0.0, 1.0);
        s * s * (3.0 - 2.0 * s)
    }
    fn derivative_bound(&self) -> f64 {
        1.5
    }
}

/// Names accepted by [`scalar_map`].
pub const SCALAR_MAP_NAMES: &[&str] = &["identity", "half", "smoothstep", "chi", "chi-broken"];

/// Look a scalar map up by name. `dim` selects the truncation profile for
/// `chi` and its deliberately mis-specified variant `chi-broken`.
pub fn scalar_map(name: &str, dim: usize) -> Result<Box<dyn ScalarMap>> {
    Ok(match name {
        "identity" => Box::new(Identity),
        "half" => Box::new(Linear::half()),
        "smoothstep" => Box::new(Smoothstep),
        "chi" => Box::new(TruncationProfile::build(dim)?),
        "chi-broken" => Box::new(BrokenChi::new(TruncationProfile::build(dim)?)),
        other => return Err(Error::UnknownMap(other.to_string())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub map: String,
    pub derivative_bound: f64,
    pub tv_input: f64,
    pub tv_composed: f64,
    /// `||phi'||_inf * TV(u)`
    pub bound: f64,
    /// `TV(phi o u) / TV(u)`, absent when `TV(u) = 0`.
    pub ratio: Option<f64>,
    pub holds: bool,
}

/// `phi o u` together with the chain-rule comparison
/// `TV(phi o u) <= ||phi'||_inf TV(u)`. The constant is the sup of the
/// derivative, not of `phi` itself: a bounded `phi` can still stretch jumps.
pub fn compose_scalar(phi: &dyn ScalarMap, u: &GridFunction) -> Result<(GridFunction, ChainReport)> {
    let at_zero = phi.eval(0.0);
    if at_zero != 0.0 {
        return Err(Error::SupportViolation {
            name: phi.name().to_string(),
            value: at_zero,
        });
    }
    let composed = u.map(|v| phi.eval(v));
    let tv_input = total_variation(u);
    let tv_composed = total_variation(&composed);
    let bound = phi.derivative_bound() * tv_input;
    let report = ChainReport {
        map: phi.name().to_string(),
        derivative_bound: phi.derivative_bound(),
        tv_input,
        tv_composed,
        bound,
        ratio: (tv_input > 0.0).then(|| tv_composed / tv_input),
        holds: tv_composed <= bound * (1.0 + 1e-9),
    };
    Ok((composed, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvEmbeddingAudit {
    pub q: f64,
    /// `||u||_{L^{1*,q}(Omega)}`
    pub lorentz_q: f64,
    /// `||u||_{L^{1*,1}(Omega)}`
    pub lorentz_1: f64,
    /// `||u||_{BV(Omega)}`
    pub bv_norm: f64,
    /// `lorentz_q <= lorentz_1`
    pub monotone_holds: bool,
    /// `lorentz_1 / bv_norm`, the empirical embedding constant.
    pub embedding_ratio: Option<f64>,
}

/// `||u||_{L^{1*,q}(Omega)} <= ||u||_{L^{1*,1}(Omega)} <= C ||u||_{BV(Omega)}`:
/// checks the first inequality and records the ratio in the second.
pub fn embedding_audit_bv(u: &GridFunction, region: &Region, q: f64) -> Result<BvEmbeddingAudit> {
    if u.dim() < 2 {
        return Err(Error::Index("the BV to Lorentz embedding needs N >= 2".into()));
    }
    if !(q >= 1.0) {
        return Err(Error::Index(format!("q must lie in [1, inf], got {q}")));
    }
    let p = critical_exponent(u.dim());
    let star = decreasing_rearrangement(&u.restrict(region)?);
    let lorentz_q = lorentz_norm(&star, LorentzIndex::new(p, q)?);
    let lorentz_1 = lorentz_norm(&star, LorentzIndex::new(p, 1.0)?);
    let bv = bv_norm(u, region)?;
    Ok(BvEmbeddingAudit {
        q,
        lorentz_q,
        lorentz_1,
        bv_norm: bv,
        monotone_holds: lorentz_q <= lorentz_1 * (1.0 + 1e-12),
        embedding_ratio: (bv > 0.0).then(|| lorentz_1 / bv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellBox;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_interval(level: i32) -> GridFunction {
        GridFunction::from_sampler(1, level, &[0.0], &[1.0], |_| 1.0).unwrap()
    }

    fn annulus(level: i32) -> GridFunction {
        GridFunction::from_sampler(2, level, &[-2.0, -2.0], &[2.0, 2.0], |x| {
            let r = x[0].hypot(x[1]);
            if r > 1.0 && r <= 2.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    /// Face-count (anisotropic) perimeter of a 2-D 0/1 grid.
    fn face_count_perimeter(u: &GridFunction) -> f64 {
        let mut faces = 0usize;
        let o = u.origin();
        let e = u.extents();
        for i in o[0] - 1..o[0] + e[0] as i64 {
            for j in o[1] - 1..o[1] + e[1] as i64 {
                let here = u.value_at(&[i, j]);
                faces += (here != u.value_at(&[i + 1, j])) as usize;
                faces += (here != u.value_at(&[i, j + 1])) as usize;
            }
        }
        faces as f64 * u.cell_width()
    }

    #[test]
    fn zero_and_one_dimensional_steps() {
        let z = GridFunction::zeros(2, CellBox::new(vec![0, 0], vec![3, 3]).unwrap());
        assert_eq!(total_variation(&z), 0.0);
        for level in [0, 3, 7] {
            assert_eq!(total_variation(&unit_interval(level)), 2.0);
            assert_eq!(grad_l1_norm(&unit_interval(level)), 2.0);
        }
    }

    #[test]
    fn single_cell_has_isotropic_corner() {
        let u = GridFunction::new(0, CellBox::new(vec![0, 0], vec![1, 1]).unwrap(), vec![1.0]).unwrap();
        assert_relative_eq!(total_variation(&u), 2.0 + 2f64.sqrt());
    }

    #[test]
    fn annulus_variation_is_stable_and_between_face_bounds() {
        let coarse = total_variation(&annulus(7));
        let fine = total_variation(&annulus(8));
        assert!((coarse - fine).abs() / fine < 0.01, "{coarse} vs {fine}");
        let faces = face_count_perimeter(&annulus(7));
        assert!(coarse <= faces && coarse >= faces / 2f64.sqrt());
        // the Euclidean perimeter 6 pi sits below the discrete value
        assert!(coarse > 6.0 * PI);
    }

    #[test]
    fn restricted_variation() {
        let u = annulus(5);
        assert_eq!(total_variation_on(&u, &Region::everything(2)).unwrap(), total_variation(&u));
        let far = Region::cube(0, vec![10, 10], 2);
        assert_eq!(total_variation_on(&u, &far).unwrap(), 0.0);
        let line = GridFunction::from_sampler(1, 0, &[0.0], &[1.0], |_| 1.0).unwrap();
        assert!(matches!(
            total_variation_on(&line, &Region::unit_cube(&[0, 0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lattice_sum_matches_per_cube_restrictions() {
        let u = annulus(4).translate_cells(&[3, -5]);
        let report = lattice_tv_sum(&u).unwrap();
        assert!(report.bound_holds());
        for c in &report.per_cube {
            let direct = total_variation_on(&u, &Region::unit_cube(&c.cube)).unwrap();
            assert_relative_eq!(direct, c.tv, max_relative = 1e-14);
        }
        assert_relative_eq!(report.sum_per_cube, report.total, max_relative = 1e-12);
    }

    #[test]
    fn lattice_sum_inside_one_cube() {
        let u = GridFunction::from_sampler(2, 4, &[0.25, 0.25], &[0.75, 0.5], |_| 1.0).unwrap();
        let report = lattice_tv_sum(&u).unwrap();
        // the lower-side base points fall in the same cube
        assert_eq!(report.per_cube.len(), 1);
        assert_eq!(report.sum_per_cube, report.total);
        assert!(report.splitting_bound / report.sum_per_cube >= 1.0);
    }

    #[test]
    fn lattice_map_translates_with_the_function() {
        let u = annulus(4);
        let shifted = u.translate_cells(&[2 * 16, -16]);
        let a = lattice_tv_sum(&u).unwrap();
        let b = lattice_tv_sum(&shifted).unwrap();
        assert_eq!(a.per_cube.len(), b.per_cube.len());
        for (x, y) in a.per_cube.iter().zip(&b.per_cube) {
            assert_eq!(vec![x.cube[0] + 2, x.cube[1] - 1], y.cube);
            assert_eq!(x.tv, y.tv);
        }
    }

    #[test]
    fn bv_norm_examples() {
        let z = GridFunction::zeros(1, CellBox::new(vec![0], vec![4]).unwrap());
        assert_eq!(bv_norm(&z, &Region::everything(1)).unwrap(), 0.0);
        let u = unit_interval(3);
        let region = Region::cube(0, vec![-1], 3);
        assert_eq!(bv_norm(&u, &region).unwrap(), 3.0);
        let a = annulus(6);
        let norm = bv_norm(&a, &Region::everything(2)).unwrap();
        let area = norm - total_variation(&a);
        assert!((area - 3.0 * PI).abs() / (3.0 * PI) < 0.03);
    }

    #[test]
    fn chain_rule_examples() {
        let u = annulus(5).map(|v| 1.5 * v);
        let (same, id) = compose_scalar(&Identity, &u).unwrap();
        assert_eq!(same, u);
        assert_eq!(id.tv_composed, id.bound);
        let (_, half) = compose_scalar(&Linear::half(), &u).unwrap();
        assert_eq!(half.tv_composed, 0.5 * half.tv_input);
        assert!(half.holds);
        let (_, s) = compose_scalar(&Smoothstep, &u).unwrap();
        assert!(s.holds);
    }

    #[test]
    fn chain_rule_rejects_maps_moving_zero() {
        struct Shift;
        impl ScalarMap for Shift {
            fn name(&self) -> &str {
                "shift"
            }
            fn eval(&self, t: f64) -> f64 {
                t + 1.0
            }
            fn derivative_bound(&self) -> f64 {
                1.0
            }
        }
        assert!(matches!(
            compose_scalar(&Shift, &annulus(3)),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn scalar_map_registry() {
        for name in SCALAR_MAP_NAMES {
            let m = scalar_map(name, 2).unwrap();
            assert_eq!(m.name(), *name);
            assert_eq!(m.eval(0.0), 0.0);
        }
        assert!(matches!(scalar_map("tanh", 2), Err(Error::UnknownMap(_))));
    }

    #[test]
    fn bv_embedding_audit() {
        let u = annulus(5);
        let audit = embedding_audit_bv(&u, &Region::cube(0, vec![-2, -2], 4), 1.5).unwrap();
        assert!(audit.monotone_holds);
        assert!(audit.embedding_ratio.unwrap() > 0.0);
        assert!(matches!(
            embedding_audit_bv(&unit_interval(2), &Region::everything(1), 1.5),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            embedding_audit_bv(&u, &Region::everything(2), 0.5),
            Err(Error::Index(_))
        ));
    }
}
