//! Truncation layers: the profile `chi`, its rescalings `chi_j`, the value
//! bands `A_j`, `B_j`, the four colour classes and the layer energy audit.
//!
//! `chi` vanishes outside `(a, b)` with `a = 2^{-(N-1)}`, `b = 4^{N-1}`, is the
//! identity on `[1, c]` with `c = 2^{N-1}`, and is joined to the plateau by
//! cubic Hermite ramps matching value and slope at both ends, so it is `C^1`
//! and its derivative bound has a closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bv::{total_variation, total_variation_on, ScalarMap};
use crate::error::{Error, Result};
use crate::grid::{CellMask, GridFunction, Region};
use crate::rearrange::{critical_exponent, lorentz_norm_of, LorentzIndex};

/// Reach of the active scale range beyond the bands met by the values.
pub const BAND_REACH: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationProfile {
    pub dim: usize,
    /// Lower support endpoint `a`.
    pub lower: f64,
    /// Upper support endpoint `b`.
    pub upper: f64,
    /// End of the identity plateau `[1, c]`.
    pub plateau_end: f64,
    pub derivative_bound: f64,
}

impl TruncationProfile {
    pub fn build(dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let e = dim as i32 - 1;
        let lower = 2f64.powi(-e);
        let upper = 4f64.powi(e);
        let plateau_end = 2f64.powi(e);
        let mut p = Self {
            dim,
            lower,
            upper,
            plateau_end,
            derivative_bound: 0.0,
        };
        p.derivative_bound = p.up_slope_max().max(p.down_slope_max()).max(1.0);
        Ok(p)
    }

    fn up_width(&self) -> f64 {
        1.0 - self.lower
    }

    fn down_width(&self) -> f64 {
        self.upper - self.plateau_end
    }

    /// Largest slope of the rising ramp; attained inside the ramp.
    fn up_slope_max(&self) -> f64 {
        let w = self.up_width();
        (3.0 - w).powi(2) / (3.0 * (2.0 - w)) / w
    }

    /// Largest `|slope|` of the falling ramp: at its start (slope 1) or at
    /// the interior minimum of the quadratic derivative.
    fn down_slope_max(&self) -> f64 {
        let c = self.plateau_end;
        let w = self.down_width();
        let alpha = 2.0 * c + w;
        let s = (4.0 * alpha - 2.0 * c) / (6.0 * alpha);
        let slope = 3.0 * alpha * s * s + (2.0 * c - 4.0 * alpha) * s + (alpha - 2.0 * c);
        (slope.abs() / w).max(1.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.lower || t >= self.upper {
            0.0
        } else if t < 1.0 {
            let w = self.up_width();
            let s = (t - self.lower) / w;
            s * s * ((3.0 - w) - (2.0 - w) * s)
        } else if t <= self.plateau_end {
            t
        } else {
            let c = self.plateau_end;
            let w = self.down_width();
            let s = (t - c) / w;
            (s - 1.0) * (s - 1.0) * (c * (2.0 * s + 1.0) + w * s)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.lower || t >= self.upper {
            0.0
        } else if t < 1.0 {
            let w = self.up_width();
            let s = (t - self.lower) / w;
            (2.0 * (3.0 - w) * s - 3.0 * (2.0 - w) * s * s) / w
        } else if t <= self.plateau_end {
            1.0
        } else {
            let c = self.plateau_end;
            let w = self.down_width();
            let alpha = 2.0 * c + w;
            let s = (t - c) / w;
            (3.0 * alpha * s * s + (2.0 * c - 4.0 * alpha) * s + (alpha - 2.0 * c)) / w
        }
    }

    /// `chi_j(t) = 2^{(N-1) j} chi(2^{-(N-1) j} |t|)`.
    pub fn rescaled(&self, j: i32) -> RescaledTruncation {
        RescaledTruncation {
            profile: self.clone(),
            j,
            name: format!("chi_{j}"),
        }
    }

    fn band_base(&self) -> f64 {
        2f64.powi(self.dim as i32 - 1)
    }
}

impl ScalarMap for TruncationProfile {
    fn name(&self) -> &str {
        "chi"
    }
    fn eval(&self, t: f64) -> f64 {
        TruncationProfile::eval(self, t)
    }
    fn derivative_bound(&self) -> f64 {
        self.derivative_bound
    }
}

/// `chi_j` as a scalar map. The derivative bound is the one of `chi`: the
/// rescaling multiplies values and arguments by the same power of two.
#[derive(Debug, Clone)]
pub struct RescaledTruncation {
    profile: TruncationProfile,
    j: i32,
    name: String,
}

impl RescaledTruncation {
    fn factor(&self) -> f64 {
        self.profile.band_base().powi(self.j)
    }
}

impl ScalarMap for RescaledTruncation {
    fn name(&self) -> &str {
        &self.name
    }
    fn eval(&self, t: f64) -> f64 {
        let f = self.factor();
        f * self.profile.eval(t.abs() / f)
    }
    fn derivative_bound(&self) -> f64 {
        self.profile.derivative_bound
    }
}

/// `chi` with an understated derivative bound, used as a negative control.
#[derive(Debug, Clone)]
pub struct BrokenChi {
    profile: TruncationProfile,
}

impl BrokenChi {
    pub const CLAIMED_BOUND: f64 = 0.25;

    pub fn new(profile: TruncationProfile) -> Self {
        Self { profile }
    }
}

impl ScalarMap for BrokenChi {
    fn name(&self) -> &str {
        "chi-broken"
    }
    fn eval(&self, t: f64) -> f64 {
        self.profile.eval(t)
    }
    fn derivative_bound(&self) -> f64 {
        Self::CLAIMED_BOUND
    }
}

/// Pointwise `chi_j(|u|)`.
pub fn chi_j(profile: &TruncationProfile, j: i32, u: &GridFunction) -> Result<GridFunction> {
    if profile.dim != u.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: profile.dim,
        });
    }
    let chi = profile.rescaled(j);
    Ok(u.map(|v| chi.eval(v)))
}

fn band_mask(u: &GridFunction, lo: f64, hi: f64) -> Region {
    let bits = u
        .values()
        .iter()
        .map(|v| {
            let a = v.abs();
            lo <= a && a < hi
        })
        .collect();
    Region::mask(
        u.level(),
        CellMask {
            cells: u.cell_box().clone(),
            bits,
        },
    )
}

fn base(u: &GridFunction) -> Result<f64> {
    if u.dim() < 2 {
        return Err(Error::UnsupportedDimension(u.dim()));
    }
    Ok(2f64.powi(u.dim() as i32 - 1))
}

/// Cells with `2^{(N-1) j} <= |u| < 2^{(N-1)(j+1)}`.
pub fn level_set_a(u: &GridFunction, j: i32) -> Result<Region> {
    let b = base(u)?;
    Ok(band_mask(u, b.powi(j), b.powi(j + 1)))
}

/// Cells with `2^{(N-1)(j-1)} <= |u| < 2^{(N-1)(j+2)}`.
pub fn level_set_b(u: &GridFunction, j: i32) -> Result<Region> {
    let b = base(u)?;
    Ok(band_mask(u, b.powi(j - 1), b.powi(j + 2)))
}

/// Colour class `m in {1, 2, 3, 4}` with `J_m = {j : j = m - 1 mod 4}`.
pub fn color_class(j: i32) -> u8 {
    j.rem_euclid(4) as u8 + 1
}

/// Whether `chi_j(u)` and `chi_j'(u)` have disjoint supports, for two
/// distinct scales of the same colour.
pub fn support_disjointness_check(
    profile: &TruncationProfile,
    u: &GridFunction,
    j: i32,
    j_other: i32,
) -> Result<bool> {
    if j == j_other || color_class(j) != color_class(j_other) {
        return Err(Error::Usage(format!(
            "disjointness is asserted for distinct scales of one colour, got {j} and {j_other}"
        )));
    }
    let a = chi_j(profile, j, u)?;
    let b = chi_j(profile, j_other, u)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| *x == 0.0 || *y == 0.0))
}

/// Scales whose `B` band meets a nonzero value of `u`, widened by
/// [`BAND_REACH`] on each side; empty for the zero function.
pub fn active_scales(u: &GridFunction) -> Vec<i32> {
    let e = (u.dim() as f64 - 1.0).max(1.0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in u.values() {
        let a = v.abs();
        if a > 0.0 {
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    if hi == 0.0 {
        return Vec::new();
    }
    let first = (lo.log2() / e).floor() as i32 - BAND_REACH;
    let last = (hi.log2() / e).floor() as i32 + BAND_REACH;
    (first..=last).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub j: i32,
    pub color: u8,
    /// `||Du||_{B_j}`
    pub tv_b: f64,
    /// `||chi_j(u)||_{L^{1*,q}(A_j)}`
    pub layer_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergyReport {
    pub q: f64,
    /// `||u||_{1*,q}^q`
    pub lorentz_pow: f64,
    pub tv: f64,
    /// `sup_j ||chi_j(u)||_{L^{1*,q}(A_j)}^{q-1}`
    pub sup_layer_pow: f64,
    pub sum_tv_b: f64,
    /// `sum_j ||Du||_{B_j} <= 4 ||Du||`
    pub overlap_holds: bool,
    /// `lorentz_pow / (tv * sup_layer_pow)`, when defined.
    pub empirical_constant: Option<f64>,
    pub layers: Vec<LayerRow>,
}

pub fn layer_energy_audit(profile: &TruncationProfile, u: &GridFunction, q: f64) -> Result<LayerEnergyReport> {
    let p = critical_exponent(u.dim());
    if !(q > 1.0 && q <= p) {
        return Err(Error::Index(format!("q must lie in (1, {p}], got {q}")));
    }
    let idx = LorentzIndex::new(p, q)?;
    let layers = active_scales(u)
        .into_par_iter()
        .map(|j| -> Result<LayerRow> {
            let a = level_set_a(u, j)?;
            let b = level_set_b(u, j)?;
            let layer = chi_j(profile, j, u)?.restrict(&a)?;
            Ok(LayerRow {
                j,
                color: color_class(j),
                tv_b: total_variation_on(u, &b)?,
                layer_norm: lorentz_norm_of(&layer, idx),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lorentz_pow = lorentz_norm_of(u, idx).powf(q);
    let tv = total_variation(u);
    let sup_layer_pow = layers
        .iter()
        .map(|l| l.layer_norm.powf(q - 1.0))
        .fold(0.0, f64::max);
    let sum_tv_b: f64 = layers.iter().map(|l| l.tv_b).fold(0.0, |a, b| a + b);
    let denom = tv * sup_layer_pow;
    Ok(LayerEnergyReport {
        q,
        lorentz_pow,
        tv,
        sup_layer_pow,
        sum_tv_b,
        overlap_holds: sum_tv_b <= 4.0 * tv * (1.0 + 1e-6),
        empirical_constant: (denom > 0.0).then(|| lorentz_pow / denom),
        layers,
    })
}
