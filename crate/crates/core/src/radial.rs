//! Radial step functions: value `v_m` on the shell `r_{m-1} < |x| <= r_m`,
//! with `r_0 = 0`, zero beyond the last radius.
//!
//! Measures, total variation (co-area over spheres), rearrangements, the
//! pairing `f0(u) = int u(x) / |x| dx` and integrals over axis-aligned cubes
//! are all closed forms (the three-dimensional cube integral uses adaptive
//! quadrature over slices of exact disk-rectangle areas).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_dim, CellBox, GridFunction, DEFAULT_MEMORY_GUARD};
use crate::rearrange::{decreasing_rearrangement, unit_ball_volume, Rearrangeable, StepFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialStep {
    dim: usize,
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialStep {
    /// Validates strictly increasing positive radii, merges neighbouring
    /// shells of equal value and drops trailing zero shells.
    pub fn new(dim: usize, radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if radii.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} radii for {} values",
                radii.len(),
                values.len()
            )));
        }
        let mut prev = 0.0;
        for &r in &radii {
            if !(r > prev) || !r.is_finite() {
                return Err(Error::Domain(format!(
                    "radii must be finite and strictly increasing from 0, got {radii:?}"
                )));
            }
            prev = r;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("shell values must be finite".into()));
        }
        let mut out_r: Vec<f64> = Vec::with_capacity(radii.len());
        let mut out_v: Vec<f64> = Vec::with_capacity(values.len());
        for (r, v) in radii.into_iter().zip(values) {
            if out_v.last() == Some(&v) {
                *out_r.last_mut().unwrap() = r;
            } else {
                out_r.push(r);
                out_v.push(v);
            }
        }
        while out_v.last() == Some(&0.0) {
            out_v.pop();
            out_r.pop();
        }
        Ok(Self {
            dim,
            radii: out_r,
            values: out_v,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            radii: Vec::new(),
            values: Vec::new(),
        }
    }

    /// The indicator of `1 < |x| <= 2`.
    pub fn annulus_indicator(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        Self::new(dim, vec![1.0, 2.0], vec![0.0, 1.0])
    }

    /// `(1/n) sum_{i=1}^n 2^{i(N-1)} phi(2^i x)` with `phi` the annulus
    /// indicator, assembled as a linear combination of its rescalings.
    pub fn staircase(dim: usize, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("the staircase needs n >= 1".into()));
        }
        let phi = Self::annulus_indicator(dim)?;
        let terms: Vec<Self> = (1..=n as i32).map(|i| phi.rescale_dyadic(i)).collect();
        let coefficients = vec![1.0 / n as f64; n as usize];
        Self::linear_combine(&coefficients, &terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn outer_radius(&self) -> f64 {
        self.radii.last().copied().unwrap_or(0.0)
    }

    /// `(r_in, r_out, value)` for every shell.
    pub fn shells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.radii
            .iter()
            .enumerate()
            .map(|(m, &r)| (if m == 0 { 0.0 } else { self.radii[m - 1] }, r, self.values[m]))
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        let m = self.radii.partition_point(|&x| x < r);
        self.values.get(m).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_radius(x.iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    /// `2^{i(N-1)} u(2^i x)`: radii divided by `2^i`, values multiplied by
    /// `2^{i(N-1)}`; exact in binary floating point.
    pub fn rescale_dyadic(&self, i: i32) -> Self {
        let r = 2f64.powi(-i);
        let v = 2f64.powi(i * (self.dim as i32 - 1));
        Self {
            dim: self.dim,
            radii: self.radii.iter().map(|x| x * r).collect(),
            values: self.values.iter().map(|x| x * v).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(self.dim);
        }
        Self {
            dim: self.dim,
            radii: self.radii.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Pointwise linear combination over the union of breakpoints.
    pub fn linear_combine(coefficients: &[f64], terms: &[Self]) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::Usage("linear combination of no terms".into()));
        };
        if coefficients.len() != terms.len() {
            return Err(Error::Usage(format!(
                "{} coefficients for {} terms",
                coefficients.len(),
                terms.len()
            )));
        }
        let dim = first.dim;
        if let Some(t) = terms.iter().find(|t| t.dim != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: t.dim,
            });
        }
        let mut radii: Vec<f64> = terms.iter().flat_map(|t| t.radii.iter().copied()).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let values = radii
            .iter()
            .map(|&r| {
                coefficients
                    .iter()
                    .zip(terms)
                    .map(|(c, t)| c * t.shell_value_ending_at(r))
                    .sum()
            })
            .collect();
        Self::new(dim, radii, values)
    }

    /// Value on the shell just inside radius `r` (left limit in `r`).
    fn shell_value_ending_at(&self, r: f64) -> f64 {
        let m = self.radii.partition_point(|&x| x < r);
        self.values.get(m).copied().unwrap_or(0.0)
    }

    fn ball_volume(&self, r: f64) -> f64 {
        unit_ball_volume(self.dim) * r.powi(self.dim as i32)
    }

    pub fn shell_measure(&self, m: usize) -> f64 {
        let r_in = if m == 0 { 0.0 } else { self.radii[m - 1] };
        self.ball_volume(self.radii[m]) - self.ball_volume(r_in)
    }

    pub fn support_measure(&self) -> f64 {
        (0..self.values.len())
            .filter(|&m| self.values[m] != 0.0)
            .map(|m| self.shell_measure(m))
            .fold(0.0, |a, b| a + b)
    }

    /// Co-area total variation `sum_m N |B_1| r_m^{N-1} |v_{m+1} - v_m|`.
    pub fn total_variation(&self) -> f64 {
        let sphere = self.dim as f64 * unit_ball_volume(self.dim);
        (0..self.values.len())
            .map(|m| {
                let outside = self.values.get(m + 1).copied().unwrap_or(0.0);
                sphere * self.radii[m].powi(self.dim as i32 - 1) * (outside - self.values[m]).abs()
            })
            .fold(0.0, |a, b| a + b)
    }

    /// `f0(u) = int u(x) / |x| dx
    ///        = sum_m v_m N |B_1| (r_m^{N-1} - r_{m-1}^{N-1}) / (N - 1)`.
    pub fn dual_pairing_f0(&self) -> Result<f64> {
        if self.dim < 2 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        let e = self.dim as i32 - 1;
        let c = self.dim as f64 * unit_ball_volume(self.dim) / e as f64;
        Ok(self
            .shells()
            .map(|(a, b, v)| v * c * (b.powi(e) - a.powi(e)))
            .sum())
    }

    pub fn to_stepfunction(&self) -> StepFunction {
        decreasing_rearrangement(self)
    }

    /// Cell-centre sampling on the level-`level` grid covering `[lo, hi]`.
    pub fn to_grid(&self, level: i32, lo: &[f64], hi: &[f64]) -> Result<GridFunction> {
        self.to_grid_guarded(level, lo, hi, DEFAULT_MEMORY_GUARD)
    }

    pub fn to_grid_guarded(&self, level: i32, lo: &[f64], hi: &[f64], limit: usize) -> Result<GridFunction> {
        let cells = CellBox::covering(lo, hi, level)?;
        if cells.cell_count() > limit as u128 {
            return Err(Error::ResourceLimit {
                cells: cells.cell_count(),
                limit,
            });
        }
        GridFunction::from_sampler(self.dim, level, lo, hi, |x| self.eval(x))
    }

    /// Sampling on the smallest centred box containing the support.
    pub fn to_grid_default(&self, level: i32) -> Result<GridFunction> {
        let r = self.outer_radius().max(cell_floor(level));
        self.to_grid(level, &vec![-r; self.dim], &vec![r; self.dim])
    }

    /// `int_Q |u|` over the box `Q = prod [lo_k, hi_k]`.
    pub fn box_integral_abs(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        if lo.len() != self.dim || hi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: lo.len(),
            });
        }
        let mut prev = 0.0;
        let mut total = 0.0;
        for (_, r, v) in self.shells() {
            let inside = ball_box_volume(self.dim, r, lo, hi);
            total += v.abs() * (inside - prev);
            prev = inside;
        }
        Ok(total)
    }

    /// Shells as CSV rows `r_in,r_out,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["r_in", "r_out", "value"])?;
        for (a, b, v) in self.shells() {
            out.serialize((a, b, v))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(dim: usize, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut radii = Vec::new();
        let mut values = Vec::new();
        let mut expected_in = 0.0;
        for row in rdr.deserialize() {
            let (r_in, r_out, v): (f64, f64, f64) = row?;
            if r_in != expected_in {
                return Err(Error::Domain(format!(
                    "shell starting at {r_in} does not continue the previous one ending at {expected_in}"
                )));
            }
            expected_in = r_out;
            radii.push(r_out);
            values.push(v);
        }
        Self::new(dim, radii, values)
    }

    /// JSON metadata accompanying the CSV shells.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "shells": self.values.len(),
            "outer_radius": self.outer_radius(),
            "total_variation": self.total_variation(),
            "support_measure": self.support_measure(),
        })
    }
}

fn cell_floor(level: i32) -> f64 {
    2f64.powi(-level)
}

impl Rearrangeable for RadialStep {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pieces(&self) -> Vec<(f64, f64)> {
        (0..self.values.len())
            .filter(|&m| self.values[m] != 0.0)
            .map(|m| (self.values[m].abs(), self.shell_measure(m)))
            .collect()
    }
}

/// `|B_r cap Q|` for a centred ball and an axis-aligned box.
pub fn ball_box_volume(dim: usize, r: f64, lo: &[f64], hi: &[f64]) -> f64 {
    if (0..dim).any(|k| hi[k] <= lo[k]) {
        return 0.0;
    }
    match dim {
        1 => (hi[0].min(r) - lo[0].max(-r)).max(0.0),
        2 => disk_rect_area(r, lo[0], hi[0], lo[1], hi[1]),
        3 => {
            let (z0, z1) = (lo[2].max(-r), hi[2].min(r));
            if z1 <= z0 {
                return 0.0;
            }
            let slice = |z: f64| {
                let rho = (r * r - z * z).max(0.0).sqrt();
                disk_rect_area(rho, lo[0], hi[0], lo[1], hi[1])
            };
            adaptive_simpson(&slice, z0, z1, 1e-13 * r.powi(3).max(1e-300), 40)
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// `int_0^t sqrt(r^2 - x^2) dx` for `0 <= t <= r`.
fn quarter_primitive(r: f64, t: f64) -> f64 {
    let t = t.min(r);
    0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).clamp(-1.0, 1.0).asin())
}

/// Area of the disk of radius `r` inside `[0, a] x [0, b]`, `a, b >= 0`.
fn quadrant_area(r: f64, a: f64, b: f64) -> f64 {
    let (a, b) = (a.min(r), b.min(r));
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    if a * a + b * b <= r * r {
        return a * b;
    }
    // the arc lies above height b for x < x_star
    let x_star = (r * r - b * b).max(0.0).sqrt().min(a);
    b * x_star + quarter_primitive(r, a) - quarter_primitive(r, x_star)
}

/// Signed version of [`quadrant_area`]: `int_0^x int_0^y 1_{disk}`.
fn signed_quadrant(r: f64, x: f64, y: f64) -> f64 {
    x.signum() * y.signum() * quadrant_area(r, x.abs(), y.abs())
}

/// `|D_r cap [x0, x1] x [y0, y1]|`.
pub fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let area = signed_quadrant(r, x1, y1) - signed_quadrant(r, x0, y1) - signed_quadrant(r, x1, y0)
        + signed_quadrant(r, x0, y0);
    area.max(0.0)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}
