//! Distribution functions, decreasing and Schwarz rearrangements, and the
//! Lorentz and Lebesgue norms built on them.
//!
//! Everything here is exact up to floating-point rounding: the functions we
//! handle are piecewise constant, so `u*` is a finite non-increasing step
//! function obtained by sorting the pieces, and the Lorentz integral
//! `int_0^inf (t^{1/p} u*(t))^q dt/t` is a finite sum of closed-form chunk
//! integrals.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Volume of the unit ball in `R^N`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unit ball volume requested for unsupported dimension {dim}"),
    }
}

/// The Sobolev conjugate `1* = N/(N-1)` of 1; infinite for `N = 1`.
pub fn critical_exponent(dim: usize) -> f64 {
    if dim <= 1 {
        f64::INFINITY
    } else {
        dim as f64 / (dim as f64 - 1.0)
    }
}

/// Anything that can be presented as a finite family of constant pieces,
/// each with an absolute value and a Lebesgue measure.
pub trait Rearrangeable {
    fn dim(&self) -> usize;

    /// `(|value|, measure)` for every piece with nonzero value.
    fn pieces(&self) -> Vec<(f64, f64)>;

    /// `|{x : |u(x)| > lambda}|`.
    fn distribution_function(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!(
                "distribution function needs lambda >= 0, got {lambda}"
            )));
        }
        Ok(self
            .pieces()
            .iter()
            .filter(|(v, _)| *v > lambda)
            .map(|(_, m)| m)
            .sum())
    }
}

impl Rearrangeable for GridFunction {
    fn dim(&self) -> usize {
        GridFunction::dim(self)
    }

    fn pieces(&self) -> Vec<(f64, f64)> {
        let m = self.cell_measure();
        self.values()
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| (v.abs(), m))
            .collect()
    }

    fn distribution_function(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!(
                "distribution function needs lambda >= 0, got {lambda}"
            )));
        }
        let count = self.values().iter().filter(|v| v.abs() > lambda).count();
        Ok(count as f64 * self.cell_measure())
    }
}

/// One constant piece of a non-increasing step function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub value: f64,
    pub measure: f64,
}

/// A non-increasing right-continuous step function on `(0, total_measure)`,
/// zero afterwards. Values are strictly decreasing from chunk to chunk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepFunction {
    chunks: Vec<Chunk>,
}

impl StepFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Validate an already ordered chunk list.
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        for c in &chunks {
            if !(c.value > 0.0 && c.value.is_finite()) {
                return Err(Error::Domain(format!("chunk value {} must be positive", c.value)));
            }
            if !(c.measure > 0.0 && c.measure.is_finite()) {
                return Err(Error::Domain(format!(
                    "chunk measure {} must be positive and finite",
                    c.measure
                )));
            }
        }
        if chunks.windows(2).any(|w| w[1].value >= w[0].value) {
            return Err(Error::Domain("chunk values must be strictly decreasing".into()));
        }
        Ok(Self { chunks })
    }

    /// Sort arbitrary `(|value|, measure)` pieces and merge equal values.
    pub fn from_pieces(mut pieces: Vec<(f64, f64)>) -> Self {
        pieces.retain(|(v, m)| *v != 0.0 && *m > 0.0);
        for p in &mut pieces {
            p.0 = p.0.abs();
        }
        pieces.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        let mut chunks: Vec<Chunk> = Vec::new();
        for (value, measure) in pieces {
            match chunks.last_mut() {
                Some(last) if last.value == value => last.measure += measure,
                _ => chunks.push(Chunk { value, measure }),
            }
        }
        Self { chunks }
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn is_zero(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn total_measure(&self) -> f64 {
        self.chunks.iter().map(|c| c.measure).sum()
    }

    /// Right endpoints `T_1 < T_2 < ...` of the chunks.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.chunks
            .iter()
            .map(|c| {
                t += c.measure;
                t
            })
            .collect()
    }

    /// `u*(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let mut end = 0.0;
        for c in &self.chunks {
            end += c.measure;
            if t < end {
                return c.value;
            }
        }
        0.0
    }

    /// Multiply values by `value_factor` and measures by `measure_factor`.
    pub fn rescaled(&self, value_factor: f64, measure_factor: f64) -> Self {
        let value_factor = value_factor.abs();
        if value_factor == 0.0 {
            return Self::zero();
        }
        Self {
            chunks: self
                .chunks
                .iter()
                .map(|c| Chunk {
                    value: c.value * value_factor,
                    measure: c.measure * measure_factor,
                })
                .collect(),
        }
    }

    /// Chunks as CSV rows `value,measure,cumulative_measure`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["value", "measure", "cumulative_measure"])?;
        let mut t = 0.0;
        for c in &self.chunks {
            t += c.measure;
            out.serialize((c.value, c.measure, t))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut chunks = Vec::new();
        for row in rdr.deserialize() {
            let (value, measure, _cumulative): (f64, f64, f64) = row?;
            chunks.push(Chunk { value, measure });
        }
        Self::new(chunks)
    }
}

impl Rearrangeable for StepFunction {
    /// A step function on `(0, inf)` is one-dimensional.
    fn dim(&self) -> usize {
        1
    }

    fn pieces(&self) -> Vec<(f64, f64)> {
        self.chunks.iter().map(|c| (c.value, c.measure)).collect()
    }
}

pub fn decreasing_rearrangement<U: Rearrangeable + ?Sized>(u: &U) -> StepFunction {
    StepFunction::from_pieces(u.pieces())
}

/// `u^#` as a step function of the radius: chunk measures are replaced by
/// radial widths so that `u^#(r) = u*(|B_1| r^N)`.
pub fn schwarz_profile<U: Rearrangeable + ?Sized>(u: &U) -> StepFunction {
    let dim = u.dim();
    let star = decreasing_rearrangement(u);
    let ball = unit_ball_volume(dim);
    let mut prev_radius = 0.0;
    let chunks = star
        .cumulative()
        .into_iter()
        .zip(star.chunks())
        .map(|(t, c)| {
            let r = (t / ball).powf(1.0 / dim as f64);
            let width = r - prev_radius;
            prev_radius = r;
            Chunk {
                value: c.value,
                measure: width,
            }
        })
        .collect();
    StepFunction { chunks }
}

/// Support radius of the symmetrization of a set of measure `m`.
pub fn symmetrization_radius(measure: f64, dim: usize) -> f64 {
    (measure / unit_ball_volume(dim)).powf(1.0 / dim as f64)
}

/// Lorentz exponent pair `(p, q)`, `q` possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzIndex {
    pub p: f64,
    pub q: f64,
}

impl LorentzIndex {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Index(format!("p must lie in (0, inf), got {p}")));
        }
        if !(q > 0.0) {
            return Err(Error::Index(format!("q must lie in (0, inf], got {q}")));
        }
        Ok(Self { p, q })
    }

    /// `(1*, q)` for dimension `N >= 2`.
    pub fn critical(dim: usize, q: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Index("the critical exponent needs N >= 2".into()));
        }
        Self::new(critical_exponent(dim), q)
    }
}

/// `b^a - c^a` for `0 <= c < b`, written to avoid cancellation when `c` is
/// close to `b`.
fn power_increment(c: f64, b: f64, a: f64) -> f64 {
    if c <= 0.0 {
        return b.powf(a);
    }
    -b.powf(a) * (a * (c / b).ln()).exp_m1()
}

/// `||u||_{p,q} = ( int_0^inf (t^{1/p} u*(t))^q dt/t )^{1/q}` evaluated chunk
/// by chunk: `sum_i v_i^q (p/q) (T_i^{q/p} - T_{i-1}^{q/p})`. For `q = inf`
/// this is the weak norm.
pub fn lorentz_norm(star: &StepFunction, idx: LorentzIndex) -> f64 {
    if idx.q.is_infinite() {
        return lorentz_norm_weak(star, idx.p);
    }
    let (p, q) = (idx.p, idx.q);
    let a = q / p;
    let mut prev = 0.0;
    let mut sum = 0.0;
    for c in &star.chunks {
        let t = prev + c.measure;
        sum += c.value.powf(q) * power_increment(prev, t, a);
        prev = t;
    }
    ((p / q) * sum).powf(1.0 / q)
}

/// `sup_t t^{1/p} u*(t)`, attained at a right chunk endpoint.
pub fn lorentz_norm_weak(star: &StepFunction, p: f64) -> f64 {
    let mut t = 0.0;
    let mut best: f64 = 0.0;
    for c in &star.chunks {
        t += c.measure;
        best = best.max(c.value * t.powf(1.0 / p));
    }
    best
}

/// The symmetrization form
/// `|B_1|^{(q-p)/(pq)} ( int (|x|^{N/p} u^#(|x|))^q dx/|x|^N )^{1/q}`,
/// integrated in polar coordinates over the radial chunks of `u^#`:
/// `N |B_1| int r^{Nq/p - 1} u^#(r)^q dr`.
pub fn lorentz_norm_symmetrization(star: &StepFunction, dim: usize, idx: LorentzIndex) -> f64 {
    let ball = unit_ball_volume(dim);
    let n = dim as f64;
    let (p, q) = (idx.p, idx.q);
    let mut radius = 0.0;
    let mut t = 0.0;
    if q.is_infinite() {
        let mut best: f64 = 0.0;
        for c in &star.chunks {
            t += c.measure;
            radius = (t / ball).powf(1.0 / n);
            best = best.max(c.value * radius.powf(n / p));
        }
        return ball.powf(1.0 / p) * best;
    }
    let a = n * q / p;
    let mut integral = 0.0;
    for c in &star.chunks {
        t += c.measure;
        let r = (t / ball).powf(1.0 / n);
        // N |B_1| int_{r0}^{r} s^{a-1} ds = N |B_1| (r^a - r0^a) / a
        integral += c.value.powf(q) * n * ball * power_increment(radius, r, a) / a;
        radius = r;
    }
    ball.powf((q - p) / (p * q)) * integral.powf(1.0 / q)
}

/// `( sum measure |v|^p )^{1/p}`, or the essential sup for `p = inf`.
pub fn lebesgue_norm<U: Rearrangeable + ?Sized>(u: &U, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Index(format!("Lebesgue exponent must be >= 1, got {p}")));
    }
    let pieces = u.pieces();
    if p.is_infinite() {
        return Ok(pieces.iter().fold(0.0, |m, (v, _)| m.max(*v)));
    }
    let s: f64 = pieces.iter().map(|(v, m)| m * v.powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// Convenience: `||u||_{p,q}` directly from a rearrangeable function.
pub fn lorentz_norm_of<U: Rearrangeable + ?Sized>(u: &U, idx: LorentzIndex) -> f64 {
    lorentz_norm(&decreasing_rearrangement(u), idx)
}

/// Norms on both sides of a nested inclusion `L^{p2,q2} in L^{p1,q1}` on a
/// set of finite measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedAudit {
    pub small_index: LorentzIndex,
    pub large_index: LorentzIndex,
    pub region_measure: f64,
    /// `||u||_{p1,q1}`
    pub norm_small: f64,
    /// `||u||_{p2,q2}`
    pub norm_large: f64,
    /// `norm_small / norm_large`; absent for the zero function.
    pub ratio: Option<f64>,
}

/// Compare `||u||_{p1,q1}` against `||u||_{p2,q2}` for `p1 < p2`. `p2 = inf`
/// is read as `L^inf` (the sup norm) regardless of `q2`.
pub fn embedding_audit_nested<U: Rearrangeable + ?Sized>(
    u: &U,
    small: LorentzIndex,
    large: (f64, f64),
    region_measure: f64,
) -> Result<NestedAudit> {
    let (p2, q2) = large;
    if !(small.p < p2) {
        return Err(Error::Index(format!(
            "nested inclusion needs p1 < p2, got p1 = {}, p2 = {p2}",
            small.p
        )));
    }
    let star = decreasing_rearrangement(u);
    let support = star.total_measure();
    if support > region_measure * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "support measure {support} exceeds the region measure {region_measure}"
        )));
    }
    let norm_small = lorentz_norm(&star, small);
    let (large_index, norm_large) = if p2.is_infinite() {
        (
            LorentzIndex {
                p: f64::INFINITY,
                q: f64::INFINITY,
            },
            star.chunks().first().map_or(0.0, |c| c.value),
        )
    } else {
        let idx = LorentzIndex::new(p2, q2)?;
        (idx, lorentz_norm(&star, idx))
    };
    let ratio = (norm_large > 0.0).then(|| norm_small / norm_large);
    Ok(NestedAudit {
        small_index: small,
        large_index,
        region_measure,
        norm_small,
        norm_large,
        ratio,
    })
}
