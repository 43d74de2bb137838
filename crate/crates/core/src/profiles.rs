//! Greedy profile extraction for bounded sequences of grid functions.
//!
//! Each round picks, for every element `r_k` of the current remainder, the
//! group element `g_k = g[j, y]` whose dyadic cube `y + [0, 2^-j)^N`
//! maximises the unit-cube mass `2^j int_cube |r_k|` of the aligned function
//! `g_k^{-1} r_k`. The weak limit of the aligned tail is approximated by the
//! last aligned element restricted to a window, rescaled by the
//! extrapolated limit of the aligned masses; a vanishing limit ends the
//! extraction. A non-vanishing limit must pass a Cauchy check on the
//! normalised tail before it is accepted as a profile `w` and `g_k w` is
//! subtracted from every element.
//!
//! The first round always uses the identity alignment, so the first profile
//! is the weak limit of the sequence itself (possibly zero).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bv::{total_variation, total_variation_sum};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, Region, DEFAULT_MEMORY_GUARD};
use crate::group::{DyadicVec, GroupElement};
use crate::io::{save_grid, SCHEMA_VERSION};
use crate::multiscale::DyadicSum;
use crate::rearrange::{critical_exponent, lorentz_norm_of, LorentzIndex};

/// A finite stretch `{u_k}` of a sequence bounded in BV.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    elements: Vec<(i64, DyadicSum)>,
    declared_bound: f64,
}

impl SequenceSpec {
    pub fn new(elements: Vec<(i64, DyadicSum)>, declared_bound: f64) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::Usage("empty sequence".into()));
        };
        let dim = first.1.dim();
        if dim < 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if let Some((_, u)) = elements.iter().find(|(_, u)| u.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: u.dim(),
            });
        }
        if !elements.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Usage("sequence indices must be strictly increasing".into()));
        }
        for (k, u) in &elements {
            let tv = total_variation_sum(u);
            if tv > declared_bound * (1.0 + 1e-6) {
                return Err(Error::Domain(format!(
                    "element {k} has TV {tv}, above the declared bound {declared_bound}"
                )));
            }
        }
        Ok(Self {
            elements,
            declared_bound,
        })
    }

    /// Declared bound taken as the largest element variation.
    pub fn with_observed_bound(elements: Vec<(i64, DyadicSum)>) -> Result<Self> {
        let bound = elements.iter().map(|(_, u)| total_variation_sum(u)).fold(0.0, f64::max);
        Self::new(elements, bound)
    }

    pub fn from_generator(
        ks: impl IntoIterator<Item = i64>,
        declared_bound: f64,
        generator: impl Fn(i64) -> Result<DyadicSum>,
    ) -> Result<Self> {
        let elements = ks
            .into_iter()
            .map(|k| Ok((k, generator(k)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements, declared_bound)
    }

    pub fn dim(&self) -> usize {
        self.elements[0].1.dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[(i64, DyadicSum)] {
        &self.elements
    }

    pub fn indices(&self) -> Vec<i64> {
        self.elements.iter().map(|(k, _)| *k).collect()
    }

    pub fn declared_bound(&self) -> f64 {
        self.declared_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// Profiles with variation below this end the extraction.
    pub epsilon: f64,
    pub max_profiles: usize,
    /// Second Lorentz index of the remainder norm `L^{1*,q}`.
    pub q: f64,
    /// Inclusive range of scales searched.
    pub scale_window: (i32, i32),
    /// Weak limits are taken on `[-R, R)^N`.
    pub window_radius: i64,
    /// Spacing of the three tail elements `K, K - s, K - 2s`.
    pub stride: usize,
    /// Bound on the L1 distance between normalised aligned tail elements.
    pub cauchy_tolerance: f64,
    pub memory_guard: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_profiles: 8,
            q: 2.0,
            scale_window: (-10, 10),
            window_radius: 2,
            stride: 1,
            cauchy_tolerance: 0.25,
            memory_guard: DEFAULT_MEMORY_GUARD,
        }
    }
}

impl ExtractionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.q > 1.0) {
            return Err(Error::Index(format!("q must exceed 1, got {}", self.q)));
        }
        if self.scale_window.0 > self.scale_window.1 {
            return Err(Error::Domain(format!("empty scale window {:?}", self.scale_window)));
        }
        if self.window_radius < 1 || self.stride < 1 {
            return Err(Error::Domain("window radius and stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// The best dyadic cube found for one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub j: i32,
    /// Cube index at level `j`; the cube is `cube 2^-j + [0, 2^-j)^N`.
    pub cube: Vec<i64>,
    /// `2^j int_cube |u|`
    pub mass: f64,
}

impl Alignment {
    /// `g[j, cube 2^-j]`, mapping the unit cube onto the chosen cube.
    pub fn element(&self) -> GroupElement {
        GroupElement::new(self.j, DyadicVec::new(self.cube.clone(), self.j))
    }

    /// Preferred over `other`: larger mass, then smaller `|j|`, then smaller
    /// `j`, then lexicographically smaller cube.
    fn beats(&self, other: &Self) -> bool {
        if self.mass != other.mass {
            return self.mass > other.mass;
        }
        (self.j.abs(), self.j, &self.cube) < (other.j.abs(), other.j, &other.cube)
    }
}

type CubeKey = [i64; 3];

fn key(idx: &[i64]) -> CubeKey {
    let mut k = [0i64; 3];
    k[..idx.len()].copy_from_slice(idx);
    k
}

/// Cube integrals of `|u|` at level `j`, sorted by cube.
fn cube_integrals(u: &DyadicSum, j: i32) -> Vec<(CubeKey, f64)> {
    let dim = u.dim();
    let mut acc: Vec<(CubeKey, f64)> = Vec::new();
    for p in u.patches() {
        let level = p.level();
        let values = p.values();
        let mut flat = 0;
        if level >= j {
            let shift = (level - j) as u32;
            let m = p.cell_measure();
            let mut coarse = vec![0i64; dim];
            p.cell_box().for_each(|idx| {
                let v = values[flat];
                flat += 1;
                if v != 0.0 {
                    for (c, &i) in coarse.iter_mut().zip(idx) {
                        *c = i >> shift;
                    }
                    acc.push((key(&coarse), v.abs() * m));
                }
            });
        } else {
            // every sub-cube of a cell carries the same integral; keep the
            // lexicographically first one
            let shift = (j - level) as u32;
            let m = 2f64.powi(-j * dim as i32);
            let mut fine = vec![0i64; dim];
            p.cell_box().for_each(|idx| {
                let v = values[flat];
                flat += 1;
                if v != 0.0 {
                    for (c, &i) in fine.iter_mut().zip(idx) {
                        *c = i << shift;
                    }
                    acc.push((key(&fine), v.abs() * m));
                }
            });
        }
    }
    acc.sort_by_key(|a| a.0);
    let mut merged: Vec<(CubeKey, f64)> = Vec::with_capacity(acc.len());
    for (k, v) in acc {
        match merged.last_mut() {
            Some(last) if last.0 == k => last.1 += v,
            _ => merged.push((k, v)),
        }
    }
    merged
}

/// The `(j, y)` maximising the unit-cube mass of the aligned function over
/// scales in `window`; `None` for the zero function.
pub fn best_alignment(u: &DyadicSum, window: (i32, i32)) -> Option<Alignment> {
    let dim = u.dim();
    let per_scale: Vec<Option<Alignment>> = (window.0..=window.1)
        .into_par_iter()
        .map(|j| {
            let scale = 2f64.powi(j);
            let mut best: Option<Alignment> = None;
            for (cube, integral) in cube_integrals(u, j) {
                let cand = Alignment {
                    j,
                    cube: cube[..dim].to_vec(),
                    mass: scale * integral,
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
            best
        })
        .collect();
    per_scale.into_iter().flatten().reduce(|a, b| if b.beats(&a) { b } else { a })
}

/// Estimate `lim m_k` from the last three masses at positions
/// `x_a < x_b < x_c` by fitting `m_inf + c x^{-alpha}`, `alpha > 0`.
/// Constant masses give the common value; decreasing masses that no power
/// law fits (slower than any power) give 0; increasing or oscillating
/// masses give the last value.
pub fn extrapolate_mass(x: [f64; 3], m: [f64; 3]) -> f64 {
    let [ma, mb, mc] = m;
    let top = ma.max(mb).max(mc);
    if top == 0.0 || mc == 0.0 {
        return 0.0;
    }
    if top - ma.min(mb).min(mc) <= 1e-9 * top {
        return mc;
    }
    if !(ma > mb && mb > mc) {
        return mc;
    }
    let rho = (mb - mc) / (ma - mb);
    let ratio = |alpha: f64| {
        let (pa, pb, pc) = (x[0].powf(-alpha), x[1].powf(-alpha), x[2].powf(-alpha));
        (pb - pc) / (pa - pb)
    };
    let at_zero = (x[2] / x[1]).ln() / (x[1] / x[0]).ln();
    if rho >= at_zero {
        return 0.0;
    }
    // the ratio decreases from at_zero towards 0 as alpha grows
    let (mut lo, mut hi) = (1e-9, 1.0);
    while ratio(hi) > rho && hi < 1e3 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let c = (ma - mb) / (x[0].powf(-alpha) - x[1].powf(-alpha));
    (mc - c * x[2].powf(-alpha)).clamp(0.0, mc)
}

#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    /// 1-based.
    pub index: usize,
    #[serde(skip)]
    pub w: DyadicSum,
    pub tv: f64,
    /// `g_k` with `u_k ~ g_k w + ...`, one per sequence element.
    pub group: Vec<GroupElement>,
    /// The alignment actually applied, `g_k^{-1}`.
    pub alignment: Vec<GroupElement>,
    /// Masses whose limit was extrapolated: L1 on the window for the first
    /// profile, on the unit cube for later ones.
    pub aligned_masses: Vec<f64>,
    pub limit_mass: f64,
    pub cauchy_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderNorm {
    pub k: i64,
    pub q: f64,
    /// `||u_k||_{1*,q}`
    pub initial: f64,
    /// `||r_k||_{1*,q}`
    pub remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub sum_profile_tv: f64,
    pub tv_elements: Vec<f64>,
    pub tv_remainders: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The next candidate profile had variation below epsilon.
    Epsilon,
    MaxProfiles,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileDecomposition {
    pub dim: usize,
    pub indices: Vec<i64>,
    pub config: ExtractionConfig,
    pub profiles: Vec<Profile>,
    #[serde(skip)]
    pub remainders: Vec<DyadicSum>,
    pub remainder_norms: Vec<RemainderNorm>,
    pub energy: EnergyLedger,
    /// Best unit-cube mass of every remainder element before each round,
    /// and after the last one.
    pub mass_history: Vec<Vec<f64>>,
    /// No element's best mass increased from one round to the next.
    pub masses_monotone: bool,
    pub stop: StopReason,
    /// Variation of the rejected candidate that ended the extraction.
    pub rejected_tv: Option<f64>,
}

fn window_region(dim: usize, radius: i64) -> Region {
    Region::cube(0, vec![-radius; dim], 2 * radius)
}

fn tail_positions(len: usize, stride: usize) -> Vec<usize> {
    (0..3)
        .map_while(|i| (len - 1).checked_sub(i * stride))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect()
}

struct Candidate {
    w: DyadicSum,
    aligned_masses: Vec<f64>,
    limit_mass: f64,
    cauchy_distance: Option<f64>,
}

/// Weak-limit proxy for the aligned elements. `masses` are the quantities
/// whose limit decides whether the limit vanishes.
fn weak_limit(aligned: &[DyadicSum], masses: Vec<f64>, cfg: &ExtractionConfig) -> Result<Candidate> {
    let tail = tail_positions(aligned.len(), cfg.stride);
    let last = *tail.last().expect("nonempty sequence");
    let limit_mass = if tail.len() == 3 {
        let x = [tail[0] as f64 + 1.0, tail[1] as f64 + 1.0, tail[2] as f64 + 1.0];
        extrapolate_mass(x, [masses[tail[0]], masses[tail[1]], masses[tail[2]]])
    } else {
        masses[last]
    };
    let dim = aligned[0].dim();
    if limit_mass == 0.0 {
        return Ok(Candidate {
            w: DyadicSum::zero(dim),
            aligned_masses: masses,
            limit_mass,
            cauchy_distance: None,
        });
    }
    let mut distance: f64 = 0.0;
    for pair in tail.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (la, lb) = (aligned[a].l1_norm(), aligned[b].l1_norm());
        let d = if la == 0.0 || lb == 0.0 {
            2.0
        } else {
            aligned[b].scale(1.0 / lb).difference(&aligned[a].scale(1.0 / la))?.l1_norm()
        };
        distance = distance.max(d);
    }
    Ok(Candidate {
        w: aligned[last].scale(limit_mass / masses[last]),
        aligned_masses: masses,
        limit_mass,
        cauchy_distance: Some(distance),
    })
}

fn best_masses(remainders: &[DyadicSum], window: (i32, i32)) -> Vec<f64> {
    remainders
        .iter()
        .map(|r| best_alignment(r, window).map_or(0.0, |a| a.mass))
        .collect()
}

pub fn extract_profiles(seq: &SequenceSpec, cfg: &ExtractionConfig) -> Result<ProfileDecomposition> {
    cfg.validate()?;
    let dim = seq.dim();
    let window = window_region(dim, cfg.window_radius);
    let unit = Region::unit_cube(&vec![0; dim]);
    let mut remainders: Vec<DyadicSum> = seq.elements().iter().map(|(_, u)| u.clone()).collect();
    let mut profiles: Vec<Profile> = Vec::new();
    let mut mass_history = vec![best_masses(&remainders, cfg.scale_window)];
    let mut stop = StopReason::MaxProfiles;
    let mut rejected_tv = None;

    while profiles.len() < cfg.max_profiles {
        let group: Vec<GroupElement> = if profiles.is_empty() {
            vec![GroupElement::identity(dim); remainders.len()]
        } else {
            remainders
                .par_iter()
                .map(|r| {
                    best_alignment(r, cfg.scale_window).map_or_else(|| GroupElement::identity(dim), |a| a.element())
                })
                .collect()
        };
        let alignment: Vec<GroupElement> = group.iter().map(GroupElement::inverse).collect();
        let aligned = remainders
            .par_iter()
            .zip(&alignment)
            .map(|(r, g)| g.act_sum(r)?.restrict(&window))
            .collect::<Result<Vec<_>>>()?;
        // the identity round looks at the whole window; later rounds at the
        // unit cube the search concentrated on, since zooming in inflates
        // the window mass
        let masses = if profiles.is_empty() {
            aligned.iter().map(DyadicSum::l1_norm).collect()
        } else {
            aligned
                .iter()
                .map(|a| a.restrict(&unit).map(|c| c.l1_norm()))
                .collect::<Result<Vec<_>>>()?
        };
        let cand = weak_limit(&aligned, masses, cfg)?;
        let tv = total_variation_sum(&cand.w);
        if tv < cfg.epsilon {
            if !profiles.is_empty() {
                stop = StopReason::Epsilon;
                rejected_tv = Some(tv);
                break;
            }
        } else if let Some(distance) = cand.cauchy_distance.filter(|d| *d > cfg.cauchy_tolerance) {
            // only a non-negligible limit has to be approached along the tail
            return Err(Error::NonConvergentSubsequence {
                distance,
                tolerance: cfg.cauchy_tolerance,
                suggested_stride: cfg.stride * 2,
            });
        }
        for (r, g) in remainders.iter_mut().zip(&group) {
            let shifted = g.act_sum(&cand.w)?;
            for p in shifted.patches() {
                r.add_guarded(-1.0, p, cfg.memory_guard)?;
            }
        }
        profiles.push(Profile {
            index: profiles.len() + 1,
            w: cand.w,
            tv,
            group,
            alignment,
            aligned_masses: cand.aligned_masses,
            limit_mass: cand.limit_mass,
            cauchy_distance: cand.cauchy_distance,
        });
        mass_history.push(best_masses(&remainders, cfg.scale_window));
    }

    let masses_monotone = mass_history
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *b <= a * (1.0 + 1e-12)));
    let idx = LorentzIndex::new(critical_exponent(dim), cfg.q)?;
    let remainder_norms = seq
        .elements()
        .iter()
        .zip(&remainders)
        .map(|((k, u), r)| RemainderNorm {
            k: *k,
            q: cfg.q,
            initial: lorentz_norm_of(u, idx),
            remainder: lorentz_norm_of(r, idx),
        })
        .collect();
    let energy = EnergyLedger {
        sum_profile_tv: profiles.iter().map(|p| p.tv).fold(0.0, |a, b| a + b),
        tv_elements: seq.elements().iter().map(|(_, u)| total_variation_sum(u)).collect(),
        tv_remainders: remainders.iter().map(total_variation_sum).collect(),
    };
    Ok(ProfileDecomposition {
        dim,
        indices: seq.indices(),
        config: cfg.clone(),
        profiles,
        remainders,
        remainder_norms,
        energy,
        mass_history,
        masses_monotone,
        stop,
        rejected_tv,
    })
}

/// `max_k sup |u_k - sum_n g_k^{(n)} w^{(n)} - r_k|`.
pub fn reconstruction_error(d: &ProfileDecomposition, seq: &SequenceSpec) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (pos, (_, u)) in seq.elements().iter().enumerate() {
        let mut rebuilt = d.remainders[pos].clone();
        for p in &d.profiles {
            for patch in p.group[pos].act_sum(&p.w)?.patches() {
                rebuilt.add(1.0, patch)?;
            }
        }
        worst = worst.max(u.difference(&rebuilt)?.sup_norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeparation {
    pub first: usize,
    pub second: usize,
    /// `|j_k - j'_k| + |y_k - y'_k|` along the sequence.
    pub distances: Vec<f64>,
    /// Minimum over the second half of the sequence.
    pub tail_min: f64,
    pub increasing: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub floor: f64,
    pub pairs: Vec<PairSeparation>,
    pub pass: bool,
}

pub fn separation_check(d: &ProfileDecomposition, floor: f64) -> SeparationReport {
    let mut pairs = Vec::new();
    for a in 0..d.profiles.len() {
        for b in a + 1..d.profiles.len() {
            let distances: Vec<f64> = d.profiles[a]
                .group
                .iter()
                .zip(&d.profiles[b].group)
                .map(|(x, y)| x.distance(y))
                .collect();
            let tail_min = distances[distances.len() / 2..]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            pairs.push(PairSeparation {
                first: a + 1,
                second: b + 1,
                increasing: distances.windows(2).all(|w| w[1] > w[0]),
                pass: tail_min > floor,
                tail_min,
                distances,
            });
        }
    }
    SeparationReport {
        floor,
        pass: pairs.iter().all(|p| p.pass),
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub k: i64,
    pub sum_profile_tv: f64,
    pub tv_element: f64,
    pub tv_remainder: f64,
    pub delta: f64,
    pub slack: f64,
    /// `sum_n TV(w_n) <= TV(u_k) (1 + delta)`
    pub upper_holds: bool,
    /// `TV(u_k) <= sum_n TV(w_n) + TV(r_k) + slack`
    pub lower_holds: bool,
    pub pass: bool,
}

/// Energy inequalities at the last element. `slack` defaults to
/// `delta * TV(u_K)`.
pub fn energy_audit(d: &ProfileDecomposition, delta: f64, slack: Option<f64>) -> EnergyReport {
    let last = d.indices.len() - 1;
    let tv_element = d.energy.tv_elements[last];
    let tv_remainder = d.energy.tv_remainders[last];
    let sum = d.energy.sum_profile_tv;
    let slack = slack.unwrap_or(delta * tv_element);
    let upper_holds = sum <= tv_element * (1.0 + delta);
    let lower_holds = tv_element <= sum + tv_remainder + slack;
    EnergyReport {
        k: d.indices[last],
        sum_profile_tv: sum,
        tv_element,
        tv_remainder,
        delta,
        slack,
        upper_holds,
        lower_holds,
        pass: upper_holds && lower_holds,
    }
}

/// Write `profile_<n>_<p>.grid` files and `decomposition.json`.
pub fn save_decomposition(
    dir: &Path,
    d: &ProfileDecomposition,
    audits: &serde_json::Value,
    provenance: &serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut doc = serde_json::to_value(d)?;
    for (pi, p) in d.profiles.iter().enumerate() {
        let mut names = Vec::new();
        for (k, patch) in p.w.patches().iter().enumerate() {
            let name = format!("profile_{}_{k}.grid", p.index);
            save_grid(&dir.join(&name), patch, provenance)?;
            names.push(name);
        }
        doc["profiles"][pi]["patch_files"] = serde_json::json!(names);
    }
    let out = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "decomposition": doc,
        "audits": audits,
        "provenance": provenance,
    });
    fs::write(dir.join("decomposition.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    Ok(())
}

/// The fixture `u_k = w1 + g[k, k e1] w2`, `k = 1..k_max`, in two
/// dimensions: `w1` is a cone around `(-1, 0)` and `w2` the indicator of a
/// disk inside the unit cube, both sampled at `level`.
#[derive(Debug, Clone)]
pub struct TwoProfileFixture {
    pub sequence: SequenceSpec,
    pub w1: GridFunction,
    pub w2: GridFunction,
}

pub fn two_profile_fixture(level: i32, k_max: i64) -> Result<TwoProfileFixture> {
    let w1 = GridFunction::from_sampler(2, level, &[-1.75, -0.75], &[-0.25, 0.75], |x| {
        (1.0 - (x[0] + 1.0).hypot(x[1]) / 0.75).max(0.0)
    })?;
    let w2 = GridFunction::from_sampler(2, level, &[0.0, 0.0], &[1.0, 1.0], |x| {
        if (x[0] - 0.5).hypot(x[1] - 0.5) <= 0.375 {
            1.5
        } else {
            0.0
        }
    })?;
    let w1 = w1.trimmed().expect("nonzero cone");
    let w2 = w2.trimmed().expect("nonzero disk");
    let bound = total_variation(&w1) + total_variation(&w2);
    let sequence = SequenceSpec::from_generator(1..=k_max, bound, |k| {
        let mut u = DyadicSum::from_grid(w1.clone());
        let g = GroupElement::integer(k as i32, &[k, 0]);
        u.add(1.0, &g.act(&w2)?)?;
        Ok(u)
    })?;
    Ok(TwoProfileFixture { sequence, w1, w2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellBox;
    use crate::radial::RadialStep;
    use approx::assert_relative_eq;

    fn bump() -> GridFunction {
        GridFunction::from_sampler(2, 5, &[-0.5, -0.5], &[0.5, 0.5], |x| (0.25 - x[0] * x[0] - x[1] * x[1]).max(0.0))
            .unwrap()
            .trimmed()
            .unwrap()
    }

    #[test]
    fn extrapolation_rules() {
        let x = [4.0, 5.0, 6.0];
        assert_eq!(extrapolate_mass(x, [2.0, 2.0, 2.0]), 2.0);
        assert_eq!(extrapolate_mass(x, [0.0, 0.0, 0.0]), 0.0);
        assert_eq!(extrapolate_mass(x, [1.0, 2.0, 3.0]), 3.0);
        let m: Vec<f64> = x.iter().map(|k| 0.7 + 3.0 / (k * k)).collect();
        assert_relative_eq!(extrapolate_mass(x, [m[0], m[1], m[2]]), 0.7, max_relative = 1e-6);
        let m: Vec<f64> = x.iter().map(|k| 5.0 / k).collect();
        assert!(extrapolate_mass(x, [m[0], m[1], m[2]]) < 1e-6);
        // linear decay is slower than any power law with a limit
        assert_eq!(extrapolate_mass(x, [3.0, 2.0, 1.0]), 0.0);
    }

    #[test]
    fn alignment_search_finds_the_concentration() {
        let w = bump();
        let best = best_alignment(&DyadicSum::from_grid(w.clone()), (-10, 10)).unwrap();
        for (j, y) in [(0, vec![0, 0]), (3, vec![5, -2]), (-2, vec![4, -8])] {
            let g = GroupElement::integer(j, &y);
            let u = DyadicSum::from_grid(g.act(&w).unwrap());
            let a = best_alignment(&u, (-10, 10)).unwrap();
            // dyadic cubes are permuted by g, so the best mass is invariant
            assert_eq!(a.mass, best.mass);
            assert_eq!(a.j - j, best.j);
            let cube = Region::cube(a.j, a.cube.clone(), 1);
            assert_relative_eq!(a.mass, 2f64.powi(a.j) * u.restrict(&cube).unwrap().l1_norm(), max_relative = 1e-12);
            let back = a.element().inverse().act_sum(&u).unwrap();
            let unit = Region::unit_cube(&[0, 0]);
            assert_relative_eq!(back.restrict(&unit).unwrap().l1_norm(), a.mass, max_relative = 1e-12);
        }
        assert!(best_alignment(&DyadicSum::zero(2), (-3, 3)).is_none());
    }

    #[test]
    fn cube_integrals_partition_the_mass() {
        let u = DyadicSum::from_grid(bump());
        for j in [-3, 0, 2, 5, 8] {
            let total: f64 = cube_integrals(&u, j).iter().map(|c| c.1).sum();
            if j <= 5 {
                assert_relative_eq!(total, u.l1_norm(), max_relative = 1e-12);
            } else {
                // one sub-cube per cell above the patch level
                assert_relative_eq!(total, u.l1_norm() * 4f64.powi(5 - j), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn static_bump_gives_one_profile() {
        let w = bump();
        let seq = SequenceSpec::with_observed_bound((1..=5).map(|k| (k, DyadicSum::from_grid(w.clone()))).collect())
            .unwrap();
        let d = extract_profiles(&seq, &ExtractionConfig::default()).unwrap();
        assert_eq!(d.profiles.len(), 1);
        assert_eq!(d.stop, StopReason::Epsilon);
        assert!(d.profiles[0].group.iter().all(GroupElement::is_identity));
        assert_eq!(d.profiles[0].w.flatten().unwrap(), w);
        assert!(d.remainders.iter().all(DyadicSum::is_zero));
        assert_eq!(reconstruction_error(&d, &seq).unwrap(), 0.0);
        let e = energy_audit(&d, 0.1, None);
        assert!(e.pass);
        assert_eq!(e.sum_profile_tv, e.tv_element);
        assert!(separation_check(&d, 1.0).pass);
    }

    #[test]
    fn two_profile_fixture_is_recovered() {
        let fx = two_profile_fixture(5, 6).unwrap();
        let d = extract_profiles(&fx.sequence, &ExtractionConfig::default()).unwrap();
        assert_eq!(d.profiles.len(), 2);
        assert_relative_eq!(d.profiles[0].tv, total_variation(&fx.w1), max_relative = 1e-12);
        assert_relative_eq!(d.profiles[1].tv, total_variation(&fx.w2), max_relative = 1e-12);
        for (pos, g) in d.profiles[1].group.iter().enumerate() {
            let k = pos as i64 + 1;
            assert_eq!(g, &GroupElement::integer(k as i32, &[k, 0]));
        }
        assert!(d.remainder_norms.iter().all(|r| r.remainder <= 0.1 * r.initial));
        assert!(d.masses_monotone);
        assert!(reconstruction_error(&d, &fx.sequence).unwrap() <= 1e-12);
        let sep = separation_check(&d, 4.0);
        assert!(sep.pass && sep.pairs[0].increasing);
        let e = energy_audit(&d, 0.1, None);
        assert!(e.pass);
        assert!((e.sum_profile_tv - e.tv_element).abs() <= 1e-6 * e.tv_element);
    }

    #[test]
    fn staircase_sequence_vanishes() {
        let elements = (1..=5i64)
            .map(|n| {
                let u = RadialStep::staircase(2, n as u32).unwrap().to_grid_default(7).unwrap();
                (n, DyadicSum::from_grid(u))
            })
            .collect();
        let seq = SequenceSpec::with_observed_bound(elements).unwrap();
        let cfg = ExtractionConfig {
            epsilon: 0.5,
            ..ExtractionConfig::default()
        };
        let d = extract_profiles(&seq, &cfg).unwrap();
        assert_eq!(d.stop, StopReason::Epsilon);
        assert!(d.profiles.iter().all(|p| p.tv < cfg.epsilon), "{:?}", d.profiles);
        let norms: Vec<f64> = d.remainder_norms.iter().map(|r| r.remainder).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn separation_of_identical_sequences_fails() {
        let w = bump();
        let seq = SequenceSpec::with_observed_bound((1..=4).map(|k| (k, DyadicSum::from_grid(w.clone()))).collect())
            .unwrap();
        let mut d = extract_profiles(&seq, &ExtractionConfig::default()).unwrap();
        let mut twin = d.profiles[0].clone();
        twin.index = 2;
        d.profiles.push(twin);
        assert!(!separation_check(&d, 0.5).pass);
    }

    #[test]
    fn zero_sequence_and_input_errors() {
        let z = DyadicSum::zero(2);
        let seq = SequenceSpec::new(vec![(1, z.clone()), (2, z.clone())], 0.0).unwrap();
        let d = extract_profiles(&seq, &ExtractionConfig::default()).unwrap();
        assert_eq!(d.profiles.len(), 1);
        assert_eq!(d.profiles[0].tv, 0.0);
        let e = energy_audit(&d, 0.1, None);
        assert!(e.pass && e.sum_profile_tv == 0.0 && e.tv_element == 0.0);
        assert!(matches!(SequenceSpec::new(vec![], 1.0), Err(Error::Usage(_))));
        let w = DyadicSum::from_grid(bump());
        assert!(matches!(SequenceSpec::new(vec![(1, w)], 1e-3), Err(Error::Domain(_))));
        let bad = ExtractionConfig {
            q: 1.0,
            ..ExtractionConfig::default()
        };
        assert!(matches!(extract_profiles(&seq, &bad), Err(Error::Index(_))));
        let line = GridFunction::zeros(0, CellBox::new(vec![0], vec![2]).unwrap());
        assert!(SequenceSpec::new(vec![(1, DyadicSum::from_grid(line))], 1.0).is_err());
    }

    #[test]
    fn oscillating_shapes_raise_the_cauchy_error() {
        let a = bump();
        let b = GridFunction::from_sampler(2, 5, &[-1.5, -1.5], &[-0.5, 1.0], |_| 1.0).unwrap();
        // equal masses, alternating shapes
        let b = b.scale(a.l1_norm() / b.l1_norm());
        let elements = (1..=6i64)
            .map(|k| (k, DyadicSum::from_grid(if k % 2 == 0 { a.clone() } else { b.clone() })))
            .collect();
        let seq = SequenceSpec::with_observed_bound(elements).unwrap();
        match extract_profiles(&seq, &ExtractionConfig::default()) {
            Err(Error::NonConvergentSubsequence { suggested_stride, .. }) => assert_eq!(suggested_stride, 2),
            other => panic!("expected a Cauchy failure, got {other:?}"),
        }
        let thinned = ExtractionConfig {
            stride: 2,
            ..ExtractionConfig::default()
        };
        assert!(extract_profiles(&seq, &thinned).is_ok());
    }

    #[test]
    fn decomposition_directory() {
        let fx = two_profile_fixture(4, 4).unwrap();
        let d = extract_profiles(&fx.sequence, &ExtractionConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_decomposition(dir.path(), &d, &serde_json::json!({}), &serde_json::json!({"seed": 0})).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("decomposition.json")).unwrap()).unwrap();
        assert_eq!(doc["decomposition"]["profiles"].as_array().unwrap().len(), 2);
        let name = doc["decomposition"]["profiles"][1]["patch_files"][0].as_str().unwrap();
        let w2 = crate::io::load_grid(&dir.path().join(name)).unwrap();
        assert_eq!(w2, fx.w2);
        assert_eq!(doc["decomposition"]["profiles"][1]["group"][2]["j"], 3);
    }
}
