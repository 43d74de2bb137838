//! The staircase experiment: `u_n = (1/n) sum_i 2^{i(N-1)} phi(2^i x)` is
//! bounded in BV, vanishes in `L^{1*,q}` for `q > 1`, yet stays away from
//! zero in `L^{1*,1}`, because the pairing with `1/|x|` is the same for
//! every `n`.
//!
//! Everything is evaluated on [`RadialStep`] closed forms. The vanishing
//! probe measures the unit-cube mass of `g u_n` over a finite family of
//! group elements.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Region};
use crate::group::{DyadicVec, GroupElement};
use crate::multiscale::DyadicSum;
use crate::radial::RadialStep;
use crate::rearrange::{critical_exponent, lebesgue_norm, lorentz_norm, LorentzIndex};

/// Default lower bound on `||u_n||_{1*,1} / ||u_1||_{1*,1}`.
pub const DEFAULT_NONVANISHING_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub n: u32,
    /// Co-area variation with the true interface jumps.
    pub tv_cocarea: f64,
    /// `(1/n) sum_i TV(v_i)`, the sum over separate pieces.
    pub tv_piecewise: f64,
    /// `||u_n||_{L^{1*}}`
    pub l1star: f64,
    /// `||u_n||_{1*,q}` for each entry of the report's `q_list`.
    pub lorentz: Vec<f64>,
    pub f0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub q: f64,
    /// Least-squares slope of `log ||u_n||_{1*,q}` against `log n`.
    pub exponent: f64,
    /// `1/q - 1`
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub dim: usize,
    pub n_max: u32,
    pub q_list: Vec<f64>,
    pub nonvanishing_floor: f64,
    pub rows: Vec<CounterexampleRow>,
    pub rates: Vec<RateFit>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn validate_q_list(q_list: &[f64]) -> Result<()> {
    match q_list.iter().find(|q| !(**q >= 1.0)) {
        Some(q) => Err(Error::Index(format!("every q must lie in [1, inf], got {q}"))),
        None => Ok(()),
    }
}

fn fmt_q(q: f64) -> String {
    if q.is_infinite() {
        "inf".into()
    } else {
        q.to_string()
    }
}

/// Least-squares slope of `log y` against `log x`; pairs with a
/// nonpositive coordinate are skipped. Needs two usable points.
pub fn power_law_exponent(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn counterexample_row(dim: usize, n: u32, q_list: &[f64]) -> Result<CounterexampleRow> {
    let phi = RadialStep::annulus_indicator(dim)?;
    let u = RadialStep::staircase(dim, n)?;
    let p = critical_exponent(dim);
    let star = u.to_stepfunction();
    let lorentz = q_list
        .iter()
        .map(|&q| Ok(lorentz_norm(&star, LorentzIndex::new(p, q)?)))
        .collect::<Result<Vec<_>>>()?;
    let tv_piecewise = (1..=n as i32)
        .map(|i| phi.rescale_dyadic(i).total_variation())
        .sum::<f64>()
        / n as f64;
    Ok(CounterexampleRow {
        n,
        tv_cocarea: u.total_variation(),
        tv_piecewise,
        l1star: lebesgue_norm(&u, p)?,
        lorentz,
        f0: u.dual_pairing_f0()?,
    })
}

fn strictly_decreasing(xs: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn run_counterexample(dim: usize, n_max: u32, q_list: &[f64], floor: f64) -> Result<CounterexampleReport> {
    validate_q_list(q_list)?;
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    let phi = RadialStep::annulus_indicator(dim)?;
    let rows = (1..=n_max)
        .into_par_iter()
        .map(|n| counterexample_row(dim, n, q_list))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    let f0_floor = 0.5 * phi.support_measure();
    let f0_min = rows.iter().map(|r| r.f0).fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "f0-floor",
        f0_min >= f0_floor,
        format!("min f0 = {f0_min}, floor |annulus|/2 = {f0_floor}"),
    ));
    let f0_first = rows[0].f0;
    let f0_spread = rows.iter().map(|r| (r.f0 - f0_first).abs()).fold(0.0, f64::max);
    checks.push(Check::new(
        "f0-constant",
        f0_spread <= 1e-12 * f0_first.abs(),
        format!("max |f0(n) - f0(1)| = {f0_spread:e}"),
    ));
    checks.push(Check::new(
        "l1star-decreasing",
        strictly_decreasing(rows.iter().map(|r| r.l1star)),
        "||u_n||_{1*} strictly decreasing in n",
    ));
    let tv_max = rows.iter().map(|r| r.tv_cocarea).fold(0.0, f64::max);
    let piecewise = phi.total_variation();
    let tv_ok = rows.iter().all(|r| {
        r.tv_cocarea <= r.tv_piecewise * (1.0 + 1e-12) && (r.tv_piecewise - piecewise).abs() <= 1e-12 * piecewise
    });
    checks.push(Check::new(
        "tv-bounded",
        tv_ok,
        format!("max co-area TV = {tv_max}, piecewise TV = TV(phi) = {piecewise}"),
    ));

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let mut rates = Vec::new();
    for (k, &q) in q_list.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r.lorentz[k]).collect();
        if q > 1.0 {
            checks.push(Check::new(
                format!("lorentz-decreasing-q{}", fmt_q(q)),
                strictly_decreasing(col.iter().copied()),
                format!("||u_n||_{{1*,{}}} strictly decreasing in n", fmt_q(q)),
            ));
        } else {
            let ratio = col.iter().copied().fold(f64::INFINITY, f64::min) / col[0];
            checks.push(Check::new(
                "lorentz-nonvanishing-q1",
                ratio >= floor,
                format!("min_n ||u_n||_{{1*,1}} / ||u_1||_{{1*,1}} = {ratio:.6}, floor {floor}"),
            ));
        }
        if let Some(exponent) = power_law_exponent(&ns, &col) {
            rates.push(RateFit {
                q,
                exponent,
                expected: 1.0 / q - 1.0,
            });
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(CounterexampleReport {
        dim,
        n_max,
        q_list: q_list.to_vec(),
        nonvanishing_floor: floor,
        rows,
        rates,
        checks,
        pass,
    })
}

impl CounterexampleReport {
    /// Columns `n,tv_cocarea,tv_piecewise,l1star,lorentz_q<q>...,f0`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["n", "tv_cocarea", "tv_piecewise", "l1star"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.q_list.iter().map(|q| format!("lorentz_q{}", fmt_q(*q))));
        header.push("f0".into());
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.n.to_string(),
                r.tv_cocarea.to_string(),
                r.tv_piecewise.to_string(),
                r.l1star.to_string(),
            ];
            rec.extend(r.lorentz.iter().map(f64::to_string));
            rec.push(r.f0.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// A gnuplot script drawing the Lorentz columns of `csv_name` on log-log
    /// axes.
    pub fn plot_script(&self, csv_name: &str) -> String {
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str("set logscale xy\n");
        s.push_str("set key top right\n");
        s.push_str("set xlabel 'n'\n");
        s.push_str("set ylabel 'norm'\n");
        s.push_str("set terminal pngcairo size 900,600\n");
        s.push_str("set output 'counterexample.png'\n");
        let first_lorentz = 5;
        let mut parts: Vec<String> = vec![format!("'{csv_name}' using 1:4 with linespoints title 'L^(1*)'")];
        for (k, q) in self.q_list.iter().enumerate() {
            parts.push(format!(
                "'{csv_name}' using 1:{} with linespoints title 'L^(1*,{})'",
                first_lorentz + k,
                fmt_q(*q)
            ));
        }
        s.push_str("plot ");
        s.push_str(&parts.join(", \\\n     "));
        s.push('\n');
        s
    }
}

/// Unit-cube mass `int_{(0,1)^N} |g u|` of a transformed function.
pub trait UnitCubeMass {
    fn unit_cube_mass(&self, g: &GroupElement) -> Result<f64>;
}

impl UnitCubeMass for RadialStep {
    /// `int_{(0,1)^N} |g u| = 2^{-j} int_Q |u|` with
    /// `Q = [-2^j y, -2^j y + 2^j]^N`.
    fn unit_cube_mass(&self, g: &GroupElement) -> Result<f64> {
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: g.dim(),
            });
        }
        let side = 2f64.powi(g.j);
        let lo: Vec<f64> = g.y.to_f64().iter().map(|y| -side * y).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + side).collect();
        Ok(self.box_integral_abs(&lo, &hi)? / side)
    }
}

impl UnitCubeMass for GridFunction {
    fn unit_cube_mass(&self, g: &GroupElement) -> Result<f64> {
        let cube = Region::unit_cube(&vec![0; self.dim()]);
        Ok(g.act(self)?.restrict(&cube)?.l1_norm())
    }
}

impl UnitCubeMass for DyadicSum {
    fn unit_cube_mass(&self, g: &GroupElement) -> Result<f64> {
        let cube = Region::unit_cube(&vec![0; self.dim()]);
        Ok(g.act_sum(self)?.restrict(&cube)?.l1_norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub element: GroupElement,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub entries: Vec<ProbeEntry>,
    pub max_mass: f64,
    /// Index of the first element attaining `max_mass`.
    pub argmax: Option<usize>,
}

pub fn dvanishing_probe<U: UnitCubeMass + Sync + ?Sized>(u: &U, elements: &[GroupElement]) -> Result<ProbeReport> {
    let entries = elements
        .par_iter()
        .map(|g| {
            Ok(ProbeEntry {
                element: g.clone(),
                mass: u.unit_cube_mass(g)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmax = None;
    let mut max_mass = 0.0;
    for (i, e) in entries.iter().enumerate() {
        if e.mass > max_mass {
            max_mass = e.mass;
            argmax = Some(i);
        }
    }
    Ok(ProbeReport {
        entries,
        max_mass,
        argmax,
    })
}

/// Offsets (per axis, in units of the cube side) placing the probe cube
/// centred on the origin, in each quadrant, and straddling it.
const PROBE_OFFSETS: [(i64, i32); 5] = [(1, 1), (0, 0), (1, 2), (1, 0), (-1, 1)];

/// Scales `j in [-(n+3), 3]` covering every shell of `u_n`, combined with
/// the offsets of [`PROBE_OFFSETS`] on every axis, plus `random_shifts`
/// elements with random dyadic translations.
pub fn aligned_probe_elements(dim: usize, n: u32, random_shifts: usize, seed: u64) -> Vec<GroupElement> {
    let mut out = Vec::new();
    let combos = PROBE_OFFSETS.len().pow(dim as u32);
    for j in -(n as i32 + 3)..=3 {
        for c in 0..combos {
            let mut rest = c;
            let mut y = DyadicVec::zero(dim);
            for axis in 0..dim {
                let (num, level) = PROBE_OFFSETS[rest % PROBE_OFFSETS.len()];
                rest /= PROBE_OFFSETS.len();
                let mut e = vec![0; dim];
                e[axis] = num;
                y = y.add(&DyadicVec::new(e, level));
            }
            out.push(GroupElement::new(j, y));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_shifts {
        let j = rng.gen_range(-(n as i32 + 3)..=3);
        let y: Vec<i64> = (0..dim).map(|_| rng.gen_range(-8..=8)).collect();
        out.push(GroupElement::new(j, DyadicVec::new(y, 3)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingRow {
    pub n: u32,
    pub probe_max_mass: f64,
    pub probe_argmax: Option<GroupElement>,
    pub lorentz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    pub dim: usize,
    pub q_list: Vec<f64>,
    pub rows: Vec<VanishingRow>,
    /// Fit of the probe maxima over `n in [ceil(n_max/2), n_max]`.
    pub probe_exponent_tail: Option<f64>,
    /// Fit over the whole range `n in [1, n_max]`.
    pub probe_exponent_full: Option<f64>,
    pub lorentz_rates: Vec<RateFit>,
}

/// Probe maxima and Lorentz norms of `u_n` side by side.
pub fn vanishing_table(
    dim: usize,
    n_max: u32,
    q_list: &[f64],
    random_shifts: usize,
    seed: u64,
) -> Result<VanishingReport> {
    validate_q_list(q_list)?;
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    let p = critical_exponent(dim);
    let rows = (1..=n_max)
        .map(|n| {
            let u = RadialStep::staircase(dim, n)?;
            let elements = aligned_probe_elements(dim, n, random_shifts, seed.wrapping_add(n as u64));
            let probe = dvanishing_probe(&u, &elements)?;
            let star = u.to_stepfunction();
            let lorentz = q_list
                .iter()
                .map(|&q| Ok(lorentz_norm(&star, LorentzIndex::new(p, q)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(VanishingRow {
                n,
                probe_max_mass: probe.max_mass,
                probe_argmax: probe.argmax.map(|i| probe.entries[i].element.clone()),
                lorentz,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let masses: Vec<f64> = rows.iter().map(|r| r.probe_max_mass).collect();
    let tail = (n_max as usize).div_ceil(2) - 1;
    let lorentz_rates = q_list
        .iter()
        .enumerate()
        .filter_map(|(k, &q)| {
            let col: Vec<f64> = rows.iter().map(|r| r.lorentz[k]).collect();
            power_law_exponent(&ns, &col).map(|exponent| RateFit {
                q,
                exponent,
                expected: 1.0 / q - 1.0,
            })
        })
        .collect();
    Ok(VanishingReport {
        dim,
        q_list: q_list.to_vec(),
        probe_exponent_tail: power_law_exponent(&ns[tail..], &masses[tail..]),
        probe_exponent_full: power_law_exponent(&ns, &masses),
        rows,
        lorentz_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// `||u_n||_{2,1}` for `N = 2` summed shell by shell:
    /// `(2 sqrt(pi) / n) sum_k [sqrt(4 - 4^{k-n}) - sqrt(1 - 4^{k-n})]`.
    fn l21_closed_form(n: u32) -> f64 {
        let n_i = n as i32;
        (1..=n_i)
            .map(|k| {
                let t = 4f64.powi(k - n_i);
                (4.0 - t).sqrt() - (1.0 - t).sqrt()
            })
            .sum::<f64>()
            * 2.0
            * PI.sqrt()
            / n as f64
    }

    #[test]
    fn default_table() {
        let r = run_counterexample(2, 12, &[1.0, 1.5, 2.0], DEFAULT_NONVANISHING_FLOOR).unwrap();
        assert!(r.pass, "{:?}", r.checks);
        for row in &r.rows {
            assert_relative_eq!(row.l1star, (3.0 * PI / row.n as f64).sqrt(), max_relative = 1e-10);
            assert_relative_eq!(row.f0, 2.0 * PI, max_relative = 1e-12);
            assert_relative_eq!(row.lorentz[0], l21_closed_form(row.n), max_relative = 1e-12);
            assert_relative_eq!(row.tv_cocarea, 2.0 * PI + 4.0 * PI / row.n as f64, max_relative = 1e-12);
            assert_relative_eq!(row.tv_piecewise, 6.0 * PI, max_relative = 1e-12);
            // L^{2,2} is L^2
            assert_relative_eq!(row.lorentz[2], row.l1star, max_relative = 1e-12);
        }
        assert_relative_eq!(r.rows[0].lorentz[0], 6.13996, max_relative = 1e-5);
        assert_relative_eq!(r.rows[11].lorentz[0], 3.78827, max_relative = 1e-5);
        for fit in &r.rates[1..] {
            assert!((fit.exponent - fit.expected).abs() <= 0.1, "{fit:?}");
        }
    }

    #[test]
    fn single_row_and_bad_q() {
        let r = run_counterexample(2, 1, &[1.0, 1.5, 2.0], DEFAULT_NONVANISHING_FLOOR).unwrap();
        assert!(r.pass);
        assert!(r.rates.is_empty());
        assert!(matches!(
            run_counterexample(2, 4, &[0.5], DEFAULT_NONVANISHING_FLOOR),
            Err(Error::Index(_))
        ));
        assert!(run_counterexample(2, 0, &[1.0], DEFAULT_NONVANISHING_FLOOR).is_err());
    }

    #[test]
    fn three_dimensional_table() {
        let r = run_counterexample(3, 8, &[1.0, 1.2, 1.5, f64::INFINITY], DEFAULT_NONVANISHING_FLOOR).unwrap();
        assert!(r.pass, "{:?}", r.checks);
        let phi = RadialStep::annulus_indicator(3).unwrap();
        let base = lebesgue_norm(&phi, 1.5).unwrap().powf(1.5);
        for row in &r.rows {
            // ||u_n||_{1*}^{1*} = n^{1 - 1*} ||phi||_{1*}^{1*}
            let expect = (row.n as f64).powf(1.0 - 1.5) * base;
            assert_relative_eq!(row.l1star.powf(1.5), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn csv_and_plot() {
        let r = run_counterexample(2, 3, &[1.0, 2.0], DEFAULT_NONVANISHING_FLOOR).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,tv_cocarea,tv_piecewise,l1star,lorentz_q1,lorentz_q2,f0\n"));
        assert_eq!(text.lines().count(), 4);
        let script = r.plot_script("table.csv");
        assert!(script.contains("using 1:6"));
    }

    #[test]
    fn fit_helper() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.75)).collect();
        assert_relative_eq!(power_law_exponent(&xs, &ys).unwrap(), -0.75, max_relative = 1e-12);
        assert!(power_law_exponent(&[1.0], &[1.0]).is_none());
        assert!(power_law_exponent(&[1.0, 2.0], &[0.0, 0.0]).is_none());
    }

    #[test]
    fn probe_trivial_cases() {
        let g = aligned_probe_elements(2, 3, 4, 0);
        assert_eq!(g.len(), (3 + 7) * 25 + 4);
        let zero = dvanishing_probe(&RadialStep::zero(2), &g).unwrap();
        assert!(zero.entries.iter().all(|e| e.mass == 0.0));
        assert_eq!(zero.argmax, None);
        let bump = GridFunction::from_sampler(2, 4, &[-0.5, 0.25], &[1.5, 0.75], |x| 1.0 + x[0]).unwrap();
        let id = GroupElement::identity(2);
        let on_cube = bump.restrict(&Region::unit_cube(&[0, 0])).unwrap().l1_norm();
        assert_eq!(bump.unit_cube_mass(&id).unwrap(), on_cube);
        let sum = DyadicSum::from_grid(bump.clone());
        assert_eq!(sum.unit_cube_mass(&id).unwrap(), on_cube);
    }

    #[test]
    fn radial_probe_matches_grid_probe() {
        let u = RadialStep::staircase(2, 2).unwrap();
        let grid = u.to_grid_default(9).unwrap();
        for g in [
            GroupElement::identity(2),
            GroupElement::new(-1, DyadicVec::new(vec![1, 1], 1)),
            GroupElement::new(1, DyadicVec::new(vec![-1, 1], 2)),
        ] {
            let exact = u.unit_cube_mass(&g).unwrap();
            let approx = grid.unit_cube_mass(&g).unwrap();
            assert!((exact - approx).abs() <= 0.01 * exact.max(1e-3), "{g:?}: {exact} vs {approx}");
        }
    }

    #[test]
    fn probe_masses_vanish_like_one_over_n() {
        let r = vanishing_table(2, 12, &[1.0, 1.5, 2.0], 16, 0).unwrap();
        let tail = r.probe_exponent_tail.unwrap();
        assert!((tail + 1.0).abs() <= 0.2, "tail exponent {tail}");
        assert!(r.rows.last().unwrap().probe_max_mass < r.rows[0].probe_max_mass);
        let ratio = r.rows.last().unwrap().lorentz[0] / r.rows[0].lorentz[0];
        assert!(ratio >= 0.5);
    }
}
