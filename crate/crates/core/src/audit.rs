//! Batch invariant audits over a seeded corpus.
//!
//! Each suite checks one inequality or identity on many inputs and reports
//! the number of violations together with the worst offender. Suites live in
//! an [`AuditRegistry`] keyed by name, so callers can run all of them or a
//! selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bv::{compose_scalar, embedding_audit_bv, lattice_tv_sum, scalar_map, ScalarMap};
use crate::corpus::{corpus_level, random_corpus, random_group_elements, random_step_functions};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, Region};
use crate::group::{isometry_defect, GroupElement};
use crate::layers::{
    active_scales, color_class, layer_energy_audit, support_disjointness_check, BrokenChi, TruncationProfile,
};
use crate::norms::{norm_by_id, FunctionNorm};
use crate::radial::RadialStep;
use crate::rearrange::{
    critical_exponent, decreasing_rearrangement, lebesgue_norm, lorentz_norm, lorentz_norm_symmetrization,
    LorentzIndex, StepFunction,
};

/// Which truncation profile the chain-rule suite composes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiVariant {
    #[default]
    Correct,
    /// The profile with an understated derivative bound; the chain-rule
    /// suite must fail.
    Broken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Samples per dimension; the isometry suite draws twice as many pairs.
    pub corpus_size: usize,
    pub seed: u64,
    pub chi_variant: ChiVariant,
    /// Points at which the truncation profile conditions are sampled.
    pub profile_samples: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            corpus_size: 50,
            seed: 0,
            chi_variant: ChiVariant::Correct,
            profile_samples: 1000,
        }
    }
}

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub invariant: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest relative defect or ratio observed, suite specific.
    pub worst: f64,
    /// Up to five descriptions of violating cases.
    pub examples: Vec<String>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(name: &str, invariant: &str) -> Self {
        Self {
            name: name.into(),
            invariant: invariant.into(),
            cases: 0,
            violations: 0,
            worst: 0.0,
            examples: Vec::new(),
            pass: true,
        }
    }

    fn record(&mut self, ok: bool, value: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if value.is_nan() {
            self.worst = f64::NAN;
        } else {
            self.worst = self.worst.max(value);
        }
        if !ok {
            self.violations += 1;
            if self.examples.len() < 5 {
                self.examples.push(describe());
            }
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.violations == 0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub suites: Vec<SuiteReport>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

impl AuditReport {
    pub fn failed_invariants(&self) -> Vec<&str> {
        self.suites.iter().filter(|s| !s.pass).map(|s| s.name.as_str()).collect()
    }
}

/// Shared inputs, generated once per run.
pub struct AuditContext {
    pub config: AuditConfig,
    pub corpus_1d: Vec<GridFunction>,
    pub corpus_2d: Vec<GridFunction>,
    pub nonnegative_2d: Vec<GridFunction>,
}

impl AuditContext {
    pub fn new(config: AuditConfig) -> Result<Self> {
        let (n, seed) = (config.corpus_size, config.seed);
        Ok(Self {
            corpus_1d: random_corpus(1, n, seed, false)?,
            corpus_2d: random_corpus(2, n, seed, false)?,
            nonnegative_2d: random_corpus(2, n, seed, true)?,
            config,
        })
    }
}

pub trait AuditSuite: Send + Sync {
    fn name(&self) -> &'static str;
    /// One-line statement of the checked invariant.
    fn invariant(&self) -> &'static str;
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport>;
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// The two Lorentz formulas agree, and `L^{p,p} = L^p`.
pub struct LorentzDefinitions;

impl AuditSuite for LorentzDefinitions {
    fn name(&self) -> &'static str {
        "lorentz-definitions"
    }
    fn invariant(&self) -> &'static str {
        "rearrangement and symmetrization forms of ||u||_{p,q} agree to 1e-10; ||u||_{p,p} = ||u||_p"
    }
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport> {
        let mut rep = SuiteReport::new(self.name(), self.invariant());
        let mut stars: Vec<(String, StepFunction)> = random_step_functions(ctx.config.corpus_size, ctx.config.seed)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("step function {i}"), s))
            .collect();
        if ctx.config.corpus_size > 0 {
            stars.push(("annulus".into(), decreasing_rearrangement(&RadialStep::annulus_indicator(2)?)));
            for n in [1, 4, 12] {
                stars.push((format!("staircase n={n}"), decreasing_rearrangement(&RadialStep::staircase(2, n)?)));
            }
        }
        let indices = [(2.0, 1.0), (2.0, 1.5), (2.0, 2.0), (1.5, 1.2), (3.0, 7.0), (2.0, f64::INFINITY)];
        for (label, star) in &stars {
            for dim in [2, 3] {
                for &(p, q) in &indices {
                    let idx = LorentzIndex::new(p, q)?;
                    let d = rel_diff(lorentz_norm(star, idx), lorentz_norm_symmetrization(star, dim, idx));
                    rep.record(d <= 1e-10, d, || format!("{label}, N={dim}, (p,q)=({p},{q}): rel diff {d:e}"));
                }
            }
            for p in [1.0, 1.5, 2.0, 4.0] {
                let d = rel_diff(lorentz_norm(star, LorentzIndex::new(p, p)?), lebesgue_norm(star, p)?);
                rep.record(d <= 1e-10, d, || format!("{label}, p={p}: L^(p,p) vs L^p rel diff {d:e}"));
            }
        }
        Ok(rep.finish())
    }
}

/// Group elements preserve TV and every critical Lorentz norm; the group
/// laws hold exactly.
pub struct GroupIsometry;

impl AuditSuite for GroupIsometry {
    fn name(&self) -> &'static str {
        "group-isometry"
    }
    fn invariant(&self) -> &'static str {
        "||g u|| = ||u|| to 1e-12 for BV and L^{1*,q}, q in {1, 1.2, 1*, 2, inf}; group laws exact"
    }
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport> {
        let mut rep = SuiteReport::new(self.name(), self.invariant());
        let pairs = 2 * ctx.config.corpus_size;
        let gs = random_group_elements(2, pairs, 6, corpus_level(2), ctx.config.seed);
        let critical = critical_exponent(2);
        let mut norms: Vec<Box<dyn FunctionNorm>> = vec![norm_by_id("bv")?];
        for q in [1.0, 1.2, critical, 2.0, f64::INFINITY] {
            norms.push(Box::new(crate::norms::CriticalLorentz { q }));
        }
        let defects: Vec<Vec<(String, f64)>> = gs
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let u = &ctx.corpus_2d[i % ctx.corpus_2d.len()];
                norms
                    .iter()
                    .map(|n| Ok((n.id(), isometry_defect(g, u, n.as_ref())?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (i, row) in defects.iter().enumerate() {
            for (id, d) in row {
                rep.record(*d <= 1e-12, *d, || format!("pair {i}, {id}: defect {d:e}"));
            }
        }
        let e = GroupElement::identity(2);
        for w in gs.windows(3) {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let assoc = a.compose(b).compose(c) == a.compose(&b.compose(c));
            let inv = a.compose(&a.inverse()) == e && a.inverse().compose(a) == e;
            let unit = a.compose(&e) == *a && e.compose(a) == *a;
            let ok = assoc && inv && unit;
            rep.record(ok, if ok { 0.0 } else { 1.0 }, || format!("group laws fail for {a:?}, {b:?}, {c:?}"));
        }
        Ok(rep.finish())
    }
}

/// `sum_y ||Du||_{(0,1)^N + y} <= 3^N ||Du||`.
pub struct LatticeSplitting;

impl AuditSuite for LatticeSplitting {
    fn name(&self) -> &'static str {
        "lattice-splitting"
    }
    fn invariant(&self) -> &'static str {
        "sum over unit lattice cubes of TV <= 3^N TV, N in {1, 2}"
    }
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport> {
        let mut rep = SuiteReport::new(self.name(), self.invariant());
        for (dim, corpus) in [(1, &ctx.corpus_1d), (2, &ctx.corpus_2d)] {
            for (i, u) in corpus.iter().enumerate() {
                let r = lattice_tv_sum(u)?;
                let ratio = if r.total > 0.0 { r.sum_per_cube / r.total } else { 0.0 };
                rep.record(r.bound_holds(), ratio, || {
                    format!("N={dim} sample {i}: {} > {}", r.sum_per_cube, r.splitting_bound)
                });
            }
        }
        Ok(rep.finish())
    }
}

/// Truncation layers: profile conditions, same-colour disjointness and the
/// bounded overlap of the `B_j` bands.
pub struct LayerMachinery;

impl LayerMachinery {
    fn profile_conditions(rep: &mut SuiteReport, chi: &TruncationProfile, samples: usize) {
        let top = chi.upper * 1.25;
        for i in 0..samples {
            let t = top * (i as f64 + 0.5) / samples as f64;
            let v = chi.eval(t);
            let plateau = !(1.0..=chi.plateau_end).contains(&t) || v == t;
            let support = (t > chi.lower && t < chi.upper) || v == 0.0;
            let below = v <= t + 1.0 && v >= 0.0;
            let slope = chi.derivative(t).abs() <= chi.derivative_bound * (1.0 + 1e-12);
            let ok = plateau && support && below && slope;
            rep.record(ok, 0.0, || format!("N={} t={t}: chi(t)={v}", chi.dim));
        }
        for j in -4..=4 {
            let scaled = chi.rescaled(j);
            let ok = scaled.derivative_bound() == chi.derivative_bound;
            rep.record(ok, 0.0, || format!("||chi_{j}'|| = {} differs", scaled.derivative_bound()));
        }
    }
}

impl AuditSuite for LayerMachinery {
    fn name(&self) -> &'static str {
        "layer-machinery"
    }
    fn invariant(&self) -> &'static str {
        "chi plateau/support/chi(t) <= t+1; ||chi_j'|| = ||chi'||; same-colour supports disjoint; sum_j TV_{B_j} <= 4 TV"
    }
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport> {
        let mut rep = SuiteReport::new(self.name(), self.invariant());
        for dim in [2, 3] {
            Self::profile_conditions(&mut rep, &TruncationProfile::build(dim)?, ctx.config.profile_samples);
        }
        let chi = TruncationProfile::build(2)?;
        let q = critical_exponent(2);
        let rows = ctx
            .corpus_2d
            .par_iter()
            .chain(ctx.nonnegative_2d.par_iter())
            .map(|u| -> Result<(usize, usize, f64, f64)> {
                let scales = active_scales(u);
                let (mut pairs, mut overlapping) = (0, 0);
                for (a, &j) in scales.iter().enumerate() {
                    for &k in &scales[a + 1..] {
                        if color_class(j) == color_class(k) {
                            pairs += 1;
                            if !support_disjointness_check(&chi, u, j, k)? {
                                overlapping += 1;
                            }
                        }
                    }
                }
                let r = layer_energy_audit(&chi, u, q)?;
                Ok((pairs, overlapping, r.sum_tv_b, r.tv))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (pairs, overlapping, sum_b, tv)) in rows.into_iter().enumerate() {
            rep.record(overlapping == 0, 0.0, || {
                format!("sample {i}: {overlapping} of {pairs} same-colour pairs overlap")
            });
            let ratio = if tv > 0.0 { sum_b / tv } else { 0.0 };
            rep.record(sum_b <= 4.0 * tv * (1.0 + 1e-6), ratio, || {
                format!("sample {i}: sum TV_B = {sum_b} > 4 TV = {}", 4.0 * tv)
            });
        }
        Ok(rep.finish())
    }
}

/// `TV(phi o u) <= ||phi'||_inf TV(u)`.
pub struct ChainRule;

impl AuditSuite for ChainRule {
    fn name(&self) -> &'static str {
        "chain-rule"
    }
    fn invariant(&self) -> &'static str {
        "TV(phi o u) <= ||phi'||_inf TV(u) (1 + 1e-9) for phi in {chi, t/2, smoothstep}"
    }
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport> {
        let mut rep = SuiteReport::new(self.name(), self.invariant());
        let chi: Box<dyn ScalarMap> = match ctx.config.chi_variant {
            ChiVariant::Correct => Box::new(TruncationProfile::build(2)?),
            ChiVariant::Broken => Box::new(BrokenChi::new(TruncationProfile::build(2)?)),
        };
        let maps_1d = [scalar_map("half", 1)?, scalar_map("smoothstep", 1)?];
        let maps_2d = [chi, scalar_map("half", 2)?, scalar_map("smoothstep", 2)?];
        let jobs: Vec<(usize, &GridFunction, &dyn ScalarMap)> = ctx
            .corpus_1d
            .iter()
            .flat_map(|u| maps_1d.iter().map(move |m| (1, u, m.as_ref())))
            .chain(
                ctx.corpus_2d
                    .iter()
                    .chain(&ctx.nonnegative_2d)
                    .flat_map(|u| maps_2d.iter().map(move |m| (2, u, m.as_ref()))),
            )
            .collect();
        let reports = jobs
            .par_iter()
            .map(|(_, u, m)| compose_scalar(*m, u).map(|(_, r)| r))
            .collect::<Result<Vec<_>>>()?;
        for (i, ((dim, _, _), r)) in jobs.iter().zip(reports).enumerate() {
            rep.record(r.holds, r.ratio.unwrap_or(0.0) / r.derivative_bound, || {
                format!(
                    "case {i} (N={dim}, {}): TV(phi o u) = {} > {} = {} * TV(u)",
                    r.map, r.tv_composed, r.bound, r.derivative_bound
                )
            });
        }
        Ok(rep.finish())
    }
}

/// `||u||_{1*,q} <= ||u||_{1*,1}` on bounded regions, with the embedding
/// ratio `||u||_{1*,1} / ||u||_BV` recorded.
pub struct EmbeddingMonotonicity;

impl AuditSuite for EmbeddingMonotonicity {
    fn name(&self) -> &'static str {
        "embedding-monotonicity"
    }
    fn invariant(&self) -> &'static str {
        "||u||_{1*,q} <= ||u||_{1*,1} on [-2,2)^2 for q in {1.2, 2, inf}; embedding ratio finite"
    }
    fn run(&self, ctx: &AuditContext) -> Result<SuiteReport> {
        let mut rep = SuiteReport::new(self.name(), self.invariant());
        let region = Region::cube(0, vec![-2, -2], 4);
        for (i, u) in ctx.corpus_2d.iter().enumerate() {
            for q in [1.2, 2.0, f64::INFINITY] {
                let a = embedding_audit_bv(u, &region, q)?;
                let ratio = a.embedding_ratio.unwrap_or(0.0);
                rep.record(a.monotone_holds && ratio.is_finite(), ratio, || {
                    format!("sample {i}, q={q}: {} > {}", a.lorentz_q, a.lorentz_1)
                });
            }
        }
        Ok(rep.finish())
    }
}

pub struct AuditRegistry {
    suites: Vec<Box<dyn AuditSuite>>,
}

impl Default for AuditRegistry {
    fn default() -> Self {
        Self {
            suites: vec![
                Box::new(LorentzDefinitions),
                Box::new(GroupIsometry),
                Box::new(LatticeSplitting),
                Box::new(LayerMachinery),
                Box::new(ChainRule),
                Box::new(EmbeddingMonotonicity),
            ],
        }
    }
}

impl AuditRegistry {
    pub fn empty() -> Self {
        Self { suites: Vec::new() }
    }

    pub fn register(&mut self, suite: Box<dyn AuditSuite>) {
        self.suites.retain(|s| s.name() != suite.name());
        self.suites.push(suite);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.suites.iter().map(|s| s.name()).collect()
    }

    /// Run the named suites in registry order, or all of them.
    pub fn run(&self, config: &AuditConfig, only: Option<&[String]>) -> Result<AuditReport> {
        if let Some(names) = only {
            if let Some(bad) = names.iter().find(|n| !self.names().contains(&n.as_str())) {
                return Err(Error::Usage(format!(
                    "unknown audit suite {bad}; known: {}",
                    self.names().join(", ")
                )));
            }
        }
        let ctx = AuditContext::new(config.clone())?;
        let mut warnings = Vec::new();
        if config.corpus_size == 0 {
            warnings.push("corpus size 0: corpus-based checks are vacuous".to_string());
        }
        let mut suites = Vec::new();
        for s in &self.suites {
            if only.is_none_or(|names| names.iter().any(|n| n == s.name())) {
                suites.push(s.run(&ctx)?);
            }
        }
        Ok(AuditReport {
            config: config.clone(),
            pass: suites.iter().all(|s| s.pass),
            suites,
            warnings,
        })
    }
}
