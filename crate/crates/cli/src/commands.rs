//! The subcommands. Each returns a JSON document and a verdict; files are
//! written only when an output directory is given.
//!
//! CSV schemas:
//!
//! * `counterexample.csv`: `n,tv_cocarea,tv_piecewise,l1star,lorentz_q<q>...,f0`
//! * `vanishing.csv`: `n,probe_max_mass,probe_j,lorentz_q<q>...`
//! * `audit_suites.csv`: `suite,cases,violations,worst,pass`

use std::fs;
use std::path::Path;

use cocompact::audit::AuditRegistry;
use cocompact::bv::{total_variation, total_variation_sum};
use cocompact::counterexample::{run_counterexample, vanishing_table, VanishingReport};
use cocompact::io::{load_grid, read_sequence_dir, save_grid, write_sequence_dir};
use cocompact::profiles::{
    energy_audit, extract_profiles, reconstruction_error, save_decomposition, separation_check, two_profile_fixture,
    SequenceSpec,
};
use cocompact::rearrange::{decreasing_rearrangement, lebesgue_norm, lorentz_norm, lorentz_norm_symmetrization};
use cocompact::{DyadicSum, Error, GridFunction, LorentzIndex, RadialStep};
use serde_json::{json, Value};

use crate::config::{FixtureKind, RunConfig};

pub struct Outcome {
    pub doc: Value,
    pub pass: bool,
}

/// Errors carry the exit code they map to.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input, exit code 2.
    Config(String),
    /// Anything else that stops a run, exit code 1.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_)
            | Error::Index(_)
            | Error::Usage(_)
            | Error::UnknownNorm(_)
            | Error::UnknownMap(_)
            | Error::Format { .. }
            | Error::UnsupportedDimension(_)
            | Error::ScaleOutOfRange { .. }
            | Error::DimensionMismatch { .. } => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CmdResult = Result<Outcome, Failure>;

fn provenance(command: &str, cfg: &RunConfig) -> Value {
    json!({
        "tool": "cocompact",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
    })
}

fn document(command: &str, cfg: &RunConfig, pass: bool, report: Value) -> Value {
    json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "command": command,
        "verdict": if pass { "PASS" } else { "FAIL" },
        "report": report,
        "provenance": provenance(command, cfg),
    })
}

pub fn write_json(path: &Path, doc: &Value) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(doc)? + "\n")?;
    Ok(())
}

fn fmt_q(q: f64) -> String {
    if q.is_infinite() {
        "inf".into()
    } else {
        q.to_string()
    }
}

fn exponent_value(x: f64) -> Value {
    if x.is_infinite() {
        json!("inf")
    } else {
        json!(x)
    }
}

enum Input {
    Radial(RadialStep),
    Grid(GridFunction),
}

/// `annulus2d`, `annulus3d`, `staircase2d:<n>`, `staircase3d:<n>`,
/// `zero2d`, `zero3d`, a `.grid` file or a radial `.csv` file.
fn load_input(name: &str, csv_dim: usize) -> Result<Input, Failure> {
    let builtin = |text: &str, stem: &str| -> Option<usize> {
        match text.strip_prefix(stem)? {
            "2d" => Some(2),
            "3d" => Some(3),
            _ => None,
        }
    };
    if let Some(dim) = builtin(name, "annulus") {
        return Ok(Input::Radial(RadialStep::annulus_indicator(dim)?));
    }
    if let Some(dim) = builtin(name, "zero") {
        return Ok(Input::Radial(RadialStep::zero(dim)));
    }
    if let Some((stem, n)) = name.split_once(':') {
        if let Some(dim) = builtin(stem, "staircase") {
            let n: u32 = n
                .parse()
                .map_err(|_| Failure::Config(format!("staircase order `{n}` is not a positive integer")))?;
            return Ok(Input::Radial(RadialStep::staircase(dim, n)?));
        }
    }
    let path = Path::new(name);
    match path.extension().and_then(|e| e.to_str()) {
        Some("grid") => Ok(Input::Grid(load_grid(path)?)),
        Some("csv") => {
            let file = fs::File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RadialStep::read_csv(csv_dim, file)
                .map(Input::Radial)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
        }
        _ => Err(Failure::Config(format!(
            "unknown input `{name}`: expected annulus2d, annulus3d, staircase2d:<n>, staircase3d:<n>, zero2d, zero3d, \
             a .grid file or a radial .csv file"
        ))),
    }
}

pub fn norms(cfg: &RunConfig) -> CmdResult {
    let n = &cfg.norms;
    let idx = LorentzIndex::new(n.p, n.q)?;
    let input = load_input(&n.input, n.dim)?;
    let (kind, dim, star, lebesgue, tv) = match &input {
        Input::Radial(u) => ("radial", u.dim(), u.to_stepfunction(), lebesgue_norm(u, n.p)?, u.total_variation()),
        Input::Grid(u) => ("grid", u.dim(), decreasing_rearrangement(u), lebesgue_norm(u, n.p)?, total_variation(u)),
    };
    let by_rearrangement = lorentz_norm(&star, idx);
    let by_symmetrization = lorentz_norm_symmetrization(&star, dim, idx);
    let scale = by_rearrangement.abs().max(by_symmetrization.abs());
    let rel = if scale == 0.0 { 0.0 } else { (by_rearrangement - by_symmetrization).abs() / scale };
    let pass = rel <= 1e-10;
    let report = json!({
        "input": n.input,
        "kind": kind,
        "dim": dim,
        "p": exponent_value(n.p),
        "q": exponent_value(n.q),
        "lorentz_rearrangement": by_rearrangement,
        "lorentz_symmetrization": by_symmetrization,
        "relative_difference": rel,
        "lebesgue": lebesgue,
        "total_variation": tv,
    });
    Ok(Outcome {
        doc: document("norms", cfg, pass, report),
        pass,
    })
}

fn vanishing_csv(report: &VanishingReport) -> Result<String, Failure> {
    let mut s = String::from("n,probe_max_mass,probe_j");
    for q in &report.q_list {
        s.push_str(&format!(",lorentz_q{}", fmt_q(*q)));
    }
    s.push('\n');
    for r in &report.rows {
        let j = r.probe_argmax.as_ref().map_or(String::new(), |g| g.j.to_string());
        s.push_str(&format!("{},{},{}", r.n, r.probe_max_mass, j));
        for v in &r.lorentz {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn counterexample(cfg: &RunConfig, out: Option<&Path>) -> CmdResult {
    let c = &cfg.counterexample;
    let table = run_counterexample(c.dim, c.n_max, &c.q_list, c.nonvanishing_floor)?;
    let vanishing = vanishing_table(c.dim, c.n_max, &c.q_list, c.probe_random_shifts, c.seed)?;
    // decay rates of the vanishing columns, reported next to the verdict
    let rate_checks: Vec<Value> = table
        .rates
        .iter()
        .filter(|r| r.q > 1.0)
        .map(|r| {
            json!({
                "q": exponent_value(r.q),
                "exponent": r.exponent,
                "expected": r.expected,
                "within_tolerance": (r.exponent - r.expected).abs() <= c.rate_tolerance,
            })
        })
        .collect();
    let pass = table.pass;
    let report = json!({
        "table": table,
        "rate_tolerance": c.rate_tolerance,
        "rate_checks": rate_checks,
        "vanishing": vanishing,
    });
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        table.write_csv(&mut csv)?;
        fs::write(dir.join("counterexample.csv"), csv)?;
        fs::write(dir.join("vanishing.csv"), vanishing_csv(&vanishing)?)?;
        fs::write(dir.join("counterexample.gp"), table.plot_script("counterexample.csv"))?;
    }
    let doc = document("counterexample", cfg, pass, report);
    if let Some(dir) = out {
        write_json(&dir.join("counterexample.json"), &doc)?;
    }
    Ok(Outcome { doc, pass })
}

pub fn decompose(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> CmdResult {
    let d = &cfg.decompose;
    let elements = read_sequence_dir(input)?;
    let seq = match d.declared_bound {
        Some(b) => SequenceSpec::new(elements, b)?,
        None => SequenceSpec::with_observed_bound(elements)?,
    };
    let dec = extract_profiles(&seq, &d.extraction)?;
    let separation = separation_check(&dec, d.separation_floor);
    let energy = energy_audit(&dec, d.energy_delta, d.energy_slack);
    let reconstruction = reconstruction_error(&dec, &seq)?;
    let scale = seq.elements().iter().map(|(_, u)| u.sup_norm()).fold(1.0, f64::max);
    let reconstruction_ok = reconstruction <= 1e-12 * scale;
    let pass = separation.pass && energy.pass && reconstruction_ok;
    let audits = json!({
        "separation": separation,
        "energy": energy,
        "reconstruction_error": reconstruction,
        "reconstruction_pass": reconstruction_ok,
    });
    let prov = provenance("decompose", cfg);
    if let Some(dir) = out {
        save_decomposition(dir, &dec, &audits, &prov)?;
    }
    let report = json!({
        "input": input.display().to_string(),
        "profiles": dec.profiles.len(),
        "decomposition": dec,
        "audits": audits,
    });
    Ok(Outcome {
        doc: document("decompose", cfg, pass, report),
        pass,
    })
}

pub fn audit(cfg: &RunConfig, out: Option<&Path>) -> CmdResult {
    let a = &cfg.audit;
    let rep = AuditRegistry::default().run(&a.audit_config(), a.suites.as_deref())?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    for s in rep.suites.iter().filter(|s| !s.pass) {
        eprintln!("invariant {} FAILED: {} of {} cases violate {}", s.name, s.violations, s.cases, s.invariant);
    }
    let pass = rep.pass;
    let failed: Vec<String> = rep.failed_invariants().iter().map(|s| s.to_string()).collect();
    let report = json!({
        "failed_invariants": failed,
        "audit": rep,
    });
    let doc = document("audit", cfg, pass, report);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("audit.json"), &doc)?;
        let mut csv = String::from("suite,cases,violations,worst,pass\n");
        for s in &rep.suites {
            csv.push_str(&format!("{},{},{},{},{}\n", s.name, s.cases, s.violations, s.worst, s.pass));
        }
        fs::write(dir.join("audit_suites.csv"), csv)?;
    }
    Ok(Outcome { doc, pass })
}

fn static_bump(level: i32) -> Result<GridFunction, Failure> {
    let u = GridFunction::from_sampler(2, level, &[-0.5, -0.5], &[0.5, 0.5], |x| {
        (0.25 - x[0] * x[0] - x[1] * x[1]).max(0.0)
    })?;
    Ok(u.trimmed().expect("nonzero bump"))
}

pub fn fixture(cfg: &RunConfig, out: Option<&Path>) -> CmdResult {
    let f = &cfg.fixture;
    let Some(dir) = out else {
        return Err(Failure::Config("fixture needs --out DIR".into()));
    };
    let (elements, truth): (Vec<(i64, DyadicSum)>, Value) = match f.kind {
        FixtureKind::TwoProfile => {
            let fx = two_profile_fixture(f.level, f.k_max)?;
            let truth_dir = dir.join("truth");
            fs::create_dir_all(&truth_dir)?;
            let prov = provenance("fixture", cfg);
            save_grid(&truth_dir.join("w1.grid"), &fx.w1, &prov)?;
            save_grid(&truth_dir.join("w2.grid"), &fx.w2, &prov)?;
            let truth = json!({
                "profiles": 2,
                "tv_w1": total_variation(&fx.w1),
                "tv_w2": total_variation(&fx.w2),
                "group_w2": "g[k, k e1]",
            });
            (fx.sequence.elements().to_vec(), truth)
        }
        FixtureKind::StaticBump => {
            let w = static_bump(f.level)?;
            let truth = json!({"profiles": 1, "tv_w1": total_variation(&w)});
            ((1..=f.k_max).map(|k| (k, DyadicSum::from_grid(w.clone()))).collect(), truth)
        }
        FixtureKind::Staircase => {
            let elements = (1..=f.k_max)
                .map(|n| {
                    let u = RadialStep::staircase(2, n as u32)?.to_grid_default(f.level)?;
                    Ok((n, DyadicSum::from_grid(u)))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            (elements, json!({"profiles": 0}))
        }
    };
    write_sequence_dir(dir, &elements)?;
    let tvs: Vec<f64> = elements.iter().map(|(_, u)| total_variation_sum(u)).collect();
    let report = json!({
        "kind": f.kind,
        "level": f.level,
        "indices": elements.iter().map(|(k, _)| *k).collect::<Vec<_>>(),
        "element_tv": tvs,
        "ground_truth": truth,
    });
    let doc = document("fixture", cfg, true, report);
    write_json(&dir.join("fixture.json"), &doc)?;
    Ok(Outcome { doc, pass: true })
}
