//! Acceptance run: one PASS/FAIL line per criterion, driven through the
//! `cocompact` binary. Reference values are recomputed here (closed forms,
//! an independent least-squares fit, an independent TV on the truth grids)
//! rather than read back from the tool.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use cocompact::io::load_grid;
use serde_json::Value;

struct Run {
    out: Output,
    elapsed: Duration,
}

impl Run {
    fn doc(&self) -> Value {
        serde_json::from_slice(&self.out.stdout).unwrap_or(Value::Null)
    }

    fn code(&self) -> Option<i32> {
        self.out.status.code()
    }
}

fn cocompact(args: &[&str]) -> Run {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_cocompact"))
        .args(args)
        .output()
        .expect("cannot start cocompact");
    Run {
        out,
        elapsed: start.elapsed(),
    }
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    let ln: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let m = ln.len() as f64;
    let mx = ln.iter().map(|p| p.0).sum::<f64>() / m;
    let my = ln.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = ln.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = ln.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

/// Isotropic forward-difference variation of a 2-d grid function, with
/// zero extension outside its box.
fn isotropic_tv_2d(path: &Path) -> f64 {
    let u = load_grid(path).unwrap();
    let (o, e, v) = (u.origin(), u.extents(), u.values());
    let at = |i: i64, j: i64| -> f64 {
        let (a, b) = (i - o[0], j - o[1]);
        if a < 0 || b < 0 || a >= e[0] as i64 || b >= e[1] as i64 {
            0.0
        } else {
            v[a as usize * e[1] + b as usize]
        }
    };
    let mut acc = 0.0;
    for i in o[0] - 1..o[0] + e[0] as i64 {
        for j in o[1] - 1..o[1] + e[1] as i64 {
            let c = at(i, j);
            acc += (at(i + 1, j) - c).hypot(at(i, j + 1) - c);
        }
    }
    acc * u.cell_width()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

type Verdict = (bool, String);

fn counterexample_reproduction() -> Verdict {
    let run = cocompact(&["counterexample", "--dim", "2", "--n-max", "12", "--q-list", "1,1.5,2"]);
    let doc = run.doc();
    let rows = doc["report"]["table"]["rows"].as_array().cloned().unwrap_or_default();
    if run.code() != Some(0) || rows.len() != 12 {
        return (false, format!("exit {:?}, {} rows", run.code(), rows.len()));
    }
    let mut l2_err: f64 = 0.0;
    let mut f0_err: f64 = 0.0;
    let mut f0_min = f64::INFINITY;
    let mut cols = vec![Vec::new(); 3];
    for r in &rows {
        let n = f(&r["n"]);
        l2_err = l2_err.max((f(&r["l1star"]) - (3.0 * PI / n).sqrt()).abs() / (3.0 * PI / n).sqrt());
        f0_err = f0_err.max((f(&r["f0"]) - 2.0 * PI).abs() / (2.0 * PI));
        f0_min = f0_min.min(f(&r["f0"]));
        for (c, v) in cols.iter_mut().zip(r["lorentz"].as_array().unwrap()) {
            c.push((n, f(v)));
        }
    }
    let l21_ratio = cols[0].iter().map(|p| p.1).fold(f64::INFINITY, f64::min) / cols[0][0].1;
    let s15 = log_log_slope(&cols[1]);
    let s2 = log_log_slope(&cols[2]);
    let ok = l2_err <= 1e-10
        && f0_err <= 1e-12
        && f0_min >= 1.5 * PI
        && l21_ratio >= 0.5
        && (s15 - (1.0 / 1.5 - 1.0)).abs() <= 0.1
        && (s2 - (0.5 - 1.0)).abs() <= 0.1
        && run.elapsed < Duration::from_secs(1);
    (
        ok,
        format!(
            "L2 rel err {l2_err:.1e}, f0 rel err {f0_err:.1e}, min f0 {f0_min:.6} >= {:.6}, L21 min/first {l21_ratio:.4}, \
             slope q=1.5 {s15:.4} (want -0.3333), q=2 {s2:.4} (want -0.5), {:.3}s",
            1.5 * PI,
            run.elapsed.as_secs_f64()
        ),
    )
}

/// Runs one audit suite; `worst_limit` bounds the suite's worst observed value.
fn audit_suite(name: &str, min_cases: u64, worst_limit: Option<f64>) -> Verdict {
    let run = cocompact(&["audit", "--corpus-size", "50", "--suite", name]);
    let doc = run.doc();
    let s = &doc["report"]["audit"]["suites"][0];
    let (cases, violations, worst) = (s["cases"].as_u64().unwrap_or(0), s["violations"].as_u64(), f(&s["worst"]));
    let ok = run.code() == Some(0)
        && s["name"] == name
        && s["pass"] == true
        && violations == Some(0)
        && cases >= min_cases
        && worst_limit.is_none_or(|w| worst <= w);
    (ok, format!("{name}: {cases} cases, {} violations, worst {worst:.3e}", violations.map_or("?".into(), |v| v.to_string())))
}

fn profile_extraction() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let fx = cocompact(&["--out", seq.to_str().unwrap(), "fixture", "two-profile", "--level", "6", "--k-max", "8"]);
    if fx.code() != Some(0) {
        return (false, format!("fixture exit {:?}", fx.code()));
    }
    let truth = [
        isotropic_tv_2d(&seq.join("truth/w1.grid")),
        isotropic_tv_2d(&seq.join("truth/w2.grid")),
    ];
    // the cone of height 1 and radius 3/4 has variation 3 pi / 4 in the continuum
    let cone_gap = (truth[0] - 0.75 * PI).abs() / (0.75 * PI);

    let run = cocompact(&["decompose", seq.to_str().unwrap()]);
    let doc = run.doc();
    let r = &doc["report"];
    let profiles = r["decomposition"]["profiles"].as_array().cloned().unwrap_or_default();
    let tv_gap = if profiles.len() == 2 {
        profiles
            .iter()
            .zip(truth)
            .map(|(p, t)| (f(&p["tv"]) - t).abs() / t)
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let remainder_ratio = r["decomposition"]["remainder_norms"]
        .as_array()
        .map(|v| v.iter().map(|x| f(&x["remainder"]) / f(&x["initial"])).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);
    let sep = r["audits"]["separation"]["pass"] == true;
    let energy = r["audits"]["energy"]["pass"] == true && f(&r["audits"]["energy"]["delta"]) == 0.1;
    let ok = run.code() == Some(0)
        && cone_gap <= 0.02
        && tv_gap <= 0.05
        && remainder_ratio <= 0.1
        && sep
        && energy
        && run.elapsed < Duration::from_secs(60);
    (
        ok,
        format!(
            "{} profiles, TV gap {tv_gap:.2e} vs truth {:.5}/{:.5}, remainder ratio {remainder_ratio:.2e}, \
             separation {sep}, energy {energy}, {:.2}s",
            profiles.len(),
            truth[0],
            truth[1],
            run.elapsed.as_secs_f64()
        ),
    )
}

fn cocompactness_consistency() -> Verdict {
    let run = cocompact(&["counterexample", "--n-max", "12", "--q-list", "1,1.5,2"]);
    let doc = run.doc();
    let rows = doc["report"]["vanishing"]["rows"].as_array().cloned().unwrap_or_default();
    if rows.len() != 12 {
        return (false, format!("{} probe rows", rows.len()));
    }
    let probe: Vec<(f64, f64)> = rows.iter().map(|r| (f(&r["n"]), f(&r["probe_max_mass"]))).collect();
    let tail = log_log_slope(&probe[6..]);
    let full = log_log_slope(&probe);
    let col = |k: usize| -> (f64, f64) {
        let first = f(&rows[0]["lorentz"][k]);
        (first, f(&rows[11]["lorentz"][k]) / first)
    };
    let (_, q1) = col(0);
    let (_, q15) = col(1);
    let (_, q2) = col(2);
    let ok = (tail + 1.0).abs() <= 0.2 && q1 >= 0.5 && q15 < 0.5 && q2 < 0.5 && q15 < q1 && q2 < q15;
    (
        ok,
        format!(
            "probe slope n=7..12 {tail:.3} (full range {full:.3}); ||u_12||/||u_1|| q=1 {q1:.3}, q=1.5 {q15:.3}, q=2 {q2:.3}"
        ),
    )
}

fn negative_control() -> Verdict {
    let run = cocompact(&["audit", "--broken-chi"]);
    let doc = run.doc();
    let stderr = String::from_utf8_lossy(&run.out.stderr);
    let failed = doc["report"]["failed_invariants"].clone();
    let ok = run.code() == Some(1) && stderr.contains("chain-rule") && failed == serde_json::json!(["chain-rule"]);
    (ok, format!("exit {}, failed invariants {failed}", run.code().map_or("none".into(), |c| c.to_string())))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("counterexample reproduction", counterexample_reproduction),
        ("Lorentz definition equality", || audit_suite("lorentz-definitions", 50, Some(1e-10))),
        ("group isometry", || audit_suite("group-isometry", 100, Some(1e-12))),
        ("lattice splitting estimate", || audit_suite("lattice-splitting", 100, None)),
        ("layer machinery", || audit_suite("layer-machinery", 1000, Some(4.0 * (1.0 + 1e-6)))),
        ("chain rule", || audit_suite("chain-rule", 100, Some(1.0 + 1e-9))),
        ("profile extraction", profile_extraction),
        ("cocompactness consistency", cocompactness_consistency),
        ("negative control", negative_control),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        all &= ok;
        println!("{} criterion {} ({name}): {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
