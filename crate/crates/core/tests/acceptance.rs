//! Acceptance battery: one pass/fail line per criterion, backed by the
//! verification suites and the CLI contract.

use g2lab_core::config::{FlagOverrides, RunConfig};
use g2lab_core::report::{CheckRecord, CheckStatus};
use g2lab_core::suites::run_suites;
use std::collections::HashMap;
use std::process::Command;

fn suite_records() -> HashMap<String, CheckRecord> {
    let flags = FlagOverrides {
        suite: Some("all".to_string()),
        seed: Some(0),
        ..Default::default()
    };
    let cfg = RunConfig::resolve(None, &flags, None).expect("default config");
    run_suites(&cfg)
        .expect("suites run")
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect()
}

/// Pass iff every listed check passed; detail names the worst check.
fn criterion_from_checks(
    records: &HashMap<String, CheckRecord>,
    ids: &[&str],
) -> (bool, String) {
    let mut ok = true;
    let mut worst = String::new();
    let mut worst_ratio = -1.0f64;
    for id in ids {
        match records.get(*id) {
            Some(r) => {
                if r.status != CheckStatus::Pass {
                    ok = false;
                }
                let ratio = r.max_residual / r.tolerance.max(1e-300);
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst = format!("{}: residual {:.3e} vs tol {:.1e}", r.id, r.max_residual, r.tolerance);
                }
            }
            None => {
                ok = false;
                worst = format!("missing check record '{id}'");
            }
        }
    }
    (ok, worst)
}

fn strip_runtimes(s: &str) -> String {
    s.lines()
        .filter(|l| !l.trim_start().starts_with("\"runtime_ms\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn cli_contract() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_g2lab");
    let tmp = std::env::temp_dir();
    let out1 = tmp.join("g2lab_acceptance_1.json");
    let out2 = tmp.join("g2lab_acceptance_2.json");
    let run = |out: &std::path::Path| {
        Command::new(bin)
            .args([
                "verify",
                "--suite",
                "g2",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .expect("binary runs")
    };
    let s1 = run(&out1);
    let s2 = run(&out2);
    if s1.code() != Some(0) || s2.code() != Some(0) {
        return (false, format!("passing run exited {:?}/{:?}", s1.code(), s2.code()));
    }
    let r1 = std::fs::read_to_string(&out1).expect("report 1");
    let r2 = std::fs::read_to_string(&out2).expect("report 2");
    // reports name their own output path in config_echo; neutralize it
    let n1 = strip_runtimes(&r1).replace(out1.to_str().unwrap(), "OUT");
    let n2 = strip_runtimes(&r2).replace(out2.to_str().unwrap(), "OUT");
    if n1 != n2 {
        return (false, "equal seeds gave different reports".to_string());
    }
    // deliberate tolerance violation: too-coarse FD step on flat7
    let coarse = Command::new(bin)
        .args(["verify", "--suite", "flat7", "--fd-step", "0.5", "--seed", "11"])
        .output()
        .expect("binary runs");
    if coarse.status.code() != Some(1) {
        return (
            false,
            format!("coarse-step run exited {:?}, expected 1", coarse.status.code()),
        );
    }
    // config errors exit 2
    let bad = Command::new(bin)
        .args(["verify", "--suite", "not_a_suite"])
        .output()
        .expect("binary runs");
    if bad.status.code() != Some(2) {
        return (
            false,
            format!("bad-suite run exited {:?}, expected 2", bad.status.code()),
        );
    }
    let _ = std::fs::remove_file(&out1);
    let _ = std::fs::remove_file(&out2);
    (true, "determinism and exit codes verified".to_string())
}

#[test]
fn acceptance_criteria() {
    let records = suite_records();
    let by_checks: [(&str, &[&str]); 13] = [
        (
            "1. kernel first-variation laws",
            &["lemma2.1.derivation", "lemma2.1.commutator", "lemma2.1.adjoint", "lemma2.2.inner", "lemma2.2.star", "lemma2.2.volume"],
        ),
        (
            "2. star anticommutation and cubic symmetry",
            &["cor2.3.anticommute", "cor2.4.symmetry"],
        ),
        (
            "3. frame recipe and theta variation",
            &["eq2.phinorm", "eq8.phitheta", "lemma2.5.thetavar"],
        ),
        (
            "4. flat chart volume and Hessian",
            &["eq8.volume.flat7", "prop2.8.hessian.flat7"],
        ),
        ("5. third derivative closed form", &["prop3.4.third.flat7"]),
        (
            "6. fourth derivative identity and Euler relations",
            &["thm3.6.residual.flat7", "thm3.6.residual.t3k3", "lemma3.7.euler.flat7", "lemma3.7.euler.t3k3"],
        ),
        (
            "7. curvature: flat, nonflat, symmetric, nonpositive",
            &["prop3.8.curvature.flat7", "prop3.8.symmetries.t3k3", "prop3.8.nonflat.t3k3", "prop3.8.localsym.t3k3", "thm4.5.sectional.t3k3"],
        ),
        ("8. full torus Hessian signature", &["prop2.8.signature.full35", "prop2.8.hessian.full35"]),
        (
            "9. period decomposition and pair isomorphism",
            &["eq14.validate.period", "lemma4.1.pairiso.period", "prop4.4.pairing.period"],
        ),
        (
            "10. immersion horizontality and differentials",
            &["lemma4.2.horizontal.period", "lemma4.2.transverse.period", "thm4.3.differentials.period"],
        ),
        (
            "11. metric and cubic pullback identities",
            &["thm4.3.metric.period", "thm4.3.cubic.period"],
        ),
        (
            "12. second fundamental form residuals",
            &["thm4.5.sff.flat7", "thm4.5.sff.t3k3"],
        ),
        (
            "13. Legendrian line component",
            &["sec4.4.legendrian.period", "sec4.4.isotropy.period"],
        ),
    ];
    let mut all_ok = true;
    for (name, ids) in by_checks {
        let (ok, detail) = criterion_from_checks(&records, ids);
        println!("[{}] {} ({})", if ok { "PASS" } else { "FAIL" }, name, detail);
        all_ok &= ok;
    }
    let (ok, detail) = cli_contract();
    println!(
        "[{}] 14. report determinism and exit codes ({})",
        if ok { "PASS" } else { "FAIL" },
        detail
    );
    all_ok &= ok;
    assert!(all_ok, "some acceptance criteria failed; see lines above");
}
