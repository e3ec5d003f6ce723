//! Plain-text one-page summary built from the JSON stage outputs.

use serde_json::Value;
use std::fmt::Write;

pub const HYPOTHESES_MET: &str = "THEOREM HYPOTHESES MET";
pub const CONCLUSION_OBSERVED: &str = "CONCLUSION OBSERVED";

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.6e}"),
        None => "n/a".into(),
    }
}

fn rule(out: &mut String, title: &str) {
    let _ = writeln!(out, "\n{title}\n{}", "-".repeat(title.len()));
}

pub fn render(flux: Option<&Value>, assumptions: Option<&Value>) -> String {
    let mut out = String::from("Enstrophy flux localization summary\n===================================\n");
    let mut failures: Vec<String> = Vec::new();
    let mut missing_conclusion: Vec<String> = Vec::new();

    match flux {
        None => failures.push("DIAGNOSTICS MISSING: no flux report found".into()),
        Some(f) if f["status"] != "ok" => {
            let _ = writeln!(out, "\nflux diagnostics: {}", f["status"].as_str().unwrap_or("unknown"));
            let _ = writeln!(out, "  {}", f["error"].as_str().unwrap_or(""));
            let q = &f["quantities"];
            let _ = writeln!(
                out,
                "  P0 = {}  E0 = {}  e0 = {}",
                num(&q["p0"]),
                num(&q["big_e0"]),
                num(&q["e0"])
            );
            failures.push(format!(
                "DIAGNOSTICS FAILED: {}",
                f["error"].as_str().unwrap_or("degenerate diagnostics")
            ));
        }
        Some(f) => flux_section(&mut out, f, &mut failures, &mut missing_conclusion),
    }

    match assumptions {
        None => failures.push("ASSUMPTIONS NOT CHECKED: no assumption report found".into()),
        Some(a) => {
            rule(&mut out, "Assumption verdicts");
            for v in a["verdicts"].as_array().into_iter().flatten() {
                let holds = v["holds"].as_bool().unwrap_or(false);
                let name = v["assumption"].as_str().unwrap_or("?");
                let detail = v["detail"].as_str().unwrap_or("");
                let _ = writeln!(out, "  [{}] {name}: {detail}", if holds { "pass" } else { "FAIL" });
                if !holds {
                    failures.push(format!("HYPOTHESIS NOT MET: {name}: {detail}"));
                }
            }
        }
    }

    out.push('\n');
    if failures.is_empty() {
        let _ = writeln!(out, "{HYPOTHESES_MET}");
    } else {
        for f in &failures {
            let _ = writeln!(out, "{f}");
        }
    }
    if flux.is_some_and(|f| f["status"] == "ok") && missing_conclusion.is_empty() {
        let _ = writeln!(out, "{CONCLUSION_OBSERVED}");
    } else {
        if missing_conclusion.is_empty() {
            missing_conclusion.push("CONCLUSION NOT OBSERVED: no flux ratios were computed".into());
        }
        for m in &missing_conclusion {
            let _ = writeln!(out, "{m}");
        }
    }
    out
}

fn flux_section(out: &mut String, f: &Value, failures: &mut Vec<String>, missing: &mut Vec<String>) {
    let r = &f["report"];
    let q = &r["quantities"];
    let range = &f["scale_range"];
    let admissible = r["assumption2"].as_bool().unwrap_or(false);
    rule(out, "Integral scale");
    let _ = writeln!(
        out,
        "  R0 = {}  T = {}  beta = {}",
        num(&r["r0"]),
        num(&r["duration"]),
        num(&r["beta"])
    );
    let _ = writeln!(
        out,
        "  P0 = {}  E0 = {}  e0 = {}",
        num(&q["p0"]),
        num(&q["big_e0"]),
        num(&q["e0"])
    );
    let _ = writeln!(out, "  sigma0 = {}", num(&r["sigma0"]));
    let _ = writeln!(out, "  sigma0 < beta R0: {}", if admissible { "yes" } else { "no" });
    let _ = writeln!(
        out,
        "  Phi0 = {}  (without temporal cutoff {})",
        num(&f["phi0"]),
        num(&f["phi0_without_cutoff"])
    );
    let _ = writeln!(
        out,
        "  scale range [{}, {}]{}",
        num(&range["lower"]),
        num(&range["upper"]),
        if range["empty"].as_bool().unwrap_or(false) {
            " is empty; only R0 reported"
        } else {
            ""
        }
    );
    if range["empty"].as_bool().unwrap_or(false) {
        failures.push("SCALE RANGE EMPTY: max(sigma0/beta, 8 dx) exceeds R0".into());
    }

    rule(out, "Ensemble-averaged flux <Phi>_R / P0");
    let _ = writeln!(
        out,
        "  {:>13}  {:<10} {:>7}  {:>13}  sign",
        "R", "ensemble", "members", "ratio"
    );
    for row in r["rows"].as_array().into_iter().flatten() {
        let ratio = row["ratio"].as_f64().unwrap_or(f64::NAN);
        let sign = if ratio > 0.0 {
            "+"
        } else if ratio < 0.0 {
            "-"
        } else {
            "0"
        };
        let _ = writeln!(
            out,
            "  {:>13}  {:<10} {:>7}  {:>13}  {sign}",
            num(&row["scale"]),
            row["ensemble"].as_str().unwrap_or("?"),
            row["n_members"].as_u64().unwrap_or(0),
            num(&row["ratio"]),
        );
    }
    let _ = writeln!(
        out,
        "  min ratio {}  max ratio {}",
        num(&r["min_ratio"]),
        num(&r["max_ratio"])
    );
    match r["k_star"].as_f64() {
        Some(k) => {
            let _ = writeln!(out, "  empirical K* (sampled ensembles only) = {k:.6e}");
        }
        None => {
            let _ = writeln!(out, "  empirical K* undefined: some ratio is not positive");
            missing.push("CONCLUSION NOT OBSERVED: not every <Phi>_R / P0 is positive".into());
        }
    }
    let _ = writeln!(
        out,
        "  max |<Psi>_R - R^3 <Phi>_R| / |<Psi>_R| = {}",
        num(&r["psi_phi_residual"])
    );

    rule(out, "Locality <Psi>_r / <Psi>_R");
    let _ = writeln!(
        out,
        "  {:>13}  {:>13}  {:>13}  {:>13}  {:>13}  {:>13}  ok",
        "r", "R", "min", "max", "lower", "upper"
    );
    for l in f["locality"].as_array().into_iter().flatten() {
        let ok = l["contained"].as_bool().unwrap_or(false);
        let _ = writeln!(
            out,
            "  {:>13}  {:>13}  {:>13}  {:>13}  {:>13}  {:>13}  {}",
            num(&l["r"]),
            num(&l["big_r"]),
            num(&l["min_ratio"]),
            num(&l["max_ratio"]),
            num(&l["lower"]),
            num(&l["upper"]),
            if ok { "yes" } else { "no" }
        );
        if !ok && r["k_star"].as_f64().is_some() {
            missing.push(format!(
                "CONCLUSION NOT OBSERVED: locality ratio for r = {} R = {} outside its band",
                num(&l["r"]),
                num(&l["big_r"])
            ));
        }
    }

    if let Some(d) = f["decomposition"].as_object() {
        rule(out, "Term decomposition at the integral scale");
        let _ = writeln!(
            out,
            "  X = {}  identity residual = {}",
            num(&d["x"]),
            num(&d["identity_residual"])
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn missing_inputs_give_failure_lines() {
        let s = render(None, None);
        assert!(s.contains("DIAGNOSTICS MISSING"));
        assert!(s.contains("CONCLUSION NOT OBSERVED"));
        assert!(!s.contains(HYPOTHESES_MET));
    }

    #[test]
    fn degenerate_report() {
        let f = json!({"status": "degenerate", "error": "P0 vanishes", "quantities": {"p0": 0.0, "big_e0": 0.0, "e0": 0.0}});
        let s = render(Some(&f), None);
        assert!(s.contains("DIAGNOSTICS FAILED: P0 vanishes"));
        assert!(!s.contains(CONCLUSION_OBSERVED) && !s.contains(HYPOTHESES_MET));
    }
}
