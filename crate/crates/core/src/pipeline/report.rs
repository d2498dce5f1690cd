//! Consolidated `report.json` built from whatever artifacts are present.

use serde_json::{json, Map, Value};

use super::stages::{Case, CellSummary, CoeffsFile, ModesFile};
use super::store::{ArtifactStore, ARTIFACTS};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::linalg::{dot3, norm3};

fn parse(cell: &str) -> Option<f64> {
    cell.parse().ok()
}

/// Writes `report.json` and returns its content.
pub fn emit_report(store: &mut ArtifactStore) -> Result<Value> {
    let present: Vec<&str> = ARTIFACTS.iter().copied().filter(|a| store.exists(a)).collect();
    if present.is_empty() {
        return Err(Error::Missing(ARTIFACTS.iter().map(|s| s.to_string()).collect()));
    }
    let mut r = Map::new();
    let artifacts: Map<String, Value> = ARTIFACTS
        .iter()
        .map(|a| {
            (
                a.to_string(),
                store
                    .fingerprint_of(a)
                    .filter(|_| store.exists(a))
                    .map_or(Value::Null, |f| json!(f)),
            )
        })
        .collect();
    r.insert("artifacts".into(), Value::Object(artifacts));
    r.insert(
        "missing".into(),
        json!(ARTIFACTS.iter().filter(|a| !store.exists(a)).collect::<Vec<_>>()),
    );

    let cell: Option<CellSummary> = store
        .exists("cell.json")
        .then(|| store.read_json("cell.json"))
        .transpose()?;
    let coeffs: Option<CoeffsFile> = store
        .exists("coeffs.json")
        .then(|| store.read_json("coeffs.json"))
        .transpose()?;
    let modes: Option<ModesFile> = store
        .exists("modes/modes.json")
        .then(|| store.read_json("modes/modes.json"))
        .transpose()?;

    if let Some(c) = &cell {
        r.insert("cell".into(), serde_json::to_value(c).unwrap());
    }
    let case = cell.as_ref().map(|c| c.case).or(coeffs.as_ref().map(|c| c.case));
    r.insert("case".into(), json!(case));

    if let Some(c) = &coeffs {
        r.insert("coefficients".into(), serde_json::to_value(c).unwrap());
        if let (true, Some(h)) = (c.example_case, &c.homogenized) {
            let mu_dev = norm3(std::array::from_fn(|i| h.mustar[i] - h.xi[i]));
            r.insert(
                "example_identities".into(),
                json!({
                    "Mstar_minus_1": (h.big_mstar - 1.0).abs(),
                    "cstar": h.cstar,
                    "lambdastar": norm3(h.lambdastar),
                    "mustar_minus_xi": mu_dev,
                }),
            );
        }
    }

    if let (Some(m), Some(h)) = (&modes, coeffs.as_ref().and_then(|c| c.homogenized.as_ref())) {
        // K1(0) = sum_i (hbar_i . xi)^2, so M* - K1(0) - |Y1| - m* is the
        // truncation defect of the sum rule.
        let weights: Vec<f64> = m.hbar.iter().map(|hb| dot3(*hb, h.xi).powi(2)).collect();
        let k1_0: f64 = weights.iter().sum();
        let defect = h.bhat_sq_integral - k1_0;
        let mut partial = h.bhat_sq_integral;
        let monotone = weights.iter().all(|w| {
            let next = partial - w;
            let ok = next <= partial;
            partial = next;
            ok
        });
        r.insert(
            "sum_rule".into(),
            json!({
                "modes": m.count,
                "defect": defect,
                "defect_over_Y2": defect / h.inclusion_volume,
                "nonincreasing_in_N": monotone,
            }),
        );
        r.insert("K1_0".into(), json!(k1_0));
        r.insert("Mstar_minus_K1_0".into(), json!(h.big_mstar - k1_0));
        r.insert("Y1".into(), json!(h.matrix_volume));
        r.insert(
            "remark_identity_defect".into(),
            json!((h.big_mstar - k1_0 - h.matrix_volume - h.mstar).abs()),
        );
    } else if let Some(m) = &modes {
        r.insert(
            "modes".into(),
            json!({ "count": m.count, "max_residual": m.max_residual }),
        );
    }

    if store.exists("kernel.csv") {
        let (_, rows) = store.read_csv("kernel.csv")?;
        let mut worst: Option<(f64, f64)> = None;
        for row in &rows {
            if let (Some(t), Some(s), Some(w)) = (parse(&row[0]), parse(&row[1]), parse(&row[2])) {
                let d = (s - w).abs();
                if worst.is_none_or(|(_, m)| d > m) {
                    worst = Some((t, d));
                }
            }
        }
        let y2 = cell.as_ref().map(|c| c.inclusion_volume);
        r.insert(
            "kernel_dual_route".into(),
            match (worst, y2) {
                (Some((t, d)), Some(y2)) => {
                    json!({ "max_deviation": d, "over_Y2": d / y2, "at_t": t })
                }
                (Some((t, d)), None) => json!({ "max_deviation": d, "at_t": t }),
                _ => Value::Null,
            },
        );
    }

    if store.exists("macro.csv") {
        let (_, rows) = store.read_csv("macro.csv")?;
        if let Some(last) = rows.last() {
            let max_alpha = rows.iter().filter_map(|r| parse(&r[3])).fold(0.0, f64::max);
            r.insert(
                "macro".into(),
                json!({
                    "steps": rows.len() - 1,
                    "t_end": parse(&last[0]),
                    "final_mean_alpha": parse(&last[1]),
                    "max_abs_alpha": max_alpha,
                }),
            );
        }
    }

    if store.exists("converge.csv") {
        let (_, rows) = store.read_csv("converge.csv")?;
        let table: Vec<[f64; 3]> = rows
            .iter()
            .filter_map(|r| Some([parse(&r[0])?, parse(&r[1])?, parse(&r[2])?]))
            .collect();
        r.insert(
            "convergence".into(),
            json!(table
                .iter()
                .map(|t| json!({ "eps": t[0], "err_hard_phase": t[1], "err_soft_phase": t[2] }))
                .collect::<Vec<_>>()),
        );
        let mut sorted = table.clone();
        sorted.sort_by(|a, b| b[0].total_cmp(&a[0]));
        let ratios: Vec<f64> = sorted.windows(2).map(|w| w[0][1] / w[1][1]).collect();
        let decreasing = !ratios.is_empty() && ratios.iter().all(|q| *q > 1.0);
        if case == Some(Case::I) {
            r.insert("frozen_hard_phase".into(), json!(decreasing));
        } else {
            r.insert("hard_phase_error_decreasing".into(), json!(decreasing));
        }
        r.insert("hard_phase_trend".into(), json!(ratios));
    }

    if store.exists("check.json") {
        let checks: Value = store.read_json("check.json")?;
        let all = checks
            .as_array()
            .is_some_and(|a| a.iter().all(|c| c["passed"].as_bool() == Some(true)));
        r.insert("invariants".into(), checks);
        r.insert("all_invariants_passed".into(), json!(all));
    }

    let value = Value::Object(r);
    let fp = fingerprint::of_json("report", &value["artifacts"]);
    store.write_json("report.json", &value, &fp)?;
    Ok(value)
}
