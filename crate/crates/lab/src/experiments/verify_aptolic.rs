use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::aptolic::{
    check_aptolicity, coset_union_check, named_aptolic, relative_gap, verify_scaling_conclusion,
    wreath_transfer_ratios, AptolicityReport,
};
use wreath_lab::sets::FolnerSpec;
use wreath_lab::{FiniteSubset, GroupModel};

use super::{approx, certificate_json, constants_json, defect_table, ratio_table, require, to_value};
use crate::config::RunConfig;
use crate::report::{Check, Outcome, Table};
use crate::RunError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub name: String,
    /// Base-ball radii of the aptolicity windows, smallest first.
    pub window_radii: Vec<u64>,
    pub lamp_radius: u64,
    pub support_bound: usize,
    /// `false` for maps the checker must reject.
    pub expect_aptolic: bool,
    /// Base sets, as encoded elements, for the coset-union check.
    pub coset_sets: Vec<Vec<String>>,
    pub coset_lamp_radius: u64,
    /// Defaults to the declared `Q`.
    pub q_prime: Option<u64>,
    pub expect_coset_union: bool,
    pub scaling_count: usize,
    pub tolerance: f64,
    pub transfer_scales: Vec<u64>,
    pub transfer_tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            name: "identity".into(),
            window_radii: vec![3, 5],
            lamp_radius: 2,
            support_bound: 2,
            expect_aptolic: true,
            coset_sets: vec![vec!["0".into()], vec!["0".into(), "1".into()], vec!["0".into(), "1".into(), "2".into()]],
            coset_lamp_radius: 2,
            q_prime: None,
            expect_coset_union: true,
            scaling_count: 8,
            tolerance: 0.05,
            transfer_scales: vec![2, 4, 6],
            transfer_tolerance: 0.1,
        }
    }
}

/// `{bijective, beta_constants: [C, K], Q, L, Lprime, counterexample}`.
fn condition_json(r: &AptolicityReport) -> Value {
    json!({
        "bijective": r.bijective,
        "beta_constants": r.beta_constants.as_ref().map(constants_json),
        "Q": r.q,
        "L": r.l,
        "Lprime": r.l_prime,
        "counterexample": r.counterexample,
        "colourings_checked": r.colourings_checked,
        "pairs_checked": r.pairs_checked,
    })
}

pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    require(!p.window_radii.is_empty(), "window_radii must be nonempty")?;
    require(p.scaling_count >= 1, "scaling_count must be at least 1")?;
    let budget = cfg.budget();
    let map = named_aptolic(&p.name, &budget)?;
    let base = map.source.base;
    let mut coset_sets = Vec::with_capacity(p.coset_sets.len());
    for s in &p.coset_sets {
        let elems = s.iter().map(|e| base.decode(e)).collect::<Result<Vec<_>, _>>()?;
        require(!elems.is_empty(), "coset sets must be nonempty")?;
        coset_sets.push(FiniteSubset::new(&base, elems)?);
    }
    let mut out = Outcome::default();

    let reports = p
        .window_radii
        .iter()
        .map(|&r| check_aptolicity(&map, r, p.lamp_radius, p.support_bound, &budget))
        .collect::<Result<Vec<_>, _>>()?;
    if p.expect_aptolic {
        for (r, rep) in p.window_radii.iter().zip(&reports) {
            out.check(Check::exact(format!("aptolicity_r{r}"), rep.passed(), condition_json(rep)));
        }
        let constants: Vec<_> = reports.iter().map(|r| r.constants()).collect();
        out.check(Check::exact(
            "constants_stable",
            constants.windows(2).all(|w| w[0] == w[1]),
            json!({"QLLprime": constants}),
        ));
    } else {
        let found: Vec<Value> = p
            .window_radii
            .iter()
            .zip(&reports)
            .filter(|(_, rep)| !rep.passed())
            .map(|(r, rep)| json!({"window_radius": r, "report": condition_json(rep)}))
            .collect();
        out.check(Check::exact("mutation_rejected", !found.is_empty(), json!({"rejections": found})));
    }

    let q_prime = p.q_prime.unwrap_or(map.declared_constants().q);
    let mut coset_values = Vec::new();
    let mut all_passed = true;
    for (raw, a) in p.coset_sets.iter().zip(&coset_sets) {
        let rep = coset_union_check(&map, a, q_prime, p.coset_lamp_radius, &budget)?;
        all_passed &= rep.passed;
        coset_values.push(json!({
            "set": raw,
            "passed": rep.passed,
            "target_colourings": rep.target_colourings,
            "products_checked": rep.products_checked,
            "witness": rep.witness,
        }));
    }
    let coset_values = json!({"q_prime": q_prime, "sets": coset_values});
    if p.expect_coset_union {
        out.check(Check::exact("coset_union", all_passed, coset_values));
    } else {
        out.check(Check::exact("coset_union_rejected", !all_passed, coset_values));
    }

    let degrees = (
        map.source.lamp.growth_degree() as u64,
        map.target.lamp.growth_degree() as u64,
    );
    let conclusion = verify_scaling_conclusion(&map, &FolnerSpec::default(), p.scaling_count, degrees, &budget)?;
    let last = *conclusion.image_ratios.last().expect("scaling_count >= 1");
    let gap = relative_gap(last, conclusion.expected_factor);
    out.check(Check::within(
        "beta_scaling",
        !conclusion.certificate.defect_ratio_growing() && gap <= p.tolerance,
        json!({
            "lamp_degrees": [degrees.0, degrees.1],
            "expected_factor": conclusion.expected_factor.to_string(),
            "k": conclusion.k,
            "certificate": certificate_json(&conclusion.certificate),
            "last_image_ratio": last.to_string(),
            "last_image_ratio_approx": approx(last),
            "relative_gap": gap,
        }),
        p.tolerance,
    ));
    out.table(defect_table("defect_table.csv", &conclusion.certificate));
    out.table(ratio_table("image_ratios.csv", &conclusion.scales, &conclusion.image_ratios));

    let rows = wreath_transfer_ratios(&map, &p.transfer_scales, &budget)?;
    let worst = rows
        .iter()
        .map(|r| relative_gap(r.wreath_ratio, r.beta_ratio))
        .fold(0.0f64, f64::max);
    let mut table = Table::new(
        "transfer.csv",
        &["n", "lamp_radius", "wreath_size", "wreath_preimage_size", "wreath_ratio", "beta_ratio"],
    );
    for r in &rows {
        table.push(vec![
            r.n.to_string(),
            r.lamp_radius.to_string(),
            r.wreath_size.to_string(),
            r.wreath_preimage_size.to_string(),
            r.wreath_ratio.to_string(),
            r.beta_ratio.to_string(),
        ]);
    }
    out.check(Check::within(
        "wreath_transfer",
        !rows.is_empty() && worst <= p.transfer_tolerance,
        json!({
            "scales": p.transfer_scales,
            "wreath_ratios": rows.iter().map(|r| r.wreath_ratio.to_string()).collect::<Vec<_>>(),
            "beta_ratios": rows.iter().map(|r| r.beta_ratio.to_string()).collect::<Vec<_>>(),
            "worst_gap": worst,
        }),
        p.transfer_tolerance,
    ));
    out.table(table);
    Ok((to_value(&p), out))
}
