use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::qi::{estimate_scaling_factor, scaling_defect, EstimateConfig};
use wreath_lab::sets::{folner_family, FolnerSpec};

use super::{
    approx, certificate_json, constants_json, defect_table, parse_rational, ratio_table, require, to_value,
};
use crate::config::RunConfig;
use crate::mapspec::parse_map;
use crate::report::{Check, Outcome};
use crate::RunError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub map: String,
    /// Factor to certify, e.g. `"3/2"`; defaults to the map's claimed factor.
    pub factor: Option<String>,
    pub family: FolnerSpec,
    pub count: usize,
    pub tolerance: f64,
    pub estimate_radius: u64,
    pub estimate_samples: usize,
    /// Exact defect constant the certificate must report.
    pub expected_defect_constant: Option<String>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            map: "lattice:1:2:1".into(),
            factor: None,
            family: FolnerSpec::default(),
            count: 5,
            tolerance: 0.05,
            estimate_radius: 12,
            estimate_samples: 200,
            expected_defect_constant: None,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    let f = parse_map(&p.map)?;
    let k = match &p.factor {
        Some(s) => parse_rational(s)?,
        None => f
            .claimed_factor
            .ok_or_else(|| RunError::Config(format!("map {} claims no factor; set params.factor", p.map)))?,
    };
    let expected_c = p.expected_defect_constant.as_deref().map(parse_rational).transpose()?;
    require(p.count >= 1, "count must be at least 1")?;
    require(p.tolerance >= 0.0, "tolerance must be non-negative")?;
    let budget = cfg.budget();
    let mut out = Outcome::default();

    let f = f.estimated(p.estimate_radius, p.estimate_samples, cfg.seed, &EstimateConfig::default(), &budget)?;
    let constants = f.estimated_constants.expect("just estimated");
    let family = folner_family(&f.target, &p.family, p.count, &budget)?;
    let cert = scaling_defect(&f, k, &family, None, &budget)?;
    let est = estimate_scaling_factor(&f, &family, None, &budget)?;

    out.check(Check::exact(
        "defect_bounded",
        !cert.defect_ratio_growing(),
        json!({
            "map": f.name,
            "constants": constants_json(&constants),
            "certificate": certificate_json(&cert),
        }),
    ));
    if let Some(c) = expected_c {
        out.check(Check::exact(
            "defect_constant",
            cert.defect_constant == c,
            json!({"expected": c.to_string(), "found": cert.defect_constant.to_string()}),
        ));
    }
    let err = est.relative_error(k);
    out.check(Check::within(
        "ratio_converges",
        err <= p.tolerance,
        json!({
            "factor": k.to_string(),
            "extrapolated": est.extrapolated.to_string(),
            "extrapolated_approx": approx(est.extrapolated),
            "relative_error": err,
        }),
        p.tolerance,
    ));
    out.table(defect_table("defect_table.csv", &cert));
    out.table(ratio_table("ratios.csv", &est.scales, &est.ratios));
    Ok((to_value(&p), out))
}
