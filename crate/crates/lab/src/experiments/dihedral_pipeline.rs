use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::aptolic::lift_base_bilipschitz;
use wreath_lab::groups::ball;
use wreath_lab::qi::{
    attach_matching_witness, build_scaling_qi_lattice, compose_qi, dihedral_projection_qi,
    estimate_qi_constants, estimate_scaling_factor, quasi_inverse_of, whyte_matching, EstimateConfig,
    QiConstants,
};
use wreath_lab::sets::{folner_family, FolnerSpec};
use wreath_lab::{BaseModel, GroupModel, LabError, Rational};

use super::{approx, constants_json, ratio_table, require, to_value};
use crate::config::RunConfig;
use crate::report::{Check, Outcome, Table};
use crate::RunError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub window_radius: u64,
    pub r: u64,
    pub count: usize,
    pub tolerance: f64,
    pub estimate_radius: u64,
    pub estimate_samples: usize,
    pub lift_lamp: String,
    /// Window radius for the base witness fit; the lifted fit uses `lift_window_radius`.
    pub witness_window_radius: u64,
    pub lift_window_radius: u64,
    pub lift_samples: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            window_radius: 100,
            r: 4,
            count: 5,
            tolerance: 0.05,
            estimate_radius: 12,
            estimate_samples: 200,
            lift_lamp: "Z_2".into(),
            witness_window_radius: 40,
            lift_window_radius: 5,
            lift_samples: 300,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    require(p.count >= 1, "count must be at least 1")?;
    require(p.witness_window_radius <= p.window_radius, "witness_window_radius must not exceed window_radius")?;
    let lamp: BaseModel = p.lift_lamp.parse()?;
    let budget = cfg.budget();
    let mut out = Outcome::default();

    let dinf = BaseModel::InfiniteDihedral;
    let double = quasi_inverse_of(&build_scaling_qi_lattice(1, 2, 1)?)?;
    let composite = compose_qi(&double, &dihedral_projection_qi())?;
    out.check(Check::exact(
        "claimed_factor_one",
        composite.claimed_factor == Some(Rational::from_integer(1)),
        json!({"map": composite.name, "claimed_factor": composite.claimed_factor.map(|k| k.to_string())}),
    ));

    let estimated = composite
        .clone()
        .estimated(p.estimate_radius, p.estimate_samples, cfg.seed, &EstimateConfig::default(), &budget)?;
    let family = folner_family(&composite.target, &FolnerSpec::default(), p.count, &budget)?;
    let est = estimate_scaling_factor(&estimated, &family, None, &budget)?;
    let err = est.relative_error(Rational::from_integer(1));
    out.check(Check::within(
        "folner_ratio",
        err <= p.tolerance,
        json!({
            "constants": estimated.estimated_constants.as_ref().map(constants_json),
            "extrapolated": est.extrapolated.to_string(),
            "extrapolated_approx": approx(est.extrapolated),
            "relative_error": err,
        }),
        p.tolerance,
    ));
    out.table(ratio_table("ratios.csv", &est.scales, &est.ratios));

    let window = ball(&dinf, &dinf.identity(), p.window_radius, &budget)?;
    let rep = whyte_matching(&composite, &window, p.r, &budget)?;
    out.check(Check::exact(
        "matching_perfect",
        rep.is_perfect(),
        json!({
            "window_size": window.len(),
            "source_core": rep.source_core,
            "target_core": rep.target_core,
            "deficiency": rep.deficiency,
        }),
    ));
    let mut t = Table::new("matching.csv", &["source", "target"]);
    for (x, y) in &rep.pairs {
        t.push(vec![dinf.encode(x), composite.target.encode(y)]);
    }
    out.table(t);

    // Bilipschitz fits: K is pinned to zero.
    let bilipschitz = EstimateConfig {
        k_max: 0,
        ..EstimateConfig::default()
    };
    let lift_check = match attach_matching_witness(composite, &rep) {
        Ok(witnessed) => {
            let base = estimate_qi_constants(
                &witnessed.witness_map()?,
                p.witness_window_radius,
                p.lift_samples,
                cfg.seed,
                &bilipschitz,
                &budget,
            );
            let lifted = lift_base_bilipschitz(lamp, &witnessed)?;
            let lift = estimate_qi_constants(&lifted, p.lift_window_radius, p.lift_samples, cfg.seed, &bilipschitz, &budget);
            let base = no_fit_as_none(base)?;
            let lift = no_fit_as_none(lift)?;
            let ok = matches!((&base, &lift), (Some(b), Some(l)) if l.c <= b.c);
            Check::exact(
                "lifted_bilipschitz",
                ok,
                json!({
                    "lifted": lifted.name,
                    "witness_constants": base.as_ref().map(constants_json),
                    "lift_constants": lift.as_ref().map(constants_json),
                }),
            )
        }
        Err(e) => Check::exact("lifted_bilipschitz", false, json!({"error": e.to_string()})),
    };
    out.check(lift_check);
    Ok((to_value(&p), out))
}

/// A failed fit is a property failure; anything else aborts the run.
fn no_fit_as_none(r: Result<QiConstants, LabError>) -> Result<Option<QiConstants>, RunError> {
    match r {
        Ok(c) => Ok(Some(c)),
        Err(LabError::NoFit { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}
