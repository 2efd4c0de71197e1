use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::aptolic::named_aptolic;
use wreath_lab::groups::ball;
use wreath_lab::wreath::bounded_support_colourings;
use wreath_lab::GroupModel;

use super::{constants_json, to_value};
use crate::config::RunConfig;
use crate::report::{Check, Outcome};
use crate::RunError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub name: String,
    pub window_radius: u64,
    pub lamp_radius: u64,
    pub support_bound: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            name: "packing".into(),
            window_radius: 4,
            lamp_radius: 1,
            support_bound: 3,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    let budget = cfg.budget();
    let map = named_aptolic(&p.name, &budget)?;
    let mut out = Outcome::default();

    let window = ball(&map.source.base, &map.source.base.identity(), p.window_radius, &budget)?;
    let bijective = map.partition.validate(&window, &budget)?;
    out.check(Check::exact(
        "partition_bijection",
        bijective,
        json!({
            "source": map.source.name(),
            "target": map.target.name(),
            "source_piece_size": map.partition.source.size,
            "target_piece_size": map.partition.target.size,
            "window_size": window.len(),
        }),
    ));

    let colourings = bounded_support_colourings(&map.source, &window, p.support_bound, p.lamp_radius, &budget)?;
    let mut images = BTreeSet::new();
    let mut round_trip_failures = 0usize;
    for c in &colourings {
        let d = map.alpha(c);
        if &map.alpha_inverse(&d) != c {
            round_trip_failures += 1;
        }
        images.insert(d);
    }
    out.check(Check::exact(
        "alpha_round_trip",
        round_trip_failures == 0 && images.len() == colourings.len(),
        json!({
            "colourings": colourings.len(),
            "distinct_images": images.len(),
            "round_trip_failures": round_trip_failures,
        }),
    ));

    let beta = map.beta();
    let declared = map.declared_constants();
    out.check(Check::exact(
        "beta_constants",
        beta.estimated_constants.is_some(),
        json!({
            "beta": beta.name,
            "constants": beta.estimated_constants.as_ref().map(constants_json),
            "claimed_factor": beta.claimed_factor.map(|k| k.to_string()),
            "declared": {"Q": declared.q, "L": declared.l, "Lprime": declared.l_prime},
        }),
    ));
    Ok((to_value(&p), out))
}
