use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::groups::bfs_distances;
use wreath_lab::wreath::wreath_distance;
use wreath_lab::{GroupModel, WreathElement, WreathModel};

use super::{require, to_value};
use crate::config::RunConfig;
use crate::report::{Check, Outcome};
use crate::RunError;

const REPORTED_MISMATCHES: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub model: String,
    pub radius: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            model: "Z_2 wr Z".into(),
            radius: 6,
        }
    }
}

/// Every pair `x, y` of the radius-`R` ball is compared against the search
/// distance of `x⁻¹y` from the identity, which lies in the radius-`2R` ball.
pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    let w: WreathModel = p.model.parse()?;
    require(p.radius >= 1, "radius must be at least 1")?;
    let budget = cfg.budget();
    let mut out = Outcome::default();

    let dist = bfs_distances(&w, [w.identity()], Some(2 * p.radius), &budget, "building the search oracle")?;
    let mut ball: Vec<&WreathElement> = dist
        .iter()
        .filter(|(_, d)| **d <= p.radius)
        .map(|(x, _)| x)
        .collect();
    ball.sort();

    let mut pairs = 0u64;
    let mut mismatches = 0u64;
    let mut examples = Vec::new();
    for (i, x) in ball.iter().enumerate() {
        let x_inv = w.inverse(x);
        for y in &ball[i..] {
            pairs += 1;
            let searched = dist[&w.multiply(&x_inv, y)];
            let formula = wreath_distance(&w, x, y, &budget)?;
            if formula != searched {
                mismatches += 1;
                if examples.len() < REPORTED_MISMATCHES {
                    examples.push(json!({
                        "x": w.encode(x),
                        "y": w.encode(y),
                        "formula": formula,
                        "search": searched,
                    }));
                }
            }
        }
    }
    out.check(Check::exact(
        "oracle_agreement",
        pairs > 0 && mismatches == 0,
        json!({
            "ball_size": ball.len(),
            "search_radius": 2 * p.radius,
            "search_size": dist.len(),
            "pairs_checked": pairs,
            "mismatches": mismatches,
            "examples": examples,
        }),
    ));
    Ok((to_value(&p), out))
}
