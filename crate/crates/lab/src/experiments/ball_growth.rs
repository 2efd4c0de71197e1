use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::groups::{bfs_distances, growth_degree_estimate};
use wreath_lab::{BaseModel, GroupModel};

use super::{require, to_value};
use crate::config::RunConfig;
use crate::report::{Check, Outcome, Table};
use crate::RunError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub model: String,
    pub max_r: u64,
    /// Defaults to the model's known growth degree.
    pub expected_degree: Option<f64>,
    pub tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            model: "Z^2".into(),
            max_r: 40,
            expected_degree: None,
            tolerance: 0.1,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    let model: BaseModel = p.model.parse()?;
    require(p.max_r >= 4, "max_r must be at least 4")?;
    require(p.tolerance >= 0.0, "tolerance must be non-negative")?;
    let budget = cfg.budget();
    let mut out = Outcome::default();

    let rec = growth_degree_estimate(&model, p.max_r, &budget)?;
    let expected = p.expected_degree.unwrap_or(model.growth_degree() as f64);
    let gap = (rec.degree_estimate - expected).abs();
    out.check(Check::within(
        "degree_fit",
        gap <= p.tolerance,
        json!({"estimate": rec.degree_estimate, "expected": expected}),
        p.tolerance,
    ));

    let d = 1 + model.generators().len() as u64;
    let worst = rec
        .ball_sizes
        .windows(2)
        .position(|w| w[1] > d * w[0]);
    out.check(Check::exact(
        "one_step_growth",
        worst.is_none(),
        json!({"factor": d, "first_violation_radius": worst.map(|i| i + 1)}),
    ));

    // Balls around each generator, compared with those around the identity.
    let mut mismatched = Vec::new();
    for g in model.generators() {
        let dist = bfs_distances(&model, [g.clone()], Some(p.max_r), &budget, "measuring balls")?;
        let mut sphere = vec![0u64; p.max_r as usize + 1];
        for r in dist.values() {
            sphere[*r as usize] += 1;
        }
        let mut total = 0;
        let sizes: Vec<u64> = sphere
            .iter()
            .map(|s| {
                total += s;
                total
            })
            .collect();
        if sizes != rec.ball_sizes {
            mismatched.push(model.encode(&g));
        }
    }
    out.check(Check::exact(
        "vertex_transitive",
        mismatched.is_empty(),
        json!({"centres": model.generators().len(), "mismatched": mismatched}),
    ));

    let mut table = Table::new("ball_sizes.csv", &["r", "size"]);
    for (r, s) in rec.radii.iter().zip(&rec.ball_sizes) {
        table.push(vec![r.to_string(), s.to_string()]);
    }
    out.table(table);
    Ok((to_value(&p), out))
}
