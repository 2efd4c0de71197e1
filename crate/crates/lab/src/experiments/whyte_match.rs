use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wreath_lab::groups::ball;
use wreath_lab::qi::whyte_matching;
use wreath_lab::GroupModel;

use super::{require, to_value};
use crate::config::RunConfig;
use crate::mapspec::parse_map;
use crate::report::{Check, Outcome, Table};
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Perfect,
    Deficient,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub map: String,
    pub window_radius: u64,
    /// Displacement bounds `R`, one check each.
    pub scales: Vec<u64>,
    pub expect: Expect,
    /// Least deficiency, as a fraction of the source core, when `expect` is
    /// `deficient`.
    pub min_deficiency: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            map: "identity:Z".into(),
            window_radius: 100,
            scales: vec![1, 2, 3, 4],
            expect: Expect::Perfect,
            min_deficiency: 0.25,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(Value, Outcome), RunError> {
    let p: Params = cfg.params()?;
    let f = parse_map(&p.map)?;
    require(!p.scales.is_empty(), "scales must be nonempty")?;
    require((0.0..=1.0).contains(&p.min_deficiency), "min_deficiency must lie in [0, 1]")?;
    let budget = cfg.budget();
    let mut out = Outcome::default();

    let window = ball(&f.source, &f.source.identity(), p.window_radius, &budget)?;
    let mut witness = None;
    for &r in &p.scales {
        let rep = whyte_matching(&f, &window, r, &budget)?;
        let values = json!({
            "window_size": window.len(),
            "source_core": rep.source_core,
            "target_core": rep.target_core,
            "deficiency": rep.deficiency,
            "deficiency_fraction": rep.deficiency_fraction(),
        });
        let name = format!("matching_r{r}");
        out.check(match p.expect {
            Expect::Perfect => Check::exact(name, rep.is_perfect(), values),
            Expect::Deficient => Check::within(
                name,
                rep.deficiency_fraction() >= p.min_deficiency,
                values,
                p.min_deficiency,
            ),
        });
        if witness.is_none() && rep.is_perfect() {
            let mut t = Table::new("matching.csv", &["source", "target"]);
            for (x, y) in &rep.pairs {
                t.push(vec![f.source.encode(x), f.target.encode(y)]);
            }
            witness = Some(t);
        }
    }
    if let Some(t) = witness {
        out.table(t);
    }
    Ok((to_value(&p), out))
}
