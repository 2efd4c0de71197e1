//! The experiment registry. Checks are emitted in a fixed order per
//! experiment, so reports never depend on evaluation order.

mod ball_growth;
mod build_aptolic;
mod dihedral_pipeline;
mod scaling_certify;
mod verify_aptolic;
mod whyte_match;
mod wreath_oracle;

use num_traits::ToPrimitive;
use serde::Serialize;
use serde_json::Value;
use wreath_lab::qi::{DefectRow, QiConstants, ScalingCertificate};
use wreath_lab::Rational;

use crate::config::RunConfig;
use crate::report::{Outcome, Table};
use crate::RunError;

pub type RunFn = fn(&RunConfig) -> Result<(Value, Outcome), RunError>;

pub struct Experiment {
    pub name: &'static str,
    pub summary: &'static str,
    pub run: RunFn,
}

pub const EXPERIMENTS: [Experiment; 7] = [
    Experiment {
        name: "ball-growth",
        summary: "ball sizes, growth-degree fit and Cayley-graph sanity checks",
        run: ball_growth::run,
    },
    Experiment {
        name: "wreath-distance-oracle",
        summary: "closed-form lamplighter distance against breadth-first search",
        run: wreath_oracle::run,
    },
    Experiment {
        name: "scaling-certify",
        summary: "defect table and Følner-ratio factor of a base map",
        run: scaling_certify::run,
    },
    Experiment {
        name: "whyte-match",
        summary: "bounded-displacement matching between a window and its image",
        run: whyte_match::run,
    },
    Experiment {
        name: "build-aptolic",
        summary: "construct a named aptolic map and check its building blocks",
        run: build_aptolic::run,
    },
    Experiment {
        name: "verify-aptolic",
        summary: "aptolicity conditions, coset unions and scaling of a named map",
        run: verify_aptolic::run,
    },
    Experiment {
        name: "dihedral-pipeline",
        summary: "Dinf to Z composite, its matching witness and the lifted map",
        run: dihedral_pipeline::run,
    },
];

pub fn find(name: &str) -> Option<&'static Experiment> {
    EXPERIMENTS.iter().find(|e| e.name == name)
}

pub fn names() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|e| e.name).collect()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("parameters serialize to JSON")
}

fn approx(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn parse_rational(s: &str) -> Result<Rational, RunError> {
    s.trim()
        .parse::<Rational>()
        .map_err(|_| RunError::Config(format!("cannot parse rational {s:?}")))
}

fn constants_json(c: &QiConstants) -> Value {
    serde_json::json!([c.c.to_string(), c.k])
}

#[derive(Serialize)]
struct RowView {
    n: u64,
    size: u64,
    preimage_size: u64,
    boundary: u64,
    defect: String,
}

/// `{factor, defect_constant, rows}` with rationals written as `p/q`.
fn certificate_json(c: &ScalingCertificate) -> Value {
    let rows: Vec<RowView> = c
        .rows
        .iter()
        .map(|r: &DefectRow| RowView {
            n: r.n,
            size: r.size,
            preimage_size: r.preimage_size,
            boundary: r.boundary,
            defect: r.defect.to_string(),
        })
        .collect();
    serde_json::json!({
        "factor": c.factor.to_string(),
        "defect_constant": c.defect_constant.to_string(),
        "rows": rows,
    })
}

fn defect_table(file: &str, c: &ScalingCertificate) -> Table {
    let mut t = Table::new(file, &["n", "size", "preimage_size", "boundary", "defect"]);
    for r in &c.rows {
        t.push(vec![
            r.n.to_string(),
            r.size.to_string(),
            r.preimage_size.to_string(),
            r.boundary.to_string(),
            r.defect.to_string(),
        ]);
    }
    t
}

fn ratio_table(file: &str, scales: &[u64], ratios: &[Rational]) -> Table {
    let mut t = Table::new(file, &["n", "ratio", "approx"]);
    for (n, r) in scales.iter().zip(ratios) {
        t.push(vec![n.to_string(), r.to_string(), approx(*r).to_string()]);
    }
    t
}

fn require(ok: bool, msg: &str) -> Result<(), RunError> {
    if ok {
        Ok(())
    } else {
        Err(RunError::Config(msg.to_string()))
    }
}
