//! String names for the constructed base quasi-isometries.
//!
//! ```text
//! identity:<model> | lattice:<d>:<m>:<n> | translate:<t> | scale:<a>
//! inclusion:<k> | dihedral-projection | inverse(<map>) | compose(<g>,<f>)
//! ```
//!
//! `compose(g,f)` is `g ∘ f`.

use wreath_lab::qi::{
    build_scaling_qi_lattice, compose_qi, dihedral_projection_qi, finite_index_inclusion_qi,
    identity_qi, multiplication_qi, quasi_inverse_of, translation_qi, QIMap,
};
use wreath_lab::{BaseModel, LabError};

pub type BaseMap = QIMap<BaseModel, BaseModel>;

pub fn parse_map(spec: &str) -> Result<BaseMap, LabError> {
    let s = spec.trim();
    let bad = || LabError::Parse {
        what: "map spec",
        input: s.into(),
    };
    if let Some(inner) = s.strip_prefix("inverse(").and_then(|r| r.strip_suffix(')')) {
        return quasi_inverse_of(&parse_map(inner)?);
    }
    if let Some(inner) = s.strip_prefix("compose(").and_then(|r| r.strip_suffix(')')) {
        let (g, f) = split_top_level(inner).ok_or_else(bad)?;
        return compose_qi(&parse_map(g)?, &parse_map(f)?);
    }
    if s == "dihedral-projection" {
        return Ok(dihedral_projection_qi());
    }
    let (head, rest) = s.split_once(':').ok_or_else(bad)?;
    let int = |t: &str| t.trim().parse::<i64>().map_err(|_| bad());
    match head {
        "identity" => Ok(identity_qi(rest.parse::<BaseModel>()?)),
        "translate" => Ok(translation_qi(int(rest)?)),
        "scale" => multiplication_qi(int(rest)?),
        "inclusion" => finite_index_inclusion_qi(int(rest)?),
        "lattice" => {
            let parts: Vec<&str> = rest.split(':').collect();
            let [d, m, n] = parts[..] else { return Err(bad()) };
            let d = usize::try_from(int(d)?).map_err(|_| bad())?;
            build_scaling_qi_lattice(d, int(m)?, int(n)?)
        }
        _ => Err(bad()),
    }
}

/// Splits `a,b` at the single comma outside parentheses.
fn split_top_level(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    let mut cut = None;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                if cut.is_some() {
                    return None;
                }
                cut = Some(i);
            }
            _ => {}
        }
        if depth < 0 {
            return None;
        }
    }
    cut.filter(|_| depth == 0).map(|i| (&s[..i], &s[i + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use wreath_lab::{GroupElement, Rational};

    fn z(x: i64) -> GroupElement {
        GroupElement::scalar(x)
    }

    #[test]
    fn atoms() {
        assert_eq!(parse_map("lattice:1:2:1").unwrap().apply(&z(5)), z(2));
        assert_eq!(parse_map("translate:-3").unwrap().apply(&z(5)), z(2));
        assert_eq!(parse_map("scale:3").unwrap().apply(&z(5)), z(15));
        assert_eq!(parse_map("identity:Z^2").unwrap().source, BaseModel::lattice(2));
        assert_eq!(parse_map("inclusion:3").unwrap().source, BaseModel::scaled(3));
        assert_eq!(parse_map("dihedral-projection").unwrap().target, BaseModel::integers());
    }

    #[test]
    fn combinators_track_factors() {
        let f = parse_map("compose(lattice:1:3:1,lattice:1:2:1)").unwrap();
        assert_eq!(f.claimed_factor, Some(Rational::from_integer(6)));
        assert_eq!(f.apply(&z(13)), z(2));
        let g = parse_map("inverse(lattice:1:2:1)").unwrap();
        assert_eq!(g.claimed_factor, Some(Rational::new(1, 2)));
        let h = parse_map("compose(inverse(lattice:1:2:1),dihedral-projection)").unwrap();
        assert_eq!(h.claimed_factor, Some(Rational::from_integer(1)));
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", "lattice:1:2", "scale:x", "compose(a)", "compose(scale:2,scale:2,scale:2)", "warp:2"] {
            assert!(parse_map(s).is_err(), "{s}");
        }
        assert!(matches!(
            parse_map("compose(identity:Z^2,identity:Z)"),
            Err(LabError::ModelMismatch { .. })
        ));
    }
}
