//! The lamplighter model `N ≀ G`.
//!
//! An element is a finitely supported colouring of the base group by lamp
//! values together with a pointer in the base. The generating set consists of
//! the lamp generators placed at the identity and the base generators with the
//! empty colouring, so a step either moves the pointer along a base edge or
//! changes the colour under the pointer along a lamp edge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::groups::{ball, BaseModel, Budget, GroupElement, GroupModel};
use crate::sets::FiniteSubset;
use crate::tsp::{shortest_visiting_walk, MAX_VISIT_POINTS};

/// A finitely supported map from base elements to lamp elements. Only
/// non-identity values are stored, so the key set is the support.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Colouring(BTreeMap<GroupElement, GroupElement>);

impl Colouring {
    pub fn empty() -> Self {
        Colouring(BTreeMap::new())
    }

    /// Builds a colouring from `(position, value)` pairs, dropping identity
    /// values. Later pairs overwrite earlier ones.
    pub fn from_pairs(
        lamp: &BaseModel,
        pairs: impl IntoIterator<Item = (GroupElement, GroupElement)>,
    ) -> Self {
        let mut c = Colouring::empty();
        for (pos, val) in pairs {
            c.set(lamp, pos, val);
        }
        c
    }

    pub fn get(&self, lamp: &BaseModel, pos: &GroupElement) -> GroupElement {
        self.0.get(pos).cloned().unwrap_or_else(|| lamp.identity())
    }

    pub fn set(&mut self, lamp: &BaseModel, pos: GroupElement, val: GroupElement) {
        if val == lamp.identity() {
            self.0.remove(&pos);
        } else {
            self.0.insert(pos, val);
        }
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> + '_ {
        self.0.keys()
    }

    pub fn support_len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&GroupElement, &GroupElement)> + '_ {
        self.0.iter()
    }

    /// Pointwise product `c·d` in the direct sum.
    pub fn multiply(&self, lamp: &BaseModel, other: &Colouring) -> Colouring {
        let mut out = self.clone();
        for (pos, v) in &other.0 {
            let cur = out.get(lamp, pos);
            out.set(lamp, pos.clone(), lamp.multiply(&cur, v));
        }
        out
    }

    pub fn inverse(&self, lamp: &BaseModel) -> Colouring {
        Colouring(self.0.iter().map(|(p, v)| (p.clone(), lamp.inverse(v))).collect())
    }

    /// Positions where the two colourings differ, i.e. `supp(c⁻¹d)`.
    pub fn difference_support(&self, other: &Colouring) -> Vec<GroupElement> {
        let mut out: Vec<GroupElement> = self
            .0
            .iter()
            .filter(|(p, v)| other.0.get(*p) != Some(*v))
            .map(|(p, _)| p.clone())
            .collect();
        out.extend(other.0.keys().filter(|p| !self.0.contains_key(*p)).cloned());
        out.sort();
        out
    }

    /// Whether the support lies inside `set`.
    pub fn supported_in(&self, set: &FiniteSubset<GroupElement>) -> bool {
        self.0.keys().all(|p| set.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WreathElement {
    pub colouring: Colouring,
    pub pointer: GroupElement,
}

impl WreathElement {
    pub fn new(colouring: Colouring, pointer: GroupElement) -> Self {
        WreathElement { colouring, pointer }
    }
}

/// JSON form of a wreath element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WreathElementJson {
    pub pointer: String,
    pub lamps: Vec<[String; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WreathModel {
    pub lamp: BaseModel,
    pub base: BaseModel,
}

impl WreathModel {
    pub fn new(lamp: BaseModel, base: BaseModel) -> Self {
        WreathModel { lamp, base }
    }

    /// Lamplighter over `Z` with lamps `Z/q`.
    pub fn lamplighter(q: u64) -> Self {
        WreathModel::new(BaseModel::cyclic(q), BaseModel::integers())
    }

    pub fn element(&self, lit: &[(i64, i64)], pointer: i64) -> WreathElement {
        WreathElement::new(
            Colouring::from_pairs(
                &self.lamp,
                lit.iter()
                    .map(|&(p, v)| (GroupElement::scalar(p), GroupElement::scalar(v))),
            ),
            GroupElement::scalar(pointer),
        )
    }

    /// JSON form with lamps sorted by base encoding.
    pub fn to_json(&self, x: &WreathElement) -> WreathElementJson {
        let mut lamps: Vec<[String; 2]> = x
            .colouring
            .entries()
            .map(|(p, v)| [self.base.encode(p), self.lamp.encode(v)])
            .collect();
        lamps.sort();
        WreathElementJson {
            pointer: self.base.encode(&x.pointer),
            lamps,
        }
    }

    pub fn from_json(&self, j: &WreathElementJson) -> Result<WreathElement> {
        let pointer = self.base.decode(&j.pointer)?;
        let mut colouring = Colouring::empty();
        for [p, v] in &j.lamps {
            colouring.set(&self.lamp, self.base.decode(p)?, self.lamp.decode(v)?);
        }
        Ok(WreathElement::new(colouring, pointer))
    }
}

impl std::fmt::Display for WreathModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} wr {}", self.lamp, self.base)
    }
}

impl std::str::FromStr for WreathModel {
    type Err = LabError;

    /// `"<lamp> wr <base>"`, e.g. `Z_2 wr Z`.
    fn from_str(s: &str) -> Result<Self> {
        let (lamp, base) = s
            .split_once(" wr ")
            .ok_or_else(|| LabError::parse("wreath model", s))?;
        Ok(WreathModel::new(lamp.parse()?, base.parse()?))
    }
}

impl GroupModel for WreathModel {
    type Element = WreathElement;

    fn name(&self) -> String {
        self.to_string()
    }

    fn identity(&self) -> WreathElement {
        WreathElement::new(Colouring::empty(), self.base.identity())
    }

    fn generators(&self) -> Vec<WreathElement> {
        let id = self.base.identity();
        let lamp_moves = self.lamp.generators().into_iter().map(|t| {
            WreathElement::new(Colouring::from_pairs(&self.lamp, [(id.clone(), t)]), id.clone())
        });
        let base_moves = self
            .base
            .generators()
            .into_iter()
            .map(|s| WreathElement::new(Colouring::empty(), s));
        lamp_moves.chain(base_moves).collect()
    }

    /// `(c, p)(d, q) = (c · p·d, pq)` where `(p·d)(t) = d(p⁻¹t)`.
    fn multiply(&self, a: &WreathElement, b: &WreathElement) -> WreathElement {
        let mut colouring = a.colouring.clone();
        for (s, v) in b.colouring.entries() {
            let pos = self.base.multiply(&a.pointer, s);
            let cur = colouring.get(&self.lamp, &pos);
            colouring.set(&self.lamp, pos, self.lamp.multiply(&cur, v));
        }
        WreathElement::new(colouring, self.base.multiply(&a.pointer, &b.pointer))
    }

    fn inverse(&self, a: &WreathElement) -> WreathElement {
        let pinv = self.base.inverse(&a.pointer);
        let colouring = Colouring(
            a.colouring
                .entries()
                .map(|(s, v)| (self.base.multiply(&pinv, s), self.lamp.inverse(v)))
                .collect(),
        );
        WreathElement::new(colouring, pinv)
    }

    fn contains(&self, x: &WreathElement) -> bool {
        self.base.contains(&x.pointer)
            && x.colouring.entries().all(|(p, v)| {
                self.base.contains(p) && self.lamp.contains(v) && *v != self.lamp.identity()
            })
    }

    /// `pointer|pos:val;pos:val`, positions in canonical order.
    fn encode(&self, x: &WreathElement) -> String {
        let lamps: Vec<String> = x
            .colouring
            .entries()
            .map(|(p, v)| format!("{}:{}", self.base.encode(p), self.lamp.encode(v)))
            .collect();
        format!("{}|{}", self.base.encode(&x.pointer), lamps.join(";"))
    }

    fn decode(&self, s: &str) -> Result<WreathElement> {
        let (ptr, lamps) = s
            .trim()
            .split_once('|')
            .ok_or_else(|| LabError::parse("wreath element", s))?;
        let pointer = self.base.decode(ptr)?;
        let mut colouring = Colouring::empty();
        for entry in lamps.split(';').filter(|e| !e.is_empty()) {
            let (p, v) = entry
                .split_once(':')
                .ok_or_else(|| LabError::parse("wreath lamp entry", entry))?;
            colouring.set(&self.lamp, self.base.decode(p)?, self.lamp.decode(v)?);
        }
        Ok(WreathElement::new(colouring, pointer))
    }

    fn neighbors(&self, x: &WreathElement) -> Vec<WreathElement> {
        let mut out = Vec::new();
        for s in self.base.generators() {
            out.push(WreathElement::new(
                x.colouring.clone(),
                self.base.multiply(&x.pointer, &s),
            ));
        }
        let here = x.colouring.get(&self.lamp, &x.pointer);
        for t in self.lamp.generators() {
            let mut c = x.colouring.clone();
            c.set(&self.lamp, x.pointer.clone(), self.lamp.multiply(&here, &t));
            out.push(WreathElement::new(c, x.pointer.clone()));
        }
        out
    }

    fn distance(&self, a: &WreathElement, b: &WreathElement, budget: &Budget) -> Result<u64> {
        wreath_distance(self, a, b, budget)
    }
}

/// Exact word distance in `N ≀ G`: the shortest base walk from `p` to `q`
/// through every position where the colourings differ, plus the lamp
/// distances at those positions.
pub fn wreath_distance(
    w: &WreathModel,
    x: &WreathElement,
    y: &WreathElement,
    budget: &Budget,
) -> Result<u64> {
    let diff = x.colouring.difference_support(&y.colouring);
    if diff.len() > MAX_VISIT_POINTS {
        return Err(LabError::SupportTooLarge {
            size: diff.len(),
            max: MAX_VISIT_POINTS,
        });
    }
    let mut lamp_cost = 0;
    for t in &diff {
        let (c, d) = (x.colouring.get(&w.lamp, t), y.colouring.get(&w.lamp, t));
        lamp_cost += w.lamp.distance(&c, &d, budget)?;
    }
    let points: Vec<&GroupElement> = [&x.pointer, &y.pointer].into_iter().chain(diff.iter()).collect();
    let mut dist = vec![vec![0u64; points.len()]; points.len()];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = w.base.distance(points[i], points[j], budget)?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    Ok(shortest_visiting_walk(&dist)? + lamp_cost)
}

/// Every colouring supported in `a` whose values lie in the lamp ball of
/// radius `lamp_radius`; `|B_lamp(r)|^{|A|}` colourings in total.
pub fn truncated_lamp_window(
    w: &WreathModel,
    a: &FiniteSubset<GroupElement>,
    lamp_radius: u64,
    budget: &Budget,
) -> Result<Vec<Colouring>> {
    let colours: Vec<GroupElement> = ball(&w.lamp, &w.lamp.identity(), lamp_radius, budget)?
        .into_set()
        .into_iter()
        .collect();
    let total = (colours.len() as u128).checked_pow(a.len() as u32);
    match total {
        Some(t) if t <= budget.max_elements as u128 => {}
        _ => return Err(LabError::budget(budget.max_elements, "enumerating a lamp window")),
    }
    let mut out = vec![Colouring::empty()];
    for pos in a.iter() {
        let mut next = Vec::with_capacity(out.len() * colours.len());
        for c in &out {
            for v in &colours {
                let mut d = c.clone();
                d.set(&w.lamp, pos.clone(), v.clone());
                next.push(d);
            }
        }
        out = next;
    }
    Ok(out)
}

/// Colourings supported in `window` with at most `max_support` lit positions,
/// each lit with a non-identity value from the lamp ball of radius
/// `lamp_radius`.
pub fn bounded_support_colourings(
    w: &WreathModel,
    window: &FiniteSubset<GroupElement>,
    max_support: usize,
    lamp_radius: u64,
    budget: &Budget,
) -> Result<Vec<Colouring>> {
    let colours: Vec<GroupElement> = ball(&w.lamp, &w.lamp.identity(), lamp_radius, budget)?
        .into_set()
        .into_iter()
        .filter(|v| *v != w.lamp.identity())
        .collect();
    let positions: Vec<&GroupElement> = window.iter().collect();
    let mut out = vec![Colouring::empty()];
    // Extend each colouring only at positions after its last lit one, so
    // every support set is produced once.
    let mut frontier: Vec<(usize, Colouring)> = vec![(0, Colouring::empty())];
    for _ in 0..max_support {
        let mut next = Vec::new();
        for (start, c) in &frontier {
            for (i, pos) in positions.iter().enumerate().skip(*start) {
                for v in &colours {
                    let mut d = c.clone();
                    d.set(&w.lamp, (*pos).clone(), v.clone());
                    next.push((i + 1, d));
                }
            }
        }
        budget.check(out.len() + next.len(), "enumerating bounded-support colourings")?;
        out.extend(next.iter().map(|(_, c)| c.clone()));
        frontier = next;
    }
    Ok(out)
}

/// Pairs `(c, p)` with `p ∈ base_set`, `supp(c) ⊆ base_set` and colours in
/// the lamp ball of radius `lamp_radius`.
pub fn wreath_box(
    w: &WreathModel,
    base_set: &FiniteSubset<GroupElement>,
    lamp_radius: u64,
    budget: &Budget,
) -> Result<Vec<WreathElement>> {
    let colourings = truncated_lamp_window(w, base_set, lamp_radius, budget)?;
    budget.check(colourings.len().saturating_mul(base_set.len()), "enumerating a wreath box")?;
    let mut out = Vec::with_capacity(colourings.len() * base_set.len());
    for c in &colourings {
        for p in base_set.iter() {
            out.push(WreathElement::new(c.clone(), p.clone()));
        }
    }
    Ok(out)
}
