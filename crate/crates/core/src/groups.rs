//! Marked group models and their word metrics.
//!
//! Every model is a finitely generated group together with a symmetric
//! generating set. The Cayley graph has an edge `x -- x·s` for each generator
//! `s`, so balls and distances are computed by breadth-first search over right
//! multiplication. Base models also provide a closed-form metric, which the
//! test suite checks against the search.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{LabError, Result};
use crate::sets::FiniteSubset;

pub const DEFAULT_ELEMENT_BUDGET: usize = 5_000_000;

/// Cap on the number of elements any single enumeration may materialize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_elements: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_elements: DEFAULT_ELEMENT_BUDGET,
        }
    }
}

impl Budget {
    pub fn new(max_elements: usize) -> Self {
        Budget { max_elements }
    }

    pub fn check(&self, count: usize, context: &str) -> Result<()> {
        if count > self.max_elements {
            Err(LabError::budget(self.max_elements, context))
        } else {
            Ok(())
        }
    }
}

/// A finitely generated group with a fixed symmetric generating set.
///
/// Implementations must keep `Element` canonical: two elements compare equal
/// exactly when they denote the same group element.
pub trait GroupModel: Clone + PartialEq + Send + Sync + 'static {
    type Element: Clone + Eq + Ord + Hash + fmt::Debug + Send + Sync + 'static;

    fn name(&self) -> String;
    fn identity(&self) -> Self::Element;
    /// Symmetric generating set, without duplicates and without the identity.
    fn generators(&self) -> Vec<Self::Element>;
    fn multiply(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn inverse(&self, a: &Self::Element) -> Self::Element;
    fn contains(&self, x: &Self::Element) -> bool;
    fn encode(&self, x: &Self::Element) -> String;
    fn decode(&self, s: &str) -> Result<Self::Element>;

    fn neighbors(&self, x: &Self::Element) -> Vec<Self::Element> {
        self.generators()
            .iter()
            .map(|s| self.multiply(x, s))
            .collect()
    }

    /// Exact word distance. The default runs a breadth-first search bounded
    /// only by the budget; models with a closed form override it.
    fn distance(&self, a: &Self::Element, b: &Self::Element, budget: &Budget) -> Result<u64> {
        bfs_distance(self, a, b, None, budget)?
            .ok_or_else(|| LabError::budget(budget.max_elements, "searching for a word distance"))
    }

    /// A box-shaped Følner set of scale `n`, when the model knows one.
    fn folner_box(&self, n: u64) -> Result<Vec<Self::Element>> {
        let _ = n;
        Err(LabError::UnsupportedModel(self.name()))
    }
}

/// Canonical element encoding shared by the base models: a short integer
/// vector whose meaning is fixed by the model.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupElement(pub SmallVec<[i64; 3]>);

impl GroupElement {
    pub fn new(coords: &[i64]) -> Self {
        GroupElement(SmallVec::from_slice(coords))
    }

    pub fn scalar(x: i64) -> Self {
        GroupElement::new(&[x])
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// First coordinate; zero for the empty vector.
    pub fn head(&self) -> i64 {
        self.0.first().copied().unwrap_or(0)
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// The concrete base models.
///
/// Encodings: lattice points are coordinate tuples, cyclic elements are
/// residues in `[0, q)`, dihedral elements are `(n, e)` standing for the
/// affine map `x ↦ (-1)^e·x + n`, and `kZ` elements are the multiples of `k`
/// themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseModel {
    /// `Z^d` with the standard generators `±e_i`.
    Lattice { dim: usize },
    /// `Z/qZ` generated by `±1`.
    Cyclic { order: u64 },
    /// `⟨a, b | a² = b² = 1⟩` generated by the two reflections.
    InfiniteDihedral,
    /// The subgroup `kZ` of `Z`, generated by `±k`.
    ScaledSubgroup { index: i64 },
}

impl BaseModel {
    pub fn integers() -> Self {
        BaseModel::Lattice { dim: 1 }
    }

    pub fn lattice(dim: usize) -> Self {
        BaseModel::Lattice { dim }
    }

    pub fn cyclic(order: u64) -> Self {
        BaseModel::Cyclic { order }
    }

    pub fn scaled(index: i64) -> Self {
        BaseModel::ScaledSubgroup { index }
    }

    /// Position of a dihedral element on the bi-infinite path that is its
    /// Cayley graph. `a` sits at `+1`, `b` at `-1`.
    pub fn dihedral_position(x: &GroupElement) -> i64 {
        let (n, e) = (x.0[0], x.0[1]);
        if e == 0 {
            -2 * n
        } else {
            1 - 2 * n
        }
    }

    pub fn dihedral_at_position(p: i64) -> GroupElement {
        if p.rem_euclid(2) == 0 {
            GroupElement::new(&[-p / 2, 0])
        } else {
            GroupElement::new(&[(1 - p).div_euclid(2), 1])
        }
    }

    /// Growth degree of the model's Cayley graph.
    pub fn growth_degree(&self) -> usize {
        match self {
            BaseModel::Lattice { dim } => *dim,
            BaseModel::Cyclic { .. } => 0,
            BaseModel::InfiniteDihedral | BaseModel::ScaledSubgroup { .. } => 1,
        }
    }

    pub fn max_degree(&self) -> usize {
        self.generators().len()
    }

    fn validate(&self) -> Result<()> {
        match self {
            BaseModel::Lattice { dim } if *dim == 0 => {
                Err(LabError::InvalidParameter("lattice dimension must be at least 1".into()))
            }
            BaseModel::Cyclic { order } if *order == 0 => {
                Err(LabError::InvalidParameter("cyclic order must be at least 1".into()))
            }
            BaseModel::ScaledSubgroup { index } if *index < 1 => {
                Err(LabError::InvalidParameter("subgroup index must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for BaseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseModel::Lattice { dim: 1 } => write!(f, "Z"),
            BaseModel::Lattice { dim } => write!(f, "Z^{dim}"),
            BaseModel::Cyclic { order } => write!(f, "Z_{order}"),
            BaseModel::InfiniteDihedral => write!(f, "Dinf"),
            BaseModel::ScaledSubgroup { index } => write!(f, "kZ:{index}"),
        }
    }
}

impl FromStr for BaseModel {
    type Err = LabError;

    /// Accepts `Z`, `Z^d`, `Z_q`, `Dinf` and `kZ:k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || LabError::parse("group model", s);
        let model = if s == "Z" {
            BaseModel::integers()
        } else if s == "Dinf" || s == "D_inf" {
            BaseModel::InfiniteDihedral
        } else if let Some(d) = s.strip_prefix("Z^") {
            BaseModel::Lattice {
                dim: d.parse().map_err(|_| bad())?,
            }
        } else if let Some(q) = s.strip_prefix("Z_") {
            BaseModel::Cyclic {
                order: q.parse().map_err(|_| bad())?,
            }
        } else if let Some(k) = s.strip_prefix("kZ:") {
            BaseModel::ScaledSubgroup {
                index: k.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        model.validate()?;
        Ok(model)
    }
}

impl GroupModel for BaseModel {
    type Element = GroupElement;

    fn name(&self) -> String {
        self.to_string()
    }

    fn identity(&self) -> GroupElement {
        match self {
            BaseModel::Lattice { dim } => GroupElement(SmallVec::from_elem(0, *dim)),
            BaseModel::Cyclic { .. } | BaseModel::ScaledSubgroup { .. } => GroupElement::scalar(0),
            BaseModel::InfiniteDihedral => GroupElement::new(&[0, 0]),
        }
    }

    fn generators(&self) -> Vec<GroupElement> {
        match self {
            BaseModel::Lattice { dim } => {
                let mut gens = Vec::with_capacity(2 * dim);
                for i in 0..*dim {
                    for sign in [1, -1] {
                        let mut v = SmallVec::from_elem(0, *dim);
                        v[i] = sign;
                        gens.push(GroupElement(v));
                    }
                }
                gens
            }
            BaseModel::Cyclic { order } => {
                let q = *order as i64;
                match q {
                    1 => vec![],
                    2 => vec![GroupElement::scalar(1)],
                    _ => vec![GroupElement::scalar(1), GroupElement::scalar(q - 1)],
                }
            }
            BaseModel::InfiniteDihedral => {
                vec![GroupElement::new(&[0, 1]), GroupElement::new(&[1, 1])]
            }
            BaseModel::ScaledSubgroup { index } => {
                vec![GroupElement::scalar(*index), GroupElement::scalar(-index)]
            }
        }
    }

    fn multiply(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match self {
            BaseModel::Lattice { .. } | BaseModel::ScaledSubgroup { .. } => {
                GroupElement(a.0.iter().zip(b.0.iter()).map(|(x, y)| x + y).collect())
            }
            BaseModel::Cyclic { order } => {
                GroupElement::scalar((a.0[0] + b.0[0]).rem_euclid(*order as i64))
            }
            BaseModel::InfiniteDihedral => {
                let (n1, e1) = (a.0[0], a.0[1]);
                let (n2, e2) = (b.0[0], b.0[1]);
                let n = if e1 == 0 { n1 + n2 } else { n1 - n2 };
                GroupElement::new(&[n, e1 ^ e2])
            }
        }
    }

    fn inverse(&self, a: &GroupElement) -> GroupElement {
        match self {
            BaseModel::Lattice { .. } | BaseModel::ScaledSubgroup { .. } => {
                GroupElement(a.0.iter().map(|x| -x).collect())
            }
            BaseModel::Cyclic { order } => GroupElement::scalar((-a.0[0]).rem_euclid(*order as i64)),
            BaseModel::InfiniteDihedral => {
                if a.0[1] == 0 {
                    GroupElement::new(&[-a.0[0], 0])
                } else {
                    a.clone()
                }
            }
        }
    }

    fn contains(&self, x: &GroupElement) -> bool {
        match self {
            BaseModel::Lattice { dim } => x.0.len() == *dim,
            BaseModel::Cyclic { order } => x.0.len() == 1 && (0..*order as i64).contains(&x.0[0]),
            BaseModel::InfiniteDihedral => x.0.len() == 2 && (x.0[1] == 0 || x.0[1] == 1),
            BaseModel::ScaledSubgroup { index } => x.0.len() == 1 && x.0[0].rem_euclid(*index) == 0,
        }
    }

    fn encode(&self, x: &GroupElement) -> String {
        x.to_string()
    }

    fn decode(&self, s: &str) -> Result<GroupElement> {
        let coords = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(|p| p.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| LabError::parse("group element", s))?;
        let x = GroupElement::new(&coords);
        if self.contains(&x) {
            Ok(x)
        } else {
            Err(LabError::NotInModel {
                model: self.name(),
                element: s.to_string(),
            })
        }
    }

    fn distance(&self, a: &GroupElement, b: &GroupElement, _budget: &Budget) -> Result<u64> {
        Ok(match self {
            BaseModel::Lattice { .. } => a
                .0
                .iter()
                .zip(b.0.iter())
                .map(|(x, y)| x.abs_diff(*y))
                .sum(),
            BaseModel::Cyclic { order } => {
                let d = a.0[0].abs_diff(b.0[0]);
                d.min(order - d)
            }
            BaseModel::InfiniteDihedral => {
                Self::dihedral_position(a).abs_diff(Self::dihedral_position(b))
            }
            BaseModel::ScaledSubgroup { index } => a.0[0].abs_diff(b.0[0]) / *index as u64,
        })
    }

    fn folner_box(&self, n: u64) -> Result<Vec<GroupElement>> {
        let n = n as i64;
        Ok(match self {
            BaseModel::Lattice { dim } => {
                let mut out = vec![GroupElement(SmallVec::new())];
                for _ in 0..*dim {
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            (0..n).map(move |c| {
                                let mut q = p.0.clone();
                                q.push(c);
                                GroupElement(q)
                            })
                        })
                        .collect();
                }
                out
            }
            BaseModel::Cyclic { order } => (0..n.min(*order as i64)).map(GroupElement::scalar).collect(),
            BaseModel::InfiniteDihedral => (0..n).map(Self::dihedral_at_position).collect(),
            BaseModel::ScaledSubgroup { index } => {
                (0..n).map(|i| GroupElement::scalar(i * index)).collect()
            }
        })
    }
}

/// Multi-source breadth-first search up to radius `max_r` (unbounded when
/// `None`). Returns the distance of every reached element.
pub fn bfs_distances<G: GroupModel>(
    model: &G,
    sources: impl IntoIterator<Item = G::Element>,
    max_r: Option<u64>,
    budget: &Budget,
    context: &str,
) -> Result<HashMap<G::Element, u64>> {
    let mut dist: HashMap<G::Element, u64> = HashMap::new();
    let mut queue = VecDeque::new();
    for s in sources {
        if dist.insert(s.clone(), 0).is_none() {
            queue.push_back(s);
        }
    }
    budget.check(dist.len(), context)?;
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if max_r.is_some_and(|r| d >= r) {
            continue;
        }
        for y in model.neighbors(&x) {
            if !dist.contains_key(&y) {
                dist.insert(y.clone(), d + 1);
                budget.check(dist.len(), context)?;
                queue.push_back(y);
            }
        }
    }
    Ok(dist)
}

fn bfs_distance<G: GroupModel>(
    model: &G,
    a: &G::Element,
    b: &G::Element,
    max_r: Option<u64>,
    budget: &Budget,
) -> Result<Option<u64>> {
    if a == b {
        return Ok(Some(0));
    }
    let mut dist: HashMap<G::Element, u64> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(a.clone(), 0);
    queue.push_back(a.clone());
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if max_r.is_some_and(|r| d >= r) {
            continue;
        }
        for y in model.neighbors(&x) {
            if &y == b {
                return Ok(Some(d + 1));
            }
            if !dist.contains_key(&y) {
                dist.insert(y.clone(), d + 1);
                budget.check(dist.len(), "searching for a word distance")?;
                queue.push_back(y);
            }
        }
    }
    Ok(None)
}

/// The closed ball `B(center, r)`.
pub fn ball<G: GroupModel>(
    model: &G,
    center: &G::Element,
    r: u64,
    budget: &Budget,
) -> Result<FiniteSubset<G::Element>> {
    let dist = bfs_distances(model, [center.clone()], Some(r), budget, "enumerating a ball")?;
    Ok(FiniteSubset::from_trusted(dist.into_keys()))
}

/// Word distance by breadth-first search; `None` when it exceeds `max_r`.
pub fn word_distance<G: GroupModel>(
    model: &G,
    a: &G::Element,
    b: &G::Element,
    max_r: u64,
    budget: &Budget,
) -> Result<Option<u64>> {
    bfs_distance(model, a, b, Some(max_r), budget)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub radii: Vec<u64>,
    pub ball_sizes: Vec<u64>,
    pub degree_estimate: f64,
}

/// Ball sizes around the identity for `r = 0..=max_r`, with the growth degree
/// fitted as the least-squares slope of `ln |B(r)|` against `ln r` over the
/// upper half of the radius range.
pub fn growth_degree_estimate<G: GroupModel>(
    model: &G,
    max_r: u64,
    budget: &Budget,
) -> Result<GrowthRecord> {
    if max_r < 4 {
        return Err(LabError::InvalidParameter(format!(
            "growth fit needs max_r >= 4, got {max_r}"
        )));
    }
    let dist = bfs_distances(model, [model.identity()], Some(max_r), budget, "measuring growth")?;
    let mut sphere = vec![0u64; max_r as usize + 1];
    for d in dist.values() {
        sphere[*d as usize] += 1;
    }
    let ball_sizes: Vec<u64> = sphere
        .iter()
        .scan(0u64, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    if ball_sizes.iter().all(|&b| b == 1) {
        return Err(LabError::DegenerateFit);
    }
    let lo = max_r.div_ceil(2).max(1);
    let points: Vec<(f64, f64)> = (lo..=max_r)
        .map(|r| ((r as f64).ln(), (ball_sizes[r as usize] as f64).ln()))
        .collect();
    Ok(GrowthRecord {
        radii: (0..=max_r).collect(),
        ball_sizes,
        degree_estimate: least_squares_slope(&points),
    })
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}
