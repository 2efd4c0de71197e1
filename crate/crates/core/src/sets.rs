//! Finite subsets of a group model: neighborhoods, external vertex
//! boundaries, Hausdorff distance, coarse components and Følner families.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dsu::UnionFind;
use crate::error::{LabError, Result};
use crate::groups::{bfs_distances, Budget, GroupModel};
use crate::Rational;

/// A finite set of elements of one model, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteSubset<E> {
    elements: BTreeSet<E>,
}

impl<E: Ord + Clone> FiniteSubset<E> {
    /// Builds a subset after checking that every element lies in `model`.
    pub fn new<G>(model: &G, elements: impl IntoIterator<Item = E>) -> Result<Self>
    where
        G: GroupModel<Element = E>,
    {
        let elements: BTreeSet<E> = elements.into_iter().collect();
        if let Some(bad) = elements.iter().find(|x| !model.contains(x)) {
            return Err(LabError::NotInModel {
                model: model.name(),
                element: model.encode(bad),
            });
        }
        Ok(FiniteSubset { elements })
    }

    pub(crate) fn from_trusted(elements: impl IntoIterator<Item = E>) -> Self {
        FiniteSubset {
            elements: elements.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        FiniteSubset {
            elements: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, x: &E) -> bool {
        self.elements.contains(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = &E> + '_ {
        self.elements.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<E> {
        &self.elements
    }

    pub fn into_set(self) -> BTreeSet<E> {
        self.elements
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.elements.is_subset(&other.elements)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_trusted(self.elements.union(&other.elements).cloned())
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self::from_trusted(self.elements.difference(&other.elements).cloned())
    }

    pub fn map<F: Ord + Clone>(&self, f: impl Fn(&E) -> F) -> FiniteSubset<F> {
        FiniteSubset::from_trusted(self.elements.iter().map(f))
    }

    /// Encoded elements in canonical order; serializes as a JSON array.
    pub fn encoded<G: GroupModel<Element = E>>(&self, model: &G) -> Vec<String> {
        self.elements.iter().map(|x| model.encode(x)).collect()
    }

    /// Line-oriented text form, one encoded element per line.
    pub fn to_lines<G: GroupModel<Element = E>>(&self, model: &G) -> String {
        let mut out = String::new();
        for x in &self.elements {
            out.push_str(&model.encode(x));
            out.push('\n');
        }
        out
    }

    pub fn from_lines<G: GroupModel<Element = E>>(model: &G, text: &str) -> Result<Self> {
        let elements = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| model.decode(l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, elements)
    }
}

impl<E: Ord + Clone> FromIterator<E> for FiniteSubset<E> {
    fn from_iter<I: IntoIterator<Item = E>>(iter: I) -> Self {
        FiniteSubset::from_trusted(iter)
    }
}

/// `A^{+S}`: every element within distance `S` of `A`.
pub fn neighborhood<G: GroupModel>(
    model: &G,
    a: &FiniteSubset<G::Element>,
    s: u64,
    budget: &Budget,
) -> Result<FiniteSubset<G::Element>> {
    let dist = bfs_distances(model, a.iter().cloned(), Some(s), budget, "computing a neighborhood")?;
    Ok(FiniteSubset::from_trusted(dist.into_keys()))
}

/// External vertex boundary: points outside `A` adjacent to a point of `A`.
pub fn boundary<G: GroupModel>(model: &G, a: &FiniteSubset<G::Element>) -> FiniteSubset<G::Element> {
    a.iter()
        .flat_map(|x| model.neighbors(x))
        .filter(|y| !a.contains(y))
        .collect()
}

fn directed_hausdorff<G: GroupModel>(
    model: &G,
    from: &FiniteSubset<G::Element>,
    to: &FiniteSubset<G::Element>,
    max_r: u64,
    budget: &Budget,
) -> Result<Option<u64>> {
    let dist = bfs_distances(model, to.iter().cloned(), Some(max_r), budget, "computing a Hausdorff distance")?;
    let mut worst = 0;
    for x in from.iter() {
        match dist.get(x) {
            Some(d) => worst = worst.max(*d),
            None => return Ok(None),
        }
    }
    Ok(Some(worst))
}

/// Least `S` with `A ⊆ B^{+S}` and `B ⊆ A^{+S}`, by multi-source search;
/// `None` when it exceeds `max_r`.
pub fn hausdorff_distance<G: GroupModel>(
    model: &G,
    a: &FiniteSubset<G::Element>,
    b: &FiniteSubset<G::Element>,
    max_r: u64,
    budget: &Budget,
) -> Result<Option<u64>> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::EmptySet);
    }
    let ab = directed_hausdorff(model, a, b, max_r, budget)?;
    let ba = directed_hausdorff(model, b, a, max_r, budget)?;
    Ok(ab.zip(ba).map(|(x, y)| x.max(y)))
}

/// Hausdorff distance from pairwise metric distances. Cheaper than the
/// search for small sets in models with a closed-form metric.
pub fn hausdorff_by_metric<G: GroupModel>(
    model: &G,
    a: &BTreeSet<G::Element>,
    b: &BTreeSet<G::Element>,
    budget: &Budget,
) -> Result<u64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::EmptySet);
    }
    let directed = |from: &BTreeSet<G::Element>, to: &BTreeSet<G::Element>| -> Result<u64> {
        let mut worst = 0;
        for x in from {
            let mut best = u64::MAX;
            for y in to {
                best = best.min(model.distance(x, y, budget)?);
                if best == 0 {
                    break;
                }
            }
            worst = worst.max(best);
        }
        Ok(worst)
    };
    Ok(directed(a, b)?.max(directed(b, a)?))
}

/// Partition of `window ∖ excluded^{+L}` into `k`-coarsely connected
/// components. Steps are measured in the ambient word metric. Components are
/// returned in order of their least element.
pub fn coarse_components<G: GroupModel>(
    model: &G,
    window: &FiniteSubset<G::Element>,
    excluded: &FiniteSubset<G::Element>,
    l: u64,
    k: u64,
    budget: &Budget,
) -> Result<Vec<FiniteSubset<G::Element>>> {
    if k == 0 {
        return Err(LabError::InvalidParameter("coarse connectivity step k must be >= 1".into()));
    }
    let removed = neighborhood(model, excluded, l, budget)?;
    let remaining = window.difference(&removed);
    let index: BTreeMap<&G::Element, usize> =
        remaining.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut uf = UnionFind::new(index.len());
    for (x, &i) in &index {
        let reach = bfs_distances(model, [(*x).clone()], Some(k), budget, "joining coarse components")?;
        for y in reach.keys() {
            if let Some(&j) = index.get(y) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<G::Element>> = BTreeMap::new();
    let elems: Vec<&G::Element> = index.keys().copied().collect();
    for (i, x) in elems.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push((*x).clone());
    }
    let mut comps: Vec<FiniteSubset<G::Element>> =
        groups.into_values().map(FiniteSubset::from_trusted).collect();
    comps.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
    Ok(comps)
}

pub const DEFAULT_FOLNER_SCHEDULE: [u64; 5] = [8, 16, 32, 64, 128];

/// How to build a Følner family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FolnerSpec {
    /// Model boxes at the given scales; lattices use `[0, n)^d`.
    Boxes { schedule: Vec<u64> },
}

impl Default for FolnerSpec {
    fn default() -> Self {
        FolnerSpec::Boxes {
            schedule: DEFAULT_FOLNER_SCHEDULE.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FolnerFamily<E> {
    pub model_name: String,
    pub scales: Vec<u64>,
    pub sets: Vec<FiniteSubset<E>>,
    /// `|∂F_i| / |F_i|`, exact.
    pub boundary_ratios: Vec<Rational>,
}

impl<E: Ord + Clone> FolnerFamily<E> {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Builds a family from explicit sets, computing exact boundary ratios.
    pub fn from_sets<G: GroupModel<Element = E>>(
        model: &G,
        scales: Vec<u64>,
        sets: Vec<FiniteSubset<E>>,
    ) -> Result<Self> {
        if scales.len() != sets.len() {
            return Err(LabError::SizeMismatch("one scale per Følner set".into()));
        }
        let mut boundary_ratios = Vec::with_capacity(sets.len());
        for f in &sets {
            if f.is_empty() {
                return Err(LabError::EmptySet);
            }
            let db = boundary(model, f).len() as i64;
            boundary_ratios.push(Rational::new(db, f.len() as i64));
        }
        Ok(FolnerFamily {
            model_name: model.name(),
            scales,
            sets,
            boundary_ratios,
        })
    }

    /// True when the ratios never increase along the family.
    pub fn ratios_non_increasing(&self) -> bool {
        self.boundary_ratios.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn ratios_vanish_eventually(&self) -> bool {
        self.boundary_ratios.last().is_some_and(|r| r.is_zero())
            || self.ratios_non_increasing()
    }
}

/// The first `count` scales of the schedule, doubling past its end.
pub fn schedule_scales(schedule: &[u64], count: usize) -> Vec<u64> {
    let mut scales: Vec<u64> = schedule.iter().copied().take(count).collect();
    while scales.len() < count {
        let next = scales.last().map_or(8, |s| s * 2);
        scales.push(next);
    }
    scales
}

pub fn folner_family<G: GroupModel>(
    model: &G,
    spec: &FolnerSpec,
    count: usize,
    budget: &Budget,
) -> Result<FolnerFamily<G::Element>> {
    let FolnerSpec::Boxes { schedule } = spec;
    let scales = schedule_scales(schedule, count);
    let mut sets = Vec::with_capacity(scales.len());
    for &n in &scales {
        if n == 0 {
            return Err(LabError::InvalidParameter("Følner scales must be positive".into()));
        }
        let elems = model.folner_box(n)?;
        budget.check(elems.len(), "building a Følner box")?;
        sets.push(FiniteSubset::from_trusted(elems));
    }
    FolnerFamily::from_sets(model, scales, sets)
}
