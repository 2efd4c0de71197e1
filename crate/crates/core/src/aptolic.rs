//! Maps of the form `(c, p) ↦ (α(c), β(p))` between lamplighters over
//! lattices, built blockwise from matched brick partitions, together with
//! window-scale checkers for the conditions that make them quasi-isometries.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::groups::{ball, BaseModel, Budget, GroupElement, GroupModel};
use crate::qi::{
    build_scaling_qi_lattice, estimate_qi_constants, preimage, scaling_defect, EstimateConfig, QIMap,
    QiConstants, ScalingCertificate,
};
use crate::sets::{folner_family, hausdorff_by_metric, neighborhood, FiniteSubset, FolnerSpec};
use crate::wreath::{bounded_support_colourings, truncated_lamp_window, Colouring, WreathElement, WreathModel};
use crate::Rational;

/// Fixed parameters used when a built map needs β's constants.
const BETA_ESTIMATE_RADIUS: u64 = 12;
const BETA_ESTIMATE_SAMPLES: usize = 200;
const BETA_ESTIMATE_SEED: u64 = 0;

fn lattice_dim(model: &BaseModel) -> Option<usize> {
    match model {
        BaseModel::Lattice { dim } => Some(*dim),
        _ => None,
    }
}

/// Piece of the brick partition of `Z^d` into blocks of `size` consecutive
/// values of the first coordinate: `(block index, other coordinates)`.
pub type PieceKey = (i64, Vec<i64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrickPartition {
    pub dim: usize,
    pub size: i64,
}

impl BrickPartition {
    pub fn piece_of(&self, x: &GroupElement) -> (PieceKey, usize) {
        let c = x.coords();
        let j = c[0].div_euclid(self.size);
        ((j, c[1..].to_vec()), (c[0] - j * self.size) as usize)
    }

    /// The `i`-th point of a piece.
    pub fn point(&self, key: &PieceKey, i: usize) -> GroupElement {
        let mut c = Vec::with_capacity(self.dim);
        c.push(key.0 * self.size + i as i64);
        c.extend_from_slice(&key.1);
        GroupElement::new(&c)
    }

    pub fn piece(&self, key: &PieceKey) -> Vec<GroupElement> {
        (0..self.size as usize).map(|i| self.point(key, i)).collect()
    }

    /// Word diameter of every piece.
    pub fn diameter(&self) -> u64 {
        (self.size - 1) as u64
    }
}

/// Matched brick partitions of `Z^d` with pieces of sizes `m` and `n`, the
/// identity on piece keys as `ψ`, and the induced map `β`.
#[derive(Clone, Debug)]
pub struct PartitionBijection {
    pub source: BrickPartition,
    pub target: BrickPartition,
    pub beta: QIMap<BaseModel, BaseModel>,
}

impl PartitionBijection {
    pub fn bricks(dim: usize, m: i64, n: i64) -> Result<Self> {
        let beta = build_scaling_qi_lattice(dim, m, n)?;
        Ok(PartitionBijection {
            source: BrickPartition { dim, size: m },
            target: BrickPartition { dim, size: n },
            beta,
        })
    }

    pub fn psi(&self, key: &PieceKey) -> PieceKey {
        key.clone()
    }

    /// Checks on `window` that pieces are disjoint and cover it, that piece
    /// diameters respect the bound and that `β(P) ⊆ ψ(P)`.
    pub fn validate(&self, window: &FiniteSubset<GroupElement>, budget: &Budget) -> Result<bool> {
        let model = BaseModel::lattice(self.source.dim);
        let mut owner: BTreeMap<GroupElement, PieceKey> = BTreeMap::new();
        let keys: BTreeSet<PieceKey> = window.iter().map(|x| self.source.piece_of(x).0).collect();
        for key in &keys {
            let piece = self.source.piece(key);
            for (a, x) in piece.iter().enumerate() {
                if let Some(prev) = owner.insert(x.clone(), key.clone()) {
                    if &prev != key {
                        return Ok(false);
                    }
                }
                for y in &piece[a + 1..] {
                    if model.distance(x, y, budget)? > self.source.diameter() {
                        return Ok(false);
                    }
                }
            }
            let image: BTreeSet<PieceKey> =
                piece.iter().map(|x| self.target.piece_of(&self.beta.apply(x)).0).collect();
            if image.len() != 1 || !image.contains(&self.psi(key)) {
                return Ok(false);
            }
        }
        Ok(window.iter().all(|x| owner.contains_key(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// `N^m → N^m`, the identity.
    Identity,
    /// `(Z^a)^m → (Z^b)^n` with `ma = nb`: flatten the coordinates and cut
    /// them into `n` chunks of length `b`.
    Repack,
}

/// A biLipschitz bijection `σ: N^m → M^n` with `σ(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockBiLipschitz {
    pub m: usize,
    pub n: usize,
    pub source_lamp: BaseModel,
    pub target_lamp: BaseModel,
    pub kind: BlockKind,
}

impl BlockBiLipschitz {
    pub fn identity(lamp: BaseModel, m: usize) -> Self {
        BlockBiLipschitz {
            m,
            n: m,
            source_lamp: lamp,
            target_lamp: lamp,
            kind: BlockKind::Identity,
        }
    }

    pub fn repack(a: usize, m: usize, b: usize, n: usize) -> Result<Self> {
        if a == 0 || b == 0 || m == 0 || n == 0 {
            return Err(LabError::InvalidParameter("block sizes and lamp ranks must be >= 1".into()));
        }
        if a * m != b * n {
            return Err(LabError::SizeMismatch(format!(
                "(Z^{a})^{m} and (Z^{b})^{n} have different ranks"
            )));
        }
        Ok(BlockBiLipschitz {
            m,
            n,
            source_lamp: BaseModel::lattice(a),
            target_lamp: BaseModel::lattice(b),
            kind: BlockKind::Repack,
        })
    }

    /// Lipschitz constant of `σ` and `σ⁻¹` for the product word metrics.
    pub fn constant(&self) -> u64 {
        1
    }

    pub fn sigma(&self, u: &[GroupElement]) -> Vec<GroupElement> {
        match self.kind {
            BlockKind::Identity => u.to_vec(),
            BlockKind::Repack => rechunk(u, lattice_dim(&self.target_lamp).unwrap_or(1)),
        }
    }

    pub fn sigma_inverse(&self, v: &[GroupElement]) -> Vec<GroupElement> {
        match self.kind {
            BlockKind::Identity => v.to_vec(),
            BlockKind::Repack => rechunk(v, lattice_dim(&self.source_lamp).unwrap_or(1)),
        }
    }
}

fn rechunk(u: &[GroupElement], width: usize) -> Vec<GroupElement> {
    let flat: Vec<i64> = u.iter().flat_map(|v| v.coords().iter().copied()).collect();
    flat.chunks(width).map(GroupElement::new).collect()
}

/// An aptolic-form map between lamplighters over `Z^d`.
#[derive(Clone, Debug)]
pub struct AptolicMap {
    pub name: String,
    pub source: WreathModel,
    pub target: WreathModel,
    pub sigma: BlockBiLipschitz,
    pub partition: PartitionBijection,
    /// Pairs of source colourings whose `α`-images are exchanged.
    pub swaps: Vec<(Colouring, Colouring)>,
}

/// Constants the blockwise construction guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub q: u64,
    pub l: u64,
    pub l_prime: u64,
}

impl AptolicMap {
    fn raw_alpha(&self, c: &Colouring) -> Colouring {
        let (src, dst) = (&self.partition.source, &self.partition.target);
        let pieces: BTreeSet<PieceKey> = c.support().map(|x| src.piece_of(x).0).collect();
        let mut out = Colouring::empty();
        for key in pieces {
            let u: Vec<GroupElement> = src.piece(&key).iter().map(|x| c.get(&self.source.lamp, x)).collect();
            let target_key = self.partition.psi(&key);
            for (i, v) in self.sigma.sigma(&u).into_iter().enumerate() {
                out.set(&self.target.lamp, dst.point(&target_key, i), v);
            }
        }
        out
    }

    fn raw_alpha_inverse(&self, d: &Colouring) -> Colouring {
        let (src, dst) = (&self.partition.source, &self.partition.target);
        let pieces: BTreeSet<PieceKey> = d.support().map(|y| dst.piece_of(y).0).collect();
        let mut out = Colouring::empty();
        for key in pieces {
            let v: Vec<GroupElement> = dst.piece(&key).iter().map(|y| d.get(&self.target.lamp, y)).collect();
            // ψ is the identity on keys.
            for (i, u) in self.sigma.sigma_inverse(&v).into_iter().enumerate() {
                out.set(&self.source.lamp, src.point(&key, i), u);
            }
        }
        out
    }

    fn swapped<'a>(&'a self, c: &'a Colouring) -> &'a Colouring {
        for (a, b) in &self.swaps {
            if c == a {
                return b;
            }
            if c == b {
                return a;
            }
        }
        c
    }

    pub fn alpha(&self, c: &Colouring) -> Colouring {
        self.raw_alpha(self.swapped(c))
    }

    pub fn alpha_inverse(&self, d: &Colouring) -> Colouring {
        let c = self.raw_alpha_inverse(d);
        self.swapped(&c).clone()
    }

    pub fn beta(&self) -> &QIMap<BaseModel, BaseModel> {
        &self.partition.beta
    }

    pub fn apply(&self, x: &WreathElement) -> WreathElement {
        WreathElement::new(self.alpha(&x.colouring), self.beta().apply(&x.pointer))
    }

    /// The same map with `α(c_a)` and `α(c_b)` exchanged. Still a
    /// bijection; generally no longer a quasi-isometry.
    pub fn with_swapped(&self, c_a: Colouring, c_b: Colouring) -> Self {
        let mut out = self.clone();
        out.name = format!("{}+swap", self.name);
        out.swaps.push((c_a, c_b));
        out
    }

    pub fn declared_constants(&self) -> DeclaredConstants {
        DeclaredConstants {
            q: self.partition.target.diameter(),
            l: self.sigma.constant(),
            l_prime: self.sigma.constant(),
        }
    }

    /// The wreath map with quasi-inverse `(d, q) ↦ (α⁻¹(d), β̄(q))`.
    pub fn to_qi_map(&self) -> QIMap<WreathModel, WreathModel> {
        let fwd = Arc::new(self.clone());
        let back = fwd.clone();
        let beta_bar = self.beta().quasi_inverse_fn();
        let mut map = QIMap::new(self.name.clone(), self.source, self.target, move |x: &WreathElement| {
            fwd.apply(x)
        });
        if let Some(g) = beta_bar {
            map = map.with_quasi_inverse(move |y: &WreathElement| {
                WreathElement::new(back.alpha_inverse(&y.colouring), g(&y.pointer))
            });
        }
        if let Some(k) = self.beta().claimed_factor {
            map = map.with_factor(k);
        }
        map
    }
}

/// Builds `α` blockwise through `σ` on matched pieces, and `β` from the
/// partition bijection. `β`'s constants are estimated when missing.
pub fn build_aptolic_qi(
    name: impl Into<String>,
    sigma: BlockBiLipschitz,
    pb: PartitionBijection,
    budget: &Budget,
) -> Result<AptolicMap> {
    if sigma.m as i64 != pb.source.size || sigma.n as i64 != pb.target.size {
        return Err(LabError::SizeMismatch(format!(
            "σ acts on blocks {}→{} but the pieces have sizes {}→{}",
            sigma.m, sigma.n, pb.source.size, pb.target.size
        )));
    }
    let mut pb = pb;
    if pb.beta.estimated_constants.is_none() {
        pb.beta = pb.beta.estimated(
            BETA_ESTIMATE_RADIUS,
            BETA_ESTIMATE_SAMPLES,
            BETA_ESTIMATE_SEED,
            &EstimateConfig::default(),
            budget,
        )?;
    }
    let base = BaseModel::lattice(pb.source.dim);
    Ok(AptolicMap {
        name: name.into(),
        source: WreathModel::new(sigma.source_lamp, base),
        target: WreathModel::new(sigma.target_lamp, base),
        sigma,
        partition: pb,
        swaps: Vec::new(),
    })
}

/// Named constructions.
pub const NAMED_APTOLIC: [&str; 5] = ["identity", "packing", "three-two", "identity-mutated", "packing-mutated"];

/// `Z≀Z → Z≀Z`, the identity.
pub fn identity_aptolic(budget: &Budget) -> Result<AptolicMap> {
    build_aptolic_qi(
        "identity",
        BlockBiLipschitz::identity(BaseModel::integers(), 1),
        PartitionBijection::bricks(1, 1, 1)?,
        budget,
    )
}

/// `Z≀Z → Z²≀Z`: lamps on `{2j, 2j+1}` become one `Z²` lamp at `j`.
pub fn packing_aptolic(budget: &Budget) -> Result<AptolicMap> {
    build_aptolic_qi(
        "packing",
        BlockBiLipschitz::repack(1, 2, 2, 1)?,
        PartitionBijection::bricks(1, 2, 1)?,
        budget,
    )
}

/// `Z²≀Z → Z³≀Z` over pieces of sizes 3 and 2.
pub fn three_two_aptolic(budget: &Budget) -> Result<AptolicMap> {
    build_aptolic_qi(
        "three-two",
        BlockBiLipschitz::repack(2, 3, 3, 2)?,
        PartitionBijection::bricks(1, 3, 2)?,
        budget,
    )
}

fn lit(w: &WreathModel, pairs: &[(i64, i64)]) -> Colouring {
    Colouring::from_pairs(
        &w.lamp,
        pairs
            .iter()
            .map(|&(p, v)| (GroupElement::scalar(p), GroupElement::scalar(v))),
    )
}

/// The identity with `{0↦1}` and `{0↦1, 3↦1}` exchanged, which moves supports.
pub fn mutated_identity(budget: &Budget) -> Result<AptolicMap> {
    let id = identity_aptolic(budget)?;
    let (a, b) = (lit(&id.source, &[(0, 1)]), lit(&id.source, &[(0, 1), (3, 1)]));
    Ok(id.with_swapped(a, b))
}

/// The packing map with `{0↦1}` and `{0↦2}` exchanged, which stretches lamps.
pub fn mutated_packing(budget: &Budget) -> Result<AptolicMap> {
    let p = packing_aptolic(budget)?;
    let (a, b) = (lit(&p.source, &[(0, 1)]), lit(&p.source, &[(0, 2)]));
    Ok(p.with_swapped(a, b))
}

pub fn named_aptolic(name: &str, budget: &Budget) -> Result<AptolicMap> {
    match name {
        "identity" => identity_aptolic(budget),
        "packing" => packing_aptolic(budget),
        "three-two" => three_two_aptolic(budget),
        "identity-mutated" => mutated_identity(budget),
        "packing-mutated" => mutated_packing(budget),
        other => Err(LabError::InvalidParameter(format!(
            "unknown aptolic map {other:?}; expected one of {NAMED_APTOLIC:?}"
        ))),
    }
}

/// A pair of colourings violating a condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub condition: String,
    pub first: String,
    pub second: String,
    /// `None` when one side is empty and the other is not.
    pub measured: Option<u64>,
    pub declared: u64,
}

/// Window-relative constants; every value is a lower bound on the true one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AptolicityReport {
    pub bijective: bool,
    pub beta_constants: Option<QiConstants>,
    /// `None` when some pair had exactly one empty difference support.
    pub q: Option<u64>,
    pub l: u64,
    pub l_prime: u64,
    pub declared: DeclaredConstants,
    pub colourings_checked: usize,
    pub pairs_checked: usize,
    pub counterexample: Option<Counterexample>,
}

impl AptolicityReport {
    pub fn passed(&self) -> bool {
        self.bijective && self.beta_constants.is_some() && self.counterexample.is_none()
    }

    pub fn constants(&self) -> (Option<u64>, u64, u64) {
        (self.q, self.l, self.l_prime)
    }
}

fn encode_colouring(w: &WreathModel, c: &Colouring) -> String {
    let parts: Vec<String> = c
        .entries()
        .map(|(p, v)| format!("{}:{}", w.base.encode(p), w.lamp.encode(v)))
        .collect();
    format!("{{{}}}", parts.join(";"))
}

/// Largest lamp distance between two colourings over all positions.
fn pointwise_spread(lamp: &BaseModel, a: &Colouring, b: &Colouring, budget: &Budget) -> Result<u64> {
    let mut worst = 0;
    for t in a.difference_support(b) {
        worst = worst.max(lamp.distance(&a.get(lamp, &t), &b.get(lamp, &t), budget)?);
    }
    Ok(worst)
}

/// Subsets of `items` with exactly `k` elements, in lexicographic order.
fn subsets<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i].clone()).collect());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + items.len() - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Checks the five conditions characterising aptolic quasi-isometries on a
/// finite window: base ball of radius `base_radius` around the identity,
/// colourings with at most `support_bound` lit points and colours in the
/// lamp ball of radius `lamp_radius`.
///
/// * (i) `α⁻¹∘α` and `α∘α⁻¹` round-trip and `α` is injective on the window;
/// * (ii) `β`'s grid constants;
/// * (iii) `Q` over every pair of colourings whose union support has at most
///   `support_bound` points;
/// * (iv) `L` over single-point adjacent changes of enumerated colourings;
/// * (v) `L′` over single-point adjacent changes of their images.
///
/// A counterexample is reported when a measured constant exceeds the one the
/// construction declares, or when `Q` is infinite.
pub fn check_aptolicity(
    map: &AptolicMap,
    base_radius: u64,
    lamp_radius: u64,
    support_bound: usize,
    budget: &Budget,
) -> Result<AptolicityReport> {
    let src = &map.source;
    let dst = &map.target;
    let declared = map.declared_constants();
    let window = ball(&src.base, &src.base.identity(), base_radius, budget)?;
    let target_window = ball(&dst.base, &map.beta().apply(&src.base.identity()), base_radius, budget)?;
    let colourings = bounded_support_colourings(src, &window, support_bound, lamp_radius, budget)?;
    let mut counterexample: Option<Counterexample> = None;
    let mut note = |ce: Counterexample| {
        if counterexample.is_none() {
            counterexample = Some(ce);
        }
    };

    // (i)
    let images: Vec<Colouring> = colourings.iter().map(|c| map.alpha(c)).collect();
    let mut bijective = images.iter().collect::<BTreeSet<_>>().len() == colourings.len();
    for (c, d) in colourings.iter().zip(&images) {
        if &map.alpha_inverse(d) != c {
            bijective = false;
            note(Counterexample {
                condition: "i".into(),
                first: encode_colouring(src, c),
                second: encode_colouring(dst, d),
                measured: None,
                declared: 0,
            });
            break;
        }
    }

    // (ii)
    let beta_constants = estimate_qi_constants(
        map.beta(),
        base_radius.max(BETA_ESTIMATE_RADIUS),
        BETA_ESTIMATE_SAMPLES,
        BETA_ESTIMATE_SEED,
        &EstimateConfig::default(),
        budget,
    )
    .ok();

    // (iii)
    let positions: Vec<GroupElement> = window.iter().cloned().collect();
    let k = support_bound.min(positions.len());
    let mut q: Option<u64> = Some(0);
    let mut pairs_checked = 0usize;
    for u in subsets(&positions, k) {
        let u_set: FiniteSubset<GroupElement> = u.into_iter().collect();
        let local = truncated_lamp_window(src, &u_set, lamp_radius, budget)?;
        let local_images: Vec<Colouring> = local.iter().map(|c| map.alpha(c)).collect();
        for i in 0..local.len() {
            for j in i + 1..local.len() {
                pairs_checked += 1;
                let diff: BTreeSet<GroupElement> = local[i]
                    .difference_support(&local[j])
                    .iter()
                    .map(|p| map.beta().apply(p))
                    .collect();
                let img: BTreeSet<GroupElement> =
                    local_images[i].difference_support(&local_images[j]).into_iter().collect();
                let measured = match (diff.is_empty(), img.is_empty()) {
                    (true, true) => Some(0),
                    (false, false) => Some(hausdorff_by_metric(&dst.base, &diff, &img, budget)?),
                    _ => None,
                };
                let exceeds = match measured {
                    None => true,
                    Some(v) => v > declared.q,
                };
                if exceeds {
                    note(Counterexample {
                        condition: "iii".into(),
                        first: encode_colouring(src, &local[i]),
                        second: encode_colouring(src, &local[j]),
                        measured,
                        declared: declared.q,
                    });
                }
                q = match (q, measured) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
        }
    }

    // (iv)
    let src_gens = src.lamp.generators();
    let mut l = 0;
    for (c, d) in colourings.iter().zip(&images) {
        for p in window.iter() {
            let here = c.get(&src.lamp, p);
            for t in &src_gens {
                let mut c2 = c.clone();
                c2.set(&src.lamp, p.clone(), src.lamp.multiply(&here, t));
                let spread = pointwise_spread(&dst.lamp, d, &map.alpha(&c2), budget)?;
                if spread > declared.l {
                    note(Counterexample {
                        condition: "iv".into(),
                        first: encode_colouring(src, c),
                        second: encode_colouring(src, &c2),
                        measured: Some(spread),
                        declared: declared.l,
                    });
                }
                l = l.max(spread);
            }
        }
    }

    // (v)
    let dst_gens = dst.lamp.generators();
    let mut l_prime = 0;
    for (c, d) in colourings.iter().zip(&images) {
        for p in target_window.iter() {
            let here = d.get(&dst.lamp, p);
            for t in &dst_gens {
                let mut d2 = d.clone();
                d2.set(&dst.lamp, p.clone(), dst.lamp.multiply(&here, t));
                let c2 = map.alpha_inverse(&d2);
                if map.alpha(&c2) != d2 {
                    bijective = false;
                }
                let spread = pointwise_spread(&src.lamp, c, &c2, budget)?;
                if spread > declared.l_prime {
                    note(Counterexample {
                        condition: "v".into(),
                        first: encode_colouring(dst, d),
                        second: encode_colouring(dst, &d2),
                        measured: Some(spread),
                        declared: declared.l_prime,
                    });
                }
                l_prime = l_prime.max(spread);
            }
        }
    }

    Ok(AptolicityReport {
        bijective,
        beta_constants,
        q,
        l,
        l_prime,
        declared,
        colourings_checked: colourings.len(),
        pairs_checked,
        counterexample,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetReport {
    pub passed: bool,
    pub target_colourings: usize,
    pub products_checked: usize,
    /// `(c, d)` with `α(c) ∈ 𝓛(B)` but `α(cd) ∉ 𝓛(B)` for `d ∈ 𝓛(A)`.
    pub witness: Option<(String, String)>,
}

/// Checks that `α⁻¹(𝓛(β(A)^{+Q′}))` is closed under right multiplication by
/// `𝓛(A)`, on colours from the lamp balls of radius `lamp_radius`.
pub fn coset_union_check(
    map: &AptolicMap,
    a: &FiniteSubset<GroupElement>,
    q_prime: u64,
    lamp_radius: u64,
    budget: &Budget,
) -> Result<CosetReport> {
    if a.is_empty() {
        return Err(LabError::EmptySet);
    }
    let src = &map.source;
    let dst = &map.target;
    let image: FiniteSubset<GroupElement> = a.iter().map(|p| map.beta().apply(p)).collect();
    let b = neighborhood(&dst.base, &image, q_prime, budget)?;
    let targets = truncated_lamp_window(dst, &b, lamp_radius, budget)?;
    let local = truncated_lamp_window(src, a, lamp_radius, budget)?;
    budget.check(targets.len().saturating_mul(local.len()), "checking coset unions")?;
    let mut products_checked = 0;
    for d in &targets {
        let c = map.alpha_inverse(d);
        for e in &local {
            products_checked += 1;
            let ce = c.multiply(&src.lamp, e);
            if !map.alpha(&ce).supported_in(&b) {
                return Ok(CosetReport {
                    passed: false,
                    target_colourings: targets.len(),
                    products_checked,
                    witness: Some((encode_colouring(src, &c), encode_colouring(src, e))),
                });
            }
        }
    }
    Ok(CosetReport {
        passed: true,
        target_colourings: targets.len(),
        products_checked,
        witness: None,
    })
}

/// `(c, p) ↦ (c ∘ f⁻¹, f(p))` for a base map `f` carrying a bijection
/// witness; the quasi-inverse is `(d, q) ↦ (d ∘ f, f⁻¹(q))`.
pub fn lift_base_bilipschitz(
    lamp: BaseModel,
    f: &QIMap<BaseModel, BaseModel>,
) -> Result<QIMap<WreathModel, WreathModel>> {
    if f.witness.is_none() {
        return Err(LabError::MissingWitness(f.name.clone()));
    }
    if f.witness_backward(&f.target.identity()).is_err() {
        return Err(LabError::MissingInverse(f.name.clone()));
    }
    let source = WreathModel::new(lamp, f.source);
    let target = WreathModel::new(lamp, f.target);
    let (fw, bw) = (Arc::new(f.clone()), Arc::new(f.clone()));
    // The witness exists and inverts, so both lookups below succeed.
    let lifted = move |x: &WreathElement| -> WreathElement {
        let colouring = Colouring::from_pairs(
            &lamp,
            x.colouring
                .entries()
                .map(|(s, v)| (fw.witness_forward(s).expect("witness present"), v.clone())),
        );
        WreathElement::new(colouring, fw.witness_forward(&x.pointer).expect("witness present"))
    };
    let lowered = move |y: &WreathElement| -> WreathElement {
        let colouring = Colouring::from_pairs(
            &lamp,
            y.colouring
                .entries()
                .map(|(t, v)| (bw.witness_backward(t).expect("witness inverts"), v.clone())),
        );
        WreathElement::new(colouring, bw.witness_backward(&y.pointer).expect("witness inverts"))
    };
    Ok(QIMap::new(format!("lift({})", f.name), source, target, lifted)
        .with_quasi_inverse(lowered)
        .with_factor(Rational::from_integer(1)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingConclusion {
    /// `m/n` from the lamp growth degrees `(n, m)`.
    pub expected_factor: Rational,
    pub certificate: ScalingCertificate,
    /// The `K` used in the ratio `|A| / |β(A)^{+K}|`.
    pub k: u64,
    pub scales: Vec<u64>,
    pub image_ratios: Vec<Rational>,
}

/// Certifies `β` as quasi-`m/n`-to-one over base boxes and reports the
/// ratios `|A| / |β(A)^{+K}|` over the same boxes in the source base.
pub fn verify_scaling_conclusion(
    map: &AptolicMap,
    spec: &FolnerSpec,
    count: usize,
    lamp_degrees: (u64, u64),
    budget: &Budget,
) -> Result<ScalingConclusion> {
    let (n, m) = lamp_degrees;
    if n == 0 || m == 0 {
        return Err(LabError::InvalidParameter("lamp growth degrees must be positive".into()));
    }
    let expected = Rational::new(m as i64, n as i64);
    let beta = map.beta();
    let k = beta.estimated_constants.map(|c| c.k).ok_or(LabError::MissingWindow)?;
    let target_family = folner_family(&map.target.base, spec, count, budget)?;
    let certificate = scaling_defect(beta, expected, &target_family, None, budget)?;
    let source_family = folner_family(&map.source.base, spec, count, budget)?;
    let mut image_ratios = Vec::with_capacity(source_family.len());
    for a in &source_family.sets {
        let img: FiniteSubset<GroupElement> = a.iter().map(|p| beta.apply(p)).collect();
        let grown = neighborhood(&map.target.base, &img, k, budget)?;
        image_ratios.push(Rational::new(a.len() as i64, grown.len() as i64));
    }
    Ok(ScalingConclusion {
        expected_factor: expected,
        certificate,
        k,
        scales: source_family.scales,
        image_ratios,
    })
}

/// Lamp radius used for the wreath Følner set over a base box of side `n`.
pub fn wreath_folner_lamp_radius(n: u64) -> u64 {
    1 + (63 - n.max(1).leading_zeros() as u64) / 4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRow {
    pub n: u64,
    pub lamp_radius: u64,
    pub wreath_size: u64,
    pub wreath_preimage_size: u64,
    pub wreath_ratio: Rational,
    pub beta_ratio: Rational,
}

/// Preimage ratios of the wreath map over the sets `{(d, q) : q ∈ F,
/// supp(d) ⊆ F, colours in the lamp ball}` for target base boxes `F`,
/// alongside `β`'s ratio on `F`. The preimage is counted as
/// `|β⁻¹(F)| · |α⁻¹(colourings)|`, with `α⁻¹` checked to round-trip.
pub fn wreath_transfer_ratios(map: &AptolicMap, scales: &[u64], budget: &Budget) -> Result<Vec<TransferRow>> {
    let mut rows = Vec::with_capacity(scales.len());
    for &n in scales {
        let f: FiniteSubset<GroupElement> = map.target.base.folner_box(n)?.into_iter().collect();
        let pre_base = preimage(map.beta(), &f, None, budget)?.set.len() as u64;
        let radius = wreath_folner_lamp_radius(n);
        let lamps = truncated_lamp_window(&map.target, &f, radius, budget)?;
        let mut sources = BTreeSet::new();
        for d in &lamps {
            let c = map.alpha_inverse(d);
            if &map.alpha(&c) != d {
                return Err(LabError::InvalidParameter(format!(
                    "α does not invert on {}",
                    encode_colouring(&map.target, d)
                )));
            }
            sources.insert(c);
        }
        let wreath_size = lamps.len() as u64 * f.len() as u64;
        let wreath_preimage_size = sources.len() as u64 * pre_base;
        rows.push(TransferRow {
            n,
            lamp_radius: radius,
            wreath_size,
            wreath_preimage_size,
            wreath_ratio: Rational::new(wreath_preimage_size as i64, wreath_size as i64),
            beta_ratio: Rational::new(pre_base as i64, f.len() as i64),
        });
    }
    Ok(rows)
}

/// Relative gap `|a − b| / |b|`.
pub fn relative_gap(a: Rational, b: Rational) -> f64 {
    if b.is_zero() {
        return f64::INFINITY;
    }
    ((a - b) / b).to_f64().map_or(f64::INFINITY, f64::abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qi::{bilipschitz_from_pipeline, identity_qi, translation_qi};
    use proptest::prelude::*;

    fn b() -> Budget {
        Budget::default()
    }

    fn ints(r: std::ops::RangeInclusive<i64>) -> FiniteSubset<GroupElement> {
        r.map(GroupElement::scalar).collect()
    }

    #[test]
    fn subsets_enumerate_combinations() {
        let items: Vec<i32> = (0..5).collect();
        assert_eq!(subsets(&items, 2).len(), 10);
        assert_eq!(subsets(&items, 0), vec![Vec::<i32>::new()]);
        assert_eq!(subsets(&items, 5).len(), 1);
        assert!(subsets(&items, 6).is_empty());
        let s3 = subsets(&items, 3);
        assert_eq!(s3.iter().collect::<BTreeSet<_>>().len(), 10);
    }

    #[test]
    fn block_maps_preserve_identity_and_invert() {
        let s = BlockBiLipschitz::repack(2, 3, 3, 2).unwrap();
        let zero = vec![GroupElement::new(&[0, 0]); 3];
        assert_eq!(s.sigma(&zero), vec![GroupElement::new(&[0, 0, 0]); 2]);
        let u = vec![
            GroupElement::new(&[1, -2]),
            GroupElement::new(&[3, 4]),
            GroupElement::new(&[-5, 6]),
        ];
        assert_eq!(s.sigma(&u), vec![GroupElement::new(&[1, -2, 3]), GroupElement::new(&[4, -5, 6])]);
        assert_eq!(s.sigma_inverse(&s.sigma(&u)), u);
        assert!(matches!(BlockBiLipschitz::repack(1, 3, 2, 1), Err(LabError::SizeMismatch(_))));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let err = build_aptolic_qi(
            "bad",
            BlockBiLipschitz::repack(1, 2, 2, 1).unwrap(),
            PartitionBijection::bricks(1, 3, 1).unwrap(),
            &b(),
        );
        assert!(matches!(err, Err(LabError::SizeMismatch(_))));
    }

    #[test]
    fn partitions_validate() {
        for (m, n) in [(1, 1), (2, 1), (3, 2)] {
            let pb = PartitionBijection::bricks(1, m, n).unwrap();
            assert!(pb.validate(&ints(-20..=20), &b()).unwrap());
        }
        let pb = PartitionBijection::bricks(2, 3, 2).unwrap();
        let window: FiniteSubset<_> = ball(&BaseModel::lattice(2), &GroupElement::new(&[0, 0]), 5, &b()).unwrap();
        assert!(pb.validate(&window, &b()).unwrap());
    }

    #[test]
    fn packing_alpha_examples() {
        let p = packing_aptolic(&b()).unwrap();
        let c = lit(&p.source, &[(0, 3), (1, -1), (5, 2)]);
        let d = p.alpha(&c);
        let expect = Colouring::from_pairs(
            &p.target.lamp,
            [
                (GroupElement::scalar(0), GroupElement::new(&[3, -1])),
                (GroupElement::scalar(2), GroupElement::new(&[0, 2])),
            ],
        );
        assert_eq!(d, expect);
        assert_eq!(p.alpha_inverse(&d), c);
        assert_eq!(p.alpha(&Colouring::empty()), Colouring::empty());
        for m in [identity_aptolic(&b()).unwrap(), three_two_aptolic(&b()).unwrap()] {
            assert_eq!(m.alpha(&Colouring::empty()), Colouring::empty());
        }
    }

    #[test]
    fn identity_constants() {
        let r = check_aptolicity(&identity_aptolic(&b()).unwrap(), 4, 2, 2, &b()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.constants(), (Some(0), 1, 1));
        assert_eq!(r.beta_constants, Some(QiConstants::new(Rational::from_integer(1), 0)));
    }

    #[test]
    fn packing_constants_are_stable() {
        let p = packing_aptolic(&b()).unwrap();
        let small = check_aptolicity(&p, 3, 2, 2, &b()).unwrap();
        let large = check_aptolicity(&p, 5, 2, 2, &b()).unwrap();
        assert!(small.passed() && large.passed());
        assert_eq!(small.constants(), large.constants());
        assert_eq!(large.l, 1);
        assert!(large.q.unwrap() <= 1);
    }

    #[test]
    fn three_two_passes() {
        let r = check_aptolicity(&three_two_aptolic(&b()).unwrap(), 3, 1, 2, &b()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn mutations_are_rejected() {
        let r = check_aptolicity(&mutated_identity(&b()).unwrap(), 4, 2, 2, &b()).unwrap();
        assert!(r.bijective && !r.passed());
        assert_eq!(r.counterexample.as_ref().unwrap().condition, "iii");
        let r = check_aptolicity(&mutated_packing(&b()).unwrap(), 4, 2, 2, &b()).unwrap();
        assert!(r.bijective && !r.passed() && r.counterexample.is_some());
        assert_eq!(r.l, 2);
    }

    #[test]
    fn coset_unions() {
        let id = identity_aptolic(&b()).unwrap();
        assert!(coset_union_check(&id, &ints(0..=1), 0, 2, &b()).unwrap().passed);
        let p = packing_aptolic(&b()).unwrap();
        assert!(coset_union_check(&p, &ints(0..=1), 1, 2, &b()).unwrap().passed);
        let bad = coset_union_check(&mutated_identity(&b()).unwrap(), &ints(0..=0), 0, 2, &b()).unwrap();
        assert!(!bad.passed && bad.witness.is_some());
    }

    #[test]
    fn lifts() {
        let z = BaseModel::integers();
        let lifted = lift_base_bilipschitz(BaseModel::cyclic(2), &identity_qi(z)).unwrap();
        let w = WreathModel::lamplighter(2);
        let x = w.element(&[(1, 1), (-2, 1)], 3);
        assert_eq!(lifted.apply(&x), x);

        let shift = lift_base_bilipschitz(BaseModel::cyclic(2), &translation_qi(3)).unwrap();
        let pts: Vec<_> = ball(&w, &w.identity(), 5, &b()).unwrap().into_set().into_iter().collect();
        for x in pts.iter().step_by(3) {
            for y in pts.iter().step_by(5) {
                let d0 = w.distance(x, y, &b()).unwrap();
                let d1 = w.distance(&shift.apply(x), &shift.apply(y), &b()).unwrap();
                assert_eq!(d0, d1);
            }
        }
        let no_witness = QIMap::new("bare", z, z, |x: &GroupElement| x.clone());
        assert!(matches!(
            lift_base_bilipschitz(BaseModel::cyclic(2), &no_witness),
            Err(LabError::MissingWitness(_))
        ));
    }

    #[test]
    fn lifted_dihedral_pipeline_is_a_quasi_isometry_on_windows() {
        let f = bilipschitz_from_pipeline(BaseModel::InfiniteDihedral, 100, 4, &b()).unwrap();
        let lifted = lift_base_bilipschitz(BaseModel::cyclic(2), &f).unwrap();
        let bilipschitz = EstimateConfig {
            k_max: 0,
            ..EstimateConfig::default()
        };
        let base = estimate_qi_constants(&f.witness_map().unwrap(), 40, 300, 1, &bilipschitz, &b()).unwrap();
        let lift = estimate_qi_constants(&lifted, 5, 300, 1, &bilipschitz, &b()).unwrap();
        assert!(lift.c <= base.c, "{lift:?} vs {base:?}");
    }

    #[test]
    fn scaling_conclusions() {
        let spec = FolnerSpec::default();
        let id = verify_scaling_conclusion(&identity_aptolic(&b()).unwrap(), &spec, 5, (1, 1), &b()).unwrap();
        assert!(id.certificate.defect_constant.is_zero());
        // K is the grid-least fit for the least C, so |β(A)^{+K}| needs long boxes.
        let p = verify_scaling_conclusion(&packing_aptolic(&b()).unwrap(), &spec, 8, (1, 2), &b()).unwrap();
        assert_eq!(p.expected_factor, Rational::from_integer(2));
        assert!(p.certificate.defect_constant.is_zero());
        assert!(relative_gap(*p.image_ratios.last().unwrap(), Rational::from_integer(2)) < 0.05);
        let t = verify_scaling_conclusion(&three_two_aptolic(&b()).unwrap(), &spec, 8, (2, 3), &b()).unwrap();
        assert!(relative_gap(*t.image_ratios.last().unwrap(), Rational::new(3, 2)) < 0.05);
    }

    #[test]
    fn transfer_matches_beta() {
        for map in [packing_aptolic(&b()).unwrap(), three_two_aptolic(&b()).unwrap()] {
            let rows = wreath_transfer_ratios(&map, &[2, 4], &b()).unwrap();
            for row in rows {
                assert!(relative_gap(row.wreath_ratio, row.beta_ratio) <= 0.1, "{row:?}");
            }
        }
    }

    #[test]
    fn lamp_radius_schedule() {
        assert_eq!(wreath_folner_lamp_radius(1), 1);
        assert_eq!(wreath_folner_lamp_radius(8), 1);
        assert_eq!(wreath_folner_lamp_radius(16), 2);
        assert_eq!(wreath_folner_lamp_radius(256), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// `α` only writes into the pieces matched to pieces the colouring touches.
        #[test]
        fn alpha_is_blockwise(lits in proptest::collection::vec((-20i64..20, -3i64..=3), 0..6)) {
            for map in [packing_aptolic(&b()).unwrap(), three_two_aptolic(&b()).unwrap()] {
                let c = Colouring::from_pairs(
                    &map.source.lamp,
                    lits.iter().map(|&(p, v)| {
                        let mut coords = vec![0; lattice_dim(&map.source.lamp).unwrap()];
                        coords[0] = v;
                        (GroupElement::scalar(p), GroupElement::new(&coords))
                    }),
                );
                let pieces: BTreeSet<PieceKey> =
                    c.support().map(|x| map.partition.source.piece_of(x).0).collect();
                let d = map.alpha(&c);
                for y in d.support() {
                    let key = map.partition.target.piece_of(y).0;
                    prop_assert!(pieces.contains(&key));
                }
                prop_assert_eq!(map.alpha_inverse(&d), c);
            }
        }
    }
}
