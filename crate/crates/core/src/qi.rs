//! Quasi-isometries between group models and their measure-scaling data.
//!
//! A [`QIMap`] carries a total forward map, an optional quasi-inverse, an
//! optional claimed scaling factor `k` and optional window-estimated
//! constants `(C, K)`. Preimages of finite sets are always taken inside a
//! finite window whose origin is recorded in [`Provenance`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::groups::{ball, bfs_distances, BaseModel, Budget, GroupElement, GroupModel};
use crate::matching::maximum_matching;
use crate::sets::{boundary, hausdorff_distance, neighborhood, FiniteSubset, FolnerFamily};
use crate::Rational;

pub type MapFn<S, T> =
    Arc<dyn Fn(&<S as GroupModel>::Element) -> <T as GroupModel>::Element + Send + Sync>;

/// Grid-fitted quasi-isometry constants; `c` is a multiple of 1/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QiConstants {
    pub c: Rational,
    pub k: u64,
}

impl QiConstants {
    pub fn new(c: Rational, k: u64) -> Self {
        QiConstants { c, k }
    }

    /// `⌈(C + 2)K⌉`, the window inflation that contains a full preimage.
    pub fn inflation_radius(&self) -> u64 {
        ((self.c + Rational::from_integer(2)) * Rational::from_integer(self.k as i64))
            .ceil()
            .to_integer() as u64
    }

    pub fn c_f64(&self) -> f64 {
        self.c.to_f64().unwrap_or(f64::NAN)
    }
}

/// A bijection at bounded distance from a map: exact by construction, or a
/// finite table extracted by matching.
pub enum BijectionWitness<S: GroupModel, T: GroupModel> {
    Exact {
        backward: MapFn<T, S>,
    },
    Table {
        forward: BTreeMap<S::Element, T::Element>,
        backward: BTreeMap<T::Element, S::Element>,
    },
}

impl<S: GroupModel, T: GroupModel> Clone for BijectionWitness<S, T> {
    fn clone(&self) -> Self {
        match self {
            BijectionWitness::Exact { backward } => BijectionWitness::Exact {
                backward: backward.clone(),
            },
            BijectionWitness::Table { forward, backward } => BijectionWitness::Table {
                forward: forward.clone(),
                backward: backward.clone(),
            },
        }
    }
}

impl<S: GroupModel, T: GroupModel> BijectionWitness<S, T> {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (S::Element, T::Element)>) -> Self {
        let forward: BTreeMap<_, _> = pairs.into_iter().collect();
        let backward = forward.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
        BijectionWitness::Table { forward, backward }
    }

    /// Number of tabulated pairs; `None` for a closed-form witness.
    pub fn table_len(&self) -> Option<usize> {
        match self {
            BijectionWitness::Exact { .. } => None,
            BijectionWitness::Table { forward, .. } => Some(forward.len()),
        }
    }
}

/// A quasi-isometry candidate `source → target`.
pub struct QIMap<S: GroupModel, T: GroupModel> {
    pub source: S,
    pub target: T,
    pub name: String,
    forward: MapFn<S, T>,
    quasi_inverse: Option<MapFn<T, S>>,
    pub claimed_factor: Option<Rational>,
    pub estimated_constants: Option<QiConstants>,
    pub witness: Option<BijectionWitness<S, T>>,
}

impl<S: GroupModel, T: GroupModel> Clone for QIMap<S, T> {
    fn clone(&self) -> Self {
        QIMap {
            source: self.source.clone(),
            target: self.target.clone(),
            name: self.name.clone(),
            forward: self.forward.clone(),
            quasi_inverse: self.quasi_inverse.clone(),
            claimed_factor: self.claimed_factor,
            estimated_constants: self.estimated_constants,
            witness: self.witness.clone(),
        }
    }
}

impl<S: GroupModel, T: GroupModel> fmt::Debug for QIMap<S, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QIMap")
            .field("name", &self.name)
            .field("source", &self.source.name())
            .field("target", &self.target.name())
            .field("claimed_factor", &self.claimed_factor)
            .field("estimated_constants", &self.estimated_constants)
            .field("has_quasi_inverse", &self.quasi_inverse.is_some())
            .finish()
    }
}

impl<S: GroupModel, T: GroupModel> QIMap<S, T> {
    pub fn new(
        name: impl Into<String>,
        source: S,
        target: T,
        forward: impl Fn(&S::Element) -> T::Element + Send + Sync + 'static,
    ) -> Self {
        QIMap {
            source,
            target,
            name: name.into(),
            forward: Arc::new(forward),
            quasi_inverse: None,
            claimed_factor: None,
            estimated_constants: None,
            witness: None,
        }
    }

    pub fn with_quasi_inverse(
        mut self,
        g: impl Fn(&T::Element) -> S::Element + Send + Sync + 'static,
    ) -> Self {
        self.quasi_inverse = Some(Arc::new(g));
        self
    }

    pub fn with_factor(mut self, k: Rational) -> Self {
        self.claimed_factor = Some(k);
        self
    }

    pub fn with_constants(mut self, constants: QiConstants) -> Self {
        self.estimated_constants = Some(constants);
        self
    }

    pub fn with_witness(mut self, witness: BijectionWitness<S, T>) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn apply(&self, x: &S::Element) -> T::Element {
        (self.forward)(x)
    }

    pub fn forward_fn(&self) -> MapFn<S, T> {
        self.forward.clone()
    }

    pub fn quasi_inverse_fn(&self) -> Option<MapFn<T, S>> {
        self.quasi_inverse.clone()
    }

    pub fn apply_inverse(&self, y: &T::Element) -> Option<S::Element> {
        self.quasi_inverse.as_ref().map(|g| g(y))
    }

    pub fn has_quasi_inverse(&self) -> bool {
        self.quasi_inverse.is_some()
    }

    /// The witness bijection at `x`, falling back to the map itself outside
    /// a table witness.
    pub fn witness_forward(&self, x: &S::Element) -> Result<T::Element> {
        match &self.witness {
            None => Err(LabError::MissingWitness(self.name.clone())),
            Some(BijectionWitness::Exact { .. }) => Ok(self.apply(x)),
            Some(BijectionWitness::Table { forward, .. }) => {
                Ok(forward.get(x).cloned().unwrap_or_else(|| self.apply(x)))
            }
        }
    }

    /// The witness bijection's inverse at `y`, falling back to the
    /// quasi-inverse outside a table witness.
    pub fn witness_backward(&self, y: &T::Element) -> Result<S::Element> {
        match &self.witness {
            None => Err(LabError::MissingWitness(self.name.clone())),
            Some(BijectionWitness::Exact { backward }) => Ok(backward(y)),
            Some(BijectionWitness::Table { backward, .. }) => match backward.get(y) {
                Some(x) => Ok(x.clone()),
                None => self
                    .apply_inverse(y)
                    .ok_or_else(|| LabError::MissingInverse(self.name.clone())),
            },
        }
    }

    /// The witness bijection as a map of its own, inverse included.
    pub fn witness_map(&self) -> Result<QIMap<S, T>> {
        if self.witness.is_none() {
            return Err(LabError::MissingWitness(self.name.clone()));
        }
        let (fw, bw) = (self.clone(), self.clone());
        // Lookups succeed: the witness exists and falls back to total maps.
        Ok(QIMap::new(
            format!("witness({})", self.name),
            self.source.clone(),
            self.target.clone(),
            move |x: &S::Element| fw.witness_forward(x).expect("witness present"),
        )
        .with_quasi_inverse(move |y: &T::Element| bw.witness_backward(y).expect("witness inverts"))
        .with_factor(Rational::one()))
    }

    /// Fills in `estimated_constants` from a window estimate.
    pub fn estimated(
        mut self,
        window_radius: u64,
        sample_count: usize,
        seed: u64,
        config: &EstimateConfig,
        budget: &Budget,
    ) -> Result<Self> {
        let c = estimate_qi_constants(&self, window_radius, sample_count, seed, config, budget)?;
        self.estimated_constants = Some(c);
        Ok(self)
    }
}

/// Search grid for [`estimate_qi_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub c_max: Rational,
    pub k_max: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            c_max: Rational::from_integer(16),
            k_max: 8,
        }
    }
}

/// Grid-least `(C, K)`, by `C` then `K`, satisfying on the radius
/// `window_radius` ball around the identity:
///
/// * `d(x,y)/C − K ≤ d(f x, f y) ≤ C·d(x,y) + K` on every adjacent pair and on
///   `sample_count` seeded random pairs;
/// * `d(g f x, x) ≤ K` when a quasi-inverse `g` exists;
/// * every target point within the inner image radius is `K`-close to the
///   image (witnessed through `g` when it exists).
///
/// `C` runs over multiples of 1/4 from 1 up to `config.c_max`.
pub fn estimate_qi_constants<S: GroupModel, T: GroupModel>(
    f: &QIMap<S, T>,
    window_radius: u64,
    sample_count: usize,
    seed: u64,
    config: &EstimateConfig,
    budget: &Budget,
) -> Result<QiConstants> {
    let no_fit = || LabError::NoFit {
        c_max: config.c_max.to_f64().unwrap_or(f64::NAN),
        k_max: config.k_max,
    };
    let s = &f.source;
    let t = &f.target;
    let center = s.identity();
    let window: Vec<S::Element> = ball(s, &center, window_radius, budget)?.into_set().into_iter().collect();
    let images: Vec<T::Element> = window.iter().map(|x| f.apply(x)).collect();
    let index: BTreeMap<&S::Element, usize> = window.iter().enumerate().map(|(i, x)| (x, i)).collect();

    // (source distance, target distance) pairs.
    let mut pairs: BTreeSet<(u64, u64)> = BTreeSet::new();
    for (i, x) in window.iter().enumerate() {
        for y in s.neighbors(x) {
            let fy = index.get(&y).map_or_else(|| f.apply(&y), |&j| images[j].clone());
            pairs.insert((1, t.distance(&images[i], &fy, budget)?));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..sample_count {
        let i = rng.gen_range(0..window.len());
        let j = rng.gen_range(0..window.len());
        let ds = s.distance(&window[i], &window[j], budget)?;
        pairs.insert((ds, t.distance(&images[i], &images[j], budget)?));
    }

    let mut k_floor = 0u64;
    if let Some(g) = &f.quasi_inverse {
        for (x, fx) in window.iter().zip(&images) {
            k_floor = k_floor.max(s.distance(&g(fx), x, budget)?);
        }
    }
    let f_center = f.apply(&center);
    let mut inner = u64::MAX;
    for (x, fx) in window.iter().zip(&images) {
        if s.distance(&center, x, budget)? == window_radius {
            inner = inner.min(t.distance(&f_center, fx, budget)?);
        }
    }
    if inner == u64::MAX {
        inner = 0;
    }
    let target_window = ball(t, &f_center, inner, budget)?;
    let density = match &f.quasi_inverse {
        Some(g) => {
            let mut worst = 0;
            for y in target_window.iter() {
                worst = worst.max(t.distance(y, &f.apply(&g(y)), budget)?);
            }
            worst
        }
        None => {
            let reach = bfs_distances(
                t,
                images.iter().cloned(),
                Some(config.k_max + 1),
                budget,
                "measuring image density",
            )?;
            let mut worst = 0;
            for y in target_window.iter() {
                worst = worst.max(reach.get(y).copied().unwrap_or(config.k_max + 1));
            }
            worst
        }
    };
    k_floor = k_floor.max(density);
    if k_floor > config.k_max {
        return Err(no_fit());
    }

    let quarters_max = (config.c_max * Rational::from_integer(4)).floor().to_integer();
    for q in 4..=quarters_max {
        let q = q as i128;
        let mut k_need = k_floor as i128;
        for &(ds, dt) in &pairs {
            let (ds, dt) = (ds as i128, dt as i128);
            // dt ≤ (q/4)·ds + K  and  ds ≤ (q/4)·(dt + K)
            let upper = ceil_div(4 * dt - q * ds, 4);
            let lower = ceil_div(4 * ds - q * dt, q);
            k_need = k_need.max(upper).max(lower);
            if k_need > config.k_max as i128 {
                break;
            }
        }
        if k_need <= config.k_max as i128 {
            return Ok(QiConstants::new(Rational::new(q as i64, 4), k_need as u64));
        }
    }
    Err(no_fit())
}

fn ceil_div(a: i128, b: i128) -> i128 {
    let d = a.div_euclid(b);
    if a.rem_euclid(b) == 0 {
        d
    } else {
        d + 1
    }
}

/// Where the finite window used for a preimage came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Supplied by the caller and trusted to contain the full preimage.
    CallerWindow { size: usize },
    /// `g(A)^{+⌈(C+2)K⌉}` for the quasi-inverse `g`.
    QuasiInverseInflation { radius: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preimage<E> {
    pub set: FiniteSubset<E>,
    pub provenance: Provenance,
}

/// `{x ∈ window : f(x) ∈ A}`. Without a caller window the window is the
/// quasi-inverse image of `A` inflated by `⌈(C+2)K⌉`.
pub fn preimage<S: GroupModel, T: GroupModel>(
    f: &QIMap<S, T>,
    a: &FiniteSubset<T::Element>,
    window: Option<&FiniteSubset<S::Element>>,
    budget: &Budget,
) -> Result<Preimage<S::Element>> {
    let filter = |w: &FiniteSubset<S::Element>| -> FiniteSubset<S::Element> {
        w.iter().filter(|x| a.contains(&f.apply(x))).cloned().collect()
    };
    if let Some(w) = window {
        return Ok(Preimage {
            set: filter(w),
            provenance: Provenance::CallerWindow { size: w.len() },
        });
    }
    match (&f.quasi_inverse, &f.estimated_constants) {
        (Some(g), Some(c)) => {
            let radius = c.inflation_radius();
            let seed: FiniteSubset<S::Element> = a.iter().map(|y| g(y)).collect();
            let w = neighborhood(&f.source, &seed, radius, budget)?;
            Ok(Preimage {
                set: filter(&w),
                provenance: Provenance::QuasiInverseInflation { radius },
            })
        }
        _ => Err(LabError::MissingWindow),
    }
}

/// Hausdorff distance between `g(A)` and `f⁻¹(A^{+K})`, bounded by
/// `⌈(C+2)K⌉` for a quasi-isometry with constants `(C, K)`.
pub fn neighborhood_preimage_gap<S: GroupModel, T: GroupModel>(
    f: &QIMap<S, T>,
    a: &FiniteSubset<T::Element>,
    budget: &Budget,
) -> Result<u64> {
    let (g, c) = match (&f.quasi_inverse, &f.estimated_constants) {
        (Some(g), Some(c)) => (g, c),
        (None, _) => return Err(LabError::MissingInverse(f.name.clone())),
        (_, None) => return Err(LabError::MissingWindow),
    };
    let a_k = neighborhood(&f.target, a, c.k, budget)?;
    let pre = preimage(f, &a_k, None, budget)?.set;
    let ga: FiniteSubset<S::Element> = a.iter().map(|y| g(y)).collect();
    let cap = 2 * c.inflation_radius() + 1;
    hausdorff_distance(&f.source, &ga, &pre, cap, budget)?.ok_or_else(|| {
        LabError::InvalidParameter(format!("{}: preimage gap exceeds {cap}", f.name))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectRow {
    pub n: u64,
    pub size: u64,
    pub preimage_size: u64,
    pub boundary: u64,
    /// `|k·|A| − |f⁻¹(A)||`.
    pub defect: Rational,
}

impl DefectRow {
    /// `defect / max(1, |∂A|)`.
    pub fn normalized(&self) -> Rational {
        self.defect / Rational::from_integer(self.boundary.max(1) as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingCertificate {
    pub factor: Rational,
    /// Least `C` with `defect ≤ C·max(1, |∂A|)` on every row.
    pub defect_constant: Rational,
    pub family_model: String,
    pub rows: Vec<DefectRow>,
    pub provenance: Vec<Provenance>,
}

impl ScalingCertificate {
    /// True when the normalized defect strictly increases over the last
    /// three rows, i.e. the defect is not bounded by a multiple of `|∂A|`.
    pub fn defect_ratio_growing(&self) -> bool {
        let norm: Vec<Rational> = self.rows.iter().map(DefectRow::normalized).collect();
        norm.len() >= 3 && norm[norm.len() - 3..].windows(2).all(|w| w[1] > w[0])
    }
}

/// Defect table of `f` against factor `k` over a Følner family in the target.
pub fn scaling_defect<S: GroupModel, T: GroupModel>(
    f: &QIMap<S, T>,
    k: Rational,
    family: &FolnerFamily<T::Element>,
    window: Option<&FiniteSubset<S::Element>>,
    budget: &Budget,
) -> Result<ScalingCertificate> {
    if !k.is_positive() {
        return Err(LabError::InvalidParameter("scaling factor must be positive".into()));
    }
    let mut rows = Vec::with_capacity(family.len());
    let mut provenance = Vec::with_capacity(family.len());
    let mut defect_constant = Rational::zero();
    for (n, a) in family.scales.iter().zip(&family.sets) {
        let pre = preimage(f, a, window, budget)?;
        let db = boundary(&f.target, a).len() as u64;
        let defect = (k * Rational::from_integer(a.len() as i64)
            - Rational::from_integer(pre.set.len() as i64))
        .abs();
        let row = DefectRow {
            n: *n,
            size: a.len() as u64,
            preimage_size: pre.set.len() as u64,
            boundary: db,
            defect,
        };
        defect_constant = defect_constant.max(row.normalized());
        rows.push(row);
        provenance.push(pre.provenance);
    }
    Ok(ScalingCertificate {
        factor: k,
        defect_constant,
        family_model: family.model_name.clone(),
        rows,
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    pub scales: Vec<u64>,
    /// `|f⁻¹(F_n)| / |F_n|` in family order.
    pub ratios: Vec<Rational>,
    /// The last ratio.
    pub extrapolated: Rational,
}

impl ScalingEstimate {
    /// Relative error of the extrapolated factor against `k`.
    pub fn relative_error(&self, k: Rational) -> f64 {
        ((self.extrapolated - k) / k).abs().to_f64().unwrap_or(f64::INFINITY)
    }
}

pub fn estimate_scaling_factor<S: GroupModel, T: GroupModel>(
    f: &QIMap<S, T>,
    family: &FolnerFamily<T::Element>,
    window: Option<&FiniteSubset<S::Element>>,
    budget: &Budget,
) -> Result<ScalingEstimate> {
    if family.is_empty() {
        return Err(LabError::EmptySet);
    }
    let mut ratios = Vec::with_capacity(family.len());
    for a in &family.sets {
        let pre = preimage(f, a, window, budget)?;
        ratios.push(Rational::new(pre.set.len() as i64, a.len() as i64));
    }
    Ok(ScalingEstimate {
        scales: family.scales.clone(),
        extrapolated: *ratios.last().expect("nonempty family"),
        ratios,
    })
}

/// `g ∘ f`. Factors multiply and quasi-inverses compose in reverse when both
/// are present; estimated constants are dropped.
pub fn compose_qi<S: GroupModel, T: GroupModel, U: GroupModel>(
    g: &QIMap<T, U>,
    f: &QIMap<S, T>,
) -> Result<QIMap<S, U>> {
    if f.target != g.source {
        return Err(LabError::ModelMismatch {
            expected: g.source.name(),
            found: f.target.name(),
        });
    }
    let (ff, gf) = (f.forward.clone(), g.forward.clone());
    let mut out = QIMap::new(
        format!("{}∘{}", g.name, f.name),
        f.source.clone(),
        g.target.clone(),
        move |x| gf(&ff(x)),
    );
    if let (Some(fi), Some(gi)) = (f.quasi_inverse.clone(), g.quasi_inverse.clone()) {
        out = out.with_quasi_inverse(move |z| fi(&gi(z)));
    }
    out.claimed_factor = match (f.claimed_factor, g.claimed_factor) {
        (Some(a), Some(b)) => Some(a * b),
        _ => None,
    };
    Ok(out)
}

/// Swaps forward and quasi-inverse; the factor becomes `1/k`.
pub fn quasi_inverse_of<S: GroupModel, T: GroupModel>(f: &QIMap<S, T>) -> Result<QIMap<T, S>> {
    let g = f
        .quasi_inverse
        .clone()
        .ok_or_else(|| LabError::MissingInverse(f.name.clone()))?;
    let name = match f.name.strip_prefix("inverse(").and_then(|s| s.strip_suffix(')')) {
        Some(inner) => inner.to_string(),
        None => format!("inverse({})", f.name),
    };
    Ok(QIMap {
        source: f.target.clone(),
        target: f.source.clone(),
        name,
        forward: g,
        quasi_inverse: Some(f.forward.clone()),
        claimed_factor: f.claimed_factor.map(|k| k.recip()),
        estimated_constants: None,
        witness: None,
    })
}

/// Result of a window-scale matching between a map's source and target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhyteReport<S, T> {
    pub radius: u64,
    pub source_core: usize,
    pub target_core: usize,
    /// Unmatched source-core points plus unmatched target-core points.
    pub deficiency: usize,
    pub pairs: BTreeMap<S, T>,
}

impl<S, T> WhyteReport<S, T> {
    pub fn is_perfect(&self) -> bool {
        self.deficiency == 0
    }

    /// Deficiency as a fraction of the source core.
    pub fn deficiency_fraction(&self) -> f64 {
        self.deficiency as f64 / self.source_core.max(1) as f64
    }
}

/// Maximum matching in `{(x, y) : d(f(x), y) ≤ R}` between `window` and
/// `f(window)^{+R}`, extended so that it covers as much as possible of the
/// source core (window points whose `R`-ball stays in the window) and of the
/// target core (points of `f(core)^{+R}` all of whose `R`-close window
/// points are core points).
pub fn whyte_matching<S: GroupModel, T: GroupModel>(
    f: &QIMap<S, T>,
    window: &FiniteSubset<S::Element>,
    r: u64,
    budget: &Budget,
) -> Result<WhyteReport<S::Element, T::Element>> {
    let s = &f.source;
    let t = &f.target;
    let left: Vec<S::Element> = window.iter().cloned().collect();
    let images: Vec<T::Element> = left.iter().map(|x| f.apply(x)).collect();
    let image_set: FiniteSubset<T::Element> = images.iter().cloned().collect();
    let right_set = neighborhood(t, &image_set, r, budget)?;
    let right: Vec<T::Element> = right_set.iter().cloned().collect();
    let right_index: BTreeMap<&T::Element, usize> = right.iter().enumerate().map(|(i, y)| (y, i)).collect();

    let mut adj: Vec<Vec<usize>> = Vec::with_capacity(left.len());
    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); right.len()];
    for (i, fx) in images.iter().enumerate() {
        let reach = bfs_distances(t, [fx.clone()], Some(r), budget, "building matching edges")?;
        let mut row: Vec<usize> = reach.keys().filter_map(|y| right_index.get(y).copied()).collect();
        row.sort_unstable();
        for &j in &row {
            radj[j].push(i);
        }
        adj.push(row);
    }
    budget.check(adj.iter().map(Vec::len).sum(), "building matching edges")?;

    let left_core: Vec<bool> = left
        .iter()
        .map(|x| -> Result<bool> {
            let b = bfs_distances(s, [x.clone()], Some(r), budget, "shrinking the window")?;
            Ok(b.keys().all(|y| window.contains(y)))
        })
        .collect::<Result<_>>()?;
    let core_images: FiniteSubset<T::Element> = images
        .iter()
        .zip(&left_core)
        .filter(|(_, &c)| c)
        .map(|(y, _)| y.clone())
        .collect();
    let core_reach = neighborhood(t, &core_images, r, budget)?;
    let right_core: Vec<bool> = right
        .iter()
        .enumerate()
        .map(|(j, y)| core_reach.contains(y) && radj[j].iter().all(|&i| left_core[i]))
        .collect();

    // Match the source core first so that non-core points never block it.
    let core_ids: Vec<usize> = (0..left.len()).filter(|&i| left_core[i]).collect();
    let core_adj: Vec<Vec<usize>> = core_ids.iter().map(|&i| adj[i].clone()).collect();
    let mut match_l: Vec<Option<usize>> = vec![None; left.len()];
    let mut match_r: Vec<Option<usize>> = vec![None; right.len()];
    for (ci, m) in maximum_matching(&core_adj, right.len()).into_iter().enumerate() {
        if let Some(j) = m {
            match_l[core_ids[ci]] = Some(j);
            match_r[j] = Some(core_ids[ci]);
        }
    }
    for j in 0..right.len() {
        if right_core[j] && match_r[j].is_none() {
            cover_right_vertex(j, &radj, &right_core, &mut match_l, &mut match_r);
        }
    }

    let unmatched_left = (0..left.len()).filter(|&i| left_core[i] && match_l[i].is_none()).count();
    let unmatched_right = (0..right.len()).filter(|&j| right_core[j] && match_r[j].is_none()).count();
    let pairs = match_l
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (left[i].clone(), right[j].clone())))
        .collect();
    Ok(WhyteReport {
        radius: r,
        source_core: core_ids.len(),
        target_core: right_core.iter().filter(|&&c| c).count(),
        deficiency: unmatched_left + unmatched_right,
        pairs,
    })
}

/// Alternating search from a free right vertex `root`. It ends at a free
/// left vertex (augment) or at a matched right vertex outside the target
/// core (swap it out). Matched vertices stay matched except that swapped
/// non-core vertex.
fn cover_right_vertex(
    root: usize,
    radj: &[Vec<usize>],
    right_core: &[bool],
    match_l: &mut [Option<usize>],
    match_r: &mut [Option<usize>],
) -> bool {
    // left vertex -> right vertex it was reached from
    let mut parent_left: BTreeMap<usize, usize> = BTreeMap::new();
    let mut seen_right: BTreeSet<usize> = BTreeSet::from([root]);
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(j) = queue.pop_front() {
        for &i in &radj[j] {
            if parent_left.contains_key(&i) {
                continue;
            }
            parent_left.insert(i, j);
            match match_l[i] {
                None => {
                    flip(i, &parent_left, match_l, match_r);
                    return true;
                }
                Some(j2) if !right_core[j2] => {
                    match_r[j2] = None;
                    flip(i, &parent_left, match_l, match_r);
                    return true;
                }
                Some(j2) => {
                    if seen_right.insert(j2) {
                        queue.push_back(j2);
                    }
                }
            }
        }
    }
    false
}

fn flip(
    mut i: usize,
    parent_left: &BTreeMap<usize, usize>,
    match_l: &mut [Option<usize>],
    match_r: &mut [Option<usize>],
) {
    loop {
        let j = parent_left[&i];
        let prev = match_r[j];
        match_l[i] = Some(j);
        match_r[j] = Some(i);
        match prev {
            Some(i2) if i2 != i => i = i2,
            _ => break,
        }
    }
}

/// Attaches the matching as a bijection witness, or fails with the
/// deficiency.
pub fn attach_matching_witness<S: GroupModel, T: GroupModel>(
    f: QIMap<S, T>,
    report: &WhyteReport<S::Element, T::Element>,
) -> Result<QIMap<S, T>> {
    if !report.is_perfect() {
        return Err(LabError::MatchingFailure {
            deficiency: report.deficiency,
        });
    }
    let w = BijectionWitness::from_pairs(report.pairs.clone());
    Ok(f.with_witness(w))
}

/// Identity map of a model, with an exact witness.
pub fn identity_qi<G: GroupModel>(model: G) -> QIMap<G, G> {
    QIMap::new(format!("identity:{}", model.name()), model.clone(), model, |x: &G::Element| x.clone())
        .with_quasi_inverse(|y: &G::Element| y.clone())
        .with_factor(Rational::one())
        .with_witness(BijectionWitness::Exact {
            backward: Arc::new(|y: &G::Element| y.clone()),
        })
}

fn shift_head(x: &GroupElement, f: impl Fn(i64) -> i64) -> GroupElement {
    let mut c = x.0.clone();
    c[0] = f(c[0]);
    GroupElement(c)
}

fn validate_lattice_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(LabError::InvalidParameter("lattice dimension must be >= 1".into()));
    }
    Ok(())
}

/// `x ↦ x + t` on `Z`, an isometry with an exact witness.
pub fn translation_qi(t: i64) -> QIMap<BaseModel, BaseModel> {
    let z = BaseModel::integers();
    QIMap::new(format!("translate:{t}"), z, z, move |x: &GroupElement| {
        GroupElement::scalar(x.head() + t)
    })
    .with_quasi_inverse(move |y: &GroupElement| GroupElement::scalar(y.head() - t))
    .with_factor(Rational::one())
    .with_witness(BijectionWitness::Exact {
        backward: Arc::new(move |y: &GroupElement| GroupElement::scalar(y.head() - t)),
    })
}

/// `x ↦ a·x` on `Z` with quasi-inverse `⌊y/a⌋`; quasi-`1/a`-to-one.
pub fn multiplication_qi(a: i64) -> Result<QIMap<BaseModel, BaseModel>> {
    if a < 1 {
        return Err(LabError::InvalidParameter("multiplier must be >= 1".into()));
    }
    let z = BaseModel::integers();
    Ok(QIMap::new(format!("scale:{a}"), z, z, move |x: &GroupElement| {
        GroupElement::scalar(a * x.head())
    })
    .with_quasi_inverse(move |y: &GroupElement| GroupElement::scalar(y.head().div_euclid(a)))
    .with_factor(Rational::new(1, a)))
}

/// The map induced by matched brick partitions of `Z^d`: the block
/// `[jm, (j+1)m)` of the first coordinate goes to `[jn, (j+1)n)`, with the
/// index inside the block clamped to `n − 1`. Quasi-`m/n`-to-one; the
/// quasi-inverse is the reverse construction.
pub fn build_scaling_qi_lattice(d: usize, m: i64, n: i64) -> Result<QIMap<BaseModel, BaseModel>> {
    validate_lattice_dim(d)?;
    if m < 1 || n < 1 {
        return Err(LabError::InvalidParameter("piece sizes m and n must be >= 1".into()));
    }
    let model = BaseModel::lattice(d);
    let fwd = move |x: &GroupElement| brick_map(x, m, n);
    let back = move |y: &GroupElement| brick_map(y, n, m);
    let mut map = QIMap::new(format!("lattice:{d}:{m}:{n}"), model, model, fwd)
        .with_quasi_inverse(back)
        .with_factor(Rational::new(m, n));
    if m == n {
        map = map.with_witness(BijectionWitness::Exact {
            backward: Arc::new(back),
        });
    }
    Ok(map)
}

/// Sends block `j` of size `m` on the first coordinate to block `j` of size `n`.
pub fn brick_map(x: &GroupElement, m: i64, n: i64) -> GroupElement {
    shift_head(x, |v| {
        let j = v.div_euclid(m);
        j * n + (v - j * m).min(n - 1)
    })
}

/// Inclusion `kZ → Z` with quasi-inverse `y ↦ k⌊y/k⌋`; quasi-`1/k`-to-one.
pub fn finite_index_inclusion_qi(k: i64) -> Result<QIMap<BaseModel, BaseModel>> {
    if k < 1 {
        return Err(LabError::InvalidParameter("subgroup index must be >= 1".into()));
    }
    Ok(QIMap::new(
        format!("inclusion:{k}"),
        BaseModel::scaled(k),
        BaseModel::integers(),
        |x: &GroupElement| x.clone(),
    )
    .with_quasi_inverse(move |y: &GroupElement| GroupElement::scalar(k * y.head().div_euclid(k)))
    .with_factor(Rational::new(1, k)))
}

/// `D∞ → Z`, forgetting the reflection bit of `x ↦ ±x + n`.
///
/// Each integer has exactly two preimages, so the map is quasi-2-to-one.
pub fn dihedral_projection_qi() -> QIMap<BaseModel, BaseModel> {
    QIMap::new(
        "dihedral-projection",
        BaseModel::InfiniteDihedral,
        BaseModel::integers(),
        |x: &GroupElement| GroupElement::scalar(x.coords()[0]),
    )
    .with_quasi_inverse(|y: &GroupElement| GroupElement::new(&[y.head(), 0]))
    .with_factor(Rational::from_integer(2))
}

/// The `D∞ → Z` composite of the reflection-forgetting projection with the
/// quasi-inverse of `⌊x/2⌋` (i.e. `x ↦ 2x`): factor `2 · 1/2 = 1`. A
/// matching on the radius `window_radius` ball at scale `r` supplies the
/// bijection witness.
pub fn bilipschitz_from_pipeline(
    model: BaseModel,
    window_radius: u64,
    r: u64,
    budget: &Budget,
) -> Result<QIMap<BaseModel, BaseModel>> {
    if model != BaseModel::InfiniteDihedral {
        return Err(LabError::UnsupportedModel(model.to_string()));
    }
    let halve = build_scaling_qi_lattice(1, 2, 1)?;
    let double = quasi_inverse_of(&halve)?;
    let composite = compose_qi(&double, &dihedral_projection_qi())?;
    let window = ball(&model, &model.identity(), window_radius, budget)?;
    let report = whyte_matching(&composite, &window, r, budget)?;
    attach_matching_witness(composite, &report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{folner_family, FolnerSpec};
    use proptest::prelude::*;

    fn b() -> Budget {
        Budget::default()
    }

    fn ints(r: std::ops::RangeInclusive<i64>) -> FiniteSubset<GroupElement> {
        r.map(GroupElement::scalar).collect()
    }

    fn boxes(model: &BaseModel, count: usize) -> FolnerFamily<GroupElement> {
        folner_family(model, &FolnerSpec::default(), count, &b()).unwrap()
    }

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn halve() -> QIMap<BaseModel, BaseModel> {
        build_scaling_qi_lattice(1, 2, 1).unwrap()
    }

    fn with_estimate(f: QIMap<BaseModel, BaseModel>) -> QIMap<BaseModel, BaseModel> {
        f.estimated(20, 200, 7, &EstimateConfig::default(), &b()).unwrap()
    }

    #[test]
    fn constants_of_simple_maps() {
        let cfg = EstimateConfig::default();
        let id = identity_qi(BaseModel::integers());
        assert_eq!(
            estimate_qi_constants(&id, 25, 100, 1, &cfg, &b()).unwrap(),
            QiConstants::new(r(1, 1), 0)
        );
        let z = BaseModel::integers();
        let double = QIMap::new("double", z, z, |x: &GroupElement| GroupElement::scalar(2 * x.head()));
        let c = estimate_qi_constants(&double, 25, 100, 1, &cfg, &b()).unwrap();
        assert_eq!(c.c, r(2, 1));
        assert!(c.k <= 1);
        let square = QIMap::new("square", z, z, |x: &GroupElement| {
            GroupElement::scalar(x.head() * x.head())
        });
        assert!(matches!(
            estimate_qi_constants(&square, 30, 100, 1, &cfg, &b()),
            Err(LabError::NoFit { .. })
        ));
        let inc = finite_index_inclusion_qi(2).unwrap();
        let c = estimate_qi_constants(&inc, 25, 100, 1, &cfg, &b()).unwrap();
        assert!(c.c <= r(2, 1) && c.k <= 2, "{c:?}");
    }

    #[test]
    fn estimation_is_seed_deterministic() {
        let f = build_scaling_qi_lattice(2, 3, 2).unwrap();
        let cfg = EstimateConfig::default();
        let a = estimate_qi_constants(&f, 8, 300, 42, &cfg, &b()).unwrap();
        let c = estimate_qi_constants(&f, 8, 300, 42, &cfg, &b()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn preimage_examples() {
        let h = halve();
        let p = preimage(&h, &ints(0..=4), Some(&ints(-10..=20)), &b()).unwrap();
        assert_eq!(p.set, ints(0..=9));
        assert_eq!(p.provenance, Provenance::CallerWindow { size: 31 });

        let id = identity_qi(BaseModel::integers());
        assert_eq!(preimage(&id, &ints(3..=7), Some(&ints(0..=10)), &b()).unwrap().set, ints(3..=7));

        let z = BaseModel::integers();
        let double = QIMap::new("double", z, z, |x: &GroupElement| GroupElement::scalar(2 * x.head()));
        let p = preimage(&double, &ints(0..=9), Some(&ints(-20..=20)), &b()).unwrap();
        assert_eq!(p.set, ints(0..=4));

        assert_eq!(preimage(&double, &ints(0..=9), None, &b()), Err(LabError::MissingWindow));
        let p = preimage(&with_estimate(halve()), &ints(0..=4), None, &b()).unwrap();
        assert_eq!(p.set, ints(0..=9));
        assert!(matches!(p.provenance, Provenance::QuasiInverseInflation { .. }));
    }

    #[test]
    fn defect_tables() {
        let z = BaseModel::integers();
        let fam = boxes(&z, 5);
        let h = with_estimate(halve());
        let cert = scaling_defect(&h, r(2, 1), &fam, None, &b()).unwrap();
        assert!(cert.defect_constant.is_zero());
        assert!(cert.rows.iter().all(|row| row.preimage_size == 2 * row.size));
        let wrong = scaling_defect(&h, r(1, 1), &fam, None, &b()).unwrap();
        for row in &wrong.rows {
            assert_eq!(row.defect, Rational::from_integer(row.n as i64));
        }
        assert!(wrong.defect_ratio_growing());
        assert!(!cert.defect_ratio_growing());

        let id = with_estimate(identity_qi(z));
        assert!(scaling_defect(&id, r(1, 1), &fam, None, &b()).unwrap().defect_constant.is_zero());
    }

    #[test]
    fn scaling_factor_estimates() {
        let z = BaseModel::integers();
        let fam = boxes(&z, 5);
        let est = estimate_scaling_factor(&with_estimate(halve()), &fam, None, &b()).unwrap();
        assert!(est.ratios.iter().all(|x| *x == r(2, 1)));
        let est = estimate_scaling_factor(&with_estimate(identity_qi(z)), &fam, None, &b()).unwrap();
        assert!(est.ratios.iter().all(|x| x.is_one()));
        let inc = finite_index_inclusion_qi(3).unwrap().estimated(20, 100, 3, &EstimateConfig::default(), &b()).unwrap();
        let est = estimate_scaling_factor(&inc, &fam, None, &b()).unwrap();
        assert!(est.relative_error(r(1, 3)) < 0.05, "{:?}", est.ratios);
    }

    #[test]
    fn composition_bookkeeping() {
        let third = build_scaling_qi_lattice(1, 3, 1).unwrap();
        let six = compose_qi(&third, &halve()).unwrap();
        assert_eq!(six.claimed_factor, Some(r(6, 1)));
        for x in -40..40 {
            assert_eq!(six.apply(&GroupElement::scalar(x)).head(), x.div_euclid(6));
        }
        let id = identity_qi(BaseModel::integers());
        assert_eq!(compose_qi(&id, &halve()).unwrap().claimed_factor, Some(r(2, 1)));
        let near_id = compose_qi(&quasi_inverse_of(&halve()).unwrap(), &halve()).unwrap();
        assert_eq!(near_id.claimed_factor, Some(r(1, 1)));
        let rep = whyte_matching(&near_id, &ints(-60..=60), 1, &b()).unwrap();
        assert!(rep.is_perfect(), "{}", rep.deficiency);

        let plane = build_scaling_qi_lattice(2, 2, 1).unwrap();
        assert!(matches!(compose_qi(&plane, &halve()), Err(LabError::ModelMismatch { .. })));
    }

    #[test]
    fn quasi_inverse_bookkeeping() {
        let inv = quasi_inverse_of(&halve()).unwrap();
        assert_eq!(inv.claimed_factor, Some(r(1, 2)));
        assert_eq!(inv.apply(&GroupElement::scalar(5)).head(), 10);
        let back = quasi_inverse_of(&inv).unwrap();
        assert_eq!(back.claimed_factor, Some(r(2, 1)));
        assert_eq!(back.name, halve().name);
        let z = BaseModel::integers();
        let no_inv = QIMap::new("square", z, z, |x: &GroupElement| x.clone());
        assert!(matches!(quasi_inverse_of(&no_inv), Err(LabError::MissingInverse(_))));
    }

    #[test]
    fn matching_examples() {
        let z = BaseModel::integers();
        let window = ints(-50..=50);
        let rep = whyte_matching(&identity_qi(z), &window, 0, &b()).unwrap();
        assert!(rep.is_perfect());
        assert!(rep.pairs.iter().all(|(x, y)| x == y));
        assert!(whyte_matching(&translation_qi(5), &window, 0, &b()).unwrap().is_perfect());
        let rep = whyte_matching(&halve(), &ints(-200..=200), 3, &b()).unwrap();
        assert!(!rep.is_perfect());
        assert!(rep.deficiency_fraction() > 0.4, "{}", rep.deficiency_fraction());
    }

    #[test]
    fn matching_deficiency_grows_with_window_for_halving() {
        let small = whyte_matching(&halve(), &ints(-50..=50), 2, &b()).unwrap();
        let large = whyte_matching(&halve(), &ints(-150..=150), 2, &b()).unwrap();
        assert!(small.deficiency > 0 && large.deficiency > small.deficiency);
    }

    #[test]
    fn dihedral_pipeline_has_witness() {
        let f = bilipschitz_from_pipeline(BaseModel::InfiniteDihedral, 100, 4, &b()).unwrap();
        assert_eq!(f.claimed_factor, Some(r(1, 1)));
        let BijectionWitness::Table { forward, backward } = f.witness.as_ref().unwrap() else {
            panic!("expected a table witness")
        };
        assert_eq!(forward.len(), backward.len());
        for (x, y) in forward {
            let d = BaseModel::integers().distance(&f.apply(x), y, &b()).unwrap();
            assert!(d <= 4);
        }
        assert!(matches!(
            bilipschitz_from_pipeline(BaseModel::integers(), 10, 4, &b()),
            Err(LabError::UnsupportedModel(_))
        ));
    }

    #[test]
    fn lattice_constructor_examples() {
        let id = build_scaling_qi_lattice(1, 1, 1).unwrap();
        for x in -20..20 {
            assert_eq!(id.apply(&GroupElement::scalar(x)).head(), x);
        }
        let f = build_scaling_qi_lattice(2, 3, 2).unwrap();
        assert_eq!(f.apply(&GroupElement::new(&[5, 7])), GroupElement::new(&[3, 7]));
        assert!(build_scaling_qi_lattice(0, 1, 1).is_err());
        assert!(build_scaling_qi_lattice(1, 0, 1).is_err());
        let z2 = BaseModel::lattice(2);
        let f = f.estimated(8, 200, 5, &EstimateConfig::default(), &b()).unwrap();
        let est = estimate_scaling_factor(&f, &boxes(&z2, 5), None, &b()).unwrap();
        assert!(est.relative_error(r(3, 2)) < 0.05);
    }

    /// Containment: the inflated quasi-inverse image and the
    /// window preimage of `A^{+K}` stay within `(C+2)K` of each other.
    #[test]
    fn preimage_tracks_quasi_inverse_image() {
        let z = BaseModel::integers();
        for f in [with_estimate(halve()), with_estimate(build_scaling_qi_lattice(1, 3, 2).unwrap())] {
            let c = f.estimated_constants.unwrap();
            let g = f.quasi_inverse_fn().unwrap();
            for (lo, hi) in [(0, 0), (-5, 9), (3, 40)] {
                let a = ints(lo..=hi);
                let a_k = neighborhood(&z, &a, c.k, &b()).unwrap();
                let pre = preimage(&f, &a_k, None, &b()).unwrap().set;
                let ga: FiniteSubset<_> = a.iter().map(|y| g(y)).collect();
                let h = hausdorff_distance(&z, &ga, &pre, 1000, &b()).unwrap().unwrap();
                assert!(h <= c.inflation_radius(), "{h} > {}", c.inflation_radius());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// A bounded perturbation changes defect rows by at most a multiple
        /// of the boundary and leaves the factor estimate in place.
        #[test]
        fn bounded_perturbation_keeps_factor(shift_mod in 2i64..7, lo in -30i64..30, len in 8i64..80) {
            let z = BaseModel::integers();
            let base = halve();
            let fwd = base.forward_fn();
            let perturbed = QIMap::new("perturbed", z, z, move |x: &GroupElement| {
                let y = fwd(x);
                let bump = if x.head().rem_euclid(shift_mod) == 0 { 2 } else { 0 };
                GroupElement::scalar(y.head() + bump)
            });
            let a = ints(lo..=lo + len - 1);
            let window = ints(2 * lo - 20..=2 * (lo + len) + 20);
            let fam = FolnerFamily::from_sets(&z, vec![len as u64], vec![a]).unwrap();
            let c0 = scaling_defect(&base, r(2, 1), &fam, Some(&window), &b()).unwrap();
            let c1 = scaling_defect(&perturbed, r(2, 1), &fam, Some(&window), &b()).unwrap();
            let diff = (c0.rows[0].preimage_size as i64 - c1.rows[0].preimage_size as i64).unsigned_abs();
            // Only preimages of points within 2 of the boundary can move.
            prop_assert!(diff <= 4 * c0.rows[0].boundary);
        }
    }
}
