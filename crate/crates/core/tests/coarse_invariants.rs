//! Neighbourhood, boundary and Hausdorff invariants on seeded random finite
//! subsets of every base model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wreath_lab::groups::ball;
use wreath_lab::qi::{
    build_scaling_qi_lattice, dihedral_projection_qi, finite_index_inclusion_qi, identity_qi,
    neighborhood_preimage_gap, quasi_inverse_of, EstimateConfig, QIMap,
};
use wreath_lab::sets::{boundary, hausdorff_distance, neighborhood};
use wreath_lab::{BaseModel, Budget, FiniteSubset, GroupElement, GroupModel};

const INSTANCES: usize = 200;

fn models() -> Vec<BaseModel> {
    vec![
        BaseModel::integers(),
        BaseModel::lattice(2),
        BaseModel::cyclic(5),
        BaseModel::InfiniteDihedral,
        BaseModel::scaled(3),
    ]
}

fn random_subset(pool: &[GroupElement], rng: &mut ChaCha8Rng) -> FiniteSubset<GroupElement> {
    let size = rng.gen_range(1..=10.min(pool.len()));
    pool.choose_multiple(rng, size).cloned().collect()
}

fn pool(model: &BaseModel) -> Vec<GroupElement> {
    ball(model, &model.identity(), 6, &Budget::default())
        .unwrap()
        .iter()
        .cloned()
        .collect()
}

#[test]
fn neighbourhood_growth_is_bounded_by_degree() {
    let budget = Budget::default();
    for (m, model) in models().into_iter().enumerate() {
        let pool = pool(&model);
        let n = 1 + model.max_degree().max(2) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        for _ in 0..INSTANCES {
            let a = random_subset(&pool, &mut rng);
            let s = rng.gen_range(0..=4u32);
            let grown = neighborhood(&model, &a, s as u64, &budget).unwrap();
            assert!(
                grown.len() as u64 <= n.pow(s) * a.len() as u64,
                "{model}: |A^+{s}| = {} exceeds {}^{s}·{}",
                grown.len(),
                n,
                a.len()
            );
        }
    }
}

#[test]
fn neighbourhood_shell_lies_near_boundary() {
    let budget = Budget::default();
    for (m, model) in models().into_iter().enumerate() {
        let pool = pool(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + m as u64);
        for _ in 0..INSTANCES {
            let a = random_subset(&pool, &mut rng);
            let s = rng.gen_range(1..=4u64);
            let shell = neighborhood(&model, &a, s, &budget).unwrap().difference(&a);
            let bd = boundary(&model, &a);
            let r = ball(&model, &model.identity(), s - 1, &budget).unwrap().len();
            assert!(shell.len() <= r * bd.len(), "{model}: shell {} > {r}·{}", shell.len(), bd.len());
            let near = neighborhood(&model, &bd, s - 1, &budget).unwrap();
            assert!(shell.is_subset(&near), "{model}: shell escapes the boundary neighbourhood");
        }
    }
}

#[test]
fn hausdorff_is_a_pseudometric() {
    let budget = Budget::default();
    for (m, model) in models().into_iter().enumerate() {
        let pool = pool(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + m as u64);
        let d = |x: &FiniteSubset<GroupElement>, y: &FiniteSubset<GroupElement>| {
            hausdorff_distance(&model, x, y, 64, &budget).unwrap().unwrap()
        };
        for _ in 0..INSTANCES {
            let a = random_subset(&pool, &mut rng);
            let b = random_subset(&pool, &mut rng);
            let c = random_subset(&pool, &mut rng);
            assert_eq!(d(&a, &a), 0);
            assert_eq!(d(&a, &b), d(&b, &a));
            assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }
    }
}

fn maps_into(model: &BaseModel) -> QIMap<BaseModel, BaseModel> {
    let f = match model {
        BaseModel::Lattice { dim: 1 } => build_scaling_qi_lattice(1, 3, 2).unwrap(),
        BaseModel::Lattice { dim } => build_scaling_qi_lattice(*dim, 3, 2).unwrap(),
        BaseModel::Cyclic { .. } => identity_qi(*model),
        BaseModel::InfiniteDihedral => quasi_inverse_of(&dihedral_projection_qi()).unwrap(),
        BaseModel::ScaledSubgroup { index } => {
            quasi_inverse_of(&finite_index_inclusion_qi(*index).unwrap()).unwrap()
        }
    };
    f.estimated(8, 200, 11, &EstimateConfig::default(), &Budget::default())
        .unwrap()
}

#[test]
fn preimage_of_neighbourhood_tracks_quasi_inverse_image() {
    let budget = Budget::default();
    for (m, model) in models().into_iter().enumerate() {
        let f = maps_into(&model);
        let c = f.estimated_constants.unwrap();
        let pool = pool(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(300 + m as u64);
        for _ in 0..INSTANCES {
            let a = random_subset(&pool, &mut rng);
            let gap = neighborhood_preimage_gap(&f, &a, &budget).unwrap();
            assert!(gap <= c.inflation_radius(), "{}: gap {gap} > {}", f.name, c.inflation_radius());
        }
    }
}
