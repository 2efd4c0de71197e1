//! Cayley-graph invariants of the base models.

use proptest::prelude::*;
use wreath_lab::groups::{ball, word_distance};
use wreath_lab::{BaseModel, Budget, GroupElement, GroupModel};

fn models() -> Vec<BaseModel> {
    vec![
        BaseModel::integers(),
        BaseModel::lattice(2),
        BaseModel::lattice(3),
        BaseModel::cyclic(5),
        BaseModel::InfiniteDihedral,
        BaseModel::scaled(3),
    ]
}

/// Element reached from the identity by a word in the generator indices.
fn walk(model: &BaseModel, word: &[usize]) -> GroupElement {
    let gens = model.generators();
    word.iter()
        .fold(model.identity(), |x, &i| model.multiply(&x, &gens[i % gens.len()]))
}

fn word() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..16, 0..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_sizes_do_not_depend_on_centre(w in word(), r in 0u64..6) {
        let b = Budget::default();
        for model in models() {
            let x = walk(&model, &w);
            let here = ball(&model, &x, r, &b).unwrap().len();
            let home = ball(&model, &model.identity(), r, &b).unwrap().len();
            prop_assert_eq!(here, home, "{} at {:?}", model, x);
        }
    }

    #[test]
    fn word_metric_satisfies_triangle_inequality(u in word(), v in word(), w in word()) {
        let b = Budget::default();
        for model in models() {
            let (x, y, z) = (walk(&model, &u), walk(&model, &v), walk(&model, &w));
            let d = |p: &GroupElement, q: &GroupElement| model.distance(p, q, &b).unwrap();
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
            prop_assert_eq!(d(&x, &y), d(&y, &x));
        }
    }

    #[test]
    fn closed_form_distance_matches_search(u in word(), v in word()) {
        let b = Budget::default();
        for model in models() {
            let (x, y) = (walk(&model, &u), walk(&model, &v));
            let searched = word_distance(&model, &x, &y, 40, &b).unwrap();
            prop_assert_eq!(searched, Some(model.distance(&x, &y, &b).unwrap()));
        }
    }

    #[test]
    fn group_axioms_hold(u in word(), v in word(), w in word()) {
        for model in models() {
            let (x, y, z) = (walk(&model, &u), walk(&model, &v), walk(&model, &w));
            let e = model.identity();
            prop_assert_eq!(model.multiply(&model.multiply(&x, &y), &z), model.multiply(&x, &model.multiply(&y, &z)));
            prop_assert_eq!(model.multiply(&x, &model.inverse(&x)), e.clone());
            prop_assert_eq!(model.multiply(&e, &x), x.clone());
            prop_assert!(model.contains(&x));
            prop_assert_eq!(model.decode(&model.encode(&x)).unwrap(), x);
        }
    }
}

#[test]
fn one_step_growth_is_bounded_by_generator_count() {
    let b = Budget::default();
    for model in models() {
        let d = 1 + model.generators().len();
        let sizes: Vec<usize> = (0..=10)
            .map(|r| ball(&model, &model.identity(), r, &b).unwrap().len())
            .collect();
        for w in sizes.windows(2) {
            assert!(w[1] <= d * w[0], "{model}: {} > {d}·{}", w[1], w[0]);
        }
    }
}

#[test]
fn dihedral_and_integer_balls_have_equal_size() {
    let b = Budget::default();
    let z = BaseModel::integers();
    let dinf = BaseModel::InfiniteDihedral;
    for r in 1..=30u64 {
        let bz = ball(&z, &z.identity(), r, &b).unwrap().len();
        let bd = ball(&dinf, &dinf.identity(), r, &b).unwrap().len();
        assert_eq!(bz, 2 * r as usize + 1);
        assert_eq!(bd, bz, "radius {r}");
    }
}
