//! Invariants of the built aptolic maps on enumerated windows.

use std::collections::BTreeSet;

use wreath_lab::aptolic::{
    check_aptolicity, identity_aptolic, packing_aptolic, relative_gap, three_two_aptolic,
    wreath_transfer_ratios, AptolicMap,
};
use wreath_lab::groups::ball;
use wreath_lab::wreath::bounded_support_colourings;
use wreath_lab::{Budget, GroupModel};

fn built() -> Vec<AptolicMap> {
    let b = Budget::default();
    vec![
        identity_aptolic(&b).unwrap(),
        packing_aptolic(&b).unwrap(),
        three_two_aptolic(&b).unwrap(),
    ]
}

#[test]
fn alpha_is_injective_and_inverts_on_windows() {
    let b = Budget::default();
    for map in built() {
        let window = ball(&map.source.base, &map.source.base.identity(), 4, &b).unwrap();
        let colourings = bounded_support_colourings(&map.source, &window, 3, 1, &b).unwrap();
        let mut images = BTreeSet::new();
        for c in &colourings {
            let d = map.alpha(c);
            assert_eq!(&map.alpha_inverse(&d), c, "{}", map.name);
            assert!(images.insert(d), "{}: α not injective", map.name);
        }
    }
}

#[test]
fn checker_constants_stabilise_as_windows_grow() {
    let b = Budget::default();
    for map in built() {
        let small = check_aptolicity(&map, 2, 1, 2, &b).unwrap();
        let large = check_aptolicity(&map, 4, 1, 2, &b).unwrap();
        assert!(small.passed() && large.passed(), "{}", map.name);
        assert!(large.q.is_some(), "{}", map.name);
        assert_eq!(small.constants(), large.constants(), "{}", map.name);
    }
}

#[test]
fn wreath_preimage_ratio_follows_beta() {
    let b = Budget::default();
    for map in built() {
        // |B_lamp(1)|^n colourings per box: 7^8 for Z³ lamps exceeds the budget.
        let scales: &[u64] = if map.target.lamp.max_degree() > 4 { &[2, 4, 6] } else { &[2, 4, 6, 8] };
        for row in wreath_transfer_ratios(&map, scales, &b).unwrap() {
            assert!(relative_gap(row.wreath_ratio, row.beta_ratio) <= 0.1, "{}: {row:?}", map.name);
        }
    }
}
