mod common;

use proptest::prelude::*;

use scot_core::geometry::{intersection_area, iou, Point, Polygon};

fn arb_convex() -> impl Strategy<Value = Polygon> {
    any::<u64>().prop_map(|s| common::random_convex(&mut common::rng(s), 50.0))
}

fn arb_star() -> impl Strategy<Value = Polygon> {
    any::<u64>().prop_map(|s| common::random_star(&mut common::rng(s), 50.0))
}

fn rotate_ring(p: &Polygon, k: usize) -> Polygon {
    let ext = p.exterior();
    let n = ext.len();
    let mut ring: Vec<Point> = (0..n).map(|i| ext[(i + k) % n]).collect();
    if k % 2 == 1 {
        ring.reverse();
    }
    Polygon::new(ring, p.holes().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn iou_is_exactly_symmetric(a in arb_star(), b in arb_convex()) {
        prop_assert_eq!(iou(&a, &b).to_bits(), iou(&b, &a).to_bits());
    }

    #[test]
    fn iou_ignores_vertex_cycle_and_orientation(a in arb_star(), b in arb_convex(), k in 0usize..20) {
        let ra = rotate_ring(&a, k);
        prop_assert_eq!(iou(&a, &b).to_bits(), iou(&ra, &b).to_bits());
    }

    #[test]
    fn iou_bounds(a in arb_star(), b in arb_star()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        let inter = intersection_area(&a, &b);
        prop_assert!(inter <= a.area().min(b.area()) + 1e-9);
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intersection_is_translation_invariant(a in arb_star(), b in arb_convex(), dx in -1e3f64..1e3, dy in -1e3f64..1e3) {
        let shift = |p: &Polygon| p.map_coords(|q| Point::new(q.x + dx, q.y + dy)).unwrap();
        let (i0, i1) = (intersection_area(&a, &b), intersection_area(&shift(&a), &shift(&b)));
        prop_assert!((i0 - i1).abs() <= 1e-7 * a.area().max(1.0));
    }

    #[test]
    fn iou_agrees_with_sampling(a in arb_star(), b in arb_convex()) {
        prop_assert!((iou(&a, &b) - common::raster_iou(&a, &b, 512)).abs() < 1e-2);
    }
}

#[test]
fn nested_and_disjoint() {
    let outer = Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap();
    let inner = Polygon::rect(2.0, 2.0, 4.0, 4.0).unwrap();
    assert_eq!(iou(&outer, &inner), 4.0 / 100.0);
    let far = Polygon::rect(20.0, 20.0, 21.0, 21.0).unwrap();
    assert_eq!(iou(&outer, &far), 0.0);
    // Edge contact has zero area.
    let touching = Polygon::rect(10.0, 0.0, 12.0, 10.0).unwrap();
    assert_eq!(intersection_area(&outer, &touching), 0.0);
}

#[test]
fn hole_is_excluded() {
    let framed = Polygon::new(
        vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(4.0, 4.0), Point::new(0.0, 4.0)],
        vec![vec![Point::new(1.0, 1.0), Point::new(3.0, 1.0), Point::new(3.0, 3.0), Point::new(1.0, 3.0)]],
    )
    .unwrap();
    assert_eq!(framed.area(), 12.0);
    let core = Polygon::rect(1.0, 1.0, 3.0, 3.0).unwrap();
    assert_eq!(intersection_area(&framed, &core), 0.0);
    let half = Polygon::rect(0.0, 0.0, 2.0, 4.0).unwrap();
    assert!((intersection_area(&framed, &half) - 6.0).abs() < 1e-12);
}
