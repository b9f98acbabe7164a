mod common;

use common::{random_buildings, rect};
use framecast::geometry::*;
use proptest::prelude::*;

fn col(x: f64, y: f64) -> Column {
    Column::new(x, y, ColumnType::FreeStanding)
}

fn columns() -> impl Strategy<Value = Vec<Column>> {
    prop::collection::vec((0u8..100, 0u8..100), 0..30)
        .prop_map(|v| v.into_iter().map(|(x, y)| col(f64::from(x), f64::from(y))).collect())
}

proptest! {
    #[test]
    fn canonical_order_is_idempotent(cols in columns()) {
        let once = canonical_order(&cols);
        prop_assert_eq!(canonical_order(&once), once.clone());
        prop_assert!(once.windows(2).all(|w| (w[0].x, w[0].y) <= (w[1].x, w[1].y)));
    }

    #[test]
    fn canonical_order_commutes_with_translation(cols in columns(), tx in 0u8..20, ty in 0u8..20) {
        let (tx, ty) = (f64::from(tx), f64::from(ty));
        let shift = |v: &[Column]| -> Vec<Column> { v.iter().map(|c| col(c.x + tx, c.y + ty)).collect() };
        prop_assert_eq!(canonical_order(&shift(&cols)), shift(&canonical_order(&cols)));
    }

    #[test]
    fn normalize_round_trip(p in 0.0f64..128.0) {
        let n = normalize_coord(p, CANVAS_PX).unwrap();
        prop_assert!((-1.0..=1.0).contains(&n));
        prop_assert!((denormalize_coord(n, CANVAS_PX) - p).abs() < 1e-9);
    }
}

#[test]
fn normalize_rejects_out_of_range() {
    assert!(normalize_coord(-0.5, CANVAS_PX).is_err());
    assert!(normalize_coord(128.0, CANVAS_PX).is_err());
}

#[test]
fn classification_is_rotation_invariant() {
    for b in random_buildings(11, 40) {
        let (x0, y0, x1, y1) = b.bounding_box();
        for turns in 1..4u8 {
            let r = b.map_points(|p| rotate_quarter(p, turns)).unwrap();
            for x in (x0 as i64..=x1 as i64).step_by(3) {
                for y in (y0 as i64..=y1 as i64).step_by(3) {
                    let p = Point::new(x as f64, y as f64);
                    assert_eq!(
                        classify_column(p, &b, DEFAULT_CLASSIFY_EPS),
                        classify_column(rotate_quarter(p, turns), &r, DEFAULT_CLASSIFY_EPS),
                        "{} at {p:?} turned {turns}",
                        b.id
                    );
                }
            }
        }
    }
}

#[test]
fn footprint_contains_on_rectangle() {
    let b = rect(10.0, 10.0, 110.0, 90.0);
    assert!(footprint_contains(&b, Point::new(60.0, 50.0)));
    assert!(!footprint_contains(&b, Point::new(5.0, 5.0)));
    assert!(footprint_contains(&b, Point::new(10.0, 50.0)));
    assert!(footprint_contains(&b, Point::new(110.0, 90.0)));
    assert!(!footprint_contains(&b, Point::new(110.5, 50.0)));
}

#[test]
fn generated_loops_close() {
    for b in random_buildings(3, 50) {
        let (sx, sy) = b
            .exterior()
            .iter()
            .fold((0.0, 0.0), |(sx, sy), w| (sx + w.x2 - w.x1, sy + w.y2 - w.y1));
        assert_eq!((sx, sy), (0.0, 0.0), "{}", b.id);
        assert!(b.area() > 0.0);
    }
}

#[test]
fn wall_list_round_trips_through_from_walls() {
    for b in random_buildings(5, 50) {
        let walls: Vec<WallSegment> = b.walls().copied().collect();
        let back = BuildingLayout::from_walls(b.id.clone(), &walls).unwrap();
        assert_eq!(back.exterior(), b.exterior(), "{}", b.id);
        assert_eq!(back.area(), b.area());
    }
}
