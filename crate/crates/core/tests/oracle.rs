mod common;

use common::{oracle_violations, random_buildings, rect};
use framecast::geometry::{BuildingLayout, ColumnType, Point};
use framecast::oracle::{grid_lines, solve_structure, OracleConfig};

use ColumnType::{FreeStanding as F, OnCorner as C, OnWall as W};

// Enumerated by an independent script applying the subdivision rule with
// exact rationals, then frozen.
const THIRD: f64 = 36.666666666666664;
const TWO_THIRDS: f64 = 63.333333333333336;

fn check(b: &BuildingLayout, span: f64, expected: &[(f64, f64, ColumnType)]) {
    let got = solve_structure(b, &OracleConfig::with_span(span)).unwrap();
    assert_eq!(got.len(), expected.len());
    for (c, &(x, y, t)) in got.columns().iter().zip(expected) {
        assert!((c.x - x).abs() < 1e-9 && (c.y - y).abs() < 1e-9, "{c:?} vs ({x}, {y})");
        assert_eq!(c.ctype, t, "at ({x}, {y})");
    }
}

#[test]
fn rectangle_listing() {
    let ys = [10.0, THIRD, TWO_THIRDS, 90.0];
    let mut expected = Vec::new();
    for x in [10.0, 35.0, 60.0, 85.0, 110.0] {
        for y in ys {
            let on_x = x == 10.0 || x == 110.0;
            let on_y = y == 10.0 || y == 90.0;
            let t = match (on_x, on_y) {
                (true, true) => C,
                (false, false) => F,
                _ => W,
            };
            expected.push((x, y, t));
        }
    }
    check(&rect(10.0, 10.0, 110.0, 90.0), 30.0, &expected);
    let count = |t| expected.iter().filter(|e| e.2 == t).count();
    assert_eq!((count(C), count(W), count(F)), (4, 10, 6));
}

#[test]
fn l_shape_listing() {
    let pts = [(10, 10), (110, 10), (110, 40), (70, 40), (70, 70), (10, 70)]
        .map(|(x, y)| Point::new(x as f64, y as f64));
    let b = BuildingLayout::from_polygon("ell", &pts, vec![]).unwrap();
    let a = 43.333333333333336;
    let c = 76.66666666666667;
    check(
        &b,
        40.0,
        &[
            (10.0, 10.0, C),
            (10.0, 40.0, W),
            (10.0, 70.0, C),
            (a, 10.0, W),
            (a, 40.0, F),
            (a, 70.0, W),
            (c, 10.0, W),
            (c, 40.0, W),
            (110.0, 10.0, C),
            (110.0, 40.0, C),
        ],
    );
}

#[test]
fn single_cell_is_four_corners() {
    check(
        &rect(10.0, 10.0, 30.0, 30.0),
        30.0,
        &[(10.0, 10.0, C), (10.0, 30.0, C), (30.0, 10.0, C), (30.0, 30.0, C)],
    );
}

#[test]
fn grid_lines_fixture() {
    assert_eq!(grid_lines(10.0, 110.0, 30.0).unwrap(), vec![10.0, 35.0, 60.0, 85.0, 110.0]);
    assert_eq!(grid_lines(0.0, 20.0, 30.0).unwrap(), vec![0.0, 20.0]);
    assert_eq!(grid_lines(10.0, 10.0, 30.0).unwrap(), vec![10.0]);
}

#[test]
fn deterministic() {
    for b in random_buildings(2, 20) {
        let cfg = OracleConfig::default();
        assert_eq!(solve_structure(&b, &cfg).unwrap(), solve_structure(&b, &cfg).unwrap());
    }
}

#[test]
fn properties_hold_on_random_plans() {
    let bad: Vec<String> = random_buildings(17, 150).iter().flat_map(oracle_violations).collect();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn interior_walls_only_change_types() {
    let plain = rect(10.0, 10.0, 110.0, 90.0);
    let chord = framecast::geometry::WallSegment::new(35.0, 10.0, 35.0, 90.0).unwrap();
    let pts = plain.corners();
    let split = BuildingLayout::from_polygon("split", &pts, vec![chord]).unwrap();
    let cfg = OracleConfig::with_span(30.0);
    let (a, b) = (solve_structure(&plain, &cfg).unwrap(), solve_structure(&split, &cfg).unwrap());
    assert_eq!(a.len(), b.len());
    for (p, q) in a.columns().iter().zip(b.columns()) {
        assert_eq!((p.x, p.y), (q.x, q.y));
        let expected = match (p.x, p.y) {
            (35.0, 10.0) | (35.0, 90.0) => C,
            (35.0, _) => W,
            _ => p.ctype,
        };
        assert_eq!(q.ctype, expected, "at ({}, {})", p.x, p.y);
    }
}
