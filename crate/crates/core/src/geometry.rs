//! Geometric primitives shared by every stage of the pipeline.
//!
//! All coordinates are canvas pixels on a square canvas of [`CANVAS_PX`] pixels,
//! x growing to the right and y growing downwards.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

/// Side length of the square drawing canvas, in pixels.
pub const CANVAS_SIZE: usize = 128;
pub const CANVAS_PX: f64 = CANVAS_SIZE as f64;

/// Default distance under which a column counts as touching a wall or corner.
pub const DEFAULT_CLASSIFY_EPS: f64 = 1.0;

/// Tolerance used when merging coincident vertices of wall arrangements.
const NODE_EPS: f64 = 1e-6;
/// Tolerance for "on the boundary" tests of the footprint.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("segment not axis-aligned: ({0}, {1})-({2}, {3})")]
    NotAxisAligned(f64, f64, f64, f64),
    #[error("zero-length segment at ({0}, {1})")]
    ZeroLength(f64, f64),
    #[error("coordinate out of canvas: ({0}, {1})")]
    OutOfCanvas(f64, f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("no exterior loop")]
    NoExteriorLoop,
    #[error("exterior walls do not form a closed loop")]
    OpenLoop,
    #[error("exterior loop self-intersects near ({0}, {1})")]
    SelfIntersecting(f64, f64),
    #[error("interior wall ({0}, {1})-({2}, {3}) leaves the footprint")]
    InteriorOutsideFootprint(f64, f64, f64, f64),
    #[error("value {value} outside [0, {extent})")]
    OutOfRange { value: f64, extent: f64 },
    #[error("columns closer than 0.5 px: ({0}, {1})")]
    DuplicateColumn(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn close_to(self, other: Point, eps: f64) -> bool {
        (self.x - other.x).abs() <= eps && (self.y - other.y).abs() <= eps
    }

    fn lex_cmp(&self, other: &Point) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// An axis-aligned wall stroke.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct WallSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl WallSegment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let horizontal = y1 == y2;
        let vertical = x1 == x2;
        if horizontal && vertical {
            return Err(GeometryError::ZeroLength(x1, y1));
        }
        if !horizontal && !vertical {
            return Err(GeometryError::NotAxisAligned(x1, y1, x2, y2));
        }
        for (x, y) in [(x1, y1), (x2, y2)] {
            if !in_canvas(x, y) {
                return Err(GeometryError::OutOfCanvas(x, y));
            }
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_points(a: Point, b: Point) -> Result<Self, GeometryError> {
        Self::new(a.x, a.y, b.x, b.y)
    }

    pub fn start(&self) -> Point {
        Point::new(self.x1, self.y1)
    }

    pub fn end(&self) -> Point {
        Point::new(self.x2, self.y2)
    }

    pub fn orientation(&self) -> Orientation {
        if self.y1 == self.y2 {
            Orientation::Horizontal
        } else {
            Orientation::Vertical
        }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).abs() + (self.y2 - self.y1).abs()
    }

    /// Euclidean distance from `p` to the closest point of the segment.
    pub fn distance_to(&self, p: Point) -> f64 {
        let cx = p.x.clamp(self.x1.min(self.x2), self.x1.max(self.x2));
        let cy = p.y.clamp(self.y1.min(self.y2), self.y1.max(self.y2));
        p.dist(Point::new(cx, cy))
    }

    /// Intersection point with a perpendicular segment, endpoints included.
    pub fn crossing(&self, other: &WallSegment) -> Option<Point> {
        let (h, v) = match (self.orientation(), other.orientation()) {
            (Orientation::Horizontal, Orientation::Vertical) => (self, other),
            (Orientation::Vertical, Orientation::Horizontal) => (other, self),
            _ => return None,
        };
        let (x, y) = (v.x1, h.y1);
        let in_h = x >= h.x1.min(h.x2) && x <= h.x1.max(h.x2);
        let in_v = y >= v.y1.min(v.y2) && y <= v.y1.max(v.y2);
        (in_h && in_v).then_some(Point::new(x, y))
    }

    fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self, GeometryError> {
        Self::from_points(f(self.start()), f(self.end()))
    }
}

impl TryFrom<[f64; 4]> for WallSegment {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<WallSegment> for [f64; 4] {
    fn from(s: WallSegment) -> Self {
        [s.x1, s.y1, s.x2, s.y2]
    }
}

fn in_canvas(x: f64, y: f64) -> bool {
    (0.0..CANVAS_PX).contains(&x) && (0.0..CANVAS_PX).contains(&y)
}

/// Structural role of a column relative to the walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ColumnType {
    FreeStanding,
    OnCorner,
    OnWall,
}

impl ColumnType {
    pub const ALL: [ColumnType; 3] = [Self::FreeStanding, Self::OnCorner, Self::OnWall];

    /// Class index used by the type head of the model.
    pub fn index(self) -> usize {
        match self {
            Self::FreeStanding => 0,
            Self::OnCorner => 1,
            Self::OnWall => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FreeStanding => "FREE_STANDING",
            Self::OnCorner => "ON_CORNER",
            Self::OnWall => "ON_WALL",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "type")]
    pub ctype: ColumnType,
}

impl Column {
    pub const fn new(x: f64, y: f64, ctype: ColumnType) -> Self {
        Self { x, y, ctype }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Sort columns by x, ties broken by y. Stable; the input is left untouched.
pub fn canonical_order(columns: &[Column]) -> Vec<Column> {
    let mut out = columns.to_vec();
    out.sort_by(|a, b| a.position().lex_cmp(&b.position()));
    out
}

/// Canonically ordered column set of one building.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuralLayout {
    columns: Vec<Column>,
}

impl StructuralLayout {
    /// Builds a ground-truth layout: sorts and rejects near-duplicate columns.
    pub fn new(columns: &[Column]) -> Result<Self, GeometryError> {
        let columns = canonical_order(columns);
        for c in &columns {
            if !in_canvas(c.x, c.y) {
                return Err(GeometryError::OutOfCanvas(c.x, c.y));
            }
        }
        for (i, a) in columns.iter().enumerate() {
            // sorted by x, so only a short window can collide
            for b in columns[i + 1..].iter().take_while(|b| b.x - a.x < 0.5) {
                if (b.y - a.y).abs() < 0.5 {
                    return Err(GeometryError::DuplicateColumn(b.x, b.y));
                }
            }
        }
        Ok(Self { columns })
    }

    /// Canonically sorts columns without the separation check. Used for model
    /// output, which may legitimately contain near-duplicates.
    pub fn sorted(columns: &[Column]) -> Self {
        Self {
            columns: canonical_order(columns),
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Maps a pixel coordinate in `[0, extent)` onto `[-1, 1]`.
pub fn normalize_coord(p: f64, extent: f64) -> Result<f64, GeometryError> {
    if !(0.0..extent).contains(&p) {
        return Err(GeometryError::OutOfRange { value: p, extent });
    }
    Ok(2.0 * p / extent - 1.0)
}

pub fn denormalize_coord(n: f64, extent: f64) -> f64 {
    (n + 1.0) * extent / 2.0
}

/// A single-floor plan: one closed rectilinear exterior loop plus interior walls.
///
/// The exterior is stored canonically: it starts at the lexicographically
/// smallest corner, runs with positive shoelace orientation and holds no
/// collinear consecutive segments. Interior walls are merged into maximal
/// collinear runs and sorted, horizontal first.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingLayout {
    pub id: String,
    exterior: Vec<WallSegment>,
    interior: Vec<WallSegment>,
}

impl BuildingLayout {
    /// Builds a layout from the exterior polygon's corner list.
    pub fn from_polygon(
        id: impl Into<String>,
        corners: &[Point],
        interior: Vec<WallSegment>,
    ) -> Result<Self, GeometryError> {
        let corners = canonical_polygon(corners)?;
        let n = corners.len();
        let exterior = (0..n)
            .map(|i| WallSegment::from_points(corners[i], corners[(i + 1) % n]))
            .collect::<Result<Vec<_>, _>>()?;
        check_simple(&exterior)?;
        let building = Self {
            id: id.into(),
            exterior,
            interior: Vec::new(),
        };
        for w in &interior {
            if !building.segment_inside(w) {
                return Err(GeometryError::InteriorOutsideFootprint(w.x1, w.y1, w.x2, w.y2));
            }
        }
        Ok(Self {
            interior: merge_collinear(&interior),
            ..building
        })
    }

    /// Recovers exterior loop and interior walls from an unordered wall list.
    ///
    /// Walls are split at every junction; the outer face of the resulting
    /// planar graph becomes the exterior loop and all remaining edges,
    /// re-merged into maximal collinear runs, become interior walls.
    pub fn from_walls(id: impl Into<String>, walls: &[WallSegment]) -> Result<Self, GeometryError> {
        if walls.is_empty() {
            return Err(GeometryError::NoExteriorLoop);
        }
        let graph = WallGraph::build(walls);
        let outer = graph.outer_face()?;
        let on_outer: std::collections::HashSet<(usize, usize)> = outer
            .windows(2)
            .chain(std::iter::once(&[outer[outer.len() - 1], outer[0]][..]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .collect();
        let corners: Vec<Point> = outer.iter().map(|&i| graph.nodes[i]).collect();
        let interior_edges: Vec<WallSegment> = graph
            .edges()
            .filter(|e| !on_outer.contains(e))
            .map(|(a, b)| WallSegment::from_points(graph.nodes[a], graph.nodes[b]))
            .collect::<Result<_, _>>()?;
        let interior = merge_collinear(&interior_edges);
        Self::from_polygon(id, &corners, interior)
    }

    pub fn exterior(&self) -> &[WallSegment] {
        &self.exterior
    }

    pub fn interior(&self) -> &[WallSegment] {
        &self.interior
    }

    /// Exterior walls followed by interior walls.
    pub fn walls(&self) -> impl Iterator<Item = &WallSegment> {
        self.exterior.iter().chain(self.interior.iter())
    }

    pub fn corners(&self) -> Vec<Point> {
        self.exterior.iter().map(WallSegment::start).collect()
    }

    /// (xmin, ymin, xmax, ymax) of the exterior loop.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.corners().iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
        )
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.corners()) / 2.0
    }

    /// Applies a point map (rotation, scaling, translation) to every wall.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Result<Self, GeometryError> {
        let corners: Vec<Point> = self.corners().into_iter().map(&f).collect();
        let interior = self
            .interior
            .iter()
            .map(|w| w.map(&f))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_polygon(self.id.clone(), &corners, interior)
    }

    fn segment_inside(&self, w: &WallSegment) -> bool {
        // Split the segment wherever it could cross the boundary and probe
        // every piece's endpoints and midpoint.
        let mut cuts = vec![0.0, 1.0];
        for e in &self.exterior {
            if let Some(p) = w.crossing(e) {
                let t = match w.orientation() {
                    Orientation::Horizontal => (p.x - w.x1) / (w.x2 - w.x1),
                    Orientation::Vertical => (p.y - w.y1) / (w.y2 - w.y1),
                };
                cuts.push(t);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let at = |t: f64| Point::new(w.x1 + t * (w.x2 - w.x1), w.y1 + t * (w.y2 - w.y1));
        cuts.windows(2).all(|c| {
            footprint_contains(self, at(c[0]))
                && footprint_contains(self, at(0.5 * (c[0] + c[1])))
                && footprint_contains(self, at(c[1]))
        })
    }
}

fn shoelace(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum()
}

/// Drops repeated and collinear corners, then rotates and orients the loop.
fn canonical_polygon(corners: &[Point]) -> Result<Vec<Point>, GeometryError> {
    let mut pts: Vec<Point> = Vec::with_capacity(corners.len());
    for &p in corners {
        if pts.last().is_none_or(|q| !q.close_to(p, 0.0)) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && pts[0].close_to(pts[pts.len() - 1], 0.0) {
        pts.pop();
    }
    loop {
        let n = pts.len();
        if n < 4 {
            return Err(GeometryError::NoExteriorLoop);
        }
        let collinear = (0..n).find(|&i| {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            (a.x == b.x && b.x == c.x) || (a.y == b.y && b.y == c.y)
        });
        match collinear {
            Some(i) => {
                pts.remove(i);
            }
            None => break,
        }
    }
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
        if a.x != b.x && a.y != b.y {
            return Err(GeometryError::NotAxisAligned(a.x, a.y, b.x, b.y));
        }
    }
    if shoelace(&pts) < 0.0 {
        pts.reverse();
    }
    let start = (0..pts.len())
        .min_by(|&i, &j| pts[i].lex_cmp(&pts[j]))
        .unwrap_or(0);
    pts.rotate_left(start);
    Ok(pts)
}

fn check_simple(loop_: &[WallSegment]) -> Result<(), GeometryError> {
    let n = loop_.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = (&loop_[i], &loop_[j]);
            if let Some(p) = a.crossing(b) {
                return Err(GeometryError::SelfIntersecting(p.x, p.y));
            }
            if a.orientation() == b.orientation() && collinear_overlap(a, b) {
                return Err(GeometryError::SelfIntersecting(b.x1, b.y1));
            }
        }
    }
    Ok(())
}

fn collinear_overlap(a: &WallSegment, b: &WallSegment) -> bool {
    let (line_a, lo_a, hi_a) = line_span(a);
    let (line_b, lo_b, hi_b) = line_span(b);
    line_a == line_b && lo_a <= hi_b && lo_b <= hi_a
}

/// (fixed coordinate, low, high) of an axis-aligned segment.
fn line_span(w: &WallSegment) -> (f64, f64, f64) {
    match w.orientation() {
        Orientation::Horizontal => (w.y1, w.x1.min(w.x2), w.x1.max(w.x2)),
        Orientation::Vertical => (w.x1, w.y1.min(w.y2), w.y1.max(w.y2)),
    }
}

/// Merges collinear, touching or overlapping segments into maximal runs.
fn merge_collinear(walls: &[WallSegment]) -> Vec<WallSegment> {
    let mut keyed: Vec<(u8, f64, f64, f64)> = walls
        .iter()
        .map(|w| {
            let (line, lo, hi) = line_span(w);
            let o = match w.orientation() {
                Orientation::Horizontal => 0u8,
                Orientation::Vertical => 1u8,
            };
            (o, line, lo, hi)
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    let mut runs: Vec<(u8, f64, f64, f64)> = Vec::new();
    for k in keyed {
        match runs.last_mut() {
            Some(r) if r.0 == k.0 && (r.1 - k.1).abs() <= NODE_EPS && k.2 <= r.3 + NODE_EPS => {
                r.3 = r.3.max(k.3);
            }
            _ => runs.push(k),
        }
    }
    runs.into_iter()
        .map(|(o, line, lo, hi)| match o {
            0 => WallSegment { x1: lo, y1: line, x2: hi, y2: line },
            _ => WallSegment { x1: line, y1: lo, x2: line, y2: hi },
        })
        .collect()
}

/// Planar graph of a wall arrangement with degree <= 4 per node.
struct WallGraph {
    nodes: Vec<Point>,
    /// neighbour per direction: +x, +y, -x, -y
    adj: Vec<[Option<usize>; 4]>,
}

const DIR_PX: usize = 0;
const DIR_PY: usize = 1;
const DIR_NX: usize = 2;
const DIR_NY: usize = 3;

impl WallGraph {
    fn build(walls: &[WallSegment]) -> Self {
        let merged = merge_collinear(walls);
        let mut nodes: Vec<Point> = Vec::new();
        let node_id = |p: Point, nodes: &mut Vec<Point>| -> usize {
            match nodes.iter().position(|q| q.close_to(p, NODE_EPS)) {
                Some(i) => i,
                None => {
                    nodes.push(p);
                    nodes.len() - 1
                }
            }
        };
        // Break points of every merged run: its own ends, every original
        // endpoint lying on it, and every perpendicular crossing.
        let mut per_run: Vec<Vec<usize>> = Vec::with_capacity(merged.len());
        for run in &merged {
            let mut pts = vec![run.start(), run.end()];
            for w in walls {
                for p in [w.start(), w.end()] {
                    if run.distance_to(p) <= NODE_EPS {
                        pts.push(p);
                    }
                }
            }
            for other in &merged {
                if let Some(p) = run.crossing(other) {
                    pts.push(p);
                }
            }
            let mut ids: Vec<usize> = pts.into_iter().map(|p| node_id(p, &mut nodes)).collect();
            ids.sort_by(|&a, &b| nodes[a].lex_cmp(&nodes[b]));
            ids.dedup();
            per_run.push(ids);
        }
        let mut adj = vec![[None; 4]; nodes.len()];
        for (run, ids) in merged.iter().zip(&per_run) {
            let (fwd, back) = match run.orientation() {
                Orientation::Horizontal => (DIR_PX, DIR_NX),
                Orientation::Vertical => (DIR_PY, DIR_NY),
            };
            for w in ids.windows(2) {
                adj[w[0]][fwd] = Some(w[1]);
                adj[w[1]][back] = Some(w[0]);
            }
        }
        Self { nodes, adj }
    }

    /// Undirected edges as (min id, max id).
    fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, dirs)| {
            [DIR_PX, DIR_PY]
                .into_iter()
                .filter_map(move |d| dirs[d].map(|b| (a.min(b), a.max(b))))
        })
    }

    /// Walks the outer face, hugging the outside, starting from the
    /// lexicographically smallest node.
    fn outer_face(&self) -> Result<Vec<usize>, GeometryError> {
        let start = (0..self.nodes.len())
            .filter(|&i| self.adj[i].iter().any(Option::is_some))
            .min_by(|&a, &b| self.nodes[a].lex_cmp(&self.nodes[b]))
            .ok_or(GeometryError::NoExteriorLoop)?;
        if self.adj[start][DIR_PX].is_none() || self.adj[start][DIR_PY].is_none() {
            return Err(GeometryError::OpenLoop);
        }
        // With y pointing down, leaving the start corner along +y puts the
        // outside on the right; at each node take the rightmost available turn.
        let mut seq = vec![start];
        let mut used = std::collections::HashSet::new();
        let mut node = start;
        let mut dir = DIR_PY;
        loop {
            let next = self.adj[node][dir].ok_or(GeometryError::OpenLoop)?;
            if !used.insert((node.min(next), node.max(next))) {
                return Err(GeometryError::OpenLoop);
            }
            node = next;
            // candidate turns relative to heading: right, straight, left, back
            let turn = [1usize, 0, 3, 2]
                .into_iter()
                .map(|t| (dir + t) % 4)
                .find(|&d| self.adj[node][d].is_some())
                .ok_or(GeometryError::OpenLoop)?;
            if (turn + 2) % 4 == dir {
                // dead end: the walk doubles back along a dangling wall
                return Err(GeometryError::OpenLoop);
            }
            if node == start {
                if turn != DIR_PY {
                    return Err(GeometryError::OpenLoop);
                }
                break;
            }
            if seq.contains(&node) {
                let p = self.nodes[node];
                return Err(GeometryError::SelfIntersecting(p.x, p.y));
            }
            seq.push(node);
            dir = turn;
        }
        Ok(seq)
    }
}

/// True iff `p` lies inside or on the exterior loop (even-odd rule).
pub fn footprint_contains(building: &BuildingLayout, p: Point) -> bool {
    if building
        .exterior
        .iter()
        .any(|w| w.distance_to(p) <= BOUNDARY_EPS)
    {
        return true;
    }
    let mut inside = false;
    for w in building.exterior.iter().filter(|w| w.orientation() == Orientation::Vertical) {
        let (lo, hi) = (w.y1.min(w.y2), w.y1.max(w.y2));
        if w.x1 > p.x && p.y >= lo && p.y < hi {
            inside = !inside;
        }
    }
    inside
}

/// Every point where two perpendicular walls meet or cross.
pub fn wall_junctions(building: &BuildingLayout) -> Vec<Point> {
    let walls: Vec<&WallSegment> = building.walls().collect();
    let mut out: Vec<Point> = Vec::new();
    for (i, a) in walls.iter().enumerate() {
        for b in &walls[i + 1..] {
            if let Some(p) = a.crossing(b) {
                if !out.iter().any(|q| q.close_to(p, NODE_EPS)) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Classifies a column position against the walls of `building`.
pub fn classify_column(p: Point, building: &BuildingLayout, eps: f64) -> ColumnType {
    classify_with_junctions(p, building, &wall_junctions(building), eps)
}

/// [`classify_column`] with precomputed junctions, for classifying many points.
pub fn classify_with_junctions(
    p: Point,
    building: &BuildingLayout,
    junctions: &[Point],
    eps: f64,
) -> ColumnType {
    if junctions.iter().any(|q| q.dist(p) <= eps) {
        ColumnType::OnCorner
    } else if building.walls().any(|w| w.distance_to(p) <= eps) {
        ColumnType::OnWall
    } else {
        ColumnType::FreeStanding
    }
}

/// Quarter-turn rotation about the canvas centre: (x, y) -> (c + (c - y), c + (x - c)).
pub fn rotate_quarter(p: Point, turns: u8) -> Point {
    let c = CANVAS_PX / 2.0;
    (0..turns % 4).fold(p, |q, _| Point::new(c + (c - q.y), c + (q.x - c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> BuildingLayout {
        let pts = [
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ];
        BuildingLayout::from_polygon("rect", &pts, vec![]).unwrap()
    }

    fn col(x: f64, y: f64) -> Column {
        Column::new(x, y, ColumnType::FreeStanding)
    }

    fn xy(cols: &[Column]) -> Vec<(f64, f64)> {
        cols.iter().map(|c| (c.x, c.y)).collect()
    }

    #[test]
    fn canonical_order_examples() {
        let cols = [col(40.0, 20.0), col(10.0, 50.0), col(10.0, 20.0)];
        assert_eq!(
            xy(&canonical_order(&cols)),
            vec![(10.0, 20.0), (10.0, 50.0), (40.0, 20.0)]
        );
        assert!(canonical_order(&[]).is_empty());
        assert_eq!(xy(&canonical_order(&[col(5.0, 5.0)])), vec![(5.0, 5.0)]);
        // input untouched
        assert_eq!(cols[0].x, 40.0);
    }

    #[test]
    fn classify_examples() {
        let b = rect(10.0, 10.0, 110.0, 90.0);
        let eps = DEFAULT_CLASSIFY_EPS;
        assert_eq!(classify_column(Point::new(10.0, 10.0), &b, eps), ColumnType::OnCorner);
        assert_eq!(classify_column(Point::new(60.0, 10.0), &b, eps), ColumnType::OnWall);
        assert_eq!(classify_column(Point::new(60.0, 50.0), &b, eps), ColumnType::FreeStanding);
        assert_eq!(classify_column(Point::new(60.0, 11.0), &b, eps), ColumnType::OnWall);
        assert_eq!(classify_column(Point::new(60.0, 11.5), &b, eps), ColumnType::FreeStanding);
    }

    #[test]
    fn classify_counts_interior_junctions_as_corners() {
        let pts = [
            Point::new(10.0, 10.0),
            Point::new(110.0, 10.0),
            Point::new(110.0, 90.0),
            Point::new(10.0, 90.0),
        ];
        let chord = WallSegment::new(50.0, 10.0, 50.0, 90.0).unwrap();
        let b = BuildingLayout::from_polygon("t", &pts, vec![chord]).unwrap();
        assert_eq!(classify_column(Point::new(50.0, 10.0), &b, 1.0), ColumnType::OnCorner);
        assert_eq!(classify_column(Point::new(50.0, 50.0), &b, 1.0), ColumnType::OnWall);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_coord(0.0, 128.0).unwrap(), -1.0);
        assert_eq!(normalize_coord(64.0, 128.0).unwrap(), 0.0);
        assert_eq!(normalize_coord(96.0, 128.0).unwrap(), 0.5);
        assert!(normalize_coord(128.0, 128.0).is_err());
        assert!(normalize_coord(-0.5, 128.0).is_err());
        assert_eq!(denormalize_coord(0.5, 128.0), 96.0);
    }

    #[test]
    fn footprint_examples() {
        let b = rect(10.0, 10.0, 110.0, 90.0);
        assert!(footprint_contains(&b, Point::new(60.0, 50.0)));
        assert!(!footprint_contains(&b, Point::new(5.0, 5.0)));
        assert!(footprint_contains(&b, Point::new(10.0, 50.0)));
        assert!(footprint_contains(&b, Point::new(110.0, 90.0)));
        assert!(!footprint_contains(&b, Point::new(110.5, 50.0)));
    }

    #[test]
    fn segment_validation() {
        assert!(matches!(
            WallSegment::new(0.0, 0.0, 10.0, 10.0),
            Err(GeometryError::NotAxisAligned(..))
        ));
        assert!(matches!(
            WallSegment::new(3.0, 3.0, 3.0, 3.0),
            Err(GeometryError::ZeroLength(..))
        ));
        assert!(matches!(
            WallSegment::new(0.0, 0.0, 128.0, 0.0),
            Err(GeometryError::OutOfCanvas(..))
        ));
        assert!(WallSegment::new(0.0, 0.0, 127.5, 0.0).is_ok());
    }

    #[test]
    fn polygon_is_canonicalised() {
        // clockwise input starting mid-edge with a collinear vertex
        let pts = [
            Point::new(60.0, 90.0),
            Point::new(10.0, 90.0),
            Point::new(10.0, 10.0),
            Point::new(110.0, 10.0),
            Point::new(110.0, 90.0),
        ];
        let a = BuildingLayout::from_polygon("a", &pts, vec![]).unwrap();
        assert_eq!(a, rect(10.0, 10.0, 110.0, 90.0).with_id("a"));
        assert_eq!(a.corners()[0], Point::new(10.0, 10.0));
        assert!(a.area() > 0.0);
    }

    #[test]
    fn self_intersecting_polygon_rejected() {
        // figure-eight made of two squares sharing a corner
        let pts = [
            Point::new(10.0, 10.0),
            Point::new(50.0, 10.0),
            Point::new(50.0, 90.0),
            Point::new(90.0, 90.0),
            Point::new(90.0, 50.0),
            Point::new(10.0, 50.0),
        ];
        assert!(BuildingLayout::from_polygon("x", &pts, vec![]).is_err());
    }

    #[test]
    fn from_walls_recovers_loop_and_chords() {
        let walls = [
            WallSegment::new(10.0, 10.0, 110.0, 10.0).unwrap(),
            WallSegment::new(110.0, 90.0, 110.0, 10.0).unwrap(),
            WallSegment::new(10.0, 90.0, 60.0, 90.0).unwrap(),
            WallSegment::new(60.0, 90.0, 110.0, 90.0).unwrap(),
            WallSegment::new(10.0, 10.0, 10.0, 90.0).unwrap(),
            WallSegment::new(50.0, 10.0, 50.0, 90.0).unwrap(),
            WallSegment::new(10.0, 40.0, 110.0, 40.0).unwrap(),
        ];
        let b = BuildingLayout::from_walls("w", &walls).unwrap();
        assert_eq!(b.exterior().len(), 4);
        assert_eq!(b.interior().len(), 2);
        assert_eq!(b.bounding_box(), (10.0, 10.0, 110.0, 90.0));
    }

    #[test]
    fn from_walls_errors() {
        assert_eq!(
            BuildingLayout::from_walls("e", &[]).unwrap_err(),
            GeometryError::NoExteriorLoop
        );
        let open = [
            WallSegment::new(10.0, 10.0, 110.0, 10.0).unwrap(),
            WallSegment::new(10.0, 10.0, 10.0, 90.0).unwrap(),
            WallSegment::new(10.0, 90.0, 110.0, 90.0).unwrap(),
        ];
        assert_eq!(
            BuildingLayout::from_walls("o", &open).unwrap_err(),
            GeometryError::OpenLoop
        );
        let mut dangling = open.to_vec();
        dangling.push(WallSegment::new(110.0, 10.0, 110.0, 90.0).unwrap());
        dangling.push(WallSegment::new(110.0, 50.0, 120.0, 50.0).unwrap());
        assert_eq!(
            BuildingLayout::from_walls("d", &dangling).unwrap_err(),
            GeometryError::OpenLoop
        );
        let mut outside = open.to_vec();
        outside.push(WallSegment::new(110.0, 10.0, 110.0, 90.0).unwrap());
        outside.push(WallSegment::new(115.0, 20.0, 115.0, 60.0).unwrap());
        assert!(matches!(
            BuildingLayout::from_walls("x", &outside).unwrap_err(),
            GeometryError::InteriorOutsideFootprint(..)
        ));
    }

    #[test]
    fn rotation_matches_hand_computation() {
        assert_eq!(rotate_quarter(Point::new(10.0, 20.0), 1), Point::new(108.0, 10.0));
        assert_eq!(rotate_quarter(Point::new(10.0, 20.0), 4), Point::new(10.0, 20.0));
    }

    impl BuildingLayout {
        fn with_id(mut self, id: &str) -> Self {
            self.id = id.to_string();
            self
        }
    }
}
