//! Heuristic ground-truth solver: a regular column grid over the footprint
//! with a bounded maximum span.

use crate::geometry::{
    classify_with_junctions, footprint_contains, wall_junctions, BuildingLayout, Column,
    GeometryError, Point, StructuralLayout, DEFAULT_CLASSIFY_EPS,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_SPAN: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid bounds reversed: lo {lo} > hi {hi}")]
    ReversedBounds { lo: f64, hi: f64 },
    #[error("max span must be positive, got {0}")]
    NonPositiveSpan(f64),
    #[error("invalid oracle config: max_span {max_span} must exceed 2 x eps_classify {eps}")]
    InvalidConfig { max_span: f64, eps: f64 },
    #[error("building {0} has an empty footprint")]
    EmptyFootprint(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub max_span: f64,
    pub eps_classify: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_span: DEFAULT_MAX_SPAN,
            eps_classify: DEFAULT_CLASSIFY_EPS,
        }
    }
}

impl OracleConfig {
    pub fn with_span(max_span: f64) -> Self {
        Self {
            max_span,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.max_span > 2.0 * self.eps_classify) || !(self.eps_classify > 0.0) {
            return Err(OracleError::InvalidConfig {
                max_span: self.max_span,
                eps: self.eps_classify,
            });
        }
        Ok(())
    }
}

/// Splits `[lo, hi]` into `ceil((hi - lo) / max_span)` equal intervals and
/// returns the interval boundaries, `lo` and `hi` included.
pub fn grid_lines(lo: f64, hi: f64, max_span: f64) -> Result<Vec<f64>, OracleError> {
    if lo > hi {
        return Err(OracleError::ReversedBounds { lo, hi });
    }
    if !(max_span > 0.0) {
        return Err(OracleError::NonPositiveSpan(max_span));
    }
    if lo == hi {
        return Ok(vec![lo]);
    }
    let k = ((hi - lo) / max_span).ceil().max(1.0) as usize;
    let kf = k as f64;
    // Weighted form keeps both ends exact and the grid mirror-symmetric.
    Ok((0..=k)
        .map(|i| {
            let i = i as f64;
            (lo * (kf - i) + hi * i) / kf
        })
        .collect())
}

/// Places a span-bounded column grid over the bounding box of the exterior
/// loop, keeps the candidates inside the footprint and classifies them.
pub fn solve_structure(
    building: &BuildingLayout,
    cfg: &OracleConfig,
) -> Result<StructuralLayout, OracleError> {
    cfg.validate()?;
    if !(building.area() > 0.0) {
        return Err(OracleError::EmptyFootprint(building.id.clone()));
    }
    let (x0, y0, x1, y1) = building.bounding_box();
    let xs = grid_lines(x0, x1, cfg.max_span)?;
    let ys = grid_lines(y0, y1, cfg.max_span)?;
    let junctions = wall_junctions(building);
    let columns: Vec<Column> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| Point::new(x, y)))
        .filter(|&p| footprint_contains(building, p))
        .map(|p| {
            let ctype = classify_with_junctions(p, building, &junctions, cfg.eps_classify);
            Column::new(p.x, p.y, ctype)
        })
        .collect();
    if columns.is_empty() {
        return Err(OracleError::EmptyFootprint(building.id.clone()));
    }
    Ok(StructuralLayout::new(&columns)?)
}
