//! Iterative whole-structure prediction: render the plan with the columns
//! placed so far, predict the next quad, and repeat until a stop signal.

use crate::geometry::{denormalize_coord, BuildingLayout, Column, ColumnType, StructuralLayout, CANVAS_PX};
use crate::model::{ModelError, QuadPrediction, QuadPredictor, NUM_TYPES};
use crate::render::{rasterize, RasterInput, COLUMN_CHANNEL, WALL_CHANNEL};
use crate::synth::{expand_incremental, DatasetRecord, SENTINEL};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub const DEFAULT_CAP: usize = 32;

/// Pixel threshold below which a predicted coordinate means "stop".
pub const STOP_THRESHOLD_PX: f64 = 2.0;

pub fn is_stop(x: f64, y: f64) -> bool {
    x < STOP_THRESHOLD_PX || y < STOP_THRESHOLD_PX
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    StopSignal,
    IterationCap,
}

/// One row of a predicted quad, in canvas pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedColumn {
    pub x: f64,
    pub y: f64,
    pub type_probs: [f64; NUM_TYPES],
    pub stop: bool,
}

impl PredictedColumn {
    pub fn from_prediction(p: &QuadPrediction) -> Vec<Self> {
        p.coords
            .iter()
            .zip(&p.type_probs)
            .map(|(c, probs)| {
                let (x, y) = (denormalize_coord(c[0], CANVAS_PX), denormalize_coord(c[1], CANVAS_PX));
                Self {
                    x,
                    y,
                    type_probs: *probs,
                    stop: is_stop(x, y),
                }
            })
            .collect()
    }

    /// Most probable type.
    pub fn ctype(&self) -> ColumnType {
        let best = (0..NUM_TYPES)
            .max_by(|&a, &b| self.type_probs[a].total_cmp(&self.type_probs[b]))
            .unwrap_or(0);
        ColumnType::from_index(best).expect("index below NUM_TYPES")
    }

    pub fn column(&self) -> Column {
        Column::new(self.x, self.y, self.ctype())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Columns drawn into this iteration's input raster.
    pub placed_before: Vec<Column>,
    pub quad: Vec<PredictedColumn>,
    /// Rows accepted before the first stop row (all rows if none stopped).
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub columns: StructuralLayout,
    pub iterations: usize,
    pub terminated_by: Termination,
    pub trace: Vec<IterationTrace>,
}

/// Predicts every column of `building` quad by quad, stopping at the first
/// stop row or after `cap` iterations. The stop row and any rows after it
/// in the same quad are discarded.
pub fn predict_all(
    model: &dyn QuadPredictor,
    building: &BuildingLayout,
    cap: usize,
) -> Result<InferenceResult, ModelError> {
    let mut placed: Vec<Column> = Vec::new();
    let mut trace = Vec::new();
    let mut terminated_by = Termination::IterationCap;
    while trace.len() < cap {
        let raster = rasterize(building, &placed);
        let pred = model.predict(std::slice::from_ref(&raster))?;
        let quad = PredictedColumn::from_prediction(&pred[0]);
        let accepted = quad.iter().take_while(|c| !c.stop).count();
        let before = placed.clone();
        placed.extend(quad[..accepted].iter().map(PredictedColumn::column));
        let stopped = accepted < quad.len();
        trace.push(IterationTrace {
            placed_before: before,
            quad,
            accepted,
        });
        if stopped {
            terminated_by = Termination::StopSignal;
            break;
        }
    }
    Ok(InferenceResult {
        columns: StructuralLayout::sorted(&placed),
        iterations: trace.len(),
        terminated_by,
        trace,
    })
}

/// Writes the four input channels of every iteration as PNGs plus a plain
/// text listing of the predicted quads.
pub fn write_trace(building: &BuildingLayout, result: &InferenceResult, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut listing = String::new();
    for (t, it) in result.trace.iter().enumerate() {
        rasterize(building, &it.placed_before)
            .save_pngs(dir, &format!("iter_{t:02}"))
            .map_err(std::io::Error::other)?;
        let _ = writeln!(listing, "iteration {t}: {} placed, {} accepted", it.placed_before.len(), it.accepted);
        for c in &it.quad {
            let _ = writeln!(
                listing,
                "  {:8.3} {:8.3} {:<13} {}",
                c.x,
                c.y,
                c.ctype().as_str(),
                if c.stop { "stop" } else { "" }
            );
        }
    }
    let _ = writeln!(listing, "terminated by {:?} after {} iterations", result.terminated_by, result.iterations);
    std::fs::write(dir.join("quads.txt"), listing)
}

fn channel_bits(r: &RasterInput, c: usize) -> Vec<u64> {
    let mut bits = vec![0u64; r.channel(c).len().div_ceil(64)];
    for (i, &v) in r.channel(c).iter().enumerate() {
        if v != 0.0 {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    bits
}

/// Test double that answers every rendered prefix of a known record with
/// the oracle's next quad, and with a pure stop for anything it does not
/// recognise.
pub struct ReplayPredictor {
    quad_size: usize,
    table: HashMap<(Vec<u64>, Vec<u64>), QuadPrediction>,
}

impl ReplayPredictor {
    pub fn new(records: &[DatasetRecord], quad_size: usize) -> Self {
        let mut table = HashMap::new();
        for rec in records {
            for s in expand_incremental(rec, quad_size) {
                let raster = rasterize(s.building, s.placed);
                let key = (channel_bits(&raster, WALL_CHANNEL), channel_bits(&raster, COLUMN_CHANNEL));
                let type_probs = s
                    .target_types
                    .iter()
                    .map(|t| {
                        let mut p = [0.0; NUM_TYPES];
                        if let Some(t) = t {
                            p[t.index()] = 1.0;
                        }
                        p
                    })
                    .collect();
                table.insert(
                    key,
                    QuadPrediction {
                        coords: s.target_coords.clone(),
                        type_probs,
                    },
                );
            }
        }
        Self { quad_size, table }
    }

    fn stop_quad(&self) -> QuadPrediction {
        QuadPrediction {
            coords: vec![SENTINEL; self.quad_size],
            type_probs: vec![[0.0; NUM_TYPES]; self.quad_size],
        }
    }
}

impl QuadPredictor for ReplayPredictor {
    fn quad_size(&self) -> usize {
        self.quad_size
    }

    fn predict(&self, batch: &[RasterInput]) -> Result<Vec<QuadPrediction>, ModelError> {
        Ok(batch
            .iter()
            .map(|r| {
                let key = (channel_bits(r, WALL_CHANNEL), channel_bits(r, COLUMN_CHANNEL));
                self.table.get(&key).cloned().unwrap_or_else(|| self.stop_quad())
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    struct Constant([f64; 2]);

    impl QuadPredictor for Constant {
        fn quad_size(&self) -> usize {
            4
        }

        fn predict(&self, batch: &[RasterInput]) -> Result<Vec<QuadPrediction>, ModelError> {
            Ok(batch
                .iter()
                .map(|_| QuadPrediction {
                    coords: vec![self.0; 4],
                    type_probs: vec![[1.0, 0.0, 0.0]; 4],
                })
                .collect())
        }
    }

    fn square() -> BuildingLayout {
        let pts = [
            Point::new(10.0, 10.0),
            Point::new(110.0, 10.0),
            Point::new(110.0, 110.0),
            Point::new(10.0, 110.0),
        ];
        BuildingLayout::from_polygon("sq", &pts, Vec::new()).unwrap()
    }

    #[test]
    fn stop_rule() {
        assert!(is_stop(1.2, 57.0));
        assert!(!is_stop(2.0, 2.0));
        assert!(is_stop(57.0, 1.9));
    }

    #[test]
    fn immediate_stop() {
        let r = predict_all(&Constant([-1.0, -1.0]), &square(), DEFAULT_CAP).unwrap();
        assert_eq!(r.columns.len(), 0);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.terminated_by, Termination::StopSignal);
    }

    #[test]
    fn never_stopping_model_hits_cap() {
        let r = predict_all(&Constant([0.0, 0.0]), &square(), DEFAULT_CAP).unwrap();
        assert_eq!(r.columns.len(), 128);
        assert_eq!(r.iterations, 32);
        assert_eq!(r.terminated_by, Termination::IterationCap);
        assert_eq!(r.trace[5].placed_before.len(), 20);
    }
}
