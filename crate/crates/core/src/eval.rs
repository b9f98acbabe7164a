//! Single-step and iterative evaluation protocols and their report files.

use crate::geometry::{canonical_order, denormalize_coord, CANVAS_PX};
use crate::infer::{predict_all, PredictedColumn, Termination, DEFAULT_CAP};
use crate::model::{ModelError, QuadPrediction, QuadPredictor, NUM_TYPES};
use crate::render::{rasterize, RasterInput};
use crate::synth::{expand_incremental, DatasetRecord};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Forward passes per call to the predictor in the single protocol.
const EVAL_BATCH: usize = 16;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("report i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("plot: {0}")]
    Plot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    Single,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub index: usize,
    pub mean_px_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub mean_px_distance: f64,
    pub mape_pct: f64,
    /// Single: share of rows whose stop flag matches the target. Iterative:
    /// share of buildings that ended on a stop signal rather than the cap.
    pub stop_accuracy: f64,
    /// Iterative protocol only.
    pub count_accuracy: Option<f64>,
    pub excluded_buildings: usize,
    pub buildings: usize,
    /// Number of paired columns behind the distance statistics.
    pub columns: usize,
    pub per_column: Vec<SeriesPoint>,
    pub per_quad: Vec<SeriesPoint>,
    pub per_position: Vec<SeriesPoint>,
}

#[derive(Default)]
struct Series {
    sum: Vec<f64>,
    n: Vec<usize>,
}

impl Series {
    fn add(&mut self, index: usize, v: f64) {
        if self.sum.len() <= index {
            self.sum.resize(index + 1, 0.0);
            self.n.resize(index + 1, 0);
        }
        self.sum[index] += v;
        self.n[index] += 1;
    }

    fn points(&self) -> Vec<SeriesPoint> {
        self.sum
            .iter()
            .zip(&self.n)
            .enumerate()
            .map(|(index, (&s, &n))| SeriesPoint {
                index,
                mean_px_error: if n > 0 { s / n as f64 } else { 0.0 },
                n,
            })
            .collect()
    }
}

/// Running totals shared by both protocols.
#[derive(Default)]
struct Accumulator {
    dist_sum: f64,
    dist_n: usize,
    ape_sum: f64,
    ape_n: usize,
    per_column: Series,
    per_quad: Series,
    per_position: Series,
}

impl Accumulator {
    fn pair(&mut self, column_index: usize, quad_size: usize, pred: [f64; 2], gt: [f64; 2]) {
        let d = ((pred[0] - gt[0]).powi(2) + (pred[1] - gt[1]).powi(2)).sqrt();
        self.dist_sum += d;
        self.dist_n += 1;
        for k in 0..2 {
            self.ape_sum += (pred[k] - gt[k]).abs() / gt[k].max(1.0) * 100.0;
            self.ape_n += 1;
        }
        self.per_column.add(column_index, d);
        self.per_quad.add(column_index / quad_size, d);
        self.per_position.add(column_index % quad_size, d);
    }

    fn finish(self, protocol: Protocol, stop_accuracy: f64, buildings: usize) -> EvalReport {
        let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
        EvalReport {
            protocol,
            mean_px_distance: mean(self.dist_sum, self.dist_n),
            mape_pct: mean(self.ape_sum, self.ape_n),
            stop_accuracy,
            count_accuracy: None,
            excluded_buildings: 0,
            buildings,
            columns: self.dist_n,
            per_column: self.per_column.points(),
            per_quad: self.per_quad.points(),
            per_position: self.per_position.points(),
        }
    }
}

/// One forward pass per ground-truth partial structure (no jitter); rows
/// are paired with targets by position.
pub fn evaluate_single(model: &dyn QuadPredictor, records: &[DatasetRecord]) -> Result<EvalReport, EvalError> {
    let q = model.quad_size();
    let mut acc = Accumulator::default();
    let (mut stop_ok, mut rows) = (0usize, 0usize);
    for rec in records {
        let samples = expand_incremental(rec, q);
        for chunk in samples.chunks(EVAL_BATCH) {
            let rasters: Vec<RasterInput> = chunk.iter().map(|s| rasterize(s.building, s.placed)).collect();
            let preds = model.predict(&rasters)?;
            for (s, p) in chunk.iter().zip(&preds) {
                for (row, c) in PredictedColumn::from_prediction(p).iter().enumerate() {
                    rows += 1;
                    if c.stop != s.valid_mask[row] {
                        stop_ok += 1;
                    }
                    if s.valid_mask[row] {
                        let t = s.target_coords[row];
                        let gt = [denormalize_coord(t[0], CANVAS_PX), denormalize_coord(t[1], CANVAS_PX)];
                        acc.pair(s.step * q + row, q, [c.x, c.y], gt);
                    }
                }
            }
        }
    }
    let stop_accuracy = if rows > 0 { stop_ok as f64 / rows as f64 } else { 0.0 };
    Ok(acc.finish(Protocol::Single, stop_accuracy, records.len()))
}

/// Runs [`predict_all`] per building. Buildings with the wrong column count
/// are excluded from the distance statistics; the rest are paired
/// index-wise in canonical order.
pub fn evaluate_iterative(model: &dyn QuadPredictor, records: &[DatasetRecord]) -> Result<EvalReport, EvalError> {
    let q = model.quad_size();
    let mut acc = Accumulator::default();
    let (mut correct, mut stopped) = (0usize, 0usize);
    for rec in records {
        let result = predict_all(model, &rec.building, DEFAULT_CAP)?;
        if result.terminated_by == Termination::StopSignal {
            stopped += 1;
        }
        if result.columns.len() != rec.layout.len() {
            continue;
        }
        correct += 1;
        let pred = canonical_order(result.columns.columns());
        for (i, (p, g)) in pred.iter().zip(rec.layout.columns()).enumerate() {
            acc.pair(i, q, [p.x, p.y], [g.x, g.y]);
        }
    }
    let n = records.len();
    let frac = |k: usize| if n > 0 { k as f64 / n as f64 } else { 0.0 };
    let mut report = acc.finish(Protocol::Iterative, frac(stopped), n);
    report.count_accuracy = Some(frac(correct));
    report.excluded_buildings = n - correct;
    Ok(report)
}

/// Baseline that puts every column at the canvas centre and never stops.
pub struct CenterPredictor {
    pub quad_size: usize,
}

impl QuadPredictor for CenterPredictor {
    fn quad_size(&self) -> usize {
        self.quad_size
    }

    fn predict(&self, batch: &[RasterInput]) -> Result<Vec<QuadPrediction>, ModelError> {
        let uniform = [1.0 / NUM_TYPES as f64; NUM_TYPES];
        Ok(batch
            .iter()
            .map(|_| QuadPrediction {
                coords: vec![[0.0, 0.0]; self.quad_size],
                type_probs: vec![uniform; self.quad_size],
            })
            .collect())
    }
}

fn write_csv(path: &Path, series: &[SeriesPoint]) -> std::io::Result<()> {
    let mut out = String::from("index,mean_px_error,n\n");
    for p in series {
        out.push_str(&format!("{},{},{}\n", p.index, p.mean_px_error, p.n));
    }
    std::fs::write(path, out)
}

fn plot(path: &Path, title: &str, xlabel: &str, series: &[SeriesPoint]) -> Result<(), EvalError> {
    let err = |e: &dyn std::fmt::Display| EvalError::Plot(e.to_string());
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| p.n > 0)
        .map(|p| (p.index as f64, p.mean_px_error))
        .collect();
    let x_max = pts.iter().map(|p| p.0).fold(1.0, f64::max);
    let y_max = pts.iter().map(|p| p.1).fold(1.0, f64::max) * 1.1;
    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(xlabel)
        .y_desc("mean error (px)")
        .draw()
        .map_err(|e| err(&e))?;
    chart.draw_series(LineSeries::new(pts, &BLUE)).map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

/// Writes `summary.json`, the three series as CSV and as SVG line plots.
pub fn report(r: &EvalReport, out_dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(r).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")?;
    let series = [
        ("per_column", "column index", &r.per_column),
        ("per_quad", "quad index", &r.per_quad),
        ("per_position", "position in quad", &r.per_position),
    ];
    for (name, xlabel, s) in series {
        write_csv(&out_dir.join(format!("{name}.csv")), s)?;
        plot(&out_dir.join(format!("{name}.svg")), &name.replace('_', " "), xlabel, s)?;
    }
    Ok(())
}
