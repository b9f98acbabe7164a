//! Wire types for the prediction endpoint and the request handling shared by
//! the HTTP service and the `predict` command.

use framecast::geometry::{BuildingLayout, ColumnType, GeometryError, WallSegment, CANVAS_SIZE};
use framecast::infer::{predict_all, InferenceResult, Termination, DEFAULT_CAP};
use framecast::model::QuadPredictor;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    /// `[x1, y1, x2, y2]` in canvas pixels.
    pub walls: Vec<[f64; 4]>,
    #[serde(default)]
    pub canvas: Option<Canvas>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnOut {
    pub x: f64,
    pub y: f64,
    /// Display hint only; inference ignores column types.
    #[serde(rename = "type")]
    pub ctype: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub columns: Vec<ColumnOut>,
    pub iterations: usize,
    pub terminated_by: Termination,
    pub model_version: String,
    pub elapsed_ms: f64,
}

/// Validation failure pinned to the offending request field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl ToString) -> Self {
        Self {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for FieldError {}

pub fn parse_building(req: &PredictRequest) -> Result<BuildingLayout, FieldError> {
    if let Some(c) = req.canvas {
        if c.w != CANVAS_SIZE || c.h != CANVAS_SIZE {
            return Err(FieldError::new(
                "canvas",
                format!("canvas must be {CANVAS_SIZE}x{CANVAS_SIZE}, got {}x{}", c.w, c.h),
            ));
        }
    }
    let walls = req
        .walls
        .iter()
        .enumerate()
        .map(|(i, w)| WallSegment::new(w[0], w[1], w[2], w[3]).map_err(|e| FieldError::new(format!("walls[{i}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    BuildingLayout::from_walls("request", &walls).map_err(|e: GeometryError| FieldError::new("walls", e))
}

pub fn to_response(result: &InferenceResult, model_version: &str, elapsed_ms: f64) -> PredictResponse {
    PredictResponse {
        columns: result
            .columns
            .columns()
            .iter()
            .map(|c| ColumnOut {
                x: c.x,
                y: c.y,
                ctype: c.ctype,
            })
            .collect(),
        iterations: result.iterations,
        terminated_by: result.terminated_by,
        model_version: model_version.to_string(),
        elapsed_ms,
    }
}

/// Validates the request and runs the iterative predictor.
pub fn handle_predict(
    model: &dyn QuadPredictor,
    model_version: &str,
    req: &PredictRequest,
) -> Result<(PredictResponse, InferenceResult), PredictError> {
    let start = Instant::now();
    let building = parse_building(req)?;
    let result = predict_all(model, &building, DEFAULT_CAP).map_err(|e| PredictError::Model(e.to_string()))?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    Ok((to_response(&result, model_version, elapsed), result))
}

#[derive(Debug)]
pub enum PredictError {
    Invalid(FieldError),
    Model(String),
}

impl From<FieldError> for PredictError {
    fn from(e: FieldError) -> Self {
        Self::Invalid(e)
    }
}

impl std::fmt::Display for PredictError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Invalid(e) => e.fmt(f),
            Self::Model(m) => write!(f, "model failure: {m}"),
        }
    }
}

impl std::error::Error for PredictError {}
