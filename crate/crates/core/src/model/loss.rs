use super::real::Real;
use super::{LossWeights, NUM_TYPES};
use crate::synth::TrainingSample;

/// Regression and classification targets for one quad.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTarget {
    /// Normalised coordinates; sentinel rows hold (-1, -1).
    pub coords: Vec<[f64; 2]>,
    /// Type index for valid rows, `None` for sentinel rows.
    pub types: Vec<Option<usize>>,
}

impl From<&TrainingSample<'_>> for QuadTarget {
    fn from(s: &TrainingSample<'_>) -> Self {
        Self {
            coords: s.target_coords.clone(),
            types: s.target_types.iter().map(|t| t.map(|t| t.index())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean absolute error over every coordinate, sentinel rows included.
    pub coord: f64,
    /// Cross-entropy averaged over valid rows; zero when there are none.
    pub types: f64,
    pub valid_rows: usize,
}

/// Weighted quad loss and its gradients with respect to the coordinate
/// outputs and type logits (both laid out (batch, step, ...)).
pub fn quad_loss<T: Real>(
    coords: &[T],
    logits: &[T],
    targets: &[QuadTarget],
    weights: LossWeights,
) -> (LossBreakdown, Vec<T>, Vec<T>) {
    let q = targets.first().map_or(0, |t| t.coords.len());
    assert_eq!(coords.len(), targets.len() * q * 2, "coordinate layout");
    assert_eq!(logits.len(), targets.len() * q * NUM_TYPES, "logit layout");
    let n_coord = coords.len().max(1) as f64;
    let mut d_coords = vec![T::zero(); coords.len()];
    let mut mae = 0.0;
    for (b, t) in targets.iter().enumerate() {
        for (row, target) in t.coords.iter().enumerate() {
            for d in 0..2 {
                let idx = (b * q + row) * 2 + d;
                let diff = coords[idx].as_f64() - target[d];
                mae += diff.abs();
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                d_coords[idx] = T::from_f64(weights.coord * sign / n_coord);
            }
        }
    }
    mae /= n_coord;

    let valid_rows = targets.iter().flat_map(|t| &t.types).filter(|t| t.is_some()).count();
    let mut d_logits = vec![T::zero(); logits.len()];
    let mut ce = 0.0;
    if valid_rows > 0 {
        let scale = weights.types / valid_rows as f64;
        for (b, t) in targets.iter().enumerate() {
            for (row, ty) in t.types.iter().enumerate() {
                let Some(ty) = *ty else { continue };
                let base = (b * q + row) * NUM_TYPES;
                let l: Vec<f64> = logits[base..base + NUM_TYPES].iter().map(|v| v.as_f64()).collect();
                let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                ce += lse - l[ty];
                for (k, &v) in l.iter().enumerate() {
                    let p = (v - lse).exp();
                    let onehot = if k == ty { 1.0 } else { 0.0 };
                    d_logits[base + k] = T::from_f64(scale * (p - onehot));
                }
            }
        }
        ce /= valid_rows as f64;
    }
    let breakdown = LossBreakdown {
        total: weights.coord * mae + weights.types * ce,
        coord: mae,
        types: ce,
        valid_rows,
    };
    (breakdown, d_coords, d_logits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_rows_only_contribute_coordinates() {
        let target = QuadTarget {
            coords: vec![[0.5, -0.5], [-1.0, -1.0]],
            types: vec![Some(1), None],
        };
        let coords = [0.25f64, -0.25, -0.5, -1.0];
        let logits = [0.0f64; 6];
        let (l, dc, dl) = quad_loss(&coords, &logits, &[target], LossWeights::default());
        assert!((l.coord - (0.25 + 0.25 + 0.5 + 0.0) / 4.0).abs() < 1e-12);
        assert!((l.types - 3f64.ln()).abs() < 1e-12);
        assert!((l.total - (l.coord + 0.2 * l.types)).abs() < 1e-12);
        assert_eq!(dc, vec![-0.25, 0.25, 0.25, 0.0]);
        assert!(dl[3..].iter().all(|&g| g == 0.0));
        assert!((dl[1] - 0.2 * (1.0 / 3.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn pure_stop_has_no_type_term() {
        let target = QuadTarget {
            coords: vec![[-1.0, -1.0]; 4],
            types: vec![None; 4],
        };
        let (l, _, dl) = quad_loss(&[-1.0f32; 8], &[3.0f32; 12], &[target], LossWeights::default());
        assert_eq!(l.total, 0.0);
        assert_eq!(l.valid_rows, 0);
        assert!(dl.iter().all(|&g| g == 0.0));
    }
}
