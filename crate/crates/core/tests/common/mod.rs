#![allow(dead_code)]

use framecast::geometry::{rotate_quarter, BuildingLayout, Point};
use framecast::oracle::{solve_structure, OracleConfig};
use framecast::synth::{generate_base_layouts, mix_seed, DatasetRecord, Provenance};

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> BuildingLayout {
    let pts = [
        Point::new(x0, y0),
        Point::new(x1, y0),
        Point::new(x1, y1),
        Point::new(x0, y1),
    ];
    BuildingLayout::from_polygon("rect", &pts, vec![]).unwrap()
}

/// `n` procedural plans with integer corners, each under a seeded quarter turn.
pub fn random_buildings(seed: u64, n: usize) -> Vec<BuildingLayout> {
    (0..n as u64)
        .map(|i| {
            let s = mix_seed(&[seed, i]);
            let mut b = generate_base_layouts(s, 1).unwrap().remove(0);
            b = b.map_points(|p| rotate_quarter(p, (s % 4) as u8)).unwrap();
            b.id = format!("b{i:04}");
            b
        })
        .collect()
}

pub fn records(seed: u64, n: usize) -> Vec<DatasetRecord> {
    random_buildings(seed, n)
        .into_iter()
        .map(|building| DatasetRecord {
            layout: solve_structure(&building, &OracleConfig::default()).unwrap(),
            provenance: Provenance {
                base_id: building.id.clone(),
                rotation: 0,
                scale: 1.0,
                translation: [0.0, 0.0],
            },
            building,
        })
        .collect()
}

/// Spans used by the monotonicity check, widest first.
pub const SPANS: [f64; 5] = [40.0, 30.0, 25.0, 20.0, 15.0];

/// Checks the oracle's span bound, quarter-turn equivariance, bounding-box
/// corner coverage and monotonicity in max_span on one building.
pub fn oracle_violations(b: &BuildingLayout) -> Vec<String> {
    use framecast::geometry::{canonical_order, ColumnType};
    let mut out = Vec::new();
    let cfg = OracleConfig::default();
    let layout = solve_structure(b, &cfg).unwrap();
    let cols = layout.columns();

    let mut xs: Vec<f64> = cols.iter().map(|c| c.x).collect();
    let mut ys: Vec<f64> = cols.iter().map(|c| c.y).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.windows(2).any(|w| w[1] - w[0] > cfg.max_span + 1e-9) {
            out.push(format!("{}: span bound", b.id));
        }
    }

    for turns in 1..4u8 {
        let r = b.map_points(|p| rotate_quarter(p, turns)).unwrap();
        let got = solve_structure(&r, &cfg).unwrap();
        let mut want: Vec<_> = cols
            .iter()
            .map(|c| {
                let p = rotate_quarter(c.position(), turns);
                framecast::geometry::Column::new(p.x, p.y, c.ctype)
            })
            .collect();
        want = canonical_order(&want);
        let same = got.len() == want.len()
            && got.columns().iter().zip(&want).all(|(g, w)| {
                (g.x - w.x).abs() < 1e-9 && (g.y - w.y).abs() < 1e-9 && g.ctype == w.ctype
            });
        if !same {
            out.push(format!("{}: not equivariant under {turns} quarter turns", b.id));
        }
    }

    let (x0, y0, x1, y1) = b.bounding_box();
    let corners = b.corners();
    for (x, y) in [(x0, y0), (x1, y0), (x1, y1), (x0, y1)] {
        if corners.iter().any(|p| p.x == x && p.y == y)
            && !cols.iter().any(|c| c.x == x && c.y == y && c.ctype == ColumnType::OnCorner)
        {
            out.push(format!("{}: bbox corner ({x}, {y}) not an ON_CORNER column", b.id));
        }
    }

    let counts: Vec<usize> = SPANS
        .iter()
        .map(|&s| solve_structure(b, &OracleConfig::with_span(s)).unwrap().len())
        .collect();
    if counts.windows(2).any(|w| w[1] < w[0]) {
        out.push(format!("{}: count not monotone in span {counts:?}", b.id));
    }
    out
}

/// Fixed plan and columns behind the raster golden hashes.
pub fn golden_scene() -> (BuildingLayout, Vec<framecast::geometry::Column>) {
    use framecast::geometry::{Column, ColumnType, WallSegment};
    let pts = [(10, 10), (110, 10), (110, 40), (70, 40), (70, 100), (10, 100)]
        .map(|(x, y)| Point::new(x as f64, y as f64));
    let interior = vec![
        WallSegment::new(10.0, 55.0, 70.0, 55.0).unwrap(),
        WallSegment::new(40.0, 10.0, 40.0, 100.0).unwrap(),
    ];
    let b = BuildingLayout::from_polygon("golden", &pts, interior).unwrap();
    let cols = [(64.0, 64.0), (0.0, 0.0), (127.0, 40.0), (33.4, 90.6)]
        .map(|(x, y)| Column::new(x, y, ColumnType::FreeStanding))
        .to_vec();
    (b, cols)
}

/// Per-channel SHA-256 of the little-endian f32 bytes, produced by an
/// independent rasteriser and frozen.
pub const GOLDEN_SHA256: [&str; 4] = [
    "da445a9afe8c4cb5cf110c7a2ba1e711b8df8819ed0d9820f412fb304367d080",
    "c0bd931c0fe4cbb1a5fb68a9799a296ecb58f8ef300d551975acf1b0c92d44c4",
    "5c36f391ca832c3cf860defb0c2c47993c9a36c514c719bb0c9a8f6480d9f3f0",
    "59703e3c9c3e8964542269289699bbeffd56459b78d2efd081783215207e7213",
];

pub fn channel_sha256(r: &framecast::render::RasterInput, c: usize) -> String {
    use sha2::{Digest, Sha256};
    let bytes: Vec<u8> = r.channel(c).iter().flat_map(|v| v.to_le_bytes()).collect();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Central finite differences of the total loss against backpropagation on
/// `n` seeded parameters of the reduced network (f64, biases randomised so
/// no activation sits exactly on a ReLU kink). Returns the worst relative
/// error.
pub fn gradient_check(seed: u64, n: usize) -> f64 {
    use framecast::geometry::{Column, ColumnType};
    use framecast::model::{quad_loss, ModelConfig, QuadNet, QuadTarget};
    use framecast::render::rasterize;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig::tiny();
    let mut net = QuadNet::<f64>::new(&cfg).unwrap();
    let names = net.param_names().to_vec();
    for (name, p) in names.iter().zip(net.param_slices_mut()) {
        if name.ends_with("bias") || name.ends_with("beta") {
            p.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
    }
    let b = rect(10.0, 10.0, 110.0, 90.0);
    let placed = [
        Column::new(10.0, 10.0, ColumnType::OnCorner),
        Column::new(60.0, 50.0, ColumnType::FreeStanding),
    ];
    let rasters = [rasterize(&b, &[]), rasterize(&b, &placed[..1]), rasterize(&b, &placed)];
    let x = net.stack_inputs(&rasters).unwrap();
    let q = cfg.quad_size;
    let targets: Vec<QuadTarget> = (0..rasters.len())
        .map(|_| QuadTarget {
            coords: (0..q).map(|_| [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)]).collect(),
            types: (0..q).map(|i| (i < 3).then(|| rng.gen_range(0..3))).collect(),
        })
        .collect();
    let loss = |n: &QuadNet<f64>| {
        let c = n.forward_train(x.clone());
        quad_loss(c.coords(), c.logits(), &targets, cfg.loss_weights).0.total
    };
    let cache = net.forward_train(x.clone());
    let (_, dc, dl) = quad_loss(cache.coords(), cache.logits(), &targets, cfg.loss_weights);
    let grads = net.backward(&cache, &dc, &dl);

    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let t = rng.gen_range(0..grads.len());
        let i = rng.gen_range(0..grads[t].len());
        let mut plus = net.clone();
        plus.param_slices_mut()[t][i] += eps;
        let mut minus = net.clone();
        minus.param_slices_mut()[t][i] -= eps;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        let analytic = grads[t][i];
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-7 { 0.0 } else { (analytic - numeric).abs() / scale };
        worst = worst.max(rel);
    }
    worst
}

/// Replays the oracle through `predict_all` and both evaluation protocols;
/// returns every discrepancy found.
pub fn stub_end_to_end(recs: &[DatasetRecord]) -> Vec<String> {
    use framecast::eval::{evaluate_iterative, evaluate_single};
    use framecast::infer::{predict_all, ReplayPredictor, Termination, DEFAULT_CAP};
    let stub = ReplayPredictor::new(recs, 4);
    let mut bad = Vec::new();
    for r in recs {
        let out = predict_all(&stub, &r.building, DEFAULT_CAP).unwrap();
        let truth = solve_structure(&r.building, &OracleConfig::default()).unwrap();
        let same_xy = out.columns.len() == truth.len()
            && out.columns.columns().iter().zip(truth.columns()).all(|(a, b)| a.x == b.x && a.y == b.y && a.ctype == b.ctype);
        if !same_xy {
            bad.push(format!("{}: reconstruction differs", r.id()));
        }
        // A partial last quad already carries the stop row.
        if out.iterations != truth.len() / 4 + 1 || out.terminated_by != Termination::StopSignal {
            bad.push(format!("{}: {} iterations for {} columns, {:?}", r.id(), out.iterations, truth.len(), out.terminated_by));
        }
    }
    let single = evaluate_single(&stub, recs).unwrap();
    let iterative = evaluate_iterative(&stub, recs).unwrap();
    for (name, rep) in [("single", &single), ("iterative", &iterative)] {
        if rep.mean_px_distance != 0.0 || rep.mape_pct != 0.0 || rep.stop_accuracy != 1.0 {
            bad.push(format!(
                "{name}: distance {} mape {} stop {}",
                rep.mean_px_distance, rep.mape_pct, rep.stop_accuracy
            ));
        }
        if rep.per_column.iter().any(|p| p.mean_px_error != 0.0) {
            bad.push(format!("{name}: non-zero error series"));
        }
    }
    if iterative.count_accuracy != Some(1.0) || iterative.excluded_buildings != 0 {
        bad.push(format!("iterative count accuracy {:?}", iterative.count_accuracy));
    }
    bad
}

/// Sample count and target concatenation identities for one record.
pub fn expansion_ok(r: &DatasetRecord) -> bool {
    use framecast::geometry::{Column, CANVAS_PX};
    let samples = framecast::synth::expand_incremental(r, 4);
    let n = r.layout.len();
    if samples.len() != n.div_ceil(4) + 1 || !samples.last().unwrap().is_pure_stop() {
        return false;
    }
    let rebuilt: Vec<Column> = samples
        .iter()
        .flat_map(|s| {
            (0..4).filter(|&i| s.valid_mask[i]).map(move |i| {
                let [x, y] = s.target_coords[i];
                Column::new((x + 1.0) * CANVAS_PX / 2.0, (y + 1.0) * CANVAS_PX / 2.0, s.target_types[i].unwrap())
            })
        })
        .collect();
    rebuilt.len() == n
        && rebuilt
            .iter()
            .zip(r.layout.columns())
            .all(|(a, b)| (a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && a.ctype == b.ctype)
}
