//! Synthetic plans and their incremental training samples.
//!
//! Base plans are unions of one to three overlapping rectangles with a few
//! interior chord walls. Records are rotated, scaled and translated copies of
//! base plans paired with the oracle layout. Every random draw comes from a
//! ChaCha stream derived from the configured seed, so a dataset is a pure
//! function of its [`SynthConfig`].

use crate::geometry::{
    rotate_quarter, BuildingLayout, Column, ColumnType, GeometryError, Orientation, Point,
    StructuralLayout, WallSegment, CANVAS_PX,
};
use crate::oracle::{solve_structure, OracleConfig, OracleError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
const DATASET_FORMAT: &str = "framecast-dataset";
const DATASET_VERSION: u32 = 1;

/// Base plans live on this square working area of the canvas.
const WORK_LO: i64 = 14;
const WORK_HI: i64 = 114;
/// Shortest exterior edge and smallest chord clearance of a base plan.
const MIN_FEATURE: f64 = 8.0;
const MAX_CORNERS: usize = 12;
const MAX_TRANSLATION: i64 = 24;
const AUGMENT_RETRIES: usize = 200;
const BASE_RETRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("rotation must be in 0..4, got {0}")]
    BadRotation(u8),
    #[error("augmented building leaves the canvas margin")]
    OutOfCanvas,
    #[error("could not place an augmentation of base layout {0} inside the canvas")]
    InfeasibleAugmentation(String),
    #[error("could not generate {0} distinct base layouts")]
    BaseGeneration(usize),
    #[error("record {id}: stored layout differs from the oracle solution")]
    LayoutMismatch { id: String },
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub base_count: usize,
    pub total_count: usize,
    pub train_fraction: f64,
    pub scale_range: [f64; 2],
    pub margin: u32,
    pub quad_size: usize,
    pub noise_px: u32,
    /// Hold out whole base layouts for the test split when there are at least two.
    pub split_by_base: bool,
    pub oracle: OracleConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            base_count: 35,
            total_count: 10_000,
            train_fraction: 0.9,
            scale_range: [0.7, 1.1],
            margin: 4,
            quad_size: 4,
            noise_px: 2,
            split_by_base: true,
            oracle: OracleConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.base_count < 1 {
            return bad("base_count must be >= 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.quad_size < 1 {
            return bad("quad_size must be >= 1");
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("scale_range must satisfy 0 < lo <= hi");
        }
        if f64::from(self.margin) * 2.0 >= CANVAS_PX {
            return bad("margin too large for the canvas");
        }
        self.oracle.validate()?;
        Ok(())
    }

    /// Number of train records; the rest of `total_count` goes to test.
    pub fn train_count(&self) -> usize {
        ((self.total_count as f64) * self.train_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_id: String,
    pub rotation: u8,
    pub scale: f64,
    pub translation: [f64; 2],
}

/// One (building, oracle layout) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub building: BuildingLayout,
    pub layout: StructuralLayout,
    pub provenance: Provenance,
}

impl DatasetRecord {
    pub fn id(&self) -> &str {
        &self.building.id
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: SynthConfig,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

/// Seeded stream for a given purpose and index.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser; mixes several counters into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9E37_79B9_7F4A_7C15u64, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn covers(&self, o: &Rect) -> bool {
        self.x0 <= o.x0 && self.y0 <= o.y0 && self.x1 >= o.x1 && self.y1 >= o.y1
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x > self.x0 as f64 && x < self.x1 as f64 && y > self.y0 as f64 && y < self.y1 as f64
    }
}

fn random_rect(rng: &mut ChaCha8Rng, min: i64, max: i64) -> Rect {
    let w = 2 * rng.gen_range(min / 2..=max / 2);
    let h = 2 * rng.gen_range(min / 2..=max / 2);
    let x0 = 2 * rng.gen_range(WORK_LO / 2..=(WORK_HI - w) / 2);
    let y0 = 2 * rng.gen_range(WORK_LO / 2..=(WORK_HI - h) / 2);
    Rect {
        x0,
        y0,
        x1: x0 + w,
        y1: y0 + h,
    }
}

fn overlap(a: &Rect, b: &Rect) -> i64 {
    let w = a.x1.min(b.x1) - a.x0.max(b.x0);
    let h = a.y1.min(b.y1) - a.y0.max(b.y0);
    w.min(h)
}

/// Boundary edges of the union of rectangles, on the compressed grid.
fn union_boundary(rects: &[Rect]) -> Result<Vec<WallSegment>, GeometryError> {
    let mut xs: Vec<i64> = rects.iter().flat_map(|r| [r.x0, r.x1]).collect();
    let mut ys: Vec<i64> = rects.iter().flat_map(|r| [r.y0, r.y1]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let filled = |i: isize, j: isize| -> bool {
        if i < 0 || j < 0 || i as usize >= nx || j as usize >= ny {
            return false;
        }
        let (i, j) = (i as usize, j as usize);
        let cx = (xs[i] + xs[i + 1]) as f64 / 2.0;
        let cy = (ys[j] + ys[j + 1]) as f64 / 2.0;
        rects.iter().any(|r| r.contains(cx, cy))
    };
    let mut walls = Vec::new();
    for i in 0..=nx {
        for j in 0..ny {
            if filled(i as isize - 1, j as isize) != filled(i as isize, j as isize) {
                let x = xs[i] as f64;
                walls.push(WallSegment::new(x, ys[j] as f64, x, ys[j + 1] as f64)?);
            }
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            if filled(i as isize, j as isize - 1) != filled(i as isize, j as isize) {
                let y = ys[j] as f64;
                walls.push(WallSegment::new(xs[i] as f64, y, xs[i + 1] as f64, y)?);
            }
        }
    }
    Ok(walls)
}

/// Inside intervals of the footprint along the line `coord` = c.
fn cross_section(building: &BuildingLayout, vertical_line: bool, c: f64) -> Vec<(f64, f64)> {
    let mut hits: Vec<f64> = building
        .exterior()
        .iter()
        .filter_map(|w| {
            let (o, lo, hi, at) = match w.orientation() {
                Orientation::Horizontal => (true, w.x1.min(w.x2), w.x1.max(w.x2), w.y1),
                Orientation::Vertical => (false, w.y1.min(w.y2), w.y1.max(w.y2), w.x1),
            };
            (o == vertical_line && lo < c && c < hi).then_some(at)
        })
        .collect();
    hits.sort_by(f64::total_cmp);
    hits.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

fn add_chords(
    rng: &mut ChaCha8Rng,
    outline: &BuildingLayout,
    count: usize,
) -> Result<Vec<WallSegment>, GeometryError> {
    let corners = outline.corners();
    let (x0, y0, x1, y1) = outline.bounding_box();
    let mut chords: Vec<WallSegment> = Vec::new();
    let mut attempts = 0;
    while chords.len() < count && attempts < 50 {
        attempts += 1;
        let vertical = rng.gen_bool(0.5);
        let (lo, hi) = if vertical { (x0, x1) } else { (y0, y1) };
        let c = rng.gen_range(lo as i64..=hi as i64) as f64;
        let clear_of_corners = corners.iter().all(|p| {
            let v = if vertical { p.x } else { p.y };
            (v - c).abs() >= MIN_FEATURE
        });
        let clear_of_chords = chords.iter().all(|w| {
            let same = (w.orientation() == Orientation::Vertical) == vertical;
            let v = if vertical { w.x1 } else { w.y1 };
            !same || (v - c).abs() >= MIN_FEATURE
        });
        if !clear_of_corners || !clear_of_chords {
            continue;
        }
        let Some(&(a, b)) = cross_section(outline, vertical, c)
            .iter()
            .max_by(|p, q| (p.1 - p.0).total_cmp(&(q.1 - q.0)))
        else {
            continue;
        };
        let chord = if vertical {
            WallSegment::new(c, a, c, b)?
        } else {
            WallSegment::new(a, c, b, c)?
        };
        chords.push(chord);
    }
    Ok(chords)
}

fn generate_one(rng: &mut ChaCha8Rng, id: String) -> Option<BuildingLayout> {
    let n_rects = [1, 2, 2, 3, 3][rng.gen_range(0..5)];
    let mut rects = vec![random_rect(rng, 40, 100)];
    while rects.len() < n_rects {
        let r = random_rect(rng, 20, 70);
        let anchor = rects[rng.gen_range(0..rects.len())];
        if overlap(&r, &anchor) >= 10 && !r.covers(&anchor) && !anchor.covers(&r) {
            rects.push(r);
        } else if rng.gen_bool(0.05) {
            break;
        }
    }
    let boundary = union_boundary(&rects).ok()?;
    let outline = BuildingLayout::from_walls(id.clone(), &boundary).ok()?;
    if outline.exterior().len() > MAX_CORNERS
        || outline.exterior().iter().any(|w| w.length() < MIN_FEATURE)
    {
        return None;
    }
    let n_chords = rng.gen_range(0..=4);
    let chords = add_chords(rng, &outline, n_chords).ok()?;
    BuildingLayout::from_polygon(id, &outline.corners(), chords).ok()
}

/// Generates `count` distinct base plans, deterministic in `seed`.
pub fn generate_base_layouts(seed: u64, count: usize) -> Result<Vec<BuildingLayout>, SynthError> {
    let mut rng = stream_rng(seed, 0);
    let mut out: Vec<BuildingLayout> = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > BASE_RETRIES * count.max(1) {
            return Err(SynthError::BaseGeneration(count));
        }
        let id = format!("base-{:03}", out.len());
        let Some(b) = generate_one(&mut rng, id) else {
            continue;
        };
        let duplicate = out
            .iter()
            .any(|o| o.exterior() == b.exterior() && o.interior() == b.interior());
        if !duplicate {
            out.push(b);
        }
    }
    Ok(out)
}

/// Rotates by `rotation` quarter turns about the canvas centre, scales about
/// the centre, then translates. Fails if the result leaves
/// `[margin, CANVAS - margin)` on either axis.
pub fn augment(
    building: &BuildingLayout,
    rotation: u8,
    scale: f64,
    translation: [f64; 2],
    margin: f64,
) -> Result<BuildingLayout, SynthError> {
    if rotation > 3 {
        return Err(SynthError::BadRotation(rotation));
    }
    let c = CANVAS_PX / 2.0;
    let map = |p: Point| {
        let q = rotate_quarter(p, rotation);
        Point::new(
            c + scale * (q.x - c) + translation[0],
            c + scale * (q.y - c) + translation[1],
        )
    };
    let fits = building.corners().into_iter().map(map).all(|p| {
        (margin..CANVAS_PX - margin).contains(&p.x) && (margin..CANVAS_PX - margin).contains(&p.y)
    });
    if !fits {
        return Err(SynthError::OutOfCanvas);
    }
    Ok(building.map_points(map)?)
}

fn sample_record(
    cfg: &SynthConfig,
    index: usize,
    base: &BuildingLayout,
    rng: &mut ChaCha8Rng,
) -> Result<DatasetRecord, SynthError> {
    let [lo, hi] = cfg.scale_range;
    for _ in 0..AUGMENT_RETRIES {
        let rotation = rng.gen_range(0..4u8);
        let scale = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let translation = [
            rng.gen_range(-MAX_TRANSLATION..=MAX_TRANSLATION) as f64,
            rng.gen_range(-MAX_TRANSLATION..=MAX_TRANSLATION) as f64,
        ];
        let mut building = match augment(base, rotation, scale, translation, f64::from(cfg.margin)) {
            Ok(b) => b,
            Err(SynthError::OutOfCanvas) => continue,
            Err(e) => return Err(e),
        };
        building.id = format!("r{index:05}");
        let layout = solve_structure(&building, &cfg.oracle)?;
        return Ok(DatasetRecord {
            building,
            layout,
            provenance: Provenance {
                base_id: base.id.clone(),
                rotation,
                scale,
                translation,
            },
        });
    }
    Err(SynthError::InfeasibleAugmentation(base.id.clone()))
}

/// Builds the full record set: `train_count()` train records followed by
/// test records, each drawn from its own seeded stream.
pub fn build_dataset(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let bases = generate_base_layouts(cfg.seed, cfg.base_count)?;
    let n_train = cfg.train_count();
    let (train_bases, test_bases): (Vec<&BuildingLayout>, Vec<&BuildingLayout>) =
        if cfg.split_by_base && bases.len() >= 2 {
            let held_out = (((bases.len() as f64) * (1.0 - cfg.train_fraction)).round() as usize)
                .clamp(1, bases.len() - 1);
            let cut = bases.len() - held_out;
            (bases[..cut].iter().collect(), bases[cut..].iter().collect())
        } else {
            (bases.iter().collect(), bases.iter().collect())
        };
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(cfg.total_count - n_train);
    for i in 0..cfg.total_count {
        let mut rng = stream_rng(cfg.seed, i as u64 + 1);
        let pool = if i < n_train { &train_bases } else { &test_bases };
        let base = pool[rng.gen_range(0..pool.len())];
        let record = sample_record(cfg, i, base, &mut rng)?;
        if i < n_train {
            train.push(record);
        } else {
            test.push(record);
        }
    }
    Ok(Dataset {
        config: cfg.clone(),
        train,
        test,
    })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    seed: u64,
    config: SynthConfig,
    train: Vec<String>,
    test: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    walls: Vec<WallSegment>,
    columns: Vec<(f64, f64, ColumnType)>,
    provenance: Provenance,
}

impl From<&DatasetRecord> for RecordLine {
    fn from(r: &DatasetRecord) -> Self {
        Self {
            id: r.building.id.clone(),
            walls: r.building.walls().copied().collect(),
            columns: r.layout.columns().iter().map(|c| (c.x, c.y, c.ctype)).collect(),
            provenance: r.provenance.clone(),
        }
    }
}

fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<(), SynthError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &RecordLine::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl(path: &Path, oracle: &OracleConfig) -> Result<Vec<DatasetRecord>, SynthError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(&line)?;
        let building = BuildingLayout::from_walls(rec.id.clone(), &rec.walls)?;
        let columns: Vec<Column> = rec
            .columns
            .iter()
            .map(|&(x, y, t)| Column::new(x, y, t))
            .collect();
        let layout = StructuralLayout::new(&columns)?;
        if solve_structure(&building, oracle)? != layout {
            return Err(SynthError::LayoutMismatch { id: rec.id });
        }
        out.push(DatasetRecord {
            building,
            layout,
            provenance: rec.provenance,
        });
    }
    Ok(out)
}

impl Dataset {
    /// Writes `manifest.json`, `train.jsonl` and `test.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            seed: self.config.seed,
            config: self.config.clone(),
            train: self.train.iter().map(|r| r.id().to_string()).collect(),
            test: self.test.iter().map(|r| r.id().to_string()).collect(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        write_jsonl(&dir.join(TRAIN_FILE), &self.train)?;
        write_jsonl(&dir.join(TEST_FILE), &self.test)?;
        Ok(())
    }

    /// Loads a dataset directory, re-checking every record against the oracle.
    pub fn load(dir: &Path) -> Result<Self, SynthError> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
            return Err(SynthError::Malformed(format!(
                "unsupported dataset format {} v{}",
                manifest.format, manifest.version
            )));
        }
        let train = read_jsonl(&dir.join(TRAIN_FILE), &manifest.config.oracle)?;
        let test = read_jsonl(&dir.join(TEST_FILE), &manifest.config.oracle)?;
        let ids = |rs: &[DatasetRecord]| rs.iter().map(|r| r.id().to_string()).collect::<Vec<_>>();
        if ids(&train) != manifest.train || ids(&test) != manifest.test {
            return Err(SynthError::Malformed("split lists disagree with records".into()));
        }
        Ok(Self {
            config: manifest.config,
            train,
            test,
        })
    }
}

/// One (partial structure -> next quad) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample<'a> {
    pub building: &'a BuildingLayout,
    /// Index of this sample within its building's expansion.
    pub step: usize,
    pub placed: &'a [Column],
    /// Normalised target coordinates; sentinel rows hold (-1, -1).
    pub target_coords: Vec<[f64; 2]>,
    pub target_types: Vec<Option<ColumnType>>,
    pub valid_mask: Vec<bool>,
}

impl TrainingSample<'_> {
    pub fn is_pure_stop(&self) -> bool {
        self.valid_mask.iter().all(|v| !v)
    }
}

/// Normalised sentinel coordinate, i.e. pixel (0, 0).
pub const SENTINEL: [f64; 2] = [-1.0, -1.0];

/// Cuts a layout into `ceil(N / quad_size) + 1` incremental samples; the last
/// one is a pure stop.
pub fn expand_incremental(record: &DatasetRecord, quad_size: usize) -> Vec<TrainingSample<'_>> {
    let cols = record.layout.columns();
    let n_steps = cols.len().div_ceil(quad_size) + 1;
    (0..n_steps)
        .map(|k| {
            let start = (k * quad_size).min(cols.len());
            let mut sample = TrainingSample {
                building: &record.building,
                step: k,
                placed: &cols[..start],
                target_coords: vec![SENTINEL; quad_size],
                target_types: vec![None; quad_size],
                valid_mask: vec![false; quad_size],
            };
            for (row, c) in cols[start..].iter().take(quad_size).enumerate() {
                sample.target_coords[row] = [c.x / (CANVAS_PX / 2.0) - 1.0, c.y / (CANVAS_PX / 2.0) - 1.0];
                sample.target_types[row] = Some(c.ctype);
                sample.valid_mask[row] = true;
            }
            sample
        })
        .collect()
}

/// Offsets every coordinate by an integer drawn uniformly from
/// `[-noise_px, noise_px]`, clamped to the canvas.
pub fn jitter_columns(columns: &[Column], seed: u64, noise_px: u32) -> Vec<Column> {
    if noise_px == 0 {
        return columns.to_vec();
    }
    let n = i64::from(noise_px);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    columns
        .iter()
        .map(|c| {
            let dx = rng.gen_range(-n..=n) as f64;
            let dy = rng.gen_range(-n..=n) as f64;
            Column {
                x: (c.x + dx).clamp(0.0, CANVAS_PX - 1.0),
                y: (c.y + dy).clamp(0.0, CANVAS_PX - 1.0),
                ..*c
            }
        })
        .collect()
}
