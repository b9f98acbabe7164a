//! Rasterisation of a plan and its placed columns into the 4-channel model
//! input: walls, columns, x-coordinate map, y-coordinate map.

use crate::geometry::{BuildingLayout, Column, Orientation, WallSegment, CANVAS_SIZE};
use std::path::Path;

pub const CHANNELS: usize = 4;
pub const WALL_CHANNEL: usize = 0;
pub const COLUMN_CHANNEL: usize = 1;
pub const X_CHANNEL: usize = 2;
pub const Y_CHANNEL: usize = 3;

/// Channel-major `CHANNELS x size x size` image, row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterInput {
    size: usize,
    data: Vec<f32>,
}

impl RasterInput {
    /// Empty wall and column channels with filled coordinate channels.
    pub fn blank(size: usize) -> Self {
        let plane = size * size;
        let mut data = vec![0.0f32; CHANNELS * plane];
        let denom = (size.max(2) - 1) as f32;
        for y in 0..size {
            for x in 0..size {
                data[X_CHANNEL * plane + y * size + x] = 2.0 * x as f32 / denom - 1.0;
                data[Y_CHANNEL * plane + y * size + x] = 2.0 * y as f32 / denom - 1.0;
            }
        }
        Self { size, data }
    }

    /// Wraps raw channel-major data; `None` if the length is not
    /// `CHANNELS * size * size`.
    pub fn from_data(size: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == CHANNELS * size * size).then_some(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.size * self.size;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.size + y) * self.size + x]
    }

    /// Number of set pixels in a binary channel.
    pub fn count_set(&self, c: usize) -> usize {
        self.channel(c).iter().filter(|&&v| v != 0.0).count()
    }

    fn set(&mut self, c: usize, x: i64, y: i64) {
        let s = self.size as i64;
        if (0..s).contains(&x) && (0..s).contains(&y) {
            self.data[(c * self.size + y as usize) * self.size + x as usize] = 1.0;
        }
    }

    /// Draws a 1-px wall: every integer position between the rounded
    /// endpoints, inclusive.
    pub fn draw_segment(&mut self, w: &WallSegment) {
        match w.orientation() {
            Orientation::Horizontal => {
                let y = w.y1.round() as i64;
                let (a, b) = (w.x1.min(w.x2).round() as i64, w.x1.max(w.x2).round() as i64);
                for x in a..=b {
                    self.set(WALL_CHANNEL, x, y);
                }
            }
            Orientation::Vertical => {
                let x = w.x1.round() as i64;
                let (a, b) = (w.y1.min(w.y2).round() as i64, w.y1.max(w.y2).round() as i64);
                for y in a..=b {
                    self.set(WALL_CHANNEL, x, y);
                }
            }
        }
    }

    /// ORs a plus-shaped column marker (centre and 4-neighbours) into the
    /// column channel; pixels off the canvas are dropped.
    pub fn draw_column(&mut self, column: &Column) {
        let max = self.size as f64 - 1.0;
        let cx = column.x.round().clamp(0.0, max) as i64;
        let cy = column.y.round().clamp(0.0, max) as i64;
        for (dx, dy) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
            self.set(COLUMN_CHANNEL, cx + dx, cy + dy);
        }
    }

    /// Lossless 8-bit grayscale PNG of one channel. Binary channels map to
    /// 0/255, coordinate channels map [-1, 1] linearly onto [0, 255].
    pub fn save_channel_png(&self, c: usize, path: &Path) -> Result<(), image::ImageError> {
        let bytes: Vec<u8> = self
            .channel(c)
            .iter()
            .map(|&v| {
                let unit = if c >= X_CHANNEL { (v + 1.0) / 2.0 } else { v };
                (unit.clamp(0.0, 1.0) * 255.0).round() as u8
            })
            .collect();
        let img = image::GrayImage::from_raw(self.size as u32, self.size as u32, bytes)
            .expect("buffer matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
    }

    /// Writes `<prefix>_walls.png`, `_columns.png`, `_xcoord.png`, `_ycoord.png`.
    pub fn save_pngs(&self, dir: &Path, prefix: &str) -> Result<(), image::ImageError> {
        for (c, name) in ["walls", "columns", "xcoord", "ycoord"].iter().enumerate() {
            self.save_channel_png(c, &dir.join(format!("{prefix}_{name}.png")))?;
        }
        Ok(())
    }
}

/// Renders the model input for `building` with `placed` columns drawn in.
pub fn rasterize(building: &BuildingLayout, placed: &[Column]) -> RasterInput {
    let mut r = RasterInput::blank(CANVAS_SIZE);
    for w in building.walls() {
        r.draw_segment(w);
    }
    for c in placed {
        r.draw_column(c);
    }
    r
}

/// Copy of `raster` with one more column marker.
pub fn add_column_to_image(raster: &RasterInput, column: &Column) -> RasterInput {
    let mut r = raster.clone();
    r.draw_column(column);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ColumnType;

    fn set_pixels(r: &RasterInput, c: usize) -> Vec<(usize, usize)> {
        let s = r.size();
        (0..s)
            .flat_map(|y| (0..s).map(move |x| (x, y)))
            .filter(|&(x, y)| r.get(c, x, y) == 1.0)
            .collect()
    }

    #[test]
    fn segment_on_debug_canvas() {
        let mut r = RasterInput::blank(8);
        r.draw_segment(&WallSegment::new(1.0, 1.0, 5.0, 1.0).unwrap());
        assert_eq!(
            set_pixels(&r, WALL_CHANNEL),
            vec![(1, 1), (2, 1), (3, 1), (4, 1), (5, 1)]
        );
    }

    #[test]
    fn column_marker_is_a_plus() {
        let mut r = RasterInput::blank(CANVAS_SIZE);
        r.draw_column(&Column::new(64.0, 64.0, ColumnType::FreeStanding));
        let mut px = set_pixels(&r, COLUMN_CHANNEL);
        px.sort();
        assert_eq!(px, vec![(63, 64), (64, 63), (64, 64), (64, 65), (65, 64)]);
    }

    #[test]
    fn column_marker_clamps_at_border() {
        let blank = RasterInput::blank(CANVAS_SIZE);
        let r = add_column_to_image(&blank, &Column::new(0.0, 0.0, ColumnType::OnCorner));
        assert_eq!(r.count_set(COLUMN_CHANNEL), 3);
        let again = add_column_to_image(&r, &Column::new(0.0, 0.0, ColumnType::OnCorner));
        assert_eq!(again, r);
        assert_eq!(r.channel(WALL_CHANNEL), blank.channel(WALL_CHANNEL));
    }

    #[test]
    fn coordinate_channels() {
        let r = RasterInput::blank(CANVAS_SIZE);
        assert_eq!(r.get(X_CHANNEL, 0, 17), -1.0);
        assert_eq!(r.get(X_CHANNEL, 127, 3), 1.0);
        assert_eq!(r.get(Y_CHANNEL, 5, 0), -1.0);
        assert_eq!(r.get(Y_CHANNEL, 5, 127), 1.0);
        assert_eq!(r.get(X_CHANNEL, 40, 0), r.get(X_CHANNEL, 40, 99));
    }
}
