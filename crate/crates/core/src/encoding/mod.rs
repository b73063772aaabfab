//! Depth and action images: rendering simulator state, extracting robot and
//! obstacle states back out, and composing predicted next frames.
//!
//! Depth pixels map heights above the inclined plane to `[-1, 1]` over the
//! window `[0, H_MAX]`. Image pixel `(row, col)` covers the same area as the
//! heightfield cell with the same indices; row 0 is the downhill edge.

mod augment;
mod compose;
mod extract;
mod morph;
mod pnm;
mod render;

use thiserror::Error;

use crate::raster::Frame;

pub use augment::{paste_obstacle_augment, AugmentOutcome, EXCLUSION_CM};
pub use compose::{boundary_band, compose_extracted, compose_next, fill_holes};
pub use extract::{extract_obstacles, extract_robot, track_obstacles, Tracked, OBSTACLE_THRESHOLD, TRACK_GATE};
pub use pnm::{read_action_ppm, read_delta_pgm, read_depth_pgm, write_action_ppm, write_delta_pgm, write_depth_pgm};
pub use render::{decode_heightfield, denormalize, normalize, render_action, render_depth, robot_term, H_MAX};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("no robot region found in the depth image")]
    NoRobot,
    #[error("robot region is ambiguous: {0} components share the largest area")]
    AmbiguousRobot(usize),
    #[error("image shape mismatch: {0}")]
    Shape(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("malformed image file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncodingError>;

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 || width * height != len {
        return Err(EncodingError::Shape(format!(
            "{width} x {height} image cannot hold {len} values"
        )));
    }
    Ok(())
}

/// Normalized depth observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    /// Pixel edge in cm.
    cell: f64,
    values: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, cell: f64, values: Vec<f64>) -> Result<Self> {
        check_len(width, height, values.len())?;
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(EncodingError::Range(format!("depth value {v} outside [-1, 1]")));
        }
        Ok(Self {
            width,
            height,
            cell,
            values,
        })
    }

    /// Builds an image from arbitrary finite values, clamping into range.
    pub fn from_clamped(frame: Frame, values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        assert_eq!(values.len(), frame.len());
        Self {
            width: frame.width,
            height: frame.height,
            cell: frame.cell,
            values,
        }
    }

    pub fn constant(frame: Frame, value: f64) -> Self {
        Self::from_clamped(frame, std::iter::repeat_n(value, frame.len()))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            cell: self.cell,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Heights in cm above the plane.
    pub fn heights_cm(&self) -> Vec<f64> {
        self.values.iter().map(|v| denormalize(*v)).collect()
    }

    fn same_shape(&self, w: usize, h: usize) -> Result<()> {
        if (self.width, self.height) != (w, h) {
            return Err(EncodingError::Shape(format!(
                "{}x{} vs {w}x{h}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Difference of two depth images.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaImage {
    width: usize,
    height: usize,
    cell: f64,
    values: Vec<f64>,
}

impl DeltaImage {
    pub fn new(width: usize, height: usize, cell: f64, values: Vec<f64>) -> Result<Self> {
        check_len(width, height, values.len())?;
        if let Some(v) = values.iter().find(|v| !(-2.0..=2.0).contains(*v)) {
            return Err(EncodingError::Range(format!("delta value {v} outside [-2, 2]")));
        }
        Ok(Self {
            width,
            height,
            cell,
            values,
        })
    }

    /// Builds a delta from arbitrary finite values, clamping into range.
    pub fn from_clamped(frame: Frame, values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().map(|v| v.clamp(-2.0, 2.0)).collect();
        assert_eq!(values.len(), frame.len());
        Self {
            width: frame.width,
            height: frame.height,
            cell: frame.cell,
            values,
        }
    }

    pub fn zeros(frame: Frame) -> Self {
        Self::from_clamped(frame, std::iter::repeat_n(0.0, frame.len()))
    }

    /// `to - from`, pixelwise.
    pub fn between(from: &DepthImage, to: &DepthImage) -> Result<Self> {
        from.same_shape(to.width, to.height)?;
        Ok(Self::from_clamped(
            from.frame(),
            from.values.iter().zip(&to.values).map(|(a, b)| b - a),
        ))
    }

    /// `clamp(img + self)`.
    pub fn apply(&self, img: &DepthImage) -> Result<DepthImage> {
        img.same_shape(self.width, self.height)?;
        Ok(DepthImage::from_clamped(
            img.frame(),
            img.values.iter().zip(&self.values).map(|(a, d)| a + d),
        ))
    }

    /// Keeps only pixels for which `keep` returns true; the rest become 0.
    pub fn masked(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if !keep(i) {
                *v = 0.0;
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            cell: self.cell,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// RGB action image. A swept pixel holds `coverage * (phase, 0, 1 - phase)`,
/// so its hue runs from blue at the front of a sweep to red at the back and
/// `red + blue` recovers the swept coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionImage {
    width: usize,
    height: usize,
    cell: f64,
    pixels: Vec<[f64; 3]>,
}

impl ActionImage {
    pub fn new(width: usize, height: usize, cell: f64, pixels: Vec<[f64; 3]>) -> Result<Self> {
        check_len(width, height, pixels.len())?;
        if pixels.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(EncodingError::Range("action channel outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            cell,
            pixels,
        })
    }

    pub fn blank(frame: Frame) -> Self {
        Self {
            width: frame.width,
            height: frame.height,
            cell: frame.cell,
            pixels: vec![[0.0; 3]; frame.len()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            cell: self.cell,
        }
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|p| *p == [0.0; 3])
    }

    /// Swept coverage per nonzero pixel, in index order.
    pub fn coverage(&self) -> Vec<(usize, f64)> {
        self.pixels
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let w = (p[0] + p[2]).min(1.0);
                (w > 0.0).then_some((i, w))
            })
            .collect()
    }

    /// Total swept area in pixels.
    pub fn painted_area(&self) -> f64 {
        self.coverage().iter().map(|c| c.1).sum()
    }

    /// Sweep phase encoded at a pixel, if painted.
    pub fn phase(&self, idx: usize) -> Option<f64> {
        let p = self.pixels[idx];
        let w = p[0] + p[2];
        (w > 0.0).then(|| p[0] / w)
    }

    /// Channel-major planes `[red, green, blue]`.
    pub fn planes(&self) -> [Vec<f64>; 3] {
        let mut out = [
            Vec::with_capacity(self.pixels.len()),
            Vec::with_capacity(self.pixels.len()),
            Vec::with_capacity(self.pixels.len()),
        ];
        for p in &self.pixels {
            for (c, plane) in out.iter_mut().enumerate() {
                plane.push(p[c]);
            }
        }
        out
    }
}

/// Set of pixel indices (`row * width + col`) within an image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PixelSet {
    width: usize,
    height: usize,
    idx: Vec<usize>,
}

impl PixelSet {
    pub fn new(width: usize, height: usize, mut idx: Vec<usize>) -> Result<Self> {
        idx.sort_unstable();
        idx.dedup();
        if let Some(i) = idx.last() {
            if *i >= width * height {
                return Err(EncodingError::Shape(format!("pixel {i} outside {width}x{height}")));
            }
        }
        Ok(Self { width, height, idx })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            idx: Vec::new(),
        }
    }

    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Self {
        Self {
            width,
            height,
            idx: mask.iter().enumerate().filter(|m| *m.1).map(|m| m.0).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.idx.binary_search(&idx).is_ok()
    }

    /// `(row, col)` pairs in index order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.idx.iter().map(|i| (i / self.width, i % self.width))
    }

    pub fn to_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.width * self.height];
        for &i in &self.idx {
            m[i] = true;
        }
        m
    }

    pub fn union(&self, other: &PixelSet) -> PixelSet {
        let mut idx = self.idx.clone();
        idx.extend_from_slice(&other.idx);
        idx.sort_unstable();
        idx.dedup();
        PixelSet {
            width: self.width,
            height: self.height,
            idx,
        }
    }

    pub fn difference(&self, other: &PixelSet) -> PixelSet {
        PixelSet {
            width: self.width,
            height: self.height,
            idx: self.idx.iter().copied().filter(|i| !other.contains(*i)).collect(),
        }
    }

    /// Grows the set by `steps` rounds of 8-neighbour dilation.
    pub fn dilate(&self, steps: usize) -> PixelSet {
        let mut mask = self.to_mask();
        for _ in 0..steps {
            mask = morph::dilate_mask(&mask, self.width, self.height);
        }
        PixelSet::from_mask(self.width, self.height, &mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame {
        Frame {
            width: 8,
            height: 8,
            cell: 1.0,
        }
    }

    #[test]
    fn delta_round_trip_clamps() {
        let a = DepthImage::constant(frame(), -0.5);
        let b = DepthImage::constant(frame(), 0.75);
        let d = DeltaImage::between(&a, &b).unwrap();
        assert_eq!(d.apply(&a).unwrap(), b);
        let big = DeltaImage::from_clamped(frame(), vec![2.0; 64]);
        assert!(big.apply(&b).unwrap().values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn range_checks() {
        assert!(DepthImage::new(2, 2, 1.0, vec![0.0, 1.5, 0.0, 0.0]).is_err());
        assert!(DepthImage::new(2, 2, 1.0, vec![0.0; 3]).is_err());
        assert!(DeltaImage::new(2, 2, 1.0, vec![-2.5, 0.0, 0.0, 0.0]).is_err());
        assert!(PixelSet::new(2, 2, vec![4]).is_err());
    }

    #[test]
    fn pixel_set_algebra() {
        let a = PixelSet::new(8, 8, vec![9, 10, 11]).unwrap();
        let b = PixelSet::new(8, 8, vec![11, 12]).unwrap();
        assert_eq!(a.union(&b).indices(), &[9, 10, 11, 12]);
        assert_eq!(a.difference(&b).indices(), &[9, 10]);
        assert_eq!(PixelSet::new(8, 8, vec![27]).unwrap().dilate(1).len(), 9);
        assert_eq!(a.coords().next(), Some((1, 1)));
    }
}
