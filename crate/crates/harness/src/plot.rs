//! Minimal raster charts and image previews written as PNG.
//!
//! Charts carry no text; the CSV written next to each plot holds the numbers
//! and labels.

use std::path::Path;

use grain_core::encoding::{ActionImage, DepthImage};
use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::Result;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const REF: Rgb<u8> = Rgb([200, 30, 30]);

pub const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([127, 127, 127]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub value: f64,
    /// Half-length of the whisker; zero draws none.
    pub err: f64,
    pub color: Rgb<u8>,
}

/// Grouped bars over a shared y range. `refs` become dashed horizontal lines.
#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub groups: Vec<Vec<Bar>>,
    pub y_range: (f64, f64),
    pub refs: Vec<f64>,
}

fn fill(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in y0.max(0)..y1.min(h) {
        for x in x0.max(0)..x1.min(w) {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

impl BarChart {
    pub fn render(&self, width: u32, height: u32) -> RgbImage {
        let mut img = RgbImage::from_pixel(width, height, BG);
        let (left, right, top, bottom) = (40i64, 10i64, 10i64, 30i64);
        let (w, h) = (width as i64, height as i64);
        let plot_h = (h - top - bottom).max(1) as f64;
        let (lo, hi) = self.y_range;
        let span = if hi > lo { hi - lo } else { 1.0 };
        let to_y = |v: f64| top + ((1.0 - ((v - lo) / span).clamp(0.0, 1.0)) * plot_h).round() as i64;
        let base = to_y(0.0f64.clamp(lo, hi));

        let n_groups = self.groups.len().max(1) as i64;
        let slot = (w - left - right) / n_groups;
        for (g, bars) in self.groups.iter().enumerate() {
            let n = bars.len().max(1) as i64;
            let inner = (slot * 4 / 5).max(n);
            let bw = (inner / n).max(1);
            let x_start = left + g as i64 * slot + (slot - bw * n) / 2;
            for (i, b) in bars.iter().enumerate() {
                let x0 = x_start + i as i64 * bw;
                let y = to_y(b.value);
                fill(&mut img, x0 + 1, y.min(base), x0 + bw - 1, y.max(base) + 1, b.color);
                if b.err > 0.0 {
                    let (ya, yb) = (to_y(b.value + b.err), to_y(b.value - b.err));
                    let cx = x0 + bw / 2;
                    fill(&mut img, cx, ya.min(yb), cx + 1, ya.max(yb) + 1, AXIS);
                    fill(&mut img, cx - bw / 4, ya, cx + bw / 4 + 1, ya + 1, AXIS);
                    fill(&mut img, cx - bw / 4, yb, cx + bw / 4 + 1, yb + 1, AXIS);
                }
            }
        }
        for &r in &self.refs {
            let y = to_y(r);
            let mut x = left;
            while x < w - right {
                fill(&mut img, x, y, (x + 6).min(w - right), y + 1, REF);
                x += 10;
            }
        }
        fill(&mut img, left - 1, top, left, h - bottom + 1, AXIS);
        fill(&mut img, left - 1, base, w - right, base + 1, AXIS);
        img
    }

    pub fn save(&self, path: &Path, width: u32, height: u32) -> Result<()> {
        self.render(width, height).save(path)?;
        Ok(())
    }
}

/// Grey depth preview, `scale` pixels per cell, with +y pointing up.
pub fn depth_preview(img: &DepthImage, scale: u32) -> GrayImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    GrayImage::from_fn(w * scale, h * scale, |x, y| {
        let (col, row) = ((x / scale) as usize, (h - 1 - y / scale) as usize);
        Luma([((img.get(row, col) + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8])
    })
}

/// Action preview in its own red/blue coding, same orientation as
/// [`depth_preview`].
pub fn action_preview(img: &ActionImage, scale: u32) -> RgbImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let px = img.pixels();
    RgbImage::from_fn(w * scale, h * scale, |x, y| {
        let (col, row) = ((x / scale) as usize, (h - 1 - y / scale) as usize);
        let p = px[row * w as usize + col];
        Rgb(p.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taller_values_paint_taller_bars() {
        let chart = BarChart {
            groups: vec![vec![
                Bar {
                    value: 0.2,
                    err: 0.0,
                    color: PALETTE[0],
                },
                Bar {
                    value: 0.8,
                    err: 0.1,
                    color: PALETTE[1],
                },
            ]],
            y_range: (0.0, 1.0),
            refs: vec![0.5],
        };
        let img = chart.render(200, 120);
        let count = |c: Rgb<u8>| img.pixels().filter(|p| **p == c).count();
        assert!(count(PALETTE[1]) > 3 * count(PALETTE[0]));
        assert!(count(REF) > 0);
    }
}
