//! Grey-level and binary morphology on row-major grids.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use imageproc::distance_transform::euclidean_squared_distance_transform;
use imageproc::image::{GrayImage, Luma};
use imageproc::region_labelling::{connected_components, Connectivity};

#[allow(clippy::too_many_arguments)]
fn filter_1d(
    src: &[f64],
    dst: &mut [f64],
    n: usize,
    stride: usize,
    count: usize,
    line: usize,
    k: usize,
    pick: fn(f64, f64) -> f64,
) {
    let r = k / 2;
    for l in 0..count {
        let base = l * line;
        for i in 0..n {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(n - 1);
            let mut acc = src[base + lo * stride];
            for j in lo + 1..=hi {
                acc = pick(acc, src[base + j * stride]);
            }
            dst[base + i * stride] = acc;
        }
    }
}

/// Separable `k x k` filter; pixels outside the grid are ignored.
fn square_filter(values: &[f64], w: usize, h: usize, k: usize, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    let mut tmp = vec![0.0; values.len()];
    let mut out = vec![0.0; values.len()];
    filter_1d(values, &mut tmp, w, 1, h, w, k, pick);
    filter_1d(&tmp, &mut out, h, w, w, 1, k, pick);
    out
}

pub(crate) fn erode(values: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    square_filter(values, w, h, k, f64::min)
}

pub(crate) fn dilate(values: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    square_filter(values, w, h, k, f64::max)
}

/// `values - open(values)` with a `k x k` square: what sticks up from the
/// surrounding surface by structures narrower than the window.
pub(crate) fn top_hat(values: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let opened = dilate(&erode(values, w, h, k), w, h, k);
    values.iter().zip(&opened).map(|(v, o)| (v - o).max(0.0)).collect()
}

/// Mean over the 3 x 3 neighbourhood clipped to the grid.
pub(crate) fn box_mean(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for row in 0..h {
        for col in 0..w {
            let (mut sum, mut n) = (0.0, 0.0);
            for r in row.saturating_sub(1)..=(row + 1).min(h - 1) {
                for c in col.saturating_sub(1)..=(col + 1).min(w - 1) {
                    sum += values[r * w + c];
                    n += 1.0;
                }
            }
            out[row * w + col] = sum / n;
        }
    }
    out
}

pub(crate) fn dilate_mask(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = mask.to_vec();
    for row in 0..h {
        for col in 0..w {
            if mask[row * w + col] {
                continue;
            }
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (r, c) = (row as i64 + dr, col as i64 + dc);
                    if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask[r as usize * w + c as usize] {
                        out[row * w + col] = true;
                        break 'n;
                    }
                }
            }
        }
    }
    out
}

fn to_gray(mask: &[bool], w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([mask[y as usize * w + x as usize] as u8 * 255])
    })
}

/// 8-connected components of `mask`, each as sorted pixel indices, ordered by
/// their first pixel.
pub(crate) fn components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    let labels = connected_components(&to_gray(mask, w, h), Connectivity::Eight, Luma([0u8]));
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut slot: Vec<usize> = Vec::new();
    for (i, p) in labels.pixels().enumerate() {
        let l = p[0] as usize;
        if l == 0 {
            continue;
        }
        if slot.len() <= l {
            slot.resize(l + 1, usize::MAX);
        }
        if slot[l] == usize::MAX {
            slot[l] = out.len();
            out.push(Vec::new());
        }
        out[slot[l]].push(i);
    }
    out
}

/// Euclidean distance in pixels from each mask pixel to the nearest pixel
/// outside the mask; zero outside.
pub(crate) fn distance_inside(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let inverted: Vec<bool> = mask.iter().map(|m| !m).collect();
    if inverted.iter().all(|b| !b) {
        return vec![f64::INFINITY; mask.len()];
    }
    euclidean_squared_distance_transform(&to_gray(&inverted, w, h))
        .pixels()
        .map(|p| p[0].sqrt())
        .collect()
}

fn neighbours(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (row, col) = ((i / w) as i64, (i % w) as i64);
    (-1i64..=1)
        .flat_map(move |dr| (-1i64..=1).map(move |dc| (row + dr, col + dc)))
        .filter(move |&(r, c)| (r, c) != (row, col) && r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w)
        .map(move |(r, c)| r as usize * w + c as usize)
}

/// Splits one component at the saddles of its distance transform. Regional
/// maxima closer than `min_sep` pixels are treated as one seed.
pub(crate) fn split_touching(component: &[usize], dist: &[f64], w: usize, h: usize, min_sep: f64) -> Vec<Vec<usize>> {
    let inside = |i: usize| component.binary_search(&i).is_ok();
    let is_peak: Vec<bool> = component
        .iter()
        .map(|&p| neighbours(p, w, h).filter(|&q| inside(q)).all(|q| dist[q] <= dist[p]))
        .collect();
    let peak_pixels: Vec<usize> = component.iter().zip(&is_peak).filter(|x| *x.1).map(|x| *x.0).collect();
    let mut peak_mask = vec![false; w * h];
    for &p in &peak_pixels {
        peak_mask[p] = true;
    }
    // strongest regional maxima first; weaker ones within min_sep join them
    let mut groups = components(&peak_mask, w, h);
    groups.sort_by(|a, b| {
        let pa = a.iter().map(|&i| dist[i]).fold(0.0, f64::max);
        let pb = b.iter().map(|&i| dist[i]).fold(0.0, f64::max);
        pb.total_cmp(&pa).then(a[0].cmp(&b[0]))
    });
    let centre = |g: &[usize]| {
        let n = g.len() as f64;
        let (r, c) = g
            .iter()
            .fold((0.0, 0.0), |a, &i| (a.0 + (i / w) as f64, a.1 + (i % w) as f64));
        (r / n, c / n)
    };
    let mut seeds: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for g in groups {
        let (r, c) = centre(&g);
        match seeds.iter_mut().find(|s| (s.0 - r).hypot(s.1 - c) < min_sep) {
            Some(s) => s.2.extend(g),
            None => seeds.push((r, c, g)),
        }
    }
    if seeds.len() <= 1 {
        return vec![component.to_vec()];
    }
    let mut label = vec![usize::MAX; w * h];
    let mut heap = BinaryHeap::new();
    for (k, s) in seeds.iter().enumerate() {
        for &p in &s.2 {
            label[p] = k;
            heap.push((dist[p].to_bits(), Reverse(p)));
        }
    }
    while let Some((_, Reverse(p))) = heap.pop() {
        for q in neighbours(p, w, h) {
            if inside(q) && label[q] == usize::MAX {
                label[q] = label[p];
                heap.push((dist[q].to_bits(), Reverse(q)));
            }
        }
    }
    let mut out = vec![Vec::new(); seeds.len()];
    for &p in component {
        out[label[p]].push(p);
    }
    out.retain(|r| !r.is_empty());
    out.sort_by_key(|r| r[0]);
    out
}
