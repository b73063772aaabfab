//! Dense f64 tensors and the two GEMM-backed convolution kernels.

use rand::Rng;
use rand_distr::StandardNormal;

/// Row-major tensor. Feature maps are `[channels, height, width]`; vectors
/// are `[n]`; weights carry whatever shape their layer declares.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "tensor size mismatch for {dims:?}"
        );
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    pub fn full(dims: &[usize], v: f64) -> Self {
        Self::new(dims, vec![v; dims.iter().product()])
    }

    pub fn randn<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let n = dims.iter().product();
        Self::new(dims, (0..n).map(|_| rng.sample(StandardNormal)).collect())
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(dims: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = dims.iter().product();
        Self::new(dims, (0..n).map(|_| rng.gen_range(-bound..=bound)).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(channels, height, width)` of a feature map.
    pub fn chw(&self) -> (usize, usize, usize) {
        assert_eq!(self.dims.len(), 3, "expected a [c, h, w] tensor, got {:?}", self.dims);
        (self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(&self.dims, self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Stacks feature maps of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
        let (_, h, w) = parts[0].chw();
        let mut c = 0;
        let mut data = Vec::new();
        for p in parts {
            let (pc, ph, pw) = p.chw();
            assert_eq!((ph, pw), (h, w), "spatial sizes differ");
            c += pc;
            data.extend_from_slice(&p.data);
        }
        Tensor::new(&[c, h, w], data)
    }
}

/// `c = a · b` for row-major `a: m×k`, `b: k×n`, with optional transposes
/// expressed as strides. `accumulate` adds into `c` instead of overwriting.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices cover m·k, k·n and m·n elements under these strides,
    // which the callers guarantee through their shape asserts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Patch matrix `[(ci·k·k), (h·w)]` for a stride-1 convolution with
/// `pad = k / 2`.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut col = vec![0.0; c * k * k * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            row[y * w + xx] = plane[sy as usize * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], c: usize, h: usize, w: usize, k: usize, dx_out: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx_out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

/// Same-size convolution. `weight` is `[co, ci, k, k]`, `bias` is `[co]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (ci, h, w) = x.chw();
    let (co, wci, k) = (weight.dims[0], weight.dims[1], weight.dims[2]);
    assert_eq!(wci, ci, "conv expects {wci} input channels, got {ci}");
    assert_eq!(bias.len(), co);
    let hw = h * w;
    let mut out = vec![0.0; co * hw];
    for (o, b) in bias.data.iter().enumerate() {
        out[o * hw..(o + 1) * hw].fill(*b);
    }
    if k == 1 {
        gemm(co, ci, hw, &weight.data, false, &x.data, false, &mut out, true);
    } else {
        let col = im2col(&x.data, ci, h, w, k);
        gemm(co, ci * k * k, hw, &weight.data, false, &col, false, &mut out, true);
    }
    Tensor::new(&[co, h, w], out)
}

/// Gradients of [`conv2d`] given the upstream gradient `g`. Returns
/// `(dx, dweight, dbias)`.
pub fn conv2d_backward(x: &Tensor, weight: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (ci, h, w) = x.chw();
    let (co, k) = (weight.dims[0], weight.dims[2]);
    let hw = h * w;
    let kk = ci * k * k;
    let db: Vec<f64> = (0..co).map(|o| g.data[o * hw..(o + 1) * hw].iter().sum()).collect();
    let mut dw = vec![0.0; co * kk];
    let mut dx = vec![0.0; ci * hw];
    if k == 1 {
        gemm(co, hw, ci, &g.data, false, &x.data, true, &mut dw, false);
        gemm(ci, co, hw, &weight.data, true, &g.data, false, &mut dx, false);
    } else {
        let col = im2col(&x.data, ci, h, w, k);
        gemm(co, hw, kk, &g.data, false, &col, true, &mut dw, false);
        let mut dcol = vec![0.0; kk * hw];
        gemm(kk, co, hw, &weight.data, true, &g.data, false, &mut dcol, false);
        col2im(&dcol, ci, h, w, k, &mut dx);
    }
    (
        Tensor::new(&[ci, h, w], dx),
        Tensor::new(weight.dims(), dw),
        Tensor::new(&[co], db),
    )
}

/// `y = W x + b` with `W: [m, n]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (m, n) = (weight.dims[0], weight.dims[1]);
    assert_eq!(x.len(), n);
    let mut out = bias.data.clone();
    gemm(m, n, 1, &weight.data, false, &x.data, false, &mut out, true);
    Tensor::new(&[m], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // direct seven-loop convolution
    fn naive_conv(x: &Tensor, wt: &Tensor, b: &Tensor) -> Tensor {
        let (ci, h, w) = x.chw();
        let (co, k) = (wt.dims()[0], wt.dims()[2]);
        let p = (k / 2) as isize;
        let mut out = Tensor::zeros(&[co, h, w]);
        for o in 0..co {
            for y in 0..h {
                for xx in 0..w {
                    let mut s = b.data()[o];
                    for i in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - p;
                                let sx = xx as isize + kx as isize - p;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    s += wt.data()[((o * ci + i) * k + ky) * k + kx]
                                        * x.data()[(i * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    out.data_mut()[(o * h + y) * w + xx] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 3] {
            let x = Tensor::randn(&[3, 5, 7], &mut rng);
            let wt = Tensor::randn(&[4, 3, k, k], &mut rng);
            let b = Tensor::randn(&[4], &mut rng);
            let fast = conv2d(&x, &wt, &b);
            let slow = naive_conv(&x, &wt, &b);
            for (a, s) in fast.data().iter().zip(slow.data()) {
                assert!((a - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_matches_dot_products() {
        let w = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 0.5]);
        let x = Tensor::new(&[3], vec![1.0, 1.0, 2.0]);
        let b = Tensor::new(&[2], vec![0.5, 0.0]);
        assert_eq!(linear(&x, &w, &b).data(), &[9.5, 0.0]);
    }
}
