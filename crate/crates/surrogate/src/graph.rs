//! Reverse-mode differentiation over a recorded list of layer operations.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters enter as
//! leaves tagged with their slot in the [`ParamStore`](crate::ParamStore) so
//! that [`Graph::backward`] can hand back one gradient per slot.

use rand::Rng;

use crate::tensor::{conv2d, conv2d_backward, linear, Tensor};

/// Variance floor of group normalisation.
pub const GN_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    Conv {
        x: Var,
        w: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu(Var),
    Add(Var, Var),
    /// Feature map plus a per-channel vector.
    AddChannel {
        x: Var,
        v: Var,
    },
    /// Group normalisation with per-channel scale and shift.
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    AvgPool(Var),
    Upsample(Var),
    Concat(Var, Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    /// Mean squared error against a constant target; scalar output.
    Mse {
        x: Var,
        target: Tensor,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, slot: usize, t: Tensor) -> Var {
        self.push(t, Op::Param(slot))
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = conv2d(self.value(x), self.value(w), self.value(b));
        self.push(y, Op::Conv { x, w, b })
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = linear(self.value(x), self.value(w), self.value(b));
        self.push(y, Op::Linear { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.max(0.0));
        self.push(y, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        self.push(y, Op::Add(a, b))
    }

    pub fn add_channel(&mut self, x: Var, v: Var) -> Var {
        let mut y = self.value(x).clone();
        let (c, h, w) = y.chw();
        let vv = self.value(v).data().to_vec();
        assert_eq!(vv.len(), c, "channel vector length");
        for (ch, plane) in y.data_mut().chunks_mut(h * w).enumerate() {
            for p in plane {
                *p += vv[ch];
            }
        }
        self.push(y, Op::AddChannel { x, v })
    }

    /// Normalises each of `groups` channel groups to zero mean and unit
    /// variance over its channels and pixels, then applies `gamma`, `beta`.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let t = self.value(x);
        let (c, h, w) = t.chw();
        assert!(groups > 0 && c % groups == 0, "{c} channels in {groups} groups");
        let per = c / groups * h * w;
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; t.len()];
        let mut mean = Vec::with_capacity(groups);
        let mut rstd = Vec::with_capacity(groups);
        for (g, chunk) in t.data().chunks(per).enumerate() {
            let m = chunk.iter().sum::<f64>() / per as f64;
            let var = chunk.iter().map(|v| (v - m).powi(2)).sum::<f64>() / per as f64;
            let r = 1.0 / (var + GN_EPS).sqrt();
            for (k, v) in chunk.iter().enumerate() {
                let ch = (g * per + k) / (h * w);
                out[g * per + k] = (v - m) * r * gm[ch] + bt[ch];
            }
            mean.push(m);
            rstd.push(r);
        }
        let dims = t.dims().to_vec();
        self.push(
            Tensor::new(&dims, out),
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                rstd,
            },
        )
    }

    /// 2×2 mean pooling with stride 2.
    pub fn avg_pool(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = t.chw();
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even sizes, got {h}×{w}");
        let (h2, w2) = (h / 2, w / 2);
        let mut out = vec![0.0; c * h2 * w2];
        let d = t.data();
        for ch in 0..c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    let base = ch * h * w + 2 * y * w + 2 * xx;
                    out[(ch * h2 + y) * w2 + xx] = 0.25 * (d[base] + d[base + 1] + d[base + w] + d[base + w + 1]);
                }
            }
        }
        self.push(Tensor::new(&[c, h2, w2], out), Op::AvgPool(x))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = t.chw();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![0.0; c * h2 * w2];
        let d = t.data();
        for ch in 0..c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    out[(ch * h2 + y) * w2 + xx] = d[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        self.push(Tensor::new(&[c, h2, w2], out), Op::Upsample(x))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let y = Tensor::concat_channels(&[self.value(a), self.value(b)]);
        self.push(y, Op::Concat(a, b))
    }

    /// Inverted dropout; surviving activations are scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.dropout_with_mask(x, mask)
    }

    /// Dropout with an explicit multiplier per element.
    pub fn dropout_with_mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let t = self.value(x);
        assert_eq!(mask.len(), t.len());
        let y = Tensor::new(t.dims(), t.data().iter().zip(&mask).map(|(v, m)| v * m).collect());
        self.push(y, Op::Dropout { x, mask })
    }

    pub fn mse(&mut self, x: Var, target: Tensor) -> Var {
        let t = self.value(x);
        assert_eq!(t.dims(), target.dims(), "loss target shape");
        let n = t.len() as f64;
        let l = t
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n;
        self.push(Tensor::new(&[1], vec![l]), Op::Mse { x, target })
    }

    /// Back-propagates from the scalar `loss`. Returns one gradient per
    /// parameter slot in `0..slots`; slots absent from the graph get `None`.
    pub fn backward(&self, loss: Var, slots: usize) -> Vec<Option<Tensor>> {
        assert_eq!(self.value(loss).len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(&[1], 1.0));
        let mut out: Vec<Option<Tensor>> = vec![None; slots];

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(slot) => match &mut out[*slot] {
                    Some(t) => t.add_assign(&g),
                    s @ None => *s = Some(g),
                },
                Op::Conv { x, w, b } => {
                    let (dx, dw, db) = conv2d_backward(self.value(*x), self.value(*w), &g);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *b, db);
                }
                Op::Linear { x, w, b } => {
                    let (wt, xv) = (self.value(*w), self.value(*x));
                    let (m, n) = (wt.dims()[0], wt.dims()[1]);
                    let mut dx = vec![0.0; n];
                    let mut dw = vec![0.0; m * n];
                    for r in 0..m {
                        let gr = g.data()[r];
                        for c in 0..n {
                            dx[c] += wt.data()[r * n + c] * gr;
                            dw[r * n + c] = gr * xv.data()[c];
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(xv.dims(), dx));
                    acc(&mut grads, *w, Tensor::new(wt.dims(), dw));
                    acc(&mut grads, *b, g.clone());
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let d = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(v, gg)| if *v > 0.0 { *gg } else { 0.0 });
                    acc(&mut grads, *x, Tensor::new(xv.dims(), d.collect()));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddChannel { x, v } => {
                    let (_, h, w) = g.chw();
                    let dv: Vec<f64> = g.data().chunks(h * w).map(|p| p.iter().sum()).collect();
                    let vdims = self.value(*v).dims().to_vec();
                    acc(&mut grads, *v, Tensor::new(&vdims, dv));
                    acc(&mut grads, *x, g);
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    mean,
                    rstd,
                } => {
                    let xv = self.value(*x);
                    let (c, h, w) = xv.chw();
                    let hw = h * w;
                    let per = c / groups * hw;
                    let gm = self.value(*gamma).data();
                    let mut dx = vec![0.0; xv.len()];
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for grp in 0..*groups {
                        let (m, r) = (mean[grp], rstd[grp]);
                        let range = grp * per..(grp + 1) * per;
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for i in range.clone() {
                            let ch = i / hw;
                            let xh = (xv.data()[i] - m) * r;
                            let gi = g.data()[i];
                            dg[ch] += gi * xh;
                            db[ch] += gi;
                            let d = gi * gm[ch];
                            sum_d += d;
                            sum_dx += d * xh;
                        }
                        let n = per as f64;
                        for i in range {
                            let xh = (xv.data()[i] - m) * r;
                            let d = g.data()[i] * gm[i / hw];
                            dx[i] = r / n * (n * d - sum_d - xh * sum_dx);
                        }
                    }
                    let (gd, bd) = (self.value(*gamma).dims().to_vec(), self.value(*beta).dims().to_vec());
                    acc(&mut grads, *x, Tensor::new(xv.dims(), dx));
                    acc(&mut grads, *gamma, Tensor::new(&gd, dg));
                    acc(&mut grads, *beta, Tensor::new(&bd, db));
                }
                Op::AvgPool(x) => {
                    let (c, h, w) = self.value(*x).chw();
                    let (h2, w2) = (h / 2, w / 2);
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                dx[(ch * h + y) * w + xx] = 0.25 * g.data()[(ch * h2 + y / 2) * w2 + xx / 2];
                            }
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(&[c, h, w], dx));
                }
                Op::Upsample(x) => {
                    let (c, h, w) = self.value(*x).chw();
                    let w2 = 2 * w;
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..2 * h {
                            for xx in 0..w2 {
                                dx[(ch * h + y / 2) * w + xx / 2] += g.data()[(ch * 2 * h + y) * w2 + xx];
                            }
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(&[c, h, w], dx));
                }
                Op::Concat(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (head, tail) = g.data().split_at(ta.len());
                    acc(&mut grads, *a, Tensor::new(ta.dims(), head.to_vec()));
                    acc(&mut grads, *b, Tensor::new(tb.dims(), tail.to_vec()));
                }
                Op::Dropout { x, mask } => {
                    let d = g.data().iter().zip(mask).map(|(gg, m)| gg * m).collect();
                    acc(&mut grads, *x, Tensor::new(g.dims(), d));
                }
                Op::Mse { x, target } => {
                    let xv = self.value(*x);
                    let s = 2.0 * g.data()[0] / xv.len() as f64;
                    let d = xv.data().iter().zip(target.data()).map(|(a, b)| s * (a - b)).collect();
                    acc(&mut grads, *x, Tensor::new(xv.dims(), d));
                }
            }
        }
        out
    }
}
