use grain_surrogate::gradcheck::{micro_check, rel_error, FD_STEP};
use grain_surrogate::graph::{Graph, Var};
use grain_surrogate::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Checks d loss / d input for every input of a one-op graph. Inputs enter as
/// parameter slots so the tape returns their gradients.
fn check_op(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor], grads: bool| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().enumerate().map(|(i, t)| g.param(i, t.clone())).collect();
        let y = build(&mut g, &vars);
        let target = Tensor::zeros(g.value(y).dims()).map(|_| 0.3);
        let l = g.mse(y, target);
        let v = g.value(l).data()[0];
        (v, if grads { g.backward(l, xs.len()) } else { Vec::new() })
    };
    let (_, analytic) = eval(&inputs, true);
    let mut worst = 0.0f64;
    let mut probe = inputs.clone();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            probe[i].data_mut()[k] = orig + FD_STEP;
            let up = eval(&probe, false).0;
            probe[i].data_mut()[k] = orig - FD_STEP;
            let down = eval(&probe, false).0;
            probe[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[i].as_ref().map_or(0.0, |g| g.data()[k]);
            worst = worst.max(rel_error(a, numeric));
        }
    }
    worst
}

fn rnd(dims: &[usize], seed: u64) -> Tensor {
    Tensor::randn(dims, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn conv3x3() {
    let e = check_op(vec![rnd(&[2, 4, 5], 1), rnd(&[3, 2, 3, 3], 2), rnd(&[3], 3)], |g, v| {
        g.conv(v[0], v[1], v[2])
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn conv1x1() {
    let e = check_op(vec![rnd(&[3, 4, 4], 4), rnd(&[2, 3, 1, 1], 5), rnd(&[2], 6)], |g, v| {
        g.conv(v[0], v[1], v[2])
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn linear() {
    let e = check_op(vec![rnd(&[5], 7), rnd(&[3, 5], 8), rnd(&[3], 9)], |g, v| {
        g.linear(v[0], v[1], v[2])
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn relu() {
    // keep values away from the kink
    let x = rnd(&[2, 3, 3], 10).map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
    let e = check_op(vec![x], |g, v| g.relu(v[0]));
    assert!(e < 1e-3, "{e}");
}

#[test]
fn add_and_channel_bias() {
    let e = check_op(vec![rnd(&[2, 3, 3], 11), rnd(&[2, 3, 3], 12), rnd(&[2], 13)], |g, v| {
        let s = g.add(v[0], v[1]);
        g.add_channel(s, v[2])
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn pool_upsample_concat() {
    let e = check_op(vec![rnd(&[2, 4, 4], 14), rnd(&[1, 4, 4], 15)], |g, v| {
        let p = g.avg_pool(v[0]);
        let u = g.upsample(p);
        g.concat(u, v[1])
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn group_norm() {
    let e = check_op(vec![rnd(&[4, 3, 3], 17), rnd(&[4], 18), rnd(&[4], 19)], |g, v| {
        g.group_norm(v[0], v[1], v[2], 2)
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn dropout_with_fixed_mask() {
    let mask: Vec<f64> = (0..18).map(|i| if i % 3 == 0 { 0.0 } else { 1.5 }).collect();
    let e = check_op(vec![rnd(&[2, 3, 3], 16)], move |g, v| {
        g.dropout_with_mask(v[0], mask.clone())
    });
    assert!(e < 1e-3, "{e}");
}

#[test]
fn micro_unet_with_time_embedding() {
    let gc = micro_check(5, true, 1).unwrap();
    assert!(gc.max_rel_error < 1e-3, "{gc:?}");
    assert!(gc.checked > 500);
}

#[test]
fn micro_unet_without_time_embedding() {
    let gc = micro_check(4, false, 2).unwrap();
    assert!(gc.max_rel_error < 1e-3, "{gc:?}");
}
