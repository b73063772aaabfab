use grain_surrogate::{ddpm_sample, noise_schedule, DiffusionConfig, GaussianEps};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn closed_form_noise_model_recovers_gaussian_moments() {
    let schedule = noise_schedule(&DiffusionConfig::default()).unwrap();
    for (mu, sigma) in [(0.5, 0.3), (-0.8, 0.4), (1.0, 0.5)] {
        let model = GaussianEps {
            mu,
            sigma,
            schedule: schedule.clone(),
        };
        let draws: Vec<f64> = (0..500)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(k);
                ddpm_sample(&model, &[1], &schedule, &mut rng).unwrap().data()[0]
            })
            .collect();
        let (m, s) = moments(&draws);
        assert!((m - mu).abs() <= 0.1 * mu.abs(), "mean {m} vs {mu}");
        assert!((s - sigma).abs() <= 0.1 * sigma, "std {s} vs {sigma}");
    }
}

#[test]
fn sampling_is_seeded() {
    let schedule = noise_schedule(&DiffusionConfig::default()).unwrap();
    let model = GaussianEps {
        mu: 0.0,
        sigma: 1.0,
        schedule: schedule.clone(),
    };
    let run = |seed| ddpm_sample(&model, &[1, 4, 4], &schedule, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

mod schedule_props {
    use grain_surrogate::{noise_schedule, q_sample, BetaSchedule, DiffusionConfig, Sampler, Tensor};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn alphas_bar_fall_strictly_inside_the_unit_interval(
            start in 1e-5..0.01f64, span in 1e-4..0.5f64, steps in 2usize..300,
        ) {
            let cfg = DiffusionConfig {
                num_steps: steps,
                beta_start: start,
                beta_end: start + span,
                schedule: BetaSchedule::Linear,
                sampler: Sampler::Ddpm,
            };
            let s = noise_schedule(&cfg).unwrap();
            prop_assert_eq!(s.alphas_bar.len(), steps);
            prop_assert!(s.alphas_bar[0] < 1.0);
            for w in s.alphas_bar.windows(2) {
                prop_assert!(w[1] < w[0] && w[1] > 0.0);
            }
        }

        #[test]
        fn noiseless_forward_process_only_scales(x in proptest::collection::vec(-2.0..2.0f64, 1..16), t in 0usize..150) {
            let s = noise_schedule(&DiffusionConfig::default()).unwrap();
            let x0 = Tensor::new(&[x.len()], x.clone());
            let out = q_sample(&x0, t, &Tensor::zeros(&[x.len()]), &s);
            let a = s.alphas_bar[t].sqrt();
            for (o, v) in out.data().iter().zip(&x) {
                prop_assert_eq!(*o, a * v);
            }
        }
    }
}
