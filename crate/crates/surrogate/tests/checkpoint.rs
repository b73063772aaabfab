use grain_core::encoding::{render_action, render_depth};
use grain_core::raster::Frame;
use grain_core::sim::Embodiment;
use grain_core::terrain::{Action, Heightfield, RobotGeometry, RobotState};
use grain_surrogate::{DiffusionConfig, LearnedPredictor, ParamStore, Predictor, PredictorKind, UNet, UNetConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(cfg: UNetConfig) -> UNetConfig {
    UNetConfig {
        channel_multipliers: vec![1, 2],
        res_blocks_per_level: 1,
        ..cfg.with_base(2)
    }
}

#[test]
fn unet_weights_survive_a_checkpoint() {
    let net = UNet::new(small(UNetConfig::env_reference()));
    let store = net.init(&mut ChaCha8Rng::seed_from_u64(1));
    let mut buf = Vec::new();
    store.write(&net.config().echo(), &mut buf).unwrap();
    let (echo, back) = ParamStore::read(&mut buf.as_slice()).unwrap();
    assert_eq!(echo, net.config().echo());
    assert_eq!(back, store);
    net.check_store(&back).unwrap();
    let other = UNet::new(small(UNetConfig::robot_reference()));
    assert!(other.check_store(&back).is_err());
}

#[test]
fn reference_parameter_counts_without_allocation() {
    let fe = UNet::new(UNetConfig::env_reference());
    let fr = UNet::new(UNetConfig::robot_reference());
    // the deeper environment net dwarfs the robot net
    assert!(fe.param_count() > 3 * fr.param_count());
    assert!(fr.param_count() > 1_000_000);
}

#[test]
fn learned_predictor_is_seeded_per_query() {
    let geom = RobotGeometry::default();
    let hf = Heightfield::uniform(16, 16, 0.9375, 0.35, 1.5).unwrap();
    let robot = RobotState::new(7.5, 7.5, 0.0);
    let img = render_depth(&hf, Some(&robot), &[], &geom);
    let act = render_action(&Frame::of(&hf), &robot, &geom, Action::Af);
    let env = UNet::new(small(UNetConfig::env_reference()));
    let rob = UNet::new(small(UNetConfig::robot_reference()));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (pe, pr) = (env.init(&mut rng), rob.init(&mut rng));
    let diff = DiffusionConfig {
        num_steps: 10,
        ..DiffusionConfig::default()
    };
    let p = LearnedPredictor::new(
        (env.clone(), pe.clone()),
        Some((rob.clone(), pr.clone())),
        &diff,
        5,
        Embodiment::Robot,
    )
    .unwrap();
    assert_eq!(p.kind(), PredictorKind::Learned);
    let a = p.predict_env(&img, &act).unwrap();
    assert_eq!(a, p.predict_env(&img, &act).unwrap());
    assert!(a.values().iter().all(|v| (-2.0..=2.0).contains(v)));
    // zero-initialised output layer
    assert!(p.predict_robot(&img, &act).unwrap().is_zero());
    let q = LearnedPredictor::new((env, pe), Some((rob, pr)), &diff, 6, Embodiment::Robot).unwrap();
    assert_ne!(a, q.predict_env(&img, &act).unwrap());
}
