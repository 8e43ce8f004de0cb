use evolute_core::dataset::{batch_iter, bimodal_dataset, random_observation, Dataset, ObsLayout, Sample, Source, Trajectory, TrajectoryMeta};
use evolute_core::ebm::{infer_grid, EbmModel, InferenceConfig, InferenceMode, NegativeSamplerConfig};
use evolute_core::encoders::ArchConfig;
use evolute_core::expert::{generate_dataset, ExpertConfig};
use evolute_core::ffbc::FfBcModel;
use evolute_core::nn::AdamConfig;
use evolute_core::pipeline::{train_ebm, train_ff};
use evolute_core::policy::{rollout, PolicyBundle};
use evolute_core::sim::{ActionPair, SimConfig};
use evolute_core::training::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_sim() -> SimConfig {
    SimConfig { n_rays: 8, grid_res: 4, ..SimConfig::default() }
}

fn small_arch() -> ArchConfig {
    let mut a = ArchConfig::default();
    a.encoders.depth = vec![16, 8];
    a.encoders.occupancy = vec![16, 8];
    a.encoders.telemetry = vec![16, 8];
    a.trunk = vec![64, 32];
    a
}

fn one_trajectory(samples: Vec<Sample>) -> Vec<Trajectory> {
    let meta = TrajectoryMeta { config_hash: 0, source: Source::Scripted, seed: 0 };
    vec![Trajectory { episode_id: 0, samples, meta }]
}

/// Random observations labelled by `label`.
fn labelled(n: usize, seed: u64, label: impl Fn(&evolute_core::Observation) -> ActionPair) -> Vec<Trajectory> {
    let layout = ObsLayout::from_sim(&small_sim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n as u64)
        .map(|tick| {
            let observation = random_observation(&layout, &mut rng);
            let action = label(&observation);
            Sample { tick, observation, action }
        })
        .collect();
    one_trajectory(samples)
}

fn fit_ff(trajs: &[Trajectory], epochs: usize, seed: u64, discrete_only: bool) -> (FfBcModel, f64) {
    let layout = ObsLayout::from_sim(&small_sim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = FfBcModel::init(layout, &small_arch(), true, &mut rng).unwrap();
    let mut opt = model.new_optimizer(AdamConfig::default());
    let mut loss = f64::NAN;
    for epoch in 0..epochs {
        let batches = batch_iter(trajs, layout, 64, seed + epoch as u64).unwrap();
        loss = if discrete_only {
            model.train_discrete_epoch(batches, &mut opt).unwrap()
        } else {
            model.train_continuous_mse_epoch(batches, &mut opt).unwrap()
        };
    }
    (model, loss)
}

#[test]
fn separable_threshold_is_learned() {
    // Fire primary iff speed (telemetry 4) is above half of max.
    let trajs = labelled(2000, 1, |o| ActionPair::new(0.5, 0.5, o.telemetry[4] > 6.0, false));
    let (_, loss) = fit_ff(&trajs, 20, 3, true);
    assert!(loss < 0.05, "final bce {loss}");
}

#[test]
fn all_zero_targets_drive_probabilities_down() {
    let trajs = labelled(1000, 2, |_| ActionPair::new(0.5, 0.5, false, false));
    let (model, _) = fit_ff(&trajs, 20, 4, true);
    let mean_p: f64 = trajs[0]
        .samples
        .iter()
        .map(|s| {
            let p = model.predict(&s.observation).unwrap().discrete;
            (p[0] + p[1]) / 2.0
        })
        .sum::<f64>()
        / trajs[0].samples.len() as f64;
    assert!(mean_p < 0.05, "mean p {mean_p}");
}

#[test]
fn ff_training_is_deterministic() {
    let trajs = labelled(500, 5, |o| ActionPair::new(0.5, 0.5, o.telemetry[4] > 6.0, false));
    let a = fit_ff(&trajs, 3, 7, true);
    let b = fit_ff(&trajs, 3, 7, true);
    assert_eq!(a.1, b.1);
    assert_eq!(a.0, b.0);
}

#[test]
fn constant_target_is_regressed() {
    let trajs = labelled(2000, 6, |_| ActionPair::new(0.7, 0.3, false, false));
    let (model, _) = fit_ff(&trajs, 60, 8, false);
    let c = model.predict(&trajs[0].samples[0].observation).unwrap().continuous.unwrap();
    assert!((c[0] - 0.7).abs() < 0.02 && (c[1] - 0.3).abs() < 0.02, "{c:?}");
}

#[test]
fn mse_head_averages_bimodal_targets() {
    let data = bimodal_dataset(&small_sim(), 2000, 9).unwrap();
    let (model, _) = fit_ff(&data.trajectories, 100, 10, false);
    let held_out = bimodal_dataset(&small_sim(), 100, 99).unwrap();
    for s in held_out.samples() {
        let steer = model.predict(&s.observation).unwrap().continuous.unwrap()[1];
        assert!((steer - 0.5).abs() < 0.05, "steer {steer}");
    }
}

fn fit_ebm(data: &Dataset, arch: &ArchConfig, epochs: usize, seed: u64) -> (EbmModel, f64, f64) {
    let cfg = TrainConfig { seed, batch_size: 64, ..TrainConfig::default() };
    let t = train_ebm(&data.trajectories, &[], data.layout(), arch, &NegativeSamplerConfig::default(), &cfg, epochs)
        .unwrap();
    (t.model, t.initial_loss, t.log.last().unwrap().train_loss)
}

#[test]
fn untrained_energy_loss_is_near_uniform() {
    let data = bimodal_dataset(&small_sim(), 200, 11).unwrap();
    let (_, initial, _) = fit_ebm(&data, &small_arch(), 1, 12);
    assert!((initial - 65f64.ln()).abs() < 0.3, "initial {initial}");
}

#[test]
fn energy_model_fits_bimodal_and_picks_a_mode() {
    let data = bimodal_dataset(&small_sim(), 2000, 13).unwrap();
    let (model, _, last) = fit_ebm(&data, &ArchConfig::default(), 30, 14);
    assert!(last < 1.0, "loss after 30 epochs {last}");
    let held_out = bimodal_dataset(&small_sim(), 50, 15).unwrap();
    let mut near_mode = 0;
    for s in held_out.samples().step_by(2) {
        let (a, _) = infer_grid(&mut model.surface(&s.observation).unwrap(), 33).unwrap();
        if (a[1] - 0.2).abs().min((a[1] - 0.8).abs()) < 0.07 {
            near_mode += 1;
        }
    }
    assert!(near_mode >= 48, "{near_mode}/50 near a mode");
}

#[test]
fn ebm_training_is_deterministic() {
    let data = bimodal_dataset(&small_sim(), 100, 16).unwrap();
    let a = fit_ebm(&data, &small_arch(), 2, 17);
    let b = fit_ebm(&data, &small_arch(), 2, 17);
    assert_eq!(a.2, b.2);
    assert_eq!(a.0, b.0);
}

fn trained_bundles() -> (FfBcModel, EbmModel, SimConfig) {
    let sim = SimConfig { episode_length: 10.0, ..small_sim() };
    let trajs = generate_dataset(2, &sim, &ExpertConfig::default(), 21).unwrap();
    let layout = ObsLayout::from_sim(&sim);
    let cfg = TrainConfig { batch_size: 64, ..TrainConfig::default() };
    let ff = train_ff(&trajs, &[], layout, &small_arch(), &cfg, 2).unwrap().model;
    let ebm = train_ebm(&trajs, &[], layout, &small_arch(), &NegativeSamplerConfig::default(), &cfg, 2).unwrap().model;
    (ff, ebm, sim)
}

#[test]
fn evolute_grid_action_is_the_grid_argmin() {
    let (ff, ebm, sim) = trained_bundles();
    let bundle = PolicyBundle::evolute(ff.clone(), ebm.clone(), InferenceConfig::default()).unwrap();
    let layout = ObsLayout::from_sim(&sim);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let obs = random_observation(&layout, &mut rng);
        let a = bundle.act(&obs, &mut rng).unwrap();
        let (g, _) = infer_grid(&mut ebm.surface(&obs).unwrap(), 33).unwrap();
        assert_eq!(a.continuous, [g[0] as f32, g[1] as f32]);
        let p = ff.predict(&obs).unwrap().discrete;
        assert_eq!(a.discrete, [p[0] >= 0.5, p[1] >= 0.5]);
    }
}

#[test]
fn baseline_clips_regression_output() {
    let (mut ff, _, sim) = trained_bundles();
    let head = ff.continuous_head.as_mut().unwrap();
    head.zero_output_layer();
    head.layers_mut().last_mut().unwrap().bias[0] = 1.3;
    head.layers_mut().last_mut().unwrap().bias[1] = -0.2;
    let bundle = PolicyBundle::baseline(ff).unwrap();
    let obs = random_observation(&ObsLayout::from_sim(&sim), &mut ChaCha8Rng::seed_from_u64(1));
    let a = bundle.act(&obs, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a.continuous, [1.0, 0.0]);
}

#[test]
fn rollouts_are_reproducible_and_bounded() {
    let (ff, ebm, sim) = trained_bundles();
    let nograd = InferenceConfig { mode: InferenceMode::NoGrad, ..InferenceConfig::default() };
    let bundle = PolicyBundle::evolute(ff, ebm, nograd).unwrap();
    let a = rollout(&bundle, &sim, 0, 5).unwrap();
    let b = rollout(&bundle, &sim, 0, 5).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert!(a.trajectory.samples.len() as u64 <= sim.episode_ticks());
    assert_eq!(a.trajectory.meta.source, Source::Policy);
}

#[test]
fn expert_bundle_survives_default_arena() {
    let bundle = PolicyBundle::expert(ExpertConfig::default());
    let sim = SimConfig::default();
    let r = rollout(&bundle, &sim, 0, 3).unwrap();
    assert_eq!(r.trajectory.samples.len() as u64, sim.episode_ticks());
    assert!(!r.events.iter().any(|e| e.reason == evolute_core::sim::EndReason::FatalCrash));
}
