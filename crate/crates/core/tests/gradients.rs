use evolute_core::dataset::{Batch, ObsLayout};
use evolute_core::ebm::{sample_negatives, EbmModel, NegativeSamplerConfig};
use evolute_core::encoders::{ArchConfig, EncoderWidths};
use evolute_core::ffbc::{FfBcModel, Objective};
use evolute_core::nn::{Activation, Mlp, MlpGrads, Model};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn weighted_sum(mlp: &Mlp, x: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (mlp.predict(x.view()).unwrap() * g).sum()
}

/// Central differences over every parameter and every input of `mlp`.
fn check_mlp(widths: &[usize], act: Activation, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mlp = Mlp::init(widths, act, &mut rng).unwrap();
    let x = random(4, widths[0], &mut rng);
    let g = random(4, *widths.last().unwrap(), &mut rng);
    let (_, cache) = mlp.forward(x.view()).unwrap();
    let (grads, dx) = mlp.backward(&cache, g.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let mut worst: f64 = 0.0;
    for (si, slice) in analytic.iter().enumerate() {
        for (k, &a) in slice.iter().enumerate() {
            let orig = mlp.param_slices()[si][k];
            mlp.param_slices_mut()[si][k] = orig + H;
            let up = weighted_sum(&mlp, &x, &g);
            mlp.param_slices_mut()[si][k] = orig - H;
            let down = weighted_sum(&mlp, &x, &g);
            mlp.param_slices_mut()[si][k] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * H)));
        }
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut xp = x.clone();
            xp[[i, j]] += H;
            let mut xm = x.clone();
            xm[[i, j]] -= H;
            let fd = (weighted_sum(&mlp, &xp, &g) - weighted_sum(&mlp, &xm, &g)) / (2.0 * H);
            worst = worst.max(rel_err(dx[[i, j]], fd));
        }
    }
    assert!(worst < TOL, "{widths:?} {act:?}: worst relative error {worst}");
}

#[test]
fn mlp_gradients_small() {
    check_mlp(&[3, 5, 2], Activation::Identity, 1);
}

#[test]
fn mlp_gradients_deep_relu() {
    check_mlp(&[6, 8, 7, 5, 3], Activation::Relu, 2);
}

#[test]
fn mlp_gradients_sigmoid_output() {
    check_mlp(&[4, 9, 1], Activation::Sigmoid, 3);
}

#[test]
fn mlp_gradients_wide_single_layer() {
    check_mlp(&[10, 4], Activation::Identity, 4);
}

fn tiny_layout() -> ObsLayout {
    ObsLayout { n_rays: 3, grid_res: 2, arena_size: 100.0 }
}

fn tiny_arch() -> ArchConfig {
    ArchConfig { encoders: EncoderWidths { depth: vec![4], occupancy: vec![3], telemetry: vec![3] }, trunk: vec![6, 5] }
}

fn tiny_batch(rng: &mut ChaCha8Rng, n: usize) -> Batch {
    let layout = tiny_layout();
    Batch {
        observations: Array2::from_shape_fn((n, layout.feature_width()), |_| rng.random_range(-1.0..1.0)),
        continuous_targets: Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..1.0)),
        discrete_targets: Array2::from_shape_fn((n, 2), |_| if rng.random::<bool>() { 1.0 } else { 0.0 }),
    }
}

/// Central differences of a model-level loss over every parameter.
fn check_model<M: Model>(model: &mut M, loss: impl Fn(&M) -> f64, grads: &[MlpGrads]) -> f64 {
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.slices().concat()).collect();
    let n = analytic.len();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let nudge = |m: &mut M, d: f64| {
            let mut idx = k;
            for net in m.networks_mut() {
                for s in net.param_slices_mut() {
                    if idx < s.len() {
                        s[idx] += d;
                        return;
                    }
                    idx -= s.len();
                }
            }
        };
        nudge(model, H);
        let up = loss(model);
        nudge(model, -2.0 * H);
        let down = loss(model);
        nudge(model, H);
        worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * H)));
    }
    worst
}

#[test]
fn ffbc_joint_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = FfBcModel::init(tiny_layout(), &tiny_arch(), true, &mut rng).unwrap();
    let batch = tiny_batch(&mut rng, 5);
    let (_, grads) = model.loss_and_grads(&batch, Objective::Joint).unwrap();
    let worst = check_model(&mut model, |m| m.loss_and_grads(&batch, Objective::Joint).unwrap().0, &grads);
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn ebm_infonce_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = EbmModel::init(tiny_layout(), &tiny_arch(), &mut rng).unwrap();
    let batch = tiny_batch(&mut rng, 4);
    let sampler = NegativeSamplerConfig { n_fake: 5, ..Default::default() };
    let negatives = sample_negatives(&sampler, 4, &mut rng);
    let (_, grads) = model.loss_and_grads(&batch, &negatives).unwrap();
    let worst = check_model(&mut model, |m| m.loss_and_grads(&batch, &negatives).unwrap().0, &grads);
    assert!(worst < TOL, "worst relative error {worst}");
}
