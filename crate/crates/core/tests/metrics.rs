use evolute_core::dataset::{random_observation, BatchIter, ObsLayout, Sample};
use evolute_core::metrics::{
    cross_corr_cells, kde_2d, kl_div_cells, similarity_cells, Bandwidth, Extent, KL_EPS,
};
use evolute_core::sim::{ActionPair, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn grid(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1.0f64, n).prop_map(normalized)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn similarity_and_correlation_are_bounded_and_symmetric(p in grid(64), q in grid(64)) {
        let s = similarity_cells(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert_eq!(s, similarity_cells(&q, &p).unwrap());
        let c = cross_corr_cells(&p, &q).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((c - cross_corr_cells(&q, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_identities(p in grid(256)) {
        prop_assert!(kl_div_cells(&p, &p, KL_EPS).unwrap().abs() <= 1e-3);
        prop_assert!((cross_corr_cells(&p, &p).unwrap() - 1.0).abs() <= 1e-6);
        prop_assert!((similarity_cells(&p, &p).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn kde_is_normalized_and_scale_covariant(
        pts in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 1..60),
    ) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
        let g = kde_2d(&pts, Extent::square(100.0), 16, Bandwidth::Scott).unwrap();
        prop_assert!((g.cells.sum() - 1.0).abs() < 1e-9);
        prop_assert!(g.cells.iter().all(|&c| c >= 0.0));
        let doubled: Vec<[f64; 2]> = pts.iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect();
        let g2 = kde_2d(&doubled, Extent::square(200.0), 16, Bandwidth::Scott).unwrap();
        for (a, b) in g.cells.iter().zip(g2.cells.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batches_partition_the_samples(n in 1usize..300, bs in 1usize..64, seed in any::<u64>()) {
        let cfg = SimConfig { n_rays: 4, grid_res: 4, ..SimConfig::default() };
        let layout = ObsLayout::from_sim(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Sample> = (0..n as u64)
            .map(|tick| Sample { tick, observation: random_observation(&layout, &mut rng), action: ActionPair::NEUTRAL })
            .collect();
        let it = BatchIter::new(samples.iter(), layout, bs, seed).unwrap();
        prop_assert_eq!(it.n_batches(), n.div_ceil(bs));
        let sizes: Vec<usize> = it.sample_batches().map(|b| b.len()).collect();
        prop_assert!(sizes[..sizes.len() - 1].iter().all(|&s| s == bs));
        let mut ticks: Vec<u64> = it.sample_batches().flatten().map(|s| s.tick).collect();
        ticks.sort_unstable();
        prop_assert_eq!(ticks, (0..n as u64).collect::<Vec<_>>());
        let rows: usize = it.map(|b| b.unwrap().size()).sum();
        prop_assert_eq!(rows, n);
    }
}

#[test]
fn kl_is_asymmetric() {
    let p = [0.9, 0.1];
    let q = [0.5, 0.5];
    let pq = kl_div_cells(&p, &q, KL_EPS).unwrap();
    let qp = kl_div_cells(&q, &p, KL_EPS).unwrap();
    assert!((pq - qp).abs() > 0.1, "{pq} vs {qp}");
}

fn std_normal_cdf(z: f64) -> f64 {
    // Simpson's rule on the density from 0 to |z|.
    let n = 2000;
    let h = z.abs() / n as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(0.0) + f(z.abs());
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let half = s * h / 3.0;
    0.5 + half * z.signum()
}

#[test]
fn uniform_points_give_flat_interior_density() {
    let size = 200.0;
    let res = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pts: Vec<[f64; 2]> = (0..20_000).map(|_| [rng.random_range(0.0..size), rng.random_range(0.0..size)]).collect();
    let g = kde_2d(&pts, Extent::square(size), res, Bandwidth::Scott).unwrap();
    let cell = size / res as f64;
    let margin = (3.0 * g.bandwidth / cell).ceil() as usize;
    let interior: Vec<f64> = (margin..res - margin)
        .flat_map(|r| (margin..res - margin).map(move |c| (r, c)))
        .map(|(r, c)| g.cells[[r, c]])
        .collect();
    assert!(!interior.is_empty());
    let max = interior.iter().cloned().fold(f64::MIN, f64::max);
    let min = interior.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min < 2.0, "interior ratio {}", max / min);

    // Edge cells lose the kernel mass that falls outside the arena.
    let mean_interior = interior.iter().sum::<f64>() / interior.len() as f64;
    let edge: Vec<f64> = (margin..res - margin).map(|c| g.cells[[0, c]]).collect();
    let mean_edge = edge.iter().sum::<f64>() / edge.len() as f64;
    let expected = std_normal_cdf(0.5 * cell / g.bandwidth);
    assert!((mean_edge / mean_interior - expected).abs() < 0.05, "{} vs {expected}", mean_edge / mean_interior);
}
