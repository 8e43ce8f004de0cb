use evolute_core::dataset::ObsLayout;
use evolute_core::expert::{generate_dataset, run_episode, Expert, ExpertConfig};
use evolute_core::metrics::{play_stats, EpisodeStats};
use evolute_core::sim::{self, consts::V_MAX, ActionPair, EndReason, Obstacle, SimConfig};
use proptest::prelude::*;

fn open_arena() -> SimConfig {
    SimConfig { n_obstacles: 0, n_enemies: 0, ..SimConfig::default() }
}

#[test]
fn full_throttle_displacement_matches_closed_form() {
    let cfg = open_arena();
    let mut s = sim::reset(&cfg).unwrap();
    let start = s.player.position;
    let full = ActionPair::new(1.0, 0.5, false, false);
    for _ in 0..20 {
        s = sim::step(&s, &full).unwrap().0;
    }
    let dt = cfg.dt();
    let q: f64 = 0.975;
    let expected = dt * 12.0 * (20.0 - q * (1.0 - q.powi(20)) / (1.0 - q));
    let moved = s.player.position.dist(start);
    assert!((moved - expected).abs() < 1e-9, "{moved} vs {expected}");
}

#[test]
fn expert_survives_and_scores() {
    let cfg = SimConfig { episode_length: 60.0, ..SimConfig::default() };
    let episodes: Vec<EpisodeStats> = (0..20)
        .map(|ep| {
            let (s, e) = evolute_core::expert::episode_seeds(5, ep);
            let (_, events) = run_episode(&cfg, &ExpertConfig::default(), ep, s, e).unwrap();
            EpisodeStats::from_events(&events, cfg.episode_ticks())
        })
        .collect();
    assert!(episodes.iter().all(|e| e.reason == EndReason::Timeout));
    let stats = play_stats(&episodes).unwrap();
    assert!(stats.pkr >= 0.9, "expert pkr {}", stats.pkr);
}

#[test]
fn full_episode_time_alive_is_one() {
    let (s, e) = evolute_core::expert::episode_seeds(0, 0);
    let cfg = SimConfig::default();
    let (traj, events) = run_episode(&cfg, &ExpertConfig::default(), 0, s, e).unwrap();
    assert_eq!(traj.samples.len() as u64, cfg.episode_ticks());
    assert_eq!(EpisodeStats::from_events(&events, cfg.episode_ticks()).time_alive(), 1.0);
}

#[test]
fn symmetric_obstacle_steering_is_bimodal() {
    let mut decisions = 0usize;
    let mut near_straight = 0usize;
    for seed in 0..40u64 {
        let mut s = sim::reset(&open_arena()).unwrap();
        let mut expert = Expert::new(ExpertConfig::default(), seed);
        let dir = (expert.current_waypoint(&s) - s.player.position).normalized();
        s.player.heading = dir;
        s.player.speed = 10.0;
        s.obstacles.push(Obstacle { center: s.player.position + dir * 18.0, radius: 4.0 });
        let mut first = true;
        for _ in 0..40 {
            let a = expert.act(&s);
            if expert.commitment().is_some() && first {
                first = false;
                decisions += 1;
                if (a.steering() - 0.5).abs() < 0.05 {
                    near_straight += 1;
                }
            }
            s = sim::step(&s, &a).unwrap().0;
        }
        assert!(s.player.alive);
    }
    assert_eq!(decisions, 40);
    assert!((near_straight as f64) < 0.1 * decisions as f64);
}

#[test]
fn expert_data_is_valid_for_layout() {
    let cfg = SimConfig { episode_length: 10.0, ..SimConfig::default() };
    let trajs = generate_dataset(3, &cfg, &ExpertConfig::default(), 3).unwrap();
    let layout = ObsLayout::from_sim(&cfg);
    for t in &trajs {
        assert_eq!(t.samples.len(), 200);
        for s in &t.samples {
            layout.check(&s.observation).unwrap();
            assert!(s.action.is_valid());
        }
    }
}

fn action() -> impl Strategy<Value = ActionPair> {
    (0.0..=1.0f64, 0.0..=1.0f64, any::<bool>(), any::<bool>())
        .prop_map(|(t, s, p, q)| ActionPair::new(t, s, p, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_driving_respects_invariants(seed in 0u64..1000, actions in prop::collection::vec(action(), 1..300)) {
        let cfg = SimConfig { seed, ..SimConfig::default() };
        let mut s = sim::reset(&cfg).unwrap();
        let layout = ObsLayout::from_sim(&cfg);
        let mut kill_events = 0u32;
        let mut trace = Vec::new();
        for a in &actions {
            if s.is_over() {
                break;
            }
            let (next, ev) = sim::step(&s, a).unwrap();
            kill_events += ev.kills;
            let p = next.player.position;
            prop_assert!(p.x >= 0.0 && p.x <= cfg.arena_size && p.y >= 0.0 && p.y <= cfg.arena_size);
            prop_assert!((0.0..=V_MAX).contains(&next.player.speed));
            prop_assert_eq!(next.kills_scored, kill_events);
            let obs = sim::observe(&next);
            layout.check(&obs).unwrap();
            prop_assert!(obs.depth_rays.iter().chain(&obs.occupancy).all(|v| (0.0..=1.0).contains(v)));
            trace.push((next.clone(), ev));
            s = next;
        }
        // Same config and actions replay bit-identically.
        let mut r = sim::reset(&cfg).unwrap();
        for (a, (state, ev)) in actions.iter().zip(&trace) {
            let (next, e2) = sim::step(&r, a).unwrap();
            prop_assert_eq!(&next, state);
            prop_assert_eq!(&e2, ev);
            r = next;
        }
    }
}
