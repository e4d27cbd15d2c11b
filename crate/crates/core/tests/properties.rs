use driftnav::control::*;
use driftnav::eval::compute_report;
use driftnav::lidar::*;
use driftnav::mdp::training::teleport;
use driftnav::mdp::*;
use driftnav::odometry::*;
use driftnav::ppo::*;
use driftnav::scene::*;
use driftnav::seed;
use proptest::prelude::*;
use rand::Rng;

fn no_noise() -> LidarConfig {
    LidarConfig {
        noise_sigma: 0.0,
        ..Default::default()
    }
}

fn slot() -> impl Strategy<Value = TrafficSlot> {
    prop_oneof![
        Just(TrafficSlot::default()),
        (-20.0..25.0f64, -7.0..7.0f64, 0.0..8.0f64).prop_map(|(x, y, v)| TrafficSlot::vehicle(x, y, v)),
    ]
}

fn state() -> impl Strategy<Value = StateVector> {
    (-7.4..7.4f64, -1.0..=1.0f64, slot(), slot()).prop_map(|(y_e, y_c_norm, a, b)| StateVector {
        x_e: 0.0,
        y_e,
        y_c_norm,
        edge_l: -7.5,
        edge_r: 7.5,
        traffic: vec![a, b],
    })
}

fn action() -> impl Strategy<Value = Action> {
    (0..N_ACTIONS).prop_map(|i| Action::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn reward_decomposes(s in state(), a in action()) {
        let cfg = RewardConfig::default();
        let r = reward(&s, a, &teleport(&s, a), &cfg);
        let want = if r.terminal() { -cfg.terminal_penalty } else { r.g + if r.p { 0.0 } else { r.f } + r.t };
        prop_assert_eq!(r.total, want);
    }

    #[test]
    fn feature_term_sign_and_gates(s in state(), a in action()) {
        let cfg = RewardConfig::default();
        let lon = Action::from_parts(a.a_x(), 0.0).unwrap();
        let first = feature_reward(&s, lon, &cfg);
        if s.y_c_norm != 0.0 && s.y_e_norm() != 0.0 {
            prop_assert_eq!(first.signum(), (s.y_c_norm * s.y_e_norm()).signum());
        }
        let zero = StateVector { y_c_norm: 0.0, ..s.clone() };
        prop_assert_eq!(feature_reward(&zero, lon, &cfg), 0.0);
        let one = StateVector { y_c_norm: -1.0, ..s.clone() };
        prop_assert_eq!(feature_reward(&one, a, &cfg), feature_reward(&one, lon, &cfg));
    }

    #[test]
    fn far_traffic_does_not_move_t(s in state(), a in action(), dy in -3.0..3.0f64) {
        let cfg = RewardConfig::default();
        let next = teleport(&s, a);
        let (t, flags) = traffic_reward(&s, a, &next, &cfg);
        let mut s2 = s.clone();
        for (k, f) in flags.iter().enumerate() {
            if s.traffic[k].present && !f {
                s2.traffic[k].x += 40.0;
                s2.traffic[k].y = (s2.traffic[k].y + dy).clamp(-7.0, 7.0);
            }
        }
        let (t2, _) = traffic_reward(&s2, a, &teleport(&s2, a), &cfg);
        prop_assert_eq!(t, t2);
    }

    #[test]
    fn training_episodes_stop_at_ten(seed in any::<u64>()) {
        let mut rng = seed::rng(seed, 0);
        let s0 = sample_initial_state(&mut rng, &SamplerBounds::default());
        let mut env = TrainingEnv::new(s0, RewardConfig::default());
        while !env.is_done() {
            env.step(Action::from_index(rng.random_range(0..N_ACTIONS)).unwrap()).unwrap();
        }
        prop_assert!(env.steps() <= EPISODE_STEPS);
        prop_assert!(env.step(Action::from_index(0).unwrap()).is_err());
    }

    #[test]
    fn gae_lambda_zero_is_td_error(
        rows in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, any::<bool>()), 1..30),
        last in -5.0..5.0f64,
        gamma in 0.0..1.0f64,
    ) {
        let n = rows.len();
        let buf = RolloutBuffer {
            states: vec![vec![]; n],
            actions: vec![0; n],
            log_probs: vec![0.0; n],
            rewards: rows.iter().map(|r| r.0).collect(),
            values: rows.iter().map(|r| r.1).collect(),
            dones: rows.iter().map(|r| r.2).collect(),
            last_value: last,
            ..Default::default()
        };
        let (a, ret) = compute_gae(&buf, gamma, 0.0);
        for t in 0..n {
            let next_v = if t + 1 < n { buf.values[t + 1] } else { last };
            let live = if buf.dones[t] { 0.0 } else { 1.0 };
            prop_assert_eq!(a[t], buf.rewards[t] + gamma * next_v * live - buf.values[t]);
            prop_assert_eq!(ret[t], a[t] + buf.values[t]);
        }
        let (a1, _) = compute_gae(&buf, gamma, 1.0);
        let mut g = last;
        for t in (0..n).rev() {
            g = buf.rewards[t] + gamma * if buf.dones[t] { 0.0 } else { g };
            prop_assert!((a1[t] - (g - buf.values[t])).abs() < 1e-10 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn normalized_advantages_are_standard(v in prop::collection::vec(-100.0..100.0f64, 2..200)) {
        prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-6));
        let mut a = v.clone();
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-6);
        prop_assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), s in state()) {
        let ac = ActorCritic::new(StateVector::width(2), &[16, 16], seed);
        let (p, v) = ac.forward(&s).unwrap();
        prop_assert_eq!(ac.forward(&s).unwrap(), (p.clone(), v));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn traffic_advance_composes(a in 0.01..20.0f64, b in 0.01..20.0f64, x in -50.0..150.0f64, v in 0.0..10.0f64) {
        let s = TrafficState {
            road_length: 150.0,
            tracks: vec![TrafficTrack {
                id: 1,
                start: Pose2D::new(x, 3.0, 0.0),
                speed: v,
                half_extent: 1.0,
                elapsed: 0.0,
                present: x <= 150.0,
            }],
        };
        prop_assert_eq!(advance_traffic(&s, a + b), advance_traffic(&advance_traffic(&s, a), b));
    }

    #[test]
    fn rasterize_ignores_direction(
        pts in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 2..6),
        density in 0.5..20.0f64,
    ) {
        let poly: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let mut rev = poly.clone();
        rev.reverse();
        let sorted = |poly: Vec<[f64; 2]>| {
            let mut v = rasterize_regions(&[FeatureRegion { polyline: poly, point_density: density }]);
            v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
            v
        };
        let (a, b) = (sorted(poly), sorted(rev));
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn closer_segment_never_loses_hits(near in 3.0..20.0f64, gap in 0.5..20.0f64, len in 1.0..8.0f64) {
        let count = |d: f64| {
            let cloud = FeatureCloud::new(rasterize_regions(&[FeatureRegion {
                polyline: vec![[d, -len / 2.0], [d, len / 2.0]],
                point_density: 40.0,
            }]));
            cast_scan(WorldView { features: &cloud, traffic: &[] }, Pose2D::identity(), &no_noise(), 0, 0).hit_count()
        };
        prop_assert!(count(near) >= count(near + gap));
    }

    #[test]
    fn spline_hits_knots_with_c2_joins(ys in prop::collection::vec(-5.0..5.0f64, 3..10), dx in 1.0..8.0f64) {
        let pts: Vec<Point> = ys.iter().enumerate().map(|(i, &y)| Point::new(i as f64 * dx, y)).collect();
        let path = fit_spline(&WaypointPath::new(pts.clone())).unwrap();
        for (p, &u) in pts.iter().zip(path.knot_params()) {
            prop_assert!((path.eval_param(u).0 - p).norm() < 1e-9);
        }
        for k in 1..pts.len() - 1 {
            let (l, r) = path.second_derivative_sides(k);
            prop_assert!((l.0 - r.0).abs() < 1e-6 && (l.1 - r.1).abs() < 1e-6);
        }
    }

    #[test]
    fn stanley_error_shrinks_after_first_second(offset in -2.0..2.0f64, v in 1.0..10.0f64) {
        prop_assume!(offset.abs() > 0.05);
        let line = fit_spline(&WaypointPath::new(vec![Point::new(0.0, 0.0), Point::new(400.0, 0.0)])).unwrap();
        let mut car = VehicleState::new(Pose2D::new(5.0, offset, 0.0), v);
        let dt = TrackConfig::default().dt();
        let mut prev = f64::INFINITY;
        for step in 0..200 {
            let cmd = stanley_steer(&car, &line, 0.5);
            prop_assert!(cmd.steer.abs() <= car.max_steer);
            let e = cmd.cross_track.abs();
            if step as f64 * dt > 1.0 && e > 1e-9 {
                prop_assert!(e < prev, "step {}: {} after {}", step, e, prev);
            }
            prev = e;
            car.step(cmd.steer, 0.0, dt);
        }
    }

    #[test]
    fn interior_order_does_not_touch_end_metrics(n in 3usize..40, seed in any::<u64>()) {
        let mut rng = seed::rng(seed, 0);
        let gt: Vec<Pose2D> = (0..n).map(|i| Pose2D::new(i as f64, 0.0, 0.0)).collect();
        let est: Vec<Pose2D> = gt
            .iter()
            .map(|p| Pose2D::new(p.x + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2)))
            .collect();
        let base = compute_report(&est, &gt).unwrap();
        let mut shuffled = est.clone();
        shuffled[1..n - 1].reverse();
        let r = compute_report(&shuffled, &gt).unwrap();
        prop_assert_eq!(r.final_drift, base.final_drift);
        prop_assert_eq!(r.rotational_offset, base.rotational_offset);
        prop_assert_eq!(compute_report(&est, &gt).unwrap(), base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn filter_dynamic_is_idempotent(tx in 5.0..20.0f64, ty in -6.0..6.0f64) {
        let cloud = FeatureCloud::new(rasterize_regions(&[FeatureRegion {
            polyline: vec![[-30.0, 9.0], [30.0, 9.0], [30.0, -9.0], [-30.0, -9.0]],
            point_density: 20.0,
        }]));
        let boxes = [TrafficBox { id: 7, center: Point::new(tx, ty), half_extent: 1.0 }];
        let scan = cast_scan(WorldView { features: &cloud, traffic: &boxes }, Pose2D::identity(), &no_noise(), 3, 0);
        let once = filter_dynamic(&scan);
        prop_assert_eq!(filter_dynamic(&once), once.clone());
        prop_assert_eq!(once.count_label(|l| matches!(l, PointLabel::Traffic(_))), 0);
        prop_assert_eq!(
            cast_scan(WorldView { features: &cloud, traffic: &boxes }, Pose2D::identity(), &no_noise(), 3, 0),
            scan
        );
    }

    #[test]
    fn estimate_ignores_ground_truth_and_filtering_without_traffic(
        seed in any::<u64>(),
        fuzz in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -3.0..3.0f64), 4),
    ) {
        let mut rng = seed::rng(seed, 0);
        let cloud = FeatureCloud::new(rasterize_regions(&[
            FeatureRegion { polyline: vec![[-40.0, 8.0], [-10.0, 10.0], [20.0, 8.5], [60.0, 9.5]], point_density: 30.0 },
            FeatureRegion { polyline: vec![[-40.0, -9.0], [0.0, -8.0], [60.0, -10.0]], point_density: 30.0 },
        ]));
        let cfg = LidarConfig::default();
        let mut pose = Pose2D::identity();
        let mut scans = Vec::new();
        for i in 0..4 {
            scans.push(cast_scan(WorldView { features: &cloud, traffic: &[] }, pose, &cfg, seed, i));
            pose = pose.compose(&Pose2D::new(rng.random_range(1.0..3.0), rng.random_range(-0.2..0.2), rng.random_range(-0.05..0.05)));
        }
        let run = |scans: &[LidarScan], filtering: bool| {
            let mut odo = Odometry::new(Pose2D::identity(), OdometryConfig::default());
            scans.iter().map(|s| odo.update(s, filtering).pose_est).collect::<Vec<_>>()
        };
        let reference = run(&scans, false);
        prop_assert_eq!(run(&scans, true), reference.clone());
        let fuzzed: Vec<LidarScan> = scans
            .iter()
            .zip(&fuzz)
            .map(|(s, f)| LidarScan { sensor_pose: Pose2D::new(f.0, f.1, f.2), ..s.clone() })
            .collect();
        prop_assert_eq!(run(&fuzzed, false), reference);
    }
}

#[test]
fn sampler_audit() {
    let bounds = SamplerBounds::default();
    let cfg = RewardConfig::default();
    let mut rng = seed::rng(11, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let s = sample_initial_state(&mut rng, &bounds);
        lo = lo.min(s.y_c_norm);
        hi = hi.max(s.y_c_norm);
        assert!(!collided(&s, &cfg), "{s:?}");
        assert!(!breached(&s));
    }
    assert!(lo < -0.95 && hi > 0.95, "{lo} {hi}");
}

#[test]
fn action_indices_round_trip() {
    for i in 0..N_ACTIONS {
        let a = Action::from_index(i).unwrap();
        assert_eq!(Action::from_parts(a.a_x(), a.a_y()).unwrap().index(), i);
    }
    assert!(Action::from_index(N_ACTIONS).is_err());
}
