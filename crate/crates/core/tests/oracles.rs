use flowdj::bench::{
    evaluate_policy, generate_dataset, rollout, Env, Expert, ExpertPolicy, FlowPolicy, FnPolicy,
    TaskSpec,
};
use flowdj::diagnostics::build_knn_index;
use flowdj::model::{time_features, VelocityModel};
use flowdj::solver::SolverSchedule;
use flowdj::train::{beta_density, fit, TimeSchedule, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, Continuous};

/// Forward pass written out with index loops, sharing nothing with the model
/// code except the parameter layout.
fn naive_forward(m: &VelocityModel, a: &[f64], t: f64, o: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = a.to_vec();
    x.extend_from_slice(&time_features(t));
    x.extend_from_slice(o);
    let n_layers = m.slots().len();
    for l in 0..n_layers {
        let s = m.slots()[l];
        let w = m.layer_weights(l);
        let b = m.layer_bias(l);
        let mut y = vec![0.0; s.fan_out];
        for i in 0..s.fan_out {
            let mut acc = b[i];
            for j in 0..s.fan_in {
                acc += w[i * s.fan_in + j] * x[j];
            }
            y[i] = if l + 1 < n_layers { acc.tanh() } else { acc };
        }
        x = y;
    }
    x
}

#[test]
fn forward_pass_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (ad, od, hidden) in [
        (2, 2, vec![128, 128]),
        (1, 0, vec![4]),
        (3, 5, vec![7, 9, 3]),
    ] {
        let mut m = VelocityModel::init(ad, od, &hidden, 11).unwrap();
        // non-zero biases so they are exercised too
        for p in m.params_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        for _ in 0..50 {
            let a: Vec<f64> = (0..ad).map(|_| rng.random_range(-3.0..3.0)).collect();
            let o: Vec<f64> = (0..od).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = rng.random::<f64>();
            let got = m.eval(&a, t, &o).unwrap();
            let want = naive_forward(&m, &a, t, &o);
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g - w).abs() <= 1e-12 * w.abs().max(1e-300) || (g - w).abs() < 1e-15,
                    "{g} vs {w}"
                );
            }
        }
    }
}

#[test]
fn beta_density_matches_statrs_and_integrates_to_one() {
    for alpha in [0.1, 0.2, 0.5, 0.9, 1.0] {
        let reference = Beta::new(alpha, alpha).unwrap();
        for i in 1..100 {
            let t = i as f64 / 100.0;
            let ours = beta_density(alpha, t).unwrap();
            let theirs = reference.pdf(t);
            assert!(
                (ours - theirs).abs() <= 1e-10 * theirs,
                "alpha {alpha} t {t}"
            );
        }
        // symmetric, so integrate [0, 1/2] and double; t = s^(1/alpha) removes
        // the t^(alpha-1) singularity at 0
        let n = 20_000;
        let top = 0.5f64.powf(alpha);
        let h = top / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let s = (k as f64 + 0.5) * h;
            let t = s.powf(1.0 / alpha);
            total += 2.0 * beta_density(alpha, t).unwrap() * s.powf(1.0 / alpha - 1.0) / alpha * h;
        }
        let tol = 1e-6;
        assert!((total - 1.0).abs() < tol, "alpha {alpha}: mass {total}");
    }
}

#[test]
fn knn_query_agrees_with_sorting() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rows: Vec<f64> = (0..300 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let idx = build_knn_index(&rows, 3).unwrap();
    for _ in 0..200 {
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut all: Vec<(f64, usize)> = (0..300)
            .map(|i| {
                let r = &rows[i * 3..i * 3 + 3];
                (
                    r.iter().zip(&q).map(|(x, y)| (x - y).powi(2)).sum::<f64>(),
                    i,
                )
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got = idx.query(&q, 5).unwrap();
        let got: Vec<usize> = got.iter().map(|n| n.index).collect();
        let want: Vec<usize> = all[..5].iter().map(|p| p.1).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn experts_always_succeed() {
    for spec in [
        TaskSpec::two_mode_reach(),
        TaskSpec::ring_mixture(),
        TaskSpec::point_maze(),
    ] {
        for seed in 0..100 {
            let r = rollout(&spec, &mut ExpertPolicy::default(), seed).unwrap();
            assert!(r.success, "{} seed {seed}", spec.name());
        }
    }
}

fn two_means(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2], f64) {
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    // farthest-pair seeding, then Lloyd iterations
    let c0 = points[0];
    let far = *points
        .iter()
        .max_by(|a, b| d2(**a, c0).total_cmp(&d2(**b, c0)))
        .unwrap();
    let mut c = [
        far,
        *points
            .iter()
            .max_by(|a, b| d2(**a, far).total_cmp(&d2(**b, far)))
            .unwrap(),
    ];
    let mut assign = vec![0usize; points.len()];
    for _ in 0..50 {
        for (i, p) in points.iter().enumerate() {
            assign[i] = usize::from(d2(*p, c[1]) < d2(*p, c[0]));
        }
        for (k, ck) in c.iter_mut().enumerate() {
            let members: Vec<_> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == k)
                .collect();
            let n = members.len() as f64;
            *ck = [
                members.iter().map(|(p, _)| p[0]).sum::<f64>() / n,
                members.iter().map(|(p, _)| p[1]).sum::<f64>() / n,
            ];
        }
    }
    let within = points
        .iter()
        .zip(&assign)
        .map(|(p, &a)| d2(*p, c[a]))
        .sum::<f64>()
        / points.len() as f64;
    (c[0], c[1], within.sqrt())
}

#[test]
fn fork_state_actions_form_two_clusters() {
    let mut spec = TaskSpec::two_mode_reach();
    spec.start_noise = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut actions = Vec::new();
    let mut right = 0;
    for _ in 0..400 {
        let env = Env::reset(&spec, &mut rng);
        let mut ex = Expert::new(&env, &mut rng);
        right += usize::from(ex.side() > 0.0);
        let a = ex.act(&env, &mut rng);
        actions.push([a[0], a[1]]);
    }
    assert!((160..=240).contains(&right), "{right} of 400 went right");
    let (c0, c1, std) = two_means(&actions);
    let sep = ((c0[0] - c1[0]).powi(2) + (c0[1] - c1[1]).powi(2)).sqrt();
    assert!(
        sep > 4.0 * std,
        "separation {sep}, within-cluster std {std}"
    );
    // the mean of the modes heads straight into the obstacle
    let step = spec.max_step;
    let mut mean = FnPolicy(move |_o: &[f64]| vec![0.0, step]);
    assert!(rollout(&spec, &mut mean, 0).unwrap().collided);
}

#[test]
fn success_rate_is_stable_across_seed_blocks() {
    let spec = TaskSpec::two_mode_reach();
    let ds = generate_dataset(&spec, 10, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 600,
        batch_size: 128,
        seed: 1,
        hidden: vec![64, 64],
        time_schedule: TimeSchedule::Uniform,
        ..Default::default()
    };
    let (ckpt, _) = fit(&ds, &cfg).unwrap();
    let mut rates = Vec::new();
    for block in 0..3u64 {
        let mut p = FlowPolicy::new(&ckpt, SolverSchedule::uniform(4).unwrap());
        let (_, rate, _, _) = evaluate_policy(&spec, &mut p, 100, 10_000 * (block + 1)).unwrap();
        rates.push(rate);
    }
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
        - rates.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.10, "success rates {rates:?}");
}
