use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wireforge_core::connectivity::{mst_budget, mst_loss_and_grad};
use wireforge_core::engine::initialize;
use wireforge_core::glyphs::render_letter;
use wireforge_core::objectives::{ObjectiveConfig, ObjectiveKind, ProviderMode};
use wireforge_core::{Adam, AdamConfig, Engine, OfflineProvider, OptimConfig, RasterImage, TargetImage, ViewId};

fn small() -> OptimConfig {
    OptimConfig {
        canvas_size: 64,
        n_wires: 6,
        segments_per_wire: 2,
        iterations: 20,
        ..Default::default()
    }
}

fn letter_targets(config: &OptimConfig) -> Vec<TargetImage> {
    let canvas = config.canvas().unwrap();
    ViewId::ALL
        .iter()
        .zip(['X', 'Y', 'Z'])
        .map(|(&v, ch)| TargetImage::new(render_letter(ch, &canvas).unwrap().unwrap(), v))
        .collect()
}

fn mse() -> ObjectiveConfig {
    ObjectiveConfig {
        kind: ObjectiveKind::Mse,
        ..ObjectiveConfig::default()
    }
}

#[test]
fn initialization_shape_and_determinism() {
    let config = OptimConfig::default();
    let art = initialize(&config);
    assert_eq!(art.wires.len(), 30);
    assert_eq!(art.point_count(), 480);
    assert_eq!(art.flat_coords().len(), 1440);
    assert_eq!(art, initialize(&config));
    for seed in 0..50 {
        let a = initialize(&OptimConfig {
            seed,
            ..OptimConfig::default()
        });
        assert!(a.all_points().all(|p| p.to_array().iter().all(|c| c.abs() <= 1.0)));
    }
}

#[test]
fn stationary_point_does_not_move() {
    let config = OptimConfig {
        lambda: 0.0,
        views: vec![ViewId::Y],
        objective: mse(),
        ..small()
    };
    let art = initialize(&config);
    let probe = OfflineProvider::new(
        config.objective,
        vec![TargetImage::new(RasterImage::white(64, 64), ViewId::Y)],
    )
    .unwrap();
    let image = Engine::new(config.clone(), ProviderMode::Offline(&probe))
        .unwrap()
        .render_view(&art, ViewId::Y)
        .unwrap();
    let provider = OfflineProvider::new(config.objective, vec![TargetImage::new(image, ViewId::Y)]).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(art.clone());
    engine.step(&mut state).unwrap();
    for (a, b) in state.art.flat_coords().iter().zip(art.flat_coords()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn mst_only_steps_reduce_budget() {
    let config = OptimConfig {
        lambda: 1.0,
        view_weights: [0.0; 3],
        objective: mse(),
        n_wires: 10,
        ..small()
    };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let before = mst_budget(&state.art);
    for _ in 0..10 {
        engine.step(&mut state).unwrap();
    }
    assert!(mst_budget(&state.art) < before);
}

#[test]
fn gradient_is_sum_of_its_parts() {
    let config = OptimConfig {
        lambda: 7.5,
        view_weights: [1.0, 0.5, 2.0],
        ..small()
    };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let art = engine.initialize();
    let total = engine.gradient(&art, 3).unwrap().total;
    let mut expect: Vec<f64> = mst_loss_and_grad(&art).grad.iter().map(|g| 7.5 * g).collect();
    for v in ViewId::ALL {
        let g = engine.view_gradient(&art, v, 3).unwrap().grad;
        for (e, gi) in expect.iter_mut().zip(g) {
            *e += gi;
        }
    }
    for (a, b) in total.iter().zip(&expect) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn zero_lambda_never_calls_mst() {
    let config = OptimConfig { lambda: 0.0, ..small() };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config.clone(), ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let before = state.art.flat_coords();
    let grad = engine.gradient(&state.art, 0).unwrap();
    assert!(grad.mst.is_none());
    engine.run(&mut state, &mut ()).unwrap();
    assert_eq!(engine.mst_gradient_calls(), 0);

    // the update is exactly Adam on the summed view gradients
    let mut adam = Adam::new(before.len(), AdamConfig::default());
    let mut x = before;
    adam.update(&mut x, &grad.total, config.learning_rate);
    let mut first = engine.start(engine.initialize());
    engine.step(&mut first).unwrap();
    assert_eq!(first.art.flat_coords(), x);
}

#[test]
fn zero_iterations_keeps_initialization() {
    let config = OptimConfig {
        iterations: 0,
        ..small()
    };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let art = engine.initialize();
    let mut state = engine.start(art.clone());
    let out = engine.run(&mut state, &mut ()).unwrap();
    assert!(out.completed && out.trace.is_empty());
    assert_eq!(state.art, art);
}

#[test]
fn one_line_mode_has_no_connectivity_cost() {
    let config = OptimConfig {
        n_wires: 1,
        segments_per_wire: 150,
        canvas_size: 64,
        iterations: 30,
        views: vec![ViewId::Z],
        ..Default::default()
    };
    let targets = letter_targets(&config)
        .into_iter()
        .filter(|t| t.view() == ViewId::Z)
        .collect();
    let provider = OfflineProvider::new(config.objective, targets).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    assert_eq!(state.art.point_count(), 451);
    let out = engine.run(&mut state, &mut ()).unwrap();
    assert!(out.completed);
    assert!(out.trace.iter().all(|r| r.mst_budget == 0.0));
    assert!(engine
        .gradient(&state.art, 0)
        .unwrap()
        .mst
        .unwrap()
        .grad
        .iter()
        .all(|&g| g == 0.0));
}

#[test]
fn runs_are_reproducible() {
    let config = small();
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let run = || {
        let mut s = engine.start(engine.initialize());
        let t = engine.run(&mut s, &mut ()).unwrap().trace;
        (s.art, t)
    };
    assert_eq!(run(), run());
}

#[test]
fn trace_is_logged_every_log_every_and_at_the_end() {
    let config = OptimConfig {
        iterations: 23,
        log_every: 5,
        ..small()
    };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let trace = engine.run(&mut state, &mut ()).unwrap().trace;
    let its: Vec<usize> = trace.iter().map(|r| r.iteration).collect();
    assert_eq!(its, vec![0, 5, 10, 15, 20, 22]);
    for r in &trace {
        let sum = r.view_losses.iter().sum::<f64>() + 50.0 * r.mst_budget;
        assert!((r.total - sum).abs() < 1e-12 * sum.max(1.0));
    }
}

struct StopAfter(usize);

impl wireforge_core::RunObserver for StopAfter {
    fn should_stop(&mut self) -> bool {
        if self.0 == 0 {
            return true;
        }
        self.0 -= 1;
        false
    }
}

#[test]
fn observer_can_stop_between_steps() {
    let config = small();
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let out = engine.run(&mut state, &mut StopAfter(7)).unwrap();
    assert!(!out.completed);
    assert_eq!(state.iteration, 7);
}

#[test]
fn bad_config_is_rejected_with_every_problem() {
    let config = OptimConfig {
        n_wires: 0,
        learning_rate: -1.0,
        canvas_size: 4,
        ..Default::default()
    };
    let problems = config.problems();
    assert_eq!(problems.len(), 3, "{problems:?}");
    let provider = OfflineProvider::new(ObjectiveConfig::default(), Vec::new()).unwrap();
    assert!(Engine::new(config, ProviderMode::Offline(&provider)).is_err());
}

#[test]
fn missing_target_aborts_with_view() {
    let config = small();
    let targets = letter_targets(&config)
        .into_iter()
        .filter(|t| t.view() != ViewId::Y)
        .collect();
    let provider = OfflineProvider::new(config.objective, targets).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let err = engine.step(&mut state).unwrap_err();
    assert!(err.to_string().contains("view y"), "{err}");
}

#[test]
fn adam_first_step_and_constant_gradient() {
    let cfg = AdamConfig::default();
    let mut adam = Adam::new(3, cfg);
    let g = [2.0, -0.5, 1e-3];
    let mut p = [0.0; 3];
    adam.update(&mut p, &g, 0.1);
    for (pi, gi) in p.iter().zip(g) {
        assert!((pi + 0.1 * gi / (gi.abs() + cfg.epsilon)).abs() < 1e-15);
    }
    let mut zero = [1.0, 2.0, 3.0];
    Adam::new(3, cfg).update(&mut zero, &[0.0; 3], 0.1);
    assert_eq!(zero, [1.0, 2.0, 3.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
    let mut adam = Adam::new(5, cfg);
    let mut x = vec![0.0; 5];
    for _ in 0..3000 {
        let before = x.clone();
        adam.update(&mut x, &g, 0.01);
        if adam.step_count() == 3000 {
            for (a, b) in x.iter().zip(before) {
                assert!(((a - b).abs() - 0.01).abs() < 1e-6);
            }
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_matches_single_thread() {
    let config = OptimConfig {
        iterations: 100,
        ..small()
    };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let run = || {
        let mut s = engine.start(engine.initialize());
        engine.run(&mut s, &mut ()).unwrap();
        s.art.flat_coords()
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let multi = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(run);
    for (a, b) in single.iter().zip(&multi) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3));
    }
}

#[test]
fn mse_loss_does_not_rise_over_fifty_step_windows() {
    let config = OptimConfig {
        canvas_size: 128,
        iterations: 300,
        lambda: 0.0,
        learning_rate: 0.01,
        objective: mse(),
        log_every: 1,
        ..Default::default()
    };
    let provider = OfflineProvider::new(config.objective, letter_targets(&config)).unwrap();
    let engine = Engine::new(config, ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let trace = engine.run(&mut state, &mut ()).unwrap().trace;
    for w in trace.windows(51) {
        assert!(
            w[50].total <= w[0].total,
            "iteration {}: {} -> {}",
            w[0].iteration,
            w[0].total,
            w[50].total
        );
    }
}
