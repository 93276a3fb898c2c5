//! Letters benchmark: fit "X", "Y", "Z" targets on the three views and print
//! the loss, MST budget and ink IoU per view.
//!
//! `cargo run --release -p wireforge-core --example letters -- [lambda] [iterations] [seed]`

extern crate std;

use std::env;
use std::time::Instant;
use std::vec::Vec;
use std::{print, println};

use wireforge_core::glyphs::render_letter;
use wireforge_core::objectives::ProviderMode;
use wireforge_core::{Engine, OfflineProvider, OptimConfig, RasterImage, TargetImage, ViewId};

fn iou(a: &RasterImage, b: &RasterImage) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        let (ia, ib) = (*x < 0.5, *y < 0.5);
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    inter as f64 / union.max(1) as f64
}

fn main() {
    let args: Vec<String> = env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let config = OptimConfig {
        lambda: arg(0, 0.0),
        iterations: arg(1, 2000.0) as usize,
        seed: arg(2, 0.0) as u64,
        ..OptimConfig::default()
    };
    let canvas = config.canvas().unwrap();
    let targets: Vec<TargetImage> = ViewId::ALL
        .iter()
        .zip(['X', 'Y', 'Z'])
        .map(|(&v, ch)| TargetImage::new(render_letter(ch, &canvas).unwrap().unwrap(), v))
        .collect();
    let provider = OfflineProvider::new(config.objective, targets.clone()).unwrap();
    let engine = Engine::new(config.clone(), ProviderMode::Offline(&provider)).unwrap();
    let mut state = engine.start(engine.initialize());
    let t = Instant::now();
    let l0 = engine.objective_loss(&state.art, config.iterations).unwrap();
    let outcome = engine.run(&mut state, &mut ()).unwrap();
    for r in outcome.trace.iter().step_by(20) {
        println!(
            "{:5} {:10.4} {:10.4} {:10.4} mst {:8.4} total {:10.4}",
            r.iteration, r.view_losses[0], r.view_losses[1], r.view_losses[2], r.mst_budget, r.total
        );
    }
    let l1 = engine.objective_loss(&state.art, config.iterations).unwrap();
    print!(
        "lambda {} loss0 {:.4} final {:.4} ratio {:.3} budget {:.5} ious",
        config.lambda,
        l0,
        l1,
        l1 / l0,
        wireforge_core::connectivity::mst_budget(&state.art)
    );
    for t in &targets {
        print!(
            " {:.3}",
            iou(&engine.render_view(&state.art, t.view()).unwrap(), t.image())
        );
    }
    println!("  time {:.1}s", t.elapsed().as_secs_f64());
}
