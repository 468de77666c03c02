//! Scratch probe: adaptation trend on the synthetic two-domain benchmark.

use std::time::Instant;

use cloudmix::adapt::{adapt_run, AdaptationConfig, NoopObserver};
use cloudmix::synth::{make_domain_pair, toy_class_set, SceneSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let epochs_adapt: u32 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(10);
    let scans = 200usize;

    let total_start = Instant::now();
    for seed in [11u64, 22, 33] {
        let start = Instant::now();
        let (source, target_labeled) = make_domain_pair::<f32>(
            &SceneSpec::source_default(),
            &SceneSpec::target_default(),
            scans,
            seed,
        )
        .unwrap();
        let target: Vec<_> = target_labeled.iter().map(|(c, _)| c.clone()).collect();

        let mut cfg = AdaptationConfig::new(toy_class_set());
        cfg.seed = seed;
        cfg.optim.lr = lr;
        cfg.epochs_adapt = epochs_adapt;

        let state =
            adapt_run(&source, &target, Some(&target_labeled), &cfg, &mut NoopObserver).unwrap();
        let warm = state.history.first().unwrap().miou;
        let fin = state.history.last().unwrap().miou;
        println!(
            "seed={seed} lr={lr} adapt_epochs={epochs_adapt} zeta={:.4} warm_miou={warm:.4} final_miou={fin:.4} gain={:+.4} time={:.1?}",
            state.zeta,
            fin - warm,
            start.elapsed()
        );
    }
    println!("total {:.1?}", total_start.elapsed());
}
