//! Scratch probe: full configuration vs the t->s-only ablation.

use std::time::Instant;

use cloudmix::adapt::{adapt_run, AblationFlags, AdaptationConfig, NoopObserver};
use cloudmix::synth::{make_domain_pair, toy_class_set, SceneSpec};

fn main() {
    let start = Instant::now();
    let mut full_sum = 0.0;
    let mut t2s_sum = 0.0;
    for seed in [11u64, 22, 33] {
        let (source, target_labeled) = make_domain_pair::<f32>(
            &SceneSpec::source_default(),
            &SceneSpec::target_default(),
            200,
            seed,
        )
        .unwrap();
        let target: Vec<_> = target_labeled.iter().map(|(c, _)| c.clone()).collect();

        let mut run = |flags: AblationFlags| {
            let mut cfg = AdaptationConfig::new(toy_class_set());
            cfg.seed = seed;
            cfg.optim.lr = 0.1;
            cfg.flags = flags;
            let state = adapt_run(&source, &target, Some(&target_labeled), &cfg, &mut NoopObserver)
                .unwrap();
            (
                state.history.first().unwrap().miou,
                state.history.last().unwrap().miou,
            )
        };

        let (warm, full) = run(AblationFlags::default());
        let t2s_only = AblationFlags {
            branch_s2t: false,
            branch_t2s: true,
            local_aug: false,
            global_aug: false,
            weighted_selection: false,
            ema: false,
        };
        let (_, t2s) = run(t2s_only);
        println!("seed={seed} warm={warm:.4} full={full:.4} t2s_only={t2s:.4}");
        full_sum += full;
        t2s_sum += t2s;
    }
    println!(
        "avg full={:.4} avg t2s_only={:.4} (full - t2s = {:+.4}) time={:.1?}",
        full_sum / 3.0,
        t2s_sum / 3.0,
        (full_sum - t2s_sum) / 3.0,
        start.elapsed()
    );
}
