use dualpose_core::config::{NetworkConfig, RunConfig};
use dualpose_core::synth::SynthParams;
use dualpose_core::train::{evaluate_pck, train_loop};
use std::time::Instant;

fn base_cfg() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.net = NetworkConfig::tiny();
    cfg.net.keypoint_channels = 6;
    cfg.synth = SynthParams::default();
    cfg.train.n_train = 512;
    cfg.train.n_eval = 20;
    cfg.train.batch = 4;
    cfg.train.log_interval = 100;
    cfg.set_seed(7);
    cfg
}

#[test]
fn lr_sweep() {
    for lr in [2e-6f32, 5e-6, 1.2e-5] {
        let mut cfg = base_cfg();
        cfg.train.lr = lr;
        cfg.train.steps = 600;
        let t0 = Instant::now();
        match train_loop(&cfg, |r| println!("  lr {lr:.1e} step {:>4} total {:.1}", r.step, r.total)) {
            Ok(out) => {
                let net = out.checkpoint.build_network().unwrap();
                let pck = evaluate_pck(&net, &cfg, 0.2).unwrap();
                println!("lr {lr:.1e}: {:.0?} loss {:.1} -> {:.1}, PCK@0.2 = {pck:.3}",
                         t0.elapsed(), out.initial_loss, out.final_loss);
            }
            Err(e) => println!("lr {lr:.1e}: {e}"),
        }
    }
}
