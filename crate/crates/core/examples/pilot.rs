//! Scratch experiment runner for sizing the training-based tests.

use pointjig::jigsaw::JigsawConfig;
use pointjig::net::NetworkConfig;
use pointjig::rng::Rng;
use pointjig::synth::{synthesize_dataset, ShapeFamily};
use pointjig::train::{pretrain, TrainConfig};

fn run(label: &str, jig: &JigsawConfig, net: &NetworkConfig, tcfg: &TrainConfig) {
    let dataset = synthesize_dataset(
        &[ShapeFamily::Sphere, ShapeFamily::Cube],
        4,
        64,
        &mut Rng::new(4001),
    )
    .unwrap();
    let started = std::time::Instant::now();
    let (_, log) = pretrain(&dataset, jig, net, tcfg).unwrap();
    print!("{label}: ");
    for r in log.records.iter().step_by((tcfg.epochs / 10).max(1)) {
        print!("[{} l={:.3} a={:.3}] ", r.epoch, r.loss, r.accuracy);
    }
    let last = log.records.last().unwrap();
    println!(
        "final l={:.3} a={:.3} ({:.1}s)",
        last.loss,
        last.accuracy,
        started.elapsed().as_secs_f64()
    );
}

fn main() {
    let jig = JigsawConfig {
        k: 2,
        ..JigsawConfig::default()
    };
    let no_aug = JigsawConfig {
        k: 2,
        rotate_fraction: 0.0,
        replace_count: 0,
        jitter_sigma: 0.0,
        jitter_clip: 0.0,
    };
    let net = NetworkConfig {
        num_point_classes: 8,
        ..NetworkConfig::default()
    };
    let base = TrainConfig {
        epochs: 100,
        batch_size: 4,
        seed: 4002,
        ..TrainConfig::default()
    };

    run("lr1e-3      ", &jig, &net, &base);
    run(
        "lr3e-3      ",
        &jig,
        &net,
        &TrainConfig {
            learning_rate: 3e-3,
            ..base.clone()
        },
    );
    run(
        "lr1e-2      ",
        &jig,
        &net,
        &TrainConfig {
            learning_rate: 1e-2,
            ..base.clone()
        },
    );
    run(
        "lr3e-3 noaug",
        &no_aug,
        &net,
        &TrainConfig {
            learning_rate: 3e-3,
            ..base.clone()
        },
    );
    run(
        "lr3e-3 b1   ",
        &jig,
        &net,
        &TrainConfig {
            learning_rate: 3e-3,
            batch_size: 1,
            ..base.clone()
        },
    );
}
