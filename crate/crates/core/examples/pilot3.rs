//! Optimization sweep on the fresh-permutation task.

use pointjig::jigsaw::JigsawConfig;
use pointjig::net::NetworkConfig;
use pointjig::rng::Rng;
use pointjig::synth::{synthesize_dataset, ShapeFamily};
use pointjig::train::{pretrain, TrainConfig};

fn run(label: &str, net: &NetworkConfig, tcfg: &TrainConfig, aug: bool, clouds: usize) {
    let dataset = synthesize_dataset(
        &[ShapeFamily::Sphere, ShapeFamily::Cube],
        clouds / 2,
        64,
        &mut Rng::new(4001),
    )
    .unwrap();
    let jig = if aug {
        JigsawConfig {
            k: 2,
            ..JigsawConfig::default()
        }
    } else {
        JigsawConfig {
            k: 2,
            rotate_fraction: 0.0,
            replace_count: 0,
            jitter_sigma: 0.0,
            jitter_clip: 0.0,
        }
    };
    let started = std::time::Instant::now();
    let (_, log) = pretrain(&dataset, &jig, net, tcfg).unwrap();
    print!("{label}: ");
    for r in log.records.iter().step_by((tcfg.epochs / 6).max(1)) {
        print!("[{} l={:.3} a={:.3}] ", r.epoch, r.loss, r.accuracy);
    }
    let last = log.records.last().unwrap();
    println!(
        "final l={:.3} a={:.3} ({:.0}s)",
        last.loss,
        last.accuracy,
        started.elapsed().as_secs_f64()
    );
}

fn main() {
    let base_net = NetworkConfig {
        num_point_classes: 8,
        ..NetworkConfig::default()
    };
    let wide_net = NetworkConfig {
        encoder_widths: vec![256, 256],
        embed_dim: 512,
        head_widths: vec![256],
        num_point_classes: 8,
        condition_dim: 0,
    };
    let base = TrainConfig {
        epochs: 300,
        batch_size: 8,
        seed: 4002,
        ..TrainConfig::default()
    };

    run("A base b8 lr1e-3 noaug", &base_net, &base, false, 8);
    run(
        "B base b1 lr1e-3 noaug",
        &base_net,
        &TrainConfig {
            batch_size: 1,
            ..base.clone()
        },
        false,
        8,
    );
    run(
        "C wide b4 lr1e-3 noaug",
        &wide_net,
        &TrainConfig {
            batch_size: 4,
            ..base.clone()
        },
        false,
        8,
    );
    run(
        "D base b8 lr3e-3 noaug",
        &base_net,
        &TrainConfig {
            learning_rate: 3e-3,
            ..base.clone()
        },
        false,
        8,
    );
    run(
        "E base b8 lr1e-4 noaug",
        &base_net,
        &TrainConfig {
            learning_rate: 1e-4,
            ..base.clone()
        },
        false,
        8,
    );
}
