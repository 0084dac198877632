//! Config matrix for the overfit criterion: k=2, default augmentation,
//! 8 clouds x 64 points, 300 epochs.

use pointjig::jigsaw::JigsawConfig;
use pointjig::net::NetworkConfig;
use pointjig::rng::Rng;
use pointjig::synth::{synthesize_dataset, ShapeFamily};
use pointjig::train::{pretrain, TrainConfig};

fn run(label: &str, families: &[ShapeFamily], per_class: usize, net: &NetworkConfig, tcfg: &TrainConfig) {
    let dataset = synthesize_dataset(families, per_class, 64, &mut Rng::new(4001)).unwrap();
    let jig = JigsawConfig {
        k: 2,
        ..JigsawConfig::default()
    };
    let started = std::time::Instant::now();
    let (_, log) = pretrain(&dataset, &jig, net, tcfg).unwrap();
    print!("{label}: ");
    for r in log.records.iter().step_by(50) {
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
    let two = [ShapeFamily::Sphere, ShapeFamily::Cube];
    let four = [
        ShapeFamily::Sphere,
        ShapeFamily::Cube,
        ShapeFamily::Table,
        ShapeFamily::Chair,
    ];
    let net_a = NetworkConfig {
        encoder_widths: vec![64, 64],
        embed_dim: 512,
        head_widths: vec![128],
        num_point_classes: 8,
        condition_dim: 0,
    };
    let net_b = NetworkConfig {
        encoder_widths: vec![32],
        embed_dim: 512,
        head_widths: vec![64],
        num_point_classes: 8,
        condition_dim: 0,
    };
    let base = TrainConfig {
        epochs: 300,
        batch_size: 1,
        seed: 4002,
        ..TrainConfig::default()
    };
    let hot = TrainConfig {
        learning_rate: 2e-3,
        adam_beta2: 0.99,
        ..base.clone()
    };

    run("W1 enc64x64 e512 lr1e-3      ", &two, 4, &net_a, &base);
    run("W2 enc64x64 e512 lr2e-3 b2.99", &two, 4, &net_a, &hot);
    run("W4 enc32 e512 lr2e-3 b2.99   ", &two, 4, &net_b, &hot);
    run("W6 4-fam enc32 e512 lr2e-3   ", &four, 2, &net_b, &hot);
}
