//! Separates "training pipeline broken" from "task is hard": trains the
//! same model on the shuffle task with (a) identity permutation, (b) one
//! fixed random permutation, (c) a fresh permutation per epoch.

use pointjig::jigsaw::{
    make_jigsaw_sample_with_permutation, JigsawConfig, VoxelPermutation,
};
use pointjig::net::{forward_backward, init_parameters, Gradients, NetworkConfig};
use pointjig::rng::Rng;
use pointjig::synth::{synthesize_dataset, ShapeFamily};
use pointjig::train::{adam_step, cross_entropy_per_point, AdamState, TrainConfig};

enum PermMode {
    Identity,
    Fixed(u64),
    Fresh,
}

fn run(label: &str, mode: PermMode, epochs: usize, lr: f64) {
    let dataset = synthesize_dataset(
        &[ShapeFamily::Sphere, ShapeFamily::Cube],
        4,
        64,
        &mut Rng::new(4001),
    )
    .unwrap();
    let jig = JigsawConfig {
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
    let tcfg = TrainConfig {
        learning_rate: lr,
        ..TrainConfig::default()
    };
    let mut params = init_parameters(&net, &mut Rng::new(1));
    let mut state = AdamState::new(&params);
    let fixed = match mode {
        PermMode::Fixed(seed) => Some(VoxelPermutation::sample(&mut Rng::new(seed), 2)),
        _ => None,
    };

    print!("{label}: ");
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut total = 0;
        for (idx, cloud) in dataset.clouds().iter().enumerate() {
            let perm = match mode {
                PermMode::Identity => VoxelPermutation::identity(2),
                PermMode::Fixed(_) => fixed.clone().unwrap(),
                PermMode::Fresh => VoxelPermutation::sample(
                    &mut Rng::stream2(7, 99, (epoch * 8 + idx) as u64),
                    2,
                ),
            };
            let sample = make_jigsaw_sample_with_permutation(
                cloud,
                &jig,
                perm,
                &mut Rng::new(0),
                None,
            )
            .unwrap();
            let targets: Vec<usize> = sample.targets.iter().map(|t| t.0).collect();
            let mut loss_slot = 0.0;
            let (out, grads) = forward_backward(&params, &sample.shuffled, None, |out| {
                let (l, g) = cross_entropy_per_point(&out.logits, &targets);
                loss_slot = l;
                g
            });
            loss_sum += loss_slot;
            for i in 0..targets.len() {
                let row = out.logits.row(i);
                let pred = (0..8).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                if pred == targets[i] {
                    correct += 1;
                }
                total += 1;
            }
            let mut scaled = Gradients::zeros_like(&params);
            scaled.add_assign(&grads);
            adam_step(&mut params, &scaled, &mut state, &tcfg);
        }
        if epoch % (epochs / 8).max(1) == 0 || epoch + 1 == epochs {
            print!(
                "[{} l={:.3} a={:.3}] ",
                epoch,
                loss_sum / dataset.len() as f64,
                correct as f64 / total as f64
            );
        }
    }
    println!();
}

fn main() {
    run("identity   lr1e-3", PermMode::Identity, 60, 1e-3);
    run("fixed-perm lr1e-3", PermMode::Fixed(5), 60, 1e-3);
    run("fresh      lr1e-3", PermMode::Fresh, 60, 1e-3);
    run("fresh      lr3e-3 long", PermMode::Fresh, 400, 3e-3);
}
