//! Long-horizon check: is the fresh-permutation task learnable at all at
//! desk scale, and does the transfer-scale pretrain make progress?

use pointjig::jigsaw::JigsawConfig;
use pointjig::net::NetworkConfig;
use pointjig::rng::Rng;
use pointjig::synth::{synthesize_dataset, ShapeFamily};
use pointjig::train::{pretrain, TrainConfig};

fn main() {
    let which: String = std::env::args().nth(1).unwrap_or_default();

    if which == "long" {
        // 8 clouds, k=2, no augmentation, 3000 epochs
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
            epochs: 3000,
            batch_size: 8,
            seed: 4002,
            ..TrainConfig::default()
        };
        let (_, log) = pretrain(&dataset, &jig, &net, &tcfg).unwrap();
        for r in log.records.iter().step_by(200) {
            println!("epoch {:4} loss {:.4} acc {:.4}", r.epoch, r.loss, r.accuracy);
        }
        let last = log.records.last().unwrap();
        println!("final loss {:.4} acc {:.4}", last.loss, last.accuracy);
    } else {
        // transfer-scale pretrain: 200 clouds, k=3, default augmentation
        let families = [
            ShapeFamily::Sphere,
            ShapeFamily::Cube,
            ShapeFamily::Table,
            ShapeFamily::Chair,
        ];
        let dataset = synthesize_dataset(&families, 50, 128, &mut Rng::new(11)).unwrap();
        let jig = JigsawConfig::default();
        let net = NetworkConfig {
            encoder_widths: vec![32, 64],
            embed_dim: 128,
            head_widths: vec![64],
            num_point_classes: 27,
            condition_dim: 0,
        };
        let tcfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            seed: 2024,
            ..TrainConfig::default()
        };
        let started = std::time::Instant::now();
        let (_, log) = pretrain(&dataset, &jig, &net, &tcfg).unwrap();
        for r in log.records.iter().step_by(4) {
            println!("epoch {:3} loss {:.4} acc {:.4}", r.epoch, r.loss, r.accuracy);
        }
        let last = log.records.last().unwrap();
        println!(
            "final loss {:.4} acc {:.4} ({:.0}s)  [ln 27 = {:.4}]",
            last.loss,
            last.accuracy,
            started.elapsed().as_secs_f64(),
            27.0f64.ln()
        );
    }
}
