//! Built-in quick suite of oracle and invariant checks, runnable from the
//! CLI. Each check re-derives its expectation independently of the code
//! path it exercises and prints one line.

use crate::cloud::{Point3, PointCloud};
use crate::downstream;
use crate::io::checkpoint::{self, Checkpoint};
use crate::jigsaw::{self, JigsawConfig, VoxelId, VoxelPermutation};
use crate::net::{self, Gradients, NetworkConfig, Tensor2};
use crate::rng::Rng;
use crate::train;

fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| Point3::new(rng.uniform(), rng.uniform(), rng.uniform()))
            .collect(),
    )
    .unwrap()
}

fn check(name: &str, ok: bool, detail: &str) -> bool {
    if ok {
        println!("selfcheck {name}: ok");
    } else {
        println!("selfcheck {name}: FAIL ({detail})");
    }
    ok
}

fn rng_determinism() -> bool {
    let mut a = Rng::new(7);
    let mut b = Rng::new(7);
    let same = (0..1000).all(|_| a.next_u64() == b.next_u64());
    let bounded = {
        let mut r = Rng::new(8);
        (0..1000).all(|_| r.int(27) < 27 && (0.0..1.0).contains(&r.uniform()))
    };
    check("rng-determinism", same && bounded, "sequences diverged")
}

fn voxelize_oracle() -> bool {
    let mut rng = Rng::new(101);
    for k in 1..=4usize {
        for _ in 0..12 {
            let cloud = random_cloud(&mut rng, 100);
            let got = jigsaw::voxelize(&cloud, k);
            for (i, p) in cloud.iter().enumerate() {
                // interval membership, top boundary closed in the last cell
                let c = p.to_array();
                let mut expected = None;
                for iz in 0..k {
                    for iy in 0..k {
                        for ix in 0..k {
                            let cell = [ix, iy, iz];
                            let inside = (0..3).all(|a| {
                                let lo = cell[a] as f64 / k as f64;
                                let hi = (cell[a] + 1) as f64 / k as f64;
                                c[a] >= lo && (c[a] < hi || (cell[a] == k - 1 && c[a] <= hi))
                            });
                            if inside {
                                expected = Some(VoxelId::encode(ix, iy, iz, k));
                            }
                        }
                    }
                }
                if got.ids[i] != expected.unwrap() {
                    return check("voxelize-oracle", false, "id mismatch");
                }
            }
        }
    }
    check("voxelize-oracle", true, "")
}

fn displace_roundtrip() -> bool {
    let mut rng = Rng::new(102);
    let k = 3;
    for _ in 0..20 {
        let cloud = random_cloud(&mut rng, 120);
        let assignment = jigsaw::voxelize(&cloud, k);
        let perm = VoxelPermutation::sample(&mut rng, k);
        let moved = jigsaw::displace(&cloud, &assignment, &perm, k);
        let moved_assignment = jigsaw::VoxelAssignment {
            ids: assignment
                .ids
                .iter()
                .map(|&s| perm.destination(s))
                .collect(),
            occupied: vec![],
        };
        let back = jigsaw::displace(&moved, &moved_assignment, &perm.inverse(), k);
        for (p, q) in cloud.iter().zip(back.iter()) {
            if (*p - *q).norm() > 1e-9 {
                return check("displace-roundtrip", false, "exceeded 1e-9");
            }
        }
    }
    check("displace-roundtrip", true, "")
}

fn scaling_formula() -> bool {
    let mut rng = Rng::new(103);
    let cloud = PointCloud::new(
        (0..64)
            .map(|_| {
                Point3::new(
                    rng.uniform() * 8.0 - 4.0,
                    rng.uniform() * 2.0,
                    rng.uniform() * 0.5 - 3.0,
                )
            })
            .collect(),
    )
    .unwrap();
    let scaled = jigsaw::scale_to_unit_cube(&cloud);
    let (min, max) = cloud.bounding_box();
    let (min, max) = (min.to_array(), max.to_array());
    for (p, q) in cloud.iter().zip(scaled.iter()) {
        let (p, q) = (p.to_array(), q.to_array());
        for a in 0..3 {
            let expected = (p[a] - min[a]) / (max[a] - min[a]);
            if (q[a] - expected).abs() > 1e-12 {
                return check("unit-cube-scaling", false, "formula mismatch");
            }
        }
    }
    check("unit-cube-scaling", true, "")
}

fn embedding_invariance() -> bool {
    let cfg = NetworkConfig {
        encoder_widths: vec![8, 8],
        embed_dim: 16,
        head_widths: vec![8],
        num_point_classes: 8,
        condition_dim: 0,
    };
    let params = net::init_parameters(&cfg, &mut Rng::new(104));
    let mut rng = Rng::new(105);
    for _ in 0..10 {
        let cloud = random_cloud(&mut rng, 24);
        let e = net::extract_embedding(&params, &cloud, None);
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        rng.shuffle(&mut order);
        let permuted =
            PointCloud::new(order.iter().map(|&i| cloud.points()[i]).collect()).unwrap();
        let ep = net::extract_embedding(&params, &permuted, None);
        if e.iter().zip(&ep).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return check("embedding-invariance", false, "not bitwise invariant");
        }
    }
    check("embedding-invariance", true, "")
}

fn gradient_finite_difference() -> bool {
    let cfg = NetworkConfig {
        encoder_widths: vec![6],
        embed_dim: 8,
        head_widths: vec![6],
        num_point_classes: 8,
        condition_dim: 0,
    };
    let params = net::init_parameters(&cfg, &mut Rng::new(106));
    let cloud = random_cloud(&mut Rng::new(107), 12);
    let targets: Vec<usize> = (0..12).map(|i| i % 8).collect();

    let loss_of = |p: &net::Parameters| {
        train::cross_entropy_per_point(&net::forward(p, &cloud, None).logits, &targets).0
    };
    let out = net::forward(&params, &cloud, None);
    let (_, logit_grads) = train::cross_entropy_per_point(&out.logits, &targets);
    let grads = net::backward(&params, &cloud, None, &logit_grads);

    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.flat_len() {
        probe.flat_add(i, h);
        let up = loss_of(&probe);
        probe.flat_add(i, -2.0 * h);
        let down = loss_of(&probe);
        probe.flat_add(i, h);
        let fd = (up - down) / (2.0 * h);
        let a = grads.flat_get(i);
        let err = (a - fd).abs();
        if err > 1e-8 {
            worst = worst.max(err / a.abs().max(fd.abs()));
        }
    }
    check(
        "gradient-finite-difference",
        worst < 1e-4,
        &format!("max relative error {worst:.2e}"),
    )
}

fn cross_entropy_value() -> bool {
    let logits = Tensor2::zeros(3, 27);
    let (loss, _) = train::cross_entropy_per_point(&logits, &[0, 13, 26]);
    check(
        "cross-entropy-uniform",
        (loss - 27.0f64.ln()).abs() < 1e-12,
        &format!("got {loss}, want ln 27"),
    )
}

fn metric_oracles() -> bool {
    let mut rng = Rng::new(108);
    let preds: Vec<usize> = (0..500).map(|_| rng.index(4)).collect();
    let labels: Vec<usize> = (0..500).map(|_| rng.index(4)).collect();
    let direct = preds.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / 500.0;
    let acc_ok = downstream::accuracy(&preds, &labels).unwrap() == direct;

    let mut parts = std::collections::BTreeMap::new();
    parts.insert(0usize, vec![0usize, 1]);
    let labels = vec![vec![0, 0, 1, 1]];
    let perfect = downstream::mean_iou(&labels, &labels, &parts, &[0]).unwrap();
    let swapped = downstream::mean_iou(&[vec![1, 1, 0, 0]], &labels, &parts, &[0]).unwrap();
    check(
        "metric-oracles",
        acc_ok && perfect == 100.0 && swapped == 0.0,
        "accuracy or mean-iou mismatch",
    )
}

fn checkpoint_roundtrip() -> bool {
    let cfg = NetworkConfig {
        encoder_widths: vec![4],
        embed_dim: 6,
        head_widths: vec![4],
        num_point_classes: 8,
        condition_dim: 0,
    };
    let params = net::init_parameters(&cfg, &mut Rng::new(109));
    let ckpt = Checkpoint::new(params, 5, 9);
    let bytes = checkpoint::to_bytes(&ckpt);
    match checkpoint::from_bytes(&bytes) {
        Ok(back) => check(
            "checkpoint-roundtrip",
            back == ckpt && checkpoint::to_bytes(&back) == bytes,
            "round-trip not bitwise",
        ),
        Err(e) => check("checkpoint-roundtrip", false, &e.to_string()),
    }
}

fn adam_fixed_point() -> bool {
    let cfg = NetworkConfig {
        encoder_widths: vec![4],
        embed_dim: 4,
        head_widths: vec![],
        num_point_classes: 4,
        condition_dim: 0,
    };
    let mut params = net::init_parameters(&cfg, &mut Rng::new(110));
    let before = params.clone();
    let grads = Gradients::zeros_like(&params);
    let mut state = train::AdamState::new(&params);
    train::adam_step(
        &mut params,
        &grads,
        &mut state,
        &crate::train::TrainConfig::default(),
    );
    check("adam-fixed-point", params == before, "zero grads moved params")
}

fn jitter_bound() -> bool {
    let mut rng = Rng::new(111);
    let cfg = JigsawConfig {
        k: 2,
        rotate_fraction: 0.0,
        replace_count: 0,
        jitter_sigma: 0.04,
        jitter_clip: 0.05,
    };
    let cloud = random_cloud(&mut rng, 100);
    let before = jigsaw::scale_to_unit_cube(&cloud);
    let sample = jigsaw::make_jigsaw_sample_with_permutation(
        &cloud,
        &cfg,
        VoxelPermutation::identity(2),
        &mut rng,
        None,
    )
    .unwrap();
    let ok = before
        .iter()
        .zip(sample.shuffled.iter())
        .all(|(p, q)| {
            (p.x - q.x).abs() <= 0.05 + 1e-12
                && (p.y - q.y).abs() <= 0.05 + 1e-12
                && (p.z - q.z).abs() <= 0.05 + 1e-12
        });
    check("jitter-bound", ok, "clip exceeded")
}

/// Runs every check; true when all pass.
pub fn run_selfcheck() -> bool {
    let checks: [fn() -> bool; 10] = [
        rng_determinism,
        voxelize_oracle,
        displace_roundtrip,
        scaling_formula,
        embedding_invariance,
        gradient_finite_difference,
        cross_entropy_value,
        metric_oracles,
        checkpoint_roundtrip,
        adam_fixed_point,
    ];
    let mut ok = true;
    for c in checks {
        ok &= c();
    }
    ok &= jitter_bound();
    if ok {
        println!("selfcheck: all checks passed");
    } else {
        println!("selfcheck: FAILURES detected");
    }
    ok
}
