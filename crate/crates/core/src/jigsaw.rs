//! Self-supervised label generation by voxel shuffling.
//!
//! A cloud is scaled to the unit cube, split into `k^3` axis-aligned voxels,
//! and every point is labeled with the ID of the voxel it falls in. The
//! voxels are then rearranged by a random permutation (a rigid per-voxel
//! translation), optionally augmented, and the displaced cloud plus the
//! original voxel IDs form one training sample: the network has to predict
//! where each point came from.
//!
//! Voxel IDs use the x-fastest row-major layout `id = ix + k*iy + k^2*iz`.
//! Points are binned into half-open intervals `[i/k, (i+1)/k)` with the top
//! boundary clamped into the last cell.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tolerance for coordinates marginally outside `[0,1]` passed to
/// [`voxelize`]; anything farther out is a contract violation.
pub const VOXELIZE_TOLERANCE: f64 = 1e-9;

/// Hyperparameters of the shuffle task and its augmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JigsawConfig {
    /// Voxels per axis; the task has `k^3` classes.
    pub k: usize,
    /// Fraction of the `k^3` voxels to rotate randomly in place.
    pub rotate_fraction: f64,
    /// Number of voxels whose content is replaced from a donor cloud.
    pub replace_count: usize,
    /// Standard deviation of per-coordinate Gaussian jitter.
    pub jitter_sigma: f64,
    /// Hard clip applied to each jitter component.
    pub jitter_clip: f64,
}

impl Default for JigsawConfig {
    fn default() -> Self {
        JigsawConfig {
            k: 3,
            rotate_fraction: 0.15,
            replace_count: 1,
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
        }
    }
}

impl JigsawConfig {
    pub fn num_classes(&self) -> usize {
        self.k * self.k * self.k
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("jigsaw: k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rotate_fraction) {
            return Err(Error::Config(format!(
                "jigsaw: rotate_fraction {} not in [0, 1]",
                self.rotate_fraction
            )));
        }
        if !(self.jitter_sigma >= 0.0
            && self.jitter_clip >= self.jitter_sigma
            && self.jitter_clip.is_finite())
        {
            return Err(Error::Config(format!(
                "jigsaw: need jitter_clip >= jitter_sigma >= 0 (got sigma {}, clip {})",
                self.jitter_sigma, self.jitter_clip
            )));
        }
        Ok(())
    }
}

/// ID of one cell of the `k^3` grid, in `[0, k^3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelId(pub usize);

impl VoxelId {
    /// x-fastest row-major encoding of per-axis indices.
    pub fn encode(ix: usize, iy: usize, iz: usize, k: usize) -> VoxelId {
        debug_assert!(ix < k && iy < k && iz < k);
        VoxelId(ix + k * iy + k * k * iz)
    }

    pub fn decode(self, k: usize) -> (usize, usize, usize) {
        debug_assert!(self.0 < k * k * k);
        (self.0 % k, (self.0 / k) % k, self.0 / (k * k))
    }

    /// Geometric center of the voxel inside the unit cube.
    pub fn center(self, k: usize) -> Point3 {
        let (ix, iy, iz) = self.decode(k);
        let kf = k as f64;
        Point3::new(
            (ix as f64 + 0.5) / kf,
            (iy as f64 + 0.5) / kf,
            (iz as f64 + 0.5) / kf,
        )
    }
}

/// A bijection on voxel IDs; `mapping[s]` is the destination of source `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelPermutation {
    mapping: Vec<usize>,
}

impl VoxelPermutation {
    pub fn identity(k: usize) -> Self {
        VoxelPermutation {
            mapping: (0..k * k * k).collect(),
        }
    }

    /// Validates that `mapping` is a bijection on `{0, .., len-1}`.
    pub fn from_mapping(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &d in &mapping {
            if d >= mapping.len() || seen[d] {
                return Err(Error::Config(
                    "voxel permutation is not a bijection".into(),
                ));
            }
            seen[d] = true;
        }
        Ok(VoxelPermutation { mapping })
    }

    /// Uniformly random permutation of all `k^3` voxel IDs (Fisher–Yates).
    pub fn sample(rng: &mut Rng, k: usize) -> Self {
        let mut mapping: Vec<usize> = (0..k * k * k).collect();
        rng.shuffle(&mut mapping);
        VoxelPermutation { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn destination(&self, source: VoxelId) -> VoxelId {
        VoxelId(self.mapping[source.0])
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> VoxelPermutation {
        let mut inv = vec![0; self.mapping.len()];
        for (s, &d) in self.mapping.iter().enumerate() {
            inv[d] = s;
        }
        VoxelPermutation { mapping: inv }
    }
}

/// Per-point voxel IDs of a cloud plus the set of occupied voxels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelAssignment {
    /// Voxel of each point, aligned with the cloud.
    pub ids: Vec<VoxelId>,
    /// Sorted distinct values of `ids`.
    pub occupied: Vec<VoxelId>,
}

/// A shuffled cloud, the original voxel ID of each point, and the
/// permutation that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct JigsawSample {
    pub shuffled: PointCloud,
    pub targets: Vec<VoxelId>,
    pub permutation: VoxelPermutation,
}

impl JigsawSample {
    /// Destination voxel currently holding point `i`.
    pub fn destination_of(&self, i: usize) -> VoxelId {
        self.permutation.destination(self.targets[i])
    }
}

/// Per-axis affine map of the bounding box onto `[0,1]^3`. Axes with zero
/// extent map to the constant 0.5. Point order is preserved.
pub fn scale_to_unit_cube(cloud: &PointCloud) -> PointCloud {
    let (min, max) = cloud.bounding_box();
    let min = min.to_array();
    let max = max.to_array();
    let points = cloud
        .iter()
        .map(|p| {
            let c = p.to_array();
            let mut out = [0.0; 3];
            for axis in 0..3 {
                let extent = max[axis] - min[axis];
                out[axis] = if extent > 0.0 {
                    ((c[axis] - min[axis]) / extent).clamp(0.0, 1.0)
                } else {
                    0.5
                };
            }
            Point3::new(out[0], out[1], out[2])
        })
        .collect();
    PointCloud::new(points).expect("input cloud was valid")
}

/// Assigns every point of a unit-cube cloud its voxel ID.
///
/// Per-axis index is `min(floor(coord * k), k - 1)`; coordinates outside
/// `[0,1]` by more than [`VOXELIZE_TOLERANCE`] are a contract violation.
pub fn voxelize(cloud: &PointCloud, k: usize) -> VoxelAssignment {
    assert!(k >= 1, "voxelize: k must be >= 1");
    let kf = k as f64;
    let mut ids = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.iter().enumerate() {
        let c = p.to_array();
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            assert!(
                (-VOXELIZE_TOLERANCE..=1.0 + VOXELIZE_TOLERANCE).contains(&c[axis]),
                "voxelize: point {i} coordinate {} outside [0,1]",
                c[axis]
            );
            let cell = (c[axis].clamp(0.0, 1.0) * kf).floor() as usize;
            idx[axis] = cell.min(k - 1);
        }
        ids.push(VoxelId::encode(idx[0], idx[1], idx[2], k));
    }
    let mut occupied = ids.clone();
    occupied.sort_unstable();
    occupied.dedup();
    VoxelAssignment { ids, occupied }
}

/// Moves every point rigidly from its voxel to the permuted voxel: a pure
/// translation by the difference of voxel centers, so intra-voxel geometry
/// is preserved exactly.
pub fn displace(
    cloud: &PointCloud,
    assignment: &VoxelAssignment,
    perm: &VoxelPermutation,
    k: usize,
) -> PointCloud {
    assert_eq!(
        assignment.ids.len(),
        cloud.len(),
        "displace: assignment does not match cloud"
    );
    assert_eq!(perm.len(), k * k * k, "displace: permutation size != k^3");
    let points = cloud
        .iter()
        .zip(&assignment.ids)
        .map(|(p, &src)| {
            let offset = perm.destination(src).center(k) - src.center(k);
            *p + offset
        })
        .collect();
    PointCloud::new(points).expect("translation preserves finiteness")
}

/// A uniformly random 3D rotation matrix (row-major), drawn via a
/// normalized Gaussian quaternion.
fn random_rotation(rng: &mut Rng) -> [[f64; 3]; 3] {
    let (w, x, y, z) = loop {
        let q = [rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n > 1e-12 {
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn rotate_about(p: Point3, center: Point3, m: &[[f64; 3]; 3]) -> Point3 {
    let d = p - center;
    let v = d.to_array();
    let r = Point3::new(
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    );
    center + r
}

/// Applies the three augmentation stages to a sample, in a fixed order:
/// voxel rotation, then voxel replacement, then jitter. Each stage runs on
/// its own stream seeded from `rng`, so one stage's draw count cannot shift
/// another's.
///
/// Rotation spins the points of `floor(rotate_fraction * k^3)` occupied
/// destination voxels about the voxel center; rotated points keep their
/// targets even if they exit the voxel. Replacement deletes the points of
/// `replace_count` destination voxels and inserts the points of one occupied
/// donor voxel translated into place; inserted points take the target any
/// point of that destination would have had (the permutation preimage).
/// Jitter adds clipped Gaussian noise to every coordinate.
pub fn augment(
    sample: JigsawSample,
    cfg: &JigsawConfig,
    rng: &mut Rng,
    donor: Option<&PointCloud>,
) -> Result<JigsawSample> {
    cfg.validate()?;
    if cfg.replace_count > 0 && donor.is_none() {
        return Err(Error::Config(
            "jigsaw: replace_count > 0 requires a donor cloud".into(),
        ));
    }
    let k = cfg.k;
    assert_eq!(sample.permutation.len(), k * k * k);
    assert_eq!(sample.shuffled.len(), sample.targets.len());

    let rotate_seed = rng.next_u64();
    let replace_seed = rng.next_u64();
    let jitter_seed = rng.next_u64();

    let perm = sample.permutation;
    let mut points: Vec<Point3> = sample.shuffled.points().to_vec();
    let mut targets = sample.targets;

    // destination voxel of each point; sorted distinct destinations
    let dest = |t: VoxelId| perm.destination(t);
    let occupied_destinations = |targets: &[VoxelId]| -> Vec<VoxelId> {
        let mut d: Vec<VoxelId> = targets.iter().map(|&t| dest(t)).collect();
        d.sort_unstable();
        d.dedup();
        d
    };

    // stage 1: voxel rotation
    let occupied = occupied_destinations(&targets);
    let rotate_count =
        ((cfg.rotate_fraction * (k * k * k) as f64).floor() as usize).min(occupied.len());
    if rotate_count > 0 {
        let mut rot_rng = Rng::new(rotate_seed);
        let chosen = rot_rng.choose_distinct(&occupied, rotate_count);
        for d_vox in chosen {
            let m = random_rotation(&mut rot_rng);
            let center = d_vox.center(k);
            for (p, &t) in points.iter_mut().zip(&targets) {
                if dest(t) == d_vox {
                    *p = rotate_about(*p, center, &m);
                }
            }
        }
    }

    // stage 2: voxel replacement
    if cfg.replace_count > 0 {
        let donor = donor.expect("checked above");
        let mut rep_rng = Rng::new(replace_seed);
        let donor_norm = scale_to_unit_cube(donor);
        let donor_assign = voxelize(&donor_norm, k);
        let occupied = occupied_destinations(&targets);
        let replace_count = cfg.replace_count.min(occupied.len());
        let chosen = rep_rng.choose_distinct(&occupied, replace_count);
        let inverse = perm.inverse();
        for d_vox in chosen {
            let donor_vox = donor_assign.occupied[rep_rng.index(donor_assign.occupied.len())];
            let mut kept_points = Vec::with_capacity(points.len());
            let mut kept_targets = Vec::with_capacity(targets.len());
            for (&p, &t) in points.iter().zip(&targets) {
                if dest(t) != d_vox {
                    kept_points.push(p);
                    kept_targets.push(t);
                }
            }
            let offset = d_vox.center(k) - donor_vox.center(k);
            let inserted_target = inverse.destination(d_vox);
            for (p, &id) in donor_norm.iter().zip(&donor_assign.ids) {
                if id == donor_vox {
                    kept_points.push(*p + offset);
                    kept_targets.push(inserted_target);
                }
            }
            points = kept_points;
            targets = kept_targets;
        }
    }

    // stage 3: jitter
    if cfg.jitter_sigma > 0.0 {
        let mut jit_rng = Rng::new(jitter_seed);
        let clip = cfg.jitter_clip;
        for p in &mut points {
            p.x += (jit_rng.gaussian() * cfg.jitter_sigma).clamp(-clip, clip);
            p.y += (jit_rng.gaussian() * cfg.jitter_sigma).clamp(-clip, clip);
            p.z += (jit_rng.gaussian() * cfg.jitter_sigma).clamp(-clip, clip);
        }
    }

    Ok(JigsawSample {
        shuffled: PointCloud::new(points)?,
        targets,
        permutation: perm,
    })
}

/// End-to-end sample generation: normalize, voxelize, draw a permutation,
/// displace, augment. Targets are the voxel IDs assigned *before* shuffling.
pub fn make_jigsaw_sample(
    cloud: &PointCloud,
    cfg: &JigsawConfig,
    rng: &mut Rng,
    donor: Option<&PointCloud>,
) -> Result<JigsawSample> {
    cfg.validate()?;
    let perm = VoxelPermutation::sample(rng, cfg.k);
    make_jigsaw_sample_with_permutation(cloud, cfg, perm, rng, donor)
}

/// Same pipeline with a caller-supplied permutation (test hook and preview).
pub fn make_jigsaw_sample_with_permutation(
    cloud: &PointCloud,
    cfg: &JigsawConfig,
    perm: VoxelPermutation,
    rng: &mut Rng,
    donor: Option<&PointCloud>,
) -> Result<JigsawSample> {
    cfg.validate()?;
    assert_eq!(perm.len(), cfg.num_classes(), "permutation size != k^3");
    let normalized = scale_to_unit_cube(cloud);
    let assignment = voxelize(&normalized, cfg.k);
    let shuffled = displace(&normalized, &assignment, &perm, cfg.k);
    augment(
        JigsawSample {
            shuffled,
            targets: assignment.ids,
            permutation: perm,
        },
        cfg,
        rng,
        donor,
    )
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    proptest! {
        /// encode/decode is a bijection for every k in 1..=6.
        #[test]
        fn voxel_id_roundtrip(k in 1usize..=6, ix in 0usize..6, iy in 0usize..6, iz in 0usize..6) {
            let (ix, iy, iz) = (ix % k, iy % k, iz % k);
            let id = VoxelId::encode(ix, iy, iz, k);
            prop_assert!(id.0 < k * k * k);
            prop_assert_eq!(id.decode(k), (ix, iy, iz));
        }

        #[test]
        fn scale_output_in_unit_cube(
            coords in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..64)
        ) {
            let cloud = PointCloud::new(
                coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()
            ).unwrap();
            let scaled = scale_to_unit_cube(&cloud);
            for p in scaled.iter() {
                for c in p.to_array() {
                    prop_assert!((0.0..=1.0).contains(&c));
                }
            }
        }

        /// Sorting the sampled mapping always yields 0..k^3 exactly once.
        #[test]
        fn sampled_permutation_bijective(seed in any::<u64>(), k in 1usize..=4) {
            let perm = VoxelPermutation::sample(&mut Rng::new(seed), k);
            let mut sorted = perm.mapping().to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..k * k * k).collect::<Vec<_>>());
        }
    }
}
