//! Deterministic random number generation.
//!
//! Every random draw in this crate goes through [`Rng`], a xoshiro256**
//! generator seeded via splitmix64. No platform or thread-local randomness is
//! used anywhere, so a run is fully determined by its seed on every platform.
//!
//! Parallel or per-sample work derives independent streams with
//! [`Rng::stream`] / [`Rng::stream2`]; the derived state depends only on
//! `(seed, index)`, never on call order.

/// Stream purpose tags for [`Rng::stream2`], one per independent source of
/// randomness so draw counts in one place can never shift another.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const FEWSHOT: u64 = 5;
    pub const DATA: u64 = 6;
    pub const PREVIEW: u64 = 7;
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic xoshiro256** generator.
#[derive(Clone, Debug)]
pub struct Rng {
    state: [u64; 4],
    gauss_spare: Option<f64>,
}

impl Rng {
    /// Generator whose entire draw sequence is determined by `seed`.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng {
            state,
            gauss_spare: None,
        }
    }

    /// Independent stream `index` of the family rooted at `seed`.
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::stream2(seed, index, 0)
    }

    /// Independent stream addressed by two indices (e.g. purpose + item).
    pub fn stream2(seed: u64, a: u64, b: u64) -> Self {
        let mut s0 = seed;
        let mut s1 = a.wrapping_add(1);
        let mut s2 = b.wrapping_add(1);
        let mixed = splitmix64(&mut s0)
            ^ splitmix64(&mut s1).rotate_left(21)
            ^ splitmix64(&mut s2).rotate_left(42);
        Rng::new(mixed)
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        let result = self.state[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.state[1] << 17;
        self.state[2] ^= self.state[0];
        self.state[3] ^= self.state[1];
        self.state[1] ^= self.state[2];
        self.state[0] ^= self.state[3];
        self.state[2] ^= t;
        self.state[3] = self.state[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Unbiased uniform integer in `[0, m)` (Lemire's multiply-shift with
    /// rejection). `m == 0` is a contract violation.
    pub fn int(&mut self, m: u64) -> u64 {
        assert!(m >= 1, "rng.int: m must be >= 1");
        let mut x = self.next_u64();
        let mut product = (x as u128) * (m as u128);
        let mut low = product as u64;
        if low < m {
            let threshold = m.wrapping_neg() % m;
            while low < threshold {
                x = self.next_u64();
                product = (x as u128) * (m as u128);
                low = product as u64;
            }
        }
        (product >> 64) as u64
    }

    /// Uniform index into a collection of length `len`.
    pub fn index(&mut self, len: usize) -> usize {
        self.int(len as u64) as usize
    }

    /// Standard normal draw (Box–Muller, spare value cached).
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.gauss_spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.gauss_spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Uniform sample of `count` distinct items (partial Fisher–Yates).
    /// Preserves draw order of selection.
    pub fn choose_distinct<T: Copy>(&mut self, pool: &[T], count: usize) -> Vec<T> {
        assert!(count <= pool.len(), "choose_distinct: count exceeds pool");
        let mut items = pool.to_vec();
        for i in 0..count {
            let j = i + self.index(items.len() - i);
            items.swap(i, j);
        }
        items.truncate(count);
        items
    }
}
