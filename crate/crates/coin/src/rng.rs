//! Seeded, splittable random number streams.
//!
//! Every random choice in the pipeline is drawn from a [`Stream`], a
//! splitmix64 generator whose state can be forked into independent child
//! streams keyed by strings or integers. Streams derived from the same
//! (seed, key path) are identical across runs and platforms, which is what
//! makes augmentation, training and perturbation byte-reproducible.
//!
//! Derivation rule (documented so outputs can be reproduced elsewhere):
//! a child stream's state is `mix(parent_state ^ fnv1a64(key))`, where
//! `fnv1a64` is the 64-bit FNV-1a hash of the key bytes (integers are
//! hashed as 8 little-endian bytes) and `mix` is the splitmix64 output
//! function. Draws advance the state by the splitmix64 increment.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic splitmix64 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn from_seed(seed: u64) -> Self {
        Stream { state: mix(seed ^ GOLDEN_GAMMA) }
    }

    /// Forks an independent child stream keyed by a string label.
    pub fn derive(&self, key: &str) -> Self {
        Stream { state: mix(self.state ^ fnv1a64(key.as_bytes())) }
    }

    /// Forks an independent child stream keyed by an integer label.
    pub fn derive_u64(&self, key: u64) -> Self {
        Stream { state: mix(self.state ^ fnv1a64(&key.to_le_bytes())) }
    }

    /// Raw state, persisted in checkpoints.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn from_state(state: u64) -> Self {
        Stream { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Uses the widening-multiply reduction,
    /// which is bias-free enough for n far below 2^64 and branch-free.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Chooses one element of a slice.
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    /// Draws `k` distinct indices from [0, n) in selection order
    /// (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} from {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
