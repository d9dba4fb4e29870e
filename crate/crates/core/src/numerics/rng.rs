//! Pinned deterministic pseudorandom generator.
//!
//! The algorithm is fixed for the life of the on-disk formats: a SplitMix64
//! stage expands the 64-bit seed into the 256-bit state of a xoshiro256**
//! core (Blackman & Vigna's reference constants). Identical seeds produce
//! identical streams on every platform, which is what makes multi-seed runs
//! and checkpoint resume reproducible byte for byte.

/// Deterministic PRNG state: xoshiro256** seeded via SplitMix64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    s: [u64; 4],
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        RngState { seed, s }
    }

    /// The seed this state was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive a decorrelated child seed for a named sub-stream.
    ///
    /// Used by the training harness to give weight init, subset selection,
    /// and each epoch's shuffle their own streams so that checkpoint resume
    /// can rebuild any of them from (seed, stream id) alone.
    pub fn child_seed(master: u64, stream: u64) -> u64 {
        let mut sm = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        splitmix64(&mut sm)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform `f64` in `[0, 1)` from the top 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by rejection sampling (unbiased).
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_below requires a positive bound");
        let bound = bound as u64;
        let mask = u64::MAX >> bound.leading_zeros().min(63);
        loop {
            let v = self.next_u64() & mask;
            if v < bound {
                return v as usize;
            }
        }
    }

    /// In-place Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// A seeded permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle(&mut order);
        order
    }
}
