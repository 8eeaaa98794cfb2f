//! Deterministic pseudo-random number generation.
//!
//! Every random decision in the engine flows through [`Rng`]: a xorshift64*
//! generator whose state is seeded by one round of splitmix64. The exact
//! algorithm is fixed here so both interpreter backends (and any other
//! implementation of the same engine) agree on every draw.

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const XORSHIFT_STAR_MULT: u64 = 0x2545_F491_4F6C_DD1D;

/// One splitmix64 output step applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a parent seed and a path of
/// stream identifiers, e.g. `(run seed, generation, individual)`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// splitmix64-seeded xorshift64* generator that counts its draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    state: u64,
    draws: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            // xorshift has an all-zeros fixed point
            state = SPLITMIX_GAMMA;
        }
        Rng { state, draws: 0 }
    }

    /// Number of 64-bit outputs produced since construction.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        self.draws += 1;
        x.wrapping_mul(XORSHIFT_STAR_MULT)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision. Consumes one draw.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    ///
    /// Multiply-shift with rejection, so the result is unbiased; usually
    /// consumes one draw.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "Rng::below called with n = 0");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// Number of failures before the next success of a Bernoulli(`p`)
    /// process, i.e. the gap to the next selected site. `None` means the
    /// gap is infinite (`p == 0`).
    pub fn geometric_gap(&mut self, p: f64) -> Option<u64> {
        if p <= 0.0 {
            return None;
        }
        if p >= 1.0 {
            return Some(0);
        }
        // 1 - uniform() lies in (0, 1], so the log is finite
        let u = 1.0 - self.uniform();
        let gap = (u.ln() / (1.0 - p).ln()).floor();
        if gap >= u64::MAX as f64 {
            None
        } else {
            Some(gap as u64)
        }
    }
}

/// Iterates the indices in `0..len` selected independently with
/// probability `p`, using geometric gap sampling.
pub fn bernoulli_sites(rng: &mut Rng, len: usize, p: f64) -> Vec<usize> {
    let mut sites = Vec::new();
    let mut pos: u64 = 0;
    while let Some(gap) = rng.geometric_gap(p) {
        pos = match pos.checked_add(gap) {
            Some(v) => v,
            None => break,
        };
        if pos >= len as u64 {
            break;
        }
        sites.push(pos as usize);
        pos += 1;
    }
    sites
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.draws(), 100);
    }

    #[test]
    fn zero_seed_is_not_stuck() {
        let mut r = Rng::new(0);
        let x = r.next_u64();
        assert_ne!(x, r.next_u64());
    }

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference splitmix64 generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(SPLITMIX_GAMMA), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = Rng::new(3);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = Rng::new(11);
        let mut seen = [0usize; 5];
        for _ in 0..5_000 {
            seen[r.below_usize(5)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
    }

    #[test]
    fn bernoulli_sites_extremes() {
        let mut r = Rng::new(1);
        assert!(bernoulli_sites(&mut r, 100, 0.0).is_empty());
        assert_eq!(bernoulli_sites(&mut r, 10, 1.0), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn bernoulli_sites_rate_matches() {
        let mut r = Rng::new(5);
        let n = 200_000;
        let p = 0.01;
        let hits = bernoulli_sites(&mut r, n, p).len() as f64;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - mean).abs() < 4.0 * sd, "{hits} vs {mean}");
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(9, &[2, 3]), derive_seed(9, &[2, 3]));
    }
}
