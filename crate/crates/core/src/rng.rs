//! Counter-based Philox4x64-10 generator.
//!
//! Every random number is a pure function of `(counter, key)`, so draws can
//! be addressed by (particle, step) and produced in any order or thread
//! without changing the result.

const M0: u64 = 0xD2E7_470E_E14C_6C93;
const M1: u64 = 0xCA5A_8263_9512_1157;
const W0: u64 = 0x9E37_79B9_7F4A_7C15;
const W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = u128::from(a) * u128::from(b);
    ((p >> 64) as u64, p as u64)
}

/// One Philox4x64 block with ten rounds.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Maps 64 random bits to `(0, 1)`, never returning either endpoint.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Stream of blocks keyed by a seed and a stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Philox {
    key: [u64; 2],
}

impl Philox {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { key: [seed, stream] }
    }

    pub fn key(&self) -> [u64; 2] {
        self.key
    }

    /// The block at counter `(a, b, lane, 0)`.
    #[inline]
    pub fn block(&self, a: u64, b: u64, lane: u64) -> [u64; 4] {
        philox4x64([a, b, lane, 0], self.key)
    }

    /// Two independent standard normals for `(a, b, lane)` by Box-Muller,
    /// plus two spare uniforms from the same block.
    #[inline]
    pub fn normals(&self, a: u64, b: u64, lane: u64) -> ([f64; 2], [f64; 2]) {
        let r = self.block(a, b, lane);
        let (u1, u2) = (open_unit(r[0]), open_unit(r[1]));
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        ([radius * cos, radius * sin], [open_unit(r[2]), open_unit(r[3])])
    }
}
