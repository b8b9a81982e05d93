//! Splittable random streams.
//!
//! A stream is a ChaCha8 keystream addressed by `(seed, domain, stream,
//! offset)`. Every replicate, particle step and resampling pass reads its
//! own address, so results never depend on how work is scheduled across
//! threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Purpose of a substream. Distinct domains never share keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Replicate,
    ParticleInit,
    ParticleStep,
    Resample,
    Path,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Replicate => 0x5265_706c_6963_6174,
            Domain::ParticleInit => 0x5061_7274_496e_6974,
            Domain::ParticleStep => 0x5061_7274_5374_6570,
            Domain::Resample => 0x5265_7361_6d70_6c65,
            Domain::Path => 0x5061_7468_5061_7468,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64, domain: Domain) -> [u8; 32] {
    let mut state = seed ^ domain.tag();
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// Words of keystream reserved per offset slot in [`Stream::at`].
const SLOT_WORDS: u128 = 256;

/// All substreams of one `(seed, domain)` pair, with the key schedule done
/// once.
#[derive(Clone)]
pub struct StreamFamily {
    base: ChaCha8Rng,
}

impl StreamFamily {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Self {
            base: ChaCha8Rng::from_seed(key(seed, domain)),
        }
    }

    pub fn stream(&self, stream: u64) -> Stream {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        Stream { rng }
    }

    pub fn at(&self, stream: u64, offset: u64) -> Stream {
        let mut s = self.stream(stream);
        s.rng.set_word_pos(offset as u128 * SLOT_WORDS);
        s
    }
}

#[derive(Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    /// Substream of replicate `index`.
    pub fn new(seed: u64, index: u64) -> Self {
        Self::keyed(seed, Domain::Replicate, index)
    }

    pub fn keyed(seed: u64, domain: Domain, stream: u64) -> Self {
        StreamFamily::new(seed, domain).stream(stream)
    }

    /// Random access: slot `offset` of `stream`. Each slot holds 128 draws
    /// before running into the next one.
    pub fn at(seed: u64, domain: Domain, stream: u64, offset: u64) -> Self {
        StreamFamily::new(seed, domain).at(stream, offset)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in 0..n.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_open01() * n as f64) as usize).min(n - 1)
    }
}
