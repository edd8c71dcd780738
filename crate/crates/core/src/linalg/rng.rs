//! Deterministic randomness.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (the reference
//! seeding procedure for the xoshiro family). Child streams are derived as
//! `seed ^ fnv1a64(label)`, so every consumer of randomness can be given its
//! own stream without coordinating draw order with anyone else.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::DenseVector;
use crate::error::{Error, Result};

/// 64-bit FNV-1a hash of a label.
pub fn fnv1a64(label: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    label
        .bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// SplitMix64 finalizer; used to mix integer indices into seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded, single-owner random stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the child stream named `label`.
    pub fn child_seed(seed: u64, label: &str) -> u64 {
        seed ^ fnv1a64(label)
    }

    /// Independent child stream; does not advance `self`.
    pub fn child(&self, label: &str) -> SeededRng {
        SeededRng::new(Self::child_seed(self.seed, label))
    }

    /// Child stream keyed by an integer index (e.g. an image index).
    pub fn indexed(seed: u64, index: u64) -> SeededRng {
        SeededRng::new(seed ^ mix64(index))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Mean or standard deviation argument for [`sample_gaussian`]: either one
/// value for every coordinate or one value per coordinate.
#[derive(Clone, Copy, Debug)]
pub enum Broadcast<'a> {
    Scalar(f64),
    Vector(&'a DenseVector),
}

impl Broadcast<'_> {
    fn at(&self, i: usize) -> f64 {
        match self {
            Broadcast::Scalar(v) => *v,
            Broadcast::Vector(v) => v[i],
        }
    }

    fn check(&self, len: usize, what: &str) -> Result<()> {
        match self {
            Broadcast::Vector(v) if v.len() != len => Err(Error::Dimension {
                op: "sample_gaussian",
                left: (len, 1),
                right: (v.len(), 1),
            }),
            Broadcast::Scalar(v) if !v.is_finite() => {
                Err(Error::Domain(format!("{what} must be finite")))
            }
            _ => Ok(()),
        }
    }
}

/// Independent per-coordinate normal draws `N(mean_i, std_i²)`.
pub fn sample_gaussian(
    rng: &mut SeededRng,
    len: usize,
    mean: Broadcast<'_>,
    std: Broadcast<'_>,
) -> Result<DenseVector> {
    mean.check(len, "mean")?;
    std.check(len, "std")?;
    if (0..len).any(|i| std.at(i) < 0.0) || matches!(std, Broadcast::Scalar(s) if s < 0.0) {
        return Err(Error::Domain("negative standard deviation".into()));
    }
    let data = (0..len)
        .map(|i| mean.at(i) + std.at(i) * rng.standard_normal())
        .collect();
    DenseVector::from_vec(data)
}
