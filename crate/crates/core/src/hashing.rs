//! Seeded polynomial hash families over the Mersenne prime 2^61 - 1.
//!
//! A family of degree `k` evaluates a random polynomial of degree `k - 1`,
//! which makes it k-wise independent. Location families map a value to a
//! bucket in `[0, width)`; sign families map it to `-1` or `+1`.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::sketch::EdgeId;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Universality degree used for every family the estimators build.
pub const DEFAULT_DEGREE: usize = 4;

#[inline]
fn reduce(x: u64) -> u64 {
    let r = (x & MERSENNE_61) + (x >> 61);
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    let prod = (a as u128) * (b as u128);
    let lo = (prod as u64) & MERSENNE_61;
    let hi = (prod >> 61) as u64;
    reduce(lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashKind {
    Location,
    Sign,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    kind: HashKind,
    seed: u64,
    width: usize,
    /// Constant term first; the last entry is the (nonzero) leading coefficient.
    coefficients: Vec<u64>,
}

/// Builds the family determined by `(kind, degree, width, seed)`.
///
/// `width` is ignored for sign families.
pub fn make_family(kind: HashKind, degree: usize, width: usize, seed: u64) -> Result<HashFamily> {
    if degree < 2 {
        return Err(Error::DegreeTooSmall(degree));
    }
    let width = match kind {
        HashKind::Location => {
            if !width.is_power_of_two() {
                return Err(Error::WidthNotPowerOfTwo(width));
            }
            width
        }
        HashKind::Sign => 2,
    };
    let mut rng = seeded(seed);
    let mut coefficients = Vec::with_capacity(degree);
    while coefficients.len() < degree {
        let c = rng.random::<u64>() >> 3;
        if c >= MERSENNE_61 {
            continue;
        }
        if coefficients.len() + 1 == degree && c == 0 {
            continue;
        }
        coefficients.push(c);
    }
    Ok(HashFamily {
        kind,
        seed,
        width,
        coefficients,
    })
}

impl HashFamily {
    pub fn kind(&self) -> HashKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coefficients
    }

    #[inline]
    fn polynomial(&self, value: u64) -> u64 {
        let x = reduce(reduce(value));
        self.coefficients
            .iter()
            .rev()
            .fold(0u64, |acc, &c| reduce(mul_mod(acc, x) + c))
    }

    /// Bucket for a location family; the caller has checked the kind.
    #[inline]
    pub(crate) fn bucket_unchecked(&self, value: u64) -> usize {
        (self.polynomial(value) as usize) & (self.width - 1)
    }

    /// Sign for a sign family; the caller has checked the kind.
    #[inline]
    pub(crate) fn sign_unchecked(&self, value: u64) -> i8 {
        if self.polynomial(value) & 1 == 1 {
            1
        } else {
            -1
        }
    }
}

pub fn eval_location(family: &HashFamily, value: u64) -> Result<usize> {
    match family.kind {
        HashKind::Location => Ok(family.bucket_unchecked(value)),
        HashKind::Sign => Err(Error::WrongHashKind { expected: "location" }),
    }
}

pub fn eval_sign(family: &HashFamily, value: u64) -> Result<i8> {
    match family.kind {
        HashKind::Sign => Ok(family.sign_unchecked(value)),
        HashKind::Location => Err(Error::WrongHashKind { expected: "sign" }),
    }
}

/// The `(h, xi)` pair one join edge uses within one estimator copy. Both
/// endpoints of the edge derive the identical pair from the model seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeHashAssignment {
    pub edge: EdgeId,
    pub copy: u32,
    pub location: HashFamily,
    pub sign: HashFamily,
}

const LOCATION_TAG: u64 = 0x6c6f_6361_7469_6f6e;
const SIGN_TAG: u64 = 0x7369_676e;

impl EdgeHashAssignment {
    pub fn derive(master_seed: u64, edge: EdgeId, copy: u32, width: usize) -> Result<Self> {
        let path = [edge.0 as u64, copy as u64];
        let loc_seed = derive_seed(master_seed, &[path[0], path[1], LOCATION_TAG]);
        let sign_seed = derive_seed(master_seed, &[path[0], path[1], SIGN_TAG]);
        Ok(Self {
            edge,
            copy,
            location: make_family(HashKind::Location, DEFAULT_DEGREE, width, loc_seed)?,
            sign: make_family(HashKind::Sign, DEFAULT_DEGREE, 0, sign_seed)?,
        })
    }
}
