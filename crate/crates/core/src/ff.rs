//! Arithmetic in the prime field F_p together with its additive character
//! `psi(t) = exp(2 pi i t / p)`, the Legendre symbol and the multiplicative
//! characters indexed through a fixed primitive root.
//!
//! Two layers live here. [`FieldElement`] is the checked value type used at
//! API boundaries. [`PrimeField`] precomputes the O(p) lookup tables
//! (inverses, Legendre symbols, `psi`, discrete logarithms) that the hot
//! loops in the rest of the crate index with raw `u64` residues.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex number used for character values; lies on the unit circle.
pub type UnitComplex = Complex64;

pub fn is_odd_prime(p: u64) -> bool {
    if p < 3 || p.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

pub(crate) fn check_prime(p: u64) -> Result<()> {
    if is_odd_prime(p) {
        Ok(())
    } else {
        Err(Error::NotOddPrime(p))
    }
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Reduces a signed integer into `[0, p)`.
#[inline]
pub fn reduce(value: i128, p: u64) -> u64 {
    value.rem_euclid(p as i128) as u64
}

pub(crate) fn distinct_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// A residue modulo an odd prime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    pub fn new(value: i64, modulus: u64) -> Result<Self> {
        check_prime(modulus)?;
        Ok(Self::from_residue(reduce(value as i128, modulus), modulus))
    }

    /// The caller guarantees `value < modulus` and that `modulus` is an odd prime.
    #[inline]
    pub(crate) fn from_residue(value: u64, modulus: u64) -> Self {
        debug_assert!(value < modulus);
        Self { value, modulus }
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn pow(self, exp: u64) -> Self {
        Self::from_residue(pow_mod(self.value, exp, self.modulus), self.modulus)
    }

    fn same_field(self, other: Self) {
        assert_eq!(
            self.modulus, other.modulus,
            "field elements from different moduli"
        );
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.same_field(rhs);
        let s = self.value + rhs.value;
        let s = if s >= self.modulus { s - self.modulus } else { s };
        Self::from_residue(s, self.modulus)
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.same_field(rhs);
        let s = if self.value >= rhs.value {
            self.value - rhs.value
        } else {
            self.value + self.modulus - rhs.value
        };
        Self::from_residue(s, self.modulus)
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.same_field(rhs);
        Self::from_residue(mul_mod(self.value, rhs.value, self.modulus), self.modulus)
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        if self.value == 0 {
            self
        } else {
            Self::from_residue(self.modulus - self.value, self.modulus)
        }
    }
}

/// Multiplicative inverse by the extended Euclidean algorithm.
pub fn inv_mod(a: FieldElement) -> Result<FieldElement> {
    if a.value == 0 {
        return Err(Error::ZeroInverse(a.modulus));
    }
    let (mut r0, mut r1) = (a.modulus as i128, a.value as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1);
    Ok(FieldElement::from_residue(reduce(t0, a.modulus), a.modulus))
}

/// Legendre symbol `(a / p)` in {-1, 0, 1}, computed with the binary Jacobi
/// algorithm (no exponentiation, so Euler's criterion is an independent check).
pub fn legendre(a: FieldElement) -> i8 {
    jacobi(a.value, a.modulus)
}

pub(crate) fn jacobi(a: u64, n: u64) -> i8 {
    let mut a = a % n;
    let mut n = n;
    let mut sign = 1i8;
    while a != 0 {
        while a.is_multiple_of(2) {
            a /= 2;
            if matches!(n % 8, 3 | 5) {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        a %= n;
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// The additive character `t -> exp(2 pi i t / p)`.
pub fn psi(t: FieldElement) -> UnitComplex {
    Complex64::from_polar(1.0, TAU * t.value as f64 / t.modulus as f64)
}

/// Smallest generator of F_p^x.
pub fn primitive_root(p: u64) -> Result<FieldElement> {
    check_prime(p)?;
    let order = p - 1;
    let factors = distinct_prime_factors(order);
    let g = (2..p)
        .find(|&g| factors.iter().all(|&q| pow_mod(g, order / q, p) != 1))
        .unwrap_or(1);
    Ok(FieldElement::from_residue(g % p, p))
}

/// Precomputed tables for one prime. Residues passed to the accessors must
/// already be reduced into `[0, p)`.
#[derive(Clone, Debug)]
pub struct PrimeField {
    p: u64,
    generator: u64,
    inverse: Vec<u64>,
    legendre: Vec<i8>,
    psi: Vec<Complex64>,
    dlog: Vec<u32>,
    half: u64,
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self> {
        check_prime(p)?;
        let generator = primitive_root(p)?.value();
        let n = p as usize;
        let mut inverse = vec![0u64; n];
        let mut dlog = vec![u32::MAX; n];
        let mut pow = 1u64;
        for m in 0..(n - 1) {
            dlog[pow as usize] = m as u32;
            pow = mul_mod(pow, generator, p);
        }
        // a = g^m has inverse g^(p-1-m)
        let mut pow = 1u64;
        let mut powers = vec![0u64; n - 1];
        for slot in powers.iter_mut() {
            *slot = pow;
            pow = mul_mod(pow, generator, p);
        }
        for a in 1..n {
            let m = dlog[a] as usize;
            inverse[a] = powers[(n - 1 - m) % (n - 1)];
        }
        let legendre = (0..p).map(|a| jacobi(a, p)).collect();
        let psi = (0..p)
            .map(|t| Complex64::from_polar(1.0, TAU * t as f64 / p as f64))
            .collect();
        Ok(Self {
            p,
            generator,
            inverse,
            legendre,
            psi,
            dlog,
            half: p.div_ceil(2),
        })
    }

    #[inline]
    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn element(&self, value: i64) -> FieldElement {
        FieldElement::from_residue(reduce(value as i128, self.p), self.p)
    }

    #[inline]
    pub fn generator(&self) -> u64 {
        self.generator
    }

    /// 2^-1 mod p.
    #[inline]
    pub fn half(&self) -> u64 {
        self.half
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        mul_mod(a, b, self.p)
    }

    /// Table inverse; `a` must be nonzero.
    #[inline]
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a != 0);
        self.inverse[a as usize]
    }

    pub fn checked_inv(&self, a: u64) -> Result<u64> {
        if a.is_multiple_of(self.p) {
            Err(Error::ZeroInverse(self.p))
        } else {
            Ok(self.inverse[(a % self.p) as usize])
        }
    }

    #[inline]
    pub fn legendre(&self, a: u64) -> i8 {
        self.legendre[a as usize]
    }

    #[inline]
    pub fn psi(&self, t: u64) -> Complex64 {
        self.psi[t as usize]
    }

    /// Discrete logarithm base the primitive root; `a` must be nonzero.
    #[inline]
    pub fn dlog(&self, a: u64) -> u64 {
        debug_assert!(a != 0);
        self.dlog[a as usize] as u64
    }

    /// `chi_k(g^m) = exp(2 pi i k m / (p - 1))`, extended by `chi_k(0) = 0`.
    pub fn mult_character(&self, k: u64, a: u64) -> Complex64 {
        if a == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let order = self.p - 1;
        let e = mul_mod(k % order, self.dlog(a), order);
        Complex64::from_polar(1.0, TAU * e as f64 / order as f64)
    }

    /// Quadratic Gauss sum `sum_x psi(x^2)`: `sqrt(p)` for p = 1 mod 4,
    /// `i sqrt(p)` for p = 3 mod 4.
    pub fn gauss_sum(&self) -> Complex64 {
        let r = (self.p as f64).sqrt();
        if self.p % 4 == 1 {
            Complex64::new(r, 0.0)
        } else {
            Complex64::new(0.0, r)
        }
    }
}
