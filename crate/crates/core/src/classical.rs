//! Classical side: integer and mod-p symplectic 2x2 matrices, lattice
//! vectors, hyperbolicity, the Hecke torus (centralizer of `A` in
//! SL_2(F_p)) with its characters, and the conjugation of a split Hecke
//! torus onto the diagonal torus.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ff::{self, check_prime, distinct_prime_factors, reduce, PrimeField};

/// An element of SL_2(Z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymplecticMatrixZ {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl SymplecticMatrixZ {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        let det = a * d - b * c;
        if det != 1 {
            return Err(Error::NonUnimodular { det });
        }
        Ok(Self { a, b, c, d })
    }

    /// The cat map `[[2, 1], [1, 1]]`.
    pub fn cat_map() -> Self {
        Self { a: 2, b: 1, c: 1, d: 1 }
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    pub fn reduce(&self, p: u64) -> SymplecticMatrixP {
        SymplecticMatrixP {
            a: reduce(self.a as i128, p),
            b: reduce(self.b as i128, p),
            c: reduce(self.c as i128, p),
            d: reduce(self.d as i128, p),
            p,
        }
    }
}

impl fmt::Display for SymplecticMatrixZ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// An element of SL_2(F_p). Entries are reduced residues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymplecticMatrixP {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub p: u64,
}

impl SymplecticMatrixP {
    pub fn new(a: i64, b: i64, c: i64, d: i64, p: u64) -> Result<Self> {
        check_prime(p)?;
        let m = Self {
            a: reduce(a as i128, p),
            b: reduce(b as i128, p),
            c: reduce(c as i128, p),
            d: reduce(d as i128, p),
            p,
        };
        let det = m.det();
        if det != 1 {
            return Err(Error::NonUnimodular { det: det as i64 });
        }
        Ok(m)
    }

    pub fn identity(p: u64) -> Self {
        Self { a: 1, b: 0, c: 0, d: 1, p }
    }

    /// `diag(x, x^-1)`; `x` must be a nonzero residue.
    pub fn diagonal(field: &PrimeField, x: u64) -> Self {
        Self { a: x, b: 0, c: 0, d: field.inv(x), p: field.p() }
    }

    pub fn det(&self) -> u64 {
        let p = self.p;
        reduce(
            (self.a as i128 * self.d as i128) - (self.b as i128 * self.c as i128),
            p,
        )
    }

    pub fn trace(&self) -> u64 {
        (self.a + self.d) % self.p
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1 && self.b == 0 && self.c == 0 && self.d == 1
    }

    pub fn is_diagonal(&self) -> bool {
        self.b == 0 && self.c == 0
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.p, rhs.p);
        let p = self.p as u128;
        let dot = |x: u64, y: u64, z: u64, w: u64| {
            ((x as u128 * y as u128 + z as u128 * w as u128) % p) as u64
        };
        Self {
            a: dot(self.a, rhs.a, self.b, rhs.c),
            b: dot(self.a, rhs.b, self.b, rhs.d),
            c: dot(self.c, rhs.a, self.d, rhs.c),
            d: dot(self.c, rhs.b, self.d, rhs.d),
            p: self.p,
        }
    }

    /// Inverse of a determinant-one matrix: `[[d, -b], [-c, a]]`.
    pub fn inverse(&self) -> Self {
        let neg = |x: u64| if x == 0 { 0 } else { self.p - x };
        Self { a: self.d, b: neg(self.b), c: neg(self.c), d: self.a, p: self.p }
    }

    pub fn pow(&self, mut exp: u64) -> Self {
        let mut acc = Self::identity(self.p);
        let mut base = *self;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            exp >>= 1;
        }
        acc
    }

    /// `S B S^-1`.
    pub fn conjugate(&self, b: &Self) -> Self {
        self.mul(b).mul(&self.inverse())
    }

    /// Matrix acting on the column vector `(lambda, mu)`.
    pub fn apply(&self, xi: WeylIndex) -> WeylIndex {
        let p = self.p as u128;
        let (l, m) = (xi.lambda as u128, xi.mu as u128);
        WeylIndex {
            lambda: ((self.a as u128 * l + self.b as u128 * m) % p) as u64,
            mu: ((self.c as u128 * l + self.d as u128 * m) % p) as u64,
        }
    }

    pub fn entries(&self) -> [u64; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

impl fmt::Display for SymplecticMatrixP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]] mod {}", self.a, self.b, self.c, self.d, self.p)
    }
}

/// A character of the torus given by an integer vector `(lambda, mu)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeVector {
    pub lambda: i64,
    pub mu: i64,
}

impl LatticeVector {
    pub fn new(lambda: i64, mu: i64) -> Self {
        Self { lambda, mu }
    }

    pub fn reduce(&self, p: u64) -> WeylIndex {
        WeylIndex {
            lambda: reduce(self.lambda as i128, p),
            mu: reduce(self.mu as i128, p),
        }
    }
}

/// A point `(lambda, mu)` of F_p^2, indexing the Weyl operator basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeylIndex {
    pub lambda: u64,
    pub mu: u64,
}

impl WeylIndex {
    pub const ZERO: WeylIndex = WeylIndex { lambda: 0, mu: 0 };

    pub fn new(lambda: i64, mu: i64, p: u64) -> Self {
        LatticeVector::new(lambda, mu).reduce(p)
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0 && self.mu == 0
    }

    pub fn neg(&self, p: u64) -> Self {
        let n = |x: u64| if x == 0 { 0 } else { p - x };
        Self { lambda: n(self.lambda), mu: n(self.mu) }
    }

    pub fn add(&self, other: &Self, p: u64) -> Self {
        Self {
            lambda: (self.lambda + other.lambda) % p,
            mu: (self.mu + other.mu) % p,
        }
    }

    /// `omega(xi, eta) = xi.lambda * eta.mu - xi.mu * eta.lambda` mod p.
    pub fn omega(&self, other: &Self, p: u64) -> u64 {
        reduce(
            self.lambda as i128 * other.mu as i128 - self.mu as i128 * other.lambda as i128,
            p,
        )
    }

    /// Every point of F_p^2 except the origin, in lexicographic order.
    pub fn all_nonzero(p: u64) -> impl Iterator<Item = WeylIndex> {
        (0..p)
            .flat_map(move |lambda| (0..p).map(move |mu| WeylIndex { lambda, mu }))
            .filter(|xi| !xi.is_zero())
    }
}

impl fmt::Display for WeylIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lambda, self.mu)
    }
}

pub fn is_hyperbolic(a: &SymplecticMatrixZ) -> bool {
    a.trace().abs() > 2
}

pub fn symplectic_form(xi: &LatticeVector, eta: &LatticeVector) -> i64 {
    xi.lambda * eta.mu - xi.mu * eta.lambda
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitType {
    Split,
    NonSplit,
    Degenerate,
}

impl SplitType {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitType::Split => "split",
            SplitType::NonSplit => "nonsplit",
            SplitType::Degenerate => "degenerate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "split" => Some(SplitType::Split),
            "nonsplit" => Some(SplitType::NonSplit),
            "degenerate" => Some(SplitType::Degenerate),
            _ => None,
        }
    }
}

impl fmt::Display for SplitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies `p` by the Legendre symbol of the discriminant `tr(A)^2 - 4`.
pub fn splitting_type(a: &SymplecticMatrixZ, p: u64) -> SplitType {
    let t = a.trace() as i128;
    let disc = reduce(t * t - 4, p);
    match ff::jacobi(disc, p) {
        1 => SplitType::Split,
        -1 => SplitType::NonSplit,
        _ => SplitType::Degenerate,
    }
}

/// The centralizer `T_A` of `A` in SL_2(F_p), stored in power order of its
/// cyclic generator: `elements[m] = generator^m`.
#[derive(Clone, Debug)]
pub struct HeckeTorus {
    matrix: SymplecticMatrixZ,
    a_bar: SymplecticMatrixP,
    elements: Vec<SymplecticMatrixP>,
    generator: SymplecticMatrixP,
    split_type: SplitType,
    exponent: HashMap<SymplecticMatrixP, usize>,
}

impl HeckeTorus {
    pub fn p(&self) -> u64 {
        self.a_bar.p
    }

    pub fn matrix(&self) -> &SymplecticMatrixZ {
        &self.matrix
    }

    /// `A mod p`.
    pub fn a_bar(&self) -> &SymplecticMatrixP {
        &self.a_bar
    }

    pub fn elements(&self) -> &[SymplecticMatrixP] {
        &self.elements
    }

    pub fn generator(&self) -> &SymplecticMatrixP {
        &self.generator
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn split_type(&self) -> SplitType {
        self.split_type
    }

    /// `m` with `B = generator^m`, if `B` lies in the torus.
    pub fn exponent_of(&self, b: &SymplecticMatrixP) -> Option<usize> {
        self.exponent.get(b).copied()
    }

    pub fn contains(&self, b: &SymplecticMatrixP) -> bool {
        self.exponent.contains_key(b)
    }
}

/// Candidates `x I + y A` with determinant one, lexicographic in `(x, y)`.
pub(crate) fn centralizer_candidates(a_bar: &SymplecticMatrixP) -> Vec<SymplecticMatrixP> {
    let p = a_bar.p;
    let t = a_bar.trace() as u128;
    let mut out = Vec::new();
    for x in 0..p {
        for y in 0..p {
            // det(xI + yA) = x^2 + t x y + y^2 since det A = 1
            let (xx, yy) = (x as u128, y as u128);
            let det = (xx * xx + t * xx * yy + yy * yy) % p as u128;
            if det == 1 {
                let m = |u: u64, v: u64| ((xx * u as u128 + yy * v as u128) % p as u128) as u64;
                out.push(SymplecticMatrixP {
                    a: m(1, a_bar.a),
                    b: m(0, a_bar.b),
                    c: m(0, a_bar.c),
                    d: m(1, a_bar.d),
                    p,
                });
            }
        }
    }
    out
}

fn has_order(b: &SymplecticMatrixP, n: u64, prime_factors: &[u64]) -> bool {
    b.pow(n).is_identity() && prime_factors.iter().all(|&q| !b.pow(n / q).is_identity())
}

pub fn hecke_torus(a: &SymplecticMatrixZ, p: u64) -> Result<HeckeTorus> {
    check_prime(p)?;
    let split_type = splitting_type(a, p);
    let n = match split_type {
        SplitType::Split => p - 1,
        SplitType::NonSplit => p + 1,
        SplitType::Degenerate => return Err(Error::DegenerateTorus { p }),
    };
    let a_bar = a.reduce(p);
    let candidates = centralizer_candidates(&a_bar);
    debug_assert_eq!(candidates.len() as u64, n);
    let factors = distinct_prime_factors(n);
    let generator = *candidates
        .iter()
        .find(|b| has_order(b, n, &factors))
        .expect("the centralizer of a regular semisimple element is cyclic");
    let mut elements = Vec::with_capacity(n as usize);
    let mut cur = SymplecticMatrixP::identity(p);
    for _ in 0..n {
        elements.push(cur);
        cur = cur.mul(&generator);
    }
    let exponent = elements.iter().enumerate().map(|(m, b)| (*b, m)).collect();
    Ok(HeckeTorus {
        matrix: *a,
        a_bar,
        elements,
        generator,
        split_type,
        exponent,
    })
}

/// The character `chi_k(generator^m) = exp(2 pi i k m / N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusCharacter {
    pub index: usize,
    pub order: usize,
}

impl TorusCharacter {
    pub fn new(index: usize, order: usize) -> Result<Self> {
        if index >= order {
            return Err(Error::CharacterOutOfRange { index, order });
        }
        Ok(Self { index, order })
    }

    pub fn is_trivial(&self) -> bool {
        self.index == 0
    }

    pub fn conj(&self) -> Self {
        Self { index: (self.order - self.index) % self.order, order: self.order }
    }

    /// Value at `generator^m`.
    pub fn at_exponent(&self, m: usize) -> Complex64 {
        let e = (self.index * m) % self.order;
        Complex64::from_polar(1.0, TAU * e as f64 / self.order as f64)
    }

    pub fn eval(&self, torus: &HeckeTorus, b: &SymplecticMatrixP) -> Option<Complex64> {
        torus.exponent_of(b).map(|m| self.at_exponent(m))
    }
}

pub fn torus_characters(torus: &HeckeTorus) -> Vec<TorusCharacter> {
    let n = torus.order();
    (0..n).map(|index| TorusCharacter { index, order: n }).collect()
}

/// The roots of `t^2 - tr(A) t + 1` in F_p, ascending.
pub fn eigenvalues(a_bar: &SymplecticMatrixP) -> Vec<u64> {
    let p = a_bar.p as u128;
    let tr = a_bar.trace() as u128;
    (0..a_bar.p)
        .filter(|&t| {
            let t = t as u128;
            (t * t + p * p - tr * t + 1).is_multiple_of(p)
        })
        .collect()
}

fn eigenvector(field: &PrimeField, m: &SymplecticMatrixP, alpha: u64) -> (u64, u64) {
    let (x, y) = if m.b != 0 || m.a != alpha {
        (m.b, field.sub(alpha, m.a))
    } else {
        (field.sub(alpha, m.d), m.c)
    };
    let lead = if x != 0 { x } else { y };
    let s = field.inv(lead);
    (field.mul(x, s), field.mul(y, s))
}

/// Uniform sample from SL_2(F_p): a uniform nonzero first column, then a
/// uniform completion.
pub fn random_sl2<R: Rng + ?Sized>(rng: &mut R, field: &PrimeField) -> SymplecticMatrixP {
    let p = field.p();
    let (a, c) = loop {
        let (a, c) = (rng.gen_range(0..p), rng.gen_range(0..p));
        if a != 0 || c != 0 {
            break (a, c);
        }
    };
    let t = rng.gen_range(0..p);
    let (b, d) = if a != 0 {
        (t, field.mul(field.add(1, field.mul(t, c)), field.inv(a)))
    } else {
        (field.neg(field.inv(c)), t)
    };
    SymplecticMatrixP { a, b, c, d, p }
}

pub fn random_weyl_index<R: Rng + ?Sized>(rng: &mut R, p: u64, nonzero: bool) -> WeylIndex {
    loop {
        let xi = WeylIndex { lambda: rng.gen_range(0..p), mu: rng.gen_range(0..p) };
        if !(nonzero && xi.is_zero()) {
            return xi;
        }
    }
}

/// `S` in SL_2(F_p) with `S B S^-1` diagonal for every `B` in the split
/// Hecke torus. The columns of `S^-1` are eigenvectors of `A mod p`; the
/// first is normalized to leading coordinate 1 and the second scaled to make
/// the determinant one. `S A S^-1 = diag(alpha, alpha^-1)` with `alpha` the
/// smaller root.
pub fn conjugator_to_standard(a: &SymplecticMatrixZ, p: u64) -> Result<SymplecticMatrixP> {
    check_prime(p)?;
    let split = splitting_type(a, p);
    if split != SplitType::Split {
        return Err(Error::NotSplit { p, split });
    }
    let field = PrimeField::new(p)?;
    let a_bar = a.reduce(p);
    let roots = eigenvalues(&a_bar);
    debug_assert_eq!(roots.len(), 2);
    let v1 = eigenvector(&field, &a_bar, roots[0]);
    let v2 = eigenvector(&field, &a_bar, roots[1]);
    let det = field.sub(field.mul(v1.0, v2.1), field.mul(v1.1, v2.0));
    let s = field.inv(det);
    let v2 = (field.mul(v2.0, s), field.mul(v2.1, s));
    let e = SymplecticMatrixP { a: v1.0, b: v2.0, c: v1.1, d: v2.1, p };
    debug_assert_eq!(e.det(), 1);
    Ok(e.inverse())
}
