//! Trace function `F(B, xi) = Tr(rho(B) pi(xi))`, the twisted torus sums
//! `a_chi = sum_{B in T_A} F(B, xi) chi(B)`, the split-torus closed form
//! and the Hecke equidistribution rate.
//!
//! On the diagonal torus the trace has the exact closed form
//! `F(diag(a, 1/a), (lambda, mu)) = sigma(a) psi(lambda mu (a + 1) / 2(a - 1))`
//! for `a != 1`, so a split `a_chi` is a Salie-type sum over F_p^x.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{
    conjugator_to_standard, hecke_torus, is_hyperbolic, HeckeTorus, LatticeVector, SplitType,
    SymplecticMatrixP, SymplecticMatrixZ, TorusCharacter, WeylIndex,
};
use crate::error::{Error, Result};
use crate::ff::{is_odd_prime, reduce, PrimeField};
use crate::hecke::HeckeEigenspace;
use crate::parallel;
use crate::quantization::{
    act_on_observable, weyl_operator, weyl_phase_exponent, Observable, StateVector, WeilKernel,
    WeilRepresentation,
};

/// Slack on the normalized bound `|a_chi| / 2 sqrt(p) <= 1`.
pub const BOUND_SLACK: f64 = 1e-9;
/// Normalized values at or above this are flagged for inspection.
pub const NEAR_BOUND: f64 = 1.0 - 1e-3;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Structured evaluation in O(p): only the entries `rho(B)[y + lambda, y]`
/// meet the single nonzero entry of each row of `pi(xi)`.
pub fn trace_f(rep: &WeilRepresentation, b: &SymplecticMatrixP, xi: WeylIndex) -> Result<Complex64> {
    let kernel = rep.kernel(b)?;
    let f = rep.field();
    let p = f.p();
    let (lambda, mu) = (xi.lambda % p, xi.mu % p);
    let xi = WeylIndex { lambda, mu };
    Ok(match kernel {
        WeilKernel::Quadratic { scale, xy, xx, yy } => {
            let s: Complex64 = (0..p)
                .map(|y| {
                    let x = f.add(y, lambda);
                    let e = WeilKernel::quadratic_exponent(xy, xx, yy, x, y, p);
                    f.psi(f.add(e, weyl_phase_exponent(f, xi, y)))
                })
                .sum();
            scale * s
        }
        WeilKernel::Monomial { sign, a_inv, quad } => {
            // rho[x, a^-1 x] != 0, so x = y + lambda must satisfy (a - 1) y = lambda
            let a = b.a;
            if a == 1 {
                if lambda != 0 {
                    return Ok(ZERO);
                }
                let s: Complex64 = (0..p)
                    .map(|y| f.psi(f.add(f.mul(quad, f.mul(y, y)), weyl_phase_exponent(f, xi, y))))
                    .sum();
                s * sign
            } else {
                let y = f.mul(lambda, f.inv(f.sub(a, 1)));
                let x = f.add(y, lambda);
                debug_assert_eq!(f.mul(a_inv, x), y);
                f.psi(f.add(f.mul(quad, f.mul(x, x)), weyl_phase_exponent(f, xi, y))) * sign
            }
        }
    })
}

/// Reference path: materialize both matrices and sum `rho[x, y] pi[y, x]`
/// over all `p^2` index pairs.
pub fn trace_f_dense(rep: &WeilRepresentation, b: &SymplecticMatrixP, xi: WeylIndex) -> Result<Complex64> {
    let rho = rep.weil_rep(b)?;
    let pi = weyl_operator(rep.field(), xi).to_dense();
    let n = rep.p() as usize;
    let mut acc = ZERO;
    for x in 0..n {
        for y in 0..n {
            acc += rho[[x, y]] * pi[[y, x]];
        }
    }
    Ok(acc)
}

pub fn trace_f_with(
    rep: &WeilRepresentation,
    b: &SymplecticMatrixP,
    xi: WeylIndex,
    fast: bool,
) -> Result<Complex64> {
    if fast {
        trace_f(rep, b, xi)
    } else {
        trace_f_dense(rep, b, xi)
    }
}

/// `|F(S B S^-1, S xi) - F(B, xi)|`.
pub fn conjugation_invariance_defect(
    rep: &WeilRepresentation,
    s: &SymplecticMatrixP,
    b: &SymplecticMatrixP,
    xi: WeylIndex,
) -> Result<f64> {
    let lhs = trace_f(rep, &s.conjugate(b), s.apply(xi))?;
    let rhs = trace_f(rep, b, xi)?;
    Ok((lhs - rhs).norm())
}

/// The trace evaluated from unreduced integer data: every phase exponent is
/// accumulated in `i128` from the lifted entries and reduced mod p only
/// once, at the end. `entries = [a, b, c, d]` must have determinant 1 mod p.
pub fn trace_f_lifted(rep: &WeilRepresentation, entries: [i64; 4], xi: LatticeVector) -> Result<Complex64> {
    let f = rep.field();
    let p = f.p();
    let [a, _, c, d] = entries.map(|v| v as i128);
    let reduced = SymplecticMatrixP::new(entries[0], entries[1], entries[2], entries[3], p)?;
    let (lambda, mu) = (xi.lambda as i128, xi.mu as i128);
    let half = f.half() as i128;
    let pi_exp = |y: i128| half * lambda * mu + mu * y;
    let psi = |e: i128| f.psi(reduce(e, p));
    Ok(if reduced.b != 0 {
        let inv_2b = f.mul(f.half(), f.inv(reduced.b)) as i128;
        let scale = match rep.kernel(&reduced)? {
            WeilKernel::Quadratic { scale, .. } => scale,
            WeilKernel::Monomial { .. } => unreachable!("b != 0 mod p"),
        };
        let s: Complex64 = (0..p as i128)
            .map(|y| {
                let x = y + lambda;
                psi(inv_2b * (2 * x * y - d * x * x - a * y * y) + pi_exp(y))
            })
            .sum();
        scale * s
    } else {
        let a_red = reduced.a;
        let a_inv = f.inv(a_red) as i128;
        let sign = f.legendre(a_red) as f64;
        // -c / 2a from the lifted c
        let quad = |x: i128| -c * half * a_inv * x * x;
        if a_red == 1 {
            if reduce(lambda, p) != 0 {
                return Ok(ZERO);
            }
            let s: Complex64 = (0..p as i128)
                .map(|y| psi(quad(y) + pi_exp(y)))
                .sum();
            s * sign
        } else {
            let y = f.mul(reduce(lambda, p), f.inv(f.sub(a_red, 1))) as i128;
            let x = y + lambda;
            psi(quad(x) + pi_exp(y)) * sign
        }
    })
}

/// Checks that `F` only sees `B` and `xi` mod p: compares the mod-p value at
/// `xi` with the value at `xi + p eta`, and with the lifted integer
/// evaluation. Returns the largest discrepancy (exactly zero when all
/// three paths agree bit for bit).
pub fn factorization_check(
    rep: &WeilRepresentation,
    b: [i64; 4],
    xi: LatticeVector,
    eta: LatticeVector,
) -> Result<f64> {
    let p = rep.p() as i64;
    let reduced = SymplecticMatrixP::new(b[0], b[1], b[2], b[3], rep.p())?;
    let shifted = LatticeVector::new(xi.lambda + p * eta.lambda, xi.mu + p * eta.mu);
    let base = trace_f(rep, &reduced, xi.reduce(rep.p()))?;
    let moved = trace_f(rep, &reduced, shifted.reduce(rep.p()))?;
    let lifted = trace_f_lifted(rep, b, shifted)?;
    Ok((base - moved).norm().max((base - lifted).norm()))
}

/// All `F(generator^m, xi)` for `m = 0..N`.
pub fn torus_traces(rep: &WeilRepresentation, torus: &HeckeTorus, xi: WeylIndex, fast: bool) -> Result<Vec<Complex64>> {
    torus
        .elements()
        .iter()
        .map(|b| trace_f_with(rep, b, xi, fast))
        .collect()
}

pub fn a_chi(rep: &WeilRepresentation, torus: &HeckeTorus, xi: WeylIndex, chi: TorusCharacter) -> Result<Complex64> {
    if xi.is_zero() {
        return Err(Error::ZeroFrequency);
    }
    if chi.order != torus.order() {
        return Err(Error::CharacterOutOfRange { index: chi.index, order: torus.order() });
    }
    let traces = torus_traces(rep, torus, xi, true)?;
    Ok(traces
        .iter()
        .enumerate()
        .map(|(m, t)| t * chi.at_exponent(m))
        .sum())
}

/// `a_chi` for every character index at once from one pass of traces.
pub fn a_chi_all(rep: &WeilRepresentation, torus: &HeckeTorus, xi: WeylIndex, fast: bool) -> Result<Vec<Complex64>> {
    if xi.is_zero() {
        return Err(Error::ZeroFrequency);
    }
    let traces = torus_traces(rep, torus, xi, fast)?;
    let n = torus.order();
    let roots: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / n as f64))
        .collect();
    Ok((0..n)
        .map(|k| {
            traces
                .iter()
                .enumerate()
                .map(|(m, t)| t * roots[(k * m) % n])
                .sum()
        })
        .collect())
}

/// `sum_{a != 0, 1} sigma(a) psi(lambda mu (a + 1) / 2(a - 1)) chi'(a)` with
/// `chi'` the multiplicative character of index `k` (via the primitive
/// root). The excluded `a = 1` term corresponds to `F(I, xi') = 0`.
pub fn salie_direct(field: &PrimeField, xi: WeylIndex, k: u64) -> Result<Complex64> {
    let p = field.p();
    let (lambda, mu) = (xi.lambda % p, xi.mu % p);
    if lambda == 0 || mu == 0 {
        return Err(Error::FrequencyOnAxis { lambda, mu });
    }
    let c = field.mul(field.half(), field.mul(lambda, mu));
    Ok((2..p)
        .map(|a| {
            let t = field.mul(field.add(a, 1), field.inv(field.sub(a, 1)));
            field.psi(field.mul(c, t)) * field.mult_character(k, a) * field.legendre(a) as f64
        })
        .sum())
}

/// `sigma(a) psi(lambda mu (a + 1) / 2(a - 1))`, the trace of
/// `rho(diag(a, 1/a)) pi(lambda, mu)` for `a != 0, 1`.
pub fn diagonal_closed_form(field: &PrimeField, a: u64, eta: WeylIndex) -> Complex64 {
    let c = field.mul(field.half(), field.mul(eta.lambda, eta.mu));
    let t = field.mul(field.add(a, 1), field.inv(field.sub(a, 1)));
    field.psi(field.mul(c, t)) * field.legendre(a) as f64
}

/// A split Hecke torus moved onto the diagonal torus.
#[derive(Clone, Debug)]
pub struct SplitConjugation {
    pub conjugator: SymplecticMatrixP,
    /// `S generator^m S^-1 = diag(a_m, 1/a_m)`.
    pub diagonal: Vec<u64>,
    /// `dlog(a_1)`, a unit mod `p - 1`.
    pub generator_log: u64,
}

impl SplitConjugation {
    pub fn new(torus: &HeckeTorus, field: &PrimeField) -> Result<Self> {
        let conjugator = conjugator_to_standard(torus.matrix(), torus.p())?;
        let diagonal = torus
            .elements()
            .iter()
            .map(|b| {
                let d = conjugator.conjugate(b);
                debug_assert!(d.is_diagonal());
                d.a
            })
            .collect::<Vec<_>>();
        let generator_log = field.dlog(diagonal[1 % diagonal.len()]);
        Ok(Self { conjugator, diagonal, generator_log })
    }

    /// Index `k'` of the multiplicative character with
    /// `chi'_{k'}(a_m) = chi_k(generator^m)` for every `m`.
    pub fn field_character_index(&self, k: usize) -> u64 {
        let n = self.diagonal.len() as u64;
        let inv = modular_inverse(self.generator_log % n, n);
        (k as u64 % n) * inv % n
    }
}

fn modular_inverse(a: u64, n: u64) -> u64 {
    if n == 1 {
        return 0;
    }
    let (mut r0, mut r1) = (n as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1, "{a} is not a unit mod {n}");
    t0.rem_euclid(n as i128) as u64
}

/// Comparison of `F` on a split torus with the diagonal closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormFit {
    /// Unit constant fixed at the reference point `(generator, xi)`.
    pub constant: Complex64,
    pub max_deviation: f64,
}

/// Fixes the constant at `m = 1` and the first probe `xi`, then measures
/// `max |F(B, xi) - constant * closed(a_B, S xi)|` over every non-identity
/// torus element and every probe.
pub fn closed_form_fit(
    rep: &WeilRepresentation,
    torus: &HeckeTorus,
    split: &SplitConjugation,
    probes: &[WeylIndex],
) -> Result<ClosedFormFit> {
    let f = rep.field();
    let s = &split.conjugator;
    let reference = probes.first().copied().ok_or(Error::ZeroFrequency)?;
    let g = &torus.elements()[1];
    let constant = trace_f(rep, g, reference)? / diagonal_closed_form(f, split.diagonal[1], s.apply(reference));
    let mut worst = 0.0f64;
    for &xi in probes {
        let eta = s.apply(xi);
        for (m, b) in torus.elements().iter().enumerate() {
            let a = split.diagonal[m];
            if a == 1 {
                continue;
            }
            let dev = (trace_f(rep, b, xi)? - constant * diagonal_closed_form(f, a, eta)).norm();
            worst = worst.max(dev);
        }
    }
    Ok(ClosedFormFit { constant, max_deviation: worst })
}

/// Whether `xi` is an eigenvector of `A mod p`, i.e. `omega(xi, A xi) = 0`.
/// For such `xi` on a split torus the conjugated frequency lies on an axis.
pub fn is_eigen_frequency(a_bar: &SymplecticMatrixP, xi: WeylIndex) -> bool {
    !xi.is_zero() && xi.omega(&a_bar.apply(xi), a_bar.p) == 0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AverageMode {
    Sum,
    Mean,
}

impl AverageMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sum" => Some(AverageMode::Sum),
            "mean" => Some(AverageMode::Mean),
            _ => None,
        }
    }
}

/// The terms `<v | pi(f^B) v>` for `B = generator^m`.
pub fn matrix_coefficient_summands(torus: &HeckeTorus, field: &PrimeField, v: &StateVector, f: &Observable) -> Vec<Complex64> {
    torus
        .elements()
        .iter()
        .map(|b| {
            act_on_observable(b, f)
                .iter()
                .map(|(xi, &c)| c * weyl_operator(field, *xi).expectation(v))
                .sum()
        })
        .collect()
}

pub fn matrix_coefficient_average(
    torus: &HeckeTorus,
    field: &PrimeField,
    v: &StateVector,
    f: &Observable,
    mode: AverageMode,
) -> Complex64 {
    let s: Complex64 = matrix_coefficient_summands(torus, field, v, f).iter().sum();
    match mode {
        AverageMode::Sum => s,
        AverageMode::Mean => s / torus.order() as f64,
    }
}

/// `C_f = 2 sum_{xi != 0} |c_xi|`.
pub fn rate_constant(f: &Observable) -> f64 {
    2.0 * f
        .iter()
        .filter(|(xi, _)| !xi.is_zero())
        .map(|(_, c)| c.norm())
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub p: u64,
    pub chi_index: usize,
    pub dimension: usize,
    pub basis_index: usize,
    pub deviation: f64,
    pub c_f: f64,
    pub bound: f64,
    /// `deviation * sqrt(p)`: the smallest constant this vector needs.
    pub measured_constant: f64,
    /// `max_B |<v|pi(f^B)v> - <v|pi(f)v>|`.
    pub summand_spread: f64,
    pub sum: Complex64,
    pub mean: Complex64,
}

/// One record per Hecke eigenbasis vector: `|mean_B <v|pi(f^B)v> - c_0|`
/// against `C_f / sqrt(p)`.
pub fn rate_records(
    torus: &HeckeTorus,
    field: &PrimeField,
    spaces: &[HeckeEigenspace],
    f: &Observable,
) -> Vec<RateRecord> {
    let p = field.p();
    let c0 = f.get(&WeylIndex::ZERO).copied().unwrap_or(ZERO);
    let c_f = rate_constant(f);
    let bound = c_f / (p as f64).sqrt();
    let jobs: Vec<(&HeckeEigenspace, usize)> = spaces
        .iter()
        .flat_map(|s| (0..s.basis.len()).map(move |i| (s, i)))
        .collect();
    parallel::map(&jobs, |&(s, i)| {
        let v = &s.basis[i];
        let summands = matrix_coefficient_summands(torus, field, v, f);
        let sum: Complex64 = summands.iter().sum();
        let mean = sum / torus.order() as f64;
        let spread = summands
            .iter()
            .map(|z| (z - summands[0]).norm())
            .fold(0.0, f64::max);
        let deviation = (mean - c0).norm();
        RateRecord {
            p,
            chi_index: s.character.index,
            dimension: s.dimension,
            basis_index: i,
            deviation,
            c_f,
            bound,
            measured_constant: deviation * (p as f64).sqrt(),
            summand_spread: spread,
            sum,
            mean,
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpSumRecord {
    pub p: u64,
    pub matrix: SymplecticMatrixZ,
    pub xi: WeylIndex,
    pub chi_index: usize,
    pub a_chi: Complex64,
    pub normalized: f64,
    pub split_type: SplitType,
    pub order: usize,
}

impl ExpSumRecord {
    pub fn within_bound(&self) -> bool {
        self.normalized <= 1.0 + BOUND_SLACK
    }

    pub fn near_bound(&self) -> bool {
        self.normalized >= NEAR_BOUND && self.within_bound()
    }

    fn sort_key(&self) -> (u64, WeylIndex, usize) {
        (self.p, self.xi, self.chi_index)
    }
}

/// Which characters a scan evaluates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharacterSelection {
    All,
    Indices(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frequencies {
    /// Every nonzero point of F_p^2.
    All,
    List(Vec<LatticeVector>),
}

impl Frequencies {
    pub fn resolve(&self, p: u64) -> Vec<WeylIndex> {
        let mut out: Vec<WeylIndex> = match self {
            Frequencies::All => WeylIndex::all_nonzero(p).collect(),
            Frequencies::List(v) => v.iter().map(|x| x.reduce(p)).collect(),
        };
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub p: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct ScanResult {
    pub records: Vec<ExpSumRecord>,
    pub skipped: Vec<Skipped>,
}

impl ScanResult {
    pub fn max_normalized(&self) -> f64 {
        self.records.iter().map(|r| r.normalized).fold(0.0, f64::max)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ExpSumRecord> {
        self.records.iter().filter(|r| !r.within_bound())
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ExpSumRecord> {
        self.records.iter().filter(|r| r.near_bound())
    }
}

/// Everything one prime of a scan needs, built once and shared.
pub struct PrimeContext {
    pub rep: WeilRepresentation,
    pub torus: HeckeTorus,
}

impl PrimeContext {
    pub fn new(a: &SymplecticMatrixZ, p: u64) -> Result<Self> {
        let torus = hecke_torus(a, p)?;
        let rep = WeilRepresentation::with_field(Arc::new(PrimeField::new(p)?));
        Ok(Self { rep, torus })
    }
}

/// `a_chi` records for every prime, frequency and selected character.
/// Degenerate primes are skipped and reported. Records come back sorted by
/// `(p, xi, chi_index)`.
pub fn bound_scan(
    primes: &[u64],
    a: &SymplecticMatrixZ,
    frequencies: &Frequencies,
    chars: &CharacterSelection,
    fast: bool,
) -> Result<ScanResult> {
    if !is_hyperbolic(a) {
        return Err(Error::NotHyperbolic { trace: a.trace() });
    }
    if let Some(&p) = primes.iter().find(|&&p| !is_odd_prime(p)) {
        return Err(Error::NotOddPrime(p));
    }
    let per_prime = parallel::map(primes, |&p| -> Result<(Vec<ExpSumRecord>, Option<Skipped>)> {
        let ctx = match PrimeContext::new(a, p) {
            Ok(c) => c,
            Err(Error::DegenerateTorus { p }) => {
                return Ok((Vec::new(), Some(Skipped { p, reason: "degenerate".into() })))
            }
            Err(e) => return Err(e),
        };
        let n = ctx.torus.order();
        let indices: Vec<usize> = match chars {
            CharacterSelection::All => (0..n).collect(),
            CharacterSelection::Indices(v) => {
                if let Some(&k) = v.iter().find(|&&k| k >= n) {
                    return Err(Error::CharacterOutOfRange { index: k, order: n });
                }
                v.clone()
            }
        };
        if !fast {
            for b in ctx.torus.elements() {
                ctx.rep.weil_rep(b)?;
            }
        }
        let xis = frequencies.resolve(p);
        if xis.iter().find(|x| x.is_zero()).is_some() {
            return Err(Error::ZeroFrequency);
        }
        let two_sqrt_p = 2.0 * (p as f64).sqrt();
        let blocks = parallel::map(&xis, |&xi| -> Result<Vec<ExpSumRecord>> {
            let all = a_chi_all(&ctx.rep, &ctx.torus, xi, fast)?;
            Ok(indices
                .iter()
                .map(|&k| ExpSumRecord {
                    p,
                    matrix: *a,
                    xi,
                    chi_index: k,
                    a_chi: all[k],
                    normalized: all[k].norm() / two_sqrt_p,
                    split_type: ctx.torus.split_type(),
                    order: n,
                })
                .collect())
        });
        let mut records = Vec::new();
        for b in blocks {
            records.extend(b?);
        }
        Ok((records, None))
    });
    let mut out = ScanResult::default();
    for r in per_prime {
        let (records, skip) = r?;
        out.records.extend(records);
        out.skipped.extend(skip);
    }
    out.records.sort_by_key(|r| r.sort_key());
    out.skipped.sort_by_key(|s| s.p);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{splitting_type, torus_characters};
    use crate::hecke::hecke_eigenbasis;
    use crate::quantization::max_abs_diff;

    fn cat() -> SymplecticMatrixZ {
        SymplecticMatrixZ::cat_map()
    }

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::new(&cat(), p).unwrap()
    }

    #[test]
    fn trace_examples() {
        let c = ctx(11);
        let id = SymplecticMatrixP::identity(11);
        assert!((trace_f(&c.rep, &id, WeylIndex::ZERO).unwrap() - 11.0).norm() < 1e-12);
        for xi in WeylIndex::all_nonzero(11) {
            assert!(trace_f(&c.rep, &id, xi).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn diagonal_trace_is_closed_form() {
        let c = ctx(11);
        let f = c.rep.field();
        let d = SymplecticMatrixP::diagonal(f, 2);
        let xi = WeylIndex::new(1, 1, 11);
        let dense = trace_f_dense(&c.rep, &d, xi).unwrap();
        let closed = diagonal_closed_form(f, 2, xi);
        // the constant is 1 at this reference point
        assert!((dense / closed - 1.0).norm() < 1e-12);
        for a in 2..11 {
            let d = SymplecticMatrixP::diagonal(f, a);
            for xi in WeylIndex::all_nonzero(11) {
                let dense = trace_f_dense(&c.rep, &d, xi).unwrap();
                assert!((dense - diagonal_closed_form(f, a, xi)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fast_and_dense_paths_agree() {
        for p in [3u64, 7, 11, 13] {
            let rep = WeilRepresentation::new(p).unwrap();
            let f = rep.field();
            let all = (0..p).flat_map(|a| (0..p).flat_map(move |b| (0..p).map(move |c| (a, b, c))));
            for (i, (a, b, c)) in all.enumerate() {
                // solve ad - bc = 1 for d when a != 0; keep a sparse sample
                if a == 0 || i % 5 != 0 {
                    continue;
                }
                let d = f.mul(f.add(1, f.mul(b, c)), f.inv(a));
                let m = SymplecticMatrixP { a, b, c, d, p };
                for xi in WeylIndex::all_nonzero(p).step_by(3) {
                    let fast = trace_f(&rep, &m, xi).unwrap();
                    let dense = trace_f_dense(&rep, &m, xi).unwrap();
                    assert!((fast - dense).norm() < 1e-10, "p={p} {m} {xi}");
                }
            }
            let w = SymplecticMatrixP::new(0, 1, -1, 0, p).unwrap();
            for xi in WeylIndex::all_nonzero(p) {
                assert!((trace_f(&rep, &w, xi).unwrap() - trace_f_dense(&rep, &w, xi).unwrap()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn parseval_identity() {
        for p in [3u64, 5, 7, 11, 13] {
            let rep = WeilRepresentation::new(p).unwrap();
            let bs = [
                SymplecticMatrixP::identity(p),
                SymplecticMatrixP::new(0, 1, -1, 0, p).unwrap(),
                SymplecticMatrixP::new(2, 1, 1, 1, p).unwrap(),
                SymplecticMatrixP::new(1, 0, 3, 1, p).unwrap(),
            ];
            for b in bs {
                let total: f64 = (0..p)
                    .flat_map(|l| (0..p).map(move |m| WeylIndex { lambda: l, mu: m }))
                    .map(|xi| trace_f_dense(&rep, &b, xi).unwrap().norm_sqr())
                    .sum();
                assert!((total - (p * p) as f64).abs() < 1e-8, "p={p} {b}");
            }
        }
    }

    #[test]
    fn conjugation_invariance_examples() {
        let c = ctx(11);
        let b = c.torus.elements()[3];
        for xi in WeylIndex::all_nonzero(11) {
            let id = SymplecticMatrixP::identity(11);
            assert!(conjugation_invariance_defect(&c.rep, &id, &b, xi).unwrap() < 1e-12);
            assert!(conjugation_invariance_defect(&c.rep, &b, &b, xi).unwrap() < 1e-12);
            let s = SymplecticMatrixP::new(3, 4, 2, 3, 11).unwrap();
            assert!(conjugation_invariance_defect(&c.rep, &s, &b, xi).unwrap() < 1e-9);
        }
    }

    #[test]
    fn factorization_examples() {
        let rep = WeilRepresentation::new(7).unwrap();
        let zero = LatticeVector::new(0, 0);
        assert_eq!(factorization_check(&rep, [2, 1, 1, 1], LatticeVector::new(1, 0), zero).unwrap(), 0.0);
        assert_eq!(
            factorization_check(&rep, [2, 1, 1, 1], LatticeVector::new(1, 0), LatticeVector::new(3, 5)).unwrap(),
            0.0
        );
        // lift B by 7 M: entries change, det stays 1 mod 7
        let lifted = [2 + 7 * 3, 1 - 7 * 2, 1 + 7 * 5, 1 + 7];
        let base = trace_f_lifted(&rep, [2, 1, 1, 1], LatticeVector::new(2, 3)).unwrap();
        let moved = trace_f_lifted(&rep, lifted, LatticeVector::new(2 - 14, 3 + 70)).unwrap();
        assert_eq!(base, moved);
        assert_eq!(
            factorization_check(&rep, lifted, LatticeVector::new(4, -9), LatticeVector::new(-2, 11)).unwrap(),
            0.0
        );
        // b = 0 mod p branch
        assert_eq!(
            factorization_check(&rep, [3, 7, 2, 5], LatticeVector::new(-3, 8), LatticeVector::new(1, 1)).unwrap(),
            0.0
        );
        assert_eq!(
            factorization_check(&rep, [8, 14, 7, 1 + 7 * 2], LatticeVector::new(0, 8), LatticeVector::new(1, 1)).unwrap(),
            0.0
        );
        assert!(factorization_check(&rep, [2, 1, 1, 2], LatticeVector::new(1, 0), zero).is_err());
    }

    #[test]
    fn a_chi_examples() {
        let c = ctx(11);
        let xi = WeylIndex::new(1, 0, 11);
        let bound = 2.0 * 11f64.sqrt();
        assert!((bound - 6.6332).abs() < 1e-4);
        let all = a_chi_all(&c.rep, &c.torus, xi, true).unwrap();
        let dense = a_chi_all(&c.rep, &c.torus, xi, false).unwrap();
        for (chi, v) in torus_characters(&c.torus).into_iter().zip(&all) {
            let direct = a_chi(&c.rep, &c.torus, xi, chi).unwrap();
            assert!((direct - v).norm() < 1e-10);
            assert!((dense[chi.index] - v).norm() < 1e-10);
            assert!(v.norm() <= bound + BOUND_SLACK);
        }
        let trivial: Complex64 = torus_traces(&c.rep, &c.torus, xi, true).unwrap().iter().sum();
        assert!((trivial - all[0]).norm() < 1e-12);
        assert_eq!(
            a_chi(&c.rep, &c.torus, WeylIndex::ZERO, torus_characters(&c.torus)[0]),
            Err(Error::ZeroFrequency)
        );
    }

    #[test]
    fn conjugate_symmetries() {
        for p in [7u64, 11, 13] {
            let c = ctx(p);
            for xi in WeylIndex::all_nonzero(p) {
                let a = a_chi_all(&c.rep, &c.torus, xi, true).unwrap();
                let b = a_chi_all(&c.rep, &c.torus, xi.neg(p), true).unwrap();
                for k in 0..a.len() {
                    // conj(a_chi(xi)) = a_chi(-xi) = a_chi(xi)
                    assert!((a[k].conj() - b[k]).norm() < 1e-9);
                    assert!(a[k].im.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn salie_matches_split_torus_sums() {
        for p in [11u64, 19, 29] {
            let c = ctx(p);
            assert_eq!(c.torus.split_type(), SplitType::Split);
            let f = c.rep.field();
            let split = SplitConjugation::new(&c.torus, f).unwrap();
            let probes: Vec<WeylIndex> = WeylIndex::all_nonzero(p).step_by(5).collect();
            let fit = closed_form_fit(&c.rep, &c.torus, &split, &probes).unwrap();
            assert!((fit.constant.norm() - 1.0).abs() < 1e-9);
            assert!(fit.max_deviation < 1e-9);
            for xi in &probes {
                let eta = split.conjugator.apply(*xi);
                if eta.lambda == 0 || eta.mu == 0 {
                    continue;
                }
                let all = a_chi_all(&c.rep, &c.torus, *xi, true).unwrap();
                for k in 0..c.torus.order() {
                    let kp = split.field_character_index(k);
                    let s = salie_direct(f, eta, kp).unwrap();
                    assert!((all[k] - fit.constant * s).norm() < 1e-9, "p={p} xi={xi} k={k}");
                    assert!(s.norm() <= 2.0 * (p as f64).sqrt() + BOUND_SLACK);
                }
            }
        }
    }

    #[test]
    fn salie_with_legendre_twist_is_real() {
        let f = PrimeField::new(19).unwrap();
        let sigma = 9; // (p - 1) / 2
        for l in 1..19 {
            for m in [1u64, 5, 18] {
                let s = salie_direct(&f, WeylIndex { lambda: l, mu: m }, sigma).unwrap();
                assert!(s.im.abs() < 1e-9);
            }
        }
        assert_eq!(
            salie_direct(&f, WeylIndex { lambda: 0, mu: 3 }, 1),
            Err(Error::FrequencyOnAxis { lambda: 0, mu: 3 })
        );
    }

    #[test]
    fn eigen_frequencies_saturate_the_quadratic_character() {
        // xi an eigenvector of A mod p: F(B, xi) = sigma(a) on the split torus,
        // so the character matching sigma gives p - 2.
        let p = 11;
        let c = ctx(p);
        let split = SplitConjugation::new(&c.torus, c.rep.field()).unwrap();
        let s_inv = split.conjugator.inverse();
        let xi = s_inv.apply(WeylIndex { lambda: 1, mu: 0 });
        assert!(is_eigen_frequency(c.torus.a_bar(), xi));
        let all = a_chi_all(&c.rep, &c.torus, xi, true).unwrap();
        let max = all.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((max - (p - 2) as f64).abs() < 1e-9);
        assert!(!is_eigen_frequency(c.torus.a_bar(), WeylIndex::new(1, 0, p)));
    }

    #[test]
    fn matrix_coefficients_on_eigenvectors() {
        let c = ctx(11);
        let f = c.rep.field();
        let spaces = hecke_eigenbasis(&c.rep, &c.torus).unwrap();
        let mut one = Observable::new();
        one.insert(WeylIndex::ZERO, Complex64::new(1.0, 0.0));
        let v = &spaces.iter().find(|s| s.dimension > 0).unwrap().basis[0];
        let mean = matrix_coefficient_average(&c.torus, f, v, &one, AverageMode::Mean);
        assert!((mean - 1.0).norm() < 1e-12);
        let sum = matrix_coefficient_average(&c.torus, f, v, &one, AverageMode::Sum);
        assert!((sum - 10.0).norm() < 1e-10);

        let xi = WeylIndex::new(1, 0, 11);
        let mut single = Observable::new();
        single.insert(xi, Complex64::new(1.0, 0.0));
        let all = a_chi_all(&c.rep, &c.torus, xi, true).unwrap();
        for s in spaces.iter().filter(|s| s.dimension == 1) {
            let v = &s.basis[0];
            let expect = weyl_operator(f, xi).to_dense().dot(&s.projector).diag().iter().sum::<Complex64>();
            let direct = weyl_operator(f, xi).expectation(v);
            assert!((expect - direct).norm() < 1e-9);
            let mean = matrix_coefficient_average(&c.torus, f, v, &single, AverageMode::Mean);
            assert!((mean - direct).norm() < 1e-9);
            let conj_k = s.character.conj().index;
            assert!((mean.norm() - all[conj_k].norm() / 10.0).abs() < 1e-9);
            assert!(mean.norm() <= 2.0 * 11f64.sqrt() / 10.0 + 1e-9);
        }
    }

    #[test]
    fn rate_records_have_constant_summands() {
        let c = ctx(13);
        let spaces = hecke_eigenbasis(&c.rep, &c.torus).unwrap();
        let mut f = Observable::new();
        f.insert(WeylIndex::ZERO, Complex64::new(0.5, 0.0));
        for (l, m) in [(1, 0), (0, 1), (1, 1)] {
            f.insert(WeylIndex::new(l, m, 13), Complex64::new(1.0, 0.0));
        }
        assert!((rate_constant(&f) - 6.0).abs() < 1e-15);
        let recs = rate_records(&c.torus, c.rep.field(), &spaces, &f);
        assert_eq!(recs.len(), 13);
        for r in &recs {
            assert!(r.summand_spread < 1e-9);
            assert!((r.sum / 14.0 - r.mean).norm() < 1e-12);
        }
    }

    #[test]
    fn scans() {
        let freq = Frequencies::List(vec![LatticeVector::new(1, 0)]);
        let res = bound_scan(&[7, 11, 13, 17, 19, 23], &cat(), &freq, &CharacterSelection::All, true).unwrap();
        assert!(res.max_normalized() <= 1.0 + BOUND_SLACK);
        assert_eq!(res.violations().count(), 0);
        let n: usize = [8, 10, 14, 18, 18, 24].iter().sum();
        assert_eq!(res.records.len(), n);
        let empty = bound_scan(&[], &cat(), &freq, &CharacterSelection::All, true).unwrap();
        assert!(empty.records.is_empty());
        let five = bound_scan(&[5], &cat(), &freq, &CharacterSelection::All, true).unwrap();
        assert_eq!(five.skipped, vec![Skipped { p: 5, reason: "degenerate".into() }]);
        assert_eq!(splitting_type(&cat(), 5), SplitType::Degenerate);
        let bad = SymplecticMatrixZ::new(1, 1, 0, 1).unwrap();
        assert!(matches!(bound_scan(&[7], &bad, &freq, &CharacterSelection::All, true), Err(Error::NotHyperbolic { .. })));
        assert!(matches!(
            bound_scan(&[7], &cat(), &freq, &CharacterSelection::Indices(vec![8]), true),
            Err(Error::CharacterOutOfRange { index: 8, order: 8 })
        ));
        let dense = bound_scan(&[7, 11], &cat(), &freq, &CharacterSelection::Indices(vec![0, 3]), false).unwrap();
        let fast = bound_scan(&[7, 11], &cat(), &freq, &CharacterSelection::Indices(vec![0, 3]), true).unwrap();
        for (a, b) in dense.records.iter().zip(&fast.records) {
            assert!((a.a_chi - b.a_chi).norm() < 1e-10);
        }
    }

    #[test]
    fn projector_link_between_rate_and_sums() {
        let c = ctx(7);
        let spaces = hecke_eigenbasis(&c.rep, &c.torus).unwrap();
        for s in spaces.iter().filter(|s| s.dimension == 1) {
            let xi = WeylIndex::new(2, 5, 7);
            let op = weyl_operator(c.rep.field(), xi);
            let v = &s.basis[0];
            let lhs = op.expectation(v);
            let rhs: Complex64 = op.to_dense().dot(&s.projector).diag().iter().sum();
            assert!((lhs - rhs).norm() < 1e-9);
            let vv = ndarray::Array2::from_shape_fn((7, 7), |(i, j)| v[i] * v[j].conj());
            assert!(max_abs_diff(&vv, &s.projector) < 1e-9);
        }
    }
}
