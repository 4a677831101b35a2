//! Quantum side on the state space C^p (functions on F_p).
//!
//! The Weyl operators are realized as
//! `(pi(lambda, mu) phi)(x) = psi(lambda mu / 2 + mu x) phi(x + lambda)`,
//! so `pi(xi + eta) = psi(-omega(xi, eta) / 2) pi(xi) pi(eta)`.
//!
//! The Weil representation is given by explicit kernels. For
//! `B = [[a, b], [c, d]]`:
//!
//! * `b = 0`: `(rho(B) phi)(x) = sigma(a) psi(-c x^2 / 2a) phi(x / a)`,
//! * `b != 0`: `rho(B)[x, y] = sigma(b) / G(-1/2) * psi((2xy - d x^2 - a y^2) / 2b)`,
//!
//! where `sigma` is the Legendre symbol and `G(c) = sum_x psi(c x^2)`. The
//! quadratic forms are forced by the Egorov identity
//! `rho(B) pi(xi) rho(B)^-1 = pi(B xi)`; the scalars are the unique choice
//! making `rho` multiplicative.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::classical::{SymplecticMatrixP, WeylIndex};
use crate::error::{Error, Result};
use crate::ff::PrimeField;

pub type Operator = Array2<Complex64>;
pub type StateVector = Array1<Complex64>;
/// Fourier coefficients `c_xi` of a trigonometric polynomial on the torus.
pub type Observable = BTreeMap<WeylIndex, Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Exponent of the Weyl phase in row `x`: `lambda mu / 2 + mu x`.
#[inline]
pub(crate) fn weyl_phase_exponent(field: &PrimeField, xi: WeylIndex, x: u64) -> u64 {
    let half_lm = field.mul(field.half(), field.mul(xi.lambda, xi.mu));
    field.add(half_lm, field.mul(xi.mu, x))
}

/// `pi(xi)` stored as a generalized permutation: row `x` holds `phases[x]`
/// in column `x + lambda`.
#[derive(Clone, Debug)]
pub struct WeylOperator {
    xi: WeylIndex,
    phases: Vec<Complex64>,
}

impl WeylOperator {
    pub fn index(&self) -> WeylIndex {
        self.xi
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[Complex64] {
        &self.phases
    }

    #[inline]
    pub fn column_of(&self, x: usize) -> usize {
        (x + self.xi.lambda as usize) % self.phases.len()
    }

    pub fn entry(&self, x: usize, y: usize) -> Complex64 {
        if self.column_of(x) == y {
            self.phases[x]
        } else {
            ZERO
        }
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        Array1::from_shape_fn(self.dim(), |x| self.phases[x] * v[self.column_of(x)])
    }

    pub fn to_dense(&self) -> Operator {
        let n = self.dim();
        let mut m = Array2::zeros((n, n));
        for x in 0..n {
            m[[x, self.column_of(x)]] = self.phases[x];
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        if self.xi.lambda == 0 {
            self.phases.iter().sum()
        } else {
            ZERO
        }
    }

    /// `<v | pi(xi) v>`.
    pub fn expectation(&self, v: &StateVector) -> Complex64 {
        (0..self.dim())
            .map(|x| v[x].conj() * self.phases[x] * v[self.column_of(x)])
            .sum()
    }
}

pub fn weyl_operator(field: &PrimeField, xi: WeylIndex) -> WeylOperator {
    let p = field.p();
    let phases = (0..p)
        .map(|x| field.psi(weyl_phase_exponent(field, xi, x)))
        .collect();
    WeylOperator { xi, phases }
}

/// The scalar `c` with `pi(xi + eta) = c pi(xi) pi(eta)`, namely
/// `psi(-omega(xi, eta) / 2)`.
pub fn weyl_product_phase(field: &PrimeField, xi: WeylIndex, eta: WeylIndex) -> Complex64 {
    let w = xi.omega(&eta, field.p());
    field.psi(field.neg(field.mul(field.half(), w)))
}

/// `pi(f) = sum_xi c_xi pi(xi)`; indices are reduced mod p.
pub fn quantize_observable(field: &PrimeField, f: &Observable) -> Operator {
    let p = field.p();
    let n = p as usize;
    let mut m = Array2::zeros((n, n));
    for (xi, &c) in f {
        let xi = WeylIndex { lambda: xi.lambda % p, mu: xi.mu % p };
        let op = weyl_operator(field, xi);
        for x in 0..n {
            m[[x, op.column_of(x)]] += c * op.phases[x];
        }
    }
    m
}

/// `f^B`: coefficients moved from `xi` to `B xi`.
pub fn act_on_observable(b: &SymplecticMatrixP, f: &Observable) -> Observable {
    let mut out = Observable::new();
    for (xi, &c) in f {
        *out.entry(b.apply(*xi)).or_insert(ZERO) += c;
    }
    out
}

/// Closed-form description of `rho(B)` with O(1) entry access.
#[derive(Clone, Copy, Debug)]
pub enum WeilKernel {
    /// Row `x` holds `sign * psi(quad * x^2)` in column `a_inv * x`.
    Monomial { sign: f64, a_inv: u64, quad: u64 },
    /// `scale * psi(xy * x y + xx * x^2 + yy * y^2)`.
    Quadratic { scale: Complex64, xy: u64, xx: u64, yy: u64 },
}

impl WeilKernel {
    /// Exponent of `psi` at `(x, y)`, valid for the quadratic kernel.
    #[inline]
    pub(crate) fn quadratic_exponent(xy: u64, xx: u64, yy: u64, x: u64, y: u64, p: u64) -> u64 {
        let (x, y, p) = (x as u128, y as u128, p as u128);
        ((xy as u128 * ((x * y) % p) + xx as u128 * ((x * x) % p) + yy as u128 * ((y * y) % p))
            % p) as u64
    }

    pub fn entry(&self, field: &PrimeField, x: u64, y: u64) -> Complex64 {
        let p = field.p();
        match *self {
            WeilKernel::Monomial { sign, a_inv, quad } => {
                if field.mul(a_inv, x) == y {
                    field.psi(field.mul(quad, field.mul(x, x))) * sign
                } else {
                    ZERO
                }
            }
            WeilKernel::Quadratic { scale, xy, xx, yy } => {
                scale * field.psi(Self::quadratic_exponent(xy, xx, yy, x, y, p))
            }
        }
    }
}

/// The Weil representation of SL_2(F_p) on C^p with a per-prime operator
/// cache. Cache entries are immutable once inserted and distinct keys may be
/// inserted concurrently.
#[derive(Debug)]
pub struct WeilRepresentation {
    field: Arc<PrimeField>,
    kappa: Complex64,
    cache: RwLock<HashMap<SymplecticMatrixP, Arc<Operator>>>,
}

impl WeilRepresentation {
    pub fn new(p: u64) -> Result<Self> {
        Ok(Self::with_field(Arc::new(PrimeField::new(p)?)))
    }

    pub fn with_field(field: Arc<PrimeField>) -> Self {
        let p = field.p();
        // 1 / G(-1/2) = sigma(-2) / G(1)
        let sigma = field.legendre(p - 2) as f64;
        let kappa = Complex64::new(sigma, 0.0) / field.gauss_sum();
        Self { field, kappa, cache: RwLock::new(HashMap::new()) }
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn shared_field(&self) -> Arc<PrimeField> {
        Arc::clone(&self.field)
    }

    pub fn p(&self) -> u64 {
        self.field.p()
    }

    fn check(&self, b: &SymplecticMatrixP) -> Result<()> {
        if b.p != self.p() {
            return Err(Error::ModulusMismatch(b.p, self.p()));
        }
        let det = b.det();
        if det != 1 {
            return Err(Error::NonUnimodular { det: det as i64 });
        }
        Ok(())
    }

    pub fn kernel(&self, b: &SymplecticMatrixP) -> Result<WeilKernel> {
        self.check(b)?;
        let f = &*self.field;
        Ok(if b.b == 0 {
            let a_inv = f.inv(b.a);
            WeilKernel::Monomial {
                sign: f.legendre(b.a) as f64,
                a_inv,
                quad: f.neg(f.mul(b.c, f.mul(f.half(), a_inv))),
            }
        } else {
            let inv_2b = f.mul(f.half(), f.inv(b.b));
            WeilKernel::Quadratic {
                scale: self.kappa * f.legendre(b.b) as f64,
                xy: f.add(inv_2b, inv_2b),
                xx: f.neg(f.mul(b.d, inv_2b)),
                yy: f.neg(f.mul(b.a, inv_2b)),
            }
        })
    }

    /// Builds the dense matrix of `rho(B)` without touching the cache.
    pub fn dense(&self, b: &SymplecticMatrixP) -> Result<Operator> {
        let kernel = self.kernel(b)?;
        let f = &*self.field;
        let n = f.p() as usize;
        Ok(match kernel {
            WeilKernel::Monomial { sign, a_inv, quad } => {
                let mut m = Array2::zeros((n, n));
                for x in 0..n as u64 {
                    let y = f.mul(a_inv, x);
                    m[[x as usize, y as usize]] = f.psi(f.mul(quad, f.mul(x, x))) * sign;
                }
                m
            }
            WeilKernel::Quadratic { .. } => {
                Array2::from_shape_fn((n, n), |(x, y)| kernel.entry(f, x as u64, y as u64))
            }
        })
    }

    /// Cached dense `rho(B)`.
    pub fn weil_rep(&self, b: &SymplecticMatrixP) -> Result<Arc<Operator>> {
        if let Some(m) = self.cache.read().expect("cache poisoned").get(b) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(self.dense(b)?);
        let mut cache = self.cache.write().expect("cache poisoned");
        Ok(Arc::clone(cache.entry(*b).or_insert(m)))
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().expect("cache poisoned").len()
    }

    /// `rho(B) v` straight from the kernel.
    pub fn apply(&self, b: &SymplecticMatrixP, v: &StateVector) -> Result<StateVector> {
        let kernel = self.kernel(b)?;
        let f = &*self.field;
        let n = f.p() as usize;
        Ok(match kernel {
            WeilKernel::Monomial { sign, a_inv, quad } => Array1::from_shape_fn(n, |x| {
                let x = x as u64;
                f.psi(f.mul(quad, f.mul(x, x))) * sign * v[f.mul(a_inv, x) as usize]
            }),
            WeilKernel::Quadratic { .. } => Array1::from_shape_fn(n, |x| {
                (0..n)
                    .map(|y| kernel.entry(f, x as u64, y as u64) * v[y])
                    .sum()
            }),
        })
    }

    /// Frobenius norm of `rho(B) pi(xi) - pi(B xi) rho(B)`. For unitary
    /// `rho(B)` this equals the Frobenius norm of
    /// `rho(B) pi(xi) rho(B)^-1 - pi(B xi)` and bounds its operator norm.
    pub fn egorov_defect(&self, b: &SymplecticMatrixP, xi: WeylIndex) -> Result<f64> {
        let rho = self.weil_rep(b)?;
        Ok(egorov_residual(&self.field, &rho, b, xi))
    }
}

/// Egorov residual for an already materialized `rho = rho(B)`.
pub fn egorov_residual(
    field: &PrimeField,
    rho: &Operator,
    b: &SymplecticMatrixP,
    xi: WeylIndex,
) -> f64 {
    let n = field.p() as usize;
    let left = weyl_operator(field, xi);
    let right = weyl_operator(field, b.apply(xi));
    let mut acc = 0.0;
    for x in 0..n {
        let rx = right.column_of(x);
        for y in 0..n {
            // (rho pi)[x, y + lambda] = rho[x, y] * left.phases[y]
            let z = left.column_of(y);
            let lhs = rho[[x, y]] * left.phases[y];
            let rhs = right.phases[x] * rho[[rx, z]];
            acc += (lhs - rhs).norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn max_abs_diff(a: &Operator, b: &Operator) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn adjoint(a: &Operator) -> Operator {
    a.t().mapv(|z| z.conj())
}

pub fn identity(n: usize) -> Operator {
    Array2::from_diag_elem(n, Complex64::new(1.0, 0.0))
}

/// Entrywise distance of `U U*` from the identity.
pub fn unitarity_defect(u: &Operator) -> f64 {
    max_abs_diff(&u.dot(&adjoint(u)), &identity(u.nrows()))
}
