//! Hecke eigenspaces: joint eigenvectors of `{rho(B) : B in T_A}` obtained
//! by projecting onto each torus character,
//! `P_chi = (1/N) sum_B conj(chi(B)) rho(B)`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::classical::{torus_characters, HeckeTorus, SymplecticMatrixP, TorusCharacter};
use crate::error::{Error, Result};
use crate::parallel;
use crate::quantization::{Operator, StateVector, WeilKernel, WeilRepresentation};

/// Residual norm below which a projector column is treated as zero.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct HeckeEigenspace {
    pub character: TorusCharacter,
    pub projector: Operator,
    pub dimension: usize,
    pub basis: Vec<StateVector>,
}

fn check_torus(rep: &WeilRepresentation, torus: &HeckeTorus) -> Result<()> {
    if rep.p() != torus.p() {
        return Err(Error::ModulusMismatch(torus.p(), rep.p()));
    }
    Ok(())
}

pub fn character_projector(
    rep: &WeilRepresentation,
    torus: &HeckeTorus,
    chi: TorusCharacter,
) -> Result<Operator> {
    check_torus(rep, torus)?;
    if chi.order != torus.order() {
        return Err(Error::CharacterOutOfRange { index: chi.index, order: torus.order() });
    }
    let n = rep.p() as usize;
    let mut acc = Array2::<Complex64>::zeros((n, n));
    for (m, b) in torus.elements().iter().enumerate() {
        let rho = rep.weil_rep(b)?;
        let w = chi.at_exponent(m).conj();
        acc.zip_mut_with(&*rho, |a, r| *a += w * r);
    }
    let scale = 1.0 / torus.order() as f64;
    acc.mapv_inplace(|z| z * scale);
    Ok(acc)
}

/// Orthonormal basis of the column space of `proj`: repeatedly take the
/// column with the largest residual norm (lowest index on ties), normalize
/// it and project it out of the remaining columns.
pub fn orthonormal_range(proj: &Operator, tol: f64) -> Vec<StateVector> {
    let n = proj.ncols();
    let mut cols: Vec<StateVector> = (0..n).map(|j| proj.column(j).to_owned()).collect();
    let mut basis: Vec<StateVector> = Vec::new();
    loop {
        let (best, norm) = cols
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .enumerate()
            .fold((0usize, -1.0f64), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if norm <= tol || basis.len() == n {
            break;
        }
        let q = cols[best].mapv(|z| z / norm);
        for c in cols.iter_mut() {
            let overlap: Complex64 = q.iter().zip(c.iter()).map(|(a, b)| a.conj() * b).sum();
            c.zip_mut_with(&q, |x, y| *x -= overlap * y);
        }
        basis.push(q);
    }
    basis
}

pub fn hecke_eigenbasis(rep: &WeilRepresentation, torus: &HeckeTorus) -> Result<Vec<HeckeEigenspace>> {
    check_torus(rep, torus)?;
    // warm the cache before the parallel phase
    for b in torus.elements() {
        rep.weil_rep(b)?;
    }
    let chars = torus_characters(torus);
    parallel::map(&chars, |&chi| {
        let projector = character_projector(rep, torus, chi)?;
        let trace: Complex64 = projector.diag().iter().sum();
        let dimension = trace.re.round().max(0.0) as usize;
        let basis = orthonormal_range(&projector, RANK_TOL);
        if basis.len() != dimension {
            return Err(Error::RankMismatch {
                index: chi.index,
                trace_dim: dimension,
                rank: basis.len(),
            });
        }
        Ok(HeckeEigenspace { character: chi, projector, dimension, basis })
    })
    .into_iter()
    .collect()
}

/// `Tr rho(B)` in O(p) from the kernel.
pub fn weil_trace(rep: &WeilRepresentation, b: &SymplecticMatrixP) -> Result<Complex64> {
    let kernel = rep.kernel(b)?;
    let f = rep.field();
    let p = f.p();
    Ok(match kernel {
        WeilKernel::Monomial { sign, a_inv, quad } => (0..p)
            .filter(|&x| f.mul(a_inv, x) == x)
            .map(|x| f.psi(f.mul(quad, f.mul(x, x))) * sign)
            .sum(),
        WeilKernel::Quadratic { scale, xy, xx, yy } => {
            let s: Complex64 = (0..p)
                .map(|x| f.psi(WeilKernel::quadratic_exponent(xy, xx, yy, x, x, p)))
                .sum();
            scale * s
        }
    })
}

/// Dimension of each character eigenspace from the character inner product
/// `(1/N) sum_B conj(chi(B)) Tr rho(B)`, without forming projectors.
pub fn multiplicity_profile(rep: &WeilRepresentation, torus: &HeckeTorus) -> Result<BTreeMap<usize, usize>> {
    check_torus(rep, torus)?;
    let traces = torus
        .elements()
        .iter()
        .map(|b| weil_trace(rep, b))
        .collect::<Result<Vec<_>>>()?;
    let n = torus.order() as f64;
    Ok(torus_characters(torus)
        .into_iter()
        .map(|chi| {
            let s: Complex64 = traces
                .iter()
                .enumerate()
                .map(|(m, t)| chi.at_exponent(m).conj() * t)
                .sum();
            (chi.index, (s.re / n).round().max(0.0) as usize)
        })
        .collect())
}

/// Worst-case projector identity residuals over all characters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectorDefects {
    pub idempotent: f64,
    pub self_adjoint: f64,
    pub complete: f64,
    /// `|<u, v>|` for basis vectors of distinct characters.
    pub orthogonal: f64,
    /// `P_chi` against `sum_v v v*` over its basis.
    pub reconstruction: f64,
    /// `rho(generator) P_chi - chi(generator) P_chi`.
    pub eigen: f64,
    pub trace_integrality: f64,
}

impl ProjectorDefects {
    pub fn max(&self) -> f64 {
        [
            self.idempotent,
            self.self_adjoint,
            self.complete,
            self.orthogonal,
            self.reconstruction,
            self.eigen,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn max_entry(m: &Operator) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn projector_defects(
    rep: &WeilRepresentation,
    torus: &HeckeTorus,
    spaces: &[HeckeEigenspace],
) -> Result<ProjectorDefects> {
    let n = rep.p() as usize;
    let rho_g = rep.weil_rep(torus.generator())?;
    let per_space = parallel::map(spaces, |s| {
        let p = &s.projector;
        let idem = max_entry(&(p.dot(p) - p));
        let adj = max_entry(&(p - &p.t().mapv(|z| z.conj())));
        let mut recon = p.clone();
        for v in &s.basis {
            for x in 0..n {
                for y in 0..n {
                    recon[[x, y]] -= v[x] * v[y].conj();
                }
            }
        }
        let chi_g = s.character.at_exponent(1);
        let eig = max_entry(&(rho_g.dot(p) - p.mapv(|z| z * chi_g)));
        let tr: Complex64 = p.diag().iter().sum();
        let integ = (tr.re - tr.re.round()).abs().max(tr.im.abs());
        (idem, adj, max_entry(&recon), eig, integ)
    });
    let mut d = ProjectorDefects::default();
    for (idem, adj, recon, eig, integ) in per_space {
        d.idempotent = d.idempotent.max(idem);
        d.self_adjoint = d.self_adjoint.max(adj);
        d.reconstruction = d.reconstruction.max(recon);
        d.eigen = d.eigen.max(eig);
        d.trace_integrality = d.trace_integrality.max(integ);
    }
    let mut sum = Array2::<Complex64>::zeros((n, n));
    for s in spaces {
        sum += &s.projector;
    }
    for i in 0..n {
        sum[[i, i]] -= 1.0;
    }
    d.complete = max_entry(&sum);
    let tagged: Vec<(usize, &StateVector)> = spaces
        .iter()
        .flat_map(|s| s.basis.iter().map(move |v| (s.character.index, v)))
        .collect();
    for (i, (ci, u)) in tagged.iter().enumerate() {
        for (cj, v) in &tagged[i + 1..] {
            if ci != cj {
                let ip: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                d.orthogonal = d.orthogonal.max(ip.norm());
            }
        }
    }
    Ok(d)
}

/// Largest `|rho(B) v - chi(B) v|` over every basis vector and torus element.
pub fn eigenvector_defect(
    rep: &WeilRepresentation,
    torus: &HeckeTorus,
    spaces: &[HeckeEigenspace],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (m, b) in torus.elements().iter().enumerate() {
        let rho = rep.weil_rep(b)?;
        for s in spaces {
            let c = s.character.at_exponent(m);
            for v in &s.basis {
                let w: Array1<Complex64> = rho.dot(v);
                let d = w
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| (a - c * b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{hecke_torus, SymplecticMatrixZ};
    use crate::quantization::max_abs_diff;

    fn setup(p: u64) -> (WeilRepresentation, HeckeTorus) {
        (
            WeilRepresentation::new(p).unwrap(),
            hecke_torus(&SymplecticMatrixZ::cat_map(), p).unwrap(),
        )
    }

    #[test]
    fn projectors_split_and_nonsplit() {
        for (p, n) in [(11u64, 10usize), (7, 8)] {
            let (rep, t) = setup(p);
            assert_eq!(t.order(), n);
            let spaces = hecke_eigenbasis(&rep, &t).unwrap();
            assert_eq!(spaces.len(), n);
            let dims: Vec<usize> = spaces.iter().map(|s| s.dimension).collect();
            assert!(dims.iter().all(|&d| d <= 2), "{dims:?}");
            assert_eq!(dims.iter().sum::<usize>(), p as usize);
            for s in &spaces {
                let tr: Complex64 = s.projector.diag().iter().sum();
                assert!((tr.re - tr.re.round()).abs() < 1e-6 && tr.im.abs() < 1e-6);
            }
            let defects = projector_defects(&rep, &t, &spaces).unwrap();
            assert!(defects.max() < 1e-9, "{defects:?}");
            assert!(eigenvector_defect(&rep, &t, &spaces).unwrap() < 1e-8);
            let profile = multiplicity_profile(&rep, &t).unwrap();
            let from_proj: BTreeMap<usize, usize> =
                spaces.iter().map(|s| (s.character.index, s.dimension)).collect();
            assert_eq!(profile, from_proj);
            assert_eq!(spaces.iter().map(|s| s.basis.len()).sum::<usize>(), p as usize);
        }
    }

    #[test]
    fn projector_sum_is_identity() {
        let (rep, t) = setup(13);
        let n = 13;
        let mut sum = Array2::<Complex64>::zeros((n, n));
        for chi in torus_characters(&t) {
            sum += &character_projector(&rep, &t, chi).unwrap();
        }
        assert!(max_abs_diff(&sum, &crate::quantization::identity(n)) < 1e-10);
    }

    #[test]
    fn weil_trace_matches_dense() {
        let (rep, t) = setup(17);
        for b in t.elements() {
            let dense: Complex64 = rep.weil_rep(b).unwrap().diag().iter().sum();
            assert!((dense - weil_trace(&rep, b).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn mismatched_prime_is_rejected() {
        let rep = WeilRepresentation::new(11).unwrap();
        let t = hecke_torus(&SymplecticMatrixZ::cat_map(), 7).unwrap();
        assert!(hecke_eigenbasis(&rep, &t).is_err());
        let chi = TorusCharacter { index: 0, order: 3 };
        let (rep, t) = setup(7);
        assert!(character_projector(&rep, &t, chi).is_err());
    }

    #[test]
    fn pivoting_is_deterministic() {
        let (rep, t) = setup(11);
        let a = hecke_eigenbasis(&rep, &t).unwrap();
        let b = hecke_eigenbasis(&rep, &t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.basis.iter().zip(&y.basis) {
                assert_eq!(u, v);
            }
        }
    }
}
