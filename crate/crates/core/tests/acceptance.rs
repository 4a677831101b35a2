//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The all-frequency bound is a known failure. At split primes a nonzero
//! `xi` can be an eigenvector of `A mod p`; its conjugate then sits on an
//! axis of the diagonal torus and the quadratic-character sum equals
//! `p - 2`, above `2 sqrt(p)` once `p >= 11`. That line prints as a
//! known FAIL, followed by a companion line over the remaining
//! frequencies. The process exits nonzero on any other failure, or if the
//! known failure stops failing.

use std::process::{Command, ExitCode};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use catmapq::classical::{
    hecke_torus, random_sl2, random_weyl_index, splitting_type, SplitType, SymplecticMatrixP,
    SymplecticMatrixZ, WeylIndex,
};
use catmapq::exp_sums::{
    a_chi_all, bound_scan, closed_form_fit, conjugation_invariance_defect, is_eigen_frequency,
    rate_records, salie_direct, trace_f, trace_f_dense, CharacterSelection, ExpSumRecord,
    Frequencies, PrimeContext, SplitConjugation,
};
use catmapq::ff::is_odd_prime;
use catmapq::hecke::{eigenvector_defect, hecke_eigenbasis, projector_defects, HeckeEigenspace};
use catmapq::parallel;
use catmapq::quantization::{egorov_residual, max_abs_diff, Observable, WeilRepresentation};

const SEED: u64 = 0x5eed_2024;

fn odd_primes(max: u64) -> Vec<u64> {
    (3..=max).filter(|&p| is_odd_prime(p)).collect()
}

fn matrices() -> [SymplecticMatrixZ; 3] {
    [
        SymplecticMatrixZ::cat_map(),
        SymplecticMatrixZ::new(3, 1, 2, 1).unwrap(),
        SymplecticMatrixZ::new(5, 2, 2, 1).unwrap(),
    ]
}

struct Outcome {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { id, passed, detail }
}

/// Identifiers expected to fail, with the reason printed next to them.
const KNOWN_FAILURES: [(&str, &str); 1] = [(
    "trace-sum-bound",
    "eigenvector frequencies of A mod p at split primes give |a_sigma| = p - 2",
)];

fn worst(records: &[ExpSumRecord]) -> Option<&ExpSumRecord> {
    records.iter().max_by(|a, b| a.normalized.total_cmp(&b.normalized))
}

fn trace_sum_bound() -> Vec<Outcome> {
    let a = SymplecticMatrixZ::cat_map();
    let scan = bound_scan(&odd_primes(101), &a, &Frequencies::All, &CharacterSelection::All, true).unwrap();
    let bad: Vec<&ExpSumRecord> = scan.violations().collect();
    let tori: Vec<_> = odd_primes(101)
        .into_iter()
        .filter_map(|p| hecke_torus(&a, p).ok())
        .collect();
    let eigen = |r: &ExpSumRecord| {
        let t = tori.iter().find(|t| t.p() == r.p).unwrap();
        is_eigen_frequency(t.a_bar(), r.xi)
    };
    let all_eigen = bad.iter().all(|r| eigen(r) && (r.a_chi.norm() - (r.p - 2) as f64).abs() < 1e-9);
    let w = worst(&scan.records).unwrap();
    let mut out = vec![outcome(
        "trace-sum-bound",
        bad.is_empty(),
        format!(
            "cat map, p <= 101, all xi != 0, all chi: {} records, max |a|/2sqrt(p) = {:.6} at p={} xi={} chi={}; \
             {} violations, all at eigenvector frequencies with |a| = p - 2: {}; skipped {:?}",
            scan.records.len(),
            w.normalized,
            w.p,
            w.xi,
            w.chi_index,
            bad.len(),
            all_eigen,
            scan.skipped.iter().map(|s| s.p).collect::<Vec<_>>()
        ),
    )];
    for m in matrices() {
        let scan = bound_scan(&odd_primes(101), &m, &Frequencies::All, &CharacterSelection::All, true).unwrap();
        let tori: Vec<_> = odd_primes(101)
            .into_iter()
            .filter_map(|p| hecke_torus(&m, p).ok())
            .collect();
        let kept: Vec<ExpSumRecord> = scan
            .records
            .iter()
            .filter(|r| {
                let t = tori.iter().find(|t| t.p() == r.p).unwrap();
                !is_eigen_frequency(t.a_bar(), r.xi)
            })
            .cloned()
            .collect();
        let w = worst(&kept).unwrap();
        out.push(outcome(
            "trace-sum-bound-non-eigen",
            kept.iter().all(|r| r.within_bound()),
            format!(
                "A={m}, p <= 101, xi not an eigenvector mod p: {} records, max {:.9} at p={} xi={} chi={}",
                kept.len(),
                w.normalized,
                w.p,
                w.xi,
                w.chi_index
            ),
        ));
    }
    out
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for p in [7u64, 11, 13] {
        let torus = hecke_torus(&SymplecticMatrixZ::cat_map(), p).unwrap();
        let rep = WeilRepresentation::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ p);
        let mut bs: Vec<SymplecticMatrixP> = torus.elements().to_vec();
        bs.extend((0..200).map(|_| random_sl2(&mut rng, rep.field())));
        let xis: Vec<WeylIndex> = (0..p)
            .flat_map(|l| (0..p).map(move |m| WeylIndex { lambda: l, mu: m }))
            .collect();
        let per_b = parallel::map(&bs, |b| {
            let rep = WeilRepresentation::with_field(rep.shared_field());
            xis.iter()
                .map(|&xi| (trace_f(&rep, b, xi).unwrap() - trace_f_dense(&rep, b, xi).unwrap()).norm())
                .fold(0.0, f64::max)
        });
        worst = per_b.into_iter().fold(worst, f64::max);
        count += bs.len() * xis.len();
    }
    outcome(
        "oracle-equivalence",
        worst <= 1e-10,
        format!("p in {{7, 11, 13}}, T_A + 200 random B, all xi: {count} pairs, max |fast - dense| = {worst:.2e} (tol 1e-10)"),
    )
}

fn egorov() -> Outcome {
    let exhaustive = parallel::map(&odd_primes(31), |&p| {
        let rep = WeilRepresentation::new(p).unwrap();
        let f = rep.field();
        let gens = [
            SymplecticMatrixP::new(0, 1, -1, 0, p).unwrap(),
            SymplecticMatrixP::new(1, 1, 0, 1, p).unwrap(),
            SymplecticMatrixP::new(1, 0, 1, 1, p).unwrap(),
            SymplecticMatrixP::diagonal(f, f.generator()),
        ];
        let mut w = 0.0f64;
        for b in &gens {
            let rho = rep.dense(b).unwrap();
            for l in 0..p {
                for m in 0..p {
                    w = w.max(egorov_residual(f, &rho, b, WeylIndex { lambda: l, mu: m }));
                }
            }
        }
        w
    })
    .into_iter()
    .fold(0.0, f64::max);
    let random = parallel::map(&[61u64, 101], |&p| {
        let rep = WeilRepresentation::new(p).unwrap();
        let f = rep.field();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (p << 8));
        let pairs: Vec<_> = (0..1000)
            .map(|_| (random_sl2(&mut rng, f), random_weyl_index(&mut rng, p, false)))
            .collect();
        parallel::map(&pairs, |(b, xi)| egorov_residual(f, &rep.dense(b).unwrap(), b, *xi))
            .into_iter()
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    let w = exhaustive.max(random);
    outcome(
        "egorov",
        w <= 1e-10,
        format!(
            "generators W, U_1, L_1, D_g at all p <= 31 and all xi: {exhaustive:.2e}; \
             1000 random (B, xi) at p = 61, 101: {random:.2e} (tol 1e-10)"
        ),
    )
}

fn multiplicativity() -> Outcome {
    let mut parts = Vec::new();
    let mut w = 0.0f64;
    for p in [7u64, 11, 31, 61] {
        let rep = WeilRepresentation::new(p).unwrap();
        let f = rep.field();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (p << 16));
        let pairs: Vec<_> = (0..1000).map(|_| (random_sl2(&mut rng, f), random_sl2(&mut rng, f))).collect();
        let d = parallel::map(&pairs, |(b1, b2)| {
            let lhs = rep.dense(&b1.mul(b2)).unwrap();
            let rhs = rep.dense(b1).unwrap().dot(&rep.dense(b2).unwrap());
            max_abs_diff(&lhs, &rhs)
        })
        .into_iter()
        .fold(0.0, f64::max);
        parts.push(format!("p={p}: {d:.2e}"));
        w = w.max(d);
    }
    outcome(
        "representation",
        w <= 1e-10,
        format!("1000 random pairs, max |rho(B1 B2) - rho(B1) rho(B2)|: {} (tol 1e-10)", parts.join(", ")),
    )
}

fn conjugation() -> Outcome {
    let per = parallel::map(&odd_primes(61), |&p| {
        let rep = WeilRepresentation::new(p).unwrap();
        let f = rep.field();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (p << 24));
        (0..1000)
            .map(|_| {
                let s = random_sl2(&mut rng, f);
                let b = random_sl2(&mut rng, f);
                let xi = random_weyl_index(&mut rng, p, false);
                conjugation_invariance_defect(&rep, &s, &b, xi).unwrap()
            })
            .fold(0.0, f64::max)
    });
    let w = per.into_iter().fold(0.0, f64::max);
    outcome(
        "conjugation-invariance",
        w <= 1e-9,
        format!("1000 random (S, B, xi) per odd prime <= 61: max |F(SBS^-1, S xi) - F(B, xi)| = {w:.2e} (tol 1e-9)"),
    )
}

fn split_closed_form() -> Outcome {
    let a = SymplecticMatrixZ::cat_map();
    let split: Vec<u64> = odd_primes(101)
        .into_iter()
        .filter(|&p| splitting_type(&a, p) == SplitType::Split)
        .collect();
    let per = parallel::map(&split, |&p| {
        let ctx = PrimeContext::new(&a, p).unwrap();
        let f = ctx.rep.field();
        let conj = SplitConjugation::new(&ctx.torus, f).unwrap();
        let reference = WeylIndex::new(1, 0, p);
        let mut probes = vec![reference];
        probes.extend(WeylIndex::all_nonzero(p).filter(|x| *x != reference));
        let fit = closed_form_fit(&ctx.rep, &ctx.torus, &conj, &probes).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (p << 32));
        let mut salie = 0.0f64;
        let mut salie_mod = 0.0f64;
        let mut tested = 0;
        while tested < 20 {
            let xi = random_weyl_index(&mut rng, p, true);
            let eta = conj.conjugator.apply(xi);
            if eta.lambda == 0 || eta.mu == 0 {
                continue;
            }
            let all = a_chi_all(&ctx.rep, &ctx.torus, xi, true).unwrap();
            for (k, v) in all.iter().enumerate() {
                let s = salie_direct(f, eta, conj.field_character_index(k)).unwrap();
                salie = salie.max((v - fit.constant * s).norm());
                salie_mod = salie_mod.max((v.norm() - s.norm()).abs());
            }
            tested += 1;
        }
        (p, fit.constant, fit.max_deviation, salie, salie_mod)
    });
    let dev = per.iter().map(|r| r.2).fold(0.0, f64::max);
    let modulus = per.iter().map(|r| (r.1.norm() - 1.0).abs()).fold(0.0, f64::max);
    let constant_one = per.iter().map(|r| (r.1 - 1.0).norm()).fold(0.0, f64::max);
    let salie = per.iter().map(|r| r.3).fold(0.0, f64::max);
    let salie_mod = per.iter().map(|r| r.4).fold(0.0, f64::max);
    outcome(
        "split-closed-form",
        dev <= 1e-9 && modulus <= 1e-9 && salie <= 1e-9 && salie_mod <= 1e-9,
        format!(
            "split primes {split:?}: closed-form deviation {dev:.2e}, ||c| - 1| = {modulus:.2e}, |c - 1| = {constant_one:.2e}, \
             salie vs a_chi {salie:.2e} (modulus {salie_mod:.2e}) (tol 1e-9)"
        ),
    )
}

struct Spectral {
    p: u64,
    context: PrimeContext,
    spaces: Vec<HeckeEigenspace>,
}

fn spectra() -> Vec<Spectral> {
    let a = SymplecticMatrixZ::cat_map();
    let primes: Vec<u64> = odd_primes(101)
        .into_iter()
        .filter(|&p| splitting_type(&a, p) != SplitType::Degenerate)
        .collect();
    parallel::map(&primes, |&p| {
        let context = PrimeContext::new(&a, p).unwrap();
        let spaces = hecke_eigenbasis(&context.rep, &context.torus).unwrap();
        Spectral { p, context, spaces }
    })
}

fn equidistribution_rate(spectra: &[Spectral]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let coeffs: Vec<[Complex64; 4]> = vec![
        [Complex64::new(1.0, 0.0); 4],
        std::array::from_fn(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
    ];
    let per = parallel::map(spectra, |s| {
        let p = s.p;
        let mut ratio = 0.0f64;
        let mut constant = 0.0f64;
        let mut spread = 0.0f64;
        for c in &coeffs {
            let mut f = Observable::new();
            f.insert(WeylIndex::ZERO, c[0]);
            for (i, (l, m)) in [(1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                f.insert(WeylIndex::new(l, m, p), c[i + 1]);
            }
            for r in rate_records(&s.context.torus, s.context.rep.field(), &s.spaces, &f) {
                ratio = ratio.max(r.deviation / r.bound);
                constant = constant.max(r.measured_constant / r.c_f);
                spread = spread.max(r.summand_spread);
            }
        }
        (ratio, constant, spread)
    });
    let ratio = per.iter().map(|r| r.0).fold(0.0, f64::max);
    let constant = per.iter().map(|r| r.1).fold(0.0, f64::max);
    let spread = per.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        "equidistribution-rate",
        ratio <= 1.0 && spread <= 1e-9,
        format!(
            "non-degenerate p <= 101, support {{(1,0), (0,1), (1,1)}}: max |mean - c_0| / (C_f/sqrt p) = {ratio:.4}, \
             best constant {constant:.4} * C_f with C_f = 2 sum|c_xi|, summand spread {spread:.2e} (tol 1e-9)"
        ),
    )
}

fn spectral_completeness(spectra: &[Spectral]) -> Outcome {
    let per = parallel::map(spectra, |s| {
        let dims: Vec<usize> = s.spaces.iter().map(|e| e.dimension).collect();
        let ok = dims.iter().all(|&d| d <= 2) && dims.iter().sum::<usize>() == s.p as usize;
        let d = projector_defects(&s.context.rep, &s.context.torus, &s.spaces).unwrap();
        let e = eigenvector_defect(&s.context.rep, &s.context.torus, &s.spaces).unwrap();
        (ok, d.max().max(d.trace_integrality).max(e))
    });
    let dims_ok = per.iter().all(|r| r.0);
    let w = per.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        "spectral-completeness",
        dims_ok && w <= 1e-9,
        format!(
            "{} non-degenerate primes <= 101: dimensions in {{0,1,2}} summing to p: {dims_ok}; \
             max projector defect {w:.2e} (tol 1e-9)",
            spectra.len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_catmapq");
    let run = |tag: &str, format: &str| -> (Vec<u8>, Vec<u8>, i32) {
        let out = dir.path().join(format!("{tag}.{format}"));
        let report = dir.path().join(format!("{tag}.report.json"));
        let status = Command::new(bin)
            .args(["verify", "--primes", "3..31", "--xi", "1,0", "--xi", "0,1", "--xi", "1,1", "--seed", "17"])
            .args(["--format", format, "--out"])
            .arg(&out)
            .arg("--report")
            .arg(&report)
            .env_remove("SOURCE_DATE_EPOCH")
            .output()
            .unwrap()
            .status;
        (std::fs::read(&out).unwrap(), std::fs::read(&report).unwrap(), status.code().unwrap_or(-1))
    };
    let mut same = true;
    let mut codes = Vec::new();
    for format in ["csv", "json"] {
        let a = run("first", format);
        let b = run("second", format);
        same &= a.0 == b.0 && a.1 == b.1 && !a.0.is_empty();
        codes.extend([a.2, b.2]);
    }
    outcome(
        "determinism",
        same && codes.iter().all(|&c| c == 0),
        format!("two verify runs per format (csv, json) byte-identical: {same}; exit codes {codes:?}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results = trace_sum_bound();
    results.push(oracle_equivalence());
    results.push(egorov());
    results.push(multiplicativity());
    results.push(conjugation());
    results.push(split_closed_form());
    let spectra = spectra();
    results.push(equidistribution_rate(&spectra));
    results.push(spectral_completeness(&spectra));
    results.push(determinism());

    let mut unexpected = 0;
    for r in &results {
        let known = KNOWN_FAILURES.iter().find(|(id, _)| *id == r.id);
        let tag = match (r.passed, known) {
            (true, None) => "PASS",
            (false, None) => {
                unexpected += 1;
                "FAIL"
            }
            (false, Some(_)) => "FAIL (known)",
            (true, Some(_)) => {
                unexpected += 1;
                "PASS (unexpected)"
            }
        };
        println!("[{tag}] {}: {}", r.id, r.detail);
        if let (false, Some((_, why))) = (r.passed, known) {
            println!("        known failure: {why}");
        }
    }
    println!(
        "{} criteria, {} passed, {} failed ({} unexpected) in {:.1} s",
        results.len(),
        results.iter().filter(|r| r.passed).count(),
        results.iter().filter(|r| !r.passed).count(),
        unexpected,
        start.elapsed().as_secs_f64()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
