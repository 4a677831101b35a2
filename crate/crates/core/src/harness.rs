//! Batch driver behind the `catmapq` binary: configuration parsing, the
//! `verify`, `spectrum` and `trace-table` commands, and record files.
//!
//! Output files are a pure function of the configuration. Wall-clock
//! timings are only ever printed, and the JSON header timestamp is taken
//! from `SOURCE_DATE_EPOCH` (null when unset).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{
    is_hyperbolic, random_sl2, random_weyl_index, LatticeVector, SplitType, SymplecticMatrixP,
    SymplecticMatrixZ, WeylIndex,
};
use crate::error::{Error, Result};
use crate::exp_sums::{
    bound_scan, closed_form_fit, conjugation_invariance_defect, diagonal_closed_form, rate_records,
    trace_f, trace_f_dense, AverageMode, CharacterSelection, ExpSumRecord, Frequencies,
    PrimeContext, Skipped, SplitConjugation,
};
use crate::ff::is_odd_prime;
use crate::hecke::{eigenvector_defect, hecke_eigenbasis, multiplicity_profile, projector_defects};
use crate::parallel;
use crate::quantization::{max_abs_diff, weyl_operator, Observable};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EGOROV_TOL: f64 = 1e-10;
pub const REP_TOL: f64 = 1e-10;
pub const PATH_TOL: f64 = 1e-10;
pub const CONJ_TOL: f64 = 1e-9;
pub const PROJECTOR_TOL: f64 = 1e-9;
pub const SUMMAND_TOL: f64 = 1e-9;

/// Random samples per prime for each sampled suite.
const SAMPLES: usize = 32;
const REP_SAMPLES: usize = 8;

/// Support of the observable used by the rate check when `--xi all`.
const DEFAULT_SUPPORT: [(i64, i64); 3] = [(1, 0), (0, 1), (1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format {s:?} (expected csv or json)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub primes: Vec<u64>,
    pub matrix: SymplecticMatrixZ,
    pub frequencies: Frequencies,
    pub chars: CharacterSelection,
    pub fast: bool,
    pub mode: AverageMode,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed: u64,
}

/// The part of a configuration that determines results. Output paths are
/// left out so that moving a run does not change its files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub primes: Vec<u64>,
    pub matrix: SymplecticMatrixZ,
    pub frequencies: Frequencies,
    pub chars: CharacterSelection,
    pub fast: bool,
    pub mode: AverageMode,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(primes: Vec<u64>, matrix: SymplecticMatrixZ) -> Self {
        Self {
            primes,
            matrix,
            frequencies: Frequencies::List(vec![LatticeVector::new(1, 0)]),
            chars: CharacterSelection::All,
            fast: true,
            mode: AverageMode::Mean,
            format: OutputFormat::Csv,
            out: None,
            report: None,
            seed: 0,
        }
    }

    pub fn validate(&mut self) -> Result<()> {
        if let Some(&p) = self.primes.iter().find(|&&p| !is_odd_prime(p)) {
            return Err(Error::Config(format!("{p} is not an odd prime")));
        }
        self.primes.sort_unstable();
        self.primes.dedup();
        if self.primes.is_empty() {
            return Err(Error::Config("no primes selected".into()));
        }
        if !is_hyperbolic(&self.matrix) {
            return Err(Error::NotHyperbolic { trace: self.matrix.trace() });
        }
        if let Frequencies::List(v) = &self.frequencies {
            if v.is_empty() {
                return Err(Error::Config("at least one --xi is required".into()));
            }
            for xi in v {
                if let Some(&p) = self.primes.iter().find(|&&p| xi.reduce(p).is_zero()) {
                    return Err(Error::Config(format!(
                        "xi = ({}, {}) vanishes mod {p}",
                        xi.lambda, xi.mu
                    )));
                }
            }
        }
        if let CharacterSelection::Indices(v) = &self.chars {
            if v.is_empty() {
                return Err(Error::Config("empty --chi list".into()));
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            primes: self.primes.clone(),
            matrix: self.matrix,
            frequencies: self.frequencies.clone(),
            chars: self.chars.clone(),
            fast: self.fast,
            mode: self.mode,
            seed: self.seed,
        }
    }
}

/// `"7..31"` (inclusive, odd primes only), `"7,11,13"`, or a mix such as
/// `"3,7..19"`. Explicit entries must themselves be odd primes.
pub fn parse_primes(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo = parse_u64(lo)?;
            let hi = parse_u64(hi)?;
            if lo > hi {
                return Err(Error::Config(format!("empty prime range {part}")));
            }
            out.extend((lo..=hi).filter(|&p| is_odd_prime(p)));
        } else {
            let p = parse_u64(part)?;
            if !is_odd_prime(p) {
                return Err(Error::Config(format!("{p} is not an odd prime")));
            }
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no odd primes in {s:?}")));
    }
    Ok(out)
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("not a non-negative integer: {s:?}")))
}

fn parse_ints(s: &str) -> Result<Vec<i64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|_| Error::Config(format!("not an integer: {t:?}")))
        })
        .collect()
}

pub fn parse_matrix(s: &str) -> Result<SymplecticMatrixZ> {
    match parse_ints(s)?.as_slice() {
        &[a, b, c, d] => SymplecticMatrixZ::new(a, b, c, d),
        _ => Err(Error::Config(format!("--matrix takes four integers a,b,c,d, got {s:?}"))),
    }
}

pub fn parse_xi(s: &str) -> Result<LatticeVector> {
    match parse_ints(s)?.as_slice() {
        &[l, m] => Ok(LatticeVector::new(l, m)),
        _ => Err(Error::Config(format!("--xi takes two integers l,m, got {s:?}"))),
    }
}

/// Repeated `--xi` values; a single `all` selects every nonzero frequency.
pub fn parse_frequencies(values: &[String]) -> Result<Frequencies> {
    if values.iter().any(|v| v.trim() == "all") {
        if values.len() > 1 {
            return Err(Error::Config("--xi all cannot be combined with explicit values".into()));
        }
        return Ok(Frequencies::All);
    }
    Ok(Frequencies::List(values.iter().map(|v| parse_xi(v)).collect::<Result<_>>()?))
}

pub fn parse_chars(s: &str) -> Result<CharacterSelection> {
    if s.trim() == "all" {
        return Ok(CharacterSelection::All);
    }
    let v = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad character index {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CharacterSelection::Indices(v))
}

/// Exit status for an error: 2 for anything the user can fix in the
/// invocation, 1 for failures found while computing.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::RankMismatch { .. } => 1,
        _ => 2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub p: u64,
    pub samples: usize,
    pub max_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &str, p: u64, samples: usize, max_defect: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            p,
            samples,
            max_defect,
            tolerance,
            passed: max_defect <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub c_f: f64,
    pub bound: f64,
    /// Worst `|mean - c_0|` over all eigenbasis vectors.
    pub max_deviation: f64,
    pub measured_constant: f64,
    pub max_summand_spread: f64,
    /// Average in the configured mode for the vector attaining the worst
    /// deviation.
    pub witness_average: Complex64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeSummary {
    pub p: u64,
    pub split_type: SplitType,
    pub order: usize,
    pub max_normalized: f64,
    /// Eigenspace dimension for each character index.
    pub dimensions: Vec<usize>,
    /// How many characters have each dimension.
    pub profile: BTreeMap<usize, usize>,
    pub rate: RateSummary,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub p: u64,
    pub xi: WeylIndex,
    pub chi_index: usize,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ConfigEcho,
    pub primes: Vec<PrimeSummary>,
    pub global_max: f64,
    pub skipped: Vec<Skipped>,
    /// Records with normalized value in the near-equality window.
    pub flagged: Vec<Violation>,
    pub violations: Vec<Violation>,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    /// Human-readable summary including timings.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for sk in &self.skipped {
            let _ = writeln!(s, "warning: p={} skipped ({})", sk.p, sk.reason);
        }
        for ps in &self.primes {
            let _ = writeln!(
                s,
                "p={:<4} {:<8} N={:<4} max|a|/2sqrt(p)={:.6} dims={:?} rate={:.4}/{:.4} [{} ms]",
                ps.p,
                ps.split_type.as_str(),
                ps.order,
                ps.max_normalized,
                ps.profile,
                ps.rate.max_deviation,
                ps.rate.bound,
                ps.elapsed.as_millis()
            );
        }
        for suite in self.suites.iter().filter(|s| !s.passed) {
            let _ = writeln!(
                s,
                "FAIL {} at p={}: defect {:.3e} > {:.0e}",
                suite.name, suite.p, suite.max_defect, suite.tolerance
            );
        }
        for v in self.violations.iter().take(20) {
            let _ = writeln!(
                s,
                "FAIL bound at p={}, xi={}, chi={}: normalized {:.9}",
                v.p, v.xi, v.chi_index, v.normalized
            );
        }
        if self.violations.len() > 20 {
            let _ = writeln!(s, "... {} bound violations in total", self.violations.len());
        }
        for v in &self.flagged {
            let _ = writeln!(
                s,
                "note: near equality at p={}, xi={}, chi={}: {:.9}",
                v.p, v.xi, v.chi_index, v.normalized
            );
        }
        let _ = writeln!(
            s,
            "global max {:.9} over {} primes: {}",
            self.global_max,
            self.primes.len(),
            if self.passed { "PASS" } else { "FAIL" }
        );
        s
    }
}

fn prime_rng(seed: u64, p: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream);
    rng
}

fn observable_for(config: &RunConfig, p: u64) -> Observable {
    let support: Vec<WeylIndex> = match &config.frequencies {
        Frequencies::All => DEFAULT_SUPPORT.iter().map(|&(l, m)| WeylIndex::new(l, m, p)).collect(),
        Frequencies::List(v) => v.iter().map(|x| x.reduce(p)).collect(),
    };
    let mut f = Observable::new();
    f.insert(WeylIndex::ZERO, Complex64::new(1.0, 0.0));
    for xi in support {
        *f.entry(xi).or_insert(Complex64::new(0.0, 0.0)) += Complex64::new(1.0, 0.0);
    }
    f
}

/// Sampled invariant suites and the rate check for one prime.
fn check_prime(config: &RunConfig, ctx: &PrimeContext) -> Result<(Vec<SuiteResult>, PrimeSummary)> {
    let start = Instant::now();
    let rep = &ctx.rep;
    let torus = &ctx.torus;
    let f = rep.field();
    let p = f.p();
    let mut suites = Vec::new();

    let mut rng = prime_rng(config.seed, p, 1);
    let g = f.generator();
    let gens = [
        SymplecticMatrixP::new(0, 1, -1, 0, p)?,
        SymplecticMatrixP::new(1, 1, 0, 1, p)?,
        SymplecticMatrixP::new(1, 0, 1, 1, p)?,
        SymplecticMatrixP::diagonal(f, g),
        *torus.generator(),
    ];
    let mut egorov = 0.0f64;
    let mut n = 0;
    for b in &gens {
        for _ in 0..SAMPLES / 4 {
            egorov = egorov.max(rep.egorov_defect(b, random_weyl_index(&mut rng, p, false))?);
            n += 1;
        }
    }
    for _ in 0..SAMPLES {
        let b = random_sl2(&mut rng, f);
        egorov = egorov.max(rep.egorov_defect(&b, random_weyl_index(&mut rng, p, false))?);
        n += 1;
    }
    suites.push(SuiteResult::new("egorov", p, n, egorov, EGOROV_TOL));

    let mut rng = prime_rng(config.seed, p, 2);
    let mut mult = 0.0f64;
    for _ in 0..REP_SAMPLES {
        let b1 = random_sl2(&mut rng, f);
        let b2 = random_sl2(&mut rng, f);
        let lhs = rep.dense(&b1.mul(&b2))?;
        let rhs = rep.dense(&b1)?.dot(&rep.dense(&b2)?);
        mult = mult.max(max_abs_diff(&lhs, &rhs));
    }
    suites.push(SuiteResult::new("multiplicativity", p, REP_SAMPLES, mult, REP_TOL));

    let mut rng = prime_rng(config.seed, p, 3);
    let mut paths = 0.0f64;
    let mut conj = 0.0f64;
    for _ in 0..SAMPLES {
        let b = torus.elements()[rand::Rng::gen_range(&mut rng, 0..torus.order())];
        let xi = random_weyl_index(&mut rng, p, false);
        paths = paths.max((trace_f(rep, &b, xi)? - trace_f_dense(rep, &b, xi)?).norm());
        let s = random_sl2(&mut rng, f);
        let b = random_sl2(&mut rng, f);
        let xi = random_weyl_index(&mut rng, p, false);
        conj = conj.max(conjugation_invariance_defect(rep, &s, &b, xi)?);
    }
    suites.push(SuiteResult::new("fast-vs-dense", p, SAMPLES, paths, PATH_TOL));
    suites.push(SuiteResult::new("conjugation", p, SAMPLES, conj, CONJ_TOL));

    if torus.split_type() == SplitType::Split {
        let split = SplitConjugation::new(torus, f)?;
        let probes = [WeylIndex::new(1, 0, p), WeylIndex::new(0, 1, p), WeylIndex::new(1, 1, p)];
        let fit = closed_form_fit(rep, torus, &split, &probes)?;
        let dev = fit.max_deviation.max((fit.constant.norm() - 1.0).abs());
        suites.push(SuiteResult::new("split-closed-form", p, probes.len() * torus.order(), dev, CONJ_TOL));
    }

    let spaces = hecke_eigenbasis(rep, torus)?;
    let defects = projector_defects(rep, torus, &spaces)?;
    let eig = eigenvector_defect(rep, torus, &spaces)?;
    let dimensions: Vec<usize> = spaces.iter().map(|s| s.dimension).collect();
    let dims_ok = dimensions.iter().all(|&d| d <= 2) && dimensions.iter().sum::<usize>() == p as usize;
    let profile_ok = multiplicity_profile(rep, torus)?.values().copied().eq(dimensions.iter().copied());
    let spectral = if dims_ok && profile_ok {
        defects.max().max(defects.trace_integrality).max(eig)
    } else {
        f64::INFINITY
    };
    suites.push(SuiteResult::new("projectors", p, spaces.len(), spectral, PROJECTOR_TOL));

    let obs = observable_for(config, p);
    let recs = rate_records(torus, f, &spaces, &obs);
    let worst = recs
        .iter()
        .max_by(|a, b| a.deviation.total_cmp(&b.deviation))
        .expect("p >= 3 gives a nonempty eigenbasis");
    let spread = recs.iter().map(|r| r.summand_spread).fold(0.0, f64::max);
    suites.push(SuiteResult::new("summand-constancy", p, recs.len(), spread, SUMMAND_TOL));
    let rate = RateSummary {
        c_f: worst.c_f,
        bound: worst.bound,
        max_deviation: worst.deviation,
        measured_constant: recs.iter().map(|r| r.measured_constant).fold(0.0, f64::max),
        max_summand_spread: spread,
        witness_average: match config.mode {
            AverageMode::Sum => worst.sum,
            AverageMode::Mean => worst.mean,
        },
        passed: worst.deviation <= worst.bound,
    };
    suites.push(SuiteResult::new("rate", p, recs.len(), rate.max_deviation, rate.bound));

    let mut profile = BTreeMap::new();
    for &d in &dimensions {
        *profile.entry(d).or_insert(0) += 1;
    }
    let summary = PrimeSummary {
        p,
        split_type: torus.split_type(),
        order: torus.order(),
        max_normalized: 0.0,
        dimensions,
        profile,
        rate,
        elapsed: start.elapsed(),
    };
    Ok((suites, summary))
}

/// Runs the bound scan and every invariant suite. Config problems come
/// back as `Err`; verification failures as a report with `passed = false`.
pub fn run_verify(config: &RunConfig) -> Result<(RunReport, Vec<ExpSumRecord>)> {
    let mut config = config.clone();
    config.validate()?;
    let scan_start = Instant::now();
    let scan = bound_scan(&config.primes, &config.matrix, &config.frequencies, &config.chars, config.fast)?;
    let scan_time = scan_start.elapsed();

    let live: Vec<u64> = config
        .primes
        .iter()
        .copied()
        .filter(|p| !scan.skipped.iter().any(|s| s.p == *p))
        .collect();
    let checked = parallel::map(&live, |&p| -> Result<_> {
        let ctx = PrimeContext::new(&config.matrix, p)?;
        check_prime(&config, &ctx)
    });

    let mut suites = Vec::new();
    let mut primes = Vec::new();
    for r in checked {
        let (s, mut summary) = r?;
        summary.max_normalized = scan
            .records
            .iter()
            .filter(|r| r.p == summary.p)
            .map(|r| r.normalized)
            .fold(0.0, f64::max);
        summary.elapsed += scan_time / live.len().max(1) as u32;
        suites.extend(s);
        primes.push(summary);
    }
    let key = |r: &ExpSumRecord| Violation { p: r.p, xi: r.xi, chi_index: r.chi_index, normalized: r.normalized };
    let violations: Vec<Violation> = scan.violations().map(key).collect();
    let flagged: Vec<Violation> = scan.flagged().map(key).collect();
    let passed = violations.is_empty() && suites.iter().all(|s| s.passed);
    let report = RunReport {
        tool_version: TOOL_VERSION.into(),
        config: config.echo(),
        primes,
        global_max: scan.max_normalized(),
        skipped: scan.skipped,
        flagged,
        violations,
        suites,
        passed,
    };
    Ok((report, scan.records))
}

/// `verify`/`scan`: prints the summary, writes the record file and the
/// report when requested, and returns the exit code.
pub fn cmd_verify(config: &RunConfig) -> i32 {
    match run_verify(config) {
        Ok((report, records)) => {
            emit(&report.render());
            if let Err(e) = persist(config, &report, &records) {
                eprintln!("error: {e}");
                return 2;
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn persist(config: &RunConfig, report: &RunReport, records: &[ExpSumRecord]) -> Result<()> {
    if let Some(path) = &config.out {
        let header = FileHeader::new(config.echo());
        match config.format {
            OutputFormat::Csv => write_csv(path, records)?,
            OutputFormat::Json => write_json(path, &header, records)?,
        }
    }
    if let Some(path) = &config.report {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        fs::write(path, text)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub tool_version: String,
    pub config: ConfigEcho,
    /// Seconds since the epoch from `SOURCE_DATE_EPOCH`.
    pub timestamp: Option<u64>,
}

impl FileHeader {
    pub fn new(config: ConfigEcho) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok());
        Self { tool_version: TOOL_VERSION.into(), config, timestamp }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub header: FileHeader,
    pub records: Vec<ExpSumRecord>,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "p", "a", "b", "c", "d", "xi_lambda", "xi_mu", "chi_index", "a_chi_re", "a_chi_im", "abs_a_chi",
    "normalized", "torus_type", "N",
];

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn records_to_csv(records: &[ExpSumRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.p.to_string(),
            r.matrix.a.to_string(),
            r.matrix.b.to_string(),
            r.matrix.c.to_string(),
            r.matrix.d.to_string(),
            r.xi.lambda.to_string(),
            r.xi.mu.to_string(),
            r.chi_index.to_string(),
            float(r.a_chi.re),
            float(r.a_chi.im),
            float(r.a_chi.norm()),
            float(r.normalized),
            r.split_type.as_str().to_string(),
            r.order.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn records_from_csv(data: &[u8]) -> Result<Vec<ExpSumRecord>> {
    let mut rd = csv::Reader::from_reader(data);
    let headers = rd.headers()?.clone();
    if !headers.iter().eq(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Io(format!("unexpected CSV header {headers:?}")));
    }
    let bad = |what: &str, v: &str| Error::Io(format!("bad {what} field {v:?}"));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let int = |i: usize| row[i].parse::<i64>().map_err(|_| bad(CSV_COLUMNS[i], &row[i]));
        let uint = |i: usize| row[i].parse::<u64>().map_err(|_| bad(CSV_COLUMNS[i], &row[i]));
        let real = |i: usize| row[i].parse::<f64>().map_err(|_| bad(CSV_COLUMNS[i], &row[i]));
        out.push(ExpSumRecord {
            p: uint(0)?,
            matrix: SymplecticMatrixZ { a: int(1)?, b: int(2)?, c: int(3)?, d: int(4)? },
            xi: WeylIndex { lambda: uint(5)?, mu: uint(6)? },
            chi_index: uint(7)? as usize,
            a_chi: Complex64::new(real(8)?, real(9)?),
            normalized: real(11)?,
            split_type: SplitType::parse(&row[12]).ok_or_else(|| bad("torus_type", &row[12]))?,
            order: uint(13)? as usize,
        });
    }
    Ok(out)
}

pub fn write_csv(path: &Path, records: &[ExpSumRecord]) -> Result<()> {
    fs::write(path, records_to_csv(records)?)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ExpSumRecord>> {
    records_from_csv(&fs::read(path)?)
}

pub fn write_json(path: &Path, header: &FileHeader, records: &[ExpSumRecord]) -> Result<()> {
    let file = RecordFile { header: header.clone(), records: records.to_vec() };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<RecordFile> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub chi_index: usize,
    pub dimension: usize,
    /// `<v|pi(xi)v>` per requested `xi`, one entry per basis vector.
    pub expectations: Vec<(WeylIndex, Vec<Complex64>)>,
}

pub fn spectrum_rows(config: &RunConfig) -> Result<Vec<SpectrumRow>> {
    let p = single_prime(config)?;
    let ctx = PrimeContext::new(&config.matrix, p)?;
    let spaces = hecke_eigenbasis(&ctx.rep, &ctx.torus)?;
    let xis = config.frequencies.resolve(p);
    let ops: Vec<_> = xis.iter().map(|&xi| weyl_operator(ctx.rep.field(), xi)).collect();
    Ok(spaces
        .iter()
        .map(|s| SpectrumRow {
            chi_index: s.character.index,
            dimension: s.dimension,
            expectations: xis
                .iter()
                .zip(&ops)
                .map(|(&xi, op)| (xi, s.basis.iter().map(|v| op.expectation(v)).collect()))
                .collect(),
        })
        .collect())
}

fn single_prime(config: &RunConfig) -> Result<u64> {
    if !is_hyperbolic(&config.matrix) {
        return Err(Error::NotHyperbolic { trace: config.matrix.trace() });
    }
    match *config.primes.as_slice() {
        [p] if is_odd_prime(p) => Ok(p),
        [p] => Err(Error::Config(format!("{p} is not an odd prime"))),
        _ => Err(Error::Config("exactly one prime is required".into())),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(s: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn fmt_complex(z: Complex64) -> String {
    format!("{:+.6}{:+.6}i", z.re, z.im)
}

pub fn cmd_spectrum(config: &RunConfig) -> i32 {
    let rows = match spectrum_rows(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let mut s = String::from("k\tdim");
    if let Some(first) = rows.first() {
        for (xi, _) in &first.expectations {
            let _ = write!(s, "\t<v|pi{xi}v>");
        }
    }
    s.push('\n');
    for r in &rows {
        let _ = write!(s, "{}\t{}", r.chi_index, r.dimension);
        for (_, vals) in &r.expectations {
            let cells: Vec<String> = vals.iter().map(|&z| fmt_complex(z)).collect();
            let cell = if cells.is_empty() { "-".to_string() } else { cells.join(" ") };
            let _ = write!(s, "\t{cell}");
        }
        s.push('\n');
    }
    let total: usize = rows.iter().map(|r| r.dimension).sum();
    let _ = writeln!(s, "{} characters, dimensions sum to {total}", rows.len());
    emit(&s);
    if let Some(path) = &config.out {
        let text = serde_json::to_string_pretty(&rows).map(|mut t| {
            t.push('\n');
            t
        });
        if let Err(e) = text.map_err(Error::from).and_then(|t| Ok(fs::write(path, t)?)) {
            eprintln!("error: {e}");
            return 2;
        }
    }
    0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub b: [u64; 4],
    pub dense: Complex64,
    pub fast: Complex64,
    pub difference: f64,
    /// `constant * sigma(a) psi(...)` on split tori; absent at `B = I`.
    pub closed_form: Option<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTable {
    pub p: u64,
    pub xi: WeylIndex,
    pub split_type: SplitType,
    pub constant: Option<Complex64>,
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub fn max_difference(&self) -> f64 {
        self.rows.iter().map(|r| r.difference).fold(0.0, f64::max)
    }

    pub fn max_closed_form_deviation(&self) -> Option<f64> {
        self.constant?;
        Some(
            self.rows
                .iter()
                .filter_map(|r| r.closed_form.map(|c| (c - r.dense).norm()))
                .fold(0.0, f64::max),
        )
    }
}

pub fn trace_table(config: &RunConfig) -> Result<TraceTable> {
    let p = single_prime(config)?;
    let xi = match &config.frequencies {
        Frequencies::List(v) if v.len() == 1 => v[0].reduce(p),
        _ => return Err(Error::Config("trace-table takes exactly one --xi".into())),
    };
    if xi.is_zero() {
        return Err(Error::ZeroFrequency);
    }
    let ctx = PrimeContext::new(&config.matrix, p)?;
    let (rep, torus) = (&ctx.rep, &ctx.torus);
    let split = match torus.split_type() {
        SplitType::Split => Some(SplitConjugation::new(torus, rep.field())?),
        _ => None,
    };
    let constant = match &split {
        Some(s) => Some(closed_form_fit(rep, torus, s, &[xi])?.constant),
        None => None,
    };
    let rows = torus
        .elements()
        .iter()
        .enumerate()
        .map(|(m, b)| -> Result<TraceRow> {
            let dense = trace_f_dense(rep, b, xi)?;
            let fast = trace_f(rep, b, xi)?;
            let closed_form = match (&split, constant) {
                (Some(s), Some(c)) if s.diagonal[m] != 1 => {
                    Some(c * diagonal_closed_form(rep.field(), s.diagonal[m], s.conjugator.apply(xi)))
                }
                _ => None,
            };
            Ok(TraceRow { m, b: b.entries(), dense, fast, difference: (dense - fast).norm(), closed_form })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceTable { p, xi, split_type: torus.split_type(), constant, rows })
}

pub fn cmd_trace_table(config: &RunConfig) -> i32 {
    let table = match trace_table(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let mut s = String::new();
    let _ = writeln!(s, "p={} xi={} torus={} N={}", table.p, table.xi, table.split_type, table.rows.len());
    let _ = writeln!(s, "m\tB\tdense\tfast\t|diff|\tclosed");
    for r in &table.rows {
        let [a, b, c, d] = r.b;
        let closed = r.closed_form.map(fmt_complex).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{}\t[{a},{b};{c},{d}]\t{}\t{}\t{:.1e}\t{closed}",
            r.m,
            fmt_complex(r.dense),
            fmt_complex(r.fast),
            r.difference
        );
    }
    let _ = write!(s, "max |dense - fast| = {:.3e}", table.max_difference());
    if let (Some(c), Some(dev)) = (table.constant, table.max_closed_form_deviation()) {
        let _ = write!(s, ", closed-form constant {}, deviation {:.3e}", fmt_complex(c), dev);
    }
    s.push('\n');
    emit(&s);
    if let Some(path) = &config.out {
        let res = match config.format {
            OutputFormat::Json => serde_json::to_string_pretty(&table)
                .map_err(Error::from)
                .and_then(|t| Ok(fs::write(path, t + "\n")?)),
            OutputFormat::Csv => trace_table_csv(&table).and_then(|b| Ok(fs::write(path, b)?)),
        };
        if let Err(e) = res {
            eprintln!("error: {e}");
            return 2;
        }
    }
    0
}

fn trace_table_csv(table: &TraceTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "m", "a", "b", "c", "d", "dense_re", "dense_im", "fast_re", "fast_im", "abs_diff", "closed_re", "closed_im",
    ])?;
    for r in &table.rows {
        let (cr, ci) = match r.closed_form {
            Some(z) => (float(z.re), float(z.im)),
            None => (String::new(), String::new()),
        };
        let mut row = vec![r.m.to_string()];
        row.extend(r.b.iter().map(|v| v.to_string()));
        row.extend([
            float(r.dense.re),
            float(r.dense.im),
            float(r.fast.re),
            float(r.fast.im),
            float(r.difference),
            cr,
            ci,
        ]);
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}
