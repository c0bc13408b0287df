//! Six tests from the SP 800-22 family, with closed-form p-values.
//!
//! Every test takes bits as `&[bool]` and returns p-values in `[0, 1]`.
//! Public entry points enforce minimum lengths; the worked examples in the
//! reference document use shorter strings and are checked against the
//! internal `*_p` functions.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{erfc, igamc, normal_cdf};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BLOCK_LEN: usize = 128;
/// Largest serial pattern length the battery picks on its own.
pub const DEFAULT_SERIAL_M: u32 = 16;
/// Characters per line in the ASCII export.
pub const ASCII_LINE_LEN: usize = 64;

pub const MIN_MONOBIT_BITS: usize = 100;
pub const MIN_BLOCK_FREQUENCY_BITS: usize = 100;
pub const MIN_RUNS_BITS: usize = 100;
pub const MIN_LONGEST_RUN_BITS: usize = 128;
pub const MIN_CUSUM_BITS: usize = 100;

fn ensure_len(test: &'static str, bits: &[bool], needed: usize) -> Result<()> {
    if bits.len() < needed {
        return Err(Error::InsufficientBits {
            test,
            needed,
            actual: bits.len(),
        });
    }
    Ok(())
}

fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

fn signed_sum(bits: &[bool]) -> i64 {
    let ones = bits.iter().filter(|&&b| b).count() as i64;
    2 * ones - bits.len() as i64
}

fn monobit_p(bits: &[bool]) -> (f64, f64) {
    let s_obs = signed_sum(bits).unsigned_abs() as f64 / (bits.len() as f64).sqrt();
    (s_obs, clamp_p(erfc(s_obs / std::f64::consts::SQRT_2)))
}

/// Frequency (monobit) test.
pub fn monobit(bits: &[bool]) -> Result<f64> {
    ensure_len("monobit", bits, MIN_MONOBIT_BITS)?;
    Ok(monobit_p(bits).1)
}

fn block_frequency_p(bits: &[bool], block_len: usize) -> (f64, f64) {
    let blocks = bits.len() / block_len;
    let chi2 = 4.0
        * block_len as f64
        * bits
            .chunks_exact(block_len)
            .map(|b| {
                let pi = b.iter().filter(|&&x| x).count() as f64 / block_len as f64;
                (pi - 0.5).powi(2)
            })
            .sum::<f64>();
    (chi2, clamp_p(igamc(blocks as f64 / 2.0, chi2 / 2.0)))
}

/// Frequency test within blocks of `block_len` bits. Trailing bits are unused.
pub fn block_frequency(bits: &[bool], block_len: usize) -> Result<f64> {
    ensure_len("block_frequency", bits, MIN_BLOCK_FREQUENCY_BITS)?;
    if block_len < 2 || block_len > bits.len() {
        return Err(Error::param(
            "block_len",
            format!("must lie in 2..={}, got {block_len}", bits.len()),
        ));
    }
    Ok(block_frequency_p(bits, block_len).1)
}

fn runs_p(bits: &[bool]) -> (f64, f64) {
    let n = bits.len() as f64;
    let pi = bits.iter().filter(|&&b| b).count() as f64 / n;
    let v_obs = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    // Frequency prerequisite.
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return (v_obs as f64, 0.0);
    }
    let q = pi * (1.0 - pi);
    let num = (v_obs as f64 - 2.0 * n * q).abs();
    let den = 2.0 * (2.0 * n).sqrt() * q;
    (v_obs as f64, clamp_p(erfc(num / den)))
}

/// Runs test. Returns 0 when the monobit prerequisite fails.
pub fn runs(bits: &[bool]) -> Result<f64> {
    ensure_len("runs", bits, MIN_RUNS_BITS)?;
    Ok(runs_p(bits).1)
}

struct LongestRunTable {
    block_len: usize,
    /// Longest-run value of the first category; the last category is open above.
    v_min: usize,
    probs: &'static [f64],
}

fn longest_run_table(n: usize) -> LongestRunTable {
    if n < 6272 {
        LongestRunTable {
            block_len: 8,
            v_min: 1,
            probs: &[0.214_843_75, 0.367_187_5, 0.230_468_75, 0.1875],
        }
    } else if n < 750_000 {
        LongestRunTable {
            block_len: 128,
            v_min: 4,
            probs: &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124],
        }
    } else {
        LongestRunTable {
            block_len: 10_000,
            v_min: 10,
            probs: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
        }
    }
}

fn longest_run_p(bits: &[bool]) -> (f64, f64) {
    let table = longest_run_table(bits.len());
    let k = table.probs.len() - 1;
    let mut counts = vec![0u64; k + 1];
    let blocks = bits.len() / table.block_len;
    for block in bits.chunks_exact(table.block_len) {
        let (mut best, mut cur) = (0usize, 0usize);
        for &b in block {
            cur = if b { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        counts[best.saturating_sub(table.v_min).min(k)] += 1;
    }
    let nb = blocks as f64;
    let chi2: f64 = counts
        .iter()
        .zip(table.probs)
        .map(|(&c, &p)| (c as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    (chi2, clamp_p(igamc(k as f64 / 2.0, chi2 / 2.0)))
}

/// Longest run of ones in a block. Block length follows the input length:
/// 8 below 6272 bits, 128 below 750 000, otherwise 10 000.
pub fn longest_run_of_ones(bits: &[bool]) -> Result<f64> {
    ensure_len("longest_run_of_ones", bits, MIN_LONGEST_RUN_BITS)?;
    Ok(longest_run_p(bits).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CusumDirection {
    Forward,
    Backward,
}

fn cusum_p(bits: &[bool], direction: CusumDirection) -> (f64, f64) {
    let n = bits.len() as f64;
    let step = |b: &bool| if *b { 1i64 } else { -1 };
    let mut s = 0i64;
    let mut z = 0i64;
    let mut visit = |b: &bool| {
        s += step(b);
        z = z.max(s.abs());
    };
    match direction {
        CusumDirection::Forward => bits.iter().for_each(&mut visit),
        CusumDirection::Backward => bits.iter().rev().for_each(&mut visit),
    }
    let z = z as f64;
    let sqrt_n = n.sqrt();
    let mut sum1 = 0.0;
    // Bounds truncate toward zero, matching the reference implementation.
    let mut k = ((-n / z + 1.0) / 4.0).trunc() as i64;
    let k_hi = ((n / z - 1.0) / 4.0).trunc() as i64;
    while k <= k_hi {
        let kf = k as f64;
        sum1 +=
            normal_cdf((4.0 * kf + 1.0) * z / sqrt_n) - normal_cdf((4.0 * kf - 1.0) * z / sqrt_n);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = ((-n / z - 3.0) / 4.0).trunc() as i64;
    while k <= k_hi {
        let kf = k as f64;
        sum2 +=
            normal_cdf((4.0 * kf + 3.0) * z / sqrt_n) - normal_cdf((4.0 * kf + 1.0) * z / sqrt_n);
        k += 1;
    }
    (z, clamp_p(1.0 - sum1 + sum2))
}

/// Cumulative sums test in the given direction.
pub fn cumulative_sums(bits: &[bool], direction: CusumDirection) -> Result<f64> {
    ensure_len("cumulative_sums", bits, MIN_CUSUM_BITS)?;
    Ok(cusum_p(bits, direction).1)
}

/// `ψ²_m` over overlapping `m`-bit patterns with wrap-around; 0 for `m = 0`.
fn psi_squared(bits: &[bool], m: u32) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    let mut v = 0usize;
    for &b in &bits[..m as usize - 1] {
        v = (v << 1) | usize::from(b);
    }
    for i in 0..n {
        let b = bits[(i + m as usize - 1) % n];
        v = ((v << 1) | usize::from(b)) & mask;
        counts[v] += 1;
    }
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    sum_sq * (1u64 << m) as f64 / n as f64 - n as f64
}

fn serial_p(bits: &[bool], m: u32) -> (f64, [f64; 2]) {
    let psi_m = psi_squared(bits, m);
    let psi_m1 = psi_squared(bits, m - 1);
    let psi_m2 = if m >= 2 {
        psi_squared(bits, m - 2)
    } else {
        0.0
    };
    let del1 = psi_m - psi_m1;
    let del2 = psi_m - 2.0 * psi_m1 + psi_m2;
    let p1 = igamc(2f64.powi(m as i32 - 2), del1 / 2.0);
    let p2 = igamc(2f64.powi(m as i32 - 3), del2 / 2.0);
    (del1, [clamp_p(p1), clamp_p(p2)])
}

/// Largest `m` the serial test accepts for `n` bits: `⌊log₂ n⌋ − 3`.
pub fn max_serial_m(n: usize) -> Option<u32> {
    if n == 0 {
        return None;
    }
    n.ilog2().checked_sub(3).filter(|&m| m >= 2)
}

/// Serial test with pattern length `m`; returns both p-values.
pub fn serial(bits: &[bool], m: u32) -> Result<[f64; 2]> {
    if !(2..=24).contains(&m) {
        return Err(Error::param("m", format!("must lie in 2..=24, got {m}")));
    }
    // m < ⌊log₂ n⌋ − 2  ⇔  n ≥ 2^(m+3)
    ensure_len("serial", bits, 1usize << (m + 3))?;
    Ok(serial_p(bits, m).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub alpha: f64,
    pub block_len: usize,
    /// Serial pattern length; `None` picks `min(16, ⌊log₂ n⌋ − 3)`.
    pub serial_m: Option<u32>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            block_len: DEFAULT_BLOCK_LEN,
            serial_m: None,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.block_len == 0 {
            return Err(Error::param("block_len", "must be >= 1"));
        }
        if self.serial_m == Some(0) {
            return Err(Error::param("serial_m", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    /// Smallest of `p_values`; decides `pass`.
    pub p_value: f64,
    pub p_values: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub alpha: f64,
    pub bit_count: usize,
    pub results: Vec<TestResult>,
}

impl TestReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&TestResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "bits: {}  alpha: {}", self.bit_count, self.alpha);
        let _ = writeln!(
            s,
            "{:<22} {:>14} {:>10}  result",
            "test", "statistic", "p-value"
        );
        for r in &self.results {
            let _ = writeln!(
                s,
                "{:<22} {:>14.6} {:>10.6}  {}",
                r.name,
                r.statistic,
                r.p_value,
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

/// Runs all six tests.
pub fn run_battery(bits: &[bool], config: &BatteryConfig) -> Result<TestReport> {
    config.validate()?;
    let serial_m = match config.serial_m {
        Some(m) => m,
        None => max_serial_m(bits.len())
            .map(|m| m.min(DEFAULT_SERIAL_M))
            .ok_or(Error::InsufficientBits {
                test: "serial",
                needed: 32,
                actual: bits.len(),
            })?,
    };
    let ensure_all = [
        ("monobit", MIN_MONOBIT_BITS),
        ("block_frequency", MIN_BLOCK_FREQUENCY_BITS),
        ("runs", MIN_RUNS_BITS),
        ("longest_run_of_ones", MIN_LONGEST_RUN_BITS),
        ("cumulative_sums", MIN_CUSUM_BITS),
    ];
    for (test, needed) in ensure_all {
        ensure_len(test, bits, needed)?;
    }
    // Validates block_len and serial m.
    block_frequency(bits, config.block_len)?;
    serial(bits, serial_m)?;

    let record = |name: &str, statistic: f64, p_values: Vec<f64>| {
        let p_value = p_values.iter().copied().fold(1.0, f64::min);
        TestResult {
            name: name.to_string(),
            statistic,
            p_value,
            p_values,
            pass: p_value >= config.alpha,
        }
    };
    let (s, p) = monobit_p(bits);
    let mut results = vec![record("monobit", s, vec![p])];
    let (s, p) = block_frequency_p(bits, config.block_len);
    results.push(record("block_frequency", s, vec![p]));
    let (s, p) = runs_p(bits);
    results.push(record("runs", s, vec![p]));
    let (s, p) = longest_run_p(bits);
    results.push(record("longest_run_of_ones", s, vec![p]));
    let (zf, pf) = cusum_p(bits, CusumDirection::Forward);
    let (zb, pb) = cusum_p(bits, CusumDirection::Backward);
    results.push(record("cumulative_sums", zf.max(zb), vec![pf, pb]));
    let (s, [p1, p2]) = serial_p(bits, serial_m);
    results.push(record("serial", s, vec![p1, p2]));

    Ok(TestReport {
        alpha: config.alpha,
        bit_count: bits.len(),
        results,
    })
}

/// Writes bits as `'0'`/`'1'`, a newline after every 64 characters and after
/// a final short line.
pub fn write_ascii_bits<W: Write>(bits: &[bool], mut w: W) -> Result<()> {
    let mut line = Vec::with_capacity(ASCII_LINE_LEN + 1);
    for chunk in bits.chunks(ASCII_LINE_LEN) {
        line.clear();
        line.extend(chunk.iter().map(|&b| if b { b'1' } else { b'0' }));
        line.push(b'\n');
        w.write_all(&line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_ascii_bits(bits: &[bool], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_ascii_bits(bits, std::io::BufWriter::new(file))
}

/// Reads an ASCII bit file; whitespace is ignored, anything else but `0`/`1`
/// is an error.
pub fn read_ascii_bits<R: Read>(r: R) -> Result<Vec<bool>> {
    let mut bits = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        for c in line?.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                c if c.is_whitespace() => {}
                c => {
                    return Err(Error::param(
                        "bits",
                        format!("unexpected character {c:?} on line {}", lineno + 1),
                    ))
                }
            }
        }
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn parse(s: &str) -> Vec<bool> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c == '1')
            .collect()
    }

    /// First 100 binary digits of e, from the reference document's examples.
    const E100: &str = "11001001000011111101101010100010001000010110100011\
                        00001000110100110001001100011001100010100010111000";

    const LONGEST_RUN_128: &str = "11001100000101010110110001001100111000000000001001\
                                   00110101010001000100111101011010000000110101111100\
                                   1100111001101101100010110010";

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 5e-7
    }

    #[test]
    fn worked_examples() {
        let e = parse(E100);
        assert_eq!(e.len(), 100);
        assert!(close(monobit(&e).unwrap(), 0.109_599));
        assert!(close(block_frequency(&e, 10).unwrap(), 0.706_438));
        assert!(close(runs(&e).unwrap(), 0.500_798));
        assert!(close(
            cumulative_sums(&e, CusumDirection::Forward).unwrap(),
            0.219_194
        ));
        assert!(close(
            cumulative_sums(&e, CusumDirection::Backward).unwrap(),
            0.114_866
        ));

        let l = parse(LONGEST_RUN_128);
        assert_eq!(l.len(), 128);
        let (chi2, p) = longest_run_p(&l);
        assert!((chi2 - 4.882_457).abs() < 1e-5, "{chi2}");
        assert!(close(p, 0.180_609), "{p}");
        assert!(close(longest_run_of_ones(&l).unwrap(), 0.180_609));
    }

    #[test]
    fn short_worked_examples() {
        assert!(close(monobit_p(&parse("1011010101")).1, 0.527_089));
        assert!(close(
            block_frequency_p(&parse("0110011010"), 3).1,
            0.801_252
        ));
        assert!(close(runs_p(&parse("1001101011")).1, 0.147_232));
        assert!(
            (cusum_p(&parse("1011010111"), CusumDirection::Forward).1 - 0.411_658_8).abs() < 1e-6
        );
        let [p1, p2] = serial_p(&parse("0011011101"), 3).1;
        assert!(close(p1, 0.808_792), "{p1}");
        assert!(close(p2, 0.670_320), "{p2}");
    }

    #[test]
    fn balanced_monobit_is_exactly_one() {
        let bits: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        assert_eq!(monobit(&bits).unwrap(), 1.0);
    }

    #[test]
    fn extreme_inputs_fail() {
        let ones = vec![true; 1000];
        assert!(monobit(&ones).unwrap() < 1e-10);
        let alt: Vec<bool> = (0..1000).map(|i| i % 2 == 1).collect();
        assert!(runs(&alt).unwrap() < 1e-10);
        assert_eq!(runs(&ones).unwrap(), 0.0);
    }

    #[test]
    fn minimum_lengths_are_enforced() {
        let short = vec![true; 99];
        for res in [
            monobit(&short),
            block_frequency(&short, 10),
            runs(&short),
            cumulative_sums(&short, CusumDirection::Forward),
            longest_run_of_ones(&[true; 127]),
        ] {
            assert!(matches!(res, Err(Error::InsufficientBits { .. })));
        }
        assert!(matches!(
            serial(&vec![true; 1023], 7),
            Err(Error::InsufficientBits { needed: 1024, .. })
        ));
        assert!(serial(&vec![true; 1024], 7).is_ok());
        assert!(matches!(
            serial(&vec![true; 1024], 1),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            block_frequency(&[true; 200], 1),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(block_frequency(&[true; 200], 201).is_err());
    }

    #[test]
    fn max_serial_m_rule() {
        assert_eq!(max_serial_m(1_000_000), Some(16));
        assert_eq!(max_serial_m(32), Some(2));
        assert_eq!(max_serial_m(31), None);
        assert_eq!(max_serial_m(0), None);
    }

    fn random_bits(seed: u64, n: usize) -> Vec<bool> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn battery_lists_six_tests() {
        let bits = random_bits(7, 100_000);
        let report = run_battery(&bits, &BatteryConfig::default()).unwrap();
        assert_eq!(report.results.len(), 6);
        assert_eq!(report.alpha, 0.01);
        assert_eq!(report.bit_count, 100_000);
        assert_eq!(report.get("serial").unwrap().p_values.len(), 2);
        assert_eq!(report.get("cumulative_sums").unwrap().p_values.len(), 2);
        for r in &report.results {
            assert_eq!(r.pass, r.p_value >= report.alpha);
        }
        assert_eq!(
            report,
            run_battery(&bits, &BatteryConfig::default()).unwrap()
        );
        let table = report.to_table();
        assert_eq!(table.lines().count(), 8);
    }

    #[test]
    fn battery_rejects_short_or_bad_config() {
        assert!(run_battery(&[true; 20], &BatteryConfig::default()).is_err());
        let bad = BatteryConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(run_battery(&random_bits(1, 1000), &bad).is_err());
    }

    #[test]
    fn ascii_round_trip() {
        for n in [0, 1, 63, 64, 65, 1000] {
            let bits = random_bits(n as u64, n);
            let mut buf = Vec::new();
            write_ascii_bits(&bits, &mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.lines().all(|l| l.len() <= 64));
            assert_eq!(text.lines().count(), n.div_ceil(64));
            assert!(text.is_empty() || text.ends_with('\n'));
            assert_eq!(read_ascii_bits(buf.as_slice()).unwrap(), bits);
        }
        assert!(read_ascii_bits("01x".as_bytes()).is_err());
    }

    #[test]
    fn ascii_export_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bits.txt");
        let bits = random_bits(3, 130);
        export_ascii_bits(&bits, &path).unwrap();
        let back = read_ascii_bits(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(back, bits);
    }

    #[test]
    fn fuzz_p_values_in_unit_interval() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let n = rng.random_range(128..3000);
            let bias: f64 = rng.random();
            let bits: Vec<bool> = match rng.random_range(0..4) {
                0 => (0..n).map(|_| rng.random_bool(bias)).collect(),
                1 => vec![rng.random(); n],
                2 => {
                    let period = rng.random_range(1..20);
                    (0..n).map(|i| (i / period) % 2 == 0).collect()
                }
                _ => (0..n).map(|_| rng.random()).collect(),
            };
            let config = BatteryConfig {
                block_len: rng.random_range(2..=n.min(200)),
                ..Default::default()
            };
            let report = run_battery(&bits, &config).unwrap();
            for r in &report.results {
                for &p in &r.p_values {
                    assert!((0.0..=1.0).contains(&p), "{} gave {p}", r.name);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monobit_complement_symmetry(bits in prop::collection::vec(any::<bool>(), 100..2000)) {
            let flipped: Vec<bool> = bits.iter().map(|b| !b).collect();
            prop_assert_eq!(monobit(&bits).unwrap(), monobit(&flipped).unwrap());
        }

        #[test]
        fn p_values_bounded(bits in prop::collection::vec(any::<bool>(), 128..1500)) {
            let report = run_battery(&bits, &BatteryConfig { block_len: 20, ..Default::default() }).unwrap();
            for r in report.results {
                prop_assert!(r.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}
