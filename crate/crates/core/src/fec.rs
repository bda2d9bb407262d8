//! Link-reliability mathematics.
//!
//! Random-error model only: every bit flips independently with probability
//! `ber_in`. The chain runs bit errors → symbol errors (`ser_in`) →
//! uncorrectable codewords (`cer`) → lost frames on one link (`fer`) →
//! lost frames end to end (`loss_p`).
//!
//! Every `1 - (1 - p)^n` in the chain is evaluated as `-expm1(n * ln1p(-p))`
//! and the codeword tail is summed in the log domain, so results stay
//! meaningful far below `1e-30`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_positive, check_probability, ModelError};

/// An RS(n, k) code over `m`-bit symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FecScheme {
    n: u32,
    k: u32,
    m: u32,
    /// Longest correctable burst in bits. Informational only; bursts are not modeled.
    burst_correction: Option<u32>,
}

impl FecScheme {
    pub fn new(n: u32, k: u32, m: u32) -> Result<Self, ModelError> {
        let invalid = |reason| ModelError::InvalidScheme { n, k, m, reason };
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if n < k {
            return Err(invalid("n must be at least k"));
        }
        if m == 0 {
            return Err(invalid("symbols need at least one bit"));
        }
        Ok(FecScheme {
            n,
            k,
            m,
            burst_correction: None,
        })
    }

    /// Ethernet's RS(544,514) over 10-bit symbols ("KP4").
    pub fn rs544() -> Self {
        FecScheme {
            n: 544,
            k: 514,
            m: 10,
            burst_correction: Some(150),
        }
    }

    pub fn with_burst_correction(mut self, bits: u32) -> Self {
        self.burst_correction = Some(bits);
        self
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn burst_correction(&self) -> Option<u32> {
        self.burst_correction
    }

    /// Symbols per codeword the decoder can repair: `floor((n - k) / 2)`.
    pub fn correctable_symbols(&self) -> u32 {
        (self.n - self.k) / 2
    }

    pub fn codeword_wire_bits(&self) -> u64 {
        self.n as u64 * self.m as u64
    }

    pub fn codeword_data_bits(&self) -> u64 {
        self.k as u64 * self.m as u64
    }

    /// Codeword length used to count how many codewords a frame spans.
    pub fn codeword_bits(&self, basis: CodewordBasis) -> u64 {
        match basis {
            CodewordBasis::Wire => self.codeword_wire_bits(),
            CodewordBasis::Data => self.codeword_data_bits(),
        }
    }
}

impl fmt::Display for FecScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == FecScheme::rs544() {
            write!(f, "rs544")
        } else {
            write!(f, "rs{}_{}_{}", self.n, self.k, self.m)
        }
    }
}

impl FromStr for FecScheme {
    type Err = ModelError;

    /// Accepts `rs544`, `custom:n,k,m` or bare `n,k,m`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("rs544") {
            return Ok(FecScheme::rs544());
        }
        let body = s.strip_prefix("custom:").unwrap_or(s);
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(ModelError::Parse(format!(
                "unknown FEC scheme '{s}' (expected rs544 or custom:n,k,m)"
            )));
        }
        let num = |p: &str| {
            p.parse::<u32>()
                .map_err(|_| ModelError::Parse(format!("'{p}' is not a symbol count")))
        };
        FecScheme::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

/// Which codeword length divides the frame when counting codewords per frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodewordBasis {
    /// `n * m` bits: frames occupy whole wire codewords.
    #[default]
    Wire,
    /// `k * m` bits: sensitivity variant counting only data bits.
    Data,
}

/// `1 - (1 - p)^count` without cancellation.
pub(crate) fn complement_power(p: f64, count: f64) -> f64 {
    if p == 0.0 || count == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    if count == 1.0 {
        return p;
    }
    (-(count * (-p).ln_1p()).exp_m1()).clamp(0.0, 1.0)
}

/// Probability that an `m`-bit symbol has at least one flipped bit.
pub fn symbol_error_rate(ber_in: f64, m: u32) -> Result<f64, ModelError> {
    check_probability("ber_in", ber_in)?;
    if m == 0 {
        return Err(ModelError::Domain {
            name: "m",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    Ok(complement_power(ber_in, m as f64))
}

pub fn correctable_symbols(scheme: &FecScheme) -> u32 {
    scheme.correctable_symbols()
}

/// Probability that a codeword carries more than `t` corrupted symbols.
pub fn codeword_error_rate(scheme: &FecScheme, ser_in: f64) -> Result<f64, ModelError> {
    check_probability("ser_in", ser_in)?;
    let n = scheme.n;
    let t = scheme.correctable_symbols();
    if ser_in == 0.0 {
        return Ok(0.0);
    }
    if ser_in == 1.0 {
        // t < n always holds because k >= 1
        return Ok(1.0);
    }
    let ln_p = ser_in.ln();
    let ln_q = (-ser_in).ln_1p();

    // ln C(n, i) by recurrence, then log-sum-exp over the tail i = t+1 ..= n.
    let mut ln_binom = 0.0_f64;
    let mut log_terms = Vec::with_capacity((n - t) as usize);
    for i in 1..=n {
        ln_binom += ((n - i + 1) as f64).ln() - (i as f64).ln();
        if i > t {
            log_terms.push(ln_binom + i as f64 * ln_p + (n - i) as f64 * ln_q);
        }
    }
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let sum: f64 = log_terms.iter().map(|l| (l - max).exp()).sum();
    Ok((max + sum.ln()).exp().min(1.0))
}

/// Codewords a frame of `frame_bits` spans: `1 + floor(frame / codeword)`.
pub fn codewords_per_frame(frame_bits: u64, codeword_bits: u64) -> u64 {
    1 + frame_bits / codeword_bits
}

/// A frame survives one link only if every codeword it spans is correctable.
pub fn frame_error_rate(cer: f64, frame_bits: u64, codeword_bits: u64) -> Result<f64, ModelError> {
    check_probability("cer", cer)?;
    if frame_bits == 0 {
        return Err(ModelError::Domain {
            name: "frame_bits",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    if codeword_bits == 0 {
        return Err(ModelError::Domain {
            name: "codeword_bits",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    let count = codewords_per_frame(frame_bits, codeword_bits);
    Ok(complement_power(cer, count as f64))
}

/// End-to-end loss across `hops + 1` links.
pub fn frame_loss_probability(fer: f64, hops: u32) -> Result<f64, ModelError> {
    check_probability("fer", fer)?;
    Ok(complement_power(fer, hops as f64 + 1.0))
}

/// Frame loss on a link without FEC: any flipped bit fails the CRC and drops the frame.
pub fn raw_frame_loss(ber_in: f64, frame_bits: u64) -> Result<f64, ModelError> {
    check_probability("ber_in", ber_in)?;
    if frame_bits == 0 {
        return Err(ModelError::Domain {
            name: "frame_bits",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    Ok(complement_power(ber_in, frame_bits as f64))
}

/// Fraction of link bandwidth spent resending a full in-flight window after each loss.
pub fn goback_n_waste(frame_loss_p: f64, bdp_bits: f64, frame_bits: u64) -> Result<f64, ModelError> {
    check_probability("frame_loss_p", frame_loss_p)?;
    check_nonnegative("bdp_bits", bdp_bits)?;
    if frame_bits == 0 {
        return Err(ModelError::Domain {
            name: "frame_bits",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    Ok(frame_loss_p * bdp_bits / frame_bits as f64)
}

/// FEC latency split into data accumulation and encode/decode cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FecLatency {
    pub accumulation_ns: f64,
    pub compute_ns: f64,
}

impl FecLatency {
    pub fn total_ns(&self) -> f64 {
        self.accumulation_ns + self.compute_ns
    }
}

/// Latency to gather one codeword's data bits at `bandwidth_bps` plus a fixed compute cost.
pub fn fec_latency(codeword_data_bits: u64, bandwidth_bps: f64, compute_ns: f64) -> Result<FecLatency, ModelError> {
    check_positive("bandwidth", bandwidth_bps)?;
    check_nonnegative("compute_ns", compute_ns)?;
    Ok(FecLatency {
        accumulation_ns: codeword_data_bits as f64 / bandwidth_bps * 1e9,
        compute_ns,
    })
}

/// A PCIe-style protected block: FEC repairs first, CRC catches the rest, retry resends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryLinkBudget {
    pub block_payload_bytes: u64,
    pub fec_bytes: u64,
    pub crc_bytes: u64,
    pub post_fec_ber: f64,
    pub retry_probability: f64,
    pub fec_latency_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetryOverhead {
    pub coding_overhead: f64,
    /// Upper bound: each failed block costs one extra block on the wire.
    pub retry_bandwidth_loss: f64,
}

pub fn link_retry_overhead(budget: &RetryLinkBudget) -> Result<RetryOverhead, ModelError> {
    check_probability("post_fec_ber", budget.post_fec_ber)?;
    check_probability("retry_probability", budget.retry_probability)?;
    check_nonnegative("fec_latency_ns", budget.fec_latency_ns)?;
    let total = budget.block_payload_bytes + budget.fec_bytes + budget.crc_bytes;
    if total == 0 {
        return Err(ModelError::Domain {
            name: "block bytes",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    Ok(RetryOverhead {
        coding_overhead: (budget.fec_bytes + budget.crc_bytes) as f64 / total as f64,
        retry_bandwidth_loss: budget.retry_probability,
    })
}

/// One evaluation of the full error chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorQuery {
    pub ber_in: f64,
    pub frame_bits: u64,
    /// Traversed links minus one.
    pub hops: u32,
    /// `None` means a raw link where the CRC drops any corrupted frame.
    pub scheme: Option<FecScheme>,
    #[serde(default)]
    pub basis: CodewordBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossChain {
    pub ser_in: f64,
    /// Absent for raw links.
    pub cer: Option<f64>,
    pub fer: f64,
    pub loss_p: f64,
}

impl ErrorQuery {
    pub fn evaluate(&self) -> Result<LossChain, ModelError> {
        check_probability("ber_in", self.ber_in)?;
        match &self.scheme {
            Some(scheme) => {
                let ser_in = symbol_error_rate(self.ber_in, scheme.m())?;
                let cer = codeword_error_rate(scheme, ser_in)?;
                let fer = frame_error_rate(cer, self.frame_bits, scheme.codeword_bits(self.basis))?;
                Ok(LossChain {
                    ser_in,
                    cer: Some(cer),
                    fer,
                    loss_p: frame_loss_probability(fer, self.hops)?,
                })
            }
            None => {
                let fer = raw_frame_loss(self.ber_in, self.frame_bits)?;
                Ok(LossChain {
                    ser_in: self.ber_in,
                    cer: None,
                    fer,
                    loss_p: frame_loss_probability(fer, self.hops)?,
                })
            }
        }
    }
}

/// First-order approximations valid for small input probabilities.
pub mod approx {
    pub fn symbol_error_rate(ber_in: f64, m: u32) -> f64 {
        m as f64 * ber_in
    }

    pub fn frame_error_rate(cer: f64, frame_bits: u64, codeword_bits: u64) -> f64 {
        super::codewords_per_frame(frame_bits, codeword_bits) as f64 * cer
    }

    pub fn frame_loss_probability(fer: f64, hops: u32) -> f64 {
        (hops as f64 + 1.0) * fer
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ser_endpoints() {
        assert_eq!(symbol_error_rate(0.0, 10).unwrap(), 0.0);
        assert_eq!(symbol_error_rate(1.0, 10).unwrap(), 1.0);
    }

    #[test]
    fn ser_small_ber_matches_extended_precision() {
        // 1 - (1 - 1e-12)^10 at 50 digits
        let v = symbol_error_rate(1e-12, 10).unwrap();
        assert!(rel(v, 9.999999999955e-12) < 1e-12, "{v:e}");
    }

    #[test]
    fn ser_rejects_out_of_range() {
        assert!(symbol_error_rate(-0.1, 10).is_err());
        assert!(symbol_error_rate(1.5, 10).is_err());
        assert!(symbol_error_rate(f64::NAN, 10).is_err());
        assert!(symbol_error_rate(0.1, 0).is_err());
    }

    #[test]
    fn correctable_symbol_counts() {
        assert_eq!(correctable_symbols(&FecScheme::rs544()), 15);
        assert_eq!(correctable_symbols(&FecScheme::new(10, 10, 4).unwrap()), 0);
        assert_eq!(correctable_symbols(&FecScheme::new(15, 11, 4).unwrap()), 2);
    }

    #[test]
    fn rs544_bit_counts() {
        let s = FecScheme::rs544();
        assert_eq!(s.codeword_data_bits(), 5140);
        assert_eq!(s.codeword_wire_bits(), 5440);
        assert_eq!(s.burst_correction(), Some(150));
    }

    #[test]
    fn scheme_validation() {
        assert!(FecScheme::new(3, 4, 1).is_err());
        assert!(FecScheme::new(3, 0, 1).is_err());
        assert!(FecScheme::new(3, 1, 0).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("rs544".parse::<FecScheme>().unwrap(), FecScheme::rs544());
        let s: FecScheme = "custom:544,514,10".parse().unwrap();
        assert_eq!((s.n(), s.k(), s.m()), (544, 514, 10));
        let s: FecScheme = "272,258,10".parse().unwrap();
        assert_eq!(s.correctable_symbols(), 7);
        assert!("rs272".parse::<FecScheme>().is_err());
        assert!("custom:1,2".parse::<FecScheme>().is_err());
    }

    #[test]
    fn cer_zero_ser_is_zero() {
        assert_eq!(codeword_error_rate(&FecScheme::rs544(), 0.0).unwrap(), 0.0);
        assert_eq!(codeword_error_rate(&FecScheme::rs544(), 1.0).unwrap(), 1.0);
    }

    #[test]
    fn cer_three_symbol_majority() {
        // P(>= 2 of 3) at 1/2 = 4/8
        let s = FecScheme::new(3, 1, 1).unwrap();
        assert!(rel(codeword_error_rate(&s, 0.5).unwrap(), 0.5) < 1e-14);
    }

    #[test]
    fn cer_rs_7_3() {
        // P(X >= 3), X ~ Bin(7, 0.1), 50-digit summation
        let s = FecScheme::new(7, 3, 3).unwrap();
        assert!(rel(codeword_error_rate(&s, 0.1).unwrap(), 0.0256915) < 1e-12);
    }

    #[test]
    fn cer_rs544_reaches_far_below_1e30() {
        // ber 1e-5: 50-digit oracle gives CER = 2.139669774307624058e-34
        let ser = symbol_error_rate(1e-5, 10).unwrap();
        let cer = codeword_error_rate(&FecScheme::rs544(), ser).unwrap();
        assert!(rel(cer, 2.139_669_774_307_624e-34) < 1e-9, "{cer:e}");
        // ber 1e-7: 2.2491610851245910089e-66
        let ser = symbol_error_rate(1e-7, 10).unwrap();
        let cer = codeword_error_rate(&FecScheme::rs544(), ser).unwrap();
        assert!(rel(cer, 2.249_161_085_124_591e-66) < 1e-9, "{cer:e}");
    }

    #[test]
    fn rs544_cannot_take_1e4_down_to_1e12() {
        // 50-digit oracle: CER = 1.3598110647644305852e-18 per codeword at ber 1e-4.
        let ser = symbol_error_rate(1e-4, 10).unwrap();
        let cer = codeword_error_rate(&FecScheme::rs544(), ser).unwrap();
        assert!(rel(cer, 1.359_811_064_764_430_6e-18) < 1e-9);
        // At ber 2.4e-4 the codeword error rate is already 8.15e-13.
        let ser = symbol_error_rate(2.4e-4, 10).unwrap();
        let cer = codeword_error_rate(&FecScheme::rs544(), ser).unwrap();
        assert!(rel(cer, 8.151_573_399_330_457e-13) < 1e-9);
    }

    #[test]
    fn fer_examples() {
        assert_eq!(frame_error_rate(0.0, 9216, 5440).unwrap(), 0.0);
        assert_eq!(frame_error_rate(0.25, 100, 5440).unwrap(), 0.25);
        // 1 - (1 - 1e-10)^14
        let v = frame_error_rate(1e-10, 73728, 5440).unwrap();
        assert!(rel(v, 1.39999999909e-9) < 1e-10);
        assert!(frame_error_rate(0.1, 0, 5440).is_err());
        assert!(frame_error_rate(0.1, 10, 0).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(frame_loss_probability(0.0, 7).unwrap(), 0.0);
        assert_eq!(frame_loss_probability(0.125, 0).unwrap(), 0.125);
        // 1 - (1 - 7.37e-8)^6
        let v = frame_loss_probability(7.37e-8, 5).unwrap();
        assert!(rel(v, 4.421_999_185_246_580_3e-7) < 1e-12);
    }

    #[test]
    fn raw_loss_examples() {
        let v = raw_frame_loss(1e-12, 32768).unwrap();
        assert!(rel(v, 3.276_799_946_314_547_5e-8) < 1e-12);
        let v = raw_frame_loss(1e-12, 73728).unwrap();
        assert!(rel(v, 7.372_799_728_212_793e-8) < 1e-12);
        assert_eq!(raw_frame_loss(0.0, 73728).unwrap(), 0.0);
        assert!(raw_frame_loss(1e-12, 0).is_err());
    }

    #[test]
    fn goback_n_examples() {
        let v = goback_n_waste(3.3e-8, 2.88e6, 73728).unwrap();
        assert!(rel(v, 1.2890625e-6) < 1e-12);
        assert_eq!(goback_n_waste(0.0, 1e6, 1000).unwrap(), 0.0);
        assert!(rel(goback_n_waste(1e-6, 73728.0, 73728).unwrap(), 1e-6) < 1e-15);
        assert!(goback_n_waste(0.1, -1.0, 1000).is_err());
        assert!(goback_n_waste(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn fec_latency_examples() {
        let l = fec_latency(5140, 100e9, 50.0).unwrap();
        assert!((l.total_ns() - 101.4).abs() < 1e-9);
        let l = fec_latency(5140, 800e9, 50.0).unwrap();
        assert!((l.total_ns() - 56.425).abs() < 1e-9);
        let l = fec_latency(5140, 1e18, 50.0).unwrap();
        assert!((l.total_ns() - 50.0).abs() < 1e-5);
        assert!(fec_latency(5140, 0.0, 50.0).is_err());
    }

    #[test]
    fn retry_examples() {
        let mut b = RetryLinkBudget {
            block_payload_bytes: 242,
            fec_bytes: 6,
            crc_bytes: 8,
            post_fec_ber: 1e-6,
            retry_probability: 1e-5,
            fec_latency_ns: 2.0,
        };
        let o = link_retry_overhead(&b).unwrap();
        assert_eq!(o.coding_overhead, 14.0 / 256.0);
        assert!((o.coding_overhead - 5.469e-2).abs() < 1e-5);
        assert_eq!(o.retry_bandwidth_loss, 1e-5);
        assert!(o.retry_bandwidth_loss <= 0.02);

        b.retry_probability = 0.02;
        assert_eq!(link_retry_overhead(&b).unwrap().retry_bandwidth_loss, 0.02);

        let zero = RetryLinkBudget {
            block_payload_bytes: 100,
            fec_bytes: 0,
            crc_bytes: 0,
            post_fec_ber: 0.0,
            retry_probability: 0.0,
            fec_latency_ns: 0.0,
        };
        let o = link_retry_overhead(&zero).unwrap();
        assert_eq!((o.coding_overhead, o.retry_bandwidth_loss), (0.0, 0.0));

        let empty = RetryLinkBudget {
            block_payload_bytes: 0,
            ..zero
        };
        assert!(link_retry_overhead(&empty).is_err());
    }

    #[test]
    fn chain_rs544() {
        // 50-digit oracle for ber 1e-5, 1152-byte frame, 5 hops
        let q = ErrorQuery {
            ber_in: 1e-5,
            frame_bits: 9216,
            hops: 5,
            scheme: Some(FecScheme::rs544()),
            basis: CodewordBasis::Wire,
        };
        let c = q.evaluate().unwrap();
        assert!(rel(c.ser_in, 0.000_099_995_500_119_997_9) < 1e-12);
        assert!(rel(c.cer.unwrap(), 2.139_669_774_307_624e-34) < 1e-9);
        assert!(rel(c.fer, 4.279_339_548_615_248e-34) < 1e-9);
        assert!(rel(c.loss_p, 2.567_603_729_169_149e-33) < 1e-9);
    }

    #[test]
    fn chain_raw_link() {
        let q = ErrorQuery {
            ber_in: 1e-12,
            frame_bits: 32768,
            hops: 0,
            scheme: None,
            basis: CodewordBasis::Wire,
        };
        let c = q.evaluate().unwrap();
        assert!(c.cer.is_none());
        assert_eq!(c.fer, c.loss_p);
        assert!(rel(c.loss_p, 3.276_799_946_314_547_5e-8) < 1e-12);
    }

    #[test]
    fn data_basis_counts_more_codewords() {
        let s = FecScheme::rs544();
        // 10280 bits: 1 + floor(10280/5440) = 2 wire, 1 + floor(10280/5140) = 3 data
        assert_eq!(codewords_per_frame(10280, s.codeword_bits(CodewordBasis::Wire)), 2);
        assert_eq!(codewords_per_frame(10280, s.codeword_bits(CodewordBasis::Data)), 3);
    }
}
