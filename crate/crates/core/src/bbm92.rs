//! BBM92 post-processing: sifting, QBER estimation and the asymptotic key fraction.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::receiver::Correlation;
use crate::source::Basis;

pub const LOW_SAMPLE_THRESHOLD: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Bbm92Error {
    #[error("sifted key is empty")]
    EmptyKey,
    #[error("QBER {0} is outside [0, 0.5]")]
    OutOfRange(f64),
    #[error("sample fraction {0} must lie in (0, 1)")]
    InvalidSampleFraction(f64),
}

/// One coincidence with both sides' measurement results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub ground_basis: Basis,
    pub ground_bit: bool,
    pub onboard_basis: Basis,
    pub onboard_bit: bool,
    /// Both tags stem from the same photon pair (simulation ground truth).
    pub true_pair: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiftedKey {
    pub bits: Vec<bool>,
    /// On-board bits mapped so that error-free pairs agree with `bits`.
    pub partner_bits: Vec<bool>,
    pub basis_per_bit: Vec<Basis>,
    pub true_pair: Vec<bool>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.bits.iter().zip(&self.partner_bits).filter(|(a, b)| a != b).count()
    }

    /// Disagreement over the whole key, `None` when empty.
    pub fn full_qber(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.errors() as f64 / self.len() as f64)
    }
}

/// Keeps same-basis coincidences. Returns the key and the number discarded.
pub fn sift(matches: &[MatchedPair], correlation: Correlation) -> (SiftedKey, usize) {
    let mut key = SiftedKey::default();
    let mut discarded = 0;
    for m in matches {
        if m.ground_basis != m.onboard_basis {
            discarded += 1;
            continue;
        }
        key.bits.push(m.ground_bit);
        key.partner_bits.push(m.onboard_bit ^ correlation.flips());
        key.basis_per_bit.push(m.ground_basis);
        key.true_pair.push(m.true_pair);
    }
    (key, discarded)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QberEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub sample_size: usize,
    pub low_sample: bool,
    /// Indices of disclosed (consumed) bits, ascending.
    #[serde(skip)]
    pub disclosed: Vec<usize>,
}

/// Disagreement rate on a random disclosed subset of `ceil(n·f)` bits.
pub fn estimate_qber<R: Rng>(key: &SiftedKey, sample_fraction: f64, rng: &mut R) -> Result<QberEstimate, Bbm92Error> {
    if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
        return Err(Bbm92Error::InvalidSampleFraction(sample_fraction));
    }
    if key.is_empty() {
        return Err(Bbm92Error::EmptyKey);
    }
    let n = key.len();
    let m = ((n as f64 * sample_fraction).ceil() as usize).clamp(1, n);
    let mut disclosed = rand::seq::index::sample(rng, n, m).into_vec();
    disclosed.sort_unstable();
    let errors = disclosed
        .iter()
        .filter(|&&i| key.bits[i] != key.partner_bits[i])
        .count();
    let q = errors as f64 / m as f64;
    let low_sample = m < LOW_SAMPLE_THRESHOLD;
    if low_sample {
        log::warn!("QBER estimated from only {m} disclosed bits");
    }
    Ok(QberEstimate {
        estimate: q,
        std_error: (q * (1.0 - q) / m as f64).sqrt(),
        sample_size: m,
        low_sample,
        disclosed,
    })
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Asymptotic key fraction `max(0, 1 − 2·h₂(q))`.
pub fn secret_fraction(qber: f64) -> Result<f64, Bbm92Error> {
    if !(0.0..=0.5).contains(&qber) {
        return Err(Bbm92Error::OutOfRange(qber));
    }
    Ok((1.0 - 2.0 * binary_entropy(qber)).max(0.0))
}

/// `floor(sifted · r · (1 − sample_fraction))`, never negative.
pub fn secret_bits(sifted_bits: usize, secret_fraction: f64, sample_fraction: f64) -> u64 {
    (sifted_bits as f64 * secret_fraction * (1.0 - sample_fraction)).floor().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    fn key(bits: &[bool], partner: &[bool]) -> SiftedKey {
        SiftedKey {
            bits: bits.to_vec(),
            partner_bits: partner.to_vec(),
            basis_per_bit: vec![Basis::HV; bits.len()],
            true_pair: vec![true; bits.len()],
        }
    }

    #[test]
    fn sifting_keeps_matched_bases() {
        let m = |gb, ob, bit| MatchedPair {
            ground_basis: gb,
            ground_bit: bit,
            onboard_basis: ob,
            onboard_bit: !bit,
            true_pair: true,
        };
        let matches = [m(Basis::HV, Basis::HV, true), m(Basis::AD, Basis::HV, false), m(Basis::AD, Basis::AD, false)];
        let (k, discarded) = sift(&matches, Correlation::Anticorrelated);
        assert_eq!(k.len() + discarded, matches.len());
        assert_eq!(k.errors(), 0);
        let (empty, d) = sift(&[], Correlation::Correlated);
        assert!(empty.is_empty());
        assert_eq!(d, 0);
    }

    #[test]
    fn qber_extremes() {
        let bits: Vec<bool> = (0..1000).map(|i| i % 3 == 0).collect();
        let inverted: Vec<bool> = bits.iter().map(|b| !b).collect();
        let mut r = rng(1);
        assert_eq!(estimate_qber(&key(&bits, &bits), 0.1, &mut r).unwrap().estimate, 0.0);
        assert_eq!(estimate_qber(&key(&bits, &inverted), 0.1, &mut r).unwrap().estimate, 1.0);
        assert_eq!(estimate_qber(&SiftedKey::default(), 0.1, &mut r), Err(Bbm92Error::EmptyKey));
    }

    #[test]
    fn key_fraction_values() {
        assert_eq!(secret_fraction(0.0).unwrap(), 1.0);
        assert_eq!(secret_fraction(0.5).unwrap(), 0.0);
        assert!((binary_entropy(0.05) - 0.286_396_957).abs() < 1e-8);
        assert!((secret_fraction(0.05).unwrap() - 0.427_206_085).abs() < 1e-8);
        assert!(secret_fraction(0.11).unwrap() < 0.001);
        assert!(secret_fraction(0.6).is_err());
        assert_eq!(secret_bits(1000, 0.5, 0.1), 450);
        assert_eq!(secret_bits(1000, 0.0, 0.1), 0);
    }
}
