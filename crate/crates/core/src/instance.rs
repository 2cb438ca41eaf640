//! Problem instances: signals, colors, response functions and the
//! total-variation approximation predicate.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational used for every weight and distance.
pub type Rational = BigRational;

/// A signal value. `0` is the absent signal ⊥; `1..=k` are real signals.
///
/// ⊥ sorts below every real signal, which is what the largest-signal
/// tie-break in the transition relies on.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SignalId(pub u32);

impl SignalId {
    pub const BOT: SignalId = SignalId(0);

    pub fn is_bot(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SignalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bot() {
            f.write_str("bot")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// A color, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColorId(pub u32);

impl ColorId {
    /// Zero-based position of this color in a weight or count vector.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        ColorId(slot as u32 + 1)
    }
}

impl fmt::Display for ColorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("no distribution given for signal {0}")]
    MissingSignal(SignalId),
    #[error("signal {0} is listed more than once")]
    DuplicateSignal(SignalId),
    #[error("signal {signal} is out of range for k = {k}")]
    SignalOutOfRange { signal: SignalId, k: u32 },
    #[error("bad distribution for signal {signal}: {reason}")]
    BadDistribution { signal: SignalId, reason: String },
    #[error("distribution for signal {0} is not a point mass")]
    NotHomogeneousForSignal(SignalId),
    #[error("color counts have {counts} entries but the distribution has {weights}")]
    LengthMismatch { counts: usize, weights: usize },
    #[error("invalid rational {0:?}, expected \"p/q\" or an integer")]
    BadRational(String),
}

/// Parses `"p/q"`, `"p"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, InstanceError> {
    let bad = || InstanceError::BadRational(text.to_string());
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (text, "1"),
    };
    let num = BigInt::from_str(num).map_err(|_| bad())?;
    let den = BigInt::from_str(den).map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}

/// Formats a rational as `"p/q"`, or `"p"` when the denominator is 1.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A probability distribution over ℓ colors with exact rational weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Distribution {
    weights: Vec<Rational>,
}

impl Distribution {
    /// Validates nonnegativity and that the weights sum to exactly one.
    pub fn new(weights: Vec<Rational>) -> Result<Self, String> {
        if weights.is_empty() {
            return Err("no weights".to_string());
        }
        if let Some(i) = weights.iter().position(|w| w.is_negative()) {
            return Err(format!(
                "weight for color {} is negative ({})",
                i + 1,
                format_rational(&weights[i])
            ));
        }
        let total: Rational = weights.iter().cloned().sum();
        if !total.is_one() {
            return Err(format!(
                "weights sum to {}, expected 1",
                format_rational(&total)
            ));
        }
        Ok(Distribution { weights })
    }

    /// Parses each weight with [`parse_rational`] and validates.
    pub fn parse<S: AsRef<str>>(weights: &[S]) -> Result<Self, String> {
        let parsed = weights
            .iter()
            .map(|w| parse_rational(w.as_ref()).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Distribution::new(parsed)
    }

    /// The point mass on `color` over `ell` colors.
    pub fn point_mass(ell: u32, color: ColorId) -> Self {
        let weights = (0..ell as usize)
            .map(|i| {
                if i == color.slot() {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
        Distribution { weights }
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn weight(&self, color: ColorId) -> &Rational {
        &self.weights[color.slot()]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// The unique color with weight one, if the distribution is degenerate.
    pub fn point_color(&self) -> Option<ColorId> {
        let slot = self.weights.iter().position(|w| w.is_one())?;
        Some(ColorId::from_slot(slot))
    }

    /// Highest-weight color; ties go to the lowest index.
    pub fn argmax(&self) -> ColorId {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        ColorId::from_slot(best)
    }

    /// CDF inversion in color-index order: the first color whose cumulative
    /// weight strictly exceeds `u`. `u` must lie in `[0, 1)`.
    pub fn sample(&self, u: f64) -> ColorId {
        debug_assert!((0.0..1.0).contains(&u), "uniform draw {u} outside [0, 1)");
        let u = Rational::from_float(u).unwrap_or_else(Rational::zero);
        let mut cumulative = Rational::zero();
        for (i, w) in self.weights.iter().enumerate() {
            cumulative += w;
            if u < cumulative {
                return ColorId::from_slot(i);
            }
        }
        // Unreachable for u < 1; the last positive-weight color is the safe answer.
        let last = self
            .weights
            .iter()
            .rposition(|w| w.is_positive())
            .unwrap_or(0);
        ColorId::from_slot(last)
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.weights.iter().map(format_rational).collect()
    }
}

/// A validated response function `r : {⊥, 1..k} → distributions over ℓ colors`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    k: u32,
    ell: u32,
    response: Vec<Distribution>,
}

impl Instance {
    /// Builds an instance from a table that must mention every signal in
    /// `{⊥, 1..k}` exactly once, each with an ℓ-entry distribution.
    pub fn new(
        k: u32,
        ell: u32,
        table: impl IntoIterator<Item = (SignalId, Distribution)>,
    ) -> Result<Self, InstanceError> {
        let mut slots: Vec<Option<Distribution>> = vec![None; k as usize + 1];
        for (signal, dist) in table {
            if signal.0 > k {
                return Err(InstanceError::SignalOutOfRange { signal, k });
            }
            if dist.len() != ell as usize {
                return Err(InstanceError::BadDistribution {
                    signal,
                    reason: format!("{} weights given, expected {ell}", dist.len()),
                });
            }
            let slot = &mut slots[signal.index()];
            if slot.is_some() {
                return Err(InstanceError::DuplicateSignal(signal));
            }
            *slot = Some(dist);
        }
        let response = slots
            .into_iter()
            .enumerate()
            .map(|(s, d)| d.ok_or(InstanceError::MissingSignal(SignalId(s as u32))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Instance { k, ell, response })
    }

    /// Homogeneous instance from one color per signal, indexed by signal.
    pub fn homogeneous(ell: u32, colors: &[ColorId]) -> Result<Self, InstanceError> {
        let k = colors.len().saturating_sub(1) as u32;
        Instance::new(
            k,
            ell,
            colors
                .iter()
                .enumerate()
                .map(|(s, c)| (SignalId(s as u32), Distribution::point_mass(ell, *c))),
        )
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn response(&self, s: SignalId) -> &Distribution {
        &self.response[s.index()]
    }

    pub fn signals(&self) -> impl Iterator<Item = SignalId> {
        (0..=self.k).map(SignalId)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.response.iter().all(|d| d.point_color().is_some())
    }

    /// The color `c_s` with `r(s, c_s) = 1`.
    pub fn homogeneous_color(&self, s: SignalId) -> Result<ColorId, InstanceError> {
        self.response
            .get(s.index())
            .ok_or(InstanceError::SignalOutOfRange {
                signal: s,
                k: self.k,
            })?
            .point_color()
            .ok_or(InstanceError::NotHomogeneousForSignal(s))
    }
}

/// Number of nodes holding each color.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorCounts {
    pub counts: Vec<u64>,
    pub n: u64,
}

impl ColorCounts {
    pub fn tally(ell: u32, colors: impl IntoIterator<Item = ColorId>) -> Self {
        let mut counts = vec![0u64; ell as usize];
        let mut n = 0;
        for c in colors {
            counts[c.slot()] += 1;
            n += 1;
        }
        ColorCounts { counts, n }
    }
}

/// `(1/2) Σᵢ |counts[i]/n − weights[i]|`, exactly.
pub fn tv_distance(c: &ColorCounts, d: &Distribution) -> Result<Rational, InstanceError> {
    if c.counts.len() != d.len() {
        return Err(InstanceError::LengthMismatch {
            counts: c.counts.len(),
            weights: d.len(),
        });
    }
    let n = BigInt::from(c.n.max(1));
    let total: Rational = c
        .counts
        .iter()
        .zip(d.weights())
        .map(|(&count, w)| (Rational::new(BigInt::from(count), n.clone()) - w).abs())
        .sum();
    Ok(total / BigInt::from(2))
}

/// Whether the counts approximate `d` within ε(n) = n^{-1/4}, decided
/// exactly as `d_TV⁴ · n < 1`.
pub fn approximates(c: &ColorCounts, d: &Distribution) -> Result<bool, InstanceError> {
    let tv = tv_distance(c, d)?;
    let fourth = &tv * &tv * &tv * &tv;
    Ok(fourth * BigInt::from(c.n) < Rational::one())
}

/// ε(n) = n^{-1/4} as a float, for display.
pub fn epsilon(n: u64) -> f64 {
    (n as f64).powf(-0.25)
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
