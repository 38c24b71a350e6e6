//! Exact rational plumbing: f64 lifting, `p/q` strings, integer scaling.
//!
//! The solver works in scaled integer arithmetic. Rational inputs (weights,
//! costs) are put over a common denominator and handed to the simplex as
//! `i128` numerators; the bounds checked here make every intermediate of
//! the pivot arithmetic fit in `i128` with headroom.

use crate::error::{Error, Result};
use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Exact lift of a finite f64 into a rational (every finite double is one).
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x)
        .ok_or_else(|| Error::InvalidParameter(format!("non-finite value {x}")))
}

/// Nearest double; fine for reporting, never used in exact paths.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `p/q` formatting with `q == 1` collapsed to `p`.
pub fn format_ratio(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `p/q`, an integer string, or a decimal literal (lifted exactly).
pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad numerator in {s:?}")))?;
        let q: BigInt = q
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad denominator in {s:?}")))?;
        if q.is_zero() {
            return Err(Error::InvalidParameter(format!("zero denominator in {s:?}")));
        }
        Ok(BigRational::new(p, q))
    } else if let Ok(p) = s.parse::<BigInt>() {
        Ok(BigRational::from_integer(p))
    } else if let Ok(x) = s.parse::<f64>() {
        rational_from_f64(x)
    } else {
        Err(Error::InvalidParameter(format!("cannot parse rational {s:?}")))
    }
}

fn bigint_to_i128(v: &BigInt, what: &str) -> Result<i128> {
    v.to_i128()
        .ok_or_else(|| Error::ArithmeticRange(format!("{what} does not fit in i128: {v}")))
}

/// A rational vector scaled to integers over one denominator.
pub struct ScaledInts {
    pub values: Vec<i128>,
    pub denom: BigInt,
}

/// Puts `values` over their lcm denominator.
///
/// `max_bits` caps the resulting numerators so downstream pivot sums stay
/// inside `i128`.
pub fn scale_to_integers(values: &[BigRational], max_bits: u64, what: &str) -> Result<ScaledInts> {
    let mut denom = BigInt::from(1);
    for v in values {
        denom = denom.lcm(v.denom());
    }
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        let scaled = v.numer() * (&denom / v.denom());
        if scaled.magnitude().bits() > max_bits {
            return Err(Error::ArithmeticRange(format!(
                "{what}: scaled magnitude needs {} bits (cap {max_bits}); \
                 rescale the input to coarser rationals",
                scaled.magnitude().bits()
            )));
        }
        out.push(bigint_to_i128(&scaled, what)?);
    }
    Ok(ScaledInts {
        values: out,
        denom,
    })
}

/// `n / d` as an exact rational from scaled-integer space.
pub fn unscale(n: i128, d: &BigInt) -> BigRational {
    BigRational::new(BigInt::from(n), d.clone())
}

/// Exact rational from a BigInt pair.
pub fn ratio_of(n: BigInt, d: BigInt) -> BigRational {
    BigRational::new(n, d)
}

/// Sign helper for BigInt without allocation.
pub fn sign_of(v: &BigInt) -> i32 {
    match v.sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

/// Serde adapter: rationals as `p/q` strings in JSON, with plain numbers
/// accepted on input (lifted exactly).
pub mod ratio_serde {
    use super::*;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BigRational, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) => parse_ratio(&s).map_err(D::Error::custom),
            Raw::Num(x) => rational_from_f64(x).map_err(D::Error::custom),
        }
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(
            v: &[BigRational],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for r in v {
                seq.serialize_element(&format_ratio(r))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<BigRational>, D::Error> {
            #[derive(Deserialize)]
            #[serde(untagged)]
            enum Raw {
                Str(String),
                Num(f64),
            }
            let raw: Vec<Raw> = Vec::deserialize(d)?;
            raw.into_iter()
                .map(|r| match r {
                    Raw::Str(s) => parse_ratio(&s).map_err(D::Error::custom),
                    Raw::Num(x) => rational_from_f64(x).map_err(D::Error::custom),
                })
                .collect()
        }
    }
}

/// Signed magnitude check used by the mass-scaling paths.
pub fn abs_bits(v: &BigRational) -> u64 {
    v.numer().abs().magnitude().bits().max(v.denom().magnitude().bits())
}
