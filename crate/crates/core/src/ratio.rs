//! Exact rationals for config fields such as the overuse fraction.
//!
//! JSON form is a string `"p/q"` or `"p"`; bare integers are also accepted.

pub type Ratio = num_rational::Ratio<i64>;

pub fn parse(text: &str) -> Result<Ratio, String> {
    let text = text.trim();
    match text.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| format!("bad numerator in {text:?}"))?;
            let d: i64 = d.trim().parse().map_err(|_| format!("bad denominator in {text:?}"))?;
            if d == 0 {
                return Err(format!("zero denominator in {text:?}"));
            }
            Ok(Ratio::new(n, d))
        }
        None => text
            .parse::<i64>()
            .map(Ratio::from_integer)
            .map_err(|_| format!("expected a fraction like \"1/2\", got {text:?}")),
    }
}

pub mod serde_str {
    use super::Ratio;
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &Ratio, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio, D::Error> {
        struct RatioVisitor;

        impl Visitor<'_> for RatioVisitor {
            type Value = Ratio;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a fraction string such as \"1/2\" or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Ratio, E> {
                super::parse(v).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ratio, E> {
                Ok(Ratio::from_integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ratio, E> {
                i64::try_from(v)
                    .map(Ratio::from_integer)
                    .map_err(|_| E::custom("integer out of range"))
            }
        }

        d.deserialize_any(RatioVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions() {
        assert_eq!(parse("1/2"), Ok(Ratio::new(1, 2)));
        assert_eq!(parse(" 3 / 6 "), Ok(Ratio::new(1, 2)));
        assert_eq!(parse("2"), Ok(Ratio::from_integer(2)));
        assert!(parse("1/0").is_err());
        assert!(parse("half").is_err());
    }
}
