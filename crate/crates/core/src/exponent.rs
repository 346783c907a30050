//! Integrability exponents in `[1, inf]` with a stable wire format.
//!
//! `serde_json` maps non-finite floats to `null`, so infinite exponents are
//! serialised as the string `"inf"` instead and accepted back as either a
//! number or `"inf"`.

pub mod serde_f64_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum NumOrStr {
            Num(f64),
            Str(String),
        }
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") => {
                Ok(f64::INFINITY)
            }
            NumOrStr::Str(s) => {
                Err(de::Error::custom(format!("expected a number or \"inf\", got {s:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct Holder {
        #[serde(with = "super::serde_f64_inf")]
        p: f64,
    }

    #[test]
    fn roundtrips_infinity_and_numbers() {
        let inf = serde_json::to_string(&Holder { p: f64::INFINITY }).unwrap();
        assert_eq!(inf, r#"{"p":"inf"}"#);
        let back: Holder = serde_json::from_str(&inf).unwrap();
        assert!(back.p.is_infinite());
        let four: Holder = serde_json::from_str(r#"{"p":4.0}"#).unwrap();
        assert_eq!(four.p, 4.0);
        assert!(serde_json::from_str::<Holder>(r#"{"p":"wat"}"#).is_err());
    }
}
