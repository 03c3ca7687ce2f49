//! JSON output with round-trip float precision.

use serde::Serialize;
use serde_json::ser::Formatter;
use std::io;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes every float with 17 significant digits.
struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as a single JSON line. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser).map_err(|e| Error::InternalConsistency(format!("report serialization failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::InternalConsistency(e.to_string()))
}

/// Top-level report wrapper.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub report: &'a T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(command: &'a str, report: &'a T) -> Self {
        Self { schema_version: SCHEMA_VERSION, command, report }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format() {
        assert_eq!(
            to_json(&[0.1f64, 1.0, -2.5e-300]).unwrap(),
            "[1.0000000000000001e-1,1.0000000000000000e0,-2.5000000000000000e-300]"
        );
        assert_eq!(to_json(&f64::NAN).unwrap(), "null");
        assert_eq!(to_json(&3u64).unwrap(), "3");
        let v: serde_json::Value = serde_json::from_str(&to_json(&Envelope::new("x", &1.5)).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
    }

    proptest! {
        #[test]
        fn floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = serde_json::from_str(&to_json(&x).unwrap()).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
