//! Canonical JSON text: sorted object keys, no whitespace, and every real
//! written with 17 significant digits so that 64-bit values round-trip
//! exactly.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, Default)]
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes `value` as one canonical JSON line (without the newline).
pub fn to_line<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    // Going through `Value` sorts every object's keys.
    let tree = serde_json::to_value(value)?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    tree.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Hex SHA-256 of the canonical form of `value`.
pub fn digest<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let line = to_line(value)?;
    Ok(hex::encode(Sha256::digest(line.as_bytes())))
}
