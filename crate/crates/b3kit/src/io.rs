//! Field serialization.
//!
//! Binary layout (`.b3f`): the 4-byte magic `B3F1`, three little-endian
//! `u32` dimensions (height, width, channels), then `H*W*C` little-endian
//! `f64` values row-major in `(y, x, c)` order. Round-trips are bit-exact.
//!
//! Scalar fields additionally export to CSV with the header `y,x,value`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FieldTensor, ScalarField};

pub const MAGIC: [u8; 4] = *b"B3F1";

/// Serializes a tensor into the `B3F1` byte layout.
pub fn encode_field(t: &FieldTensor) -> Result<Vec<u8>> {
    let (h, w, c) = t.shape();
    let h32 = u32::try_from(h).map_err(|_| Error::format(format!("height {h} exceeds u32")))?;
    let w32 = u32::try_from(w).map_err(|_| Error::format(format!("width {w} exceeds u32")))?;
    let c32 = u32::try_from(c).map_err(|_| Error::format(format!("channels {c} exceeds u32")))?;

    let mut out = Vec::with_capacity(16 + t.data().len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    out.extend_from_slice(&c32.to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses the `B3F1` byte layout back into a tensor.
pub fn decode_field(bytes: &[u8]) -> Result<FieldTensor> {
    if bytes.len() < 16 {
        return Err(Error::format(format!(
            "file too short for header: {} bytes",
            bytes.len()
        )));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::format(format!(
            "bad magic {:02x?}, expected {:02x?}",
            &bytes[0..4],
            MAGIC
        )));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::format(format!("zero dimension in header {h}x{w}x{c}")));
    }
    let count = h
        .checked_mul(w)
        .and_then(|p| p.checked_mul(c))
        .ok_or_else(|| Error::format(format!("dimension overflow {h}x{w}x{c}")))?;
    let payload = count
        .checked_mul(8)
        .ok_or_else(|| Error::format(format!("payload size overflow for {count} values")))?;
    if bytes.len() != 16 + payload {
        return Err(Error::format(format!(
            "truncated or oversized payload: header says {count} values ({} bytes), found {}",
            16 + payload,
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let off = 16 + i * 8;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(format!("non-finite value {v} at index {i}")));
        }
        data.push(v);
    }
    FieldTensor::from_vec(h, w, c, data)
}

/// Writes a tensor to `path` in the `B3F1` format.
pub fn write_field(path: impl AsRef<Path>, t: &FieldTensor) -> Result<()> {
    let bytes = encode_field(t)?;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

/// Reads a tensor previously written with [`write_field`].
pub fn read_field(path: impl AsRef<Path>) -> Result<FieldTensor> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

/// Renders a scalar field as CSV with header `y,x,value`, `\n` line endings
/// and `.`-decimal formatting regardless of locale.
pub fn scalar_to_csv(field: &ScalarField) -> String {
    let mut out = String::from("y,x,value\n");
    for y in 0..field.height() {
        for x in 0..field.width() {
            out.push_str(&format!("{y},{x},{}\n", field.get(y, x)));
        }
    }
    out
}

/// Writes [`scalar_to_csv`] output to `path`.
pub fn write_scalar_csv(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(scalar_to_csv(field).as_bytes())?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = FieldTensor::from_vec(2, 3, 2, (0..12).map(|i| (i as f64).sin() * 1e3).collect())
            .unwrap();
        let back = decode_field(&encode_field(&t).unwrap()).unwrap();
        assert_eq!(t.shape(), back.shape());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn round_trip_many_random_tensors() {
        let mut rng = RngStream::new(77, 0);
        for _ in 0..1000 {
            let h = 1 + rng.index_below(4);
            let w = 1 + rng.index_below(4);
            let c = 1 + rng.index_below(3);
            let data = rng.normal_vec(h * w * c, 0.0, 100.0).unwrap();
            let t = FieldTensor::from_vec(h, w, c, data).unwrap();
            let back = decode_field(&encode_field(&t).unwrap()).unwrap();
            assert!(t
                .data()
                .iter()
                .zip(back.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let t = FieldTensor::filled(1, 1, 1, 0.5).unwrap();
        let mut bytes = encode_field(&t).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_payload_rejected() {
        let t = FieldTensor::filled(2, 2, 1, 1.0).unwrap();
        let bytes = encode_field(&t).unwrap();
        // Header only.
        assert!(matches!(decode_field(&bytes[..16]), Err(Error::Format { .. })));
        // Header plus partial payload.
        assert!(matches!(
            decode_field(&bytes[..bytes.len() - 8]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn dimension_overflow_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_field(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.b3f");
        let t = FieldTensor::from_vec(3, 2, 1, vec![0.0, -1.5, 2.25, 1e-300, 4.0, 5.5]).unwrap();
        write_field(&path, &t).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn csv_header_and_rows() {
        let f = ScalarField::from_vec(1, 2, vec![0.5, 1.0]).unwrap();
        let csv = scalar_to_csv(&f);
        assert_eq!(csv, "y,x,value\n0,0,0.5\n0,1,1\n");
    }
}
