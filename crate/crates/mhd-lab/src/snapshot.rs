//! Self-describing state container: a text header, raw little-endian f64
//! arrays in row-major order, and a SHA-256 checksum trailer. Trivially
//! parseable from any language.
//!
//! ```text
//! mhdlab-snapshot 1
//! n 128
//! box_half_length 1.0
//! dealias_fraction 0.6666666666666666
//! window_core_fraction 0.8
//! time 2.5
//! endianness little
//! layout row-major
//! space physical
//! fields u1 u2 b1 b2
//! end-header
//! <4·n²·8 bytes of f64 payload>
//! checksum sha256 <64 hex digits of the payload>
//! ```

use crate::dynamics::State;
use crate::error::Error;
use crate::fields::VectorField;
use crate::grid::Grid;
use crate::spectral::{ScalarField, Space};
use ndarray::Array2;
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &str = "mhdlab-snapshot 1";
/// Decode refuses absurd grid sizes before allocating.
const MAX_N: usize = 4096;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Serialize a state (physical-space samples of u₁, u₂, b₁, b₂).
pub fn encode_snapshot(state: &State) -> Vec<u8> {
    let grid = state.grid();
    let n = grid.n();
    let mut payload = Vec::with_capacity(4 * n * n * 8);
    for field in [&state.u, &state.b] {
        for c in 0..2 {
            let phys = field.components[c].to_physical();
            for v in phys.data().iter() {
                payload.extend_from_slice(&v.re.to_le_bytes());
            }
        }
    }
    let mut out = Vec::with_capacity(payload.len() + 512);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    let mut header = String::new();
    header.push_str(&format!("n {n}\n"));
    header.push_str(&format!("box_half_length {:?}\n", grid.box_half_length()));
    header.push_str(&format!("dealias_fraction {:?}\n", grid.dealias_fraction()));
    header.push_str(&format!("window_core_fraction {:?}\n", grid.window_core_fraction()));
    header.push_str(&format!("time {:?}\n", state.t));
    header.push_str("endianness little\n");
    header.push_str("layout row-major\n");
    header.push_str("space physical\n");
    header.push_str("fields u1 u2 b1 b2\n");
    header.push_str("end-header\n");
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(format!("checksum sha256 {}\n", sha256_hex(&payload)).as_bytes());
    out
}

fn header_value<'a>(lines: &'a [(&'a str, &'a str)], key: &str) -> Result<&'a str, Error> {
    lines
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Format(format!("snapshot header missing '{key}'")))
}

/// Parse a snapshot byte stream. Total over arbitrary input: malformed data
/// yields a format error, never a panic.
pub fn decode_snapshot(bytes: &[u8]) -> Result<State, Error> {
    // Locate the end of the text header.
    let marker = b"end-header\n";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Format("snapshot: no end-header marker".to_string()))?;
    let header_bytes = &bytes[..header_end + marker.len()];
    let header = std::str::from_utf8(header_bytes)
        .map_err(|_| Error::Format("snapshot: header is not UTF-8".to_string()))?;

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "snapshot: bad magic '{magic}' (expected '{MAGIC}')"
        )));
    }
    let kv: Vec<(&str, &str)> = lines
        .filter(|l| *l != "end-header")
        .filter_map(|l| l.split_once(' '))
        .collect();

    let n: usize = header_value(&kv, "n")?
        .parse()
        .map_err(|_| Error::Format("snapshot: bad n".to_string()))?;
    if n < 32 || n > MAX_N || n % 2 != 0 {
        return Err(Error::Format(format!("snapshot: unsupported n = {n}")));
    }
    let parse_f = |key: &str| -> Result<f64, Error> {
        header_value(&kv, key)?
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("snapshot: bad {key}")))
    };
    let box_half_length = parse_f("box_half_length")?;
    let dealias_fraction = parse_f("dealias_fraction")?;
    let window_core_fraction = parse_f("window_core_fraction")?;
    let time = parse_f("time")?;
    if header_value(&kv, "endianness")? != "little" {
        return Err(Error::Format("snapshot: only little-endian payloads supported".to_string()));
    }
    if header_value(&kv, "fields")? != "u1 u2 b1 b2" {
        return Err(Error::Format("snapshot: unexpected field list".to_string()));
    }

    let payload_len = 4 * n * n * 8;
    let payload_start = header_end + marker.len();
    if bytes.len() < payload_start + payload_len {
        return Err(Error::Format(format!(
            "snapshot: truncated payload (need {payload_len} bytes)"
        )));
    }
    let payload = &bytes[payload_start..payload_start + payload_len];

    // Checksum trailer.
    let trailer = &bytes[payload_start + payload_len..];
    let trailer = std::str::from_utf8(trailer)
        .map_err(|_| Error::Format("snapshot: trailer is not UTF-8".to_string()))?;
    let expected = trailer
        .trim_end()
        .strip_prefix("checksum sha256 ")
        .ok_or_else(|| Error::Format("snapshot: missing checksum trailer".to_string()))?;
    let actual = sha256_hex(payload);
    if expected != actual {
        return Err(Error::Format(format!(
            "snapshot: checksum mismatch (stored {expected}, computed {actual})"
        )));
    }

    let grid = Grid::new(n, box_half_length, dealias_fraction, window_core_fraction)
        .map_err(|e| Error::Format(format!("snapshot: invalid grid parameters: {e}")))?;
    let mut arrays = Vec::with_capacity(4);
    for fidx in 0..4 {
        let base = fidx * n * n * 8;
        let data = Array2::from_shape_fn((n, n), |(i, j)| {
            let o = base + (i * n + j) * 8;
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&payload[o..o + 8]);
            f64::from_le_bytes(buf)
        });
        arrays.push(ScalarField::from_physical_array(&grid, data).expect("sized by construction"));
    }
    let b2 = arrays.pop().expect("four fields");
    let b1 = arrays.pop().expect("four fields");
    let u2 = arrays.pop().expect("four fields");
    let u1 = arrays.pop().expect("four fields");
    let u = VectorField::from_components(u1, u2)?;
    let b = VectorField::from_components(b1, b2)?;
    State::new(u, b, time)
}

pub fn write_snapshot(path: &Path, state: &State) -> Result<(), Error> {
    std::fs::write(path, encode_snapshot(state))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<State, Error> {
    let bytes = std::fs::read(path)?;
    decode_snapshot(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_symmetric_field, ParityClass, RandomFieldSpec};

    fn sample_state() -> State {
        let g = Grid::with_defaults(32).unwrap();
        let u = random_symmetric_field(&g, &RandomFieldSpec::default()).unwrap();
        let b = random_symmetric_field(
            &g,
            &RandomFieldSpec {
                class: ParityClass::MagneticLike,
                ..RandomFieldSpec::default()
            },
        )
        .unwrap();
        State::new(u, b, 1.25).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact_in_physical_space() {
        let st = sample_state();
        let bytes = encode_snapshot(&st);
        let back = decode_snapshot(&bytes).unwrap();
        assert_eq!(back.t, st.t);
        assert_eq!(back.grid().n(), 32);
        for (field, orig) in [(&back.u, &st.u), (&back.b, &st.b)] {
            for c in 0..2 {
                let a = field.components[c].to_physical();
                let b = orig.components[c].to_physical();
                for (x, y) in a.data().iter().zip(b.data().iter()) {
                    assert_eq!(x.re.to_bits(), y.re.to_bits());
                }
            }
        }
    }

    #[test]
    fn corruption_and_truncation_are_detected() {
        let st = sample_state();
        let bytes = encode_snapshot(&st);

        // Flip one payload byte: checksum mismatch.
        let mut bad = bytes.clone();
        let payload_at = bad
            .windows(11)
            .position(|w| w == b"end-header\n")
            .unwrap()
            + 11
            + 100;
        bad[payload_at] ^= 0xff;
        assert!(matches!(decode_snapshot(&bad), Err(Error::Format(_))));

        // Truncate the payload.
        let short = &bytes[..bytes.len() / 2];
        assert!(matches!(decode_snapshot(short), Err(Error::Format(_))));

        // Garbage input.
        assert!(decode_snapshot(b"not a snapshot").is_err());
        assert!(decode_snapshot(b"").is_err());

        // Bad magic.
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_snapshot(&wrong).is_err());
    }

    #[test]
    fn header_is_human_readable() {
        let st = sample_state();
        let bytes = encode_snapshot(&st);
        let head = std::str::from_utf8(&bytes[..200]).unwrap();
        assert!(head.starts_with("mhdlab-snapshot 1\nn 32\n"));
        assert!(head.contains("endianness little"));
        assert!(head.contains("time 1.25"));
    }
}
