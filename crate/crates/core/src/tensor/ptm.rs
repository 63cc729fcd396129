//! `PTM1` probability tensor files.
//!
//! Layout: 4 magic bytes `PTM1`, then `H`, `W`, `N` as little-endian `u32`,
//! then `H*W*N` little-endian `f32` scores, row-major with the class axis
//! innermost. No padding, no checksum.

use std::path::Path;

use super::{FormatError, ProbabilityMap};

pub const PROBABILITY_MAGIC: &[u8; 4] = b"PTM1";

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    std::fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn check_magic(bytes: &[u8], magic: &[u8; 4]) -> Result<(), FormatError> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        let found = &bytes[..bytes.len().min(4)];
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    Ok(())
}

pub(crate) fn read_u32s<const K: usize>(bytes: &[u8]) -> Result<[u32; K], FormatError> {
    if bytes.len() < 4 * K {
        return Err(FormatError::Truncated {
            expected: 4 * K,
            found: bytes.len(),
        });
    }
    let mut out = [0u32; K];
    for (i, v) in out.iter_mut().enumerate() {
        *v = u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    }
    Ok(out)
}

/// Reads exactly `count` little-endian floats, rejecting short or long payloads.
pub(crate) fn read_f32_payload(bytes: &[u8], count: usize) -> Result<Vec<f32>, FormatError> {
    let expected = count * 4;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::Trailing(bytes.len() - expected));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn to_u32(v: usize) -> u32 {
    u32::try_from(v).expect("dimension exceeds u32")
}

pub fn encode_probability_map(map: &ProbabilityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + map.data().len() * 4);
    out.extend_from_slice(PROBABILITY_MAGIC);
    for dim in [map.height(), map.width(), map.num_classes()] {
        out.extend_from_slice(&to_u32(dim).to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_probability_map(bytes: &[u8]) -> Result<ProbabilityMap, FormatError> {
    check_magic(bytes, PROBABILITY_MAGIC)?;
    let [h, w, n] = read_u32s::<3>(&bytes[4..])?;
    let (h, w, n) = (h as usize, w as usize, n as usize);
    if h == 0 || w == 0 || n == 0 {
        return Err(FormatError::Degenerate {
            height: h,
            width: w,
            classes: n,
        });
    }
    let data = read_f32_payload(&bytes[16..], h * w * n)?;
    ProbabilityMap::new(h, w, n, data)
}

pub fn load_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap, FormatError> {
    decode_probability_map(&read_file(path.as_ref())?)
}

pub fn store_probability_map(
    map: &ProbabilityMap,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_probability_map(map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_2x2x3_bytes() -> Vec<u8> {
        let mut b = b"PTM1".to_vec();
        for d in [2u32, 2, 3] {
            b.extend_from_slice(&d.to_le_bytes());
        }
        for _ in 0..12 {
            b.extend_from_slice(&(1.0f32 / 3.0).to_le_bytes());
        }
        b
    }

    #[test]
    fn loads_uniform_map() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.ptm");
        std::fs::write(&path, uniform_2x2x3_bytes()).unwrap();
        let map = load_probability_map(&path).unwrap();
        assert_eq!((map.height(), map.width(), map.num_classes()), (2, 2, 3));
        for px in map.pixels() {
            assert_eq!(px, &[1.0 / 3.0; 3]);
        }
    }

    #[test]
    fn one_by_one_by_two_is_24_bytes() {
        let map = ProbabilityMap::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        let bytes = encode_probability_map(&map);
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"PTM1");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &0.5f32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = uniform_2x2x3_bytes();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_probability_map(&b),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_probability_map(b"PT"),
            Err(FormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn rejects_truncated_and_trailing() {
        let b = uniform_2x2x3_bytes();
        assert!(matches!(
            decode_probability_map(&b[..b.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(
            decode_probability_map(&b[..10]),
            Err(FormatError::Truncated { .. })
        ));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(
            decode_probability_map(&long),
            Err(FormatError::Trailing(1))
        ));
    }

    #[test]
    fn rejects_zero_height() {
        let mut b = b"PTM1".to_vec();
        for d in [0u32, 2, 3] {
            b.extend_from_slice(&d.to_le_bytes());
        }
        assert!(matches!(
            decode_probability_map(&b),
            Err(FormatError::Degenerate { .. })
        ));
    }

    #[test]
    fn invariant_violation_names_first_pixel() {
        let mut b = uniform_2x2x3_bytes();
        // pixel 2, class 0 -> 0.9
        let off = 16 + (2 * 3) * 4;
        b[off..off + 4].copy_from_slice(&0.9f32.to_le_bytes());
        let err = decode_probability_map(&b).unwrap_err();
        assert!(
            matches!(err, FormatError::InvalidProbability { pixel: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_probability_map("/nonexistent/p.ptm"),
            Err(FormatError::Io { .. })
        ));
    }

    #[test]
    fn store_to_unwritable_path_fails() {
        let map = ProbabilityMap::new(1, 1, 1, vec![1.0]).unwrap();
        assert!(store_probability_map(&map, "/nonexistent/dir/p.ptm").is_err());
    }
}
