//! Binary PGM (`P5`, maxval 255) for class maps and binary masks.
//!
//! Class maps store one label per byte. Masks use `0` (outside) and `255`
//! (inside) only.

use std::path::Path;

use super::ptm::{read_file, write_file};
use super::{BinaryMask, ClassMap, FormatError};

struct Header {
    width: usize,
    height: usize,
    data_offset: usize,
}

fn pgm_err(msg: impl Into<String>) -> FormatError {
    FormatError::Pgm(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(pgm_err(format!(
            "expected binary PGM magic \"P5\", found {found:?}"
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(pgm_err("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| pgm_err("header number out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(pgm_err(format!("maxval must be 255, found {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(FormatError::Degenerate {
            height,
            width,
            classes: 1,
        });
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(pgm_err("missing whitespace after maxval")),
    }
    let expected = width * height;
    let found = bytes.len() - pos;
    if found < expected {
        return Err(FormatError::Truncated { expected, found });
    }
    if found > expected {
        return Err(FormatError::Trailing(found - expected));
    }
    Ok(Header {
        width,
        height,
        data_offset: pos,
    })
}

fn encode(width: usize, height: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

pub fn encode_class_map(map: &ClassMap) -> Vec<u8> {
    encode(map.width(), map.height(), map.labels().iter().copied())
}

pub fn decode_class_map(bytes: &[u8]) -> Result<ClassMap, FormatError> {
    let h = parse_header(bytes)?;
    ClassMap::new(h.height, h.width, bytes[h.data_offset..].to_vec())
}

pub fn encode_binary_mask(mask: &BinaryMask) -> Vec<u8> {
    encode(
        mask.width(),
        mask.height(),
        mask.bits().iter().map(|&b| if b { 255 } else { 0 }),
    )
}

pub fn decode_binary_mask(bytes: &[u8]) -> Result<BinaryMask, FormatError> {
    let h = parse_header(bytes)?;
    let bits = bytes[h.data_offset..]
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(pgm_err(format!(
                "mask pixel {i} has value {other}; masks use 0 and 255 only"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    BinaryMask::new(h.height, h.width, bits)
}

pub fn load_class_map(path: impl AsRef<Path>) -> Result<ClassMap, FormatError> {
    decode_class_map(&read_file(path.as_ref())?)
}

pub fn store_class_map(map: &ClassMap, path: impl AsRef<Path>) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_class_map(map))
}

pub fn load_binary_mask(path: impl AsRef<Path>) -> Result<BinaryMask, FormatError> {
    decode_binary_mask(&read_file(path.as_ref())?)
}

pub fn store_binary_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_binary_mask(mask))
}
