//! 8-bit binary PGM (`P5`) images.

use std::path::Path;

use crate::{Error, Result};

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Returns `(width, height, pixels)`. Only `maxval = 255` is accepted.
pub fn decode(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("expected P5 magic, found `{}`", fields[0]));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("bad PGM header field `{s}`"))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format!("only maxval 255 is supported, found {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(format!(
            "raster truncated: expected {n} bytes, found {}",
            bytes.len().saturating_sub(pos)
        ));
    }
    Ok((width, height, bytes[pos..pos + n].to_vec()))
}

pub fn read(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::Data {
        path: path.to_path_buf(),
        line: 0,
        msg,
    })
}

pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    std::fs::write(path, encode(width, height, pixels)).map_err(|e| Error::io(path, e))
}
