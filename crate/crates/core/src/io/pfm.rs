use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::open_err;
use crate::error::{HapError, Result};

/// Row-major float grid with 1 or 3 channels, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Portable float map. Rows are stored bottom-to-top on disk; the returned
/// image is top-to-bottom. Big-endian files (positive scale) are accepted.
pub fn read_pfm(path: &Path) -> Result<FloatImage> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let ctx = || format!("PFM {}", path.display());
    let mut r = BufReader::new(file);
    let mut header = Vec::new();
    // three whitespace-separated header lines
    let mut lines = 0;
    while lines < 3 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(HapError::parse(ctx(), "truncated header"));
        }
        if line.trim().is_empty() {
            continue;
        }
        header.extend(line.split_whitespace().map(str::to_owned));
        lines += 1;
        if header.len() >= 4 {
            break;
        }
    }
    if header.len() < 4 {
        return Err(HapError::parse(ctx(), "truncated header"));
    }
    let channels = match header[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(HapError::parse(ctx(), format!("bad magic `{m}`"))),
    };
    let width: usize = header[1].parse().map_err(|_| HapError::parse(ctx(), "bad width"))?;
    let height: usize = header[2].parse().map_err(|_| HapError::parse(ctx(), "bad height"))?;
    let scale: f64 = header[3].parse().map_err(|_| HapError::parse(ctx(), "bad scale"))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw).map_err(|_| HapError::parse(ctx(), "truncated data"))?;
    let mut data = vec![0f32; n];
    let row = width * channels;
    for y in 0..height {
        let src = (height - 1 - y) * row;
        for k in 0..row {
            let b: [u8; 4] = raw[(src + k) * 4..(src + k) * 4 + 4].try_into().unwrap();
            data[y * row + k] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok(FloatImage {
        width,
        height,
        channels,
        data,
    })
}

/// Little-endian PFM.
pub fn write_pfm(path: &Path, img: &FloatImage) -> Result<()> {
    if img.channels != 1 && img.channels != 3 {
        return Err(HapError::invalid("PFM supports 1 or 3 channels"));
    }
    if img.data.len() != img.width * img.height * img.channels {
        return Err(HapError::invalid("PFM data size does not match dimensions"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "{}\n{} {}\n-1.0\n",
        if img.channels == 1 { "Pf" } else { "PF" },
        img.width,
        img.height
    )?;
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_row_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let img = FloatImage {
            width: 3,
            height: 2,
            channels: 1,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, f32::INFINITY],
        };
        write_pfm(&p, &img).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.get(0, 1, 0), 4.0);
    }
}
