//! Raster file formats: 16-bit PGM/PNG mosaics, 16-bit PNG and float PFM
//! images.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, Rgba};

use crate::error::{Error, Result};
use crate::image::Image;

/// Map a normalized value onto the full 16-bit range.
#[inline]
pub fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

#[inline]
pub fn dequantize16(v: u16) -> f64 {
    v as f64 / 65535.0
}

/// Round every sample to the nearest value a 16-bit PNG can hold.
pub fn quantize_image(img: &Image) -> Image {
    img.map(|v| dequantize16(quantize16(v)))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

fn ensure_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

/// Read a single-channel 16-bit mosaic (`.pgm` or `.png`).
pub fn read_mosaic(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    ensure_exists(path)?;
    match extension(path).as_str() {
        "pgm" => read_pgm16(path),
        "png" => {
            let img = image::open(path)?.into_luma16();
            let (w, h) = img.dimensions();
            Ok((w as usize, h as usize, img.into_raw()))
        }
        other => Err(Error::format(path, format!("unsupported mosaic extension {other:?}"))),
    }
}

pub fn write_mosaic(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    match extension(path).as_str() {
        "pgm" => write_pgm16(path, width, height, samples),
        "png" => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(width as u32, height as u32, samples.to_vec())
                    .ok_or_else(|| Error::mismatch(width * height, samples.len()))?;
            buf.save(path)?;
            Ok(())
        }
        other => Err(Error::format(path, format!("unsupported mosaic extension {other:?}"))),
    }
}

/// Binary PGM (`P5`); samples are big-endian when maxval exceeds 255.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    ensure_exists(path)?;
    let bytes = fs::read(path)?;
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
            return Err(Error::format(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format(path, format!("bad magic {:?}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad header field {s:?}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    let payload = bytes.get(pos..).unwrap_or(&[]);
    let samples: Vec<u16> = if maxval > 255 {
        if payload.len() != 2 * w * h {
            return Err(Error::mismatch(
                format!("{} payload bytes", 2 * w * h),
                format!("{} payload bytes", payload.len()),
            ));
        }
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        if payload.len() != w * h {
            return Err(Error::mismatch(
                format!("{} payload bytes", w * h),
                format!("{} payload bytes", payload.len()),
            ));
        }
        payload.iter().map(|&b| b as u16).collect()
    };
    Ok((w, h, samples))
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    if samples.len() != width * height {
        return Err(Error::mismatch(width * height, samples.len()));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for s in samples {
        out.write_all(&s.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a PNG (8/16-bit gray, RGB or RGBA) or PFM as normalized planes.
pub fn read_image(path: &Path) -> Result<Image> {
    ensure_exists(path)?;
    match extension(path).as_str() {
        "pfm" => read_pfm(path),
        "pgm" => {
            let (w, h, s) = read_pgm16(path)?;
            Image::from_vec(w, h, 1, s.into_iter().map(dequantize16).collect())
        }
        "png" => {
            let dynimg = image::open(path)?;
            let color = dynimg.color();
            let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
            let channels = match (color.has_color(), color.has_alpha()) {
                (false, false) => 1,
                (true, false) => 3,
                (_, true) => 4,
            };
            let raw: Vec<u16> = match channels {
                1 => dynimg.into_luma16().into_raw(),
                3 => dynimg.into_rgb16().into_raw(),
                _ => dynimg.into_rgba16().into_raw(),
            };
            Ok(Image::from_fn(w, h, channels, |c, x, y| {
                dequantize16(raw[(y * w + x) * channels + c])
            }))
        }
        other => Err(Error::format(path, format!("unsupported image extension {other:?}"))),
    }
}

/// Write a 16-bit PNG or a 32-bit float PFM, chosen by extension.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    match extension(path).as_str() {
        "pfm" => write_pfm(path, img),
        "png" => write_png16(path, img),
        other => Err(Error::format(path, format!("unsupported image extension {other:?}"))),
    }
}

fn interleaved_u16(img: &Image) -> Vec<u16> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out.push(quantize16(img.get(c, x, y)));
            }
        }
    }
    out
}

pub fn write_png16(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw = interleaved_u16(img);
    let bad = || Error::format(path, "sample count does not match dimensions");
    match img.channels() {
        1 => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
            .ok_or_else(bad)?
            .save(path)?,
        3 => ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw)
            .ok_or_else(bad)?
            .save(path)?,
        4 => ImageBuffer::<Rgba<u16>, _>::from_raw(w, h, raw)
            .ok_or_else(bad)?
            .save(path)?,
        n => return Err(Error::format(path, format!("cannot store {n} channels in PNG"))),
    }
    Ok(())
}

pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let magic = match img.channels() {
        1 => "Pf",
        3 => "PF",
        n => return Err(Error::format(path, format!("cannot store {n} channels in PFM"))),
    };
    let (w, h) = (img.width(), img.height());
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "{magic}\n{w} {h}\n-1.0\n")?;
    // PFM rows run bottom to top
    for y in (0..h).rev() {
        for x in 0..w {
            for c in 0..img.channels() {
                out.write_all(&(img.get(c, x, y) as f32).to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let mut lines = Vec::new();
    let mut pos = 0;
    while lines.len() < 3 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "truncated PFM header"))?;
        lines.push(String::from_utf8_lossy(&bytes[pos..pos + end]).trim().to_owned());
        pos += end + 1;
    }
    let channels = match lines[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(Error::format(path, format!("bad PFM magic {m:?}"))),
    };
    let dims: Vec<usize> = lines[1]
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::format(path, "bad PFM dimensions")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::format(path, "bad PFM dimensions"));
    }
    let (w, h) = (dims[0], dims[1]);
    let scale: f64 = lines[2].parse().map_err(|_| Error::format(path, "bad PFM scale"))?;
    let payload = &bytes[pos..];
    if payload.len() != 4 * w * h * channels {
        return Err(Error::mismatch(4 * w * h * channels, payload.len()));
    }
    let read = |i: usize| {
        let b = [
            payload[4 * i],
            payload[4 * i + 1],
            payload[4 * i + 2],
            payload[4 * i + 3],
        ];
        if scale < 0.0 {
            f32::from_le_bytes(b) as f64
        } else {
            f32::from_be_bytes(b) as f64
        }
    };
    Ok(Image::from_fn(w, h, channels, |c, x, y| {
        read(((h - 1 - y) * w + x) * channels + c)
    }))
}
