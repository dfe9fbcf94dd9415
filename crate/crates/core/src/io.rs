//! Depth, mask and sample-set files.
//!
//! - PFM: grayscale `Pf`, rows stored bottom to top, little-endian when the
//!   scale field is negative. Written little-endian with scale `-1`.
//! - PNG: 16-bit grayscale depth in integer units of `depth_scale` meters
//!   (0 means missing); 8-bit masks where any nonzero value is set.
//! - CSV: header `u,v,z_c` or `u,v,z_c,z_p`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};

use crate::depth::{DepthMap, Mask, SamplePoint, SampleSet};
use crate::error::{Error, Result};

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

/// How raw values of a loaded depth file are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthKind {
    /// Metric ground truth: nonpositive values are missing.
    Measured,
    /// Raw model output: zero is missing, negative values are kept.
    Prediction,
    /// Anything already processed (aligned output): only non-finite is missing.
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pfm,
    Png,
}

fn format_of(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pfm") => Ok(Format::Pfm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::Parse(format!(
            "unsupported depth file extension: {} (expected .pfm or .png)",
            path.display()
        ))),
    }
}

fn build(kind: DepthKind, w: usize, h: usize, data: Vec<f64>) -> Result<DepthMap> {
    match kind {
        DepthKind::Measured => DepthMap::from_measured(w, h, data),
        DepthKind::Prediction => DepthMap::from_prediction(w, h, data),
        DepthKind::Derived => DepthMap::new(w, h, data),
    }
}

pub fn load_depth(path: &Path, kind: DepthKind, depth_scale: f64) -> Result<DepthMap> {
    let (w, h, data) = match format_of(path)? {
        Format::Pfm => read_pfm(BufReader::new(fs::File::open(path)?))?,
        Format::Png => read_png16(path, depth_scale)?,
    };
    build(kind, w, h, data)
}

pub fn save_depth(path: &Path, map: &DepthMap, depth_scale: f64) -> Result<()> {
    match format_of(path)? {
        Format::Pfm => {
            let mut f = std::io::BufWriter::new(fs::File::create(path)?);
            write_pfm(&mut f, map)?;
            f.flush()?;
            Ok(())
        }
        Format::Png => write_png16(path, map, depth_scale),
    }
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
        if token.len() > 64 {
            return Err(Error::Parse("PFM header token too long".into()));
        }
    }
    if token.is_empty() {
        return Err(Error::Parse("truncated PFM header".into()));
    }
    String::from_utf8(token).map_err(|_| Error::Parse("PFM header is not ASCII".into()))
}

/// Reads a grayscale PFM into row-major, top-to-bottom order.
pub fn read_pfm<R: BufRead>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    let magic = read_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::Parse(format!(
            "expected grayscale PFM magic 'Pf', found '{magic}'"
        )));
    }
    let parse_dim = |t: String| {
        t.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad PFM dimension '{t}'")))
    };
    let width = parse_dim(read_token(&mut r)?)?;
    let height = parse_dim(read_token(&mut r)?)?;
    let scale_tok = read_token(&mut r)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::Parse(format!("bad PFM scale '{scale_tok}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Parse("PFM scale must be nonzero".into()));
    }
    let little = scale < 0.0;
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::Parse("PFM dimensions overflow".into()))?;
    let mut raw = vec![0u8; count * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Parse("PFM pixel data is truncated".into()))?;
    let mut data = vec![0.0; count];
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let value = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        // file rows run bottom to top
        let (row, col) = (k / width, k % width);
        data[(height - 1 - row) * width + col] = value as f64;
    }
    Ok((width, height, data))
}

pub fn write_pfm<W: Write>(w: &mut W, map: &DepthMap) -> Result<()> {
    write!(w, "Pf\n{} {}\n-1.0\n", map.width(), map.height())?;
    for row in map.data().chunks(map.width()).rev() {
        for &z in row {
            w.write_all(&(z as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_png16(path: &Path, depth_scale: f64) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| {
            if v == 0 {
                f64::NAN
            } else {
                v as f64 * depth_scale
            }
        })
        .collect();
    Ok((w as usize, h as usize, data))
}

fn write_png16(path: &Path, map: &DepthMap, depth_scale: f64) -> Result<()> {
    if !(depth_scale > 0.0) {
        return Err(Error::InvalidArgument(
            "depth scale must be positive".into(),
        ));
    }
    let raw: Vec<u16> = map
        .data()
        .iter()
        .map(|&z| {
            if z.is_finite() && z > 0.0 {
                (z / depth_scale).round().clamp(1.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
            .expect("buffer matches dimensions");
    img.save(path)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Mask::new(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v != 0).collect(),
    )
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = mask.dims();
    let raw = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    GrayImage::from_raw(w as u32, h as u32, raw)
        .expect("buffer matches dimensions")
        .save(path)?;
    Ok(())
}

pub fn write_samples<W: Write>(w: W, samples: &[SamplePoint]) -> Result<()> {
    let with_pred = samples.iter().all(|p| p.z_p.is_some());
    let mut out = csv::Writer::from_writer(w);
    if with_pred {
        out.write_record(["u", "v", "z_c", "z_p"])?;
    } else {
        out.write_record(["u", "v", "z_c"])?;
    }
    for p in samples {
        let mut rec = vec![p.u.to_string(), p.v.to_string(), p.z_c.to_string()];
        if with_pred {
            rec.push(p.z_p.expect("checked").to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples<R: Read>(r: R) -> Result<SampleSet> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let with_pred = match names.as_slice() {
        ["u", "v", "z_c"] => false,
        ["u", "v", "z_c", "z_p"] => true,
        _ => {
            return Err(Error::Parse(format!(
                "sample CSV header must be u,v,z_c[,z_p], found {}",
                names.join(",")
            )))
        }
    };
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 2));
        points.push(SamplePoint {
            u: field(0).parse().map_err(|_| bad("u"))?,
            v: field(1).parse().map_err(|_| bad("v"))?,
            z_c: field(2).parse().map_err(|_| bad("z_c"))?,
            z_p: if with_pred {
                Some(field(3).parse().map_err(|_| bad("z_p"))?)
            } else {
                None
            },
        });
    }
    SampleSet::new(points)
}
