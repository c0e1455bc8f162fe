//! File formats: binary PGM (P5), FITS primary HDU and the native cache.

use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};

use super::FrameBuffer;
use crate::error::{Error, Result};

const FITS_BLOCK: usize = 2880;
const CACHE_MAGIC: &[u8; 4] = b"HEF1";
const CACHE_HEADER: usize = 4 + 4 + 4 + 8;

/// Loads a 16-bit PGM, FITS or native cache file.
///
/// Sample values are converted to `f32` without rescaling. The timestamp is
/// taken from the FITS `DATE-OBS` card or the cache header when present,
/// otherwise from a `*_YYYYMMDD_HHMMSS.*` file name.
pub fn load_frame(path: impl AsRef<Path>, index: usize) -> Result<FrameBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, data, ts) = if bytes.starts_with(b"SIMPLE") {
        let img = decode_fits(&bytes)?;
        (img.width, img.height, img.data, img.date_obs)
    } else if bytes.starts_with(b"P5") {
        let img = decode_pgm(&bytes)?;
        let data = img.samples.into_iter().map(f32::from).collect();
        (img.width, img.height, data, None)
    } else if bytes.starts_with(CACHE_MAGIC) {
        let mut f = decode_cache(&bytes)?;
        f.set_frame_index(index);
        return Ok(f);
    } else {
        return Err(Error::UnsupportedFormat(path.display().to_string()));
    };
    let ts = match ts {
        Some(t) => t,
        None => timestamp_from_name(path)
            .ok_or_else(|| Error::MissingTimestamp(path.display().to_string()))?,
    };
    FrameBuffer::new(width, height, data, ts, index)
}

fn cache_timestamp(bytes: &[u8]) -> DateTime<Utc> {
    let micros = i64::from_le_bytes(bytes[12..20].try_into().unwrap());
    Utc.timestamp_micros(micros).single().unwrap_or_default()
}

/// Extracts the observation time from a `*_YYYYMMDD_HHMMSS.ext` file name.
pub fn timestamp_from_name(path: &Path) -> Option<DateTime<Utc>> {
    let stem = path.file_stem()?.to_str()?;
    let mut parts = stem.rsplit('_');
    let time = parts.next()?;
    let date = parts.next()?;
    if time.len() != 6 || date.len() != 8 {
        return None;
    }
    let naive = NaiveDateTime::parse_from_str(&format!("{date}{time}"), "%Y%m%d%H%M%S").ok()?;
    Some(Utc.from_utc_datetime(&naive))
}

/// File name component `YYYYMMDD_HHMMSS` for a timestamp.
pub fn timestamp_name(ts: DateTime<Utc>) -> String {
    ts.format("%Y%m%d_%H%M%S").to_string()
}

// ---------------------------------------------------------------------------
// PGM

/// Decoded P5 image; 8-bit files are widened to `u16`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::CorruptHeader("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader("bad PGM header field".into()))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::CorruptHeader("missing PGM raster separator".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptHeader(format!("PGM header {width}x{height} max {maxval}")));
    }
    let n = width * height;
    let raster = &bytes[pos..];
    let samples = if maxval < 256 {
        if raster.len() < n {
            return Err(Error::CorruptHeader(format!("PGM payload {} < {n} bytes", raster.len())));
        }
        raster[..n].iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::CorruptHeader(format!("PGM payload {} < {} bytes", raster.len(), 2 * n)));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn encode_pgm8(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::UnsupportedFormat(path.display().to_string()));
    }
    decode_pgm(&bytes)
}

/// Writes the frame as 16-bit PGM, rounding and clamping to `0..=65535`.
pub fn write_pgm16(path: impl AsRef<Path>, frame: &FrameBuffer) -> Result<()> {
    let samples: Vec<u16> = frame
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_bytes(path.as_ref(), &encode_pgm16(frame.width(), frame.height(), &samples))
}

pub fn write_pgm8(path: impl AsRef<Path>, width: usize, height: usize, samples: &[u8]) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm8(width, height, samples))
}

/// Linearly stretches a float image to 8 bits for inspection.
pub fn write_pgm8_scaled(path: impl AsRef<Path>, width: usize, height: usize, data: &[f32]) -> Result<()> {
    let (lo, hi) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let samples: Vec<u8> = data
        .iter()
        .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_pgm8(path, width, height, &samples)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// FITS

#[derive(Debug, Clone)]
pub struct FitsImage {
    pub width: usize,
    pub height: usize,
    pub bitpix: i32,
    pub data: Vec<f32>,
    pub date_obs: Option<DateTime<Utc>>,
}

fn card_value(card: &str) -> Option<&str> {
    let rest = card.get(8..)?;
    let rest = rest.strip_prefix("= ")?;
    // strip inline comment outside quotes
    let rest = rest.trim_start();
    if let Some(stripped) = rest.strip_prefix('\'') {
        let end = stripped.find('\'')?;
        Some(stripped[..end].trim_end())
    } else {
        Some(rest.split('/').next().unwrap_or("").trim())
    }
}

fn parse_date_obs(value: &str, time_obs: Option<&str>) -> Option<DateTime<Utc>> {
    let v = value.trim().trim_end_matches('Z');
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(v, fmt) {
            return Some(Utc.from_utc_datetime(&n));
        }
    }
    let date = NaiveDate::parse_from_str(v, "%Y-%m-%d").ok()?;
    let time = match time_obs {
        Some(t) => chrono::NaiveTime::parse_from_str(t.trim(), "%H:%M:%S%.f").ok()?,
        None => chrono::NaiveTime::MIN,
    };
    Some(Utc.from_utc_datetime(&date.and_time(time)))
}

pub fn decode_fits(bytes: &[u8]) -> Result<FitsImage> {
    let mut bitpix = None;
    let mut naxis = None;
    let mut dims = [0usize; 2];
    let mut bzero = 0.0f64;
    let mut bscale = 1.0f64;
    let mut date_obs: Option<String> = None;
    let mut time_obs: Option<String> = None;
    let mut header_end = None;
    'blocks: for (b, block) in bytes.chunks(FITS_BLOCK).enumerate() {
        if block.len() < FITS_BLOCK {
            break;
        }
        for card in block.chunks(80) {
            let card = std::str::from_utf8(card)
                .map_err(|_| Error::CorruptHeader("non-ASCII FITS card".into()))?;
            let key = card[..8].trim_end();
            let bad = || Error::CorruptHeader(format!("bad FITS card: {}", card.trim_end()));
            match key {
                "END" => {
                    header_end = Some((b + 1) * FITS_BLOCK);
                    break 'blocks;
                }
                "BITPIX" => bitpix = Some(card_value(card).and_then(|v| v.parse::<i32>().ok()).ok_or_else(bad)?),
                "NAXIS" => naxis = Some(card_value(card).and_then(|v| v.parse::<usize>().ok()).ok_or_else(bad)?),
                "NAXIS1" => dims[0] = card_value(card).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                "NAXIS2" => dims[1] = card_value(card).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                "BZERO" => bzero = card_value(card).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                "BSCALE" => bscale = card_value(card).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                "DATE-OBS" => date_obs = card_value(card).map(str::to_owned),
                "TIME-OBS" => time_obs = card_value(card).map(str::to_owned),
                _ => {}
            }
        }
    }
    let start = header_end.ok_or_else(|| Error::CorruptHeader("FITS header has no END card".into()))?;
    let bitpix = bitpix.ok_or_else(|| Error::CorruptHeader("missing BITPIX".into()))?;
    if naxis != Some(2) {
        return Err(Error::UnsupportedFormat(format!("FITS NAXIS={naxis:?}, expected 2")));
    }
    let [width, height] = dims;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader("zero FITS axis".into()));
    }
    let bytes_per = (bitpix.unsigned_abs() / 8) as usize;
    let n = width * height;
    let payload = bytes.get(start..).unwrap_or(&[]);
    if payload.len() < n * bytes_per {
        return Err(Error::CorruptHeader(format!(
            "FITS payload {} < {} bytes",
            payload.len(),
            n * bytes_per
        )));
    }
    let raw: Vec<f64> = match bitpix {
        8 => payload[..n].iter().map(|&b| b as f64).collect(),
        16 => payload[..2 * n].chunks_exact(2).map(|c| i16::from_be_bytes([c[0], c[1]]) as f64).collect(),
        32 => payload[..4 * n]
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        -32 => payload[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        -64 => payload[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
        other => return Err(Error::UnsupportedFormat(format!("FITS BITPIX={other}"))),
    };
    let data = raw.into_iter().map(|v| (bzero + bscale * v) as f32).collect();
    let date_obs = date_obs.and_then(|d| parse_date_obs(&d, time_obs.as_deref()));
    Ok(FitsImage {
        width,
        height,
        bitpix,
        data,
        date_obs,
    })
}

fn push_card(header: &mut Vec<u8>, card: String) {
    let mut c = card.into_bytes();
    c.resize(80, b' ');
    header.extend_from_slice(&c);
}

/// Encodes a primary-HDU FITS file with `BITPIX` 16 or -32.
pub fn encode_fits(frame: &FrameBuffer, bitpix: i32) -> Result<Vec<u8>> {
    if bitpix != 16 && bitpix != -32 {
        return Err(Error::UnsupportedFormat(format!("FITS BITPIX={bitpix} output")));
    }
    let mut out = Vec::new();
    push_card(&mut out, format!("{:<8}= {:>20}", "SIMPLE", "T"));
    push_card(&mut out, format!("{:<8}= {:>20}", "BITPIX", bitpix));
    push_card(&mut out, format!("{:<8}= {:>20}", "NAXIS", 2));
    push_card(&mut out, format!("{:<8}= {:>20}", "NAXIS1", frame.width()));
    push_card(&mut out, format!("{:<8}= {:>20}", "NAXIS2", frame.height()));
    push_card(
        &mut out,
        format!(
            "{:<8}= '{}'",
            "DATE-OBS",
            frame.timestamp().format("%Y-%m-%dT%H:%M:%S%.3f")
        ),
    );
    push_card(&mut out, "END".to_string());
    out.resize(out.len().div_ceil(FITS_BLOCK) * FITS_BLOCK, b' ');
    for &v in frame.data() {
        if bitpix == 16 {
            let s = v.round().clamp(i16::MIN as f32, i16::MAX as f32) as i16;
            out.extend_from_slice(&s.to_be_bytes());
        } else {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out.resize(out.len().div_ceil(FITS_BLOCK) * FITS_BLOCK, 0);
    Ok(out)
}

pub fn write_fits(path: impl AsRef<Path>, frame: &FrameBuffer, bitpix: i32) -> Result<()> {
    write_bytes(path.as_ref(), &encode_fits(frame, bitpix)?)
}

// ---------------------------------------------------------------------------
// Native cache: "HEF1", u32 width, u32 height, i64 unix micros, f32 samples (all LE).

pub fn encode_cache(frame: &FrameBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(CACHE_HEADER + 4 * frame.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(frame.width() as u32).to_le_bytes());
    out.extend_from_slice(&(frame.height() as u32).to_le_bytes());
    out.extend_from_slice(&frame.timestamp().timestamp_micros().to_le_bytes());
    for v in frame.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_cache(bytes: &[u8]) -> Result<FrameBuffer> {
    if bytes.len() < CACHE_HEADER || &bytes[..4] != CACHE_MAGIC {
        return Err(Error::CorruptHeader("bad cache header".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[CACHE_HEADER..];
    if payload.len() < 4 * width * height {
        return Err(Error::CorruptHeader(format!(
            "cache payload {} < {} bytes",
            payload.len(),
            4 * width * height
        )));
    }
    let data = payload[..4 * width * height]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FrameBuffer::new(width, height, data, cache_timestamp(bytes), 0)
}

pub fn write_cache(path: impl AsRef<Path>, frame: &FrameBuffer) -> Result<()> {
    write_bytes(path.as_ref(), &encode_cache(frame))
}
