//! RIFF/WAVE PCM 16-bit mono reader and writer.
//!
//! Writes clamp samples to `[-1, 1]` and scale by 32767; the read∘write
//! round trip is exact to within one quantization step (1/32767).

use super::{SignalError, Waveform};
use std::io::Write;
use std::path::Path;

pub fn wav_write(w: &Waveform, path: &Path) -> Result<(), SignalError> {
    let n = w.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn take<'a>(buf: &'a [u8], at: usize, n: usize, field: &'static str) -> Result<&'a [u8], SignalError> {
    buf.get(at..at + n).ok_or(SignalError::Format {
        field,
        message: "file truncated".into(),
    })
}

fn u32_at(buf: &[u8], at: usize, field: &'static str) -> Result<u32, SignalError> {
    let b = take(buf, at, 4, field)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn u16_at(buf: &[u8], at: usize, field: &'static str) -> Result<u16, SignalError> {
    let b = take(buf, at, 2, field)?;
    Ok(u16::from_le_bytes([b[0], b[1]]))
}

pub fn wav_read(path: &Path) -> Result<Waveform, SignalError> {
    let buf = std::fs::read(path)?;
    if take(&buf, 0, 4, "riff magic")? != b"RIFF" {
        return Err(SignalError::Format {
            field: "riff magic",
            message: "missing RIFF tag".into(),
        });
    }
    if take(&buf, 8, 4, "wave magic")? != b"WAVE" {
        return Err(SignalError::Format {
            field: "wave magic",
            message: "missing WAVE tag".into(),
        });
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= buf.len() {
        let id: [u8; 4] = take(&buf, pos, 4, "chunk id")?.try_into().unwrap();
        let size = u32_at(&buf, pos + 4, "chunk size")? as usize;
        let body_at = pos + 8;
        match &id {
            b"fmt " => {
                let format_code = u16_at(&buf, body_at, "format code")?;
                let channels = u16_at(&buf, body_at + 2, "channels")?;
                let sample_rate = u32_at(&buf, body_at + 4, "sample rate")?;
                let bits = u16_at(&buf, body_at + 14, "bits_per_sample")?;
                fmt = Some((format_code, channels, sample_rate, bits));
            }
            b"data" => {
                data = Some(take(&buf, body_at, size, "data chunk")?);
            }
            _ => {}
        }
        pos = body_at + size + (size % 2); // chunks are word-aligned
    }

    let (format_code, channels, sample_rate, bits) = fmt.ok_or(SignalError::Format {
        field: "fmt chunk",
        message: "missing".into(),
    })?;
    if format_code != 1 {
        return Err(SignalError::Format {
            field: "format code",
            message: format!("expected PCM (1), got {format_code}"),
        });
    }
    if channels != 1 {
        return Err(SignalError::Format {
            field: "channels",
            message: format!("expected mono (1), got {channels}"),
        });
    }
    if bits != 16 {
        return Err(SignalError::Format {
            field: "bits_per_sample",
            message: format!("expected 16, got {bits}"),
        });
    }
    let data = data.ok_or(SignalError::Format {
        field: "data chunk",
        message: "missing".into(),
    })?;
    if data.len() % 2 != 0 {
        return Err(SignalError::Format {
            field: "data chunk size",
            message: format!("odd byte count {}", data.len()),
        });
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32767.0)
        .collect();
    if samples.is_empty() {
        return Err(SignalError::Format {
            field: "data chunk",
            message: "no samples".into(),
        });
    }
    Waveform::new(samples, sample_rate)
}
