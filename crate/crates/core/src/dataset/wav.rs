//! RIFF/WAVE decoding (PCM integer and IEEE float) and a PCM16 encoder.

use super::{AudioClip, DatasetError};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy)]
struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format, DatasetError> {
    if body.len() < 16 {
        return Err(DatasetError::MalformedHeader(format!("fmt chunk is {} bytes", body.len())));
    }
    let mut code = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if code == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID,
        // whose first two bytes carry the actual format code.
        if body.len() < 26 {
            return Err(DatasetError::MalformedHeader("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        code = u16_at(body, 24);
    }
    if channels == 0 {
        return Err(DatasetError::MalformedHeader("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(DatasetError::MalformedHeader("zero sample rate".into()));
    }
    match (code, bits) {
        (FORMAT_PCM, 8 | 16 | 24 | 32) | (FORMAT_FLOAT, 32) => {}
        (FORMAT_PCM | FORMAT_FLOAT, b) => {
            return Err(DatasetError::UnsupportedEncoding(format!("format {code:#06x} with {b} bits")))
        }
        (c, _) => return Err(DatasetError::UnsupportedEncoding(format!("format code {c:#06x}"))),
    }
    Ok(Format { code, channels, sample_rate, bits })
}

fn decode_sample(fmt: Format, b: &[u8]) -> f64 {
    match (fmt.code, fmt.bits) {
        (FORMAT_FLOAT, _) => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        (_, 8) => (f64::from(b[0]) - 128.0) / 128.0,
        (_, 16) => f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0,
        (_, 24) => f64::from(i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8) / 8_388_608.0,
        _ => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0,
    }
}

/// Decodes a RIFF/WAVE byte buffer, averaging all channels to mono.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip, DatasetError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DatasetError::MalformedHeader("missing RIFF/WAVE magic".into()));
    }
    let mut pos = 12;
    let mut format = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(DatasetError::MalformedHeader("fmt chunk runs past end of file".into()));
                }
                format = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                let fmt = format.ok_or_else(|| DatasetError::MalformedHeader("data chunk before fmt chunk".into()))?;
                if size > available {
                    return Err(DatasetError::TruncatedData { declared: size, available });
                }
                return decode_data(fmt, &bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    Err(DatasetError::MalformedHeader("no data chunk".into()))
}

fn decode_data(fmt: Format, data: &[u8]) -> Result<AudioClip, DatasetError> {
    let width = usize::from(fmt.bits / 8);
    let channels = usize::from(fmt.channels);
    let block = width * channels;
    let n_frames = data.len() / block;
    let scale = 1.0 / channels as f64;
    let samples = data
        .chunks_exact(block)
        .take(n_frames)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(width).map(|s| decode_sample(fmt, s)).sum();
            if channels == 1 {
                sum
            } else {
                sum * scale
            }
        })
        .collect();
    AudioClip::new(samples, fmt.sample_rate)
}

/// Encodes a clip as 16-bit mono PCM. Samples are clamped to the
/// representable range.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}
