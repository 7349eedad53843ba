//! File formats: RIFF/WAVE audio in and out, and the SCT1 coefficient
//! container (JSON header + raw float32 payload).

use crate::adjoint::ScatteringCoefficients;
use crate::error::{Error, Result};
use crate::scattering::{Scalogram, ScatteringConfig, ScatteringPath, ScatteringTensor,
    TensorOrder};
use crate::signal::AudioBuffer;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const TOOL_TAG: &str = concat!("scatsynth ", env!("CARGO_PKG_VERSION"));

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    /// IEEE float32, the default: survives roundtrips bit-exactly and keeps
    /// out-of-range peaks.
    Float32,
    /// 16-bit PCM with TPDF dither; peaks above full scale are soft-clipped
    /// through tanh (with a warning), never wrapped.
    Pcm16,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Wav(format!("truncated file: missing {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
}

/// Reads a RIFF/WAVE file: PCM 16/24-bit or IEEE float32, any sample rate.
/// Multichannel input is downmixed to mono by averaging; that and any other
/// non-fatal oddity is reported in the returned warning list.
pub fn read_wav(path: &Path) -> Result<(AudioBuffer, Vec<String>)> {
    let bytes = fs::read(path)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::Wav("not a RIFF file".into()));
    }
    c.u32("RIFF size")?;
    if c.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::Wav("RIFF file is not WAVE".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // code, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while c.pos + 8 <= bytes.len() {
        let id: [u8; 4] = c.take(4, "chunk id")?.try_into().unwrap();
        let size = c.u32("chunk size")? as usize;
        let body = c.take(size, &format!("chunk {:?} body", String::from_utf8_lossy(&id)))?;
        if size % 2 == 1 && c.pos < bytes.len() {
            c.pos += 1; // chunk bodies are word-aligned
        }
        match &id {
            b"fmt " => {
                let mut fc = Cursor { bytes: body, pos: 0 };
                let mut code = fc.u16("format code")?;
                let channels = fc.u16("channel count")?;
                let rate = fc.u32("sample rate")?;
                fc.u32("byte rate")?;
                fc.u16("block align")?;
                let bits = fc.u16("bit depth")?;
                if code == 0xFFFE {
                    // extensible: the real code leads the subformat GUID
                    fc.u16("extension size")?;
                    fc.u16("valid bits")?;
                    fc.u32("channel mask")?;
                    code = fc.u16("subformat code")?;
                }
                fmt = Some((code, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
    }
    let (code, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if channels == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    if rate == 0 {
        return Err(Error::Wav("zero sample rate".into()));
    }
    let sample_bytes = match (code, bits) {
        (1, 16) => 2,
        (1, 24) => 3,
        (3, 32) => 4,
        _ => {
            return Err(Error::Wav(format!(
                "unsupported codec: format {code}, {bits}-bit (PCM 16/24 or float32 only)"
            )))
        }
    };
    let frame_bytes = sample_bytes * channels as usize;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(Error::Wav("zero-length audio".into()));
    }
    let mut warnings = Vec::new();
    if data.len() % frame_bytes != 0 {
        warnings.push("data chunk has trailing partial frame; ignored".into());
    }
    if channels > 1 {
        warnings.push(format!("downmixed {channels} channels to mono by averaging"));
    }
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for ch in 0..channels as usize {
            let o = f * frame_bytes + ch * sample_bytes;
            acc += match (code, bits) {
                (1, 16) => i16::from_le_bytes([data[o], data[o + 1]]) as f64 / 32768.0,
                (1, 24) => {
                    let raw =
                        (data[o] as i32) | ((data[o + 1] as i32) << 8) | ((data[o + 2] as i8 as i32) << 16);
                    raw as f64 / 8388608.0
                }
                (3, 32) => f32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]])
                    as f64,
                _ => unreachable!(),
            };
        }
        samples.push(acc / channels as f64);
    }
    Ok((AudioBuffer::new(samples, rate as f64), warnings))
}

fn wav_header(format_code: u16, bits: u16, rate: u32, data_len: u32) -> Vec<u8> {
    let block_align = (bits / 8) as u32;
    let mut h = Vec::with_capacity(44);
    h.extend_from_slice(b"RIFF");
    h.extend_from_slice(&(36 + data_len).to_le_bytes());
    h.extend_from_slice(b"WAVEfmt ");
    h.extend_from_slice(&16u32.to_le_bytes());
    h.extend_from_slice(&format_code.to_le_bytes());
    h.extend_from_slice(&1u16.to_le_bytes()); // mono
    h.extend_from_slice(&rate.to_le_bytes());
    h.extend_from_slice(&(rate * block_align).to_le_bytes());
    h.extend_from_slice(&(block_align as u16).to_le_bytes());
    h.extend_from_slice(&bits.to_le_bytes());
    h.extend_from_slice(b"data");
    h.extend_from_slice(&data_len.to_le_bytes());
    h
}

/// Writes mono WAV. Returns warnings (currently only the PCM soft-clip
/// notice). PCM output is deterministic: the dither generator is re-seeded
/// per call.
pub fn write_wav(buffer: &AudioBuffer, path: &Path, format: WavFormat) -> Result<Vec<String>> {
    buffer.check_finite()?;
    if buffer.is_empty() {
        return Err(Error::Wav("refusing to write zero-length audio".into()));
    }
    let rate = buffer.sample_rate.round() as u32;
    let mut warnings = Vec::new();
    let mut out;
    match format {
        WavFormat::Float32 => {
            out = wav_header(3, 32, rate, (buffer.len() * 4) as u32);
            for &v in &buffer.samples {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        WavFormat::Pcm16 => {
            let peak = buffer.peak();
            let clip = peak > 1.0;
            if clip {
                warnings.push(format!(
                    "peak {peak:.3} exceeds full scale; soft-clipping through tanh"
                ));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(0x5c75);
            out = wav_header(1, 16, rate, (buffer.len() * 2) as u32);
            for &v in &buffer.samples {
                let v = if clip { v.tanh() } else { v };
                // TPDF dither, one LSB peak-to-peak
                let dither: f64 = rng.gen::<f64>() - rng.gen::<f64>();
                let q = (v * 32767.0 + dither).round();
                out.extend_from_slice(&(q.clamp(-32768.0, 32767.0) as i16).to_le_bytes());
            }
        }
    }
    fs::write(path, out)?;
    Ok(warnings)
}

// ---------------------------------------------------------------------------
// SCT1 coefficient container
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"SCT1";
const MAX_HEADER: usize = 1 << 24;

/// Everything needed to resynthesize from a container without the original
/// audio: the config, the input length (fixes the padded geometry), and the
/// full coefficient tensors.
#[derive(Debug, Clone)]
pub struct CoefficientFile {
    pub cfg: ScatteringConfig,
    pub input_len: usize,
    pub coeffs: ScatteringCoefficients,
}

#[derive(Serialize, Deserialize)]
struct ContainerHeader {
    tool: String,
    config: ScatteringConfig,
    input_len: usize,
    s1_frame_rate: f64,
    s2_frame_rate: f64,
    lambda_grid: Vec<f64>,
    order: TensorOrder,
    paths: Vec<ScatteringPath>,
    /// [n_frames, n_lambda]
    s1_shape: [usize; 2],
    /// [n_paths, n_frames, n_lambda]
    s2_shape: [usize; 3],
    dtype: String,
}

fn push_plane(payload: &mut Vec<u8>, plane: &Array2<f64>) {
    for &v in plane.iter() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn write_coefficients(path: &Path, file: &CoefficientFile) -> Result<()> {
    let s1 = &file.coeffs.s1;
    let s2 = &file.coeffs.s2;
    if s2.paths.is_empty() {
        return Err(Error::Container("refusing to write empty path table".into()));
    }
    let (pn, pr, pc) = (
        s2.values.len(),
        s2.values[0].nrows(),
        s2.values[0].ncols(),
    );
    let header = ContainerHeader {
        tool: TOOL_TAG.into(),
        config: file.cfg.clone(),
        input_len: file.input_len,
        s1_frame_rate: s1.frame_rate,
        s2_frame_rate: s2.frame_rate,
        lambda_grid: s1.lambda_grid.clone(),
        order: s2.order,
        paths: s2.paths.clone(),
        s1_shape: [s1.n_frames(), s1.n_lambda()],
        s2_shape: [pn, pr, pc],
        dtype: "float32".into(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    push_plane(&mut out, &s1.values);
    for plane in &s2.values {
        if plane.dim() != (pr, pc) {
            return Err(Error::Container("ragged tensor planes".into()));
        }
        push_plane(&mut out, plane);
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_plane(payload: &[u8], offset: &mut usize, rows: usize, cols: usize) -> Array2<f64> {
    let mut plane = Array2::zeros((rows, cols));
    for v in plane.iter_mut() {
        let o = *offset;
        *v = f32::from_le_bytes(payload[o..o + 4].try_into().unwrap()) as f64;
        *offset += 4;
    }
    plane
}

pub fn read_coefficients(path: &Path) -> Result<CoefficientFile> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Container("not an SCT1 container".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if header_len > MAX_HEADER || 8 + header_len > bytes.len() {
        return Err(Error::Container("header length exceeds file size".into()));
    }
    let header: ContainerHeader = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| Error::Container(format!("bad header JSON: {e}")))?;
    if header.dtype != "float32" {
        return Err(Error::Container(format!("unsupported dtype {}", header.dtype)));
    }
    if header.paths.is_empty() {
        return Err(Error::Container("empty path table".into()));
    }
    let [s1r, s1c] = header.s1_shape;
    let [pn, pr, pc] = header.s2_shape;
    if pn != header.paths.len() {
        return Err(Error::Container("path table does not match tensor shape".into()));
    }
    if header.lambda_grid.len() != s1c {
        return Err(Error::Container("lambda grid does not match tensor shape".into()));
    }
    let expected = s1r
        .checked_mul(s1c)
        .and_then(|a| pn.checked_mul(pr)?.checked_mul(pc)?.checked_add(a))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Container("tensor shape overflows".into()))?;
    let payload = &bytes[8 + header_len..];
    if payload.len() != expected {
        return Err(Error::Container(format!(
            "payload is {} bytes, shapes require {expected}",
            payload.len()
        )));
    }
    let mut offset = 0;
    let s1 = Scalogram {
        values: read_plane(payload, &mut offset, s1r, s1c),
        frame_rate: header.s1_frame_rate,
        lambda_grid: header.lambda_grid,
    };
    let values = (0..pn)
        .map(|_| read_plane(payload, &mut offset, pr, pc))
        .collect();
    let s2 = ScatteringTensor {
        paths: header.paths,
        values,
        frame_rate: header.s2_frame_rate,
        order: header.order,
    };
    Ok(CoefficientFile {
        cfg: header.config,
        input_len: header.input_len,
        coeffs: ScatteringCoefficients { s1, s2 },
    })
}

/// Header dump for `info`: the JSON header plus payload accounting.
pub fn container_info(path: &Path) -> Result<serde_json::Value> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Container("not an SCT1 container".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if header_len > MAX_HEADER || 8 + header_len > bytes.len() {
        return Err(Error::Container("header length exceeds file size".into()));
    }
    let mut v: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| Error::Container(format!("bad header JSON: {e}")))?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert(
            "payload_bytes".into(),
            serde_json::json!(bytes.len() - 8 - header_len),
        );
    }
    Ok(v)
}
