//! RIFF PCM16 mono read/write at the canonical rate.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Reads a WAV file, downmixing channels and resampling to 16 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let ch = spec.channels.max(1) as usize;
    let mono: Vec<f32> = interleaved
        .chunks(ch)
        .map(|c| c.iter().sum::<f32>() / ch as f32)
        .collect();
    if mono.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no samples", path.as_ref().display())));
    }
    resample(&Waveform::new(mono, spec.sample_rate)?, SAMPLE_RATE)
}

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for &s in &w.samples {
        writer.write_sample(pcm16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn pcm16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Value a sample takes after a PCM16 round trip.
pub fn quantize_pcm16(w: &Waveform) -> Waveform {
    Waveform {
        samples: w.samples.iter().map(|&s| pcm16(s) as f32 / 32768.0).collect(),
        sample_rate: w.sample_rate,
    }
}
