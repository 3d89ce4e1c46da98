//! Synthetic series whose information and noise live in known frequency bands.
//!
//! Each channel is a sum of sinusoids (the predictable part) plus Gaussian
//! noise that has been band-limited by zeroing every whole-series Fourier bin
//! outside `noise_band`. Frequencies are expressed as fractions of the Nyquist
//! rate, so a band of `(2/3, 1)` is the upper third of any spectrum. The noise
//! is rescaled so that, per channel, signal power / noise power equals `snr`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SeriesTable;
use crate::error::{Error, Result};
use crate::numerics::RealTensor;
use crate::spectral;

/// One sinusoid, `amplitude * sin(2 pi t / period + phase)`; phases are drawn per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub period: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub channels: usize,
    pub tones: Vec<Tone>,
    /// `(lo, hi)` as fractions of Nyquist.
    pub noise_band: (f64, f64),
    /// Signal-to-noise power ratio; infinite means no noise.
    pub snr: f64,
}

impl SyntheticSpec {
    /// Low-frequency tones with noise confined to the top of the spectrum.
    pub fn noise_band_default() -> Self {
        Self {
            rows: 2400,
            channels: 2,
            tones: vec![
                Tone {
                    period: 24.0,
                    amplitude: 1.0,
                },
                Tone {
                    period: 16.0,
                    amplitude: 0.6,
                },
            ],
            noise_band: (0.72, 1.0),
            snr: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.noise_band;
        if self.rows < 2 || self.channels == 0 {
            return Err(Error::Config("synthetic series needs rows >= 2 and channels >= 1".into()));
        }
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::Config(format!("noise band ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config("snr must be positive".into()));
        }
        if self.tones.iter().any(|t| !(t.period > 0.0) || !t.amplitude.is_finite()) {
            return Err(Error::Config("tones need positive periods and finite amplitudes".into()));
        }
        Ok(())
    }
}

/// Generated series along with its two components.
#[derive(Debug, Clone)]
pub struct SyntheticSeries {
    pub table: SeriesTable,
    pub signal: RealTensor,
    pub noise: RealTensor,
}

pub fn synthetic_band_dataset(seed: u64, spec: &SyntheticSpec) -> Result<SyntheticSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, c) = (spec.rows, spec.channels);

    let mut signal = vec![0.0; rows * c];
    for ch in 0..c {
        for tone in &spec.tones {
            let phase = rng.random_range(0.0..2.0 * PI);
            for t in 0..rows {
                signal[t * c + ch] += tone.amplitude * (2.0 * PI * t as f64 / tone.period + phase).sin();
            }
        }
    }

    let mut noise = vec![0.0; rows * c];
    if spec.snr.is_finite() {
        // even transform length; the extra row is dropped
        let n = rows + rows % 2;
        let white: Vec<f64> = (0..n * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut s = spectral::rdft(&RealTensor::new(vec![n, c], white)?)?;
        let half = (n / 2) as f64;
        let (lo, hi) = spec.noise_band;
        for k in 0..s.bins() {
            let frac = k as f64 / half;
            if frac < lo || frac > hi {
                for j in 0..c {
                    s.coeffs.re.set(k, j, 0.0);
                    s.coeffs.im.set(k, j, 0.0);
                }
            }
        }
        let shaped = spectral::irdft(&s);
        for ch in 0..c {
            let sig_pow = (0..rows).map(|t| signal[t * c + ch].powi(2)).sum::<f64>() / rows as f64;
            let noise_pow = (0..rows).map(|t| shaped.get(t, ch).powi(2)).sum::<f64>() / rows as f64;
            let gain = if noise_pow > 0.0 { (sig_pow / spec.snr / noise_pow).sqrt() } else { 0.0 };
            for t in 0..rows {
                noise[t * c + ch] = gain * shaped.get(t, ch);
            }
        }
    }

    let values: Vec<f64> = signal.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let table = SeriesTable::new(
        RealTensor::new(vec![rows, c], values)?,
        (0..c).map(|i| format!("ch{i}")).collect(),
    )?;
    Ok(SyntheticSeries {
        table,
        signal: RealTensor::new(vec![rows, c], signal)?,
        noise: RealTensor::new(vec![rows, c], noise)?,
    })
}
