//! Speech-shaped noise, diffuse babble and SNR calibration.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{all_pole_filter, autocorrelation_from_psd, fft_convolve, levinson_durbin, power, welch_psd};
use crate::error::{domain, Error, Result};
use crate::sim::Rir;

use super::speech::SpeechClip;

/// Order of the all-pole speech spectrum model.
pub const SPECTRUM_ORDER: usize = 16;
/// FFT size of the periodogram average.
pub const SPECTRUM_NFFT: usize = 512;
/// Early part of a response removed before babble convolution, seconds.
pub const LATE_GATE_S: f64 = 0.05;

/// All-pole model of the long-term average speech spectrum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeechSpectrumModel {
    /// `a[1..]` of `A(z)`; empty until fitted.
    pub ar: Vec<f64>,
    pub fs: u32,
}

impl SpeechSpectrumModel {
    /// Fits the model to the average Welch periodogram of `clips`.
    pub fn fit(clips: &[SpeechClip]) -> Result<SpeechSpectrumModel> {
        let fs = clips.first().map(|c| c.fs).ok_or_else(|| Error::Data("no clips to fit".into()))?;
        if clips.iter().any(|c| c.fs != fs) {
            return Err(Error::Data("clips differ in sample rate".into()));
        }
        let psd = welch_psd(clips.iter().map(|c| c.samples.as_slice()), SPECTRUM_NFFT)?;
        let r = autocorrelation_from_psd(&psd, SPECTRUM_ORDER);
        let (ar, _) = levinson_durbin(&r, SPECTRUM_ORDER)?;
        Ok(SpeechSpectrumModel { ar, fs })
    }

    pub fn is_fitted(&self) -> bool {
        !self.ar.is_empty()
    }
}

/// White Gaussian noise through the fitted all-pole filter, unit RMS.
pub fn speech_shaped_noise<R: Rng + ?Sized>(model: &SpeechSpectrumModel, n_samples: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !model.is_fitted() {
        return Err(Error::Data("speech spectrum model is not fitted".into()));
    }
    let warmup = 1024;
    let mut x: Vec<f64> = (0..n_samples + warmup).map(|_| StandardNormal.sample(rng)).collect();
    all_pole_filter(&model.ar, &mut x);
    let mut x = x.split_off(warmup);
    let p = power(&x);
    if p > 0.0 {
        let g = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    Ok(x)
}

/// Independent white Gaussian noise per channel, unit variance.
pub fn static_noise<R: Rng + ?Sized>(n_samples: usize, rng: &mut R) -> [Vec<f64>; 2] {
    std::array::from_fn(|_| (0..n_samples).map(|_| StandardNormal.sample(rng)).collect())
}

/// Copy of `rir` with everything up to 50 ms after each channel's direct
/// arrival set to zero.
pub fn late_part(rir: &Rir) -> Result<[Vec<f64>; 2]> {
    let gate = LATE_GATE_S * rir.fs as f64;
    let delays = rir.direct_delay();
    let mut out = rir.channels.clone();
    for (ch, h) in out.iter_mut().enumerate() {
        let cut = (delays[ch] + gate).ceil() as usize;
        if cut >= h.len() {
            return Err(Error::Data(format!(
                "response of {} samples ends within 50 ms of the direct path",
                h.len()
            )));
        }
        h[..cut].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(out)
}

/// Noise convolved with the late part of a response, cut to the noise length.
pub fn diffuse_babble(noise: &[f64], rir: &Rir) -> Result<[Vec<f64>; 2]> {
    let late = late_part(rir)?;
    Ok(late.map(|h| {
        if h.iter().all(|v| *v == 0.0) {
            return vec![0.0; noise.len()];
        }
        let mut y = fft_convolve(noise, &h);
        y.truncate(noise.len());
        y
    }))
}

/// Total power over both channels.
pub fn stereo_power(x: &[Vec<f64>; 2]) -> f64 {
    power(&x[0]) + power(&x[1])
}

/// `10 log10(P_signal / P_noise)` over the full signals of both channels.
pub fn snr_db(signal: &[Vec<f64>; 2], noise: &[Vec<f64>; 2]) -> f64 {
    10.0 * (stereo_power(signal) / stereo_power(noise)).log10()
}

/// Ranges the reference SNRs are drawn from, dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnrRanges {
    pub static_db: [f64; 2],
    pub diffuse_db: [f64; 2],
}

impl Default for SnrRanges {
    fn default() -> Self {
        SnrRanges {
            static_db: [70.0, 90.0],
            diffuse_db: [30.0, 60.0],
        }
    }
}

impl SnrRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("static", self.static_db), ("diffuse", self.diffuse_db)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::Config(format!("invalid {name} SNR range {r:?}")));
            }
        }
        Ok(())
    }
}

/// Noise levels of one room, fixed for all its positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseGains {
    /// Linear gain per channel applied to unit-variance sensor noise.
    pub static_gain: [f64; 2],
    /// Linear gain applied to the babble component.
    pub diffuse_gain: f64,
    pub snr_static_db: f64,
    pub snr_diffuse_db: f64,
}

fn draw(rng: &mut (impl Rng + ?Sized), r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Draws reference SNRs and scales the noises so that the reference wet
/// speech reaches them. Static gain is set per channel against that
/// channel's speech power.
pub fn calibrate_noise_gains<R: Rng + ?Sized>(
    reference_wet: &[Vec<f64>; 2],
    static_unit: &[Vec<f64>; 2],
    diffuse_unit: &[Vec<f64>; 2],
    ranges: &SnrRanges,
    rng: &mut R,
) -> Result<NoiseGains> {
    ranges.validate()?;
    let snr_static_db = draw(rng, ranges.static_db);
    let snr_diffuse_db = draw(rng, ranges.diffuse_db);
    let p_speech = reference_wet.each_ref().map(|c| power(c));
    if p_speech.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(domain("reference speech has no energy"));
    }
    let mut static_gain = [0.0; 2];
    for ch in 0..2 {
        let pn = power(&static_unit[ch]);
        if !(pn > 0.0) {
            return Err(domain("static noise has no energy"));
        }
        static_gain[ch] = (p_speech[ch] / pn / 10f64.powf(snr_static_db / 10.0)).sqrt();
    }
    let pd = stereo_power(diffuse_unit);
    if !(pd > 0.0 && pd.is_finite()) {
        return Err(domain("diffuse noise has no energy"));
    }
    let diffuse_gain = ((p_speech[0] + p_speech[1]) / pd / 10f64.powf(snr_diffuse_db / 10.0)).sqrt();
    Ok(NoiseGains {
        static_gain,
        diffuse_gain,
        snr_static_db,
        snr_diffuse_db,
    })
}

/// Wet speech plus both scaled noise components, kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponents {
    pub wet: [Vec<f64>; 2],
    pub static_noise: [Vec<f64>; 2],
    pub diffuse: [Vec<f64>; 2],
}

impl MixtureComponents {
    /// Applies `gains` to unit-level noises.
    pub fn new(wet: [Vec<f64>; 2], static_unit: [Vec<f64>; 2], diffuse_unit: [Vec<f64>; 2], gains: &NoiseGains) -> Result<Self> {
        let n = wet[0].len();
        if [&wet[1], &static_unit[0], &static_unit[1], &diffuse_unit[0], &diffuse_unit[1]]
            .iter()
            .any(|c| c.len() != n)
        {
            return Err(Error::Shape("mixture components differ in length".into()));
        }
        let mut static_noise = static_unit;
        for (ch, c) in static_noise.iter_mut().enumerate() {
            c.iter_mut().for_each(|v| *v *= gains.static_gain[ch]);
        }
        let diffuse = diffuse_unit.map(|c| c.into_iter().map(|v| v * gains.diffuse_gain).collect());
        Ok(MixtureComponents { wet, static_noise, diffuse })
    }

    pub fn mixture(&self) -> [Vec<f64>; 2] {
        std::array::from_fn(|ch| {
            (0..self.wet[ch].len())
                .map(|i| self.wet[ch][i] + self.static_noise[ch][i] + self.diffuse[ch][i])
                .collect()
        })
    }

    pub fn noise(&self) -> [Vec<f64>; 2] {
        std::array::from_fn(|ch| {
            self.static_noise[ch].iter().zip(&self.diffuse[ch]).map(|(a, b)| a + b).collect()
        })
    }

    pub fn snr_static_db(&self) -> f64 {
        snr_db(&self.wet, &self.static_noise)
    }

    pub fn snr_diffuse_db(&self) -> f64 {
        snr_db(&self.wet, &self.diffuse)
    }

    /// Speech against the sum of both noises.
    pub fn snr_db(&self) -> f64 {
        snr_db(&self.wet, &self.noise())
    }
}
