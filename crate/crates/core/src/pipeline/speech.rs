//! Speech sources: a directory of WAV recordings or a synthetic stand-in.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{all_pole_filter, fft_convolve, power, resample_48k_to_16k};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::sim::Rir;

use super::{Split, MIX_FS, MIX_LEN};

/// Mono speech excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechClip {
    pub samples: Vec<f64>,
    pub fs: u32,
    pub id: String,
    pub speaker: String,
}

impl SpeechClip {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs as f64
    }

    /// Same clip at 16 kHz.
    pub fn to_16k(&self) -> Result<SpeechClip> {
        let samples = match self.fs {
            MIX_FS => self.samples.clone(),
            48_000 => resample_48k_to_16k(&self.samples, 48_000)?,
            other => return Err(Error::Data(format!("unsupported speech sample rate {other} Hz"))),
        };
        Ok(SpeechClip {
            samples,
            fs: MIX_FS,
            ..self.clone()
        })
    }

    /// Scales to unit RMS; silent clips are rejected.
    pub fn normalized(mut self) -> Result<SpeechClip> {
        let p = power(&self.samples);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Data(format!("clip {} is silent", self.id)));
        }
        let g = 1.0 / p.sqrt();
        self.samples.iter_mut().for_each(|v| *v *= g);
        Ok(self)
    }
}

/// Second-order resonator polynomial `1 − 2r cos θ z⁻¹ + r² z⁻²`.
fn resonator(freq: f64, bandwidth: f64, fs: f64) -> [f64; 2] {
    let r = (-PI * bandwidth / fs).exp();
    let theta = 2.0 * PI * freq / fs;
    [-2.0 * r * theta.cos(), r * r]
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Synthetic speech: noise shaped by three formant resonators and a spectral
/// tilt, amplitude-modulated by a 4 Hz syllabic envelope with random pauses.
pub fn synthetic_clip<R: Rng + ?Sized>(rng: &mut R, id: String, seconds: f64) -> SpeechClip {
    let fs = MIX_FS as f64;
    let n = (seconds * fs).round() as usize;
    let formants = [
        (rng.random_range(300.0..800.0), rng.random_range(60.0..120.0)),
        (rng.random_range(900.0..2200.0), rng.random_range(80.0..160.0)),
        (rng.random_range(2400.0..3400.0), rng.random_range(120.0..220.0)),
    ];
    let mut poly = vec![1.0, -rng.random_range(0.6..0.9)];
    for (f, bw) in formants {
        let [a1, a2] = resonator(f, bw, fs);
        poly = poly_mul(&poly, &[1.0, a1, a2]);
    }
    let warmup = 256;
    let mut x: Vec<f64> = (0..n + warmup).map(|_| StandardNormal.sample(rng)).collect();
    all_pole_filter(&poly[1..], &mut x);
    let mut x = x.split_off(warmup);

    let rate = 4.0;
    let phase = rng.random_range(0.0..1.0);
    let n_syll = (seconds * rate).ceil() as usize + 2;
    let mut amps: Vec<f64> = (0..n_syll)
        .map(|_| if rng.random_bool(0.8) { rng.random_range(0.4..1.0) } else { 0.0 })
        .collect();
    if amps.iter().all(|a| *a == 0.0) {
        amps[1] = 1.0;
    }
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / fs * rate + phase;
        let syl = t.floor() as usize;
        let env = 0.5 - 0.5 * (2.0 * PI * t).cos();
        *v *= amps[syl] * env * env;
    }
    SpeechClip {
        samples: x,
        fs: MIX_FS,
        speaker: format!("synthetic-{}", formants[0].0 as u32),
        id,
    }
}

/// Where speech comes from.
#[derive(Debug, Clone)]
pub enum SpeechSource {
    Synthetic { seed: u64 },
    Corpus(CorpusPools),
}

/// WAV files of a corpus partitioned into disjoint train/validation/test pools.
#[derive(Debug, Clone)]
pub struct CorpusPools {
    pub seed: u64,
    pub pools: [Vec<PathBuf>; 3],
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

impl CorpusPools {
    /// Lists the corpus and splits its files 80/10/10.
    pub fn open(dir: &Path, seed: u64) -> Result<CorpusPools> {
        let mut files = Vec::new();
        collect_wavs(dir, &mut files).map_err(|e| Error::Data(format!("corpus {}: {e}", dir.display())))?;
        files.sort();
        if files.len() < 3 {
            return Err(Error::Data(format!(
                "corpus {} holds {} WAV files, at least 3 are needed",
                dir.display(),
                files.len()
            )));
        }
        files.shuffle(&mut stream(seed, Purpose::Split, &[1]));
        let n = files.len();
        let n_val = ((n as f64 * 0.1).round() as usize).max(1);
        let n_test = n_val;
        let n_train = n - n_val - n_test;
        let test = files.split_off(n_train + n_val);
        let val = files.split_off(n_train);
        Ok(CorpusPools {
            seed,
            pools: [files, val, test],
        })
    }
}

impl SpeechSource {
    /// Clip `k` of room `room`, drawn from the pool of `split`. Clips are
    /// unit-RMS, 16 kHz and exactly three seconds long.
    pub fn clip(&self, split: Split, room: u64, k: u64) -> Result<SpeechClip> {
        match self {
            SpeechSource::Synthetic { seed } => {
                let mut rng = stream(*seed, Purpose::Speech, &[room, k]);
                synthetic_clip(&mut rng, format!("syn-{room:06}-{k}"), MIX_LEN as f64 / MIX_FS as f64).normalized()
            }
            SpeechSource::Corpus(c) => {
                let pool = &c.pools[split.index()];
                if pool.is_empty() {
                    return Err(Error::Data(format!("no speech files for the {split:?} split")));
                }
                let mut rng = stream(c.seed, Purpose::Speech, &[room, k]);
                let path = &pool[rng.random_range(0..pool.len())];
                let clip = load_clip(path)?;
                let start = rng.random_range(0..=clip.samples.len() - MIX_LEN);
                SpeechClip {
                    samples: clip.samples[start..start + MIX_LEN].to_vec(),
                    ..clip
                }
                .normalized()
            }
        }
    }

    /// Clips used to fit the long-term speech spectrum.
    pub fn spectrum_clips(&self, count: usize) -> Result<Vec<SpeechClip>> {
        match self {
            SpeechSource::Synthetic { seed } => (0..count as u64)
                .map(|k| {
                    let mut rng = stream(*seed, Purpose::SpectrumFit, &[k]);
                    synthetic_clip(&mut rng, format!("fit-{k}"), 3.0).normalized()
                })
                .collect(),
            SpeechSource::Corpus(c) => c.pools[0].iter().take(count).map(|p| load_clip(p)).collect(),
        }
    }
}

/// Loads the first channel of a WAV file at 16 kHz; it must last ≥ 3 s.
pub fn load_clip(path: &Path) -> Result<SpeechClip> {
    let (fs, channels) = crate::io::read_wav(path)?;
    let samples = channels.into_iter().next().unwrap_or_default();
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let speaker = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clip = SpeechClip { samples, fs, id, speaker }.to_16k()?;
    if clip.samples.len() < MIX_LEN {
        return Err(Error::Data(format!("{} is shorter than 3 s", path.display())));
    }
    Ok(clip)
}

/// Per-channel convolution of the clip with a 16 kHz response, cut to 3 s.
pub fn wet_speech(rir: &Rir, clip: &SpeechClip) -> Result<[Vec<f64>; 2]> {
    if rir.fs != MIX_FS || clip.fs != MIX_FS {
        return Err(Error::Data("wet speech needs 16 kHz clip and response".into()));
    }
    if clip.samples.len() < MIX_LEN {
        return Err(Error::Data(format!(
            "clip {} lasts {:.2} s, 3 s are required",
            clip.id,
            clip.duration()
        )));
    }
    Ok(rir.channels.clone().map(|h| {
        let mut y = fft_convolve(&clip.samples, &h);
        y.truncate(MIX_LEN);
        y
    }))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dsp::direct_convolve;
    use crate::sim::{ArrayGeometry, RirMeta};

    pub(crate) fn rir_from(h: Vec<f64>) -> Rir {
        Rir {
            fs: MIX_FS,
            channels: [h.clone(), h],
            meta: RirMeta {
                room_id: 0,
                position: Some(0),
                array: ArrayGeometry { center: [1.0; 3], azimuth: 0.0, source: [2.0, 1.0, 1.0] },
                mics: [[1.0; 3], [1.0; 3]],
                speed_of_sound: 343.0,
            },
        }
    }

    fn clip() -> SpeechClip {
        synthetic_clip(&mut stream(1, Purpose::Speech, &[]), "c".into(), 3.0)
    }

    #[test]
    fn synthetic_clip_shape() {
        let c = clip().normalized().unwrap();
        assert_eq!(c.samples.len(), MIX_LEN);
        assert!((power(&c.samples) - 1.0).abs() < 1e-12);
        assert!(c.samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn unit_impulse_is_identity() {
        let c = clip();
        let y = wet_speech(&rir_from(vec![1.0]), &c).unwrap();
        assert_eq!(y[0], c.samples);
    }

    #[test]
    fn delayed_impulse_shifts() {
        let c = clip();
        let mut h = vec![0.0; 40];
        h[37] = 1.0;
        let y = wet_speech(&rir_from(h), &c).unwrap();
        let scale = c.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..MIX_LEN {
            let expected = if i >= 37 { c.samples[i - 37] } else { 0.0 };
            assert!((y[1][i] - expected).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let c = clip();
        let mut rng = stream(2, Purpose::Noise, &[]);
        let h: Vec<f64> = (0..3000).map(|i| rng.random_range(-1.0..1.0) * (-(i as f64) / 500.0).exp()).collect();
        let y = wet_speech(&rir_from(h.clone()), &c).unwrap();
        let slow = direct_convolve(&c.samples, &h);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in y[0].iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn short_clip_is_rejected() {
        let mut c = clip();
        c.samples.truncate(MIX_LEN - 1);
        assert!(wet_speech(&rir_from(vec![1.0]), &c).is_err());
    }

    #[test]
    fn corpus_pools_are_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        for s in 0..4 {
            for f in 0..5 {
                let c = synthetic_clip(&mut stream(s, Purpose::Speech, &[f]), String::new(), 3.5);
                let p = dir.path().join(format!("spk{s}")).join(format!("utt{f}.wav"));
                crate::io::write_wav(&p, MIX_FS, &[&c.samples]).unwrap();
            }
        }
        let pools = CorpusPools::open(dir.path(), 3).unwrap();
        let total: usize = pools.pools.iter().map(Vec::len).sum();
        assert_eq!(total, 20);
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(pools.pools[a].iter().all(|p| !pools.pools[b].contains(p)));
            }
        }
        let src = SpeechSource::Corpus(pools);
        let c = src.clip(Split::Val, 4, 1).unwrap();
        assert_eq!(c.samples.len(), MIX_LEN);
        assert!(CorpusPools::open(&dir.path().join("missing"), 0).is_err());
    }
}
