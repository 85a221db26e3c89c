//! STFT front-end, single-channel magnitude and inter-channel level/phase planes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::hann_periodic;
use crate::error::{shape, Error, Result};

/// 96 ms at 16 kHz.
pub const STFT_SIZE: usize = 1536;
pub const STFT_HOP: usize = 768;
pub const N_FREQ: usize = STFT_SIZE / 2 + 1;
/// Floor applied to magnitudes before taking logarithms.
pub const MAG_FLOOR: f64 = 1e-8;

/// Frames produced for `n` samples.
pub fn n_frames(n: usize) -> usize {
    1 + n / STFT_HOP
}

/// Dense row-major matrix: rows are frequency bins, columns frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Plane {
        Plane { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One-sided complex STFT, `data[f * n_frames + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub n_freq: usize,
    pub n_frames: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.data[f * self.n_frames + t]
    }

    pub fn scaled(&self, c: Complex64) -> Spectrogram {
        Spectrogram {
            data: self.data.iter().map(|v| v * c).collect(),
            ..*self
        }
    }

    fn check_same(&self, other: &Spectrogram) -> Result<()> {
        if self.n_freq != other.n_freq || self.n_frames != other.n_frames {
            return Err(shape(format!(
                "spectrogram shapes differ: {}x{} vs {}x{}",
                self.n_freq, self.n_frames, other.n_freq, other.n_frames
            )));
        }
        Ok(())
    }
}

/// Index into `0..n` after mirror reflection about the end samples.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Centred STFT with a periodic Hann window of 1536 samples and hop 768;
/// the signal is reflect-padded by half a window on both sides.
pub fn stft(signal: &[f64]) -> Result<Spectrogram> {
    if signal.is_empty() {
        return Err(Error::Domain("STFT of an empty signal".into()));
    }
    let window = hann_periodic(STFT_SIZE);
    let frames = n_frames(signal.len());
    let half = (STFT_SIZE / 2) as i64;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(STFT_SIZE);
    let mut data = vec![Complex64::new(0.0, 0.0); N_FREQ * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); STFT_SIZE];
    for t in 0..frames {
        let start = (t * STFT_HOP) as i64 - half;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(signal[reflect(start + i as i64, signal.len())] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..N_FREQ {
            data[f * frames + t] = buf[f];
        }
    }
    Ok(Spectrogram { n_freq: N_FREQ, n_frames: frames, data })
}

/// `|X₁|`.
pub fn sc_features(x1: &Spectrogram) -> Plane {
    Plane {
        rows: x1.n_freq,
        cols: x1.n_frames,
        data: x1.data.iter().map(|v| v.norm()).collect(),
    }
}

/// `ln|X₁| − ln|X₂|` with magnitudes floored at 1e-8.
pub fn ild(x1: &Spectrogram, x2: &Spectrogram) -> Result<Plane> {
    x1.check_same(x2)?;
    Ok(Plane {
        rows: x1.n_freq,
        cols: x1.n_frames,
        data: x1
            .data
            .iter()
            .zip(&x2.data)
            .map(|(a, b)| a.norm().max(MAG_FLOOR).ln() - b.norm().max(MAG_FLOOR).ln())
            .collect(),
    })
}

/// Real parts of `X₁X₂* / |X₁X₂*|` in rows `0..F`, imaginary parts in rows
/// `F..2F`; a zero cross-spectrum gives `(1, 0)`.
pub fn ipd(x1: &Spectrogram, x2: &Spectrogram) -> Result<Plane> {
    x1.check_same(x2)?;
    let (f, t) = (x1.n_freq, x1.n_frames);
    let mut out = Plane::zeros(2 * f, t);
    for (i, (a, b)) in x1.data.iter().zip(&x2.data).enumerate() {
        let c = a * b.conj();
        let m = c.norm();
        let u = if m > 0.0 { c / m } else { Complex64::new(1.0, 0.0) };
        out.data[i] = u.re;
        out.data[f * t + i] = u.im;
    }
    Ok(out)
}

/// Feature planes of one two-channel signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub sc: Plane,
    pub ild: Plane,
    pub ipd: Plane,
}

impl FeatureTensor {
    pub fn from_channels(left: &[f64], right: &[f64]) -> Result<FeatureTensor> {
        if left.len() != right.len() {
            return Err(shape("channels differ in length"));
        }
        let x1 = stft(left)?;
        let x2 = stft(right)?;
        Ok(FeatureTensor {
            sc: sc_features(&x1),
            ild: ild(&x1, &x2)?,
            ipd: ipd(&x1, &x2)?,
        })
    }

    pub fn n_freq(&self) -> usize {
        self.sc.rows
    }

    pub fn n_frames(&self) -> usize {
        self.sc.cols
    }

    /// Inter-channel input as three `F × T` planes: ILD, Re(IPD), Im(IPD).
    pub fn ic_planes(&self) -> [&[f64]; 3] {
        let n = self.sc.data.len();
        [&self.ild.data, &self.ipd.data[..n], &self.ipd.data[n..]]
    }
}

/// Features of many signals in parallel.
pub fn batch_features(signals: &[[Vec<f64>; 2]]) -> Result<Vec<FeatureTensor>> {
    signals
        .par_iter()
        .map(|s| FeatureTensor::from_channels(&s[0], &s[1]))
        .collect()
}

const CACHE_MAGIC: &[u8; 4] = b"RPFT";
const CACHE_VERSION: u32 = 1;
/// Plane identifiers in the cache file.
pub const PLANE_SC: u8 = 0;
pub const PLANE_ILD: u8 = 1;
pub const PLANE_IPD: u8 = 2;

/// Stores the planes as little-endian float32 with a small header:
/// magic, version, plane count, then per plane its id, rows, cols and data.
pub fn write_cache(path: &Path, features: &FeatureTensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&3u32.to_le_bytes())?;
    for (id, p) in [(PLANE_SC, &features.sc), (PLANE_ILD, &features.ild), (PLANE_IPD, &features.ipd)] {
        w.write_all(&[id])?;
        w.write_all(&(p.rows as u32).to_le_bytes())?;
        w.write_all(&(p.cols as u32).to_le_bytes())?;
        for v in &p.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_cache(path: &Path) -> Result<FeatureTensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Data(format!("{} is not a feature cache", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(Error::Data(format!("unsupported feature cache version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut planes: [Option<Plane>; 3] = [None, None, None];
    for _ in 0..count {
        let mut id = [0u8; 1];
        r.read_exact(&mut id)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let slot = planes
            .get_mut(id[0] as usize)
            .ok_or_else(|| Error::Data(format!("unknown plane id {}", id[0])))?;
        *slot = Some(Plane { rows, cols, data });
    }
    match planes {
        [Some(sc), Some(ild), Some(ipd)] if ild.rows == sc.rows && ipd.rows == 2 * sc.rows => {
            Ok(FeatureTensor { sc, ild, ipd })
        }
        _ => Err(Error::Data(format!("{} lacks planes or has inconsistent shapes", path.display()))),
    }
}
