//! Signal-processing building blocks shared by the simulator, the analysis
//! code and the dataset pipeline.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{domain, Error, Result};
use crate::geometry::OCTAVE_BANDS;

/// Second-order IIR section, transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator without the leading 1.
    pub a: [f64; 2],
}

impl Biquad {
    pub fn process(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn process(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.process(x);
        }
    }

    /// Forward-backward filtering: zero phase, squared magnitude response.
    pub fn filtfilt(&self, x: &mut [f64]) {
        self.process(x);
        x.reverse();
        self.process(x);
        x.reverse();
    }

    /// Complex response at `freq` Hz for sample rate `fs`.
    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let omega = 2.0 * PI * freq / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }
}

/// Band edges `(centre/√2, centre·√2)` of an octave band.
pub fn octave_edges(center: f64) -> (f64, f64) {
    (center / 2f64.sqrt(), center * 2f64.sqrt())
}

/// Digital Butterworth band-pass from a second-order low-pass prototype
/// (fourth order overall), bilinear transform with pre-warped edges and unit
/// gain at the geometric centre.
pub fn butterworth_bandpass(low: f64, high: f64, fs: f64) -> Result<SosFilter> {
    let nyquist = fs / 2.0;
    if !(low > 0.0 && low < high) {
        return Err(domain(format!("invalid band edges {low}..{high} Hz")));
    }
    if high >= nyquist {
        return Err(domain(format!(
            "upper band edge {high:.1} Hz is not below the Nyquist frequency {nyquist} Hz"
        )));
    }
    let k = 2.0 * fs;
    let wl = k * (PI * low / fs).tan();
    let wh = k * (PI * high / fs).tan();
    let bw = wh - wl;
    let w0sq = wl * wh;

    let order = 2;
    let mut sections = Vec::new();
    for i in 0..order / 2 {
        // Prototype pole in the upper half plane; its conjugate is implied.
        let theta = PI * (2.0 * i as f64 + order as f64 + 1.0) / (2.0 * order as f64);
        let p = Complex64::from_polar(1.0, theta);
        // Low-pass to band-pass: roots of s² − p·bw·s + w0² = 0.
        let half = p * bw / 2.0;
        let disc = (half * half - w0sq).sqrt();
        for s in [half + disc, half - disc] {
            // Each analogue pole (with its conjugate) becomes one biquad with
            // zeros at z = ±1.
            let z = (k + s) / (k - s);
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-2.0 * z.re, z.norm_sqr()],
            });
        }
    }
    let mut filter = SosFilter { sections };
    let center = (low * high).sqrt();
    let gain = filter.response(center, fs).norm();
    let per_section = gain.powf(-1.0 / filter.sections.len() as f64);
    for s in &mut filter.sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    Ok(filter)
}

/// Octave band-pass filter for one of the six analysis bands.
pub fn octave_bandpass(center: f64, fs: f64) -> Result<SosFilter> {
    if !OCTAVE_BANDS.contains(&center) {
        return Err(domain(format!("{center} Hz is not an octave band centre")));
    }
    let (lo, hi) = octave_edges(center);
    butterworth_bandpass(lo, hi, fs)
}

/// Full linear convolution through the FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        return direct_convolve(a, b);
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // Pack both real inputs into one complex transform.
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect();
    fwd.process(&mut buf);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = buf[k];
        let zn = buf[(n - k) % n].conj();
        let fa = (zk + zn) * 0.5;
        let fb = (zk - zn) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod[..out_len].iter().map(|c| c.re * scale).collect()
}

/// O(N·M) convolution.
pub fn direct_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman-windowed sinc low-pass with `taps` coefficients (odd) and cutoff
/// `cutoff` Hz, unit DC gain.
pub fn windowed_sinc_lowpass(taps: usize, cutoff: f64, fs: f64) -> Vec<f64> {
    assert!(taps % 2 == 1, "tap count must be odd");
    let m = (taps - 1) as f64;
    let fc = cutoff / fs;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let n = i as f64 - m / 2.0;
            let w = 0.42 - 0.5 * (2.0 * PI * i as f64 / m).cos() + 0.08 * (4.0 * PI * i as f64 / m).cos();
            2.0 * fc * sinc(2.0 * fc * n) * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

pub const RESAMPLE_TAPS: usize = 193;
pub const RESAMPLE_CUTOFF_HZ: f64 = 7200.0;

/// 48 kHz → 16 kHz: zero-delay anti-alias low-pass then keep every third
/// sample. Output length is `ceil(N / 3)`.
pub fn resample_48k_to_16k(signal: &[f64], fs: u32) -> Result<Vec<f64>> {
    if fs != 48_000 {
        return Err(domain(format!("expected a 48 kHz signal, got {fs} Hz")));
    }
    let h = windowed_sinc_lowpass(RESAMPLE_TAPS, RESAMPLE_CUTOFF_HZ, 48_000.0);
    let half = (RESAMPLE_TAPS / 2) as isize;
    let n = signal.len();
    let out_len = n.div_ceil(3);
    let out = (0..out_len)
        .map(|j| {
            let centre = (3 * j) as isize;
            let mut acc = 0.0;
            for (k, &c) in h.iter().enumerate() {
                let idx = centre + half - k as isize;
                if idx >= 0 && (idx as usize) < n {
                    acc += c * signal[idx as usize];
                }
            }
            acc
        })
        .collect();
    Ok(out)
}

pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided Welch power spectral density (Hann, 50 % overlap), averaged over
/// segments of all `signals`. Returns `nfft/2 + 1` values.
pub fn welch_psd<'a>(signals: impl IntoIterator<Item = &'a [f64]>, nfft: usize) -> Result<Vec<f64>> {
    let window = hann_periodic(nfft);
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let hop = nfft / 2;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut acc = vec![0.0; nfft / 2 + 1];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for s in signals {
        let mut start = 0;
        while start + nfft <= s.len() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(s[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            segments += 1;
            start += hop;
        }
    }
    if segments == 0 {
        return Err(Error::Data("no complete segment for spectrum estimate".into()));
    }
    let norm = 1.0 / (segments as f64 * wpow);
    Ok(acc.into_iter().map(|v| v * norm).collect())
}

/// Levinson-Durbin recursion. Returns `a[1..=order]` of
/// `A(z) = 1 + Σ a_k z^{-k}` and the final prediction-error power.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if r.len() <= order || r[0] <= 0.0 {
        return Err(Error::Data("degenerate autocorrelation".into()));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return Err(Error::Data("unstable autoregressive fit".into()));
        }
    }
    Ok((a[1..].to_vec(), err))
}

/// Autocorrelation lags `0..=max_lag` of a one-sided power spectrum.
pub fn autocorrelation_from_psd(psd: &[f64], max_lag: usize) -> Vec<f64> {
    let nfft = 2 * (psd.len() - 1);
    (0..=max_lag)
        .map(|lag| {
            let mut acc = psd[0] + psd[psd.len() - 1] * if lag % 2 == 0 { 1.0 } else { -1.0 };
            for (k, p) in psd.iter().enumerate().take(psd.len() - 1).skip(1) {
                acc += 2.0 * p * (2.0 * PI * (k * lag) as f64 / nfft as f64).cos();
            }
            acc / nfft as f64
        })
        .collect()
}

/// All-pole filter `1 / A(z)` with `a = a[1..]`.
pub fn all_pole_filter(a: &[f64], x: &mut [f64]) {
    let mut hist = vec![0.0; a.len()];
    for v in x.iter_mut() {
        let y = *v - a.iter().zip(&hist).map(|(c, h)| c * h).sum::<f64>();
        hist.rotate_right(1);
        if !hist.is_empty() {
            hist[0] = y;
        }
        *v = y;
    }
}

pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Amplitude of a sinusoid at `freq` Hz in `x` by projection on sin/cos.
pub fn tone_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * i as f64 / fs;
        c += v * ph.cos();
        s += v * ph.sin();
    }
    2.0 * (c * c + s * s).sqrt() / x.len() as f64
}
