use std::f64::consts::PI;

use crate::dsp::sinc;
use crate::error::{Error, Result};
use crate::geometry::{distance, Point3, RoomSpec, N_BANDS};
use crate::sim::images::ImageSource;

/// Taps of the Hann-windowed sinc fractional-delay kernel.
pub const FRACTIONAL_DELAY_TAPS: usize = 32;

/// Adds `amplitude` at fractional sample position `delay` into each band
/// buffer scaled by `band_gain`.
pub(crate) fn add_fractional_impulse(bands: &mut [Vec<f64>], delay: f64, band_gain: &[f64; N_BANDS], amplitude: f64) {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as i64;
    let base = delay.floor() as i64;
    let len = bands[0].len() as i64;
    for n in base - half + 1..=base + half {
        if n < 0 || n >= len {
            continue;
        }
        let t = n as f64 - delay;
        if t.abs() >= half as f64 {
            continue;
        }
        let w = 0.5 * (1.0 + (PI * t / half as f64).cos());
        let k = sinc(t) * w * amplitude;
        if k == 0.0 {
            continue;
        }
        for (buf, g) in bands.iter_mut().zip(band_gain) {
            buf[n as usize] += k * g;
        }
    }
}

/// Delay in samples for a path of length `dist`.
pub fn delay_samples(dist: f64, speed_of_sound: f64, fs: f64) -> f64 {
    dist / speed_of_sound * fs
}

/// Per-band specular impulse trains of `len` samples at `mic`. Each image
/// contributes `gain / (4π d)` at delay `d / c`.
pub fn specular_rir(
    room: &RoomSpec,
    images: &[ImageSource],
    mic: &Point3,
    speed_of_sound: f64,
    fs: f64,
    len: usize,
) -> Result<[Vec<f64>; N_BANDS]> {
    if images.is_empty() {
        return Err(Error::Domain("empty image list".into()));
    }
    if !room.contains(mic) {
        return Err(Error::Geometry(format!("microphone {mic:?} is outside the room")));
    }
    let mut bands: [Vec<f64>; N_BANDS] = std::array::from_fn(|_| vec![0.0; len]);
    for img in images {
        if img.gain.iter().all(|g| *g == 0.0) {
            continue;
        }
        let d = distance(&img.position, mic).max(1e-3);
        let delay = delay_samples(d, speed_of_sound, fs);
        add_fractional_impulse(&mut bands, delay, &img.gain, 1.0 / (4.0 * PI * d));
    }
    Ok(bands)
}
