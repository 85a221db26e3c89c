//! Octave-band Schroeder analysis and RT60 annotation.

use serde::{Deserialize, Serialize};

use crate::dsp::octave_bandpass;
use crate::error::{domain, Error, Result};
use crate::geometry::{N_BANDS, OCTAVE_BANDS};
use crate::sim::Rir;

/// Lowest level reported by decay curves.
pub const DB_FLOOR: f64 = -120.0;
/// Regression range of the RT60 fit, dB.
pub const FIT_START_DB: f64 = -5.0;
pub const FIT_END_DB: f64 = -25.0;

/// Zero-phase octave band-pass of `signal` around `band_center`.
pub fn octave_filter(signal: &[f64], band_center: f64, fs: f64) -> Result<Vec<f64>> {
    let filter = octave_bandpass(band_center, fs)?;
    let mut out = signal.to_vec();
    filter.filtfilt(&mut out);
    Ok(out)
}

/// Energy decay curve in dB relative to the total energy.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub levels_db: Vec<f64>,
}

/// Backward-integrated energy of a squared response.
pub fn schroeder_from_energy(energy: &[f64], fs: f64) -> Result<DecayCurve> {
    let total: f64 = energy.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(domain("decay curve of a zero-energy response"));
    }
    let mut levels_db = vec![0.0; energy.len()];
    let mut tail = 0.0;
    for i in (0..energy.len()).rev() {
        tail += energy[i];
        levels_db[i] = (10.0 * (tail / total).log10()).max(DB_FLOOR);
    }
    // Summation order leaves the first point within rounding of 0 dB.
    if let Some(first) = levels_db.first_mut() {
        *first = 0.0;
    }
    let times = (0..energy.len()).map(|i| i as f64 / fs).collect();
    Ok(DecayCurve { times, levels_db })
}

/// Schroeder curve `10 log10(Σ_{τ≥t} h² / Σ h²)`.
pub fn schroeder_curve(band_rir: &[f64], fs: f64) -> Result<DecayCurve> {
    let energy: Vec<f64> = band_rir.iter().map(|v| v * v).collect();
    schroeder_from_energy(&energy, fs)
}

/// Least-squares slope over the −5…−25 dB part of the curve; RT60 = −60 / slope.
pub fn rt60_from_curve(curve: &DecayCurve) -> Result<f64> {
    let reaches = curve.levels_db.iter().any(|l| *l <= FIT_END_DB);
    if !reaches {
        return Err(Error::InsufficientDecay("curve never reaches -25 dB".into()));
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, l) in curve.times.iter().zip(&curve.levels_db) {
        if *l <= FIT_START_DB && *l >= FIT_END_DB {
            n += 1.0;
            sx += t;
            sy += l;
            sxx += t * t;
            sxy += t * l;
        }
    }
    if n < 2.0 {
        return Err(Error::InsufficientDecay("fewer than two points in the fit range".into()));
    }
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::InsufficientDecay("degenerate fit range".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay(format!("non-decaying slope {slope} dB/s")));
    }
    Ok(-60.0 / slope)
}

/// Per-band RT60 with validity flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRt60 {
    pub values: [f64; N_BANDS],
    pub valid: [bool; N_BANDS],
}

impl BandRt60 {
    pub fn as_options(&self) -> [Option<f64>; N_BANDS] {
        std::array::from_fn(|b| self.valid[b].then_some(self.values[b]))
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// RT60 of one channel in one band.
pub fn band_rt60(signal: &[f64], band: usize, fs: f64) -> Result<f64> {
    let filtered = octave_filter(signal, OCTAVE_BANDS[band], fs)?;
    rt60_from_curve(&schroeder_curve(&filtered, fs)?)
}

/// Channel-averaged RT60 per band of one response. Bands where neither
/// channel yields a fit are `None`.
pub fn position_rt60(rir: &Rir) -> [Option<f64>; N_BANDS] {
    let fs = rir.fs as f64;
    std::array::from_fn(|b| {
        let vals: Vec<f64> = rir
            .channels
            .iter()
            .filter_map(|ch| band_rt60(ch, b, fs).ok())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    })
}

/// Median over positions of the per-position values.
pub fn aggregate_rt60(per_position: &[[Option<f64>; N_BANDS]]) -> BandRt60 {
    let mut out = BandRt60 {
        values: [0.0; N_BANDS],
        valid: [false; N_BANDS],
    };
    for b in 0..N_BANDS {
        let vals: Vec<f64> = per_position.iter().filter_map(|p| p[b]).collect();
        if let Some(m) = median(&vals) {
            out.values[b] = m;
            out.valid[b] = true;
        }
    }
    out
}

/// Room-level RT60: per band, channel-averaged RT60 of every position, then
/// the median across positions.
pub fn room_rt60(rirs: &[Rir]) -> Result<BandRt60> {
    if rirs.is_empty() {
        return Err(Error::Data("no responses to analyse".into()));
    }
    let per_position: Vec<_> = rirs.iter().map(position_rt60).collect();
    Ok(aggregate_rt60(&per_position))
}
