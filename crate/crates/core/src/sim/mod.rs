//! Hybrid shoebox simulator: image sources for the specular part, diffuse rain
//! for scattered energy, both rendered per octave band and summed.

pub mod diffuse;
pub mod images;
pub mod specular;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::octave_bandpass;
use crate::error::{Error, Result};
use crate::geometry::{distance, sabine_rt60_bands, Point3, RoomSpec, N_BANDS, OCTAVE_BANDS};

pub use diffuse::{diffuse_rain, EnergyHistogram, RainConfig};
pub use images::{enumerate_images, ImageSource};
pub use specular::specular_rir;

/// Spacing of the two microphones, metres.
pub const APERTURE: f64 = 0.225;
/// Minimum distance between any point and a surface, and between source and microphones.
pub const MIN_CLEARANCE: f64 = 0.30;
/// Distance of the calibration source in front of the receiver.
pub const REFERENCE_DISTANCE: f64 = 1.0;

/// Two-microphone receiver parallel to the floor plus one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub center: Point3,
    /// Facing direction in the horizontal plane, radians. The microphone axis
    /// is perpendicular to it.
    pub azimuth: f64,
    pub source: Point3,
}

impl ArrayGeometry {
    /// Horizontal unit vector the array faces (its broadside).
    pub fn facing(&self) -> Point3 {
        [self.azimuth.cos(), self.azimuth.sin(), 0.0]
    }

    /// `[left, right]` microphone positions; the left one is channel 1.
    pub fn mics(&self) -> [Point3; 2] {
        let half = APERTURE / 2.0;
        let left = [-self.azimuth.sin(), self.azimuth.cos(), 0.0];
        let c = self.center;
        [
            [c[0] + half * left[0], c[1] + half * left[1], c[2]],
            [c[0] - half * left[0], c[1] - half * left[1], c[2]],
        ]
    }

    pub fn source_distance(&self) -> f64 {
        distance(&self.source, &self.center)
    }

    pub fn validate(&self, room: &RoomSpec) -> Result<()> {
        let mics = self.mics();
        for (name, p) in [("source", &self.source), ("array centre", &self.center), ("left mic", &mics[0]), ("right mic", &mics[1])] {
            if room.clearance(p) < MIN_CLEARANCE - 1e-9 {
                return Err(Error::Geometry(format!(
                    "{name} at {p:?} is closer than {MIN_CLEARANCE} m to a surface"
                )));
            }
        }
        for m in &mics {
            if distance(m, &self.source) < MIN_CLEARANCE - 1e-9 {
                return Err(Error::Geometry("source closer than 0.3 m to a microphone".into()));
            }
        }
        Ok(())
    }
}

fn uniform_point<R: Rng + ?Sized>(room: &RoomSpec, rng: &mut R) -> Point3 {
    std::array::from_fn(|a| rng.random_range(MIN_CLEARANCE..room.dims[a] - MIN_CLEARANCE))
}

/// Draws a receiver and a source uniformly at random under the clearance
/// constraints.
pub fn sample_array<R: Rng + ?Sized>(room: &RoomSpec, rng: &mut R) -> Result<ArrayGeometry> {
    for _ in 0..10_000 {
        let g = ArrayGeometry {
            center: uniform_point(room, rng),
            azimuth: rng.random_range(0.0..2.0 * PI),
            source: uniform_point(room, rng),
        };
        if g.validate(room).is_ok() {
            return Ok(g);
        }
    }
    Err(Error::Geometry("could not place source and receiver".into()))
}

/// Draws a receiver with the calibration source one metre in front of it,
/// at microphone height.
pub fn sample_reference_array<R: Rng + ?Sized>(room: &RoomSpec, rng: &mut R) -> Result<ArrayGeometry> {
    for _ in 0..10_000 {
        let center = uniform_point(room, rng);
        let azimuth: f64 = rng.random_range(0.0..2.0 * PI);
        let source = [
            center[0] + REFERENCE_DISTANCE * azimuth.cos(),
            center[1] + REFERENCE_DISTANCE * azimuth.sin(),
            center[2],
        ];
        let g = ArrayGeometry { center, azimuth, source };
        if g.validate(room).is_ok() {
            return Ok(g);
        }
    }
    Err(Error::Geometry("could not place the reference source".into()))
}

/// Two-channel room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub fs: u32,
    pub channels: [Vec<f64>; 2],
    pub meta: RirMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirMeta {
    pub room_id: u64,
    /// Position index within the room; `None` for the calibration reference.
    pub position: Option<usize>,
    pub array: ArrayGeometry,
    pub mics: [Point3; 2],
    pub speed_of_sound: f64,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    /// Direct-path arrival of each channel, in samples.
    pub fn direct_delay(&self) -> [f64; 2] {
        self.meta
            .mics
            .map(|m| distance(&m, &self.meta.array.source) / self.meta.speed_of_sound * self.fs as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().flatten().all(|v| v.is_finite())
    }

    /// Same response at 16 kHz.
    pub fn to_16k(&self) -> Result<Rir> {
        if self.fs == 16_000 {
            return Ok(self.clone());
        }
        let channels = [
            crate::dsp::resample_48k_to_16k(&self.channels[0], self.fs)?,
            crate::dsp::resample_48k_to_16k(&self.channels[1], self.fs)?,
        ];
        Ok(Rir {
            fs: 16_000,
            channels,
            meta: self.meta.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub fs: u32,
    pub speed_of_sound: f64,
    pub max_order: i64,
    pub n_rays: usize,
    /// Upper bound on the response length, seconds.
    pub max_length_s: f64,
    pub receiver_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            fs: 48_000,
            speed_of_sound: 343.0,
            max_order: 10,
            n_rays: 2000,
            max_length_s: 5.0,
            receiver_radius: 0.1,
        }
    }
}

impl SimConfig {
    /// Response length covering a 65 dB Sabine decay after the direct path,
    /// capped at `max_length_s`.
    pub fn response_length(&self, room: &RoomSpec, array: &ArrayGeometry) -> usize {
        let rt = sabine_rt60_bands(room)
            .map(|b| b.iter().cloned().fold(0.0, f64::max))
            .unwrap_or(self.max_length_s);
        let direct = array.source_distance() / self.speed_of_sound;
        let secs = (direct + 1.1 * rt * 65.0 / 60.0 + 0.05).min(self.max_length_s);
        (secs * self.fs as f64).ceil() as usize
    }
}

/// Simulates the two-channel response of `array` in `room`.
pub fn synthesize_rir<R: Rng + ?Sized>(
    room: &RoomSpec,
    array: &ArrayGeometry,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Rir> {
    room.validate()?;
    array.validate(room)?;
    let fs = cfg.fs as f64;
    let len = cfg.response_length(room, array);
    let mics = array.mics();
    let images = enumerate_images(room, &array.source, cfg.max_order)?;
    let rain = RainConfig {
        n_rays: cfg.n_rays,
        speed_of_sound: cfg.speed_of_sound,
        fs,
        n_bins: len,
        receiver_radius: cfg.receiver_radius,
        max_decay_db: 60.0,
    };
    let hist = diffuse_rain(room, &array.source, &mics, &rain, rng)?;
    let p2_scale = hist.pressure_squared_scale();
    let filters = OCTAVE_BANDS
        .iter()
        .map(|&fc| octave_bandpass(fc, fs))
        .collect::<Result<Vec<_>>>()?;

    let mut channels: [Vec<f64>; 2] = [vec![0.0; len], vec![0.0; len]];
    for (ch, mic) in mics.iter().enumerate() {
        let mut bands = specular_rir(room, &images, mic, cfg.speed_of_sound, fs, len)?;
        for (bin, energy) in hist.energy[ch].iter().enumerate() {
            if energy.iter().all(|e| *e == 0.0) {
                continue;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for (band, e) in bands.iter_mut().zip(energy) {
                band[bin] += sign * (e * p2_scale).sqrt();
            }
        }
        for (band, filter) in bands.iter_mut().zip(&filters) {
            filter.filtfilt(band);
            for (o, v) in channels[ch].iter_mut().zip(band.iter()) {
                *o += v;
            }
        }
    }
    let rir = Rir {
        fs: cfg.fs,
        channels,
        meta: RirMeta {
            room_id: room.id,
            position: None,
            array: array.clone(),
            mics,
            speed_of_sound: cfg.speed_of_sound,
        },
    };
    if !rir.is_finite() {
        return Err(Error::Data("simulation produced non-finite samples".into()));
    }
    debug_assert_eq!(N_BANDS, filters.len());
    Ok(rir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn fixed_array() -> ArrayGeometry {
        ArrayGeometry {
            center: [3.0, 2.0, 1.5],
            azimuth: 0.3,
            source: [1.2, 1.1, 1.4],
        }
    }

    #[test]
    fn mic_geometry() {
        let g = fixed_array();
        let [l, r] = g.mics();
        assert!((distance(&l, &r) - APERTURE).abs() < 1e-12);
        assert_eq!(l[2], r[2]);
        // Left of the facing direction: positive cross product z component.
        let f = g.facing();
        let v = [l[0] - g.center[0], l[1] - g.center[1]];
        assert!(f[0] * v[1] - f[1] * v[0] > 0.0);
    }

    #[test]
    fn sampled_positions_respect_clearance() {
        let room = RoomSpec::uniform([3.0, 3.0, 2.5], 0.3, 0.5);
        let mut rng = stream(1, Purpose::Positions, &[]);
        for _ in 0..200 {
            let g = sample_array(&room, &mut rng).unwrap();
            g.validate(&room).unwrap();
            let r = sample_reference_array(&room, &mut rng).unwrap();
            assert!((r.source_distance() - 1.0).abs() < 1e-12);
            assert_eq!(r.source[2], r.center[2]);
        }
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let room = RoomSpec::uniform([5.0, 4.0, 3.0], 0.3, 0.5);
        let mut g = fixed_array();
        g.source = [0.1, 1.0, 1.0];
        let mut rng = stream(1, Purpose::Diffuse, &[]);
        assert!(matches!(synthesize_rir(&room, &g, &SimConfig::default(), &mut rng), Err(Error::Geometry(_))));
    }

    #[test]
    fn anechoic_room_gives_single_impulse() {
        let room = RoomSpec::uniform([5.0, 4.0, 3.0], 1.0, 0.5);
        let g = fixed_array();
        let mut rng = stream(2, Purpose::Diffuse, &[]);
        let rir = synthesize_rir(&room, &g, &SimConfig::default(), &mut rng).unwrap();
        let delays = rir.direct_delay();
        for ch in 0..2 {
            let x = &rir.channels[ch];
            let peak = x.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
            assert!((peak as f64 - delays[ch]).abs() <= 1.0, "peak {peak} vs {}", delays[ch]);
            // Nearly all energy sits within a few ms of the direct path.
            let total: f64 = x.iter().map(|v| v * v).sum();
            let near: f64 = x
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as f64 - delays[ch]).abs() < 0.02 * 48_000.0)
                .map(|(_, v)| v * v)
                .sum();
            assert!(near / total > 0.999, "{}", near / total);
        }
    }

    #[test]
    fn direct_delay_difference_is_bounded_by_aperture() {
        let room = RoomSpec::uniform([6.0, 5.0, 3.0], 0.4, 0.5);
        let mut rng = stream(3, Purpose::Positions, &[]);
        for _ in 0..100 {
            let g = sample_array(&room, &mut rng).unwrap();
            let [l, r] = g.mics();
            let dt = (distance(&l, &g.source) - distance(&r, &g.source)).abs() / 343.0;
            assert!(dt <= APERTURE / 343.0 + 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_finite() {
        let room = RoomSpec::uniform([4.0, 3.5, 2.7], 0.35, 0.6);
        let cfg = SimConfig { n_rays: 300, ..SimConfig::default() };
        let a = synthesize_rir(&room, &fixed_array(), &cfg, &mut stream(9, Purpose::Diffuse, &[0])).unwrap();
        let b = synthesize_rir(&room, &fixed_array(), &cfg, &mut stream(9, Purpose::Diffuse, &[0])).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        assert!(a.len() <= (cfg.max_length_s * 48_000.0) as usize);
    }
}
