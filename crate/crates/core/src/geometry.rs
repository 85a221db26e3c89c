//! Shoebox rooms: sampling, surface absorption, Sabine's law and the
//! 14-dimensional annotation vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Octave band centre frequencies in Hz.
pub const OCTAVE_BANDS: [f64; 6] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0];
pub const N_BANDS: usize = OCTAVE_BANDS.len();
pub const N_SURFACES: usize = 6;
/// Number of annotated room parameters.
pub const N_TARGETS: usize = 14;

/// Index of each quantity in the target vector
/// `[ᾱ(125) … ᾱ(4k), RT60(125) … RT60(4k), S, V]`.
pub const ABSORPTION_OFFSET: usize = 0;
pub const RT60_OFFSET: usize = 6;
pub const SURFACE_INDEX: usize = 12;
pub const VOLUME_INDEX: usize = 13;

pub type Point3 = [f64; 3];

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// The six room surfaces, in the order used by every absorption table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    /// Wall at x = 0.
    WallX0,
    /// Wall at x = length.
    WallX1,
    /// Wall at y = 0.
    WallY0,
    /// Wall at y = width.
    WallY1,
    Floor,
    Ceiling,
}

impl Surface {
    pub const ALL: [Surface; N_SURFACES] = [
        Surface::WallX0,
        Surface::WallX1,
        Surface::WallY0,
        Surface::WallY1,
        Surface::Floor,
        Surface::Ceiling,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Axis normal to the surface (0 = x, 1 = y, 2 = z).
    pub fn axis(self) -> usize {
        self.index() / 2
    }

    /// Surface at the far (positive) end of its axis.
    pub fn is_far(self) -> bool {
        self.index() % 2 == 1
    }

    pub fn from_axis(axis: usize, far: bool) -> Surface {
        Surface::ALL[axis * 2 + usize::from(far)]
    }
}

/// Shoebox room with per-surface, per-band absorption and one scattering
/// coefficient shared by all surfaces and bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: u64,
    /// `[length, width, height]` in metres.
    pub dims: [f64; 3],
    /// `alpha[surface][band]`, surfaces in [`Surface::ALL`] order.
    pub alpha: [[f64; N_BANDS]; N_SURFACES],
    pub scattering: f64,
    /// Seed of every downstream stream belonging to this room.
    pub seed: u64,
}

impl RoomSpec {
    pub fn length(&self) -> f64 {
        self.dims[0]
    }

    pub fn width(&self) -> f64 {
        self.dims[1]
    }

    pub fn height(&self) -> f64 {
        self.dims[2]
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn surface(&self) -> f64 {
        let [l, w, h] = self.dims;
        2.0 * (l * w + l * h + w * h)
    }

    pub fn surface_area(&self, surface: Surface) -> f64 {
        let [l, w, h] = self.dims;
        match surface.axis() {
            0 => w * h,
            1 => l * h,
            _ => l * w,
        }
    }

    pub fn surface_areas(&self) -> [f64; N_SURFACES] {
        Surface::ALL.map(|s| self.surface_area(s))
    }

    /// Smallest distance from `p` to any surface; negative outside the room.
    pub fn clearance(&self, p: &Point3) -> f64 {
        (0..3)
            .map(|a| p[a].min(self.dims[a] - p[a]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.clearance(p) > 0.0
    }

    /// Room with the same absorption everywhere, mostly for tests and demos.
    pub fn uniform(dims: [f64; 3], alpha: f64, scattering: f64) -> RoomSpec {
        RoomSpec {
            id: 0,
            dims,
            alpha: [[alpha; N_BANDS]; N_SURFACES],
            scattering,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Geometry(format!("invalid room dimensions {:?}", self.dims)));
        }
        if self
            .alpha
            .iter()
            .flatten()
            .any(|a| !(a.is_finite() && (0.0..=1.0).contains(a)))
        {
            return Err(domain("absorption coefficients must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.scattering) {
            return Err(domain(format!("scattering {} outside [0, 1]", self.scattering)));
        }
        Ok(())
    }
}

/// Bounds for absorption draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbsorptionRanges {
    /// Per-band lower bounds of the absorbent-material branch.
    pub absorbent_low: [f64; N_BANDS],
    /// Per-band upper bounds of the absorbent-material branch.
    pub absorbent_high: [f64; N_BANDS],
    /// Reflective profiles are flat and strictly below this value.
    pub reflective_threshold: f64,
    /// Smallest flat reflective absorption.
    pub reflective_floor: f64,
    pub reflective_probability: f64,
}

impl Default for AbsorptionRanges {
    fn default() -> Self {
        AbsorptionRanges {
            absorbent_low: [0.12; N_BANDS],
            absorbent_high: [0.70; N_BANDS],
            reflective_threshold: 0.12,
            reflective_floor: 0.02,
            reflective_probability: 0.5,
        }
    }
}

impl AbsorptionRanges {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        for b in 0..N_BANDS {
            let (lo, hi) = (self.absorbent_low[b], self.absorbent_high[b]);
            if !(unit_open(lo) && unit_open(hi) && lo <= hi) {
                return Err(Error::Config(format!("bad absorbent range [{lo}, {hi}] in band {b}")));
            }
        }
        if !(unit_open(self.reflective_floor)
            && unit_open(self.reflective_threshold)
            && self.reflective_floor < self.reflective_threshold)
        {
            return Err(Error::Config("bad reflective range".into()));
        }
        if !(0.0..=1.0).contains(&self.reflective_probability) {
            return Err(Error::Config("reflective probability outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Which branch of the reflectivity-biased draw to take for a surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsorptionProfile {
    Reflective,
    Absorbent,
}

/// Draws one surface's absorption profile in the given branch.
pub fn sample_surface_absorption<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &AbsorptionRanges,
    profile: AbsorptionProfile,
) -> [f64; N_BANDS] {
    match profile {
        AbsorptionProfile::Reflective => {
            let a = rng.random_range(ranges.reflective_floor..ranges.reflective_threshold);
            [a; N_BANDS]
        }
        AbsorptionProfile::Absorbent => std::array::from_fn(|b| {
            let (lo, hi) = (ranges.absorbent_low[b], ranges.absorbent_high[b]);
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        }),
    }
}

/// Reflectivity-biased absorption draw: each surface independently gets a flat
/// reflective profile with the configured probability, otherwise independent
/// per-band draws inside the absorbent ranges.
pub fn sample_absorption<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &AbsorptionRanges,
) -> [[f64; N_BANDS]; N_SURFACES] {
    std::array::from_fn(|_| {
        let profile = if rng.random_bool(ranges.reflective_probability) {
            AbsorptionProfile::Reflective
        } else {
            AbsorptionProfile::Absorbent
        };
        sample_surface_absorption(rng, ranges, profile)
    })
}

/// Dimension bounds of sampled rooms, metres.
pub const LENGTH_RANGE: (f64, f64) = (3.0, 10.0);
pub const WIDTH_RANGE: (f64, f64) = (3.0, 10.0);
pub const HEIGHT_RANGE: (f64, f64) = (2.5, 4.0);
pub const SCATTERING_RANGE: (f64, f64) = (0.2, 1.0);

pub fn sample_room<R: Rng + ?Sized>(rng: &mut R, ranges: &AbsorptionRanges) -> RoomSpec {
    let dims = [
        rng.random_range(LENGTH_RANGE.0..=LENGTH_RANGE.1),
        rng.random_range(WIDTH_RANGE.0..=WIDTH_RANGE.1),
        rng.random_range(HEIGHT_RANGE.0..=HEIGHT_RANGE.1),
    ];
    let scattering = rng.random_range(SCATTERING_RANGE.0..=SCATTERING_RANGE.1);
    let alpha = sample_absorption(rng, ranges);
    RoomSpec {
        id: 0,
        dims,
        alpha,
        scattering,
        seed: rng.random(),
    }
}

/// Samples room `index` of a dataset from its own stream of `master_seed`.
pub fn sample_indexed_room(master_seed: u64, index: u64, ranges: &AbsorptionRanges) -> RoomSpec {
    let mut rng = crate::rng::stream(master_seed, crate::rng::Purpose::Room, &[index]);
    RoomSpec {
        id: index,
        ..sample_room(&mut rng, ranges)
    }
}

/// Area-weighted mean absorption in `band`.
pub fn mean_absorption(room: &RoomSpec, band: usize) -> f64 {
    weighted_absorption(&room.surface_areas(), &room.alpha.map(|a| a[band]))
}

/// `Σ αᵢ Sᵢ / Σ Sᵢ` for arbitrary surface sets.
pub fn weighted_absorption(areas: &[f64], alpha: &[f64]) -> f64 {
    let total: f64 = areas.iter().sum();
    areas.iter().zip(alpha).map(|(s, a)| s * a).sum::<f64>() / total
}

/// Sabine reverberation time `0.16 V / (ᾱ S)` in seconds.
pub fn sabine_rt60(volume: f64, surface: f64, mean_abs: f64) -> Result<f64> {
    if !(volume.is_finite() && volume > 0.0) {
        return Err(domain(format!("volume must be positive, got {volume}")));
    }
    if !(surface.is_finite() && surface > 0.0) {
        return Err(domain(format!("surface must be positive, got {surface}")));
    }
    if !(mean_abs.is_finite() && mean_abs > 0.0 && mean_abs <= 1.0) {
        return Err(domain(format!("mean absorption must lie in (0, 1], got {mean_abs}")));
    }
    Ok(0.16 * volume / (mean_abs * surface))
}

/// Sabine prediction for every band of `room`.
pub fn sabine_rt60_bands(room: &RoomSpec) -> Result<[f64; N_BANDS]> {
    let (v, s) = (room.volume(), room.surface());
    let mut out = [0.0; N_BANDS];
    for (b, o) in out.iter_mut().enumerate() {
        *o = sabine_rt60(v, s, mean_absorption(room, b))?;
    }
    Ok(out)
}

/// Ground-truth annotation of a room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomAnnotation {
    pub mean_absorption: [f64; N_BANDS],
    pub rt60: [f64; N_BANDS],
    pub surface: f64,
    pub volume: f64,
}

impl RoomAnnotation {
    /// Target vector `[ᾱ × 6, RT60 × 6, S, V]`.
    pub fn to_targets(&self) -> [f64; N_TARGETS] {
        let mut t = [0.0; N_TARGETS];
        t[ABSORPTION_OFFSET..ABSORPTION_OFFSET + N_BANDS].copy_from_slice(&self.mean_absorption);
        t[RT60_OFFSET..RT60_OFFSET + N_BANDS].copy_from_slice(&self.rt60);
        t[SURFACE_INDEX] = self.surface;
        t[VOLUME_INDEX] = self.volume;
        t
    }

    pub fn from_targets(t: &[f64]) -> Result<RoomAnnotation> {
        if t.len() != N_TARGETS {
            return Err(crate::error::shape(format!("expected {N_TARGETS} targets, got {}", t.len())));
        }
        Ok(RoomAnnotation {
            mean_absorption: std::array::from_fn(|b| t[ABSORPTION_OFFSET + b]),
            rt60: std::array::from_fn(|b| t[RT60_OFFSET + b]),
            surface: t[SURFACE_INDEX],
            volume: t[VOLUME_INDEX],
        })
    }
}

/// Assembles the annotation from the room geometry and measured per-band RT60.
/// `measured_rt60` holds one entry per band; `None` marks a band without a
/// valid measurement.
pub fn annotate_room(room: &RoomSpec, measured_rt60: &[Option<f64>]) -> Result<RoomAnnotation> {
    if measured_rt60.len() != N_BANDS {
        return Err(Error::Data(format!(
            "expected {N_BANDS} RT60 values, got {}",
            measured_rt60.len()
        )));
    }
    let mut rt60 = [0.0; N_BANDS];
    for (b, value) in measured_rt60.iter().enumerate() {
        match value {
            Some(t) if t.is_finite() && *t > 0.0 => rt60[b] = *t,
            Some(t) => return Err(Error::Data(format!("invalid RT60 {t} in band {b}"))),
            None => {
                return Err(Error::Data(format!(
                    "missing RT60 in band {} Hz",
                    OCTAVE_BANDS[b]
                )))
            }
        }
    }
    Ok(RoomAnnotation {
        mean_absorption: std::array::from_fn(|b| mean_absorption(room, b)),
        rt60,
        surface: room.surface(),
        volume: room.volume(),
    })
}
