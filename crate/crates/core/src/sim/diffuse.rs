//! Diffuse-rain stochastic ray tracing.
//!
//! Rays leave the source isotropically, each carrying `1 / n_rays` of the
//! emitted energy in every band. At every wall hit the ray energy is reduced
//! by `(1 − α)` and the scattered share `s` of it is "rained" onto each
//! receiver: it is weighted by Lambert's cosine law and by the solid angle of
//! the receiver sphere seen from the hit point, and arrives after the ray's
//! path length plus the unobstructed hit-receiver distance. The ray then
//! leaves in a Lambertian direction with probability `s` and specularly
//! otherwise. Rays stop after 60 dB of energy loss or at the length cap.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point3, RoomSpec, N_BANDS};

/// Per-channel, per-band energy deposited in one-sample time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyHistogram {
    pub fs: f64,
    /// `energy[channel][bin][band]`.
    pub energy: Vec<Vec<[f64; N_BANDS]>>,
    /// Radius of the receiver sphere used for detection.
    pub receiver_radius: f64,
}

impl EnergyHistogram {
    pub fn channels(&self) -> usize {
        self.energy.len()
    }

    pub fn bins(&self) -> usize {
        self.energy.first().map_or(0, Vec::len)
    }

    pub fn total(&self, channel: usize, band: usize) -> f64 {
        self.energy[channel].iter().map(|e| e[band]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.iter().flatten().flatten().all(|e| *e == 0.0)
    }

    /// Factor turning deposited energy (unit emitted energy) into squared
    /// pressure on the same scale as the `1 / (4π d)` specular convention.
    pub fn pressure_squared_scale(&self) -> f64 {
        1.0 / (4.0 * PI * PI * self.receiver_radius * self.receiver_radius)
    }

    pub fn band_series(&self, channel: usize, band: usize) -> Vec<f64> {
        self.energy[channel].iter().map(|e| e[band]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RainConfig {
    pub n_rays: usize,
    pub speed_of_sound: f64,
    pub fs: f64,
    pub n_bins: usize,
    pub receiver_radius: f64,
    /// Energy decay (dB) after which a ray is dropped.
    pub max_decay_db: f64,
}

impl Default for RainConfig {
    fn default() -> Self {
        RainConfig {
            n_rays: 2000,
            speed_of_sound: 343.0,
            fs: 48_000.0,
            n_bins: 48_000,
            receiver_radius: 0.1,
            max_decay_db: 60.0,
        }
    }
}

fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return v.map(|c| c / n);
        }
    }
}

/// Cosine-weighted direction about the inward normal of a wall on `axis`.
fn lambert_direction<R: Rng + ?Sized>(rng: &mut R, axis: usize, inward: f64) -> [f64; 3] {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let mut d = [0.0; 3];
    d[axis] = inward * (1.0 - u1).max(0.0).sqrt();
    d[(axis + 1) % 3] = r * phi.cos();
    d[(axis + 2) % 3] = r * phi.sin();
    d
}

/// Solid angle of a sphere of radius `r` seen from distance `d`.
fn sphere_solid_angle(r: f64, d: f64) -> f64 {
    if d <= r {
        2.0 * PI
    } else {
        2.0 * PI * (1.0 - (1.0 - (r / d).powi(2)).sqrt())
    }
}

pub fn diffuse_rain<R: Rng + ?Sized>(
    room: &RoomSpec,
    source: &Point3,
    mics: &[Point3],
    cfg: &RainConfig,
    rng: &mut R,
) -> Result<EnergyHistogram> {
    if cfg.n_rays == 0 {
        return Err(Error::Domain("number of rays must be positive".into()));
    }
    if !(0.0..=1.0).contains(&room.scattering) {
        return Err(Error::Domain(format!("scattering {} outside [0, 1]", room.scattering)));
    }
    if !room.contains(source) || mics.iter().any(|m| !room.contains(m)) {
        return Err(Error::Geometry("source and receivers must be inside the room".into()));
    }
    let mut hist = EnergyHistogram {
        fs: cfg.fs,
        energy: vec![vec![[0.0; N_BANDS]; cfg.n_bins]; mics.len()],
        receiver_radius: cfg.receiver_radius,
    };
    let s = room.scattering;
    if s == 0.0 {
        return Ok(hist);
    }
    let e0 = 1.0 / cfg.n_rays as f64;
    let e_min = e0 * 10f64.powf(-cfg.max_decay_db / 10.0);
    let max_path = cfg.n_bins as f64 / cfg.fs * cfg.speed_of_sound;
    let reflect = room.alpha.map(|row| row.map(|a| 1.0 - a));
    let bin_per_metre = cfg.fs / cfg.speed_of_sound;

    for _ in 0..cfg.n_rays {
        let mut pos = *source;
        let mut dir = random_unit_vector(rng);
        let mut energy = [e0; N_BANDS];
        let mut travelled = 0.0;
        loop {
            // Next wall along the ray.
            let mut t_hit = f64::INFINITY;
            let mut axis = 0;
            for a in 0..3 {
                let t = if dir[a] > 0.0 {
                    (room.dims[a] - pos[a]) / dir[a]
                } else if dir[a] < 0.0 {
                    -pos[a] / dir[a]
                } else {
                    f64::INFINITY
                };
                if t < t_hit {
                    t_hit = t;
                    axis = a;
                }
            }
            let far = dir[axis] > 0.0;
            for a in 0..3 {
                pos[a] += t_hit * dir[a];
            }
            pos[axis] = if far { room.dims[axis] } else { 0.0 };
            travelled += t_hit;
            if travelled >= max_path {
                break;
            }
            let wall = axis * 2 + usize::from(far);
            for (e, r) in energy.iter_mut().zip(&reflect[wall]) {
                *e *= r;
            }
            let inward = if far { -1.0 } else { 1.0 };
            for (m, mic) in mics.iter().enumerate() {
                let d = distance(&pos, mic);
                let cos_theta = inward * (mic[axis] - pos[axis]) / d;
                if cos_theta <= 0.0 {
                    continue;
                }
                let bin = ((travelled + d) * bin_per_metre).round() as usize;
                if bin >= cfg.n_bins {
                    continue;
                }
                let w = s * cos_theta / PI * sphere_solid_angle(cfg.receiver_radius, d);
                let slot = &mut hist.energy[m][bin];
                for (acc, e) in slot.iter_mut().zip(&energy) {
                    *acc += e * w;
                }
            }
            if energy.iter().all(|e| *e < e_min) {
                break;
            }
            if rng.random::<f64>() < s {
                dir = lambert_direction(rng, axis, inward);
            } else {
                dir[axis] = -dir[axis];
            }
        }
    }
    Ok(hist)
}
