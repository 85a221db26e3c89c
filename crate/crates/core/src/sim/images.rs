use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RoomSpec, N_BANDS, N_SURFACES};

/// Mirror image of the source in a shoebox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub position: Point3,
    pub order: u32,
    /// Number of bounces on each surface, in [`crate::geometry::Surface::ALL`] order.
    pub hits: [u32; N_SURFACES],
    /// Specular amplitude gain per band.
    pub gain: [f64; N_BANDS],
}

/// Per-bounce specular amplitude factor `sqrt((1 − α)(1 − s))` per surface and band.
pub fn specular_reflection_factors(room: &RoomSpec) -> [[f64; N_BANDS]; N_SURFACES] {
    room.alpha
        .map(|row| row.map(|a| ((1.0 - a) * (1.0 - room.scattering)).max(0.0).sqrt()))
}

/// One axis of the image lattice: coordinate `(1 − 2q)·x + 2nL` reflects
/// `|n − q|` times off the near wall and `|n|` times off the far wall.
#[derive(Debug, Clone, Copy)]
struct AxisImage {
    coord: f64,
    near: u32,
    far: u32,
}

fn axis_images(x: f64, len: f64, max_order: u32) -> Vec<AxisImage> {
    let m = max_order as i64;
    let mut out = Vec::new();
    for n in -m..=m {
        for q in 0..=1i64 {
            let near = (n - q).unsigned_abs() as u32;
            let far = n.unsigned_abs() as u32;
            if near + far <= max_order {
                out.push(AxisImage {
                    coord: (1 - 2 * q) as f64 * x + 2.0 * n as f64 * len,
                    near,
                    far,
                });
            }
        }
    }
    out
}

/// All image sources with at most `max_order` reflections, sorted by order
/// then lexicographically by position.
pub fn enumerate_images(room: &RoomSpec, source: &Point3, max_order: i64) -> Result<Vec<ImageSource>> {
    if max_order < 0 {
        return Err(Error::Domain(format!("reflection order must be ≥ 0, got {max_order}")));
    }
    if !room.contains(source) {
        return Err(Error::Geometry(format!("source {source:?} is not inside the room")));
    }
    let max_order = max_order as u32;
    let factors = specular_reflection_factors(room);
    let per_axis: Vec<Vec<AxisImage>> = (0..3)
        .map(|a| axis_images(source[a], room.dims[a], max_order))
        .collect();

    let mut images = Vec::new();
    for ix in &per_axis[0] {
        let ox = ix.near + ix.far;
        for iy in &per_axis[1] {
            let oy = iy.near + iy.far;
            if ox + oy > max_order {
                continue;
            }
            for iz in &per_axis[2] {
                let order = ox + oy + iz.near + iz.far;
                if order > max_order {
                    continue;
                }
                let hits = [ix.near, ix.far, iy.near, iy.far, iz.near, iz.far];
                let gain = std::array::from_fn(|b| {
                    hits.iter()
                        .zip(&factors)
                        .map(|(&k, f)| f[b].powi(k as i32))
                        .product()
                });
                images.push(ImageSource {
                    position: [ix.coord, iy.coord, iz.coord],
                    order,
                    hits,
                    gain,
                });
            }
        }
    }
    images.sort_by(|a, b| {
        a.order.cmp(&b.order).then_with(|| {
            a.position[0]
                .total_cmp(&b.position[0])
                .then(a.position[1].total_cmp(&b.position[1]))
                .then(a.position[2].total_cmp(&b.position[2]))
        })
    });
    Ok(images)
}

/// Number of images with at most `max_order` reflections: the source plus
/// `4k² + 2` images of each order `k ≥ 1`.
pub fn image_count(max_order: u32) -> usize {
    1 + (1..=max_order as usize).map(|k| 4 * k * k + 2).sum::<usize>()
}
