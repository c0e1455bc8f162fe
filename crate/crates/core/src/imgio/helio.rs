//! Orthographic conversion between image pixels and heliographic
//! coordinates, with P-angle 0 and a configurable B0 tilt.

use super::DiskGeometry;
use crate::error::{Error, Result};

/// Heliographic (latitude, longitude) in degrees of a pixel on the disk.
///
/// Image `y` grows downward while solar north is up.
pub fn pixel_to_heliographic(geom: &DiskGeometry, px: (f64, f64), b0_deg: f64) -> Result<(f64, f64)> {
    let x = (px.0 - geom.center_x) / geom.radius;
    let y = -(px.1 - geom.center_y) / geom.radius;
    let rho2 = x * x + y * y;
    if rho2 >= 1.0 {
        return Err(Error::OffDisk { x: px.0, y: px.1 });
    }
    let z = (1.0 - rho2).sqrt();
    let (sb, cb) = b0_deg.to_radians().sin_cos();
    let lat = (y * cb + z * sb).clamp(-1.0, 1.0).asin();
    let lon = x.atan2(z * cb - y * sb);
    Ok((lat.to_degrees(), lon.to_degrees()))
}

/// Forward projection; `None` when the point is on the far hemisphere.
pub fn heliographic_to_pixel(geom: &DiskGeometry, lat_deg: f64, lon_deg: f64, b0_deg: f64) -> Option<(f64, f64)> {
    let (sl, cl) = lat_deg.to_radians().sin_cos();
    let (so, co) = lon_deg.to_radians().sin_cos();
    let (sb, cb) = b0_deg.to_radians().sin_cos();
    let x = cl * so;
    let y = sl * cb - cl * co * sb;
    let z = sl * sb + cl * co * cb;
    if z < 0.0 {
        return None;
    }
    Some((geom.center_x + geom.radius * x, geom.center_y - geom.radius * y))
}

/// Great-circle separation in degrees between two (lat, lon) points.
pub fn great_circle_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    (2.0 * h.sqrt().min(1.0).asin()).to_degrees()
}
