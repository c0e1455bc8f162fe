//! Image containers, file formats, disk geometry and heliographic
//! coordinates.

mod disk;
mod formats;
mod frame;
mod helio;

pub use disk::estimate_disk;
pub use formats::{
    decode_cache, decode_fits, decode_pgm, encode_cache, encode_fits, encode_pgm16, encode_pgm8, load_frame,
    read_pgm, timestamp_from_name, timestamp_name, write_cache, write_fits, write_pgm16, write_pgm8,
    write_pgm8_scaled, FitsImage, PgmImage,
};
pub(crate) use frame::bilinear;
pub use frame::{DiskGeometry, FrameBuffer, SequenceManifest};
pub use helio::{great_circle_deg, heliographic_to_pixel, pixel_to_heliographic};
