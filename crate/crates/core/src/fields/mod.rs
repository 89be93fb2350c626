//! Grids, fields, phantoms, sound-speed maps, observation surfaces,
//! sinograms, and their on-disk formats.

mod grid;
pub(crate) mod io;
mod phantom;
mod sinogram;
mod spec_text;
mod surface;

pub use grid::{make_grid, DomainSpec, Grid, ScalarField};
pub use io::{
    crc32, crc32_f64s, read_field, read_sinogram, write_field, write_sinogram, FIELD_MAGIC,
    FORMAT_VERSION, SINOGRAM_MAGIC,
};
pub use phantom::{
    sample_phantom, sample_sound_speed, PhantomSpec, Primitive, SoundSpeedField,
    GAUSSIAN_SUPPORT_SIGMAS,
};
pub use sinogram::Sinogram;
pub use spec_text::{parse_bump_spec, parse_bump_spec_file};
pub use surface::{build_observation_surface, Detector, ObservationSurface};
