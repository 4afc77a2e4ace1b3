//! Camera-side labeling: calibration, tracks to events, synchronization with
//! the sensor section, and fractional window labels.

mod homography;
mod labels;
mod track;

pub use homography::{
    project_to_pixel, project_to_world, reprojection_rms, solve_homography, HomographyMatrix,
    PixelPoint, WorldPoint,
};
pub use labels::{assign_fractional_labels, WindowGrid};
pub use track::{
    convert_tracks, entry_exit_times, estimate_speed, interpolate_missing, majority_vote_class,
    relabel_by_axles, resolve_track, synchronize_event, track_to_event, PlaneSpec, RawTrack, Track,
    TrackConversion, TrackFrame,
};
