//! Builds and overlays shared by the CLI and the service.

use std::path::Path;

use egomosaic_core::analytics::labels_by_first_appearance;
use egomosaic_core::compositor::{
    build_panorama_with, render_overlay, transform_predictions, CompositorError, OverlayOutput, OverlaySpec,
    Palette, Panorama, PanoramaParams,
};
use egomosaic_core::features::DetectorRegistry;
use egomosaic_core::Session;

use crate::imaging::DiskFrames;
use crate::parallel::Rayon;

/// Runs the stitching pipeline on frames read from `root`.
pub fn build_from_disk(session: &Session, root: &Path, params: &PanoramaParams) -> Result<Panorama, CompositorError> {
    let source = DiskFrames { root: root.to_path_buf() };
    build_panorama_with(session, params, &source, &DetectorRegistry::default(), &Rayon)
}

/// Label colours in session order, so a label keeps its colour across
/// overlays of the same session.
pub fn session_palette(session: &Session) -> (Palette, Vec<String>) {
    let labels = labels_by_first_appearance(session);
    let mut rest: Vec<&String> = session.vocabulary.iter().filter(|l| !labels.contains(l)).collect();
    rest.sort();
    Palette::for_labels(labels.iter().chain(rest).map(String::as_str))
}

pub fn overlay(session: &Session, panorama: &Panorama, spec: &OverlaySpec) -> Result<OverlayOutput, CompositorError> {
    let (palette, mut warnings) = session_palette(session);
    let transformed = transform_predictions(session, panorama);
    let mut out = render_overlay(panorama, &transformed, spec, &palette)?;
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}
