#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use egomosaic::imaging::encode_png_rgb;
use egomosaic::session_io::save_session;
use egomosaic_core::synth::synthetic_session;

pub const FIXTURE_FRAMES: usize = 30;
pub const FIXTURE_SIZE: (u32, u32) = (160, 120);
pub const FIXTURE_SEED: u64 = 7;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/session30")
}

/// Writes a synthetic session (frames as PNG plus every session file).
pub fn write_synthetic(root: &Path, seed: u64, n: usize, size: (u32, u32)) {
    let s = synthetic_session(seed, n, size);
    fs::create_dir_all(root.join("frames")).unwrap();
    for (f, img) in s.session.frames.iter().zip(&s.images) {
        fs::write(root.join(&f.image_path), encode_png_rgb(img)).unwrap();
    }
    save_session(&s.session, root).unwrap();
}

/// Copies a session directory tree.
pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dst);
        } else {
            fs::copy(e.path(), dst).unwrap();
        }
    }
}
