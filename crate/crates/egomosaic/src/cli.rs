//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (a JSON diagnostic is
//! written to stderr), 2 on a usage error.

use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use egomosaic_core::analytics::{DEFAULT_IOU_THRESHOLD, DEFAULT_MISSING_THRESHOLD};
use egomosaic_core::compositor::{FilterToggles, OverlaySpec, OverlayStyle, PanoramaParams};
use egomosaic_core::homfilter::{ReferencePoint, SignatureForm};
use egomosaic_core::DetectorKind;
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::export::{to_json_bytes, AnalyticsDoc, PanoramaDoc};
use crate::imaging::encode_png_rgba;
use crate::pipeline::{build_from_disk, overlay};
use crate::service::{compositor_code, serve, ServiceConfig};
use crate::session_io::{load_session, session_content_hash};

pub const PANORAMA_PNG: &str = "panorama.png";
pub const OVERLAY_PNG: &str = "overlay.png";
pub const PANORAMA_JSON: &str = "panorama.json";
pub const ANALYTICS_JSON: &str = "analytics.json";

#[derive(Debug, Parser)]
#[command(name = "egomosaic", version, about = "Panoramas and detection analytics for egocentric video sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a panorama and its overlay.
    Stitch(StitchArgs),
    /// Export timeline analytics.
    Analytics(AnalyticsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

/// Inclusive frame-id range `a:b`; either end may be left empty.
pub fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected a:b")?;
    let end = |v: &str, d: u32| -> Result<u32, String> {
        if v.trim().is_empty() {
            Ok(d)
        } else {
            v.trim().parse().map_err(|_| format!("{v:?} is not a frame id"))
        }
    };
    let (a, b) = (end(a, 0)?, end(b, u32::MAX)?);
    if a > b {
        return Err(format!("start {a} is after end {b}"));
    }
    Ok((a, b))
}

fn serde_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(json!(s.replace('-', "_"))).map_err(|_| format!("unknown value {s:?}"))
}

fn parse_detector(s: &str) -> Result<DetectorKind, String> {
    s.parse().map_err(|e: egomosaic_core::features::FeatureError| e.to_string())
}

fn parse_style(s: &str) -> Result<OverlayStyle, String> {
    match s {
        "boxes" => Ok(OverlayStyle::BoundingBoxes),
        _ => serde_name(s),
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Inclusive frame-id range, e.g. `10:40`.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<(u32, u32)>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub stride: u32,
    #[arg(long)]
    pub base: Option<u32>,
    #[arg(long, default_value = "orb", value_parser = parse_detector)]
    pub detector: DetectorKind,
    #[arg(long)]
    pub lowe_ratio: Option<f64>,
    #[arg(long)]
    pub ransac_thresh: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub no_filter_stretch: bool,
    #[arg(long)]
    pub no_filter_flips: bool,
    #[arg(long)]
    pub kmax: Option<usize>,
    /// `origin` or `identity-scale`.
    #[arg(long, value_parser = serde_name::<ReferencePoint>)]
    pub reference: Option<ReferencePoint>,
    /// `normalized` or `conjugate`.
    #[arg(long, value_parser = serde_name::<SignatureForm>)]
    pub signature: Option<SignatureForm>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `boxes`, `centroids` or `arrows`.
    #[arg(long, default_value = "boxes", value_parser = parse_style)]
    pub style: OverlayStyle,
    #[arg(long, default_value_t = 0.0, value_parser = parse_unit)]
    pub min_confidence: f64,
    /// Comma-separated labels to draw.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long)]
    pub highlight_frame: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

impl StitchArgs {
    pub fn params(&self) -> PanoramaParams {
        let d = PanoramaParams::default();
        PanoramaParams {
            frame_range: self.range.unwrap_or(d.frame_range),
            base_frame_id: self.base,
            detector_kind: self.detector,
            max_features: self.max_features.unwrap_or(d.max_features),
            lowe_ratio: self.lowe_ratio.unwrap_or(d.lowe_ratio),
            ransac_thresh: self.ransac_thresh.unwrap_or(d.ransac_thresh),
            min_inliers: self.min_inliers.unwrap_or(d.min_inliers),
            alpha: self.alpha.unwrap_or(d.alpha),
            filters: FilterToggles {
                stretch_on: !self.no_filter_stretch,
                flip_on: !self.no_filter_flips,
            },
            k_max: self.kmax.unwrap_or(d.k_max),
            reference: self.reference.unwrap_or(d.reference),
            signature: self.signature.unwrap_or(d.signature),
            seed: self.seed,
            sample_stride: self.stride,
        }
    }

    pub fn overlay_spec(&self) -> OverlaySpec {
        OverlaySpec {
            style: self.style,
            min_confidence: self.min_confidence,
            label_filter: self
                .labels
                .as_ref()
                .map(|v| v.iter().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect::<BTreeSet<_>>()),
            highlighted_frame: self.highlight_frame,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyticsArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD, value_parser = parse_unit)]
    pub iou_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MISSING_THRESHOLD)]
    pub missing_frames: usize,
    /// `panorama.json` from `stitch`; adds chains and distance series.
    #[arg(long)]
    pub panorama: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "EGOMOSAIC_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Directories sessions may be opened from; defaults to the working
    /// directory.
    #[arg(long, env = "EGOMOSAIC_ALLOW", value_delimiter = ',')]
    pub allow: Vec<PathBuf>,
    #[arg(long, env = "EGOMOSAIC_CACHE_SIZE", default_value_t = 16)]
    pub cache_size: usize,
    #[arg(long, env = "EGOMOSAIC_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// Runtime failure with a stable code.
#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    fn new(code: impl Into<String>, message: impl ToString) -> Self {
        CliError {
            code: code.into(),
            message: message.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "code": self.code, "message": self.message } }).to_string()
    }
}

impl From<crate::session_io::SessionError> for CliError {
    fn from(e: crate::session_io::SessionError) -> Self {
        CliError::new(e.code(), e)
    }
}

impl From<egomosaic_core::compositor::CompositorError> for CliError {
    fn from(e: egomosaic_core::compositor::CompositorError) -> Self {
        CliError::new(compositor_code(&e), e)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::new("IoError", format!("{}: {e}", path.display())))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::new("IoError", format!("{}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stitch(a) => stitch(&a),
        Command::Analytics(a) => analytics(&a),
        Command::Serve(a) => run_serve(a),
    }
}

pub fn stitch(args: &StitchArgs) -> Result<(), CliError> {
    let params = args.params();
    params.validate()?;
    let spec = args.overlay_spec();
    spec.validate()?;
    let session = load_session(&args.session)?;
    let session_id = session_content_hash(&session, &args.session)?;
    let panorama = build_from_disk(&session, &args.session, &params)?;
    let ov = overlay(&session, &panorama, &spec)?;
    for w in &ov.warnings {
        tracing::warn!("{w}");
    }
    create_out(&args.out)?;
    write(&args.out.join(PANORAMA_PNG), &encode_png_rgba(&panorama.image))?;
    write(&args.out.join(OVERLAY_PNG), &encode_png_rgba(&ov.image))?;
    let doc = PanoramaDoc::new(&session_id, &params, &panorama);
    write(&args.out.join(PANORAMA_JSON), &to_json_bytes(&doc))?;
    Ok(())
}

pub fn analytics(args: &AnalyticsArgs) -> Result<(), CliError> {
    let session = load_session(&args.session)?;
    let session_id = session_content_hash(&session, &args.session)?;
    let doc = match &args.panorama {
        None => AnalyticsDoc::new(&session, &session_id, args.iou_threshold, args.missing_frames, &[]),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::new("MissingFile", format!("{}: {e}", path.display())))?;
            let pano: PanoramaDoc =
                serde_json::from_str(&text).map_err(|e| CliError::new("MalformedRecord", format!("{}: {e}", path.display())))?;
            if pano.session_id != session_id {
                return Err(CliError::new(
                    "SessionMismatch",
                    format!("{} was built from a different session", path.display()),
                ));
            }
            AnalyticsDoc::new(
                &session,
                &session_id,
                args.iou_threshold,
                args.missing_frames,
                &[(&pano.panorama_id, &pano.panorama)],
            )
        }
    };
    create_out(&args.out)?;
    write(&args.out.join(ANALYTICS_JSON), &to_json_bytes(&doc))
}

fn run_serve(args: ServeArgs) -> Result<(), CliError> {
    let allow = if args.allow.is_empty() {
        vec![std::env::current_dir().map_err(|e| CliError::new("IoError", e))?]
    } else {
        args.allow
    };
    let config = ServiceConfig {
        allow,
        cache_size: args.cache_size,
        default_seed: args.seed,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("IoError", e))?;
    rt.block_on(serve(config, args.bind))
        .map_err(|e| CliError::new("IoError", e))
}
