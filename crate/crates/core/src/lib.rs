//! Region-based semantic flow.
//!
//! Two images are each described by a set of object proposals (boxes with
//! appearance features). The crate matches proposals across the images with
//! three strategies of increasing geometric awareness, turns region matches
//! into a dense pixel flow field, builds approximate region ground truth from
//! sparse keypoints with a thin-plate spline, and scores everything with
//! region- and keypoint-level metrics.
//!
//! Module map:
//! - [`geometry`]: boxes, IoU, the position/log-scale location map and offset kernel.
//! - [`features`]: raster images, a built-in HOG descriptor, similarity functions.
//! - [`matching`]: appearance-only (NAM), Hough (PHM) and local-offset (LOM) matching.
//! - [`flowfield`]: anchor matches, dense flow, hole filling, warping.
//! - [`tps`]: thin-plate-spline fitting and ground-truth region generation.
//! - [`eval`]: PCR, mIoU@k, AuC, PCK and the leave-n-out keypoint audit.
//! - [`synth`]: seeded synthetic scenes with known correspondences.
//! - [`io`]: manifests, CSV, `.flo`, PNM and feature sidecar formats.

pub mod error;
pub mod eval;
pub mod features;
pub mod flowfield;
pub mod geometry;
pub mod image;
pub mod io;
pub mod matching;
mod par;
pub mod rng;
pub mod synth;
pub mod tps;

pub use error::{Error, Result};
pub use features::{FeatureVec, HogConfig, SimilarityFn, SimilarityKind};

pub use flowfield::{AnchorIndex, FlowField};
pub use geometry::{BBox, KernelParams, LocationVec, OffsetVector};
pub use image::RasterImage;
pub use matching::{Match, MatchSet, Matcher, PhmConfig, PhmMode, ProposalSet, Region};
pub use tps::{GtCorrespondence, KeypointPair, TpsWarp};

