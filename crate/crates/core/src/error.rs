use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    ShapeMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("raster dimensions must be at least 1x1 (got {width}x{height})")]
    EmptyRaster { width: usize, height: usize },
    #[error("zero target dimension in resize ({width}x{height})")]
    ZeroTargetDimension { width: usize, height: usize },
    #[error("expected a {expected} map, got {got}")]
    WrongKind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("degenerate depth range: min == max == {value}")]
    DegenerateDepthRange { value: f64 },
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("scale undefined: prediction is zero on every jointly valid pixel")]
    ScaleUndefined,
    #[error("missing quality score for frame {frame}")]
    MissingScore { frame: usize },
    #[error("empty frame list")]
    EmptyInput,
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(&'static str),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("cannot build a spatial index over an empty cloud")]
    EmptyCloud,
    #[error("insufficient correspondences: {count} (need at least 3)")]
    InsufficientCorrespondences { count: usize },
    #[error("rank-deficient covariance: correspondences are collinear or coincident")]
    RankDeficient,
    #[error("threshold eliminated all correspondences (iteration {iteration}, threshold {threshold})")]
    NoInliers { iteration: usize, threshold: f64 },
    #[error("threshold scheme needs at least one distance")]
    EmptyDistances,
    #[error("invalid threshold scheme: {0}")]
    InvalidScheme(&'static str),
    #[error("invalid icp configuration: {0}")]
    InvalidIcpConfig(&'static str),
    #[error("point cloud has no source pixel indices")]
    MissingSourcePixels,
    #[error("novelty radius must be non-negative (got {0})")]
    NegativeRadius(f64),
    #[error("region too small for a {window}x{window} SSIM window")]
    RegionTooSmall { window: usize },
    #[error("sequence length mismatch: {preds} predictions vs {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),
    #[error("invalid synthetic scene: {0}")]
    InvalidScene(&'static str),
}

impl Error {
    pub fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: alloc::boxed::Box::new(self),
        }
    }
}
