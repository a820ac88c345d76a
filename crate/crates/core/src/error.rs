use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("region does not intersect the image")]
    RegionOutsideImage,
    #[error("descriptor mismatch: {0}")]
    DescriptorMismatch(String),
    #[error("chi2 kernel requires nonnegative features")]
    NegativeFeature,
    #[error("proposal set is empty")]
    EmptyProposalSet,
    #[error("empty input")]
    EmptyInput,
    #[error("flow field has no valid pixels")]
    NoValidFlow,
    #[error("degenerate control points: {0}")]
    DegenerateControlPoints(String),
    #[error("warped region collapses to zero width or height")]
    DegenerateGt,
    #[error("missing ground truth for source region {0}")]
    MissingGt(u32),
    #[error("keypoint ({0}, {1}) lies outside the image")]
    KeypointOutsideImage(f64, f64),
    #[error("too few keypoints: {0}")]
    TooFewKeypoints(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "InvalidBox",
            Error::RegionOutsideImage => "RegionOutsideImage",
            Error::DescriptorMismatch(_) => "DescriptorMismatch",
            Error::NegativeFeature => "NegativeFeature",
            Error::EmptyProposalSet => "EmptyProposalSet",
            Error::EmptyInput => "EmptyInput",
            Error::NoValidFlow => "NoValidFlow",
            Error::DegenerateControlPoints(_) => "DegenerateControlPoints",
            Error::DegenerateGt => "DegenerateGt",
            Error::MissingGt(_) => "MissingGt",
            Error::KeypointOutsideImage(..) => "KeypointOutsideImage",
            Error::TooFewKeypoints(_) => "TooFewKeypoints",
            Error::Config(_) => "ConfigError",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
        }
    }
}
