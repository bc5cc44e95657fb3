use std::fmt;

/// Errors produced by the stitching library.
///
/// Every variant maps to a stable machine-readable code via [`Error::code`],
/// which the CLI prints alongside the failing pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("need at least {required} matches, got {got}")]
    TooFewMatches { required: usize, got: usize },
    #[error("every minimal sample was collinear")]
    DegenerateConfiguration,
    #[error("projective coordinate too close to zero ({0:e})")]
    SingularProjection(f64),
    #[error("transform is not invertible (det = {0:e})")]
    SingularTransform(f64),
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("image {width}x{height} is below the {min}x{min} minimum")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("no mutual matches survived")]
    NoMatchesFound,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("match {0} is out of bounds or has a non-finite value")]
    Bounds(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("projected source does not overlap the target")]
    NoOverlap,
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error("lattice {nx}x{ny} is smaller than the 4x4 bicubic support")]
    LatticeTooSmall { nx: usize, ny: usize },
    #[error("overlap mask is empty")]
    EmptyOverlap,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("target offset ({0}, {1}) does not fit inside the canvas")]
    OffsetOutOfFrame(i64, i64),
    #[error("no correspondences to classify")]
    NoPairs,
    #[error("no disparity cluster with two or more classes")]
    NoClusters,
    #[error("keypoint chain has {0} points, need at least 2")]
    ChainTooShort(usize),
    #[error("every anchor segment failed directional validation")]
    AllSegmentsInvalid,
    #[error("partition requires at least one anchor")]
    NoAnchors,
    #[error("pixel ({0}, {1}) inside the crop has no coverage")]
    CoverageHole(u32, u32),
    #[error("no 11x11 window fits inside the mask")]
    MaskTooSmall,
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::TooFewMatches { .. } => "TooFewMatches",
            Error::DegenerateConfiguration => "DegenerateConfiguration",
            Error::SingularProjection(_) => "SingularProjection",
            Error::SingularTransform(_) => "SingularTransform",
            Error::EmptyMask => "EmptyMask",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::NoMatchesFound => "NoMatchesFound",
            Error::Parse(_) => "ParseError",
            Error::Bounds(_) => "BoundsError",
            Error::Io(_) => "IoError",
            Error::Image(_) => "ImageError",
            Error::NoOverlap => "NoOverlap",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::LatticeTooSmall { .. } => "LatticeTooSmall",
            Error::EmptyOverlap => "EmptyOverlap",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::OffsetOutOfFrame(..) => "OffsetOutOfFrame",
            Error::NoPairs => "NoPairs",
            Error::NoClusters => "NoClusters",
            Error::ChainTooShort(_) => "ChainTooShort",
            Error::AllSegmentsInvalid => "AllSegmentsInvalid",
            Error::NoAnchors => "NoAnchors",
            Error::CoverageHole(..) => "CoverageHole",
            Error::MaskTooSmall => "MaskTooSmall",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// I/O, codec, parse and configuration failures, as opposed to
    /// failures of the geometric pipeline itself.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Image(_) | Error::Parse(_) | Error::Bounds(_) | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage a failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Io,
    Config,
    Matching,
    Ransac,
    Grid,
    LocalFit,
    Field,
    Render,
    Zone,
    Chain,
    Partition,
    Compose,
    Metrics,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Io => "io",
            Stage::Config => "config",
            Stage::Matching => "matching",
            Stage::Ransac => "ransac",
            Stage::Grid => "grid",
            Stage::LocalFit => "local_fit",
            Stage::Field => "field",
            Stage::Render => "render",
            Stage::Zone => "zone",
            Stage::Chain => "chain",
            Stage::Partition => "partition",
            Stage::Compose => "compose",
            Stage::Metrics => "metrics",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An [`Error`] tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("STAGE={stage} CODE={code}: {source}", code = source.code())]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    /// Exit status: 2 for I/O and configuration problems (including a match
    /// file whose dimensions disagree with the images), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let bad_match_file = self.stage == Stage::Matching && matches!(self.source, Error::DimensionMismatch(_));
        if matches!(self.stage, Stage::Io | Stage::Config) || self.source.is_io() || bad_match_file {
            2
        } else {
            1
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}
