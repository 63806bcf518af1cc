use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("ring has {vertices} distinct vertices, need at least 3")]
    DegenerateRing { vertices: usize },
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("ring is self-intersecting")]
    SelfIntersecting,
    #[error("hole is not strictly inside the exterior ring")]
    HoleOutsideExterior,
    #[error("holes overlap")]
    OverlappingHoles,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid geometry at feature {index}: {source}")]
    FeatureGeometry { index: usize, source: GeometryError },
    #[error("missing id property at feature {index}")]
    MissingId { index: usize },
    #[error("invalid id property at feature {index}: {reason}")]
    InvalidId { index: usize, reason: String },
    #[error("duplicate building id {id} in frame {frame}")]
    DuplicateId { id: u64, frame: usize },
    #[error("unsupported geometry at feature {index}: {kind}")]
    UnsupportedGeometry { index: usize, kind: String },
    #[error("malformed GeoJSON: {0}")]
    GeoJson(String),
    #[error("no label files found in {0}")]
    NoLabels(PathBuf),
    #[error("frame count mismatch: ground truth has {gt}, proposals have {props}")]
    FrameMismatch { gt: usize, props: usize },
    #[error("no AOIs to score")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("placement infeasible: placed {placed} of {requested} buildings after {attempts} attempts")]
    InfeasiblePlacement { placed: usize, requested: usize, attempts: usize },
    #[error("all frames are invalid")]
    NoValidFrames,
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("malformed cube: {0}")]
    Cube(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
