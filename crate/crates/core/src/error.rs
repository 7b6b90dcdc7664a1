use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scene parse error: {0}")]
    SceneParse(String),

    #[error("unsupported scene feature: {0}")]
    Unsupported(String),

    #[error("scene has no objects")]
    NoObjects,

    #[error("object `{0}` lies outside room bounds")]
    OutsideRoom(String),

    #[error("duplicate material slot name `{0}`")]
    DuplicateSlot(String),

    #[error("boxes `{0}` and `{1}` overlap")]
    Collision(String, String),

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("position {0:?} is not in free space")]
    Placement([f64; 3]),

    #[error("sampling failed after {0} attempts")]
    SamplingFailed(usize),

    #[error("infeasible placement: {0}")]
    Infeasible(String),

    #[error("malformed model response: {reason}\n--- raw payload ---\n{raw}")]
    MalformedResponse { reason: String, raw: String },

    #[error("position count mismatch: {0}")]
    CountMismatch(String),

    #[error("positions out of bounds after repair: {0}")]
    OutOfBounds(String),

    #[error("no material assignment matched any scene slot")]
    NoMatchedSlots,

    #[error("missing prompt input: {0}")]
    MissingInput(&'static str),

    #[error("vlm transport: {0}")]
    Transport(String),

    #[error("no replay fixture for template `{template}` (hash {hash})")]
    NoFixture { template: String, hash: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {iter}: sigma = {sigma:?}")]
    NonFinite { iter: usize, sigma: Vec<f64> },

    #[error("trace cache: {0}")]
    Cache(String),

    #[error("{context}: {source}")]
    Run { context: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
