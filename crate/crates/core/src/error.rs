use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("steering angle {0}° is not in the catalog {{-30, -15, 0, 15, 30}}")]
    InvalidAngle(f64),

    #[error("incident direction is parallel to the reflecting plane")]
    Grazing,

    #[error("delay spread is undefined for an empty power delay profile")]
    EmptyProfile,

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("genome length {got} does not match tile count {expected}")]
    GenomeLength { expected: usize, got: usize },

    #[error("multi-user problem has no users")]
    EmptyProblem,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown tile id {0}")]
    UnknownTile(usize),

    #[error("no live route to tile {0}")]
    Undeliverable(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
