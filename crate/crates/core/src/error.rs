use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid group symbol {0:?}")]
    InvalidSymbol(char),
    #[error("entries of {0:?} do not sum to zero")]
    NotAFlow(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("flow length {0} outside 1..=31")]
    UnsupportedLength(usize),
    #[error("quotient by the zero element is undefined")]
    ZeroQuotient,
    #[error("invalid face spec: {0}")]
    InvalidFace(String),
    #[error("automorphism images must be distinct nonzero elements")]
    InvalidAutomorphism,
    #[error("tables are not compatible")]
    Incompatible,
    #[error("move removes rows not present in the table")]
    RowsMissing,
    #[error("trivial move: removed and inserted rows coincide")]
    TrivialMove,
    #[error("move degree {degree} exceeds bound {bound}")]
    DegreeTooLarge { degree: usize, bound: usize },
    #[error("missing parameter for column {col} symbol {sym}")]
    MissingParameter { col: usize, sym: char },
    #[error("bad pair in row {0}")]
    BadPairPresent(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("profile key does not fit: {0}")]
    KeyOverflow(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("values inconsistent with a polynomial of degree {0}")]
    NotPolynomial(usize),
    #[error("need more values: {0}")]
    NeedMoreValues(String),
    #[error("no rule applies: {0}")]
    DeadEnd(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
