use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid region file: {0}")]
    RegionFile(String),

    #[error("invalid surveillance record {person_id}: {reason}")]
    InvalidRecord { person_id: String, reason: String },
    #[error("degenerate rate: {0}")]
    DegenerateRate(String),
    #[error("incoherent rate table: {0}")]
    IncoherentRates(String),
    #[error("impossible observation: {0}")]
    ImpossibleObservation(String),
    #[error("incomplete table: {0}")]
    IncompleteTable(String),
    #[error("person {person_id}: {source}")]
    Person {
        person_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("invalid fix sequence {person_id}: {reason}")]
    InvalidFixes { person_id: String, reason: String },
    #[error("empty support: {0}")]
    EmptySupport(String),
    #[error("activity space level mismatch: {0} vs {1}")]
    LevelMismatch(f64, f64),
    #[error("invalid level {0}: must lie in (0, 100]")]
    InvalidLevel(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid resample: {0}")]
    InvalidResample(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn for_person(self, person_id: &str) -> Error {
        Error::Person {
            person_id: person_id.to_string(),
            source: Box::new(self),
        }
    }
}
