use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports.
///
/// Variants split into input-validation problems and numerical failures; see
/// [`Error::is_numerical`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph must have at least 2 vertices and 1 edge (got n={vertices}, m={edges})")]
    TooSmall { vertices: usize, edges: usize },
    #[error("edge {edge} references vertex {vertex}, but the graph has {vertices} vertices")]
    VertexOutOfRange { edge: usize, vertex: usize, vertices: usize },
    #[error("graph is not simple: {0}")]
    NotSimple(String),
    #[error("graph is disconnected: vertex {0} cannot be reached")]
    Disconnected(usize),
    #[error("weight row {vertex} sums to {sum}, expected 1")]
    BadWeightRow { vertex: usize, sum: f64 },
    #[error("weight w[{vertex}][{edge}] = {value} does not match the outgoing incidence pattern")]
    WeightSupportMismatch { vertex: usize, edge: usize, value: f64 },
    #[error("redistribution weights are required but none were given")]
    MissingWeights,
    #[error("vertex {0} is a sink; transport needs every vertex to emit material")]
    HasSink(usize),
    #[error("more than {cap} elementary cycles; raise the cap or use the potential method")]
    CycleEnumerationOverflow { cap: usize },
    #[error("coefficient on edge {edge} is not strictly positive and finite ({value})")]
    NonPositiveCoefficient { edge: usize, value: f64 },
    #[error("edge travel times are not commensurable within tolerance (edge {edge}, snap error {snap})")]
    IncommensurableLengths { edge: usize, snap: f64 },
    #[error("duration {duration} is not an integer multiple of the step {step}")]
    NonGridTime { duration: f64, step: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix has a negative entry at ({row}, {col}): {value}")]
    NotNonnegative { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}, expected 1")]
    NotColumnStochastic { col: usize, sum: f64 },
    #[error("matrix is not irreducible")]
    NotIrreducible,
    #[error("the oriented graph is not strongly connected")]
    NotStronglyConnected,
    #[error("rate support does not match edge adjacency: {0}")]
    SupportMismatch(String),
    #[error("condition (commensurable cycle travel times) fails on this component")]
    LdqFails,
    #[error("period by cycle enumeration ({cycles}) differs from the potential method ({potential})")]
    PeriodMismatch { cycles: String, potential: String },
    #[error("eigenvalue 1 is not semisimple (rank (K-I) = {rank1}, rank (K-I)^2 = {rank2})")]
    SemisimplicityFailure { rank1: usize, rank2: usize },
    #[error("kernel of the discrete generator has dimension {0}, expected 1")]
    KernelDimensionNotOne(usize),
    #[error("eigen-solve failed: {0}")]
    EigenFailure(String),
    #[error("boundary rows are singular: {0}")]
    SingularBoundaryRows(String),
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("scenario schema error: {0}")]
    Schema(String),
}

impl Error {
    /// True for failures of a numerical method as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailure(_)
                | Error::LinearSolveFailure(_)
                | Error::SemisimplicityFailure { .. }
                | Error::KernelDimensionNotOne(_)
                | Error::SingularBoundaryRows(_)
                | Error::CycleEnumerationOverflow { .. }
                | Error::PeriodMismatch { .. }
        )
    }
}
