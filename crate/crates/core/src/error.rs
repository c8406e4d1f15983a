use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel problem: {0}")]
    InvalidProblem(String),

    #[error("successive approximation did not reach tol after {iterations} iterations (last increment {final_increment:e})")]
    IterationLimit {
        iterations: usize,
        final_increment: f64,
    },

    #[error("kernel family {found} cannot provide gains for {expected}")]
    FamilyMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("incompatible grids: kernel n = {kernel}, state nx = {state}")]
    IncompatibleGrids { kernel: usize, state: usize },

    #[error("singular linear system in time stepper")]
    SingularSystem,

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("scenario {0} needs kernels that were not supplied")]
    MissingKernels(&'static str),

    #[error("norm series is not positive at t = {t}")]
    NonPositiveNorm { t: f64 },

    #[error("decay fit needs at least 10 samples in window, got {0}")]
    TooFewSamples(usize),

    #[error("λ₁λ₂ = {0} < 0 gives a complex spectrum")]
    ComplexSpectrum(f64),

    #[error("lyapunov monitor requires an anti-collocated output-feedback trajectory")]
    WrongScenario,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("missing required key `{0}`")]
    MissingRequired(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
