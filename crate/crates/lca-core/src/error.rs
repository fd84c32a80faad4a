use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by dataset handling, model fitting and post-processing.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A declared column was not found in the dataset.
    #[error("unknown column `{name}`; available: {}", available.join(", "))]
    UnknownColumn { name: String, available: Vec<String> },

    /// An indicator response code lies outside `1..=K` for its indicator.
    #[error(
        "indicator `{indicator}` has code {code} at row {row} but only {n_categories} categories"
    )]
    CodeOutOfRange {
        row: usize,
        indicator: String,
        code: u8,
        n_categories: u8,
    },

    /// Column names repeat, or lengths disagree with the response matrix.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// Listwise filtering removed every row.
    #[error("no complete cases: every row has at least one missing value")]
    NoCompleteCases,

    /// The fit requires complete cases but the dataset still contains
    /// missing values (apply listwise filtering first, or opt in to the
    /// partial-likelihood missing policy).
    #[error("missing value in column `{column}` at row {row}; apply listwise filtering first or use the partial-likelihood missing policy")]
    MissingData { row: usize, column: String },

    /// An indicator was used as a numeric covariate without an explicit
    /// alias declaration.
    #[error("indicator `{name}` is not declared as a numeric covariate; declare the alias on the dataset before referencing it in a formula")]
    IndicatorNotAliased { name: String },

    /// Formula text could not be parsed.
    #[error("formula parse error at byte {position}: {message}")]
    FormulaParse { position: usize, message: String },

    /// The same term appears twice in a formula (after canonicalization).
    #[error("duplicate formula term `{term}`")]
    DuplicateTerm { term: String },

    /// A model specification field is out of its admissible range.
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    /// A covariate or design-matrix entry is NaN or infinite.
    #[error("non-finite covariate value in design column `{column}` at row {row}")]
    NonFiniteCovariate { row: usize, column: String },

    /// The design matrix does not have full column rank.
    #[error(
        "design matrix is rank deficient: column `{column}` is collinear with earlier columns"
    )]
    CollinearColumns { column: String },

    /// A respondent's posterior mass vanished (only possible with a zero
    /// probability floor).
    #[error("zero posterior mass for row {row}; raise the probability floor above zero")]
    ZeroPosteriorMass { row: usize },

    /// Shapes of parameters, data and design matrix disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The empirical information matrix could not be inverted.
    #[error("empirical information matrix is singular; standard errors need more data or fewer terms")]
    SingularInformation,

    /// The number of response-pattern cells exceeds the configured cap.
    #[error("{cells} response-pattern cells exceed the cap of {cap}; restrict the indicator set or raise the cap")]
    CellCapExceeded { cells: u128, cap: usize },

    /// Consistency probabilities need a square class-by-category table.
    #[error("diagonal undefined for indicator `{indicator}`: {n_categories} categories but {n_classes} classes")]
    DiagonalUndefined {
        indicator: String,
        n_categories: usize,
        n_classes: usize,
    },

    /// Class shares passed to a diagnostic do not form a distribution.
    #[error("invalid class shares: {0}")]
    InvalidShares(String),

    /// An instance is outside the guarded size range of a brute-force oracle.
    #[error("instance outside oracle guard: {0}")]
    OracleGuard(String),

    /// A generator specification is inconsistent.
    #[error("invalid generator specification: {0}")]
    InvalidGenerator(String),

    /// A fit inside a class-count scan failed.
    #[error("fit with {n_classes} classes failed: {source}")]
    ScanFit {
        n_classes: usize,
        #[source]
        source: Box<Error>,
    },

    /// A fit inside a model comparison failed.
    #[error("model `{label}` failed: {source}")]
    CompareFit {
        label: String,
        #[source]
        source: Box<Error>,
    },
}
