use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("momentum {re}{im:+}i is off the real and positive imaginary axes")]
    OffAxisMomentum { re: f64, im: f64 },

    #[error("momentum k = {k} sits exactly on the threshold of channel {channel}")]
    AtThreshold { channel: usize, k: f64 },

    #[error("solution overflow in channel {channel} at k = {k} (growth factor {growth:e})")]
    Overflow { channel: usize, k: f64, growth: f64 },

    #[error("matching matrix is numerically singular at k = {k}")]
    SingularMatching { k: f64 },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("bound-state root at the scan boundary kappa = {kappa}; widen the window")]
    RootAtScanBoundary { kappa: f64 },

    #[error("unresolved roots near kappa = {kappa}; reduce the scan step")]
    UnresolvedRoots { kappa: f64 },

    #[error("pole at kappa = {kappa} is not simple (d det A / dk = {derivative:e})")]
    NonSimplePole { kappa: f64, derivative: f64 },

    #[error("table too sparse near threshold of channel {channel}: {points} points in window")]
    SparseThresholdWindow { channel: usize, points: usize },

    #[error("threshold windows of channels {a} and {b} overlap")]
    OverlappingWindows { a: usize, b: usize },

    #[error("point ({x}, {y}) lies outside the kernel cache")]
    OutsideKernelBox { x: f64, y: f64 },

    #[error("linear system at x = {x} is ill-conditioned (condition {condition:e})")]
    IllConditioned { x: f64, condition: f64 },

    #[error("reconstructed potential is asymmetric ({ratio:.3e} of max |V|)")]
    AsymmetricReconstruction { ratio: f64 },

    #[error("reconstructed potential has imaginary part {ratio:.3e} of max |V|")]
    ComplexReconstruction { ratio: f64 },

    #[error("fit with {n_bound} bound states rejected: relative residual {residual:.3e}")]
    FitRejected { n_bound: usize, residual: f64 },

    #[error("fit with {n_bound} bound states has a term at kappa = {kappa:.3e} carrying {share:.1e} of the data")]
    SpuriousExponent { kappa: f64, share: f64, n_bound: usize },

    #[error("fitted exponents {a} and {b} collide")]
    ExponentCollision { a: f64, b: f64 },

    #[error("least-squares design matrix is rank deficient")]
    RankDeficient,

    #[error("grid ends at {x_hi} but the potential is still above tolerance there")]
    GridTooNarrow { x_hi: f64 },

    #[error("factorization solution is singular at x = {x}")]
    FactorizationNode { x: f64 },
}
