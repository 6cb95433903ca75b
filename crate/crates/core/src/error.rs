use thiserror::Error;

/// Errors raised by the arithmetic, transform, layout, schedule and simulator layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("modulus {0} is outside the supported range [3, 2^63)")]
    ModulusOutOfRange(u64),

    #[error("operand {value} is not reduced modulo {q}")]
    OperandOutOfRange { value: u64, q: u64 },

    #[error("modulus {0} is even; halving needs an odd modulus")]
    EvenModulus(u64),

    #[error("modulus {q} is not congruent to 1 mod {two_n}")]
    NotNttFriendly { q: u64, two_n: u64 },

    #[error("modulus {0} has no primitive root attached")]
    MissingPrimitiveRoot(u64),

    #[error("could not factor {0}")]
    Factorization(u64),

    #[error("no prime below 2^{bits} congruent to 1 mod {two_n} at index {index}")]
    NoPrimeFound { bits: u32, two_n: u64, index: usize },

    #[error("invalid prime search: {0}")]
    InvalidPrimeSearch(String),

    #[error("{k}-bit modulus does not fit a {width}-bit step multiplier (needs k <= W)")]
    StepWidthTooNarrow { k: u32, width: u32 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("operands use different moduli ({0} vs {1})")]
    ModulusMismatch(u64, u64),

    #[error("degree {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),

    #[error("degree {0} must be a power of two with even log2 and at least 16")]
    UnsupportedLayoutDegree(usize),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("Npe = {npe} is invalid for N = {n}: must be a power of two in [1, {max}]")]
    InvalidPeCount { npe: usize, n: usize, max: usize },

    #[error("coefficient {index} is not below the basis product")]
    CoefficientOutOfRange { index: usize },

    #[error("RNS basis is empty or inconsistent: {0}")]
    InvalidBasis(String),

    #[error("pipeline: {0}")]
    InvalidPipeline(String),

    #[error(
        "RAW bound violated: delay {delay} is not below {bound}; cycle prediction is undefined"
    )]
    BoundViolated { delay: u64, bound: u64 },

    #[error("{kind} hazard at cycle {cycle} on bank {bank} address {address}")]
    Hazard {
        kind: String,
        cycle: u64,
        bank: usize,
        address: usize,
    },

    #[error("simulated result disagrees with reference transform at coefficient {index}")]
    ResultMismatch { index: usize },

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
