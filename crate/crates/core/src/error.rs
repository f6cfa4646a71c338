use thiserror::Error;

/// Errors raised by the simulated device and by the framework built on it.
///
/// DMA and transfer faults are hard errors: the simulator never truncates or
/// silently realigns a transfer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid device configuration: {0}")]
    InvalidConfig(String),

    #[error("out of bank memory: requested {requested} bytes, {available} available")]
    OutOfBankMemory { requested: usize, available: usize },

    #[error("alignment violation: {what} = {value} is not a multiple of {alignment}")]
    AlignmentViolation {
        what: &'static str,
        value: usize,
        alignment: usize,
    },

    #[error("size limit violation: {size} bytes exceeds the {limit}-byte limit")]
    SizeLimitViolation { size: usize, limit: usize },

    #[error("empty DMA transfer")]
    EmptyTransfer,

    #[error("out of bounds: {what} range {start}..{end} exceeds {limit}")]
    OutOfBounds {
        what: &'static str,
        start: usize,
        end: usize,
        limit: usize,
    },

    #[error("core index {core} out of range for {num_cores} cores")]
    InvalidCore { core: usize, num_cores: usize },

    #[error("parallel transfer slices have unequal sizes ({first} vs {other} bytes)")]
    UnequalSliceSizes { first: usize, other: usize },

    #[error("parallel transfer needs one slice per core: got {got}, expected {expected}")]
    SliceCountMismatch { got: usize, expected: usize },

    #[error("scratchpad overflow: kernel claims {required} bytes, {available} usable")]
    ScratchpadOverflow { required: usize, available: usize },

    #[error("invalid tasklet count {requested} (allowed 1..={max})")]
    TaskletCountInvalid { requested: usize, max: usize },

    #[error("lock on entry {entry} is already held")]
    LockHeld { entry: usize },

    #[error("unknown array id {0:?}")]
    UnknownArrayId(String),

    #[error("duplicate array id {0:?}")]
    DuplicateArrayId(String),

    #[error("array {id:?} has layout {found}, expected {expected}")]
    WrongLayout {
        id: String,
        found: &'static str,
        expected: &'static str,
    },

    #[error("host buffer of {got} bytes does not match {len} elements of {type_size} bytes")]
    HostBufferSize {
        got: usize,
        len: usize,
        type_size: usize,
    },

    #[error("type size must be at least one byte")]
    ZeroTypeSize,

    #[error("invalid handle kind {0}")]
    InvalidHandleKind(&'static str),

    #[error("{kind} handle is missing its {callback} callback")]
    MissingCallback {
        kind: &'static str,
        callback: &'static str,
    },

    #[error("handle kind mismatch: iterator needs {expected}, handle is {found}")]
    HandleKindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("unknown handle {0}")]
    UnknownHandle(usize),

    #[error("handle context is {expected} bytes, got {got}")]
    ContextSizeMismatch { expected: usize, got: usize },

    #[error("zip length mismatch: {first} vs {second}")]
    LengthMismatch { first: usize, second: usize },

    #[error("zip inputs {first:?} and {second:?} are distributed differently across cores")]
    DistributionMismatch { first: String, second: String },

    #[error("element of {type_size} bytes cannot be streamed in DMA commands of at most {dma_max} bytes")]
    ElementTooLarge { type_size: usize, dma_max: usize },

    #[error("no reduction plan fits {required} accumulator bytes in the scratchpad")]
    NoFeasiblePlan { required: usize },

    #[error("reduction key {key} out of range for output of {len} entries")]
    KeyOutOfRange { key: usize, len: usize },

    #[error("output length must be at least one")]
    EmptyOutput,

    #[error("oracle mismatch in {benchmark}: {detail}")]
    OracleMismatch { benchmark: String, detail: String },

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
