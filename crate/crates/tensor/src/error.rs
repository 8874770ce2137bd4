use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {shape:?}: every dimension must be positive")]
    InvalidShape { shape: Vec<usize> },

    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("rows have differing lengths")]
    RaggedRows,

    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("{op}: class index {index} out of range for {classes} classes")]
    ClassOutOfRange {
        op: &'static str,
        index: usize,
        classes: usize,
    },

    #[error("{op}: {targets} targets for a batch of {rows}")]
    TargetCount {
        op: &'static str,
        targets: usize,
        rows: usize,
    },

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("optimizer state tracks {expected} blocks, got {got}")]
    BlockCount { expected: usize, got: usize },

    #[error("parameter block `{block}` has shape {param:?} but gradient shape {grad:?}")]
    GradientShape {
        block: String,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
}
