//! Dense networks with hand-written reverse-mode gradients.

pub mod categorical;
pub mod checkpoint;
pub mod critic;
pub mod finite_diff;
pub mod gradcheck;
pub mod kernels;
pub mod params;
pub mod policy;
pub mod rmsprop;

pub use categorical::{sample_categorical, MaskedCategorical};
pub use checkpoint::{load_parameters, save_parameters};
pub use critic::{CriticNet, CriticTape};
pub use finite_diff::{finite_diff_coords, finite_diff_grad, grad_of_grad, relative_error};
pub use gradcheck::{run_gradcheck, GradcheckReport, GradcheckSettings};
pub use params::{ParameterSet, Segment};
pub use policy::{RecurrentPolicyNet, StepTape, ACTIONS, DEFAULT_HIDDEN};
pub use rmsprop::{RmspropConfig, RmspropState, UpdateOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter layout: {0}")]
    Layout(String),
    #[error("tapes do not form one contiguous episode")]
    BrokenTape,
    #[error("every action is masked")]
    AllMasked,
    #[error("non-finite gradient at coordinate {index}")]
    NonFiniteGradient { index: usize },
    #[error("checkpoint i/o: {0}")]
    Io(String),
}
