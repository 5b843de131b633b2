//! Contagion chain: generators, tenor kernels and first-default tables.

mod expm;
mod first_event;
mod kernel;
mod model;

pub use expm::expm_generator;
pub use first_event::{event_probabilities, first_event_kernels, Entity, EventTable, FirstEventChain, FirstEventKernels, FirstEventStep};
pub use kernel::{propagate, step_kernels, write_kernel_csv, StepKernel};
pub use model::{
    build_counting_generator, build_extended_generator, build_generator, ChainState, ExtendedState, GeneratorSpec, IntensityTable,
    Multipliers, RateMatrix,
};
