//! Loop auto-parallelization pipeline: analysis, planning, OpenMP code
//! generation, verification and benchmarking of C kernels.

pub mod codegen;
pub mod corpus;
pub mod depanalysis;
pub mod frontend;
pub mod kernels;
pub mod omp;
pub mod plan;
pub mod bench;
pub mod pipeline;
pub mod reasoner;
pub mod verify;
