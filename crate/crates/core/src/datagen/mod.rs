//! Training-data generation for the reference boundary value problems.

pub mod banded;
pub mod dataset;
pub mod fd;
pub mod forcing;
pub mod grid;
pub mod io;
pub mod newton;
pub mod system;

pub use fd::residual;
pub use forcing::{enumerate_forcings, parse_families, Family, ForcingSpec};
pub use grid::Grid;
pub use newton::{solve_bvp, solve_forcing, NewtonOptions, SamplePair, NEWTON_TOL};
pub use system::{SystemId, SystemSpec};
pub use dataset::{assemble_dataset, split_sizes, Assembly, AssemblyOptions, Dataset, Split, SplitCounts};
pub use io::{read_dataset, write_dataset};
