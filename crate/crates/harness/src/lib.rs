//! Offline front end for the foveated renderer: synthetic scene export,
//! trajectory rendering with gaze traces, foveal-crop comparisons and
//! timing sweeps.

pub mod bench;
pub mod error;
pub mod gaze;
pub mod io;
pub mod sequence;

pub use bench::{bench_sweep, BenchReport, BenchRow, Sweep};
pub use error::{HarnessError, Result};
pub use gaze::{GazeSample, GazeTrace};
pub use io::{load_scene, write_scene, LoadedScene};
pub use sequence::{compare_modes, render_sequence, CompareRow, ResolverSpec, SequenceOptions};
