//! Model-agnostic containers and the model contract.

pub mod grid;
pub mod model;
pub mod panel;
pub mod params;
pub mod simulate;
pub mod state;

pub use grid::{single_block, unit_blocks, validate_partition, TimeGrid, UnitGraph, DEFAULT_DT};
pub use model::{SpatPompModel, UnitParams};
pub use panel::ObservationPanel;
pub use params::{Parameter, ParameterSet, Transform};
pub use simulate::{percentile_summary, simulate, PercentileSummary, Simulation};
pub use state::StateMatrix;
