//! File formats, scenario configuration and the task pipelines.

pub mod config;
pub mod path;
pub mod pipeline;
pub mod report;
pub mod table;

pub use config::{ScenarioConfig, Task};
pub use pipeline::{run_scenario, simulate_data};
pub use report::{emit_csv, human_table, ReportBundle};
pub use table::{linear_interpolate, load_panel, load_table, save_panel, DataTable};
