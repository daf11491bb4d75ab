//! Configuration, table ingestion and deterministic result output.

pub mod config;
pub mod output;
pub mod series;
pub mod svg;
pub mod tables;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use output::{write_json, write_table, Cell, OutputFormat, Table};
pub use series::{load_csv_series, parse_csv_series, Schema};
pub use svg::{render_plot, write_plot, Axis, PlotSpec, Series, Style};
