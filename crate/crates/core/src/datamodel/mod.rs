//! Typed ingestion of RD samples and per-cutoff option tables.

mod dataset;
mod options;

pub use dataset::{
    load_dataset, read_column_by_row, read_column_values, read_dataset, write_dataset, ColumnMap, CutoffGroup, Dataset,
    DesignKind, LoadReport, LoadedData, MultiCutoffDataset, Observation,
};
pub use options::{
    load_options, parse_options_table, reject_unsupported, BwSelect, CutoffOptions, PerCutoffOptions,
    UNSUPPORTED_OPTIONS,
};
