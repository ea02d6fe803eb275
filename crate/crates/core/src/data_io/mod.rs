//! Tree-ring ingestion and the canonical long-format panel CSV.
//!
//! The pipeline is: ring widths → basal-area increments per tree
//! ([`ring_width_to_bai`]) → per-site sums and counts ([`aggregate_panel`]) →
//! lagged design matrix with presample ([`build_design`]). Trees can be split
//! by age beforehand with [`split_age_classes`].

mod age;
mod covariates;
mod design;
mod panel_csv;
mod rings;

pub use age::{age_class, split_age_classes, AgeSplit, DEFAULT_AGE_BREAKS};
pub use covariates::CovariateTable;
pub use design::{
    build_design, check_moisture, moisture_kind, ColumnTerm, DesignColumn, DesignManifest, DesignSpec, DesignedPanel,
    DroppedSite, Moisture,
};
pub use panel_csv::{read_panel_table, write_panel, PanelRow, PanelTable, TableSite};
pub use rings::{
    aggregate_panel, read_rings, ring_width_to_bai, AggregatedPanel, RawTreeSeries, SiteAggregate, SiteYear,
};
