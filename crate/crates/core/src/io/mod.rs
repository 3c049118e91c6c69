//! Volume files and report emission.

mod nifti;
mod report;

pub use nifti::{
    encode_nifti, read_header, read_mask, read_mask_counted, read_volume, write_mask, write_volume, DataKind, MaskRead,
    VolumeFileHeader, SPACING_TOLERANCE_MM,
};
pub use report::{format_real, read_csv_report, write_report, Cell, ReportFormat, Table};
