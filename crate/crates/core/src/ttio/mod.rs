//! Reading and writing photon streams, spectra, defect line lists,
//! correlation curves and fit reports.

mod curve;
mod linelist;
mod report;
mod spectrum;
mod timetags;

pub use curve::{read_curve, write_curve};
pub use linelist::{read_linelist, DefectLineList, DwPolicy, Mode, DW_CONSISTENCY_TOL};
pub use report::{digest_bytes, read_fit_report, write_fit_report, FitReport};
pub use spectrum::{read_spectrum, write_spectrum, AxisUnit, SpectrumData, SpectrumPoint};
pub use timetags::{
    read_timetags, write_timetags, PhotonRecord, PhotonStream, ReadOptions, TimetagFormat, BINARY_MAGIC,
    MAX_BINARY_TICKS,
};
