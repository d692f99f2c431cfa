//! Mode decomposition: plain EMD and the two-mode ensemble variant that feeds
//! the forecasters.

pub mod ceemdan;
pub mod emd;
pub mod spline;

pub use ceemdan::{ceemdan, ceemdan_values, CeemdanConfig, Decomposition};
pub use emd::{emd, emd_values, BoundaryMode, EmdConfig, EmdOutput};
