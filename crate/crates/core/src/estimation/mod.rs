//! Disturbance observer, filtering, rank correlation and offline
//! identification of the ground-effect curves.

mod filter;
mod fit;
mod ident;
mod observer;
mod spearman;

pub use filter::{LowPass, LowPass3};
pub use fit::{levenberg_marquardt, FitReport, LmOptions};
pub use ident::{
    fit_drag, fit_fg, fit_mg, measure_fg_flight, measure_fg_platform, normalize_coeff, top_decile_mean, DragFit,
    DragSampleRow, MgSample,
};
pub use observer::{ObserverInput, WrenchEstimate, WrenchObserver};
pub use spearman::{average_ranks, spearman};
