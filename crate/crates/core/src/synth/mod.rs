//! Ground-truth market simulator: regime-switching stochastic-volatility
//! dynamics, Black–Scholes pricing and IV inversion, synthetic quote
//! streams with known regime labels, and direct Gaussian panel fixtures.

pub mod bs;
mod model;
mod panel;
mod paths;
pub mod sabr;
mod quotes;

pub use bs::{bs_price, bs_vega, implied_vol, norm_cdf, norm_pdf, price_bounds};
pub use model::{RegimeSchedule, RegimeSegment, ScalarFn, SvModelSpec};
pub use panel::{block_labels, gaussian_regime_panel, GaussianRegime};
pub use paths::{duration_years, simulate_paths, SimulatedPath};
pub use quotes::{emit_quotes, tabulate_truth, EmittedQuotes, McPricing, QuoteGrid};
pub use sabr::SabrParams;
