//! Sequential posted pricing of a perfectly divisible item under linear
//! (per-unit) pricing.
//!
//! The crate simulates the mechanism against stochastic concave valuations,
//! calibrates the price so an expected target fraction of the item trades,
//! computes exact welfare optima by water-filling, bounds optimal revenue
//! through a discretized ex-ante relaxation, and numerically certifies the
//! welfare and revenue guarantees at desk scale.
//!
//! Module map:
//!
//! * [`valuation`] — concave valuation families and distributions over them;
//! * [`mechanism`] — one pricing run and its Monte Carlo expectations;
//! * [`welfare`] — the approximation constants, optimal allocations,
//!   welfare ratios, and the two utility lemmas;
//! * [`calibration`] — sold-fraction estimation and price bisection;
//! * [`revenue`] — the ex-ante relaxation, linear-pricing search, gap
//!   certificate, and the logarithmic lower-bound instance;
//! * [`experiment`] — declarative experiment configs, reports, CSV series.

pub mod calibration;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod mechanism;
pub mod revenue;
pub mod rng;
pub mod valuation;
pub mod welfare;

pub use error::{Error, Result};
pub use estimate::{Estimate, RatioEstimate};
pub use valuation::{ConcaveValuation, ValuationDistribution, ValuationProfile};
