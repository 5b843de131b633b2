//! Rank-n equivalent-contract tree, bilateral prices, par spreads and CVA.

mod conditioned;
mod pricer;
mod tree;

pub use conditioned::conditioned_model;
pub use pricer::{
    cva, BilateralPriceReport, EngineOptions, PricingEngine, ReportRecord, SpreadFit, TreeSettlement, PRICE_TOLERANCE,
    SPREAD_BRACKET,
};
pub use tree::{node_data, smallest_window, Hit, NodeData, NodeSet, PricingTree};
