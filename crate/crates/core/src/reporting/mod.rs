//! Dataset statistics, event-level scores and pipeline timing.

mod bench;
mod metrics;
mod stats;

pub use bench::{bench, BenchReport};
pub use metrics::{match_events, score_by_kind, score_events, ClassificationMetrics, Scored};
pub use stats::{
    compute_stats, DirectionStats, Histogram, SpeedAggregate, StandingCounts, StatsConfig,
    StatsReport,
};
