//! DDPG portfolio management with an integer-share, commission-charging
//! daily backtester and seven classical online portfolio-selection
//! baselines. See the guide in `book/` for a tour.

pub mod agent;
pub mod data;
pub mod env;
pub mod neural;
pub mod util;
pub mod backtest;
pub mod baselines;
pub mod metrics;
pub mod app;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/agent.md")]
    mod agent {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
