use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};

use crate::domain::TradeRecord;

/// A quiet market: Poisson trade arrivals, a flat price with small
/// independent noise, and log-normal trade sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuietSeriesParams {
    pub seed: u64,
    pub start_ms: i64,
    pub duration_s: u64,
    pub trades_per_second: f64,
    pub price: f64,
    /// Relative standard deviation of each trade price around `price`.
    pub price_noise: f64,
    /// Median quote volume per trade.
    pub median_quote: f64,
    pub buy_fraction: f64,
    pub first_id: u64,
}

impl QuietSeriesParams {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            start_ms: 1_600_000_000_000,
            duration_s: 12 * 3600,
            trades_per_second: 0.2,
            price: 0.001,
            price_noise: 5e-4,
            median_quote: 1.0,
            buy_fraction: 0.5,
            first_id: 1,
        }
    }
}

/// Generates a sorted trade series. Deterministic in `params.seed`.
pub fn quiet_series(params: &QuietSeriesParams) -> Vec<TradeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gap = Exp::new(params.trades_per_second / 1_000.0).expect("positive trade rate");
    let noise = Normal::new(0.0, params.price_noise).expect("finite price noise");
    let size = LogNormal::new(params.median_quote.ln(), 0.5).expect("positive trade size");
    let end_ms = params.start_ms + params.duration_s as i64 * 1_000;

    let mut out = Vec::new();
    let mut t = params.start_ms as f64;
    loop {
        t += gap.sample(&mut rng);
        let ts_ms = t.floor() as i64;
        if ts_ms >= end_ms {
            break;
        }
        let price = params.price * (1.0 + noise.sample(&mut rng)).max(0.5);
        let quote: f64 = size.sample(&mut rng);
        let is_buy = rng.random_bool(params.buy_fraction);
        let id = params.first_id + out.len() as u64;
        out.push(TradeRecord::new(id, ts_ms, price, quote / price, is_buy));
    }
    out
}
