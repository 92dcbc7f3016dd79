//! Message delay model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::replica::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub base_low: u64,
    pub base_high: u64,
    pub spike_prob: f64,
    /// Delivery delay used instead of the base draw when a spike hits.
    pub spike_ms: u64,
    /// Post-GST delivery bound.
    pub delta: u64,
    pub gst: SimTime,
    /// Extra uniform delay in `[0, pre_gst_jitter]` for messages sent before GST.
    pub pre_gst_jitter: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            base_low: 150,
            base_high: 350,
            spike_prob: 0.10,
            spike_ms: 500,
            delta: 1000,
            gst: 0,
            pre_gst_jitter: 0,
        }
    }
}

impl LatencyModel {
    /// Every message takes exactly `delay` ms.
    pub fn fixed(delay: u64) -> Self {
        LatencyModel {
            base_low: delay,
            base_high: delay,
            spike_prob: 0.0,
            spike_ms: delay,
            delta: delay,
            gst: 0,
            pre_gst_jitter: 0,
        }
    }

    /// Base window of the given mean and the default spread of +-100 ms.
    pub fn with_mean(mut self, mean: u64) -> Self {
        let spread = 100.min(mean);
        self.base_low = mean - spread;
        self.base_high = mean + spread;
        self
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.base_low > self.base_high {
            return Err("base_low exceeds base_high");
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return Err("spike_prob must lie in [0, 1]");
        }
        if self.delta == 0 {
            return Err("delta must be positive");
        }
        Ok(())
    }

    pub fn expected_post_gst(&self) -> f64 {
        let base = (self.base_low + self.base_high) as f64 / 2.0;
        let mean = (1.0 - self.spike_prob) * base + self.spike_prob * self.spike_ms as f64;
        mean.min(self.delta as f64)
    }
}

/// Draws the delay for a message sent at `send_time`.
pub fn sample_latency<R: Rng + ?Sized>(model: &LatencyModel, rng: &mut R, send_time: SimTime) -> u64 {
    let mut delay = rng.random_range(model.base_low..=model.base_high);
    if model.spike_prob > 0.0 && rng.random_bool(model.spike_prob) {
        delay = model.spike_ms;
    }
    if send_time >= model.gst {
        delay.min(model.delta)
    } else {
        delay + rng.random_range(0..=model.pre_gst_jitter)
    }
}
