//! Sender to home-AP unicast with MAC retries, overheard by monitor APs.

use crate::packet::{MacAddr, Packet};
use crate::sim::{RngStream, SimTime};

/// 802.11 retry limit: one original attempt plus twelve retransmissions.
pub const MAX_RETRIES: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub wifi_rate_bps: u64,
    pub per_unicast_loss: f64,
    /// Per-monitor loss probability P, indexed by monitor position.
    pub monitor_loss: Vec<f64>,
    pub propagation_delay: SimTime,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            wifi_rate_bps: 54_000_000,
            per_unicast_loss: 0.05,
            monitor_loss: Vec::new(),
            propagation_delay: SimTime::from_micros(1),
        }
    }
}

impl ChannelConfig {
    /// Air time of a single attempt, rounded up to a whole microsecond.
    pub fn attempt_airtime(&self, frame_bytes: u32) -> SimTime {
        let bits = frame_bytes as u64 * 8 * 1_000_000;
        SimTime::from_micros(bits.div_ceil(self.wifi_rate_bps))
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.per_unicast_loss) {
            return Err(format!(
                "per_unicast_loss out of range: {}",
                self.per_unicast_loss
            ));
        }
        if let Some(p) = self.monitor_loss.iter().find(|p| !ok(**p)) {
            return Err(format!("monitor_loss out of range: {p}"));
        }
        if self.wifi_rate_bps == 0 {
            return Err("wifi_rate must be positive".into());
        }
        Ok(())
    }
}

/// A data frame from the sender addressed to its home AP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WifiFrame {
    pub bssid: MacAddr,
    pub next_hop: MacAddr,
    pub ipid: u16,
    pub inner: Packet,
    pub mac_retry_index: u8,
}

/// What happened to one unicast across all its MAC attempts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnicastOutcome {
    pub attempts: u32,
    pub home_received: bool,
    /// Per monitor, the zero-based attempt indices it overheard.
    pub overheard: Vec<Vec<u32>>,
    pub airtime: SimTime,
}

impl UnicastOutcome {
    /// Time after transmission start at which attempt `k` finishes arriving.
    pub fn attempt_arrival(&self, k: u32, per_attempt: SimTime, prop: SimTime) -> SimTime {
        per_attempt.mul(k as u64 + 1) + prop
    }
}

/// Single-attempt monitor-mode reception.
pub fn overhear_filter(p_loss: f64, rng: &mut RngStream) -> bool {
    !rng.bernoulli(p_loss)
}

/// Plays out the MAC retry loop for one frame.
///
/// `home_rng` draws the primary-link losses; `monitor_rngs[i]` draws
/// monitor i's overhearing so that monitors stay independent of each other.
pub fn transmit_unicast(
    frame_bytes: u32,
    cfg: &ChannelConfig,
    home_rng: &mut RngStream,
    monitor_rngs: &mut [RngStream],
) -> UnicastOutcome {
    let mut overheard = vec![Vec::new(); monitor_rngs.len()];
    let mut attempts = 0;
    let mut home_received = false;
    while attempts <= MAX_RETRIES {
        let k = attempts;
        attempts += 1;
        for (i, rng) in monitor_rngs.iter_mut().enumerate() {
            let p = cfg.monitor_loss.get(i).copied().unwrap_or(0.0);
            if overhear_filter(p, rng) {
                overheard[i].push(k);
            }
        }
        if !home_rng.bernoulli(cfg.per_unicast_loss) {
            home_received = true;
            break;
        }
    }
    let airtime = cfg.attempt_airtime(frame_bytes).mul(attempts as u64) + cfg.propagation_delay;
    UnicastOutcome {
        attempts,
        home_received,
        overheard,
        airtime,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(loss: f64, monitors: Vec<f64>) -> ChannelConfig {
        ChannelConfig {
            per_unicast_loss: loss,
            monitor_loss: monitors,
            ..ChannelConfig::default()
        }
    }

    fn rngs(seed: u64, n: usize) -> (RngStream, Vec<RngStream>) {
        (
            RngStream::new(seed, 0),
            (0..n).map(|i| RngStream::new(seed, 1 + i as u64)).collect(),
        )
    }

    #[test]
    fn lossless_link_delivers_on_first_attempt() {
        let c = cfg(0.0, vec![]);
        let (mut h, mut m) = rngs(1, 0);
        let out = transmit_unicast(1400, &c, &mut h, &mut m);
        assert_eq!(out.attempts, 1);
        assert!(out.home_received);
        assert_eq!(out.airtime, c.attempt_airtime(1400) + c.propagation_delay);
        // 1400 * 8 / 54 = 207.4 us, rounded up.
        assert_eq!(c.attempt_airtime(1400), SimTime::from_micros(208));
    }

    #[test]
    fn total_loss_exhausts_thirteen_attempts() {
        let c = cfg(1.0, vec![0.0]);
        let (mut h, mut m) = rngs(1, 1);
        let out = transmit_unicast(100, &c, &mut h, &mut m);
        assert_eq!(out.attempts, 13);
        assert!(!out.home_received);
        assert_eq!(out.overheard[0].len(), 13);
    }

    #[test]
    fn monitor_edges() {
        let c = cfg(0.0, vec![0.0, 1.0]);
        let (mut h, mut m) = rngs(3, 2);
        for _ in 0..100 {
            let out = transmit_unicast(100, &c, &mut h, &mut m);
            assert_eq!(out.overheard[0], vec![0]);
            assert!(out.overheard[1].is_empty());
        }
    }

    #[test]
    fn mean_attempts_at_half_loss() {
        // Oracle: truncated geometric with p = 0.5 and at most 13 draws,
        // E[K] = sum_{k=0}^{12} 0.5^k.
        let expect: f64 = (0..13).map(|k| 0.5f64.powi(k)).sum();
        let c = cfg(0.5, vec![]);
        let (mut h, mut m) = rngs(11, 0);
        let n = 1_000_000;
        let total: u64 = (0..n)
            .map(|_| transmit_unicast(100, &c, &mut h, &mut m).attempts as u64)
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - expect).abs() / expect < 0.01, "{mean} vs {expect}");
        assert!((mean - 2.0).abs() < 0.02);
    }

    #[test]
    fn nobody_overhears_probability() {
        let p: f64 = 0.6;
        assert!((p.powi(6) - 0.0467).abs() < 1e-4);
        let c = cfg(0.0, vec![p; 6]);
        let (mut h, mut m) = rngs(5, 6);
        let n = 200_000;
        let none = (0..n)
            .filter(|_| {
                let out = transmit_unicast(100, &c, &mut h, &mut m);
                out.overheard.iter().all(|v| v.is_empty())
            })
            .count();
        let rate = none as f64 / n as f64;
        let sigma = (p.powi(6) * (1.0 - p.powi(6)) / n as f64).sqrt();
        assert!((rate - p.powi(6)).abs() < 4.0 * sigma);
    }

    #[test]
    fn three_attempts_at_half_loss() {
        // Frame needing exactly three attempts (first two fail at home).
        let mut m = RngStream::new(9, 1);
        let n = 100_000;
        let seen = (0..n)
            .filter(|_| (0..3).any(|_| overhear_filter(0.5, &mut m)))
            .count();
        let rate = seen as f64 / n as f64;
        let sigma = (0.875f64 * 0.125 / n as f64).sqrt();
        assert!((rate - 0.875).abs() < 4.0 * sigma, "{rate}");
    }

    #[test]
    fn overhearing_rate_converges() {
        for (seed, p) in [(1u64, 0.2), (2, 0.4), (3, 0.6)] {
            let c = cfg(0.0, vec![p]);
            let (mut h, mut m) = rngs(seed, 1);
            let n = 20_000;
            let hits = (0..n)
                .filter(|_| !transmit_unicast(100, &c, &mut h, &mut m).overheard[0].is_empty())
                .count();
            let rate = hits as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate - (1.0 - p)).abs() < 3.0 * sigma, "p={p} rate={rate}");
        }
    }

    #[test]
    fn home_dominates_lossier_monitors() {
        // With P >= per-attempt primary loss, a monitor never beats the home
        // AP's delivery probability.
        let c = cfg(0.3, vec![0.3, 0.5, 0.9]);
        let (mut h, mut m) = rngs(21, 3);
        let n = 50_000;
        let mut home = 0;
        let mut mon = [0usize; 3];
        for _ in 0..n {
            let out = transmit_unicast(100, &c, &mut h, &mut m);
            home += out.home_received as usize;
            for (i, v) in out.overheard.iter().enumerate() {
                mon[i] += !v.is_empty() as usize;
            }
        }
        for m in mon {
            assert!(home >= m);
        }
    }
}
