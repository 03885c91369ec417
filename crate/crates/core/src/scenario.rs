//! Scenario description and its `key = value` text format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::gateway::{AckTrigger, CreditPolicy, Mode, Strategy};
use crate::overhead::theoretical_max;
use crate::packet::Proto;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Backhaul round-trip latency between APs and the gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RttPreset {
    FixedMs(u64),
    /// Per-AP RTT drawn uniformly from `[lo, hi]` ms.
    UniformMs(u64, u64),
}

impl fmt::Display for RttPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RttPreset::FixedMs(ms) => write!(f, "{ms}"),
            RttPreset::UniformMs(lo, hi) => write!(f, "{lo}-{hi}"),
        }
    }
}

impl FromStr for RttPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "random" {
            return Ok(RttPreset::UniformMs(20, 80));
        }
        if let Some((a, b)) = s.split_once('-') {
            let lo = a.trim().parse().map_err(|_| format!("bad range {s:?}"))?;
            let hi = b.trim().parse().map_err(|_| format!("bad range {s:?}"))?;
            return Ok(RttPreset::UniformMs(lo, hi));
        }
        s.parse()
            .map(RttPreset::FixedMs)
            .map_err(|_| format!("bad rtt {s:?}"))
    }
}

/// Sender application rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SenderRate {
    /// Saturating sender (TCP bulk); for UDP, the aggregate BaPu ceiling.
    Unlimited,
    Fixed(u64),
}

impl fmt::Display for SenderRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SenderRate::Unlimited => f.write_str("unlimited"),
            SenderRate::Fixed(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for SenderRate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "unlimited" {
            return Ok(SenderRate::Unlimited);
        }
        parse_rate(s).map(SenderRate::Fixed)
    }
}

/// Accepts plain bit/s or a `K`/`M` suffix (`500K`, `11M`, `2.5M`).
pub fn parse_rate(s: &str) -> Result<u64, String> {
    let (num, mult) = match s.chars().last() {
        Some('K' | 'k') => (&s[..s.len() - 1], 1e3),
        Some('M' | 'm') => (&s[..s.len() - 1], 1e6),
        _ => (s, 1.0),
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("bad rate {s:?}"))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(format!("bad rate {s:?}"));
    }
    Ok((v * mult).round() as u64)
}

fn proto_from_str(s: &str) -> Result<Proto, String> {
    match s {
        "tcp" => Ok(Proto::Tcp),
        "udp" => Ok(Proto::Udp),
        _ => Err(format!("unknown protocol {s:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_aps: u32,
    pub mode: Mode,
    pub proto: Proto,
    pub strategy: Strategy,
    /// Redundant-forwarding probability for `modulo_redundant`.
    pub p_extra: f64,
    pub rtt: RttPreset,
    /// Monitor loss probability P (all monitors).
    pub monitor_loss: f64,
    pub per_unicast_loss: f64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
    pub sender_rate: SenderRate,
    /// Stop the sender after this many application bytes (0 = unbounded).
    pub transfer_bytes: u64,
    pub payload: u32,
    pub uplink_bps: u64,
    pub downlink_bps: u64,
    pub wifi_bps: u64,
    pub queue_cap: u32,
    pub ap_buffer: usize,
    pub reorder_buffer: usize,
    pub adv_window: u32,
    pub delayed_ack: bool,
    pub fr_inflation: bool,
    pub probe_margin_ms: u64,
    pub reschedule: bool,
    /// Send to a BaPu port; when false the flow takes the plain home path.
    pub bapu: bool,
    pub credit: CreditPolicy,
    /// Waiting-packet count that forces a schedule; 0 disables.
    pub overflow: usize,
    /// Per-AP in-flight byte cap at the gateway; 0 disables.
    pub inflight_cap: u32,
    pub ack_trigger: AckTrigger,
    pub fault_prob: f64,
    pub shaper_study: bool,
    pub shaper_floor_bps: u64,
    pub regular_bps: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_aps: 7,
            mode: Mode::Basic,
            proto: Proto::Tcp,
            strategy: Strategy::FcfsCapacity,
            p_extra: 0.3,
            rtt: RttPreset::FixedMs(32),
            monitor_loss: 0.0,
            per_unicast_loss: 0.05,
            duration_s: 60.0,
            warmup_s: 5.0,
            seed: 1,
            sender_rate: SenderRate::Unlimited,
            transfer_bytes: 0,
            payload: 1350,
            uplink_bps: 2_000_000,
            downlink_bps: 20_000_000,
            wifi_bps: 54_000_000,
            queue_cap: 65536,
            ap_buffer: 256,
            reorder_buffer: 256,
            adv_window: 192 << 10,
            delayed_ack: false,
            fr_inflation: true,
            probe_margin_ms: 10,
            reschedule: true,
            bapu: true,
            credit: CreditPolicy::InFlight,
            overflow: crate::gateway::DEFAULT_OVERFLOW_LIMIT,
            inflight_cap: crate::gateway::DEFAULT_INFLIGHT_CAP,
            ack_trigger: AckTrigger::Report,
            fault_prob: 0.0,
            shaper_study: false,
            shaper_floor_bps: 500_000,
            regular_bps: 1_200_000,
        }
    }
}

/// Every key the text format accepts, in output order.
pub const KEYS: &[&str] = &[
    "n_aps",
    "mode",
    "proto",
    "strategy",
    "p_extra",
    "rtt",
    "monitor_loss",
    "per_unicast_loss",
    "duration_s",
    "warmup_s",
    "seed",
    "sender_rate",
    "transfer_bytes",
    "payload",
    "uplink",
    "downlink",
    "wifi_rate",
    "queue_cap",
    "ap_buffer",
    "reorder_buffer",
    "adv_window",
    "delayed_ack",
    "fr_inflation",
    "probe_margin_ms",
    "reschedule",
    "bapu",
    "credit",
    "overflow",
    "inflight_cap",
    "ack_trigger",
    "fault_prob",
    "shaper_study",
    "shaper_floor",
    "regular_rate",
];

impl Scenario {
    /// Parses scenario text on top of the defaults.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut seen = BTreeMap::new();
        let mut sc = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ScenarioError::Syntax { line: line_no })?;
            let k = k.trim();
            let v = v.trim();
            if !KEYS.contains(&k) {
                return Err(ScenarioError::UnknownKey {
                    line: line_no,
                    key: k.to_string(),
                });
            }
            if seen.insert(k.to_string(), line_no).is_some() {
                return Err(ScenarioError::DuplicateKey {
                    line: line_no,
                    key: k.to_string(),
                });
            }
            sc.set(k, v)?;
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ScenarioError> {
        fn num<T: FromStr>(field: &'static str, v: &str) -> Result<T, ScenarioError> {
            v.parse().map_err(|_| invalid(field, format!("cannot parse {v:?}")))
        }
        fn boolean(field: &'static str, v: &str) -> Result<bool, ScenarioError> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(invalid(field, format!("expected true/false, got {v:?}"))),
            }
        }
        fn rate(field: &'static str, v: &str) -> Result<u64, ScenarioError> {
            parse_rate(v).map_err(|e| invalid(field, e))
        }
        match key {
            "n_aps" => self.n_aps = num("n_aps", v)?,
            "mode" => self.mode = v.parse().map_err(|e| invalid("mode", e))?,
            "proto" => self.proto = proto_from_str(v).map_err(|e| invalid("proto", e))?,
            "strategy" => self.strategy = v.parse().map_err(|e| invalid("strategy", e))?,
            "p_extra" => self.p_extra = num("p_extra", v)?,
            "rtt" => self.rtt = v.parse().map_err(|e| invalid("rtt", e))?,
            "monitor_loss" => self.monitor_loss = num("monitor_loss", v)?,
            "per_unicast_loss" => self.per_unicast_loss = num("per_unicast_loss", v)?,
            "duration_s" => self.duration_s = num("duration_s", v)?,
            "warmup_s" => self.warmup_s = num("warmup_s", v)?,
            "seed" => self.seed = num("seed", v)?,
            "sender_rate" => {
                self.sender_rate = v.parse().map_err(|e| invalid("sender_rate", e))?
            }
            "transfer_bytes" => self.transfer_bytes = num("transfer_bytes", v)?,
            "payload" => self.payload = num("payload", v)?,
            "uplink" => self.uplink_bps = rate("uplink", v)?,
            "downlink" => self.downlink_bps = rate("downlink", v)?,
            "wifi_rate" => self.wifi_bps = rate("wifi_rate", v)?,
            "queue_cap" => self.queue_cap = num("queue_cap", v)?,
            "ap_buffer" => self.ap_buffer = num("ap_buffer", v)?,
            "reorder_buffer" => self.reorder_buffer = num("reorder_buffer", v)?,
            "adv_window" => self.adv_window = num("adv_window", v)?,
            "delayed_ack" => self.delayed_ack = boolean("delayed_ack", v)?,
            "fr_inflation" => self.fr_inflation = boolean("fr_inflation", v)?,
            "probe_margin_ms" => self.probe_margin_ms = num("probe_margin_ms", v)?,
            "reschedule" => self.reschedule = boolean("reschedule", v)?,
            "bapu" => self.bapu = boolean("bapu", v)?,
            "credit" => self.credit = v.parse().map_err(|e| invalid("credit", e))?,
            "overflow" => self.overflow = num("overflow", v)?,
            "inflight_cap" => self.inflight_cap = num("inflight_cap", v)?,
            "ack_trigger" => self.ack_trigger = v.parse().map_err(|e| invalid("ack_trigger", e))?,
            "fault_prob" => self.fault_prob = num("fault_prob", v)?,
            "shaper_study" => self.shaper_study = boolean("shaper_study", v)?,
            "shaper_floor" => self.shaper_floor_bps = rate("shaper_floor", v)?,
            "regular_rate" => self.regular_bps = rate("regular_rate", v)?,
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let prob = |field: &'static str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(invalid(field, format!("{p} is not a probability")))
            }
        };
        if !(1..=7).contains(&self.n_aps) {
            return Err(invalid("n_aps", format!("{} not in 1..=7", self.n_aps)));
        }
        prob("p_extra", self.p_extra)?;
        prob("monitor_loss", self.monitor_loss)?;
        prob("per_unicast_loss", self.per_unicast_loss)?;
        prob("fault_prob", self.fault_prob)?;
        if self.mode == Mode::Proactive && self.strategy != Strategy::FcfsCapacity {
            return Err(invalid(
                "strategy",
                "proactive mode needs reports, so it requires fcfs_capacity",
            ));
        }
        if self.proto == Proto::Udp && self.mode != Mode::Basic {
            return Err(invalid("mode", "udp sessions only support basic mode"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s", "must be positive"));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return Err(invalid("warmup_s", "must be in [0, duration_s)"));
        }
        if self.payload == 0 || self.payload > 1400 {
            return Err(invalid("payload", "must be in 1..=1400"));
        }
        for (f, v) in [
            ("uplink", self.uplink_bps),
            ("downlink", self.downlink_bps),
            ("wifi_rate", self.wifi_bps),
        ] {
            if v == 0 {
                return Err(invalid(f, "must be positive"));
            }
        }
        if let SenderRate::Fixed(0) = self.sender_rate {
            return Err(invalid("sender_rate", "must be positive"));
        }
        if let RttPreset::UniformMs(lo, hi) = self.rtt {
            if lo > hi {
                return Err(invalid("rtt", "range is reversed"));
            }
        }
        if self.ap_buffer == 0 {
            return Err(invalid("ap_buffer", "must be positive"));
        }
        if self.reorder_buffer == 0 {
            return Err(invalid("reorder_buffer", "must be positive"));
        }
        if (self.queue_cap as u64) < 2 * (self.payload as u64 + 200) {
            return Err(invalid("queue_cap", "must hold at least two data frames"));
        }
        if self.shaper_study && self.shaper_floor_bps >= self.uplink_bps {
            return Err(invalid("shaper_floor", "must be below the uplink rate"));
        }
        Ok(())
    }

    /// UDP offered load: the scenario rate, or the aggregate BaPu ceiling.
    pub fn udp_rate_bps(&self) -> u64 {
        match self.sender_rate {
            SenderRate::Fixed(r) => r,
            SenderRate::Unlimited => {
                (self.n_aps as f64 * theoretical_max(Proto::Udp, self.bapu, self.uplink_bps, self.payload))
                    .round() as u64
            }
        }
    }

    /// Canonical text form; `Scenario::parse(&s.to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = match *k {
                "n_aps" => self.n_aps.to_string(),
                "mode" => self.mode.to_string(),
                "proto" => self.proto.to_string(),
                "strategy" => self.strategy.to_string(),
                "p_extra" => self.p_extra.to_string(),
                "rtt" => self.rtt.to_string(),
                "monitor_loss" => self.monitor_loss.to_string(),
                "per_unicast_loss" => self.per_unicast_loss.to_string(),
                "duration_s" => self.duration_s.to_string(),
                "warmup_s" => self.warmup_s.to_string(),
                "seed" => self.seed.to_string(),
                "sender_rate" => self.sender_rate.to_string(),
                "transfer_bytes" => self.transfer_bytes.to_string(),
                "payload" => self.payload.to_string(),
                "uplink" => self.uplink_bps.to_string(),
                "downlink" => self.downlink_bps.to_string(),
                "wifi_rate" => self.wifi_bps.to_string(),
                "queue_cap" => self.queue_cap.to_string(),
                "ap_buffer" => self.ap_buffer.to_string(),
                "reorder_buffer" => self.reorder_buffer.to_string(),
                "adv_window" => self.adv_window.to_string(),
                "delayed_ack" => self.delayed_ack.to_string(),
                "fr_inflation" => self.fr_inflation.to_string(),
                "probe_margin_ms" => self.probe_margin_ms.to_string(),
                "reschedule" => self.reschedule.to_string(),
                "bapu" => self.bapu.to_string(),
                "credit" => self.credit.to_string(),
                "overflow" => self.overflow.to_string(),
                "inflight_cap" => self.inflight_cap.to_string(),
                "ack_trigger" => self.ack_trigger.to_string(),
                "fault_prob" => self.fault_prob.to_string(),
                "shaper_study" => self.shaper_study.to_string(),
                "shaper_floor" => self.shaper_floor_bps.to_string(),
                "regular_rate" => self.regular_bps.to_string(),
                _ => unreachable!("every key is rendered"),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
