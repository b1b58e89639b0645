//! Scenario description and the built-in presets.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aqm::{AqmConfig, AqmKind, CodelConfig, DelayEstimator, MadpieConfig, PieConfig};
use crate::transport::{CbrSpec, ShortFlowSpec, TcpConfig};
use crate::units::{serde_duration, serde_threshold};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario: {field}: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Bulk CUBIC flows only.
    ProofOfConcept,
    /// CBR, short-file and bulk flows sharing one path.
    TrafficMix,
    /// The traffic mix on two sender groups with different RTTs.
    RttMix,
    /// No consistency rules beyond basic sanity.
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::ProofOfConcept,
        Preset::TrafficMix,
        Preset::RttMix,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ProofOfConcept => "proof_of_concept",
            Preset::TrafficMix => "traffic_mix",
            Preset::RttMix => "rtt_mix",
            Preset::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::ProofOfConcept => "10 CUBIC bulk flows, 300 s, tau_dd 30 ms",
            Preset::TrafficMix => "4 CBR + 20 short-file + 10 bulk flows, 100 s, tau_dd 25 ms",
            Preset::RttMix => {
                "traffic mix split over a 100 ms and a 500 ms path (4 CBR, 20 short-file, 2 bulk each), 100 s, tau_dd 25 ms"
            }
            Preset::Custom => "traffic-mix defaults with no consistency checks on flow counts",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().replace('_', "-") == s)
            .ok_or_else(|| {
                format!("unknown preset `{s}` (expected proof_of_concept, traffic_mix, rtt_mix or custom)")
            })
    }
}

/// Sender-side path group. Receivers always sit behind a near access link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Near,
    Far,
}

/// Every knob of a run, flat and JSON-compatible. Durations serialize as
/// strings with a unit suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub preset: Preset,
    pub aqm: AqmKind,
    #[serde(with = "serde_duration")]
    pub duration: Duration,
    pub seed: u64,
    pub replication: u32,

    pub bottleneck_rate_bps: u64,
    #[serde(with = "serde_duration")]
    pub bottleneck_owd: Duration,
    pub access_rate_bps: u64,
    #[serde(with = "serde_duration")]
    pub access_owd: Duration,
    /// Sender access delay of the far group.
    #[serde(with = "serde_duration")]
    pub far_access_owd: Duration,
    /// `None` sizes the bottleneck buffer to the BDP of the largest base RTT.
    pub queue_capacity_bytes: Option<u64>,

    pub n_cbr: u32,
    pub n_sf: u32,
    pub n_ftp: u32,
    pub n_cbr_far: u32,
    pub n_sf_far: u32,
    pub n_ftp_far: u32,
    /// Flows start uniformly at random in `[0, start_jitter]`.
    #[serde(with = "serde_duration")]
    pub start_jitter: Duration,

    #[serde(with = "serde_duration")]
    pub pie_target: Duration,
    #[serde(with = "serde_duration")]
    pub pie_update_interval: Duration,
    pub pie_alpha: f64,
    pub pie_beta: f64,
    #[serde(with = "serde_duration")]
    pub pie_max_burst: Duration,
    pub pie_range_scaling: bool,
    pub pie_estimator: DelayEstimator,
    #[serde(with = "serde_threshold")]
    pub madpie_tau_dd: Option<Duration>,
    #[serde(with = "serde_duration")]
    pub codel_target: Duration,
    #[serde(with = "serde_duration")]
    pub codel_interval: Duration,
    pub codel_mtu: u32,

    pub tcp_initial_window: u32,
    pub tcp_mss: u32,
    pub tcp_header_bytes: u32,
    pub tcp_cubic_c: f64,
    pub tcp_cubic_beta: f64,
    #[serde(with = "serde_duration")]
    pub tcp_min_rto: Duration,
    #[serde(with = "serde_duration")]
    pub tcp_initial_rto: Duration,
    #[serde(with = "serde_duration")]
    pub tcp_max_rto: Duration,
    pub tcp_dupack_threshold: u32,

    pub cbr_rate_bps: u64,
    pub cbr_packet_size: u32,
    pub sf_sizes: Vec<u32>,
    #[serde(with = "serde_duration")]
    pub sf_think_time_mean: Duration,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::preset(Preset::ProofOfConcept, AqmKind::Pie, Duration::from_millis(48))
    }
}

impl ScenarioConfig {
    /// A preset with the given discipline and bottleneck one-way delay.
    pub fn preset(preset: Preset, aqm: AqmKind, bottleneck_owd: Duration) -> Self {
        let pie = PieConfig::default();
        let codel = CodelConfig::default();
        let tcp = TcpConfig::default();
        let cbr = CbrSpec::default();
        let sf = ShortFlowSpec::default();
        let mut cfg = ScenarioConfig {
            preset,
            aqm,
            duration: Duration::from_secs(100),
            seed: 1,
            replication: 0,
            bottleneck_rate_bps: 10_000_000,
            bottleneck_owd,
            access_rate_bps: 100_000_000,
            access_owd: Duration::from_millis(1),
            far_access_owd: Duration::from_millis(201),
            queue_capacity_bytes: None,
            n_cbr: 4,
            n_sf: 20,
            n_ftp: 10,
            n_cbr_far: 0,
            n_sf_far: 0,
            n_ftp_far: 0,
            start_jitter: Duration::from_secs(1),
            pie_target: pie.target,
            pie_update_interval: pie.update_interval,
            pie_alpha: pie.alpha,
            pie_beta: pie.beta,
            pie_max_burst: pie.max_burst,
            pie_range_scaling: pie.range_scaling,
            pie_estimator: pie.estimator,
            madpie_tau_dd: Some(Duration::from_millis(25)),
            codel_target: codel.target,
            codel_interval: codel.interval,
            codel_mtu: codel.mtu,
            tcp_initial_window: tcp.initial_window,
            tcp_mss: tcp.mss,
            tcp_header_bytes: tcp.header_bytes,
            tcp_cubic_c: tcp.cubic_c,
            tcp_cubic_beta: tcp.cubic_beta,
            tcp_min_rto: tcp.min_rto,
            tcp_initial_rto: tcp.initial_rto,
            tcp_max_rto: tcp.max_rto,
            tcp_dupack_threshold: tcp.dupack_threshold,
            cbr_rate_bps: cbr.rate_bps,
            cbr_packet_size: cbr.packet_size,
            sf_sizes: sf.sizes,
            sf_think_time_mean: sf.think_time_mean,
        };
        match preset {
            Preset::ProofOfConcept => {
                cfg.duration = Duration::from_secs(300);
                cfg.n_cbr = 0;
                cfg.n_sf = 0;
                cfg.madpie_tau_dd = Some(Duration::from_millis(30));
            }
            Preset::TrafficMix | Preset::Custom => {}
            Preset::RttMix => {
                cfg.n_ftp = 2;
                cfg.n_cbr_far = 4;
                cfg.n_sf_far = 20;
                cfg.n_ftp_far = 2;
            }
        }
        cfg
    }

    pub fn pie_config(&self) -> PieConfig {
        PieConfig {
            target: self.pie_target,
            update_interval: self.pie_update_interval,
            alpha: self.pie_alpha,
            beta: self.pie_beta,
            max_burst: self.pie_max_burst,
            range_scaling: self.pie_range_scaling,
            estimator: self.pie_estimator,
        }
    }

    pub fn aqm_config(&self) -> AqmConfig {
        match self.aqm {
            AqmKind::DropTail => AqmConfig::DropTail,
            AqmKind::Pie => AqmConfig::Pie(self.pie_config()),
            AqmKind::Madpie => AqmConfig::Madpie(MadpieConfig {
                pie: self.pie_config(),
                tau_dd: self.madpie_tau_dd,
            }),
            AqmKind::Codel => AqmConfig::Codel(CodelConfig {
                target: self.codel_target,
                interval: self.codel_interval,
                mtu: self.codel_mtu,
            }),
        }
    }

    pub fn tcp_config(&self) -> TcpConfig {
        TcpConfig {
            initial_window: self.tcp_initial_window,
            mss: self.tcp_mss,
            header_bytes: self.tcp_header_bytes,
            cubic_c: self.tcp_cubic_c,
            cubic_beta: self.tcp_cubic_beta,
            min_rto: self.tcp_min_rto,
            initial_rto: self.tcp_initial_rto,
            max_rto: self.tcp_max_rto,
            dupack_threshold: self.tcp_dupack_threshold,
        }
    }

    pub fn cbr_spec(&self) -> CbrSpec {
        CbrSpec {
            rate_bps: self.cbr_rate_bps,
            packet_size: self.cbr_packet_size,
        }
    }

    pub fn short_flow_spec(&self) -> ShortFlowSpec {
        ShortFlowSpec {
            sizes: self.sf_sizes.clone(),
            think_time_mean: self.sf_think_time_mean,
        }
    }

    /// `(cbr, sf, ftp)` flow counts of a sender group.
    pub fn counts(&self, group: Group) -> (u32, u32, u32) {
        match group {
            Group::Near => (self.n_cbr, self.n_sf, self.n_ftp),
            Group::Far => (self.n_cbr_far, self.n_sf_far, self.n_ftp_far),
        }
    }

    /// Sender groups with at least one flow.
    pub fn groups(&self) -> Vec<Group> {
        [Group::Near, Group::Far]
            .into_iter()
            .filter(|&g| {
                let (a, b, c) = self.counts(g);
                a + b + c > 0
            })
            .collect()
    }

    pub fn sender_access_owd(&self, group: Group) -> Duration {
        match group {
            Group::Near => self.access_owd,
            Group::Far => self.far_access_owd,
        }
    }

    /// Round-trip propagation delay of a group's path, without queuing or
    /// serialization.
    pub fn base_rtt(&self, group: Group) -> Duration {
        (self.sender_access_owd(group) + self.bottleneck_owd + self.access_owd) * 2
    }

    /// Bottleneck buffer size: explicit, or rate times the largest base RTT
    /// of any populated group.
    pub fn queue_capacity(&self) -> u64 {
        self.queue_capacity_bytes.unwrap_or_else(|| {
            let rtt = self
                .groups()
                .into_iter()
                .map(|g| self.base_rtt(g))
                .max()
                .unwrap_or_else(|| self.base_rtt(Group::Near));
            bdp_bytes(self.bottleneck_rate_bps, rtt)
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(field, "must be positive"))
            }
        };
        positive("duration", !self.duration.is_zero())?;
        positive("bottleneck_rate_bps", self.bottleneck_rate_bps > 0)?;
        positive("access_rate_bps", self.access_rate_bps > 0)?;
        if let Some(cap) = self.queue_capacity_bytes {
            positive("queue_capacity_bytes", cap > 0)?;
        }
        let near = self.n_cbr + self.n_sf + self.n_ftp;
        let far = self.n_cbr_far + self.n_sf_far + self.n_ftp_far;
        if near + far == 0 {
            return Err(ConfigError::new("n_ftp", "scenario has no flows"));
        }
        match self.preset {
            Preset::ProofOfConcept => {
                if self.n_cbr + self.n_sf > 0 || far > 0 {
                    return Err(ConfigError::new(
                        "preset",
                        "proof_of_concept carries near-group bulk flows only",
                    ));
                }
            }
            Preset::TrafficMix => {
                if far > 0 {
                    return Err(ConfigError::new("preset", "traffic_mix has no far sender group"));
                }
            }
            Preset::RttMix => {
                if near == 0 || far == 0 {
                    return Err(ConfigError::new(
                        "preset",
                        "rtt_mix needs flows on both the near and the far path",
                    ));
                }
            }
            Preset::Custom => {}
        }
        if self.n_cbr + self.n_cbr_far > 0 {
            positive("cbr_rate_bps", self.cbr_rate_bps > 0)?;
            positive("cbr_packet_size", self.cbr_packet_size > 0)?;
        }
        if self.n_sf + self.n_sf_far > 0
            && (self.sf_sizes.is_empty() || self.sf_sizes.contains(&0))
        {
            return Err(ConfigError::new("sf_sizes", "need at least one positive file size"));
        }
        let aqm = self.aqm_config();
        let checked = match &aqm {
            AqmConfig::DropTail => Ok(()),
            AqmConfig::Pie(c) => c.validate(),
            AqmConfig::Madpie(c) => c.validate(),
            AqmConfig::Codel(c) => c.validate(),
        };
        checked.map_err(|e| ConfigError::new("aqm", e))?;
        self.tcp_config()
            .validate()
            .map_err(|e| ConfigError::new("tcp", e))?;
        Ok(())
    }
}

/// `rate * rtt` in whole bytes.
pub fn bdp_bytes(rate_bps: u64, rtt: Duration) -> u64 {
    let bits = u128::from(rate_bps) * rtt.as_nanos() / 1_000_000_000;
    u64::try_from(bits / 8).expect("BDP fits u64")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    #[test]
    fn base_rtt_of_the_short_path() {
        let cfg = ScenarioConfig::preset(Preset::ProofOfConcept, AqmKind::Pie, ms(48));
        assert_eq!(cfg.base_rtt(Group::Near), ms(100));
        assert_eq!(cfg.queue_capacity(), 125_000);
    }

    #[test]
    fn bdp_of_the_long_path() {
        let cfg = ScenarioConfig::preset(Preset::ProofOfConcept, AqmKind::Madpie, ms(248));
        assert_eq!(cfg.base_rtt(Group::Near), ms(500));
        assert_eq!(cfg.queue_capacity(), 625_000);
    }

    #[test]
    fn rtt_mix_groups() {
        let cfg = ScenarioConfig::preset(Preset::RttMix, AqmKind::Pie, ms(48));
        assert_eq!(cfg.groups(), vec![Group::Near, Group::Far]);
        assert_eq!(cfg.base_rtt(Group::Near), ms(100));
        assert_eq!(cfg.base_rtt(Group::Far), ms(500));
        assert_eq!(cfg.queue_capacity(), 625_000);
        assert_eq!(cfg.counts(Group::Far), (4, 20, 2));
        cfg.validate().unwrap();
    }

    #[test]
    fn presets_validate() {
        for preset in Preset::ALL {
            for aqm in AqmKind::ALL {
                ScenarioConfig::preset(preset, aqm, ms(148)).validate().unwrap();
            }
        }
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let mut cfg = ScenarioConfig::preset(Preset::ProofOfConcept, AqmKind::Pie, ms(48));
        cfg.n_cbr = 2;
        assert_eq!(cfg.validate().unwrap_err().field, "preset");
        let mut cfg = ScenarioConfig::preset(Preset::RttMix, AqmKind::Pie, ms(48));
        cfg.n_cbr_far = 0;
        cfg.n_sf_far = 0;
        cfg.n_ftp_far = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::preset(Preset::Custom, AqmKind::Pie, ms(48));
        cfg.n_cbr = 0;
        cfg.n_sf = 0;
        cfg.n_ftp = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn madpie_threshold_below_target_is_rejected() {
        let mut cfg = ScenarioConfig::preset(Preset::TrafficMix, AqmKind::Madpie, ms(48));
        cfg.madpie_tau_dd = Some(ms(10));
        assert_eq!(cfg.validate().unwrap_err().field, "aqm");
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = ScenarioConfig::preset(Preset::RttMix, AqmKind::Madpie, ms(48));
        cfg.madpie_tau_dd = None;
        cfg.queue_capacity_bytes = Some(90_000);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert!(text.contains("\"madpie_tau_dd\": \"inf\""));
        assert!(text.contains("\"bottleneck_owd\": \"48ms\""));
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"n_voip": 3}"#).is_err());
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"aqm": "codel"}"#).unwrap();
        assert_eq!(cfg.aqm, AqmKind::Codel);
    }

    #[test]
    fn preset_names_parse() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!("rtt-mix".parse::<Preset>().unwrap(), Preset::RttMix);
        assert!("fig7".parse::<Preset>().is_err());
    }
}
