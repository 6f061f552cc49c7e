use serde::{Deserialize, Serialize};

use byzcoin_core::chain::NodeId;
use byzcoin_core::consensus::{Behavior, QuorumRule};

use crate::link::LinkModel;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Tree,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quorum {
    /// Overlapping quorums; the default.
    Intersecting,
    /// `2f + 1` everywhere with `2f + 2` for an era's first block.
    ClassicBump,
    /// `2f + 1` everywhere. For demonstrating what goes wrong.
    Classic,
}

impl From<Quorum> for QuorumRule {
    fn from(q: Quorum) -> Self {
        match q {
            Quorum::Intersecting => QuorumRule::Intersecting,
            Quorum::ClassicBump => QuorumRule::Classic { era_first_bump: true },
            Quorum::Classic => QuorumRule::Classic { era_first_bump: false },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    SilentLeader,
    EquivocatingLeader,
    VoteWithholder,
    SelfishMiner,
    SubtreeCutter,
    MessageDelayer,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 6] = [
        ProfileKind::SilentLeader,
        ProfileKind::EquivocatingLeader,
        ProfileKind::VoteWithholder,
        ProfileKind::SelfishMiner,
        ProfileKind::SubtreeCutter,
        ProfileKind::MessageDelayer,
    ];

    /// Consensus behavior of a controlled node. Selfish miners and delayers
    /// follow the consensus protocol; the simulator applies their deviation.
    pub fn behavior(self) -> Behavior {
        match self {
            ProfileKind::SilentLeader => Behavior::SilentLeader,
            ProfileKind::EquivocatingLeader => Behavior::EquivocatingLeader,
            ProfileKind::VoteWithholder => Behavior::VoteWithholder,
            ProfileKind::SubtreeCutter => Behavior::SubtreeCutter,
            ProfileKind::SelfishMiner | ProfileKind::MessageDelayer => Behavior::Honest,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::SilentLeader => "silent-leader",
            ProfileKind::EquivocatingLeader => "equivocating-leader",
            ProfileKind::VoteWithholder => "vote-withholder",
            ProfileKind::SelfishMiner => "selfish-miner",
            ProfileKind::SubtreeCutter => "subtree-cutter",
            ProfileKind::MessageDelayer => "message-delayer",
        }
    }
}

/// Nodes under one adversary's control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub kind: ProfileKind,
    /// Explicit node ids; otherwise `count` nodes are picked by kind.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Upper bound on the extra delay a message delayer adds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delay_ms: Option<f64>,
    /// Extra zero bits a selfish miner wants before withholding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_zero_bits: Option<u32>,
    /// Hash-power fraction of a selfish miner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashConfig {
    /// Node to crash; defaults to the leader of view 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default)]
    pub at_s: f64,
}

/// A keyblock injected at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedKeyblock {
    pub at_s: f64,
    pub miner: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    pub interval_s: f64,
    /// Keyblocks found within this long of the winner are published too.
    /// Defaults to half the round trip.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_window_ms: Option<f64>,
    pub difficulty_bits: u32,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            interval_s: 600.0,
            tie_window_ms: None,
            difficulty_bits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub view_change_factor: f64,
    pub settle_ms: f64,
    pub slack: f64,
    pub verify_ms_per_mb: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            view_change_factor: 10.0,
            settle_ms: 2000.0,
            slack: 3.0,
            verify_ms_per_mb: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<String>,
}

/// One simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Consensus group size: shares in the window, one per bootstrap miner.
    pub hosts: usize,
    /// Nodes outside the initial group (future miners).
    pub extra_nodes: usize,
    pub branching: usize,
    pub topology: Topology,
    pub tree_detection: bool,
    pub quorum: Quorum,
    pub block_bytes: u64,
    pub tx_bytes: u64,
    pub block_interval_ms: f64,
    pub duration_s: f64,
    /// Stop once every live honest node holds this many microblocks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_after_blocks: Option<u64>,
    pub peer_degree: usize,
    /// Bootstrap mining order, oldest first; defaults to `0..hosts`. The
    /// last entry leads view 0.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_order: Vec<NodeId>,
    pub link: LinkModel,
    pub timing: TimingConfig,
    /// Stochastic keyblock mining; off unless present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mining: Option<MiningConfig>,
    #[serde(rename = "keyblock", skip_serializing_if = "Vec::is_empty")]
    pub keyblocks: Vec<ScriptedKeyblock>,
    #[serde(rename = "adversary", skip_serializing_if = "Vec::is_empty")]
    pub adversaries: Vec<AdversaryConfig>,
    #[serde(rename = "crash", skip_serializing_if = "Vec::is_empty")]
    pub crashes: Vec<CrashConfig>,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 1,
            hosts: 144,
            extra_nodes: 0,
            branching: 8,
            topology: Topology::Tree,
            tree_detection: true,
            quorum: Quorum::Intersecting,
            block_bytes: 1 << 20,
            tx_bytes: 500,
            block_interval_ms: 0.0,
            duration_s: 600.0,
            stop_after_blocks: None,
            peer_degree: 8,
            bootstrap_order: Vec::new(),
            link: LinkModel::default(),
            timing: TimingConfig::default(),
            mining: None,
            keyblocks: Vec::new(),
            adversaries: Vec::new(),
            crashes: Vec::new(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parses TOML, reporting the key path of the first bad field.
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let de = toml::Deserializer::parse(text).map_err(|e| SimError::Config(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SimError::Config(format!("{path}: {}", e.into_inner().message().trim()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn population(&self) -> usize {
        self.hosts + self.extra_nodes
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.hosts < 1 {
            return bad("hosts: must be at least 1".into());
        }
        if self.branching < 2 {
            return bad("branching: must be at least 2".into());
        }
        if self.tx_bytes == 0 {
            return bad("tx_bytes: must be positive".into());
        }
        if !(self.duration_s > 0.0) {
            return bad("duration_s: must be positive".into());
        }
        if !(self.link.rtt_ms >= 0.0) || !(self.link.bandwidth_mbps > 0.0) {
            return bad("link: latency must be nonnegative and bandwidth positive".into());
        }
        let n = self.population() as NodeId;
        if !self.bootstrap_order.is_empty() {
            let distinct: std::collections::BTreeSet<_> = self.bootstrap_order.iter().collect();
            if self.bootstrap_order.len() != self.hosts || distinct.len() != self.hosts {
                return bad("bootstrap_order: must list `hosts` distinct ids".into());
            }
            if self.bootstrap_order.iter().any(|&id| id >= n) {
                return bad(format!("bootstrap_order: id outside 0..{n}"));
            }
        }
        for (i, a) in self.adversaries.iter().enumerate() {
            if a.nodes.iter().any(|&id| id >= n) {
                return bad(format!("adversary[{i}].nodes: id outside 0..{n}"));
            }
            if a.count.unwrap_or(0) > self.hosts {
                return bad(format!("adversary[{i}].count: more than hosts"));
            }
            if let Some(d) = a.max_delay_ms {
                if !(d >= 0.0) {
                    return bad(format!("adversary[{i}].max_delay_ms: must be nonnegative"));
                }
            }
            if let Some(p) = a.power {
                if !(0.0..1.0).contains(&p) {
                    return bad(format!("adversary[{i}].power: outside [0, 1)"));
                }
            }
        }
        for (i, c) in self.crashes.iter().enumerate() {
            if c.node.is_some_and(|id| id >= n) {
                return bad(format!("crash[{i}].node: id outside 0..{n}"));
            }
        }
        for (i, k) in self.keyblocks.iter().enumerate() {
            if k.miner >= n {
                return bad(format!("keyblock[{i}].miner: id outside 0..{n}"));
            }
        }
        if let Some(m) = &self.mining {
            if !(m.interval_s > 0.0) {
                return bad("mining.interval_s: must be positive".into());
            }
        }
        Ok(())
    }
}
