//! On-disk documents: config, state, target, plan, transcript.
//!
//! Everything is JSON with bit blocks hex-encoded. Centre randomness is
//! never serialized; a state file is the config plus the operation log, and
//! replaying the log over a fresh build reproduces the exact same bytes.
//! That keeps every document diff-able and every run reproducible from
//! files alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bitcore::{Bits, SystemParams, Variant};
use crate::codebook::{cyclic_share_assignment, DistanceSystem, LegacySystem};
use crate::error::{Error, Result};
use crate::gridscheme::{GridCentre, GridToken, NodeShare, TokenRequest};
use crate::planner::{PlannedToken, TokenClass, TokenPlan};
use crate::simnet::{GridNetwork, GroupEntry, GroupSpec, LegacyNetwork};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Document(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Document(e.to_string()))
}

/// System description as written by hand. Unknown fields are rejected so a
/// typo cannot silently fall back to a default.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub variant: Variant,
    pub v: usize,
    pub lp: usize,
    pub m: usize,
    pub rng_seed: u64,
    /// Grid only: fixed key-table numbers instead of the default pick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_table: Option<Vec<u64>>,
    /// Grid only: nodes taking part in groups. Defaults to the whole grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<usize>>,
    /// Legacy only: share code words, one 0/1 string per row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<Vec<String>>,
    /// Legacy only: how many nodes to issue shares to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_count: Option<usize>,
    /// Legacy only: consecutive code-book rows per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows_per_node: Option<usize>,
}

impl ConfigDocument {
    pub fn params(&self) -> SystemParams {
        match self.variant {
            Variant::Legacy => SystemParams::legacy(self.v, self.lp, self.m, self.rng_seed),
            Variant::Distance => SystemParams::distance(self.v, self.lp, self.rng_seed),
            Variant::Grid => SystemParams::grid(self.v, self.lp, self.m, self.rng_seed),
        }
    }

    /// Seed precedence: an explicit override beats the file.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.rng_seed = s;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        let only = |field: &str, wanted: Variant, present: bool| -> Result<()> {
            if present && self.variant != wanted {
                return Err(Error::Document(format!(
                    "field {field} applies to the {wanted:?} variant only"
                )));
            }
            Ok(())
        };
        only("key_table", Variant::Grid, self.key_table.is_some())?;
        only("members", Variant::Grid, self.members.is_some())?;
        only("codebook", Variant::Legacy, self.codebook.is_some())?;
        only("node_count", Variant::Legacy, self.node_count.is_some())?;
        only("rows_per_node", Variant::Legacy, self.rows_per_node.is_some())?;
        if self.variant == Variant::Legacy && self.codebook.is_none() {
            return Err(Error::Document("legacy systems need an explicit codebook".into()));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<GridNetwork> {
        self.validate()?;
        if self.variant != Variant::Grid {
            return Err(Error::Document("config is not a grid system".into()));
        }
        let centre = GridCentre::with_table(self.params(), self.key_table.as_deref())?;
        let members: Vec<usize> = match &self.members {
            Some(ms) => ms.clone(),
            None => (0..centre.node_count()).collect(),
        };
        GridNetwork::from_centre(centre, members)
    }

    pub fn build_legacy(&self) -> Result<LegacyNetwork> {
        self.validate()?;
        if self.variant != Variant::Legacy {
            return Err(Error::Document("config is not a legacy system".into()));
        }
        let codebook = self
            .codebook
            .as_ref()
            .unwrap()
            .iter()
            .map(|s| Bits::parse(s))
            .collect::<Result<Vec<_>>>()?;
        let rows = codebook.len();
        let system = LegacySystem::new(self.params(), codebook)?;
        let per_node = self.rows_per_node.unwrap_or(1);
        let count = self.node_count.unwrap_or(rows);
        LegacyNetwork::new(system, cyclic_share_assignment(rows, per_node, count))
    }

    pub fn build_distance(&self) -> Result<DistanceSystem> {
        self.validate()?;
        if self.variant != Variant::Distance {
            return Err(Error::Document("config is not a distance system".into()));
        }
        DistanceSystem::new(self.params())
    }
}

/// What to deliver: either a group layout (members plus key expressions,
/// compiled through the coordinate map) or raw per-key node lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_grids: Option<BTreeMap<usize, Vec<usize>>>,
}

impl TargetDocument {
    /// The (key, node) pairs this target asks for.
    pub fn compile(&self, net: &GridNetwork) -> Result<Vec<(usize, usize)>> {
        match (&self.groups, &self.key_grids) {
            (Some(specs), None) => net.targets_for(specs),
            (None, Some(grids)) => {
                let mut out = Vec::new();
                for (&key, nodes) in grids {
                    for &node in nodes {
                        out.push((key, node));
                    }
                }
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
            _ => Err(Error::Document(
                "target needs exactly one of `groups` or `key_grids`".into(),
            )),
        }
    }
}

/// A computed plan at rest. `validate` rebuilds each token against a scratch
/// copy of the centre, so a tampered file fails before anything broadcasts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub v: usize,
    pub total_instances: usize,
    pub tokens: Vec<PlannedToken>,
}

impl PlanDocument {
    pub fn from_plan(plan: &TokenPlan) -> Self {
        PlanDocument {
            v: plan.v,
            total_instances: plan.total_instances(),
            tokens: plan.tokens.clone(),
        }
    }

    pub fn into_plan(self) -> TokenPlan {
        TokenPlan { v: self.v, tokens: self.tokens }
    }

    pub fn validate(&self, net: &GridNetwork) -> Result<()> {
        if self.v != net.centre.params.v {
            return Err(Error::Plan(format!(
                "plan is for {} keys, system has {}",
                self.v, net.centre.params.v
            )));
        }
        let mut scratch = net.centre.clone();
        let mut total = 0;
        for t in &self.tokens {
            let counted: usize = t.requests.iter().map(|r| r.points.len()).sum();
            if counted != t.instances {
                return Err(Error::Plan(format!(
                    "token claims {} instances but lists {counted} points",
                    t.instances
                )));
            }
            let class =
                if t.instances >= self.v { TokenClass::Efficient } else { TokenClass::Inefficient };
            if class != t.class {
                return Err(Error::Plan("token efficiency tag does not match its size".into()));
            }
            scratch.build_token(&t.requests)?;
            total += counted;
        }
        if total != self.total_instances {
            return Err(Error::Plan(format!(
                "plan claims {} instances but tokens carry {total}",
                self.total_instances
            )));
        }
        Ok(())
    }
}

/// Token code words for a legacy episode, written by hand as 0/1 strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegacyPlanDocument {
    pub codewords: Vec<String>,
}

impl LegacyPlanDocument {
    pub fn parsed(&self) -> Result<Vec<Bits>> {
        self.codewords.iter().map(|s| Bits::parse(s)).collect()
    }
}

/// One applied operation; a state file is the config plus these, in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Broadcast { requests: Vec<TokenRequest> },
    Groups { specs: Vec<GroupSpec> },
    Revoke { leaver: usize },
    Harden { node: usize, key: usize },
    LegacyBroadcast { codeword: Bits },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub config: ConfigDocument,
    #[serde(default)]
    pub ops: Vec<Operation>,
}

impl StateDocument {
    pub fn new(config: ConfigDocument) -> Self {
        StateDocument { config, ops: Vec::new() }
    }

    /// Replays the log over a fresh grid build. The centre's random stream
    /// advances exactly as it did originally, so rendered rows come back
    /// byte-identical.
    pub fn rebuild_grid(&self) -> Result<GridNetwork> {
        let mut net = self.config.build_grid()?;
        for op in &self.ops {
            match op {
                Operation::Broadcast { requests } => {
                    net.broadcast(requests)?;
                }
                Operation::Groups { specs } => {
                    net.derive_groups(specs)?;
                }
                Operation::Revoke { leaver } => {
                    net.revoke(*leaver)?;
                }
                Operation::Harden { node, key } => {
                    net.capture_harden(*node, *key)?;
                }
                Operation::LegacyBroadcast { .. } => {
                    return Err(Error::Document(
                        "legacy broadcast op inside a grid state file".into(),
                    ));
                }
            }
        }
        Ok(net)
    }

    pub fn rebuild_legacy(&self) -> Result<LegacyNetwork> {
        let mut net = self.config.build_legacy()?;
        for op in &self.ops {
            match op {
                Operation::LegacyBroadcast { codeword } => {
                    net.broadcast(codeword)?;
                }
                _ => {
                    return Err(Error::Document(
                        "grid operation inside a legacy state file".into(),
                    ));
                }
            }
        }
        Ok(net)
    }
}

/// One broadcast as the transcript records it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptToken {
    pub token: GridToken,
    pub instances: usize,
    pub class: TokenClass,
    /// Fresh unlocks this broadcast caused, node → keys.
    pub unlocked: BTreeMap<usize, Vec<usize>>,
}

/// Self-contained episode record: config to rebuild the system, every token
/// row, and the final states. Feeding the rows back through a fresh build
/// must land on the exact same states, which is what `verify_replay`
/// checks; any bit of tampering surfaces as a mismatch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptDocument {
    pub config: ConfigDocument,
    pub tokens: Vec<TranscriptToken>,
    pub groups: Vec<GroupEntry>,
    pub nodes: Vec<NodeShare>,
}

impl TranscriptDocument {
    pub fn capture(config: ConfigDocument, net: &GridNetwork, tokens: Vec<TranscriptToken>) -> Self {
        TranscriptDocument {
            config,
            tokens,
            groups: net.groups.clone(),
            nodes: net.nodes.clone(),
        }
    }

    pub fn verify_replay(&self) -> Result<()> {
        let mut net = self.config.build_grid()?;
        for (i, t) in self.tokens.iter().enumerate() {
            let mut unlocked = BTreeMap::new();
            for node in &mut net.nodes {
                let fresh = node.fuse_token(&t.token.row, &net.centre.keys.digests)?;
                if !fresh.is_empty() {
                    unlocked.insert(node.node, fresh);
                }
            }
            if unlocked != t.unlocked {
                return Err(Error::Document(format!(
                    "broadcast {i} replays to different unlocks"
                )));
            }
        }
        if net.nodes != self.nodes {
            return Err(Error::Document("final node states do not replay".into()));
        }
        for g in &self.groups {
            let value = g.expr.value(&net.centre.keys.keys)?;
            if value != g.value {
                return Err(Error::Document(format!(
                    "group {} value does not recompute",
                    g.name
                )));
            }
            for &m in &g.members {
                if !g.expr.derivable_with(&net.nodes[m].unlocked_keys()) {
                    return Err(Error::Document(format!(
                        "group {} member {m} cannot evaluate its expression",
                        g.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Legacy episode record: the broadcast code words and the per-node unlock
/// history they caused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegacyTranscriptDocument {
    pub config: ConfigDocument,
    pub codewords: Vec<Bits>,
    /// Fresh unlocks per broadcast, node → keys.
    pub unlocked: Vec<BTreeMap<usize, Vec<usize>>>,
    /// Cumulative unlocked keys after the last broadcast, per node.
    pub cumulative: Vec<Vec<usize>>,
}

impl LegacyTranscriptDocument {
    pub fn capture(
        config: ConfigDocument,
        net: &LegacyNetwork,
        unlocked: Vec<BTreeMap<usize, Vec<usize>>>,
    ) -> Self {
        LegacyTranscriptDocument {
            config,
            codewords: net.transcript.clone(),
            unlocked,
            cumulative: net
                .nodes
                .iter()
                .map(|n| n.unlocked_keys().into_iter().collect())
                .collect(),
        }
    }

    pub fn verify_replay(&self) -> Result<()> {
        let mut net = self.config.build_legacy()?;
        for (i, cw) in self.codewords.iter().enumerate() {
            let fresh = net.broadcast(cw)?;
            if fresh != self.unlocked[i] {
                return Err(Error::Document(format!(
                    "broadcast {i} replays to different unlocks"
                )));
            }
        }
        let cumulative: Vec<Vec<usize>> =
            net.nodes.iter().map(|n| n.unlocked_keys().into_iter().collect()).collect();
        if cumulative != self.cumulative {
            return Err(Error::Document("final unlock table does not replay".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridscheme::Point;
    use crate::simnet::KeyExpr;
    use tempfile_shim::TempDir;

    /// Minimal stand-in for a temp-dir crate: the library has no dev
    /// dependency on one, and tests only need a unique scratch directory.
    mod tempfile_shim {
        use std::path::{Path, PathBuf};

        pub struct TempDir(PathBuf);

        impl TempDir {
            pub fn new(tag: &str) -> Self {
                let dir = std::env::temp_dir().join(format!(
                    "tokenweave-formats-{tag}-{}",
                    std::process::id()
                ));
                std::fs::create_dir_all(&dir).unwrap();
                TempDir(dir)
            }

            pub fn path(&self) -> &Path {
                &self.0
            }
        }

        impl Drop for TempDir {
            fn drop(&mut self) {
                let _ = std::fs::remove_dir_all(&self.0);
            }
        }
    }

    fn grid_config(seed: u64) -> ConfigDocument {
        ConfigDocument {
            variant: Variant::Grid,
            v: 3,
            lp: 16,
            m: 3,
            rng_seed: seed,
            key_table: None,
            members: Some(vec![0, 1, 2, 3]),
            codebook: None,
            node_count: None,
            rows_per_node: None,
        }
    }

    fn legacy_config(seed: u64) -> ConfigDocument {
        ConfigDocument {
            variant: Variant::Legacy,
            v: 6,
            lp: 16,
            m: 2,
            rng_seed: seed,
            key_table: None,
            members: None,
            codebook: Some(vec!["110001".into(), "011100".into(), "100110".into()]),
            node_count: Some(3),
            rows_per_node: Some(2),
        }
    }

    #[test]
    fn config_round_trips_and_validates_fields_by_variant() {
        let dir = TempDir::new("config");
        let path = dir.path().join("grid.json");
        let cfg = grid_config(11);
        write_json(&path, &cfg).unwrap();
        let back: ConfigDocument = read_json(&path).unwrap();
        assert_eq!(back, cfg);

        let mut wrong = grid_config(11);
        wrong.codebook = Some(vec!["1001".into()]);
        assert!(matches!(wrong.validate(), Err(Error::Document(_))));
        let mut bare = legacy_config(11);
        bare.codebook = None;
        assert!(matches!(bare.validate(), Err(Error::Document(_))));
        assert!(grid_config(11).with_seed(Some(99)).rng_seed == 99);
        assert!(grid_config(11).with_seed(None).rng_seed == 11);
    }

    #[test]
    fn unknown_fields_are_schema_violations() {
        let err = serde_json::from_str::<ConfigDocument>(
            r#"{"variant":"grid","v":3,"lp":16,"m":3,"rng_seed":1,"bogus":true}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn key_table_override_reaches_the_centre() {
        let mut cfg = grid_config(12);
        cfg.key_table = Some(vec![7, 1, 2, 3]);
        let err = cfg.build_grid().unwrap_err();
        assert!(err.to_string().contains("4"), "table size must match v: {err}");
        cfg.v = 4;
        cfg.lp = 16;
        let net = cfg.build_grid().unwrap();
        assert_eq!(net.centre.table.numbers(), &[7, 1, 2, 3]);
    }

    #[test]
    fn target_compiles_groups_or_raw_grids_but_not_both() {
        let cfg = grid_config(13);
        let net = cfg.build_grid().unwrap();
        let raw = TargetDocument {
            groups: None,
            key_grids: Some([(0, vec![1, 0]), (2, vec![0])].into()),
        };
        assert_eq!(raw.compile(&net).unwrap(), vec![(0, 0), (0, 1), (2, 0)]);
        let both = TargetDocument {
            groups: Some(vec![]),
            key_grids: Some(BTreeMap::new()),
        };
        assert!(matches!(both.compile(&net), Err(Error::Document(_))));
        let neither = TargetDocument { groups: None, key_grids: None };
        assert!(matches!(neither.compile(&net), Err(Error::Document(_))));
        let specs = vec![GroupSpec {
            name: "G1".into(),
            members: [0, 1].into(),
            expr: KeyExpr::Single(1),
        }];
        let grouped = TargetDocument { groups: Some(specs), key_grids: None };
        assert_eq!(grouped.compile(&net).unwrap(), vec![(1, 0), (1, 1)]);
    }

    #[test]
    fn plan_documents_survive_disk_and_reject_tampering() {
        let dir = TempDir::new("plan");
        let cfg = grid_config(14);
        let mut net = cfg.build_grid().unwrap();
        let targets = vec![(0, 0), (0, 1), (1, 2)];
        let points = crate::planner::delivery_points(&net.centre, &targets).unwrap();
        let plan = crate::planner::token_construction(3, &points).unwrap();
        let doc = PlanDocument::from_plan(&plan);
        doc.validate(&net).unwrap();

        let path = dir.path().join("plan.json");
        write_json(&path, &doc).unwrap();
        let mut back: PlanDocument = read_json(&path).unwrap();
        assert_eq!(back, doc);

        back.total_instances += 1;
        assert!(matches!(back.validate(&net), Err(Error::Plan(_))));
        let mut off_grid = doc.clone();
        off_grid.tokens[0].requests[0].points[0] = Point { x: 9, y: 9 };
        assert!(off_grid.validate(&net).is_err());

        // Validation must not consume the live centre's random stream.
        let before = net.centre.clone().build_token(&plan.tokens[0].requests).unwrap();
        doc.validate(&net).unwrap();
        let after = net.centre.build_token(&plan.tokens[0].requests).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn grid_state_replays_to_identical_bytes() {
        let mut net = grid_config(15).build_grid().unwrap();
        let reqs_a = vec![TokenRequest {
            key: 0,
            points: vec![net.centre.key_coords(0, 0).unwrap()],
        }];
        let reqs_b = vec![TokenRequest {
            key: 1,
            points: vec![net.centre.key_coords(2, 1).unwrap()],
        }];
        let specs = vec![GroupSpec {
            name: "G1".into(),
            members: [0].into(),
            expr: KeyExpr::Single(0),
        }];
        net.broadcast(&reqs_a).unwrap();
        net.broadcast(&reqs_b).unwrap();
        net.derive_groups(&specs).unwrap();
        net.capture_harden(0, 0).unwrap();

        let doc = StateDocument {
            config: grid_config(15),
            ops: vec![
                Operation::Broadcast { requests: reqs_a },
                Operation::Broadcast { requests: reqs_b },
                Operation::Groups { specs },
                Operation::Harden { node: 0, key: 0 },
            ],
        };
        let rebuilt = doc.rebuild_grid().unwrap();
        assert_eq!(rebuilt.transcript, net.transcript);
        assert_eq!(rebuilt.groups, net.groups);
        assert_eq!(
            to_json_string(&rebuilt.nodes).unwrap(),
            to_json_string(&net.nodes).unwrap()
        );
    }

    #[test]
    fn state_files_refuse_cross_variant_operations() {
        let grid_state = StateDocument {
            config: grid_config(16),
            ops: vec![Operation::LegacyBroadcast { codeword: Bits::parse("110101").unwrap() }],
        };
        assert!(matches!(grid_state.rebuild_grid(), Err(Error::Document(_))));
        let legacy_state = StateDocument {
            config: legacy_config(16),
            ops: vec![Operation::Revoke { leaver: 0 }],
        };
        assert!(matches!(legacy_state.rebuild_legacy(), Err(Error::Document(_))));
    }

    #[test]
    fn grid_transcript_verifies_and_detects_tampering() {
        let cfg = grid_config(17);
        let mut net = cfg.build_grid().unwrap();
        let (plan, outcomes) = net.deliver(&[(0, 0), (1, 1), (2, 2)]).unwrap();
        let tokens: Vec<TranscriptToken> = plan
            .tokens
            .iter()
            .zip(&outcomes)
            .map(|(p, o)| TranscriptToken {
                token: o.token.clone(),
                instances: p.instances,
                class: p.class,
                unlocked: o.unlocked.clone(),
            })
            .collect();
        let doc = TranscriptDocument::capture(cfg, &net, tokens);
        doc.verify_replay().unwrap();

        let mut bent = doc.clone();
        let flipped = 1 - bent.tokens[0].token.row.get(0);
        bent.tokens[0].token.row.set(0, flipped);
        assert!(bent.verify_replay().is_err());

        let mut wrong_delta = doc.clone();
        wrong_delta.tokens[0].unlocked.insert(99, vec![0]);
        assert!(wrong_delta.verify_replay().is_err());
    }

    #[test]
    fn legacy_transcript_verifies_and_detects_tampering() {
        let cfg = legacy_config(18);
        let mut net = cfg.build_legacy().unwrap();
        let mut unlocked = Vec::new();
        for cw in ["110101", "101011"] {
            unlocked.push(net.broadcast(&Bits::parse(cw).unwrap()).unwrap());
        }
        let doc = LegacyTranscriptDocument::capture(cfg, &net, unlocked);
        doc.verify_replay().unwrap();
        assert_eq!(doc.cumulative, vec![vec![2, 3], vec![2, 3, 5], vec![0, 2, 3]]);

        let mut bent = doc.clone();
        bent.codewords[0] = Bits::parse("111111").unwrap();
        assert!(bent.verify_replay().is_err());
    }
}
