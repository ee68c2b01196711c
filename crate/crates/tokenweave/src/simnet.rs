//! Simulated network: a centre, its nodes, group keying, revocation.
//!
//! Nodes accumulate keys from broadcast tokens; groups are then keyed by
//! expressions over those keys, either one key shared by exactly the group
//! or a hash over several keys whose combination only the group holds. A
//! member leaving burns every expression it can evaluate; affected groups
//! are re-keyed with the cheapest expression that the remaining members all
//! hold, the leaver does not, and no outside node does either.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bitcore::{Bits, Digest, SystemParams};
use crate::codebook::{LegacySystem, StackNode};
use crate::error::{Error, Result};
use crate::gridscheme::{GridCentre, GridToken, NodeShare, TokenRequest};
use crate::planner::{delivery_points, token_construction, TokenPlan};

/// A group keying expression: one distributed key, or a hash over several.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyExpr {
    Single(usize),
    Hash(BTreeSet<usize>),
}

impl KeyExpr {
    pub fn keys(&self) -> BTreeSet<usize> {
        match self {
            KeyExpr::Single(k) => [*k].into_iter().collect(),
            KeyExpr::Hash(ks) => ks.clone(),
        }
    }

    /// A node evaluates an expression iff it holds every key named in it.
    pub fn derivable_with(&self, unlocked: &BTreeSet<usize>) -> bool {
        self.keys().is_subset(unlocked)
    }

    /// The group key value. A single key is the key itself; a hash combines
    /// the named keys ascending, so every holder derives the same value no
    /// matter in which order it unlocked them.
    pub fn value(&self, keys: &[Bits]) -> Result<String> {
        let fetch = |k: usize| -> Result<&Bits> {
            keys.get(k).ok_or_else(|| Error::GroupSpec(format!("expression names missing key {k}")))
        };
        match self {
            KeyExpr::Single(k) => {
                let b = fetch(*k)?;
                Ok(format!("{}:{}", b.len(), b.to_hex()))
            }
            KeyExpr::Hash(ks) => {
                let mut preimage = Bits::zeros(0);
                for &k in ks {
                    preimage = preimage.concat(fetch(k)?);
                }
                Ok(Digest::of_bits(&preimage).to_hex())
            }
        }
    }

    /// Human-readable form with keys numbered from 1: `K3`, `H(K1,K3)`.
    pub fn label(&self) -> String {
        match self {
            KeyExpr::Single(k) => format!("K{}", k + 1),
            KeyExpr::Hash(ks) => {
                let inner: Vec<String> = ks.iter().map(|k| format!("K{}", k + 1)).collect();
                format!("H({})", inner.join(","))
            }
        }
    }
}

/// Requested group: name, member nodes, keying expression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub members: BTreeSet<usize>,
    pub expr: KeyExpr,
}

/// A keyed group as the network tracks it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub members: BTreeSet<usize>,
    pub expr: KeyExpr,
    pub value: String,
}

/// What one broadcast did: the token and the keys each node freshly gained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastOutcome {
    pub token: GridToken,
    pub unlocked: BTreeMap<usize, Vec<usize>>,
}

/// Result of revoking a member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationReport {
    pub leaver: usize,
    /// Expressions each remaining member still safely holds: everything it
    /// can evaluate except what the leaver can evaluate too.
    pub retained: BTreeMap<usize, Vec<KeyExpr>>,
    /// The groups after re-keying, leaver removed.
    pub groups: Vec<GroupEntry>,
}

/// Subsets of `items` of the given size, in lexicographic order.
fn combinations(items: &[usize], size: usize) -> Vec<BTreeSet<usize>> {
    if size > items.len() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // Advance the rightmost index that can still move.
        let mut i = size;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + items.len() - size {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A grid centre, all of its nodes, and the group layer on top. The member
/// list marks which nodes take part in groups; the rest of the grid still
/// receives every broadcast, which is what exclusivity must survive.
#[derive(Debug)]
pub struct GridNetwork {
    pub centre: GridCentre,
    pub nodes: Vec<NodeShare>,
    pub members: BTreeSet<usize>,
    pub groups: Vec<GroupEntry>,
    pub transcript: Vec<GridToken>,
    /// Largest key count allowed in a hash expression; combinations past
    /// three keys stop paying for themselves.
    pub hash_cap: usize,
}

impl GridNetwork {
    pub fn new(params: SystemParams, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::from_centre(GridCentre::new(params)?, members)
    }

    pub fn from_centre(
        centre: GridCentre,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let nodes =
            (0..centre.node_count()).map(|i| centre.issue_share(i)).collect::<Result<Vec<_>>>()?;
        let members: BTreeSet<usize> = members.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&m| m >= nodes.len()) {
            return Err(Error::Usage(format!("member {bad} is not on the grid")));
        }
        Ok(GridNetwork {
            centre,
            nodes,
            members,
            groups: Vec::new(),
            transcript: Vec::new(),
            hash_cap: 3,
        })
    }

    /// Builds and broadcasts one token; every node on the grid fuses it.
    pub fn broadcast(&mut self, requests: &[TokenRequest]) -> Result<BroadcastOutcome> {
        let token = self.centre.build_token(requests)?;
        let mut unlocked = BTreeMap::new();
        for node in &mut self.nodes {
            let fresh = node.fuse_token(&token.row, &self.centre.keys.digests)?;
            if !fresh.is_empty() {
                unlocked.insert(node.node, fresh);
            }
        }
        self.transcript.push(token.clone());
        Ok(BroadcastOutcome { token, unlocked })
    }

    /// Plans and broadcasts tokens so that each (key, node) target is
    /// delivered; returns the plan and what every broadcast did.
    pub fn deliver(
        &mut self,
        targets: &[(usize, usize)],
    ) -> Result<(TokenPlan, Vec<BroadcastOutcome>)> {
        let points = delivery_points(&self.centre, targets)?;
        let plan = token_construction(self.centre.params.v, &points)?;
        let mut outcomes = Vec::with_capacity(plan.tokens.len());
        for t in &plan.tokens {
            outcomes.push(self.broadcast(&t.requests)?);
        }
        Ok((plan, outcomes))
    }

    /// The (key, node) pairs a group layout requires: each member needs
    /// every key its groups' expressions name.
    pub fn targets_for(&self, specs: &[GroupSpec]) -> Result<Vec<(usize, usize)>> {
        let mut need: BTreeSet<(usize, usize)> = BTreeSet::new();
        for spec in specs {
            self.validate_expr_shape(spec)?;
            for &m in &spec.members {
                for k in spec.expr.keys() {
                    need.insert((k, m));
                }
            }
        }
        Ok(need.into_iter().collect())
    }

    fn validate_expr_shape(&self, spec: &GroupSpec) -> Result<()> {
        if spec.members.is_empty() {
            return Err(Error::GroupSpec(format!("group {} has no members", spec.name)));
        }
        if let Some(&bad) = spec.members.iter().find(|m| !self.members.contains(m)) {
            return Err(Error::GroupSpec(format!(
                "group {} names node {bad}, which is not a network member",
                spec.name
            )));
        }
        let keys = spec.expr.keys();
        if keys.is_empty() {
            return Err(Error::GroupSpec(format!("group {} has an empty expression", spec.name)));
        }
        if let Some(&bad) = keys.iter().find(|&&k| k >= self.centre.params.v) {
            return Err(Error::GroupSpec(format!(
                "group {} names missing key {bad}",
                spec.name
            )));
        }
        if let KeyExpr::Hash(ks) = &spec.expr {
            if ks.len() < 2 {
                return Err(Error::GroupSpec(format!(
                    "group {} hashes a single key; use the key directly",
                    spec.name
                )));
            }
            if ks.len() > self.hash_cap {
                return Err(Error::GroupSpec(format!(
                    "group {} hashes {} keys, cap is {}",
                    spec.name,
                    ks.len(),
                    self.hash_cap
                )));
            }
        }
        Ok(())
    }

    /// Installs the group layer over already-distributed keys. Every member
    /// must hold its group's keys, and no network member outside a group may
    /// be able to evaluate that group's expression; either failure names the
    /// offending node.
    pub fn derive_groups(&mut self, specs: &[GroupSpec]) -> Result<&[GroupEntry]> {
        let mut entries = Vec::with_capacity(specs.len());
        for spec in specs {
            self.validate_expr_shape(spec)?;
            for &m in &spec.members {
                if !spec.expr.derivable_with(&self.nodes[m].unlocked_keys()) {
                    return Err(Error::GroupSpec(format!(
                        "group {}: member {m} cannot evaluate {}",
                        spec.name,
                        spec.expr.label()
                    )));
                }
            }
            for &n in &self.members {
                if !spec.members.contains(&n)
                    && spec.expr.derivable_with(&self.nodes[n].unlocked_keys())
                {
                    return Err(Error::GroupSpec(format!(
                        "group {}: non-member {n} can evaluate {}",
                        spec.name,
                        spec.expr.label()
                    )));
                }
            }
            entries.push(GroupEntry {
                name: spec.name.clone(),
                members: spec.members.clone(),
                expr: spec.expr.clone(),
                value: spec.expr.value(&self.centre.keys.keys)?,
            });
        }
        self.groups = entries;
        Ok(&self.groups)
    }

    /// Every expression a node can evaluate from its unlocked keys: single
    /// keys first, then hash combinations by size and lexicographic order,
    /// up to the hash cap.
    pub fn node_expressions(&self, node: usize) -> Vec<KeyExpr> {
        let unlocked: Vec<usize> = self.nodes[node].unlocked_keys().into_iter().collect();
        let mut out: Vec<KeyExpr> = unlocked.iter().map(|&k| KeyExpr::Single(k)).collect();
        for size in 2..=self.hash_cap.min(unlocked.len()) {
            out.extend(combinations(&unlocked, size).into_iter().map(KeyExpr::Hash));
        }
        out
    }

    /// Removes a member. Everything the leaver can evaluate is burned for
    /// everyone; groups the leaver belonged to, and groups whose expression
    /// burned, are re-keyed with the first expression over the remaining
    /// members' common keys that the leaver cannot evaluate and no outside
    /// node can. Singles are tried before hashes, smaller hashes before
    /// larger, so the cheapest safe expression wins.
    pub fn revoke(&mut self, leaver: usize) -> Result<RevocationReport> {
        if !self.members.remove(&leaver) {
            return Err(Error::Usage(format!("node {leaver} is not a network member")));
        }
        let leaver_keys = self.nodes[leaver].unlocked_keys();
        let burned = |expr: &KeyExpr| expr.derivable_with(&leaver_keys);

        let mut retained = BTreeMap::new();
        for &m in &self.members {
            let safe: Vec<KeyExpr> =
                self.node_expressions(m).into_iter().filter(|e| !burned(e)).collect();
            retained.insert(m, safe);
        }

        let mut groups = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut members = g.members.clone();
            let was_member = members.remove(&leaver);
            if members.is_empty() {
                continue;
            }
            let expr = if was_member || burned(&g.expr) {
                self.rekey_expression(&g.name, &members, &burned)?
            } else {
                g.expr.clone()
            };
            let value = expr.value(&self.centre.keys.keys)?;
            groups.push(GroupEntry { name: g.name.clone(), members, expr, value });
        }
        self.groups = groups.clone();
        Ok(RevocationReport { leaver, retained, groups })
    }

    fn rekey_expression(
        &self,
        name: &str,
        members: &BTreeSet<usize>,
        burned: &dyn Fn(&KeyExpr) -> bool,
    ) -> Result<KeyExpr> {
        // Keys every remaining member already holds; expressions over them
        // need no further broadcasts.
        let mut common: Option<BTreeSet<usize>> = None;
        for &m in members {
            let keys = self.nodes[m].unlocked_keys();
            common = Some(match common {
                None => keys,
                Some(c) => c.intersection(&keys).copied().collect(),
            });
        }
        let common: Vec<usize> = common.unwrap_or_default().into_iter().collect();
        let safe = |expr: &KeyExpr| {
            !burned(expr)
                && self.members.iter().all(|&n| {
                    members.contains(&n)
                        || !expr.derivable_with(&self.nodes[n].unlocked_keys())
                })
        };
        for &k in &common {
            let cand = KeyExpr::Single(k);
            if safe(&cand) {
                return Ok(cand);
            }
        }
        for size in 2..=self.hash_cap.min(common.len()) {
            for set in combinations(&common, size) {
                let cand = KeyExpr::Hash(set);
                if safe(&cand) {
                    return Ok(cand);
                }
            }
        }
        Err(Error::GroupSpec(format!(
            "group {name}: no expression separates the remaining members from the leaver \
             and outside nodes"
        )))
    }

    /// Scrubs one unlocked key's share positions on one node.
    pub fn capture_harden(&mut self, node: usize, key: usize) -> Result<()> {
        let n = self
            .nodes
            .get_mut(node)
            .ok_or_else(|| Error::Usage(format!("node {node} is not on the grid")))?;
        n.harden(key)
    }
}

/// The whole-key schemes wired the same way: one system, stack nodes with
/// cyclic share assignments, broadcast token code words.
#[derive(Debug)]
pub struct LegacyNetwork {
    pub system: LegacySystem,
    pub assignments: Vec<Vec<usize>>,
    pub nodes: Vec<StackNode>,
    pub transcript: Vec<Bits>,
}

impl LegacyNetwork {
    pub fn new(system: LegacySystem, assignments: Vec<Vec<usize>>) -> Result<Self> {
        let nodes = assignments
            .iter()
            .map(|rows| system.node(rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(LegacyNetwork { system, assignments, nodes, transcript: Vec::new() })
    }

    /// Broadcasts one token code word; returns fresh unlocks per node.
    pub fn broadcast(&mut self, cw: &Bits) -> Result<BTreeMap<usize, Vec<usize>>> {
        let row = self.system.token_row(cw)?;
        let mut out = BTreeMap::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let fresh = node.fuse_token(&row.bits, &self.system.keys.digests)?;
            if !fresh.is_empty() {
                out.insert(i, fresh);
            }
        }
        self.transcript.push(cw.clone());
        Ok(out)
    }
}
