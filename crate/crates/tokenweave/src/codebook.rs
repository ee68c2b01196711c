//! Code word matrices and the unlock rule built on them.
//!
//! A column of a stacked code word matrix is "unique" when no other column
//! matches it, even after flipping every bit. A share matrix must have no
//! unique column (otherwise the partition behind it is exposed without any
//! token); a token is designed so that stacking it on the right node's share
//! rows makes exactly the targeted columns unique.
//!
//! Two constructions live here: the fixed legacy codebook (whole keys, any
//! token shape) and the distance construction, whose code words are balanced
//! half-words glued to their complements so that any two rows differ in at
//! least 4 and at most v - 4 places. Flipping a single code word bit then
//! singles out one column for one node and provably no column for any other.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bitcore::{
    build_row, identify_key, interleave_keys, legacy_placement, stack_column, BitRow, Bits, Digest,
    KeySet, PartitionLayout, PatternClass, RowRole, SystemParams, Variant,
};
use crate::error::{Error, Result};

fn check_widths(rows: &[Bits]) -> Result<usize> {
    let first = rows.first().ok_or_else(|| Error::Usage("empty code word stack".into()))?;
    let width = first.len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Usage("code words differ in width".into()));
    }
    Ok(width)
}

/// Columns of the stack that no other column matches up to complement,
/// ascending, with their classes.
pub fn unique_columns(rows: &[Bits]) -> Result<Vec<(usize, PatternClass)>> {
    let width = check_widths(rows)?;
    let refs: Vec<&Bits> = rows.iter().collect();
    let mut by_class: BTreeMap<PatternClass, Vec<usize>> = BTreeMap::new();
    for c in 0..width {
        by_class.entry(PatternClass::of_column(stack_column(&refs, c))).or_default().push(c);
    }
    let mut found: Vec<(usize, PatternClass)> = by_class
        .into_iter()
        .filter(|(_, cols)| cols.len() == 1)
        .map(|(class, cols)| (cols[0], class))
        .collect();
    found.sort_by_key(|(c, _)| *c);
    Ok(found)
}

/// True when the stack exposes no partition on its own.
pub fn check_rule1(rows: &[Bits]) -> Result<bool> {
    Ok(unique_columns(rows)?.is_empty())
}

/// Partition indices a node unlocks from its share code words after
/// receiving `tokens`. Each token is stacked separately over the share rows
/// and the revealed columns accumulate; stacking several tokens jointly
/// would smear their effects together and expose far more than intended.
pub fn legacy_fuse(share_cws: &[Bits], tokens: &[Bits]) -> Result<BTreeSet<usize>> {
    let width = check_widths(share_cws)?;
    let mut unlocked = BTreeSet::new();
    for t in tokens {
        if t.len() != width {
            return Err(Error::Usage("token width differs from share code words".into()));
        }
        let mut stack = share_cws.to_vec();
        stack.push(t.clone());
        unlocked.extend(unique_columns(&stack)?.into_iter().map(|(c, _)| c));
    }
    Ok(unlocked)
}

/// Default share assignment when a codebook of `n` rows serves `count`
/// nodes with `m` rows each: node i takes the cyclic window
/// `{i, i+1, ..., i+m-1} mod n`, so neighbours overlap but no two nodes
/// share a whole stack.
pub fn cyclic_share_assignment(n: usize, m: usize, count: usize) -> Vec<Vec<usize>> {
    (0..count).map(|i| (0..m).map(|t| (i + t) % n).collect()).collect()
}

/// How many distinct nodes the distance construction supports:
/// `(v/2)! / (2 * ((v/4)!)^2)`, the number of balanced arrangements of the
/// base half-word with complementary pairs counted once.
pub fn max_distance_nodes(v: usize) -> Result<u128> {
    if v == 0 || v % 4 != 0 {
        return Err(Error::Usage(format!("node bound needs v divisible by 4, got {v}")));
    }
    let fact = |n: usize| -> Option<u128> {
        (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
    };
    let num = fact(v / 2).ok_or_else(|| Error::Usage(format!("v = {v} is too large")))?;
    let den = 2 * fact(v / 4).unwrap().pow(2);
    Ok(num / den)
}

/// All distance code words for the half-word `s1`: every balanced
/// rearrangement of `s1`, one per complement pair (the lexicographically
/// smaller, which is the one starting with 0), ascending, each glued to its
/// own complement. Row widths are `2 * s1.len()`.
pub fn gen_distance_matrix(s1: &Bits) -> Result<Vec<Bits>> {
    let half = s1.len();
    if half == 0 || half % 2 != 0 || s1.count_ones() != half / 2 {
        return Err(Error::Usage(format!(
            "base half-word must be balanced, got weight {} of {half}",
            s1.count_ones()
        )));
    }
    if half > 20 {
        return Err(Error::Usage(format!(
            "refusing to enumerate {half}-bit half-words; keep v at 40 or below"
        )));
    }
    let mut rows = Vec::new();
    for word in 0u32..1 << half {
        // Leading bit 0 picks exactly one representative per complement pair.
        if word & (1 << (half - 1)) != 0 || word.count_ones() as usize != half / 2 {
            continue;
        }
        let s: Vec<u8> = (0..half).rev().map(|b| ((word >> b) & 1) as u8).collect();
        let s = Bits::from_bits(&s);
        rows.push(s.concat(&s.complement()));
    }
    Ok(rows)
}

/// Token code word that delivers key `j` (1-based) to the node whose share
/// row is `codeword`: the same word with bit `j` flipped.
pub fn single_key_token(codeword: &Bits, j: usize) -> Result<Bits> {
    if j == 0 || j > codeword.len() {
        return Err(Error::Usage(format!(
            "key index {j} out of range 1..={}",
            codeword.len()
        )));
    }
    let mut t = codeword.clone();
    t.set(j - 1, t.get(j - 1) ^ 1);
    Ok(t)
}

/// Record of one key a node has recovered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnlockedKey {
    pub bits: Bits,
    /// Bit positions the key was read from, ascending.
    pub positions: Vec<usize>,
}

/// A node's receive side for whole-key variants: a few share rows plus the
/// blind fuse procedure. The node knows nothing about the layout or the
/// codebook; it only stacks, classifies columns, and checks digests.
#[derive(Clone, Debug)]
pub struct StackNode {
    pub lp: usize,
    pub share_rows: Vec<Bits>,
    pub unlocked: BTreeMap<usize, UnlockedKey>,
}

impl StackNode {
    pub fn new(lp: usize, share_rows: Vec<Bits>) -> Self {
        StackNode { lp, share_rows, unlocked: BTreeMap::new() }
    }

    /// Stacks one token row over the share rows, reads every column class
    /// that covers exactly one partition's worth of positions, and keeps
    /// whatever the digests confirm. Returns newly unlocked key indices.
    /// Columns that stay bundled with others are silently useless, which is
    /// the whole point of the construction.
    pub fn fuse_token(&mut self, token: &Bits, digests: &[Digest]) -> Result<Vec<usize>> {
        let width = token.len();
        if self.share_rows.iter().any(|r| r.len() != width) {
            return Err(Error::Usage("token row width differs from share rows".into()));
        }
        let mut rows: Vec<&Bits> = self.share_rows.iter().collect();
        rows.push(token);
        let mut by_class: HashMap<PatternClass, Vec<usize>> = HashMap::new();
        for c in 0..width {
            by_class.entry(PatternClass::of_column(stack_column(&rows, c))).or_default().push(c);
        }
        let mut fresh = Vec::new();
        for positions in by_class.into_values() {
            if positions.len() != self.lp {
                continue;
            }
            let candidate = token.select(&positions);
            if let Some((idx, bits)) = identify_key(digests, &candidate) {
                if !self.unlocked.contains_key(&idx) {
                    self.unlocked.insert(idx, UnlockedKey { bits, positions });
                    fresh.push(idx);
                }
            }
        }
        fresh.sort_unstable();
        Ok(fresh)
    }

    pub fn unlocked_keys(&self) -> BTreeSet<usize> {
        self.unlocked.keys().copied().collect()
    }
}

/// Centre state for the legacy scheme: v whole keys behind v partitions,
/// partition j carrying key j, shares cut from an externally chosen codebook.
#[derive(Clone, Debug)]
pub struct LegacySystem {
    pub params: SystemParams,
    pub keys: KeySet,
    pub layout: PartitionLayout,
    pub codebook: Vec<Bits>,
    x: Bits,
    y: Bits,
}

impl LegacySystem {
    /// Draws keys and a layout from the seed. The codebook is accepted as
    /// given, without enforcing the no-unique-column rule, so that audit
    /// tooling can load a faulty matrix and report on it; call
    /// [`check_rule1`] to gate issuance.
    pub fn new(params: SystemParams, codebook: Vec<Bits>) -> Result<Self> {
        if params.variant != Variant::Legacy {
            return Err(Error::Usage("legacy system needs the legacy variant".into()));
        }
        params.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(params.rng_seed);
        let keys = KeySet::generate(params.v, params.key_bits(), false, &mut rng)?;
        let layout = PartitionLayout::generate(params.w, params.lp, &mut rng);
        Self::from_parts(params, keys, layout, codebook)
    }

    /// Rebuilds from explicit parts, e.g. deserialized state.
    pub fn from_parts(
        params: SystemParams,
        keys: KeySet,
        layout: PartitionLayout,
        codebook: Vec<Bits>,
    ) -> Result<Self> {
        if keys.len() != params.v {
            return Err(Error::Construction(format!(
                "key set holds {} keys, params say {}",
                keys.len(),
                params.v
            )));
        }
        if layout.w() != params.w || layout.lp() != params.lp {
            return Err(Error::Construction("layout shape does not match params".into()));
        }
        for cw in &codebook {
            if cw.len() != params.w {
                return Err(Error::Construction(format!(
                    "code word width {} does not match {} partitions",
                    cw.len(),
                    params.w
                )));
            }
        }
        let (x, y) = interleave_keys(&keys, &layout, &legacy_placement(params.v))?;
        Ok(LegacySystem { params, keys, layout, codebook, x, y })
    }

    pub fn share_row(&self, codebook_row: usize) -> Result<BitRow> {
        let cw = self
            .codebook
            .get(codebook_row)
            .ok_or_else(|| Error::Usage(format!("no codebook row {codebook_row}")))?;
        build_row(cw, &self.x, &self.y, &self.layout, RowRole::Share)
    }

    /// Node holding the given codebook rows.
    pub fn node(&self, codebook_rows: &[usize]) -> Result<StackNode> {
        let rows = codebook_rows
            .iter()
            .map(|&r| self.share_row(r).map(|br| br.bits))
            .collect::<Result<Vec<_>>>()?;
        Ok(StackNode::new(self.params.lp, rows))
    }

    /// Token row for an arbitrary token code word. The legacy scheme has no
    /// token planning discipline; callers choose code words themselves.
    pub fn token_row(&self, cw: &Bits) -> Result<BitRow> {
        build_row(cw, &self.x, &self.y, &self.layout, RowRole::Token)
    }
}

/// Centre state for the distance construction: one share row per node,
/// single-bit-flip tokens, exclusivity by pairwise code word distance.
#[derive(Clone, Debug)]
pub struct DistanceSystem {
    pub params: SystemParams,
    pub keys: KeySet,
    pub layout: PartitionLayout,
    pub matrix: Vec<Bits>,
    x: Bits,
    y: Bits,
}

impl DistanceSystem {
    pub fn new(params: SystemParams) -> Result<Self> {
        if params.variant != Variant::Distance {
            return Err(Error::Usage("distance system needs the distance variant".into()));
        }
        params.validate()?;
        let base: Vec<u8> =
            (0..params.v / 2).map(|i| u8::from(i >= params.v / 4)).collect();
        let matrix = gen_distance_matrix(&Bits::from_bits(&base))?;
        let mut rng = ChaCha20Rng::seed_from_u64(params.rng_seed);
        let keys = KeySet::generate(params.v, params.key_bits(), false, &mut rng)?;
        let layout = PartitionLayout::generate(params.w, params.lp, &mut rng);
        let (x, y) = interleave_keys(&keys, &layout, &legacy_placement(params.v))?;
        Ok(DistanceSystem { params, keys, layout, matrix, x, y })
    }

    pub fn node_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn share_row(&self, node: usize) -> Result<BitRow> {
        let cw = self
            .matrix
            .get(node)
            .ok_or_else(|| Error::Usage(format!("no node {node}, matrix has {}", self.matrix.len())))?;
        build_row(cw, &self.x, &self.y, &self.layout, RowRole::Share)
    }

    pub fn node(&self, node: usize) -> Result<StackNode> {
        Ok(StackNode::new(self.params.lp, vec![self.share_row(node)?.bits]))
    }

    /// Token row delivering key `j` (1-based) to `node` and to nobody else.
    pub fn key_token_row(&self, node: usize, j: usize) -> Result<BitRow> {
        let cw = self
            .matrix
            .get(node)
            .ok_or_else(|| Error::Usage(format!("no node {node}, matrix has {}", self.matrix.len())))?;
        let t = single_key_token(cw, j)?;
        build_row(&t, &self.x, &self.y, &self.layout, RowRole::Token)
    }
}
