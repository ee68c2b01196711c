//! Grid construction: split keys addressed by coordinate pairs.
//!
//! Keys are `2 * Lp` bits. Partition x in the first band `[1, v]` can carry a
//! key's first half, partition y in the second band `[v+1, 2v]` its second
//! half. A node's code word is a row of `2v` digits (first band from one
//! circulant, second from another), and the node's share renders each digit
//! as M binary rows over hidden positions. Key u sits, for a given node, at
//! the one column per band holding u's table number; that `(x, y)` pair is
//! the key's coordinates on that node.
//!
//! A token row fills the x-partitions of targeted coordinates with first
//! halves, the y-partitions with complemented second halves, and every other
//! partition with random bits that are rejection-sampled away from all key
//! halves. Stacking the token over the M share rows turns each targeted
//! partition into a single column class of the right shape; every untargeted
//! partition provably splits between two classes, so match sets of exactly
//! `Lp` positions arise only where key material was actually delivered.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bitcore::{
    build_row, find_pattern_positions, identify_key, interleave_keys, Bits, Digest, KeyHalf,
    KeySet, PartitionLayout, PatternClass, Placement, Polarity, RowRole, SystemParams, Variant,
};
use crate::error::{Error, Result};

/// The v digit values, one per key: pairwise distinct M-bit numbers with no
/// complementary pair, so no two digits ever share a column class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyTable {
    numbers: Vec<u64>,
    m: usize,
}

impl KeyTable {
    /// Smallest workable table: counts up from 1, skipping any number whose
    /// complement was already taken. Deterministic, no randomness needed;
    /// the digits are public routing labels, not secrets.
    pub fn build(v: usize, m: usize) -> Result<Self> {
        if m == 0 || m >= 64 {
            return Err(Error::Usage(format!("digit width {m} out of range")));
        }
        if v > 1 << (m - 1) {
            return Err(Error::Usage(format!(
                "cannot place {v} mutually non-complementary {m}-bit numbers; need v <= {}",
                1 << (m - 1)
            )));
        }
        let mask = (1u64 << m) - 1;
        let mut numbers = Vec::with_capacity(v);
        for cand in 1..=mask {
            if numbers.len() == v {
                break;
            }
            if !numbers.contains(&(cand ^ mask)) {
                numbers.push(cand);
            }
        }
        Ok(KeyTable { numbers, m })
    }

    pub fn from_numbers(numbers: Vec<u64>, m: usize) -> Result<Self> {
        if m == 0 || m >= 64 {
            return Err(Error::Usage(format!("digit width {m} out of range")));
        }
        let mask = (1u64 << m) - 1;
        for (i, &n) in numbers.iter().enumerate() {
            if n > mask {
                return Err(Error::Usage(format!("number {n} does not fit in {m} bits")));
            }
            for &p in &numbers[..i] {
                if p == n {
                    return Err(Error::Usage(format!("number {n} appears twice")));
                }
                if p == (n ^ mask) {
                    return Err(Error::Usage(format!(
                        "numbers {p} and {n} are complementary in {m} bits"
                    )));
                }
            }
        }
        Ok(KeyTable { numbers, m })
    }

    pub fn numbers(&self) -> &[u64] {
        &self.numbers
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn number(&self, key: usize) -> Result<u64> {
        self.numbers
            .get(key)
            .copied()
            .ok_or_else(|| Error::Usage(format!("no key {key} in a table of {}", self.numbers.len())))
    }

    pub fn key_of(&self, number: u64) -> Result<usize> {
        self.numbers
            .iter()
            .position(|&n| n == number)
            .ok_or_else(|| Error::Usage(format!("number {number} is not in the key table")))
    }
}

/// Circulant matrix over a seed row: row j is the seed rotated j places to
/// the right, row 0 the seed itself. The seed must be a permutation of the
/// key table so that every row, read as digits, is one too.
pub fn build_circulant(seed: &[u64], table: &KeyTable) -> Result<Vec<Vec<u64>>> {
    let v = table.numbers().len();
    if seed.len() != v {
        return Err(Error::Usage(format!("seed row has {} digits, table has {v}", seed.len())));
    }
    let mut sorted = seed.to_vec();
    sorted.sort_unstable();
    let mut expect = table.numbers().to_vec();
    expect.sort_unstable();
    if sorted != expect {
        return Err(Error::Usage("seed row is not a permutation of the key table".into()));
    }
    Ok((0..v).map(|j| (0..v).map(|c| seed[(c + v - j) % v]).collect()).collect())
}

/// Digit code word of node i: row `i / v` of the first circulant glued to
/// row `i mod v` of the second. Supports exactly v^2 nodes.
pub fn node_share_codeword(
    c1: &[Vec<u64>],
    c2: &[Vec<u64>],
    i: usize,
    v: usize,
) -> Result<Vec<u64>> {
    if i >= v * v {
        return Err(Error::Usage(format!("node {i} out of range; the grid holds {}", v * v)));
    }
    let mut cw = c1[i / v].clone();
    cw.extend_from_slice(&c2[i % v]);
    Ok(cw)
}

/// A key's coordinates on one node: 1-based column of its number in the
/// first band, and absolute position `v +` column in the second band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

/// Finds `number` in both bands of a digit code word.
pub fn key_coordinates(codeword: &[u64], v: usize, number: u64) -> Result<Point> {
    if codeword.len() != 2 * v {
        return Err(Error::Usage(format!(
            "code word has {} digits, expected {}",
            codeword.len(),
            2 * v
        )));
    }
    let x = codeword[..v]
        .iter()
        .position(|&n| n == number)
        .ok_or_else(|| Error::Usage(format!("number {number} missing from the first band")))?;
    let y = codeword[v..]
        .iter()
        .position(|&n| n == number)
        .ok_or_else(|| Error::Usage(format!("number {number} missing from the second band")))?;
    Ok(Point { x: x + 1, y: v + y + 1 })
}

/// The two column classes a digit produces under a token: direct bits over
/// the first band, complemented bits over the second. Both are `m + 1` tall,
/// the token row on top.
pub fn classes_for_digit(n: u64, m: usize) -> (PatternClass, PatternClass) {
    let mut direct = vec![1u8];
    let mut flipped = vec![1u8];
    for t in 0..m {
        let bit = ((n >> (m - 1 - t)) & 1) as u8;
        direct.push(bit);
        flipped.push(bit ^ 1);
    }
    (
        PatternClass::of_column(Bits::from_bits(&direct)),
        PatternClass::of_column(Bits::from_bits(&flipped)),
    )
}

/// Binary row t of a digit code word: bit `m-1-t` of each digit, the most
/// significant bit first.
pub fn digit_binary_row(codeword: &[u64], m: usize, t: usize) -> Bits {
    Bits::from_bits(
        &codeword.iter().map(|&n| ((n >> (m - 1 - t)) & 1) as u8).collect::<Vec<_>>(),
    )
}

/// One delivery order inside a token: key `key` to the nodes whose
/// coordinates for it are `points`. The points must share an x or share a y;
/// that is what lets one partition carry the half they have in common.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    pub key: usize,
    pub points: Vec<Point>,
}

/// What a token row carries at one partition. Centre-side audit record; the
/// broadcast itself is just the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenFill {
    FirstHalf { key: usize },
    SecondHalfFlipped { key: usize },
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridToken {
    pub row: Bits,
    /// Fill kind per partition index, 0-based, covering all of them.
    pub fills: BTreeMap<usize, TokenFill>,
}

/// What one unlocked key left behind on a node: the key bits and the share
/// positions they were read from, kept so the share can later be scrubbed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlockRecord {
    pub bits: Bits,
    pub x_positions: Vec<usize>,
    pub y_positions: Vec<usize>,
}

/// A node's full receive state: its digit code word, M share rows, the
/// positions it has scrubbed, and everything unlocked so far.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeShare {
    pub node: usize,
    pub codeword: Vec<u64>,
    pub m: usize,
    pub lp: usize,
    pub rows: Vec<Bits>,
    pub erased: BTreeSet<usize>,
    pub unlocked: BTreeMap<usize, UnlockRecord>,
}

impl NodeShare {
    /// Stacks one token row on top of the share rows and tries every digit
    /// of the own code word: a key is recovered only when both of its
    /// classes isolate exactly one partition's worth of live positions and
    /// the assembled bits match a published digest. Anything less specific
    /// is skipped without comment; partial matches are by construction
    /// useless. Returns newly unlocked key indices, ascending.
    pub fn fuse_token(&mut self, token: &Bits, digests: &[Digest]) -> Result<Vec<usize>> {
        if token.len() != self.lp * self.codeword.len() {
            return Err(Error::Usage(format!(
                "token row has {} bits, shares are {} wide",
                token.len(),
                self.lp * self.codeword.len()
            )));
        }
        let mut stack: Vec<&Bits> = vec![token];
        stack.extend(self.rows.iter());
        let digits: BTreeSet<u64> = self.codeword.iter().copied().collect();
        let mut fresh = Vec::new();
        for &n in &digits {
            let (class_x, class_y) = classes_for_digit(n, self.m);
            let live = |positions: Vec<usize>| -> Vec<usize> {
                positions.into_iter().filter(|p| !self.erased.contains(p)).collect()
            };
            let mx = live(find_pattern_positions(&stack, &class_x)?);
            if mx.len() != self.lp {
                continue;
            }
            let my = live(find_pattern_positions(&stack, &class_y)?);
            if my.len() != self.lp {
                continue;
            }
            let candidate = token.select(&mx).concat(&token.select(&my).complement());
            if let Some((idx, bits)) = identify_key(digests, &candidate) {
                if !self.unlocked.contains_key(&idx) {
                    self.unlocked
                        .insert(idx, UnlockRecord { bits, x_positions: mx, y_positions: my });
                    fresh.push(idx);
                }
            }
        }
        fresh.sort_unstable();
        Ok(fresh)
    }

    /// Scrubs the share positions an unlocked key was read from, so a later
    /// capture of this share plus recorded broadcasts cannot re-derive it.
    /// The positions are zeroed in every row and excluded from all future
    /// matching. Scrubbing twice is a no-op; scrubbing a key never unlocked
    /// is an error because there is no record of where it lives.
    pub fn harden(&mut self, key: usize) -> Result<()> {
        let rec = self
            .unlocked
            .get(&key)
            .ok_or_else(|| Error::Usage(format!("key {key} is not unlocked on node {}", self.node)))?;
        let positions: Vec<usize> =
            rec.x_positions.iter().chain(rec.y_positions.iter()).copied().collect();
        for row in &mut self.rows {
            for &p in &positions {
                row.set(p, 0);
            }
        }
        self.erased.extend(positions);
        Ok(())
    }

    pub fn unlocked_keys(&self) -> BTreeSet<usize> {
        self.unlocked.keys().copied().collect()
    }
}

/// Centre state: key material, digit plumbing, and the token builder. The
/// random stream is deterministic in the seed and advances only on
/// generation and token building, so replaying the same calls reproduces
/// byte-identical rows.
#[derive(Clone, Debug)]
pub struct GridCentre {
    pub params: SystemParams,
    pub keys: KeySet,
    pub table: KeyTable,
    pub layout: PartitionLayout,
    pub c1: Vec<Vec<u64>>,
    pub c2: Vec<Vec<u64>>,
    rng: ChaCha20Rng,
    /// Every key half and its complement; token noise must avoid all of
    /// them so that a noise partition can never fully mimic key material.
    forbidden_fills: BTreeSet<Bits>,
}

impl GridCentre {
    pub fn new(params: SystemParams) -> Result<Self> {
        Self::with_table(params, None)
    }

    /// As `new`, but with an explicit key-table assignment instead of the
    /// default ascending pick.
    pub fn with_table(params: SystemParams, numbers: Option<&[u64]>) -> Result<Self> {
        if params.variant != Variant::Grid {
            return Err(Error::Usage("grid centre needs the grid variant".into()));
        }
        params.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(params.rng_seed);
        let keys = KeySet::generate(params.v, params.key_bits(), true, &mut rng)?;
        let layout = PartitionLayout::generate(params.w, params.lp, &mut rng);
        let table = match numbers {
            Some(ns) => {
                if ns.len() != params.v {
                    return Err(Error::Usage(format!(
                        "key table has {} numbers, system has {} keys",
                        ns.len(),
                        params.v
                    )));
                }
                KeyTable::from_numbers(ns.to_vec(), params.m)?
            }
            None => KeyTable::build(params.v, params.m)?,
        };
        let mut r1 = table.numbers().to_vec();
        r1.shuffle(&mut rng);
        let mut r2 = table.numbers().to_vec();
        r2.shuffle(&mut rng);
        let c1 = build_circulant(&r1, &table)?;
        let c2 = build_circulant(&r2, &table)?;
        let mut forbidden_fills = BTreeSet::new();
        for k in &keys.keys {
            for half in [
                Bits::from_bits(&k.as_slice()[..params.lp]),
                Bits::from_bits(&k.as_slice()[params.lp..]),
            ] {
                forbidden_fills.insert(half.complement());
                forbidden_fills.insert(half);
            }
        }
        Ok(GridCentre { params, keys, table, layout, c1, c2, rng, forbidden_fills })
    }

    pub fn node_count(&self) -> usize {
        self.params.v * self.params.v
    }

    pub fn node_codeword(&self, i: usize) -> Result<Vec<u64>> {
        node_share_codeword(&self.c1, &self.c2, i, self.params.v)
    }

    /// Coordinates of `key` on node `i`.
    pub fn key_coords(&self, i: usize, key: usize) -> Result<Point> {
        key_coordinates(&self.node_codeword(i)?, self.params.v, self.table.number(key)?)
    }

    /// The one node whose coordinates for `key` are `p`: circulant rows are
    /// rotations, so each band column pins down one row of each circulant.
    pub fn node_for_point(&self, key: usize, p: Point) -> Result<usize> {
        let v = self.params.v;
        if !(1..=v).contains(&p.x) || !(v + 1..=2 * v).contains(&p.y) {
            return Err(Error::Usage(format!("point ({}, {}) is off the grid", p.x, p.y)));
        }
        let n = self.table.number(key)?;
        let q = (0..v)
            .find(|&q| self.c1[q][p.x - 1] == n)
            .ok_or_else(|| Error::Usage("no circulant row puts the key at that column".into()))?;
        let r = (0..v)
            .find(|&r| self.c2[r][p.y - 1 - v] == n)
            .ok_or_else(|| Error::Usage("no circulant row puts the key at that column".into()))?;
        Ok(q * v + r)
    }

    /// Issues node i's share: M rows rendering the digits of its code word
    /// over per-node key placement.
    pub fn issue_share(&self, i: usize) -> Result<NodeShare> {
        let codeword = self.node_codeword(i)?;
        self.share_for_codeword(i, codeword)
    }

    /// Share for an explicit digit code word (both bands permutations of
    /// the key table). Lets audits and worked examples run nodes that are
    /// not on the standard grid.
    pub fn share_for_codeword(&self, node: usize, codeword: Vec<u64>) -> Result<NodeShare> {
        let v = self.params.v;
        if codeword.len() != 2 * v {
            return Err(Error::Usage(format!(
                "code word has {} digits, expected {}",
                codeword.len(),
                2 * v
            )));
        }
        let mut placements = Vec::with_capacity(2 * v);
        for (j, &n) in codeword.iter().enumerate() {
            let key = self.table.key_of(n)?;
            let half = if j < v { KeyHalf::First } else { KeyHalf::Second };
            placements.push(Placement { key, half, polarity: Polarity::Direct });
        }
        let (x, y) = interleave_keys(&self.keys, &self.layout, &placements)?;
        let rows = (0..self.params.m)
            .map(|t| {
                let cw = digit_binary_row(&codeword, self.params.m, t);
                build_row(&cw, &x, &y, &self.layout, RowRole::Share).map(|r| r.bits)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NodeShare {
            node,
            codeword,
            m: self.params.m,
            lp: self.params.lp,
            rows,
            erased: BTreeSet::new(),
            unlocked: BTreeMap::new(),
        })
    }

    /// Builds a broadcast token row for a batch of delivery orders.
    ///
    /// Each order's points must share a coordinate; orders must not touch
    /// the same partition twice; and one key may appear in only one order
    /// per token, because two orders for the same key would cross-breed
    /// their coordinates and unlock the key at nodes neither order named.
    pub fn build_token(&mut self, requests: &[TokenRequest]) -> Result<GridToken> {
        let v = self.params.v;
        let lp = self.params.lp;
        let mut fills: BTreeMap<usize, TokenFill> = BTreeMap::new();
        let mut keys_seen = BTreeSet::new();
        let claim = |fills: &mut BTreeMap<usize, TokenFill>, part: usize, fill: TokenFill| {
            match fills.get(&part) {
                None => {
                    fills.insert(part, fill);
                    Ok(())
                }
                Some(prev) if *prev == fill => Ok(()),
                Some(_) => Err(Error::Plan(format!(
                    "partition {} claimed twice with different material",
                    part + 1
                ))),
            }
        };
        for req in requests {
            if req.key >= self.params.v {
                return Err(Error::Plan(format!("request names missing key {}", req.key)));
            }
            if !keys_seen.insert(req.key) {
                return Err(Error::Plan(format!(
                    "key {} appears in two orders of one token; their coordinates would \
                     cross-combine at unintended nodes",
                    req.key
                )));
            }
            let points: BTreeSet<Point> = req.points.iter().copied().collect();
            if points.is_empty() {
                return Err(Error::Plan("order with no points".into()));
            }
            for p in &points {
                if !(1..=v).contains(&p.x) || !(v + 1..=2 * v).contains(&p.y) {
                    return Err(Error::Plan(format!("point ({}, {}) is off the grid", p.x, p.y)));
                }
            }
            let xs: BTreeSet<usize> = points.iter().map(|p| p.x).collect();
            let ys: BTreeSet<usize> = points.iter().map(|p| p.y).collect();
            if xs.len() > 1 && ys.len() > 1 {
                return Err(Error::Plan(format!(
                    "order for key {} spans {} x and {} y values; points must share a line",
                    req.key,
                    xs.len(),
                    ys.len()
                )));
            }
            for &x in &xs {
                claim(&mut fills, x - 1, TokenFill::FirstHalf { key: req.key })?;
            }
            for &y in &ys {
                claim(&mut fills, y - 1, TokenFill::SecondHalfFlipped { key: req.key })?;
            }
        }
        // Claims recorded; now render the row and pad with clean noise.
        let mut row = Bits::zeros(self.params.total_bits());
        for j in 0..2 * v {
            let fill = fills.get(&j).copied().unwrap_or(TokenFill::Random);
            let material = match fill {
                TokenFill::FirstHalf { key } => {
                    Bits::from_bits(&self.keys.keys[key].as_slice()[..lp])
                }
                TokenFill::SecondHalfFlipped { key } => {
                    Bits::from_bits(&self.keys.keys[key].as_slice()[lp..]).complement()
                }
                TokenFill::Random => {
                    fills.insert(j, TokenFill::Random);
                    self.clean_noise(lp)?
                }
            };
            for (slot, &pos) in self.layout.group(j).iter().enumerate() {
                row.set(pos, material.get(slot));
            }
        }
        Ok(GridToken { row, fills })
    }

    /// One key to the nodes at the given points, nothing else in the token.
    pub fn single_key_token(&mut self, key: usize, points: &[Point]) -> Result<GridToken> {
        self.build_token(&[TokenRequest { key, points: points.to_vec() }])
    }

    fn clean_noise(&mut self, lp: usize) -> Result<Bits> {
        for _ in 0..10_000 {
            let cand = Bits::random(lp, &mut self.rng);
            if !self.forbidden_fills.contains(&cand) {
                return Ok(cand);
            }
        }
        Err(Error::Construction("could not draw noise clear of all key halves".into()))
    }
}
