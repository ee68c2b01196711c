//! Bit-level share machinery: key interleaving into hidden partitions,
//! share-row synthesis from code words, and pattern-consistent extraction
//! of partitions and keys from stacked rows.
//!
//! A system hides `W` partitions of `Lp` bit positions each inside rows of
//! `W * Lp` bits. Block `X` carries key material at each partition's
//! positions, block `Y` is the bitwise complement of `X`, and every share or
//! token row picks `X` or `Y` per partition according to a code word.
//! Stacking rows and classifying columns (up to complement) is what reveals
//! partitions, so everything here is exact bookkeeping, no probabilistic
//! slack.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// A bit string. Stored one bit per byte (values 0/1); sizes in this domain
/// stay under a few thousand bits, so clarity beats packing.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bits(Vec<u8>);

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits(vec![0; len])
    }

    /// Builds from a slice of 0/1 values.
    pub fn from_bits(bits: &[u8]) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bit values must be 0 or 1");
        Bits(bits.to_vec())
    }

    /// Parses a string of '0' and '1' characters.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Usage(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Bits)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Bits((0..len).map(|_| rng.gen_range(0..=1u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        assert!(bit <= 1, "bit values must be 0 or 1");
        self.0[i] = bit;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn complement(&self) -> Self {
        Bits(self.0.iter().map(|b| b ^ 1).collect())
    }

    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "xor requires equal lengths");
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }

    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.len(), other.len(), "distance requires equal lengths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Bits(v)
    }

    /// The bits at `positions`, in the order given.
    pub fn select(&self, positions: &[usize]) -> Self {
        Bits(positions.iter().map(|&p| self.0[p]).collect())
    }

    /// Renders as a '0'/'1' string. Also the canonical digest preimage.
    pub fn ascii(&self) -> String {
        self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    /// Hex encoding, most significant bit of each byte first; the final
    /// nibble group is zero-padded. Pair with the bit length to round-trip.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &b) in self.0.iter().enumerate() {
            bytes[i / 8] |= b << (7 - i % 8);
        }
        hex::encode(bytes)
    }

    pub fn from_hex(len: usize, s: &str) -> Result<Self> {
        let bytes =
            hex::decode(s).map_err(|e| Error::Document(format!("bad hex bit block: {e}")))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Document(format!(
                "hex bit block holds {} bytes, expected {} for {len} bits",
                bytes.len(),
                len.div_ceil(8)
            )));
        }
        let mut bits = Vec::with_capacity(len);
        for i in 0..len {
            bits.push((bytes[i / 8] >> (7 - i % 8)) & 1);
        }
        // Reject stray padding so equal documents are byte-identical.
        for i in len..bytes.len() * 8 {
            if (bytes[i / 8] >> (7 - i % 8)) & 1 != 0 {
                return Err(Error::Document("hex bit block has nonzero padding".into()));
            }
        }
        Ok(Bits(bits))
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ascii())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({})", self.ascii())
    }
}

// Serialized as "<len>:<hex>" so documents stay compact and diffable.
impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{}:{}", self.len(), self.to_hex()))
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let (len, hex) = s
            .split_once(':')
            .ok_or_else(|| D::Error::custom("bit block must look like \"<len>:<hex>\""))?;
        let len: usize = len.parse().map_err(D::Error::custom)?;
        Bits::from_hex(len, hex).map_err(D::Error::custom)
    }
}

/// SHA-256 digest used for key confirmation and group keys.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; 32]);

impl Digest {
    /// Digest of a bit string (over its '0'/'1' ASCII rendering, so the
    /// length is part of the preimage).
    pub fn of_bits(bits: &Bits) -> Self {
        Digest(Sha256::digest(bits.ascii().as_bytes()).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Document(format!("bad digest hex: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Document("digest must be 32 bytes".into()))?;
        Ok(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(D::Error::custom)
    }
}

/// Which share scheme a system runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fixed codebook of binary code words; whole keys, W = v partitions.
    Legacy,
    /// Balanced-permutation code words with pairwise distance bounds;
    /// whole keys, W = v partitions, one share row per node.
    Distance,
    /// Circulant digit code words; split keys, W = 2v partitions, M share
    /// rows per node.
    Grid,
}

/// System-wide sizing and seeding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of keys.
    pub v: usize,
    /// Bits per partition. Legacy and distance keys are `lp` bits; grid keys
    /// are `2 * lp` bits split into two `lp`-bit halves.
    pub lp: usize,
    /// Share rows per node (grid) or stack height per node (legacy);
    /// always 1 for the distance variant.
    pub m: usize,
    /// Partition count: `v` for legacy/distance, `2 * v` for grid.
    pub w: usize,
    pub rng_seed: u64,
    pub variant: Variant,
}

impl SystemParams {
    pub fn legacy(v: usize, lp: usize, m: usize, rng_seed: u64) -> Self {
        SystemParams { v, lp, m, w: v, rng_seed, variant: Variant::Legacy }
    }

    pub fn distance(v: usize, lp: usize, rng_seed: u64) -> Self {
        SystemParams { v, lp, m: 1, w: v, rng_seed, variant: Variant::Distance }
    }

    pub fn grid(v: usize, lp: usize, m: usize, rng_seed: u64) -> Self {
        SystemParams { v, lp, m, w: 2 * v, rng_seed, variant: Variant::Grid }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v < 2 {
            return Err(Error::Usage(format!("v must be at least 2, got {}", self.v)));
        }
        if self.lp < 8 {
            return Err(Error::Usage(format!("Lp must be at least 8, got {}", self.lp)));
        }
        let expect_w = match self.variant {
            Variant::Legacy | Variant::Distance => self.v,
            Variant::Grid => 2 * self.v,
        };
        if self.w != expect_w {
            return Err(Error::Usage(format!(
                "W must be {expect_w} for {:?}, got {}",
                self.variant, self.w
            )));
        }
        match self.variant {
            Variant::Distance if self.v % 4 != 0 => {
                Err(Error::Usage(format!("distance variant needs v divisible by 4, got {}", self.v)))
            }
            Variant::Grid if self.m < 2 || self.v > (1usize << (self.m - 1)) => {
                Err(Error::Usage(format!(
                    "grid variant needs v <= 2^(M-1); v = {}, M = {}",
                    self.v, self.m
                )))
            }
            _ => Ok(()),
        }
    }

    /// Bits carried per key: whole keys for legacy/distance, two halves for grid.
    pub fn key_bits(&self) -> usize {
        match self.variant {
            Variant::Legacy | Variant::Distance => self.lp,
            Variant::Grid => 2 * self.lp,
        }
    }

    pub fn total_bits(&self) -> usize {
        self.w * self.lp
    }
}

/// The v keys plus their public confirmation digests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySet {
    pub keys: Vec<Bits>,
    pub digests: Vec<Digest>,
}

impl KeySet {
    /// Draws v keys of `key_bits` bits. Keys are pairwise distinct and
    /// non-complementary; with `split_halves` (grid variant) the same holds
    /// for all 2v half-strings, including the two halves of one key. That
    /// global half separation is what lets rejection-sampled token fills
    /// guarantee, rather than merely make likely, that foreign partitions
    /// never mimic a key half.
    pub fn generate<R: Rng + ?Sized>(
        v: usize,
        key_bits: usize,
        split_halves: bool,
        rng: &mut R,
    ) -> Result<Self> {
        assert!(!split_halves || key_bits % 2 == 0, "split keys need an even bit count");
        let mut keys: Vec<Bits> = Vec::with_capacity(v);
        let mut taken: Vec<Bits> = Vec::new(); // strings that new material must not equal or complement
        let push_taken = |taken: &mut Vec<Bits>, b: &Bits| {
            taken.push(b.clone());
            taken.push(b.complement());
        };
        let mut attempts = 0usize;
        while keys.len() < v {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::Construction(format!(
                    "could not place {v} keys of {key_bits} bits without collisions"
                )));
            }
            let cand = Bits::random(key_bits, rng);
            let pieces: Vec<Bits> = if split_halves {
                let half = key_bits / 2;
                vec![
                    Bits::from_bits(&cand.as_slice()[..half]),
                    Bits::from_bits(&cand.as_slice()[half..]),
                ]
            } else {
                vec![cand.clone()]
            };
            let clashes = pieces.iter().enumerate().any(|(i, p)| {
                taken.contains(p)
                    || pieces[..i].contains(p)
                    || pieces[..i].iter().any(|q| *q == p.complement())
            });
            if clashes {
                continue;
            }
            for p in &pieces {
                push_taken(&mut taken, p);
            }
            keys.push(cand);
        }
        Ok(KeySet::from_keys(keys))
    }

    pub fn from_keys(keys: Vec<Bits>) -> Self {
        let digests = keys.iter().map(Digest::of_bits).collect();
        KeySet { keys, digests }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Checks a candidate bit string against public key digests. Returns the key
/// index and the resolved key bits; the complement of a key is accepted and
/// flipped back, since extraction alone cannot distinguish the two.
pub fn identify_key(digests: &[Digest], candidate: &Bits) -> Option<(usize, Bits)> {
    let d = Digest::of_bits(candidate);
    if let Some(i) = digests.iter().position(|x| *x == d) {
        return Some((i, candidate.clone()));
    }
    let comp = candidate.complement();
    let d = Digest::of_bits(&comp);
    digests.iter().position(|x| *x == d).map(|i| (i, comp))
}

/// The centre-secret assignment of bit positions to partitions: `w` ordered
/// groups of exactly `lp` positions each, jointly a permutation of
/// `0..w * lp`. Positions are ascending within each group so interleaved key
/// bits keep their order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLayout {
    groups: Vec<Vec<usize>>,
}

impl PartitionLayout {
    /// Uniformly random layout.
    pub fn generate<R: Rng + ?Sized>(w: usize, lp: usize, rng: &mut R) -> Self {
        let mut positions: Vec<usize> = (0..w * lp).collect();
        positions.shuffle(rng);
        let groups = positions
            .chunks(lp)
            .map(|c| {
                let mut g = c.to_vec();
                g.sort_unstable();
                g
            })
            .collect();
        PartitionLayout { groups }
    }

    /// Partition j occupies positions `j*lp .. (j+1)*lp`. Used by small
    /// worked examples and tests.
    pub fn identity(w: usize, lp: usize) -> Self {
        PartitionLayout { groups: (0..w).map(|j| (j * lp..(j + 1) * lp).collect()).collect() }
    }

    pub fn from_groups(groups: Vec<Vec<usize>>) -> Result<Self> {
        let w = groups.len();
        let lp = groups.first().map_or(0, Vec::len);
        let mut seen = vec![false; w * lp];
        for g in &groups {
            if g.len() != lp {
                return Err(Error::Construction("partition groups must have equal sizes".into()));
            }
            if !g.windows(2).all(|p| p[0] < p[1]) {
                return Err(Error::Construction(
                    "positions must be strictly increasing within a partition".into(),
                ));
            }
            for &p in g {
                if p >= w * lp || seen[p] {
                    return Err(Error::Construction(
                        "partition groups must exactly cover the row".into(),
                    ));
                }
                seen[p] = true;
            }
        }
        Ok(PartitionLayout { groups })
    }

    pub fn w(&self) -> usize {
        self.groups.len()
    }

    pub fn lp(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }

    pub fn total_bits(&self) -> usize {
        self.w() * self.lp()
    }

    /// Positions of partition `j`, ascending.
    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }
}

/// Role of a synthesized row in a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowRole {
    Share,
    Token,
}

/// A full-width row together with how it is meant to be stacked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitRow {
    pub bits: Bits,
    pub role: RowRole,
}

/// Which piece of a key a partition carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyHalf {
    Whole,
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Direct,
    Complemented,
}

/// One partition's assignment inside block X.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub key: usize,
    pub half: KeyHalf,
    pub polarity: Polarity,
}

/// The legacy placement: partition j carries whole key j directly.
pub fn legacy_placement(v: usize) -> Vec<Placement> {
    (0..v)
        .map(|key| Placement { key, half: KeyHalf::Whole, polarity: Polarity::Direct })
        .collect()
}

fn key_piece(keys: &KeySet, lp: usize, p: Placement) -> Result<Bits> {
    let key = keys
        .keys
        .get(p.key)
        .ok_or_else(|| Error::Construction(format!("placement names missing key {}", p.key)))?;
    let piece = match p.half {
        KeyHalf::Whole => {
            if key.len() != lp {
                return Err(Error::Construction(format!(
                    "key {} is {} bits, partition width is {lp}",
                    p.key,
                    key.len()
                )));
            }
            key.clone()
        }
        KeyHalf::First | KeyHalf::Second => {
            if key.len() != 2 * lp {
                return Err(Error::Construction(format!(
                    "key {} is {} bits, split placement needs {}",
                    p.key,
                    key.len(),
                    2 * lp
                )));
            }
            let range = if p.half == KeyHalf::First { 0..lp } else { lp..2 * lp };
            Bits::from_bits(&key.as_slice()[range])
        }
    };
    Ok(match p.polarity {
        Polarity::Direct => piece,
        Polarity::Complemented => piece.complement(),
    })
}

/// Interleaves key material into block X per the placement map (one entry per
/// partition) and returns (X, Y) with Y the bitwise complement of X. Reading
/// partition j of X through the layout reproduces its assigned piece exactly.
pub fn interleave_keys(
    keys: &KeySet,
    layout: &PartitionLayout,
    placement: &[Placement],
) -> Result<(Bits, Bits)> {
    if placement.len() != layout.w() {
        return Err(Error::Construction(format!(
            "placement map covers {} partitions, layout has {}",
            placement.len(),
            layout.w()
        )));
    }
    let lp = layout.lp();
    let mut x = Bits::zeros(layout.total_bits());
    for (j, &p) in placement.iter().enumerate() {
        let piece = key_piece(keys, lp, p)?;
        for (slot, &pos) in layout.group(j).iter().enumerate() {
            x.set(pos, piece.get(slot));
        }
    }
    let y = x.complement();
    Ok((x, y))
}

/// Synthesizes a row: partition j is copied from X where the code word bit is
/// 1 and from Y where it is 0.
pub fn build_row(
    codeword: &Bits,
    x: &Bits,
    y: &Bits,
    layout: &PartitionLayout,
    role: RowRole,
) -> Result<BitRow> {
    if codeword.len() != layout.w() {
        return Err(Error::Construction(format!(
            "code word has {} bits, layout has {} partitions",
            codeword.len(),
            layout.w()
        )));
    }
    let mut bits = Bits::zeros(layout.total_bits());
    for j in 0..layout.w() {
        let src = if codeword.get(j) == 1 { x } else { y };
        for &pos in layout.group(j) {
            bits.set(pos, src.get(pos));
        }
    }
    Ok(BitRow { bits, role })
}

/// A stack-column equivalence class: a column matches if it equals the
/// representative or its bitwise complement. The representative is
/// canonicalized to start with a 1 so class equality is plain comparison.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternClass(Bits);

impl PatternClass {
    pub fn of_column(column: Bits) -> Self {
        assert!(!column.is_empty(), "pattern classes need at least one row");
        if column.get(0) == 1 {
            PatternClass(column)
        } else {
            PatternClass(column.complement())
        }
    }

    pub fn representative(&self) -> &Bits {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.len()
    }

    pub fn matches(&self, column: &Bits) -> bool {
        *column == self.0 || column.complement() == self.0
    }
}

impl fmt::Debug for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PatternClass({})", self.0.ascii())
    }
}

/// Reads one column of a row stack.
pub fn stack_column(rows: &[&Bits], col: usize) -> Bits {
    Bits(rows.iter().map(|r| r.get(col)).collect())
}

/// Returns, in increasing order, every column index of the stack whose
/// column matches `class` up to complement.
pub fn find_pattern_positions(rows: &[&Bits], class: &PatternClass) -> Result<Vec<usize>> {
    let first = rows.first().ok_or_else(|| Error::Usage("empty stack".into()))?;
    let width = first.len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Usage("stack rows differ in length".into()));
    }
    if class.height() != rows.len() {
        return Err(Error::Usage(format!(
            "pattern class height {} does not fit a stack of {} rows",
            class.height(),
            rows.len()
        )));
    }
    Ok((0..width).filter(|&c| class.matches(&stack_column(rows, c))).collect())
}

/// Concatenates the row's bits at the matched positions (ascending) into a
/// key piece, complementing if the carrier was complemented. Exactly `lp`
/// positions must have matched; anything else means noise positions joined
/// the match set and no key material can be isolated.
pub fn extract_key_half(
    row: &Bits,
    positions: &[usize],
    polarity: Polarity,
    lp: usize,
) -> Result<Bits> {
    if positions.len() != lp {
        return Err(Error::ExtractionAmbiguous { expected: lp, found: positions.len() });
    }
    let piece = row.select(positions);
    Ok(match polarity {
        Polarity::Direct => piece,
        Polarity::Complemented => piece.complement(),
    })
}
