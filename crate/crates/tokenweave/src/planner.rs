//! Batching of key deliveries into few broadcast tokens.
//!
//! A delivery target is a grid point: key u must reach the node whose
//! coordinates for u are `(x, y)`. One token can serve a whole line of
//! points for a key (all sharing an x or all sharing a y) with a single
//! extra partition, but any two orders inside a token must use disjoint
//! partitions, and a key may appear only once per token. The planner sweeps
//! the keys once per token, each time grabbing the largest coordinate-
//! aligned cluster of still-wanted points that fits next to what the token
//! already carries. Every planned token stays within `2v - 2` deliveries,
//! and the plan covers exactly the requested points: aligned clusters never
//! cross-combine into unrequested deliveries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridscheme::{GridCentre, GridToken, Point, TokenRequest};

/// All coordinate values a point set occupies. The x band `[1, v]` and the
/// y band `[v+1, 2v]` never overlap, so one set covers both.
pub fn grid_span(points: &[Point]) -> BTreeSet<usize> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

/// The points of `a` that collide with none of the coordinates `b` already
/// occupies; only those can join a token that already carries `b`.
pub fn star(a: &[Point], b: &[Point]) -> Vec<Point> {
    let span = grid_span(b);
    a.iter().filter(|p| !span.contains(&p.x) && !span.contains(&p.y)).copied().collect()
}

/// The largest cluster of points sharing one x or one y. The biggest such
/// cluster is always a full coordinate group, so scanning the groups is
/// exhaustive. Ties prefer an x group, then the smallest coordinate, which
/// keeps planning deterministic. Empty input gives an empty cluster.
pub fn find_largest_valid_subset(points: &[Point]) -> Vec<Point> {
    let mut by_x: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
    let mut by_y: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
    for &p in points {
        by_x.entry(p.x).or_default().push(p);
        by_y.entry(p.y).or_default().push(p);
    }
    let best = |groups: &BTreeMap<usize, Vec<Point>>| -> Option<(usize, Vec<Point>)> {
        groups
            .iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
            .map(|(c, g)| (*c, g.clone()))
    };
    let bx = best(&by_x);
    let by = best(&by_y);
    let mut chosen = match (bx, by) {
        (None, None) => return Vec::new(),
        (Some((_, g)), None) => g,
        (None, Some((_, g))) => g,
        (Some((_, gx)), Some((_, gy))) => {
            if gy.len() > gx.len() {
                gy
            } else {
                gx
            }
        }
    };
    chosen.sort();
    chosen
}

/// How full a token is: carrying at least v key instances beats sending one
/// token per key, which is the baseline worth improving on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenClass {
    Efficient,
    Inefficient,
}

/// Classification by instance count against the key pool size.
pub fn classify_token(requests: &[TokenRequest], v: usize) -> TokenClass {
    let instances: usize = requests.iter().map(|r| r.points.len()).sum();
    if instances >= v {
        TokenClass::Efficient
    } else {
        TokenClass::Inefficient
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedToken {
    pub requests: Vec<TokenRequest>,
    pub instances: usize,
    pub class: TokenClass,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPlan {
    pub v: usize,
    pub tokens: Vec<PlannedToken>,
}

impl TokenPlan {
    pub fn total_instances(&self) -> usize {
        self.tokens.iter().map(|t| t.instances).sum()
    }

    /// Points the plan delivers, per key.
    pub fn planned_points(&self) -> BTreeMap<usize, BTreeSet<Point>> {
        let mut out: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
        for t in &self.tokens {
            for r in &t.requests {
                out.entry(r.key).or_default().extend(r.points.iter().copied());
            }
        }
        out
    }
}

/// Plans tokens for the wanted points of each key.
///
/// Tokens are built one at a time. For each, a single sweep over the keys
/// takes, per key, the largest aligned cluster of its remaining points that
/// avoids every partition the token has claimed so far. Each sweep moves at
/// least one point while any remain, so the loop ends, and a key is visited
/// once per sweep, so no token carries a key twice.
pub fn token_construction(
    v: usize,
    targets: &BTreeMap<usize, BTreeSet<Point>>,
) -> Result<TokenPlan> {
    let mut remaining: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
    for (&key, points) in targets {
        if key >= v {
            return Err(Error::Plan(format!("target names missing key {key}")));
        }
        for p in points {
            if !(1..=v).contains(&p.x) || !(v + 1..=2 * v).contains(&p.y) {
                return Err(Error::Plan(format!(
                    "point ({}, {}) for key {key} matches no node coordinates",
                    p.x, p.y
                )));
            }
        }
        if !points.is_empty() {
            remaining.insert(key, points.clone());
        }
    }
    let mut tokens = Vec::new();
    while remaining.values().any(|p| !p.is_empty()) {
        let mut covered: Vec<Point> = Vec::new();
        let mut requests: Vec<TokenRequest> = Vec::new();
        for key in 0..v {
            let Some(want) = remaining.get_mut(&key) else { continue };
            let avail = star(&want.iter().copied().collect::<Vec<_>>(), &covered);
            if avail.is_empty() {
                continue;
            }
            let cluster = find_largest_valid_subset(&avail);
            for p in &cluster {
                want.remove(p);
            }
            covered.extend(cluster.iter().copied());
            requests.push(TokenRequest { key, points: cluster });
        }
        remaining.retain(|_, pts| !pts.is_empty());
        let instances = requests.iter().map(|r| r.points.len()).sum();
        let class = classify_token(&requests, v);
        tokens.push(PlannedToken { requests, instances, class });
    }
    Ok(TokenPlan { v, tokens })
}

/// Turns (key, node) pairs into the per-key point sets the planner wants.
pub fn delivery_points(
    centre: &GridCentre,
    targets: &[(usize, usize)],
) -> Result<BTreeMap<usize, BTreeSet<Point>>> {
    let mut out: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
    for &(key, node) in targets {
        out.entry(key).or_default().insert(centre.key_coords(node, key)?);
    }
    Ok(out)
}

/// Builds the broadcast rows for a plan, in order.
pub fn render_tokens(centre: &mut GridCentre, plan: &TokenPlan) -> Result<Vec<GridToken>> {
    plan.tokens.iter().map(|t| centre.build_token(&t.requests)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcore::SystemParams;

    fn pts(pairs: &[(usize, usize)]) -> Vec<Point> {
        pairs.iter().map(|&(x, y)| Point { x, y }).collect()
    }

    #[test]
    fn span_and_star_track_coordinates() {
        let b = pts(&[(1, 5), (1, 6)]);
        assert_eq!(grid_span(&b), [1, 5, 6].into_iter().collect());
        let a = pts(&[(2, 7), (1, 7), (3, 6), (2, 5)]);
        assert_eq!(star(&a, &b), pts(&[(2, 7)]));
        assert_eq!(star(&a, &[]), a);
        assert!(star(&[], &b).is_empty());
    }

    #[test]
    fn largest_cluster_is_the_biggest_coordinate_group() {
        // Three points on x=2 beat two on y=5.
        let a = pts(&[(2, 5), (2, 6), (2, 7), (3, 5)]);
        assert_eq!(find_largest_valid_subset(&a), pts(&[(2, 5), (2, 6), (2, 7)]));
        // Size tie between x=1 and y=6 goes to the x group.
        let b = pts(&[(1, 5), (1, 6), (2, 6)]);
        assert_eq!(find_largest_valid_subset(&b), pts(&[(1, 5), (1, 6)]));
        // Tie between two x groups goes to the smaller x.
        let c = pts(&[(2, 5), (2, 6), (1, 7), (1, 8)]);
        assert_eq!(find_largest_valid_subset(&c), pts(&[(1, 7), (1, 8)]));
        // Tie between two y groups goes to the smaller y.
        let d = pts(&[(1, 6), (2, 6), (3, 5), (4, 5)]);
        assert_eq!(find_largest_valid_subset(&d), pts(&[(3, 5), (4, 5)]));
        assert!(find_largest_valid_subset(&[]).is_empty());
        assert_eq!(find_largest_valid_subset(&pts(&[(3, 9)])), pts(&[(3, 9)]));
    }

    #[test]
    fn largest_cluster_matches_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(404);
        for _ in 0..200 {
            let v = rng.gen_range(3..=6);
            let n = rng.gen_range(0..=8);
            let set: BTreeSet<Point> = (0..n)
                .map(|_| Point { x: rng.gen_range(1..=v), y: rng.gen_range(v + 1..=2 * v) })
                .collect();
            let points: Vec<Point> = set.into_iter().collect();
            let got = find_largest_valid_subset(&points);
            // Exhaustive check over all subsets: none sharing an x or a y
            // may be larger.
            let mut best = 0usize;
            for mask in 0u32..1 << points.len() {
                let sub: Vec<Point> = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, p)| *p)
                    .collect();
                if sub.is_empty() {
                    continue;
                }
                let one_x = sub.iter().all(|p| p.x == sub[0].x);
                let one_y = sub.iter().all(|p| p.y == sub[0].y);
                if one_x || one_y {
                    best = best.max(sub.len());
                }
            }
            if points.is_empty() {
                assert!(got.is_empty());
            } else {
                assert_eq!(got.len(), best);
                let one_x = got.iter().all(|p| p.x == got[0].x);
                let one_y = got.iter().all(|p| p.y == got[0].y);
                assert!(one_x || one_y);
            }
        }
    }

    #[test]
    fn two_cluster_example_fits_one_efficient_token() {
        // Two keys, two nodes each: one pair shares its x, the other its y.
        // A single token serves all four deliveries, which for a three-key
        // pool counts as efficient.
        let mut targets: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
        targets.insert(0, pts(&[(1, 4), (1, 5)]).into_iter().collect());
        targets.insert(1, pts(&[(2, 6), (3, 6)]).into_iter().collect());
        let plan = token_construction(3, &targets).unwrap();
        assert_eq!(plan.tokens.len(), 1);
        let t = &plan.tokens[0];
        assert_eq!(t.instances, 4);
        assert_eq!(t.class, TokenClass::Efficient);
        assert_eq!(t.requests[0], TokenRequest { key: 0, points: pts(&[(1, 4), (1, 5)]) });
        assert_eq!(t.requests[1], TokenRequest { key: 1, points: pts(&[(2, 6), (3, 6)]) });
        assert_eq!(plan.total_instances(), 4);
    }

    #[test]
    fn classification_threshold_sits_at_the_pool_size() {
        let reqs = vec![TokenRequest { key: 0, points: pts(&[(1, 5), (1, 6), (1, 7)]) }];
        assert_eq!(classify_token(&reqs, 3), TokenClass::Efficient);
        assert_eq!(classify_token(&reqs, 4), TokenClass::Inefficient);
        assert_eq!(classify_token(&[], 2), TokenClass::Inefficient);
    }

    #[test]
    fn bad_targets_are_rejected() {
        let mut targets: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
        targets.insert(9, pts(&[(1, 5)]).into_iter().collect());
        assert!(matches!(token_construction(4, &targets), Err(Error::Plan(_))));
        let mut targets: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
        targets.insert(0, pts(&[(5, 6)]).into_iter().collect());
        assert!(matches!(token_construction(4, &targets), Err(Error::Plan(_))));
        let mut targets: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
        targets.insert(0, pts(&[(1, 3)]).into_iter().collect());
        assert!(matches!(token_construction(4, &targets), Err(Error::Plan(_))));
    }

    #[test]
    fn plans_cover_targets_exactly_with_disjoint_partitions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(777);
        for _ in 0..100 {
            let v = rng.gen_range(4..=7);
            let mut targets: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
            for key in 0..v {
                for _ in 0..rng.gen_range(0..=4) {
                    targets.entry(key).or_default().insert(Point {
                        x: rng.gen_range(1..=v),
                        y: rng.gen_range(v + 1..=2 * v),
                    });
                }
            }
            let plan = token_construction(v, &targets).unwrap();
            // Exact cover: planned points equal the targets, key by key.
            let mut want = targets.clone();
            want.retain(|_, p| !p.is_empty());
            assert_eq!(plan.planned_points(), want);
            let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
            for (ti, t) in plan.tokens.iter().enumerate() {
                assert!(t.instances >= 1 && t.instances <= 2 * v - 2, "token {ti}");
                let mut keys = BTreeSet::new();
                let mut parts = BTreeSet::new();
                for r in &t.requests {
                    assert!(keys.insert(r.key), "key {} twice in token {ti}", r.key);
                    let xs: BTreeSet<usize> = r.points.iter().map(|p| p.x).collect();
                    let ys: BTreeSet<usize> = r.points.iter().map(|p| p.y).collect();
                    assert!(xs.len() == 1 || ys.len() == 1, "unaligned cluster");
                    for c in xs.iter().chain(ys.iter()) {
                        assert!(parts.insert(*c), "partition {c} reused in token {ti}");
                    }
                    for p in &r.points {
                        *seen.entry(r.key).or_default() += 1;
                        assert!(targets[&r.key].contains(p), "extra point planned");
                    }
                }
            }
            for (key, points) in &targets {
                assert_eq!(seen.get(key).copied().unwrap_or(0), points.len());
            }
            // Deterministic: same input, same plan.
            assert_eq!(plan, token_construction(v, &targets).unwrap());
        }
    }

    #[test]
    fn rendered_plans_unlock_exactly_the_targets() {
        let mut centre = GridCentre::new(SystemParams::grid(4, 16, 3, 3131)).unwrap();
        // Deliver key 0 to a full row group, key 2 to two scattered nodes.
        let raw: Vec<(usize, usize)> = vec![(0, 4), (0, 5), (0, 6), (0, 7), (2, 1), (2, 10)];
        let targets = delivery_points(&centre, &raw).unwrap();
        let plan = token_construction(centre.params.v, &targets).unwrap();
        let rows = render_tokens(&mut centre, &plan).unwrap();
        assert_eq!(rows.len(), plan.tokens.len());
        let mut want: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(key, node) in &raw {
            want.entry(node).or_default().insert(key);
        }
        for i in 0..centre.node_count() {
            let mut node = centre.issue_share(i).unwrap();
            for t in &rows {
                node.fuse_token(&t.row, &centre.keys.digests).unwrap();
            }
            let expect = want.get(&i).cloned().unwrap_or_default();
            assert_eq!(node.unlocked_keys(), expect, "node {i}");
        }
    }
}
