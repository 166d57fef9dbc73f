//! Brute-force certifiers that re-derive the safety facts the planner relies
//! on, independently of the code under test.
//!
//! Scans are grid scans: every claimed bound carries a tolerance expressed in
//! grid-resolution units.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{expand_rect, inf_norm_dist, segment_blocked, AARect, Point2};
use crate::visibility::{AgentId, Positions, SubgraphPartition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("delta must be positive and finite, got {0}")]
    Delta(f64),
    #[error("resolution {resolution} is coarser than delta / 10 = {limit}")]
    Resolution { resolution: f64, limit: f64 },
    #[error("the scan found no occluded pair")]
    NoOccludedPair,
}

/// Closed-form minima of the three corner/face configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseBounds {
    /// Opposite corner regions.
    pub case0: f64,
    /// Corner region against an adjacent face.
    pub case1: f64,
    /// Both points hugging faces around a corner of the same side.
    pub case2: f64,
}

impl CaseBounds {
    pub fn min(&self) -> f64 {
        self.case0.min(self.case1).min(self.case2)
    }
}

/// Minimum inf-norm distance between two points that cannot see each other
/// around a square of side `s` whose inflated version keeps them `delta`
/// away from every face.
///
/// Case 1 minimizes `max(δ + δ²/(s + y), δ + s + y)` over `y ∈ [0, δ]`.
/// The first branch falls and the second rises in `y`; they cross at
/// `s + y = δ`. Case 2 minimizes `max(δ + δ²/u, δ + u)` over
/// `u = s/2 − y ∈ (0, s/2]`, crossing at `u = δ`.
pub fn analytic_bounds(s: f64, delta: f64) -> CaseBounds {
    let case0 = 2.0 * delta + s;
    let case1 = if s < delta { 2.0 * delta } else { delta + s };
    let half = 0.5 * s;
    let case2 = if delta <= half { 2.0 * delta } else { delta + delta * delta / half };
    CaseBounds { case0, case1, case2 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub obstacle: AARect,
    pub delta: f64,
    pub resolution: f64,
    pub min_nonlos_distance: f64,
    pub witness_pair: (Point2, Point2),
    /// Minimum over pairs taken from opposite corner regions only.
    pub case0_min_distance: f64,
    pub case0_witness_pair: (Point2, Point2),
    pub case_bounds: CaseBounds,
}

impl Lemma1Report {
    /// Lower bound on the continuous minimum implied by the scan.
    pub fn certified_lower_bound(&self) -> f64 {
        self.min_nonlos_distance - 2.0 * self.resolution
    }

    /// The scan supports the separation claim for agents that must stay
    /// `delta_min` apart: the clearance is strictly above half of it and the
    /// scanned minimum clears twice the clearance up to grid error.
    pub fn certifies(&self, delta_min: f64) -> bool {
        self.delta > 0.5 * delta_min && self.certified_lower_bound() >= 2.0 * self.delta - 2.0 * self.resolution - 1e-12
    }
}

/// Which of the nine regions cut out by the inflated box's edge lines a
/// point lies in: 0 below/left, 1 between, 2 above/right.
#[derive(Debug, Clone)]
struct Lattice {
    center: Point2,
    res: f64,
    /// Index bound: i, j in -n..=n.
    n: i64,
    col: Vec<u8>,
    row: Vec<u8>,
}

impl Lattice {
    fn new(obstacle: &AARect, inflated: &AARect, reach: f64, res: f64) -> Self {
        let center = obstacle.center();
        let half = 0.5 * inflated.width().max(inflated.height());
        let n = ((half + reach) / res).ceil() as i64;
        let band = |v: f64, lo: f64, hi: f64| -> u8 {
            if v < lo {
                0
            } else if v > hi {
                2
            } else {
                1
            }
        };
        let col = (-n..=n).map(|i| band(center.x + i as f64 * res, inflated.xmin(), inflated.xmax())).collect();
        let row = (-n..=n).map(|j| band(center.y + j as f64 * res, inflated.ymin(), inflated.ymax())).collect();
        Self { center, res, n, col, row }
    }

    fn point(&self, i: i64, j: i64) -> Point2 {
        Point2::new(self.center.x + i as f64 * self.res, self.center.y + j as f64 * self.res)
    }

    fn region(&self, i: i64, j: i64) -> (u8, u8) {
        (self.col[(i + self.n) as usize], self.row[(j + self.n) as usize])
    }

    /// Index range along one axis whose band equals `b`.
    fn range(bands: &[u8], n: i64, b: u8) -> Option<(i64, i64)> {
        let lo = bands.iter().position(|x| *x == b)? as i64 - n;
        let hi = bands.iter().rposition(|x| *x == b)? as i64 - n;
        Some((lo, hi))
    }
}

type Witness = (f64, (i64, i64), (i64, i64));

fn better(a: Option<Witness>, b: Option<Witness>) -> Option<Witness> {
    match (a, b) {
        (Some(x), Some(y)) => {
            if (y.0, y.1, y.2) < (x.0, x.1, x.2) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

/// Closest occluded pair on the lattice restricted to multiples of `step`.
/// `a_ok` filters the first point's region, `b_ok` the second's given the
/// first. Only pairs closer than `bound` are considered.
fn scan_pairs(
    lat: &Lattice,
    obstacle: &AARect,
    step: i64,
    bound: f64,
    a_ok: &(dyn Fn((u8, u8)) -> bool + Sync),
    b_ok: &(dyn Fn((u8, u8), (u8, u8)) -> bool + Sync),
) -> Option<Witness> {
    let n = lat.n - lat.n % step;
    let rows: Vec<i64> = (-n..=n).step_by(step as usize).collect();
    let regions: Vec<(u8, u8)> = (0..3u8).flat_map(|c| (0..3u8).map(move |r| (c, r))).filter(|r| *r != (1, 1)).collect();
    let ranges: Vec<((u8, u8), (i64, i64), (i64, i64))> = regions
        .iter()
        .filter_map(|&(c, r)| {
            Some(((c, r), Lattice::range(&lat.col, lat.n, c)?, Lattice::range(&lat.row, lat.n, r)?))
        })
        .collect();
    rows.par_iter()
        .map(|&ja| {
            let mut best = bound;
            let mut found: Option<Witness> = None;
            for ia in (-n..=n).step_by(step as usize) {
                let ra = lat.region(ia, ja);
                if ra == (1, 1) || !a_ok(ra) {
                    continue;
                }
                let pa = lat.point(ia, ja);
                if obstacle.inf_distance_to(pa) >= best {
                    continue;
                }
                for &(rb, (ilo, ihi), (jlo, jhi)) in &ranges {
                    if !b_ok(ra, rb) {
                        continue;
                    }
                    let w = (best / lat.res).floor() as i64 + 1;
                    let round_up = |v: i64| v.div_euclid(step) * step + if v.rem_euclid(step) == 0 { 0 } else { step };
                    let i0 = round_up(ilo.max(ia - w));
                    let j0 = round_up(jlo.max(ja - w));
                    let i1 = ihi.min(ia + w);
                    let j1 = jhi.min(ja + w);
                    let mut jb = j0;
                    while jb <= j1 {
                        let mut ib = i0;
                        while ib <= i1 {
                            let d = (ib - ia).abs().max((jb - ja).abs()) as f64 * lat.res;
                            if d < best {
                                let pb = lat.point(ib, jb);
                                if obstacle.segment_hits_open(pa, pb) {
                                    best = d;
                                    let (a, b) = if (ia, ja) <= (ib, jb) { ((ia, ja), (ib, jb)) } else { ((ib, jb), (ia, ja)) };
                                    found = Some((d, a, b));
                                }
                            }
                            ib += step;
                        }
                        jb += step;
                    }
                }
            }
            found
        })
        .reduce(|| None, better)
}

fn coarse_then_fine(
    lat: &Lattice,
    obstacle: &AARect,
    initial_bound: f64,
    a_ok: &(dyn Fn((u8, u8)) -> bool + Sync),
    b_ok: &(dyn Fn((u8, u8), (u8, u8)) -> bool + Sync),
) -> Option<Witness> {
    let coarse = scan_pairs(lat, obstacle, 4, initial_bound, a_ok, b_ok)?;
    // Coarse lattice points are fine lattice points, so the fine minimum is
    // at most the coarse one.
    let bound = coarse.0 + 0.5 * lat.res;
    better(scan_pairs(lat, obstacle, 1, bound, a_ok, b_ok), Some(coarse))
}

/// Grid scan for the closest pair of points that are hidden from each other
/// by `obstacle` while both stay outside the obstacle inflated by `delta` on
/// every side. Points range over a square annulus reaching `3·delta + s`
/// beyond the inflated box; farther pairs cannot beat the opposite-corner
/// bound.
pub fn lemma1_scan(obstacle: &AARect, delta: f64, resolution: f64) -> Result<Lemma1Report, OracleError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(OracleError::Delta(delta));
    }
    let limit = delta / 10.0;
    if !(resolution > 0.0) || resolution > limit * (1.0 + 1e-12) {
        return Err(OracleError::Resolution { resolution, limit });
    }
    let inflated = expand_rect(obstacle, 2.0 * delta);
    let s = obstacle.width().max(obstacle.height());
    let lat = Lattice::new(obstacle, &inflated, 3.0 * delta + s, resolution);
    // A straight pair across the middle is occluded, which bounds the
    // minimum from above.
    let across = inflated.width().max(inflated.height()) + 10.0 * resolution;

    let any = |_: (u8, u8)| true;
    let any_pair = |_: (u8, u8), _: (u8, u8)| true;
    let all = coarse_then_fine(&lat, obstacle, across, &any, &any_pair).ok_or(OracleError::NoOccludedPair)?;

    let corner = |r: (u8, u8)| r.0 != 1 && r.1 != 1;
    let opposite = |a: (u8, u8), b: (u8, u8)| a.0 != b.0 && a.1 != b.1;
    let case0 = coarse_then_fine(&lat, obstacle, across + 2.0 * s, &corner, &opposite)
        .ok_or(OracleError::NoOccludedPair)?;

    let to_points = |w: Witness| (lat.point(w.1 .0, w.1 .1), lat.point(w.2 .0, w.2 .1));
    let witness_pair = to_points(all);
    let case0_witness_pair = to_points(case0);
    Ok(Lemma1Report {
        obstacle: *obstacle,
        delta,
        resolution,
        min_nonlos_distance: inf_norm_dist(witness_pair.0, witness_pair.1),
        witness_pair,
        case0_min_distance: inf_norm_dist(case0_witness_pair.0, case0_witness_pair.1),
        case0_witness_pair,
        case_bounds: analytic_bounds(s, delta),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum AdaptiveCheck {
    Certified { resolution: f64, pairs_required_m: f64 },
    Counterexample { a: Point2, b: Point2, distance_m: f64 },
}

impl AdaptiveCheck {
    pub fn is_certified(&self) -> bool {
        matches!(self, AdaptiveCheck::Certified { .. })
    }
}

/// Scans grid points outside every inflated and physical obstacle near the
/// physical ones, and looks for a pair hidden from each other (by any
/// physical obstacle) that is closer than `delta_min + 2·resolution`.
/// Returns the closest such pair.
pub fn validate_adaptive(obstacles: &[AARect], inflated: &[AARect], delta_min: f64, resolution: f64) -> AdaptiveCheck {
    let required = delta_min + 2.0 * resolution;
    let certified = AdaptiveCheck::Certified { resolution, pairs_required_m: required };
    if obstacles.is_empty() {
        return certified;
    }
    let reach = required + resolution;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for o in obstacles {
        x0 = x0.min(o.xmin() - reach);
        x1 = x1.max(o.xmax() + reach);
        y0 = y0.min(o.ymin() - reach);
        y1 = y1.max(o.ymax() + reach);
    }
    let nx = ((x1 - x0) / resolution).ceil() as i64;
    let ny = ((y1 - y0) / resolution).ceil() as i64;
    let at = |i: i64, j: i64| Point2::new(x0 + i as f64 * resolution, y0 + j as f64 * resolution);
    let usable = |p: Point2| {
        obstacles.iter().any(|o| o.inf_distance_to(p) < required)
            && !obstacles.iter().any(|o| o.contains_closed(p))
            && !inflated.iter().any(|o| o.contains_closed(p))
    };
    let mask: Vec<Vec<bool>> = (0..=ny).into_par_iter().map(|j| (0..=nx).map(|i| usable(at(i, j))).collect()).collect();
    let w = (required / resolution).ceil() as i64;
    let found = (0..=ny)
        .into_par_iter()
        .map(|ja| {
            let mut best = required;
            let mut found: Option<Witness> = None;
            for ia in 0..=nx {
                if !mask[ja as usize][ia as usize] {
                    continue;
                }
                let pa = at(ia, ja);
                // Each unordered pair once: partners later in row-major order.
                for jb in ja..=(ja + w).min(ny) {
                    let i_start = if jb == ja { ia + 1 } else { (ia - w).max(0) };
                    for ib in i_start..=(ia + w).min(nx) {
                        if !mask[jb as usize][ib as usize] {
                            continue;
                        }
                        let pb = at(ib, jb);
                        let d = inf_norm_dist(pa, pb);
                        if d < best && segment_blocked(pa, pb, obstacles) {
                            best = d;
                            found = better(found, Some((d, (ia, ja), (ib, jb))));
                        }
                    }
                }
            }
            found
        })
        .reduce(|| None, better);
    match found {
        None => certified,
        Some((d, a, b)) => AdaptiveCheck::Counterexample { a: at(a.0, a.1), b: at(b.0, b.1), distance_m: d },
    }
}

/// Reference partition: pairwise visibility then naive transitive closure.
pub fn brute_force_subgraphs(positions: &Positions, obstacles: &[AARect]) -> SubgraphPartition {
    let ids: Vec<AgentId> = positions.keys().copied().collect();
    let n = ids.len();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if i != j && !segment_blocked(positions[&ids[i]], positions[&ids[j]], obstacles) {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let groups: BTreeSet<Vec<AgentId>> =
        (0..n).map(|i| (0..n).filter(|&j| reach[i][j]).map(|j| ids[j]).collect()).collect();
    SubgraphPartition::from_sets(groups, 0)
}
