//! Planar primitives: points, axis-aligned rectangles, inf-norm distance,
//! obstacle inflation and segment occlusion.
//!
//! Two obstacle conventions coexist and are deliberately different:
//!
//! * line-of-sight tests treat obstacle interiors as **open**, so a sight
//!   line that grazes an edge or a corner is still visible;
//! * free-space membership treats planning obstacles as **closed**, so a
//!   point on an inflated boundary counts as occupied.
//!
//! Predicates compare without epsilons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("degenerate rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]")]
    Degenerate {
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
    },
    #[error("inflation width must be positive, got {0}")]
    InflationWidth(f64),
    #[error("adaptive cap length must be positive, got {0}")]
    CapLength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn euclidean(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at parameter `lambda` on the segment from `self` to `other`.
    pub fn lerp(&self, other: &Point2, lambda: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * lambda,
            self.y + (other.y - self.y) * lambda,
        )
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

/// `max(|dx|, |dy|)`.
pub fn inf_norm_dist(p: Point2, q: Point2) -> f64 {
    (p.x - q.x).abs().max((p.y - q.y).abs())
}

/// Axis-aligned rectangle with strictly positive width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRect", into = "RawRect")]
pub struct AARect {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRect {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl TryFrom<RawRect> for AARect {
    type Error = GeometryError;
    fn try_from(r: RawRect) -> Result<Self, Self::Error> {
        AARect::new(r.xmin, r.xmax, r.ymin, r.ymax)
    }
}

impl From<AARect> for RawRect {
    fn from(r: AARect) -> Self {
        RawRect {
            xmin: r.xmin,
            xmax: r.xmax,
            ymin: r.ymin,
            ymax: r.ymax,
        }
    }
}

impl AARect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self, GeometryError> {
        if ![xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rectangle"));
        }
        // Written so that NaN could never slip through as "not degenerate".
        if !(xmin < xmax && ymin < ymax) {
            return Err(GeometryError::Degenerate {
                xmin,
                xmax,
                ymin,
                ymax,
            });
        }
        Ok(Self {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }
    pub fn xmax(&self) -> f64 {
        self.xmax
    }
    pub fn ymin(&self) -> f64 {
        self.ymin
    }
    pub fn ymax(&self) -> f64 {
        self.ymax
    }
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }
    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            Point2::new(self.xmin, self.ymin),
            Point2::new(self.xmax, self.ymin),
            Point2::new(self.xmin, self.ymax),
            Point2::new(self.xmax, self.ymax),
        ]
    }

    pub fn contains_closed(&self, p: Point2) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn contains_open(&self, p: Point2) -> bool {
        p.x > self.xmin && p.x < self.xmax && p.y > self.ymin && p.y < self.ymax
    }

    pub fn contains_rect(&self, other: &AARect) -> bool {
        other.xmin >= self.xmin
            && other.xmax <= self.xmax
            && other.ymin >= self.ymin
            && other.ymax <= self.ymax
    }

    /// Inf-norm distance from `p` to the closed rectangle (zero inside).
    pub fn inf_distance_to(&self, p: Point2) -> f64 {
        let dx = (self.xmin - p.x).max(p.x - self.xmax).max(0.0);
        let dy = (self.ymin - p.y).max(p.y - self.ymax).max(0.0);
        dx.max(dy)
    }

    /// Does the closed segment `p`–`q` meet the open interior?
    pub fn segment_hits_open(&self, p: Point2, q: Point2) -> bool {
        match clip_interval(p, q, self, false) {
            Some((lo, hi)) => lo < hi && lo < 1.0 && hi > 0.0,
            None => false,
        }
    }

    /// Does the closed segment `p`–`q` meet the closed rectangle?
    pub fn segment_hits_closed(&self, p: Point2, q: Point2) -> bool {
        match clip_interval(p, q, self, true) {
            Some((lo, hi)) => lo <= hi && lo <= 1.0 && hi >= 0.0,
            None => false,
        }
    }
}

/// Parameter interval of the line `p + t (q - p)` lying inside the rectangle
/// (both ends open or both closed, as requested). `None` means empty.
fn clip_interval(p: Point2, q: Point2, r: &AARect, closed: bool) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (start, delta, min, max) in [
        (p.x, q.x - p.x, r.xmin, r.xmax),
        (p.y, q.y - p.y, r.ymin, r.ymax),
    ] {
        if delta == 0.0 {
            let inside = if closed {
                start >= min && start <= max
            } else {
                start > min && start < max
            };
            if !inside {
                return None;
            }
        } else {
            let a = (min - start) / delta;
            let b = (max - start) / delta;
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            lo = lo.max(a);
            hi = hi.min(b);
        }
    }
    Some((lo, hi))
}

/// Minkowski sum of `r` with the inf-norm ball of side `width`: every bound
/// moves outward by `width / 2`.
pub fn expand_rect(r: &AARect, width: f64) -> AARect {
    let h = 0.5 * width;
    AARect {
        xmin: r.xmin - h,
        xmax: r.xmax + h,
        ymin: r.ymin - h,
        ymax: r.ymax + h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InflationMode {
    Full,
    Adaptive {
        #[serde(rename = "cap_length_m")]
        cap_length: f64,
    },
}

/// How physical obstacles are turned into planning obstacles. `delta` is the
/// side of the inflating inf-norm ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationSpec {
    pub delta: f64,
    pub mode: InflationMode,
}

impl InflationSpec {
    pub fn new(delta: f64, mode: InflationMode) -> Result<Self, GeometryError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(GeometryError::InflationWidth(delta));
        }
        if let InflationMode::Adaptive { cap_length } = mode {
            if !(cap_length > 0.0) || !cap_length.is_finite() {
                return Err(GeometryError::CapLength(cap_length));
            }
        }
        Ok(Self { delta, mode })
    }

    /// Planning obstacles generated by one physical obstacle.
    pub fn inflate(&self, r: &AARect) -> Vec<AARect> {
        match self.mode {
            InflationMode::Full => vec![expand_rect(r, self.delta)],
            InflationMode::Adaptive { .. } => adaptive_expand(r, self),
        }
    }
}

/// Corner-cap inflation: `r` itself plus one cap per corner. A cap covers `L`
/// inward along both edges incident to its corner and `delta / 2` outward
/// past both of them. Face segments farther than `L` from every corner keep
/// their physical boundary. With `L` at least half a side the caps meet and
/// the union equals [`expand_rect`].
///
/// A `Full` spec falls back to the single expanded rectangle.
pub fn adaptive_expand(r: &AARect, spec: &InflationSpec) -> Vec<AARect> {
    let cap = match spec.mode {
        InflationMode::Adaptive { cap_length } => cap_length,
        InflationMode::Full => return vec![expand_rect(r, spec.delta)],
    };
    let h = 0.5 * spec.delta;
    let cx = cap.min(r.width());
    let cy = cap.min(r.height());
    let lo_x = (r.xmin - h, r.xmin + cx);
    let hi_x = (r.xmax - cx, r.xmax + h);
    let lo_y = (r.ymin - h, r.ymin + cy);
    let hi_y = (r.ymax - cy, r.ymax + h);
    let mut out = vec![*r];
    for (xs, ys) in [(lo_x, lo_y), (hi_x, lo_y), (lo_x, hi_y), (hi_x, hi_y)] {
        out.push(AARect {
            xmin: xs.0,
            xmax: xs.1,
            ymin: ys.0,
            ymax: ys.1,
        });
    }
    out
}

/// True iff some point of the closed segment `p`–`q` lies in the open
/// interior of one of `obstacles`.
pub fn segment_blocked(p: Point2, q: Point2, obstacles: &[AARect]) -> bool {
    obstacles.iter().any(|o| o.segment_hits_open(p, q))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkspaceError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("physical obstacle {index} is not inside the workspace bounds")]
    ObstacleOutOfBounds { index: usize },
}

/// Workspace bounds with the physical obstacles (used for line of sight) and
/// the planning obstacles derived from them (used for motion).
#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    bounds: AARect,
    physical_obstacles: Vec<AARect>,
    planning_obstacles: Vec<AARect>,
    /// Index of the physical obstacle each planning obstacle came from.
    planning_source: Vec<usize>,
}

impl Workspace {
    pub fn new(
        bounds: AARect,
        physical_obstacles: Vec<AARect>,
        inflation: &InflationSpec,
    ) -> Result<Self, WorkspaceError> {
        for (index, o) in physical_obstacles.iter().enumerate() {
            if !bounds.contains_rect(o) {
                return Err(WorkspaceError::ObstacleOutOfBounds { index });
            }
        }
        let mut planning_obstacles = Vec::new();
        let mut planning_source = Vec::new();
        for (index, o) in physical_obstacles.iter().enumerate() {
            for p in inflation.inflate(o) {
                planning_obstacles.push(p);
                planning_source.push(index);
            }
        }
        Ok(Self {
            bounds,
            physical_obstacles,
            planning_obstacles,
            planning_source,
        })
    }

    /// A workspace whose planning obstacles are the physical ones.
    pub fn uninflated(bounds: AARect, physical_obstacles: Vec<AARect>) -> Result<Self, WorkspaceError> {
        for (index, o) in physical_obstacles.iter().enumerate() {
            if !bounds.contains_rect(o) {
                return Err(WorkspaceError::ObstacleOutOfBounds { index });
            }
        }
        Ok(Self {
            bounds,
            planning_source: (0..physical_obstacles.len()).collect(),
            planning_obstacles: physical_obstacles.clone(),
            physical_obstacles,
        })
    }

    pub fn bounds(&self) -> &AARect {
        &self.bounds
    }
    pub fn physical_obstacles(&self) -> &[AARect] {
        &self.physical_obstacles
    }
    pub fn planning_obstacles(&self) -> &[AARect] {
        &self.planning_obstacles
    }

    /// Index of the first physical obstacle whose planning region contains
    /// `p` (closed), if any.
    pub fn blocking_obstacle(&self, p: Point2) -> Option<usize> {
        self.planning_obstacles
            .iter()
            .position(|o| o.contains_closed(p))
            .map(|i| self.planning_source[i])
    }

    /// The closed segment stays inside the bounds and off every closed
    /// planning obstacle.
    pub fn segment_free(&self, p: Point2, q: Point2) -> bool {
        self.bounds.contains_closed(p)
            && self.bounds.contains_closed(q)
            && !self.planning_obstacles.iter().any(|o| o.segment_hits_closed(p, q))
    }
}

/// Inside the (closed) bounds and outside every closed planning obstacle.
pub fn point_in_free_space(p: Point2, w: &Workspace) -> bool {
    p.is_finite()
        && w.bounds.contains_closed(p)
        && !w.planning_obstacles.iter().any(|o| o.contains_closed(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> AARect {
        AARect::new(xmin, xmax, ymin, ymax).unwrap()
    }

    fn assert_rect_eq(a: &AARect, b: &AARect) {
        for (u, v) in [
            (a.xmin, b.xmin),
            (a.xmax, b.xmax),
            (a.ymin, b.ymin),
            (a.ymax, b.ymax),
        ] {
            assert!((u - v).abs() < 1e-12, "{a:?} != {b:?}");
        }
    }

    #[test]
    fn inf_norm_examples() {
        assert_eq!(inf_norm_dist(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)), 4.0);
        assert_eq!(inf_norm_dist(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)), 0.0);
        let d = inf_norm_dist(Point2::new(19.3, 6.6), Point2::new(16.2, 10.4));
        assert!((d - 3.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rect_rejected() {
        assert!(AARect::new(1.0, 1.0, 0.0, 2.0).is_err());
        assert!(AARect::new(0.0, 1.0, 3.0, 2.0).is_err());
        assert!(AARect::new(f64::NAN, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn expand_examples() {
        assert_rect_eq(
            &expand_rect(&rect(2.0, 4.0, 6.0, 10.0), 0.4),
            &rect(1.8, 4.2, 5.8, 10.2),
        );
        let r = rect(0.3, 1.7, -2.0, 5.0);
        assert_eq!(expand_rect(&r, 0.0), r);
        assert_rect_eq(
            &expand_rect(&rect(0.0, 1.0, 0.0, 1.0), 0.8),
            &rect(-0.4, 1.4, -0.4, 1.4),
        );
    }

    #[test]
    fn adaptive_example_caps() {
        let r = rect(0.0, 4.0, 0.0, 4.0);
        let spec = InflationSpec::new(0.4, InflationMode::Adaptive { cap_length: 1.0 }).unwrap();
        let got = adaptive_expand(&r, &spec);
        let want = [
            r,
            rect(-0.2, 1.0, -0.2, 1.0),
            rect(3.0, 4.2, -0.2, 1.0),
            rect(-0.2, 1.0, 3.0, 4.2),
            rect(3.0, 4.2, 3.0, 4.2),
        ];
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want.iter()) {
            assert_rect_eq(g, w);
        }
    }

    #[test]
    fn adaptive_with_long_caps_equals_full() {
        let r = rect(0.0, 3.0, 0.0, 2.0);
        let spec = InflationSpec::new(0.6, InflationMode::Adaptive { cap_length: 1.5 }).unwrap();
        let parts = adaptive_expand(&r, &spec);
        let full = expand_rect(&r, 0.6);
        // Sample the full expansion densely; every sample must be covered.
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let p = Point2::new(
                    full.xmin + full.width() * i as f64 / n as f64,
                    full.ymin + full.height() * j as f64 / n as f64,
                );
                assert!(parts.iter().any(|q| q.contains_closed(p)), "{p:?} uncovered");
            }
        }
    }

    #[test]
    fn adaptive_leaves_mid_faces_uninflated() {
        let r = rect(0.0, 10.0, 0.0, 2.0);
        let spec = InflationSpec::new(1.0, InflationMode::Adaptive { cap_length: 2.0 }).unwrap();
        let parts = adaptive_expand(&r, &spec);
        // Just outside the middle of the long bottom face.
        assert!(!parts.iter().any(|q| q.contains_closed(Point2::new(5.0, -0.1))));
        // Same height near a corner is capped.
        assert!(parts.iter().any(|q| q.contains_closed(Point2::new(1.0, -0.1))));
    }

    #[test]
    fn segment_blocked_examples() {
        let obs = [rect(8.0, 12.0, 8.0, 12.0)];
        assert!(segment_blocked(Point2::new(6.0, 10.0), Point2::new(14.0, 10.0), &obs));
        assert!(!segment_blocked(Point2::new(6.0, 13.0), Point2::new(14.0, 13.0), &obs));
        assert!(!segment_blocked(Point2::new(6.0, 10.0), Point2::new(14.0, 10.0), &[]));
    }

    #[test]
    fn grazing_is_visible() {
        let obs = [rect(0.0, 1.0, 0.0, 1.0)];
        // Along an edge.
        assert!(!segment_blocked(Point2::new(-1.0, 1.0), Point2::new(2.0, 1.0), &obs));
        // Through a corner only.
        assert!(!segment_blocked(Point2::new(-1.0, 0.0), Point2::new(1.0, 2.0), &obs));
        // Ending inside is blocked.
        assert!(segment_blocked(Point2::new(-1.0, 0.5), Point2::new(0.5, 0.5), &obs));
        // Degenerate segment strictly inside.
        assert!(segment_blocked(Point2::new(0.5, 0.5), Point2::new(0.5, 0.5), &obs));
    }

    #[test]
    fn closed_segment_test_counts_contact() {
        let r = rect(0.0, 1.0, 0.0, 1.0);
        assert!(r.segment_hits_closed(Point2::new(-1.0, 1.0), Point2::new(2.0, 1.0)));
        assert!(r.segment_hits_closed(Point2::new(-1.0, 0.0), Point2::new(0.0, 0.0)));
        assert!(!r.segment_hits_closed(Point2::new(-1.0, 0.0), Point2::new(-0.1, 0.0)));
    }

    #[test]
    fn free_space_examples() {
        let bounds = rect(0.0, 20.0, 0.0, 20.0);
        let w = Workspace::new(
            bounds,
            vec![rect(2.0, 4.0, 6.0, 10.0)],
            &InflationSpec::new(0.4, InflationMode::Full).unwrap(),
        )
        .unwrap();
        assert_rect_eq(&w.planning_obstacles()[0], &rect(1.8, 4.2, 5.8, 10.2));
        // Corner of the planning obstacle counts as occupied.
        let corner = Point2::new(w.planning_obstacles()[0].xmin, w.planning_obstacles()[0].ymin);
        assert!(!point_in_free_space(corner, &w));
        assert!(point_in_free_space(Point2::new(0.0, 0.0), &w));
        assert!(!point_in_free_space(Point2::new(-0.1, 3.0), &w));
        assert!(!point_in_free_space(Point2::new(3.0, 20.5), &w));
    }

    #[test]
    fn obstacle_outside_bounds_rejected() {
        let err = Workspace::uninflated(rect(0.0, 5.0, 0.0, 5.0), vec![rect(4.0, 6.0, 1.0, 2.0)]);
        assert_eq!(err, Err(WorkspaceError::ObstacleOutOfBounds { index: 0 }));
    }

    fn arb_point() -> impl Strategy<Value = Point2> {
        (-5.0..15.0f64, -5.0..15.0f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    fn arb_rect() -> impl Strategy<Value = AARect> {
        (0.0..8.0f64, 0.1..4.0f64, 0.0..8.0f64, 0.1..4.0f64)
            .prop_map(|(x, w, y, h)| rect(x, x + w, y, y + h))
    }

    proptest! {
        #[test]
        fn expand_contains_and_grows_exactly(
            // Dyadic values keep the area identity exact in f64.
            x in -64i32..64, w in 1i32..64, y in -64i32..64, h in 1i32..64, d in 0i32..32,
        ) {
            let r = rect(x as f64 / 8.0, (x + w) as f64 / 8.0, y as f64 / 8.0, (y + h) as f64 / 8.0);
            let delta = d as f64 / 8.0;
            let e = expand_rect(&r, delta);
            prop_assert!(e.contains_rect(&r));
            let grown = delta * (r.width() + r.height()) + delta * delta;
            prop_assert_eq!(e.area() - r.area(), grown);
        }

        #[test]
        fn blocked_is_symmetric(p in arb_point(), q in arb_point(), rs in prop::collection::vec(arb_rect(), 0..4)) {
            prop_assert_eq!(segment_blocked(p, q, &rs), segment_blocked(q, p, &rs));
        }

        #[test]
        fn blocked_is_monotone(p in arb_point(), q in arb_point(), rs in prop::collection::vec(arb_rect(), 0..4), extra in arb_rect()) {
            let before = segment_blocked(p, q, &rs);
            let mut more = rs.clone();
            more.push(extra);
            prop_assert!(!before || segment_blocked(p, q, &more));
        }

        #[test]
        fn adaptive_between_rect_and_full(r in arb_rect(), delta in 0.05..2.0f64, cap in 0.05..3.0f64, p in arb_point()) {
            let spec = InflationSpec::new(delta, InflationMode::Adaptive { cap_length: cap }).unwrap();
            let parts = adaptive_expand(&r, &spec);
            let full = expand_rect(&r, delta);
            for part in &parts {
                prop_assert!(full.contains_rect(part));
            }
            if r.contains_closed(p) {
                prop_assert!(parts.iter().any(|q| q.contains_closed(p)));
            }
        }

        // Points outside the obstacle grown by `2 * clearance` that cannot see
        // each other across it are at least `2 * clearance` apart.
        #[test]
        fn hidden_pairs_are_far(r in arb_rect(), clearance in 0.05..2.0f64, p in arb_point(), q in arb_point()) {
            let grown = expand_rect(&r, 2.0 * clearance);
            prop_assume!(!grown.contains_closed(p) && !grown.contains_closed(q));
            if segment_blocked(p, q, &[r]) {
                prop_assert!(inf_norm_dist(p, q) >= 2.0 * clearance - 1e-12);
            }
        }
    }
}
