//! Walking routes: polylines whose corners are rounded by circular fillets,
//! parametrised by arc length.

use super::SimError;

type P2 = [f64; 2];

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn add_scaled(a: P2, d: P2, s: f64) -> P2 {
    [a[0] + s * d[0], a[1] + s * d[1]]
}

fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}

fn rotate(a: P2, ang: f64) -> P2 {
    let (s, c) = ang.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Line { start: P2, dir: P2, len: f64 },
    Arc { start: P2, dir: P2, radius: f64, sweep: f64 },
}

impl Segment {
    fn len(&self) -> f64 {
        match *self {
            Segment::Line { len, .. } => len,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn pose(&self, s: f64) -> (P2, P2) {
        match *self {
            Segment::Line { start, dir, .. } => (add_scaled(start, dir, s), dir),
            Segment::Arc {
                start,
                dir,
                radius,
                sweep,
            } => {
                let turn = sweep.signum();
                let normal = [-dir[1] * turn, dir[0] * turn];
                let center = add_scaled(start, normal, radius);
                let ang = s / radius * turn;
                let pos = add_scaled(center, rotate(normal, ang), -radius);
                (pos, rotate(dir, ang))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    segments: Vec<Segment>,
    length: f64,
    corners: usize,
}

impl Route {
    /// Builds the route through `waypoints`, rounding every corner with a
    /// fillet of `corner_radius` (shrunk where the adjacent legs are short).
    pub fn new(waypoints: &[P2], corner_radius: f64) -> Result<Self, SimError> {
        if waypoints.len() < 2 {
            return Err(SimError::Argument("a route needs at least two waypoints".into()));
        }
        if !(corner_radius >= 0.0) {
            return Err(SimError::Argument("corner radius must be non-negative".into()));
        }
        let mut dirs = Vec::new();
        let mut lens = Vec::new();
        for w in waypoints.windows(2) {
            let d = sub(w[1], w[0]);
            let l = norm(d);
            if !(l > 1e-9) {
                return Err(SimError::Argument("route waypoints must be distinct".into()));
            }
            dirs.push([d[0] / l, d[1] / l]);
            lens.push(l);
        }
        // Tangent length cut from each end of every leg.
        let n = dirs.len();
        let mut cut = vec![[0.0f64; 2]; n];
        let mut turns = vec![0.0f64; n.saturating_sub(1)];
        for i in 0..n - 1 {
            let (a, b) = (dirs[i], dirs[i + 1]);
            let phi = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
            if phi.abs() > std::f64::consts::PI - 1e-6 {
                return Err(SimError::Argument(format!("route reverses direction at waypoint {}", i + 1)));
            }
            turns[i] = phi;
            let tau = corner_radius * (phi.abs() / 2.0).tan();
            let tau = tau.min(0.5 * lens[i]).min(0.5 * lens[i + 1]);
            cut[i][1] = tau;
            cut[i + 1][0] = tau;
        }
        let mut segments = Vec::new();
        let mut corners = 0;
        for i in 0..n {
            let start = add_scaled(waypoints[i], dirs[i], cut[i][0]);
            let len = lens[i] - cut[i][0] - cut[i][1];
            if len > 1e-12 {
                segments.push(Segment::Line {
                    start,
                    dir: dirs[i],
                    len,
                });
            }
            if i + 1 < n && turns[i].abs() > 1e-9 {
                let tau = cut[i][1];
                let radius = tau / (turns[i].abs() / 2.0).tan();
                corners += 1;
                if radius > 1e-12 {
                    segments.push(Segment::Arc {
                        start: add_scaled(waypoints[i + 1], dirs[i], -tau),
                        dir: dirs[i],
                        radius,
                        sweep: turns[i],
                    });
                }
            }
        }
        let length = segments.iter().map(Segment::len).sum();
        Ok(Self {
            segments,
            length,
            corners,
        })
    }

    pub fn straight(length: f64) -> Result<Self, SimError> {
        Self::new(&[[0.0, 0.0], [length, 0.0]], 0.0)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn corners(&self) -> usize {
        self.corners
    }

    /// Position and unit tangent at arc length `s`; beyond either end the
    /// route continues straight.
    pub fn pose(&self, s: f64) -> (P2, P2) {
        if s < 0.0 {
            let (p, d) = self.segments[0].pose(0.0);
            return (add_scaled(p, d, s), d);
        }
        let mut rest = s;
        for seg in &self.segments {
            let l = seg.len();
            if rest <= l {
                return seg.pose(rest);
            }
            rest -= l;
        }
        let last = self.segments.last().expect("route has segments");
        let (p, d) = last.pose(last.len());
        (add_scaled(p, d, rest), d)
    }
}

/// L-shaped loop in a 10 m square with six corners per lap, starting
/// mid-way along the bottom edge.
pub fn loop_waypoints(laps: usize) -> Vec<P2> {
    let lap = [[5.0, 0.0], [10.0, 0.0], [10.0, 5.0], [5.0, 5.0], [5.0, 10.0], [0.0, 10.0], [0.0, 0.0]];
    let mut out: Vec<P2> = Vec::new();
    for _ in 0..laps.max(1) {
        out.extend(lap);
    }
    out.push([4.0, 0.0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_route_pose() {
        let r = Route::straight(7.0).unwrap();
        assert_eq!(r.length(), 7.0);
        assert_eq!(r.pose(2.5), ([2.5, 0.0], [1.0, 0.0]));
        assert_eq!(r.pose(8.0).0, [8.0, 0.0]);
    }

    #[test]
    fn fillet_is_continuous_and_shorter() {
        let r = Route::new(&[[0.0, 0.0], [4.0, 0.0], [4.0, 4.0]], 1.0).unwrap();
        // Quarter circle replaces two 1 m tangents.
        let expected = 8.0 - 2.0 + std::f64::consts::FRAC_PI_2;
        assert!((r.length() - expected).abs() < 1e-12);
        let mut prev = r.pose(0.0);
        let ds = 0.01;
        let mut s = ds;
        while s <= r.length() {
            let cur = r.pose(s);
            let step = norm(sub(cur.0, prev.0));
            assert!((step - ds).abs() < 1e-6, "gap at {s}: {step}");
            assert!((norm(cur.1) - 1.0).abs() < 1e-12);
            prev = cur;
            s += ds;
        }
        assert!((r.pose(r.length()).0[1] - 4.0).abs() < 1e-12);
        assert_eq!(r.corners(), 1);
    }

    #[test]
    fn default_loop_has_six_corners() {
        let r = Route::new(&loop_waypoints(1), 1.5).unwrap();
        assert_eq!(r.corners(), 6);
        assert!(r.length() > 35.0 && r.length() < 40.0);
        let two = Route::new(&loop_waypoints(2), 1.5).unwrap();
        assert_eq!(two.corners(), 12);
    }

    #[test]
    fn degenerate_routes_are_rejected() {
        assert!(Route::new(&[[0.0, 0.0]], 1.0).is_err());
        assert!(Route::new(&[[0.0, 0.0], [0.0, 0.0]], 1.0).is_err());
        assert!(Route::new(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], 1.0).is_err());
    }
}
