//! Random Waypoint mobility and the disk-radius connectivity graph.
//!
//! All nodes move concurrently, one `step` of simulated seconds per call.
//! A node heads for its waypoint at its current speed; if it would reach the
//! waypoint within the step it stops exactly there and starts pausing. When
//! the pause runs out it draws a fresh waypoint and speed, both uniform.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub area_width: f64,
    pub area_height: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: f64,
    pub radius: f64,
    pub step: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            area_width: 1000.0,
            area_height: 1000.0,
            speed_min: 5.0,
            speed_max: 7.0,
            pause: 1.0,
            radius: 250.0,
            step: 1.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        positive("mobility.area_width", self.area_width)?;
        positive("mobility.area_height", self.area_height)?;
        positive("mobility.speed_min", self.speed_min)?;
        if !(self.speed_max >= self.speed_min) || !self.speed_max.is_finite() {
            return Err(invalid(
                "mobility.speed_max",
                format!("must be finite and >= speed_min (got {})", self.speed_max),
            ));
        }
        positive("mobility.radius", self.radius)?;
        positive("mobility.step", self.step)?;
        if !(self.pause >= 0.0) || !self.pause.is_finite() {
            return Err(invalid(
                "mobility.pause",
                format!("must be finite and >= 0 (got {})", self.pause),
            ));
        }
        Ok(())
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point {
            x: rng.random_range(0.0..=self.area_width),
            y: rng.random_range(0.0..=self.area_height),
        }
    }

    fn random_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.speed_min..=self.speed_max)
    }

    fn contains(&self, p: Point) -> bool {
        (0.0..=self.area_width).contains(&p.x) && (0.0..=self.area_height).contains(&p.y)
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0 (got {v})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub positions: Vec<Point>,
    pub waypoints: Vec<Point>,
    pub speeds: Vec<f64>,
    pub pause_remaining: Vec<f64>,
}

impl MobilityState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks the in-bounds and speed-interval invariants against `cfg`.
    pub fn is_valid(&self, cfg: &MobilityConfig) -> bool {
        let n = self.len();
        self.waypoints.len() == n
            && self.speeds.len() == n
            && self.pause_remaining.len() == n
            && self.positions.iter().all(|&p| cfg.contains(p))
            && self.waypoints.iter().all(|&p| cfg.contains(p))
            && self
                .speeds
                .iter()
                .all(|&s| s >= cfg.speed_min && s <= cfg.speed_max)
    }
}

pub fn init_mobility<R: Rng + ?Sized>(
    n: usize,
    cfg: &MobilityConfig,
    rng: &mut R,
) -> Result<MobilityState> {
    cfg.validate()?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let mut state = MobilityState {
        positions: Vec::with_capacity(n),
        waypoints: Vec::with_capacity(n),
        speeds: Vec::with_capacity(n),
        pause_remaining: vec![0.0; n],
    };
    for _ in 0..n {
        state.positions.push(cfg.random_point(rng));
        state.waypoints.push(cfg.random_point(rng));
        state.speeds.push(cfg.random_speed(rng));
    }
    Ok(state)
}

/// Advances every node by one step of `cfg.step` seconds.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &MobilityState,
    cfg: &MobilityConfig,
    rng: &mut R,
) -> MobilityState {
    let mut next = state.clone();
    for i in 0..next.len() {
        if next.pause_remaining[i] > 0.0 {
            next.pause_remaining[i] = (next.pause_remaining[i] - cfg.step).max(0.0);
            if next.pause_remaining[i] == 0.0 {
                next.waypoints[i] = cfg.random_point(rng);
                next.speeds[i] = cfg.random_speed(rng);
            }
            continue;
        }
        let here = next.positions[i];
        let target = next.waypoints[i];
        let remaining = here.distance(target);
        let travel = next.speeds[i] * cfg.step;
        if travel >= remaining {
            next.positions[i] = target;
            if cfg.pause > 0.0 {
                next.pause_remaining[i] = cfg.pause;
            } else {
                next.waypoints[i] = cfg.random_point(rng);
                next.speeds[i] = cfg.random_speed(rng);
            }
        } else {
            let f = travel / remaining;
            let p = Point::new(
                here.x + f * (target.x - here.x),
                here.y + f * (target.y - here.y),
            );
            // Rounding can leave the segment by an ulp; the segment lies in the area.
            next.positions[i] = Point::new(
                p.x.clamp(0.0, cfg.area_width),
                p.y.clamp(0.0, cfg.area_height),
            );
        }
    }
    next
}

/// Symmetric, reflexive connectivity relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    /// Graph with only self-loops.
    pub fn empty(n: usize) -> Self {
        let mut edges = vec![false; n * n];
        for i in 0..n {
            edges[i * n + i] = true;
        }
        Self { n, edges }
    }

    pub fn complete(n: usize) -> Self {
        Self {
            n,
            edges: vec![true; n * n],
        }
    }

    /// Builds from a dense boolean matrix. The diagonal is forced to `true`;
    /// symmetry is not enforced here (see [`Adjacency::check_symmetric`]).
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut edges = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            edges.extend(row.iter().enumerate().map(|(j, &e)| e || i == j));
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.n + j]
    }

    /// Sets an undirected edge.
    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        if i == j {
            return;
        }
        self.edges[i * self.n + j] = on;
        self.edges[j * self.n + i] = on;
    }

    pub fn check_symmetric(&self) -> Result<()> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.connected(i, j) != self.connected(j, i) {
                    return Err(Error::AsymmetricAdjacency(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.connected(i, j))
    }
}

pub fn connectivity(state: &MobilityState, radius: f64) -> Adjacency {
    let n = state.len();
    let mut adj = Adjacency::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if state.positions[i].distance(state.positions[j]) <= radius {
                adj.set_edge(i, j, true);
            }
        }
    }
    adj
}

/// Streams node positions as CSV rows `t,node_id,x,y` with metres to six decimals.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(b"t,node_id,x,y\n")?;
        Ok(Self { out })
    }

    pub fn record(&mut self, t: usize, state: &MobilityState) -> io::Result<()> {
        for (i, p) in state.positions.iter().enumerate() {
            writeln!(self.out, "{t},{i},{:.6},{:.6}", p.x, p.y)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn single(pos: Point, waypoint: Point, speed: f64, pause: f64) -> MobilityState {
        MobilityState {
            positions: vec![pos],
            waypoints: vec![waypoint],
            speeds: vec![speed],
            pause_remaining: vec![pause],
        }
    }

    #[test]
    fn init_fourteen_nodes_in_area() {
        let cfg = MobilityConfig::default();
        let mut rng = stream(1, Stream::Mobility);
        let s = init_mobility(14, &cfg, &mut rng).unwrap();
        assert_eq!(s.len(), 14);
        assert!(s
            .positions
            .iter()
            .all(|p| (0.0..=1000.0).contains(&p.x) && (0.0..=1000.0).contains(&p.y)));
        assert!(s.is_valid(&cfg));
    }

    #[test]
    fn init_single_node() {
        let cfg = MobilityConfig::default();
        let s = init_mobility(1, &cfg, &mut stream(3, Stream::Mobility)).unwrap();
        assert!(s.is_valid(&cfg));
        assert_eq!(connectivity(&s, 250.0), Adjacency::empty(1));
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = MobilityConfig::default();
        let a = init_mobility(14, &cfg, &mut stream(42, Stream::Mobility)).unwrap();
        let b = init_mobility(14, &cfg, &mut stream(42, Stream::Mobility)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_rejects_bad_config() {
        let mut rng = stream(0, Stream::Mobility);
        let cfg = MobilityConfig {
            area_width: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            init_mobility(3, &cfg, &mut rng),
            Err(Error::InvalidConfig {
                field: "mobility.area_width",
                ..
            })
        ));
        let cfg = MobilityConfig {
            speed_min: -1.0,
            ..Default::default()
        };
        assert!(init_mobility(3, &cfg, &mut rng).is_err());
        assert!(init_mobility(0, &MobilityConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn straight_line_step() {
        let cfg = MobilityConfig::default();
        let s = single(Point::new(0.0, 0.0), Point::new(100.0, 0.0), 5.0, 0.0);
        let next = step_mobility(&s, &cfg, &mut stream(0, Stream::Mobility));
        assert_eq!(next.positions[0], Point::new(5.0, 0.0));
        assert_eq!(next.waypoints[0], Point::new(100.0, 0.0));
    }

    #[test]
    fn arrival_clamps_and_starts_pause() {
        let cfg = MobilityConfig::default();
        let s = single(Point::new(0.0, 0.0), Point::new(3.0, 0.0), 5.0, 0.0);
        let next = step_mobility(&s, &cfg, &mut stream(0, Stream::Mobility));
        assert_eq!(next.positions[0], Point::new(3.0, 0.0));
        assert_eq!(next.pause_remaining[0], 1.0);
    }

    #[test]
    fn pause_consumed_then_new_waypoint() {
        let cfg = MobilityConfig::default();
        let wp = Point::new(10.0, 10.0);
        let s = single(wp, wp, 6.0, 1.0);
        let next = step_mobility(&s, &cfg, &mut stream(0, Stream::Mobility));
        assert_eq!(next.pause_remaining[0], 0.0);
        assert_eq!(next.positions[0], wp);
        assert_ne!(next.waypoints[0], wp);
        assert!(next.speeds[0] >= 5.0 && next.speeds[0] <= 7.0);
    }

    #[test]
    fn sampled_speeds_stay_in_interval() {
        let cfg = MobilityConfig::default();
        let mut rng = stream(5, Stream::Mobility);
        let mut s = init_mobility(14, &cfg, &mut rng).unwrap();
        for _ in 0..10_000 {
            s = step_mobility(&s, &cfg, &mut rng);
            assert!(s.speeds.iter().all(|&v| (5.0..=7.0).contains(&v)));
        }
    }

    #[test]
    fn disk_radius_connectivity() {
        let mut s = single(Point::new(0.0, 0.0), Point::new(0.0, 0.0), 5.0, 0.0);
        s.positions.push(Point::new(0.0, 200.0));
        s.waypoints.push(Point::new(0.0, 0.0));
        s.speeds.push(5.0);
        s.pause_remaining.push(0.0);
        assert!(connectivity(&s, 250.0).connected(0, 1));
        s.positions[1] = Point::new(0.0, 300.0);
        let adj = connectivity(&s, 250.0);
        assert!(!adj.connected(0, 1));
        assert!(adj.connected(0, 0) && adj.connected(1, 1));
    }

    #[test]
    fn connectivity_symmetric_on_random_states() {
        let cfg = MobilityConfig::default();
        let mut rng = stream(9, Stream::Mobility);
        for _ in 0..1000 {
            let s = init_mobility(14, &cfg, &mut rng).unwrap();
            let adj = connectivity(&s, cfg.radius);
            for i in 0..14 {
                assert!(adj.connected(i, i));
                for j in 0..14 {
                    assert_eq!(adj.connected(i, j), adj.connected(j, i));
                }
            }
        }
    }

    #[test]
    fn trajectory_csv_format() {
        let s = single(Point::new(1.5, 2.0), Point::new(0.0, 0.0), 5.0, 0.0);
        let mut w = TrajectoryWriter::new(Vec::new()).unwrap();
        w.record(3, &s).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, "t,node_id,x,y\n3,0,1.500000,2.000000\n");
    }

    #[test]
    fn rejects_asymmetric_rows() {
        let adj = Adjacency::from_rows(&[vec![true, true], vec![false, true]]).unwrap();
        assert_eq!(adj.check_symmetric(), Err(Error::AsymmetricAdjacency(0, 1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trajectory_invariants(seed in any::<u64>(), steps in 1usize..400, n in 1usize..20) {
            let cfg = MobilityConfig::default();
            let mut rng = stream(seed, Stream::Mobility);
            let mut s = init_mobility(n, &cfg, &mut rng).unwrap();
            let mut replay = stream(seed, Stream::Mobility);
            let mut r = init_mobility(n, &cfg, &mut replay).unwrap();
            for _ in 0..steps {
                let next = step_mobility(&s, &cfg, &mut rng);
                prop_assert!(next.is_valid(&cfg));
                for i in 0..n {
                    let moved = s.positions[i].distance(next.positions[i]);
                    prop_assert!(moved <= cfg.speed_max * cfg.step + 1e-9);
                }
                s = next;
                r = step_mobility(&r, &cfg, &mut replay);
            }
            prop_assert_eq!(&s, &r);
        }
    }
}
