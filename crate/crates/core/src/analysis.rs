//! Exploration analyses over run logs: convex hull of visited positions and
//! how concentrated late exploration is around the goals.

use rand::Rng;

use crate::agent::ExploreRecord;
use crate::error::{Error, Result};
use crate::world::MotorCommand;

pub type Point = [f64; 2];

/// `(b - a) x (c - a)`; positive when `a -> b -> c` turns left.
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Shoelace area of a simple polygon given in order.
pub fn polygon_area(vertices: &[Point]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (vertices[i], vertices[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    twice.abs() / 2.0
}

/// Hull vertices counter-clockwise starting from the lowest-x (then
/// lowest-y) point, collinear points dropped, and the hull area.
pub fn convex_hull(points: &[Point]) -> (Vec<Point>, f64) {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return (pts, 0.0);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    let area = polygon_area(&hull);
    (hull, area)
}

/// Hull area of the first `k` points, for every `k = 1..=n`.
pub fn cumulative_hull_areas(points: &[Point]) -> Vec<f64> {
    let mut hull: Vec<Point> = Vec::new();
    let mut area = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        if !(hull.len() >= 3 && inside_convex(&hull, p)) {
            let mut candidates = hull.clone();
            candidates.push(p);
            (hull, area) = convex_hull(&candidates);
        }
        out.push(area);
    }
    out
}

/// `p` inside or on a CCW convex polygon.
fn inside_convex(hull: &[Point], p: Point) -> bool {
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= 0.0)
}

fn points_of(records: &[&ExploreRecord]) -> Vec<Point> {
    records.iter().map(|r| [r.exec.x, r.exec.y]).collect()
}

/// Executed positions of a run, optionally without random movements.
pub fn explored_points(explore: &[ExploreRecord], include_random: bool) -> Vec<Point> {
    let kept: Vec<&ExploreRecord> = explore.iter().filter(|r| include_random || !r.was_random).collect();
    points_of(&kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcentrationMode {
    /// Distance to the goal selected at that iteration.
    Selected,
    /// Distance to the nearest goal.
    AnyGoal,
}

/// For each fifth (in time) of the goal-directed iterations, the fraction of
/// executed positions within `radius` of a goal.
pub fn goal_concentration(
    explore: &[ExploreRecord],
    goals: &[MotorCommand],
    radius: f64,
    mode: ConcentrationMode,
) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("concentration radius must be positive, got {radius}")));
    }
    if goals.is_empty() {
        return Err(Error::Empty("no goals"));
    }
    let directed: Vec<&ExploreRecord> = explore.iter().filter(|r| !r.was_random).collect();
    let n = directed.len();
    if n < 5 {
        return Err(Error::Empty("fewer than 5 goal-directed iterations"));
    }
    let near = |r: &ExploreRecord| -> Result<bool> {
        match mode {
            ConcentrationMode::Selected => {
                let g = goals
                    .get(r.goal_id)
                    .ok_or_else(|| Error::Config(format!("goal id {} out of range", r.goal_id)))?;
                Ok(r.exec.distance(*g) <= radius)
            }
            ConcentrationMode::AnyGoal => Ok(goals.iter().any(|g| r.exec.distance(*g) <= radius)),
        }
    };
    (0..5)
        .map(|q| {
            let part = &directed[q * n / 5..(q + 1) * n / 5];
            let hits = part.iter().map(|r| near(r)).collect::<Result<Vec<bool>>>()?;
            Ok(hits.iter().filter(|&&h| h).count() as f64 / part.len() as f64)
        })
        .collect()
}

/// Monte-Carlo estimate of the fraction of the unit square within `radius`
/// of at least one centre: what a uniformly random explorer would score.
pub fn disk_union_fraction<R: Rng + ?Sized>(centers: &[MotorCommand], radius: f64, samples: usize, rng: &mut R) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    let hits = (0..samples)
        .filter(|_| {
            let p = MotorCommand::new(rng.random(), rng.random());
            centers.iter().any(|c| p.distance(*c) <= radius)
        })
        .count();
    hits as f64 / samples as f64
}
