//! DBSCAN over 3-D points with a uniform grid for neighbor queries.

use std::collections::HashMap;

use crate::{Error, Result};

pub const NOISE: i32 = -1;
const UNVISITED: i32 = -2;

struct Grid<'a> {
    points: &'a [[f64; 3]],
    eps: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &[f64; 3], eps: f64) -> [i64; 3] {
        p.map(|v| (v / eps).floor() as i64)
    }

    /// Indices within `eps` of point `i`, itself included.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let k = Self::key(p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &j in bucket {
                        let q = &self.points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                        if d2 <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
    }
}

/// Density-based clustering under Euclidean distance.
///
/// A point is core when at least `min_pts` points (itself included) lie within
/// `eps`. Clusters are numbered from 0 in the order their first core point
/// appears in `points`; a border point joins the first cluster that reaches
/// it. Noise is [`NOISE`].
pub fn dbscan(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Result<Vec<i32>> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("dbscan eps must be positive, got {eps}")));
    }
    let grid = Grid::new(points, eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut cluster = 0;
    let mut nb = Vec::new();
    let mut stack = Vec::new();
    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        grid.neighbors(i, &mut nb);
        if nb.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        stack.extend(nb.iter().copied().filter(|&j| j != i));
        while let Some(j) = stack.pop() {
            match labels[j] {
                NOISE => labels[j] = cluster,
                UNVISITED => {
                    labels[j] = cluster;
                    grid.neighbors(j, &mut nb);
                    if nb.len() >= min_pts {
                        stack.extend(nb.iter().copied().filter(|&k| labels[k] < 0));
                    }
                }
                _ => {}
            }
        }
        cluster += 1;
    }
    Ok(labels)
}
