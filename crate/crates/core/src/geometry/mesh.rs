//! Graph approximation of geodesics for shapes without an exact engine.
//!
//! Vertices are the radial images of a spherical Fibonacci lattice; each is
//! joined to its nearest neighbours by chord-length edges and distances are
//! shortest paths in that graph. Query points are attached to the closest
//! vertices. Ball areas sum vertex weights with a linear ramp of one mesh
//! spacing across the boundary.

use super::{fibonacci_sphere, ConvexSurface, Vec3};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

const NEIGHBOURS: usize = 24;
const ATTACH: usize = 8;

#[derive(Debug, Clone)]
pub struct Mesh {
    verts: Vec<Vec3>,
    weights: Vec<f64>,
    adj: Vec<Vec<(u32, f64)>>,
    cells: HashMap<[i64; 3], Vec<u32>>,
    cell: f64,
    spacing: f64,
}

#[derive(PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

impl Mesh {
    /// Mesh with roughly `faces` triangles (`faces / 2` vertices).
    pub fn build(surface: &ConvexSurface, faces: usize) -> Mesh {
        let n = (faces / 2).max(12);
        let dirs = fibonacci_sphere(n);
        let verts: Vec<Vec3> = dirs.iter().map(|d| surface.radial_unproject_unchecked(*d)).collect();
        let weights: Vec<f64> =
            dirs.iter().map(|d| 4.0 * PI / n as f64 * surface.radial_density(*d)).collect();
        let area: f64 = weights.iter().sum();
        let spacing = (area / n as f64).sqrt();
        let cell = 3.0 * spacing;
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, v) in verts.iter().enumerate() {
            cells.entry(key(*v, cell)).or_default().push(i as u32);
        }
        let mut mesh = Mesh { verts, weights, adj: Vec::new(), cells, cell, spacing };
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for (j, d) in mesh.nearest(mesh.verts[i], NEIGHBOURS + 1) {
                if j as usize != i {
                    adj[i].push((j, d));
                    adj[j as usize].push((i as u32, d));
                }
            }
        }
        for list in &mut adj {
            list.sort_by(|x, y| x.0.cmp(&y.0));
            list.dedup_by(|x, y| x.0 == y.0);
        }
        mesh.adj = adj;
        mesh
    }

    pub fn vertex_count(&self) -> usize {
        self.verts.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    fn nearest(&self, p: Vec3, k: usize) -> Vec<(u32, f64)> {
        let c = key(p, self.cell);
        let mut found: Vec<(u32, f64)> = Vec::new();
        let mut reach = 1;
        loop {
            found.clear();
            for dx in -reach..=reach {
                for dy in -reach..=reach {
                    for dz in -reach..=reach {
                        if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            found.extend(list.iter().map(|&j| (j, self.verts[j as usize].dist(p))));
                        }
                    }
                }
            }
            if found.len() >= k || reach > 4 {
                break;
            }
            reach += 1;
        }
        found.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        found.truncate(k);
        found
    }

    /// Dijkstra from the vertices attached to `p`, stopping beyond `limit`.
    fn spread(&self, p: Vec3, limit: f64) -> HashMap<u32, f64> {
        let mut dist: HashMap<u32, f64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        for (j, d) in self.nearest(p, ATTACH) {
            if d < *dist.get(&j).unwrap_or(&f64::INFINITY) {
                dist.insert(j, d);
                heap.push(Item(d, j));
            }
        }
        while let Some(Item(d, v)) = heap.pop() {
            if d > *dist.get(&v).unwrap_or(&f64::INFINITY) || d > limit {
                continue;
            }
            for &(w, e) in &self.adj[v as usize] {
                let nd = d + e;
                if nd <= limit && nd < *dist.get(&w).unwrap_or(&f64::INFINITY) {
                    dist.insert(w, nd);
                    heap.push(Item(nd, w));
                }
            }
        }
        dist
    }

    /// Graph distance between surface points, searched up to `limit`
    /// (returns infinity beyond it).
    pub fn distance(&self, _surface: &ConvexSurface, p: Vec3, q: Vec3, limit: f64) -> f64 {
        let chord = p.dist(q);
        if chord < self.spacing {
            return chord;
        }
        let targets = self.nearest(q, ATTACH);
        let bound = if limit.is_finite() { limit + self.spacing } else { f64::INFINITY };
        let dist = self.spread(p, bound);
        let mut best = f64::INFINITY;
        for (j, d) in targets {
            if let Some(dv) = dist.get(&j) {
                best = best.min(dv + d);
            }
        }
        best
    }

    pub fn ball_area(&self, _surface: &ConvexSurface, x: Vec3, r: f64) -> f64 {
        let dist = self.spread(x, r + self.spacing);
        dist.iter()
            .map(|(v, d)| self.weights[*v as usize] * (0.5 + (r - d) / self.spacing).clamp(0.0, 1.0))
            .sum()
    }

    /// `(vertex weight, ball area at vertex)` for every vertex.
    pub fn ball_table(&self, surface: &ConvexSurface, r: f64) -> Vec<(f64, f64)> {
        use rayon::prelude::*;
        (0..self.verts.len())
            .into_par_iter()
            .map(|i| (self.weights[i], self.ball_area(surface, self.verts[i], r)))
            .collect()
    }
}

fn key(p: Vec3, cell: f64) -> [i64; 3] {
    [(p.x1 / cell).floor() as i64, (p.x2 / cell).floor() as i64, (p.x3 / cell).floor() as i64]
}
