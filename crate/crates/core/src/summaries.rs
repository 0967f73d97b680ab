//! Inhomogeneous K, F, H, J estimators on S² and the unknown-intensity K̃.
//!
//! All estimators take a pattern already on the unit sphere. Pair distances
//! are sorted once per pattern and walked along the r-grid, so a full curve
//! costs O(N² log N) rather than O(N²·|grid|).

use crate::error::{domain, Error, Result};
use crate::geometry::{fibonacci_sphere, great_circle, ConvexSurface, Vec3};
use crate::mapping::{pushforward_pattern, IntensityField, ShapeFactor};
use crate::simulate::SurfacePattern;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Ascending radii in `[0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RGrid {
    values: Vec<f64>,
}

impl Default for RGrid {
    /// `{0, 0.02, …, 3.14} ∪ {π}`.
    fn default() -> Self {
        RGrid::with_step(0.02).expect("valid default step")
    }
}

impl RGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("r-grid is empty");
        }
        for w in values.windows(2) {
            if !(w[0] < w[1]) {
                return domain(format!("r-grid must be strictly ascending ({} then {})", w[0], w[1]));
            }
        }
        if !(values[0] >= 0.0 && *values.last().unwrap() <= PI) {
            return domain("r-grid must lie within [0, π]");
        }
        Ok(RGrid { values })
    }

    /// `0, step, 2·step, …` up to π, with π itself appended.
    pub fn with_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= PI) {
            return domain(format!("r-grid step {step} must be in (0, π]"));
        }
        let mut v = Vec::new();
        let mut k = 0usize;
        loop {
            let r = k as f64 * step;
            if r >= PI - 1e-12 {
                break;
            }
            v.push(r);
            k += 1;
        }
        v.push(PI);
        RGrid::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reference grid `P ⊂ S²` for the empty-space function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridP {
    pub points: Vec<Vec3>,
}

impl GridP {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` Fibonacci-lattice points on the unit sphere.
pub fn fibonacci_grid(n: usize) -> Result<GridP> {
    if n == 0 {
        return domain("grid size must be at least 1");
    }
    Ok(GridP { points: fibonacci_sphere(n) })
}

/// Points on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePattern {
    points: Vec<Vec3>,
}

impl SpherePattern {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !((p.norm() - 1.0).abs() < 1e-9) {
                return domain(format!("point {i} is not on the unit sphere (|x| = {})", p.norm()));
            }
        }
        Ok(SpherePattern { points })
    }

    /// Transport a surface pattern to the sphere.
    pub fn from_surface(surface: &ConvexSurface, pattern: &SurfacePattern) -> Result<Self> {
        Ok(SpherePattern { points: pushforward_pattern(surface, &pattern.points)? })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    K,
    F,
    H,
    J,
    KTilde,
}

/// A summary function sampled on an r-grid. Missing values (Ĵ where the
/// denominator vanishes) are NaN in memory and `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCurve {
    pub r: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub values: Vec<f64>,
    pub kind: CurveKind,
    pub meta: BTreeMap<String, String>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let o: Vec<Option<f64>> = v.iter().map(|x| if x.is_nan() { None } else { Some(*x) }).collect();
        o.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let o: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(o.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

impl SummaryCurve {
    fn new(grid: &RGrid, values: Vec<f64>, kind: CurveKind, meta: Vec<(&str, String)>) -> Self {
        SummaryCurve {
            r: grid.values.clone(),
            values,
            kind,
            meta: meta.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Pair distances of a pattern, sorted ascending, with the pair weights
/// `1/(w_i w_j)` for a per-point weight vector.
struct SortedPairs {
    dist: Vec<f64>,
    weight: Vec<f64>,
}

impl SortedPairs {
    fn new(pts: &[Vec3], w: &[f64]) -> Self {
        let n = pts.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((great_circle(pts[i], pts[j]), 1.0 / (w[i] * w[j])));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        SortedPairs { dist: pairs.iter().map(|p| p.0).collect(), weight: pairs.iter().map(|p| p.1).collect() }
    }

    /// `Σ_{i<j} 1[d_ij ≤ r] / (w_i w_j)` at each grid radius.
    fn cumulative(&self, grid: &RGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        let mut k = 0;
        let mut acc = 0.0;
        for &r in grid.values() {
            while k < self.dist.len() && self.dist[k] <= r {
                acc += self.weight[k];
                k += 1;
            }
            out.push(acc);
        }
        out
    }
}

fn intensities(pattern: &SpherePattern, field: &IntensityField) -> Result<Vec<f64>> {
    pattern
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = field.eval(*p);
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                domain(format!("intensity at point {i} is {v}; it must be positive"))
            }
        })
        .collect()
}

/// Factors `1 - ρ̄/ρ(x)`, rejecting `ρ̄` above any local intensity.
fn thinning_factors(rho: &[f64], rho_bar: f64) -> Result<Vec<f64>> {
    if !(rho_bar > 0.0 && rho_bar.is_finite()) {
        return domain(format!("rho_bar must be positive, got {rho_bar}"));
    }
    rho.iter()
        .enumerate()
        .map(|(i, &v)| {
            if rho_bar > v * (1.0 + 1e-12) {
                domain(format!("rho_bar {rho_bar} exceeds the intensity {v} at point {i}"))
            } else {
                Ok((1.0 - rho_bar / v).max(0.0))
            }
        })
        .collect()
}

/// Inhomogeneous K: `(1/4π) Σ≠ 1[d(x,y) ≤ r] / (ρ(x)ρ(y))`.
pub fn khat_inhom(pattern: &SpherePattern, field: &IntensityField, grid: &RGrid) -> Result<SummaryCurve> {
    let rho = intensities(pattern, field)?;
    let pairs = SortedPairs::new(pattern.points(), &rho);
    let values = pairs.cumulative(grid).into_iter().map(|s| 2.0 * s / (4.0 * PI)).collect();
    Ok(SummaryCurve::new(grid, values, CurveKind::K, vec![("estimator", "khat_inhom".into()), ("n", pattern.len().to_string())]))
}

/// Walk sorted `(distance, factor)` lists along the grid, returning the
/// running product at each radius.
fn running_products(mut items: Vec<(f64, f64)>, grid: &RGrid, out: &mut [f64]) {
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut k = 0;
    let mut prod = 1.0;
    for (slot, &r) in out.iter_mut().zip(grid.values()) {
        while k < items.len() && items[k].0 <= r {
            prod *= items[k].1;
            k += 1;
        }
        *slot += prod;
    }
}

/// Inhomogeneous empty-space function:
/// `1 − (1/|P|) Σ_p Π_{x ∈ X ∩ B(p,r)} (1 − ρ̄/ρ(x))`.
pub fn fhat_inhom(
    pattern: &SpherePattern,
    field: &IntensityField,
    rho_bar: f64,
    p: &GridP,
    grid: &RGrid,
) -> Result<SummaryCurve> {
    if p.is_empty() {
        return domain("reference grid P is empty");
    }
    let rho = intensities(pattern, field)?;
    let fac = thinning_factors(&rho, rho_bar)?;
    let mut sums = vec![0.0; grid.len()];
    for q in &p.points {
        let items = pattern.points().iter().zip(&fac).map(|(x, f)| (great_circle(*q, *x), *f)).collect();
        running_products(items, grid, &mut sums);
    }
    let values = sums.iter().map(|s| (1.0 - s / p.len() as f64).clamp(0.0, 1.0)).collect();
    Ok(SummaryCurve::new(
        grid,
        values,
        CurveKind::F,
        vec![
            ("estimator", "fhat_inhom".into()),
            ("n", pattern.len().to_string()),
            ("rho_bar", rho_bar.to_string()),
            ("grid_p", p.len().to_string()),
        ],
    ))
}

/// Inhomogeneous nearest-neighbour function:
/// `1 − (1/N) Σ_x Π_{y ∈ X∖{x}, d(x,y) ≤ r} (1 − ρ̄/ρ(y))`, and 0 when `N = 0`.
pub fn hhat_inhom(pattern: &SpherePattern, field: &IntensityField, rho_bar: f64, grid: &RGrid) -> Result<SummaryCurve> {
    let rho = intensities(pattern, field)?;
    let fac = thinning_factors(&rho, rho_bar)?;
    let n = pattern.len();
    let meta = vec![("estimator", "hhat_inhom".into()), ("n", n.to_string()), ("rho_bar", rho_bar.to_string())];
    if n == 0 {
        return Ok(SummaryCurve::new(grid, vec![0.0; grid.len()], CurveKind::H, meta));
    }
    let pts = pattern.points();
    let mut sums = vec![0.0; grid.len()];
    for (i, x) in pts.iter().enumerate() {
        let items = pts
            .iter()
            .zip(&fac)
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (y, f))| (great_circle(*x, *y), *f))
            .collect();
        running_products(items, grid, &mut sums);
    }
    let values = sums.iter().map(|s| (1.0 - s / n as f64).clamp(0.0, 1.0)).collect();
    Ok(SummaryCurve::new(grid, values, CurveKind::H, meta))
}

/// `Ĵ = (1 − Ĥ)/(1 − F̂)`; NaN where `1 − F̂ < 1e-12`.
pub fn jhat_inhom(f: &SummaryCurve, h: &SummaryCurve) -> Result<SummaryCurve> {
    if f.kind != CurveKind::F || h.kind != CurveKind::H {
        return domain("jhat_inhom expects an F curve and an H curve");
    }
    if f.r != h.r {
        return Err(Error::Domain("F and H curves are on different r-grids".into()));
    }
    let values = f
        .values
        .iter()
        .zip(&h.values)
        .map(|(fv, hv)| {
            let den = 1.0 - fv;
            if den < 1e-12 {
                f64::NAN
            } else {
                (1.0 - hv) / den
            }
        })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("estimator".to_string(), "jhat_inhom".to_string());
    for (k, v) in &f.meta {
        meta.insert(format!("f.{k}"), v.clone());
    }
    Ok(SummaryCurve { r: f.r.clone(), values, kind: CurveKind::J, meta })
}

/// Unknown-intensity K estimator:
/// `λ_D(D)² / (4π N(N−1)) Σ≠ 1[d ≤ r] / (ρ̃(x)ρ̃(y))` for `N > 1`, else 0.
pub fn ktilde_inhom(pattern: &SpherePattern, factor: &ShapeFactor, grid: &RGrid) -> SummaryCurve {
    let n = pattern.len();
    let area = factor.surface().surface_area();
    let meta = vec![("estimator", "ktilde_inhom".into()), ("n", n.to_string()), ("shape", factor.surface().descriptor())];
    if n <= 1 {
        return SummaryCurve::new(grid, vec![0.0; grid.len()], CurveKind::KTilde, meta);
    }
    let w: Vec<f64> = pattern.points().iter().map(|p| factor.eval(*p)).collect();
    let pairs = SortedPairs::new(pattern.points(), &w);
    let scale = area * area / (4.0 * PI * n as f64 * (n as f64 - 1.0));
    let values = pairs.cumulative(grid).into_iter().map(|s| 2.0 * s * scale).collect();
    SummaryCurve::new(grid, values, CurveKind::KTilde, meta)
}

/// [`ktilde_inhom`] for a pattern given on the surface itself.
pub fn ktilde_inhom_surface(pattern: &SurfacePattern, factor: &ShapeFactor, grid: &RGrid) -> Result<SummaryCurve> {
    let sp = SpherePattern::from_surface(factor.surface(), pattern)?;
    Ok(ktilde_inhom(&sp, factor, grid))
}
