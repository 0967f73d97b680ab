//! Bounded convex surfaces described as level sets `g(x) = 0` with the origin
//! in the interior.
//!
//! Every surface carries six dominant-axis charts. Chart `(k, σ)` owns the
//! directions whose largest absolute coordinate is `σ·s_k`; inside it the
//! surface is the graph `x_k = w(u, v)` over the other two coordinates. The
//! same partition is used for area quadrature, sampling and the Jacobian
//! route of the mapping module.

mod mesh;
mod spheroid;

pub use mesh::Mesh;
pub use spheroid::{polar_axis_for_area, spheroid_area, Spheroid};

use crate::error::{domain, Error, Result};
use crate::quad::gauss_legendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// A point or direction in R³.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Vec3 {
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Vec3 { x1, x2, x3 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2 + self.x3 * o.x3
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.x2 * o.x3 - self.x3 * o.x2,
            self.x3 * o.x1 - self.x1 * o.x3,
            self.x1 * o.x2 - self.x2 * o.x1,
        )
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// Unit vector parallel to `self`.
    pub fn normalized(self) -> Result<Vec3> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return domain(format!("cannot normalize {self:?}"));
        }
        Ok(self * (1.0 / n))
    }

    pub fn dist(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Index of the component with the largest magnitude (lowest index wins ties).
    pub fn dominant_axis(self) -> usize {
        let a = [self.x1.abs(), self.x2.abs(), self.x3.abs()];
        let mut k = 0;
        for i in 1..3 {
            if a[i] > a[k] {
                k = i;
            }
        }
        k
    }

    pub(crate) fn with(mut self, i: usize, v: f64) -> Vec3 {
        match i {
            0 => self.x1 = v,
            1 => self.x2 = v,
            _ => self.x3 = v,
        }
        self
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x1,
            1 => &self.x2,
            2 => &self.x3,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x1 * s, self.x2 * s, self.x3 * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x1, -self.x2, -self.x3)
    }
}

/// `p / ‖p‖`.
pub fn radial_project(p: Vec3) -> Result<Vec3> {
    p.normalized()
}

/// Great-circle distance between unit vectors.
pub fn great_circle(p: Vec3, q: Vec3) -> f64 {
    p.dot(q).clamp(-1.0, 1.0).acos()
}

/// Area of a geodesic cap of radius `r` on the unit sphere.
pub fn sphere_cap_area(r: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&r) {
        return domain(format!("cap radius {r} outside [0, pi]"));
    }
    Ok(2.0 * PI * (1.0 - r.cos()))
}

/// `n` points of the spherical Fibonacci lattice.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// User-supplied convex level set. `value` must be negative at the origin and
/// positive outside a ball of radius `bounding_radius`.
pub trait LevelSet: Send + Sync {
    fn value(&self, x: Vec3) -> f64;
    fn gradient(&self, x: Vec3) -> Vec3;
    fn bounding_radius(&self) -> f64;
}

/// Preset shape tags.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    Sphere,
    Ellipsoid { a: f64, b: f64, c: f64 },
    Cube { l: f64 },
    Custom { name: String },
}

/// How a surface is transported to the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SphereMap {
    /// `x ↦ (x1/a, x2/b, x3/c)`; ellipsoids only.
    #[default]
    Scaling,
    /// `x ↦ x/‖x‖`.
    Radial,
}

/// Geodesic engine selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Exact,
    Spheroid,
    Mesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeTag {
    Sphere,
    Ellipsoid,
    Cube,
}

/// Serializable shape description, e.g. `{"kind":"ellipsoid","a":1,"b":1,"c":3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub kind: ShapeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// Number of faces of the fallback geodesic mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_resolution: Option<usize>,
    /// Gauss–Legendre order per chart axis for area quadrature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<SphereMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<EngineKind>,
}

impl ShapeConfig {
    fn bare(kind: ShapeTag) -> Self {
        ShapeConfig {
            kind,
            a: None,
            b: None,
            c: None,
            l: None,
            mesh_resolution: None,
            quad_order: None,
            map: None,
            geodesic: None,
        }
    }

    pub fn sphere() -> Self {
        Self::bare(ShapeTag::Sphere)
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Self {
        ShapeConfig { a: Some(a), b: Some(b), c: Some(c), ..Self::bare(ShapeTag::Ellipsoid) }
    }

    pub fn cube(l: f64) -> Self {
        ShapeConfig { l: Some(l), ..Self::bare(ShapeTag::Cube) }
    }

    pub fn build(&self) -> Result<ConvexSurface> {
        let stray = |names: &[(&str, Option<f64>)]| -> Result<()> {
            for (n, v) in names {
                if v.is_some() {
                    return domain(format!("field `{n}` not allowed for {:?}", self.kind));
                }
            }
            Ok(())
        };
        let kind = match self.kind {
            ShapeTag::Sphere => {
                stray(&[("a", self.a), ("b", self.b), ("c", self.c), ("l", self.l)])?;
                ShapeKind::Sphere
            }
            ShapeTag::Ellipsoid => {
                stray(&[("l", self.l)])?;
                let get = |n: &str, v: Option<f64>| {
                    v.ok_or_else(|| Error::Domain(format!("ellipsoid needs `{n}`")))
                };
                ShapeKind::Ellipsoid {
                    a: get("a", self.a)?,
                    b: get("b", self.b)?,
                    c: get("c", self.c)?,
                }
            }
            ShapeTag::Cube => {
                stray(&[("a", self.a), ("b", self.b), ("c", self.c)])?;
                ShapeKind::Cube {
                    l: self.l.ok_or_else(|| Error::Domain("cube needs `l`".into()))?,
                }
            }
        };
        if self.map.is_some() && !matches!(kind, ShapeKind::Ellipsoid { .. }) {
            return domain("`map` is only configurable for ellipsoids");
        }
        let mut s = ConvexSurface::from_kind(kind, self.map.unwrap_or_default(), None)?;
        if let Some(n) = self.mesh_resolution {
            if n < 100 {
                return domain("mesh_resolution must be at least 100 faces");
            }
            s.mesh_faces = n;
        }
        if let Some(n) = self.quad_order {
            if n < 4 {
                return domain("quad_order must be at least 4");
            }
            s.quad_order = n;
        }
        if let Some(e) = self.geodesic {
            s = s.with_engine(e)?;
        }
        Ok(s)
    }
}

/// A dominant-axis chart: the surface over this chart is `x_k = w(u, v)` with
/// `(u, v) = (x_i, x_j)` and `(i, j, k) = frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub id: usize,
    pub axis: usize,
    pub sign: f64,
    pub frame: [usize; 3],
}

impl Chart {
    fn new(axis: usize, sign: f64) -> Chart {
        Chart {
            id: 2 * axis + usize::from(sign < 0.0),
            axis,
            sign,
            frame: [(axis + 1) % 3, (axis + 2) % 3, axis],
        }
    }

    /// World point from chart coordinates `(u, v, w)`.
    pub fn to_world(&self, u: f64, v: f64, w: f64) -> Vec3 {
        Vec3::default().with(self.frame[0], u).with(self.frame[1], v).with(self.frame[2], w)
    }

    /// Chart coordinates `(u, v, w)` of a world point.
    pub fn from_world(&self, p: Vec3) -> (f64, f64, f64) {
        (p[self.frame[0]], p[self.frame[1]], p[self.frame[2]])
    }
}

#[derive(Clone)]
enum Engine {
    Exact { radius: f64 },
    Spheroid(Spheroid),
    Mesh,
}

#[derive(Default)]
struct Caches {
    chart_areas: OnceLock<[f64; 6]>,
    sampler_sup: OnceLock<[f64; 6]>,
    mesh: OnceLock<Mesh>,
    balls: Mutex<Vec<(u64, Arc<Vec<(f64, f64)>>)>>,
}

/// A bounded convex surface with its charts and geodesic engine. Cloning is
/// cheap and clones share lazily built caches.
#[derive(Clone)]
pub struct ConvexSurface {
    kind: ShapeKind,
    map: SphereMap,
    level: Option<Arc<dyn LevelSet>>,
    charts: [Chart; 6],
    engine: Engine,
    pub(crate) mesh_faces: usize,
    pub(crate) quad_order: usize,
    caches: Arc<Caches>,
}

impl fmt::Debug for ConvexSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexSurface")
            .field("kind", &self.kind)
            .field("map", &self.map)
            .field("engine", &self.engine_kind())
            .finish()
    }
}

const ON_SURFACE_TOL: f64 = 1e-6;

impl ConvexSurface {
    pub fn sphere() -> Self {
        Self::from_kind(ShapeKind::Sphere, SphereMap::Radial, None).expect("sphere is valid")
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::from_kind(ShapeKind::Ellipsoid { a, b, c }, SphereMap::Scaling, None)
    }

    /// Ellipsoid transported by radial projection instead of axis scaling.
    pub fn ellipsoid_radial(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::from_kind(ShapeKind::Ellipsoid { a, b, c }, SphereMap::Radial, None)
    }

    /// Axis-aligned cube `[-l, l]³`.
    pub fn cube(l: f64) -> Result<Self> {
        Self::from_kind(ShapeKind::Cube { l }, SphereMap::Radial, None)
    }

    pub fn custom(name: impl Into<String>, level: Arc<dyn LevelSet>) -> Result<Self> {
        let r = level.bounding_radius();
        if !(r > 0.0 && r.is_finite()) {
            return domain("custom surface needs a positive bounding radius");
        }
        if !(level.value(Vec3::default()) < 0.0) {
            return domain("custom surface must contain the origin in its interior");
        }
        Self::from_kind(ShapeKind::Custom { name: name.into() }, SphereMap::Radial, Some(level))
    }

    fn from_kind(kind: ShapeKind, map: SphereMap, level: Option<Arc<dyn LevelSet>>) -> Result<Self> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                domain(format!("{name} must be positive and finite, got {v}"))
            }
        };
        let map = match &kind {
            ShapeKind::Ellipsoid { a, b, c } => {
                pos("a", *a)?;
                pos("b", *b)?;
                pos("c", *c)?;
                map
            }
            ShapeKind::Cube { l } => {
                pos("l", *l)?;
                SphereMap::Radial
            }
            _ => SphereMap::Radial,
        };
        let engine = match &kind {
            ShapeKind::Sphere => Engine::Exact { radius: 1.0 },
            ShapeKind::Ellipsoid { a, b, c } => spheroid_engine(*a, *b, *c),
            _ => Engine::Mesh,
        };
        let mut charts = [Chart::new(0, 1.0); 6];
        for k in 0..3 {
            charts[2 * k] = Chart::new(k, 1.0);
            charts[2 * k + 1] = Chart::new(k, -1.0);
        }
        Ok(ConvexSurface {
            kind,
            map,
            level,
            charts,
            engine,
            mesh_faces: 20_000,
            quad_order: 256,
            caches: Arc::new(Caches::default()),
        })
    }

    /// Replace the geodesic engine. `Exact` and `Spheroid` are only available
    /// for shapes that support them; `Mesh` is always available.
    pub fn with_engine(mut self, e: EngineKind) -> Result<Self> {
        let engine = match (e, &self.kind) {
            (EngineKind::Mesh, _) => Engine::Mesh,
            (EngineKind::Exact, ShapeKind::Sphere) => Engine::Exact { radius: 1.0 },
            (EngineKind::Exact | EngineKind::Spheroid, ShapeKind::Ellipsoid { a, b, c }) => {
                match (e, spheroid_engine(*a, *b, *c)) {
                    (EngineKind::Exact, en @ Engine::Exact { .. }) => en,
                    (EngineKind::Spheroid, en @ Engine::Spheroid(_)) => en,
                    _ => return domain(format!("engine {e:?} unavailable for {:?}", self.kind)),
                }
            }
            _ => return domain(format!("engine {e:?} unavailable for {:?}", self.kind)),
        };
        self.engine = engine;
        self.caches = Arc::new(Caches::default());
        Ok(self)
    }

    pub fn with_mesh_resolution(mut self, faces: usize) -> Self {
        self.mesh_faces = faces.max(100);
        self.caches = Arc::new(Caches::default());
        self
    }

    pub fn with_quad_order(mut self, n: usize) -> Self {
        self.quad_order = n.max(4);
        self.caches = Arc::new(Caches::default());
        self
    }

    pub fn kind(&self) -> &ShapeKind {
        &self.kind
    }

    pub fn map(&self) -> SphereMap {
        self.map
    }

    pub fn charts(&self) -> &[Chart; 6] {
        &self.charts
    }

    pub fn engine_kind(&self) -> EngineKind {
        match self.engine {
            Engine::Exact { .. } => EngineKind::Exact,
            Engine::Spheroid(_) => EngineKind::Spheroid,
            Engine::Mesh => EngineKind::Mesh,
        }
    }

    pub fn spheroid(&self) -> Option<&Spheroid> {
        match &self.engine {
            Engine::Spheroid(s) => Some(s),
            _ => None,
        }
    }

    /// Semi-axes for ellipsoid-type shapes (the sphere reports `(1,1,1)`).
    /// Radius when the surface is a sphere (exact great-circle engine).
    pub fn sphere_radius(&self) -> Option<f64> {
        match &self.engine {
            Engine::Exact { radius } => Some(*radius),
            _ => None,
        }
    }

    pub fn semi_axes(&self) -> Option<[f64; 3]> {
        match self.kind {
            ShapeKind::Sphere => Some([1.0; 3]),
            ShapeKind::Ellipsoid { a, b, c } => Some([a, b, c]),
            _ => None,
        }
    }

    pub fn is_unit_sphere(&self) -> bool {
        matches!(self.kind, ShapeKind::Sphere)
    }

    /// Short machine-readable descriptor, e.g. `ellipsoid(1,1,3)`.
    pub fn descriptor(&self) -> String {
        match &self.kind {
            ShapeKind::Sphere => "sphere".into(),
            ShapeKind::Ellipsoid { a, b, c } => match self.map {
                SphereMap::Scaling => format!("ellipsoid({a},{b},{c})"),
                SphereMap::Radial => format!("ellipsoid({a},{b},{c};radial)"),
            },
            ShapeKind::Cube { l } => format!("cube({l})"),
            ShapeKind::Custom { name } => format!("custom({name})"),
        }
    }

    /// Configuration block for presets; `None` for custom shapes.
    pub fn config(&self) -> Option<ShapeConfig> {
        match self.kind {
            ShapeKind::Sphere => Some(ShapeConfig::sphere()),
            ShapeKind::Ellipsoid { a, b, c } => Some(ShapeConfig {
                map: Some(self.map),
                ..ShapeConfig::ellipsoid(a, b, c)
            }),
            ShapeKind::Cube { l } => Some(ShapeConfig::cube(l)),
            ShapeKind::Custom { .. } => None,
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match &self.kind {
            ShapeKind::Sphere => 1.0,
            ShapeKind::Ellipsoid { a, b, c } => a.max(*b).max(*c),
            ShapeKind::Cube { l } => l * 3f64.sqrt(),
            ShapeKind::Custom { .. } => self.level.as_ref().map_or(1.0, |g| g.bounding_radius()),
        }
    }

    /// Level-set value, normalized so that it is dimensionless.
    pub fn level(&self, x: Vec3) -> f64 {
        match &self.kind {
            ShapeKind::Sphere => x.norm2() - 1.0,
            ShapeKind::Ellipsoid { a, b, c } => {
                (x.x1 / a).powi(2) + (x.x2 / b).powi(2) + (x.x3 / c).powi(2) - 1.0
            }
            ShapeKind::Cube { l } => x.x1.abs().max(x.x2.abs()).max(x.x3.abs()) / l - 1.0,
            ShapeKind::Custom { .. } => self.level.as_ref().expect("custom level set").value(x),
        }
    }

    /// Gradient of [`level`](Self::level); on cube edges the dominant face wins.
    pub fn gradient(&self, x: Vec3) -> Vec3 {
        match &self.kind {
            ShapeKind::Sphere => x * 2.0,
            ShapeKind::Ellipsoid { a, b, c } => {
                Vec3::new(2.0 * x.x1 / (a * a), 2.0 * x.x2 / (b * b), 2.0 * x.x3 / (c * c))
            }
            ShapeKind::Cube { l } => {
                let k = x.dominant_axis();
                Vec3::default().with(k, x[k].signum() / l)
            }
            ShapeKind::Custom { .. } => self.level.as_ref().expect("custom level set").gradient(x),
        }
    }

    /// Outward unit normal.
    pub fn normal(&self, x: Vec3) -> Vec3 {
        let g = self.gradient(x);
        g * (1.0 / g.norm())
    }

    pub fn on_surface(&self, p: Vec3) -> bool {
        p.is_finite() && self.level(p).abs() < ON_SURFACE_TOL
    }

    pub(crate) fn check_on_surface(&self, p: Vec3) -> Result<()> {
        if self.on_surface(p) {
            Ok(())
        } else {
            domain(format!("point {:?} is not on {} (|g| = {:e})", p, self.descriptor(), self.level(p).abs()))
        }
    }

    /// The unique surface point `λ·s`, `λ > 0`.
    pub fn radial_unproject(&self, s: Vec3) -> Result<Vec3> {
        if !s.is_finite() || (s.norm() - 1.0).abs() > 1e-12 {
            return domain(format!("radial_unproject needs a unit vector, got {s:?}"));
        }
        Ok(self.radial_unproject_unchecked(s))
    }

    pub(crate) fn radial_unproject_unchecked(&self, s: Vec3) -> Vec3 {
        match &self.kind {
            ShapeKind::Sphere => s,
            ShapeKind::Ellipsoid { a, b, c } => {
                let q = ((s.x1 / a).powi(2) + (s.x2 / b).powi(2) + (s.x3 / c).powi(2)).sqrt();
                s * (1.0 / q)
            }
            ShapeKind::Cube { l } => {
                let m = s.x1.abs().max(s.x2.abs()).max(s.x3.abs());
                s * (l / m)
            }
            ShapeKind::Custom { .. } => self.ray_root(s).unwrap_or(s),
        }
    }

    /// Bisection on `λ ↦ g(λ s)` over `(0, λ_max]` followed by a Newton polish.
    fn ray_root(&self, s: Vec3) -> Result<Vec3> {
        let hi = 1.01 * self.bounding_radius() / s.norm();
        if self.level(s * hi) <= 0.0 {
            return Err(Error::Internal("ray does not leave the bounding ball".into()));
        }
        let t = crate::roots::bisect(0.0, hi, 1e-12 * hi, |t| self.level(s * t))?;
        let mut t1 = t;
        let g = self.level(s * t1);
        let dg = self.gradient(s * t1).dot(s);
        if dg > 0.0 {
            let cand = t1 - g / dg;
            if (cand - t1).abs() < 1e-6 * hi && self.level(s * cand).abs() <= g.abs() {
                t1 = cand;
            }
        }
        Ok(s * t1)
    }

    /// Map a surface point to the unit sphere using the surface's transport map.
    pub fn to_sphere(&self, p: Vec3) -> Result<Vec3> {
        match (&self.kind, self.map) {
            (ShapeKind::Ellipsoid { a, b, c }, SphereMap::Scaling) => {
                Vec3::new(p.x1 / a, p.x2 / b, p.x3 / c).normalized()
            }
            _ => p.normalized(),
        }
    }

    /// Inverse of [`to_sphere`](Self::to_sphere).
    pub fn from_sphere(&self, s: Vec3) -> Result<Vec3> {
        if !s.is_finite() || (s.norm() - 1.0).abs() > 1e-9 {
            return domain(format!("expected a unit vector, got {s:?}"));
        }
        Ok(self.from_sphere_unchecked(s))
    }

    pub(crate) fn from_sphere_unchecked(&self, s: Vec3) -> Vec3 {
        match (&self.kind, self.map) {
            (ShapeKind::Ellipsoid { a, b, c }, SphereMap::Scaling) => {
                Vec3::new(a * s.x1, b * s.x2, c * s.x3)
            }
            _ => self.radial_unproject_unchecked(s),
        }
    }

    /// Chart owning the direction `s`.
    pub fn owner_chart(&self, s: Vec3) -> &Chart {
        let k = s.dominant_axis();
        &self.charts[2 * k + usize::from(s[k] < 0.0)]
    }

    /// Whether `(u, v)` lies in the parameter domain of `chart`.
    pub fn in_domain(&self, chart: &Chart, u: f64, v: f64) -> bool {
        if !(u.is_finite() && v.is_finite()) {
            return false;
        }
        match &self.kind {
            ShapeKind::Sphere => u * u + v * v < 1.0,
            ShapeKind::Ellipsoid { .. } => {
                let ax = self.semi_axes().expect("ellipsoid axes");
                (u / ax[chart.frame[0]]).powi(2) + (v / ax[chart.frame[1]]).powi(2) < 1.0
            }
            ShapeKind::Cube { l } => u.abs() <= *l && v.abs() <= *l,
            ShapeKind::Custom { .. } => self.custom_height(chart, u, v).is_ok(),
        }
    }

    /// Height `w(u, v)` of `chart`.
    pub fn height(&self, chart: &Chart, u: f64, v: f64) -> Result<f64> {
        if !self.in_domain(chart, u, v) {
            return domain(format!("({u}, {v}) outside chart {}", chart.id));
        }
        Ok(match &self.kind {
            ShapeKind::Sphere | ShapeKind::Ellipsoid { .. } => {
                let ax = self.semi_axes().expect("ellipsoid axes");
                let q = 1.0 - (u / ax[chart.frame[0]]).powi(2) - (v / ax[chart.frame[1]]).powi(2);
                chart.sign * ax[chart.axis] * q.max(0.0).sqrt()
            }
            ShapeKind::Cube { l } => chart.sign * l,
            ShapeKind::Custom { .. } => self.custom_height(chart, u, v)?,
        })
    }

    fn custom_height(&self, chart: &Chart, u: f64, v: f64) -> Result<f64> {
        let rb = self.bounding_radius() * 1.01;
        let at = |w: f64| self.level(chart.to_world(u, v, w));
        let mut inside = None;
        let n = 64;
        for i in 0..=n {
            let w = chart.sign * rb * i as f64 / n as f64;
            if at(w) < 0.0 {
                inside = Some(w);
                break;
            }
        }
        let w0 = inside.ok_or_else(|| Error::Domain(format!("({u}, {v}) outside chart {}", chart.id)))?;
        crate::roots::bisect(w0, chart.sign * rb, 1e-13 * rb, at)
    }

    /// Partial derivatives `(∂w/∂u, ∂w/∂v)` of the chart height.
    pub fn height_partials(&self, chart: &Chart, u: f64, v: f64) -> Result<(f64, f64)> {
        let w = self.height(chart, u, v)?;
        if let ShapeKind::Cube { .. } = self.kind {
            return Ok((0.0, 0.0));
        }
        let g = self.gradient(chart.to_world(u, v, w));
        let (gu, gv, gw) = chart.from_world(g);
        if gw == 0.0 {
            return domain(format!("chart {} is vertical at ({u}, {v})", chart.id));
        }
        Ok((-gu / gw, -gv / gw))
    }

    /// Area element `l = sqrt(1 + w_u² + w_v²)` of the chart graph.
    pub fn area_element(&self, chart: &Chart, u: f64, v: f64) -> Result<f64> {
        let (wu, wv) = self.height_partials(chart, u, v)?;
        Ok((1.0 + wu * wu + wv * wv).sqrt())
    }

    /// Surface point and area weight for gnomonic chart coordinates
    /// `(α, β) ∈ [-1, 1]²`: the point lies on the ray through `d = (α, β, σ)`
    /// (chart frame) and the weight is `dA / (dα dβ) = t² |∇g| / |∇g · d|`.
    pub fn gnomonic(&self, chart: &Chart, alpha: f64, beta: f64) -> (Vec3, f64) {
        let d = chart.to_world(alpha, beta, chart.sign);
        let dn = d.norm();
        let p = self.radial_unproject_unchecked(d * (1.0 / dn));
        let t = p.norm() / dn;
        let weight = match self.kind {
            ShapeKind::Sphere => dn.powi(-3),
            ShapeKind::Cube { l } => l * l,
            _ => {
                let g = self.gradient(p);
                t * t * g.norm() / g.dot(d).abs()
            }
        };
        (p, weight)
    }

    /// `dA/dΩ` for radial projection at direction `s`: `‖P‖³ / (P · n̂)`.
    pub fn radial_density(&self, s: Vec3) -> f64 {
        match self.kind {
            ShapeKind::Sphere => 1.0,
            _ => {
                let p = self.radial_unproject_unchecked(s);
                let r = p.norm();
                r * r * r / p.dot(self.normal(p))
            }
        }
    }

    /// Areas of the six chart pieces.
    pub fn chart_areas(&self) -> [f64; 6] {
        *self.caches.chart_areas.get_or_init(|| {
            let gl = gauss_legendre(self.quad_order);
            let mut out = [0.0; 6];
            for (ci, chart) in self.charts.iter().enumerate() {
                let mut s = 0.0;
                for (x, wx) in gl.nodes.iter().zip(&gl.weights) {
                    let mut row = 0.0;
                    for (y, wy) in gl.nodes.iter().zip(&gl.weights) {
                        row += wy * self.gnomonic(chart, *x, *y).1;
                    }
                    s += wx * row;
                }
                out[ci] = s;
            }
            out
        })
    }

    /// Total surface area `λ_D(D)`.
    pub fn surface_area(&self) -> f64 {
        match self.kind {
            ShapeKind::Sphere => 4.0 * PI,
            _ => self.chart_areas().iter().sum(),
        }
    }

    /// Per-chart supremum of the gnomonic weight on a 512² grid, times 1.001.
    pub(crate) fn sampler_sup(&self) -> [f64; 6] {
        *self.caches.sampler_sup.get_or_init(|| {
            let n = 512;
            let mut out = [0.0; 6];
            for (ci, chart) in self.charts.iter().enumerate() {
                let mut m: f64 = 0.0;
                for i in 0..=n {
                    let a = -1.0 + 2.0 * i as f64 / n as f64;
                    for j in 0..=n {
                        let b = -1.0 + 2.0 * j as f64 / n as f64;
                        m = m.max(self.gnomonic(chart, a, b).1);
                    }
                }
                out[ci] = m * 1.001;
            }
            out
        })
    }

    fn mesh(&self) -> &Mesh {
        self.caches.mesh.get_or_init(|| Mesh::build(self, self.mesh_faces))
    }

    /// Geodesic distance between two surface points.
    pub fn geodesic_distance(&self, p: Vec3, q: Vec3) -> Result<f64> {
        self.check_on_surface(p)?;
        self.check_on_surface(q)?;
        Ok(self.geodesic_unchecked(p, q))
    }

    pub(crate) fn geodesic_unchecked(&self, p: Vec3, q: Vec3) -> f64 {
        match &self.engine {
            Engine::Exact { radius } => radius * great_circle(p * (1.0 / p.norm()), q * (1.0 / q.norm())),
            Engine::Spheroid(s) => s.distance(p, q),
            Engine::Mesh => self.mesh().distance(self, p, q, f64::INFINITY),
        }
    }

    /// Whether the geodesic distance between `p` and `q` is below `threshold`.
    pub fn within(&self, p: Vec3, q: Vec3, threshold: f64) -> bool {
        if !(threshold > 0.0) {
            return false;
        }
        let chord = p.dist(q);
        if chord >= threshold {
            return false;
        }
        match &self.engine {
            Engine::Exact { radius } => {
                radius * great_circle(p * (1.0 / p.norm()), q * (1.0 / q.norm())) < threshold
            }
            Engine::Spheroid(s) => {
                if self.projected_chord_length(p, q) < threshold * (1.0 - 1e-7) {
                    return true;
                }
                s.distance(p, q) < threshold
            }
            Engine::Mesh => self.mesh().distance(self, p, q, threshold) < threshold,
        }
    }

    /// Length of the radial projection of the segment `[p, q]` onto the
    /// surface; an upper bound on the geodesic distance.
    fn projected_chord_length(&self, p: Vec3, q: Vec3) -> f64 {
        let gl = gauss_legendre(16);
        let dir = q - p;
        let h = 1e-6;
        let point = |t: f64| {
            let x = p + dir * t;
            self.radial_unproject_unchecked(x * (1.0 / x.norm()))
        };
        let mut len = 0.0;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let t = 0.5 * (x + 1.0);
            let v = (point(t + h) - point(t - h)) * (0.5 / h);
            len += 0.5 * w * v.norm();
        }
        len
    }

    /// Area of the geodesic ball `B_D(x, R)`.
    pub fn ball_area(&self, x: Vec3, r: f64) -> Result<f64> {
        self.check_on_surface(x)?;
        if !(r >= 0.0) {
            return domain(format!("ball radius {r} must be nonnegative"));
        }
        Ok(match &self.engine {
            Engine::Exact { radius } => {
                let t = (r / radius).min(PI);
                2.0 * PI * radius * radius * (1.0 - t.cos())
            }
            Engine::Spheroid(s) => {
                let (beta, _) = s.to_latlon(x);
                s.ball_area_at(beta, r)
            }
            Engine::Mesh => self.mesh().ball_area(self, x, r),
        })
    }

    /// Quadrature `(weight, |B_D(x, R)|)` over the surface:
    /// `∫_D φ(|B_D(x,R)|) dx ≈ Σ w φ(area)`. Cached per radius.
    pub fn ball_quadrature(&self, r: f64) -> Arc<Vec<(f64, f64)>> {
        let key = r.to_bits();
        {
            let guard = self.caches.balls.lock().expect("ball cache poisoned");
            if let Some((_, v)) = guard.iter().find(|(k, _)| *k == key) {
                return v.clone();
            }
        }
        let table = Arc::new(match &self.engine {
            Engine::Exact { radius } => {
                let t = (r / radius).min(PI);
                vec![(4.0 * PI * radius * radius, 2.0 * PI * radius * radius * (1.0 - t.cos()))]
            }
            Engine::Spheroid(s) => s.ball_table(r, 16),
            Engine::Mesh => self.mesh().ball_table(self, r),
        });
        let mut guard = self.caches.balls.lock().expect("ball cache poisoned");
        guard.push((key, table.clone()));
        table
    }
}

fn spheroid_engine(a: f64, b: f64, c: f64) -> Engine {
    let eq = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.max(y);
    if eq(a, b) && eq(b, c) {
        Engine::Exact { radius: a }
    } else if eq(a, b) {
        Engine::Spheroid(Spheroid::new(a, c, 2))
    } else if eq(b, c) {
        Engine::Spheroid(Spheroid::new(b, a, 0))
    } else if eq(a, c) {
        Engine::Spheroid(Spheroid::new(a, b, 1))
    } else {
        Engine::Mesh
    }
}
