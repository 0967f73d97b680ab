//! Transport of intensities from a surface `D` to the unit sphere.
//!
//! If `X` is Poisson on `D` with intensity ρ and `f: D → S²` is the
//! surface's transport map, `f(X)` is Poisson on S² with intensity
//! `ρ*(s) = ρ(f⁻¹(s)) · dA/dΩ`. With ρ ≡ 1 this is the shape factor ρ̃.
//!
//! Two routes compute `dA/dΩ`. The chart route works in the owning chart
//! `(u, v, w(u, v))` of `f⁻¹(s)`: `dA = l du dv` and
//! `dΩ = ds_i ds_j / |s_k|`, so `ρ̃ = l · |∂(u,v)/∂(s_i,s_j)| · |s_k|`.
//! For the radial map `(s_i, s_j) = (u, v)/r` with `r² = u² + v² + w²` and
//!
//! ```text
//! ∂(s_i,s_j)/∂(u,v) = det M / r⁶,
//! M = [[v² + w² − u w w_u, −u (v + w w_v)],
//!      [−v (u + w w_u),    u² + w² − v w w_v]]
//! ```
//!
//! For axis scaling `(u, v) = (a_i s_i, a_j s_j)`. The closed forms are
//! `abc·sqrt(s1²/a² + s2²/b² + s3²/c²)` (scaled ellipsoid) and
//! `‖P‖³ / (P · n̂)` (radial shapes).

use crate::error::{domain, Result};
use crate::geometry::{fibonacci_sphere, ConvexSurface, ShapeKind, SphereMap, Vec3};
use crate::quad::SphereGrid;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Structure of a field that quadrature routines can exploit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symmetry {
    /// Constant value.
    Constant(f64),
    /// Invariant under rotations about a coordinate axis.
    Axial(usize),
    None,
}

/// Serializable summary of an intensity field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub kind: String,
    pub params: serde_json::Value,
    pub inf_value: f64,
    pub total: f64,
    pub inf_approximate: bool,
}

type FieldFn = Arc<dyn Fn(Vec3) -> f64 + Send + Sync>;

/// An intensity ρ* on S² with its infimum ρ̄ and total mass μ(S²).
#[derive(Clone)]
pub struct IntensityField {
    eval: FieldFn,
    inf_value: f64,
    total: f64,
    inf_approximate: bool,
    symmetry: Symmetry,
    kind: String,
    params: serde_json::Value,
}

impl fmt::Debug for IntensityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntensityField")
            .field("kind", &self.kind)
            .field("inf_value", &self.inf_value)
            .field("total", &self.total)
            .finish()
    }
}

impl IntensityField {
    /// Constant intensity `rho` on the unit sphere.
    pub fn constant(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return domain(format!("intensity must be positive, got {rho}"));
        }
        Ok(IntensityField {
            eval: Arc::new(move |_| rho),
            inf_value: rho,
            total: 4.0 * std::f64::consts::PI * rho,
            inf_approximate: false,
            symmetry: Symmetry::Constant(rho),
            kind: "constant".into(),
            params: serde_json::json!({ "rho": rho }),
        })
    }

    /// Image on S² of a homogeneous Poisson process of intensity `rho` on `surface`.
    pub fn mapped_constant(surface: &ConvexSurface, rho: f64) -> Result<Self> {
        if surface.is_unit_sphere() {
            return Self::constant(rho);
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return domain(format!("intensity must be positive, got {rho}"));
        }
        let sf = ShapeFactor::new(surface.clone());
        let (inf, approx) = sf.infimum();
        let symmetry = match sf.symmetry() {
            Symmetry::Constant(v) => Symmetry::Constant(rho * v),
            s => s,
        };
        Ok(IntensityField {
            eval: Arc::new(move |s| rho * sf.eval(s)),
            inf_value: rho * inf,
            total: rho * surface.surface_area(),
            inf_approximate: approx,
            symmetry,
            kind: "mapped-constant".into(),
            params: serde_json::json!({ "rho": rho, "shape": surface.descriptor() }),
        })
    }

    /// Arbitrary positive field; total and infimum come from quadrature and
    /// a probe grid (the infimum is flagged approximate and shrunk by 0.1%).
    pub fn from_fn(name: &str, f: impl Fn(Vec3) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let grid = SphereGrid::default_grid();
        let total = grid.integrate(|p| f(*p));
        let probe = fibonacci_sphere(100_000);
        let mut inf = f64::INFINITY;
        for p in probe.iter().chain(grid.points.iter()) {
            let v = f(*p);
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("field `{name}` is not positive at {p:?}"));
            }
            inf = inf.min(v);
        }
        Ok(IntensityField {
            eval: Arc::new(f),
            inf_value: inf * 0.999,
            total,
            inf_approximate: true,
            symmetry: Symmetry::None,
            kind: name.into(),
            params: serde_json::Value::Null,
        })
    }

    /// Override the detected symmetry.
    pub fn with_symmetry(mut self, s: Symmetry) -> Self {
        self.symmetry = s;
        self
    }

    pub fn eval(&self, s: Vec3) -> f64 {
        (self.eval)(s)
    }

    pub fn inf_value(&self) -> f64 {
        self.inf_value
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn homogeneous(&self) -> Option<f64> {
        match self.symmetry {
            Symmetry::Constant(v) => Some(v),
            _ => None,
        }
    }

    pub fn report(&self) -> FieldReport {
        FieldReport {
            kind: self.kind.clone(),
            params: self.params.clone(),
            inf_value: self.inf_value,
            total: self.total,
            inf_approximate: self.inf_approximate,
        }
    }
}

/// The shape factor ρ̃ of a surface: the mapped intensity of ρ ≡ 1.
#[derive(Debug, Clone)]
pub struct ShapeFactor {
    surface: ConvexSurface,
}

impl ShapeFactor {
    pub fn new(surface: ConvexSurface) -> Self {
        ShapeFactor { surface }
    }

    pub fn surface(&self) -> &ConvexSurface {
        &self.surface
    }

    /// Closed-form ρ̃ at a unit vector.
    pub fn eval(&self, s: Vec3) -> f64 {
        match (self.surface.kind(), self.surface.map()) {
            (ShapeKind::Sphere, _) => 1.0,
            (ShapeKind::Ellipsoid { a, b, c }, SphereMap::Scaling) => {
                a * b * c * ((s.x1 / a).powi(2) + (s.x2 / b).powi(2) + (s.x3 / c).powi(2)).sqrt()
            }
            _ => self.surface.radial_density(s),
        }
    }

    /// `∫_{S²} ρ̃ dλ`, which should equal the surface area.
    pub fn integral(&self, grid: &SphereGrid) -> f64 {
        grid.integrate(|s| self.eval(*s))
    }

    /// `(inf ρ̃, approximate?)`.
    pub fn infimum(&self) -> (f64, bool) {
        match (self.surface.kind(), self.surface.map()) {
            (ShapeKind::Sphere, _) => (1.0, false),
            (ShapeKind::Ellipsoid { a, b, c }, SphereMap::Scaling) => (a * b * c / a.max(*b).max(*c), false),
            (ShapeKind::Cube { l }, _) => (l * l, false),
            _ => {
                let m = fibonacci_sphere(100_000)
                    .into_iter()
                    .map(|s| self.eval(s))
                    .fold(f64::INFINITY, f64::min);
                (m * 0.999, true)
            }
        }
    }

    pub fn symmetry(&self) -> Symmetry {
        let eq = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.max(y);
        match self.surface.kind() {
            ShapeKind::Sphere => Symmetry::Constant(1.0),
            ShapeKind::Ellipsoid { a, b, c } => {
                if eq(*a, *b) && eq(*b, *c) {
                    Symmetry::Constant(a * a)
                } else if eq(*a, *b) {
                    Symmetry::Axial(2)
                } else if eq(*b, *c) {
                    Symmetry::Axial(0)
                } else if eq(*a, *c) {
                    Symmetry::Axial(1)
                } else {
                    Symmetry::None
                }
            }
            _ => Symmetry::None,
        }
    }
}

/// ρ̃ at `s` by the chart route, independent of the closed forms.
pub fn shape_factor_generic(surface: &ConvexSurface, s: Vec3) -> Result<f64> {
    if !s.is_finite() || (s.norm() - 1.0).abs() > 1e-9 {
        return domain(format!("expected a unit vector, got {s:?}"));
    }
    let chart = *surface.owner_chart(s);
    let x = surface.from_sphere(s)?;
    let (u, v, w) = chart.from_world(x);
    let (wu, wv) = surface.height_partials(&chart, u, v)?;
    let l = (1.0 + wu * wu + wv * wv).sqrt();
    let sk = s[chart.axis].abs();
    let jac = match (surface.kind(), surface.map()) {
        (ShapeKind::Ellipsoid { .. }, SphereMap::Scaling) => {
            let ax = surface.semi_axes().expect("ellipsoid axes");
            ax[chart.frame[0]] * ax[chart.frame[1]]
        }
        _ => {
            let m11 = v * v + w * w - u * w * wu;
            let m12 = -u * (v + w * wv);
            let m21 = -v * (u + w * wu);
            let m22 = u * u + w * w - v * w * wv;
            let r2 = u * u + v * v + w * w;
            r2.powi(3) / (m11 * m22 - m12 * m21).abs()
        }
    };
    Ok(l * jac * sk)
}

/// ρ̃ at `s` (closed form).
pub fn shape_factor(surface: &ConvexSurface, s: Vec3) -> Result<f64> {
    if !s.is_finite() || (s.norm() - 1.0).abs() > 1e-9 {
        return domain(format!("expected a unit vector, got {s:?}"));
    }
    Ok(ShapeFactor::new(surface.clone()).eval(s))
}

/// Mapped intensity `ρ*(s) = ρ(f⁻¹(s)) · ρ̃(s)` by the chart route.
pub fn mapped_intensity(surface: &ConvexSurface, rho: &dyn Fn(Vec3) -> f64, s: Vec3) -> Result<f64> {
    let x = surface.from_sphere(s)?;
    let r = rho(x);
    if !(r > 0.0) {
        return domain(format!("intensity must be positive on D, got {r} at {x:?}"));
    }
    Ok(r * shape_factor_generic(surface, s)?)
}

/// `inf_{S²} ρ*` for a constant source intensity.
pub fn inf_mapped_intensity(surface: &ConvexSurface, rho_const: f64) -> Result<f64> {
    if !(rho_const > 0.0) {
        return domain(format!("intensity must be positive, got {rho_const}"));
    }
    Ok(rho_const * ShapeFactor::new(surface.clone()).infimum().0)
}

/// Map a pattern on `D` to S².
pub fn pushforward_pattern(surface: &ConvexSurface, pattern: &[Vec3]) -> Result<Vec<Vec3>> {
    pattern
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !surface.on_surface(*p) {
                return domain(format!("point {i} ({p:?}) is not on {}", surface.descriptor()));
            }
            surface.to_sphere(*p)
        })
        .collect()
}

/// Map a pattern on S² back to `D`.
pub fn pullback_pattern(surface: &ConvexSurface, pattern: &[Vec3]) -> Result<Vec<Vec3>> {
    pattern
        .iter()
        .enumerate()
        .map(|(i, s)| {
            surface
                .from_sphere(*s)
                .map_err(|_| crate::Error::Domain(format!("point {i} ({s:?}) is not a unit vector")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fibonacci_sphere;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms_at_reference_points() {
        let e = ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap();
        let v = mapped_intensity(&e, &|_| 5.0, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        let eq = shape_factor(&e, Vec3::new(0.6, 0.8, 0.0)).unwrap();
        assert!((eq - 3.0).abs() < 1e-12);
        let cube = ConvexSurface::cube(1.0).unwrap();
        let v = mapped_intensity(&cube, &|_| 1.0, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let s = ConvexSurface::sphere();
        assert!((mapped_intensity(&s, &|_| 2.5, Vec3::new(0.0, 0.6, 0.8)).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn chart_route_matches_closed_forms() {
        let shapes = [
            ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap(),
            ConvexSurface::ellipsoid(0.7, 1.3, 2.0).unwrap(),
            ConvexSurface::ellipsoid_radial(1.0, 1.0, 3.0).unwrap(),
            ConvexSurface::cube(1.0).unwrap(),
            ConvexSurface::cube(0.6).unwrap(),
            ConvexSurface::sphere(),
        ];
        for sh in &shapes {
            let sf = ShapeFactor::new(sh.clone());
            for s in fibonacci_sphere(1000) {
                let g = shape_factor_generic(sh, s).unwrap();
                let c = sf.eval(s);
                assert!((g - c).abs() <= 1e-8 * c, "{:?} {s:?}: {g} vs {c}", sh.kind());
            }
        }
    }

    #[test]
    fn transport_identity() {
        let grid = SphereGrid::with_theta(128);
        for sh in [
            ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap(),
            ConvexSurface::ellipsoid(0.8, 0.8, 1.43983).unwrap(),
            ConvexSurface::ellipsoid_radial(1.0, 1.0, 3.0).unwrap(),
        ] {
            let i = ShapeFactor::new(sh.clone()).integral(&grid);
            assert!((i - sh.surface_area()).abs() / sh.surface_area() < 1e-3);
        }
        let cube = ConvexSurface::cube(1.0).unwrap();
        let i = ShapeFactor::new(cube).integral(&grid);
        assert!((i - 24.0).abs() < 0.02, "{i}");
    }

    #[test]
    fn infimum_values() {
        let e = ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap();
        assert_eq!(inf_mapped_intensity(&e, 5.0).unwrap(), 5.0);
        let cube = ConvexSurface::cube(1.0).unwrap();
        assert_eq!(inf_mapped_intensity(&cube, 7.0).unwrap(), 7.0);
        assert_eq!(inf_mapped_intensity(&ConvexSurface::sphere(), 3.0).unwrap(), 3.0);
        for sh in [e, cube, ConvexSurface::ellipsoid(0.5, 2.0, 1.0).unwrap()] {
            let inf = inf_mapped_intensity(&sh, 1.0).unwrap();
            for s in fibonacci_sphere(5000) {
                assert!(shape_factor(&sh, s).unwrap() >= inf - 1e-12);
            }
        }
        let f = IntensityField::mapped_constant(&ConvexSurface::ellipsoid_radial(1.0, 1.0, 3.0).unwrap(), 2.0).unwrap();
        assert!(f.report().inf_approximate);
        assert!((f.total() - 2.0 * ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap().surface_area()).abs() < 1e-9);
    }

    #[test]
    fn push_and_pull() {
        let e = ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap();
        assert!(pushforward_pattern(&e, &[]).unwrap().is_empty());
        let out = pushforward_pattern(&e, &[Vec3::new(0.0, 0.0, 3.0)]).unwrap();
        assert!((out[0] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        let back = pullback_pattern(&e, &out).unwrap();
        assert!((back[0] - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-15);
        let err = pushforward_pattern(&e, &[Vec3::new(0.0, 0.0, 3.0), Vec3::new(1.0, 1.0, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("point 1"));
        assert!(pullback_pattern(&e, &[Vec3::new(0.0, 0.0, 2.0)]).is_err());
        let _ = PI;
    }
}
