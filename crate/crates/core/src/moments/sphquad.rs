//! Quadrature over caps, cap intersections and discs of the unit sphere in
//! geodesic polar coordinates, plus symmetry-reduced outer rules.
//!
//! Within a cap around `x` a point is `exp_x(t, φ)`, with area element
//! `sin t dt dφ`. The part of that circle lying in a second cap `B(y, r)` is
//! an arc centred on the direction of `y` whose half-width is known in closed
//! form, so lens integrals only see smooth integrands. Sub-intervals whose
//! endpoints carry square-root behaviour use the substitution
//! `t = m + h sin(πu/2)`.

use crate::geometry::Vec3;
use crate::mapping::Symmetry;
use crate::quad::{default_sphere_nodes, gauss_legendre, SphereGrid};
use std::f64::consts::{FRAC_PI_2, PI};

/// Node counts for moment quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuad {
    /// θ nodes of the outer rule for symmetric fields.
    pub outer: usize,
    /// θ nodes of the outer rule for fields without symmetry.
    pub outer_full: usize,
    /// Nodes per radial sub-interval.
    pub radial: usize,
    /// Nodes in angle.
    pub angular: usize,
}

impl Default for MomentQuad {
    fn default() -> Self {
        MomentQuad { outer: default_sphere_nodes(), outer_full: 48, radial: 24, angular: 32 }
    }
}

impl MomentQuad {
    /// Smaller rule for the Ĥ variance and covariance, whose integrands nest
    /// a lens integral inside a double integral. They are smooth, so this
    /// already agrees with its doubling to about 1e-10 on smooth fields.
    pub fn pairs() -> Self {
        MomentQuad { outer: 16, outer_full: 12, radial: 12, angular: 16 }
    }

    pub fn doubled(&self) -> Self {
        MomentQuad {
            outer: 2 * self.outer,
            outer_full: 2 * self.outer_full,
            radial: 2 * self.radial,
            angular: 2 * self.angular,
        }
    }
}

pub(crate) fn frame(x: Vec3) -> (Vec3, Vec3) {
    let helper = if x.x1.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let e1 = x.cross(helper);
    let e1 = e1 * (1.0 / e1.norm());
    (e1, x.cross(e1))
}

#[inline]
pub(crate) fn exp_point(x: Vec3, e: (Vec3, Vec3), t: f64, phi: f64) -> Vec3 {
    let (s, c) = t.sin_cos();
    let (sp, cp) = phi.sin_cos();
    x * c + (e.0 * cp + e.1 * sp) * s
}

/// Gauss–Legendre nodes on `[a, b]`.
pub(crate) fn gl_nodes(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(n);
    let h = 0.5 * (b - a);
    gl.nodes.iter().zip(&gl.weights).map(|(u, w)| (a + h * (u + 1.0), w * h)).collect()
}

/// Nodes on `[a, b]` after `t = m + h sin(πu/2)`, which absorbs
/// square-root endpoint behaviour.
pub(crate) fn sine_nodes(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(n);
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    gl.nodes
        .iter()
        .zip(&gl.weights)
        .map(|(u, w)| {
            let (s, c) = (FRAC_PI_2 * u).sin_cos();
            (m + h * s, w * h * FRAC_PI_2 * c)
        })
        .collect()
}

/// Outer rule `(x, weight)` for `∫_{S²} φ(x) dx` when `φ` shares the
/// symmetry of the field.
pub(crate) fn outer_nodes(sym: Symmetry, q: &MomentQuad) -> Vec<(Vec3, f64)> {
    match sym {
        Symmetry::Constant(_) => vec![(Vec3::new(0.0, 0.0, 1.0), 4.0 * PI)],
        Symmetry::Axial(k) => SphereGrid::with_theta(q.outer)
            .rings()
            .into_iter()
            .map(|(z, w)| {
                let s = (1.0 - z * z).max(0.0).sqrt();
                let mut a = [0.0; 3];
                a[k] = z;
                a[(k + 1) % 3] = s;
                (Vec3::from_array(a), w)
            })
            .collect(),
        Symmetry::None => {
            let g = SphereGrid::with_theta(q.outer_full);
            g.points.into_iter().zip(g.weights).collect()
        }
    }
}

/// `∫_{B(x,r)} f` at every radius in the ascending list `rs`.
pub(crate) fn cap_integrals(f: &dyn Fn(Vec3) -> f64, x: Vec3, rs: &[f64], q: &MomentQuad) -> Vec<f64> {
    let e = frame(x);
    let dphi = 2.0 * PI / q.angular as f64;
    let mut out = Vec::with_capacity(rs.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &r in rs {
        let r = r.min(PI);
        if r > prev {
            // sub-interval order scales with its length
            let n = (((r - prev) / 0.02).ceil() as usize * 4).clamp(4, q.radial.max(4));
            for (t, wt) in gl_nodes(prev, r, n) {
                let mut ring = 0.0;
                for j in 0..q.angular {
                    ring += f(exp_point(x, e, t, (j as f64 + 0.5) * dphi));
                }
                acc += wt * t.sin() * ring * dphi;
            }
            prev = r;
        }
        out.push(acc);
    }
    out
}

pub(crate) fn cap_integral(f: &dyn Fn(Vec3) -> f64, x: Vec3, r: f64, q: &MomentQuad) -> f64 {
    cap_integrals(f, x, &[r], q)[0]
}

/// `∫_{B(x,r) ∩ B(y,r)} f`.
pub(crate) fn lens_integral(f: &dyn Fn(Vec3) -> f64, x: Vec3, y: Vec3, r: f64, q: &MomentQuad) -> f64 {
    let d = crate::geometry::great_circle(x, y);
    if d >= 2.0 * r {
        return 0.0;
    }
    if d < 1e-12 {
        return cap_integral(f, x, r, q);
    }
    let e = frame(x);
    let phi_y = (y.dot(e.1)).atan2(y.dot(e.0));
    let (cr, cd, sd) = (r.cos(), d.cos(), d.sin());
    let full = |a: f64, b: f64| -> f64 {
        let dphi = 2.0 * PI / q.angular as f64;
        let mut s = 0.0;
        for (t, wt) in gl_nodes(a, b, q.radial) {
            let mut ring = 0.0;
            for j in 0..q.angular {
                ring += f(exp_point(x, e, t, (j as f64 + 0.5) * dphi));
            }
            s += wt * t.sin() * ring * dphi;
        }
        s
    };
    let t_lo = (r - d).abs();
    let t_hi = r.min(2.0 * PI - r - d);
    let mut total = 0.0;
    if d < r && t_lo > 0.0 {
        total += full(0.0, t_lo);
    }
    if t_hi < r {
        total += full(t_hi, r);
    }
    if t_hi > t_lo {
        for (t, wt) in sine_nodes(t_lo, t_hi, q.radial) {
            let st = t.sin();
            let kappa = ((cr - t.cos() * cd) / (st * sd)).clamp(-1.0, 1.0);
            let w = kappa.acos();
            if w <= 0.0 {
                continue;
            }
            let mut arc = 0.0;
            for (p, wp) in sine_nodes(phi_y - w, phi_y + w, q.angular) {
                arc += wp * f(exp_point(x, e, t, p));
            }
            total += wt * st * arc;
        }
    }
    total
}

/// Nodes `(y, weight, D)` for `∫_{d(x,y) ∈ [a, b]} g(y) dy` in polar
/// coordinates around `x`.
pub(crate) fn annulus_nodes(x: Vec3, a: f64, b: f64, q: &MomentQuad) -> Vec<(Vec3, f64, f64)> {
    let e = frame(x);
    let dpsi = 2.0 * PI / q.angular as f64;
    let mut out = Vec::with_capacity(q.radial * q.angular);
    if b <= a {
        return out;
    }
    for (t, wt) in sine_nodes(a, b, q.radial) {
        for j in 0..q.angular {
            let psi = (j as f64 + 0.5) * dpsi;
            out.push((exp_point(x, e, t, psi), wt * t.sin() * dpsi, t));
        }
    }
    out
}

/// Area of the intersection of two caps of angular radius `r` whose centres
/// are `d` apart on the unit sphere.
pub fn cap_lens_area(r: f64, d: f64) -> f64 {
    let cap = 2.0 * PI * (1.0 - r.cos());
    if d >= 2.0 * r {
        return 0.0;
    }
    if d <= 1e-14 {
        return cap;
    }
    if d >= 2.0 * PI - 2.0 * r {
        // the caps cover the sphere
        return 2.0 * cap - 4.0 * PI;
    }
    let (cr, sr) = (r.cos(), r.sin());
    let (cd, sd) = (d.cos(), d.sin());
    let a1 = ((cr - cd * cr) / (sd * sr)).clamp(-1.0, 1.0).acos();
    let a2 = ((cd - cr * cr) / (sr * sr)).clamp(-1.0, 1.0).acos();
    (2.0 * PI - 4.0 * cr * a1 - 2.0 * a2).max(0.0)
}
