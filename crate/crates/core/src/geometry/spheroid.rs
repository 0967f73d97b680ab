//! Geodesics and geodesic balls on spheroids `(x² + y²)/a² + z²/c² = 1`.
//!
//! Points are parametrized by parametric latitude β and longitude λ,
//! `(a cosβ cosλ, a cosβ sinλ, c sinβ)`, with line element
//! `ds² = m(β)² dβ² + a² cos²β dλ²`, `m(β)² = a² sin²β + c² cos²β`.
//! A geodesic with Clairaut constant `h = a cosβ sin(azimuth)` oscillates
//! between latitudes ±β_t, `cosβ_t = h/a`. Substituting `sinβ = k sinθ`,
//! `k = sinβ_t`, it is traced by
//!
//! ```text
//! s(θ) = ∫ m dθ,   m(θ)² = c² + (a² − c²) k² sin²θ
//! λ(θ) = atan(cosβ_t tanθ) + h (c² − a²)/a² ∫ dθ/(m + a)
//! ```
//!
//! The inverse problem scans `h`, looking for sign changes of the longitude
//! mismatch on each of the four start/end branches, and keeps the shortest
//! root. Meridian and equatorial paths are added as explicit candidates.

use super::Vec3;
use crate::quad::{adaptive_gk, adaptive_gk1, gauss_legendre};
use crate::roots::brent;
use std::f64::consts::{FRAC_PI_2, PI};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone)]
pub struct Spheroid {
    a: f64,
    c: f64,
    axis: usize,
    quarter: f64,
}

impl Spheroid {
    /// Spheroid with equatorial radius `a`, polar semi-axis `c` along world
    /// axis `axis`.
    pub fn new(a: f64, c: f64, axis: usize) -> Self {
        let mut s = Spheroid { a, c, axis, quarter: 0.0 };
        s.quarter = s.meridian_arc(FRAC_PI_2);
        s
    }

    pub fn equatorial(&self) -> f64 {
        self.a
    }

    pub fn polar(&self) -> f64 {
        self.c
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Meridian length from the equator to a pole.
    pub fn quarter_meridian(&self) -> f64 {
        self.quarter
    }

    fn m(&self, beta: f64) -> f64 {
        let (s, c) = beta.sin_cos();
        (self.a * self.a * s * s + self.c * self.c * c * c).sqrt()
    }

    /// Meridian arc length `S(β) = ∫₀^β m`.
    pub fn meridian_arc(&self, beta: f64) -> f64 {
        let b = beta.clamp(-FRAC_PI_2, FRAC_PI_2);
        b.signum() * adaptive_gk1(0.0, b.abs(), 1e-14, |t| self.m(t))
    }

    /// Inverse of [`meridian_arc`](Self::meridian_arc).
    pub fn meridian_arc_inv(&self, s: f64) -> f64 {
        let q = self.quarter;
        if s >= q {
            return FRAC_PI_2;
        }
        if s <= -q {
            return -FRAC_PI_2;
        }
        let (mut lo, mut hi) = (-FRAC_PI_2, FRAC_PI_2);
        let mut b = s / q * FRAC_PI_2;
        for _ in 0..100 {
            let f = self.meridian_arc(b) - s;
            if f.abs() < 1e-14 * q.max(1.0) {
                break;
            }
            if f > 0.0 {
                hi = b;
            } else {
                lo = b;
            }
            let next = b - f / self.m(b);
            b = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        b
    }

    fn local(&self, p: Vec3) -> (f64, f64, f64) {
        (p[(self.axis + 1) % 3], p[(self.axis + 2) % 3], p[self.axis])
    }

    /// Parametric latitude and longitude of a surface point.
    pub fn to_latlon(&self, p: Vec3) -> (f64, f64) {
        let (x, y, z) = self.local(p);
        let beta = (z / self.c).atan2(x.hypot(y) / self.a);
        (beta, y.atan2(x))
    }

    pub fn from_latlon(&self, beta: f64, lambda: f64) -> Vec3 {
        let (sb, cb) = beta.sin_cos();
        let (sl, cl) = lambda.sin_cos();
        let loc = [self.a * cb * cl, self.a * cb * sl, self.c * sb];
        let mut w = [0.0; 3];
        w[(self.axis + 1) % 3] = loc[0];
        w[(self.axis + 2) % 3] = loc[1];
        w[self.axis] = loc[2];
        Vec3::from_array(w)
    }

    pub fn distance(&self, p: Vec3, q: Vec3) -> f64 {
        if p.dist(q) < 1e-15 * self.a.max(self.c) {
            return 0.0;
        }
        let (b1, l1) = self.to_latlon(p);
        let (b2, l2) = self.to_latlon(q);
        self.distance_latlon(b1, l1, b2, l2)
    }

    /// Shortest geodesic length between `(β1, λ1)` and `(β2, λ2)`.
    pub fn distance_latlon(&self, b1: f64, l1: f64, b2: f64, l2: f64) -> f64 {
        let mut dl = (l2 - l1).rem_euclid(TWO_PI);
        if dl > PI {
            dl = TWO_PI - dl;
        }
        let (c1, c2) = (b1.cos(), b2.cos());
        let s1 = self.meridian_arc(b1);
        let s2 = self.meridian_arc(b2);
        let ds = (s2 - s1).abs();
        if c1 < 1e-13 || c2 < 1e-13 {
            return ds;
        }
        if ds == 0.0 && dl == 0.0 {
            return 0.0;
        }
        let q = self.quarter;
        let mut best = (2.0 * q - s1 - s2).min(2.0 * q + s1 + s2);
        best = best.min(ds + self.a * c1.min(c2) * dl);
        if dl == 0.0 {
            best = best.min(ds);
        }
        if b1.abs() < 1e-15 && b2.abs() < 1e-15 {
            best = best.min(self.a * dl);
        }
        let sb = (b1.sin(), b2.sin());
        let hmax = self.a * c1.min(c2);
        for target in [dl, TWO_PI - dl] {
            if let Some(len) = self.scan(sb, hmax, target) {
                best = best.min(len);
            }
        }
        best
    }

    fn scan(&self, sb: (f64, f64), hmax: f64, target: f64) -> Option<f64> {
        const SMALL: [f64; 5] = [1e-9, 1e-7, 1e-5, 1e-3, 1e-2];
        const N: usize = 32;
        let mut psis: Vec<f64> = SMALL.to_vec();
        psis.extend((1..=N).map(|j| j as f64 * FRAC_PI_2 / N as f64));
        let evals: Vec<[(f64, f64); 4]> = psis.iter().map(|&p| self.family(hmax * p.sin(), sb)).collect();
        let mut best: Option<f64> = None;
        for br in 0..4 {
            for w in 0..psis.len() - 1 {
                let f0 = evals[w][br].0 - target;
                let f1 = evals[w + 1][br].0 - target;
                if f0 == 0.0 {
                    best = Some(best.map_or(evals[w][br].1, |b: f64| b.min(evals[w][br].1)));
                    continue;
                }
                if f0.signum() == f1.signum() {
                    continue;
                }
                let g = |psi: f64| self.family(hmax * psi.sin(), sb)[br].0 - target;
                if let Ok(root) = brent(psis[w], psis[w + 1], 1e-15, g) {
                    let fam = self.family(hmax * root.sin(), sb)[br];
                    if (fam.0 - target).abs() < 1e-9 {
                        best = Some(best.map_or(fam.1, |b: f64| b.min(fam.1)));
                    }
                }
            }
        }
        best
    }

    /// Longitude change and length on the four start/end branches for
    /// Clairaut constant `h`, with the end parameter taken within one period
    /// after the start.
    fn family(&self, h: f64, sb: (f64, f64)) -> [(f64, f64); 4] {
        let (a, c) = (self.a, self.c);
        let cb = (h / a).min(1.0);
        let k2 = (1.0 - cb * cb).max(0.0);
        let k = k2.sqrt();
        let coef = h * (c * c - a * a) / (a * a);
        let integrand = |t: f64| {
            let s = t.sin();
            let m = (c * c + (a * a - c * c) * k2 * s * s).sqrt();
            [m, 1.0 / (m + a)]
        };
        let integral = |t: f64| -> [f64; 2] {
            let v = adaptive_gk::<2>(0.0, t.abs(), 1e-14, 1e-14, integrand);
            [t.signum() * v[0], t.signum() * v[1]]
        };
        let qv = integral(FRAC_PI_2);
        let ends = [sb.0, sb.1].map(|s| {
            let t = if k > 0.0 { (s / k).clamp(-1.0, 1.0).asin() } else { 0.0 };
            let iv = integral(t);
            let at = (cb * t.sin()).atan2(t.cos());
            // (θ, s, λ) on the ascending and descending branch
            [
                (t, iv[0], at + coef * iv[1]),
                (PI - t, 2.0 * qv[0] - iv[0], PI - at + coef * (2.0 * qv[1] - iv[1])),
            ]
        });
        let period_s = 4.0 * qv[0];
        let period_l = TWO_PI + 4.0 * coef * qv[1];
        let mut out = [(0.0, 0.0); 4];
        for (i, st) in ends[0].iter().enumerate() {
            for (j, en) in ends[1].iter().enumerate() {
                let m = ((st.0 - en.0) / TWO_PI).ceil();
                let dl = en.2 + m * period_l - st.2;
                let ds = en.1 + m * period_s - st.1;
                out[2 * i + j] = (dl, ds);
            }
        }
        out
    }

    fn zone_area(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        TWO_PI * adaptive_gk1(lo, hi, 1e-14, |b| self.a * b.cos() * self.m(b))
    }

    /// Half-width in longitude of the ball around `(β0, 0)` on the parallel β.
    fn half_width(&self, beta0: f64, r: f64, beta: f64) -> f64 {
        if self.distance_latlon(beta0, 0.0, beta, PI) <= r {
            return PI;
        }
        let f = |l: f64| self.distance_latlon(beta0, 0.0, beta, l) - r;
        let f0 = f(0.0);
        if f0 >= 0.0 {
            return 0.0;
        }
        brent(0.0, PI, 1e-12, f).unwrap_or(0.0)
    }

    /// Area of the geodesic ball of radius `r` centred at latitude `beta0`.
    pub fn ball_area_at(&self, beta0: f64, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let q = self.quarter;
        let s0 = self.meridian_arc(beta0);
        let north_in = s0 + r >= q;
        let south_in = s0 - r <= -q;
        let b_hi = self.meridian_arc_inv(s0 + r);
        let b_lo = self.meridian_arc_inv(s0 - r);
        let full = |b: f64| self.distance_latlon(beta0, 0.0, b, PI) - r;
        let mut b_n = b_hi;
        if north_in {
            let lo = beta0.max(b_lo);
            b_n = if full(lo) <= 0.0 {
                lo
            } else {
                brent(lo, FRAC_PI_2, 1e-13, full).unwrap_or(FRAC_PI_2)
            };
        }
        let mut b_s = b_lo;
        if south_in {
            let hi = beta0.min(b_n);
            b_s = if full(hi) <= 0.0 {
                hi
            } else {
                brent(-FRAC_PI_2, hi, 1e-13, full).unwrap_or(-FRAC_PI_2)
            };
        }
        let mut area = self.zone_area(b_n, b_hi) + self.zone_area(b_lo, b_s);
        if b_n > b_s {
            let gl = gauss_legendre(24);
            let mid = 0.5 * (b_n + b_s);
            let half = 0.5 * (b_n - b_s);
            let mut acc = 0.0;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let phi = x * FRAC_PI_2;
                let beta = mid + half * phi.sin();
                let jac = half * phi.cos() * FRAC_PI_2;
                let lam = self.half_width(beta0, r, beta);
                acc += w * jac * 2.0 * lam * self.a * beta.cos() * self.m(beta);
            }
            area += acc;
        }
        area
    }

    /// Latitude quadrature `(weight, ball area)` with weights summing to the
    /// surface area; balls are evaluated at `2n` latitudes of one hemisphere.
    pub fn ball_table(&self, r: f64, n: usize) -> Vec<(f64, f64)> {
        use rayon::prelude::*;
        let q = self.quarter;
        let split = if q - r > 0.0 { self.meridian_arc_inv(q - r) } else { 0.0 };
        let gl = gauss_legendre(n);
        let mut nodes = Vec::new();
        for (lo, hi) in [(0.0, split), (split, FRAC_PI_2)] {
            if hi <= lo {
                continue;
            }
            let h = 0.5 * (hi - lo);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let b = lo + h * (x + 1.0);
                nodes.push((b, 2.0 * TWO_PI * self.a * b.cos() * self.m(b) * w * h));
            }
        }
        nodes.par_iter().map(|&(b, w)| (w, self.ball_area_at(b, r))).collect()
    }
}

/// Closed-form area of the spheroid with equatorial radius `a` and polar
/// semi-axis `c`.
pub fn spheroid_area(a: f64, c: f64) -> f64 {
    if (a - c).abs() <= 1e-12 * a.max(c) {
        return 4.0 * PI * a * a;
    }
    if c > a {
        let e = (1.0 - a * a / (c * c)).sqrt();
        2.0 * PI * a * a * (1.0 + c / (a * e) * e.asin())
    } else {
        let e = (1.0 - c * c / (a * a)).sqrt();
        2.0 * PI * a * a * (1.0 + (1.0 - e * e) / e * e.atanh())
    }
}

/// Polar semi-axis `c` giving a spheroid of equatorial radius `a` the
/// requested area.
pub fn polar_axis_for_area(a: f64, area: f64) -> crate::Result<f64> {
    if !(a > 0.0 && area > 0.0) {
        return crate::error::domain(format!("invalid spheroid request a={a}, area={area}"));
    }
    // area grows from 2πa² (flat disc) without bound in c
    if area <= 2.0 * PI * a * a {
        return crate::error::domain(format!("area {area} is below the flat-disc limit for a={a}"));
    }
    let (lo, hi) = if area > 4.0 * PI * a * a {
        let mut hi = 2.0 * a;
        while spheroid_area(a, hi) < area {
            hi *= 2.0;
        }
        (a, hi)
    } else {
        (1e-9 * a, a)
    };
    brent(lo, hi, 1e-14, |c| spheroid_area(a, c) - area)
}
