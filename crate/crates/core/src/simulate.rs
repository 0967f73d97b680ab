//! Poisson, Matérn I/II and Thomas simulators on a convex surface, plus the
//! expected-count formulas used to calibrate them.
//!
//! Every simulator is a pure function of its configuration and seed. Points
//! are drawn from a single [`Stream`](crate::rng::Stream) keyed by the seed,
//! so Matérn thinnings of the same seed share their underlying Poisson draw.

use crate::error::{domain, Error, Result};
use crate::geometry::{ConvexSurface, Spheroid, Vec3};
use crate::quad::adaptive_gk1;
use crate::rng::{stream, Stream};
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

const POISSON_TAG: u64 = 0x5053;
const STALL_LIMIT: u64 = 1_000_000;

/// A finite point set on a surface, with the shape descriptor and seed that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePattern {
    pub points: Vec<Vec3>,
    pub surface: String,
    pub seed: u64,
}

impl SurfacePattern {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternVariant {
    I,
    II,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternConfig {
    pub rho: f64,
    pub r: f64,
    #[serde(default = "one")]
    pub mark_rate: f64,
}

fn one() -> f64 {
    1.0
}

/// How the Thomas parameter `κ` sets the offspring bandwidth `σ²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBridge {
    /// `σ² = 1/κ`, the von Mises–Fisher concentration limit.
    #[default]
    Concentration,
    /// `σ² = κ`; `κ → ∞` spreads offspring uniformly.
    Bandwidth,
}

impl KappaBridge {
    pub fn sigma2(self, kappa: f64) -> f64 {
        match self {
            KappaBridge::Concentration => 1.0 / kappa,
            KappaBridge::Bandwidth => kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThomasConfig {
    pub rho_parent: f64,
    pub mean_offspring: f64,
    pub kappa: f64,
    #[serde(default)]
    pub bridge: KappaBridge,
}

/// Uniform point on `D` by rejection against the envelope `sup[i]` on each
/// gnomonic chart square. `cum` holds cumulative envelope masses, so a chart
/// is proposed in proportion to its envelope and accepted in proportion to
/// its area.
pub(crate) fn uniform_point(surface: &ConvexSurface, cum: &[f64; 6], sup: &[f64; 6], rng: &mut Stream) -> Vec3 {
    let total = cum[5];
    loop {
        let u: f64 = rng.gen::<f64>() * total;
        let ci = cum.iter().position(|&c| u < c).unwrap_or(5);
        let chart = &surface.charts()[ci];
        let a = rng.gen::<f64>() * 2.0 - 1.0;
        let b = rng.gen::<f64>() * 2.0 - 1.0;
        let (p, w) = surface.gnomonic(chart, a, b);
        if rng.gen::<f64>() * sup[ci] < w {
            return p;
        }
    }
}

struct Sampler<'a> {
    surface: &'a ConvexSurface,
    cum: [f64; 6],
    sup: [f64; 6],
}

impl<'a> Sampler<'a> {
    fn new(surface: &'a ConvexSurface) -> Self {
        let sup = surface.sampler_sup();
        let mut cum = [0.0; 6];
        let mut acc = 0.0;
        for i in 0..6 {
            acc += sup[i];
            cum[i] = acc;
        }
        Sampler { surface, cum, sup }
    }

    fn point(&self, rng: &mut Stream) -> Vec3 {
        uniform_point(self.surface, &self.cum, &self.sup, rng)
    }

    fn poisson(&self, rho: f64, rng: &mut Stream) -> Vec<Vec3> {
        let n = poisson_count(rho * self.surface.surface_area(), rng);
        (0..n).map(|_| self.point(rng)).collect()
    }
}

pub(crate) fn poisson_count(mean: f64, rng: &mut Stream) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and nonnegative, got {v}"))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if (0.0..=PI).contains(&r) {
        Ok(())
    } else {
        domain(format!("hardcore distance {r} must lie in [0, π]"))
    }
}

/// Homogeneous Poisson process of intensity `rho` on the surface.
pub fn sim_poisson(surface: &ConvexSurface, rho: f64, seed: u64) -> Result<SurfacePattern> {
    check_rate("rho", rho)?;
    let mut rng = stream(seed, &[POISSON_TAG]);
    let points = Sampler::new(surface).poisson(rho, &mut rng);
    Ok(SurfacePattern { points, surface: surface.descriptor(), seed })
}

/// Index pairs `(i, j)`, `i < j`, at geodesic distance below `r`. A 3D cell
/// hash on chord length prunes candidates (chord ≤ geodesic).
pub(crate) fn close_pairs(surface: &ConvexSurface, pts: &[Vec3], r: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if r <= 0.0 || pts.len() < 2 {
        return out;
    }
    let cell = r;
    let key = |p: &Vec3| [(p.x1 / cell).floor() as i64, (p.x2 / cell).floor() as i64, (p.x3 / cell).floor() as i64];
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    for (i, p) in pts.iter().enumerate() {
        let k = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in list {
                            if j > i && surface.within(*p, pts[j], r) {
                                out.push((i, j));
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Matérn type I: delete every event with another event closer than `r`.
pub fn sim_matern1(surface: &ConvexSurface, rho: f64, r: f64, seed: u64) -> Result<SurfacePattern> {
    check_rate("rho", rho)?;
    check_radius(r)?;
    let base = sim_poisson(surface, rho, seed)?;
    let mut keep = vec![true; base.points.len()];
    for (i, j) in close_pairs(surface, &base.points, r) {
        keep[i] = false;
        keep[j] = false;
    }
    let points = base.points.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
    Ok(SurfacePattern { points, ..base })
}

/// Matérn type II: exponential marks; an event survives iff no event closer
/// than `r` carries a smaller mark.
pub fn sim_matern2(surface: &ConvexSurface, rho: f64, r: f64, mark_rate: f64, seed: u64) -> Result<SurfacePattern> {
    check_rate("rho", rho)?;
    check_radius(r)?;
    if !(mark_rate > 0.0 && mark_rate.is_finite()) {
        return domain(format!("mark rate must be positive, got {mark_rate}"));
    }
    let mut rng = stream(seed, &[POISSON_TAG]);
    let pts = Sampler::new(surface).poisson(rho, &mut rng);
    let exp = Exp::new(mark_rate).expect("positive rate");
    let marks: Vec<f64> = (0..pts.len()).map(|_| exp.sample(&mut rng)).collect();
    let mut keep = vec![true; pts.len()];
    for (i, j) in close_pairs(surface, &pts, r) {
        if marks[j] < marks[i] {
            keep[i] = false;
        } else {
            keep[j] = false;
        }
    }
    let points = pts.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
    Ok(SurfacePattern { points, surface: surface.descriptor(), seed })
}

/// Thomas-type cluster process: Poisson parents, Poisson(`mean_offspring`)
/// offspring per parent with density `∝ exp(-d²/2σ²)` around the parent.
/// Only offspring are returned.
pub fn sim_thomas(surface: &ConvexSurface, cfg: &ThomasConfig, seed: u64) -> Result<SurfacePattern> {
    check_rate("rho_parent", cfg.rho_parent)?;
    check_rate("mean_offspring", cfg.mean_offspring)?;
    if !(cfg.kappa > 0.0) {
        return domain(format!("kappa must be positive (∞ allowed), got {}", cfg.kappa));
    }
    let sigma2 = cfg.bridge.sigma2(cfg.kappa);
    let sampler = Sampler::new(surface);
    let mut rng = stream(seed, &[POISSON_TAG]);
    let parents = sampler.poisson(cfg.rho_parent, &mut rng);
    let mut points = Vec::new();
    for parent in &parents {
        let n = poisson_count(cfg.mean_offspring, &mut rng);
        for _ in 0..n {
            points.push(offspring(surface, &sampler, *parent, sigma2, &mut rng)?);
        }
    }
    Ok(SurfacePattern { points, surface: surface.descriptor(), seed })
}

fn offspring(surface: &ConvexSurface, sampler: &Sampler, parent: Vec3, sigma2: f64, rng: &mut Stream) -> Result<Vec3> {
    let sigma = sigma2.sqrt();
    if sigma2 == 0.0 {
        return Ok(parent);
    }
    if sigma2.is_infinite() {
        return Ok(sampler.point(rng));
    }
    if let Some(radius) = surface.sphere_radius() {
        // tangent-plane Gaussian corrected by the exponential-map area factor
        let n = parent * (1.0 / parent.norm());
        let helper = if n.x1.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        let e1 = n.cross(helper).normalized()?;
        let e2 = n.cross(e1);
        for _ in 0..STALL_LIMIT {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let t = sigma * (z1 * z1 + z2 * z2).sqrt();
            let theta = t / radius;
            if theta >= PI {
                continue;
            }
            let ratio = if theta < 1e-8 { 1.0 } else { theta.sin() / theta };
            if rng.gen::<f64>() >= ratio {
                continue;
            }
            if t == 0.0 {
                return Ok(parent);
            }
            let dir = (e1 * z1 + e2 * z2) * (1.0 / (z1 * z1 + z2 * z2).sqrt());
            return Ok((n * theta.cos() + dir * theta.sin()) * radius);
        }
    } else {
        for _ in 0..STALL_LIMIT {
            let x = sampler.point(rng);
            let u: f64 = rng.gen();
            // accept iff exp(-d²/2σ²) > u  ⇔  d < sqrt(-2σ² ln u)
            let thr = (-2.0 * sigma2 * u.ln()).sqrt();
            if surface.within(parent, x, thr) {
                return Ok(x);
            }
        }
    }
    Err(Error::Stall(format!(
        "offspring rejection sampler accepted nothing in {STALL_LIMIT} proposals (σ² = {sigma2}); use a larger σ"
    )))
}

/// Expected number of events of a Matérn process of underlying intensity
/// `rho` and hardcore distance `r`.
pub fn expected_count_matern(surface: &ConvexSurface, rho: f64, r: f64, variant: MaternVariant) -> Result<f64> {
    check_rate("rho", rho)?;
    check_radius(r)?;
    if r == 0.0 {
        return Ok(rho * surface.surface_area());
    }
    let table = surface.ball_quadrature(r);
    Ok(table
        .iter()
        .map(|&(w, a)| match variant {
            MaternVariant::I => w * rho * (-rho * a).exp(),
            MaternVariant::II => w * retention_mass(rho, a),
        })
        .sum())
}

/// `(1 - e^{-ρa}) / a`, continuous at `a = 0`.
fn retention_mass(rho: f64, a: f64) -> f64 {
    let x = rho * a;
    if x < 1e-8 {
        rho * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / a
    }
}

/// Supremum over `ρ` of the expected Matérn II count, `∫ 1/|B_D(x,R)|`.
/// Infinite at `R = 0`.
pub fn max_expected_matern2(surface: &ConvexSurface, r: f64) -> Result<f64> {
    check_radius(r)?;
    if r == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(surface.ball_quadrature(r).iter().map(|&(w, a)| w / a).sum())
}

/// Underlying Poisson intensity giving a Matérn II process `mu_target`
/// expected events.
pub fn solve_rho_matern2(surface: &ConvexSurface, mu_target: f64, r: f64) -> Result<f64> {
    check_radius(r)?;
    if !(mu_target >= 0.0 && mu_target.is_finite()) {
        return domain(format!("target mean {mu_target} must be finite and nonnegative"));
    }
    if mu_target == 0.0 {
        return Ok(0.0);
    }
    let cap = max_expected_matern2(surface, r)?;
    if mu_target > cap * (1.0 - 1e-6) {
        return Err(Error::Infeasible(format!(
            "a Matérn II process with R = {r} has at most {cap:.6} expected events on this surface; \
             target {mu_target} is unattainable"
        )));
    }
    let f = |rho: f64| expected_count_matern(surface, rho, r, MaternVariant::II).map(|m| m - mu_target);
    let mut lo = 0.0;
    let mut hi = mu_target / surface.surface_area();
    while f(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Internal("no bracket for Matérn II intensity".into()));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() < 1e-7 * mu_target {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Great-circle equivalent of a hardcore distance `r` measured along the
/// meridian of a spheroid with equatorial radius `a` and polar semi-axis `c`,
/// starting at the equator.
pub fn effective_hardcore(a: f64, c: f64, r: f64) -> Result<f64> {
    if !(a > 0.0 && c >= a && c.is_finite()) {
        return domain(format!("need 0 < a ≤ c, got a={a}, c={c}"));
    }
    if !(r >= 0.0) {
        return domain(format!("hardcore distance {r} must be nonnegative"));
    }
    let arc = |t: f64| adaptive_gk1(t, FRAC_PI_2, 1e-14, |s| (c * c * s.sin().powi(2) + a * a * s.cos().powi(2)).sqrt());
    let quarter = arc(0.0);
    if r >= quarter {
        return domain(format!("hardcore distance {r} exceeds the quarter meridian {quarter}"));
    }
    // arc(t) decreases from `quarter` at t=0 to 0 at t=π/2
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if arc(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(t.sin().clamp(-1.0, 1.0).acos())
}

/// Same quantity through the spheroid's meridian arc inverse.
pub fn effective_hardcore_by_arc(a: f64, c: f64, r: f64) -> f64 {
    Spheroid::new(a, c, 2).meridian_arc_inv(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_cap_area;

    fn min_pair(surface: &ConvexSurface, pts: &[Vec3]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..pts.len() {
            for j in 0..i {
                m = m.min(surface.geodesic_distance(pts[i], pts[j]).unwrap());
            }
        }
        m
    }

    #[test]
    fn poisson_empty_and_on_surface() {
        let s = ConvexSurface::cube(1.0).unwrap();
        assert!(sim_poisson(&s, 0.0, 1).unwrap().is_empty());
        let p = sim_poisson(&s, 5.0, 2).unwrap();
        assert!(!p.is_empty());
        assert!(p.points.iter().all(|x| s.on_surface(*x)));
        assert_eq!(p, sim_poisson(&s, 5.0, 2).unwrap());
    }

    #[test]
    fn matern_zero_radius_is_poisson() {
        let s = ConvexSurface::sphere();
        let base = sim_poisson(&s, 10.0, 7).unwrap();
        assert_eq!(sim_matern1(&s, 10.0, 0.0, 7).unwrap().points, base.points);
        assert_eq!(sim_matern2(&s, 10.0, 0.0, 1.0, 7).unwrap().points, base.points);
    }

    #[test]
    fn matern_hardcore_and_nesting() {
        let s = ConvexSurface::ellipsoid(0.8, 0.8, 1.43983).unwrap();
        for seed in 0..5 {
            let base = sim_poisson(&s, 10.0, seed).unwrap();
            let m1 = sim_matern1(&s, 10.0, 0.2, seed).unwrap();
            let m2 = sim_matern2(&s, 10.0, 0.2, 1.0, seed).unwrap();
            assert!(min_pair(&s, &m1.points) >= 0.2);
            assert!(min_pair(&s, &m2.points) >= 0.2);
            assert!(m1.points.iter().all(|p| m2.points.contains(p)));
            assert!(m2.points.iter().all(|p| base.points.contains(p)));
        }
    }

    #[test]
    fn close_pairs_match_brute_force() {
        let s = ConvexSurface::sphere();
        let p = sim_poisson(&s, 10.0, 3).unwrap().points;
        let mut brute = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                if s.geodesic_distance(p[i], p[j]).unwrap() < 0.3 {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(close_pairs(&s, &p, 0.3), brute);
    }

    #[test]
    fn sphere_expected_counts() {
        let s = ConvexSurface::sphere();
        let c = sphere_cap_area(0.2).unwrap();
        let e1 = expected_count_matern(&s, 10.0, 0.2, MaternVariant::I).unwrap();
        assert!((e1 - 4.0 * PI * 10.0 * (-10.0 * c).exp()).abs() < 1e-9);
        assert!((expected_count_matern(&s, 3.0, 0.0, MaternVariant::II).unwrap() - 12.0 * PI).abs() < 1e-12);
        assert!((max_expected_matern2(&s, PI).unwrap() - 1.0).abs() < 1e-12);
        assert!((max_expected_matern2(&s, 0.3).unwrap() - 2.0 / (1.0 - 0.3f64.cos())).abs() < 1e-9);
        assert_eq!(max_expected_matern2(&s, 0.0).unwrap(), f64::INFINITY);
        let rho = solve_rho_matern2(&s, 100.0, 0.1).unwrap();
        let c = sphere_cap_area(0.1).unwrap();
        let oracle = -(1.0 - 100.0 * c / (4.0 * PI)).ln() / c;
        assert!((rho - oracle).abs() / oracle < 1e-5);
        assert!(matches!(solve_rho_matern2(&s, 1e4, 0.1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn effective_hardcore_values() {
        assert!((effective_hardcore(1.0, 1.0, 0.2).unwrap() - 0.2).abs() < 1e-9);
        let v = effective_hardcore(0.4, 3.1602, 0.2).unwrap();
        assert!((v - 0.0633).abs() < 5e-4, "{v}");
        let v = effective_hardcore(0.8, 1.43983, 0.2).unwrap();
        assert!((v - effective_hardcore_by_arc(0.8, 1.43983, 0.2)).abs() < 1e-8);
        assert!(effective_hardcore(0.4, 3.1602, 10.0).is_err());
    }

    #[test]
    fn thomas_collapses_at_large_kappa() {
        let s = ConvexSurface::sphere();
        let cfg = ThomasConfig { rho_parent: 0.5, mean_offspring: 5.0, kappa: 1e8, bridge: KappaBridge::Concentration };
        let p = sim_thomas(&s, &cfg, 4).unwrap();
        let mut rng = stream(4, &[POISSON_TAG]);
        let parents = Sampler::new(&s).poisson(0.5, &mut rng);
        for x in &p.points {
            let d = parents.iter().map(|q| great(*x, *q)).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-3);
        }
    }

    fn great(p: Vec3, q: Vec3) -> f64 {
        crate::geometry::great_circle(p, q)
    }

    #[test]
    fn prolate_polar_band_has_its_area_share() {
        // share of surface area with |z| > c/2 on the axis-scaled prolate
        let (a, c) = (0.8, 1.439_812_6);
        let surface = ConvexSurface::ellipsoid(a, a, c).unwrap();
        let band = 4.0 * PI * adaptive_gk1(0.5, 1.0, 1e-12, |z| {
            a * a * c * ((1.0 - z * z) / (a * a) + z * z / (c * c)).sqrt()
        }) / surface.surface_area();
        let mut rng = stream(3, &[9]);
        let sampler = Sampler::new(&surface);
        let n = 200_000;
        let hits = (0..n).filter(|_| sampler.point(&mut rng).x3.abs() > 0.5 * c).count() as f64;
        let se = (band * (1.0 - band) / n as f64).sqrt();
        assert!((hits / n as f64 - band).abs() < 4.0 * se, "{} vs {band}", hits / n as f64);
    }
}
