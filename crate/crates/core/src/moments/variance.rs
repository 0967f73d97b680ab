//! Variances of K̂, F̂, Ĥ and the covariance of `1 − Ĥ` and `1 − F̂` under a
//! Poisson process on S² with known intensity.
//!
//! Every quantity has a closed-form route for constant fields and a
//! quadrature route otherwise. The Ĥ terms condition on `N` and sum the
//! Poisson series in closed form through `Ei`; the convention `Ĥ = 0` for an
//! empty pattern contributes an atom of mass `e^{-μ}` at `1 − Ĥ = 1`.

use super::ei::{ei_tail, expint_ei_scaled, EULER_GAMMA};
use super::sphquad::{annulus_nodes, cap_integral, cap_integrals, cap_lens_area, lens_integral, outer_nodes, sine_nodes, MomentQuad};
use crate::error::{domain, Result};
use crate::geometry::{great_circle, Vec3};
use crate::mapping::IntensityField;
use crate::summaries::GridP;
use rayon::prelude::*;
use std::f64::consts::PI;

const SERIES_SWITCH: f64 = 40.0;

pub(crate) fn check_r(r: f64) -> Result<()> {
    if (0.0..=PI).contains(&r) {
        Ok(())
    } else {
        domain(format!("radius {r} must lie in [0, π]"))
    }
}

fn check_rho_bar(field: &IntensityField, rho_bar: f64) -> Result<()> {
    if !(rho_bar > 0.0) {
        return domain(format!("rho_bar must be positive, got {rho_bar}"));
    }
    if rho_bar > field.inf_value() * (1.0 + 1e-12) {
        return domain(format!("rho_bar {rho_bar} exceeds the field infimum {}", field.inf_value()));
    }
    Ok(())
}

fn cap(r: f64) -> f64 {
    2.0 * PI * (1.0 - r.cos())
}

/// `Σ_{n≥2} xⁿ (n−1)/(n·n!) = eˣ − 1 − Ei(x) + γ + ln x`.
fn pair_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = 0.0;
    let mut n = 2.0;
    loop {
        term *= x / n;
        let add = term * (n - 1.0) / n;
        sum += add;
        if add <= 1e-17 * sum || sum == 0.0 && term == 0.0 {
            return sum;
        }
        n += 1.0;
    }
}

/// `e^{-μ}/A² (e^{μA} − 1 − Ei(μA) + γ + ln μA)`.
fn g_pairs(mu: f64, a: f64) -> f64 {
    let x = mu * a;
    if x < 1e-12 {
        return (-mu).exp() * mu * mu / 4.0;
    }
    if x <= SERIES_SWITCH {
        (pair_series(x).ln() - mu).exp() / (a * a)
    } else {
        let sc = expint_ei_scaled(x).expect("positive argument");
        ((x - mu).exp() * (1.0 - sc) + (-mu).exp() * (EULER_GAMMA + x.ln() - 1.0)) / (a * a)
    }
}

/// `e^{-μ}/A (Ei(μA) − γ − ln μA)`.
fn g_single(mu: f64, a: f64) -> f64 {
    let x = mu * a;
    if x < 1e-12 {
        return (-mu).exp() * mu;
    }
    if x <= SERIES_SWITCH {
        (ei_tail(x).ln() - mu).exp() / a
    } else {
        let sc = expint_ei_scaled(x).expect("positive argument");
        ((x - mu).exp() * sc - (-mu).exp() * (EULER_GAMMA + x.ln())) / a
    }
}

/// `e^{-μ}(e^{μA} − 1)/A`.
fn g_cross(mu: f64, a: f64) -> f64 {
    let x = mu * a;
    if x.abs() < 1e-12 {
        (-mu).exp() * mu
    } else if x < 700.0 {
        (-mu).exp() * x.exp_m1() / a
    } else {
        ((x - mu).exp() - (-mu).exp()) / a
    }
}

/// `E[1 − Ĥ]` including the empty-pattern atom.
pub(crate) fn mean_one_minus_h(rho_bar: f64, mu: f64, r: f64) -> f64 {
    let q = 1.0 - rho_bar * cap(r) / mu;
    (-mu).exp() + g_cross(mu, q)
}

/// `Var K̂(r) = (1/8π²) ∬ 1[d ≤ r]/(ρρ) + (1 − cos r)² ∫ 1/ρ`.
pub fn var_khat(field: &IntensityField, r: f64) -> Result<f64> {
    var_khat_with(field, r, &MomentQuad::default())
}

pub fn var_khat_with(field: &IntensityField, r: f64, q: &MomentQuad) -> Result<f64> {
    check_r(r)?;
    if let Some(rho) = field.homogeneous() {
        let omc = 1.0 - r.cos();
        return Ok(omc / (rho * rho) + 4.0 * PI * omc * omc / rho);
    }
    let inv = |p: Vec3| 1.0 / field.eval(p);
    let nodes = outer_nodes(field.symmetry(), q);
    let (pair, single) = nodes
        .par_iter()
        .map(|(x, w)| (w * inv(*x) * cap_integral(&inv, *x, r, q), w * inv(*x)))
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let omc = 1.0 - r.cos();
    Ok(pair / (8.0 * PI * PI) + omc * omc * single)
}

/// `Var F̂(r) = e^{−2ρ̄c}/|P|² Σ_p Σ_p′ exp(ρ̄² ∫_{B_p ∩ B_p′} 1/ρ) − e^{−2ρ̄c}`.
pub fn var_fhat(field: &IntensityField, rho_bar: f64, p: &GridP, r: f64) -> Result<f64> {
    var_fhat_with(field, rho_bar, p, r, &MomentQuad::default())
}

pub fn var_fhat_with(field: &IntensityField, rho_bar: f64, p: &GridP, r: f64, q: &MomentQuad) -> Result<f64> {
    check_r(r)?;
    check_rho_bar(field, rho_bar)?;
    if p.is_empty() {
        return domain("reference grid P is empty");
    }
    let c = cap(r);
    let homog = field.homogeneous();
    let inv = |x: Vec3| 1.0 / field.eval(x);
    let lens = |a: Vec3, b: Vec3| match homog {
        Some(rho) => cap_lens_area(r, great_circle(a, b)) / rho,
        None => lens_integral(&inv, a, b, r, q),
    };
    let pts = &p.points;
    let n = pts.len();
    // Σ_p Σ_p′ (exp(ρ̄² L) − 1), summed in a fixed order
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = (rho_bar * rho_bar * lens(pts[i], pts[i])).exp_m1();
            for j in i + 1..n {
                if great_circle(pts[i], pts[j]) < 2.0 * r {
                    s += 2.0 * (rho_bar * rho_bar * lens(pts[i], pts[j])).exp_m1();
                }
            }
            s
        })
        .collect();
    let excess: f64 = rows.iter().sum();
    Ok(((-2.0 * rho_bar * c).exp() * excess / (n * n) as f64).max(0.0))
}

/// Variance of Ĥ(r).
pub fn var_hhat(field: &IntensityField, rho_bar: f64, r: f64) -> Result<f64> {
    var_hhat_with(field, rho_bar, r, &MomentQuad::pairs())
}

pub fn var_hhat_with(field: &IntensityField, rho_bar: f64, r: f64, q: &MomentQuad) -> Result<f64> {
    check_r(r)?;
    check_rho_bar(field, rho_bar)?;
    let mu = field.total();
    let c = cap(r);
    let a0 = 1.0 - 2.0 * rho_bar * c / mu;
    let rb2 = rho_bar * rho_bar / mu;
    let second = match field.homogeneous() {
        Some(rho) => {
            // pair term as a function of the separation D only
            let a1 = |d: f64| a0 + rb2 * cap_lens_area(r, d) / rho;
            let mut pairs = 0.0;
            let top = (2.0 * r).min(PI);
            for (lo, hi, wgt) in [(0.0, r.min(PI), (rho - rho_bar).powi(2)), (r.min(PI), top, rho * rho)] {
                for (d, w) in sine_nodes(lo, hi, 4 * q.radial) {
                    pairs += w * d.sin() * wgt * g_pairs(mu, a1(d));
                }
            }
            if top < PI {
                pairs += rho * rho * g_pairs(mu, a0) * (1.0 + top.cos());
            }
            let pairs = pairs * 8.0 * PI * PI / (mu * mu);
            let a2 = a0 + rb2 * c / rho;
            pairs + g_single(mu, a2)
        }
        None => {
            let inv = |x: Vec3| 1.0 / field.eval(x);
            let nodes = outer_nodes(field.symmetry(), q);
            let top = (2.0 * r).min(PI);
            let ga0 = if top < PI { g_pairs(mu, a0) } else { 0.0 };
            let (pairs, single) = nodes
                .par_iter()
                .map(|(x, wx)| {
                    let rx = field.eval(*x);
                    let mut pairs = 0.0;
                    for (lo, hi) in [(0.0, r), (r, top)] {
                        for (y, wy, d) in annulus_nodes(*x, lo, hi, q) {
                            let ry = field.eval(y);
                            let ind = if d <= r { rho_bar } else { 0.0 };
                            let a1 = a0 + rb2 * lens_integral(&inv, *x, y, r, q);
                            pairs += wy * ((rx - ind) * (ry - ind) * g_pairs(mu, a1) - rx * ry * ga0);
                        }
                    }
                    let a2 = a0 + rb2 * cap_integral(&inv, *x, r, q);
                    (wx * pairs, wx * rx * g_single(mu, a2))
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            ga0 + pairs / (mu * mu) + single / mu
        }
    };
    let mean = mean_one_minus_h(rho_bar, mu, r);
    Ok(((-mu).exp() + second - mean * mean).max(0.0))
}

/// `Cov(1 − Ĥ(r), 1 − F̂(r))`.
pub fn cov_hf(field: &IntensityField, rho_bar: f64, p: &GridP, r: f64) -> Result<f64> {
    cov_hf_with(field, rho_bar, p, r, &MomentQuad::pairs())
}

pub fn cov_hf_with(field: &IntensityField, rho_bar: f64, p: &GridP, r: f64, q: &MomentQuad) -> Result<f64> {
    check_r(r)?;
    check_rho_bar(field, rho_bar)?;
    if p.is_empty() {
        return domain("reference grid P is empty");
    }
    let mu = field.total();
    let c = cap(r);
    let a0 = 1.0 - 2.0 * rho_bar * c / mu;
    let rb2 = rho_bar * rho_bar / mu;
    let top = (2.0 * r).min(PI);
    // A₀ is the value for pairs farther apart than 2r, if any
    let h0 = if top < PI { g_cross(mu, a0) } else { 0.0 };
    let joint = match field.homogeneous() {
        Some(rho) => {
            let a = |d: f64| a0 + rb2 * cap_lens_area(r, d) / rho;
            let mut s = 0.0;
            for (lo, hi) in [(0.0, r), (r, top)] {
                for (d, w) in sine_nodes(lo, hi, 4 * q.radial) {
                    let ind = if d <= r { rho_bar } else { 0.0 };
                    s += w * d.sin() * ((rho - ind) * g_cross(mu, a(d)) - rho * h0);
                }
            }
            h0 + 2.0 * PI * s / mu
        }
        None => {
            let inv = |x: Vec3| 1.0 / field.eval(x);
            let per_p: Vec<f64> = p
                .points
                .par_iter()
                .map(|pp| {
                    let mut s = 0.0;
                    for (lo, hi) in [(0.0, r), (r, top)] {
                        for (x, wx, d) in annulus_nodes(*pp, lo, hi, q) {
                            let rx = field.eval(x);
                            let ind = if d <= r { rho_bar } else { 0.0 };
                            let a = a0 + rb2 * lens_integral(&inv, x, *pp, r, q);
                            s += wx * ((rx - ind) * g_cross(mu, a) - rx * h0);
                        }
                    }
                    h0 + s / mu
                })
                .collect();
            per_p.iter().sum::<f64>() / p.len() as f64
        }
    };
    let mean_x = mean_one_minus_h(rho_bar, mu, r);
    let mean_y = (-rho_bar * c).exp();
    Ok((-mu).exp() + joint - mean_x * mean_y)
}

/// `Var(Ĥ)` at two quadrature resolutions; the second element is false when
/// they differ by more than 1e-3 relative.
pub fn var_hhat_checked(field: &IntensityField, rho_bar: f64, r: f64) -> Result<(f64, bool)> {
    let q = MomentQuad::pairs();
    let a = var_hhat_with(field, rho_bar, r, &q)?;
    if field.homogeneous().is_some() {
        return Ok((a, true));
    }
    let b = var_hhat_with(field, rho_bar, r, &q.doubled())?;
    Ok((b, stable(a, b)))
}

pub fn cov_hf_checked(field: &IntensityField, rho_bar: f64, p: &GridP, r: f64) -> Result<(f64, bool)> {
    let q = MomentQuad::pairs();
    let a = cov_hf_with(field, rho_bar, p, r, &q)?;
    if field.homogeneous().is_some() {
        return Ok((a, true));
    }
    let b = cov_hf_with(field, rho_bar, p, r, &q.doubled())?;
    Ok((b, stable(a, b)))
}

pub(crate) fn stable(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-3 * a.abs().max(b.abs()).max(1e-300)
}

/// `∫_{B(x, r)} f` for each ascending radius, integrated over the outer rule:
/// returns `∬ 1[d ≤ r_k] w(x) f(y)` for every `r_k`.
pub(crate) fn pair_integrals(
    weight: &(dyn Fn(Vec3) -> f64 + Sync),
    f: &(dyn Fn(Vec3) -> f64 + Sync),
    sym: crate::mapping::Symmetry,
    rs: &[f64],
    q: &MomentQuad,
) -> Vec<f64> {
    let nodes = outer_nodes(sym, q);
    nodes
        .par_iter()
        .map(|(x, w)| {
            let wx = w * weight(*x);
            cap_integrals(&|y| f(y), *x, rs, q).into_iter().map(|v| v * wx).collect::<Vec<f64>>()
        })
        .reduce(|| vec![0.0; rs.len()], |mut a, b| {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
            a
        })
}
