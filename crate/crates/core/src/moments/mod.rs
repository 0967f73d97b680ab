//! Moments of the summary-function estimators under Poisson processes.

mod ei;
mod sphquad;
mod variance;

pub use ei::{expint_ei, expint_ei_branches, expint_ei_scaled, EULER_GAMMA};
pub use sphquad::{cap_lens_area, MomentQuad};
pub use variance::{
    cov_hf, cov_hf_checked, cov_hf_with, var_fhat, var_fhat_with, var_hhat, var_hhat_checked, var_hhat_with,
    var_khat, var_khat_with,
};

use crate::error::{domain, Result};
use crate::geometry::ConvexSurface;
use crate::mapping::{IntensityField, ShapeFactor};
use crate::summaries::GridP;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use variance::check_r;

/// How a reported moment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMethod {
    ClosedForm,
    Quadrature,
    PlugIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    pub method: MomentMethod,
    /// Set for Taylor approximations.
    pub approximate: bool,
    /// False when a quadrature changed by more than 1e-3 on doubling.
    pub converged: bool,
}

/// `(E F̂(r), E Ĥ(r), E K̂(r))` for a Poisson process with infimum intensity
/// `rho_bar` and total mass `mu_total`.
///
/// `E Ĥ` is the exact expectation under the convention `Ĥ = 0` for an empty
/// pattern. It sits `e^{−μ}` below the ratio form
/// `1 − (e^{−ρ̄c} − e^{−μ})/(1 − ρ̄c/μ)`.
pub fn poisson_means(rho_bar: f64, mu_total: f64, r: f64) -> Result<(f64, f64, f64)> {
    check_r(r)?;
    if !(rho_bar > 0.0) {
        return domain(format!("rho_bar must be positive, got {rho_bar}"));
    }
    if mu_total < 4.0 * PI * rho_bar * (1.0 - 1e-12) {
        return domain(format!("mu_total {mu_total} is below 4π·rho_bar"));
    }
    let c = 2.0 * PI * (1.0 - r.cos());
    let ef = -(-rho_bar * c).exp_m1();
    let eh = 1.0 - variance::mean_one_minus_h(rho_bar, mu_total, r);
    Ok((ef, eh, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBiasBound {
    /// `e^{−μ}`.
    pub bound: f64,
    /// `e^{−4πρ̄}`, which dominates `bound`.
    pub loose: f64,
}

pub fn hbias_bound(mu_total: f64, rho_bar: f64) -> HBiasBound {
    HBiasBound { bound: (-mu_total).exp(), loose: (-4.0 * PI * rho_bar).exp() }
}

/// Second-order Taylor mean and variance of `X/Y` with `X = 1 − Ĥ` and
/// `Y = 1 − F̂`.
pub fn jhat_moments_taylor(mean_x: f64, mean_y: f64, var_x: f64, var_y: f64, cov: f64) -> Result<(f64, f64)> {
    if !(mean_y >= 1e-6) {
        return domain(format!("denominator mean {mean_y} is below 1e-6"));
    }
    let ratio = mean_x / mean_y;
    let mean = ratio - cov / (mean_y * mean_y) + var_y * mean_x / mean_y.powi(3);
    let rel = if mean_x == 0.0 {
        // limit of the bracket times ratio² as μ_X → 0
        return Ok((mean, (var_x / (mean_y * mean_y)).max(0.0)));
    } else {
        var_x / (mean_x * mean_x) - 2.0 * cov / (mean_x * mean_y) + var_y / (mean_y * mean_y)
    };
    Ok((mean, (ratio * ratio * rel).max(0.0)))
}

/// Moments of Ĥ(r) with its bias bound.
pub fn hhat_moments(field: &IntensityField, rho_bar: f64, r: f64) -> Result<MomentReport> {
    let mu = field.total();
    let (_, eh, _) = poisson_means(rho_bar, mu, r)?;
    let (variance, converged) = var_hhat_checked(field, rho_bar, r)?;
    let homog = field.homogeneous().is_some();
    Ok(MomentReport {
        mean: eh,
        variance,
        bias: -(-mu).exp(),
        method: if homog { MomentMethod::ClosedForm } else { MomentMethod::Quadrature },
        approximate: false,
        converged,
    })
}

/// Taylor moments of Ĵ(r).
pub fn jhat_moments(field: &IntensityField, rho_bar: f64, p: &GridP, r: f64) -> Result<MomentReport> {
    let mu = field.total();
    let (ef, eh, _) = poisson_means(rho_bar, mu, r)?;
    let (vh, c1) = var_hhat_checked(field, rho_bar, r)?;
    let (cov, c2) = cov_hf_checked(field, rho_bar, p, r)?;
    let vf = var_fhat(field, rho_bar, p, r)?;
    let (mean, variance) = jhat_moments_taylor(1.0 - eh, 1.0 - ef, vh, vf, cov)?;
    Ok(MomentReport {
        mean,
        variance,
        bias: mean - (1.0 - eh) / (1.0 - ef),
        method: MomentMethod::Quadrature,
        approximate: true,
        converged: c1 && c2,
    })
}

/// The geometric integrals K̃ moments depend on, for a list of radii.
#[derive(Debug, Clone, PartialEq)]
pub struct KTildeGeometry {
    /// `λ_D(D)`.
    pub area: f64,
    /// `∫_{S²} 1/ρ̃`.
    pub inv_integral: f64,
    pub radii: Vec<f64>,
    /// `∬ 1[d ≤ r]/(ρ̃ρ̃)` at each radius.
    pub pair_integrals: Vec<f64>,
    pub converged: bool,
    /// True when the integrals are closed forms.
    pub closed_form: bool,
}

impl KTildeGeometry {
    /// `radii` must be ascending in `[0, π]`.
    pub fn new(factor: &ShapeFactor, radii: &[f64]) -> Result<Self> {
        Self::with_quad(factor, radii, &MomentQuad::default())
    }

    pub fn with_quad(factor: &ShapeFactor, radii: &[f64], q: &MomentQuad) -> Result<Self> {
        for &r in radii {
            check_r(r)?;
        }
        if radii.windows(2).any(|w| w[1] < w[0]) {
            return domain("radii must be ascending");
        }
        let area = factor.surface().surface_area();
        let sym = factor.symmetry();
        if let crate::mapping::Symmetry::Constant(k) = sym {
            let pair = radii.iter().map(|r| 8.0 * PI * PI * (1.0 - r.cos()) / (k * k)).collect();
            return Ok(KTildeGeometry {
                area,
                inv_integral: 4.0 * PI / k,
                radii: radii.to_vec(),
                pair_integrals: pair,
                converged: true,
                closed_form: true,
            });
        }
        let inv = |s| 1.0 / factor.eval(s);
        let i1 = variance::pair_integrals(&inv, &|_| 1.0, sym, &[PI], q)[0] / (4.0 * PI);
        let run = |q: &MomentQuad| variance::pair_integrals(&inv, &inv, sym, radii, q);
        let pair = run(q);
        // doubling check at a few radii only
        let probe: Vec<f64> = radii.iter().copied().step_by((radii.len() / 4).max(1)).collect();
        let fine = variance::pair_integrals(&inv, &inv, sym, &probe, &q.doubled());
        let coarse = variance::pair_integrals(&inv, &inv, sym, &probe, q);
        let converged = coarse.iter().zip(&fine).all(|(a, b)| variance::stable(*a, *b) || a.abs() < 1e-12);
        Ok(KTildeGeometry { area, inv_integral: i1, radii: radii.to_vec(), pair_integrals: pair, converged, closed_form: false })
    }
}

/// `E[f(N)]` for `N ~ Poisson(λ)`, summing until the terms past the mode fall
/// below 1e-14 of the running sum.
pub fn poisson_expectation(lambda: f64, f: impl Fn(u64) -> f64) -> f64 {
    if lambda <= 0.0 {
        return f(0);
    }
    let ln_l = lambda.ln();
    let mut ln_p = -lambda;
    let mut sum = 0.0;
    let mut n = 0u64;
    loop {
        let term = ln_p.exp() * f(n);
        sum += term;
        if n as f64 > lambda && sum != 0.0 && term.abs() <= 1e-14 * sum.abs() {
            return sum;
        }
        n += 1;
        ln_p += ln_l - (n as f64).ln();
        if n > 10_000_000 {
            return sum;
        }
    }
}

/// `E[1/((N+a)²(N+b)²)]`.
pub fn poisson_inv_sq(lambda: f64, a: u64, b: u64) -> f64 {
    poisson_expectation(lambda, |n| inv_sq(n, a, b))
}

fn inv_sq(n: u64, a: u64, b: u64) -> f64 {
    let x = ((n + a) * (n + b)) as f64;
    1.0 / (x * x)
}

/// `P(N ≤ 1) = e^{−λ}(1 + λ)`.
fn prob_le1(lambda: f64) -> f64 {
    (-lambda).exp() * (1.0 + lambda)
}

/// Bias and variance of K̃(r) for a Poisson process of intensity `rho` on
/// the surface.
pub fn ktilde_moments(surface: &ConvexSurface, rho: f64, r: f64) -> Result<MomentReport> {
    let geom = KTildeGeometry::new(&ShapeFactor::new(surface.clone()), &[r])?;
    ktilde_moments_from(&geom, rho, 0)
}

/// [`ktilde_moments`] at `geom.radii[idx]`.
pub fn ktilde_moments_from(geom: &KTildeGeometry, rho: f64, idx: usize) -> Result<MomentReport> {
    if !(rho > 0.0) {
        return domain(format!("rho must be positive, got {rho}"));
    }
    let Some(&r) = geom.radii.get(idx) else {
        return domain(format!("radius index {idx} out of range"));
    };
    let area = geom.area;
    let lambda = rho * area;
    let omc = 1.0 - r.cos();
    let c = 2.0 * PI * omc;
    let p = prob_le1(lambda);
    let t1 = c * c * (1.0 - p) * p;
    let t2 = rho.powi(3) * area.powi(4) * omc * omc * (geom.inv_integral - 16.0 * PI * PI / area)
        * poisson_inv_sq(lambda, 3, 2);
    let t3 = rho * rho * area.powi(4) / (8.0 * PI * PI)
        * (geom.pair_integrals[idx] - 64.0 * PI.powi(4) * omc * omc / (area * area))
        * poisson_inv_sq(lambda, 2, 1);
    Ok(MomentReport {
        mean: c * (1.0 - p),
        variance: (t1 + t2 + t3).max(0.0),
        bias: -p * c,
        method: if geom.closed_form { MomentMethod::ClosedForm } else { MomentMethod::Quadrature },
        approximate: false,
        converged: geom.converged,
    })
}

fn ln_falling(n: u64, k: u64) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln()).sum()
}

/// `R = N! e^{N−k} / ((N−k)! (e+p)^N)`, ratio-unbiased for `λᵏe^{−pλ}`.
pub fn ratio_unbiased_term(n: u64, k: u64, p: f64) -> f64 {
    if n < k {
        return 0.0;
    }
    let nf = n as f64;
    (ln_falling(n, k) + (nf - k as f64) - nf * (std::f64::consts::E + p).ln()).exp()
}

/// Numerator `N! e^{N−k}/(N−k)!` and denominator `(e+p)^N` of
/// [`ratio_unbiased_term`], unscaled. Both overflow for large `N`.
pub fn ratio_unbiased_parts(n: u64, k: u64, p: f64) -> (f64, f64) {
    let nf = n as f64;
    let s = if n < k { 0.0 } else { (ln_falling(n, k) + nf - k as f64).exp() };
    (s, (std::f64::consts::E + p).powf(nf))
}

/// Ratio-unbiased estimate of `(1 − P(N ≤ 1)) P(N ≤ 1)`:
/// `R(N,0,1) + R(N,1,1) − R(N,0,2) − 2R(N,1,2) − R(N,2,2)`.
pub fn five_term_estimator(n: u64) -> f64 {
    ratio_unbiased_term(n, 0, 1.0) + ratio_unbiased_term(n, 1, 1.0)
        - ratio_unbiased_term(n, 0, 2.0)
        - 2.0 * ratio_unbiased_term(n, 1, 2.0)
        - ratio_unbiased_term(n, 2, 2.0)
}

/// The pieces of the plug-in variance: `ρ̂₂`, `ρ̂₃`, the observed inverse
/// squares and the five-term estimate. Averaging each over replicates and
/// combining recovers the exact variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluginParts {
    pub rho2: f64,
    pub rho3: f64,
    pub inv_sq_32: f64,
    pub inv_sq_21: f64,
    pub prob_product: f64,
}

impl PluginParts {
    pub fn new(n: u64, area: f64) -> Self {
        let nf = n as f64;
        PluginParts {
            rho2: nf * (nf - 1.0) / (area * area),
            rho3: nf * (nf - 1.0) * (nf - 2.0) / area.powi(3),
            inv_sq_32: inv_sq(n, 3, 2),
            inv_sq_21: inv_sq(n, 2, 1),
            prob_product: five_term_estimator(n),
        }
    }

    /// Variance formula with these parts in place of the population values.
    pub fn combine(&self, geom: &KTildeGeometry, idx: usize) -> f64 {
        let r = geom.radii[idx];
        let area = geom.area;
        let omc = 1.0 - r.cos();
        let c = 2.0 * PI * omc;
        c * c * self.prob_product
            + self.rho3 * area.powi(4) * omc * omc * (geom.inv_integral - 16.0 * PI * PI / area) * self.inv_sq_32
            + self.rho2 * area.powi(4) / (8.0 * PI * PI)
                * (geom.pair_integrals[idx] - 64.0 * PI.powi(4) * omc * omc / (area * area))
                * self.inv_sq_21
    }
}

/// Plug-in estimate of `Var K̃(r)` from the observed count `n`.
pub fn var_ktilde_plugin(n: u64, surface: &ConvexSurface, r: f64) -> Result<f64> {
    let geom = KTildeGeometry::new(&ShapeFactor::new(surface.clone()), &[r])?;
    Ok(var_ktilde_plugin_from(n, &geom, 0))
}

pub fn var_ktilde_plugin_from(n: u64, geom: &KTildeGeometry, idx: usize) -> f64 {
    PluginParts::new(n, geom.area).combine(geom, idx)
}

/// Truncated series `−Σ_{n=1}^{n_terms} (−a)ⁿ/n!` with `a = ρ̄·2π(1 − cos r)`,
/// returned for F and H, which coincide for a homogeneous Poisson process.
pub fn series_summary_poisson(rho_bar: f64, r: f64, n_terms: usize) -> Result<(f64, f64)> {
    check_r(r)?;
    if n_terms < 1 {
        return domain("n_terms must be at least 1");
    }
    if !(rho_bar >= 0.0) {
        return domain(format!("rho_bar must be non-negative, got {rho_bar}"));
    }
    let a = rho_bar * 2.0 * PI * (1.0 - r.cos());
    let mut term = 1.0;
    let mut s = 0.0;
    for n in 1..=n_terms {
        term *= -a / n as f64;
        s -= term;
    }
    Ok((s, s))
}
