//! Quadrature rules: Gauss–Legendre nodes, adaptive Gauss–Kronrod and product
//! grids on the unit sphere.

use crate::geometry::Vec3;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn compute_gl(n: usize) -> GaussLegendre {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = if n == 1 { 2.0 } else { w };
        weights[n - 1 - i] = weights[i];
    }
    GaussLegendre { nodes, weights }
}

/// Cached Gauss–Legendre rule with `n` nodes.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(compute_gl(n))).clone()
}

/// Integrate `f` over [a, b] with an n-point Gauss–Legendre rule.
pub fn gl_integrate(n: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let gl = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    let mut s = 0.0;
    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
        s += w * f(c + h * x);
    }
    s * h
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<const K: usize>(a: f64, b: f64, f: &mut impl FnMut(f64) -> [f64; K]) -> ([f64; K], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = [0.0; K];
    let mut rg = [0.0; K];
    for d in 0..K {
        rk[d] = fc[d] * WGK[7];
        rg[d] = fc[d] * WG[3];
    }
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        for d in 0..K {
            rk[d] += WGK[j] * (f1[d] + f2[d]);
            if j % 2 == 1 {
                rg[d] += WG[j / 2] * (f1[d] + f2[d]);
            }
        }
    }
    let mut err = 0.0f64;
    for d in 0..K {
        rk[d] *= h;
        rg[d] *= h;
        err = err.max((rk[d] - rg[d]).abs());
    }
    (rk, err)
}

/// Adaptive Gauss–Kronrod (7/15) integration of a vector-valued integrand.
/// Bisects until the Kronrod–Gauss difference on each panel falls below
/// `abs_tol + rel_tol·|panel|`.
pub fn adaptive_gk<const K: usize>(
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    mut f: impl FnMut(f64) -> [f64; K],
) -> [f64; K] {
    let mut total = [0.0; K];
    if a == b {
        return total;
    }
    let mut stack: Vec<(f64, f64, u32)> = vec![(a, b, 0)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(lo, hi, &mut f);
        let scale = val.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let width_frac = ((hi - lo) / (b - a)).abs();
        if err <= (abs_tol * width_frac).max(rel_tol * scale) || depth >= 40 {
            for d in 0..K {
                total[d] += val[d];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Scalar convenience wrapper around [`adaptive_gk`].
pub fn adaptive_gk1(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    adaptive_gk::<1>(a, b, tol, tol, |x| [f(x)])[0]
}

/// Default θ-resolution for sphere product quadrature, overridable through the
/// `CONVEXPPP_QUAD_NODES` environment variable.
pub fn default_sphere_nodes() -> usize {
    std::env::var("CONVEXPPP_QUAD_NODES")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n >= 4)
        .unwrap_or(128)
}

/// Product rule on S²: Gauss–Legendre in cos θ, uniform (periodic trapezoid)
/// in φ with twice as many φ nodes as θ nodes.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let gl = gauss_legendre(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * PI / n_phi as f64;
        for (z, wz) in gl.nodes.iter().zip(&gl.weights) {
            let rho = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                points.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), *z));
                weights.push(wz * dphi);
            }
        }
        SphereGrid { points, weights, n_theta, n_phi }
    }

    pub fn with_theta(n_theta: usize) -> Self {
        Self::new(n_theta, 2 * n_theta)
    }

    pub fn default_grid() -> Self {
        Self::with_theta(default_sphere_nodes())
    }

    pub fn integrate(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Latitude rings (cos θ node, total ring weight) for integrands that are
    /// invariant under rotation about the x3-axis.
    pub fn rings(&self) -> Vec<(f64, f64)> {
        let gl = gauss_legendre(self.n_theta);
        gl.nodes.iter().zip(&gl.weights).map(|(z, w)| (*z, w * 2.0 * PI)).collect()
    }
}
