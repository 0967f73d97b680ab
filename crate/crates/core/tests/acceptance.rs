//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! fails only if a criterion outside `KNOWN_FAILING` fails, or a known
//! failure starts passing.

use convexppp::geometry::{great_circle, polar_axis_for_area, ConvexSurface, Vec3};
use convexppp::mapping::{pushforward_pattern, shape_factor, shape_factor_generic, IntensityField, ShapeFactor};
use convexppp::moments::{cov_hf, expint_ei, poisson_means, series_summary_poisson, var_fhat, var_hhat, var_khat, EULER_GAMMA};
use convexppp::quad::{gl_integrate, SphereGrid};
use convexppp::rng::derive_seed;
use convexppp::simulate::{
    effective_hardcore, expected_count_matern, sim_matern1, sim_matern2, sim_poisson, sim_thomas, solve_rho_matern2,
    KappaBridge, MaternVariant, ThomasConfig,
};
use convexppp::summaries::{fhat_inhom, fibonacci_grid, hhat_inhom, khat_inhom, ktilde_inhom, GridP, RGrid, SpherePattern};
use convexppp::testing::{csr_test, csr_test_with, Divisor, ExperimentSpec, ModelSpec, PowerManifest, Prolate4Pi, ShapeSpec, TestConfig};
use std::f64::consts::PI;
use std::time::Instant;

/// Criteria expected to fail.
///
/// 8: with the variance as divisor, the standardized value at the smallest
/// radii is about −2πρ̂² whenever K̃ = 0 there, which holds for Matérn II
/// below its hardcore distance and for most CSR patterns alike. T then mostly
/// ranks the observed count among the null counts, and power stays near or
/// below the level. The same study with a standard-deviation divisor is
/// printed alongside for comparison.
const KNOWN_FAILING: &[u32] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Sample variance and its standard error.
fn var_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (v, ((m4 - v * v) / n).sqrt())
}

fn cov_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, _) = mean_se(x);
    let (my, _) = mean_se(y);
    let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (m, se) = mean_se(&p);
    (m * n / (n - 1.0), se)
}

fn prolate(a: f64) -> ConvexSurface {
    if a == 1.0 {
        return ConvexSurface::sphere();
    }
    ConvexSurface::ellipsoid(a, a, polar_axis_for_area(a, 4.0 * PI).unwrap()).unwrap()
}

fn c1_poisson_k_mean() -> Outcome {
    let s = ConvexSurface::sphere();
    let field = IntensityField::constant(10.0).unwrap();
    let grid = RGrid::with_step(0.02).unwrap();
    let reps = 2000;
    let mut cols = vec![Vec::with_capacity(reps); grid.len()];
    for i in 0..reps {
        let p = sim_poisson(&s, 10.0, derive_seed(1, &[i as u64])).unwrap();
        let k = khat_inhom(&SpherePattern::new(p.points).unwrap(), &field, &grid).unwrap();
        for (c, v) in cols.iter_mut().zip(k.values) {
            c.push(v);
        }
    }
    let mut worst: f64 = 0.0;
    for (c, &r) in cols.iter().zip(grid.values()) {
        let (m, se) = mean_se(c);
        let dev = m - 2.0 * PI * (1.0 - r.cos());
        if se > 0.0 {
            worst = worst.max(dev.abs() / se);
        } else if dev != 0.0 {
            worst = f64::INFINITY;
        }
    }
    outcome(worst < 3.0, format!("max |mean − 2π(1−cos r)|/SE over {} radii = {worst:.2}", grid.len()))
}

fn c2_f_and_h_means() -> Outcome {
    let s = ConvexSurface::sphere();
    let field = IntensityField::constant(1.0).unwrap();
    let rs = [0.5, 1.0, 2.0];
    let grid = RGrid::new(rs.to_vec()).unwrap();
    let p = fibonacci_grid(100).unwrap();
    let reps = 5000;
    let (mut f, mut h) = (vec![vec![]; 3], vec![vec![]; 3]);
    for i in 0..reps {
        let sp = SpherePattern::new(sim_poisson(&s, 1.0, derive_seed(2, &[i])).unwrap().points).unwrap();
        let fc = fhat_inhom(&sp, &field, 1.0, &p, &grid).unwrap();
        let hc = hhat_inhom(&sp, &field, 1.0, &grid).unwrap();
        for j in 0..3 {
            f[j].push(fc.values[j]);
            h[j].push(hc.values[j]);
        }
    }
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    for (j, &r) in rs.iter().enumerate() {
        let (ef, eh, _) = poisson_means(1.0, 4.0 * PI, r).unwrap();
        let (mf, sf) = mean_se(&f[j]);
        let (mh, sh) = mean_se(&h[j]);
        let (zf, zh) = ((mf - ef).abs() / sf, (mh - eh).abs() / sh);
        worst = worst.max(zf).max(zh);
        parts.push(format!("r={r}: zF={zf:.2} zH={zh:.2}"));
    }
    outcome(worst < 3.0, parts.join(", "))
}

fn c3_variances() -> Outcome {
    let s = ConvexSurface::sphere();
    let field = IntensityField::constant(1.0).unwrap();
    let rs = [1.0, PI];
    let grid = RGrid::new(rs.to_vec()).unwrap();
    let p = fibonacci_grid(20).unwrap();
    let p1 = GridP { points: vec![Vec3::new(0.0, 0.0, 1.0)] };
    let reps = 100_000;
    let (mut k, mut f, mut f1, mut h) = (vec![vec![]; 2], vec![vec![]; 2], vec![vec![]; 2], vec![vec![]; 2]);
    for i in 0..reps {
        let sp = SpherePattern::new(sim_poisson(&s, 1.0, derive_seed(3, &[i])).unwrap().points).unwrap();
        let kc = khat_inhom(&sp, &field, &grid).unwrap();
        let fc = fhat_inhom(&sp, &field, 1.0, &p, &grid).unwrap();
        let f1c = fhat_inhom(&sp, &field, 1.0, &p1, &grid).unwrap();
        let hc = hhat_inhom(&sp, &field, 1.0, &grid).unwrap();
        for j in 0..2 {
            k[j].push(kc.values[j]);
            f[j].push(fc.values[j]);
            f1[j].push(f1c.values[j]);
            h[j].push(hc.values[j]);
        }
    }
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    // `floor` is a model-based standard error, used where the sample one
    // degenerates
    let mut check = |label: String, mc: (f64, f64), want: f64, floor: f64| {
        let se = mc.1.max(floor);
        let z = (mc.0 - want).abs() / se;
        worst = worst.max(z);
        parts.push(format!("{label}={z:.2}"));
    };
    let n = reps as f64;
    for (j, &r) in rs.iter().enumerate() {
        let c = 1.0 - r.cos();
        let closed = c + 4.0 * PI * c * c;
        let vk = var_khat(&field, r).unwrap();
        assert!((vk - closed).abs() < 1e-9 * closed);
        // At r = π, F̂ = 1[N ≥ 1] and 1 − Ĥ = 1[N ≤ 1]. The empty pattern has
        // probability e^{−4π} ≈ 3.5e-6, so most runs of 10⁵ never see it and
        // the sample variance is exactly 0. The floor is the exact standard
        // error of an indicator's sample variance, sqrt(v(1 − 4v)/n).
        let at_pi = r == PI;
        let ind_se = |v: f64| if at_pi { (v * (1.0 - 4.0 * v) / n).sqrt() } else { 0.0 };
        check(format!("zVarK(r={r:.3})"), var_se(&k[j]), closed, 0.0);
        let cap = 2.0 * PI * c;
        let v1 = (-cap).exp() - (-2.0 * cap).exp();
        check(format!("zVarF|P|=1(r={r:.3})"), var_se(&f1[j]), v1, ind_se(v1));
        let vf = var_fhat(&field, 1.0, &p, r).unwrap();
        check(format!("zVarF(r={r:.3})"), var_se(&f[j]), vf, ind_se(vf));
        let vh = var_hhat(&field, 1.0, r).unwrap();
        check(format!("zVarH(r={r:.3})"), var_se(&h[j]), vh, ind_se(vh));
        let x: Vec<f64> = h[j].iter().map(|v| 1.0 - v).collect();
        let y: Vec<f64> = f[j].iter().map(|v| 1.0 - v).collect();
        let cv = cov_hf(&field, 1.0, &p, r).unwrap();
        let cov_floor = if at_pi {
            // product of the centred indicators 1[N ≤ 1] and 1[N = 0]
            let mu = 4.0 * PI;
            let (p0, p1) = ((-mu).exp(), mu * (-mu).exp());
            let px = p0 + p1;
            let m2 = p0 * ((1.0 - px) * (1.0 - p0)).powi(2) + p1 * ((1.0 - px) * p0).powi(2) + (1.0 - px) * (px * p0).powi(2);
            ((m2 - cv * cv) / n).sqrt()
        } else {
            0.0
        };
        check(format!("zCov(r={r:.3})"), cov_se(&x, &y), cv, cov_floor);
    }
    outcome(worst < 3.0, parts.join(", "))
}

fn cap_integral(f: &ShapeFactor, centre: Vec3, radius: f64) -> f64 {
    let helper = if centre.x1.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let e1 = centre.cross(helper);
    let e1 = e1 * (1.0 / e1.norm());
    let e2 = centre.cross(e1);
    gl_integrate(64, 0.0, radius, |t| {
        t.sin()
            * gl_integrate(64, 0.0, 2.0 * PI, |phi| {
                f.eval(centre * t.cos() + (e1 * phi.cos() + e2 * phi.sin()) * t.sin())
            })
    })
}

fn c4_mapping() -> Outcome {
    let s = ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap();
    let factor = ShapeFactor::new(s.clone());
    let area = s.surface_area();
    let rho = 1e5 / area;
    let pts = pushforward_pattern(&s, &sim_poisson(&s, rho, 4).unwrap().points).unwrap();
    let centres = convexppp::geometry::fibonacci_sphere(10);
    let mut worst: f64 = 0.0;
    for (i, c) in centres.iter().enumerate() {
        let radius = 0.2 + 0.1 * i as f64;
        let count = pts.iter().filter(|p| great_circle(**p, *c) <= radius).count() as f64;
        let want = rho * cap_integral(&factor, *c, radius);
        worst = worst.max((count - want).abs() / want.sqrt());
    }
    let total = factor.integral(&SphereGrid::with_theta(200));
    let total_rel = (total - area).abs() / area;
    let mut jac: f64 = 0.0;
    let shapes = [
        ConvexSurface::ellipsoid(1.0, 1.0, 3.0).unwrap(),
        ConvexSurface::ellipsoid(0.7, 1.3, 2.0).unwrap(),
        ConvexSurface::ellipsoid_radial(0.7, 1.3, 2.0).unwrap(),
        ConvexSurface::cube(1.0).unwrap(),
    ];
    for sh in &shapes {
        for u in convexppp::geometry::fibonacci_sphere(200) {
            let a = shape_factor(sh, u).unwrap();
            let b = shape_factor_generic(sh, u).unwrap();
            jac = jac.max((a - b).abs() / a);
        }
    }
    outcome(
        worst < 3.0 && total_rel < 1e-3 && jac < 1e-8,
        format!("cap max z = {worst:.2}, ∫ρ̃ rel err = {total_rel:.1e}, Jacobian rel err = {jac:.1e}"),
    )
}

fn c5_expected_counts() -> Outcome {
    let s = prolate(0.8);
    let (rho, r) = (8.0, 0.2);
    let reps = 2000u64;
    let area = s.surface_area();
    let thomas = ThomasConfig { rho_parent: 100.0 / (area * 20.0), mean_offspring: 20.0, kappa: 0.5, bridge: KappaBridge::Bandwidth };
    let (mut m1, mut m2, mut th) = (vec![], vec![], vec![]);
    for i in 0..reps {
        m1.push(sim_matern1(&s, rho, r, derive_seed(5, &[0, i])).unwrap().len() as f64);
        m2.push(sim_matern2(&s, rho, r, 1.0, derive_seed(5, &[1, i])).unwrap().len() as f64);
        th.push(sim_thomas(&s, &thomas, derive_seed(5, &[2, i])).unwrap().len() as f64);
    }
    let e1 = expected_count_matern(&s, rho, r, MaternVariant::I).unwrap();
    let e2 = expected_count_matern(&s, rho, r, MaternVariant::II).unwrap();
    let et = thomas.rho_parent * area * thomas.mean_offspring;
    let z = |x: &[f64], e: f64| {
        let (m, se) = mean_se(x);
        (m - e).abs() / se
    };
    let (z1, z2, zt) = (z(&m1, e1), z(&m2, e2), z(&th, et));
    let target = 100.0;
    let solved = solve_rho_matern2(&s, target, r).unwrap();
    let round = (expected_count_matern(&s, solved, r, MaternVariant::II).unwrap() - target).abs() / target;
    outcome(
        z1 < 3.0 && z2 < 3.0 && zt < 3.0 && round < 1e-5,
        format!("z Matérn I = {z1:.2}, z Matérn II = {z2:.2}, z Thomas = {zt:.2}, solve round trip rel = {round:.1e}"),
    )
}

fn c6_effective_hardcore() -> Outcome {
    let v = effective_hardcore(0.4, 3.1602, 0.2).unwrap();
    outcome((v - 0.0633).abs() <= 5e-4, format!("effective_hardcore(0.4, 3.1602, 0.2) = {v:.5}"))
}

fn type_one_rate(a: f64) -> f64 {
    let s = prolate(a);
    let trials = 200u64;
    let rejects = (0..trials)
        .filter(|&t| {
            let p = sim_poisson(&s, 10.0, derive_seed(7, &[a.to_bits(), t, 0])).unwrap();
            csr_test(&p, &s, 199, 0.05, derive_seed(7, &[a.to_bits(), t, 1])).unwrap().reject
        })
        .count();
    rejects as f64 / trials as f64
}

fn c7_type_one() -> Outcome {
    let (r1, r2) = (type_one_rate(1.0), type_one_rate(0.8));
    let ok = |r: f64| (0.02..=0.09).contains(&r);
    outcome(ok(r1) && ok(r2), format!("rejection rate sphere = {r1:.3}, a=0.8 = {r2:.3}"))
}

fn power_rows(trials: usize, nsim: usize, divisor: Divisor) -> Vec<f64> {
    let mut experiments = vec![ExperimentSpec {
        id: "thomas".into(),
        shape: ShapeSpec::Prolate(Prolate4Pi { prolate_a: 1.0 }),
        model: ModelSpec::Thomas { mu: 150.0, offspring: 20.0, kappa: Some(0.5), bridge: KappaBridge::Bandwidth },
    }];
    for a in [1.0, 0.8, 0.6, 0.4] {
        experiments.push(ExperimentSpec {
            id: format!("matern2 a={a}"),
            shape: ShapeSpec::Prolate(Prolate4Pi { prolate_a: a }),
            model: ModelSpec::Matern2 { mu: 100.0, r: 0.2, mark_rate: 1.0 },
        });
    }
    let m = PowerManifest { trials, nsim, alpha: 0.05, seed: 8, r_step: 0.02, divisor, experiments };
    convexppp::testing::power_study(&m, &|_| {}).unwrap().iter().map(|r| r.reject).collect()
}

fn c8_power() -> Outcome {
    let rows = power_rows(200, 199, Divisor::Variance);
    let (th, mat) = (rows[0], &rows[1..]);
    let strict = mat.windows(2).all(|w| w[0] > w[1]);
    // not gated: the same study with a z-score divisor, at half the trials
    let sd = power_rows(100, 99, Divisor::StdDev);
    outcome(
        mat[0] >= 0.95 && th >= 0.90 && strict,
        format!(
            "Matérn II sphere = {:.3}, Thomas sphere = {th:.3}, Matérn II by a (1, 0.8, 0.6, 0.4) = {mat:?}, strictly decreasing = {strict}; \
             with the std-dev divisor (100 × 99, informational): Thomas = {:.3}, Matérn II by a = {:?}",
            mat[0],
            sd[0],
            &sd[1..]
        ),
    )
}

fn ei_series(x: f64) -> f64 {
    // Ramanujan's form: γ + ln x + e^{x/2} Σ (−1)^{n−1} xⁿ/(n! 2^{n−1}) Σ_{k ≤ (n−1)/2} 1/(2k+1)
    let mut term = 2.0;
    let mut inner = 0.0;
    let mut s = 0.0;
    for n in 1..500usize {
        term *= -x / (2.0 * n as f64);
        if (n - 1) % 2 == 0 {
            inner += 1.0 / n as f64;
        }
        let add = -term * inner;
        s += add;
        if add.abs() < 1e-18 * s.abs() && n as f64 > x {
            break;
        }
    }
    EULER_GAMMA + x.ln() + (0.5 * x).exp() * s
}

fn c9_properties() -> Outcome {
    let mut fails = vec![];
    // brute-force estimator equivalence
    let field = IntensityField::from_fn("wavy", |p: Vec3| 2.0 + p.x1 + 0.5 * p.x3 * p.x3).unwrap();
    let rho = |p: Vec3| 2.0 + p.x1 + 0.5 * p.x3 * p.x3;
    let factor = ShapeFactor::new(prolate(0.6));
    let grid = RGrid::new(vec![0.0, 0.4, 1.1, 2.0, PI]).unwrap();
    let mut brute_err: f64 = 0.0;
    for n in 0..=6 {
        for rep in 0..20u64 {
            let mut pts = sim_poisson(&ConvexSurface::sphere(), 3.0, derive_seed(9, &[n as u64, rep])).unwrap().points;
            pts.truncate(n);
            let n = pts.len();
            let sp = SpherePattern::new(pts.clone()).unwrap();
            let k = khat_inhom(&sp, &field, &grid).unwrap();
            let kt = ktilde_inhom(&sp, &factor, &grid);
            let h = hhat_inhom(&sp, &field, 0.9, &grid).unwrap();
            for (i, &r) in grid.values().iter().enumerate() {
                let (mut ks, mut kts) = (0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        if a != b && great_circle(pts[a], pts[b]) <= r {
                            ks += 1.0 / (rho(pts[a]) * rho(pts[b]));
                            kts += 1.0 / (factor.eval(pts[a]) * factor.eval(pts[b]));
                        }
                    }
                }
                let area = factor.surface().surface_area();
                let kt_ref = if n > 1 { area * area * kts / (4.0 * PI * (n * (n - 1)) as f64) } else { 0.0 };
                let h_ref = if n == 0 {
                    0.0
                } else {
                    1.0 - (0..n)
                        .map(|a| {
                            (0..n)
                                .filter(|&b| b != a && great_circle(pts[a], pts[b]) <= r)
                                .map(|b| 1.0 - 0.9 / rho(pts[b]))
                                .product::<f64>()
                        })
                        .sum::<f64>()
                        / n as f64
                };
                for (got, want) in [(k.values[i], ks / (4.0 * PI)), (kt.values[i], kt_ref), (h.values[i], h_ref)] {
                    brute_err = brute_err.max((got - want).abs() / want.abs().max(1.0));
                }
            }
        }
    }
    if brute_err > 1e-12 {
        fails.push(format!("brute force {brute_err:.1e}"));
    }
    // Ei against its power series
    let xs = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.5, 6.0, 8.0, 10.0, 12.5, 15.0, 18.0, 20.0, 25.0, 30.0];
    let ei_err = xs.iter().map(|&x| (expint_ei(x).unwrap() - ei_series(x)).abs() / ei_series(x).abs().max(1.0)).fold(0.0, f64::max);
    if ei_err > 1e-10 {
        fails.push(format!("Ei {ei_err:.1e}"));
    }
    // geodesics on the sphere and projection round trips
    let us = convexppp::geometry::fibonacci_sphere(300);
    let sphere = ConvexSurface::sphere();
    let geo_err = us.windows(2).map(|w| (sphere.geodesic_distance(w[0], w[1]).unwrap() - great_circle(w[0], w[1])).abs()).fold(0.0, f64::max);
    if geo_err > 1e-12 {
        fails.push(format!("sphere geodesic {geo_err:.1e}"));
    }
    let mut trip: f64 = 0.0;
    for sh in [prolate(0.4), ConvexSurface::ellipsoid_radial(0.5, 2.0, 1.0).unwrap(), ConvexSurface::cube(1.0).unwrap()] {
        for u in &us {
            trip = trip.max((sh.to_sphere(sh.from_sphere(*u).unwrap()).unwrap() - *u).norm());
        }
    }
    if trip > 1e-8 {
        fails.push(format!("round trip {trip:.1e}"));
    }
    // alternating series bound
    let mut series_ok = true;
    for rho_bar in [0.1, 0.5, 1.0, 2.0] {
        for r in [0.2, 1.0, 2.5] {
            let a = rho_bar * 2.0 * PI * (1.0f64 - f64::cos(r));
            for n in 1..25 {
                let (f, _) = series_summary_poisson(rho_bar, r, n).unwrap();
                let next = (1..=n + 1).fold(1.0, |t, k| t * a / k as f64);
                series_ok &= (f + (-a).exp_m1()).abs() <= next * (1.0 + 1e-9) + 1e-14;
            }
        }
    }
    if !series_ok {
        fails.push("alternating series bound".into());
    }
    // bit-exact reports across thread counts
    let s = prolate(0.8);
    let p = sim_poisson(&s, 10.0, 99).unwrap();
    let cfg = TestConfig { nsim: 39, ..TestConfig::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&csr_test_with(&p, &s, &cfg, 5).unwrap()).unwrap())
    };
    let same = run(1) == run(4);
    if !same {
        fails.push("thread-count determinism".into());
    }
    outcome(
        fails.is_empty(),
        format!(
            "brute {brute_err:.1e}, Ei {ei_err:.1e}, geodesic {geo_err:.1e}, round trip {trip:.1e}, series bound {series_ok}, deterministic {same}"
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, c1_poisson_k_mean),
        (2, c2_f_and_h_means),
        (3, c3_variances),
        (4, c4_mapping),
        (5, c5_expected_counts),
        (6, c6_effective_hardcore),
        (7, c7_type_one),
        (8, c8_power),
        (9, c9_properties),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut unexpected = vec![];
    for (id, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        let known = KNOWN_FAILING.contains(&id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as known failing)",
        };
        println!("criterion {id}: {tag} [{:.1}s] {}", t0.elapsed().as_secs_f64(), o.detail);
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
