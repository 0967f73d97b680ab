//! Standardized K̃, the sup statistic T, Monte Carlo CSR tests and power
//! studies.
//!
//! The null is CSR on `D` with intensity fitted from the observed count,
//! `ρ̂ = N/λ_D(D)`. Every pattern, observed or simulated, is moved to S² and
//! summarized by K̃ on the r-grid; each value is centred at `2π(1 − cos r)` and
//! divided by the plug-in variance estimate, and T is the largest absolute
//! standardized value.

use crate::error::{domain, Error, Result};
use crate::geometry::{polar_axis_for_area, ConvexSurface, ShapeConfig};
use crate::mapping::ShapeFactor;
use crate::moments::{ktilde_moments_from, KTildeGeometry, MomentReport, PluginParts};
use crate::rng::derive_seed;
use crate::simulate::{sim_matern1, sim_matern2, sim_poisson, sim_thomas, solve_rho_matern2, KappaBridge, SurfacePattern, ThomasConfig};
use crate::summaries::{ktilde_inhom, RGrid, SpherePattern, SummaryCurve};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

const NULL_TAG: u64 = 0x4E55;
const OBS_TAG: u64 = 0x4F42;
const TEST_TAG: u64 = 0x5445;

fn k_theory(r: f64) -> f64 {
    2.0 * PI * (1.0 - r.cos())
}

/// `(K̃(r) − 2π(1 − cos r)) / Var̂(K̃(r))` at each grid radius.
///
/// The value is 0 at `r = 0`, and wherever both the deviation and the
/// variance vanish to rounding (K̃ is then deterministic, e.g. at `r = π` on
/// the sphere).
pub fn standardize(curve: &SummaryCurve, var: &[f64]) -> Result<SummaryCurve> {
    standardize_with(curve, var, Divisor::Variance)
}

/// What the centred K̃ is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divisor {
    /// `Var̂(K̃(r))`, the statistic as defined above.
    #[default]
    Variance,
    /// `sqrt(Var̂(K̃(r)))`, a z-score.
    StdDev,
}

pub fn standardize_with(curve: &SummaryCurve, var: &[f64], divisor: Divisor) -> Result<SummaryCurve> {
    if var.len() != curve.r.len() {
        return domain(format!("{} variances for {} radii", var.len(), curve.r.len()));
    }
    let mut values = Vec::with_capacity(var.len());
    for ((&r, &k), &v) in curve.r.iter().zip(&curve.values).zip(var) {
        let mean = k_theory(r);
        let dev = k - mean;
        let z = if r == 0.0 || (dev.abs() <= 1e-9 * mean && v.abs() <= 1e-12 * mean * mean) {
            0.0
        } else if v > 0.0 && v.is_finite() {
            match divisor {
                Divisor::Variance => dev / v,
                Divisor::StdDev => dev / v.sqrt(),
            }
        } else {
            return domain(format!("variance estimate {v} at r = {r} is not positive"));
        };
        values.push(z);
    }
    let mut meta = curve.meta.clone();
    meta.insert("standardized".into(), "true".into());
    Ok(SummaryCurve { r: curve.r.clone(), values, kind: curve.kind, meta })
}

/// `max_r |z(r)|`.
pub fn statistic_t(std_curve: &SummaryCurve) -> f64 {
    std_curve.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    /// Pointwise minimum and maximum of the null curves.
    #[default]
    MinMax,
    /// Pointwise `α/2` and `1 − α/2` quantiles.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub nsim: usize,
    /// Significance level for the reject flag and the quantile envelope.
    pub alpha: f64,
    #[serde(default)]
    pub envelope: EnvelopeKind,
    #[serde(default = "default_step")]
    pub r_step: f64,
    /// Keep every null standardized curve in the report.
    #[serde(default)]
    pub keep_null_curves: bool,
    #[serde(default)]
    pub divisor: Divisor,
}

fn default_step() -> f64 {
    0.02
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig { nsim: 199, alpha: 0.05, envelope: EnvelopeKind::MinMax, r_step: 0.02, keep_null_curves: false, divisor: Divisor::Variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub replicates: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub surface: String,
    pub area: f64,
    pub n: usize,
    pub rho_hat: f64,
    pub test: TestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub observed_t: f64,
    /// Null statistics; `+∞` marks a replicate without a usable variance
    /// estimate and is `null` in JSON.
    #[serde(with = "inf_as_null")]
    pub null_ts: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub envelope: Envelope,
    /// Observed K̃.
    pub observed: SummaryCurve,
    pub observed_std: SummaryCurve,
    pub theoretical: Vec<f64>,
    pub plugin_variance: Vec<f64>,
    /// Pointwise mean of the null standardized curves.
    pub null_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_curves: Option<Vec<Vec<f64>>>,
    /// Exact K̃ moments under CSR with intensity ρ̂.
    pub moments: Vec<MomentReport>,
    pub seeds: Seeds,
    pub config: ConfigSnapshot,
    pub warnings: Vec<String>,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let o: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        o.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let o: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(o.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

type GeomKey = (String, u64, Vec<u64>);

fn geometry_cache() -> &'static Mutex<HashMap<GeomKey, Arc<KTildeGeometry>>> {
    static CACHE: OnceLock<Mutex<HashMap<GeomKey, Arc<KTildeGeometry>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// K̃ geometry integrals on `grid`, computed once per surface and grid.
pub fn ktilde_geometry_cached(factor: &ShapeFactor, grid: &RGrid) -> Result<Arc<KTildeGeometry>> {
    let s = factor.surface();
    let key = (s.descriptor(), s.surface_area().to_bits(), grid.values().iter().map(|r| r.to_bits()).collect());
    if let Some(g) = geometry_cache().lock().expect("cache lock").get(&key) {
        return Ok(g.clone());
    }
    let g = Arc::new(KTildeGeometry::new(factor, grid.values())?);
    geometry_cache().lock().expect("cache lock").insert(key, g.clone());
    Ok(g)
}

struct Evaluated {
    curve: SummaryCurve,
    var: Vec<f64>,
    std: SummaryCurve,
    t: f64,
}

fn evaluate(sp: &SpherePattern, factor: &ShapeFactor, geom: &KTildeGeometry, grid: &RGrid, divisor: Divisor) -> Result<Evaluated> {
    let curve = ktilde_inhom(sp, factor, grid);
    let parts = PluginParts::new(sp.len() as u64, geom.area);
    let var: Vec<f64> = (0..grid.len()).map(|i| parts.combine(geom, i)).collect();
    let std = standardize_with(&curve, &var, divisor)?;
    let t = statistic_t(&std);
    Ok(Evaluated { curve, var, std, t })
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo CSR test with default settings apart from `nsim` and `alpha`.
pub fn csr_test(pattern: &SurfacePattern, surface: &ConvexSurface, nsim: usize, alpha: f64, seed: u64) -> Result<TestReport> {
    csr_test_with(pattern, surface, &TestConfig { nsim, alpha, ..TestConfig::default() }, seed)
}

pub fn csr_test_with(pattern: &SurfacePattern, surface: &ConvexSurface, cfg: &TestConfig, seed: u64) -> Result<TestReport> {
    if cfg.nsim < 19 {
        return domain(format!("nsim must be at least 19, got {}", cfg.nsim));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {}", cfg.alpha));
    }
    let off: Vec<usize> = (0..pattern.len()).filter(|&i| !surface.on_surface(pattern.points[i])).collect();
    if !off.is_empty() {
        return domain(format!("points not on {}: indices {:?}", surface.descriptor(), off));
    }
    let grid = RGrid::with_step(cfg.r_step)?;
    let factor = ShapeFactor::new(surface.clone());
    let geom = ktilde_geometry_cached(&factor, &grid)?;
    let area = geom.area;
    let n = pattern.len();
    let rho_hat = n as f64 / area;
    let theoretical: Vec<f64> = grid.values().iter().map(|&r| k_theory(r)).collect();
    let replicates: Vec<u64> = (0..cfg.nsim as u64).map(|i| derive_seed(seed, &[NULL_TAG, i])).collect();
    let snapshot = ConfigSnapshot { surface: surface.descriptor(), area, n, rho_hat, test: cfg.clone() };
    let mut warnings = Vec::new();

    let sp = SpherePattern::from_surface(surface, pattern)?;
    if n < 2 {
        // K̃ and its variance estimate are both 0; nothing to test
        warnings.push(format!("observed pattern has {n} point(s); p-value set to 1"));
        let zeros = vec![0.0; grid.len()];
        let curve = ktilde_inhom(&sp, &factor, &grid);
        return Ok(TestReport {
            observed_t: 0.0,
            null_ts: vec![],
            p_value: 1.0,
            reject: false,
            envelope: Envelope { kind: cfg.envelope, lo: zeros.clone(), hi: zeros.clone() },
            observed_std: SummaryCurve { values: zeros.clone(), ..curve.clone() },
            observed: curve,
            theoretical,
            plugin_variance: zeros.clone(),
            null_mean: zeros,
            null_curves: None,
            moments: vec![],
            seeds: Seeds { master: seed, replicates },
            config: snapshot,
            warnings,
        });
    }
    let obs = evaluate(&sp, &factor, &geom, &grid, cfg.divisor)?;

    // null replicates; a replicate whose variance estimate vanishes counts as
    // exceeding the observed value
    let nulls: Vec<Option<Evaluated>> = replicates
        .par_iter()
        .map(|&s| -> Result<Option<Evaluated>> {
            let p = sim_poisson(surface, rho_hat, s)?;
            let q = SpherePattern::from_surface(surface, &p)?;
            match evaluate(&q, &factor, &geom, &grid, cfg.divisor) {
                Ok(e) => Ok(Some(e)),
                Err(Error::Domain(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let degenerate = nulls.iter().filter(|e| e.is_none()).count();
    if degenerate > 0 {
        warnings.push(format!("{degenerate} null replicate(s) had no usable variance estimate; their T counts as +∞"));
    }
    let null_ts: Vec<f64> = nulls.iter().map(|e| e.as_ref().map_or(f64::INFINITY, |e| e.t)).collect();
    let exceed = null_ts.iter().filter(|&&t| t >= obs.t).count();
    let p_value = (1 + exceed) as f64 / (cfg.nsim + 1) as f64;

    let usable: Vec<&Evaluated> = nulls.iter().flatten().collect();
    let nr = grid.len();
    let mut lo = vec![0.0; nr];
    let mut hi = vec![0.0; nr];
    let mut null_mean = vec![0.0; nr];
    if !usable.is_empty() {
        for j in 0..nr {
            let mut col: Vec<f64> = usable.iter().map(|e| e.std.values[j]).collect();
            null_mean[j] = col.iter().sum::<f64>() / col.len() as f64;
            col.sort_by(|a, b| a.total_cmp(b));
            (lo[j], hi[j]) = match cfg.envelope {
                EnvelopeKind::MinMax => (col[0], col[col.len() - 1]),
                EnvelopeKind::Quantile => (quantile(&col, cfg.alpha / 2.0), quantile(&col, 1.0 - cfg.alpha / 2.0)),
            };
        }
    }
    let null_curves = cfg.keep_null_curves.then(|| usable.iter().map(|e| e.std.values.clone()).collect());
    let moments = (0..nr).map(|i| ktilde_moments_from(&geom, rho_hat, i)).collect::<Result<Vec<_>>>()?;
    if !geom.converged {
        warnings.push("K̃ geometry integrals changed by more than 1e-3 under grid doubling".into());
    }
    Ok(TestReport {
        observed_t: obs.t,
        null_ts,
        p_value,
        reject: p_value <= cfg.alpha,
        envelope: Envelope { kind: cfg.envelope, lo, hi },
        observed: obs.curve,
        observed_std: obs.std,
        theoretical,
        plugin_variance: obs.var,
        null_mean,
        null_curves,
        moments,
        seeds: Seeds { master: seed, replicates },
        config: snapshot,
        warnings,
    })
}

/// A shape in a power manifest: a preset configuration, or the prolate
/// spheroid `a = b` with polar axis chosen so that the area is 4π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeSpec {
    Prolate(Prolate4Pi),
    Config(ShapeConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prolate4Pi {
    pub prolate_a: f64,
}

impl ShapeSpec {
    pub fn build(&self) -> Result<ConvexSurface> {
        match self {
            ShapeSpec::Config(c) => c.build(),
            ShapeSpec::Prolate(p) if p.prolate_a == 1.0 => ShapeConfig::sphere().build(),
            ShapeSpec::Prolate(p) => {
                let c = polar_axis_for_area(p.prolate_a, 4.0 * PI)?;
                ShapeConfig::ellipsoid(p.prolate_a, p.prolate_a, c).build()
            }
        }
    }

    fn label(&self) -> String {
        match self {
            ShapeSpec::Prolate(p) => format!("a={}", p.prolate_a),
            ShapeSpec::Config(c) => c.build().map(|s| s.descriptor()).unwrap_or_else(|_| "invalid".into()),
        }
    }
}

/// Process that generates the observed patterns of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Csr {
        rho: f64,
    },
    Matern1 {
        rho: f64,
        r: f64,
    },
    /// Matérn II with the base intensity solved so the expected count is `mu`.
    Matern2 {
        mu: f64,
        r: f64,
        #[serde(default = "one")]
        mark_rate: f64,
    },
    /// Thomas process with `mu/(λ_D·offspring)` parents; `kappa` absent
    /// means `∞`.
    Thomas {
        mu: f64,
        offspring: f64,
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        bridge: KappaBridge,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Csr { .. } => "csr",
            ModelSpec::Matern1 { .. } => "matern1",
            ModelSpec::Matern2 { .. } => "matern2",
            ModelSpec::Thomas { .. } => "thomas",
        }
    }

    /// Numeric parameters by name; an infinite `kappa` is omitted.
    pub fn params(&self) -> std::collections::BTreeMap<String, f64> {
        let v: Vec<(&str, f64)> = match *self {
            ModelSpec::Csr { rho } => vec![("rho", rho)],
            ModelSpec::Matern1 { rho, r } => vec![("rho", rho), ("r", r)],
            ModelSpec::Matern2 { mu, r, mark_rate } => vec![("mu", mu), ("r", r), ("mark_rate", mark_rate)],
            ModelSpec::Thomas { mu, offspring, kappa, .. } => {
                let mut v = vec![("mu", mu), ("offspring", offspring)];
                v.extend(kappa.map(|k| ("kappa", k)));
                v
            }
        };
        v.into_iter().map(|(k, x)| (k.to_string(), x)).collect()
    }

    fn parameter(&self) -> String {
        match self {
            ModelSpec::Csr { rho } => format!("rho={rho}"),
            ModelSpec::Matern1 { r, .. } => format!("R={r}"),
            ModelSpec::Matern2 { r, .. } => format!("R={r}"),
            ModelSpec::Thomas { kappa, .. } => match kappa {
                Some(k) => format!("kappa={k}"),
                None => "kappa=inf".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub shape: ShapeSpec,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerManifest {
    pub trials: usize,
    pub nsim: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_step")]
    pub r_step: f64,
    #[serde(default)]
    pub divisor: Divisor,
    pub experiments: Vec<ExperimentSpec>,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub experiment: String,
    pub shape: String,
    pub parameter: String,
    pub expectation: f64,
    pub trials: usize,
    pub nsim: usize,
    pub accept: f64,
    pub reject: f64,
    /// Why the experiment was skipped, if it was.
    pub note: String,
}

/// An observed-pattern generator resolved against its surface.
enum Model {
    Csr(f64),
    Matern1(f64, f64),
    Matern2(f64, f64, f64),
    Thomas(ThomasConfig),
}

fn resolve(model: &ModelSpec, surface: &ConvexSurface) -> Result<(Model, f64)> {
    let area = surface.surface_area();
    Ok(match *model {
        ModelSpec::Csr { rho } => (Model::Csr(rho), rho * area),
        ModelSpec::Matern1 { rho, r } => {
            let mu = crate::simulate::expected_count_matern(surface, rho, r, crate::simulate::MaternVariant::I)?;
            (Model::Matern1(rho, r), mu)
        }
        ModelSpec::Matern2 { mu, r, mark_rate } => {
            let rho = if r == 0.0 { mu / area } else { solve_rho_matern2(surface, mu, r)? };
            (Model::Matern2(rho, r, mark_rate), mu)
        }
        ModelSpec::Thomas { mu, offspring, kappa, bridge } => {
            if !(offspring > 0.0) {
                return domain("offspring must be positive");
            }
            let kappa = kappa.unwrap_or(f64::INFINITY);
            let cfg = ThomasConfig { rho_parent: mu / (area * offspring), mean_offspring: offspring, kappa, bridge };
            (Model::Thomas(cfg), mu)
        }
    })
}

fn draw(model: &Model, surface: &ConvexSurface, seed: u64) -> Result<SurfacePattern> {
    match model {
        Model::Csr(rho) => sim_poisson(surface, *rho, seed),
        Model::Matern1(rho, r) => sim_matern1(surface, *rho, *r, seed),
        Model::Matern2(rho, r, m) => sim_matern2(surface, *rho, *r, *m, seed),
        Model::Thomas(cfg) => sim_thomas(surface, cfg, seed),
    }
}

/// One pattern from `model` on `surface`, with the expected count.
pub fn simulate_model(model: &ModelSpec, surface: &ConvexSurface, seed: u64) -> Result<(SurfacePattern, f64)> {
    let (m, mu) = resolve(model, surface)?;
    Ok((draw(&m, surface, seed)?, mu))
}

/// Rejection rate of [`csr_test`] over `trials` observed patterns per
/// experiment. Infeasible experiments are reported with a note and NaN
/// rates. `progress` is called once per finished experiment.
pub fn power_study(manifest: &PowerManifest, progress: &(dyn Fn(&PowerRow) + Sync)) -> Result<Vec<PowerRow>> {
    if manifest.trials == 0 {
        return domain("trials must be positive");
    }
    let cfg = TestConfig { nsim: manifest.nsim, alpha: manifest.alpha, r_step: manifest.r_step, divisor: manifest.divisor, ..TestConfig::default() };
    let mut rows = Vec::with_capacity(manifest.experiments.len());
    for (ei, exp) in manifest.experiments.iter().enumerate() {
        let surface = exp.shape.build()?;
        let base = PowerRow {
            experiment: exp.id.clone(),
            shape: exp.shape.label(),
            parameter: exp.model.parameter(),
            expectation: f64::NAN,
            trials: manifest.trials,
            nsim: manifest.nsim,
            accept: f64::NAN,
            reject: f64::NAN,
            note: String::new(),
        };
        let (model, mu) = match resolve(&exp.model, &surface) {
            Ok(m) => m,
            Err(Error::Infeasible(why)) => {
                let row = PowerRow { note: format!("skipped: {why}"), ..base };
                progress(&row);
                rows.push(row);
                continue;
            }
            Err(e) => return Err(e),
        };
        let rejects = (0..manifest.trials as u64)
            .into_par_iter()
            .map(|t| -> Result<bool> {
                let obs = draw(&model, &surface, derive_seed(manifest.seed, &[OBS_TAG, ei as u64, t]))?;
                let rep = csr_test_with(&obs, &surface, &cfg, derive_seed(manifest.seed, &[TEST_TAG, ei as u64, t]))?;
                Ok(rep.reject)
            })
            .collect::<Result<Vec<bool>>>()?;
        let reject = rejects.iter().filter(|&&r| r).count() as f64 / manifest.trials as f64;
        let row = PowerRow { expectation: mu, accept: 1.0 - reject, reject, ..base };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Power rows as CSV, one line per experiment.
pub fn power_csv(rows: &[PowerRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summaries::{CurveKind, SummaryCurve};

    fn curve(values: Vec<f64>, r: Vec<f64>) -> SummaryCurve {
        SummaryCurve { r, values, kind: CurveKind::KTilde, meta: Default::default() }
    }

    #[test]
    fn standardize_zero_at_theory_and_origin() {
        let r = vec![0.0, 0.5, 1.0];
        let c = curve(r.iter().map(|&r| k_theory(r)).collect(), r);
        let s = standardize(&c, &[0.0, 0.1, 0.2]).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
        assert_eq!(statistic_t(&s), 0.0);
        let bad = curve(vec![0.0, 1.0], vec![0.0, 0.5]);
        assert!(standardize(&bad, &[0.0, 0.0]).is_err());
        assert!(standardize(&bad, &[0.1]).is_err());
    }

    #[test]
    fn std_dev_divisor_is_a_z_score() {
        let c = curve(vec![0.0, k_theory(0.5) + 0.3], vec![0.0, 0.5]);
        let v = standardize(&c, &[0.0, 0.04]).unwrap();
        let z = standardize_with(&c, &[0.0, 0.04], Divisor::StdDev).unwrap();
        assert!((v.values[1] - 7.5).abs() < 1e-12);
        assert!((z.values[1] - 1.5).abs() < 1e-12);
        assert_eq!(z.values[0], 0.0);
    }

    #[test]
    fn statistic_is_absolute_max() {
        let c = curve(vec![0.0, -3.2, 0.0, 1.0], vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(statistic_t(&c), 3.2);
        let flipped = curve(c.values.iter().map(|v| -v).collect(), c.r.clone());
        assert_eq!(statistic_t(&flipped), 3.2);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.375), 2.5);
    }

    #[test]
    fn empty_pattern_gives_unit_p_value() {
        let s = ShapeConfig::sphere().build().unwrap();
        let p = SurfacePattern { points: vec![], surface: "sphere".into(), seed: 0 };
        let rep = csr_test(&p, &s, 19, 0.05, 1).unwrap();
        assert_eq!(rep.p_value, 1.0);
        assert!(!rep.warnings.is_empty());
        assert!(csr_test(&p, &s, 5, 0.05, 1).is_err());
    }

    #[test]
    fn report_invariants() {
        let s = ShapeConfig::sphere().build().unwrap();
        let p = sim_poisson(&s, 5.0, 3).unwrap();
        let rep = csr_test(&p, &s, 39, 0.05, 11).unwrap();
        let exceed = rep.null_ts.iter().filter(|&&t| t >= rep.observed_t).count();
        assert_eq!(rep.p_value, (1 + exceed) as f64 / 40.0);
        assert!(rep.envelope.lo.iter().zip(&rep.envelope.hi).all(|(l, h)| l <= h));
        assert_eq!(rep.null_ts.len(), 39);
        let again = csr_test(&p, &s, 39, 0.05, 11).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn off_surface_points_are_listed() {
        let s = ShapeConfig::sphere().build().unwrap();
        let mut p = sim_poisson(&s, 2.0, 3).unwrap();
        p.points[1] = p.points[1] * 1.1;
        let err = csr_test(&p, &s, 19, 0.05, 1).unwrap_err();
        assert!(err.to_string().contains("[1]"), "{err}");
    }

    #[test]
    fn manifest_shapes_parse() {
        let m: PowerManifest = serde_json::from_str(
            r#"{"trials":2,"nsim":19,"seed":1,"experiments":[
                {"id":"1b","shape":{"prolate_a":0.8},"model":{"type":"csr","rho":10}},
                {"id":"x","shape":{"kind":"cube","l":1},"model":{"type":"thomas","mu":50,"offspring":5,"kappa":0.5,"bridge":"bandwidth"}}]}"#,
        )
        .unwrap();
        assert_eq!(m.experiments.len(), 2);
        assert!((m.experiments[0].shape.build().unwrap().surface_area() - 4.0 * PI).abs() < 1e-6);
        let bad = serde_json::from_str::<PowerManifest>(r#"{"trials":2,"nsim":19,"seed":1,"experiments":[],"extra":1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn infeasible_matern_row_is_skipped() {
        let m = PowerManifest {
            trials: 1,
            nsim: 19,
            alpha: 0.05,
            seed: 1,
            r_step: 0.1,
            divisor: Divisor::Variance,
            experiments: vec![ExperimentSpec {
                id: "big".into(),
                shape: ShapeSpec::Config(ShapeConfig::sphere()),
                model: ModelSpec::Matern2 { mu: 1e4, r: 0.3, mark_rate: 1.0 },
            }],
        };
        let rows = power_study(&m, &|_| {}).unwrap();
        assert!(rows[0].note.starts_with("skipped"));
        assert!(rows[0].reject.is_nan());
    }
}
