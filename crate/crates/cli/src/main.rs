//! `convexppp` command-line driver.

mod manifest;
mod svg;

use clap::Parser;
use convexppp::geometry::ConvexSurface;
use convexppp::io::{self, PatternMeta};
use convexppp::mapping::{IntensityField, ShapeFactor};
use convexppp::simulate::SurfacePattern;
use convexppp::summaries::{fhat_inhom, fibonacci_grid, hhat_inhom, jhat_inhom, khat_inhom, ktilde_inhom, RGrid, SpherePattern};
use convexppp::testing::{csr_test_with, power_csv, power_study, simulate_model, TestReport};
use manifest::{Command, RunManifest};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "convexppp", version, about = "CSR tests for point patterns on convex surfaces")]
struct Cli {
    /// Command to run; defaults to the manifest's `command`.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo batches.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Pattern CSV for `curves` and `test`.
    #[arg(long)]
    pattern: Option<PathBuf>,
    /// Also write an SVG plot of the test.
    #[arg(long)]
    svg: bool,
    /// Exit with code 3 when the test rejects at this level.
    #[arg(long)]
    gate: Option<f64>,
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<convexppp::Error> for Failure {
    fn from(e: convexppp::Error) -> Self {
        match e {
            convexppp::Error::Internal(_) | convexppp::Error::Stall(_) => Failure::Internal(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Input(e)
    }
}

impl From<&str> for Failure {
    fn from(e: &str) -> Self {
        Failure::Input(e.into())
    }
}

type Outcome = Result<ExitCode, Failure>;

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    manifest_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

struct Ctx {
    m: RunManifest,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn surface(&self) -> Result<ConvexSurface, Failure> {
        Ok(self.m.shape.as_ref().ok_or("manifest has no [shape]")?.build()?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), Failure> {
        Ok(io::write_json(&self.path(name), &Stamped { manifest_hash: &self.hash, body })?)
    }

    /// The observed pattern: the pattern file if given, else a draw from the
    /// manifest's model.
    fn observed(&self, surface: &ConvexSurface) -> Result<SurfacePattern, Failure> {
        if let Some(p) = &self.m.pattern {
            let (points, _) = io::read_pattern(p)?;
            return Ok(SurfacePattern { points, surface: surface.descriptor(), seed: self.m.seed });
        }
        let model = self.m.model.as_ref().ok_or("need a pattern file or a [model]")?;
        Ok(simulate_model(model, surface, self.m.seed)?.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut m = match &cli.manifest {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    let command = match (cli.command, m.command) {
        (Some(a), Some(b)) if a != b => return Err(format!("command {a:?} conflicts with manifest command {b:?}").into()),
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err("no command given".into()),
    };
    m.command = Some(command);
    if let Some(s) = cli.seed {
        m.seed = s;
    }
    if let Some(p) = cli.pattern {
        m.pattern = Some(p);
    }
    if let Some(d) = cli.out_dir {
        m.out_dir = Some(d);
    }
    if let Some(g) = cli.gate {
        if !(g > 0.0 && g < 1.0) {
            return Err(format!("--gate must lie in (0, 1), got {g}").into());
        }
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let out = m.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    let ctx = Ctx { hash: m.hash(), m, out };
    match command {
        Command::Simulate => simulate(&ctx),
        Command::Curves => curves(&ctx),
        Command::Test => test(&ctx, cli.svg, cli.gate),
        Command::Power => power(&ctx),
        Command::ShapeInfo => shape_info(&ctx),
    }
}

fn simulate(ctx: &Ctx) -> Outcome {
    let surface = ctx.surface()?;
    let model = ctx.m.model.as_ref().ok_or("simulate needs a [model]")?;
    let (pattern, _) = simulate_model(model, &surface, ctx.m.seed)?;
    let meta = PatternMeta {
        shape: ctx.m.shape.clone().expect("checked by surface()"),
        model: model.name().into(),
        params: model.params(),
        seed: ctx.m.seed,
        manifest_hash: Some(ctx.hash.clone()),
    };
    io::write_pattern(&ctx.path("pattern.csv"), &pattern, &meta)?;
    println!("{} points -> {}", pattern.len(), ctx.path("pattern.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn curves(ctx: &Ctx) -> Outcome {
    let surface = ctx.surface()?;
    let pattern = ctx.observed(&surface)?;
    let sp = SpherePattern::from_surface(&surface, &pattern)?;
    let grid = RGrid::with_step(ctx.m.r_step)?;
    let rho = ctx.m.rho.unwrap_or(pattern.len() as f64 / surface.surface_area());
    let mut all = Vec::new();
    let stamp = |mut c: convexppp::SummaryCurve| {
        c.meta.insert("manifest_hash".into(), ctx.hash.clone());
        c
    };
    if rho > 0.0 {
        let field = IntensityField::mapped_constant(&surface, rho)?;
        let rho_bar = field.inf_value();
        let k = khat_inhom(&sp, &field, &grid)?;
        let f = fhat_inhom(&sp, &field, rho_bar, &fibonacci_grid(ctx.m.grid_points)?, &grid)?;
        let h = hhat_inhom(&sp, &field, rho_bar, &grid)?;
        let j = jhat_inhom(&f, &h)?;
        for (name, c) in [("k", k), ("f", f), ("h", h), ("j", j)] {
            let c = stamp(c);
            io::write_curve(&ctx.path(&format!("{name}.csv")), &c)?;
            all.push(c);
        }
    } else {
        eprintln!("warning: intensity is 0; only K̃ is written");
    }
    let kt = stamp(ktilde_inhom(&sp, &ShapeFactor::new(surface), &grid));
    io::write_curve(&ctx.path("ktilde.csv"), &kt)?;
    all.push(kt);
    ctx.json("curves.json", &serde_json::json!({ "curves": all }))?;
    Ok(ExitCode::SUCCESS)
}

fn standardized_csv(rep: &TestReport) -> String {
    let mut s = String::from("r,ktilde,theoretical,variance,standardized,lo,hi,null_mean\n");
    for i in 0..rep.observed.r.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            rep.observed.r[i],
            rep.observed.values[i],
            rep.theoretical[i],
            rep.plugin_variance[i],
            rep.observed_std.values[i],
            rep.envelope.lo[i],
            rep.envelope.hi[i],
            rep.null_mean[i]
        ));
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn test(ctx: &Ctx, svg: bool, gate: Option<f64>) -> Outcome {
    let surface = ctx.surface()?;
    let pattern = ctx.observed(&surface)?;
    let rep = csr_test_with(&pattern, &surface, &ctx.m.test_config(), ctx.m.seed)?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    ctx.json("report.json", &rep)?;
    write_text(&ctx.path("standardized.csv"), &standardized_csv(&rep))?;
    if svg {
        write_text(&ctx.path("test.svg"), &svg::report_svg(&rep))?;
    }
    println!("T = {} p = {}", rep.observed_t, rep.p_value);
    Ok(match gate {
        Some(a) if rep.p_value <= a => ExitCode::from(3),
        _ => ExitCode::SUCCESS,
    })
}

fn power(ctx: &Ctx) -> Outcome {
    let pm = ctx.m.power_manifest()?;
    let rows = power_study(&pm, &|row| {
        if row.note.is_empty() {
            eprintln!("{} {} {}: reject {:.4} over {} trials", row.experiment, row.shape, row.parameter, row.reject, row.trials);
        } else {
            eprintln!("{} {} {}: {}", row.experiment, row.shape, row.parameter, row.note);
        }
    })?;
    write_text(&ctx.path("power.csv"), &power_csv(&rows)?)?;
    ctx.json("power.json", &serde_json::json!({ "rows": rows }))?;
    Ok(ExitCode::SUCCESS)
}

fn shape_info(ctx: &Ctx) -> Outcome {
    let surface = ctx.surface()?;
    let factor = ShapeFactor::new(surface.clone());
    let (inf, approx) = factor.infimum();
    let info = serde_json::json!({
        "descriptor": surface.descriptor(),
        "area": surface.surface_area(),
        "shape_factor_inf": inf,
        "shape_factor_inf_approximate": approx,
        "symmetry": format!("{:?}", factor.symmetry()),
    });
    ctx.json("shape.json", &info)?;
    println!("{}", serde_json::to_string_pretty(&info).expect("json value serializes"));
    Ok(ExitCode::SUCCESS)
}
