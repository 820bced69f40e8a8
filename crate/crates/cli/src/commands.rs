use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use grf_core::covariance::{CovarianceModel, Kernel1D};
use grf_core::multiscale::{refine_with_report, RefinementState};
use grf_core::oracle::{
    build_cov_matrix, cmd_sample, covariance_profile, expected_profile, flop_estimate, max_deviation,
    stepwise_cmd_sample, target_profile, Direction, Method, DEFAULT_CMD_CAP,
};
use grf_core::sampler::{generate_with_filters, FieldGrid, FieldMeta, NoiseGrid, GENERATOR_VERSION};
use grf_core::spectral::{design_filter, DualStart, FilterDesign, FilterOptions, RationalFilter1D};
use serde::Serialize;

use crate::docs::{now_unix, relative_to_manifest, write_json, FilterDoc, Manifest, ModelDoc};
use crate::error::{CliError, CliResult};
use crate::format::{checksum, write_atomic, GridFile, GridKind};

/// Profiles are judged only where the target is at least this fraction of σ².
pub const SUMMARY_FLOOR: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "grf", version, about = "Gaussian random fields by per-axis rational filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a realization.
    Gen(GenArgs),
    /// Refine a stored realization to halved sampling distances.
    Refine(RefineArgs),
    /// Compare sample covariance profiles with the model.
    Validate(ValidateArgs),
    /// Build a 1-d shaping filter and write its document.
    Spectrum(SpectrumArgs),
    /// Time the samplers and report flop estimates.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Kernel per axis: exp or gauss (one value applies to every axis).
    #[arg(long, value_delimiter = ',', default_value = "exp")]
    pub cov: Vec<String>,
    /// Total field variance σ².
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Sampling distances.
    #[arg(long = "T", value_delimiter = ',')]
    pub t: Vec<f64>,
    /// ARMA numerator shared by all Gaussian axes.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1")]
    pub b: Vec<f64>,
    /// Denominator orders per axis (default: dominant lag count).
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Burn-in fraction.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the full driving noise (needed by `refine`).
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Manifest path (default: OUT with extension .json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Manifest of the state to refine.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub levels: u32,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix; files are PREFIX.L<level>.{grf,noise.grf,json}.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Field to analyse; without it, --trials fields are generated from the model flags.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Manifest describing the model of --in (default: the field's .json sibling).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Directions: x, y, z, axisN, diag.
    #[arg(long, value_delimiter = ',')]
    pub dirs: Vec<String>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Prefix for PREFIX_<dir>.csv and PREFIX_summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script PREFIX.gp.
    #[arg(long, requires = "out")]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long, default_value = "exp")]
    pub cov: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long = "T")]
    pub t: f64,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1")]
    pub b: Vec<f64>,
    /// Newton start for the dual: levinson or flat.
    #[arg(long, default_value = "levinson")]
    pub start: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Per-axis extents; each size N runs an N×…×N grid.
    #[arg(long, value_delimiter = ',', default_value = "32,64")]
    pub sizes: Vec<usize>,
    /// realization, stepwise, cmd, circulant.
    #[arg(long, value_delimiter = ',', default_value = "realization")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append the rows for N = 100³ and C = 512³.
    #[arg(long)]
    pub reference_rows: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn default_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("GRF_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("GRF_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn arity<T: Clone>(name: &str, v: &[T], d: usize) -> CliResult<Vec<T>> {
    if v.len() == d {
        Ok(v.to_vec())
    } else {
        Err(usage(format!("--{name} has {} values but the grid has {d} dimensions", v.len())))
    }
}

pub fn kernel(kind: &str, sigma2: f64, alpha: f64) -> CliResult<Kernel1D> {
    let k = match kind {
        "exp" | "exponential" => Kernel1D::exponential(sigma2, alpha),
        "gauss" | "gaussian" => Kernel1D::gaussian(sigma2, alpha),
        other => return Err(usage(format!("unknown covariance {other:?} (expected exp or gauss)"))),
    };
    k.map_err(|e| usage(e.to_string()))
}

impl ModelArgs {
    /// σ² goes on the first axis kernel, the others carry unit variance.
    pub fn build(&self, t: &[f64]) -> CliResult<CovarianceModel> {
        let d = t.len();
        let alpha = arity("alpha", &self.alpha, d)?;
        let cov = if self.cov.len() == 1 { vec![self.cov[0].clone(); d] } else { arity("cov", &self.cov, d)? };
        let kernels = (0..d)
            .map(|j| kernel(&cov[j], if j == 0 { self.sigma2 } else { 1.0 }, alpha[j]))
            .collect::<CliResult<_>>()?;
        CovarianceModel::new(kernels, t.to_vec()).map_err(|e| usage(e.to_string()))
    }

    pub fn filter_options(&self, d: usize) -> CliResult<Vec<FilterOptions>> {
        let m: Vec<Option<usize>> = if self.m.is_empty() {
            vec![None; d]
        } else {
            arity("m", &self.m, d)?.into_iter().map(Some).collect()
        };
        Ok(m.into_iter().map(|m| FilterOptions { b: self.b.clone(), m, ..FilterOptions::default() }).collect())
    }

    fn is_set(&self) -> bool {
        !self.alpha.is_empty()
    }
}

fn designs(model: &CovarianceModel, opts: &[FilterOptions]) -> CliResult<Vec<FilterDesign>> {
    model
        .kernels
        .iter()
        .zip(&model.t)
        .zip(opts)
        .map(|((k, &t), o)| Ok(design_filter(k, t, o)?))
        .collect()
}

fn filter_docs(model: &CovarianceModel, designs: &[FilterDesign]) -> CliResult<Vec<FilterDoc>> {
    model.kernels.iter().zip(&model.t).zip(designs).map(|((k, &t), d)| FilterDoc::from_design(k, t, d)).collect()
}

fn plain_docs(model: &CovarianceModel, filters: &[RationalFilter1D]) -> CliResult<Vec<FilterDoc>> {
    let designs: Vec<FilterDesign> = filters
        .iter()
        .map(|f| FilterDesign { filter: f.clone(), cov_seq: Vec::new(), density: None, report: None })
        .collect();
    let mut docs = filter_docs(model, &designs)?;
    for d in &mut docs {
        d.cov_seq = None;
    }
    Ok(docs)
}

pub fn manifest_path_for(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn argv() -> Vec<String> {
    std::env::args().skip(1).collect()
}

pub fn run_gen(a: &GenArgs) -> CliResult<()> {
    let d = a.n.len();
    if a.n.iter().any(|&n| n == 0) {
        return Err(usage("--N extents must be positive"));
    }
    let t = arity("T", &a.model.t, d)?;
    let model = a.model.build(&t)?;
    let seed = default_seed(a.seed)?;
    if !(a.beta >= 0.0 && a.beta.is_finite()) {
        return Err(usage("--beta must be a finite value ≥ 0"));
    }
    let start = Instant::now();
    let designs = designs(&model, &a.model.filter_options(d)?)?;
    let filters: Vec<RationalFilter1D> = designs.iter().map(|x| x.filter.clone()).collect();
    let (field, noise) = generate_with_filters(&model, &filters, &a.n, seed, a.beta)?;
    let elapsed = start.elapsed().as_secs_f64();

    GridFile { n: field.n.clone(), t: field.t.clone(), kind: GridKind::Field, data: field.data.clone() }.write(&a.out)?;
    let mpath = a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.out));
    if let Some(np) = &a.noise {
        GridFile { n: noise.n.clone(), t: noise.t.clone(), kind: GridKind::Noise, data: noise.data }.write(np)?;
    }
    let sum = checksum(&field.data);
    let manifest = Manifest {
        tool: "grf".into(),
        version: GENERATOR_VERSION.into(),
        command: "gen".into(),
        argv: argv(),
        model: ModelDoc::from_model(&model)?,
        n: a.n.clone(),
        seed,
        beta: Some(a.beta),
        numerator: a.model.b.clone(),
        filter_orders: filters.iter().map(|f| f.m()).collect(),
        filters: filter_docs(&model, &designs)?,
        scale_level: 0,
        field: relative_to_manifest(&mpath, &a.out),
        noise: a.noise.as_ref().map(|p| relative_to_manifest(&mpath, p)),
        field_sha256: sum.clone(),
        parent: None,
        interpolation_error: None,
        created_unix: now_unix(),
        notes: Vec::new(),
    };
    manifest.write(&mpath)?;
    println!("wrote {} ({:?}, seed {seed}) in {elapsed:.3} s", a.out.display(), a.n);
    println!("sha256 {sum}");
    Ok(())
}

/// Reads a state's field and noise files and checks them against the manifest.
pub fn load_state(path: &Path) -> CliResult<(Manifest, RefinementState)> {
    let m = Manifest::read(path)?;
    let field_path = m.resolve(path, &m.field);
    let rerun = format!("grf {}", m.argv.join(" "));
    let noise_path = match &m.noise {
        Some(n) => m.resolve(path, n),
        None => {
            return Err(CliError::Usage(format!(
                "{} records no noise file; regenerate with `{rerun} --noise <file>`",
                path.display()
            )))
        }
    };
    if !noise_path.exists() {
        return Err(CliError::Usage(format!(
            "noise file {} is missing; regenerate it with `{rerun}`",
            noise_path.display()
        )));
    }
    let fg = GridFile::read(&field_path)?;
    let ng = GridFile::read(&noise_path)?;
    if fg.kind != GridKind::Field || ng.kind != GridKind::Noise {
        return Err(CliError::Format("state files have the wrong payload tags".into()));
    }
    if fg.n != m.n {
        return Err(CliError::Format(format!("field shape {:?} differs from manifest {:?}", fg.n, m.n)));
    }
    if checksum(&fg.data) != m.field_sha256 {
        return Err(CliError::Format(format!("{} does not match the manifest checksum", field_path.display())));
    }
    let model = m.model.to_model()?;
    let filters = m.filters.iter().map(FilterDoc::filter).collect::<CliResult<Vec<_>>>()?;
    let field = FieldGrid {
        n: fg.n,
        t: fg.t,
        data: fg.data,
        meta: FieldMeta { seed: m.seed, scale_level: m.scale_level, generator: m.version.clone() },
    };
    let noise = NoiseGrid { n: ng.n, t: ng.t, data: ng.data, seed: m.seed };
    let state = RefinementState::new(field, noise, model, filters)?;
    Ok((m, state))
}

/// `dir/name.L3` → `dir/name`.
fn strip_level(p: &Path) -> PathBuf {
    let s = p.to_string_lossy();
    match s.rfind(".L") {
        Some(i) if s[i + 2..].chars().all(|c| c.is_ascii_digit()) && i + 2 < s.len() => PathBuf::from(&s[..i]),
        _ => p.to_path_buf(),
    }
}

pub fn run_refine(a: &RefineArgs) -> CliResult<()> {
    let (mut manifest, mut state) = load_state(&a.state)?;
    if a.levels == 0 {
        println!("nothing to do (--levels 0)");
        return Ok(());
    }
    let seed = default_seed(a.seed)?;
    let base = match &a.out_prefix {
        Some(p) => p.clone(),
        None => strip_level(&manifest.resolve(&a.state, &manifest.field).with_extension("")),
    };
    let mut parent = a.state.clone();
    for k in 0..a.levels {
        let level_seed = seed.wrapping_add(k as u64);
        let start = Instant::now();
        let (field, next, report) = refine_with_report(&state, level_seed)?;
        let elapsed = start.elapsed().as_secs_f64();
        if !(report.interpolation_error <= 1e-9) {
            return Err(CliError::Core(grf_core::GrfError::InconsistentState(format!(
                "refined field misses coarse samples by {:.3e}",
                report.interpolation_error
            ))));
        }
        let level = field.meta.scale_level;
        let stem = format!("{}.L{level}", base.display());
        let (fpath, npath, mpath) =
            (PathBuf::from(format!("{stem}.grf")), PathBuf::from(format!("{stem}.noise.grf")), PathBuf::from(format!("{stem}.json")));
        GridFile { n: field.n.clone(), t: field.t.clone(), kind: GridKind::Field, data: field.data.clone() }.write(&fpath)?;
        GridFile { n: next.noise.n.clone(), t: next.noise.t.clone(), kind: GridKind::Noise, data: next.noise.data.clone() }
            .write(&npath)?;
        let child = Manifest {
            command: "refine".into(),
            argv: argv(),
            version: GENERATOR_VERSION.into(),
            model: ModelDoc::from_model(&next.model)?,
            n: field.n.clone(),
            seed: level_seed,
            beta: None,
            filter_orders: next.filters.iter().map(|f| f.m()).collect(),
            filters: plain_docs(&next.model, &next.filters)?,
            scale_level: level,
            field: relative_to_manifest(&mpath, &fpath),
            noise: Some(relative_to_manifest(&mpath, &npath)),
            field_sha256: checksum(&field.data),
            parent: Some(relative_to_manifest(&mpath, &parent)),
            interpolation_error: Some(report.interpolation_error),
            created_unix: now_unix(),
            notes: vec![format!(
                "{} boundary values drawn from the conditional law (rank {})",
                report.boundary_len, report.boundary_rank
            )],
            ..manifest.clone()
        };
        child.write(&mpath)?;
        println!(
            "level {level}: {:?} -> {} in {elapsed:.3} s, max |fine - coarse| at coarse points {:.2e}",
            field.n,
            fpath.display(),
            report.interpolation_error
        );
        manifest = child;
        state = next;
        parent = mpath;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionSummary {
    pub direction: String,
    pub max_lag: usize,
    /// Largest |averaged profile − ρ| over lags with ρ ≥ 0.05σ².
    pub max_dev: f64,
    /// Same, measured against the estimator's expectation ρ(k)·∏(N_j−k_j)/|N|.
    pub max_dev_expected: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSummary {
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub trials: u64,
    pub directions: Vec<DirectionSummary>,
}

pub struct Profile {
    pub direction: Direction,
    pub distance: Vec<f64>,
    pub sample: Vec<f64>,
    pub target: Vec<f64>,
    pub expected: Vec<f64>,
}

pub fn parse_dirs(names: &[String], d: usize) -> CliResult<Vec<Direction>> {
    if names.is_empty() {
        let mut v: Vec<Direction> = (0..d).map(Direction::Axis).collect();
        if d >= 2 {
            v.push(Direction::Diagonal);
        }
        return Ok(v);
    }
    names
        .iter()
        .map(|s| match Direction::parse(s) {
            Some(Direction::Axis(j)) if j >= d => Err(usage(format!("direction {s} is invalid for a {d}-d field"))),
            Some(dir) => Ok(dir),
            None => Err(usage(format!("unknown direction {s:?}"))),
        })
        .collect()
}

/// Averages covariance profiles over `fields`.
pub fn profiles(
    model: &CovarianceModel,
    fields: &[FieldGrid],
    dirs: &[Direction],
    max_lag: Option<usize>,
) -> CliResult<Vec<Profile>> {
    let n = &fields[0].n;
    dirs.iter()
        .map(|&dir| {
            let lmax = max_lag.unwrap_or(usize::MAX).min(dir.max_lag(n));
            let mut sample = vec![0.0; lmax + 1];
            for f in fields {
                for (s, v) in sample.iter_mut().zip(covariance_profile(f, dir, lmax)?) {
                    *s += v / fields.len() as f64;
                }
            }
            Ok(Profile {
                direction: dir,
                distance: (0..=lmax).map(|k| dir.distance(&model.t, k)).collect(),
                sample,
                target: target_profile(model, dir, lmax)?,
                expected: expected_profile(model, n, dir, lmax)?,
            })
        })
        .collect()
}

pub fn summarize(model: &CovarianceModel, p: &Profile) -> DirectionSummary {
    let s2 = model.variance();
    let floor = SUMMARY_FLOOR * s2;
    DirectionSummary {
        direction: p.direction.name(),
        max_lag: p.sample.len() - 1,
        max_dev: max_deviation(&p.sample, &p.target, &p.target, floor),
        max_dev_expected: max_deviation(&p.sample, &p.expected, &p.target, floor),
        sigma2: s2,
    }
}

pub fn profile_csv(p: &Profile) -> String {
    let mut s = String::from("lag,distance,sample_cov,target_cov\n");
    for k in 0..p.sample.len() {
        s.push_str(&format!("{k},{},{},{}\n", p.distance[k], p.sample[k], p.target[k]));
    }
    s
}

pub fn plot_script(csvs: &[(String, PathBuf)]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key top right\nset xlabel 'distance'\nset ylabel 'covariance'\nset grid\nplot \\\n",
    );
    let lines: Vec<String> = csvs
        .iter()
        .map(|(name, path)| {
            let f = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
            format!(
                "  '{f}' using 2:3 every ::1 with points title '{name} sample', \\\n  '{f}' using 2:4 every ::1 with lines title '{name} target'"
            )
        })
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s
}

pub fn run_validate(a: &ValidateArgs) -> CliResult<()> {
    let (model, fields) = match &a.input {
        Some(path) => {
            let g = GridFile::read(path)?;
            let model = if a.model.is_set() {
                let t = if a.model.t.is_empty() { g.t.clone() } else { arity("T", &a.model.t, g.n.len())? };
                a.model.build(&t)?
            } else {
                let mpath = a.manifest.clone().unwrap_or_else(|| manifest_path_for(path));
                if !mpath.exists() {
                    return Err(usage(format!(
                        "no model given: pass --alpha/--cov or a manifest ({} not found)",
                        mpath.display()
                    )));
                }
                Manifest::read(&mpath)?.model.to_model()?
            };
            if model.dims() != g.n.len() {
                return Err(usage(format!("model has {} axes, field has {}", model.dims(), g.n.len())));
            }
            let meta = FieldMeta { seed: 0, scale_level: 0, generator: String::new() };
            (model, vec![FieldGrid { n: g.n, t: g.t, data: g.data, meta }])
        }
        None => {
            if a.n.is_empty() || !a.model.is_set() {
                return Err(usage("validate needs --in FILE, or --N with model flags"));
            }
            let d = a.n.len();
            let model = a.model.build(&arity("T", &a.model.t, d)?)?;
            if a.trials == 0 {
                return Err(usage("--trials must be positive"));
            }
            let seed = default_seed(a.seed)?;
            let filters: Vec<RationalFilter1D> =
                designs(&model, &a.model.filter_options(d)?)?.into_iter().map(|x| x.filter).collect();
            let fields = (0..a.trials)
                .map(|i| Ok(generate_with_filters(&model, &filters, &a.n, seed.wrapping_add(i), a.beta)?.0))
                .collect::<CliResult<Vec<_>>>()?;
            (model, fields)
        }
    };
    let dirs = parse_dirs(&a.dirs, model.dims())?;
    let profs = profiles(&model, &fields, &dirs, a.max_lag)?;
    let summary = ValidateSummary {
        n: fields[0].n.clone(),
        trials: fields.len() as u64,
        directions: profs.iter().map(|p| summarize(&model, p)).collect(),
    };
    for s in &summary.directions {
        println!(
            "{:>5}: lags 0..={:<4} max |avg - target| {:.4}  max |avg - expected| {:.4}  (lags with target >= {}σ², σ² = {})",
            s.direction, s.max_lag, s.max_dev, s.max_dev_expected, SUMMARY_FLOOR, s.sigma2
        );
    }
    if let Some(prefix) = &a.out {
        let mut csvs = Vec::new();
        for p in &profs {
            let path = PathBuf::from(format!("{}_{}.csv", prefix.display(), p.direction.name()));
            write_atomic(&path, profile_csv(p).as_bytes())?;
            csvs.push((p.direction.name(), path));
        }
        write_json(&PathBuf::from(format!("{}_summary.json", prefix.display())), &summary)?;
        if a.plot {
            let gp = PathBuf::from(format!("{}.gp", prefix.display()));
            write_atomic(&gp, plot_script(&csvs).as_bytes())?;
        }
    }
    Ok(())
}

pub fn run_spectrum(a: &SpectrumArgs) -> CliResult<()> {
    let k = kernel(&a.cov, a.sigma2, a.alpha)?;
    let start = match a.start.as_str() {
        "levinson" => DualStart::Levinson,
        "flat" => DualStart::Flat,
        other => return Err(usage(format!("unknown --start {other:?} (levinson or flat)"))),
    };
    let opts = FilterOptions { b: a.b.clone(), m: a.m, start, ..FilterOptions::default() };
    let design = design_filter(&k, a.t, &opts)?;
    let doc = FilterDoc::from_design(&k, a.t, &design)?;
    match &a.out {
        Some(p) => {
            write_json(p, &doc)?;
            println!("wrote {} (m = {}, n = {})", p.display(), doc.m, doc.n);
        }
        None => println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| CliError::Format(e.to_string()))?),
    }
    if let Some(r) = &design.report {
        let worst = r.moment_residuals.iter().fold(0.0f64, |x, v| x.max(v.abs()));
        eprintln!("dual: {} Newton iterations, max moment residual {worst:.2e}", r.iterations);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: String,
    pub n: Vec<usize>,
    pub seconds: Option<f64>,
    pub flops: f64,
    pub ratio: Option<f64>,
    pub note: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn time_reps(reps: usize, mut f: impl FnMut() -> CliResult<()>) -> CliResult<f64> {
    let mut t = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let s = Instant::now();
        f()?;
        t.push(s.elapsed().as_secs_f64());
    }
    Ok(median(t))
}

/// Per-axis circulant size: smallest power of two ≥ 2N.
pub fn circulant_extent(n: usize) -> usize {
    (2 * n).next_power_of_two()
}

/// Exponential model with the 3-d experiment's distances (1/12, 1/10, 1/8), 0.1 on further axes.
pub fn bench_model(d: usize) -> CovarianceModel {
    let t: Vec<f64> = (0..d).map(|j| [1.0 / 12.0, 0.1, 0.125].get(j).copied().unwrap_or(0.1)).collect();
    CovarianceModel::new(vec![Kernel1D::exponential(1.0, 1.0).unwrap(); d], t).unwrap()
}

/// Median wall time of `generate` for an N^d grid (filters built beforehand).
pub fn time_realization(d: usize, n: usize, reps: usize, beta: f64, seed: u64) -> CliResult<f64> {
    let model = bench_model(d);
    let filters = grf_core::sampler::build_filters(&model, &[])?;
    let shape = vec![n; d];
    time_reps(reps, || {
        generate_with_filters(&model, &filters, &shape, seed, beta)?;
        Ok(())
    })
}

pub fn bench_rows(a: &BenchArgs) -> CliResult<Vec<BenchRow>> {
    if a.dims == 0 || a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(usage("--dims and --sizes must be positive"));
    }
    let seed = default_seed(a.seed)?;
    let d = a.dims;
    let model = bench_model(d);
    let mut rows = Vec::new();
    for method in &a.methods {
        let mut prev: Option<f64> = None;
        for &n in &a.sizes {
            let shape = vec![n; d];
            let total: usize = shape.iter().product();
            let c: Vec<usize> = shape.iter().map(|&v| circulant_extent(v)).collect();
            let (m, seconds, note) = match method.as_str() {
                "realization" => (Method::Realization, Some(time_realization(d, n, a.reps, a.beta, seed)?), String::new()),
                "stepwise" => {
                    if n > 512 {
                        (Method::StepwiseCmd, None, "skipped: per-axis extent above 512".to_string())
                    } else {
                        let t = time_reps(a.reps, || {
                            stepwise_cmd_sample(&model, &shape, seed)?;
                            Ok(())
                        })?;
                        (Method::StepwiseCmd, Some(t), String::new())
                    }
                }
                "cmd" => {
                    if total > DEFAULT_CMD_CAP {
                        (Method::Cmd, None, format!("skipped: {total} unknowns above the dense cap {DEFAULT_CMD_CAP}"))
                    } else {
                        let t = time_reps(a.reps, || {
                            cmd_sample(&build_cov_matrix(&model, &shape)?, seed)?;
                            Ok(())
                        })?;
                        (Method::Cmd, Some(t), String::new())
                    }
                }
                "circulant" => (Method::Circulant, None, format!("flop estimate only, C = {}", c[0])),
                other => return Err(usage(format!("unknown method {other:?}"))),
            };
            let ratio = match (prev, seconds) {
                (Some(p), Some(s)) if p > 0.0 => Some(s / p),
                _ => None,
            };
            if seconds.is_some() {
                prev = seconds;
            }
            rows.push(BenchRow { method: method.clone(), n: shape.clone(), seconds, flops: flop_estimate(m, &shape, &c), ratio, note });
        }
    }
    if a.reference_rows {
        let n = [100, 100, 100];
        let c = [512, 512, 512];
        for (name, m) in [("cmd", Method::Cmd), ("stepwise", Method::StepwiseCmd), ("circulant", Method::Circulant), ("realization", Method::Realization)] {
            rows.push(BenchRow {
                method: name.into(),
                n: n.to_vec(),
                seconds: None,
                flops: flop_estimate(m, &n, &c),
                ratio: None,
                note: "reference row, circulant C = 512".into(),
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("method,size,points,seconds,flops,time_ratio,note\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        let size: Vec<String> = r.n.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!(
            "{},{},{},{},{:.2e},{},{}\n",
            r.method,
            size.join("x"),
            r.n.iter().product::<usize>(),
            opt(r.seconds),
            r.flops,
            opt(r.ratio),
            r.note
        ));
    }
    s
}

pub fn run_bench(a: &BenchArgs) -> CliResult<()> {
    let csv = bench_csv(&bench_rows(a)?);
    print!("{csv}");
    if let Some(p) = &a.out {
        write_atomic(p, csv.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_suffix() {
        assert_eq!(strip_level(Path::new("a/f.L2")), PathBuf::from("a/f"));
        assert_eq!(strip_level(Path::new("a/f")), PathBuf::from("a/f"));
        assert_eq!(strip_level(Path::new("a/f.Lx")), PathBuf::from("a/f.Lx"));
    }

    #[test]
    fn directions_default_and_errors() {
        assert_eq!(parse_dirs(&[], 2).unwrap().len(), 3);
        assert_eq!(parse_dirs(&[], 1).unwrap().len(), 1);
        assert!(parse_dirs(&["z".into()], 2).is_err());
        assert!(parse_dirs(&["w".into()], 2).is_err());
    }

    #[test]
    fn arity_checked() {
        let m = ModelArgs { cov: vec!["exp".into()], sigma2: 1.0, alpha: vec![1.0, 1.0], t: vec![], b: vec![1.0], m: vec![] };
        assert!(matches!(m.build(&[0.1, 0.2, 0.3]), Err(CliError::Usage(_))));
        assert_eq!(m.build(&[0.1, 0.2]).unwrap().dims(), 2);
    }

    #[test]
    fn reference_rows_are_appended() {
        let a = BenchArgs {
            sizes: vec![4],
            methods: vec!["circulant".into()],
            dims: 3,
            reps: 1,
            beta: 0.1,
            seed: Some(0),
            reference_rows: true,
            out: None,
        };
        let csv = bench_csv(&bench_rows(&a).unwrap());
        for v in ["1.00e18", "3.00e8", "3.62e9", "1.00e6"] {
            assert!(csv.contains(v), "{v} missing from\n{csv}");
        }
    }
}
