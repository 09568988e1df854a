use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use idid::aggregate::{aggregate, group_difference, AggEstimate, AggOptions, WeightScheme};
use idid::bootstrap::{simultaneous_bands, BandResult, IfMatrix, Multiplier};
use idid::config::{OutFormat, RunConfig};
use idid::data::{load_panel, load_rc, ControlKind, Dataset, Sampling};
use idid::latt::{estimate_all, CellEstimate, Estimator, LattTable, SkippedCell};
use idid::sim::{
    gen_exp1, gen_exp2, gen_exp3, run_monte_carlo, Exp1Config, Exp2Config, Exp3Config, McConfig,
    McReport, Paper,
};
use idid::{IdidError, Result};

/// Instrumented difference-in-differences with staggered exposure.
#[derive(Parser)]
#[command(name = "idid", version)]
struct Cli {
    /// TOML run configuration; flags and IDID_* variables override it.
    #[arg(long, global = true, env = "IDID_CONFIG")]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[arg(long, global = true, env = "IDID_THREADS")]
    threads: Option<usize>,
    /// Result format on stdout or in --output.
    #[arg(long, global = true, env = "IDID_OUT")]
    out: Option<OutFormat>,
    #[arg(long, global = true, env = "IDID_OUTPUT")]
    output: Option<PathBuf>,
    #[arg(long, global = true, env = "IDID_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate LATT(e, t) for every admissible cell.
    Estimate(DataArgs),
    /// Aggregate cell estimates under weighting schemes, optionally with bands.
    Aggregate(AggregateArgs),
    /// Draw one simulated dataset (latent variables go to a sidecar file).
    Simulate(SimulateArgs),
    /// Run a canned Monte Carlo study.
    Montecarlo(MonteCarloArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, env = "IDID_INPUT")]
    input: Option<PathBuf>,
    /// panel or rc
    #[arg(long, env = "IDID_SAMPLING")]
    sampling: Option<Sampling>,
    /// never or nye
    #[arg(long, env = "IDID_CONTROL")]
    control: Option<ControlKind>,
    /// dr, dml, reg, ipw or ipws
    #[arg(long, env = "IDID_ESTIMATOR")]
    estimator: Option<Estimator>,
    /// Propensity formula, e.g. "x1 + sin(x2) + ind(x2>0)".
    #[arg(long, env = "IDID_PROPENSITY")]
    propensity: Option<String>,
    /// Outcome and treatment regression formula.
    #[arg(long, env = "IDID_OUTCOME")]
    outcome: Option<String>,
    #[arg(long, env = "IDID_CLIP")]
    clip: Option<f64>,
    /// Cross-fitting folds.
    #[arg(long = "folds", visible_alias = "K", env = "IDID_FOLDS")]
    folds: Option<usize>,
    #[arg(long, env = "IDID_ALPHA")]
    alpha: Option<f64>,
    #[arg(long, env = "IDID_WEAK_THRESHOLD")]
    weak_threshold: Option<f64>,
    #[arg(long)]
    unit_col: Option<String>,
    #[arg(long)]
    period_col: Option<String>,
    #[arg(long)]
    y_col: Option<String>,
    #[arg(long)]
    d_col: Option<String>,
    #[arg(long)]
    e_col: Option<String>,
    /// Period column of repeated cross-section files.
    #[arg(long)]
    t_col: Option<String>,
    /// Comma-separated covariate columns (default: every unmapped column).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Cell text marking never-exposed units.
    #[arg(long)]
    never: Option<String>,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Weighting scheme, repeatable: es:l, es:a..b, bal:l,l', sel:e, cal:t,
    /// cumcal:t, overall, overall-sel; prefix csa- for share-only weights.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Add simultaneous bands over the requested schemes.
    #[arg(long, env = "IDID_BANDS")]
    bands: bool,
    /// Multiplier-bootstrap draws.
    #[arg(long, visible_alias = "B", env = "IDID_BOOTSTRAP")]
    bootstrap: Option<usize>,
    #[arg(long, env = "IDID_MULTIPLIER")]
    multiplier: Option<Multiplier>,
    /// Treat aggregation weights as known.
    #[arg(long, env = "IDID_FIXED_WEIGHTS")]
    fixed_weights: bool,
    /// Two-valued column: aggregate within each group and report the difference.
    #[arg(long, env = "IDID_GROUP_COL")]
    group_col: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment 1, 2 or 3.
    #[arg(long)]
    exp: Option<Paper>,
    #[arg(long)]
    n: Option<usize>,
    /// Experiment 1 design (1 to 4).
    #[arg(long)]
    dgp: Option<u8>,
    #[arg(long)]
    sampling: Option<Sampling>,
    /// Experiment 2 comparison regime (never keeps E = inf in the support).
    #[arg(long)]
    control: Option<ControlKind>,
    /// Experiment 2 two-group variant.
    #[arg(long)]
    group: bool,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// exp1, exp2 or exp3
    #[arg(long)]
    paper: Option<Paper>,
    #[arg(long)]
    sampling: Option<Sampling>,
    /// Monte Carlo replications.
    #[arg(long = "Bmc", env = "IDID_BMC")]
    bmc: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Experiment 2 two-group variant.
    #[arg(long)]
    group: bool,
    /// Comma-separated estimators (experiment 1).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,
    /// Bootstrap draws for experiment 2 bands; 0 disables.
    #[arg(long, visible_alias = "B", env = "IDID_BOOTSTRAP")]
    bootstrap: Option<usize>,
}

#[derive(Clone, Copy)]
enum Kind {
    Estimate,
    Aggregate,
    Simulate,
    Montecarlo,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.input.is_some() {
            cfg.input = self.input;
        }
        set(&mut cfg.sampling, self.sampling);
        set(&mut cfg.control, self.control);
        set(&mut cfg.estimator, self.estimator);
        if self.propensity.is_some() {
            cfg.propensity = self.propensity;
        }
        if self.outcome.is_some() {
            cfg.outcome = self.outcome;
        }
        set(&mut cfg.clip, self.clip);
        set(&mut cfg.folds, self.folds);
        set(&mut cfg.alpha, self.alpha);
        set(&mut cfg.weak_threshold, self.weak_threshold);
        let c = &mut cfg.columns;
        set(&mut c.unit, self.unit_col);
        set(&mut c.period, self.period_col);
        set(&mut c.y, self.y_col);
        set(&mut c.d, self.d_col);
        set(&mut c.e, self.e_col);
        set(&mut c.t, self.t_col);
        set(&mut c.never, self.never);
        if self.covariates.is_some() {
            c.covariates = self.covariates;
        }
    }
}

/// Layer flags and environment over the config file (or the defaults).
fn resolve(cli: Cli) -> Result<(RunConfig, Kind, bool)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    set(&mut cfg.out, cli.out);
    if cli.output.is_some() {
        cfg.output = cli.output;
    }
    let kind = match cli.command {
        Command::Estimate(d) => {
            d.apply(&mut cfg);
            Kind::Estimate
        }
        Command::Aggregate(a) => {
            a.data.apply(&mut cfg);
            if !a.schemes.is_empty() {
                cfg.schemes = a.schemes;
            }
            cfg.bands |= a.bands;
            set(&mut cfg.bootstrap, a.bootstrap);
            set(&mut cfg.multiplier, a.multiplier);
            cfg.fixed_weights |= a.fixed_weights;
            if a.group_col.is_some() {
                cfg.columns.group = a.group_col;
            }
            Kind::Aggregate
        }
        Command::Simulate(s) => {
            set(&mut cfg.simulate.exp, s.exp);
            if s.n.is_some() {
                cfg.simulate.n = s.n;
            }
            set(&mut cfg.simulate.dgp, s.dgp);
            set(&mut cfg.sampling, s.sampling);
            set(&mut cfg.control, s.control);
            cfg.simulate.group |= s.group;
            Kind::Simulate
        }
        Command::Montecarlo(m) => {
            set(&mut cfg.montecarlo.paper, m.paper);
            set(&mut cfg.sampling, m.sampling);
            if m.bmc.is_some() {
                cfg.montecarlo.bmc = m.bmc;
            }
            if m.n.is_some() {
                cfg.montecarlo.n = m.n;
            }
            cfg.montecarlo.group |= m.group;
            if m.estimators.is_some() {
                cfg.montecarlo.estimators = m.estimators.clone();
            }
            set(&mut cfg.bootstrap, m.bootstrap);
            Kind::Montecarlo
        }
    };
    cfg.validate()?;
    Ok((cfg, kind, cli.print_config))
}

fn sink(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(cfg: &RunConfig, value: &T) -> Result<()> {
    let mut w = sink(cfg)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| IdidError::Schema(e.to_string()))?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn csv_writer(cfg: &RunConfig) -> Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(sink(cfg)?))
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| IdidError::Config("no input file (--input)".into()))?;
    Ok(match cfg.sampling {
        Sampling::Panel => load_panel(path, &cfg.columns)?.into(),
        Sampling::Rc => load_rc(path, &cfg.columns)?.into(),
    })
}

fn estimate_table(cfg: &RunConfig, data: &Dataset) -> Result<LattTable> {
    let table = estimate_all(data, &cfg.estimator_config(data.covariates())?)?;
    for s in &table.skipped {
        eprintln!("skipped cell (e={}, t={}): {}", s.e, s.t, s.reason);
    }
    Ok(table)
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    sampling: Sampling,
    control: ControlKind,
    estimator: Estimator,
    n: usize,
    cells: &'a [CellEstimate],
    skipped: &'a [SkippedCell],
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn cmd_estimate(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let table = estimate_table(cfg, &data)?;
    match cfg.out {
        OutFormat::Json => write_json(
            cfg,
            &EstimateOutput {
                sampling: table.sampling,
                control: table.kind,
                estimator: table.estimator,
                n: table.n,
                cells: &table.cells,
                skipped: &table.skipped,
            },
        ),
        OutFormat::Csv => {
            let mut w = csv_writer(cfg)?;
            w.write_record([
                "e",
                "t",
                "estimator",
                "control",
                "tau",
                "se",
                "ci_lo",
                "ci_hi",
                "num",
                "den",
                "n_trt",
                "n_ctl",
                "clipped",
                "separation",
                "kappa_y",
                "kappa_d",
                "se_adjusted",
            ])?;
            for c in &table.cells {
                let d = &c.diagnostics;
                w.write_record([
                    c.e.to_string(),
                    c.t.to_string(),
                    c.estimator.to_string(),
                    c.kind.to_string(),
                    c.tau.to_string(),
                    c.se.to_string(),
                    c.ci_lo.to_string(),
                    c.ci_hi.to_string(),
                    c.num.to_string(),
                    c.den.to_string(),
                    c.n_trt.to_string(),
                    c.n_ctl.to_string(),
                    d.clipped.to_string(),
                    d.separation.to_string(),
                    opt(d.kappa_y),
                    opt(d.kappa_d),
                    opt(d.se_adjusted),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AggBlock {
    label: String,
    estimates: Vec<AggEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bands: Option<BandResult>,
}

fn bands_for(cfg: &RunConfig, aggs: &[AggEstimate], tag: u64) -> Result<Option<BandResult>> {
    if !cfg.bands {
        return Ok(None);
    }
    let ifm = IfMatrix::new(
        aggs.iter().map(|a| a.scheme.clone()).collect(),
        aggs.iter().map(|a| a.theta).collect(),
        aggs.iter().map(|a| a.if_values.clone()).collect(),
    )?;
    let seed = idid::rng::derive_seed(cfg.seed, &[tag]);
    simultaneous_bands(&ifm, cfg.bootstrap, cfg.alpha, cfg.multiplier, seed).map(Some)
}

fn cmd_aggregate(cfg: &RunConfig) -> Result<()> {
    let mut schemes = Vec::new();
    for s in &cfg.schemes {
        schemes.extend(WeightScheme::parse_list(s)?);
    }
    if schemes.is_empty() {
        schemes.push("overall".parse()?);
    }
    let opts = AggOptions {
        fixed_weights: cfg.fixed_weights,
        alpha: cfg.alpha,
    };
    let data = load(cfg)?;
    let blocks = if cfg.columns.group.is_some() {
        let gd = group_difference(
            &data,
            &cfg.estimator_config(data.covariates())?,
            &schemes,
            opts,
        )?;
        vec![
            (gd.labels.0.clone(), gd.first),
            (gd.labels.1.clone(), gd.second),
            (format!("{} - {}", gd.labels.0, gd.labels.1), gd.difference),
        ]
    } else {
        let table = estimate_table(cfg, &data)?;
        let aggs = schemes
            .iter()
            .map(|&s| aggregate(&table, data.exposure(), data.n_periods(), s, opts))
            .collect::<Result<Vec<_>>>()?;
        vec![("all".to_owned(), aggs)]
    };
    let blocks = blocks
        .into_iter()
        .enumerate()
        .map(|(k, (label, estimates))| {
            let bands = bands_for(cfg, &estimates, k as u64)?;
            Ok(AggBlock {
                label,
                estimates,
                bands,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match cfg.out {
        OutFormat::Json => write_json(cfg, &blocks),
        OutFormat::Csv => {
            let mut w = csv_writer(cfg)?;
            let mut header = vec!["block", "scheme", "theta", "se", "ci_lo", "ci_hi"];
            if cfg.bands {
                header.extend([
                    "se_boot",
                    "crit",
                    "band_lo",
                    "band_hi",
                    "pointwise_lo",
                    "pointwise_hi",
                ]);
            }
            w.write_record(&header)?;
            for b in &blocks {
                for (j, a) in b.estimates.iter().enumerate() {
                    let mut rec = vec![
                        b.label.clone(),
                        a.scheme.clone(),
                        a.theta.to_string(),
                        a.se.to_string(),
                        a.ci_lo.to_string(),
                        a.ci_hi.to_string(),
                    ];
                    if let Some(r) = &b.bands {
                        let band = &r.bands[j];
                        rec.extend([
                            band.se_boot.to_string(),
                            r.crit.to_string(),
                            band.lo.to_string(),
                            band.hi.to_string(),
                            band.pointwise_lo.to_string(),
                            band.pointwise_hi.to_string(),
                        ]);
                    }
                    w.write_record(&rec)?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.simulate;
    let draw = match s.exp {
        Paper::Exp1 => gen_exp1(
            &Exp1Config::dgp(s.dgp, s.n.unwrap_or(5000), cfg.sampling)?,
            cfg.seed,
        )?,
        Paper::Exp2 => gen_exp2(
            &Exp2Config {
                n: s.n.unwrap_or(if s.group { 20_000 } else { 10_000 }),
                with_group: s.group,
                sampling: cfg.sampling,
                kind: cfg.control,
                ..Exp2Config::default()
            },
            cfg.seed,
        )?,
        Paper::Exp3 => gen_exp3(
            &Exp3Config {
                n: s.n.unwrap_or(10_000),
                sampling: cfg.sampling,
                ..Exp3Config::default()
            },
            cfg.seed,
        )?,
    };
    match &cfg.output {
        Some(path) => draw.write(path),
        None => {
            let schema = idid::data::Schema {
                group: draw.dataset.group().map(|_| "group".to_owned()),
                ..idid::data::Schema::default()
            };
            let out = BufWriter::new(io::stdout().lock());
            match &draw.dataset {
                Dataset::Panel(p) => idid::data::write_panel(p, out, &schema),
                Dataset::Rc(r) => idid::data::write_rc(r, out, &schema),
            }
        }
    }
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    let m = &cfg.montecarlo;
    let mut mc = McConfig::paper(m.paper, cfg.sampling);
    if m.group {
        mc = mc.with_group();
    }
    mc.seed = cfg.seed;
    mc.alpha = cfg.alpha;
    mc.folds = cfg.folds;
    if let Some(b) = m.bmc {
        mc.b_mc = b;
    }
    if let Some(n) = m.n {
        mc.n = n;
    }
    if let Some(e) = &m.estimators {
        mc.estimators = e.clone();
    }
    if m.paper == Paper::Exp2 {
        mc.bands = cfg.bootstrap;
    }
    mc
}

fn write_mc_csv(cfg: &RunConfig, report: &McReport) -> Result<()> {
    let mut w = csv_writer(cfg)?;
    if report.config.paper == Paper::Exp3 {
        for row in &report.bloom {
            w.serialize(row)?;
        }
    } else {
        for row in &report.rows {
            w.serialize(row)?;
        }
        if !report.bands.is_empty() {
            w.write_record(None::<&[u8]>)?;
            for b in &report.bands {
                w.serialize(b)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_montecarlo(cfg: &RunConfig) -> Result<()> {
    let mc = mc_config(cfg);
    if mc.paper != Paper::Exp2 && cfg.montecarlo.group {
        return Err(IdidError::Config("--group applies to exp2 only".into()));
    }
    log::info!(
        "running {} with {} replications of n = {}",
        mc.paper,
        mc.b_mc,
        mc.n
    );
    let report = run_monte_carlo(&mc)?;
    match cfg.out {
        OutFormat::Json => write_json(cfg, &report),
        OutFormat::Csv => write_mc_csv(cfg, &report),
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let (cfg, kind, print_config) = resolve(cli)?;
    if print_config {
        print!("{}", cfg.canonical());
        return Ok(());
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| IdidError::Config(e.to_string()))?;
    }
    match kind {
        Kind::Estimate => cmd_estimate(&cfg),
        Kind::Aggregate => cmd_aggregate(&cfg),
        Kind::Simulate => cmd_simulate(&cfg),
        Kind::Montecarlo => cmd_montecarlo(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
