use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::Args;

use rankae::data::Dataset;
use rankae::losses::CurvatureKind;
use rankae::trainer::{continue_rounds, Method, TrainConfig, TrainReport, TrainState};
use rankae::{AutoencoderNet, Error, Result};

use crate::run::{
    create_run_dir, Architecture, DataSource, RunManifest, Seeds, CONFIG_FILE, NET_FILE,
    REPORT_FILE, ROUNDS_FILE, STATE_FILE,
};
use crate::{MethodArg, Status};

/// Command-line values that override the configuration file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Rank penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Curvature term weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Standard deviation of the curvature probe noise.
    #[arg(long)]
    sigma: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// Adam first-moment decay.
    #[arg(long)]
    beta1: Option<f64>,
    /// Adam second-moment decay.
    #[arg(long)]
    beta2: Option<f64>,
    /// Adam denominator offset.
    #[arg(long)]
    adam_eps: Option<f64>,
    /// Outer rounds of the alternating algorithm.
    #[arg(long)]
    rounds: Option<usize>,
    /// Anchor points per round.
    #[arg(long)]
    anchors: Option<usize>,
    /// Target rank of the encoder Jacobian.
    #[arg(long)]
    k: Option<usize>,
    /// Epoch cap of each network update.
    #[arg(long)]
    inner_max_epochs: Option<usize>,
    /// Relative loss change that ends a network update.
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Minibatches per epoch; defaults to one pass over the data.
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    /// Weight of the squared encoder Jacobian norm.
    #[arg(long)]
    contractive_weight: Option<f64>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Scale κ1 by `n^-2`.
    #[arg(long)]
    kappa1_dim_scaling: bool,
}

impl Overrides {
    fn apply(&self, c: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        set!(
            batch_size,
            lambda,
            gamma,
            sigma,
            alpha,
            beta1,
            beta2,
            adam_eps,
            rounds,
            anchors,
            k,
            inner_max_epochs,
            inner_tol,
            contractive_weight,
            seed
        );
        if self.steps_per_epoch.is_some() {
            c.steps_per_epoch = self.steps_per_epoch;
        }
        if self.kappa1_dim_scaling {
            c.kappa1_dim_scaling = true;
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    /// Dataset CSV; not needed with --resume.
    #[arg(long, required_unless_present = "resume")]
    data: Option<PathBuf>,
    /// Zero-based label column, if the file has one and no sidecar says so.
    #[arg(long)]
    label_column: Option<usize>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// TOML file with configuration fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::As)]
    method: MethodArg,
    /// Curvature term.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
    kappa: Option<u8>,
    #[command(flatten)]
    overrides: Overrides,
    /// Hidden layer widths of the encoder (mirrored in the decoder).
    /// Default: one layer of width 8n.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Code dimension. Default: 8n for `as`, k for `caeh`.
    #[arg(long)]
    code: Option<usize>,
    /// Seed of the weight initialization. Default: the training seed.
    #[arg(long)]
    net_seed: Option<u64>,
    /// Continue the run in this directory from its last checkpoint.
    #[arg(long, conflicts_with_all = ["data", "config", "grid"])]
    resume: Option<PathBuf>,
    /// Sweep a field over values, e.g. `lambda=0,1,10`; repeat for a grid.
    #[arg(long = "grid", value_name = "FIELD=V1,V2,...")]
    grid: Vec<String>,
    /// Parent of the run directories.
    #[arg(long, env = "RANKAE_OUTPUT_DIR", default_value = "runs")]
    output_root: PathBuf,
    /// Pause after this many rounds in this invocation; resume later.
    #[arg(long)]
    stop_after: Option<usize>,
}

const GRID_FIELDS: [&str; 7] = [
    "lambda",
    "gamma",
    "sigma",
    "alpha",
    "contractive_weight",
    "k",
    "anchors",
];

fn set_field(c: &mut TrainConfig, field: &str, v: f64) -> Result<()> {
    let whole = || -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(vec![format!(
                "{field} needs a non-negative integer, got {v}"
            )]))
        }
    };
    match field {
        "lambda" => c.lambda = v,
        "gamma" => c.gamma = v,
        "sigma" => c.sigma = v,
        "alpha" => c.alpha = v,
        "contractive_weight" => c.contractive_weight = v,
        "k" => c.k = whole()?,
        "anchors" => c.anchors = whole()?,
        _ => {
            return Err(Error::Config(vec![format!(
                "cannot sweep {field:?}; choose from {}",
                GRID_FIELDS.join(", ")
            )]))
        }
    }
    Ok(())
}

/// Parses `field=v1,v2,...` axes.
pub fn parse_grid(specs: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut errs = Vec::new();
    let mut axes = Vec::new();
    for s in specs {
        let Some((field, values)) = s.split_once('=') else {
            errs.push(format!("grid axis {s:?} is not FIELD=V1,V2,..."));
            continue;
        };
        let field = field.trim().replace('-', "_");
        if !GRID_FIELDS.contains(&field.as_str()) {
            errs.push(format!(
                "cannot sweep {field:?}; choose from {}",
                GRID_FIELDS.join(", ")
            ));
            continue;
        }
        match values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
        {
            Ok(v) if !v.is_empty() => axes.push((field, v)),
            _ => errs.push(format!("grid axis {s:?} has an invalid value list")),
        }
    }
    if errs.is_empty() {
        Ok(axes)
    } else {
        Err(Error::Config(errs))
    }
}

fn combinations(axes: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    let mut out = vec![Vec::new()];
    for (field, values) in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push((field.clone(), v));
                    p
                })
            })
            .collect();
    }
    out
}

fn base_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &args.config {
        Some(p) => TrainConfig::from_toml(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    args.overrides.apply(&mut c);
    if let Some(k) = args.kappa {
        c.curvature = CurvatureKind::from_index(k)?;
    }
    Ok(c)
}

fn architecture(args: &TrainArgs, method: Method, n: usize, config: &TrainConfig) -> Architecture {
    Architecture {
        hidden: args.hidden.clone().unwrap_or_else(|| vec![8 * n]),
        code: args.code.unwrap_or(match method {
            Method::Alternating => 8 * n,
            Method::CaeH => config.k,
        }),
        net_seed: args.net_seed.unwrap_or(config.seed),
    }
}

struct Job<'a> {
    dir: &'a Path,
    source: &'a DataSource,
    dataset: &'a Dataset,
    method: Method,
    arch: Architecture,
    stop_after: Option<usize>,
}

fn write_outputs(dir: &Path, state: &TrainState) -> Result<()> {
    state.net.save(dir.join(NET_FILE))?;
    state.report.save_json(dir.join(REPORT_FILE))?;
    state
        .report
        .write_rounds_csv(fs::File::create(dir.join(ROUNDS_FILE))?)?;
    Ok(())
}

fn drive(
    dir: &Path,
    dataset: &Dataset,
    state: TrainState,
    mut manifest: RunManifest,
    stop_after: Option<usize>,
) -> Result<TrainReport> {
    let total = state.config().rounds;
    let state_path = dir.join(STATE_FILE);
    let state = continue_rounds(
        dataset.points(),
        state,
        stop_after.unwrap_or(usize::MAX),
        |s| {
            let r = s.report.rounds.last().expect("a round was recorded");
            eprintln!(
                "round {}/{total}: objective {:.6e}, reconstruction {:.6e}, tail ratio {:.4}",
                r.round, r.terms.objective, r.terms.reconstruction, r.mean_tail_ratio
            );
            s.save(&state_path)
        },
    )?;
    state.save(&state_path)?;
    write_outputs(dir, &state)?;
    manifest.rounds_completed = state.report.rounds_completed();
    manifest.completed = state.is_finished();
    manifest.finished = manifest.completed.then(Utc::now);
    for a in [STATE_FILE, NET_FILE, REPORT_FILE, ROUNDS_FILE] {
        if !manifest.artifacts.iter().any(|x| x == a) {
            manifest.artifacts.push(a.into());
        }
    }
    manifest.save(dir)?;
    Ok(state.report)
}

fn start(job: Job<'_>, config: TrainConfig) -> Result<TrainReport> {
    let n = job.dataset.dim();
    config.validate(job.dataset.len(), n, job.arch.code)?;
    let net = AutoencoderNet::symmetric(n, &job.arch.hidden, job.arch.code, job.arch.net_seed)?;
    let state = TrainState::init(job.dataset.points(), net, config, job.method)?;
    fs::write(job.dir.join(CONFIG_FILE), state.config().to_toml()?)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        method: job.method,
        config: state.config().clone(),
        architecture: job.arch.clone(),
        data: job.source.clone(),
        seeds: Seeds {
            training: state.config().seed,
            network: job.arch.net_seed,
        },
        artifacts: vec![CONFIG_FILE.into()],
        rounds_completed: 0,
        completed: false,
        started: Utc::now(),
        finished: None,
    };
    manifest.save(job.dir)?;
    drive(job.dir, job.dataset, state, manifest, job.stop_after)
}

fn resume(dir: &Path, stop_after: Option<usize>) -> Result<Status> {
    let manifest = RunManifest::load(dir)?;
    let dataset = manifest.data.load()?;
    let state = TrainState::load(dir.join(STATE_FILE))?;
    if state.is_finished() {
        eprintln!("run already complete");
    }
    drive(dir, &dataset, state, manifest, stop_after)?;
    println!("{}", dir.display());
    Ok(Status::Ok)
}

pub fn run(args: TrainArgs) -> Result<Status> {
    if let Some(dir) = &args.resume {
        return resume(dir, args.stop_after);
    }
    let data = args.data.as_ref().expect("clap enforces --data");
    let source = DataSource::resolve(data, args.label_column, !args.no_header)?;
    let dataset = source.load()?;
    let method = match args.method {
        MethodArg::As => Method::Alternating,
        MethodArg::Caeh => Method::CaeH,
    };
    let base = base_config(&args)?;
    let axes = parse_grid(&args.grid)?;
    let combos = combinations(&axes);

    // Every configuration is validated before any training starts.
    let mut errs = Vec::new();
    let mut jobs = Vec::new();
    for combo in &combos {
        let mut c = base.clone();
        for (f, v) in combo {
            set_field(&mut c, f, *v)?;
        }
        let arch = architecture(&args, method, dataset.dim(), &c);
        match c.validate(dataset.len(), dataset.dim(), arch.code) {
            Ok(()) => {}
            Err(Error::Config(e)) => {
                let tag: Vec<String> = combo.iter().map(|(f, v)| format!("{f}={v}")).collect();
                errs.extend(e.into_iter().map(|m| {
                    if tag.is_empty() {
                        m
                    } else {
                        format!("[{}] {m}", tag.join(" "))
                    }
                }));
            }
            Err(e) => return Err(e),
        }
        jobs.push((combo.clone(), c, arch));
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }

    let root = create_run_dir(&args.output_root, base.seed, Utc::now())?;
    if axes.is_empty() {
        let (_, c, arch) = jobs.pop().expect("one configuration");
        let job = Job {
            dir: &root,
            source: &source,
            dataset: &dataset,
            method,
            arch,
            stop_after: args.stop_after,
        };
        start(job, c)?;
        println!("{}", root.display());
        return Ok(Status::Ok);
    }

    let mut grid = csv::Writer::from_path(root.join("grid.csv"))?;
    let mut header: Vec<String> = axes.iter().map(|(f, _)| f.clone()).collect();
    header.extend(
        [
            "objective",
            "reconstruction",
            "kappa",
            "rank_penalty",
            "mean_tail_ratio",
            "run",
        ]
        .map(String::from),
    );
    grid.write_record(&header)?;
    for (combo, c, arch) in jobs {
        let name: Vec<String> = combo.iter().map(|(f, v)| format!("{f}={v}")).collect();
        let name = name.join("_");
        let dir = root.join(&name);
        fs::create_dir(&dir)?;
        eprintln!("grid point {name}");
        let job = Job {
            dir: &dir,
            source: &source,
            dataset: &dataset,
            method,
            arch,
            stop_after: args.stop_after,
        };
        let report = start(job, c)?;
        let last = report.rounds.last().expect("at least one round");
        let mut row: Vec<String> = combo.iter().map(|(_, v)| v.to_string()).collect();
        row.extend([
            format!("{:e}", last.terms.objective),
            format!("{:e}", last.terms.reconstruction),
            format!("{:e}", last.terms.kappa),
            format!("{:e}", last.terms.rank_penalty),
            format!("{:e}", last.mean_tail_ratio),
            name,
        ]);
        grid.write_record(&row)?;
    }
    grid.flush()?;
    println!("{}", root.display());
    Ok(Status::Ok)
}
