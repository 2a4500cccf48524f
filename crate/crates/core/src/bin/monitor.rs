use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use monitor_core::experiment::{
    reproduce_figure, run_pipeline, ExperimentConfig, FigureOptions, Pipeline, PipelineReport, FIGURES, KEY_REFERENCE,
};
use monitor_core::Error;

fn key_help() -> String {
    let mut s = String::from("Configuration keys (section.key = default — meaning):\n");
    for (k, d, m) in KEY_REFERENCE {
        let d = if d.is_empty() { "(empty)" } else { d };
        s.push_str(&format!("  {k} = {d} — {m}\n"));
    }
    s.push_str(
        "\nConfig files use `[section]` headers and `key = value` lines (`#` starts a comment),\n\
         or the equivalent JSON document. Flags override the file; `--set` overrides flags.",
    );
    s
}

#[derive(Parser, Debug)]
#[command(name = "monitor", version, about = "Simulate continuously monitored bosons, build record filters and recover conditional moments by postselection")]
#[command(after_long_help = key_help())]
struct Cli {
    /// Worker threads for trajectory ensembles (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run trajectories; write one trajectory and ensemble moments with their unconditional references.
    Simulate(ConfigArgs),
    /// Closed-form steady covariances (per mode for lattices) against integrated Riccati flows.
    SteadyState(ConfigArgs),
    /// Build estimator kernels.
    Filter {
        #[command(subcommand)]
        which: FilterCommand,
    },
    /// Simulate, measure, estimate, bin and recover conditional variances or covariances.
    Postselect(ConfigArgs),
    /// Husimi functions and covariance ellipses of final number-basis states.
    Husimi(ConfigArgs),
    /// Run the canonical desk-scale configuration behind one figure.
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand, Debug)]
enum FilterCommand {
    /// Wiener–Hopf design from closed-form tables, or from the simulated ensemble with `--kernel empirical`.
    Design(ConfigArgs),
    /// Closed-form kernels (single site, or lattice K_x/K_p with direct and continuum references).
    Analytic(ConfigArgs),
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// Figure name: fig2, fig3, fig4, fig5, fig6, fig7 or fig8.
    fig: String,
    /// Master seed (default 2024).
    #[arg(long)]
    seed: Option<u64>,
    /// Primary trajectory count (default: the figure's canonical count).
    #[arg(long)]
    n_traj: Option<usize>,
    /// Output directory (default: out/<fig>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Config file (text or JSON); defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set grid.dt=0.005` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed [ensemble.master_seed, default 1].
    #[arg(long)]
    seed: Option<String>,
    /// Output directory [output.path, default out].
    #[arg(long)]
    out: Option<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// single-site | lattice | fock [model.kind, default single-site].
    #[arg(long)]
    model: Option<String>,
    /// Measurement rate Γ [model.gamma, default 1].
    #[arg(long)]
    gamma: Option<String>,
    /// Onsite energy [model.h0, default 1].
    #[arg(long)]
    h0: Option<String>,
    /// Lattice onsite energy [model.j0, default 3].
    #[arg(long)]
    j0: Option<String>,
    /// Hopping [model.j, default 1].
    #[arg(long)]
    j: Option<String>,
    /// Lattice lengths, comma separated [model.lengths, default 64].
    #[arg(long)]
    lengths: Option<String>,
    /// Number-basis truncation [model.n_dim, default 48].
    #[arg(long)]
    n_dim: Option<String>,
    /// Initial state [model.init, default vacuum].
    #[arg(long)]
    init: Option<String>,
    /// Time step [grid.dt, default 0.001].
    #[arg(long)]
    dt: Option<String>,
    /// Final time [grid.t_final, default 10].
    #[arg(long)]
    t_final: Option<String>,
    /// Trajectories [ensemble.n_traj, default 1000].
    #[arg(long)]
    n_traj: Option<String>,
    /// Measured quadrature x | p [protocol.quadrature, default x].
    #[arg(long)]
    quadrature: Option<String>,
    /// Bin counts, comma separated [protocol.n_bins, default 20].
    #[arg(long)]
    n_bins: Option<String>,
    /// Sites for variance recovery [protocol.sites, default 0].
    #[arg(long)]
    sites: Option<String>,
    /// Site pairs i-j for covariance recovery [protocol.pairs, default none].
    #[arg(long)]
    pairs: Option<String>,
    /// analytic | ode | wiener-hopf | empirical [protocol.kernel, default analytic].
    #[arg(long)]
    kernel: Option<String>,
    /// Minimum samples per bin [protocol.min_count, default 10].
    #[arg(long)]
    min_count: Option<String>,
    /// impulse-response | doubled [protocol.kp_convention, default impulse-response].
    #[arg(long)]
    kp_convention: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_str_any(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("ensemble.master_seed", &self.seed),
            ("output.path", &self.out),
            ("model.kind", &self.model),
            ("model.gamma", &self.gamma),
            ("model.h0", &self.h0),
            ("model.j0", &self.j0),
            ("model.j", &self.j),
            ("model.lengths", &self.lengths),
            ("model.n_dim", &self.n_dim),
            ("model.init", &self.init),
            ("grid.dt", &self.dt),
            ("grid.t_final", &self.t_final),
            ("ensemble.n_traj", &self.n_traj),
            ("protocol.quadrature", &self.quadrature),
            ("protocol.n_bins", &self.n_bins),
            ("protocol.sites", &self.sites),
            ("protocol.pairs", &self.pairs),
            ("protocol.kernel", &self.kernel),
            ("protocol.min_count", &self.min_count),
            ("protocol.kp_convention", &self.kp_convention),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
                line: 0,
                field: kv.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn run_config(args: &ConfigArgs, pipeline: Pipeline) -> Result<Option<PipelineReport>, Error> {
    let cfg = args.resolve()?;
    if args.print_config {
        print!("{}", cfg.to_text());
        return Ok(None);
    }
    run_pipeline(&cfg, pipeline).map(Some)
}

fn run(cli: Cli) -> Result<Option<PipelineReport>, Error> {
    match cli.command {
        Command::Simulate(a) => run_config(&a, Pipeline::Simulate),
        Command::SteadyState(a) => run_config(&a, Pipeline::SteadyState),
        Command::Filter { which } => match which {
            FilterCommand::Design(a) => run_config(&a, Pipeline::FilterDesign),
            FilterCommand::Analytic(a) => run_config(&a, Pipeline::FilterAnalytic),
        },
        Command::Postselect(a) => run_config(&a, Pipeline::Postselect),
        Command::Husimi(a) => run_config(&a, Pipeline::Husimi),
        Command::Reproduce(a) => {
            if !FIGURES.contains(&a.fig.as_str()) {
                return Err(Error::UnknownFigure(a.fig));
            }
            let mut opts = FigureOptions::default();
            if let Some(s) = a.seed {
                opts.master_seed = s;
            }
            opts.n_traj = a.n_traj;
            let dir = a.out.unwrap_or_else(|| PathBuf::from("out").join(&a.fig));
            reproduce_figure(&a.fig, &dir, &opts).map(Some)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            println!("{}: wrote {} files to {}", report.pipeline, report.files.len() + 1, report.dir.display());
            println!("sidecar: {}", report.sidecar.display());
            match serde_json::to_string_pretty(&report.summary) {
                Ok(s) => println!("{s}"),
                Err(e) => eprintln!("warning: summary not printable: {e}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::UnknownFigure(_) | Error::InvalidParameter { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
