mod commands;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hfactor::grid::DEFAULT_MAX_CELLS;
use hfactor::norms::RectFamily;

use commands::{AtomKind, CmdResult, Failure, Report};

#[derive(Parser)]
#[command(
    name = "hfactor",
    version,
    about = "Weak factorization and commutator experiments on the bi-disc Hilbert transform"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the single-atom approximation over M.
    ///
    /// CSV columns: atom,M,point_value,closed_form,error_scaled,c_eps_over_m2,mass_scaled,atoms
    /// where error_scaled = M |R|^(1/2) ||a - Pi(f,g)||_2, c_eps_over_m2 = ||f||_2 ||g||_2 / M^2
    /// and mass_scaled = (coefficient mass of the error decomposition) M / ln M.
    ApproxAtom {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values of M to sweep.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        m_list: Vec<u64>,
    },
    /// Run the iterative weak factorization on a seeded atom.
    ///
    /// CSV columns: k,M,eps,mass,rho,reconstruction_error,terms
    /// Row k = 0 is the input; row k holds the residual mass after level k.
    /// A trailing comment line reports the pair-norm total sum |alpha| ||g||_2 ||h||_2.
    Factorize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        k_max: usize,
        /// Use this M at every level instead of deriving it from epsilon.
        #[arg(long)]
        m: Option<u64>,
        #[arg(long, value_enum, default_value_t = AtomArg::Haar)]
        atom: AtomArg,
    },
    /// Commutator norm against bmo over a symbol family.
    ///
    /// CSV columns: b_id,n,bmo,op_norm,ratio,iters,residual
    /// Constant symbols are skipped and listed in trailing comment lines.
    Commutator {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        symbols: SymbolArgs,
    },
    /// Rectangle bmo against the slicewise estimator over a symbol family.
    ///
    /// CSV columns: function_id,family,bmo,slicewise,ratio
    Bmo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        symbols: SymbolArgs,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Subcells per side of atoms, or grid side for symbol families.
    #[arg(long, default_value_t = 8)]
    grid_n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
    max_cells: usize,
    /// Also write a gnuplot script next to --out (as <out>.gp).
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args)]
struct SymbolArgs {
    #[arg(long, default_value = hfactor::symbols::STANDARD_V1)]
    family: String,
    /// Rectangle family used for the bmo estimate.
    #[arg(long, value_enum, default_value_t = RectArg::AllAligned)]
    rects: RectArg,
    /// Extra random rectangles for --rects sampled.
    #[arg(long, default_value_t = 256)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AtomArg {
    Haar,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum RectArg {
    AllAligned,
    Dyadic,
    Sampled,
}

impl Common {
    fn validate(&self) -> CmdResult<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Failure::Usage(format!(
                "--epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.grid_n < 2 {
            return Err(Failure::Usage(format!(
                "--grid-n must be at least 2, got {}",
                self.grid_n
            )));
        }
        if self.plot_data && self.out.is_none() {
            return Err(Failure::Usage("--plot-data requires --out".into()));
        }
        Ok(())
    }
}

impl SymbolArgs {
    fn config(&self, c: &Common) -> commands::SymbolConfig {
        let rect_family = match self.rects {
            RectArg::AllAligned => RectFamily::AllAligned,
            RectArg::Dyadic => RectFamily::Dyadic,
            RectArg::Sampled => RectFamily::Sampled {
                count: self.samples,
                seed: c.seed,
            },
        };
        commands::SymbolConfig {
            family: self.family.clone(),
            grid_n: c.grid_n,
            seed: c.seed,
            rect_family,
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res
}

fn emit(report: Report, common: &Common) -> CmdResult<()> {
    let body = match common.format {
        Format::Csv => report.csv,
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json).map_err(|e| Failure::Validation(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    let io = |e: std::io::Error| Failure::Resource(format!("writing output: {e}"));
    match &common.out {
        None => std::io::stdout().write_all(body.as_bytes()).map_err(io),
        Some(path) => {
            write_atomic(path, body.as_bytes()).map_err(io)?;
            if common.plot_data {
                let mut gp = path.clone().into_os_string();
                gp.push(".gp");
                let script = format!("DATA = '{}'\n{}", path.display(), report.plot);
                write_atomic(Path::new(&gp), script.as_bytes()).map_err(io)?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::ApproxAtom { common, m_list } => {
            common.validate()?;
            if m_list.is_empty() || m_list.iter().any(|&m| m < 2) {
                return Err(Failure::Usage("--m-list entries must be at least 2".into()));
            }
            let cfg = commands::ApproxConfig {
                m_list,
                grid_n: common.grid_n,
                seed: common.seed,
                epsilon: common.epsilon,
            };
            emit(commands::approx_atom(&cfg)?, &common)
        }
        Command::Factorize { common, k_max, m, atom } => {
            common.validate()?;
            if m.is_some_and(|m| m < 2) {
                return Err(Failure::Usage("--m must be at least 2".into()));
            }
            let cfg = commands::FactorizeConfig {
                epsilon: common.epsilon,
                k_max,
                m,
                grid_n: common.grid_n,
                seed: common.seed,
                atom: match atom {
                    AtomArg::Haar => AtomKind::Haar,
                    AtomArg::Random => AtomKind::Random,
                },
                max_cells: common.max_cells,
            };
            emit(commands::factorize(&cfg)?, &common)
        }
        Command::Commutator { common, symbols } => {
            common.validate()?;
            emit(commands::commutator(&symbols.config(&common))?, &common)
        }
        Command::Bmo { common, symbols } => {
            common.validate()?;
            emit(commands::bmo(&symbols.config(&common))?, &common)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hfactor: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
