use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use potentia::charges::ChargeFile;
use potentia::checks::{self, Control, UniquenessConfig};
use potentia::potentials::{potential_batch, potential_treecode};
use potentia::{Dimension, DiscreteCharge, Error, PotentialValue, Result};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "potentia",
    version,
    about = "Riesz potentials, Green's functions and uniqueness checks"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "POTENTIA_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the potential of a charge file at target points.
    Eval {
        #[arg(long)]
        charge: PathBuf,
        /// JSON array of points, e.g. [[1.0, 0.0], [0.0, 2.0]].
        #[arg(long, conflicts_with = "point", required_unless_present = "point")]
        targets: Option<PathBuf>,
        /// Inline point, comma separated; repeatable.
        #[arg(long, allow_hyphen_values = true)]
        point: Vec<String>,
        #[arg(long)]
        treecode: bool,
        #[arg(long, default_value_t = 0.5, requires = "treecode")]
        theta: f64,
    },
    /// Run a seeded numerical check and print a JSON report.
    Check {
        #[arg(value_enum)]
        name: CheckName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// lemma2: charges; poisson-jensen: sphere nodes; uniqueness: samples.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Shell radius (uniqueness).
        #[arg(long)]
        r: Option<f64>,
        /// Sphere quadrature nodes (uniqueness).
        #[arg(long)]
        nodes: Option<usize>,
        /// lemma2: points per charge; poisson-jensen: test functions.
        #[arg(long)]
        cases: Option<usize>,
        /// Base points per test function (poisson-jensen).
        #[arg(long)]
        points: Option<usize>,
        /// Grid step (riesz-extract, and the uniqueness dump).
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_enum, default_value_t = ControlArg::None)]
        control: ControlArg,
        #[arg(long)]
        tol: Option<f64>,
        /// Write the check's grid as CSV (uniqueness, riesz-extract).
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Split a charge file into its positive and negative parts.
    Decompose {
        #[arg(long)]
        charge: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CheckName {
    Lemma2,
    Asymptotics,
    PoissonJensen,
    Uniqueness,
    RieszExtract,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ControlArg {
    None,
    Linear,
    Doubled,
}

impl From<ControlArg> for Control {
    fn from(c: ControlArg) -> Self {
        match c {
            ControlArg::None => Control::None,
            ControlArg::Linear => Control::Linear,
            ControlArg::Doubled => Control::Doubled,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("potentia: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("potentia: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Eval {
            charge,
            targets,
            point,
            treecode,
            theta,
        } => {
            let c = read_charge(&charge)?;
            let pts = match targets {
                Some(path) => read_points(&path)?,
                None => point.iter().map(|p| parse_point(p)).collect::<Result<_>>()?,
            };
            for p in &pts {
                c.dim().check_point(p)?;
            }
            let values = if treecode {
                potential_treecode(&c, &pts, theta)?
            } else {
                potential_batch(&c, &pts)
            };
            let mut out = BufWriter::new(io::stdout().lock());
            for (p, v) in pts.iter().zip(values) {
                writeln!(out, "{}", format_line(p, v))?;
            }
            out.flush()?;
            Ok(true)
        }
        Command::Check {
            name,
            seed,
            n,
            d,
            r,
            nodes,
            cases,
            points,
            h,
            control,
            tol,
            dump,
        } => {
            let dim = |default: usize| Dimension::new(d.unwrap_or(default));
            if dump.is_some() && !matches!(name, CheckName::Uniqueness | CheckName::RieszExtract) {
                return Err(Error::Domain(
                    "--dump is available for uniqueness and riesz-extract".into(),
                ));
            }
            let report = match name {
                CheckName::Lemma2 => checks::lemma2_check(seed, n.unwrap_or(100), cases.unwrap_or(100), tol)?,
                CheckName::Asymptotics => {
                    let dims = match d {
                        Some(v) => vec![Dimension::new(v)?],
                        None => (1..=3).map(Dimension::new).collect::<Result<_>>()?,
                    };
                    checks::asymptotics_check(&dims, seed, tol)?
                }
                CheckName::PoissonJensen => checks::poisson_jensen_check(
                    dim(2)?,
                    n,
                    cases.unwrap_or(5),
                    points.unwrap_or(20),
                    seed,
                    tol,
                )?,
                CheckName::Uniqueness => {
                    let mut cfg = UniquenessConfig::new(dim(2)?);
                    cfg.r = r.unwrap_or(cfg.r);
                    cfg.nodes = nodes;
                    cfg.samples = n.unwrap_or(cfg.samples);
                    cfg.seed = seed;
                    cfg.tol = tol;
                    cfg.control = control.into();
                    if let Some(path) = &dump {
                        let step = h.unwrap_or(cfg.r / 8.0);
                        write_csv(path, &checks::uniqueness_dump(&cfg, step)?)?;
                    }
                    checks::uniqueness_check(&cfg)?
                }
                CheckName::RieszExtract => {
                    let step = h.unwrap_or(0.02);
                    if let Some(path) = &dump {
                        write_csv(path, &checks::point_mass_grid(step)?)?;
                    }
                    checks::riesz_extract_check(step, tol)?
                }
            };
            println!("{}", report.to_json());
            Ok(report.pass)
        }
        Command::Decompose { charge } => {
            let (plus, minus) = read_charge(&charge)?.jordan_decomposition();
            let out = serde_json::json!({
                "plus": ChargeFile::from(&plus),
                "minus": ChargeFile::from(&minus),
            });
            println!("{out}");
            Ok(true)
        }
    }
}

fn read_charge(path: &Path) -> Result<DiscreteCharge> {
    DiscreteCharge::from_json(&read(path)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad coordinate {t:?}: {e}")))
        })
        .collect()
}

fn format_line(p: &[f64], v: PotentialValue) -> String {
    let mut parts: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
    parts.push(v.status().to_string());
    if let Some(x) = v.finite() {
        parts.push(format!("{x:?}"));
    }
    parts.join(" ")
}

fn write_csv(path: &Path, g: &potentia::grid::GridFunction) -> Result<()> {
    g.write_csv(BufWriter::new(File::create(path)?))
}
