//! Command-line arguments and the validated run configuration.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use equiaffine::dsl::{parse_surface, SurfaceChart};
use equiaffine::frame::{GeometryError, DEFAULT_ORDER, MIN_ORDER};
use equiaffine::invariants::{RankTolerance, DEFAULT_TOL_ABS, DEFAULT_TOL_RANK};
use equiaffine::jet::Real;
use equiaffine::lagrangian::{DecideConfig, LagrangianError, DEFAULT_GRID, DEFAULT_TOL_PARALLEL, DEFAULT_TOL_PDE};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "equiaffine", version, about = "Equiaffine invariants and Lagrangian decisions for surfaces in R^4")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-point invariant records over a grid or the given points
    Invariants(CommonArgs),
    /// Decide whether the surface is Lagrangian for a parallel symplectic form
    Check(CommonArgs),
    /// Run the identity and frame-change property suite
    Verify(CommonArgs),
    /// Null space of constant 2-forms vanishing on the tangent planes
    Oracle(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Surface definition (.srf)
    file: PathBuf,
    /// Grid points per axis
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Jet order
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Relative singular-value threshold for rank decisions
    #[arg(long, default_value_t = DEFAULT_TOL_RANK)]
    tol_rank: Real,
    /// Absolute threshold below which H counts as zero
    #[arg(long, default_value_t = DEFAULT_TOL_ABS)]
    tol_rank_abs: Real,
    /// Bound on the first-order system residuals
    #[arg(long, default_value_t = DEFAULT_TOL_PDE)]
    tol_pde: Real,
    /// Bound on the variation of reconstructed forms across the grid
    #[arg(long, default_value_t = DEFAULT_TOL_PARALLEL)]
    tol_parallel: Real,
    /// Finite-difference step (default: 1e-3 of the domain width)
    #[arg(long)]
    step: Option<Real>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for randomized sample points and angles
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Skip the oracle cross-validation
    #[arg(long)]
    no_oracle: bool,
    /// Sample point `u,v`; repeatable, replaces the grid
    #[arg(long = "point", value_parser = parse_point, allow_hyphen_values = true)]
    points: Vec<(Real, Real)>,
}

fn parse_point(s: &str) -> Result<(Real, Real), String> {
    let (u, v) = s.split_once(',').ok_or_else(|| format!("expected u,v, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<Real>().map_err(|e| format!("{t:?}: {e}"));
    let p = (num(u)?, num(v)?);
    if p.0.is_finite() && p.1.is_finite() {
        Ok(p)
    } else {
        Err(format!("non-finite point {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Invariants,
    Check,
    Verify,
    Oracle,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub chart: SurfaceChart,
    pub grid: usize,
    pub order: usize,
    pub tol_rank: RankTolerance,
    pub tol_pde: Real,
    pub tol_parallel: Real,
    pub step: Option<Real>,
    pub format: Format,
    pub seed: u64,
    pub oracle: bool,
    pub points: Vec<(Real, Real)>,
}

impl RunConfig {
    pub fn decide_config(&self) -> DecideConfig {
        DecideConfig {
            grid: self.grid,
            order: self.order,
            tol_rank: self.tol_rank,
            tol_pde: self.tol_pde,
            tol_parallel: self.tol_parallel,
            step: self.step,
            oracle: self.oracle,
        }
    }

    /// Explicit points if given, else the `grid x grid` tensor grid.
    pub fn sample_points(&self) -> Vec<(Real, Real)> {
        if self.points.is_empty() {
            self.chart.domain.grid(self.grid)
        } else {
            self.points.clone()
        }
    }
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let (command, a) = match self.command {
            Command::Invariants(a) => (CommandKind::Invariants, a),
            Command::Check(a) => (CommandKind::Check, a),
            Command::Verify(a) => (CommandKind::Verify, a),
            Command::Oracle(a) => (CommandKind::Oracle, a),
        };
        let positive = [
            ("--tol-rank", a.tol_rank),
            ("--tol-rank-abs", a.tol_rank_abs),
            ("--tol-pde", a.tol_pde),
            ("--tol-parallel", a.tol_parallel),
            ("--step", a.step.unwrap_or(1.0)),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CliError::Usage(format!("{name} must be positive, got {x}")));
            }
        }
        if a.grid < 3 {
            return Err(CliError::Usage(format!("--grid must be at least 3, got {}", a.grid)));
        }
        if a.order < MIN_ORDER {
            return Err(CliError::Usage(format!("--order must be at least {MIN_ORDER}, got {}", a.order)));
        }
        if command == CommandKind::Check && !a.points.is_empty() {
            return Err(CliError::Usage("check samples its own grid; use --grid instead of --point".into()));
        }
        let text = std::fs::read_to_string(&a.file)
            .map_err(|e| CliError::Input(format!("{}: {e}", a.file.display())))?;
        let chart = parse_surface(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.file.display())))?;
        Ok(RunConfig {
            command,
            chart,
            grid: a.grid,
            order: a.order,
            tol_rank: RankTolerance {
                rel: a.tol_rank,
                abs: a.tol_rank_abs,
            },
            tol_pde: a.tol_pde,
            tol_parallel: a.tol_parallel,
            step: a.step,
            format: a.format,
            seed: a.seed,
            oracle: !a.no_oracle,
            points: a.points,
        })
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or unparsable input, invalid flags.
    Input(String),
    Usage(String),
    /// Failure kind and message.
    Degenerate(&'static str, String),
    /// Verification failures and other runtime errors.
    Failed(String),
    /// The reader went away; not an error for a filter-style tool.
    BrokenPipe,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Usage(_) => 2,
            CliError::Degenerate(..) => 3,
            CliError::Failed(_) => 1,
            CliError::BrokenPipe => 0,
        }
    }

    /// Prefixes the message with the parameter point it arose at.
    pub fn at(self, (u, v): (Real, Real)) -> Self {
        let prefix = |m: String| format!("at ({u}, {v}): {m}");
        match self {
            CliError::Input(m) => CliError::Input(prefix(m)),
            CliError::Usage(m) => CliError::Usage(prefix(m)),
            CliError::Degenerate(k, m) => CliError::Degenerate(k, prefix(m)),
            CliError::Failed(m) => CliError::Failed(prefix(m)),
            CliError::BrokenPipe => CliError::BrokenPipe,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Degenerate(kind, m) => write!(f, "{kind}: {m}"),
            CliError::BrokenPipe => f.write_str("broken pipe"),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        let kind = match e {
            GeometryError::DegenerateSurface { .. } => "DegenerateSurface",
            GeometryError::ImmersionFailure { .. } => "ImmersionFailure",
            GeometryError::NullSeedFailure => "NullSeedFailure",
            GeometryError::OrderTooLow { .. } => return CliError::Usage(e.to_string()),
            _ => return CliError::Failed(e.to_string()),
        };
        CliError::Degenerate(kind, e.to_string())
    }
}

impl From<equiaffine::invariants::InvariantError> for CliError {
    fn from(e: equiaffine::invariants::InvariantError) -> Self {
        match e {
            equiaffine::invariants::InvariantError::Geometry(g) => g.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<LagrangianError> for CliError {
    fn from(e: LagrangianError) -> Self {
        match e {
            LagrangianError::DegenerateSurface { .. } => CliError::Degenerate("DegenerateSurface", e.to_string()),
            LagrangianError::InvalidConfig(m) => CliError::Usage(m),
            LagrangianError::Geometry(g) => g.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::BrokenPipe => CliError::BrokenPipe,
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => return io.into(),
                other => return CliError::Failed(format!("{other:?}")),
            }
        }
        CliError::Failed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        match e.io_error_kind() {
            Some(std::io::ErrorKind::BrokenPipe) => CliError::BrokenPipe,
            _ => CliError::Failed(e.to_string()),
        }
    }
}
