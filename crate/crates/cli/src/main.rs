use std::path::PathBuf;
use std::process::ExitCode;

use cgcat_cli::{
    parse_angle, run, write_outputs, CliError, ExponentConvention, GridSettings, RunConfig,
    SliceState, SweepRange,
};
use clap::{Args, Parser, Subcommand};

fn angle(s: &str) -> Result<f64, String> {
    parse_angle(s)
}

#[derive(Parser)]
#[command(
    name = "cgcat",
    version,
    about = "Coarse-grained measurements on bosonic cat states: Bell quantities, \
             post-measurement Wigner functions, and phase-space negativity sweeps as CSV"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Fail with exit code 3 if any reliability flag trips.
    #[arg(long, global = true)]
    strict: bool,
    /// Output CSV path (a .manifest.json sidecar is written next to it).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel integrals (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Clone)]
struct DeltaSweep {
    /// Smallest resolution width δ.
    #[arg(long = "delta-min", default_value_t = 0.0)]
    delta_min: f64,
    /// Largest resolution width δ.
    #[arg(long = "delta-max", default_value_t = 4.0)]
    delta_max: f64,
    /// Number of sweep points (inclusive endpoints).
    #[arg(long, default_value_t = 50)]
    steps: usize,
}

#[derive(Args, Clone)]
struct ResolutionSweep {
    /// Smallest resolution width δ.
    #[arg(long = "delta-min", default_value_t = 0.0)]
    delta_min: f64,
    /// Largest resolution width δ.
    #[arg(long = "delta-max", default_value_t = 2.0)]
    delta_max: f64,
    /// Number of sweep points (inclusive endpoints).
    #[arg(long, default_value_t = 9)]
    steps: usize,
}

#[derive(Args, Clone)]
struct BigDeltaSweep {
    /// Smallest reference width Δ.
    #[arg(long = "Delta-min", default_value_t = 0.0)]
    big_delta_min: f64,
    /// Largest reference width Δ.
    #[arg(long = "Delta-max", default_value_t = 1.0)]
    big_delta_max: f64,
    /// Number of sweep points (inclusive endpoints).
    #[arg(long, default_value_t = 21)]
    steps: usize,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Base quadrature points per phase-space axis.
    #[arg(long = "grid-points")]
    grid_points: Option<usize>,
    /// Half-width of the phase-space box (default max(4, |alpha|+4)).
    #[arg(long = "grid-extent")]
    grid_extent: Option<f64>,
    /// Inner-mode oversampling factor of the 4D contraction.
    #[arg(long)]
    inner_factor: Option<usize>,
    /// Support-cell refinement factor of the 4D contraction.
    #[arg(long)]
    refine_factor: Option<usize>,
}

impl GridArgs {
    fn settings(&self, default: GridSettings) -> GridSettings {
        GridSettings {
            points: self.grid_points.unwrap_or(default.points),
            extent: self.grid_extent.or(default.extent),
            inner_factor: self.inner_factor.unwrap_or(default.inner_factor),
            refine_factor: self.refine_factor.unwrap_or(default.refine_factor),
        }
    }
}

#[derive(Args, Clone)]
struct AngleArgs {
    /// First measurement angle θ_a (radians or rational multiples of pi,
    /// e.g. "pi/4", "13/100pi").
    #[arg(long = "theta-a", value_parser = angle, default_value = "pi/4")]
    theta_a: f64,
    /// Second measurement angle θ_b.
    #[arg(long = "theta-b", value_parser = angle, default_value = "3pi/4")]
    theta_b: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum CHSH quantity B_δ under resolution coarse-graining.
    BellRes {
        /// Cat amplitude α.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[command(flatten)]
        sweep: DeltaSweep,
        /// Discrete-Gaussian exponent: printed exp(-k²/2δ) or variance
        /// exp(-k²/2δ²).
        #[arg(long, value_parser = parse_convention, default_value = "printed")]
        convention: ExponentConvention,
    },
    /// Closed-form CHSH quantity B_Δ under reference coarse-graining.
    BellRef {
        #[command(flatten)]
        sweep: BigDeltaSweep,
    },
    /// Two-mode negativity of the reference-channel output on cat pairs,
    /// swept over Δ; one series per α.
    NegRefCat {
        /// Cat amplitudes (comma separated for multiple series).
        #[arg(long, value_delimiter = ',', default_value = "2.0")]
        alpha: Vec<f64>,
        #[command(flatten)]
        angles: AngleArgs,
        #[command(flatten)]
        sweep: BigDeltaSweep,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Two-mode Wigner function W(β, γ) on a β grid at fixed γ.
    WignerSlice {
        /// Which state: the entangled pair or the sharp post-measurement
        /// state.
        #[arg(long, value_parser = parse_state, default_value = "initial")]
        state: SliceState,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[command(flatten)]
        angles: AngleArgs,
        /// Cut index k of the first mode (measured state only).
        #[arg(long, default_value_t = 4)]
        k: i64,
        /// Cut index m of the second mode (measured state only).
        #[arg(long, default_value_t = 4)]
        m: i64,
        /// Fixed γ, real part.
        #[arg(long = "gamma-re", default_value_t = 0.0)]
        gamma_re: f64,
        /// Fixed γ, imaginary part.
        #[arg(long = "gamma-im", default_value_t = 0.0)]
        gamma_im: f64,
        /// Fock truncation per mode.
        #[arg(long, default_value_t = 20)]
        nmax: usize,
        /// Slice points per axis.
        #[arg(long = "grid-points", default_value_t = 81)]
        grid_points: usize,
        #[arg(long = "grid-extent")]
        grid_extent: Option<f64>,
    },
    /// Resolution-channel negativity vs δ: weighted N_km sum and the direct
    /// mixture value; one series pair per truncation.
    NegResCat {
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[command(flatten)]
        angles: AngleArgs,
        #[command(flatten)]
        sweep: ResolutionSweep,
        /// Fock truncations (comma separated for multiple series).
        #[arg(long, value_delimiter = ',', default_value = "20")]
        nmax: Vec<usize>,
        #[arg(long, value_parser = parse_convention, default_value = "printed")]
        convention: ExponentConvention,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Negativity map N_km of sharp post-measurement states.
    NegMap {
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[command(flatten)]
        angles: AngleArgs,
        #[arg(long = "k-min", default_value_t = -4)]
        k_min: i64,
        #[arg(long = "k-max", default_value_t = 4)]
        k_max: i64,
        #[arg(long = "m-min", default_value_t = -4)]
        m_min: i64,
        #[arg(long = "m-max", default_value_t = 4)]
        m_max: i64,
        #[arg(long, default_value_t = 20)]
        nmax: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Reference-channel negativity for NOON states; one series per N.
    NegRefNoon {
        /// Odd photon numbers N (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        n: Vec<usize>,
        #[command(flatten)]
        angles: AngleArgs,
        #[command(flatten)]
        sweep: BigDeltaSweep,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Reference-channel negativity for photon-added squeezed vacuum pairs;
    /// one series per squeezing r.
    NegRefPasv {
        /// Squeezing parameters r (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
        r: Vec<f64>,
        #[command(flatten)]
        angles: AngleArgs,
        #[command(flatten)]
        sweep: BigDeltaSweep,
        #[command(flatten)]
        grid: GridArgs,
    },
}

fn parse_convention(s: &str) -> Result<ExponentConvention, String> {
    match s {
        "printed" => Ok(ExponentConvention::Printed),
        "variance" => Ok(ExponentConvention::Variance),
        other => Err(format!("unknown convention '{other}' (printed|variance)")),
    }
}

fn parse_state(s: &str) -> Result<SliceState, String> {
    match s {
        "initial" => Ok(SliceState::Initial),
        "measured" => Ok(SliceState::Measured),
        other => Err(format!("unknown state '{other}' (initial|measured)")),
    }
}

fn build_config(command: &Command, workers: usize) -> RunConfig {
    match command {
        Command::BellRes {
            alpha,
            sweep,
            convention,
        } => RunConfig::BellRes {
            alpha: *alpha,
            delta: SweepRange {
                min: sweep.delta_min,
                max: sweep.delta_max,
                steps: sweep.steps,
            },
            convention: *convention,
        },
        Command::BellRef { sweep } => RunConfig::BellRef {
            delta_big: SweepRange {
                min: sweep.big_delta_min,
                max: sweep.big_delta_max,
                steps: sweep.steps,
            },
        },
        Command::NegRefCat {
            alpha,
            angles,
            sweep,
            grid,
        } => RunConfig::NegRefCat {
            alphas: alpha.clone(),
            theta_a: angles.theta_a,
            theta_b: angles.theta_b,
            delta_big: SweepRange {
                min: sweep.big_delta_min,
                max: sweep.big_delta_max,
                steps: sweep.steps,
            },
            grid: grid.settings(GridSettings::figure_default()),
            workers,
        },
        Command::WignerSlice {
            state,
            alpha,
            angles,
            k,
            m,
            gamma_re,
            gamma_im,
            nmax,
            grid_points,
            grid_extent,
        } => RunConfig::WignerSlice {
            state: *state,
            alpha: *alpha,
            theta_a: angles.theta_a,
            theta_b: angles.theta_b,
            k: *k,
            m: *m,
            gamma_re: *gamma_re,
            gamma_im: *gamma_im,
            n_max: *nmax,
            points: *grid_points,
            extent: *grid_extent,
        },
        Command::NegResCat {
            alpha,
            angles,
            sweep,
            nmax,
            convention,
            grid,
        } => RunConfig::NegResCat {
            alpha: *alpha,
            theta_a: angles.theta_a,
            theta_b: angles.theta_b,
            delta: SweepRange {
                min: sweep.delta_min,
                max: sweep.delta_max,
                steps: sweep.steps,
            },
            n_maxes: nmax.clone(),
            convention: *convention,
            grid: grid.settings(GridSettings::map_default()),
            workers,
        },
        Command::NegMap {
            alpha,
            angles,
            k_min,
            k_max,
            m_min,
            m_max,
            nmax,
            grid,
        } => RunConfig::NegMap {
            alpha: *alpha,
            theta_a: angles.theta_a,
            theta_b: angles.theta_b,
            k_min: *k_min,
            k_max: *k_max,
            m_min: *m_min,
            m_max: *m_max,
            n_max: *nmax,
            grid: grid.settings(GridSettings::map_default()),
            workers,
        },
        Command::NegRefNoon {
            n,
            angles,
            sweep,
            grid,
        } => RunConfig::NegRefNoon {
            ns: n.clone(),
            theta_a: angles.theta_a,
            theta_b: angles.theta_b,
            delta_big: SweepRange {
                min: sweep.big_delta_min,
                max: sweep.big_delta_max,
                steps: sweep.steps,
            },
            grid: grid.settings(GridSettings::figure_default()),
            workers,
        },
        Command::NegRefPasv {
            r,
            angles,
            sweep,
            grid,
        } => RunConfig::NegRefPasv {
            rs: r.clone(),
            theta_a: angles.theta_a,
            theta_b: angles.theta_b,
            delta_big: SweepRange {
                min: sweep.big_delta_min,
                max: sweep.big_delta_max,
                steps: sweep.steps,
            },
            grid: grid.settings(GridSettings::figure_default()),
            workers,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = build_config(&cli.command, cli.workers);
    let out_path = cli
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.command_name())));
    match run(&config) {
        Ok(output) => {
            if cli.strict && !output.warnings.is_empty() {
                let err = CliError::Unreliable(output.warnings.join("; "));
                eprintln!("cgcat: {err}");
                return ExitCode::from(err.exit_code() as u8);
            }
            match write_outputs(&out_path, &output) {
                Ok(manifest_path) => {
                    let rows = output.csv.lines().count().saturating_sub(1);
                    println!(
                        "wrote {} ({} rows) and {}",
                        out_path.display(),
                        rows,
                        manifest_path.display()
                    );
                    for w in &output.warnings {
                        eprintln!("cgcat: warning: {w}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("cgcat: cannot write output: {e}");
                    ExitCode::from(CliError::Config(e.to_string()).exit_code() as u8)
                }
            }
        }
        Err(err) => {
            eprintln!("cgcat: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
