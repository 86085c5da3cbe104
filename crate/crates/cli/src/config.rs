use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use hankel_slra::{DistanceMode, FlowWeights, SolveParams, WeightVector};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Approximate one data vector.
    Solve,
    /// Identify a model from data, or run the seeded noise sweep.
    Sysid,
    /// Recover a polygon from moments, or run the seeded polygon sweeps.
    Polygon,
    /// All sweeps under one manifest.
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Unit,
    Frobenius,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceArg {
    Euclidean,
    Weighted,
    Frobenius,
}

impl From<DistanceArg> for DistanceMode {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Euclidean => DistanceMode::Euclidean,
            DistanceArg::Weighted => DistanceMode::Weighted,
            DistanceArg::Frobenius => DistanceMode::Frobenius,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "hslra",
    version,
    about = "Hankel structured low-rank approximation"
)]
pub struct Args {
    /// What to run.
    #[arg(long, value_enum, default_value_t = Mode::Solve)]
    pub mode: Mode,
    /// Data file: one entry per line, `a+bi` for complex values, `?` for missing.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "hslra-out")]
    pub output: PathBuf,
    /// Number of Hankel rows (solve mode).
    #[arg(long)]
    pub m: Option<usize>,
    /// Model order (sysid mode).
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Trajectory length for generated sysid data.
    #[arg(long, default_value_t = 50)]
    pub len: usize,
    /// Vertices of the generated polygon (polygon mode).
    #[arg(long, default_value_t = 3)]
    pub n_vertices: usize,
    /// Highest moment order; repeat to sweep over several.
    #[arg(long)]
    pub n_moments: Vec<usize>,
    /// Relative noise level; repeat for a grid.
    #[arg(long)]
    pub noise: Vec<f64>,
    /// Seeded repetitions per noise level.
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Master seed for every generated sample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbed starts in the initial-estimate study (bench mode).
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    /// Starting perturbation norm.
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Initial increment of the perturbation norm.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Rank tolerance relative to the Frobenius norm of the data matrix.
    #[arg(long)]
    pub tol_rank: Option<f64>,
    /// Smallest sigma decrease per step before a phase counts as stationary.
    #[arg(long)]
    pub tol_stationary: Option<f64>,
    /// Initial Euler step.
    #[arg(long)]
    pub h0: Option<f64>,
    /// Step shrink factor on rejection, in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Largest Euler step.
    #[arg(long)]
    pub h_max: Option<f64>,
    /// Accepted steps per flow phase.
    #[arg(long)]
    pub max_inner_steps: Option<usize>,
    /// Outer continuation iterations.
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Per-entry weights of the flow gradient.
    #[arg(long, value_enum, default_value_t = WeightsArg::Frobenius)]
    pub weights: WeightsArg,
    /// One weight per data entry (with `--weights file`).
    #[arg(long)]
    pub weights_file: Option<PathBuf>,
    /// Norm of the reported distance between data and approximation.
    #[arg(long, value_enum)]
    pub distance: Option<DistanceArg>,
    /// Finish with one Cadzow step if it lowers the smallest singular value.
    #[arg(long)]
    pub cadzow: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub rows: Option<usize>,
    pub order: usize,
    pub len: usize,
    pub n_vertices: usize,
    pub n_moments: Vec<usize>,
    pub noise: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub starts: usize,
    pub params: SolveParams,
    pub distance: Option<DistanceMode>,
}

impl RunConfig {
    pub fn from_args(args: Args) -> Result<Self, CliError> {
        let mut params = SolveParams::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut params.epsilon0, args.eps0);
        set(&mut params.delta_increment, args.delta);
        set(&mut params.flow.tol_rank, args.tol_rank);
        set(&mut params.flow.tol_stationary, args.tol_stationary);
        set(&mut params.flow.h0, args.h0);
        set(&mut params.flow.gamma, args.gamma);
        set(&mut params.flow.h_max, args.h_max);
        if let Some(n) = args.max_inner_steps {
            params.flow.max_inner_steps = n;
        }
        if let Some(n) = args.max_outer_iters {
            params.max_outer_iters = n;
        }
        params.cadzow_polish = args.cadzow;
        params.validate()?;

        if args.reps == 0 {
            return Err(CliError::Config("--reps must be at least 1".into()));
        }
        if args.starts == 0 {
            return Err(CliError::Config("--starts must be at least 1".into()));
        }
        if let Some(t) = args.noise.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(CliError::Config(format!(
                "noise level {t} must be positive"
            )));
        }
        if args.m == Some(0) {
            return Err(CliError::Config("--m must be at least 1".into()));
        }
        params.weights = match (args.weights, &args.weights_file) {
            (WeightsArg::File, Some(path)) => {
                let text = crate::read(path)?;
                let values = crate::input::parse_real(&text).map_err(|e| CliError::Parse {
                    path: path.clone(),
                    source: e,
                })?;
                FlowWeights::Explicit(WeightVector::new(values)?)
            }
            (WeightsArg::File, None) => {
                return Err(CliError::Config(
                    "--weights file needs --weights-file".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(CliError::Config(
                    "--weights-file needs --weights file".into(),
                ))
            }
            (WeightsArg::Unit, None) => FlowWeights::Unit,
            (WeightsArg::Frobenius, None) => FlowWeights::Frobenius,
        };
        if args.mode == Mode::Solve && args.input.is_none() {
            return Err(CliError::Config("solve mode needs --input".into()));
        }
        Ok(Self {
            mode: args.mode,
            input: args.input,
            output: args.output,
            rows: args.m,
            order: args.order,
            len: args.len,
            n_vertices: args.n_vertices,
            n_moments: args.n_moments,
            noise: args.noise,
            reps: args.reps,
            seed: args.seed,
            starts: args.starts,
            params,
            distance: args.distance.map(Into::into),
        })
    }
}
