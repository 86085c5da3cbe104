use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hankel_slra::apps::polygon::{recover_vertices, MomentVector, Polygon};
use hankel_slra::apps::sysid::model_from_solution;
use hankel_slra::bench::{
    self, InitialEstimateStudy, PolygonSweep, SysidSweep, INITIAL_ESTIMATE, POLYGON_MOMENTS,
    POLYGON_NOISE, SYSID_NOISE,
};
use hankel_slra::{
    frobenius_weights, impose_missing, solve_with_progress, Complex64, DistanceMode, HankelShape,
    Scalar, Solution, SolveParams, WeightVector,
};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::input::{parse_entries, Entries};
use crate::{read, CliError};

const SYSID_DEFAULT_NOISE: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
const POLYGON_DEFAULT_NOISE: [f64; 4] = [1.0, 1e-1, 1e-2, 1e-3];
const POLYGON_DEFAULT_MOMENTS: [usize; 6] = [7, 8, 9, 10, 11, 12];

#[derive(Debug, Clone)]
pub struct Outcome {
    /// False if any single solve stopped short of the rank tolerance.
    pub converged: bool,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    /// Stream id mixed into every trial seed of this experiment.
    pub experiment: u16,
    pub noise: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_moments: Vec<usize>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    /// How trial generators are derived from `seed`.
    pub rng: String,
    pub experiments: Vec<ExperimentRecord>,
    pub params: SolveParams,
    pub files: Vec<String>,
    pub converged: bool,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub timestamp: u64,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
    experiments: Vec<ExperimentRecord>,
}

impl Output {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    fs::create_dir_all(&cfg.output).map_err(|source| CliError::Io {
        path: cfg.output.clone(),
        source,
    })?;
    let mut out = Output {
        dir: cfg.output.clone(),
        files: Vec::new(),
        experiments: Vec::new(),
    };
    let converged = match (cfg.mode, &cfg.input) {
        (Mode::Solve, Some(path)) => solve_file(cfg, path, &mut out)?,
        (Mode::Solve, None) => return Err(CliError::Config("solve mode needs --input".into())),
        (Mode::Sysid, Some(path)) => sysid_file(cfg, path, &mut out)?,
        (Mode::Sysid, None) => sysid_sweep(cfg, &mut out)?,
        (Mode::Polygon, Some(path)) => polygon_file(cfg, path, &mut out)?,
        (Mode::Polygon, None) => polygon_sweeps(cfg, &mut out)?,
        (Mode::Bench, _) => {
            let a = sysid_sweep(cfg, &mut out)?;
            initial_estimate(cfg, &mut out)?;
            let b = polygon_sweeps(cfg, &mut out)?;
            a && b
        }
    };

    let mode = match cfg.mode {
        Mode::Solve => "solve",
        Mode::Sysid => "sysid",
        Mode::Polygon => "polygon",
        Mode::Bench => "bench",
    };
    let mut manifest = Manifest {
        tool: "hslra".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: mode.into(),
        seed: cfg.seed,
        rng: "ChaCha8 seeded from `seed`, stream = experiment << 48 | level << 24 | rep".into(),
        experiments: std::mem::take(&mut out.experiments),
        params: cfg.params.clone(),
        files: out.files.clone(),
        converged,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    manifest.files.push("manifest.json".into());
    out.json("manifest.json", &manifest)?;
    Ok(Outcome {
        converged,
        files: out.files.iter().map(|f| cfg.output.join(f)).collect(),
    })
}

fn read_entries(path: &Path) -> Result<Entries, CliError> {
    parse_entries(&read(path)?).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Solver settings for one data vector. Entries that were filled in are
/// left out of the reported distance.
fn params_for<T: Scalar>(
    cfg: &RunConfig,
    raw: &[Option<T>],
    rows: usize,
) -> Result<(Vec<T>, SolveParams), CliError> {
    let mut params = cfg.params.clone();
    if raw.iter().all(Option::is_some) {
        params.distance_mode = cfg.distance.unwrap_or_default();
        return Ok((raw.iter().map(|x| x.unwrap()).collect(), params));
    }
    let (filled, mask) = impose_missing(raw)?;
    log::info!(
        "filled {} missing entries",
        mask.as_slice().iter().filter(|w| **w == 0.0).count()
    );
    match cfg.distance {
        Some(DistanceMode::Euclidean) => params.distance_mode = DistanceMode::Euclidean,
        Some(DistanceMode::Frobenius) => {
            let counts = frobenius_weights(HankelShape::new(rows, raw.len())?);
            let w = mask
                .as_slice()
                .iter()
                .zip(counts.as_slice())
                .map(|(a, b)| a * b);
            params.distance_mode = DistanceMode::Weighted;
            params.distance_weights = Some(WeightVector::new(w.collect())?);
        }
        Some(DistanceMode::Weighted) | None => {
            params.distance_mode = DistanceMode::Weighted;
            params.distance_weights = Some(mask);
        }
    }
    Ok((filled, params))
}

fn trace_tsv<T: Scalar>(sol: &Solution<T>) -> String {
    bench::render_tsv(
        &["iteration", "sigma"],
        &sol.sigma_series()
            .iter()
            .map(|(i, s)| vec![i.to_string(), s.to_string()])
            .collect::<Vec<_>>(),
    )
}

fn outer_tsv<T: Scalar>(sol: &Solution<T>) -> String {
    bench::render_tsv(
        &["iteration", "epsilon", "sigma", "delta_increment"],
        &sol.trace
            .iter()
            .map(|r| {
                vec![
                    r.iteration.to_string(),
                    r.epsilon.to_string(),
                    r.sigma.to_string(),
                    r.delta_increment.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

fn solve_and_write<T: Scalar>(
    p: &[T],
    rows: usize,
    params: &SolveParams,
    out: &mut Output,
) -> Result<Solution<T>, CliError> {
    let sol = solve_with_progress(p, rows, params, None, &mut |r| {
        log::debug!(
            "outer {}: epsilon {:e} sigma {:e}",
            r.iteration,
            r.epsilon,
            r.sigma
        );
    })?;
    log::info!(
        "epsilon* {:e}, sigma {:e} (tolerance {:e}), {} outer iterations",
        sol.epsilon_star,
        sol.sigma_final,
        sol.tol_rank,
        sol.outer_iterations
    );
    out.json("solution.json", &sol)?;
    out.write("trace.tsv", &trace_tsv(&sol))?;
    out.write("outer.tsv", &outer_tsv(&sol))?;
    Ok(sol)
}

fn require_rows(rows: Option<usize>) -> Result<usize, CliError> {
    rows.ok_or_else(|| CliError::Config("solve mode needs --m".into()))
}

fn solve_file(cfg: &RunConfig, path: &Path, out: &mut Output) -> Result<bool, CliError> {
    let entries = read_entries(path)?;
    let rows = require_rows(cfg.rows)?;
    Ok(if entries.complex {
        let (p, params) = params_for(cfg, &entries.values, rows)?;
        solve_and_write(&p, rows, &params, out)?.converged
    } else {
        let (p, params) = params_for(cfg, &entries.to_real(), rows)?;
        solve_and_write(&p, rows, &params, out)?.converged
    })
}

#[derive(Serialize)]
struct ModelFile<'a> {
    order: usize,
    coefficients: &'a [f64],
}

fn sysid_file(cfg: &RunConfig, path: &Path, out: &mut Output) -> Result<bool, CliError> {
    let entries = read_entries(path)?;
    if entries.complex {
        return Err(CliError::Config(
            "system identification needs real data".into(),
        ));
    }
    let rows = cfg.order + 1;
    let raw = entries.to_real();
    if raw.len() < 2 * rows {
        return Err(CliError::Config(format!(
            "order {} needs at least {} samples, got {}",
            cfg.order,
            2 * rows,
            raw.len()
        )));
    }
    let (p, params) = params_for(cfg, &raw, rows)?;
    let sol = solve_and_write(&p, rows, &params, out)?;
    let model = model_from_solution(&sol)?;
    out.json(
        "model.json",
        &ModelFile {
            order: model.order(),
            coefficients: model.coefficients(),
        },
    )?;
    Ok(sol.converged)
}

fn grid_or(noise: &[f64], default: &[f64]) -> Vec<f64> {
    if noise.is_empty() {
        default.to_vec()
    } else {
        noise.to_vec()
    }
}

fn sysid_sweep(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let sweep = SysidSweep {
        order: cfg.order,
        len: cfg.len,
        noise: grid_or(&cfg.noise, &SYSID_DEFAULT_NOISE),
        reps: cfg.reps,
        seed: cfg.seed,
    };
    let mut params = cfg.params.clone();
    params.distance_mode = cfg.distance.unwrap_or_default();
    let trials = bench::sysid_trials(&sweep, &params)?;
    out.write(
        "sysid_noise.tsv",
        &bench::sysid_table(&bench::summarize_sysid(&sweep, &trials)),
    )?;
    out.write(
        "sysid_trials.tsv",
        &bench::render_tsv(
            &[
                "noise",
                "rep",
                "distance",
                "noise_norm",
                "model_angle",
                "converged",
                "outer_iterations",
            ],
            &trials
                .iter()
                .map(|t| {
                    vec![
                        t.noise.to_string(),
                        t.rep.to_string(),
                        t.distance.to_string(),
                        t.noise_norm.to_string(),
                        t.model_angle.to_string(),
                        t.converged.to_string(),
                        t.outer_iterations.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    )?;
    out.experiments.push(ExperimentRecord {
        name: "sysid_noise".into(),
        experiment: SYSID_NOISE,
        noise: sweep.noise.clone(),
        n_moments: Vec::new(),
        reps: sweep.reps,
    });
    let failed = trials.iter().filter(|t| !t.converged).count();
    if failed > 0 {
        log::warn!(
            "{failed} of {} identification runs did not converge",
            trials.len()
        );
    }
    Ok(true)
}

fn initial_estimate(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let study = InitialEstimateStudy {
        order: cfg.order,
        len: cfg.len,
        noise: cfg.noise.first().copied().unwrap_or(1e-2),
        starts: cfg.starts,
        seed: cfg.seed,
        ..InitialEstimateStudy::default()
    };
    let report = bench::initial_estimate_study(&study, &cfg.params)?;
    out.json("initial_estimate.json", &report)?;
    out.experiments.push(ExperimentRecord {
        name: "initial_estimate".into(),
        experiment: INITIAL_ESTIMATE,
        noise: vec![study.noise],
        n_moments: Vec::new(),
        reps: study.starts,
    });
    Ok(())
}

#[derive(Serialize)]
struct VertexFile<'a> {
    vertices: &'a [Complex64],
    epsilon_star: f64,
    converged: bool,
}

fn vertices_tsv(z: &[Complex64]) -> String {
    bench::render_tsv(
        &["vertex", "re", "im"],
        &z.iter()
            .enumerate()
            .map(|(j, v)| vec![j.to_string(), v.re.to_string(), v.im.to_string()])
            .collect::<Vec<_>>(),
    )
}

fn polygon_file(cfg: &RunConfig, path: &Path, out: &mut Output) -> Result<bool, CliError> {
    let entries = read_entries(path)?;
    if entries.has_missing() {
        return Err(CliError::Config(
            "moment files may not contain missing entries".into(),
        ));
    }
    let moments = MomentVector {
        tau: entries.values.iter().map(|v| v.unwrap()).collect(),
    };
    let (poly, sol) = recover_vertices(&moments, cfg.n_vertices, &cfg.params)?;
    out.json("solution.json", &sol)?;
    out.write("trace.tsv", &trace_tsv(&sol))?;
    out.write("vertices.tsv", &vertices_tsv(poly.vertices()))?;
    out.json(
        "vertices.json",
        &VertexFile {
            vertices: poly.vertices(),
            epsilon_star: sol.epsilon_star,
            converged: sol.converged,
        },
    )?;
    Ok(sol.converged)
}

fn polygon_sweeps(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let polygon = Polygon::reference_triangle();
    if cfg.n_vertices != polygon.len() {
        return Err(CliError::Config(
            "the generated polygon sweeps use the 3-vertex reference triangle".into(),
        ));
    }
    let noise = grid_or(&cfg.noise, &POLYGON_DEFAULT_NOISE);
    let noise_cfg = PolygonSweep {
        polygon: polygon.clone(),
        moments: vec![cfg.n_moments.first().copied().unwrap_or(8)],
        noise: noise.clone(),
        reps: cfg.reps,
        seed: cfg.seed,
    };
    let (rows, trials) = bench::polygon_noise_sweep(&noise_cfg, &cfg.params)?;
    out.write("polygon_noise.tsv", &bench::polygon_table(&rows))?;
    out.write("polygon_true.tsv", &vertices_tsv(polygon.vertices()))?;
    for tau in &noise {
        let level: Vec<_> = trials.iter().filter(|t| t.noise == *tau).cloned().collect();
        out.write(
            &format!("overlay_noise_{tau:e}.tsv"),
            &bench::overlay_table(&polygon, &level),
        )?;
    }
    out.experiments.push(ExperimentRecord {
        name: "polygon_noise".into(),
        experiment: POLYGON_NOISE,
        noise: noise.clone(),
        n_moments: noise_cfg.moments.clone(),
        reps: cfg.reps,
    });

    let moments = if cfg.n_moments.len() >= 2 {
        cfg.n_moments.clone()
    } else {
        POLYGON_DEFAULT_MOMENTS.to_vec()
    };
    let level = noise.iter().copied().fold(f64::INFINITY, f64::min);
    let moment_cfg = PolygonSweep {
        moments: moments.clone(),
        noise: vec![level],
        ..noise_cfg
    };
    let (rows, _) = bench::polygon_moment_sweep(&moment_cfg, &cfg.params)?;
    out.write("polygon_moments.tsv", &bench::polygon_table(&rows))?;
    out.experiments.push(ExperimentRecord {
        name: "polygon_moments".into(),
        experiment: POLYGON_MOMENTS,
        noise: vec![level],
        n_moments: moments,
        reps: cfg.reps,
    });
    Ok(true)
}
