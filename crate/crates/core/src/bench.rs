//! Seeded Monte Carlo sweeps for the identification and polygon problems.
//!
//! Every trial draws its randomness from [`trial_rng`] keyed by
//! `(seed, experiment, level, rep)`, so trials can run in any order and on
//! any number of threads. Results are collected by index and then reduced
//! serially, which keeps the tables bit-identical across runs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apps::noise::add_noise;
use crate::apps::polygon::{
    complex_moments, recover_vertices, vertex_error, MomentVector, Polygon,
};
use crate::apps::sysid::{model_from_solution, random_stable_model, random_trajectory};
use crate::error::{Error, Result};
use crate::rng::trial_rng;
use crate::scalar::norm2;
use crate::solver::{default_direction, solve, solve_from, SolveParams};

pub const SYSID_NOISE: u16 = 1;
pub const INITIAL_ESTIMATE: u16 = 2;
pub const POLYGON_NOISE: u16 = 3;
pub const POLYGON_MOMENTS: u16 = 4;

fn check_grid(noise: &[f64], reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidInput("repetitions must be at least 1".into()));
    }
    if noise.is_empty() {
        return Err(Error::InvalidInput("noise grid is empty".into()));
    }
    if let Some(t) = noise.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "noise level {t} must be positive"
        )));
    }
    Ok(())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidSweep {
    pub order: usize,
    pub len: usize,
    pub noise: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for SysidSweep {
    fn default() -> Self {
        Self {
            order: 5,
            len: 50,
            noise: vec![1e-4, 1e-3, 1e-2, 1e-1],
            reps: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidTrial {
    pub noise: f64,
    pub rep: usize,
    /// `||p - p~||` in the configured distance mode.
    pub distance: f64,
    /// `||p - p0||`, the distance to the true trajectory.
    pub noise_norm: f64,
    /// Angle between the identified and true coefficient vectors.
    pub model_angle: f64,
    pub converged: bool,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidRow {
    pub noise: f64,
    pub reps: usize,
    pub converged: usize,
    pub mean_distance: f64,
    pub mean_noise_norm: f64,
    pub mean_model_angle: f64,
}

fn sysid_trial(
    cfg: &SysidSweep,
    params: &SolveParams,
    level: usize,
    rep: usize,
) -> Result<SysidTrial> {
    let noise = cfg.noise[level];
    let mut rng = trial_rng(cfg.seed, SYSID_NOISE, level as u32, rep as u32);
    let model = random_stable_model(cfg.order, &mut rng)?;
    let p0 = random_trajectory(&model, cfg.len, &mut rng)?;
    let p = add_noise(&p0, noise, &mut rng)?;
    let sol = solve(&p, cfg.order + 1, params)?;
    let noise_norm = norm2(&p.iter().zip(&p0).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(SysidTrial {
        noise,
        rep,
        distance: sol.distance,
        noise_norm,
        model_angle: model_from_solution(&sol)?.angle_to(&model),
        converged: sol.converged,
        outer_iterations: sol.outer_iterations,
    })
}

/// All trials of the identification sweep, ordered by `(level, rep)`.
pub fn sysid_trials(cfg: &SysidSweep, params: &SolveParams) -> Result<Vec<SysidTrial>> {
    check_grid(&cfg.noise, cfg.reps)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.noise.len())
        .flat_map(|l| (0..cfg.reps).map(move |r| (l, r)))
        .collect();
    jobs.par_iter()
        .map(|&(l, r)| sysid_trial(cfg, params, l, r))
        .collect()
}

pub fn summarize_sysid(cfg: &SysidSweep, trials: &[SysidTrial]) -> Vec<SysidRow> {
    cfg.noise
        .iter()
        .map(|&noise| {
            let level: Vec<&SysidTrial> = trials.iter().filter(|t| t.noise == noise).collect();
            SysidRow {
                noise,
                reps: level.len(),
                converged: level.iter().filter(|t| t.converged).count(),
                mean_distance: mean(level.iter().map(|t| t.distance)),
                mean_noise_norm: mean(level.iter().map(|t| t.noise_norm)),
                mean_model_angle: mean(level.iter().map(|t| t.model_angle)),
            }
        })
        .collect()
}

/// Mean distance per noise level over `reps` seeded trajectories.
pub fn sysid_noise_sweep(cfg: &SysidSweep, params: &SolveParams) -> Result<Vec<SysidRow>> {
    Ok(summarize_sysid(cfg, &sysid_trials(cfg, params)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimateStudy {
    pub order: usize,
    pub len: usize,
    pub noise: f64,
    /// Number of perturbed starting directions.
    pub starts: usize,
    /// Standard deviation of the Gaussian perturbation of the start.
    pub spread: f64,
    pub seed: u64,
}

impl Default for InitialEstimateStudy {
    fn default() -> Self {
        Self {
            order: 5,
            len: 50,
            noise: 1e-2,
            starts: 20,
            spread: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimateReport {
    /// Distance reached from the steepest-descent start.
    pub default_distance: f64,
    /// Distance reached from each perturbed start.
    pub distances: Vec<f64>,
    pub converged: usize,
    /// Largest Euclidean distance between two computed approximations.
    pub dispersion: f64,
}

/// Solve one noisy trajectory from the default start and from `starts`
/// Gaussian perturbations of it, and measure how far the answers spread.
pub fn initial_estimate_study(
    cfg: &InitialEstimateStudy,
    params: &SolveParams,
) -> Result<InitialEstimateReport> {
    check_grid(&[cfg.noise], cfg.starts)?;
    if !(cfg.spread.is_finite() && cfg.spread >= 0.0) {
        return Err(Error::InvalidInput("spread must be nonnegative".into()));
    }
    let mut rng = trial_rng(cfg.seed, INITIAL_ESTIMATE, 0, 0);
    let model = random_stable_model(cfg.order, &mut rng)?;
    let p0 = random_trajectory(&model, cfg.len, &mut rng)?;
    let p = add_noise(&p0, cfg.noise, &mut rng)?;
    let rows = cfg.order + 1;
    let base = default_direction(&p, rows, params)?;
    let reference = solve(&p, rows, params)?;
    let normal = Normal::new(0.0, cfg.spread).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let solutions: Vec<_> = (0..cfg.starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(cfg.seed, INITIAL_ESTIMATE, 1, k as u32);
            let start: Vec<f64> = base.iter().map(|d| d + normal.sample(&mut rng)).collect();
            solve_from(&p, rows, params, &start)
        })
        .collect::<Result<_>>()?;

    let mut dispersion: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            let d = a
                .p_tilde
                .iter()
                .zip(&b.p_tilde)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            dispersion = dispersion.max(d);
        }
    }
    Ok(InitialEstimateReport {
        default_distance: reference.distance,
        distances: solutions.iter().map(|s| s.distance).collect(),
        converged: solutions.iter().filter(|s| s.converged).count(),
        dispersion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSweep {
    pub polygon: Polygon,
    /// Highest moment order `N` for each level.
    pub moments: Vec<usize>,
    pub noise: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonTrial {
    pub noise: f64,
    pub n_moments: usize,
    pub rep: usize,
    /// `None` when recovery failed (for example a non-monic kernel).
    pub vertices: Option<Vec<num_complex::Complex64>>,
    pub error: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRow {
    pub noise: f64,
    pub n_moments: usize,
    pub reps: usize,
    pub failures: usize,
    pub converged: usize,
    pub mean_error: f64,
}

fn polygon_trial(
    cfg: &PolygonSweep,
    params: &SolveParams,
    experiment: u16,
    level: usize,
    n_moments: usize,
    noise: f64,
    rep: usize,
) -> Result<PolygonTrial> {
    let exact = complex_moments(&cfg.polygon, n_moments);
    let mut rng = trial_rng(cfg.seed, experiment, level as u32, rep as u32);
    let noisy = MomentVector {
        tau: add_noise(&exact.tau, noise, &mut rng)?,
    };
    let outcome = match recover_vertices(&noisy, cfg.polygon.len(), params) {
        Ok((z, sol)) => Some((vertex_error(&cfg.polygon, &z)?, z, sol.converged)),
        Err(Error::NonMonic { .. } | Error::DegeneratePolygon(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(match outcome {
        Some((error, z, converged)) => PolygonTrial {
            noise,
            n_moments,
            rep,
            vertices: Some(z.vertices().to_vec()),
            error: Some(error),
            converged,
        },
        None => PolygonTrial {
            noise,
            n_moments,
            rep,
            vertices: None,
            error: None,
            converged: false,
        },
    })
}

fn summarize_polygon(levels: &[(f64, usize)], trials: &[PolygonTrial]) -> Vec<PolygonRow> {
    levels
        .iter()
        .map(|&(noise, n_moments)| {
            let level: Vec<&PolygonTrial> = trials
                .iter()
                .filter(|t| t.noise == noise && t.n_moments == n_moments)
                .collect();
            PolygonRow {
                noise,
                n_moments,
                reps: level.len(),
                failures: level.iter().filter(|t| t.error.is_none()).count(),
                converged: level.iter().filter(|t| t.converged).count(),
                mean_error: mean(level.iter().filter_map(|t| t.error)),
            }
        })
        .collect()
}

fn polygon_levels(cfg: &PolygonSweep, experiment: u16) -> Result<Vec<(f64, usize)>> {
    check_grid(&cfg.noise, cfg.reps)?;
    let n = cfg.polygon.len();
    if let Some(k) = cfg.moments.iter().find(|k| **k <= 2 * n) {
        return Err(Error::InvalidInput(format!(
            "moment order {k} is too low for {n} vertices"
        )));
    }
    match experiment {
        POLYGON_NOISE if cfg.moments.len() == 1 => {
            Ok(cfg.noise.iter().map(|t| (*t, cfg.moments[0])).collect())
        }
        POLYGON_MOMENTS if cfg.noise.len() == 1 => {
            Ok(cfg.moments.iter().map(|k| (cfg.noise[0], *k)).collect())
        }
        _ => Err(Error::InvalidInput(
            "a polygon sweep varies either the noise or the moment order".into(),
        )),
    }
}

/// (noise, moment order) per level, and every trial.
type PolygonRuns = (Vec<(f64, usize)>, Vec<PolygonTrial>);

fn polygon_trials(
    cfg: &PolygonSweep,
    params: &SolveParams,
    experiment: u16,
) -> Result<PolygonRuns> {
    let levels = polygon_levels(cfg, experiment)?;
    let jobs: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|l| (0..cfg.reps).map(move |r| (l, r)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(l, r)| {
            let (noise, k) = levels[l];
            polygon_trial(cfg, params, experiment, l, k, noise, r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((levels, trials))
}

/// Mean vertex error per noise level at a single moment order.
pub fn polygon_noise_sweep(
    cfg: &PolygonSweep,
    params: &SolveParams,
) -> Result<(Vec<PolygonRow>, Vec<PolygonTrial>)> {
    let (levels, trials) = polygon_trials(cfg, params, POLYGON_NOISE)?;
    Ok((summarize_polygon(&levels, &trials), trials))
}

/// Mean vertex error per moment order at a single noise level.
pub fn polygon_moment_sweep(
    cfg: &PolygonSweep,
    params: &SolveParams,
) -> Result<(Vec<PolygonRow>, Vec<PolygonTrial>)> {
    let (levels, trials) = polygon_trials(cfg, params, POLYGON_MOMENTS)?;
    Ok((summarize_polygon(&levels, &trials), trials))
}

/// Tab-separated table with a header line. Floats use the shortest
/// representation that round-trips, so equal values render identically.
pub fn render_tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    out
}

pub fn sysid_table(rows: &[SysidRow]) -> String {
    render_tsv(
        &[
            "noise",
            "reps",
            "converged",
            "mean_distance",
            "mean_noise_norm",
            "mean_model_angle",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.noise.to_string(),
                    r.reps.to_string(),
                    r.converged.to_string(),
                    r.mean_distance.to_string(),
                    r.mean_noise_norm.to_string(),
                    r.mean_model_angle.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

pub fn polygon_table(rows: &[PolygonRow]) -> String {
    render_tsv(
        &[
            "noise",
            "n_moments",
            "reps",
            "failures",
            "converged",
            "mean_error",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.noise.to_string(),
                    r.n_moments.to_string(),
                    r.reps.to_string(),
                    r.failures.to_string(),
                    r.converged.to_string(),
                    r.mean_error.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

/// Recovered vertices of every trial at one level next to the true ones,
/// one vertex per line, for overlay plots.
pub fn overlay_table(truth: &Polygon, trials: &[PolygonTrial]) -> String {
    let mut rows: Vec<Vec<String>> = truth
        .vertices()
        .iter()
        .enumerate()
        .map(|(j, z)| {
            vec![
                "true".into(),
                j.to_string(),
                z.re.to_string(),
                z.im.to_string(),
            ]
        })
        .collect();
    for t in trials {
        if let Some(vs) = &t.vertices {
            for (j, z) in vs.iter().enumerate() {
                rows.push(vec![
                    t.rep.to_string(),
                    j.to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ]);
            }
        }
    }
    render_tsv(&["rep", "vertex", "re", "im"], &rows)
}

/// Uniform random polygon: `n` angles sorted around a circle with radii
/// in `[0.5, 1]`, which gives a simple star-shaped polygon.
pub fn random_polygon<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Polygon> {
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    Polygon::new(
        angles
            .into_iter()
            .map(|a| num_complex::Complex64::from_polar(rng.random_range(0.5..1.0), a))
            .collect(),
    )
}
