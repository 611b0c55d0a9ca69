use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use bdy_core::agent_sim::{init_population, simulate_until, EventLog, InitSpec};
use bdy_core::diagnostics::{gini, lyapunov_weights, metrics};
use bdy_core::equilibrium::equilibrium_distribution;
use bdy_core::experiments::{
    run_convergence_study, run_generator_oracle, run_gini_sweep, run_poc_study, FitWindow,
    GiniSweepConfig, PocConfig,
};
use bdy_core::io::{
    count_rows, emit_csv, mass_rows, max_index, read_mass, read_states, state_rows,
};
use bdy_core::meanfield::rk4_integrate;
use bdy_core::rng::replica_rng;
use bdy_core::{make_prob_mass, Cap, Error, ModelParams, ProbMass};
use serde::Serialize;
use serde_json::json;

use crate::config::{resolve_params, FileConfig, ModelFlags};
use crate::{CliError, ModelArgs, Study};

const DEFAULT_TRIPLE: (i64, i64, u64) = (5, 7, 10);
const SWEEP_MU: u64 = 5;
const POC_BAND: (f64, f64) = (-0.65, -0.35);

fn flags(model: &ModelArgs, n_agents: Option<i64>) -> ModelFlags {
    ModelFlags {
        a: model.a,
        mu: model.mu,
        b: model.b.clone(),
        n_agents,
        n_max: model.n_max,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Validation(format!("cannot read `{}`: {e}", path.display())))
}

/// Resolves the model, falling back to `fallback_n_max` when an infinite cap
/// was given without a truncation.
fn params_with_fallback(
    flags: &ModelFlags,
    file: &FileConfig,
    fallback_n_max: impl Fn(i64) -> i64,
) -> Result<ModelParams, CliError> {
    let infinite = match (&flags.b, file.b) {
        (Some(s), _) => s.parse::<Cap>()?.is_infinite(),
        (None, b) => b.is_some_and(Cap::is_infinite),
    };
    let mut flags = flags.clone();
    if infinite && flags.n_max.is_none() && file.n_max.is_none() {
        let mu = flags.mu.or(file.mu).unwrap_or(DEFAULT_TRIPLE.1);
        flags.n_max = Some(fallback_n_max(mu));
    }
    resolve_params(&flags, file, DEFAULT_TRIPLE)
}

/// `Ok` unchanged, or widened to the truncation the equilibrium asks for.
fn equilibrium_widening(
    params: ModelParams,
) -> Result<
    (
        ModelParams,
        bdy_core::equilibrium::EquilibriumDist,
        ProbMass,
    ),
    CliError,
> {
    match equilibrium_distribution(&params) {
        Ok((eq, p)) => Ok((params, eq, p)),
        Err(Error::TruncationTooSmall { required, .. }) => {
            let wider = params.with_n_max(required)?;
            let (eq, p) = equilibrium_distribution(&wider)?;
            Ok((wider, eq, p))
        }
        Err(e) => Err(e.into()),
    }
}

/// Reads an `n,p_n` file on a grid wide enough for both the file and `params`.
fn read_law(path: &Path, params: &ModelParams) -> Result<Vec<f64>, CliError> {
    let top = max_index(open(path)?)?;
    Ok(read_mass(open(path)?, top.max(params.n_max()))?)
}

fn positive(key: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Validation(format!(
            "invalid value for `{key}`: must be positive, got {x}"
        )))
    }
}

fn nonnegative(key: &str, x: f64) -> Result<f64, CliError> {
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Validation(format!(
            "invalid value for `{key}`: must be nonnegative, got {x}"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: &ModelArgs,
    n_agents: Option<i64>,
    t_end: Option<f64>,
    seed: Option<u64>,
    samples: Option<Vec<f64>>,
    init: &str,
    out: &Path,
    event_log: Option<&Path>,
) -> Result<(), CliError> {
    let file = FileConfig::load(model.config.as_deref())?;
    let flags = flags(model, n_agents);
    let params = params_with_fallback(&flags, &file, |mu| 4 * mu + 2)?;
    let t_end = nonnegative("t_end", t_end.or(file.t_end).unwrap_or(1.0))?;
    let seed = seed.or(file.seed).unwrap_or(0);
    let samples = samples.or(file.samples).unwrap_or_else(|| vec![0.0, t_end]);

    let start = match init {
        "mean" => InitSpec::AllAtMean,
        s if s.starts_with("csv:") => InitSpec::Sample(ProbMass::normalized(read_law(
            Path::new(&s[4..]),
            &params,
        )?)?),
        other => {
            return Err(CliError::Validation(format!(
                "invalid value for `init`: expected `mean` or `csv:<path>`, got `{other}`"
            )))
        }
    };
    let mut rng = replica_rng(seed, 0);
    let mut pop = init_population(&params, &start, &mut rng)?;
    let mut log = EventLog::default();
    let snapshots = simulate_until(
        &mut pop,
        &params,
        t_end,
        &mut rng,
        &samples,
        event_log.map(|_| &mut log),
    )?;

    let rows: Vec<_> = snapshots
        .iter()
        .flat_map(|s| count_rows(s, params.b()))
        .collect();
    emit_csv(&rows, out)?;
    if let Some(path) = event_log {
        emit_csv(&log.events, path)?;
    }
    Ok(())
}

pub fn meanfield(
    model: &ModelArgs,
    t_end: Option<f64>,
    dt: Option<f64>,
    init: &str,
    samples: Option<Vec<f64>>,
    out: &Path,
) -> Result<(), CliError> {
    let file = FileConfig::load(model.config.as_deref())?;
    let params = params_with_fallback(&flags(model, None), &file, |mu| 20 * mu + 2)?;
    let t_end = nonnegative("t_end", t_end.or(file.t_end).unwrap_or(5.0))?;
    let dt = positive("dt", dt.or(file.dt).unwrap_or(0.01))?;
    let samples = samples.or(file.samples).unwrap_or_else(|| vec![0.0, t_end]);

    let p0 = match init {
        "delta" => ProbMass::delta(params.mu() as usize, params.n_max())?,
        s if s.starts_with("csv:") => {
            let values = read_law(Path::new(&s[4..]), &params)?;
            let params = params.with_n_max(values.len() - 1)?;
            make_prob_mass(values, &params)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "invalid value for `init`: expected `delta` or `csv:<path>`, got `{other}`"
            )))
        }
    };
    let params = params.with_n_max(p0.n_max())?;
    let traj = rk4_integrate(&p0, &params, t_end, dt, &samples)?;
    let rows: Vec<_> = traj
        .times
        .iter()
        .zip(&traj.states)
        .flat_map(|(&t, p)| state_rows(t, p, params.b()))
        .collect();
    emit_csv(&rows, out)?;
    Ok(())
}

pub fn equilibrium(model: &ModelArgs, out: Option<&Path>) -> Result<(), CliError> {
    let file = FileConfig::load(model.config.as_deref())?;
    let params = params_with_fallback(&flags(model, None), &file, |mu| mu + 2)?;
    let (params, eq, p) = equilibrium_widening(params)?;
    if let Some(path) = out {
        emit_csv(&mass_rows(&p, params.b()), path)?;
    }
    println!("r_bar={:?},p_a={:?},gini={:?}", eq.r_bar, eq.p_a, gini(&p)?);
    Ok(())
}

pub fn diagnose(model: &ModelArgs, input: &Path, out: &Path) -> Result<(), CliError> {
    let file = FileConfig::load(model.config.as_deref())?;
    let top = max_index(open(input)?)? as i64;
    let params = params_with_fallback(&flags(model, None), &file, |mu| top.max(mu + 2))?;
    let params = if top as usize > params.n_max() {
        params.with_n_max(top as usize)?
    } else {
        params
    };
    let (params, _, star) = equilibrium_widening(params)?;

    let groups = read_states(open(input)?, params.n_max())?;
    if groups.is_empty() {
        return Err(CliError::Validation(format!(
            "`{}` holds no states",
            input.display()
        )));
    }
    let states = groups
        .into_iter()
        .map(|(t, v)| make_prob_mass(v, &params).map(|p| (t, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = lyapunov_weights(&params, &states[0].1)?;
    let rows = states
        .iter()
        .map(|(t, p)| metrics(*t, p, &params, weights, &star))
        .collect::<Result<Vec<_>, _>>()?;
    emit_csv(&rows, out)?;
    Ok(())
}

fn write_summary(dir: &Path, summary: &impl Serialize) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

pub fn experiment(
    study: Study,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let file = FileConfig::load(config)?;
    std::fs::create_dir_all(out)?;
    let no_flags = ModelFlags::default();
    match study {
        Study::Convergence => {
            let params = params_with_fallback(&no_flags, &file, |mu| 20 * mu + 2)?;
            let dt = positive("dt", file.dt.unwrap_or(0.01))?;
            let t_end = nonnegative("t_end", file.t_end.unwrap_or(5.0))?;
            let samples = file.samples.clone().unwrap_or_else(|| {
                let steps = (t_end / 0.1).round() as usize;
                (0..=steps).map(|k| k as f64 * 0.1).collect()
            });
            let window = match (file.fit_from, file.fit_to) {
                (Some(from), Some(to)) => FitWindow::TimeRange { from, to },
                (None, None) => FitWindow::DistanceBand {
                    lo: file.fit_lo.unwrap_or(1e-8),
                    hi: file.fit_hi.unwrap_or(1e-1),
                },
                _ => {
                    return Err(CliError::Validation(
                        "`fit_from`/`fit_to`: give both or neither".into(),
                    ))
                }
            };
            let report = run_convergence_study(&params, dt, t_end, &samples, window)?;
            emit_csv(&report.rows, &out.join("convergence.csv"))?;
            write_summary(
                out,
                &json!({ "study": "convergence", "params": params, "dt": dt, "t_end": t_end, "report": report }),
            )
        }
        Study::Poc => {
            let params = params_with_fallback(&no_flags, &file, |mu| 20 * mu + 2)?;
            let config = PocConfig {
                params,
                n_list: file
                    .n_list
                    .clone()
                    .unwrap_or_else(|| vec![100, 400, 1600, 6400]),
                t: file.t.unwrap_or(1.0),
                replicas: file.replicas.unwrap_or(200),
                seed: seed.or(file.seed).unwrap_or(0),
                dt: positive("dt", file.dt.unwrap_or(0.01))?,
            };
            let result = run_poc_study(&config)?;
            emit_csv(&result.rows, &out.join("poc.csv"))?;
            let slope = result.fit.map(|f| f.slope);
            let in_band = slope.is_some_and(|s| (POC_BAND.0..=POC_BAND.1).contains(&s));
            write_summary(
                out,
                &json!({
                    "study": "poc",
                    "config": config,
                    "result": result,
                    "slope_band": [POC_BAND.0, POC_BAND.1],
                    "slope_in_band": in_band,
                    "pass": in_band && result.non_increasing,
                }),
            )
        }
        Study::GiniSweep => {
            let config = GiniSweepConfig {
                mu: match file.mu {
                    Some(mu) if mu > 0 => mu as u64,
                    Some(mu) => {
                        return Err(CliError::Validation(format!(
                            "invalid value for `mu`: must be positive, got {mu}"
                        )))
                    }
                    None => SWEEP_MU,
                },
                a_list: file.a_list.clone().unwrap_or_else(|| (0..5).collect()),
                b_list: file
                    .b_list
                    .clone()
                    .unwrap_or_else(|| [6, 8, 10, 15].map(Cap::Finite).to_vec()),
                dt: positive("dt", file.dt.unwrap_or(0.1))?,
                t_end: nonnegative("t_end", file.t_end.unwrap_or(100.0))?,
                sample_times: file.samples.clone().unwrap_or_default(),
                n_max_infinite: file.n_max_infinite.unwrap_or(400),
            };
            let report = run_gini_sweep(&config)?;
            emit_csv(&report.records, &out.join("gini_sweep.csv"))?;
            write_summary(
                out,
                &json!({ "study": "gini-sweep", "config": config, "report": report, "pass": report.proven_ok }),
            )
        }
        Study::GeneratorOracle => {
            let report = run_generator_oracle(file.max_total_wealth.unwrap_or(8))?;
            emit_csv(&report.cases, &out.join("generator_oracle.csv"))?;
            write_summary(
                out,
                &json!({ "study": "generator-oracle", "report": report }),
            )
        }
    }
}
