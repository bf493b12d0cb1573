//! Subcommand implementations.

use std::path::{Path, PathBuf};

use btmf_core::io::{
    mask_to_observation_set, matrix_to_string, observation_set_to_mask, read_matrix, write_atomic,
};
use btmf_core::{
    apply_mask, generate_mask, generate_planted, masked_positions, plan_windows, rolling_forecast,
    run_imputation_chain, run_incremental, FactorState, MissingScenario, MissingSpec,
    ObservationSet, PredictionResult, RngBundle, SynthConfig,
};
use chrono::DateTime;

use crate::args::{EvalArgs, ForecastArgs, MaskArgs, PipelineArgs, SynthArgs};
use crate::config::{load_config, parse_lags, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{write_bands, write_prediction_matrices, write_series, Report};

fn ensure_exists(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::data(format!("no such file: {}", path.display())))
    }
}

fn ensure_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let start = DateTime::parse_from_rfc3339(&args.start)
        .map_err(|e| CliError::usage(format!("--start must be RFC 3339: {e}")))?;
    let cfg = SynthConfig {
        n_strain: args.channels_strain,
        n_temp: args.channels_temp,
        columns: args.columns,
        rank: args.rank,
        lags: parse_lags(&args.lags)?,
        spectral_radius: args.spectral_radius,
        innovation_std: args.innovation_std,
        noise_frac: args.noise_frac,
        seed: args.seed,
        sample_interval_secs: args.interval_secs,
        start_timestamp: start,
    };
    let data = generate_planted(&cfg)?;
    write_atomic(&args.out, &matrix_to_string(&data.observations))?;
    println!(
        "wrote {} channels={} columns={} rank={} seed={}",
        args.out.display(),
        data.observations.n_channels(),
        data.observations.n_columns(),
        cfg.rank,
        cfg.seed
    );
    Ok(())
}

pub fn mask(args: &MaskArgs) -> CliResult<()> {
    ensure_exists(&args.input)?;
    let obs = read_matrix(&args.input)?;
    let scenario = match args.scenario.as_str() {
        "rm" => MissingScenario::Random,
        "sm" => MissingScenario::Structured,
        "mm" => MissingScenario::Mixed,
        other => {
            return Err(CliError::usage(format!(
                "--scenario must be rm, sm, or mm, got {other:?}"
            )))
        }
    };
    let spec = MissingSpec {
        scenario,
        eta_random: args.eta_random,
        eta_structured: args.eta_structured,
        block_length: args.block_length,
        target_group: args.target_group.clone(),
        same_blocks_all_rows: args.same_blocks,
        seed: args.seed,
    };
    let mask = generate_mask(&spec, obs.channel_groups(), obs.n_columns())?;
    let masked = apply_mask(&obs, &mask)?;
    write_atomic(&args.out_masked, &matrix_to_string(&masked))?;
    let mask_obs = mask_to_observation_set(&mask, &obs)?;
    write_atomic(&args.out_mask, &matrix_to_string(&mask_obs))?;
    let dropped = mask.iter().filter(|&&v| v == 0).count();
    println!(
        "wrote {} and {} dropped_cells={} fraction={:.4}",
        args.out_masked.display(),
        args.out_mask.display(),
        dropped,
        dropped as f64 / (obs.n_channels() * obs.n_columns()) as f64
    );
    Ok(())
}

/// Shared setup for impute/forecast/run: config, input, prior, rng bundle.
struct Pipeline {
    cfg: RunConfig,
    obs: ObservationSet,
    out_dir: PathBuf,
    truth: Option<ObservationSet>,
}

fn prepare(args: &PipelineArgs) -> CliResult<Pipeline> {
    let cfg = load_config(args)?;
    ensure_exists(&args.input)?;
    if let Some(t) = &args.truth {
        ensure_exists(t)?;
    }
    ensure_out_dir(&args.out_dir)?;
    let obs = read_matrix(&args.input)?;
    let truth = match &args.truth {
        Some(path) => {
            let t = read_matrix(path)?;
            if t.n_channels() != obs.n_channels() || t.n_columns() != obs.n_columns() {
                return Err(CliError::data(format!(
                    "truth is {}x{} but input is {}x{}",
                    t.n_channels(),
                    t.n_columns(),
                    obs.n_channels(),
                    obs.n_columns()
                )));
            }
            Some(t)
        }
        None => None,
    };
    Ok(Pipeline {
        cfg,
        obs,
        out_dir: args.out_dir.clone(),
        truth,
    })
}

/// Report sections shared by the imputation-producing commands.
fn imputation_report(
    report: &mut Report,
    obs: &ObservationSet,
    truth: Option<&ObservationSet>,
    pred: &PredictionResult,
) -> CliResult<()> {
    let observed: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        for c in 0..obs.n_columns() {
            for i in 0..obs.n_channels() {
                if obs.is_observed(i, c) {
                    v.push((i, c));
                }
            }
        }
        v
    };
    report.kv(
        "masked_cells",
        obs.n_channels() * obs.n_columns() - observed.len(),
    );
    report.kv("n_samples", pred.n_samples);
    report.accuracy_section(
        "imputation.observed",
        obs.values(),
        &pred.mean,
        &observed,
        obs.channel_ids(),
    )?;
    if let Some(truth) = truth {
        let missing = masked_positions(obs.mask());
        if !missing.is_empty() {
            report.accuracy_section(
                "imputation.masked",
                truth.values(),
                &pred.mean,
                &missing,
                obs.channel_ids(),
            )?;
        }
    }
    Ok(())
}

/// Forecast accuracy against truth (or the input's own observed values)
/// over the in-data part of the forecast range.
fn forecast_report(
    report: &mut Report,
    reference: &ObservationSet,
    pred: &PredictionResult,
    offset: usize,
) -> CliResult<()> {
    let t_total = reference.n_columns();
    if offset >= t_total {
        return Ok(());
    }
    let width = pred.mean.ncols().min(t_total - offset);
    let positions: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        for c in 0..width {
            for i in 0..reference.n_channels() {
                if reference.is_observed(i, offset + c) {
                    v.push((i, c));
                }
            }
        }
        v
    };
    if positions.is_empty() {
        return Ok(());
    }
    // gather reference values at absolute coordinates, estimate at local
    let truth_local = nalgebra::DMatrix::from_fn(reference.n_channels(), width, |i, c| {
        reference.value(i, offset + c)
    });
    report.kv("forecast_offset", offset);
    report.accuracy_section(
        "forecast",
        &truth_local,
        &pred.mean,
        &positions,
        reference.channel_ids(),
    )
}

pub fn impute(args: &PipelineArgs) -> CliResult<()> {
    let p = prepare(args)?;
    let cfg = &p.cfg;
    let prior = cfg.build_prior();
    let mut rngs = RngBundle::new(cfg.chain.seed, p.obs.n_channels());
    let init = FactorState::random_init(
        cfg.rank,
        p.obs.n_channels(),
        p.obs.n_columns(),
        &mut rngs.master,
    );
    let (_, _, pred) =
        run_imputation_chain(&p.obs, init, &cfg.lags, &prior, &cfg.chain, &mut rngs)?;

    write_prediction_matrices(
        &pred,
        &p.obs,
        0,
        &p.out_dir.join("impute_mean.csv"),
        &p.out_dir.join("impute_std.csv"),
    )?;
    write_series(&pred, &p.obs, 0, &p.out_dir.join("impute_series.csv"))?;
    if args.bands {
        write_bands(&pred, &p.obs, 0, &p.out_dir.join("impute_bands.csv"))?;
    }
    let mut report = Report::new("impute");
    imputation_report(&mut report, &p.obs, p.truth.as_ref(), &pred)?;
    report.write(&p.out_dir.join("metrics.txt"))?;
    println!("wrote imputation outputs to {}", p.out_dir.display());
    Ok(())
}

pub fn forecast(args: &ForecastArgs) -> CliResult<()> {
    let p = prepare(&args.pipeline)?;
    let cfg = &p.cfg;
    let t_total = p.obs.n_columns();
    let train_cols = args.train_columns.unwrap_or(t_total);
    if train_cols < 1 || train_cols > t_total {
        return Err(CliError::usage(format!(
            "--train-columns must lie in [1, {t_total}], got {train_cols}"
        )));
    }
    let horizon = if cfg.horizon > 0 {
        cfg.horizon
    } else {
        t_total - train_cols
    };
    if horizon == 0 {
        return Err(CliError::usage(
            "nothing to forecast: set forecast.horizon or --train-columns",
        ));
    }
    let prior = cfg.build_prior();
    let train = p.obs.window(0, train_cols)?;
    let future = if train_cols < t_total {
        Some(
            p.obs
                .window(train_cols, t_total.min(train_cols + horizon))?,
        )
    } else {
        None
    };
    let mut rngs = RngBundle::new(cfg.chain.seed, p.obs.n_channels());
    let init = FactorState::random_init(
        cfg.rank,
        train.n_channels(),
        train.n_columns(),
        &mut rngs.master,
    );
    let (state, ar, _) =
        run_imputation_chain(&train, init, &cfg.lags, &prior, &cfg.chain, &mut rngs)?;
    let pred = rolling_forecast(
        &train,
        &state,
        ar,
        future.as_ref(),
        horizon,
        &prior,
        &cfg.forecast_options(),
        &cfg.chain,
        &mut rngs,
    )?;

    write_prediction_matrices(
        &pred,
        &p.obs,
        train_cols,
        &p.out_dir.join("forecast_mean.csv"),
        &p.out_dir.join("forecast_std.csv"),
    )?;
    write_series(
        &pred,
        &p.obs,
        train_cols,
        &p.out_dir.join("forecast_series.csv"),
    )?;
    if args.pipeline.bands {
        write_bands(
            &pred,
            &p.obs,
            train_cols,
            &p.out_dir.join("forecast_bands.csv"),
        )?;
    }
    let mut report = Report::new("forecast");
    report.kv("train_columns", train_cols);
    report.kv("horizon", horizon);
    let reference = p.truth.as_ref().unwrap_or(&p.obs);
    forecast_report(&mut report, reference, &pred, train_cols)?;
    report.write(&p.out_dir.join("metrics.txt"))?;
    println!("wrote forecast outputs to {}", p.out_dir.display());
    Ok(())
}

pub fn run(args: &PipelineArgs) -> CliResult<()> {
    let p = prepare(args)?;
    let cfg = &p.cfg;
    let prior = cfg.build_prior();
    let plan = plan_windows(p.obs.n_columns(), cfg.increment, cfg.critical_len)?;
    let mut rngs = RngBundle::new(cfg.chain.seed, p.obs.n_channels());
    let result = run_incremental(
        &p.obs,
        &plan,
        cfg.rank,
        &cfg.lags,
        &prior,
        &cfg.chain,
        cfg.horizon,
        &cfg.forecast_options(),
        &mut rngs,
    )?;

    write_prediction_matrices(
        &result.imputation,
        &p.obs,
        0,
        &p.out_dir.join("run_impute_mean.csv"),
        &p.out_dir.join("run_impute_std.csv"),
    )?;
    write_series(
        &result.imputation,
        &p.obs,
        0,
        &p.out_dir.join("run_impute_series.csv"),
    )?;
    if args.bands {
        write_bands(
            &result.imputation,
            &p.obs,
            0,
            &p.out_dir.join("run_impute_bands.csv"),
        )?;
    }
    let mut report = Report::new("run");
    report.kv("windows", plan.windows.len());
    report.kv("increment", cfg.increment);
    report.kv("critical_length", cfg.critical_len);
    imputation_report(&mut report, &p.obs, p.truth.as_ref(), &result.imputation)?;
    if let Some(fc) = &result.forecast {
        write_prediction_matrices(
            fc,
            &p.obs,
            result.forecast_offset,
            &p.out_dir.join("run_forecast_mean.csv"),
            &p.out_dir.join("run_forecast_std.csv"),
        )?;
        write_series(
            fc,
            &p.obs,
            result.forecast_offset,
            &p.out_dir.join("run_forecast_series.csv"),
        )?;
        if args.bands {
            write_bands(
                fc,
                &p.obs,
                result.forecast_offset,
                &p.out_dir.join("run_forecast_bands.csv"),
            )?;
        }
        let reference = p.truth.as_ref().unwrap_or(&p.obs);
        forecast_report(&mut report, reference, fc, result.forecast_offset)?;
    }
    report.write(&p.out_dir.join("metrics.txt"))?;
    println!(
        "wrote incremental outputs to {} windows={}",
        p.out_dir.display(),
        plan.windows.len()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    ensure_exists(&args.truth)?;
    ensure_exists(&args.estimate)?;
    ensure_exists(&args.mask)?;
    let truth = read_matrix(&args.truth)?;
    let estimate = read_matrix(&args.estimate)?;
    let mask_obs = read_matrix(&args.mask)?;
    let mask = observation_set_to_mask(&mask_obs)?;
    if mask.nrows() != truth.n_channels() || mask.ncols() != truth.n_columns() {
        return Err(CliError::data(format!(
            "mask is {}x{} but truth is {}x{}",
            mask.nrows(),
            mask.ncols(),
            truth.n_channels(),
            truth.n_columns()
        )));
    }
    if estimate.n_channels() != truth.n_channels() {
        return Err(CliError::data(format!(
            "estimate has {} channels, truth has {}",
            estimate.n_channels(),
            truth.n_channels()
        )));
    }
    let width = estimate.n_columns();
    if args.offset + width > truth.n_columns() {
        return Err(CliError::data(format!(
            "estimate spans columns [{}, {}) beyond truth width {}",
            args.offset,
            args.offset + width,
            truth.n_columns()
        )));
    }
    // positions in estimate-local coordinates where the mask drops a cell
    let positions: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        for c in 0..width {
            for i in 0..truth.n_channels() {
                if mask[(i, args.offset + c)] == 0 {
                    v.push((i, c));
                }
            }
        }
        v
    };
    let truth_local = nalgebra::DMatrix::from_fn(truth.n_channels(), width, |i, c| {
        truth.value(i, args.offset + c)
    });
    let mut report = Report::new("eval");
    report.kv("truth", args.truth.display());
    report.kv("estimate", args.estimate.display());
    report.kv("masked_cells", positions.len());
    report.accuracy_section(
        "eval",
        &truth_local,
        estimate.values(),
        &positions,
        truth.channel_ids(),
    )?;
    print!("{}", report.render());
    if let Some(out) = &args.out {
        report.write(out)?;
    }
    Ok(())
}
