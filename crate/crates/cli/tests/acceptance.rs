//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them).
//!
//! The tests serialize on a global gate so the wall-time criterion is not
//! disturbed by sibling tests.

mod acceptance {
    pub mod oracle;
}

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use acceptance::oracle::{self, Instance};
use btmf_core::forecast::{current_factor_posterior, innovation_scale_posterior};
use btmf_core::gibbs::{
    precision_posterior, spatial_factor_posterior, spatial_hyper_posterior,
    temporal_factor_posterior, temporal_hyper_posterior,
};
use btmf_core::linalg::spd_inverse;
use btmf_core::samplers::{
    sample_gamma, sample_inverse_wishart, sample_matrix_normal, sample_wishart,
};
use btmf_core::{
    accuracy, accuracy_at, apply_mask, ar_mean, generate_mask, generate_planted, masked_positions,
    plan_windows, rolling_forecast, run_imputation_chain, run_incremental, ARModel, ChainConfig,
    FactorState, ForecastOptions, MissingScenario, MissingSpec, PriorConfig, RandomSource,
    RngBundle, SpatialHyperState, SynthConfig, WindowStage,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

// ---------------------------------------------------------------------------
// shared fixtures and helpers

/// The reference planted dataset: 20 channels (10 strain + 10 temperature),
/// 2000 columns, rank 4, AR lags {1, 2}.
fn planted(noise_frac: f64) -> btmf_core::synth::PlantedData {
    generate_planted(&SynthConfig {
        noise_frac,
        seed: 42,
        ..SynthConfig::default()
    })
    .expect("valid synth config")
}

fn acceptance_chain(seed: u64) -> ChainConfig {
    ChainConfig {
        n_iters_impute: 60,
        burn_in_impute: 30,
        n_iters_forecast: 20,
        burn_in_forecast: 5,
        seed,
    }
}

fn impute(
    obs: &btmf_core::ObservationSet,
    rank: usize,
    lags: &[usize],
    chain: &ChainConfig,
) -> btmf_core::PredictionResult {
    let prior = PriorConfig::default_for(rank, lags.len());
    let mut rngs = RngBundle::new(chain.seed, obs.n_channels());
    let init = FactorState::random_init(rank, obs.n_channels(), obs.n_columns(), &mut rngs.master);
    let (_, _, pred) =
        run_imputation_chain(obs, init, lags, &prior, chain, &mut rngs).expect("chain runs");
    pred
}

fn rel_scale_mat(a: &DMatrix<f64>) -> f64 {
    a.amax().max(1.0)
}

fn assert_mat_close(label: &str, got: &DMatrix<f64>, want: &oracle::Mat, tol: f64) {
    let scale = {
        let w = want
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        rel_scale_mat(got).max(w)
    };
    for i in 0..got.nrows() {
        for j in 0..got.ncols() {
            let diff = (got[(i, j)] - want[i][j]).abs();
            assert!(
                diff <= tol * scale,
                "{label}: entry ({i},{j}) differs: {} vs {} (rel {})",
                got[(i, j)],
                want[i][j],
                diff / scale
            );
        }
    }
}

fn assert_vec_close(label: &str, got: &DVector<f64>, want: &[f64], tol: f64) {
    let scale = got
        .amax()
        .max(want.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
        .max(1.0);
    for i in 0..got.len() {
        let diff = (got[i] - want[i]).abs();
        assert!(
            diff <= tol * scale,
            "{label}: entry {i} differs: {} vs {} (rel {})",
            got[i],
            want[i],
            diff / scale
        );
    }
}

fn assert_scalar_close(label: &str, got: f64, want: f64, tol: f64) {
    let scale = got.abs().max(want.abs()).max(1.0);
    assert!(
        (got - want).abs() <= tol * scale,
        "{label}: {got} vs {want}"
    );
}

fn to_rows(m: &DMatrix<f64>) -> oracle::Mat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn spd(k: usize, scale: f64, rng: &mut RandomSource) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    });
    &a * a.transpose() + DMatrix::identity(k, k) * 0.5 * scale
}

fn gauss_mat(r: usize, c: usize, scale: f64, rng: &mut RandomSource) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

// ---------------------------------------------------------------------------
// criterion 1

#[test]
fn c01_posterior_parameter_oracles() {
    let _g = gate();
    let started = Instant::now();
    const TOL: f64 = 1e-10;
    let lag_pool: [&[usize]; 5] = [&[1], &[1, 2], &[1, 3], &[2], &[1, 2, 4]];

    for inst_idx in 0..100u64 {
        let mut rng = RandomSource::with_stream(5000 + inst_idx, 0);
        let k = 1 + (rng.random_range(0..3usize));
        let m = 1 + (rng.random_range(0..5usize));
        let lags: Vec<usize> = lag_pool[rng.random_range(0..lag_pool.len())].to_vec();
        let max_lag = *lags.last().unwrap();
        let t_len = rng.random_range((max_lag + 2)..=12.max(max_lag + 3));
        let d = lags.len();

        let u = gauss_mat(k, m, 1.0, &mut rng);
        let x = gauss_mat(k, t_len, 1.0, &mut rng);
        let y = gauss_mat(m, t_len, 2.0, &mut rng);
        let mut mask = DMatrix::from_fn(m, t_len, |_, _| u8::from(rng.random_range(0..4u8) != 0));
        if rng.random_range(0..5u8) == 0 {
            // blank a whole channel to exercise the prior fallback
            let row = rng.random_range(0..m);
            for t in 0..t_len {
                mask[(row, t)] = 0;
            }
        }
        if rng.random_range(0..5u8) == 0 {
            let col = rng.random_range(0..t_len);
            for i in 0..m {
                mask[(i, col)] = 0;
            }
        }
        let hyper_mean = gauss_mat(k, 1, 1.0, &mut rng).column(0).clone_owned();
        let hyper_prec = spd(k, 1.0, &mut rng);
        let a_stacked = gauss_mat(k * d, k, 0.4, &mut rng);
        let sigma = spd(k, 0.7, &mut rng);
        let sigma_tilde = spd(k, 0.8, &mut rng);
        let tau = 0.1 + rng.random_range(0..40u32) as f64 * 0.1;

        let mut prior = PriorConfig::default_for(k, d);
        prior.mu0 = gauss_mat(k, 1, 1.0, &mut rng).column(0).clone_owned();
        prior.beta0 = 0.5 + rng.random_range(0..25u32) as f64 * 0.1;
        prior.w0 = spd(k, 1.0, &mut rng);
        prior.v0 = k as f64 + rng.random_range(0..25u32) as f64 * 0.1;
        prior.lambda0 = gauss_mat(k * d, k, 0.3, &mut rng);
        prior.row_cov0 = spd(k * d, 0.8, &mut rng);
        prior.psi0 = spd(k, 0.9, &mut rng);
        prior.a0 = 1e-6 + rng.random_range(0..20u32) as f64 * 0.1;
        prior.b0 = 1e-6 + rng.random_range(0..20u32) as f64 * 0.1;

        let inst = Instance {
            k,
            m,
            t: t_len,
            lags: lags.clone(),
            y: to_rows(&y),
            mask: (0..m)
                .map(|i| (0..t_len).map(|t| mask[(i, t)]).collect())
                .collect(),
            u: to_rows(&u),
            x: to_rows(&x),
            hyper_mean: hyper_mean.iter().copied().collect(),
            hyper_prec: to_rows(&hyper_prec),
            a_stacked: to_rows(&a_stacked),
            sigma: to_rows(&sigma),
            sigma_tilde: to_rows(&sigma_tilde),
            tau,
            mu0: prior.mu0.iter().copied().collect(),
            beta0: prior.beta0,
            w0: to_rows(&prior.w0),
            v0: prior.v0,
            lambda0: to_rows(&prior.lambda0),
            row_cov0: to_rows(&prior.row_cov0),
            psi0: to_rows(&prior.psi0),
            a0: prior.a0,
            b0: prior.b0,
        };

        // spatial hyper-posterior
        let got = spatial_hyper_posterior(&u, &prior).unwrap();
        let (mean_o, beta_o, dof_o, inv_scale_o) = inst.spatial_hyper();
        assert_vec_close("spatial hyper mean", &got.mean, &mean_o, TOL);
        assert_scalar_close("spatial hyper beta", got.beta, beta_o, TOL);
        assert_scalar_close("spatial hyper dof", got.dof, dof_o, TOL);
        assert_mat_close("spatial hyper inv scale", &got.inv_scale, &inv_scale_o, TOL);

        // spatial factor conditionals over every channel
        let hyper = SpatialHyperState {
            mean: hyper_mean.clone(),
            precision: hyper_prec.clone(),
        };
        for i in 0..m {
            let (prec, rhs) = spatial_factor_posterior(i, &y, &mask, &x, &hyper, tau);
            let (prec_o, rhs_o) = inst.spatial_factor(i);
            assert_mat_close("spatial factor precision", &prec, &prec_o, TOL);
            assert_vec_close("spatial factor shift", &rhs, &rhs_o, TOL);
            let mean = spd_inverse(&prec, "test").unwrap() * &rhs;
            let mean_o = oracle::matvec(&oracle::inverse(&prec_o), &rhs_o);
            assert_vec_close("spatial factor mean", &mean, &mean_o, 1e-9);
        }

        // AR hyper-posterior
        let got = temporal_hyper_posterior(&x, &lags, &prior).unwrap();
        let (row_cov_o, mean_o, dof_o, scale_o) = inst.temporal_hyper();
        assert_mat_close("AR row covariance", &got.row_cov, &row_cov_o, TOL);
        assert_mat_close("AR mean", &got.mean, &mean_o, TOL);
        assert_scalar_close("AR dof", got.dof, dof_o, TOL);
        assert_mat_close("AR scale", &got.scale, &scale_o, TOL);

        // temporal factor conditionals over every column
        let ar = ARModel::new(lags.clone(), a_stacked.clone(), sigma.clone()).unwrap();
        let sigma_inv = spd_inverse(&sigma, "test").unwrap();
        for t in 0..t_len {
            let (prec, rhs) =
                temporal_factor_posterior(t, &y, &mask, &u, &x, &ar, &sigma_inv, tau).unwrap();
            let (prec_o, rhs_o) = inst.temporal_factor(t);
            assert_mat_close("temporal factor precision", &prec, &prec_o, TOL);
            assert_vec_close("temporal factor shift", &rhs, &rhs_o, TOL);
        }

        // noise precision posterior
        let (shape, rate) = precision_posterior(&y, &mask, &u, &x, &prior);
        let (shape_o, rate_o) = inst.precision();
        assert_scalar_close("precision shape", shape, shape_o, TOL);
        assert_scalar_close("precision rate", rate, rate_o, TOL);

        // forecast-time updates at an AR-modeled column
        let t_fc = max_lag + rng.random_range(0..(t_len - max_lag));
        let prior_mean = ar_mean(&ar, &x, t_fc).unwrap();
        let x_col = x.column(t_fc).clone_owned();
        let scale = innovation_scale_posterior(&x_col, &prior_mean, &prior.psi0);
        assert_mat_close(
            "innovation scale",
            &scale,
            &inst.innovation_scale(t_fc),
            TOL,
        );

        let observed: Vec<(usize, f64)> = (0..m)
            .filter(|&i| mask[(i, t_fc)] == 1)
            .map(|i| (i, y[(i, t_fc)]))
            .collect();
        let st_inv = spd_inverse(&sigma_tilde, "test").unwrap();
        let (prec, rhs) = current_factor_posterior(&observed, &u, &prior_mean, &st_inv, tau);
        let (prec_o, rhs_o) = inst.current_factor(t_fc);
        assert_mat_close("forecast factor precision", &prec, &prec_o, TOL);
        assert_vec_close("forecast factor shift", &rhs, &rhs_o, TOL);
    }

    let secs = started.elapsed().as_secs_f64();
    assert!(
        secs < 10.0,
        "oracle comparison took {secs:.1}s (budget 10s)"
    );
    println!("PASS criterion 1: 100 random instances match the dense oracle to 1e-10 ({secs:.2}s)");
}

// ---------------------------------------------------------------------------
// criterion 2

#[test]
fn c02_sampler_moments() {
    let _g = gate();
    let started = Instant::now();
    const N: usize = 100_000;

    // Wishart mean within 1% of dof * scale
    let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let dof = 6.0;
    let mut rng = RandomSource::with_stream(901, 0);
    let mut acc = DMatrix::zeros(2, 2);
    for _ in 0..N {
        acc += sample_wishart(&scale, dof, &mut rng).unwrap();
    }
    acc /= N as f64;
    let target = &scale * dof;
    let wishart_rel = (&acc - &target).amax() / target.amax();
    assert!(wishart_rel < 0.01, "wishart mean rel error {wishart_rel}");

    // inverse-Wishart mean within 3% of scale / (dof - K - 1)
    let scale = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.0]);
    let dof = 10.0;
    let mut rng = RandomSource::with_stream(902, 0);
    let mut acc = DMatrix::zeros(2, 2);
    for _ in 0..N {
        acc += sample_inverse_wishart(&scale, dof, &mut rng).unwrap();
    }
    acc /= N as f64;
    let target = &scale / (dof - 3.0);
    let iw_rel = (&acc - &target).amax() / target.amax();
    assert!(iw_rel < 0.03, "inverse-wishart mean rel error {iw_rel}");

    // matrix-normal vectorized covariance within 5% of col_cov ⊗ row_cov
    let mean = DMatrix::zeros(1, 2);
    let row = DMatrix::from_row_slice(1, 1, &[2.0]);
    let col = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.7]);
    let mut rng = RandomSource::with_stream(903, 0);
    let mut acc = DMatrix::zeros(2, 2);
    for _ in 0..N {
        let d = sample_matrix_normal(&mean, &row, &col, &mut rng).unwrap();
        let v = DVector::from_row_slice(&[d[(0, 0)], d[(0, 1)]]);
        acc.ger(1.0, &v, &v, 1.0);
    }
    acc /= N as f64;
    let target = col.kronecker(&row);
    let mn_rel = (&acc - &target).amax() / target.amax();
    assert!(mn_rel < 0.05, "matrix-normal covariance rel error {mn_rel}");

    // gamma mean within 2%, variance within 5%
    let (shape, rate) = (4.0, 2.0);
    let mut rng = RandomSource::with_stream(904, 0);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..N {
        let d = sample_gamma(shape, rate, &mut rng).unwrap();
        s += d;
        s2 += d * d;
    }
    let mean = s / N as f64;
    let var = s2 / N as f64 - mean * mean;
    let gamma_mean_rel = (mean - 2.0).abs() / 2.0;
    let gamma_var_rel = (var - 1.0).abs() / 1.0;
    assert!(
        gamma_mean_rel < 0.02,
        "gamma mean rel error {gamma_mean_rel}"
    );
    assert!(
        gamma_var_rel < 0.05,
        "gamma variance rel error {gamma_var_rel}"
    );

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 30.0, "sampler moments took {secs:.1}s (budget 30s)");
    println!(
        "PASS criterion 2: sampler moments (wishart {wishart_rel:.4}, iw {iw_rel:.4}, \
         mn {mn_rel:.4}, gamma {gamma_mean_rel:.4}/{gamma_var_rel:.4}) in {secs:.2}s"
    );
}

// ---------------------------------------------------------------------------
// criterion 3

#[test]
fn c03_noiseless_recovery() {
    let _g = gate();
    let started = Instant::now();
    let data = planted(0.0);
    let obs = &data.observations;
    assert_eq!(obs.n_channels(), 20);
    assert_eq!(obs.n_columns(), 2000);
    let chain = ChainConfig {
        n_iters_impute: 40,
        burn_in_impute: 20,
        ..acceptance_chain(5)
    };
    let pred = impute(obs, 4, &[1, 2], &chain);
    let rms = (obs.values().iter().map(|v| v * v).sum::<f64>() / obs.values().len() as f64).sqrt();
    let rmse = {
        let d = &pred.mean - obs.values();
        (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
    };
    let rel = rmse / rms;
    let secs = started.elapsed().as_secs_f64();
    assert!(rel <= 0.02, "noiseless reconstruction RMSE/RMS {rel}");
    assert!(
        secs < 120.0,
        "noiseless recovery took {secs:.1}s (budget 120s)"
    );
    println!("PASS criterion 3: noiseless recovery RMSE/RMS = {rel:.2e} in {secs:.1}s");
}

// ---------------------------------------------------------------------------
// criterion 4

#[test]
fn c04_random_missing_trend() {
    let _g = gate();
    let started = Instant::now();
    let data = planted(0.01);
    let obs = &data.observations;
    let chain = acceptance_chain(5);
    let mut rhos = Vec::new();
    for eta in [0.1, 0.3, 0.5, 0.7] {
        let spec = MissingSpec {
            scenario: MissingScenario::Random,
            eta_random: eta,
            eta_structured: 0.0,
            block_length: 144,
            target_group: Some("strain".into()),
            same_blocks_all_rows: false,
            seed: 7,
        };
        let mask = generate_mask(&spec, obs.channel_groups(), obs.n_columns()).unwrap();
        let masked = apply_mask(obs, &mask).unwrap();
        let pred = impute(&masked, 4, &[1, 2], &chain);
        let rho = accuracy_at(obs.values(), &pred.mean, &masked_positions(&mask)).unwrap();
        assert!(rho >= 95.0, "imputation accuracy {rho} at eta {eta}");
        rhos.push(rho);
    }
    for w in rhos.windows(2) {
        assert!(
            w[1] <= w[0],
            "accuracy must be non-increasing in eta: {rhos:?}"
        );
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(
        secs < 600.0,
        "random-missing sweep took {secs:.1}s (budget 600s)"
    );
    println!(
        "PASS criterion 4: random-missing rho = [{:.2}, {:.2}, {:.2}, {:.2}], non-increasing, in {secs:.1}s",
        rhos[0], rhos[1], rhos[2], rhos[3]
    );
}

// ---------------------------------------------------------------------------
// criterion 5

#[test]
fn c05_structured_missing_capability() {
    let _g = gate();
    let started = Instant::now();
    let data = planted(0.01);
    let obs = &data.observations;
    let chain = acceptance_chain(5);
    let mut rhos = Vec::new();
    for eta in [0.1, 0.2, 0.4] {
        let spec = MissingSpec {
            scenario: MissingScenario::Structured,
            eta_random: 0.0,
            eta_structured: eta,
            block_length: 144,
            target_group: Some("strain".into()),
            same_blocks_all_rows: false,
            seed: 11,
        };
        let mask = generate_mask(&spec, obs.channel_groups(), obs.n_columns()).unwrap();
        let masked = apply_mask(obs, &mask).unwrap();
        let pred = impute(&masked, 4, &[1, 2], &chain);
        let rho = accuracy_at(obs.values(), &pred.mean, &masked_positions(&mask)).unwrap();
        assert!(rho >= 85.0, "imputation accuracy {rho} at eta {eta}");
        rhos.push(rho);
    }
    for w in rhos.windows(2) {
        assert!(
            w[1] <= w[0],
            "accuracy must be non-increasing in eta: {rhos:?}"
        );
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(
        secs < 600.0,
        "structured-missing sweep took {secs:.1}s (budget 600s)"
    );
    println!(
        "PASS criterion 5: structured-missing rho = [{:.2}, {:.2}, {:.2}], non-increasing, in {secs:.1}s",
        rhos[0], rhos[1], rhos[2]
    );
}

// ---------------------------------------------------------------------------
// criterion 6

#[test]
fn c06_forecast_under_missing() {
    let _g = gate();
    let started = Instant::now();
    let data = planted(0.01);
    let obs = &data.observations;
    let split = obs.n_columns() - 144;
    let train = obs.window(0, split).unwrap();
    let future_clean = obs.window(split, obs.n_columns()).unwrap();
    let spec = MissingSpec {
        scenario: MissingScenario::Random,
        eta_random: 0.1,
        eta_structured: 0.0,
        block_length: 144,
        target_group: None,
        same_blocks_all_rows: false,
        seed: 7,
    };
    let fmask = generate_mask(&spec, future_clean.channel_groups(), 144).unwrap();
    let future = apply_mask(&future_clean, &fmask).unwrap();

    let chain = ChainConfig {
        n_iters_impute: 50,
        burn_in_impute: 25,
        ..acceptance_chain(5)
    };
    let prior = PriorConfig::default_for(4, 2);
    let mut rngs = RngBundle::new(chain.seed, obs.n_channels());
    let init = FactorState::random_init(4, train.n_channels(), train.n_columns(), &mut rngs.master);
    let (state, ar, _) =
        run_imputation_chain(&train, init, &[1, 2], &prior, &chain, &mut rngs).unwrap();
    let pred = rolling_forecast(
        &train,
        &state,
        ar,
        Some(&future),
        144,
        &prior,
        &ForecastOptions::default(),
        &chain,
        &mut rngs,
    )
    .unwrap();

    let truth: Vec<f64> = future_clean.values().iter().copied().collect();
    let est: Vec<f64> = pred.mean.iter().copied().collect();
    let rho = accuracy(&truth, &est).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert!(rho >= 90.0, "rolling forecast accuracy {rho}");
    assert!(secs < 300.0, "forecast test took {secs:.1}s (budget 300s)");
    println!("PASS criterion 6: 144-step rolling forecast rho = {rho:.2} with 10% missing ingest in {secs:.1}s");
}

// ---------------------------------------------------------------------------
// criterion 7

fn btmf_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_btmf"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn c07_incremental_consistency() {
    let _g = gate();
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");

    run_ok(btmf_cmd().args([
        "synth",
        "--out",
        data_path.to_str().unwrap(),
        "--columns",
        "240",
        "--channels-strain",
        "5",
        "--channels-temp",
        "3",
        "--rank",
        "3",
        "--seed",
        "12",
    ]));

    // single-window incremental run vs the standalone imputation chain
    let common = [
        "--rank",
        "3",
        "--lags",
        "1,2",
        "--seed",
        "9",
        "--set",
        "chain.n_iters_impute=12",
        "--set",
        "chain.burn_in_impute=5",
        "--set",
        "chain.n_iters_forecast=6",
        "--set",
        "chain.burn_in_forecast=2",
    ];
    let run_dir = dir.path().join("out_run");
    run_ok(
        btmf_cmd()
            .args(["run", "--input", data_path.to_str().unwrap()])
            .args(["--out-dir", run_dir.to_str().unwrap()])
            .args([
                "--set",
                "window.increment=240",
                "--set",
                "window.critical_length=240",
            ])
            .args(["--horizon", "10"])
            .args(common),
    );
    let imp_dir = dir.path().join("out_impute");
    run_ok(
        btmf_cmd()
            .args(["impute", "--input", data_path.to_str().unwrap()])
            .args(["--out-dir", imp_dir.to_str().unwrap()])
            .args(common),
    );
    assert_eq!(
        read_bytes(&run_dir.join("run_impute_mean.csv")),
        read_bytes(&imp_dir.join("impute_mean.csv")),
        "single-window run mean must be bit-identical to standalone impute"
    );
    assert_eq!(
        read_bytes(&run_dir.join("run_impute_std.csv")),
        read_bytes(&imp_dir.join("impute_std.csv")),
        "single-window run std must be bit-identical to standalone impute"
    );

    // coverage counts for T_total = 3I, T1 = 2I match the hand trace
    let obs = btmf_core::io::read_matrix(&data_path).unwrap();
    let plan = plan_windows(240, 80, 160).unwrap();
    assert_eq!(plan.windows.len(), 3);
    assert_eq!(plan.windows[2].stage, WindowStage::Fixed);
    let chain = ChainConfig {
        n_iters_impute: 6,
        burn_in_impute: 2,
        n_iters_forecast: 4,
        burn_in_forecast: 1,
        seed: 3,
    };
    let prior = PriorConfig::default_for(3, 2);
    let mut rngs = RngBundle::new(chain.seed, obs.n_channels());
    let inc = run_incremental(
        &obs,
        &plan,
        3,
        &[1, 2],
        &prior,
        &chain,
        0,
        &ForecastOptions::default(),
        &mut rngs,
    )
    .unwrap();
    for t in 0..240 {
        let expected = if t < 160 { 2 } else { 1 };
        for i in 0..obs.n_channels() {
            assert_eq!(inc.coverage[(i, t)], expected, "coverage at ({i},{t})");
        }
    }
    let secs = started.elapsed().as_secs_f64();
    println!(
        "PASS criterion 7: single-window run == impute bit-identically; coverage counts [2,2,1] per segment ({secs:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// criterion 8

#[test]
fn c08_incremental_efficiency() {
    let _g = gate();
    let started = Instant::now();
    // T_total = 10 * T1: per-window cost in the fixed stage must not grow.
    // The trailing horizon equals the increment so the final window carries
    // the same forecast load as every other one.
    let increment = 300;
    let critical = 600;
    let t_total = 10 * critical;
    let data = generate_planted(&SynthConfig {
        n_strain: 10,
        n_temp: 6,
        columns: t_total,
        rank: 4,
        seed: 33,
        ..SynthConfig::default()
    })
    .unwrap();
    let obs = &data.observations;
    let plan = plan_windows(t_total, increment, critical).unwrap();
    let chain = ChainConfig {
        n_iters_impute: 80,
        burn_in_impute: 30,
        n_iters_forecast: 10,
        burn_in_forecast: 3,
        seed: 17,
    };
    let prior = PriorConfig::default_for(4, 2);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();

    // Every replicate performs identical work (same seed); the per-window
    // wall time is taken as the median across replicates so one transient
    // host hiccup cannot masquerade as cost growth.
    const REPS: usize = 9;
    let mut walls_per_window: Vec<Vec<f64>> = Vec::new();
    for _ in 0..REPS {
        let inc = pool
            .install(|| {
                let mut rngs = RngBundle::new(chain.seed, obs.n_channels());
                run_incremental(
                    obs,
                    &plan,
                    4,
                    &[1, 2],
                    &prior,
                    &chain,
                    increment,
                    &ForecastOptions {
                        refresh_interval: increment,
                        ..ForecastOptions::default()
                    },
                    &mut rngs,
                )
            })
            .unwrap();
        let fixed: Vec<f64> = inc
            .window_stats
            .iter()
            .filter(|s| s.stage == WindowStage::Fixed)
            .map(|s| s.wall.as_secs_f64())
            .collect();
        if walls_per_window.is_empty() {
            walls_per_window = fixed.into_iter().map(|w| vec![w]).collect();
        } else {
            assert_eq!(walls_per_window.len(), fixed.len());
            for (acc, w) in walls_per_window.iter_mut().zip(fixed) {
                acc.push(w);
            }
        }
    }
    assert!(
        walls_per_window.len() >= 10,
        "need a long fixed stage, got {} windows",
        walls_per_window.len()
    );
    let medians: Vec<f64> = walls_per_window
        .iter()
        .map(|reps| {
            let mut r = reps.clone();
            r.sort_by(|a, b| a.partial_cmp(b).unwrap());
            r[r.len() / 2]
        })
        .collect();
    let min = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = medians.iter().cloned().fold(0.0f64, f64::max);
    let spread = max / min - 1.0;
    let secs = started.elapsed().as_secs_f64();
    assert!(
        spread < 0.25,
        "fixed-stage wall time varies by {:.1}% across windows (medians over {REPS} runs: min {min:.3}s, max {max:.3}s, all {medians:?})",
        spread * 100.0
    );
    println!(
        "PASS criterion 8: {} fixed windows, wall spread {:.1}% (median-of-{REPS}; min {min:.3}s, max {max:.3}s) in {secs:.1}s",
        medians.len(),
        spread * 100.0
    );
}

// ---------------------------------------------------------------------------
// criterion 9

#[test]
fn c09_determinism_across_threads() {
    let _g = gate();
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    run_ok(btmf_cmd().args([
        "synth",
        "--out",
        data_path.to_str().unwrap(),
        "--columns",
        "360",
        "--channels-strain",
        "6",
        "--channels-temp",
        "4",
        "--rank",
        "3",
        "--seed",
        "21",
    ]));
    let masked_path = dir.path().join("masked.csv");
    let mask_path = dir.path().join("mask.csv");
    run_ok(btmf_cmd().args([
        "mask",
        "--input",
        data_path.to_str().unwrap(),
        "--scenario",
        "rm",
        "--eta-random",
        "0.2",
        "--seed",
        "4",
        "--out-masked",
        masked_path.to_str().unwrap(),
        "--out-mask",
        mask_path.to_str().unwrap(),
    ]));

    let run_with = |threads: &str, out: &Path| {
        run_ok(
            btmf_cmd()
                .args(["--threads", threads])
                .args(["run", "--input", masked_path.to_str().unwrap()])
                .args(["--out-dir", out.to_str().unwrap()])
                .args([
                    "--rank",
                    "3",
                    "--lags",
                    "1,2",
                    "--seed",
                    "13",
                    "--horizon",
                    "12",
                ])
                .args([
                    "--set",
                    "window.increment=120",
                    "--set",
                    "window.critical_length=240",
                ])
                .args([
                    "--set",
                    "chain.n_iters_impute=10",
                    "--set",
                    "chain.burn_in_impute=4",
                ])
                .args([
                    "--set",
                    "chain.n_iters_forecast=6",
                    "--set",
                    "chain.burn_in_forecast=2",
                ]),
        );
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    run_with("1", &out_a);
    run_with("1", &out_b);
    run_with("8", &out_c);

    let files = [
        "run_impute_mean.csv",
        "run_impute_std.csv",
        "run_impute_series.csv",
        "run_forecast_mean.csv",
        "run_forecast_std.csv",
        "run_forecast_series.csv",
        "metrics.txt",
    ];
    for f in files {
        let a = read_bytes(&out_a.join(f));
        assert_eq!(a, read_bytes(&out_b.join(f)), "{f} differs across reruns");
        assert_eq!(
            a,
            read_bytes(&out_c.join(f)),
            "{f} differs across thread counts"
        );
    }
    let secs = started.elapsed().as_secs_f64();
    println!(
        "PASS criterion 9: {} output files byte-identical across reruns and 1 vs 8 threads ({secs:.1}s)",
        files.len()
    );
}

// ---------------------------------------------------------------------------
// criterion 10

#[test]
fn c10_rank_sensitivity_harness() {
    let _g = gate();
    let started = Instant::now();
    let data = generate_planted(&SynthConfig {
        columns: 1000,
        noise_frac: 0.01,
        seed: 42,
        ..SynthConfig::default()
    })
    .unwrap();
    let obs = &data.observations;
    let chain = ChainConfig {
        n_iters_impute: 30,
        burn_in_impute: 15,
        n_iters_forecast: 10,
        burn_in_forecast: 3,
        seed: 5,
    };

    let mut table = String::from("rank,scenario,eta,masked_cells,rho\n");
    for &rank in &[4usize, 8, 12] {
        for scenario in [MissingScenario::Random, MissingScenario::Structured] {
            let (label, spec) = match scenario {
                MissingScenario::Random => (
                    "RM",
                    MissingSpec {
                        scenario,
                        eta_random: 0.3,
                        eta_structured: 0.0,
                        block_length: 144,
                        target_group: Some("strain".into()),
                        same_blocks_all_rows: false,
                        seed: 19,
                    },
                ),
                _ => (
                    "SM",
                    MissingSpec {
                        scenario,
                        eta_random: 0.0,
                        eta_structured: 0.2,
                        block_length: 144,
                        target_group: Some("strain".into()),
                        same_blocks_all_rows: false,
                        seed: 19,
                    },
                ),
            };
            let mask = generate_mask(&spec, obs.channel_groups(), obs.n_columns()).unwrap();
            let masked = apply_mask(obs, &mask).unwrap();
            let pred = impute(&masked, rank, &[1, 2], &chain);
            let positions = masked_positions(&mask);
            let rho = accuracy_at(obs.values(), &pred.mean, &positions).unwrap();
            let eta = if label == "RM" { 0.3 } else { 0.2 };
            table.push_str(&format!(
                "{rank},{label},{eta},{},{rho:.2}\n",
                positions.len()
            ));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let table_path = dir.path().join("rank_sweep.csv");
    btmf_core::io::write_atomic(&table_path, &table).unwrap();

    // the table must be well-formed: header + 6 rows, parseable accuracy
    let text = std::fs::read_to_string(&table_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank,scenario,eta,masked_cells,rho");
    assert_eq!(
        lines.len(),
        7,
        "expected 6 sweep rows, got {}",
        lines.len() - 1
    );
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5, "malformed row {line:?}");
        let rho: f64 = fields[4].parse().expect("accuracy parses");
        assert!(
            rho.is_finite() && rho <= 100.0,
            "accuracy {rho} out of range"
        );
        let cells: usize = fields[3].parse().expect("cell count parses");
        assert!(cells > 0);
    }
    let secs = started.elapsed().as_secs_f64();
    println!(
        "PASS criterion 10: rank sweep table well-formed ({} rows) in {secs:.1}s",
        6
    );
    println!("{table}");
}
