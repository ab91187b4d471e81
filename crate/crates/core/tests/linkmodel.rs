use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ferrylink::linkmodel::*;

fn real(v: f64) -> Complex {
    Complex::new(v, 0.0)
}

#[test]
fn scattered_component_is_standard_circular_gaussian() {
    let cfg = LinkConfig {
        n_rx: 16,
        n_tx: 4,
        rician: RicianParams::new(0.0, 0.0),
        ..LinkConfig::standard()
    };
    let los = deterministic_component(&cfg) * real(cfg.rician.nu());
    let zeta = cfg.rician.zeta();
    let (mut sum, mut pow, mut pseudo, mut fourth, mut n) = (Complex::new(0.0, 0.0), 0.0, Complex::new(0.0, 0.0), 0.0, 0.0);
    for seed in 0..1600 {
        let h = build_channel_sample(&cfg, seed).unwrap();
        for g in (h - &los).iter().map(|z| z / zeta) {
            sum += g;
            pow += g.norm_sqr();
            pseudo += g * g;
            fourth += g.norm_sqr().powi(2);
            n += 1.0;
        }
    }
    assert!(n >= 1e5);
    assert!((sum / n).norm() < 0.01);
    assert!((pow / n - 1.0).abs() < 0.02, "{}", pow / n);
    assert!((pseudo / n).norm() < 0.01);
    assert!((fourth / n - 2.0).abs() < 0.06, "{}", fourth / n);
}

#[test]
fn error_covariance_matches_sampled_mmse_estimator() {
    let cfg = LinkConfig {
        n_rx: 4,
        n_tx: 1,
        rician: RicianParams::new(3.0, 0.6),
        ..LinkConfig::standard()
    };
    let d = 2000.0;
    let rx = received_power(&cfg.path_loss, cfg.tx_power_w, d).unwrap();
    let zeta = cfg.rician.zeta();
    let cfg = LinkConfig {
        noise_power_w: rx * zeta * zeta,
        ..cfg
    };
    let sigma2 = cfg.noise_power_w / rx;

    let n = cfg.n_rx;
    let r = DMatrix::from_fn(n, n, |i, j: usize| 0.6f64.powi(i.abs_diff(j) as i32));
    let eig = r.clone().symmetric_eigen();
    let r_sqrt = (&eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose())
    .map(real);
    let r_c = r.map(real);
    let gain = (&r_c * real(zeta * zeta))
        * (DMatrix::identity(n, n) * real(sigma2) + &r_c * real(zeta * zeta))
            .try_inverse()
            .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut draw = |rows: usize| {
        CMatrix::from_fn(rows, 1, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    };
    let trials = 40_000;
    let mut cov = CMatrix::zeros(n, n);
    for _ in 0..trials {
        let h = &r_sqrt * draw(n) * real(zeta);
        let y = &h + draw(n) * real(sigma2.sqrt());
        let err = &h - &gain * y;
        cov += &err * err.adjoint();
    }
    cov /= real(trials as f64);

    let model = &column_blocks(&cfg, d).unwrap().columns[0].psi_tilde;
    let rel = (&cov - model).norm() / model.norm();
    assert!(rel < 0.05, "relative error {rel}");
}

#[test]
fn default_curve_crosses_the_second_mode_near_six_km() {
    let cfg = LinkConfig::standard();
    let grid: Vec<f64> = (5..=90).map(|i| i as f64 * 100.0).collect();
    let curve = throughput_curve(&cfg, &grid).unwrap();
    assert!(curve.is_non_increasing());
    let t = derive_thresholds(&curve, &[0.459, 0.731]).unwrap();
    assert!((t[1] - 6000.0).abs() <= 0.15 * 6000.0, "{t:?}");
    assert!((t[0] - 8000.0).abs() <= 0.15 * 8000.0, "{t:?}");
}

#[test]
fn calibration_inverts_the_curve() {
    let cfg = LinkConfig {
        n_rx: 16,
        n_tx: 4,
        ..LinkConfig::standard()
    };
    let noise = calibrate_noise_power(&cfg, 3000.0, 1.0).unwrap();
    let tuned = LinkConfig {
        noise_power_w: noise,
        ..cfg
    };
    let c = throughput_curve(&tuned, &[3000.0]).unwrap().per_ta_capacity[0];
    assert!((c - 1.0).abs() < 1e-9, "{c}");
}

#[test]
fn staircase_thresholds_round_trip() {
    let edges = [8000.0, 6000.0, 4500.0, 3500.0, 2500.0, 1700.0, 1000.0];
    let ses = [0.459, 0.731, 1.0, 1.322, 1.809, 2.194, 2.665];
    let grid: Vec<f64> = (500..9000).map(f64::from).collect();
    let caps = grid
        .iter()
        .map(|&d| {
            edges
                .iter()
                .zip(ses)
                .filter(|(&e, _)| d < e)
                .map(|(_, s)| s)
                .fold(0.0, f64::max)
        })
        .collect();
    let curve = ThroughputCurve::new(grid, caps).unwrap();
    let back = derive_thresholds(&curve, &ses).unwrap();
    for (b, e) in back.iter().zip(edges) {
        assert_eq!(b + 1.0, e);
    }
}

#[test]
fn unreachable_mode_is_reported() {
    let curve = ThroughputCurve::new(vec![1.0, 2.0], vec![0.5, 0.4]).unwrap();
    assert!(matches!(
        derive_thresholds(&curve, &[0.459, 0.731]),
        Err(LinkError::ModeUnreachable { .. })
    ));
    let rising = ThroughputCurve::new(vec![1.0, 2.0], vec![0.4, 0.5]).unwrap();
    assert!(derive_thresholds(&rising, &[0.1]).is_err());
}
