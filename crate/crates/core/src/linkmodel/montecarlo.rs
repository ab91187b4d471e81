//! Sampled ergodic throughput of a matched-filter receiver with MMSE channel
//! estimates, used to check the closed-form approximation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::complex_gaussian;
use super::{
    build_correlation, column_blocks, correlation_sqrt, deterministic_component,
    interferer_deterministic_component, CMatrix, Complex, LinkConfig, LinkError,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub trials: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

fn real(v: f64) -> Complex {
    Complex::new(v, 0.0)
}

/// Monte-Carlo estimate of `E[log2(1 + SINR)]` for stream `k_star` (1-based).
///
/// Each trial draws fresh scattered channels for the desired group, pilot
/// noise, the interferers' pilot-phase channels and their data-phase channels.
pub fn ergodic_throughput(
    cfg: &LinkConfig,
    distance_m: f64,
    k_star: usize,
    opts: McOptions,
) -> Result<McEstimate, LinkError> {
    if k_star == 0 || k_star > cfg.n_tx {
        return Err(LinkError::InvalidStream {
            k_star,
            streams: cfg.n_tx,
        });
    }
    if opts.trials < 2 {
        return Err(LinkError::InvalidConfig("at least two trials required".into()));
    }
    let blocks = column_blocks(cfg, distance_m)?;
    let r = build_correlation(cfg.rician.correlation_rho, cfg.n_rx)?;
    let r_sqrt = correlation_sqrt(&r);
    let hd = deterministic_component(cfg);
    let gd: Vec<CMatrix> = (0..cfg.interferers.len())
        .map(|a| interferer_deterministic_component(cfg, a))
        .collect();
    let nu = real(cfg.rician.nu());
    let zeta = real(cfg.rician.zeta());
    let p = blocks.rx_power_w;
    let sigma2 = cfg.noise_power_w;
    let ks = k_star - 1;
    // LMMSE gains zeta * R * Phi_k applied to the normalised pilot observation
    let gains: Vec<CMatrix> = blocks
        .columns
        .iter()
        .map(|c| (&blocks.psi * &c.phi) * zeta)
        .collect();

    let trial = |t: usize| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(t as u64);
        let h_r = &r_sqrt * complex_gaussian(&mut rng, cfg.n_rx, cfg.n_tx);
        let mut y = &h_r * zeta + complex_gaussian(&mut rng, cfg.n_rx, cfg.n_tx) * real((sigma2 / p).sqrt());
        for (intf, &pa) in cfg.interferers.iter().zip(&blocks.interferer_rx_power_w) {
            let shared = intf.n_tx.min(cfg.n_tx);
            let g_r = &r_sqrt * complex_gaussian(&mut rng, cfg.n_rx, shared);
            let w = zeta * real((pa / p).sqrt());
            for k in 0..shared {
                let mut col = y.column_mut(k);
                col += g_r.column(k) * w;
            }
        }
        let h = &hd * nu + &h_r * zeta;
        let est_r = &gains[ks] * y.column(ks);
        let est = hd.column(ks) * nu + est_r * zeta;
        let est_norm2 = est.norm_squared();

        let signal = p * est_norm2 * est_norm2;
        let err = h.column(ks) - &est;
        let mut in_power = p * est.dotc(&err).norm_sqr() + sigma2 * est_norm2;
        for k in (0..cfg.n_tx).filter(|&k| k != ks) {
            in_power += p * est.dotc(&h.column(k)).norm_sqr();
        }
        for ((intf, &pa), gd_a) in cfg.interferers.iter().zip(&blocks.interferer_rx_power_w).zip(&gd) {
            let g = gd_a * nu + (&r_sqrt * complex_gaussian(&mut rng, cfg.n_rx, intf.n_tx)) * zeta;
            for k in 0..intf.n_tx {
                in_power += pa * est.dotc(&g.column(k)).norm_sqr();
            }
        }
        if in_power == 0.0 {
            return f64::INFINITY;
        }
        (1.0 + signal / in_power).log2()
    };

    let samples: Vec<f64> = (0..opts.trials).into_par_iter().map(trial).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        trials: opts.trials,
    })
}
