use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{CMatrix, Complex, LinkConfig, LinkError};

/// Exponential receive correlation `R[i][j] = rho^|i-j|`.
pub fn build_correlation(rho: f64, n: usize) -> Result<DMatrix<f64>, LinkError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(LinkError::InvalidConfig(format!("correlation rho {rho} outside [0, 1)")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

/// Symmetric square root via eigen-decomposition.
pub fn correlation_sqrt(r: &DMatrix<f64>) -> CMatrix {
    let eig = r.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose();
    root.map(|v| Complex::new(v, 0.0))
}

/// Uniform linear array steering vectors; column `k` points at `angles_rad[k]`.
pub fn steering_matrix(n_rx: usize, angles_rad: &[f64], spacing_wavelengths: f64) -> CMatrix {
    CMatrix::from_fn(n_rx, angles_rad.len(), |n, k| {
        let phase = 2.0 * std::f64::consts::PI * spacing_wavelengths * n as f64 * angles_rad[k].sin();
        Complex::from_polar(1.0, phase)
    })
}

fn draw_angles(cfg: &LinkConfig, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.los.seed);
    rng.set_stream(stream);
    let half = cfg.los.spread_rad / 2.0;
    (0..count)
        .map(|_| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 })
        .collect()
}

/// LoS component of the desired transmitters (`n_rx x n_tx`, unit-modulus entries).
pub fn deterministic_component(cfg: &LinkConfig) -> CMatrix {
    let angles = match &cfg.los.desired_angles_rad {
        Some(a) => a.clone(),
        None => draw_angles(cfg, 0, cfg.n_tx),
    };
    steering_matrix(cfg.n_rx, &angles, cfg.los.spacing_wavelengths)
}

/// LoS component of interferer `index`, drawn on its own RNG stream.
pub fn interferer_deterministic_component(cfg: &LinkConfig, index: usize) -> CMatrix {
    let n_tx = cfg.interferers[index].n_tx;
    let angles = draw_angles(cfg, index as u64 + 1, n_tx);
    steering_matrix(cfg.n_rx, &angles, cfg.los.spacing_wavelengths)
}

pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * scale, im * scale)
    })
}

/// One realisation of `nu * H_d + zeta * R^{1/2} G`.
pub fn build_channel_sample(cfg: &LinkConfig, seed: u64) -> Result<CMatrix, LinkError> {
    cfg.validate()?;
    let r = build_correlation(cfg.rician.correlation_rho, cfg.n_rx)?;
    let r_sqrt = correlation_sqrt(&r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = complex_gaussian(&mut rng, cfg.n_rx, cfg.n_tx);
    let nu = Complex::new(cfg.rician.nu(), 0.0);
    let zeta = Complex::new(cfg.rician.zeta(), 0.0);
    Ok(deterministic_component(cfg) * nu + (r_sqrt * g) * zeta)
}
