//! MMSE channel-estimation covariances.
//!
//! The pilot observation for column `k` of the scattered channel is
//! `zeta*h_k + zeta*sum_a sqrt(P_a/P)*h_{a,k} + n/sqrt(P)`. All covariances are
//! block diagonal over columns because the transmitters fade independently
//! and pilots are orthogonal; `Psi = I_K (x) R`.
//!
//! `psi_hat` is normalised so that `zeta^2 * psi_hat` is the covariance of the
//! estimated scattered component, which makes
//! `zeta^2 * psi == zeta^2 * psi_hat + psi_tilde` hold exactly.

use super::{build_correlation, received_power, CMatrix, Complex, LinkConfig, LinkError};

/// Full `N K x N K` covariance set for the desired transmitter group.
#[derive(Debug, Clone)]
pub struct EstimationCovariances {
    /// Covariance of the vectorised scattered channel.
    pub psi: CMatrix,
    /// Inverse covariance of the normalised pilot observation.
    pub phi: CMatrix,
    pub psi_hat: CMatrix,
    /// Estimation-error covariance.
    pub psi_tilde: CMatrix,
}

/// Per-column `N x N` diagonal blocks of the covariances.
#[derive(Debug, Clone)]
pub struct ColumnBlock {
    /// Sum of interferer-to-desired received power ratios sharing this pilot.
    pub contamination: f64,
    pub phi: CMatrix,
    pub psi_hat: CMatrix,
    pub psi_tilde: CMatrix,
}

#[derive(Debug, Clone)]
pub struct ColumnBlocks {
    pub rx_power_w: f64,
    pub interferer_rx_power_w: Vec<f64>,
    /// Receive correlation `R`, the diagonal block of `psi`.
    pub psi: CMatrix,
    pub columns: Vec<ColumnBlock>,
}

fn real(v: f64) -> Complex {
    Complex::new(v, 0.0)
}

fn hermitian_inverse(m: CMatrix, what: &'static str) -> Result<CMatrix, LinkError> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => m.try_inverse().ok_or(LinkError::SingularMatrix(what)),
    }
}

fn contamination(cfg: &LinkConfig, rx_power: f64, intf_powers: &[f64], column: usize) -> f64 {
    cfg.interferers
        .iter()
        .zip(intf_powers)
        .filter(|(intf, _)| column < intf.n_tx)
        .map(|(_, p)| p / rx_power)
        .sum()
}

fn powers(cfg: &LinkConfig, distance_m: f64) -> Result<(f64, Vec<f64>), LinkError> {
    let rx = received_power(&cfg.path_loss, cfg.tx_power_w, distance_m)?;
    let intf = cfg
        .interferers
        .iter()
        .map(|i| received_power(&cfg.path_loss, cfg.tx_power_w, i.distance_m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((rx, intf))
}

/// Inverse-covariance block of column `k` before inversion.
fn phi_inv_block(r: &CMatrix, noise_ratio: f64, zeta2: f64, contamination: f64) -> CMatrix {
    let n = r.nrows();
    CMatrix::identity(n, n) * real(noise_ratio) + r * real(zeta2 * (1.0 + contamination))
}

pub fn column_blocks(cfg: &LinkConfig, distance_m: f64) -> Result<ColumnBlocks, LinkError> {
    cfg.validate()?;
    let (rx, intf) = powers(cfg, distance_m)?;
    let zeta2 = cfg.rician.zeta().powi(2);
    let r = build_correlation(cfg.rician.correlation_rho, cfg.n_rx)?.map(real);
    let noise_ratio = cfg.noise_power_w / rx;

    let mut columns: Vec<ColumnBlock> = Vec::with_capacity(cfg.n_tx);
    for k in 0..cfg.n_tx {
        let c = contamination(cfg, rx, &intf, k);
        if let Some(prev) = columns.iter().find(|b| b.contamination == c) {
            columns.push(prev.clone());
            continue;
        }
        let phi = hermitian_inverse(phi_inv_block(&r, noise_ratio, zeta2, c), "pilot observation covariance")?;
        let psi_hat = (&r * &phi * &r) * real(zeta2);
        let psi_tilde = (&r - &psi_hat) * real(zeta2);
        columns.push(ColumnBlock {
            contamination: c,
            phi,
            psi_hat,
            psi_tilde,
        });
    }
    Ok(ColumnBlocks {
        rx_power_w: rx,
        interferer_rx_power_w: intf,
        psi: r,
        columns,
    })
}

/// Full Kronecker-structured covariances at `distance_m`.
pub fn estimation_covariances(
    cfg: &LinkConfig,
    distance_m: f64,
) -> Result<EstimationCovariances, LinkError> {
    cfg.validate()?;
    let (rx, intf) = powers(cfg, distance_m)?;
    let zeta2 = cfg.rician.zeta().powi(2);
    let n = cfg.n_rx;
    let k = cfg.n_tx;
    let r = build_correlation(cfg.rician.correlation_rho, n)?.map(real);
    let psi = CMatrix::identity(k, k).kronecker(&r);

    let mut phi_inv = CMatrix::zeros(n * k, n * k);
    for col in 0..k {
        let c = contamination(cfg, rx, &intf, col);
        phi_inv
            .view_mut((col * n, col * n), (n, n))
            .copy_from(&phi_inv_block(&r, cfg.noise_power_w / rx, zeta2, c));
    }
    let phi = hermitian_inverse(phi_inv, "pilot observation covariance")?;
    let psi_hat = (&psi * &phi * &psi) * real(zeta2);
    let psi_tilde = (&psi - &psi_hat) * real(zeta2);
    Ok(EstimationCovariances {
        psi,
        phi,
        psi_hat,
        psi_tilde,
    })
}
