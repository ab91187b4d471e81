use super::{LinkError, PathLossParams};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Free-space loss at `distance_m`, dB.
pub fn friis_reference_db(carrier_frequency_hz: f64, distance_m: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance_m * carrier_frequency_hz / SPEED_OF_LIGHT)
        .log10()
}

/// kTB at 290 K.
pub fn thermal_noise_w(bandwidth_hz: f64) -> f64 {
    BOLTZMANN * 290.0 * bandwidth_hz
}

/// `shadow_draw` is a standard-normal sample scaled by the configured sigma.
pub fn path_loss_db(
    p: &PathLossParams,
    distance_m: f64,
    shadow_draw: Option<f64>,
) -> Result<f64, LinkError> {
    if distance_m.is_nan() || distance_m < p.reference_distance_m {
        return Err(LinkError::DistanceBelowReference {
            distance_m,
            reference_m: p.reference_distance_m,
        });
    }
    let shadow = shadow_draw.map_or(0.0, |z| z * p.sigma_shadow_db);
    Ok(p.alpha_db + 10.0 * p.beta * (distance_m / p.reference_distance_m).log10() + shadow)
}

pub fn received_power(p: &PathLossParams, tx_power_w: f64, distance_m: f64) -> Result<f64, LinkError> {
    received_power_shadowed(p, tx_power_w, distance_m, None)
}

pub fn received_power_shadowed(
    p: &PathLossParams,
    tx_power_w: f64,
    distance_m: f64,
    shadow_draw: Option<f64>,
) -> Result<f64, LinkError> {
    let loss = path_loss_db(p, distance_m, shadow_draw)?;
    Ok(tx_power_w * 10f64.powf(-0.1 * loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, beta: f64) -> PathLossParams {
        PathLossParams {
            alpha_db: alpha,
            beta,
            sigma_shadow_db: 4.0,
            reference_distance_m: 1.0,
        }
    }

    #[test]
    fn loss_at_reference_is_alpha() {
        let p = params(68.0, 2.0);
        assert_eq!(path_loss_db(&p, 1.0, None).unwrap(), 68.0);
        assert!((path_loss_db(&p, 10.0, None).unwrap() - 88.0).abs() < 1e-12);
    }

    #[test]
    fn shadowing_adds_scaled_draw() {
        let p = params(60.0, 2.0);
        let base = path_loss_db(&p, 100.0, None).unwrap();
        assert!((path_loss_db(&p, 100.0, Some(-1.5)).unwrap() - (base - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn below_reference_is_rejected() {
        let p = PathLossParams {
            reference_distance_m: 10.0,
            ..params(60.0, 2.0)
        };
        assert_eq!(
            path_loss_db(&p, 5.0, None),
            Err(LinkError::DistanceBelowReference {
                distance_m: 5.0,
                reference_m: 10.0
            })
        );
    }

    #[test]
    fn friis_anchor_at_60ghz() {
        // 20 log10(4 pi f / c) evaluated by hand: 4*pi*6e10/2.99792458e8 = 2515.1
        let expected = 20.0 * 2515.0997_f64.log10();
        let got = friis_reference_db(60e9, 1.0);
        assert!((got - expected).abs() < 1e-3, "{got}");
        assert!((got - 68.0).abs() < 0.05);
    }

    #[test]
    fn received_power_examples() {
        assert_eq!(received_power(&params(0.0, 2.0), 2.5, 1.0).unwrap(), 2.5);
        assert!((received_power(&params(30.0, 2.0), 1.0, 1.0).unwrap() - 1e-3).abs() < 1e-15);

        let p = PathLossParams::friis(60e9, 1.0);
        let got = received_power(&p, 78e-3, 1000.0).unwrap();
        let expected = 78e-3 * 10f64.powf(-0.1 * (friis_reference_db(60e9, 1.0) + 60.0));
        assert!((got / expected - 1.0).abs() < 1e-12);
        // alpha is ~68 dB so the total loss is ~128 dB
        assert!((got / (78e-3 * 10f64.powf(-12.8)) - 1.0).abs() < 0.02);
    }

    #[test]
    fn received_power_strictly_decreasing() {
        let p = PathLossParams::friis(60e9, 1.0);
        let mut last = f64::INFINITY;
        for d in [1.0, 2.0, 10.0, 500.0, 8000.0] {
            let r = received_power(&p, 0.078, d).unwrap();
            assert!(r < last);
            last = r;
        }
    }
}
