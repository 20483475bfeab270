//! Achievable spectral efficiency of a linear precoder/combiner pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig_descending, log2_det_identity_plus, ComplexMatrix};

/// Post-combining noise covariances above this condition number mark the
/// trial as degenerate.
pub const MAX_NOISE_CONDITION: f64 = 1e12;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Transmit power and receiver noise power, both linear (mW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub total_power: f64,
    pub noise_power: f64,
}

impl LinkBudget {
    pub fn from_dbm(p_tx_dbm: f64, noise_dbm: f64) -> Result<Self> {
        Self::new(dbm_to_mw(p_tx_dbm), dbm_to_mw(noise_dbm))
    }

    pub fn new(total_power: f64, noise_power: f64) -> Result<Self> {
        if !(total_power > 0.0 && total_power.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "transmit power must be positive, got {total_power}"
            )));
        }
        if !(noise_power > 0.0 && noise_power.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        Ok(Self {
            total_power,
            noise_power,
        })
    }

    /// Budget with the transmit power split equally over `subcarriers`.
    pub fn per_subcarrier(&self, subcarriers: usize) -> Self {
        Self {
            total_power: self.total_power / subcarriers as f64,
            noise_power: self.noise_power,
        }
    }
}

/// Rate of `y = combinerᴴ (H · precoder · s + n)` with Gaussian symbols,
/// accounting for the coloured noise `σ² · combinerᴴ · combiner`.
pub fn spectral_efficiency_linear(
    h: &ComplexMatrix,
    precoder: &ComplexMatrix,
    combiner: &ComplexMatrix,
    noise_power: f64,
) -> Result<f64> {
    if h.ncols() != precoder.nrows() || h.nrows() != combiner.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "channel {}x{} with precoder {}x{} and combiner {}x{}",
            h.nrows(),
            h.ncols(),
            precoder.nrows(),
            precoder.ncols(),
            combiner.nrows(),
            combiner.ncols()
        )));
    }
    if precoder.ncols() != combiner.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "precoder carries {} streams but combiner {}",
            precoder.ncols(),
            combiner.ncols()
        )));
    }
    let noise_cov = (combiner.adjoint() * combiner).scale(noise_power);
    let eig = hermitian_eig_descending(&noise_cov)?;
    let largest = eig.values.first().copied().unwrap_or(0.0);
    let smallest = eig.values.last().copied().unwrap_or(0.0);
    if !(smallest > 0.0) || largest / smallest > MAX_NOISE_CONDITION {
        return Err(Error::IllConditioned {
            condition: if smallest > 0.0 {
                largest / smallest
            } else {
                f64::INFINITY
            },
        });
    }

    // Whiten with R^{-1/2}, then det(I + R⁻¹AAᴴ) = det(I + BBᴴ), B = R^{-1/2}A.
    let mut q_scaled = eig.vectors.clone();
    for (k, &l) in eig.values.iter().enumerate() {
        q_scaled.column_mut(k).scale_mut(1.0 / l.sqrt());
    }
    let whitener = q_scaled * eig.vectors.adjoint();
    let signal = combiner.adjoint() * h * precoder;
    let b = whitener * signal;
    let gram = &b * b.adjoint();
    let gram = (&gram + gram.adjoint()).scale(0.5);
    log2_det_identity_plus(&gram)
}

/// Rate of the hybrid transceiver `(W_RF W_BB)ᴴ H (F_RF F_BB)`.
pub fn spectral_efficiency(
    h: &ComplexMatrix,
    f_rf: &ComplexMatrix,
    f_bb: &ComplexMatrix,
    w_rf: &ComplexMatrix,
    w_bb: &ComplexMatrix,
    noise_power: f64,
) -> Result<f64> {
    if f_rf.ncols() != f_bb.nrows() || w_rf.ncols() != w_bb.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "analog {}x{} / baseband {}x{} precoder or analog {}x{} / baseband {}x{} combiner",
            f_rf.nrows(),
            f_rf.ncols(),
            f_bb.nrows(),
            f_bb.ncols(),
            w_rf.nrows(),
            w_rf.ncols(),
            w_bb.nrows(),
            w_bb.ncols()
        )));
    }
    spectral_efficiency_linear(h, &(f_rf * f_bb), &(w_rf * w_bb), noise_power)
}

/// Per-subcarrier rates; degenerate subcarriers are kept as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmSpectralEfficiency {
    pub per_subcarrier: Vec<Option<f64>>,
}

impl OfdmSpectralEfficiency {
    /// Sum over subcarriers, or `None` when any subcarrier is degenerate.
    pub fn total(&self) -> Option<f64> {
        self.per_subcarrier.iter().copied().sum()
    }

    pub fn degenerate_subcarriers(&self) -> Vec<usize> {
        self.per_subcarrier
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.is_none().then_some(k))
            .collect()
    }
}

pub fn spectral_efficiency_ofdm(
    h_per_k: &[ComplexMatrix],
    f_rf: &ComplexMatrix,
    f_bb_per_k: &[ComplexMatrix],
    w_rf: &ComplexMatrix,
    w_bb_per_k: &[ComplexMatrix],
    noise_power: f64,
) -> Result<OfdmSpectralEfficiency> {
    let k_total = h_per_k.len();
    if f_bb_per_k.len() != k_total || w_bb_per_k.len() != k_total {
        return Err(Error::DimensionMismatch(format!(
            "{k_total} channels but {} precoders and {} combiners",
            f_bb_per_k.len(),
            w_bb_per_k.len()
        )));
    }
    let mut per_subcarrier = Vec::with_capacity(k_total);
    for k in 0..k_total {
        match spectral_efficiency(
            &h_per_k[k],
            f_rf,
            &f_bb_per_k[k],
            w_rf,
            &w_bb_per_k[k],
            noise_power,
        ) {
            Ok(r) => per_subcarrier.push(Some(r)),
            Err(e) if e.is_degenerate() => per_subcarrier.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(OfdmSpectralEfficiency { per_subcarrier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c64, identity, svd_descending, testing::random_matrix};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(z: f64) -> ComplexMatrix {
        ComplexMatrix::from_element(1, 1, c64::new(z, 0.0))
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_mw(30.0) - 1000.0).abs() < 1e-9);
        assert!((mw_to_dbm(dbm_to_mw(-91.0)) + 91.0).abs() < 1e-12);
        assert!(LinkBudget::from_dbm(40.0, -91.0).is_ok());
        assert!(LinkBudget::new(0.0, 1.0).is_err());
        assert!(LinkBudget::new(1.0, -1.0).is_err());
    }

    #[test]
    fn scalar_link() {
        let p: f64 = 7.0;
        let r = spectral_efficiency(
            &scalar(1.0),
            &scalar(1.0),
            &scalar(p.sqrt()),
            &scalar(1.0),
            &scalar(1.0),
            1.0,
        )
        .unwrap();
        assert!((r - (1.0 + p).log2()).abs() < 1e-12);
    }

    #[test]
    fn zero_channel_has_zero_rate() {
        let h = ComplexMatrix::zeros(3, 4);
        let f = identity(4).columns(0, 2).into_owned();
        let w = identity(3).columns(0, 2).into_owned();
        let r = spectral_efficiency_linear(&h, &f, &w, 1.0).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rank_deficient_combiner_is_degenerate() {
        let h = identity(2);
        let f = identity(2);
        let mut w = identity(2);
        w[(1, 1)] = c64::new(0.0, 0.0);
        w[(0, 1)] = c64::new(1.0, 0.0);
        assert!(matches!(
            spectral_efficiency_linear(&h, &f, &w, 1.0),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let h = identity(3);
        assert!(matches!(
            spectral_efficiency_linear(&h, &identity(2), &identity(3), 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ofdm_sum_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hs: Vec<_> = (0..4).map(|_| random_matrix(&mut rng, 4, 6)).collect();
        let f_rf = random_matrix(&mut rng, 6, 3);
        let w_rf = random_matrix(&mut rng, 4, 3);
        let f_bb: Vec<_> = (0..4).map(|_| random_matrix(&mut rng, 3, 2)).collect();
        let w_bb: Vec<_> = (0..4).map(|_| random_matrix(&mut rng, 3, 2)).collect();
        let total = spectral_efficiency_ofdm(&hs, &f_rf, &f_bb, &w_rf, &w_bb, 0.5).unwrap();
        let mut want = 0.0;
        for k in 0..4 {
            want += spectral_efficiency(&hs[k], &f_rf, &f_bb[k], &w_rf, &w_bb[k], 0.5).unwrap();
        }
        assert!((total.total().unwrap() - want).abs() < 1e-9);
        assert!(total.degenerate_subcarriers().is_empty());

        let single =
            spectral_efficiency_ofdm(&hs[..1], &f_rf, &f_bb[..1], &w_rf, &w_bb[..1], 0.5).unwrap();
        let direct = spectral_efficiency(&hs[0], &f_rf, &f_bb[0], &w_rf, &w_bb[0], 0.5).unwrap();
        assert_eq!(single.total().unwrap(), direct);
    }

    #[test]
    fn degenerate_subcarrier_is_recorded() {
        let hs = vec![identity(2), identity(2)];
        let f = vec![identity(2), identity(2)];
        let mut bad = identity(2);
        bad[(1, 1)] = c64::new(0.0, 0.0);
        let w = vec![identity(2), bad];
        let se = spectral_efficiency_ofdm(&hs, &identity(2), &f, &identity(2), &w, 1.0).unwrap();
        assert_eq!(se.degenerate_subcarriers(), vec![1]);
        assert_eq!(se.total(), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn invariant_to_combiner_rotation_and_phase(seed in any::<u64>(), phase in 0.0f64..6.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_matrix(&mut rng, 5, 6);
            let f = random_matrix(&mut rng, 6, 3);
            let w = random_matrix(&mut rng, 5, 3);
            let base = spectral_efficiency_linear(&h, &f, &w, 0.7).unwrap();
            let q = svd_descending(&random_matrix(&mut rng, 3, 3)).unwrap().left_vectors;
            let rotated = spectral_efficiency_linear(&h, &f, &(&w * q), 0.7).unwrap();
            let g = c64::new(phase.cos(), phase.sin());
            let phased = spectral_efficiency_linear(&h, &(&f * g), &(&w * g), 0.7).unwrap();
            prop_assert!((base - rotated).abs() <= 1e-9 * base.max(1.0));
            prop_assert!((base - phased).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn log_det_matches_direct_determinant(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, n);
            let x = &a * a.adjoint();
            let via_eig = log2_det_identity_plus(&x).unwrap();
            let direct = (identity(n) + &x).determinant().re.log2();
            prop_assert!((via_eig - direct).abs() <= 1e-8 * direct.abs().max(1.0));
        }
    }
}
