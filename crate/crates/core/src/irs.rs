//! IRS reflection vectors and composition of the total TX → RX channel.

use std::f64::consts::PI;

use rand::Rng;

use crate::channel::{upa_response, OfdmChannelTriple, PathSet, UpaGeometry};
use crate::error::{Error, Result};
use crate::numerics::{c64, cis, ComplexMatrix, ComplexVector};

/// Diagonal of the reflection matrix; every entry has unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionVector {
    phases: ComplexVector,
}

impl ReflectionVector {
    /// Wraps `phases`, rejecting entries whose modulus is not 1 within 1e-9.
    pub fn new(phases: ComplexVector) -> Result<Self> {
        if let Some((m, z)) = phases
            .iter()
            .enumerate()
            .find(|(_, z)| !((z.norm() - 1.0).abs() <= 1e-9))
        {
            return Err(Error::InvalidArgument(format!(
                "reflection entry {m} has modulus {}",
                z.norm()
            )));
        }
        Ok(Self { phases })
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self {
            phases: ComplexVector::from_iterator(angles.len(), angles.iter().map(|&t| cis(t))),
        }
    }

    /// All-ones reflection.
    pub fn identity(m: usize) -> Self {
        Self {
            phases: ComplexVector::from_element(m, c64::new(1.0, 0.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &ComplexVector {
        &self.phases
    }
}

/// Closed-form reflection that maps the IRS-side arrival direction of TX–IRS
/// path `j` onto the departure direction of the dominant IRS–RX path:
/// `v = M · diag(a_r^TI,jᴴ) · a_t^IR,0`.
pub fn design_reflection_proposed(
    ti_paths: &PathSet,
    ir_paths: &PathSet,
    irs_geom: &UpaGeometry,
    j: usize,
) -> Result<ReflectionVector> {
    let incoming = ti_paths.get(j).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "TX-IRS path {j} requested but only {} exist",
            ti_paths.len()
        ))
    })?;
    let outgoing = ir_paths
        .dominant()
        .ok_or_else(|| Error::InvalidArgument("IRS-RX channel has no paths".into()))?;
    let m = irs_geom.count();
    let a_in = upa_response(irs_geom, incoming.aoa_azimuth, incoming.aoa_elevation);
    let a_out = upa_response(irs_geom, outgoing.aod_azimuth, outgoing.aod_elevation);
    let scale = m as f64;
    let phases = a_in.zip_map(&a_out, |r, t| r.conj() * t * scale);
    Ok(ReflectionVector { phases })
}

/// Phases drawn i.i.d. uniform on [0, 2π).
pub fn design_reflection_random<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
) -> Result<ReflectionVector> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "IRS needs at least one element".into(),
        ));
    }
    let angles: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    Ok(ReflectionVector::from_angles(&angles))
}

/// `H_TR + H_IR · diag(v) · H_TI`, or `H_TR` alone when `v` is absent.
pub fn compose_total(
    h_tr: &ComplexMatrix,
    h_ti: &ComplexMatrix,
    h_ir: &ComplexMatrix,
    v: Option<&ReflectionVector>,
) -> Result<ComplexMatrix> {
    let Some(v) = v else {
        return Ok(h_tr.clone());
    };
    let m = v.len();
    if h_ir.ncols() != m || h_ti.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "reflection of length {m} against H_IR {}x{} and H_TI {}x{}",
            h_ir.nrows(),
            h_ir.ncols(),
            h_ti.nrows(),
            h_ti.ncols()
        )));
    }
    if h_ir.nrows() != h_tr.nrows() || h_ti.ncols() != h_tr.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cascade {}x{} does not match direct channel {}x{}",
            h_ir.nrows(),
            h_ti.ncols(),
            h_tr.nrows(),
            h_tr.ncols()
        )));
    }
    let mut scaled = h_ir.clone();
    for (col, &phase) in v.phases.iter().enumerate() {
        scaled.column_mut(col).iter_mut().for_each(|z| *z *= phase);
    }
    Ok(h_tr + scaled * h_ti)
}

/// Per-subcarrier [`compose_total`] with one shared reflection.
pub fn compose_total_ofdm(
    triple: &OfdmChannelTriple,
    v: Option<&ReflectionVector>,
) -> Result<Vec<ComplexMatrix>> {
    triple
        .h_tr
        .iter()
        .zip(&triple.h_ti)
        .zip(&triple.h_ir)
        .map(|((tr, ti), ir)| compose_total(tr, ti, ir, v))
        .collect()
}

/// `‖H_IR · diag(v) · a‖²`, the reflected power delivered along `a`.
pub fn reflected_gain(h_ir: &ComplexMatrix, v: &ReflectionVector, a: &ComplexVector) -> f64 {
    let steered = v.phases.component_mul(a);
    (h_ir * steered).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Arrays, ChannelTriple, GeometrySampler, PathCounts};
    use crate::numerics::{gram_max_eigenvalue, testing::random_matrix};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triple(
        rng: &mut ChaCha8Rng,
        n_t: usize,
        n_r: usize,
        m: usize,
        n_path: usize,
    ) -> ChannelTriple {
        let arrays = Arrays {
            tx: UpaGeometry::near_square(n_t).unwrap(),
            rx: UpaGeometry::near_square(n_r).unwrap(),
            irs: UpaGeometry::near_square(m).unwrap(),
        };
        let d = GeometrySampler::default().sample(rng);
        let counts = PathCounts {
            direct: n_path,
            tx_irs: n_path,
            irs_rx: n_path,
        };
        ChannelTriple::sample(rng, arrays, counts, &d, 1.0, true).unwrap()
    }

    #[test]
    fn single_element_reflection_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = triple(&mut rng, 4, 4, 1, 3);
        let v = design_reflection_proposed(&t.ti_paths, &t.ir_paths, &t.arrays.irs, 0).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v.phases[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proposed_reflection_redirects_dominant_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = triple(&mut rng, 16, 4, 64, 8);
        let irs = &t.arrays.irs;
        let v = design_reflection_proposed(&t.ti_paths, &t.ir_paths, irs, 0).unwrap();
        for z in v.phases.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        let p_in = t.ti_paths.dominant().unwrap();
        let p_out = t.ir_paths.dominant().unwrap();
        let a_in = upa_response(irs, p_in.aoa_azimuth, p_in.aoa_elevation);
        let a_out = upa_response(irs, p_out.aod_azimuth, p_out.aod_elevation);
        assert!((v.phases.component_mul(&a_in) - a_out).norm() < 1e-12);
    }

    #[test]
    fn proposed_reflection_rejects_bad_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = triple(&mut rng, 4, 4, 4, 2);
        assert!(design_reflection_proposed(&t.ti_paths, &t.ir_paths, &t.arrays.irs, 2).is_err());
    }

    #[test]
    fn random_reflection_is_reproducible_and_uniform() {
        let a = design_reflection_random(&mut ChaCha8Rng::seed_from_u64(9), 32).unwrap();
        let b = design_reflection_random(&mut ChaCha8Rng::seed_from_u64(9), 32).unwrap();
        assert_eq!(a, b);
        assert!(a.phases.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(design_reflection_random(&mut ChaCha8Rng::seed_from_u64(9), 0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let v = design_reflection_random(&mut rng, n).unwrap();
        let mean = v
            .phases
            .iter()
            .map(|z| z.arg().rem_euclid(2.0 * PI))
            .sum::<f64>()
            / n as f64;
        assert!((mean / PI - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn compose_without_irs_is_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = triple(&mut rng, 4, 4, 9, 3);
        assert_eq!(
            compose_total(&t.h_tr, &t.h_ti, &t.h_ir, None).unwrap(),
            t.h_tr
        );
        let ones = ReflectionVector::identity(9);
        let h = compose_total(&t.h_tr, &t.h_ti, &t.h_ir, Some(&ones)).unwrap();
        assert!((h - (&t.h_tr + &t.h_ir * &t.h_ti)).norm() < 1e-12 * t.h_tr.norm().max(1.0));
    }

    #[test]
    fn compose_matches_naive_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (nr, m, nt) = (3, 5, 4);
        let h_tr = random_matrix(&mut rng, nr, nt);
        let h_ti = random_matrix(&mut rng, m, nt);
        let h_ir = random_matrix(&mut rng, nr, m);
        let v = design_reflection_random(&mut rng, m).unwrap();
        let h = compose_total(&h_tr, &h_ti, &h_ir, Some(&v)).unwrap();
        for i in 0..nr {
            for j in 0..nt {
                let mut acc = h_tr[(i, j)];
                for k in 0..m {
                    acc += h_ir[(i, k)] * v.phases[k] * h_ti[(k, j)];
                }
                assert!((h[(i, j)] - acc).norm() < 1e-12);
            }
        }
        let short = ReflectionVector::identity(m - 1);
        assert!(matches!(
            compose_total(&h_tr, &h_ti, &h_ir, Some(&short)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ofdm_composition_per_subcarrier() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = triple(&mut rng, 4, 4, 4, 3);
        let v = design_reflection_random(&mut rng, 4).unwrap();
        let single = t.to_ofdm(1).unwrap();
        assert_eq!(
            compose_total_ofdm(&single, Some(&v)).unwrap()[0],
            compose_total(&t.h_tr, &t.h_ti, &t.h_ir, Some(&v)).unwrap()
        );
        let of = t.to_ofdm(4).unwrap();
        let tot = compose_total_ofdm(&of, Some(&v)).unwrap();
        let none = compose_total_ofdm(&of, None).unwrap();
        for k in 0..4 {
            assert_eq!(none[k], of.h_tr[k]);
            let mut scaled = of.h_ir[k].clone();
            for c in 0..4 {
                scaled
                    .column_mut(c)
                    .iter_mut()
                    .for_each(|z| *z *= v.phases[c]);
            }
            let want = &of.h_tr[k] + scaled * &of.h_ti[k];
            assert!((&tot[k] - &want).norm() <= 1e-12 * want.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        // Reflected gain along any unit-norm direction is capped by the top
        // eigenvalue of H_IRᴴH_IR.
        #[test]
        fn reflected_gain_below_top_eigenvalue(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = triple(&mut rng, 4, 4, 16, 3);
            let v = design_reflection_random(&mut rng, 16).unwrap();
            let lmax = gram_max_eigenvalue(&t.h_ir).unwrap();
            for p in t.ti_paths.paths() {
                let a = upa_response(&t.arrays.irs, p.aoa_azimuth, p.aoa_elevation);
                prop_assert!(reflected_gain(&t.h_ir, &v, &a) <= lmax * (1.0 + 1e-9));
            }
        }
    }
}
