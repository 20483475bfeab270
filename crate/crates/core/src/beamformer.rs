//! Hybrid and fully-digital transceiver design.
//!
//! The analog stages pick array-response columns from the path candidates
//! whose images under the total channel are strongest. The baseband stages
//! diagonalize the resulting effective channel, waterfill over the streams,
//! and rescale the precoder so that the transmit power is met with equality.

use crate::error::{Error, Result};
use crate::numerics::{c64, leading_columns, svd_descending, ComplexMatrix};

/// Per-stream transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub levels: Vec<f64>,
    /// Water level `1/η`.
    pub water_level: f64,
}

impl PowerAllocation {
    pub fn active_streams(&self) -> usize {
        self.levels.iter().filter(|&&p| p > 0.0).count()
    }
}

/// Waterfilling `P_l = (1/η − σ²/s_l²)⁺` over the `n_streams` strongest
/// singular values with `Σ P_l = total_power`.
///
/// The weakest active stream is dropped until its level becomes positive.
pub fn waterfill(
    singular_values: &[f64],
    noise_power: f64,
    total_power: f64,
    n_streams: usize,
) -> Result<PowerAllocation> {
    if n_streams == 0 || n_streams > singular_values.len() {
        return Err(Error::InvalidArgument(format!(
            "{n_streams} streams requested from {} singular values",
            singular_values.len()
        )));
    }
    if !(total_power > 0.0) || !(noise_power > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power budget {total_power} and noise {noise_power} must be positive"
        )));
    }
    let s = &singular_values[..n_streams];
    if s.windows(2).any(|w| w[1] > w[0]) || s.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument(
            "singular values must be non-negative and descending".into(),
        ));
    }
    let inverse_gain: Vec<f64> = s
        .iter()
        .map(|&x| {
            if x > 0.0 {
                noise_power / (x * x)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut active = inverse_gain.iter().take_while(|g| g.is_finite()).count();
    if active == 0 {
        return Err(Error::DegenerateChannel);
    }
    let mut level;
    loop {
        level = (total_power + inverse_gain[..active].iter().sum::<f64>()) / active as f64;
        if level - inverse_gain[active - 1] > 0.0 || active == 1 {
            break;
        }
        active -= 1;
    }
    let levels = (0..n_streams)
        .map(|l| {
            if l < active {
                level - inverse_gain[l]
            } else {
                0.0
            }
        })
        .collect();
    Ok(PowerAllocation {
        levels,
        water_level: level,
    })
}

/// Stream powers' rate `Σ log2(1 + P_l s_l² / σ²)`.
pub fn waterfill_rate(
    singular_values: &[f64],
    allocation: &PowerAllocation,
    noise_power: f64,
) -> f64 {
    singular_values
        .iter()
        .zip(&allocation.levels)
        .map(|(s, p)| (1.0 + p * s * s / noise_power).log2())
        .sum()
}

/// Baseband stages for a given effective channel.
#[derive(Debug, Clone)]
pub struct BasebandDesign {
    /// Leading `n_streams` left singular vectors.
    pub w_bb: ComplexMatrix,
    /// Leading right singular vectors scaled by `√P_l`, before normalization.
    pub f_bb_unnormalized: ComplexMatrix,
    /// Best rate the effective channel supports under the power budget.
    pub r_max: f64,
    pub allocation: PowerAllocation,
    pub singular_values: Vec<f64>,
}

pub fn baseband_design(
    h_eff: &ComplexMatrix,
    noise_power: f64,
    total_power: f64,
    n_streams: usize,
) -> Result<BasebandDesign> {
    let (rows, cols) = h_eff.shape();
    if n_streams == 0 || n_streams > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "{n_streams} streams do not fit a {rows}x{cols} channel"
        )));
    }
    let svd = svd_descending(h_eff)?;
    let allocation = waterfill(&svd.singular_values, noise_power, total_power, n_streams)?;
    let w_bb = leading_columns(&svd.left_vectors, n_streams);
    let mut f_bb = leading_columns(&svd.right_vectors, n_streams);
    for (l, &p) in allocation.levels.iter().enumerate() {
        f_bb.column_mut(l).scale_mut(p.sqrt());
    }
    let r_max = waterfill_rate(&svd.singular_values, &allocation, noise_power);
    Ok(BasebandDesign {
        w_bb,
        f_bb_unnormalized: f_bb,
        r_max,
        allocation,
        singular_values: svd.singular_values,
    })
}

/// Scales the baseband precoder by `√P / ‖F_RF F_BB‖_F`.
pub fn normalize_precoder(
    f_rf: &ComplexMatrix,
    f_bb_unnormalized: &ComplexMatrix,
    total_power: f64,
) -> Result<ComplexMatrix> {
    if f_rf.ncols() != f_bb_unnormalized.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "analog precoder has {} columns, baseband precoder {} rows",
            f_rf.ncols(),
            f_bb_unnormalized.nrows()
        )));
    }
    let norm = (f_rf * f_bb_unnormalized).norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument(
            "precoder is zero and cannot be normalized".into(),
        ));
    }
    Ok(f_bb_unnormalized * c64::new(total_power.sqrt() / norm, 0.0))
}

/// Analog stages and the candidate columns they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogSelection {
    pub f_rf: ComplexMatrix,
    pub w_rf: ComplexMatrix,
    pub tx_indices: Vec<usize>,
    pub rx_indices: Vec<usize>,
}

/// Indices of the `k` columns of `image` with the largest ℓ2-norms, in
/// descending order of norm. Equal norms go to the smaller index.
pub fn strongest_columns(image: &ComplexMatrix, k: usize) -> Vec<usize> {
    let norms: Vec<f64> = image.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| {
        norms[b]
            .partial_cmp(&norms[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

fn gather_columns(a: &ComplexMatrix, indices: &[usize]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.nrows(), indices.len());
    for (dst, &src) in indices.iter().enumerate() {
        out.set_column(dst, &a.column(src));
    }
    out
}

fn check_candidates(
    h: &ComplexMatrix,
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
    n_t_rf: usize,
    n_r_rf: usize,
) -> Result<()> {
    if a_t.nrows() != h.ncols() || a_r.nrows() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "candidates {}x{} / {}x{} against channel {}x{}",
            a_t.nrows(),
            a_t.ncols(),
            a_r.nrows(),
            a_r.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    if n_t_rf == 0 || n_r_rf == 0 || n_t_rf > a_t.ncols() || n_r_rf > a_r.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{n_t_rf}/{n_r_rf} RF chains from {}/{} candidates",
            a_t.ncols(),
            a_r.ncols()
        )));
    }
    Ok(())
}

/// Picks the transmit candidates maximizing `‖H a_t‖` and the receive
/// candidates maximizing `‖Hᴴ a_r‖`.
pub fn analog_select_narrowband(
    h_tot: &ComplexMatrix,
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
    n_t_rf: usize,
    n_r_rf: usize,
) -> Result<AnalogSelection> {
    check_candidates(h_tot, a_t, a_r, n_t_rf, n_r_rf)?;
    let tx_indices = strongest_columns(&(h_tot * a_t), n_t_rf);
    let rx_indices = strongest_columns(&(h_tot.adjoint() * a_r), n_r_rf);
    Ok(AnalogSelection {
        f_rf: gather_columns(a_t, &tx_indices),
        w_rf: gather_columns(a_r, &rx_indices),
        tx_indices,
        rx_indices,
    })
}

/// Candidates chosen most often across the per-subcarrier selections.
///
/// Membership goes to the highest vote counts, ties to the smaller
/// candidate index. Within the chosen set, columns are ordered by count,
/// then by the summed selection rank across subcarriers, then by index, so a
/// single subcarrier reproduces the narrowband order.
fn tally_votes(selections: &[Vec<usize>], n_candidates: usize, n_rf: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_candidates];
    let mut rank_sums = vec![0usize; n_candidates];
    for sel in selections {
        for (rank, &c) in sel.iter().enumerate() {
            counts[c] += 1;
            rank_sums[c] += rank;
        }
    }
    let mut members: Vec<usize> = (0..n_candidates).collect();
    members.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    members.truncate(n_rf);
    members.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then(rank_sums[a].cmp(&rank_sums[b]))
            .then(a.cmp(&b))
    });
    members
}

pub fn analog_select_ofdm(
    h_tot_per_k: &[ComplexMatrix],
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
    n_t_rf: usize,
    n_r_rf: usize,
) -> Result<AnalogSelection> {
    if h_tot_per_k.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one subcarrier".into(),
        ));
    }
    let per_k = h_tot_per_k
        .iter()
        .map(|h| analog_select_narrowband(h, a_t, a_r, n_t_rf, n_r_rf))
        .collect::<Result<Vec<_>>>()?;
    let tx_sel: Vec<Vec<usize>> = per_k.iter().map(|s| s.tx_indices.clone()).collect();
    let rx_sel: Vec<Vec<usize>> = per_k.iter().map(|s| s.rx_indices.clone()).collect();
    let tx_indices = tally_votes(&tx_sel, a_t.ncols(), n_t_rf);
    let rx_indices = tally_votes(&rx_sel, a_r.ncols(), n_r_rf);
    Ok(AnalogSelection {
        f_rf: gather_columns(a_t, &tx_indices),
        w_rf: gather_columns(a_r, &rx_indices),
        tx_indices,
        rx_indices,
    })
}

/// Complete hybrid transceiver. Narrowband designs have one baseband pair.
#[derive(Debug, Clone)]
pub struct HybridBeamformer {
    pub f_rf: ComplexMatrix,
    pub w_rf: ComplexMatrix,
    pub f_bb: Vec<ComplexMatrix>,
    pub w_bb: Vec<ComplexMatrix>,
    pub tx_indices: Vec<usize>,
    pub rx_indices: Vec<usize>,
}

/// Baseband stages for given analog stages on one (sub)carrier.
pub fn baseband_for_analog(
    h_tot: &ComplexMatrix,
    f_rf: &ComplexMatrix,
    w_rf: &ComplexMatrix,
    noise_power: f64,
    total_power: f64,
    n_streams: usize,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let h_eff = w_rf.adjoint() * h_tot * f_rf;
    let bb = baseband_design(&h_eff, noise_power, total_power, n_streams)?;
    let f_bb = normalize_precoder(f_rf, &bb.f_bb_unnormalized, total_power)?;
    Ok((f_bb, bb.w_bb))
}

/// Narrowband hybrid design: analog column selection followed by the
/// normalized SVD/waterfilling baseband stages.
#[allow(clippy::too_many_arguments)]
pub fn design_hybrid(
    h_tot: &ComplexMatrix,
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
    n_t_rf: usize,
    n_r_rf: usize,
    n_streams: usize,
    noise_power: f64,
    total_power: f64,
) -> Result<HybridBeamformer> {
    let sel = analog_select_narrowband(h_tot, a_t, a_r, n_t_rf, n_r_rf)?;
    let (f_bb, w_bb) = baseband_for_analog(
        h_tot,
        &sel.f_rf,
        &sel.w_rf,
        noise_power,
        total_power,
        n_streams,
    )?;
    Ok(HybridBeamformer {
        f_rf: sel.f_rf,
        w_rf: sel.w_rf,
        f_bb: vec![f_bb],
        w_bb: vec![w_bb],
        tx_indices: sel.tx_indices,
        rx_indices: sel.rx_indices,
    })
}

/// OFDM hybrid design with `power_per_subcarrier` on every subcarrier.
#[allow(clippy::too_many_arguments)]
pub fn design_hybrid_ofdm(
    h_tot_per_k: &[ComplexMatrix],
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
    n_t_rf: usize,
    n_r_rf: usize,
    n_streams: usize,
    noise_power: f64,
    power_per_subcarrier: f64,
) -> Result<HybridBeamformer> {
    let sel = analog_select_ofdm(h_tot_per_k, a_t, a_r, n_t_rf, n_r_rf)?;
    let mut f_bb = Vec::with_capacity(h_tot_per_k.len());
    let mut w_bb = Vec::with_capacity(h_tot_per_k.len());
    for h in h_tot_per_k {
        let (f, w) = baseband_for_analog(
            h,
            &sel.f_rf,
            &sel.w_rf,
            noise_power,
            power_per_subcarrier,
            n_streams,
        )?;
        f_bb.push(f);
        w_bb.push(w);
    }
    Ok(HybridBeamformer {
        f_rf: sel.f_rf,
        w_rf: sel.w_rf,
        f_bb,
        w_bb,
        tx_indices: sel.tx_indices,
        rx_indices: sel.rx_indices,
    })
}

/// One RF chain per antenna: SVD precoding and combining on the full channel.
#[derive(Debug, Clone)]
pub struct FullyDigital {
    pub precoder: ComplexMatrix,
    pub combiner: ComplexMatrix,
    pub r_max: f64,
}

pub fn fully_digital_design(
    h_tot: &ComplexMatrix,
    noise_power: f64,
    total_power: f64,
    n_streams: usize,
) -> Result<FullyDigital> {
    let bb = baseband_design(h_tot, noise_power, total_power, n_streams)?;
    Ok(FullyDigital {
        precoder: bb.f_bb_unnormalized,
        combiner: bb.w_bb,
        r_max: bb.r_max,
    })
}

/// Rate-maximizing value for a channel: [`fully_digital_design`]'s rate.
pub fn r_max(
    h: &ComplexMatrix,
    noise_power: f64,
    total_power: f64,
    n_streams: usize,
) -> Result<f64> {
    Ok(baseband_design(h, noise_power, total_power, n_streams)?.r_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{upa_response, UpaGeometry};
    use crate::metrics::{spectral_efficiency, spectral_efficiency_linear};
    use crate::numerics::{from_real_diagonal, identity, testing::random_matrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Grid search over the first stream's share for two-stream profiles.
    fn grid_two_streams(s: [f64; 2], noise: f64, power: f64, points: usize) -> f64 {
        (0..=points)
            .map(|i| {
                let p1 = power * i as f64 / points as f64;
                let p2 = power - p1;
                (1.0 + p1 * s[0] * s[0] / noise).log2() + (1.0 + p2 * s[1] * s[1] / noise).log2()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn waterfill_symmetric_streams() {
        let a = waterfill(&[1.0, 1.0], 1.0, 2.0, 2).unwrap();
        assert_eq!(a.levels, vec![1.0, 1.0]);
    }

    #[test]
    fn waterfill_single_stream_takes_all() {
        let a = waterfill(&[2.0], 1.0, 5.0, 1).unwrap();
        assert_eq!(a.levels, vec![5.0]);
    }

    #[test]
    fn waterfill_drops_weak_stream() {
        let s = [1.0, 0.01];
        let a = waterfill(&s, 1.0, 0.5, 2).unwrap();
        assert_eq!(a.levels, vec![0.5, 0.0]);
        let closed = waterfill_rate(&s, &a, 1.0);
        let grid = grid_two_streams(s, 1.0, 0.5, 1_000_000);
        assert!((closed - grid).abs() < 1e-6 && closed >= grid - 1e-12);
    }

    #[test]
    fn waterfill_degenerate_and_bad_inputs() {
        assert_eq!(
            waterfill(&[0.0, 0.0], 1.0, 1.0, 2),
            Err(Error::DegenerateChannel)
        );
        assert!(waterfill(&[1.0, 2.0], 1.0, 1.0, 2).is_err());
        assert!(waterfill(&[1.0], 1.0, 1.0, 2).is_err());
        assert!(waterfill(&[1.0], 1.0, 0.0, 1).is_err());
        // zero tail values are simply inactive
        let a = waterfill(&[1.0, 0.0], 1.0, 1.0, 2).unwrap();
        assert_eq!(a.levels, vec![1.0, 0.0]);
    }

    #[test]
    fn baseband_single_stream_diagonal() {
        let h = from_real_diagonal(&[2.0, 1.0]);
        let bb = baseband_design(&h, 1.0, 3.0, 1).unwrap();
        assert!((bb.r_max - 13f64.log2()).abs() < 1e-12);
        assert!((bb.w_bb[(0, 0)].norm() - 1.0).abs() < 1e-12);
        // direct rate evaluation with the designed stages
        let r = spectral_efficiency_linear(&h, &bb.f_bb_unnormalized, &bb.w_bb, 1.0).unwrap();
        assert!((r - 13f64.log2()).abs() < 1e-10);
    }

    #[test]
    fn baseband_zero_channel_is_degenerate() {
        let h = ComplexMatrix::zeros(3, 3);
        assert!(matches!(
            baseband_design(&h, 1.0, 1.0, 2),
            Err(Error::DegenerateChannel)
        ));
    }

    #[test]
    fn normalization_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = svd_descending(&random_matrix(&mut rng, 6, 3))
            .unwrap()
            .left_vectors;
        let fbb = random_matrix(&mut rng, 3, 2);
        let f = normalize_precoder(&q, &fbb, 4.0).unwrap();
        let gamma = f[(0, 0)].norm() / fbb[(0, 0)].norm();
        assert!((gamma - 2.0 / fbb.norm()).abs() < 1e-12);

        let feasible = &fbb * c64::new(2.0 / (&q * &fbb).norm(), 0.0);
        let again = normalize_precoder(&q, &feasible, 4.0).unwrap();
        assert!((again - &feasible).norm() < 1e-12);

        assert!(normalize_precoder(&q, &ComplexMatrix::zeros(3, 2), 1.0).is_err());

        let f_rf = random_matrix(&mut rng, 6, 3);
        let f = normalize_precoder(&f_rf, &fbb, 2.5).unwrap();
        assert!(((&f_rf * f).norm_squared() / 2.5 - 1.0).abs() < 1e-9);
    }

    fn candidates(rng: &mut ChaCha8Rng, geom: &UpaGeometry, n: usize) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(geom.count(), n);
        for c in 0..n {
            let v = upa_response(
                geom,
                rng.random::<f64>() * std::f64::consts::TAU,
                rng.random::<f64>() * std::f64::consts::PI,
            );
            a.set_column(c, &v);
        }
        a
    }

    #[test]
    fn selecting_everything_permutes_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (gt, gr) = (
            UpaGeometry::near_square(16).unwrap(),
            UpaGeometry::near_square(8).unwrap(),
        );
        let a_t = candidates(&mut rng, &gt, 5);
        let a_r = candidates(&mut rng, &gr, 4);
        let h = random_matrix(&mut rng, 8, 16);
        let sel = analog_select_narrowband(&h, &a_t, &a_r, 5, 4).unwrap();
        let mut idx = sel.tx_indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        let norms: Vec<f64> = (&h * &sel.f_rf).column_iter().map(|c| c.norm()).collect();
        assert!(norms.windows(2).all(|w| w[0] >= w[1]));
        for z in sel.f_rf.iter() {
            assert!((z.norm() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_channel_picks_matching_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (gt, gr) = (
            UpaGeometry::near_square(64).unwrap(),
            UpaGeometry::near_square(16).unwrap(),
        );
        let a_t = candidates(&mut rng, &gt, 6);
        let a_r = candidates(&mut rng, &gr, 6);
        let h = a_r.column(1) * a_t.column(3).adjoint();
        let sel = analog_select_narrowband(&h, &a_t, &a_r, 2, 2).unwrap();
        assert_eq!(sel.tx_indices[0], 3);
        assert_eq!(sel.rx_indices[0], 1);
        assert!(analog_select_narrowband(&h, &a_t, &a_r, 7, 2).is_err());
    }

    #[test]
    fn ofdm_vote_single_subcarrier_matches_narrowband() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (gt, gr) = (
            UpaGeometry::near_square(16).unwrap(),
            UpaGeometry::near_square(8).unwrap(),
        );
        let a_t = candidates(&mut rng, &gt, 8);
        let a_r = candidates(&mut rng, &gr, 8);
        let h = random_matrix(&mut rng, 8, 16);
        let nb = analog_select_narrowband(&h, &a_t, &a_r, 4, 3).unwrap();
        let of = analog_select_ofdm(std::slice::from_ref(&h), &a_t, &a_r, 4, 3).unwrap();
        assert_eq!(nb, of);
        let same = analog_select_ofdm(&[h.clone(), h.clone(), h], &a_t, &a_r, 4, 3).unwrap();
        assert_eq!(same, nb);
    }

    #[test]
    fn vote_tally_plurality_and_ties() {
        // Subcarrier 0 picks {2, 0}, subcarrier 1 picks {2, 1}: candidate 2
        // wins outright, 0 and 1 tie on one vote and 0 wins the tie.
        let votes = vec![vec![2, 0], vec![2, 1]];
        assert_eq!(tally_votes(&votes, 4, 2), vec![2, 0]);
        // Reversed subcarrier order gives the same set.
        let votes = vec![vec![2, 1], vec![2, 0]];
        let mut picked = tally_votes(&votes, 4, 2);
        picked.sort();
        assert_eq!(picked, vec![0, 2]);
    }

    #[test]
    fn vote_on_constructed_channels() {
        // Two subcarriers built on orthonormal candidates so the column
        // norms are exact.
        let a_t = identity(8).columns(0, 4).into_owned();
        let a_r = identity(8).columns(0, 4).into_owned();
        let h0 = a_r.column(0) * a_t.column(2).adjoint() * c64::new(3.0, 0.0)
            + a_r.column(1) * a_t.column(3).adjoint();
        let h1 = a_r.column(0) * a_t.column(2).adjoint() * c64::new(3.0, 0.0)
            + a_r.column(2) * a_t.column(1).adjoint();
        let s0 = analog_select_narrowband(&h0, &a_t, &a_r, 2, 2).unwrap();
        let s1 = analog_select_narrowband(&h1, &a_t, &a_r, 2, 2).unwrap();
        assert_eq!(s0.tx_indices, vec![2, 3]);
        assert_eq!(s1.tx_indices, vec![2, 1]);
        let of = analog_select_ofdm(&[h0, h1], &a_t, &a_r, 2, 2).unwrap();
        assert_eq!(of.tx_indices, vec![2, 1]);
    }

    #[test]
    fn fully_digital_on_diagonal_channel() {
        let h = from_real_diagonal(&[3.0, 2.0, 1.0]);
        let fd = fully_digital_design(&h, 1.0, 10.0, 2).unwrap();
        for l in 0..2 {
            assert!((fd.precoder[(l, l)].norm() > 0.0) && fd.precoder[(2, l)].norm() < 1e-12);
            assert!((fd.combiner[(l, l)].norm() - 1.0).abs() < 1e-12);
        }
        let bb = baseband_design(&h, 1.0, 10.0, 2).unwrap();
        assert_eq!(fd.r_max, bb.r_max);
    }

    #[test]
    fn hybrid_below_fully_digital_and_power_met() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (gt, gr) = (
            UpaGeometry::near_square(16).unwrap(),
            UpaGeometry::near_square(8).unwrap(),
        );
        for _ in 0..20 {
            let a_t = candidates(&mut rng, &gt, 6);
            let a_r = candidates(&mut rng, &gr, 6);
            let h = random_matrix(&mut rng, 8, 16);
            let hy = design_hybrid(&h, &a_t, &a_r, 4, 4, 2, 1.0, 10.0).unwrap();
            let p = (&hy.f_rf * &hy.f_bb[0]).norm_squared();
            assert!((p / 10.0 - 1.0).abs() < 1e-9);
            let r =
                spectral_efficiency(&h, &hy.f_rf, &hy.f_bb[0], &hy.w_rf, &hy.w_bb[0], 1.0).unwrap();
            let fd = fully_digital_design(&h, 1.0, 10.0, 2).unwrap();
            assert!(r <= fd.r_max + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn waterfill_kkt(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let noise = 10f64.powf(rng.random_range(-1.0..1.0));
            let power = 10f64.powf(rng.random_range(-2.0..2.0));
            let a = waterfill(&s, noise, power, n).unwrap();
            let sum: f64 = a.levels.iter().sum();
            prop_assert!((sum / power - 1.0).abs() <= 1e-9);
            for (l, &p) in a.levels.iter().enumerate() {
                let slack = a.water_level - noise / (s[l] * s[l]);
                if p > 0.0 {
                    prop_assert!(slack > 0.0 && (p - slack).abs() <= 1e-9 * power.max(slack));
                } else {
                    prop_assert!(slack <= 0.0);
                }
            }
        }

        #[test]
        fn r_max_equals_rate_of_designed_stages(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_matrix(&mut rng, 4, 5);
            let bb = baseband_design(&h, 0.3, 2.0, 3).unwrap();
            let r = spectral_efficiency(&h, &identity(5), &bb.f_bb_unnormalized, &identity(4), &bb.w_bb, 0.3).unwrap();
            prop_assert!((r - bb.r_max).abs() <= 1e-8 * bb.r_max.max(1.0));
        }

        #[test]
        fn semi_unitary_stages_never_beat_full_channel(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_matrix(&mut rng, 8, 16);
            let w = svd_descending(&random_matrix(&mut rng, 8, 4)).unwrap().left_vectors;
            let f = svd_descending(&random_matrix(&mut rng, 16, 4)).unwrap().left_vectors;
            let reduced = r_max(&(w.adjoint() * &h * f), 1.0, 5.0, 3).unwrap();
            let full = r_max(&h, 1.0, 5.0, 3).unwrap();
            prop_assert!(reduced <= full + 1e-9);
        }
    }
}
