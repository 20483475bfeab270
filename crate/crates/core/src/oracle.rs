//! Brute-force verifiers for the closed-form designs.
//!
//! Every search here is a plain enumeration. When the enumerated set contains
//! the closed-form point, that point is evaluated explicitly as well, so the
//! reported best value can never fall below the proposed one.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::{analog_select_narrowband, baseband_for_analog, design_hybrid, r_max};
use crate::channel::{
    path_loss_db, sample_paths, upa_response, Arrays, ChannelKind, ChannelTriple, GeometrySampler,
    LinkGeometry, PathCounts, PathDraw, UpaGeometry,
};
use crate::error::{Error, Result};
use crate::irs::{
    compose_total, design_reflection_proposed, design_reflection_random, reflected_gain,
    ReflectionVector,
};
use crate::metrics::{spectral_efficiency, LinkBudget};
use crate::numerics::{
    gram_max_eigenvalue, hermitian_eig_descending, identity, ComplexMatrix, ComplexVector,
};

/// Default cap on the number of evaluations of one search.
pub const DEFAULT_CEILING: u128 = 1_000_000;

/// Slack allowed when comparing a brute-force optimum against a point it
/// contains.
pub const SUPERSET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance: String,
    pub proposed_value: f64,
    pub brute_force_value: f64,
    /// `brute_force_value − proposed_value`.
    pub gap: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub evaluations: u64,
    /// Extra named values (baselines, indices of the best point).
    pub aux: BTreeMap<String, f64>,
}

impl OracleReport {
    fn superset(
        instance: String,
        proposed: f64,
        best: f64,
        evaluations: u64,
        aux: BTreeMap<String, f64>,
    ) -> Self {
        let tolerance = SUPERSET_TOLERANCE * proposed.abs().max(1.0);
        Self {
            instance,
            proposed_value: proposed,
            brute_force_value: best,
            gap: best - proposed,
            pass: best >= proposed - tolerance,
            tolerance,
            evaluations,
            aux,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report fields are always serializable")
    }
}

/// Writes one JSON object per line.
pub fn write_reports_jsonl<W: Write>(reports: &[OracleReport], mut out: W) -> std::io::Result<()> {
    for r in reports {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

fn check_ceiling(size: u128, ceiling: u128) -> Result<()> {
    if size > ceiling {
        return Err(Error::SearchTooLarge { size, ceiling });
    }
    Ok(())
}

/// Rate of a candidate, with degenerate channels scored as zero.
fn score(rate: Result<f64>) -> Result<f64> {
    match rate {
        Ok(r) => Ok(r),
        Err(e) if e.is_degenerate() => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Larger value wins; ties go to the smaller index.
fn better(a: (f64, u128), b: (f64, u128)) -> (f64, u128) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn quantized_reflection(mut index: u128, m: usize, levels: usize) -> ReflectionVector {
    let step = 2.0 * PI / levels as f64;
    let angles: Vec<f64> = (0..m)
        .map(|_| {
            let digit = (index % levels as u128) as f64;
            index /= levels as u128;
            digit * step
        })
        .collect();
    ReflectionVector::from_angles(&angles)
}

/// Fully-digital rate over every reflection with phases on `{2πℓ/L}`, plus
/// the unquantized closed-form reflection.
///
/// `aux` carries `no_irs` (direct link only), `grid_best` and `best_index`
/// (the grid point, little-endian base-`L` digits; `-1` if the closed form
/// won).
pub fn exhaustive_irs_search(
    triple: &ChannelTriple,
    phase_levels: usize,
    link: &LinkBudget,
    n_streams: usize,
    ceiling: u128,
) -> Result<OracleReport> {
    if phase_levels == 0 {
        return Err(Error::InvalidArgument(
            "need at least one phase level".into(),
        ));
    }
    let m = triple.arrays.irs.count();
    let size = (phase_levels as u128)
        .checked_pow(m as u32)
        .unwrap_or(u128::MAX);
    check_ceiling(size.saturating_add(1), ceiling)?;

    let rate = |v: Option<&ReflectionVector>| -> Result<f64> {
        let h = compose_total(&triple.h_tr, &triple.h_ti, &triple.h_ir, v)?;
        score(r_max(&h, link.noise_power, link.total_power, n_streams))
    };

    let proposed_v =
        design_reflection_proposed(&triple.ti_paths, &triple.ir_paths, &triple.arrays.irs, 0)?;
    let proposed = rate(Some(&proposed_v))?;
    let no_irs = rate(None)?;

    let (grid_best, grid_index) = (0..size)
        .into_par_iter()
        .map(|i| rate(Some(&quantized_reflection(i, m, phase_levels))).map(|r| (r, i)))
        .try_reduce(|| (f64::NEG_INFINITY, u128::MAX), |a, b| Ok(better(a, b)))?;

    let (best, best_index) = if proposed > grid_best {
        (proposed, -1.0)
    } else {
        (grid_best, grid_index as f64)
    };
    let aux = BTreeMap::from([
        ("no_irs".to_string(), no_irs),
        ("grid_best".to_string(), grid_best),
        ("best_index".to_string(), best_index),
    ]);
    Ok(OracleReport::superset(
        format!("irs M={m} L={phase_levels} Ns={n_streams}"),
        proposed,
        best,
        size as u64 + 1,
        aux,
    ))
}

/// Fully-digital rate averaged over `draws` random reflections.
pub fn random_irs_mean<R: Rng + ?Sized>(
    triple: &ChannelTriple,
    rng: &mut R,
    draws: usize,
    link: &LinkBudget,
    n_streams: usize,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let m = triple.arrays.irs.count();
    let mut total = 0.0;
    for _ in 0..draws {
        let v = design_reflection_random(rng, m)?;
        let h = compose_total(&triple.h_tr, &triple.h_ti, &triple.h_ir, Some(&v))?;
        total += score(r_max(&h, link.noise_power, link.total_power, n_streams))?;
    }
    Ok(total / draws as f64)
}

/// Checks `‖H_IR · diag(v) · a‖² ≤ λ_max(H_IRᴴ H_IR)` for a unit-norm `a`.
///
/// The tolerance is `1e-9 · λ_max`, relative to the channel's own scale.
pub fn reflection_bound_certificate(
    h_ir: &ComplexMatrix,
    v: &ReflectionVector,
    incoming: &ComplexVector,
) -> Result<OracleReport> {
    if h_ir.ncols() != v.len() || incoming.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "H_IR has {} columns, reflection {} entries, incoming response {}",
            h_ir.ncols(),
            v.len(),
            incoming.len()
        )));
    }
    let lhs = reflected_gain(h_ir, v, incoming);
    // H_IRᴴH_IR and H_IR H_IRᴴ share their non-zero eigenvalues.
    let gram = if h_ir.nrows() < h_ir.ncols() {
        h_ir * h_ir.adjoint()
    } else {
        h_ir.adjoint() * h_ir
    };
    let eig = hermitian_eig_descending(&gram)?;
    let lambda = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let tolerance = 1e-9 * lambda;
    Ok(OracleReport {
        instance: format!("reflection_bound Nr={} M={}", h_ir.nrows(), h_ir.ncols()),
        proposed_value: lhs,
        brute_force_value: lambda,
        gap: lambda - lhs,
        pass: lhs <= lambda + tolerance,
        tolerance,
        evaluations: 1,
        aux: BTreeMap::new(),
    })
}

fn gather(a: &ComplexMatrix, idx: &[usize]) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])])
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Achieved hybrid rate of every pair of candidate subsets, against the
/// norm-based selection.
///
/// Each subset pair gets the full baseband design (SVD, waterfilling,
/// normalization) and is scored by the resulting spectral efficiency.
/// Subsets whose noise covariance is degenerate score zero.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_analog_search(
    h_tot: &ComplexMatrix,
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
    n_t_rf: usize,
    n_r_rf: usize,
    n_streams: usize,
    link: &LinkBudget,
    ceiling: u128,
) -> Result<OracleReport> {
    analog_select_narrowband(h_tot, a_t, a_r, n_t_rf, n_r_rf)?;
    let size = binomial(a_t.ncols(), n_t_rf).saturating_mul(binomial(a_r.ncols(), n_r_rf));
    check_ceiling(size, ceiling)?;

    let evaluate = |f_rf: &ComplexMatrix, w_rf: &ComplexMatrix| -> Result<f64> {
        score(
            baseband_for_analog(
                h_tot,
                f_rf,
                w_rf,
                link.noise_power,
                link.total_power,
                n_streams,
            )
            .and_then(|(f_bb, w_bb)| {
                spectral_efficiency(h_tot, f_rf, &f_bb, w_rf, &w_bb, link.noise_power)
            }),
        )
    };

    let hybrid = design_hybrid(
        h_tot,
        a_t,
        a_r,
        n_t_rf,
        n_r_rf,
        n_streams,
        link.noise_power,
        link.total_power,
    );
    let proposed = match hybrid {
        Ok(hb) => score(spectral_efficiency(
            h_tot,
            &hb.f_rf,
            &hb.f_bb[0],
            &hb.w_rf,
            &hb.w_bb[0],
            link.noise_power,
        ))?,
        Err(e) if e.is_degenerate() => 0.0,
        Err(e) => return Err(e),
    };

    let tx_sets: Vec<Vec<usize>> = (0..a_t.ncols()).combinations(n_t_rf).collect();
    let rx_sets: Vec<Vec<usize>> = (0..a_r.ncols()).combinations(n_r_rf).collect();
    let pairs: Vec<(usize, usize)> = (0..tx_sets.len())
        .cartesian_product(0..rx_sets.len())
        .collect();
    let (grid_best, best_pair) = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(t, r))| {
            evaluate(&gather(a_t, &tx_sets[t]), &gather(a_r, &rx_sets[r])).map(|v| (v, i as u128))
        })
        .try_reduce(|| (f64::NEG_INFINITY, u128::MAX), |a, b| Ok(better(a, b)))?;

    let best = grid_best.max(proposed);
    let aux = BTreeMap::from([
        ("grid_best".to_string(), grid_best),
        ("best_pair_index".to_string(), best_pair as f64),
        (
            "relative_gap".to_string(),
            if best > 0.0 {
                (best - proposed) / best
            } else {
                0.0
            },
        ),
    ]);
    Ok(OracleReport::superset(
        format!(
            "analog Nt_cand={} Nr_cand={} Nt_rf={n_t_rf} Nr_rf={n_r_rf}",
            a_t.ncols(),
            a_r.ncols()
        ),
        proposed,
        best,
        size as u64,
        aux,
    ))
}

/// Array sizes of one probe row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSize {
    pub n_t: usize,
    pub n_r: usize,
    pub m: usize,
}

/// Channel settings shared by all probe rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    pub n_path: usize,
    pub n_rf: usize,
    pub angle_range: f64,
    pub shadowing: bool,
    pub geometry: GeometrySampler,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            n_path: 8,
            n_rf: 4,
            angle_range: 1.0,
            shadowing: true,
            geometry: GeometrySampler::default(),
        }
    }
}

/// Large-array statistics of the closed-form design at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n_t: usize,
    pub n_r: usize,
    pub m: usize,
    pub trials: usize,
    /// Mean `|a_t(TR,0)ᴴ a_t(TI,0)|` of the dominant direct and TX–IRS paths.
    pub mean_cross_inner_product: f64,
    /// Median of `‖H_IR Φ a_r(TI,0)‖² / λ_max(H_IRᴴ H_IR)`; tends to 1.
    pub median_reflection_ratio: f64,
    /// Median relative distance between `λ_max(H_tot H_totᴴ)` and the
    /// largest of `|α_TI,0 α_IR,0|²` and `|α_TR,s|²`.
    pub median_eigenvalue_error: f64,
    /// Median `‖F_RFᴴ F_RF − I‖_F` of the selected analog precoder.
    pub median_orthogonality_residual: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Per-trial RNG: stream `index` of a ChaCha generator keyed by `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct ProbeSample {
    cross: f64,
    ratio: f64,
    eig_error: f64,
    residual: f64,
}

fn probe_trial(
    size: ProbeSize,
    settings: &ProbeSettings,
    rng: &mut ChaCha8Rng,
) -> Result<ProbeSample> {
    let arrays = Arrays {
        tx: UpaGeometry::near_square(size.n_t)?,
        rx: UpaGeometry::near_square(size.n_r)?,
        irs: UpaGeometry::near_square(size.m)?,
    };
    let counts = PathCounts {
        direct: settings.n_path,
        tx_irs: settings.n_path,
        irs_rx: settings.n_path,
    };
    let distances = settings.geometry.sample(rng);
    let t = ChannelTriple::sample(
        rng,
        arrays,
        counts,
        &distances,
        settings.angle_range,
        settings.shadowing,
    )?;
    let tr0 = *t.tr_paths.dominant().expect("paths are non-empty");
    let ti0 = *t.ti_paths.dominant().expect("paths are non-empty");
    let ir0 = *t.ir_paths.dominant().expect("paths are non-empty");

    let cross = upa_response(&arrays.tx, tr0.aod_azimuth, tr0.aod_elevation)
        .dotc(&upa_response(
            &arrays.tx,
            ti0.aod_azimuth,
            ti0.aod_elevation,
        ))
        .norm();

    let v = design_reflection_proposed(&t.ti_paths, &t.ir_paths, &arrays.irs, 0)?;
    let incoming = upa_response(&arrays.irs, ti0.aoa_azimuth, ti0.aoa_elevation);
    let lambda_ir = gram_max_eigenvalue(&t.h_ir)?;
    let ratio = reflected_gain(&t.h_ir, &v, &incoming) / lambda_ir;

    let h = compose_total(&t.h_tr, &t.h_ti, &t.h_ir, Some(&v))?;
    let lambda_tot = gram_max_eigenvalue(&h)?;
    let target = t
        .tr_paths
        .paths()
        .iter()
        .map(|p| p.gain.norm_sqr())
        .fold(ti0.gain.norm_sqr() * ir0.gain.norm_sqr(), f64::max);
    let eig_error = (lambda_tot - target).abs() / target;

    let a_t = t.tx_candidates();
    let a_r = t.rx_candidates();
    let n_rf = settings.n_rf.min(a_t.ncols()).min(a_r.ncols());
    let sel = analog_select_narrowband(&h, &a_t, &a_r, n_rf, n_rf)?;
    let residual = (sel.f_rf.adjoint() * &sel.f_rf - identity(n_rf)).norm();

    Ok(ProbeSample {
        cross,
        ratio,
        eig_error,
        residual,
    })
}

/// Convergence statistics of the closed-form design as the arrays grow.
///
/// Trial `i` of every row uses stream `i` of a generator keyed by one value
/// drawn from `rng`, so rows are reproducible and independent of scheduling.
pub fn asymptotics_probe<R: Rng + ?Sized>(
    sizes: &[ProbeSize],
    trials: usize,
    settings: &ProbeSettings,
    rng: &mut R,
) -> Result<Vec<ProbeRow>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let seed: u64 = rng.random();
    sizes
        .iter()
        .map(|&size| {
            let samples = (0..trials)
                .into_par_iter()
                .map(|i| probe_trial(size, settings, &mut trial_rng(seed, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProbeRow {
                n_t: size.n_t,
                n_r: size.n_r,
                m: size.m,
                trials,
                mean_cross_inner_product: samples.iter().map(|s| s.cross).sum::<f64>()
                    / trials as f64,
                median_reflection_ratio: median(samples.iter().map(|s| s.ratio).collect()),
                median_eigenvalue_error: median(samples.iter().map(|s| s.eig_error).collect()),
                median_orthogonality_residual: median(samples.iter().map(|s| s.residual).collect()),
            })
        })
        .collect()
}

/// Sample mean of `|α_TI,0|² |α_IR,0|²` against the lower bound `M² c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeGain {
    pub m: usize,
    pub draws: usize,
    pub sample_mean: f64,
    /// `M² c` with `c = N_t N_r 10^{−(PL(d_TI) + PL(d_IR))/10} / (N_TI N_IR)`
    /// and line-of-sight path loss without shadowing.
    pub lower_bound: f64,
}

/// Draws the two IRS channels at fixed distances without shadowing and
/// averages the product of their dominant path powers.
pub fn cascade_gain<R: Rng + ?Sized>(
    arrays: &Arrays,
    n_path: usize,
    distances: &LinkGeometry,
    draws: usize,
    rng: &mut R,
) -> Result<CascadeGain> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let (n_t, n_r, m) = (arrays.tx.count(), arrays.rx.count(), arrays.irs.count());
    let draw = |kind, rows, cols, distance_m| PathDraw {
        kind,
        rows,
        cols,
        distance_m,
        angle_range: 1.0,
        shadowing: false,
    };
    let ti = draw(ChannelKind::TxToIrs, m, n_t, distances.d_ti);
    let ir = draw(ChannelKind::IrsToRx, n_r, m, distances.d_ir);
    let mut total = 0.0;
    for _ in 0..draws {
        let a = sample_paths(rng, n_path, &ti)?;
        let b = sample_paths(rng, n_path, &ir)?;
        let g = a.dominant().map_or(0.0, |p| p.gain.norm_sqr())
            * b.dominant().map_or(0.0, |p| p.gain.norm_sqr());
        total += g;
    }
    let loss = path_loss_db(distances.d_ti, true, 0.0, 0.0)?
        + path_loss_db(distances.d_ir, true, 0.0, 0.0)?;
    let c = (n_t * n_r) as f64 * 10f64.powf(-0.1 * loss) / (n_path * n_path) as f64;
    Ok(CascadeGain {
        m,
        draws,
        sample_mean: total / draws as f64,
        lower_bound: (m * m) as f64 * c,
    })
}
