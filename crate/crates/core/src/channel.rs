//! Link geometry, propagation paths and clustered mmWave channel matrices.
//!
//! Every channel is a finite sum of rank-one path contributions
//! `α · a_r(φʳ, θʳ) · a_t(φᵗ, θᵗ)ᴴ` where `a_r`, `a_t` are uniform planar array
//! responses. Path gains are complex normal with a variance set by the array
//! dimensions and a distance-dependent path loss.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{c64, cis, ComplexMatrix, ComplexVector};

/// Uniform planar array of `horizontal × vertical` elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    pub horizontal: usize,
    pub vertical: usize,
    /// Element spacing as a fraction of the wavelength.
    pub spacing: f64,
}

impl UpaGeometry {
    pub const HALF_WAVELENGTH: f64 = 0.5;

    pub fn new(horizontal: usize, vertical: usize, spacing: f64) -> Result<Self> {
        if horizontal == 0 || vertical == 0 {
            return Err(Error::InvalidArgument(format!(
                "array must have at least one element, got {horizontal}x{vertical}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            horizontal,
            vertical,
            spacing,
        })
    }

    /// Half-wavelength array of `n` elements in the most square layout
    /// available (`n = 8` becomes 2×4, `n = 64` becomes 8×8).
    pub fn near_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "array must have at least one element".into(),
            ));
        }
        let mut h = (n as f64).sqrt().floor() as usize;
        while h > 1 && !n.is_multiple_of(h) {
            h -= 1;
        }
        Self::new(h.max(1), n / h.max(1), Self::HALF_WAVELENGTH)
    }

    pub fn count(&self) -> usize {
        self.horizontal * self.vertical
    }
}

/// Normalized UPA response. Element `(i_h, i_v)` sits at index
/// `i_h · N_v + i_v` (vertical index fastest).
pub fn upa_response(geom: &UpaGeometry, azimuth: f64, elevation: f64) -> ComplexVector {
    let n = geom.count();
    let norm = 1.0 / (n as f64).sqrt();
    let k = 2.0 * PI * geom.spacing;
    let u = azimuth.sin() * elevation.sin();
    let w = elevation.cos();
    ComplexVector::from_fn(n, |idx, _| {
        let ih = (idx / geom.vertical) as f64;
        let iv = (idx % geom.vertical) as f64;
        cis(k * (ih * u + iv * w)) * norm
    })
}

/// One propagation path. Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: c64,
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    pub los: bool,
}

/// Paths of one channel, ordered so that `|gain|` never increases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    /// Sorts by descending gain magnitude. The sort is stable, so equal
    /// magnitudes keep their draw order.
    pub fn sorted(mut paths: Vec<Path>) -> Self {
        paths.sort_by(|a, b| {
            b.gain
                .norm()
                .partial_cmp(&a.gain.norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self { paths }
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// The strongest path.
    pub fn dominant(&self) -> Option<&Path> {
        self.paths.first()
    }

    pub fn get(&self, index: usize) -> Option<&Path> {
        self.paths.get(index)
    }
}

/// Which of the three links a channel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    /// Direct TX → RX link.
    Direct,
    /// TX → IRS.
    TxToIrs,
    /// IRS → RX.
    IrsToRx,
}

/// Log-distance path loss with log-normal shadowing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    pub alpha: f64,
    pub beta: f64,
    pub shadowing_sigma_db: f64,
}

pub const LOS_PATH_LOSS: PathLossParams = PathLossParams {
    alpha: 61.4,
    beta: 2.0,
    shadowing_sigma_db: 5.8,
};

pub const NLOS_PATH_LOSS: PathLossParams = PathLossParams {
    alpha: 72.0,
    beta: 2.92,
    shadowing_sigma_db: 8.7,
};

/// Extra loss through tinted glass on every direct-link path.
pub const DIRECT_PENETRATION_DB: f64 = 40.1;

pub fn path_loss_db(
    distance_m: f64,
    los: bool,
    shadowing_db: f64,
    penetration_db: f64,
) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    let p = if los { LOS_PATH_LOSS } else { NLOS_PATH_LOSS };
    Ok(p.alpha + 10.0 * p.beta * distance_m.log10() + shadowing_db + penetration_db)
}

/// Everything needed to draw the paths of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDraw {
    pub kind: ChannelKind,
    pub rows: usize,
    pub cols: usize,
    pub distance_m: f64,
    /// Angle range ν ∈ [0, 1]: azimuths on [0, 2νπ), elevations on [0, νπ).
    pub angle_range: f64,
    pub shadowing: bool,
}

impl PathDraw {
    /// Whether path `q` (in draw order) is a line-of-sight path. Only the
    /// first path of the IRS links is.
    pub fn is_los(&self, q: usize) -> bool {
        q == 0 && self.kind != ChannelKind::Direct
    }

    pub fn penetration_db(&self) -> f64 {
        match self.kind {
            ChannelKind::Direct => DIRECT_PENETRATION_DB,
            _ => 0.0,
        }
    }

    /// Variance of the complex gain of a path with the given shadowing.
    pub fn gain_variance(&self, n_path: usize, los: bool, shadowing_db: f64) -> Result<f64> {
        let gamma_sq = (self.rows * self.cols) as f64 / n_path as f64;
        let pl = path_loss_db(self.distance_m, los, shadowing_db, self.penetration_db())?;
        Ok(gamma_sq * 10f64.powf(-0.1 * pl))
    }
}

/// Draws `n_path` paths and sorts them by gain magnitude.
///
/// Draw order: LOS shadowing, NLOS shadowing (both only when shadowing is
/// enabled), then per path the real and imaginary gain parts followed by
/// AoA azimuth, AoA elevation, AoD azimuth, AoD elevation.
pub fn sample_paths<R: Rng + ?Sized>(
    rng: &mut R,
    n_path: usize,
    draw: &PathDraw,
) -> Result<PathSet> {
    if n_path == 0 {
        return Err(Error::InvalidArgument(
            "a channel needs at least one path".into(),
        ));
    }
    let (xi_los, xi_nlos) = if draw.shadowing {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        (
            z1 * LOS_PATH_LOSS.shadowing_sigma_db,
            z2 * NLOS_PATH_LOSS.shadowing_sigma_db,
        )
    } else {
        (0.0, 0.0)
    };
    let nu = draw.angle_range;
    let mut paths = Vec::with_capacity(n_path);
    for q in 0..n_path {
        let los = draw.is_los(q);
        let xi = if los { xi_los } else { xi_nlos };
        let std = (draw.gain_variance(n_path, los, xi)? / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let aoa_azimuth = rng.random::<f64>() * 2.0 * nu * PI;
        let aoa_elevation = rng.random::<f64>() * nu * PI;
        let aod_azimuth = rng.random::<f64>() * 2.0 * nu * PI;
        let aod_elevation = rng.random::<f64>() * nu * PI;
        paths.push(Path {
            gain: c64::new(re * std, im * std),
            aoa_azimuth,
            aoa_elevation,
            aod_azimuth,
            aod_elevation,
            los,
        });
    }
    Ok(PathSet::sorted(paths))
}

/// `[a(ω_0) … a(ω_{N-1})]` for the receive (`aoa = true`) or transmit side.
pub fn response_matrix(paths: &PathSet, geom: &UpaGeometry, aoa: bool) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(geom.count(), paths.len());
    for (q, p) in paths.paths().iter().enumerate() {
        let v = if aoa {
            upa_response(geom, p.aoa_azimuth, p.aoa_elevation)
        } else {
            upa_response(geom, p.aod_azimuth, p.aod_elevation)
        };
        a.set_column(q, &v);
    }
    a
}

fn synthesize_with_gains(
    paths: &PathSet,
    rx_geom: &UpaGeometry,
    tx_geom: &UpaGeometry,
    gains: impl Iterator<Item = c64>,
) -> ComplexMatrix {
    let mut a_r = response_matrix(paths, rx_geom, true);
    let a_t = response_matrix(paths, tx_geom, false);
    for (q, g) in gains.enumerate() {
        a_r.column_mut(q).iter_mut().for_each(|z| *z *= g);
    }
    a_r * a_t.adjoint()
}

/// `H = A_r · diag(α) · A_tᴴ`.
pub fn synthesize_narrowband(
    paths: &PathSet,
    rx_geom: &UpaGeometry,
    tx_geom: &UpaGeometry,
) -> ComplexMatrix {
    synthesize_with_gains(
        paths,
        rx_geom,
        tx_geom,
        paths.paths().iter().map(|p| p.gain),
    )
}

/// Per-subcarrier channels; path `q` carries the delay phase `e^{-j2πqk/K}`.
pub fn synthesize_ofdm(
    paths: &PathSet,
    rx_geom: &UpaGeometry,
    tx_geom: &UpaGeometry,
    subcarriers: usize,
) -> Result<Vec<ComplexMatrix>> {
    if subcarriers == 0 {
        return Err(Error::InvalidArgument(
            "need at least one subcarrier".into(),
        ));
    }
    let a_r = response_matrix(paths, rx_geom, true);
    let a_t_h = response_matrix(paths, tx_geom, false).adjoint();
    let k_total = subcarriers;
    Ok((0..k_total)
        .map(|k| {
            let mut scaled = a_r.clone();
            for (q, p) in paths.paths().iter().enumerate() {
                // Integer multiples of 2π are applied exactly.
                let g = if (q * k) % k_total == 0 {
                    p.gain
                } else {
                    p.gain * cis(-2.0 * PI * ((q * k) % k_total) as f64 / k_total as f64)
                };
                scaled.column_mut(q).iter_mut().for_each(|z| *z *= g);
            }
            scaled * &a_t_h
        })
        .collect())
}

/// TX–RX, TX–IRS and IRS–RX distances in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub d_tr: f64,
    pub d_ti: f64,
    pub d_ir: f64,
}

/// Draws `d_TI ~ U[ti]`, `d_IR ~ U[ir]`, then
/// `d_TR ~ U[d_TI + d_IR − offset, d_TI + d_IR)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySampler {
    pub d_ti_min_m: f64,
    pub d_ti_max_m: f64,
    pub d_ir_min_m: f64,
    pub d_ir_max_m: f64,
    pub d_tr_offset_m: f64,
}

impl Default for GeometrySampler {
    fn default() -> Self {
        Self {
            d_ti_min_m: 50.0,
            d_ti_max_m: 60.0,
            d_ir_min_m: 10.0,
            d_ir_max_m: 20.0,
            d_tr_offset_m: 10.0,
        }
    }
}

impl GeometrySampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LinkGeometry {
        let d_ti = self.d_ti_min_m + rng.random::<f64>() * (self.d_ti_max_m - self.d_ti_min_m);
        let d_ir = self.d_ir_min_m + rng.random::<f64>() * (self.d_ir_max_m - self.d_ir_min_m);
        let d_tr = d_ti + d_ir - self.d_tr_offset_m * (1.0 - rng.random::<f64>());
        LinkGeometry { d_tr, d_ti, d_ir }
    }
}

/// Array layout of the three nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrays {
    pub tx: UpaGeometry,
    pub rx: UpaGeometry,
    pub irs: UpaGeometry,
}

/// Path counts of the three channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCounts {
    pub direct: usize,
    pub tx_irs: usize,
    pub irs_rx: usize,
}

/// Narrowband direct, TX–IRS and IRS–RX channels with their paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTriple {
    pub arrays: Arrays,
    pub tr_paths: PathSet,
    pub ti_paths: PathSet,
    pub ir_paths: PathSet,
    /// `N_r × N_t`
    pub h_tr: ComplexMatrix,
    /// `M × N_t`
    pub h_ti: ComplexMatrix,
    /// `N_r × M`
    pub h_ir: ComplexMatrix,
}

impl ChannelTriple {
    pub fn from_paths(
        arrays: Arrays,
        tr_paths: PathSet,
        ti_paths: PathSet,
        ir_paths: PathSet,
    ) -> Self {
        let h_tr = synthesize_narrowband(&tr_paths, &arrays.rx, &arrays.tx);
        let h_ti = synthesize_narrowband(&ti_paths, &arrays.irs, &arrays.tx);
        let h_ir = synthesize_narrowband(&ir_paths, &arrays.rx, &arrays.irs);
        Self {
            arrays,
            tr_paths,
            ti_paths,
            ir_paths,
            h_tr,
            h_ti,
            h_ir,
        }
    }

    /// Draws the direct, TX–IRS and IRS–RX paths (in that order).
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        arrays: Arrays,
        counts: PathCounts,
        distances: &LinkGeometry,
        angle_range: f64,
        shadowing: bool,
    ) -> Result<Self> {
        let n_t = arrays.tx.count();
        let n_r = arrays.rx.count();
        let m = arrays.irs.count();
        let draw = |kind, rows, cols, distance_m| PathDraw {
            kind,
            rows,
            cols,
            distance_m,
            angle_range,
            shadowing,
        };
        let tr = sample_paths(
            rng,
            counts.direct,
            &draw(ChannelKind::Direct, n_r, n_t, distances.d_tr),
        )?;
        let ti = sample_paths(
            rng,
            counts.tx_irs,
            &draw(ChannelKind::TxToIrs, m, n_t, distances.d_ti),
        )?;
        let ir = sample_paths(
            rng,
            counts.irs_rx,
            &draw(ChannelKind::IrsToRx, n_r, m, distances.d_ir),
        )?;
        Ok(Self::from_paths(arrays, tr, ti, ir))
    }

    /// Transmit candidate pool `[A_t^TR | A_t^TI]`.
    pub fn tx_candidates(&self) -> ComplexMatrix {
        hstack(
            &response_matrix(&self.tr_paths, &self.arrays.tx, false),
            &response_matrix(&self.ti_paths, &self.arrays.tx, false),
        )
    }

    /// Receive candidate pool `[A_r^TR | A_r^IR]`.
    pub fn rx_candidates(&self) -> ComplexMatrix {
        hstack(
            &response_matrix(&self.tr_paths, &self.arrays.rx, true),
            &response_matrix(&self.ir_paths, &self.arrays.rx, true),
        )
    }

    pub fn to_ofdm(&self, subcarriers: usize) -> Result<OfdmChannelTriple> {
        OfdmChannelTriple::from_paths(
            self.arrays,
            self.tr_paths.clone(),
            self.ti_paths.clone(),
            self.ir_paths.clone(),
            subcarriers,
        )
    }
}

/// Frequency-selective version of [`ChannelTriple`].
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmChannelTriple {
    pub arrays: Arrays,
    pub tr_paths: PathSet,
    pub ti_paths: PathSet,
    pub ir_paths: PathSet,
    pub h_tr: Vec<ComplexMatrix>,
    pub h_ti: Vec<ComplexMatrix>,
    pub h_ir: Vec<ComplexMatrix>,
}

impl OfdmChannelTriple {
    pub fn from_paths(
        arrays: Arrays,
        tr_paths: PathSet,
        ti_paths: PathSet,
        ir_paths: PathSet,
        subcarriers: usize,
    ) -> Result<Self> {
        let h_tr = synthesize_ofdm(&tr_paths, &arrays.rx, &arrays.tx, subcarriers)?;
        let h_ti = synthesize_ofdm(&ti_paths, &arrays.irs, &arrays.tx, subcarriers)?;
        let h_ir = synthesize_ofdm(&ir_paths, &arrays.rx, &arrays.irs, subcarriers)?;
        Ok(Self {
            arrays,
            tr_paths,
            ti_paths,
            ir_paths,
            h_tr,
            h_ti,
            h_ir,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.h_tr.len()
    }

    /// Narrowband view sharing the same paths.
    pub fn narrowband(&self) -> ChannelTriple {
        ChannelTriple::from_paths(
            self.arrays,
            self.tr_paths.clone(),
            self.ti_paths.clone(),
            self.ir_paths.clone(),
        )
    }
}

pub(crate) fn hstack(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = ComplexMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Perturbs every path: gain `(1 + δ)α`, each angle `+ δ` degrees, with an
/// independent `δ ~ U[−ρ, ρ]` per quantity. `ρ = 0` returns the paths
/// untouched without drawing.
pub fn perturb_paths<R: Rng + ?Sized>(paths: &PathSet, rng: &mut R, rho: f64) -> PathSet {
    if rho == 0.0 {
        return paths.clone();
    }
    let mut delta = || (2.0 * rng.random::<f64>() - 1.0) * rho;
    let perturbed = paths
        .paths()
        .iter()
        .map(|p| {
            let g = 1.0 + delta();
            Path {
                gain: p.gain * g,
                aoa_azimuth: p.aoa_azimuth + delta().to_radians(),
                aoa_elevation: p.aoa_elevation + delta().to_radians(),
                aod_azimuth: p.aod_azimuth + delta().to_radians(),
                aod_elevation: p.aod_elevation + delta().to_radians(),
                los: p.los,
            }
        })
        .collect();
    // Keep the original path order: index q is the same physical path.
    PathSet { paths: perturbed }
}

/// Estimated channels under the parametric error model, re-synthesized from
/// the perturbed paths of all three links (direct, TX–IRS, IRS–RX order).
pub fn apply_estimation_error<R: Rng + ?Sized>(
    triple: &ChannelTriple,
    rng: &mut R,
    rho: f64,
) -> Result<ChannelTriple> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "estimation error half-width must be non-negative, got {rho}"
        )));
    }
    if rho == 0.0 {
        return Ok(triple.clone());
    }
    let tr = perturb_paths(&triple.tr_paths, rng, rho);
    let ti = perturb_paths(&triple.ti_paths, rng, rho);
    let ir = perturb_paths(&triple.ir_paths, rng, rho);
    Ok(ChannelTriple::from_paths(triple.arrays, tr, ti, ir))
}
