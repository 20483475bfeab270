//! Monte Carlo driver: one trial draws a channel realization and runs every
//! design on it.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Sweep, SweepParam, SystemConfig};
use crate::beamformer::{
    design_hybrid, design_hybrid_ofdm, fully_digital_design, HybridBeamformer,
};
use crate::channel::{
    apply_estimation_error, response_matrix, upa_response, ChannelTriple, UpaGeometry,
};
use crate::error::{Error, Result};
use crate::irs::{
    compose_total, compose_total_ofdm, design_reflection_proposed, design_reflection_random,
    ReflectionVector,
};
use crate::metrics::{
    spectral_efficiency, spectral_efficiency_linear, spectral_efficiency_ofdm, LinkBudget,
};
use crate::numerics::{ComplexMatrix, ComplexVector};
use crate::oracle::{reflection_bound_certificate, trial_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Proposed,
    RandomIrs,
    NoIrs,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::Proposed, Design::RandomIrs, Design::NoIrs];

    pub fn name(self) -> &'static str {
        match self {
            Design::Proposed => "proposed",
            Design::RandomIrs => "random_irs",
            Design::NoIrs => "no_irs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Hybrid,
    FullyDigital,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Hybrid, Architecture::FullyDigital];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Hybrid => "hybrid",
            Architecture::FullyDigital => "fully_digital",
        }
    }
}

/// Achieved rates of one trial, `None` for degenerate designs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Indexed `[design][architecture]` in the order of `Design::ALL` and
    /// `Architecture::ALL`.
    pub rates: [[Option<f64>; 2]; 3],
    pub violations: Vec<String>,
    /// Whether random candidates had to be added to reach the RF-chain count.
    pub padded: bool,
}

impl TrialRecord {
    pub fn rate(&self, design: Design, arch: Architecture) -> Option<f64> {
        self.rates[design as usize][arch as usize]
    }
}

/// Channel realization and the side information every design needs.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub truth: ChannelTriple,
    /// What the transmitter believes; equal to `truth` when ρ = 0.
    pub estimate: ChannelTriple,
    pub random_reflection: ReflectionVector,
    pub tx_candidates: ComplexMatrix,
    pub rx_candidates: ComplexMatrix,
    /// Candidate pools of the direct link alone, used without an IRS.
    pub direct_tx_candidates: ComplexMatrix,
    pub direct_rx_candidates: ComplexMatrix,
    pub padded: bool,
}

/// Appends random-direction responses until `a` has `needed` columns.
fn pad_candidates<R: Rng + ?Sized>(
    a: ComplexMatrix,
    geom: &UpaGeometry,
    needed: usize,
    angle_range: f64,
    rng: &mut R,
) -> (ComplexMatrix, bool) {
    if a.ncols() >= needed {
        return (a, false);
    }
    let old = a.ncols();
    let mut out = a.resize_horizontally(needed, Default::default());
    for c in old..needed {
        let az = rng.random::<f64>() * 2.0 * angle_range * PI;
        let el = rng.random::<f64>() * angle_range * PI;
        out.set_column(c, &upa_response(geom, az, el));
    }
    (out, true)
}

/// Draws one realization. Draw order: geometry (unless fixed), direct,
/// TX–IRS and IRS–RX paths, the random reflection, estimation errors, then
/// any padding candidates.
pub fn draw_trial<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<TrialInputs> {
    let arrays = cfg.arrays()?;
    let distances = match cfg.fixed_geometry() {
        Some(d) => d,
        None => cfg.geometry.sample(rng),
    };
    let truth = ChannelTriple::sample(
        rng,
        arrays,
        cfg.path_counts(),
        &distances,
        cfg.angle_range,
        cfg.shadowing,
    )?;
    let random_reflection = design_reflection_random(rng, arrays.irs.count())?;
    let estimate = apply_estimation_error(&truth, rng, cfg.estimation_error_rho)?;

    let nu = cfg.angle_range;
    let (tx, p1) = pad_candidates(
        estimate.tx_candidates(),
        &arrays.tx,
        cfg.tx_rf_chains,
        nu,
        rng,
    );
    let (rx, p2) = pad_candidates(
        estimate.rx_candidates(),
        &arrays.rx,
        cfg.rx_rf_chains,
        nu,
        rng,
    );
    let (dtx, p3) = pad_candidates(
        response_matrix(&estimate.tr_paths, &arrays.tx, false),
        &arrays.tx,
        cfg.tx_rf_chains,
        nu,
        rng,
    );
    let (drx, p4) = pad_candidates(
        response_matrix(&estimate.tr_paths, &arrays.rx, true),
        &arrays.rx,
        cfg.rx_rf_chains,
        nu,
        rng,
    );
    Ok(TrialInputs {
        truth,
        estimate,
        random_reflection,
        tx_candidates: tx,
        rx_candidates: rx,
        direct_tx_candidates: dtx,
        direct_rx_candidates: drx,
        padded: p1 || p2 || p3 || p4,
    })
}

/// Closed-form reflection followed by the narrowband hybrid design, both
/// computed from the estimated channel.
pub fn proposed_design(
    inputs: &TrialInputs,
    cfg: &SystemConfig,
    link: &LinkBudget,
) -> Result<(ReflectionVector, HybridBeamformer)> {
    let est = &inputs.estimate;
    let v = design_reflection_proposed(&est.ti_paths, &est.ir_paths, &est.arrays.irs, 0)?;
    let h = compose_total(&est.h_tr, &est.h_ti, &est.h_ir, Some(&v))?;
    let hb = design_hybrid(
        &h,
        &inputs.tx_candidates,
        &inputs.rx_candidates,
        cfg.tx_rf_chains,
        cfg.rx_rf_chains,
        cfg.streams,
        link.noise_power,
        link.total_power,
    )?;
    Ok((v, hb))
}

/// Maps degenerate-trial errors to `None`.
fn degenerate_as_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(e) if e.is_degenerate() => Ok(None),
        Err(e) => Err(e),
    }
}

struct Battery<'a> {
    cfg: &'a SystemConfig,
    violations: Vec<String>,
}

impl Battery<'_> {
    fn analog_modulus(&mut self, label: &str, hb: &HybridBeamformer) {
        for (name, m) in [("F_RF", &hb.f_rf), ("W_RF", &hb.w_rf)] {
            let target = 1.0 / (m.nrows() as f64).sqrt();
            if let Some(z) = m.iter().find(|z| (z.norm() - target).abs() > 1e-12) {
                self.violations.push(format!(
                    "{label}: {name} entry modulus {} != {target}",
                    z.norm()
                ));
            }
        }
    }

    fn power(&mut self, label: &str, hb: &HybridBeamformer, per_subcarrier: f64) {
        for (k, f_bb) in hb.f_bb.iter().enumerate() {
            let p = (&hb.f_rf * f_bb).norm_squared();
            if (p - per_subcarrier).abs() > 1e-9 * per_subcarrier {
                self.violations.push(format!(
                    "{label}: transmit power {p} != {per_subcarrier} on subcarrier {k}"
                ));
            }
        }
    }

    fn reflection_bound(
        &mut self,
        label: &str,
        h_ir: &ComplexMatrix,
        v: &ReflectionVector,
        incoming: &ComplexVector,
    ) {
        match reflection_bound_certificate(h_ir, v, incoming) {
            Ok(r) if r.pass => {}
            Ok(r) => self.violations.push(format!(
                "{label}: reflected gain {} exceeds {}",
                r.proposed_value, r.brute_force_value
            )),
            Err(e) => self
                .violations
                .push(format!("{label}: certificate failed: {e}")),
        }
    }

    fn digital_dominates(&mut self, label: &str, hybrid: Option<f64>, digital: Option<f64>) {
        if self.cfg.estimation_error_rho != 0.0 {
            return;
        }
        if let (Some(h), Some(d)) = (hybrid, digital) {
            if h > d + 1e-9 * d.max(1.0) {
                self.violations.push(format!(
                    "{label}: hybrid rate {h} exceeds fully-digital {d}"
                ));
            }
        }
    }
}

/// Channel seen by a design: estimated (for the design) and true (for the
/// rate).
struct DesignChannels<'a> {
    design: Design,
    reflection: Option<&'a ReflectionVector>,
    a_t: &'a ComplexMatrix,
    a_r: &'a ComplexMatrix,
}

fn design_channels<'a>(
    inputs: &'a TrialInputs,
    proposed: &'a ReflectionVector,
) -> [DesignChannels<'a>; 3] {
    [
        DesignChannels {
            design: Design::Proposed,
            reflection: Some(proposed),
            a_t: &inputs.tx_candidates,
            a_r: &inputs.rx_candidates,
        },
        DesignChannels {
            design: Design::RandomIrs,
            reflection: Some(&inputs.random_reflection),
            a_t: &inputs.tx_candidates,
            a_r: &inputs.rx_candidates,
        },
        DesignChannels {
            design: Design::NoIrs,
            reflection: None,
            a_t: &inputs.direct_tx_candidates,
            a_r: &inputs.direct_rx_candidates,
        },
    ]
}

fn incoming_direction(est: &ChannelTriple) -> ComplexVector {
    let p = est
        .ti_paths
        .dominant()
        .expect("channels always have a path");
    upa_response(&est.arrays.irs, p.aoa_azimuth, p.aoa_elevation)
}

/// Narrowband trial.
pub fn trial_narrowband<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<TrialRecord> {
    let link = cfg.link()?;
    let inputs = draw_trial(cfg, rng)?;
    let (truth, est) = (&inputs.truth, &inputs.estimate);
    let proposed = design_reflection_proposed(&est.ti_paths, &est.ir_paths, &est.arrays.irs, 0)?;
    let mut battery = Battery {
        cfg,
        violations: Vec::new(),
    };
    let incoming = incoming_direction(est);
    battery.reflection_bound("proposed", &truth.h_ir, &proposed, &incoming);
    battery.reflection_bound(
        "random_irs",
        &truth.h_ir,
        &inputs.random_reflection,
        &incoming,
    );

    let mut rates = [[None; 2]; 3];
    for d in design_channels(&inputs, &proposed) {
        let label = d.design.name();
        let h_est = compose_total(&est.h_tr, &est.h_ti, &est.h_ir, d.reflection)?;
        let h_true = compose_total(&truth.h_tr, &truth.h_ti, &truth.h_ir, d.reflection)?;

        let hybrid = degenerate_as_none(design_hybrid(
            &h_est,
            d.a_t,
            d.a_r,
            cfg.tx_rf_chains,
            cfg.rx_rf_chains,
            cfg.streams,
            link.noise_power,
            link.total_power,
        ))?;
        let hybrid_rate = match &hybrid {
            Some(hb) => {
                battery.analog_modulus(label, hb);
                battery.power(label, hb, link.total_power);
                degenerate_as_none(spectral_efficiency(
                    &h_true,
                    &hb.f_rf,
                    &hb.f_bb[0],
                    &hb.w_rf,
                    &hb.w_bb[0],
                    link.noise_power,
                ))?
            }
            None => None,
        };
        let digital_rate = match degenerate_as_none(fully_digital_design(
            &h_est,
            link.noise_power,
            link.total_power,
            cfg.streams,
        ))? {
            Some(fd) => degenerate_as_none(spectral_efficiency_linear(
                &h_true,
                &fd.precoder,
                &fd.combiner,
                link.noise_power,
            ))?,
            None => None,
        };
        battery.digital_dominates(label, hybrid_rate, digital_rate);
        rates[d.design as usize] = [hybrid_rate, digital_rate];
    }
    Ok(TrialRecord {
        rates,
        violations: battery.violations,
        padded: inputs.padded,
    })
}

/// OFDM trial with the transmit power split equally over the subcarriers.
/// Rates are summed over subcarriers; a trial is degenerate for a design if
/// any of its subcarriers is.
pub fn trial_ofdm<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<TrialRecord> {
    let k = cfg.subcarriers;
    let link = cfg.link()?.per_subcarrier(k);
    let inputs = draw_trial(cfg, rng)?;
    let (truth, est) = (inputs.truth.to_ofdm(k)?, inputs.estimate.to_ofdm(k)?);
    let proposed = design_reflection_proposed(&est.ti_paths, &est.ir_paths, &est.arrays.irs, 0)?;
    let mut battery = Battery {
        cfg,
        violations: Vec::new(),
    };
    let incoming = incoming_direction(&inputs.estimate);
    for (kk, h_ir) in truth.h_ir.iter().enumerate() {
        battery.reflection_bound(&format!("proposed k={kk}"), h_ir, &proposed, &incoming);
    }

    let mut rates = [[None; 2]; 3];
    for d in design_channels(&inputs, &proposed) {
        let label = d.design.name();
        let h_est = compose_total_ofdm(&est, d.reflection)?;
        let h_true = compose_total_ofdm(&truth, d.reflection)?;

        let hybrid = degenerate_as_none(design_hybrid_ofdm(
            &h_est,
            d.a_t,
            d.a_r,
            cfg.tx_rf_chains,
            cfg.rx_rf_chains,
            cfg.streams,
            link.noise_power,
            link.total_power,
        ))?;
        let hybrid_rate = match &hybrid {
            Some(hb) => {
                battery.analog_modulus(label, hb);
                battery.power(label, hb, link.total_power);
                spectral_efficiency_ofdm(
                    &h_true,
                    &hb.f_rf,
                    &hb.f_bb,
                    &hb.w_rf,
                    &hb.w_bb,
                    link.noise_power,
                )?
                .total()
            }
            None => None,
        };
        let mut digital_rate = Some(0.0);
        for (he, ht) in h_est.iter().zip(&h_true) {
            let r = match degenerate_as_none(fully_digital_design(
                he,
                link.noise_power,
                link.total_power,
                cfg.streams,
            ))? {
                Some(fd) => degenerate_as_none(spectral_efficiency_linear(
                    ht,
                    &fd.precoder,
                    &fd.combiner,
                    link.noise_power,
                ))?,
                None => None,
            };
            digital_rate = digital_rate.zip(r).map(|(a, b)| a + b);
        }
        battery.digital_dominates(label, hybrid_rate, digital_rate);
        rates[d.design as usize] = [hybrid_rate, digital_rate];
    }
    Ok(TrialRecord {
        rates,
        violations: battery.violations,
        padded: inputs.padded,
    })
}

/// Narrowband when the config has one subcarrier, OFDM otherwise.
pub fn run_trial<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<TrialRecord> {
    if cfg.subcarriers == 1 {
        trial_narrowband(cfg, rng)
    } else {
        trial_ofdm(cfg, rng)
    }
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultCell {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub design: String,
    pub architecture: String,
    pub mean_se_bps_hz: f64,
    pub stderr: f64,
    pub n_trials: usize,
    pub n_degenerate: usize,
}

/// Per-trial rates at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSamples {
    pub sweep_value: f64,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub sweep_param: SweepParam,
    pub cells: Vec<ResultCell>,
    pub points: Vec<PointSamples>,
    pub invariant_violations: Vec<String>,
    /// Trials in which random candidates were added.
    pub padded_trials: usize,
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn cell(
        &self,
        sweep_value: f64,
        design: Design,
        arch: Architecture,
    ) -> Option<&ResultCell> {
        self.cells.iter().find(|c| {
            c.sweep_value == sweep_value
                && c.design == design.name()
                && c.architecture == arch.name()
        })
    }

    /// Rates of every trial at a sweep point, in trial order.
    pub fn samples(
        &self,
        sweep_value: f64,
        design: Design,
        arch: Architecture,
    ) -> Option<Vec<Option<f64>>> {
        self.points
            .iter()
            .find(|p| p.sweep_value == sweep_value)
            .map(|p| p.trials.iter().map(|t| t.rate(design, arch)).collect())
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn aggregate(param: SweepParam, point: &PointSamples) -> Vec<ResultCell> {
    let mut cells = Vec::with_capacity(6);
    for design in Design::ALL {
        for arch in Architecture::ALL {
            let rates: Vec<f64> = point
                .trials
                .iter()
                .filter_map(|t| t.rate(design, arch))
                .collect();
            let (mean, stderr) = mean_and_stderr(&rates);
            cells.push(ResultCell {
                sweep_param: param.name().to_string(),
                sweep_value: point.sweep_value,
                design: design.name().to_string(),
                architecture: arch.name().to_string(),
                mean_se_bps_hz: mean,
                stderr,
                n_trials: rates.len(),
                n_degenerate: point.trials.len() - rates.len(),
            });
        }
    }
    cells
}

/// Runs every sweep point over `base.trials` trials.
///
/// Trial `i` uses stream `i` of a generator keyed by `base.seed` at every
/// sweep point, so points share channel draws wherever their dimensions
/// agree, and results do not depend on the number of worker threads.
pub fn run_experiment(name: &str, base: &SystemConfig, sweep: &Sweep) -> Result<ExperimentResult> {
    base.validate()?;
    let configs = sweep
        .values
        .iter()
        .map(|&x| sweep.apply(base, x))
        .collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    let mut points = Vec::with_capacity(configs.len());
    for (cfg, &value) in configs.iter().zip(&sweep.values) {
        let trials = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| run_trial(cfg, &mut trial_rng(cfg.seed, i)))
            .collect::<Result<Vec<_>>>()?;
        points.push(PointSamples {
            sweep_value: value,
            trials,
        });
    }
    let cells = points
        .iter()
        .flat_map(|p| aggregate(sweep.param, p))
        .collect();
    let mut invariant_violations = Vec::new();
    let mut padded_trials = 0;
    for p in &points {
        for (i, t) in p.trials.iter().enumerate() {
            padded_trials += usize::from(t.padded);
            invariant_violations.extend(
                t.violations
                    .iter()
                    .map(|v| format!("{}={} trial {i}: {v}", sweep.param.name(), p.sweep_value)),
            );
        }
    }
    Ok(ExperimentResult {
        name: name.to_string(),
        sweep_param: sweep.param,
        cells,
        points,
        invariant_violations,
        padded_trials,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Rejects a result whose per-trial invariant battery reported anything.
pub fn ensure_invariants(result: &ExperimentResult) -> Result<()> {
    match result.invariant_violations.first() {
        None => Ok(()),
        Some(first) => Err(Error::InvalidArgument(format!(
            "{} invariant violations, first: {first}",
            result.invariant_violations.len()
        ))),
    }
}
