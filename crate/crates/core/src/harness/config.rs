//! System configuration and parameter sweeps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{Arrays, GeometrySampler, LinkGeometry, PathCounts, UpaGeometry};
use crate::error::{Error, Result};
use crate::metrics::LinkBudget;

/// Fixed TX–RX, TX–IRS and IRS–RX distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedDistances {
    pub d_tr_m: f64,
    pub d_ti_m: f64,
    pub d_ir_m: f64,
}

/// Everything a Monte Carlo run needs. Field names carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub tx_antennas_h: usize,
    pub tx_antennas_v: usize,
    pub rx_antennas_h: usize,
    pub rx_antennas_v: usize,
    pub irs_elements_h: usize,
    pub irs_elements_v: usize,
    pub element_spacing_wavelengths: f64,
    pub tx_rf_chains: usize,
    pub rx_rf_chains: usize,
    pub streams: usize,
    /// Paths in each of the three channels.
    pub paths_per_channel: usize,
    pub p_tx_dbm: f64,
    pub noise_dbm: f64,
    /// 1 means narrowband.
    pub subcarriers: usize,
    /// ν ∈ [0, 1].
    pub angle_range: f64,
    /// ρ: gains scaled by `1 + δ`, angles shifted by `δ` degrees, `δ ~ U[−ρ, ρ]`.
    pub estimation_error_rho: f64,
    pub shadowing: bool,
    pub geometry: GeometrySampler,
    /// Replaces the random geometry when set.
    pub fixed_distances_m: Option<FixedDistances>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            tx_antennas_h: 8,
            tx_antennas_v: 8,
            rx_antennas_h: 4,
            rx_antennas_v: 4,
            irs_elements_h: 16,
            irs_elements_v: 16,
            element_spacing_wavelengths: UpaGeometry::HALF_WAVELENGTH,
            tx_rf_chains: 4,
            rx_rf_chains: 4,
            streams: 4,
            paths_per_channel: 8,
            p_tx_dbm: 40.0,
            noise_dbm: -91.0,
            subcarriers: 1,
            angle_range: 1.0,
            estimation_error_rho: 0.0,
            shadowing: true,
            geometry: GeometrySampler::default(),
            fixed_distances_m: None,
            trials: 500,
            seed: 1,
        }
    }
}

fn require(ok: bool, field: &str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

impl SystemConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config fields are always serializable")
    }

    /// Reports the first field that breaks a constraint.
    pub fn validate(&self) -> Result<()> {
        for (field, n) in [
            ("tx_antennas_h", self.tx_antennas_h),
            ("tx_antennas_v", self.tx_antennas_v),
            ("rx_antennas_h", self.rx_antennas_h),
            ("rx_antennas_v", self.rx_antennas_v),
            ("irs_elements_h", self.irs_elements_h),
            ("irs_elements_v", self.irs_elements_v),
            ("paths_per_channel", self.paths_per_channel),
            ("subcarriers", self.subcarriers),
            ("trials", self.trials),
            ("streams", self.streams),
        ] {
            require(n >= 1, field, "must be at least 1")?;
        }
        require(
            self.element_spacing_wavelengths > 0.0 && self.element_spacing_wavelengths.is_finite(),
            "element_spacing_wavelengths",
            "must be positive",
        )?;
        let n_t = self.tx_antennas_h * self.tx_antennas_v;
        let n_r = self.rx_antennas_h * self.rx_antennas_v;
        require(
            self.streams <= self.tx_rf_chains,
            "tx_rf_chains",
            format!("must be at least the stream count {}", self.streams),
        )?;
        require(
            self.tx_rf_chains <= n_t,
            "tx_rf_chains",
            format!("must not exceed the {n_t} transmit antennas"),
        )?;
        require(
            self.streams <= self.rx_rf_chains,
            "rx_rf_chains",
            format!("must be at least the stream count {}", self.streams),
        )?;
        require(
            self.rx_rf_chains <= n_r,
            "rx_rf_chains",
            format!("must not exceed the {n_r} receive antennas"),
        )?;
        require(self.p_tx_dbm.is_finite(), "p_tx_dbm", "must be finite")?;
        require(self.noise_dbm.is_finite(), "noise_dbm", "must be finite")?;
        require(
            (0.0..=1.0).contains(&self.angle_range),
            "angle_range",
            "must lie in [0, 1]",
        )?;
        require(
            self.estimation_error_rho >= 0.0 && self.estimation_error_rho.is_finite(),
            "estimation_error_rho",
            "must be non-negative",
        )?;
        let g = &self.geometry;
        require(
            g.d_ti_min_m > 0.0 && g.d_ti_min_m <= g.d_ti_max_m && g.d_ti_max_m.is_finite(),
            "geometry.d_ti_min_m",
            "TX-IRS range must be positive and ordered",
        )?;
        require(
            g.d_ir_min_m > 0.0 && g.d_ir_min_m <= g.d_ir_max_m && g.d_ir_max_m.is_finite(),
            "geometry.d_ir_min_m",
            "IRS-RX range must be positive and ordered",
        )?;
        require(
            g.d_tr_offset_m >= 0.0 && g.d_tr_offset_m < g.d_ti_min_m + g.d_ir_min_m,
            "geometry.d_tr_offset_m",
            "must be non-negative and keep the direct distance positive",
        )?;
        if let Some(d) = &self.fixed_distances_m {
            for (field, x) in [
                ("fixed_distances_m.d_tr_m", d.d_tr_m),
                ("fixed_distances_m.d_ti_m", d.d_ti_m),
                ("fixed_distances_m.d_ir_m", d.d_ir_m),
            ] {
                require(x > 0.0 && x.is_finite(), field, "must be positive")?;
            }
        }
        Ok(())
    }

    pub fn arrays(&self) -> Result<Arrays> {
        let s = self.element_spacing_wavelengths;
        Ok(Arrays {
            tx: UpaGeometry::new(self.tx_antennas_h, self.tx_antennas_v, s)?,
            rx: UpaGeometry::new(self.rx_antennas_h, self.rx_antennas_v, s)?,
            irs: UpaGeometry::new(self.irs_elements_h, self.irs_elements_v, s)?,
        })
    }

    pub fn path_counts(&self) -> PathCounts {
        PathCounts {
            direct: self.paths_per_channel,
            tx_irs: self.paths_per_channel,
            irs_rx: self.paths_per_channel,
        }
    }

    pub fn link(&self) -> Result<LinkBudget> {
        LinkBudget::from_dbm(self.p_tx_dbm, self.noise_dbm)
    }

    pub fn fixed_geometry(&self) -> Option<LinkGeometry> {
        self.fixed_distances_m.map(|d| LinkGeometry {
            d_tr: d.d_tr_m,
            d_ti: d.d_ti_m,
            d_ir: d.d_ir_m,
        })
    }
}

/// Parameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PTxDbm,
    /// Total IRS element count, laid out as square as possible.
    IrsElements,
    NPath,
    AngleRange,
    EstimationError,
    Subcarriers,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::PTxDbm,
        SweepParam::IrsElements,
        SweepParam::NPath,
        SweepParam::AngleRange,
        SweepParam::EstimationError,
        SweepParam::Subcarriers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PTxDbm => "p_tx_dbm",
            SweepParam::IrsElements => "irs_elements",
            SweepParam::NPath => "n_path",
            SweepParam::AngleRange => "angle_range",
            SweepParam::EstimationError => "estimation_error",
            SweepParam::Subcarriers => "subcarriers",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                Error::config("sweep_param", format!("unknown sweep parameter `{name}`"))
            })
    }
}

fn whole(value: f64, field: &str) -> Result<usize> {
    require(
        value >= 1.0 && value.fract() == 0.0 && value < u32::MAX as f64,
        field,
        format!("sweep value {value} must be a positive integer"),
    )?;
    Ok(value as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Result<Self> {
        require(
            !values.is_empty(),
            "sweep_values",
            "a sweep needs at least one value",
        )?;
        Ok(Self { param, values })
    }

    /// `base` with the swept parameter set to `value`, validated.
    pub fn apply(&self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self.param {
            SweepParam::PTxDbm => cfg.p_tx_dbm = value,
            SweepParam::IrsElements => {
                let layout = UpaGeometry::near_square(whole(value, "irs_elements")?)?;
                cfg.irs_elements_h = layout.horizontal;
                cfg.irs_elements_v = layout.vertical;
            }
            SweepParam::NPath => cfg.paths_per_channel = whole(value, "paths_per_channel")?,
            SweepParam::AngleRange => cfg.angle_range = value,
            SweepParam::EstimationError => cfg.estimation_error_rho = value,
            SweepParam::Subcarriers => cfg.subcarriers = whole(value, "subcarriers")?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A named reproduction of one of the simulation figures.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub sweep: Sweep,
    /// Subcarrier count forced by the experiment.
    pub subcarriers: Option<usize>,
}

pub const EXPERIMENT_NAMES: [&str; 6] = ["fig2", "fig3", "fig4", "fig6", "fig7", "fig8"];

pub fn named_experiment(name: &str) -> Result<Experiment> {
    let (param, values, subcarriers) = match name {
        "fig2" => (
            SweepParam::PTxDbm,
            vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            None,
        ),
        "fig3" => (
            SweepParam::IrsElements,
            vec![16.0, 36.0, 64.0, 100.0, 144.0, 196.0, 256.0],
            None,
        ),
        "fig4" => (
            SweepParam::NPath,
            vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            None,
        ),
        "fig6" => (SweepParam::AngleRange, vec![0.2, 0.4, 0.6, 0.8, 1.0], None),
        "fig7" => (
            SweepParam::EstimationError,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            None,
        ),
        "fig8" => (
            SweepParam::PTxDbm,
            vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            Some(16),
        ),
        _ => {
            return Err(Error::config(
                "experiment",
                format!(
                    "unknown experiment `{name}`; expected one of {}",
                    EXPERIMENT_NAMES.join(", ")
                ),
            ))
        }
    };
    Ok(Experiment {
        name: name.to_string(),
        sweep: Sweep::new(param, values)?,
        subcarriers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_the_reference_system() {
        let c = SystemConfig::default();
        c.validate().unwrap();
        let a = c.arrays().unwrap();
        assert_eq!((a.tx.count(), a.rx.count(), a.irs.count()), (64, 16, 256));
        assert_eq!(
            (
                c.tx_rf_chains,
                c.rx_rf_chains,
                c.streams,
                c.paths_per_channel
            ),
            (4, 4, 4, 8)
        );
        assert_eq!(c.noise_dbm, -91.0);
        assert_eq!(c.element_spacing_wavelengths, 0.5);
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = SystemConfig::default();
        assert_eq!(SystemConfig::from_json_str(&c.to_json_pretty()).unwrap(), c);
        let partial = SystemConfig::from_json_str(r#"{"p_tx_dbm": 30, "trials": 7}"#).unwrap();
        assert_eq!(partial.p_tx_dbm, 30.0);
        assert_eq!(partial.trials, 7);
        assert_eq!(partial.streams, 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(SystemConfig::from_json_str(r#"{"p_tx": 30}"#).is_err());
    }

    #[test]
    fn field_level_diagnostics() {
        let field_of = |c: SystemConfig| match c.validate().unwrap_err() {
            Error::Config { field, .. } => field,
            e => panic!("unexpected {e}"),
        };
        let c = SystemConfig {
            streams: 5,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(c), "tx_rf_chains");
        let c = SystemConfig {
            rx_rf_chains: 17,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(c), "rx_rf_chains");
        let c = SystemConfig {
            angle_range: 1.5,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(c), "angle_range");
        let c = SystemConfig {
            trials: 0,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(c), "trials");
        let c = SystemConfig {
            estimation_error_rho: -1.0,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(c), "estimation_error_rho");
        let c = SystemConfig {
            fixed_distances_m: Some(FixedDistances {
                d_tr_m: 1.0,
                d_ti_m: 0.0,
                d_ir_m: 1.0,
            }),
            ..SystemConfig::default()
        };
        assert_eq!(field_of(c), "fixed_distances_m.d_ti_m");
    }

    #[test]
    fn sweeps_apply_and_validate() {
        let base = SystemConfig::default();
        let s = Sweep::new(SweepParam::IrsElements, vec![64.0]).unwrap();
        let c = s.apply(&base, 64.0).unwrap();
        assert_eq!((c.irs_elements_h, c.irs_elements_v), (8, 8));
        let s = Sweep::new(SweepParam::NPath, vec![2.5]).unwrap();
        assert!(s.apply(&base, 2.5).is_err());
        let s = Sweep::new(SweepParam::AngleRange, vec![2.0]).unwrap();
        assert!(s.apply(&base, 2.0).is_err());
        assert!(Sweep::new(SweepParam::PTxDbm, vec![]).is_err());
    }

    #[test]
    fn sweep_names_round_trip() {
        for p in SweepParam::ALL {
            assert_eq!(SweepParam::parse(p.name()).unwrap(), p);
        }
        assert!(SweepParam::parse("bogus").is_err());
    }

    #[test]
    fn named_experiments_resolve() {
        for name in EXPERIMENT_NAMES {
            named_experiment(name).unwrap();
        }
        assert_eq!(named_experiment("fig8").unwrap().subcarriers, Some(16));
        assert!(named_experiment("fig5").is_err());
    }
}
