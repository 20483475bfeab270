//! Batches of oracle certificates on freshly drawn channels.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    upa_response, Arrays, ChannelTriple, GeometrySampler, PathCounts, UpaGeometry,
};
use crate::error::{Error, Result};
use crate::irs::{compose_total, design_reflection_proposed, design_reflection_random};
use crate::metrics::LinkBudget;
use crate::oracle::{
    exhaustive_analog_search, exhaustive_irs_search, random_irs_mean, reflection_bound_certificate,
    trial_rng, OracleReport, DEFAULT_CEILING,
};

/// Array sizes and link settings of a certificate batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSettings {
    pub n_t: usize,
    pub n_r: usize,
    pub m: usize,
    pub n_path: usize,
    pub streams: usize,
    pub p_tx_dbm: f64,
    pub noise_dbm: f64,
}

impl BatchSettings {
    /// Reflection certificate: 4 receive antennas, 8 IRS elements, 3 paths.
    pub const REFLECTION_BOUND: Self = Self {
        n_t: 16,
        n_r: 4,
        m: 8,
        n_path: 3,
        streams: 1,
        p_tx_dbm: 40.0,
        noise_dbm: -91.0,
    };

    /// Exhaustive phase search over a 4-element IRS.
    pub const IRS_SEARCH: Self = Self {
        n_t: 16,
        n_r: 4,
        m: 4,
        n_path: 3,
        streams: 2,
        p_tx_dbm: 40.0,
        noise_dbm: -91.0,
    };

    /// Exhaustive analog selection over 6 candidates per side.
    pub const ANALOG_SEARCH: Self = Self {
        n_t: 64,
        n_r: 16,
        m: 64,
        n_path: 3,
        streams: 2,
        p_tx_dbm: 40.0,
        noise_dbm: -91.0,
    };

    pub fn link(&self) -> Result<LinkBudget> {
        LinkBudget::from_dbm(self.p_tx_dbm, self.noise_dbm)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelTriple> {
        let arrays = Arrays {
            tx: UpaGeometry::near_square(self.n_t)?,
            rx: UpaGeometry::near_square(self.n_r)?,
            irs: UpaGeometry::near_square(self.m)?,
        };
        let counts = PathCounts {
            direct: self.n_path,
            tx_irs: self.n_path,
            irs_rx: self.n_path,
        };
        let d = GeometrySampler::default().sample(rng);
        ChannelTriple::sample(rng, arrays, counts, &d, 1.0, true)
    }
}

fn batch<F>(instances: usize, f: F) -> Result<Vec<OracleReport>>
where
    F: Fn(u64) -> Result<OracleReport> + Sync + Send,
{
    if instances == 0 {
        return Err(Error::InvalidArgument("need at least one instance".into()));
    }
    (0..instances as u64).into_par_iter().map(f).collect()
}

/// Random channel, random reflection, random TX–IRS path per instance.
pub fn reflection_bound_batch(
    settings: &BatchSettings,
    instances: usize,
    seed: u64,
) -> Result<Vec<OracleReport>> {
    batch(instances, |i| {
        let mut rng = trial_rng(seed, i);
        let t = settings.draw(&mut rng)?;
        let v = design_reflection_random(&mut rng, settings.m)?;
        let j = rng.random_range(0..t.ti_paths.len());
        let p = t.ti_paths.get(j).expect("index drawn within range");
        let incoming = upa_response(&t.arrays.irs, p.aoa_azimuth, p.aoa_elevation);
        let mut r = reflection_bound_certificate(&t.h_ir, &v, &incoming)?;
        r.instance = format!("{} #{i} j={j}", r.instance);
        Ok(r)
    })
}

/// Exhaustive phase search per instance. `aux.random_irs_mean` holds the
/// fully-digital rate averaged over `random_draws` random reflections.
pub fn irs_search_batch(
    settings: &BatchSettings,
    instances: usize,
    phase_levels: usize,
    random_draws: usize,
    seed: u64,
) -> Result<Vec<OracleReport>> {
    let link = settings.link()?;
    batch(instances, |i| {
        let mut rng = trial_rng(seed, i);
        let t = settings.draw(&mut rng)?;
        let mut r =
            exhaustive_irs_search(&t, phase_levels, &link, settings.streams, DEFAULT_CEILING)?;
        let random = random_irs_mean(&t, &mut rng, random_draws, &link, settings.streams)?;
        r.aux.insert("random_irs_mean".into(), random);
        r.instance = format!("{} #{i}", r.instance);
        Ok(r)
    })
}

/// Exhaustive analog selection on the channel shaped by the closed-form
/// reflection.
pub fn analog_search_batch(
    settings: &BatchSettings,
    instances: usize,
    rf_chains: usize,
    seed: u64,
) -> Result<Vec<OracleReport>> {
    let link = settings.link()?;
    batch(instances, |i| {
        let mut rng = trial_rng(seed, i);
        let t = settings.draw(&mut rng)?;
        let v = design_reflection_proposed(&t.ti_paths, &t.ir_paths, &t.arrays.irs, 0)?;
        let h = compose_total(&t.h_tr, &t.h_ti, &t.h_ir, Some(&v))?;
        let mut r = exhaustive_analog_search(
            &h,
            &t.tx_candidates(),
            &t.rx_candidates(),
            rf_chains,
            rf_chains,
            settings.streams,
            &link,
            DEFAULT_CEILING,
        )?;
        r.instance = format!("{} #{i}", r.instance);
        Ok(r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_pass_and_repeat() {
        let a = reflection_bound_batch(&BatchSettings::REFLECTION_BOUND, 50, 1).unwrap();
        assert!(a.iter().all(|r| r.pass));
        assert_eq!(
            a,
            reflection_bound_batch(&BatchSettings::REFLECTION_BOUND, 50, 1).unwrap()
        );

        let small = BatchSettings {
            m: 2,
            ..BatchSettings::IRS_SEARCH
        };
        let b = irs_search_batch(&small, 5, 4, 10, 2).unwrap();
        assert!(b
            .iter()
            .all(|r| r.pass && r.aux.contains_key("random_irs_mean")));

        let c = analog_search_batch(&BatchSettings::ANALOG_SEARCH, 3, 2, 3).unwrap();
        assert!(c.iter().all(|r| r.pass && r.evaluations == 225));
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(reflection_bound_batch(&BatchSettings::REFLECTION_BOUND, 0, 1).is_err());
    }
}
