//! Bundled scenarios used by the acceptance suite and the command line.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{from_real, CMat, C64};
use crate::model::{BathConfig, BathMode, OpenSystem, SpectralDensity, SystemModel};
use crate::oracle::{discretize, DiscretizedBath};
use crate::{CVec, Result};

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub system: OpenSystem,
    /// Whether the resolvent has poles outside the continuum.
    pub localized: bool,
}

fn fermion(eps: CMat) -> SystemModel {
    SystemModel::fermion(eps).expect("valid preset")
}

fn lorentzian(amp: CMat, center: f64, width: f64, lo: f64, hi: f64) -> SpectralDensity {
    SpectralDensity::lorentzian(amp, center, width, lo, hi).expect("valid preset")
}

fn build(name: &'static str, summary: &'static str, model: SystemModel, bath: BathConfig, jd: SpectralDensity, localized: bool) -> Scenario {
    Scenario { name, summary, system: OpenSystem::new(model, bath, jd).expect("valid preset"), localized }
}

/// Every bundled scenario.
pub fn bundled() -> Vec<Scenario> {
    vec![
        lorentzian_single(),
        lorentzian_pair(),
        boson_lorentzian(),
        boson_pair(),
        lorentzian_bound(),
        ohmic_bound(),
        ohmic_control(),
        wide_band_half_filled(),
        flat_band_finite(),
        weak_coupling(),
    ]
}

pub fn by_name(name: &str) -> Option<Scenario> {
    bundled().into_iter().find(|s| s.name == name)
}

pub fn names() -> Vec<String> {
    bundled().iter().map(|s| String::from(s.name)).collect()
}

/// One fermionic level inside a Lorentzian band.
pub fn lorentzian_single() -> Scenario {
    build(
        "lorentzian-single",
        "fermion d=1, Lorentzian Γ=0.5 W=1 on [-10, 10], β=2, μ=0",
        fermion(from_real(1, &[0.3])),
        BathConfig::new(2.0, 0.0).expect("valid"),
        lorentzian(from_real(1, &[0.5]), 0.0, 1.0, -10.0, 10.0),
        false,
    )
}

/// Two coupled fermionic levels sharing a Lorentzian reservoir.
pub fn lorentzian_pair() -> Scenario {
    build(
        "lorentzian-pair",
        "fermion d=2, matrix Lorentzian on [-8, 8], β=1.5, μ=0.1",
        fermion(from_real(2, &[0.4, 0.15, 0.15, -0.3])),
        BathConfig::new(1.5, 0.1).expect("valid"),
        lorentzian(from_real(2, &[0.6, 0.2, 0.2, 0.4]), 0.0, 1.0, -8.0, 8.0),
        false,
    )
}

/// A bosonic mode in a band lying above the chemical potential.
pub fn boson_lorentzian() -> Scenario {
    build(
        "boson-lorentzian",
        "boson d=1, Lorentzian Γ=0.6 W=1 centered at 3 on [0.5, 5.5], β=1, μ=0",
        SystemModel::boson(from_real(1, &[3.0]), 8).expect("valid"),
        BathConfig::new(1.0, 0.0).expect("valid"),
        lorentzian(from_real(1, &[0.6]), 3.0, 1.0, 0.5, 5.5),
        false,
    )
}

/// Two bosonic modes, weakly occupied reservoir.
pub fn boson_pair() -> Scenario {
    build(
        "boson-pair",
        "boson d=2, matrix Lorentzian centered at 3 on [0.5, 5.5], β=1.5, μ=0",
        SystemModel::boson(from_real(2, &[3.0, 0.2, 0.2, 2.6]), 8).expect("valid"),
        BathConfig::new(1.5, 0.0).expect("valid"),
        lorentzian(from_real(2, &[0.5, 0.15, 0.15, 0.4]), 3.0, 1.0, 0.5, 5.5),
        false,
    )
}

/// A level pushed below a Lorentzian band binds.
pub fn lorentzian_bound() -> Scenario {
    build(
        "lorentzian-bound",
        "fermion d=1 at -2.5 below a Lorentzian band Γ=1.5 W=1 on [-2, 2]",
        fermion(from_real(1, &[-2.5])),
        BathConfig::new(2.0, 0.0).expect("valid"),
        lorentzian(from_real(1, &[1.5]), 0.0, 1.0, -2.0, 2.0),
        true,
    )
}

/// Ohmic band with a gap below zero and a level inside the gap.
pub fn ohmic_bound() -> Scenario {
    build(
        "ohmic-bound",
        "fermion d=1 at -0.3, Ohmic α=1 ω_c=1 on [0, 20], empty reservoir",
        fermion(from_real(1, &[-0.3])),
        BathConfig::empty(),
        SpectralDensity::ohmic(from_real(1, &[1.0]), 1.0, 20.0).expect("valid"),
        true,
    )
}

/// Same band, level inside the continuum.
pub fn ohmic_control() -> Scenario {
    build(
        "ohmic-control",
        "fermion d=1 at 1.0, Ohmic α=1 ω_c=1 on [0, 20], empty reservoir",
        fermion(from_real(1, &[1.0])),
        BathConfig::empty(),
        SpectralDensity::ohmic(from_real(1, &[1.0]), 1.0, 20.0).expect("valid"),
        false,
    )
}

/// Structureless reservoir over the whole real line at infinite temperature.
pub fn wide_band_half_filled() -> Scenario {
    build(
        "wide-band",
        "fermion d=1 at 0.5, wide band Γ=1 over all energies, f=1/2",
        fermion(from_real(1, &[0.5])),
        BathConfig::new(0.0, 0.0).expect("valid"),
        SpectralDensity::wide_band(from_real(1, &[1.0]), f64::NEG_INFINITY, f64::INFINITY).expect("valid"),
        false,
    )
}

/// Flat band of finite width. The hard edges bind states exponentially
/// close to the band, far below any tolerance.
pub fn flat_band_finite() -> Scenario {
    build(
        "flat-band",
        "fermion d=1 at 0.2, flat band Γ=0.5 on [-4, 4], β=1, μ=0",
        fermion(from_real(1, &[0.2])),
        BathConfig::new(1.0, 0.0).expect("valid"),
        SpectralDensity::wide_band(from_real(1, &[0.5]), -4.0, 4.0).expect("valid"),
        false,
    )
}

/// Unit-peak Lorentzian for the weak-coupling sweep; its bandwidth is taken
/// as the full width `2W = 2`.
pub fn weak_coupling() -> Scenario {
    build(
        "weak-coupling",
        "fermion d=1 at 1, unit-peak Lorentzian W=1 centered at 1 on [-9, 11], β=1, μ=0",
        fermion(from_real(1, &[1.0])),
        BathConfig::new(1.0, 0.0).expect("valid"),
        lorentzian(from_real(1, &[1.0]), 1.0, 1.0, -9.0, 11.0),
        false,
    )
}

/// Bandwidth used to express sweep strengths for [`weak_coupling`].
pub const WEAK_COUPLING_BANDWIDTH: f64 = 2.0;

/// A flat reservoir cut into `n` modes on `[-1, 1]` for the many-body
/// oracle; `d = 2` couples both levels to every mode with distinct phases.
pub fn flat_oracle_bath(d: usize, n: usize, gamma: f64) -> Result<DiscretizedBath> {
    if d == 1 {
        let jd = SpectralDensity::wide_band(from_real(1, &[gamma]), -1.0, 1.0)?;
        return discretize(&jd, (-1.0, 1.0), n);
    }
    // Rank-one coupling keeps one reservoir mode per cell.
    let spacing = 2.0 / n as f64;
    let g = (gamma * spacing / (2.0 * core::f64::consts::PI)).sqrt();
    let modes = (0..n)
        .map(|k| {
            let e = -1.0 + (k as f64 + 0.5) * spacing;
            let coupling = CVec::from_iterator(d, (0..d).map(|i| C64::from_polar(g / (1.0 + i as f64).sqrt(), 0.3 * (i * k) as f64)));
            BathMode { energy: e, coupling }
        })
        .collect();
    Ok(DiscretizedBath { modes, spacing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{find_localized_modes, sum_rule_residual};

    #[test]
    fn localized_flags_match_mode_search() {
        for s in bundled() {
            if s.system.jd.is_local() {
                assert!(!s.localized);
                continue;
            }
            let modes = find_localized_modes(&s.system).unwrap();
            assert_eq!(!modes.is_empty(), s.localized, "{}", s.name);
        }
    }

    #[test]
    fn sum_rule_on_every_preset() {
        for s in bundled() {
            let modes = if s.system.jd.is_local() { vec![] } else { find_localized_modes(&s.system).unwrap() };
            let r = sum_rule_residual(&s.system, &modes).unwrap();
            assert!(r < 1e-6, "{} {r}", s.name);
        }
    }

    #[test]
    fn names_are_unique() {
        let mut n = names();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), bundled().len());
    }
}
