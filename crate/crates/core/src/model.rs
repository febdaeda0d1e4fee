//! System, bath and coupling data consumed by every other module.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{c, hermiticity_error, max_abs, min_eigenvalue, CMat, CVec};
use crate::{Error, Result};

/// Particle statistics. Formulas written with `±`/`∓` take the upper sign
/// for bosons and the lower sign for fermions; [`Statistics::sign`] is that
/// upper/lower sign as a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistics {
    Boson,
    Fermion,
}

impl Statistics {
    pub fn sign(self) -> f64 {
        match self {
            Statistics::Boson => 1.0,
            Statistics::Fermion => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    eps_s: CMat,
    statistics: Statistics,
    n_max: usize,
}

impl SystemModel {
    /// `n_max` is the per-level occupation cap. It is forced to 1 for fermions.
    pub fn new(eps_s: CMat, statistics: Statistics, n_max: usize) -> Result<Self> {
        let d = eps_s.nrows();
        if d == 0 || eps_s.ncols() != d {
            return Err(Error::invalid("eps_s must be a non-empty square matrix"));
        }
        let herm = hermiticity_error(&eps_s);
        if herm > 1e-12 * max_abs(&eps_s).max(1.0) {
            return Err(Error::invalid(format!("eps_s is not Hermitian (deviation {herm:e})")));
        }
        if n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        let n_max = if statistics == Statistics::Fermion { 1 } else { n_max };
        Ok(SystemModel { eps_s: crate::linalg::hermitian_part(&eps_s), statistics, n_max })
    }

    pub fn fermion(eps_s: CMat) -> Result<Self> {
        Self::new(eps_s, Statistics::Fermion, 1)
    }

    pub fn boson(eps_s: CMat, n_max: usize) -> Result<Self> {
        Self::new(eps_s, Statistics::Boson, n_max)
    }

    pub fn dim(&self) -> usize {
        self.eps_s.nrows()
    }

    pub fn eps_s(&self) -> &CMat {
        &self.eps_s
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }
}

/// Thermal reservoir parameters.
///
/// `beta = f64::INFINITY` is zero temperature. `mu = f64::NEG_INFINITY` is an
/// empty reservoir. For fermions `beta = 0` is accepted as infinite
/// temperature, where every mode is half filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathConfig {
    pub beta: f64,
    pub mu: f64,
    /// Positive imaginary offset standing in for `0⁺`. `None` picks
    /// `1e-6 × bandwidth` of the spectral density it is paired with.
    pub regularization_eta: Option<f64>,
}

impl BathConfig {
    pub fn new(beta: f64, mu: f64) -> Result<Self> {
        let bath = BathConfig { beta, mu, regularization_eta: None };
        bath.validate()?;
        Ok(bath)
    }

    pub fn zero_temperature(mu: f64) -> Self {
        BathConfig { beta: f64::INFINITY, mu, regularization_eta: None }
    }

    pub fn empty() -> Self {
        Self::zero_temperature(f64::NEG_INFINITY)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.regularization_eta = Some(eta);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.mu.is_nan() || self.mu == f64::INFINITY && self.beta == 0.0 {
            return Err(Error::invalid(format!("chemical potential {} is not usable", self.mu)));
        }
        if let Some(eta) = self.regularization_eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid(format!("regularization_eta must be positive, got {eta}")));
            }
        }
        Ok(())
    }

    /// `f(ε) = 1/(e^{β(ε−μ)} ∓ 1)`.
    pub fn occupation(&self, statistics: Statistics, eps: f64) -> Result<f64> {
        fermi_bose_occupation(self, statistics, eps)
    }
}

pub fn fermi_bose_occupation(bath: &BathConfig, statistics: Statistics, eps: f64) -> Result<f64> {
    let (beta, mu) = (bath.beta, bath.mu);
    match statistics {
        Statistics::Fermion => {
            if beta == 0.0 {
                return Ok(0.5);
            }
            if eps == mu {
                return Ok(0.5);
            }
            if beta.is_infinite() || mu.is_infinite() {
                return Ok(if eps > mu { 0.0 } else { 1.0 });
            }
            let x = beta * (eps - mu);
            Ok(if x > 0.0 {
                let e = (-x).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + x.exp())
            })
        }
        Statistics::Boson => {
            if !(eps > mu) || beta == 0.0 {
                return Err(Error::Domain { eps, mu });
            }
            if beta.is_infinite() || mu.is_infinite() {
                return Ok(0.0);
            }
            Ok(1.0 / (beta * (eps - mu)).exp_m1())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianPeak {
    /// Peak value of `J` at `center`, a PSD matrix.
    pub amplitude: CMat,
    pub center: f64,
    /// Half width at half maximum.
    pub width: f64,
}

/// One reservoir mode; `coupling[i]` is its amplitude on system level `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathMode {
    pub energy: f64,
    pub coupling: CVec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralKind {
    /// `J(ε) = Σ_p A_p W_p² / ((ε − c_p)² + W_p²)`.
    LorentzianSum(Vec<LorentzianPeak>),
    /// `J(ε) = A ε e^{−ε/ω_c}` for `ε ≥ 0`.
    OhmicExpCutoff { amplitude: CMat, cutoff: f64 },
    /// `J(ε) = 2π Σ_k V_k V_k† δ(ε − ε_k)`, kept symbolic.
    DiscreteModes(Vec<BathMode>),
    /// `J(ε) = Γ` on the support. An infinite support makes the memory
    /// kernel local in time.
    WideBand { amplitude: CMat },
}

/// A matrix-valued spectral density restricted to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    kind: SpectralKind,
    lo: f64,
    hi: f64,
    dim: usize,
}

fn check_psd(m: &CMat, d: usize, what: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::invalid(format!("{what}: expected a {d}x{d} matrix")));
    }
    let scale = max_abs(m).max(1e-300);
    if hermiticity_error(m) > 1e-12 * scale.max(1.0) {
        return Err(Error::invalid(format!("{what}: amplitude is not Hermitian")));
    }
    if min_eigenvalue(m) < -1e-12 * scale.max(1.0) {
        return Err(Error::invalid(format!("{what}: amplitude is not positive semidefinite")));
    }
    Ok(())
}

impl SpectralDensity {
    pub fn new(kind: SpectralKind, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("support [{lo}, {hi}] is empty")));
        }
        let dim = match &kind {
            SpectralKind::LorentzianSum(peaks) => {
                let d = peaks.first().map(|p| p.amplitude.nrows()).ok_or_else(|| Error::invalid("no Lorentzian peaks"))?;
                for p in peaks {
                    check_psd(&p.amplitude, d, "Lorentzian peak")?;
                    if !(p.width > 0.0 && p.width.is_finite() && p.center.is_finite()) {
                        return Err(Error::invalid("Lorentzian width must be positive and center finite"));
                    }
                }
                d
            }
            SpectralKind::OhmicExpCutoff { amplitude, cutoff } => {
                check_psd(amplitude, amplitude.nrows(), "Ohmic amplitude")?;
                if !(*cutoff > 0.0) || lo < 0.0 {
                    return Err(Error::invalid("Ohmic density needs a positive cutoff and support within [0, ∞)"));
                }
                amplitude.nrows()
            }
            SpectralKind::DiscreteModes(modes) => {
                let d = modes.first().map(|m| m.coupling.len()).ok_or_else(|| Error::invalid("no bath modes"))?;
                if modes.iter().any(|m| m.coupling.len() != d || !m.energy.is_finite()) {
                    return Err(Error::invalid("bath modes must share one coupling dimension"));
                }
                d
            }
            SpectralKind::WideBand { amplitude } => {
                check_psd(amplitude, amplitude.nrows(), "wide-band amplitude")?;
                amplitude.nrows()
            }
        };
        if dim == 0 {
            return Err(Error::invalid("spectral density has zero dimension"));
        }
        let infinite = lo.is_infinite() || hi.is_infinite();
        if infinite && !matches!(kind, SpectralKind::WideBand { .. }) {
            return Err(Error::invalid("only the wide-band density may have an infinite support"));
        }
        Ok(SpectralDensity { kind, lo, hi, dim })
    }

    pub fn lorentzian(amplitude: CMat, center: f64, width: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(SpectralKind::LorentzianSum(alloc::vec![LorentzianPeak { amplitude, center, width }]), lo, hi)
    }

    pub fn ohmic(amplitude: CMat, cutoff: f64, hi: f64) -> Result<Self> {
        Self::new(SpectralKind::OhmicExpCutoff { amplitude, cutoff }, 0.0, hi)
    }

    pub fn wide_band(amplitude: CMat, lo: f64, hi: f64) -> Result<Self> {
        Self::new(SpectralKind::WideBand { amplitude }, lo, hi)
    }

    /// Discrete modes; the support is the hull of the mode energies.
    pub fn discrete(modes: Vec<BathMode>) -> Result<Self> {
        let lo = modes.iter().map(|m| m.energy).fold(f64::INFINITY, f64::min);
        let hi = modes.iter().map(|m| m.energy).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self::new(SpectralKind::DiscreteModes(modes), lo, hi)
    }

    /// A decoupled reservoir (`J ≡ 0`) on `d` levels.
    pub fn zero(d: usize) -> Self {
        SpectralDensity { kind: SpectralKind::DiscreteModes(Vec::new()), lo: 0.0, hi: 1.0, dim: d }
    }

    pub fn kind(&self) -> &SpectralKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn bandwidth(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, SpectralKind::DiscreteModes(_))
    }

    /// Wide band over the whole real line: the memory kernel is `Γ δ(s)`.
    pub fn is_local(&self) -> bool {
        matches!(self.kind, SpectralKind::WideBand { .. }) && self.bandwidth().is_infinite()
    }

    /// `J ≡ 0`: the system is closed.
    pub fn is_zero(&self) -> bool {
        let zero = |m: &CMat| m.iter().all(|z| *z == c(0.0, 0.0));
        match &self.kind {
            SpectralKind::LorentzianSum(peaks) => peaks.iter().all(|p| zero(&p.amplitude)),
            SpectralKind::OhmicExpCutoff { amplitude, .. } | SpectralKind::WideBand { amplitude } => zero(amplitude),
            SpectralKind::DiscreteModes(modes) => modes.iter().all(|m| m.coupling.iter().all(|z| *z == c(0.0, 0.0))),
        }
    }

    pub fn modes(&self) -> &[BathMode] {
        match &self.kind {
            SpectralKind::DiscreteModes(m) => m,
            _ => &[],
        }
    }

    /// `J(ε)`, zero outside the support. Discrete modes have no pointwise
    /// value and are rejected.
    pub fn evaluate(&self, eps: f64) -> Result<CMat> {
        let d = self.dim;
        if self.is_discrete() {
            return Err(Error::invalid("discrete modes have no pointwise spectral density"));
        }
        if !(eps >= self.lo && eps <= self.hi) {
            return Ok(CMat::zeros(d, d));
        }
        Ok(self.eval_inside(eps))
    }

    pub(crate) fn eval_inside(&self, eps: f64) -> CMat {
        let d = self.dim;
        match &self.kind {
            SpectralKind::LorentzianSum(peaks) => {
                let mut out = CMat::zeros(d, d);
                for p in peaks {
                    let w2 = p.width * p.width;
                    let x = eps - p.center;
                    out += p.amplitude.scale(w2 / (x * x + w2));
                }
                out
            }
            SpectralKind::OhmicExpCutoff { amplitude, cutoff } => amplitude.scale(eps * (-eps / cutoff).exp()),
            SpectralKind::WideBand { amplitude } => amplitude.clone(),
            SpectralKind::DiscreteModes(_) => CMat::zeros(d, d),
        }
    }

    /// Breakpoints for quadrature: edges plus interior peak centers.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = alloc::vec![self.lo, self.hi];
        match &self.kind {
            SpectralKind::LorentzianSum(peaks) => {
                pts.extend(peaks.iter().map(|p| p.center).filter(|&x| x > self.lo && x < self.hi));
            }
            SpectralKind::OhmicExpCutoff { cutoff, .. } if *cutoff > self.lo && *cutoff < self.hi => {
                pts.push(*cutoff);
            }
            _ => {}
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Smallest structural length scale in energy, used to size panels.
    pub fn feature_width(&self) -> f64 {
        let bw = self.bandwidth();
        match &self.kind {
            SpectralKind::LorentzianSum(peaks) => peaks.iter().map(|p| p.width).fold(bw, f64::min),
            SpectralKind::OhmicExpCutoff { cutoff, .. } => cutoff.min(bw),
            _ => bw,
        }
    }

    /// The same family with the coupling strength multiplied by `lambda`
    /// (`J → λJ`).
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("coupling scale must be non-negative"));
        }
        let kind = match &self.kind {
            SpectralKind::LorentzianSum(peaks) => {
                SpectralKind::LorentzianSum(peaks.iter().map(|p| LorentzianPeak { amplitude: &p.amplitude * c(lambda, 0.0), ..p.clone() }).collect())
            }
            SpectralKind::OhmicExpCutoff { amplitude, cutoff } => SpectralKind::OhmicExpCutoff { amplitude: amplitude * c(lambda, 0.0), cutoff: *cutoff },
            SpectralKind::DiscreteModes(modes) => {
                SpectralKind::DiscreteModes(modes.iter().map(|m| BathMode { energy: m.energy, coupling: &m.coupling * c(lambda.sqrt(), 0.0) }).collect())
            }
            SpectralKind::WideBand { amplitude } => SpectralKind::WideBand { amplitude: amplitude * c(lambda, 0.0) },
        };
        Ok(SpectralDensity { kind, ..self.clone() })
    }
}

/// A system, its reservoir and the coupling, validated together.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystem {
    pub model: SystemModel,
    pub bath: BathConfig,
    pub jd: SpectralDensity,
}

impl OpenSystem {
    pub fn new(model: SystemModel, bath: BathConfig, jd: SpectralDensity) -> Result<Self> {
        bath.validate()?;
        if jd.dim() != model.dim() {
            return Err(Error::invalid(format!("spectral density acts on {} levels but the system has {}", jd.dim(), model.dim())));
        }
        if (model.statistics() == Statistics::Boson && !jd.modes().is_empty() || !jd.is_discrete()) && model.statistics() == Statistics::Boson {
            let floor = if jd.is_discrete() { jd.modes().iter().map(|m| m.energy).fold(f64::INFINITY, f64::min) } else { jd.support().0 };
            if !(bath.mu < floor) && bath.mu != f64::NEG_INFINITY {
                return Err(Error::invalid(format!("bosonic chemical potential {} must lie below the reservoir spectrum (starts at {floor})", bath.mu)));
            }
        }
        Ok(OpenSystem { model, bath, jd })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn statistics(&self) -> Statistics {
        self.model.statistics()
    }

    /// The `0⁺` used on the real axis.
    pub fn eta(&self) -> f64 {
        if let Some(eta) = self.bath.regularization_eta {
            return eta;
        }
        let bw = self.jd.bandwidth();
        if bw.is_finite() {
            1e-6 * bw
        } else {
            1e-6 * max_abs(self.model.eps_s()).max(1.0)
        }
    }

    pub fn occupation(&self, eps: f64) -> Result<f64> {
        fermi_bose_occupation(&self.bath, self.statistics(), eps)
    }

    /// The same system with `J → λJ`.
    pub fn with_coupling_scale(&self, lambda: f64) -> Result<Self> {
        Ok(OpenSystem { jd: self.jd.scaled(lambda)?, ..self.clone() })
    }
}
