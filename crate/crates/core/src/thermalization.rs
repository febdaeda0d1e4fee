//! Asymptotics: the steady occupation `n̄ = ∫f D/2π`, the final Gaussian
//! state, the weak-coupling approach to the Gibbs state and the memory left
//! behind by localized modes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::evolution::{evolve_exact, thermal_like_state, DressedMatrices, ReducedDensityMatrix};
use crate::fock::FockBasis;
use crate::greens::{localized_limit, GreenPair, TimeGrid};
use crate::linalg::{c, eigvalsh, herm_apply, hermitian_part, max_abs, spectral_norm, trace, trace_distance, CMat};
use crate::model::{BathConfig, OpenSystem, Statistics, SystemModel};
use crate::quad::{self, Tolerance};
use crate::spectral::{broadened_spectrum, find_localized_modes, LocalizedMode, SpectrumTable};
use crate::{par, Error, Result};

/// `Σ_k w_k f(ε_k) D(ε_k) / 2π` on a tabulated spectrum. The caller is
/// responsible for excluding localized modes.
pub fn steady_occupation(spectrum: &SpectrumTable, bath: &BathConfig, statistics: Statistics) -> Result<CMat> {
    let d = spectrum.d.first().map_or(0, |m| m.nrows());
    let mut acc = CMat::zeros(d, d);
    for ((&e, &w), dm) in spectrum.energies.iter().zip(&spectrum.weights).zip(&spectrum.d) {
        let f = bath.occupation(statistics, e)?;
        if f != 0.0 {
            acc += dm * c(w * f, 0.0);
        }
    }
    Ok(hermitian_part(&acc.unscale(2.0 * PI)))
}

/// `n̄` by adaptive quadrature. Refuses when localized modes exist, since
/// `v(t,t)` then keeps oscillating.
pub fn steady_occupation_adaptive(sys: &OpenSystem) -> Result<CMat> {
    if !find_localized_modes(sys)?.is_empty() {
        return Err(Error::LocalizedModes);
    }
    occupation_integral(sys)
}

fn occupation_integral(sys: &OpenSystem) -> Result<CMat> {
    let d = sys.dim();
    if sys.jd.is_discrete() {
        return Err(Error::invalid("discrete modes have no continuum occupation"));
    }
    if sys.jd.is_local() {
        // Only constant occupations are admitted for the local band.
        let f = sys.occupation(0.0)?;
        return Ok(crate::spectral::continuum_weight(sys)? * c(f, 0.0));
    }
    let mut breaks = sys.jd.breakpoints();
    let (a, b) = sys.jd.support();
    breaks.extend(eigvalsh(sys.model.eps_s()).into_iter().filter(|&e| e > a && e < b));
    if sys.bath.mu > a && sys.bath.mu < b {
        breaks.push(sys.bath.mu);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let nan = CMat::from_element(d, d, c(f64::NAN, 0.0));
    let tol = Tolerance { abs: 1e-12, rel: 1e-11, max_segments: 20_000 };
    let m = quad::integrate(
        |e| match (broadened_spectrum(sys, e), sys.occupation(e)) {
            (Ok(dm), Ok(f)) => dm * c(f, 0.0),
            _ => nan.clone(),
        },
        &breaks,
        tol,
    )?;
    Ok(hermitian_part(&m.unscale(2.0 * PI)))
}

/// `ρ(∞)`: the Gaussian state with one-body matrix `n̄`.
pub fn steady_state(n_bar: &CMat, basis: &FockBasis) -> Result<ReducedDensityMatrix> {
    Ok(thermal_like_state(n_bar, basis)?.0)
}

/// `f(ε_S)` as a matrix function.
pub fn equilibrium_occupation(model: &SystemModel, bath: &BathConfig) -> Result<CMat> {
    for e in eigvalsh(model.eps_s()) {
        bath.occupation(model.statistics(), e)?;
    }
    Ok(herm_apply(model.eps_s(), |e| c(bath.occupation(model.statistics(), e).unwrap_or(f64::NAN), 0.0)))
}

/// `e^{−β(H_S − μN)}/Z` on the basis. Zero temperature gives the uniform
/// mixture over the ground space.
pub fn grand_canonical_state(model: &SystemModel, bath: &BathConfig, basis: &FockBasis) -> Result<ReducedDensityMatrix> {
    if !bath.mu.is_finite() {
        return Err(Error::invalid("the grand-canonical state needs a finite chemical potential"));
    }
    let k = hermitian_part(&(basis.quadratic(model.eps_s()) - basis.number() * c(bath.mu, 0.0)));
    let vals = eigvalsh(&k);
    let e0 = vals[0];
    let beta = bath.beta;
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let weight = |e: f64| {
        if beta.is_infinite() {
            if e - e0 <= 1e-10 * scale {
                1.0
            } else {
                0.0
            }
        } else {
            (-beta * (e - e0)).exp()
        }
    };
    let rho = herm_apply(&k, |e| c(weight(e), 0.0));
    let z = trace(&rho).re;
    ReducedDensityMatrix::new(basis.clone(), hermitian_part(&rho.unscale(z)))
}

/// Smallest full width at half maximum among the peaks of `tr D(ε)`; for the
/// local wide band the smallest eigenvalue of `Γ`.
pub fn relaxation_width(sys: &OpenSystem) -> Result<f64> {
    if sys.jd.is_discrete() {
        return Err(Error::invalid("discrete modes do not relax"));
    }
    if sys.jd.is_local() {
        let g = match sys.jd.kind() {
            crate::model::SpectralKind::WideBand { amplitude } => eigvalsh(amplitude)[0],
            _ => unreachable!(),
        };
        if !(g > 0.0) {
            return Err(Error::invalid("wide band with a decoupled channel does not relax"));
        }
        return Ok(g);
    }
    let (a, b) = sys.jd.support();
    let n = 20_001;
    let h = (b - a) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|k| a + h * k as f64).collect();
    let tr = |e: f64| broadened_spectrum(sys, e).map(|m| trace(&m).re);
    let ys = par::map(&xs, |&e| tr(e)).into_iter().collect::<Result<Vec<f64>>>()?;
    let top = ys.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::invalid("the continuum carries no weight"));
    }
    let crossing = |lo: f64, hi: f64, half: f64| -> Result<f64> {
        // tr D − half changes sign on [lo, hi].
        let (mut lo, mut hi) = (lo, hi);
        let below_lo = tr(lo)? < half;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (tr(mid)? < half) == below_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let mut width = f64::INFINITY;
    for k in 0..n {
        let left_ok = k == 0 || ys[k] > ys[k - 1];
        let right_ok = k == n - 1 || ys[k] >= ys[k + 1];
        if !(left_ok && right_ok) || ys[k] < 1e-6 * top {
            continue;
        }
        let half = 0.5 * ys[k];
        let mut l = k;
        while l > 0 && ys[l] >= half {
            l -= 1;
        }
        let mut r = k;
        while r < n - 1 && ys[r] >= half {
            r += 1;
        }
        let left = if ys[l] < half { crossing(xs[l], xs[l + 1], half)? } else { xs[l] };
        let right = if ys[r] < half { crossing(xs[r - 1], xs[r], half)? } else { xs[r] };
        width = width.min(right - left);
    }
    Ok(width)
}

/// Time span and averaging window for long-time statements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub t_end: f64,
    pub step: f64,
    /// Averages are taken over `[t_end − window, t_end]`.
    pub window: f64,
    pub samples: usize,
}

impl Horizon {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.t_end, self.step)
    }
}

/// `t_end = 50/Γ_min`; the step resolves the highest frequency in play, twice
/// as finely when localized modes exist; the window spans ten beat periods of
/// the localized modes.
pub fn default_horizon(sys: &OpenSystem, modes: &[LocalizedMode]) -> Result<Horizon> {
    let t_end = 50.0 / relaxation_width(sys)?;
    let (a, b) = sys.jd.support();
    let mut freq = eigvalsh(sys.model.eps_s()).iter().fold(1.0f64, |m, e| m.max(e.abs()));
    for m in modes {
        freq = freq.max(m.energy.abs());
    }
    if a.is_finite() && b.is_finite() {
        freq = freq.max(a.abs()).max(b.abs());
    }
    // Undamped modes accumulate phase error over the whole span.
    let per_period = if modes.is_empty() { 0.5 } else { 0.25 };
    let step = (per_period / freq).min(0.05);
    let mut beat = 0.0f64;
    for (i, x) in modes.iter().enumerate() {
        for y in &modes[i + 1..] {
            beat = beat.max(2.0 * PI / (x.energy - y.energy).abs().max(1e-300));
        }
    }
    let window = (10.0 * beat).max(0.2 * t_end).min(0.5 * t_end);
    Ok(Horizon { t_end, step, window, samples: 64 })
}

/// Long-time behaviour of several initial states under the same dynamics.
#[derive(Debug, Clone)]
pub struct MemoryReport {
    pub modes: Vec<LocalizedMode>,
    /// Largest trace distance between the window-averaged states.
    pub witness: f64,
    pub averages: Vec<ReducedDensityMatrix>,
    /// Window average of `v(t,t)`.
    pub v_average: CMat,
    /// `max ‖u(t) − Σ Z_l e^{−iε_l t}‖` over the window.
    pub u_tail_error: f64,
    pub horizon: Horizon,
}

/// Evolves each probe to `horizon.t_end` and compares window averages.
pub fn detect_memory(sys: &OpenSystem, modes: &[LocalizedMode], probes: &[ReducedDensityMatrix], horizon: &Horizon) -> Result<MemoryReport> {
    let grid = horizon.grid()?;
    let pair = GreenPair::compute(sys, &grid)?;
    memory_from_pair(sys, modes, probes, horizon, &pair)
}

pub fn memory_from_pair(
    sys: &OpenSystem,
    modes: &[LocalizedMode],
    probes: &[ReducedDensityMatrix],
    horizon: &Horizon,
    pair: &GreenPair,
) -> Result<MemoryReport> {
    if probes.is_empty() {
        return Err(Error::invalid("memory detection needs at least one probe state"));
    }
    let grid = pair.grid;
    let h = grid.step();
    let first = ((grid.t_max - horizon.window) / h).floor().max(0.0) as usize;
    let count = horizon.samples.max(2);
    let mut idx: Vec<usize> = (0..count).map(|s| first + (grid.n_steps - first) * s / (count - 1)).collect();
    idx.dedup();
    let d = sys.dim();
    let stats = sys.statistics();
    let mut u_tail_error = 0.0f64;
    let mut v_average = CMat::zeros(d, d);
    let mut dressed = Vec::with_capacity(idx.len());
    for &k in &idx {
        let t = grid.time(k);
        u_tail_error = u_tail_error.max(max_abs(&(&pair.u[k] - localized_limit(modes, d, t))));
        v_average += &pair.v[k];
        dressed.push(DressedMatrices::at(pair, k, stats)?);
    }
    v_average.unscale_mut(idx.len() as f64);
    let averages = probes
        .iter()
        .map(|p| {
            let states = par::map(&dressed, |dm| evolve_exact(p, dm));
            let mut acc = CMat::zeros(p.basis.len(), p.basis.len());
            for s in states {
                acc += s?.mat;
            }
            Ok(ReducedDensityMatrix { basis: p.basis.clone(), mat: acc.unscale(idx.len() as f64) })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut witness = 0.0f64;
    for (i, x) in averages.iter().enumerate() {
        for y in &averages[i + 1..] {
            witness = witness.max(trace_distance(&x.mat, &y.mat));
        }
    }
    Ok(MemoryReport { modes: modes.to_vec(), witness, averages, v_average: hermitian_part(&v_average), u_tail_error, horizon: *horizon })
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub n_bar: CMat,
    pub rho_inf: ReducedDensityMatrix,
    pub has_localized_modes: bool,
    /// Trace distance of `ρ(∞)` to `e^{−β(H_S−μN)}/Z`; `None` when the
    /// grand-canonical state is undefined (`μ` infinite).
    pub distance_to_grand_canonical: Option<f64>,
    pub memory: MemoryReport,
}

/// Default probes: the vacuum and the state with one particle per level.
pub fn default_probes(basis: &FockBasis) -> Result<Vec<ReducedDensityMatrix>> {
    let d = basis.levels();
    Ok(vec![ReducedDensityMatrix::vacuum(basis.clone())?, ReducedDensityMatrix::fock(basis.clone(), &vec![1; d])?])
}

/// `n̄` and `ρ(∞)` from the spectrum when no localized modes exist, from
/// window averages of the dynamics otherwise; the memory witness always
/// comes from the dynamics.
pub fn steady_state_report(sys: &OpenSystem, basis: &FockBasis, horizon: Option<Horizon>) -> Result<SteadyStateReport> {
    let modes = if sys.jd.is_local() { Vec::new() } else { find_localized_modes(sys)? };
    let horizon = match horizon {
        Some(h) => h,
        None => default_horizon(sys, &modes)?,
    };
    let probes = default_probes(basis)?;
    let memory = detect_memory(sys, &modes, &probes, &horizon)?;
    let (n_bar, rho_inf) = if modes.is_empty() {
        let n_bar = occupation_integral(sys)?;
        let rho = steady_state(&n_bar, basis)?;
        (n_bar, rho)
    } else {
        (memory.v_average.clone(), memory.averages[0].clone())
    };
    let distance = if sys.bath.mu.is_finite() && sys.bath.beta > 0.0 {
        Some(trace_distance(&rho_inf.mat, &grand_canonical_state(&sys.model, &sys.bath, basis)?.mat))
    } else {
        None
    };
    Ok(SteadyStateReport { n_bar, rho_inf, has_localized_modes: !modes.is_empty(), distance_to_grand_canonical: distance, memory })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Multiplier applied to `J`.
    pub scale: f64,
    pub n_bar: CMat,
    /// `‖n̄ − f(ε_S)‖₂`.
    pub deviation: f64,
    /// Trace distance of `ρ(∞)` to the grand-canonical state.
    pub gibbs_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `‖2n̄(λ_min) − n̄(2λ_min) − f(ε_S)‖₂` when the two smallest scales differ
    /// by a factor of two.
    pub extrapolated: Option<f64>,
}

impl SweepTable {
    /// Deviations never grow by more than `slack` (relative) as λ decreases.
    pub fn is_monotone(&self, slack: f64) -> bool {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by(|x, y| y.scale.total_cmp(&x.scale));
        rows.windows(2).all(|w| w[1].deviation <= w[0].deviation * (1.0 + slack))
    }
}

/// `n̄(λ)` for `J → λJ` at each scale, compared with `f(ε_S)`.
pub fn weak_coupling_sweep(sys: &OpenSystem, scales: &[f64], basis: &FockBasis) -> Result<SweepTable> {
    let target = equilibrium_occupation(&sys.model, &sys.bath)?;
    let gibbs = grand_canonical_state(&sys.model, &sys.bath, basis)?;
    let rows = par::map(scales, |&s| -> Result<SweepRow> {
        let scaled = sys.with_coupling_scale(s)?;
        if !find_localized_modes(&scaled)?.is_empty() {
            return Err(Error::invalid(format!("localized modes appear at coupling scale {s}")));
        }
        let n_bar = occupation_integral(&scaled)?;
        let rho = steady_state(&n_bar, basis)?;
        Ok(SweepRow { scale: s, deviation: spectral_norm(&(&n_bar - &target)), gibbs_distance: trace_distance(&rho.mat, &gibbs.mat), n_bar })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|x, y| x.scale.total_cmp(&y.scale));
    let extrapolated = match sorted.as_slice() {
        [a, b, ..] if (b.scale / a.scale - 2.0).abs() < 1e-12 => Some(spectral_norm(&(&a.n_bar * c(2.0, 0.0) - &b.n_bar - &target))),
        _ => None,
    };
    Ok(SweepTable { rows, extrapolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{compute_v, noise_table, solve_u};
    use crate::linalg::from_real;
    use crate::model::SpectralDensity;
    use crate::spectral::{spectrum, EnergyGrid};

    fn lorentz_sys(g: f64, w0: f64, bath: BathConfig) -> OpenSystem {
        let jd = SpectralDensity::lorentzian(from_real(1, &[g]), 0.0, 1.0, -10.0, 10.0).unwrap();
        OpenSystem::new(SystemModel::fermion(from_real(1, &[w0])).unwrap(), bath, jd).unwrap()
    }

    #[test]
    fn empty_bath_has_no_occupation() {
        let sys = lorentz_sys(0.5, 0.3, BathConfig::zero_temperature(-20.0));
        assert_eq!(max_abs(&steady_occupation_adaptive(&sys).unwrap()), 0.0);
        let rho = steady_state(&CMat::zeros(1, 1), &FockBasis::fermionic(1)).unwrap();
        assert_eq!(rho.populations(), vec![1.0, 0.0]);
    }

    #[test]
    fn table_and_adaptive_quadrature_agree() {
        let sys = lorentz_sys(0.5, 0.3, BathConfig::new(2.0, 0.1).unwrap());
        let table = spectrum(&sys, &EnergyGrid::adaptive(&sys, 1.0, 1e-10).unwrap()).unwrap();
        let a = steady_occupation(&table, &sys.bath, Statistics::Fermion).unwrap();
        let b = steady_occupation_adaptive(&sys).unwrap();
        assert!(max_abs(&(a - b)) < 1e-8);
    }

    #[test]
    fn long_time_v_reaches_n_bar() {
        let sys = lorentz_sys(0.8, 0.3, BathConfig::new(2.0, 0.0).unwrap());
        let horizon = default_horizon(&sys, &[]).unwrap();
        let grid = horizon.grid().unwrap();
        let u = solve_u(&sys.model, &sys.jd, &grid).unwrap();
        let v = compute_v(&u, &noise_table(&sys.jd, &sys.bath, Statistics::Fermion, &grid).unwrap(), &grid).unwrap();
        let n_bar = steady_occupation_adaptive(&sys).unwrap();
        assert!(max_abs(&(&v[grid.n_steps] - &n_bar)) < 1e-3, "{}", max_abs(&(&v[grid.n_steps] - &n_bar)));
    }

    #[test]
    fn flat_band_at_high_temperature_gives_f_of_level() {
        let jd = SpectralDensity::wide_band(from_real(1, &[0.02]), -50.0, 50.0).unwrap();
        let bath = BathConfig::new(0.05, 0.3).unwrap();
        let sys = OpenSystem::new(SystemModel::fermion(from_real(1, &[1.0])).unwrap(), bath, jd).unwrap();
        let n = steady_occupation_adaptive(&sys).unwrap();
        let f = bath.occupation(Statistics::Fermion, 1.0).unwrap();
        assert!((n[(0, 0)].re - f).abs() < 1e-3);
    }

    #[test]
    fn gibbs_state_of_one_level() {
        let model = SystemModel::fermion(from_real(1, &[0.7])).unwrap();
        let bath = BathConfig::new(1.3, 0.2).unwrap();
        let rho = grand_canonical_state(&model, &bath, &FockBasis::fermionic(1)).unwrap();
        let f = bath.occupation(Statistics::Fermion, 0.7).unwrap();
        assert!((rho.populations()[1] - f).abs() < 1e-14);
        let th = steady_state(&from_real(1, &[f]), &FockBasis::fermionic(1)).unwrap();
        assert!(trace_distance(&th.mat, &rho.mat) < 1e-14);
    }

    #[test]
    fn relaxation_width_of_a_broad_peak() {
        // Weak coupling: D is nearly Lorentzian with FWHM J(ω₀).
        let sys = lorentz_sys(0.05, 0.0, BathConfig::empty());
        let w = relaxation_width(&sys).unwrap();
        assert!((w - 0.05).abs() < 2e-3, "{w}");
    }

    #[test]
    fn sweep_approaches_equilibrium() {
        let jd = SpectralDensity::lorentzian(from_real(1, &[1.0]), 1.0, 1.0, -9.0, 11.0).unwrap();
        let sys = OpenSystem::new(SystemModel::fermion(from_real(1, &[1.0])).unwrap(), BathConfig::new(1.0, 0.0).unwrap(), jd).unwrap();
        let table = weak_coupling_sweep(&sys, &[0.8, 0.4, 0.2, 0.1], &FockBasis::fermionic(1)).unwrap();
        assert!(table.is_monotone(0.05));
        assert!(table.extrapolated.unwrap() < table.rows.iter().map(|r| r.deviation).fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn decoupled_levels_remember_everything() {
        let jd = SpectralDensity::lorentzian(from_real(1, &[1e-12]), 0.0, 1.0, -5.0, 5.0).unwrap();
        let sys = OpenSystem::new(SystemModel::fermion(from_real(1, &[8.0])).unwrap(), BathConfig::empty(), jd).unwrap();
        let modes = find_localized_modes(&sys).unwrap();
        let basis = FockBasis::fermionic(1);
        let horizon = Horizon { t_end: 5.0, step: 0.01, window: 2.0, samples: 16 };
        let report = detect_memory(&sys, &modes, &default_probes(&basis).unwrap(), &horizon).unwrap();
        assert!((report.witness - 1.0).abs() < 1e-6);
    }
}
