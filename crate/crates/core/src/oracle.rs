//! Brute-force ground truth: a reservoir discretized into finitely many
//! modes, evolved either at the single-particle level or as a full
//! many-body fermionic problem.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::fock::FockBasis;
use crate::linalg::{c, eigh, hermitian_part, max_abs, min_eigenvalue, CMat, CVec, C64};
use crate::model::{BathConfig, BathMode, SpectralDensity, Statistics};
use crate::{Error, Result};

/// `[[ε_S, C], [C†, diag(ε_k)]]` with `C[i, k]` the coupling of mode `k` to
/// level `i`.
pub fn total_matrix(eps_s: &CMat, modes: &[BathMode]) -> CMat {
    let d = eps_s.nrows();
    let n = modes.len();
    let mut h = CMat::zeros(d + n, d + n);
    h.view_mut((0, 0), (d, d)).copy_from(eps_s);
    for (k, m) in modes.iter().enumerate() {
        h[(d + k, d + k)] = c(m.energy, 0.0);
        for i in 0..d {
            h[(i, d + k)] = m.coupling[i];
            h[(d + k, i)] = m.coupling[i].conj();
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBath {
    pub modes: Vec<BathMode>,
    /// Cell width used by the midpoint rule.
    pub spacing: f64,
}

impl DiscretizedBath {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.energy).collect()
    }

    pub fn total_matrix(&self, eps_s: &CMat) -> CMat {
        total_matrix(eps_s, &self.modes)
    }

    pub fn spectral_density(&self) -> Result<SpectralDensity> {
        SpectralDensity::discrete(self.modes.clone())
    }

    /// `2π Σ_k V_k V_k† δ(ε−ε_k)` with each delta spread over its cell.
    pub fn smoothed_density(&self, eps: f64) -> CMat {
        let d = self.modes.first().map_or(0, |m| m.coupling.len());
        let mut out = CMat::zeros(d, d);
        for m in &self.modes {
            if (eps - m.energy).abs() <= 0.5 * self.spacing {
                out += (&m.coupling * m.coupling.adjoint()) * c(2.0 * PI / self.spacing, 0.0);
            }
        }
        out
    }

    /// Time after which the finite reservoir starts to echo, `2π/Δε`.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing
    }
}

/// Midpoint discretization of `window` into `n` cells. Each cell contributes
/// one mode per nonzero eigenvalue of `J(ε_k)Δε/2π`, so `Σ_k V_k V_k†` over a
/// cell reproduces that matrix exactly.
pub fn discretize(jd: &SpectralDensity, window: (f64, f64), n: usize) -> Result<DiscretizedBath> {
    if n < 2 || !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
        return Err(Error::invalid("discretization needs at least two cells on a finite window"));
    }
    if jd.is_discrete() {
        return Err(Error::invalid("density is already discrete"));
    }
    let spacing = (window.1 - window.0) / n as f64;
    let mut modes = Vec::new();
    for k in 0..n {
        let e = window.0 + (k as f64 + 0.5) * spacing;
        let cell = jd.evaluate(e)? * c(spacing / (2.0 * PI), 0.0);
        let (vals, vecs) = eigh(&cell);
        let scale = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if vals.first().copied().unwrap_or(0.0) < -1e-12 * scale.max(1e-300) {
            return Err(Error::invalid(format!("spectral density is not PSD at {e}")));
        }
        for (l, &lam) in vals.iter().enumerate() {
            if lam > 1e-14 * scale && lam > 0.0 {
                let coupling: CVec = vecs.column(l) * c(lam.sqrt(), 0.0);
                modes.push(BathMode { energy: e, coupling });
            }
        }
    }
    Ok(DiscretizedBath { modes, spacing })
}

/// Blocks of `e^{−iε_tot t}`.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub u_ss: CMat,
    pub u_se: CMat,
    pub u_es: CMat,
    /// `u_SE f(ε_E) u_SE†`.
    pub v: CMat,
}

/// Single-particle propagation of system plus discretized reservoir. The
/// eigen-decomposition of `ε_tot` is computed once and reused for every `t`.
#[derive(Debug, Clone)]
pub struct BlockPropagator {
    d: usize,
    vals: Vec<f64>,
    vecs: CMat,
    occupations: Vec<f64>,
}

impl BlockPropagator {
    pub fn new(eps_s: &CMat, modes: &[BathMode], bath: &BathConfig, statistics: Statistics) -> Result<Self> {
        let occupations = modes.iter().map(|m| bath.occupation(statistics, m.energy)).collect::<Result<Vec<_>>>()?;
        let (vals, vecs) = eigh(&total_matrix(eps_s, modes));
        Ok(BlockPropagator { d: eps_s.nrows(), vals, vecs, occupations })
    }

    pub fn total_propagator(&self, t: f64) -> CMat {
        let mut scaled = self.vecs.clone();
        for (j, &l) in self.vals.iter().enumerate() {
            let ph = C64::from_polar(1.0, -l * t);
            for x in scaled.column_mut(j).iter_mut() {
                *x *= ph;
            }
        }
        scaled * self.vecs.adjoint()
    }

    /// Blocks at time `t`. Only the first `d` rows of `e^{−iε_tot t}` and its
    /// first `d` columns are formed.
    pub fn blocks(&self, t: f64) -> Blocks {
        let d = self.d;
        let n = self.occupations.len();
        let top = self.vecs.rows(0, d);
        let mut scaled = top.into_owned();
        for (j, &l) in self.vals.iter().enumerate() {
            let ph = C64::from_polar(1.0, -l * t);
            for x in scaled.column_mut(j).iter_mut() {
                *x *= ph;
            }
        }
        // Rows 0..d of U, and U_{ES} = (V_E Φ V_S†).
        let rows = &scaled * self.vecs.adjoint();
        let u_ss = rows.columns(0, d).into_owned();
        let u_se = rows.columns(d, n).into_owned();
        let mut conj_phase = self.vecs.rows(d, n).into_owned();
        for (j, &l) in self.vals.iter().enumerate() {
            let ph = C64::from_polar(1.0, -l * t);
            for x in conj_phase.column_mut(j).iter_mut() {
                *x *= ph;
            }
        }
        let u_es = conj_phase * top.adjoint();
        let mut weighted = u_se.clone();
        for (k, &f) in self.occupations.iter().enumerate() {
            for x in weighted.column_mut(k).iter_mut() {
                *x *= f;
            }
        }
        let v = hermitian_part(&(weighted * u_se.adjoint()));
        Blocks { u_ss, u_se, u_es, v }
    }
}

pub fn single_particle_blocks(eps_s: &CMat, db: &DiscretizedBath, bath: &BathConfig, statistics: Statistics, t: f64) -> Result<Blocks> {
    Ok(BlockPropagator::new(eps_s, &db.modes, bath, statistics)?.blocks(t))
}

/// Largest number of fermionic modes (system plus reservoir) the many-body
/// oracle accepts.
pub const MAX_MODES: usize = 14;

/// Exact many-body evolution of a fermionic system plus discretized
/// reservoir. The quadratic Hamiltonian conserves particle number, so each
/// number sector is diagonalized once.
#[derive(Debug, Clone)]
pub struct ManyBodyOracle {
    d: usize,
    modes: usize,
    /// For each particle number, the bitmasks in that sector.
    sectors: Vec<Vec<u32>>,
    /// `(sector, index)` of every bitmask.
    position: Vec<(usize, usize)>,
    eig: Vec<(Vec<f64>, CMat)>,
    bath_weights: Vec<f64>,
}

fn jw_sign(mask: u32, mode: usize) -> f64 {
    if (mask & ((1u32 << mode) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl ManyBodyOracle {
    pub fn new(eps_s: &CMat, db: &DiscretizedBath, bath: &BathConfig) -> Result<Self> {
        let d = eps_s.nrows();
        let m = d + db.len();
        if m > MAX_MODES {
            return Err(Error::TooLarge { n: m, limit: MAX_MODES });
        }
        let h = db.total_matrix(eps_s);
        let mut sectors: Vec<Vec<u32>> = (0..=m).map(|_| Vec::new()).collect();
        let mut position = alloc::vec![(0, 0); 1 << m];
        for mask in 0..(1u32 << m) {
            let n = mask.count_ones() as usize;
            position[mask as usize] = (n, sectors[n].len());
            sectors[n].push(mask);
        }
        let mut eig = Vec::with_capacity(sectors.len());
        for states in &sectors {
            let dim = states.len();
            let mut hs = CMat::zeros(dim, dim);
            for (col, &s) in states.iter().enumerate() {
                for q in 0..m {
                    if s & (1 << q) == 0 {
                        continue;
                    }
                    let s1 = s & !(1 << q);
                    let sign_q = jw_sign(s, q);
                    for p in 0..m {
                        if h[(p, q)] == c(0.0, 0.0) || s1 & (1 << p) != 0 {
                            continue;
                        }
                        let s2 = s1 | (1 << p);
                        let sign = sign_q * jw_sign(s1, p);
                        let row = position[s2 as usize].1;
                        hs[(row, col)] += h[(p, q)] * sign;
                    }
                }
            }
            eig.push(eigh(&hs));
        }
        let bath_weights = (0..(1u32 << db.len()))
            .map(|b| {
                db.modes.iter().enumerate().try_fold(1.0, |acc, (k, mode)| {
                    let f = bath.occupation(Statistics::Fermion, mode.energy)?;
                    Ok(acc * if b & (1 << k) != 0 { f } else { 1.0 - f })
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(ManyBodyOracle { d, modes: m, sectors, position, eig, bath_weights })
    }

    fn sector_propagator(&self, n: usize, t: f64) -> CMat {
        let (vals, vecs) = &self.eig[n];
        let mut scaled = vecs.clone();
        for (j, &l) in vals.iter().enumerate() {
            let ph = C64::from_polar(1.0, -l * t);
            for x in scaled.column_mut(j).iter_mut() {
                *x *= ph;
            }
        }
        scaled * vecs.adjoint()
    }

    /// Reduced density matrix of the system at time `t`, starting from
    /// `rho0 ⊗ ρ_E` with `rho0` expressed in `basis`.
    pub fn evolve(&self, basis: &FockBasis, rho0: &CMat, t: f64) -> Result<CMat> {
        let d = self.d;
        if basis.statistics() != Statistics::Fermion || basis.levels() != d {
            return Err(Error::invalid("many-body oracle needs a fermionic basis on the system levels"));
        }
        let sys_mask: Vec<u32> = basis.states().iter().map(|s| s.counts().iter().enumerate().fold(0u32, |m, (i, &k)| m | ((k as u32) << i))).collect();
        let nb = self.modes - d;
        let ns = self.sectors.len();
        // Block (a, b) of the total density matrix between number sectors.
        let mut blocks: Vec<Vec<Option<CMat>>> = (0..ns).map(|_| alloc::vec![None; ns]).collect();
        for (i, &si) in sys_mask.iter().enumerate() {
            for (j, &sj) in sys_mask.iter().enumerate() {
                let r = rho0[(i, j)];
                if r == c(0.0, 0.0) {
                    continue;
                }
                for b in 0..(1u32 << nb) {
                    let w = self.bath_weights[b as usize];
                    if w == 0.0 {
                        continue;
                    }
                    let (sa, ia) = self.position[(si | (b << d)) as usize];
                    let (sb, ib) = self.position[(sj | (b << d)) as usize];
                    let blk = blocks[sa][sb].get_or_insert_with(|| CMat::zeros(self.sectors[sa].len(), self.sectors[sb].len()));
                    blk[(ia, ib)] += r * w;
                }
            }
        }
        let props: Vec<Option<CMat>> = (0..ns)
            .map(|n| {
                let used = blocks[n].iter().any(|b| b.is_some()) || blocks.iter().any(|row| row[n].is_some());
                used.then(|| self.sector_propagator(n, t))
            })
            .collect();
        let mut evolved: Vec<Vec<Option<CMat>>> = (0..ns).map(|_| alloc::vec![None; ns]).collect();
        for (sa, row) in blocks.iter().enumerate() {
            for (sb, blk) in row.iter().enumerate() {
                if let Some(blk) = blk {
                    let (ua, ub) = (props[sa].as_ref().unwrap(), props[sb].as_ref().unwrap());
                    evolved[sa][sb] = Some(ua * blk * ub.adjoint());
                }
            }
        }
        // Partial trace over the reservoir bits.
        let dim = basis.len();
        let mut out = CMat::zeros(dim, dim);
        for (i, &si) in sys_mask.iter().enumerate() {
            for (j, &sj) in sys_mask.iter().enumerate() {
                for b in 0..(1u32 << nb) {
                    let (sa, ia) = self.position[(si | (b << d)) as usize];
                    let (sb, ib) = self.position[(sj | (b << d)) as usize];
                    if let Some(blk) = &evolved[sa][sb] {
                        out[(i, j)] += blk[(ia, ib)];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One-call form of [`ManyBodyOracle::evolve`].
pub fn many_body_evolve(eps_s: &CMat, db: &DiscretizedBath, bath: &BathConfig, basis: &FockBasis, rho0: &CMat, t: f64) -> Result<CMat> {
    ManyBodyOracle::new(eps_s, db, bath)?.evolve(basis, rho0, t)
}

/// `⟨a_j† a_i⟩` of a density matrix in `basis`, as the matrix `n_ij`.
pub fn one_body_matrix(basis: &FockBasis, rho: &CMat) -> CMat {
    let d = basis.levels();
    let mut n = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let op = basis.hopping(j, i);
            n[(i, j)] = crate::linalg::trace(&(rho * op));
        }
    }
    n
}

/// Sanity check for PSD-ness of an oracle output.
pub fn audit(rho: &CMat) -> (f64, f64, f64) {
    let tr = crate::linalg::trace(rho);
    ((tr - c(1.0, 0.0)).norm(), min_eigenvalue(rho), max_abs(&(rho - rho.adjoint())))
}
