//! Exact reduced dynamics: the thermal-like state, the split expansion of
//! `ρ(t)` over dressed creation strings, coherent-state matrix elements and
//! the time-local master equation that reproduces it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::fock::{build_submatrix, enumerate_splits, factorial, statistics_form, FockBasis, OccupationSequence};
use crate::greens::GreenPair;
use crate::linalg::{c, eigh, eye, hermitian_part, hermiticity_error, inverse, max_abs, min_eigenvalue, spectral_norm, trace, CMat, CVec, C64, I};
use crate::model::Statistics;
use crate::{par, Error, Result};

/// Thresholds every emitted state is held to.
pub const TRACE_TOL: f64 = 1e-6;
pub const POSITIVITY_TOL: f64 = 1e-8;
pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub hermiticity: f64,
}

impl Audit {
    pub fn passes(&self) -> bool {
        self.trace_error <= TRACE_TOL && self.min_eigenvalue >= -POSITIVITY_TOL && self.hermiticity <= HERMITICITY_TOL
    }
}

/// A density matrix over a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix {
    pub basis: FockBasis,
    pub mat: CMat,
}

impl ReducedDensityMatrix {
    /// Checks shape, Hermiticity, trace and positivity.
    pub fn new(basis: FockBasis, mat: CMat) -> Result<Self> {
        if mat.nrows() != basis.len() || mat.ncols() != basis.len() {
            return Err(Error::invalid(format!("density matrix must be {0}x{0}", basis.len())));
        }
        let rho = ReducedDensityMatrix { basis, mat };
        let a = rho.audit();
        if a.hermiticity > HERMITICITY_TOL {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        if a.trace_error > 1e-8 {
            return Err(Error::Trace(a.trace_error));
        }
        if a.min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::invalid(format!("density matrix has eigenvalue {}", a.min_eigenvalue)));
        }
        Ok(rho)
    }

    /// `|ψ⟩⟨ψ|` for `ψ = Σ amp |counts⟩`, normalized.
    pub fn pure(basis: FockBasis, amplitudes: &[(Vec<usize>, C64)]) -> Result<Self> {
        let mut psi = CVec::zeros(basis.len());
        for (counts, amp) in amplitudes {
            let k = basis.index_of(counts).ok_or_else(|| Error::invalid(format!("occupation {counts:?} is outside the basis")))?;
            psi[k] += amp;
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::invalid("zero state vector"));
        }
        psi.unscale_mut(norm);
        let mat = &psi * psi.adjoint();
        Self::new(basis, mat)
    }

    pub fn fock(basis: FockBasis, counts: &[usize]) -> Result<Self> {
        Self::pure(basis, &[(counts.to_vec(), c(1.0, 0.0))])
    }

    pub fn vacuum(basis: FockBasis) -> Result<Self> {
        let d = basis.levels();
        Self::fock(basis, &vec![0; d])
    }

    /// `Σ p_k |counts_k⟩⟨counts_k|`, normalized.
    pub fn mixture(basis: FockBasis, weights: &[(Vec<usize>, f64)]) -> Result<Self> {
        let mut mat = CMat::zeros(basis.len(), basis.len());
        let mut total = 0.0;
        for (counts, p) in weights {
            let k = basis.index_of(counts).ok_or_else(|| Error::invalid(format!("occupation {counts:?} is outside the basis")))?;
            if !(*p >= 0.0) {
                return Err(Error::invalid("mixture weights must be non-negative"));
            }
            mat[(k, k)] += c(*p, 0.0);
            total += p;
        }
        if !(total > 0.0) {
            return Err(Error::invalid("mixture has no weight"));
        }
        Self::new(basis, mat.unscale(total))
    }

    pub fn audit(&self) -> Audit {
        Audit {
            trace_error: (trace(&self.mat) - c(1.0, 0.0)).norm(),
            min_eigenvalue: min_eigenvalue(&hermitian_part(&self.mat)),
            hermiticity: hermiticity_error(&self.mat),
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.mat.nrows()).map(|k| self.mat[(k, k)].re).collect()
    }

    /// `n_ij = Tr[ρ a_j† a_i]`.
    pub fn one_body(&self) -> CMat {
        crate::oracle::one_body_matrix(&self.basis, &self.mat)
    }
}

/// Matrices derived from `u(t)` and `v(t,t)` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedMatrices {
    pub statistics: Statistics,
    pub u: CMat,
    pub v: CMat,
    /// `ũ = (1 ± v)⁻¹ u`.
    pub u_tilde: CMat,
    /// `Ã = I − u† (1 ± v)⁻¹ u`.
    pub a_tilde: CMat,
    /// `v (1 ± v)⁻¹`, the thermal kernel.
    pub w: CMat,
    /// `det(1 ± v)`, real and positive.
    pub det: f64,
}

impl DressedMatrices {
    pub fn new(u: &CMat, v: &CMat, statistics: Statistics) -> Result<Self> {
        let d = u.nrows();
        let s = statistics.sign();
        let one_pm_v = eye(d) + v * c(s, 0.0);
        let inv = inverse(&one_pm_v).map_err(|_| Error::Singular(format!("1 {} v is not invertible", if s > 0.0 { "+" } else { "-" })))?;
        let u_tilde = &inv * u;
        let a_tilde = eye(d) - u.adjoint() * &u_tilde;
        let w = hermitian_part(&(v * &inv));
        let det = crate::linalg::det(&one_pm_v).re;
        Ok(DressedMatrices { statistics, u: u.clone(), v: v.clone(), u_tilde, a_tilde, w, det })
    }

    pub fn at(pair: &GreenPair, k: usize, statistics: Statistics) -> Result<Self> {
        Self::new(&pair.u[k], &pair.v[k], statistics)
    }
}

/// Occupations of `d` modes with total at most `cap`, each at most `per`.
fn configurations(d: usize, cap: usize, per: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    fn rec(level: usize, left: usize, per: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if level == cur.len() {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left.min(per) {
            cur[level] = k;
            rec(level + 1, left - k, per, cur, out);
        }
        cur[level] = 0;
    }
    rec(0, cap, per, &mut cur, &mut out);
    out
}

/// `ρ^th` on the basis before renormalization, with the probability kept.
fn thermal_raw(v: &CMat, basis: &FockBasis) -> Result<(CMat, f64)> {
    let d = basis.levels();
    if v.nrows() != d {
        return Err(Error::invalid("v does not match the basis"));
    }
    let stats = basis.statistics();
    let (vals, vecs) = eigh(&hermitian_part(v));
    let tol = 1e-8;
    for &n in &vals {
        if n < -tol || (stats == Statistics::Fermion && n > 1.0 + tol) {
            return Err(Error::invalid(format!("occupation eigenvalue {n} out of range")));
        }
    }
    let occ: Vec<f64> = vals.iter().map(|&n| if stats == Statistics::Fermion { n.clamp(0.0, 1.0) } else { n.max(0.0) }).collect();
    let dim = basis.len();
    let creators: Vec<CMat> = (0..d).map(|l| basis.creation(l)).collect();
    // b_λ† = Σ_m S_{mλ} a_m†
    let rotated: Vec<CMat> = (0..d)
        .map(|lam| {
            let mut op = CMat::zeros(dim, dim);
            for (m, cm) in creators.iter().enumerate() {
                op += cm * vecs[(m, lam)];
            }
            op
        })
        .collect();
    let per = if stats == Statistics::Fermion { 1 } else { basis.n_cap() };
    let mut rho = CMat::zeros(dim, dim);
    let mut mass = 0.0;
    let mut vac = CVec::zeros(dim);
    vac[0] = c(1.0, 0.0);
    for conf in configurations(d, basis.n_cap(), per) {
        let mut p = 1.0;
        for (&k, &n) in conf.iter().zip(&occ) {
            p *= match stats {
                Statistics::Fermion => {
                    if k == 1 {
                        n
                    } else {
                        1.0 - n
                    }
                }
                Statistics::Boson => n.powi(k as i32) / (1.0 + n).powi(k as i32 + 1),
            };
        }
        if p == 0.0 {
            continue;
        }
        mass += p;
        let mut psi = vac.clone();
        for (lam, &k) in conf.iter().enumerate() {
            for _ in 0..k {
                psi = &rotated[lam] * psi;
            }
            psi.unscale_mut(factorial(k).sqrt());
        }
        rho += (&psi * psi.adjoint()) * c(p, 0.0);
    }
    Ok((rho, mass))
}

/// The Gaussian state whose one-body matrix is `v`, renormalized after
/// truncation. Returns the state and the discarded probability.
pub fn thermal_like_state(v: &CMat, basis: &FockBasis) -> Result<(ReducedDensityMatrix, f64)> {
    let (rho, mass) = thermal_raw(v, basis)?;
    let lost = (1.0 - mass).max(0.0);
    if lost > TRACE_TOL {
        return Err(Error::Truncation { mass: lost });
    }
    let mat = hermitian_part(&rho.unscale(mass));
    Ok((ReducedDensityMatrix { basis: basis.clone(), mat }, lost))
}

/// `Π_{i ∈ seq} B_i†` with `B_i† = Σ_k ũ_{ki} a_k†`, leftmost first.
fn dressed_string(seq: &[usize], dressed_creators: &[CMat], dim: usize) -> CMat {
    let mut op = eye(dim);
    for &i in seq {
        op = &op * &dressed_creators[i];
    }
    op
}

type PairCoefficients = BTreeMap<(Vec<usize>, Vec<usize>), C64>;

/// Coefficients of `(a†ũ)_{Ī′} ρ^th (ũ†a)_{J̄′}`, keyed by the complements.
fn split_coefficients(rho0: &ReducedDensityMatrix, dressed: &DressedMatrices) -> Result<PairCoefficients> {
    let stats = rho0.basis.statistics();
    let states = rho0.basis.states();
    let mut coeffs = PairCoefficients::new();
    for (a, si) in states.iter().enumerate() {
        for (b, sj) in states.iter().enumerate() {
            let rij = rho0.mat[(a, b)];
            if rij == c(0.0, 0.0) {
                continue;
            }
            let norm = (si.factorial_product() * sj.factorial_product()).sqrt();
            for pair in enumerate_splits(si, sj, stats) {
                let sub = build_submatrix(&dressed.a_tilde, &pair.j.chosen, &pair.i.chosen)?;
                let form = statistics_form(&sub, stats)?;
                // Fermions: the contracted operators pass the uncontracted
                // ones, (−1)^{|I′|(|I|+|J|)}.
                let k = pair.i.chosen.total();
                let reorder = if stats == Statistics::Fermion && (k * (si.total() + sj.total())) % 2 == 1 { -1.0 } else { 1.0 };
                let coef = rij * form * (reorder * pair.weight(stats) / norm);
                if coef == c(0.0, 0.0) {
                    continue;
                }
                *coeffs.entry((pair.i.complement.sequence(), pair.j.complement.sequence())).or_insert(c(0.0, 0.0)) += coef;
            }
        }
    }
    Ok(coeffs)
}

/// `ρ(t)` from `ρ(0)` and the dressed matrices at `t`:
/// `Σ_IJ ρ_IJ Σ_{splits} s |Ã_{J′,I′}|± (a†ũ)_{Ī′} ρ^th (ũ†a)_{J̄′} / √(I!J!)`.
pub fn evolve_exact(rho0: &ReducedDensityMatrix, dressed: &DressedMatrices) -> Result<ReducedDensityMatrix> {
    let basis = &rho0.basis;
    if dressed.statistics != basis.statistics() || dressed.u.nrows() != basis.levels() {
        return Err(Error::invalid("dressed matrices do not match the basis"));
    }
    let dim = basis.len();
    let (rho_th, _) = thermal_raw(&dressed.v, basis)?;
    let coeffs = split_coefficients(rho0, dressed)?;
    let creators: Vec<CMat> = (0..basis.levels()).map(|l| basis.creation(l)).collect();
    let dressed_creators: Vec<CMat> = (0..basis.levels())
        .map(|i| {
            let mut op = CMat::zeros(dim, dim);
            for (k, ck) in creators.iter().enumerate() {
                op += ck * dressed.u_tilde[(k, i)];
            }
            op
        })
        .collect();
    let mut strings: BTreeMap<Vec<usize>, CMat> = BTreeMap::new();
    for (li, lj) in coeffs.keys() {
        for s in [li, lj] {
            if !strings.contains_key(s) {
                strings.insert(s.clone(), dressed_string(s, &dressed_creators, dim));
            }
        }
    }
    let mut out = CMat::zeros(dim, dim);
    for ((li, lj), coef) in &coeffs {
        let left = &strings[li];
        let right = &strings[lj];
        out += (left * &rho_th * right.adjoint()) * *coef;
    }
    let mat = hermitian_part(&out);
    let err = (trace(&mat) - c(1.0, 0.0)).norm();
    if err > TRACE_TOL {
        return Err(Error::Trace(err));
    }
    Ok(ReducedDensityMatrix { basis: basis.clone(), mat })
}

/// `ρ(t_k)` at every sample of a Green pair, in parallel over times.
pub fn evolve_trajectory(rho0: &ReducedDensityMatrix, pair: &GreenPair) -> Result<Vec<ReducedDensityMatrix>> {
    let stats = rho0.basis.statistics();
    let idx: Vec<usize> = (0..pair.len()).collect();
    par::map(&idx, |&k| evolve_exact(rho0, &DressedMatrices::at(pair, k, stats)?)).into_iter().collect()
}

fn require_bosons(basis: &FockBasis) -> Result<()> {
    if basis.statistics() != Statistics::Boson {
        return Err(Error::invalid("coherent-state matrix elements are only defined for bosons"));
    }
    Ok(())
}

/// `⟨η|ρ|η⟩` with unnormalized coherent states `|η⟩ = Σ_I η^I/√I! |I⟩`,
/// read off the assembled matrix.
pub fn coherent_matrix_element(rho: &ReducedDensityMatrix, eta: &[C64]) -> Result<C64> {
    require_bosons(&rho.basis)?;
    if eta.len() != rho.basis.levels() {
        return Err(Error::invalid("η has the wrong length"));
    }
    let amp: Vec<C64> = rho
        .basis
        .states()
        .iter()
        .map(|s| {
            let mut a = c(1.0, 0.0);
            for (&k, &e) in s.counts().iter().zip(eta) {
                a *= e.powu(k as u32);
            }
            a / s.factorial_product().sqrt()
        })
        .collect();
    let mut acc = c(0.0, 0.0);
    for (a, x) in amp.iter().enumerate() {
        for (b, y) in amp.iter().enumerate() {
            acc += x.conj() * rho.mat[(a, b)] * y;
        }
    }
    Ok(acc)
}

/// The same element from the closed form, without building `ρ(t)`:
/// `Σ_IJ ρ_IJ Σ s |Ã_{J′,I′}| (η*ũ)_{Ī′} (ũ†η)_{J̄′} e^{η* w η} / det(1+v) / √(I!J!)`.
pub fn coherent_closed_form(rho0: &ReducedDensityMatrix, dressed: &DressedMatrices, eta: &[C64]) -> Result<C64> {
    require_bosons(&rho0.basis)?;
    let d = rho0.basis.levels();
    if eta.len() != d {
        return Err(Error::invalid("η has the wrong length"));
    }
    let e = CVec::from_column_slice(eta);
    let left = (e.adjoint() * &dressed.u_tilde).transpose();
    let right = dressed.u_tilde.adjoint() * &e;
    let gauss = (e.adjoint() * &dressed.w * &e)[(0, 0)].exp() / dressed.det;
    let coeffs = split_coefficients(rho0, dressed)?;
    let mut acc = c(0.0, 0.0);
    for ((li, lj), coef) in coeffs {
        let l: C64 = li.iter().map(|&i| left[i]).product();
        let r: C64 = lj.iter().map(|&j| right[j]).product();
        acc += coef * l * r;
    }
    Ok(acc * gauss)
}

/// Time-local generator coefficients on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterEqCoefficients {
    pub times: Vec<f64>,
    /// Renormalized energy `ε̃(t)`.
    pub eps_tilde: Vec<CMat>,
    /// Dissipation `γ(t)`.
    pub gamma: Vec<CMat>,
    /// Fluctuation `γ̃(t)`.
    pub gamma_tilde: Vec<CMat>,
}

impl MasterEqCoefficients {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Fourth-order finite difference of a uniformly sampled series.
fn derivative(xs: &[CMat], h: f64) -> Result<Vec<CMat>> {
    let n = xs.len();
    if n < 5 {
        return Err(Error::invalid("at least five samples are needed for derivatives"));
    }
    let mut out = Vec::with_capacity(n);
    let comb = |w: &[f64], start: usize| {
        let mut acc = CMat::zeros(xs[0].nrows(), xs[0].ncols());
        for (k, &wk) in w.iter().enumerate() {
            acc += &xs[start + k] * c(wk / (12.0 * h), 0.0);
        }
        acc
    };
    let fwd0 = [-25.0, 48.0, -36.0, 16.0, -3.0];
    let fwd1 = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let center = [1.0, -8.0, 0.0, 8.0, -1.0];
    out.push(comb(&fwd0, 0));
    out.push(comb(&fwd1, 0));
    for k in 2..n - 2 {
        out.push(comb(&center, k - 2));
    }
    let rev = |w: [f64; 5]| {
        let mut r = w;
        r.reverse();
        r.map(|x| -x)
    };
    out.push(comb(&rev(fwd1), n - 5));
    out.push(comb(&rev(fwd0), n - 5));
    Ok(out)
}

const KAPPA_STEP_LIMIT: f64 = 0.5;

/// `κ = u̇u⁻¹`, `ε̃ = (i/2)(κ − κ†)`, `γ = −(κ + κ†)/2`,
/// `γ̃ = v̇ − κv − vκ†`.
///
/// Fails with [`Error::Singular`] where `‖κ‖h > 1/2`: near a zero of `det u`
/// the generator changes faster than the grid resolves.
pub fn extract_me_coefficients(pair: &GreenPair) -> Result<MasterEqCoefficients> {
    let h = pair.grid.step();
    let du = derivative(&pair.u, h)?;
    let dv = derivative(&pair.v, h)?;
    let mut out = MasterEqCoefficients { times: pair.grid.times(), eps_tilde: vec![], gamma: vec![], gamma_tilde: vec![] };
    for k in 0..pair.len() {
        let inv = inverse(&pair.u[k]).map_err(|_| Error::Singular(format!("u is not invertible at t = {}", out.times[k])))?;
        let kappa = &du[k] * inv;
        let rate = spectral_norm(&kappa) * h;
        if !(rate <= KAPPA_STEP_LIMIT) {
            return Err(Error::Singular(format!("u is nearly singular at t = {} (‖u̇u⁻¹‖h = {rate:.3e})", out.times[k])));
        }
        let ka = kappa.adjoint();
        out.eps_tilde.push(hermitian_part(&((&kappa - &ka) * c(0.0, 0.5))));
        out.gamma.push(hermitian_part(&((&kappa + &ka) * c(-0.5, 0.0))));
        let v = &pair.v[k];
        out.gamma_tilde.push(hermitian_part(&(&dv[k] - &kappa * v - v * &ka)));
    }
    Ok(out)
}

/// Operators needed by the generator on one basis.
struct Generator {
    sign: f64,
    a: Vec<CMat>,
    ad: Vec<CMat>,
    hop: Vec<Vec<CMat>>,
    /// `(−1)^N` diagonal for fermions; sandwiched terms act on `PρP` so that
    /// parity-odd coherences pick up the sign of the traced-out reservoir.
    parity: Option<Vec<f64>>,
}

impl Generator {
    fn new(basis: &FockBasis) -> Self {
        let d = basis.levels();
        let ad: Vec<CMat> = (0..d).map(|i| basis.creation(i)).collect();
        let a = ad.iter().map(|m| m.adjoint()).collect();
        let hop = (0..d).map(|i| (0..d).map(|j| basis.hopping(i, j)).collect()).collect();
        let parity =
            (basis.statistics() == Statistics::Fermion).then(|| basis.states().iter().map(|st| if st.total() % 2 == 0 { 1.0 } else { -1.0 }).collect());
        Generator { sign: basis.statistics().sign(), a, ad, hop, parity }
    }

    /// `dρ/dt = −i[H̃, ρ] + Σ γ_ij(2a_jρa_i† − a_i†a_jρ − ρa_i†a_j)
    ///  + Σ γ̃_ij(a_i†ρa_j ± a_jρa_i† ∓ a_i†a_jρ − ρa_ja_i†)`.
    fn apply(&self, rho: &CMat, eps: &CMat, gamma: &CMat, gamma_t: &CMat) -> CMat {
        let d = self.a.len();
        let s = c(self.sign, 0.0);
        let mut h = CMat::zeros(rho.nrows(), rho.ncols());
        for i in 0..d {
            for j in 0..d {
                if eps[(i, j)] != c(0.0, 0.0) {
                    h += &self.hop[i][j] * eps[(i, j)];
                }
            }
        }
        let mut out = (&h * rho - rho * &h) * (-I);
        let flipped = match &self.parity {
            Some(p) => CMat::from_fn(rho.nrows(), rho.ncols(), |r, q| rho[(r, q)] * (p[r] * p[q])),
            None => rho.clone(),
        };
        for i in 0..d {
            for j in 0..d {
                let g = gamma[(i, j)];
                let gt = gamma_t[(i, j)];
                if g == c(0.0, 0.0) && gt == c(0.0, 0.0) {
                    continue;
                }
                let hop = &self.hop[i][j];
                let hop_rho = hop * rho;
                let rho_hop = rho * hop;
                let jump_in = &self.a[j] * &flipped * &self.ad[i];
                if g != c(0.0, 0.0) {
                    out += (&jump_in * c(2.0, 0.0) - &hop_rho - &rho_hop) * g;
                }
                if gt != c(0.0, 0.0) {
                    // a_j a_i† = δ_ij ± a_i† a_j
                    let mut rho_aa = &rho_hop * s;
                    if i == j {
                        rho_aa += rho;
                    }
                    let term = &self.ad[i] * &flipped * &self.a[j] + &jump_in * s - &hop_rho * s - rho_aa;
                    out += term * gt;
                }
            }
        }
        out
    }
}

/// Classical RK4 with step `2h`, so that every stage lands on a coefficient
/// sample. Returns `ρ` at the even grid indices `0, 2, 4, …`.
pub fn integrate_master_equation(rho0: &ReducedDensityMatrix, coeffs: &MasterEqCoefficients) -> Result<Vec<(f64, ReducedDensityMatrix)>> {
    let n = coeffs.len();
    if n < 3 {
        return Err(Error::invalid("need at least three coefficient samples"));
    }
    let d = rho0.basis.levels();
    if coeffs.eps_tilde[0].nrows() != d {
        return Err(Error::invalid("coefficients do not match the basis"));
    }
    let gen = Generator::new(&rho0.basis);
    let f = |k: usize, rho: &CMat| gen.apply(rho, &coeffs.eps_tilde[k], &coeffs.gamma[k], &coeffs.gamma_tilde[k]);
    let mut rho = rho0.mat.clone();
    let mut out = vec![(coeffs.times[0], rho0.clone())];
    let mut k = 0;
    while k + 2 < n {
        let dt = coeffs.times[k + 2] - coeffs.times[k];
        let k1 = f(k, &rho);
        let k2 = f(k + 1, &(&rho + &k1 * c(0.5 * dt, 0.0)));
        let k3 = f(k + 1, &(&rho + &k2 * c(0.5 * dt, 0.0)));
        let k4 = f(k + 2, &(&rho + &k3 * c(dt, 0.0)));
        rho += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
        rho = hermitian_part(&rho);
        k += 2;
        let t = coeffs.times[k];
        let drift = (trace(&rho) - c(1.0, 0.0)).norm();
        if drift > 1e-7 * (1.0 + t) || !max_abs(&rho).is_finite() {
            return Err(Error::Unstable { step: k, norm: drift });
        }
        out.push((t, ReducedDensityMatrix { basis: rho0.basis.clone(), mat: rho.clone() }));
    }
    Ok(out)
}

/// Occupation sequences of a basis, in basis order.
pub fn basis_labels(basis: &FockBasis) -> Vec<OccupationSequence> {
    basis.states().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::TimeGrid;
    use crate::linalg::{expm_herm, from_real, trace_distance};
    use crate::model::{BathConfig, BathMode, SpectralDensity};
    use crate::oracle::{discretize, BlockPropagator, DiscretizedBath, ManyBodyOracle};

    fn fermion_basis(d: usize) -> FockBasis {
        FockBasis::fermionic(d)
    }

    #[test]
    fn thermal_state_examples() {
        let b1 = fermion_basis(1);
        let (vac, lost) = thermal_like_state(&CMat::zeros(1, 1), &b1).unwrap();
        assert_eq!(lost, 0.0);
        assert!(max_abs(&(vac.mat - from_real(2, &[1.0, 0.0, 0.0, 0.0]))) < 1e-15);
        let (half, _) = thermal_like_state(&from_real(1, &[0.5]), &b1).unwrap();
        assert!(max_abs(&(half.mat - from_real(2, &[0.5, 0.0, 0.0, 0.5]))) < 1e-15);
        let bb = FockBasis::new(1, Statistics::Boson, 40, 40);
        let (geo, lost) = thermal_like_state(&from_real(1, &[1.0]), &bb).unwrap();
        assert!(lost < 1e-12);
        for (k, p) in geo.populations().iter().enumerate() {
            assert!((p - 0.5f64.powi(k as i32 + 1)).abs() < 1e-12);
        }
        let coarse = FockBasis::new(1, Statistics::Boson, 8, 8);
        assert!(matches!(thermal_like_state(&from_real(1, &[1.0]), &coarse), Err(Error::Truncation { .. })));
    }

    #[test]
    fn thermal_state_has_one_body_matrix_v() {
        let v = from_real(2, &[0.3, 0.1, 0.1, 0.6]);
        let (rho, _) = thermal_like_state(&v, &fermion_basis(2)).unwrap();
        assert!(max_abs(&(rho.one_body() - &v)) < 1e-13);
        let vb = from_real(2, &[0.05, 0.02, 0.02, 0.08]);
        let (rb, _) = thermal_like_state(&vb, &FockBasis::new(2, Statistics::Boson, 12, 12)).unwrap();
        assert!(max_abs(&(rb.one_body() - &vb)) < 1e-10);
    }

    #[test]
    fn identity_at_time_zero() {
        let basis = fermion_basis(2);
        let rho0 = ReducedDensityMatrix::pure(basis, &[(vec![1, 0], c(0.6, 0.0)), (vec![1, 1], c(0.0, 0.8))]).unwrap();
        let dm = DressedMatrices::new(&eye(2), &CMat::zeros(2, 2), Statistics::Fermion).unwrap();
        let rho = evolve_exact(&rho0, &dm).unwrap();
        assert!(max_abs(&(rho.mat - &rho0.mat)) < 1e-15);
    }

    #[test]
    fn vacuum_stays_thermal() {
        let basis = FockBasis::new(2, Statistics::Boson, 8, 8);
        let u = from_real(2, &[0.3, 0.1, -0.2, 0.5]);
        let v = from_real(2, &[0.04, 0.01, 0.01, 0.02]);
        let dm = DressedMatrices::new(&u, &v, Statistics::Boson).unwrap();
        let rho = evolve_exact(&ReducedDensityMatrix::vacuum(basis.clone()).unwrap(), &dm).unwrap();
        let (th, _) = thermal_raw(&v, &basis).unwrap();
        assert!(max_abs(&(rho.mat - th)) < 1e-14);
    }

    #[test]
    fn empty_bath_decay_of_one_particle() {
        let basis = fermion_basis(1);
        let u = from_real(1, &[0.6]);
        let dm = DressedMatrices::new(&u, &CMat::zeros(1, 1), Statistics::Fermion).unwrap();
        let rho = evolve_exact(&ReducedDensityMatrix::fock(basis, &[1]).unwrap(), &dm).unwrap();
        assert!((rho.populations()[1] - 0.36).abs() < 1e-15);
        assert!((rho.populations()[0] - 0.64).abs() < 1e-15);
    }

    fn oracle_case(eps_s: CMat, modes: Vec<BathMode>, bath: BathConfig, rho0: &ReducedDensityMatrix, times: &[f64]) -> f64 {
        let db = DiscretizedBath { modes: modes.clone(), spacing: 1.0 };
        let oracle = ManyBodyOracle::new(&eps_s, &db, &bath).unwrap();
        let prop = BlockPropagator::new(&eps_s, &modes, &bath, Statistics::Fermion).unwrap();
        let mut worst: f64 = 0.0;
        for &t in times {
            let b = prop.blocks(t);
            let dm = DressedMatrices::new(&b.u_ss, &b.v, Statistics::Fermion).unwrap();
            let rho = evolve_exact(rho0, &dm).unwrap();
            let exact = oracle.evolve(&rho0.basis, &rho0.mat, t).unwrap();
            worst = worst.max(max_abs(&(rho.mat - exact)));
        }
        worst
    }

    fn modes(d: usize, n: usize) -> Vec<BathMode> {
        (0..n)
            .map(|k| {
                let e = -1.0 + 2.0 * k as f64 / (n - 1) as f64;
                let coupling = CVec::from_iterator(d, (0..d).map(|i| c(0.3 + 0.1 * i as f64 * e, 0.05 * (k + i) as f64)));
                BathMode { energy: e, coupling }
            })
            .collect()
    }

    #[test]
    fn single_level_matches_many_body_oracle() {
        let basis = fermion_basis(1);
        let bath = BathConfig::new(1.5, 0.1).unwrap();
        let times = [0.0, 0.7, 1.9, 3.3];
        for rho0 in [
            ReducedDensityMatrix::fock(basis.clone(), &[1]).unwrap(),
            ReducedDensityMatrix::vacuum(basis.clone()).unwrap(),
            ReducedDensityMatrix::pure(basis.clone(), &[(vec![0], c(0.6, 0.0)), (vec![1], c(0.0, 0.8))]).unwrap(),
        ] {
            let err = oracle_case(from_real(1, &[0.2]), modes(1, 6), bath, &rho0, &times);
            assert!(err < 1e-10, "err {err}");
        }
    }

    #[test]
    fn two_levels_match_many_body_oracle() {
        let basis = fermion_basis(2);
        let bath = BathConfig::new(2.0, -0.2).unwrap();
        let eps = from_real(2, &[0.1, 0.25, 0.25, -0.3]);
        let times = [0.0, 0.8, 2.1];
        let superpos = ReducedDensityMatrix::pure(
            basis.clone(),
            &[(vec![1, 0], c(0.5, 0.0)), (vec![0, 1], c(0.3, 0.4)), (vec![1, 1], c(0.0, -0.5)), (vec![0, 0], c(0.2, 0.1))],
        )
        .unwrap();
        for rho0 in [
            ReducedDensityMatrix::vacuum(basis.clone()).unwrap(),
            ReducedDensityMatrix::fock(basis.clone(), &[1, 1]).unwrap(),
            ReducedDensityMatrix::fock(basis.clone(), &[0, 1]).unwrap(),
            superpos,
        ] {
            let err = oracle_case(eps.clone(), modes(2, 5), bath, &rho0, &times);
            assert!(err < 1e-10, "err {err}");
        }
    }

    #[test]
    fn three_levels_random_state_matches_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let basis = fermion_basis(3);
        let amps: Vec<(Vec<usize>, C64)> =
            basis.states().iter().map(|s| (s.counts().to_vec(), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
        let rho0 = ReducedDensityMatrix::pure(basis, &amps).unwrap();
        let eps = from_real(3, &[0.1, 0.2, 0.0, 0.2, -0.3, 0.1, 0.0, 0.1, 0.4]);
        let err = oracle_case(eps, modes(3, 4), BathConfig::new(1.0, 0.1).unwrap(), &rho0, &[0.6, 1.7]);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn coherent_routes_agree() {
        let basis = FockBasis::new(2, Statistics::Boson, 8, 8);
        let rho0 = ReducedDensityMatrix::pure(basis, &[(vec![1, 0], c(0.6, 0.0)), (vec![0, 2], c(0.0, 0.8)), (vec![1, 1], c(0.1, 0.0))]).unwrap();
        let u = CMat::from_row_slice(2, 2, &[c(0.5, 0.2), c(0.1, 0.0), c(-0.1, 0.05), c(0.4, -0.3)]);
        let v = from_real(2, &[0.05, 0.01, 0.01, 0.03]);
        let dm = DressedMatrices::new(&u, &v, Statistics::Boson).unwrap();
        let rho = evolve_exact(&rho0, &dm).unwrap();
        for eta in [[c(0.0, 0.0), c(0.0, 0.0)], [c(0.3, -0.2), c(0.1, 0.4)], [c(-0.5, 0.0), c(0.0, 0.5)]] {
            let a = coherent_matrix_element(&rho, &eta).unwrap();
            let b = coherent_closed_form(&rho0, &dm, &eta).unwrap();
            assert!((a - b).norm() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn vacuum_coherent_overlap_is_one() {
        let basis = FockBasis::new(1, Statistics::Boson, 8, 8);
        let rho = ReducedDensityMatrix::vacuum(basis).unwrap();
        assert_eq!(coherent_matrix_element(&rho, &[c(0.4, 0.3)]).unwrap(), c(1.0, 0.0));
        assert!(coherent_matrix_element(&ReducedDensityMatrix::vacuum(fermion_basis(1)).unwrap(), &[c(0.1, 0.0)]).is_err());
    }

    #[test]
    fn closed_system_coefficients() {
        let eps = from_real(2, &[0.3, 0.2, 0.2, -0.1]);
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let u: Vec<CMat> = grid.times().iter().map(|&t| expm_herm(&eps, t)).collect();
        let pair = GreenPair { grid, u, v: vec![CMat::zeros(2, 2); 41] };
        let co = extract_me_coefficients(&pair).unwrap();
        for k in 0..co.len() {
            assert!(max_abs(&(&co.eps_tilde[k] - &eps)) < 1e-5);
            assert!(max_abs(&co.gamma[k]) < 1e-5);
            assert!(max_abs(&co.gamma_tilde[k]) < 1e-5);
        }
    }

    #[test]
    fn coefficients_refuse_a_vanishing_propagator() {
        // One resonant mode: u(t) = cos(gt) vanishes at t = π/2g.
        let g = 1.0;
        let modes = [crate::model::BathMode { energy: 0.0, coupling: crate::CVec::from_element(1, c(g, 0.0)) }];
        let prop = BlockPropagator::new(&from_real(1, &[0.0]), &modes, &BathConfig::empty(), Statistics::Fermion).unwrap();
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let pair = GreenPair::from_blocks(&prop, &grid);
        assert!(matches!(extract_me_coefficients(&pair), Err(Error::Singular(_))));
        let early = TimeGrid::new(1.0, 100).unwrap();
        assert!(extract_me_coefficients(&GreenPair::from_blocks(&prop, &early)).is_ok());
    }

    #[test]
    fn master_equation_reproduces_exact_dynamics() {
        let jd = SpectralDensity::lorentzian(from_real(1, &[0.6]), 0.0, 1.0, -6.0, 6.0).unwrap();
        let db = discretize(&jd, (-6.0, 6.0), 300).unwrap();
        let eps = from_real(1, &[0.3]);
        let bath = BathConfig::new(2.0, 0.0).unwrap();
        let prop = BlockPropagator::new(&eps, &db.modes, &bath, Statistics::Fermion).unwrap();
        let grid = TimeGrid::new(4.0, 400).unwrap();
        let pair = GreenPair::from_blocks(&prop, &grid);
        let co = extract_me_coefficients(&pair).unwrap();
        let basis = fermion_basis(1);
        let rho0 = ReducedDensityMatrix::pure(basis, &[(vec![0], c(0.6, 0.0)), (vec![1], c(0.0, 0.8))]).unwrap();
        let traj = integrate_master_equation(&rho0, &co).unwrap();
        for (n, (t, rho)) in traj.iter().enumerate() {
            let exact = evolve_exact(&rho0, &DressedMatrices::at(&pair, 2 * n, Statistics::Fermion).unwrap()).unwrap();
            assert!((grid.time(2 * n) - t).abs() < 1e-12);
            assert!(trace_distance(&rho.mat, &exact.mat) < 1e-6, "t={t} {}", trace_distance(&rho.mat, &exact.mat));
        }
    }

    #[test]
    fn master_equation_keeps_odd_parity_coherences() {
        let jd = SpectralDensity::lorentzian(from_real(2, &[0.6, 0.2, 0.2, 0.4]), 0.0, 1.0, -6.0, 6.0).unwrap();
        let db = discretize(&jd, (-6.0, 6.0), 200).unwrap();
        let eps = from_real(2, &[0.4, 0.15, 0.15, -0.3]);
        let prop = BlockPropagator::new(&eps, &db.modes, &BathConfig::new(1.5, 0.1).unwrap(), Statistics::Fermion).unwrap();
        let pair = GreenPair::from_blocks(&prop, &TimeGrid::new(3.0, 300).unwrap());
        let co = extract_me_coefficients(&pair).unwrap();
        let basis = fermion_basis(2);
        for amps in [[(vec![0, 0], c(0.6, 0.0)), (vec![1, 0], c(0.0, 0.8))], [(vec![0, 1], c(0.6, 0.0)), (vec![1, 1], c(0.0, 0.8))]] {
            let rho0 = ReducedDensityMatrix::pure(basis.clone(), &amps).unwrap();
            let traj = integrate_master_equation(&rho0, &co).unwrap();
            for (n, (_, rho)) in traj.iter().enumerate() {
                let exact = evolve_exact(&rho0, &DressedMatrices::at(&pair, 2 * n, Statistics::Fermion).unwrap()).unwrap();
                assert!(trace_distance(&rho.mat, &exact.mat) < 1e-6);
            }
        }
    }

    fn boson_pair(d: usize) -> (GreenPair, CMat) {
        let amp = if d == 1 { from_real(1, &[0.5]) } else { from_real(2, &[0.5, 0.15, 0.15, 0.3]) };
        let jd = SpectralDensity::lorentzian(amp, 1.0, 1.0, -5.0, 7.0).unwrap();
        let db = discretize(&jd, (-5.0, 7.0), 300).unwrap();
        let eps = if d == 1 { from_real(1, &[1.2]) } else { from_real(2, &[1.2, 0.2, 0.2, 0.7]) };
        let bath = BathConfig::new(1.0, -6.0).unwrap();
        let prop = BlockPropagator::new(&eps, &db.modes, &bath, Statistics::Boson).unwrap();
        (GreenPair::from_blocks(&prop, &TimeGrid::new(3.0, 300).unwrap()), eps)
    }

    #[test]
    fn boson_one_body_consistency() {
        let (pair, _) = boson_pair(2);
        let basis = FockBasis::new(2, Statistics::Boson, 8, 8);
        let rho0 =
            ReducedDensityMatrix::pure(basis, &[(vec![1, 0], c(0.5, 0.0)), (vec![0, 2], c(0.3, 0.4)), (vec![1, 1], c(0.0, -0.5)), (vec![2, 1], c(0.2, 0.1))])
                .unwrap();
        let n0 = rho0.one_body();
        for k in [60, 180, 300] {
            let rho = evolve_exact(&rho0, &DressedMatrices::at(&pair, k, Statistics::Boson).unwrap()).unwrap();
            let expect = &pair.u[k] * &n0 * pair.u[k].adjoint() + &pair.v[k];
            assert!(max_abs(&(rho.one_body() - expect)) < 1e-6);
            assert!(rho.audit().passes());
        }
    }

    #[test]
    fn boson_master_equation_closure() {
        for d in [1, 2] {
            let (pair, _) = boson_pair(d);
            let basis = FockBasis::new(d, Statistics::Boson, 8, 8);
            let amps: Vec<(Vec<usize>, C64)> = if d == 1 {
                vec![(vec![0], c(0.5, 0.0)), (vec![1], c(0.0, 0.6)), (vec![2], c(0.3, 0.3))]
            } else {
                vec![(vec![1, 0], c(0.5, 0.0)), (vec![0, 1], c(0.3, 0.4)), (vec![1, 1], c(0.0, -0.5))]
            };
            let rho0 = ReducedDensityMatrix::pure(basis, &amps).unwrap();
            let co = extract_me_coefficients(&pair).unwrap();
            let traj = integrate_master_equation(&rho0, &co).unwrap();
            for (n, (_, rho)) in traj.iter().enumerate() {
                let exact = evolve_exact(&rho0, &DressedMatrices::at(&pair, 2 * n, Statistics::Boson).unwrap()).unwrap();
                let dist = trace_distance(&rho.mat, &exact.mat);
                assert!(dist < 1e-5, "d={d} n={n} {dist}");
            }
        }
    }
}
