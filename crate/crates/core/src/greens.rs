//! Time-domain Green functions: the retarded propagator `u(t)` from the
//! Volterra equation or from the spectral decomposition, and the injected
//! occupation `v(t,t)` by double quadrature.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{c, expm, eye, hermitian_part, inverse, max_abs, spectral_norm, CMat, C64, I};
use crate::model::{BathConfig, OpenSystem, SpectralDensity, SpectralKind, Statistics, SystemModel};
use crate::oracle::BlockPropagator;
use crate::quad::{self, Rule, Tolerance};
use crate::spectral::{LocalizedMode, SpectrumTable};
use crate::{par, Error, Result};

/// Uniform grid `t_k = k h`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) || n_steps == 0 {
            return Err(Error::invalid("time grid needs t_max > 0 and at least one step"));
        }
        Ok(TimeGrid { t_max, n_steps })
    }

    /// Grid with step no larger than `h`.
    pub fn with_step(t_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        Self::new(t_max, (t_max / h).ceil().max(1.0) as usize)
    }

    pub fn step(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    /// Number of samples, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Same span, half the step.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid { t_max: self.t_max, n_steps: 2 * self.n_steps }
    }
}

/// A stationary kernel `K(s)` sampled at `s = k h`, or a kernel `K δ(s)`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelTable {
    Local(CMat),
    Sampled(Vec<CMat>),
}

/// `∫ w(ε) J(ε) e^{−iεs} dε/2π` by adaptive quadrature at one `s`.
fn weighted_transform(jd: &SpectralDensity, weight: &dyn Fn(f64) -> Result<f64>, extra: &[f64], s: f64) -> Result<CMat> {
    let d = jd.dim();
    if let SpectralKind::DiscreteModes(modes) = jd.kind() {
        let mut out = CMat::zeros(d, d);
        for m in modes {
            let w = weight(m.energy)?;
            out += (&m.coupling * m.coupling.adjoint()) * C64::from_polar(w, -m.energy * s);
        }
        return Ok(out);
    }
    if jd.is_local() {
        return Err(Error::invalid("the infinite wide band has a local kernel; use a kernel table"));
    }
    let breaks = panel_breaks(jd, extra, 2.0 * PI / s.abs().max(1e-300));
    // Validate the weight up front so the integrand can stay infallible.
    for w in breaks.windows(2) {
        weight(0.5 * (w[0] + w[1]))?;
    }
    let scale = breaks.iter().map(|&e| max_abs(&jd.eval_inside(e))).fold(0.0, f64::max).max(1e-300);
    let tol = Tolerance { abs: 1e-13 * scale, rel: 1e-12, max_segments: 50_000 };
    let m = quad::integrate(|e| jd.eval_inside(e) * C64::from_polar(weight(e).unwrap_or(f64::NAN), -e * s), &breaks, tol)?;
    Ok(m.unscale(2.0 * PI))
}

/// Sorted breakpoints of the support, subdivided to at most `max_panel`.
fn panel_breaks(jd: &SpectralDensity, extra: &[f64], max_panel: f64) -> Vec<f64> {
    let (a, b) = jd.support();
    let mut base = jd.breakpoints();
    base.extend(extra.iter().copied().filter(|&x| x > a && x < b));
    base.sort_by(f64::total_cmp);
    base.dedup();
    let mut out = vec![base[0]];
    for w in base.windows(2) {
        let n = ((w[1] - w[0]) / max_panel).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
        }
    }
    out
}

/// Memory kernel `g(s) = ∫J(ε)e^{−iεs}dε/2π`.
pub fn memory_kernel(jd: &SpectralDensity, s: f64) -> Result<CMat> {
    weighted_transform(jd, &|_| Ok(1.0), &[], s)
}

/// Noise kernel `g̃(t1, t2) = ∫f(ε)J(ε)e^{−iε(t1−t2)}dε/2π`.
pub fn noise_kernel(jd: &SpectralDensity, bath: &BathConfig, statistics: Statistics, t1: f64, t2: f64) -> Result<CMat> {
    if jd.is_local() {
        return Err(Error::invalid("the infinite wide band has a local kernel; use a kernel table"));
    }
    weighted_transform(jd, &|e| bath.occupation(statistics, e), &occupation_breaks(bath), t1 - t2)
}

fn occupation_breaks(bath: &BathConfig) -> Vec<f64> {
    if bath.mu.is_finite() {
        vec![bath.mu]
    } else {
        Vec::new()
    }
}

/// Occupation of the infinite wide band; only a constant `f` gives a local
/// noise kernel.
fn constant_occupation(bath: &BathConfig, statistics: Statistics) -> Result<f64> {
    let probes = [-1e6, 0.0, 1e6].map(|e| bath.occupation(statistics, e));
    match probes {
        [Ok(a), Ok(b), Ok(cc)] if a == b && b == cc => Ok(a),
        _ => Err(Error::invalid("the infinite wide band needs a constant occupation (β = 0 or μ = ±∞)")),
    }
}

/// `Σ_j M_j e^{−iε_j k h}` for `k = 0..count`, using phase recurrences in
/// parallel chunks.
fn sampled_transform(nodes: &[f64], mats: &[CMat], h: f64, count: usize) -> Vec<CMat> {
    let d = mats.first().map_or(0, |m| m.nrows());
    const CHUNK: usize = 64;
    let starts: Vec<usize> = (0..count).step_by(CHUNK).collect();
    let chunks = par::map(&starts, |&k0| {
        let k1 = (k0 + CHUNK).min(count);
        let mut phase: Vec<C64> = nodes.iter().map(|&e| C64::from_polar(1.0, -e * h * k0 as f64)).collect();
        let step: Vec<C64> = nodes.iter().map(|&e| C64::from_polar(1.0, -e * h)).collect();
        let mut out = Vec::with_capacity(k1 - k0);
        for _ in k0..k1 {
            let mut acc = CMat::zeros(d, d);
            for (m, p) in mats.iter().zip(&phase) {
                for (a, x) in acc.iter_mut().zip(m.iter()) {
                    *a += x * p;
                }
            }
            out.push(acc);
            for (p, s) in phase.iter_mut().zip(&step) {
                *p *= s;
            }
        }
        out
    });
    chunks.into_iter().flatten().collect()
}

/// Tabulates `∫w(ε)J(ε)e^{−iεkh}dε/2π` on the grid with composite
/// Gauss–Legendre panels, halving the panel width until the value at `t_max`
/// is stable.
fn tabulate(jd: &SpectralDensity, weight: &dyn Fn(f64) -> Result<f64>, extra: &[f64], thermal_width: f64, grid: &TimeGrid) -> Result<Vec<CMat>> {
    let d = jd.dim();
    let h = grid.step();
    let count = grid.len();
    if let SpectralKind::DiscreteModes(modes) = jd.kind() {
        let mats = modes.iter().map(|m| Ok((&m.coupling * m.coupling.adjoint()) * c(weight(m.energy)?, 0.0))).collect::<Result<Vec<_>>>()?;
        let nodes: Vec<f64> = modes.iter().map(|m| m.energy).collect();
        if nodes.is_empty() {
            return Ok(vec![CMat::zeros(d, d); count]);
        }
        return Ok(sampled_transform(&nodes, &mats, h, count));
    }
    const ORDER: usize = 16;
    let mut panel = (jd.feature_width() / 2.0).min(4.0 / grid.t_max).min(thermal_width);
    let build = |panel: f64| -> Result<(Vec<f64>, Vec<CMat>)> {
        let breaks = panel_breaks(jd, extra, f64::INFINITY);
        let rule = Rule::composite(&breaks, panel, ORDER);
        let mut mats = Vec::with_capacity(rule.len());
        for (&e, &w) in rule.nodes.iter().zip(&rule.weights) {
            mats.push(jd.eval_inside(e) * c(w * weight(e)? / (2.0 * PI), 0.0));
        }
        Ok((rule.nodes, mats))
    };
    let at = |nodes: &[f64], mats: &[CMat], s: f64| {
        let mut acc = CMat::zeros(d, d);
        for (m, &e) in mats.iter().zip(nodes) {
            acc += m * C64::from_polar(1.0, -e * s);
        }
        acc
    };
    let (mut nodes, mut mats) = build(panel)?;
    for _ in 0..8 {
        let (fine_nodes, fine_mats) = build(panel / 2.0)?;
        let scale = max_abs(&at(&fine_nodes, &fine_mats, 0.0)).max(1e-300);
        let err = [0.0, 0.5 * grid.t_max, grid.t_max].iter().map(|&s| max_abs(&(at(&nodes, &mats, s) - at(&fine_nodes, &fine_mats, s)))).fold(0.0, f64::max);
        nodes = fine_nodes;
        mats = fine_mats;
        if err <= 1e-11 * scale {
            return Ok(sampled_transform(&nodes, &mats, h, count));
        }
        panel /= 2.0;
    }
    Err(Error::Quadrature { estimate: f64::NAN, tolerance: 1e-11 })
}

/// Memory kernel on the grid lattice.
pub fn memory_table(jd: &SpectralDensity, grid: &TimeGrid) -> Result<KernelTable> {
    if jd.is_local() {
        if let SpectralKind::WideBand { amplitude } = jd.kind() {
            return Ok(KernelTable::Local(amplitude.clone()));
        }
    }
    Ok(KernelTable::Sampled(tabulate(jd, &|_| Ok(1.0), &[], f64::INFINITY, grid)?))
}

/// Noise kernel `g̃(kh)` on the grid lattice.
pub fn noise_table(jd: &SpectralDensity, bath: &BathConfig, statistics: Statistics, grid: &TimeGrid) -> Result<KernelTable> {
    if jd.is_local() {
        if let SpectralKind::WideBand { amplitude } = jd.kind() {
            let f = constant_occupation(bath, statistics)?;
            return Ok(KernelTable::Local(amplitude * c(f, 0.0)));
        }
    }
    let thermal = if bath.beta.is_finite() && bath.beta > 0.0 { 1.0 / bath.beta } else { f64::INFINITY };
    let weight = |e: f64| bath.occupation(statistics, e);
    Ok(KernelTable::Sampled(tabulate(jd, &weight, &occupation_breaks(bath), thermal, grid)?))
}

/// Solves `u̇ + iε_S u + ∫₀^τ g(τ−s)u(s)ds = 0`, `u(0) = I`.
pub fn solve_u(model: &SystemModel, jd: &SpectralDensity, grid: &TimeGrid) -> Result<Vec<CMat>> {
    solve_u_with(model.eps_s(), &memory_table(jd, grid)?, grid)
}

/// Volterra solve with a precomputed kernel. The free part is propagated
/// exactly; the memory term uses the trapezoid rule in both the Duhamel
/// integral and the convolution, and the implicit endpoint term is solved
/// exactly, so the scheme is second order in `h`.
pub fn solve_u_with(eps_s: &CMat, kernel: &KernelTable, grid: &TimeGrid) -> Result<Vec<CMat>> {
    let d = eps_s.nrows();
    let h = grid.step();
    let n = grid.n_steps;
    let check = |step: usize, u: &CMat| -> Result<()> {
        let norm = spectral_norm(u);
        if !(norm <= 1.0 + 1e-4) {
            return Err(Error::Unstable { step, norm });
        }
        Ok(())
    };
    let mut u = Vec::with_capacity(n + 1);
    u.push(eye(d));
    match kernel {
        KernelTable::Local(gamma) => {
            let heff = eps_s - gamma * c(0.0, 0.5);
            let e = expm(&(heff * (-I * h)));
            for k in 1..=n {
                let next = &e * &u[k - 1];
                check(k, &next)?;
                u.push(next);
            }
        }
        KernelTable::Sampled(g) => {
            if g.len() < n + 1 {
                return Err(Error::invalid("memory table is shorter than the time grid"));
            }
            let e = expm(&(eps_s * (-I * h)));
            let lhs = inverse(&(eye(d) + &g[0] * c(0.25 * h * h, 0.0)))?;
            let hc = c(h, 0.0);
            let mut f_prev = CMat::zeros(d, d);
            let mut r = CMat::zeros(d, d);
            for m in 0..n {
                // R = −h[½ g_{m+1} u_0 + Σ_{k=1}^{m} g_{m+1−k} u_k]
                r.copy_from(&g[m + 1]);
                r.scale_mut(0.5);
                for k in 1..=m {
                    r.gemm(c(1.0, 0.0), &g[m + 1 - k], &u[k], c(1.0, 0.0));
                }
                r.scale_mut(-h);
                let rhs = &e * (&u[m] + &f_prev * (hc * 0.5)) + &r * (hc * 0.5);
                let next = &lhs * rhs;
                check(m + 1, &next)?;
                f_prev = &r - (&g[0] * &next) * (hc * 0.5);
                u.push(next);
            }
        }
    }
    Ok(u)
}

/// `u(t) = Σ_l Z_l e^{−iε_l t} + Σ_k w_k D(ε_k) e^{−iε_k t}/2π`.
pub fn reconstruct_u_spectral(modes: &[LocalizedMode], spectrum: &SpectrumTable, grid: &TimeGrid) -> Result<Vec<CMat>> {
    let spacing = spectrum.energies.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let limit = PI / grid.t_max;
    if spacing >= limit {
        return Err(Error::Nyquist { spacing, t_max: grid.t_max, limit });
    }
    let mut nodes = Vec::with_capacity(spectrum.energies.len() + modes.len());
    let mut mats = Vec::with_capacity(nodes.capacity());
    for (e, (w, dm)) in spectrum.energies.iter().zip(spectrum.weights.iter().zip(&spectrum.d)) {
        nodes.push(*e);
        mats.push(dm * c(w / (2.0 * PI), 0.0));
    }
    for m in modes {
        nodes.push(m.energy);
        mats.push(m.residue.clone());
    }
    if nodes.is_empty() {
        return Err(Error::invalid("no spectral weight to reconstruct from"));
    }
    Ok(sampled_transform(&nodes, &mats, grid.step(), grid.len()))
}

/// `u(t) → Σ_l Z_l e^{−iε_l t}` once the continuum has decayed.
pub fn localized_limit(modes: &[LocalizedMode], d: usize, t: f64) -> CMat {
    let mut out = CMat::zeros(d, d);
    for m in modes {
        out += &m.residue * C64::from_polar(1.0, -m.energy * t);
    }
    out
}

/// `v(t,t) = ∫₀ᵗ∫₀ᵗ u(t−t1) g̃(t1−t2) u†(t−t2) dt1 dt2` by the double
/// trapezoid rule. With `P_n`, `Q_n` running sums the whole series costs
/// `O(n²)` matrix products.
pub fn compute_v(u: &[CMat], noise: &KernelTable, grid: &TimeGrid) -> Result<Vec<CMat>> {
    let n = grid.n_steps;
    if u.len() < n + 1 {
        return Err(Error::invalid("u samples do not cover the time grid"));
    }
    let d = u[0].nrows();
    let h = grid.step();
    let mut v = Vec::with_capacity(n + 1);
    v.push(CMat::zeros(d, d));
    match noise {
        KernelTable::Local(gf) => {
            let x = |k: usize| &u[k] * gf * u[k].adjoint();
            let mut prev = x(0);
            for k in 1..=n {
                let cur = x(k);
                let next = &v[k - 1] + (&prev + &cur) * c(0.5 * h, 0.0);
                v.push(hermitian_part(&next));
                prev = cur;
            }
        }
        KernelTable::Sampled(g) => {
            if g.len() < n + 1 {
                return Err(Error::invalid("noise table is shorter than the time grid"));
            }
            let one = c(1.0, 0.0);
            // P_n = Σ_{a,b≤n} α_a α_b u_a G_{b−a} u_b†, α_0 = ½, α_{a>0} = 1,
            // with G_{−k} = G_k†.
            let mut p = (&u[0] * &g[0] * u[0].adjoint()) * c(0.25, 0.0);
            let mut q = CMat::zeros(d, d);
            for m in 1..=n {
                // Q_m = Σ_{a≤m} α_a u_a G_{m−a}
                q.gemm(c(0.5, 0.0), &u[0], &g[m], c(0.0, 0.0));
                for a in 1..=m {
                    q.gemm(one, &u[a], &g[m - a], one);
                }
                let x = &q * u[m].adjoint();
                let y = &u[m] * &g[0] * u[m].adjoint();
                p += &x + x.adjoint() - &y;
                let vm = (&p - (&x + x.adjoint()) * c(0.5, 0.0) + &y * c(0.25, 0.0)) * c(h * h, 0.0);
                v.push(hermitian_part(&vm));
            }
        }
    }
    Ok(v)
}

/// Sampled `u(t)` and `v(t,t)` on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenPair {
    pub grid: TimeGrid,
    pub u: Vec<CMat>,
    pub v: Vec<CMat>,
}

impl GreenPair {
    /// Volterra `u` followed by the double-trapezoid `v`.
    pub fn compute(sys: &OpenSystem, grid: &TimeGrid) -> Result<Self> {
        let u = solve_u(&sys.model, &sys.jd, grid)?;
        let noise = noise_table(&sys.jd, &sys.bath, sys.statistics(), grid)?;
        let v = compute_v(&u, &noise, grid)?;
        Ok(GreenPair { grid: *grid, u, v })
    }

    /// Exact blocks of a finite reservoir, `u = u_SS`, `v = u_SE f u_SE†`.
    pub fn from_blocks(prop: &BlockPropagator, grid: &TimeGrid) -> Self {
        let blocks: Vec<_> = grid.times().iter().map(|&t| prop.blocks(t)).collect();
        let u = blocks.iter().map(|b| b.u_ss.clone()).collect();
        let v = blocks.into_iter().map(|b| b.v).collect();
        GreenPair { grid: *grid, u, v }
    }

    pub fn dim(&self) -> usize {
        self.u.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}
