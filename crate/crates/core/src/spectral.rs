//! Frequency-domain quantities: self-energy `Σ(z)`, resolvent `U(z)`,
//! localized modes `(ε_l, Z_l)` and the broadened spectrum `D(ε)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{c, eigh, eigvalsh, eye, hermitian_part, inverse, max_abs, psd_clip, CMat, C64, I};
use crate::model::{OpenSystem, SpectralDensity, SpectralKind};
use crate::quad::{self, Rule, Tolerance};
use crate::{par, Error, Result};

/// `Σ(z)` at a complex energy. Real `z` inside the support is rejected; use
/// [`self_energy_boundary`] for the boundary value from above.
pub fn self_energy(sys: &OpenSystem, z: C64) -> Result<CMat> {
    let (lo, hi) = sys.jd.support();
    if z.im == 0.0 && z.re >= lo && z.re <= hi && !sys.jd.is_discrete() {
        return Err(Error::invalid("self-energy requested on the spectral support without an imaginary offset"));
    }
    sigma(&sys.jd, z)
}

/// `Σ(ε + i0⁺)`.
pub fn self_energy_boundary(sys: &OpenSystem, eps: f64) -> Result<CMat> {
    if sys.jd.is_discrete() {
        return Err(Error::invalid("discrete modes have no boundary value on their own energies"));
    }
    sigma(&sys.jd, c(eps, 0.0))
}

/// Lamb shift `Δ(ε)`, the Hermitian part of `Σ(ε + i0⁺)`.
pub fn lamb_shift(sys: &OpenSystem, eps: f64) -> Result<CMat> {
    Ok(hermitian_part(&self_energy_boundary(sys, eps)?))
}

/// Dispatch on the spectral family. A zero imaginary part is read as `+0`.
pub(crate) fn sigma(jd: &SpectralDensity, z: C64) -> Result<CMat> {
    let d = jd.dim();
    let (lo, hi) = jd.support();
    match jd.kind() {
        SpectralKind::DiscreteModes(modes) => {
            let mut out = CMat::zeros(d, d);
            for m in modes {
                out += (&m.coupling * m.coupling.adjoint()) / (z - m.energy);
            }
            Ok(out)
        }
        SpectralKind::WideBand { amplitude } if jd.is_local() => {
            let s = if z.im.is_sign_negative() { 0.5 } else { -0.5 };
            Ok(amplitude * (I * s))
        }
        SpectralKind::WideBand { amplitude } => Ok(amplitude * (edge_logs(z, lo, hi) / (2.0 * PI))),
        SpectralKind::LorentzianSum(peaks) => {
            let mut out = CMat::zeros(d, d);
            for p in peaks {
                match lorentzian_factor(z, p.center, p.width, lo, hi) {
                    Some(f) => out += &p.amplitude * f,
                    None => return sigma_quadrature(jd, z),
                }
            }
            Ok(out)
        }
        SpectralKind::OhmicExpCutoff { .. } => sigma_quadrature(jd, z),
    }
}

/// `Log(z − a) − Log(z − b)` with the branch fixed by the sign of `Im z`.
fn edge_logs(z: C64, a: f64, b: f64) -> C64 {
    let im = if z.im == 0.0 { 0.0 } else { z.im };
    C64::new(z.re - a, im).ln() - C64::new(z.re - b, im).ln()
}

/// `∫_a^b dε/2π W²/((ε−c)²+W²)/(z−ε)` by partial fractions. `None` when `z`
/// sits on top of a Lorentzian pole and cancellation would dominate.
fn lorentzian_factor(z: C64, center: f64, width: f64, a: f64, b: f64) -> Option<C64> {
    let p = c(center, width);
    let q = c(center, -width);
    if (z - p).norm() < 1e-6 * width || (z - q).norm() < 1e-6 * width {
        return None;
    }
    let ca = 1.0 / ((p - q) * (z - p));
    let cb = 1.0 / ((q - p) * (z - q));
    let cz = 1.0 / ((z - p) * (z - q));
    let lp = (c(b, 0.0) - p).ln() - (c(a, 0.0) - p).ln();
    let lq = (c(b, 0.0) - q).ln() - (c(a, 0.0) - q).ln();
    let total = ca * lp + cb * lq + cz * edge_logs(z, a, b);
    Some(total * (width * width / (2.0 * PI)))
}

/// Singularity-subtracted quadrature valid for any continuous family:
/// `Σ(z) = ∫(J(ε) − J(x))/(z−ε) dε/2π + J(x)/2π·[Log(z−a) − Log(z−b)]`
/// with `x = Re z` clamped to the support.
pub fn sigma_quadrature(jd: &SpectralDensity, z: C64) -> Result<CMat> {
    let (a, b) = jd.support();
    if !(a.is_finite() && b.is_finite()) {
        return sigma(jd, z);
    }
    let x = z.re.clamp(a, b);
    let jx = jd.eval_inside(x);
    let mut breaks = jd.breakpoints();
    if x > a && x < b {
        breaks.push(x);
        breaks.sort_by(f64::total_cmp);
    }
    let scale = breaks.iter().map(|&e| max_abs(&jd.eval_inside(e))).fold(0.0, f64::max).max(1e-300);
    let tol = Tolerance { abs: 1e-13 * scale, rel: 1e-12, max_segments: 20_000 };
    let body = quad::integrate(|e| (jd.eval_inside(e) - &jx) / (z - e), &breaks, tol)?;
    Ok((body + &jx * edge_logs(z, a, b)).unscale(2.0 * PI))
}

fn dressed_matrix(sys: &OpenSystem, z: C64, sigma_z: &CMat) -> CMat {
    eye(sys.dim()) * z - sys.model.eps_s() - sigma_z
}

/// `U(z) = (z − ε_S − Σ(z))⁻¹`.
pub fn resolvent(sys: &OpenSystem, z: C64) -> Result<CMat> {
    let s = self_energy(sys, z)?;
    inverse(&dressed_matrix(sys, z, &s))
}

fn resolvent_raw(sys: &OpenSystem, z: C64) -> Result<CMat> {
    let s = sigma(&sys.jd, z)?;
    inverse(&dressed_matrix(sys, z, &s))
}

/// An undamped pole of the resolvent outside the continuum.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedMode {
    pub energy: f64,
    /// Residue `Z_l`, Hermitian PSD with rank equal to the multiplicity.
    pub residue: CMat,
    pub multiplicity: usize,
}

/// Knobs for the bound-state search outside a finite band.
#[derive(Debug, Clone, Copy)]
pub struct ModeSearch {
    /// The scan covers this many bandwidths on each side of the band.
    pub range: f64,
    pub scan_points: usize,
    /// Roots closer than this are treated as one degenerate mode.
    pub cluster: f64,
    pub contour_points: usize,
}

impl Default for ModeSearch {
    fn default() -> Self {
        ModeSearch { range: 10.0, scan_points: 2000, cluster: 1e-8, contour_points: 64 }
    }
}

pub fn find_localized_modes(sys: &OpenSystem) -> Result<Vec<LocalizedMode>> {
    find_localized_modes_with(sys, &ModeSearch::default())
}

pub fn find_localized_modes_with(sys: &OpenSystem, search: &ModeSearch) -> Result<Vec<LocalizedMode>> {
    if sys.jd.is_discrete() || sys.jd.is_zero() {
        return Ok(discrete_modes(sys, search.cluster));
    }
    if sys.jd.is_local() {
        return Ok(Vec::new());
    }
    let (a, b) = sys.jd.support();
    let bw = b - a;
    let d = sys.dim();
    let count = |e: f64| -> Result<usize> {
        let m = dressed_matrix(sys, c(e, 0.0), &sigma(&sys.jd, c(e, 0.0))?);
        Ok(eigvalsh(&m).iter().filter(|&&l| l > 0.0).count())
    };

    // Uniform scan plus points approaching each edge geometrically.
    let n_uniform = search.scan_points / 2;
    let near: Vec<f64> = (0..=96).map(|k| bw * 10f64.powf(-(k as f64) / 8.0)).filter(|&x| x >= 1e-12 * bw).collect();
    let far = search.range * bw;
    let mut below: Vec<f64> = (0..n_uniform).map(|k| a - far + (far - bw * 1e-12) * k as f64 / n_uniform as f64).collect();
    below.extend(near.iter().map(|x| a - x));
    below.push(a - 1e-12 * bw);
    let mut above: Vec<f64> = (0..n_uniform).map(|k| b + far - (far - bw * 1e-12) * k as f64 / n_uniform as f64).collect();
    above.extend(near.iter().map(|x| b + x));
    above.push(b + 1e-12 * bw);
    below.sort_by(f64::total_cmp);
    below.dedup();
    above.sort_by(f64::total_cmp);
    above.dedup();

    let counts_below = par::map(&below, |&e| count(e)).into_iter().collect::<Result<Vec<_>>>()?;
    let counts_above = par::map(&above, |&e| count(e)).into_iter().collect::<Result<Vec<_>>>()?;
    if counts_below[0] != 0 {
        return Err(Error::Bracketing { lo: f64::NEG_INFINITY, hi: below[0] });
    }
    if *counts_above.last().unwrap() != d {
        return Err(Error::Bracketing { lo: *above.last().unwrap(), hi: f64::INFINITY });
    }

    let mut roots = Vec::new();
    for (grid, counts) in [(&below, &counts_below), (&above, &counts_above)] {
        for i in 1..grid.len() {
            if counts[i] < counts[i - 1] {
                return Err(Error::Bracketing { lo: grid[i - 1], hi: grid[i] });
            }
            for k in counts[i - 1] + 1..=counts[i] {
                roots.push(bisect_count(&count, grid[i - 1], grid[i], k)?);
            }
        }
    }
    roots.sort_by(f64::total_cmp);

    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for r in roots {
        match clusters.last_mut() {
            Some(cl) if r - *cl.last().unwrap() < search.cluster => cl.push(r),
            _ => clusters.push(vec![r]),
        }
    }
    let centers: Vec<f64> = clusters.iter().map(|cl| cl.iter().sum::<f64>() / cl.len() as f64).collect();
    let mut modes = Vec::with_capacity(centers.len());
    for (i, (&e, cl)) in centers.iter().zip(&clusters).enumerate() {
        let mut gap = if e < a { a - e } else { e - b };
        if i > 0 {
            gap = gap.min(e - centers[i - 1]);
        }
        if i + 1 < centers.len() {
            gap = gap.min(centers[i + 1] - e);
        }
        let radius = 0.5 * gap;
        if e + radius >= a && e - radius <= b {
            return Err(Error::Contour { center: e, radius });
        }
        let residue = contour_residue(sys, e, radius, search.contour_points)?;
        modes.push(LocalizedMode { energy: e, residue, multiplicity: cl.len() });
    }
    Ok(modes)
}

/// Smallest `e` in `[lo, hi]` with `count(e) ≥ k`, assuming `count` is
/// nondecreasing.
fn bisect_count<F: Fn(f64) -> Result<usize>>(count: &F, mut lo: f64, mut hi: f64, k: usize) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid)? >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(1/2πi)∮U(z)dz` on a circle, by the trapezoid rule.
fn contour_residue(sys: &OpenSystem, center: f64, radius: f64, n: usize) -> Result<CMat> {
    let d = sys.dim();
    let idx: Vec<usize> = (0..n).collect();
    let terms = par::map(&idx, |&k| {
        let w = C64::from_polar(radius, 2.0 * PI * (k as f64 + 0.5) / n as f64);
        resolvent_raw(sys, c(center, 0.0) + w).map(|u| u * w)
    });
    let mut z = CMat::zeros(d, d);
    for t in terms {
        z += t?;
    }
    Ok(hermitian_part(&z.unscale(n as f64)))
}

/// Exact poles for a finite set of reservoir modes: eigenpairs of the total
/// single-particle matrix projected on the system.
fn discrete_modes(sys: &OpenSystem, cluster: f64) -> Vec<LocalizedMode> {
    let d = sys.dim();
    let total = crate::oracle::total_matrix(sys.model.eps_s(), sys.jd.modes());
    let (vals, vecs) = eigh(&total);
    let mut out: Vec<LocalizedMode> = Vec::new();
    for (k, &e) in vals.iter().enumerate() {
        let phi = vecs.view((0, k), (d, 1)).into_owned();
        let z = &phi * phi.adjoint();
        match out.last_mut() {
            Some(m) if e - m.energy < cluster => {
                m.residue += z;
                m.multiplicity += 1;
            }
            _ => out.push(LocalizedMode { energy: e, residue: z, multiplicity: 1 }),
        }
    }
    out.retain(|m| crate::linalg::trace(&m.residue).re > 1e-14);
    for m in &mut out {
        m.residue = hermitian_part(&m.residue);
    }
    out
}

/// Quadrature nodes and weights over the spectral support.
#[derive(Debug, Clone, Default)]
pub struct EnergyGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EnergyGrid {
    /// Trapezoid rule with `n ≥ 2` equally spaced points.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> EnergyGrid {
        let n = n.max(2);
        let h = (hi - lo) / (n - 1) as f64;
        let nodes = (0..n).map(|k| lo + h * k as f64).collect();
        let weights = (0..n).map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h }).collect();
        EnergyGrid { nodes, weights }
    }

    pub fn from_rule(rule: Rule) -> EnergyGrid {
        EnergyGrid { nodes: rule.nodes, weights: rule.weights }
    }

    /// Composite Gauss–Legendre panels refined until both `∫D/2π` and
    /// `∫D e^{−iεt_max}/2π` are stable to `tol` on every panel.
    pub fn adaptive(sys: &OpenSystem, t_max: f64, tol: f64) -> Result<EnergyGrid> {
        let (a, b) = sys.jd.support();
        if !(a.is_finite() && b.is_finite()) || sys.jd.is_discrete() {
            return Err(Error::invalid("an energy grid needs a finite continuous support"));
        }
        let mut breaks = sys.jd.breakpoints();
        for e in eigvalsh(sys.model.eps_s()) {
            if e > a && e < b {
                breaks.push(e);
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let max_panel = (sys.jd.feature_width() / 2.0).min(2.0 / t_max.max(1e-300)).min(b - a);
        let order = 8;
        let (gx, gw) = quad::gauss_legendre(order);
        let probe = |lo: f64, hi: f64| -> Result<C64> {
            let mut acc = C64::new(0.0, 0.0);
            for (x, w) in gx.iter().zip(&gw) {
                let e = lo + 0.5 * (hi - lo) * (x + 1.0);
                let dm = broadened_spectrum(sys, e)?;
                let tr = crate::linalg::trace(&dm).re;
                acc += c(tr, 0.0) * (0.5 * (hi - lo) * w) + C64::from_polar(tr, -e * t_max) * (0.5 * (hi - lo) * w);
            }
            Ok(acc / (2.0 * PI))
        };
        let mut stack: Vec<(f64, f64)> = Vec::new();
        for w in breaks.windows(2) {
            let n = ((w[1] - w[0]) / max_panel).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / n as f64;
            for k in (0..n).rev() {
                stack.push((w[0] + h * k as f64, w[0] + h * (k + 1) as f64));
            }
        }
        stack.reverse();
        let mut panels: Vec<(f64, f64)> = Vec::new();
        while let Some((lo, hi)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let whole = probe(lo, hi)?;
            let split = probe(lo, mid)? + probe(mid, hi)?;
            let share = tol * (hi - lo) / (b - a);
            if (whole - split).norm() <= share.max(1e-15) || hi - lo < 1e-10 * (b - a) {
                panels.push((lo, hi));
            } else {
                stack.push((mid, hi));
                stack.push((lo, mid));
            }
        }
        panels.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut grid = EnergyGrid::default();
        for (lo, hi) in panels {
            for (x, w) in gx.iter().zip(&gw) {
                grid.nodes.push(lo + 0.5 * (hi - lo) * (x + 1.0));
                grid.weights.push(0.5 * (hi - lo) * w);
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// `D(ε)` sampled on an energy grid.
#[derive(Debug, Clone)]
pub struct SpectrumTable {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    pub d: Vec<CMat>,
    /// Smallest eigenvalue of any `D(ε)` before PSD clipping.
    pub min_eigenvalue: f64,
}

impl SpectrumTable {
    /// `∫D(ε)dε/2π` with the table's weights.
    pub fn continuum_weight(&self) -> CMat {
        let dim = self.d.first().map_or(0, |m| m.nrows());
        let mut acc = CMat::zeros(dim, dim);
        for (w, dm) in self.weights.iter().zip(&self.d) {
            acc += dm * c(*w, 0.0);
        }
        acc.unscale(2.0 * PI)
    }
}

/// `D(ε) = U(ε+i0⁺) J(ε) U(ε+i0⁺)†` at one energy, not clipped. With an
/// explicit `regularization_eta` the resolvent is taken at `ε + iη`.
pub fn broadened_spectrum(sys: &OpenSystem, eps: f64) -> Result<CMat> {
    let d = sys.dim();
    let (a, b) = sys.jd.support();
    if sys.jd.is_discrete() || !(eps >= a && eps <= b) {
        return Ok(CMat::zeros(d, d));
    }
    let j = sys.jd.eval_inside(eps);
    // At a hard edge with J ≠ 0 the principal part diverges logarithmically
    // and drives the resolvent, hence D, to zero.
    if max_abs(&j) == 0.0 || eps == a || eps == b {
        return Ok(CMat::zeros(d, d));
    }
    let z = c(eps, sys.bath.regularization_eta.unwrap_or(0.0));
    let u = resolvent_raw(sys, z)?;
    Ok(hermitian_part(&(&u * j * u.adjoint())))
}

pub fn spectrum(sys: &OpenSystem, grid: &EnergyGrid) -> Result<SpectrumTable> {
    let raw = par::map(&grid.nodes, |&e| broadened_spectrum(sys, e));
    let mut d = Vec::with_capacity(raw.len());
    let mut min_eig = f64::INFINITY;
    for m in raw {
        let m = m?;
        let (vals, _) = eigh(&m);
        min_eig = min_eig.min(vals.first().copied().unwrap_or(0.0));
        d.push(psd_clip(&m, 1e-10 * max_abs(&m).max(1e-300)));
    }
    Ok(SpectrumTable { energies: grid.nodes.clone(), weights: grid.weights.clone(), d, min_eigenvalue: min_eig })
}

/// `−2 Im U(ε+iη) = i(U − U†)` at `η = sys.eta()`.
pub fn spectral_function(sys: &OpenSystem, eps: f64) -> Result<CMat> {
    let u = resolvent_raw(sys, c(eps, sys.eta()))?;
    Ok(hermitian_part(&((&u - u.adjoint()) * I)))
}

/// `∫D(ε)dε/2π` by adaptive quadrature. The infinite wide band is mapped to
/// a finite interval by `ε = ε₀ + σ tan θ`.
pub fn continuum_weight(sys: &OpenSystem) -> Result<CMat> {
    let d = sys.dim();
    if sys.jd.is_discrete() {
        return Ok(CMat::zeros(d, d));
    }
    let tol = Tolerance { abs: 1e-11, rel: 1e-11, max_segments: 20_000 };
    if sys.jd.is_local() {
        let scale = max_abs(sys.model.eps_s()).max(1.0);
        let center = crate::linalg::trace(sys.model.eps_s()).re / d as f64;
        let m = quad::integrate(
            |th| {
                let e = center + scale * th.tan();
                let jac = scale / (th.cos() * th.cos());
                broadened_spectrum(sys, e).map(|m| m * c(jac, 0.0)).unwrap_or_else(|_| CMat::zeros(d, d))
            },
            &[-PI / 2.0, 0.0, PI / 2.0],
            tol,
        )?;
        return Ok(m.unscale(2.0 * PI));
    }
    let mut breaks = sys.jd.breakpoints();
    let (a, b) = sys.jd.support();
    breaks.extend(eigvalsh(sys.model.eps_s()).into_iter().filter(|&e| e > a && e < b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let m = quad::integrate(|e| broadened_spectrum(sys, e).unwrap_or_else(|_| CMat::from_element(d, d, c(f64::NAN, 0.0))), &breaks, tol)?;
    Ok(m.unscale(2.0 * PI))
}

/// `‖Σ_l Z_l + ∫D/2π − I‖`, entrywise maximum.
pub fn sum_rule_residual(sys: &OpenSystem, modes: &[LocalizedMode]) -> Result<f64> {
    let mut total = continuum_weight(sys)?;
    for m in modes {
        total += &m.residue;
    }
    Ok(max_abs(&(total - eye(sys.dim()))))
}
