//! Quadrature rules: adaptive Gauss–Kronrod for matrix-valued integrands and
//! fixed composite Gauss–Legendre rules for tabulated kernels.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{max_abs, CMat};
use crate::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] =
    [0.129484966168869693270611432679082, 0.279705391489276667901467771423780, 0.381830050505118944950369775488975, 0.417959183673469387755102040816327];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-12, rel: 1e-10, max_segments: 4000 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: CMat,
    error: f64,
}

fn gk15<F: Fn(f64) -> CMat>(f: &F, a: f64, b: f64) -> (CMat, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.scale(WGK[7]);
    let mut gauss = fc.scale(WG[3]);
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += sum.scale(WGK[j]);
        if j % 2 == 1 {
            gauss += sum.scale(WG[j / 2]);
        }
    }
    kronrod.scale_mut(half);
    gauss.scale_mut(half);
    let err = max_abs(&(&kronrod - &gauss));
    (kronrod, err)
}

/// Globally adaptive G7–K15 integration over consecutive intervals
/// `[breaks[0], breaks[1]], [breaks[1], breaks[2]], …`.
pub fn integrate<F: Fn(f64) -> CMat>(f: F, breaks: &[f64], tol: Tolerance) -> Result<CMat> {
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut segs: Vec<Segment> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (value, error) = gk15(&f, w[0], w[1]);
            Segment { a: w[0], b: w[1], value, error }
        })
        .collect();
    if segs.is_empty() {
        let probe = f(breaks[0]);
        return Ok(CMat::zeros(probe.nrows(), probe.ncols()));
    }
    loop {
        let total = segs.iter().skip(1).fold(segs[0].value.clone(), |acc, s| acc + &s.value);
        let err: f64 = segs.iter().map(|s| s.error).sum();
        let target = tol.abs.max(tol.rel * max_abs(&total));
        if err <= target {
            return Ok(total);
        }
        let (worst, _) = segs.iter().enumerate().fold((0, -1.0), |best, (i, s)| if s.error > best.1 { (i, s.error) } else { best });
        let s = &segs[worst];
        let mid = 0.5 * (s.a + s.b);
        if segs.len() >= tol.max_segments || !(mid > s.a && mid < s.b) {
            return Err(Error::Quadrature { estimate: err, tolerance: target });
        }
        let (a, b) = (s.a, s.b);
        let (lv, le) = gk15(&f, a, mid);
        let (rv, re) = gk15(&f, mid, b);
        segs[worst] = Segment { a, b: mid, value: lv, error: le };
        segs.push(Segment { a: mid, b, value: rv, error: re });
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tolerance) -> Result<f64> {
    let m = integrate(|x| CMat::from_element(1, 1, f(x).into()), breaks, tol)?;
    Ok(m[(0, 0)].re)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if n == 0 {
                (1.0, 0.0)
            } else if n == 1 {
                (z, 1.0)
            } else {
                (p1, p0)
            };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// A fixed quadrature rule `Σ w_k f(x_k)`.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Composite Gauss–Legendre with `order` nodes per panel. Each interval
    /// between consecutive sorted breakpoints is cut into equal panels no
    /// wider than `max_panel`.
    pub fn composite(breaks: &[f64], max_panel: f64, order: usize) -> Rule {
        let (gx, gw) = gauss_legendre(order);
        let mut rule = Rule::default();
        for win in breaks.windows(2) {
            let (a, b) = (win[0], win[1]);
            if !(b > a) {
                continue;
            }
            let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
            let width = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * width;
                for (x, w) in gx.iter().zip(&gw) {
                    rule.nodes.push(lo + 0.5 * width * (x + 1.0));
                    rule.weights.push(0.5 * width * w);
                }
            }
        }
        rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
