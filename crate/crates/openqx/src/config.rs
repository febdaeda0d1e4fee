//! Scenario files. A TOML document with the sections `[system]`, `[bath]`,
//! `[spectral]`, `[initial]`, `[grid]` and `[output]`; complex numbers are
//! written as strings such as `"0.3-0.1i"`.
//!
//! ```toml
//! [system]
//! statistics = "fermion"
//! eps = [[0.3]]
//!
//! [bath]
//! beta = 2.0
//! mu = 0.0
//!
//! [spectral]
//! kind = "lorentzian"
//! amplitude = 0.5
//! center = 0.0
//! width = 1.0
//! lo = -10.0
//! hi = 10.0
//!
//! [initial]
//! preset = "fock:1"
//!
//! [grid]
//! t_max = 10.0
//! steps = 1000
//! ```
//!
//! `[system] preset = "<name>"` loads a bundled scenario; explicit `[bath]`
//! or `[spectral]` sections then replace the preset's.

use std::path::{Path, PathBuf};

use openqx_core::evolution::ReducedDensityMatrix;
use openqx_core::fock::FockBasis;
use openqx_core::greens::TimeGrid;
use openqx_core::linalg::eye;
use openqx_core::model::{BathMode, LorentzianPeak};
use openqx_core::{scenarios, BathConfig, CMat, CVec, OpenSystem, SpectralDensity, SpectralKind, Statistics, SystemModel, C64};
use serde::Deserialize;

use crate::error::ConfigError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// A multiple of the identity.
    Scalar(Scalar),
    Rows(Vec<Vec<Scalar>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: RawSystem,
    pub bath: Option<RawBath>,
    pub spectral: Option<RawSpectral>,
    #[serde(default)]
    pub initial: RawInitial,
    #[serde(default)]
    pub grid: RawGrid,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub preset: Option<String>,
    pub statistics: Option<String>,
    pub eps: Option<MatrixSpec>,
    /// Per-level occupation cap for bosons.
    pub n_max: Option<usize>,
    /// Total occupation cap of the truncated basis.
    pub n_cap: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBath {
    pub beta: f64,
    #[serde(default)]
    pub mu: f64,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPeak {
    pub amplitude: MatrixSpec,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMode {
    pub energy: f64,
    pub coupling: Vec<Scalar>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpectral {
    /// `lorentzian`, `ohmic`, `wide-band` or `discrete`.
    pub kind: String,
    pub amplitude: Option<MatrixSpec>,
    pub center: Option<f64>,
    pub width: Option<f64>,
    pub peaks: Option<Vec<RawPeak>>,
    pub cutoff: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub modes: Option<Vec<RawMode>>,
    /// Cells used by `verify` to discretize the reservoir for the many-body oracle.
    pub oracle_modes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEntry {
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    pub coef: Scalar,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    /// `vacuum`, `fock:<counts>` or `mixed:<w>@<counts>;...`.
    pub preset: Option<String>,
    pub entries: Option<Vec<RawEntry>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub t_max: Option<f64>,
    pub steps: Option<usize>,
    pub step: Option<f64>,
    /// Points of the uniform energy grid written by `spectrum`.
    pub energies: Option<usize>,
    /// Energy window for `spectrum` when the support is infinite.
    pub energy_window: Option<[f64; 2]>,
    /// Coupling multipliers for the weak-coupling sweep.
    pub sweep: Option<Vec<f64>>,
    /// Overrides `50/Γ_min` as the `thermalize` horizon.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<String>,
    /// Snapshot times for `evolve`, rounded to the grid.
    pub times: Option<Vec<f64>>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Config {
    pub preset: Option<String>,
    pub system: OpenSystem,
    pub basis: FockBasis,
    pub initial: ReducedDensityMatrix,
    pub grid: TimeGrid,
    pub energies: usize,
    pub energy_window: Option<(f64, f64)>,
    pub sweep: Vec<f64>,
    pub horizon: Option<f64>,
    pub oracle_modes: usize,
    pub out_dir: PathBuf,
    /// Grid indices of the `evolve` snapshots, ascending and distinct.
    pub snapshots: Vec<usize>,
}

/// Locates `key` inside `[section]` for diagnostics.
fn find_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let header = format!("[{section}]");
    let mut inside = false;
    let mut section_line = None;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = t == header;
            if inside {
                section_line = Some(n + 1);
            }
            continue;
        }
        if inside && !key.is_empty() {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(n + 1);
                }
            }
        }
    }
    section_line
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let field = if key.is_empty() { section.to_string() } else { format!("{section}.{key}") };
        ConfigError { field, line: find_line(self.text, section, key), message: message.into() }
    }

    fn scalar(&self, section: &str, key: &str, s: &Scalar) -> Result<C64, ConfigError> {
        match s {
            Scalar::Real(x) => Ok(C64::new(*x, 0.0)),
            Scalar::Text(t) => parse_complex(t).ok_or_else(|| self.err(section, key, format!("cannot read {t:?} as a complex number"))),
        }
    }

    fn matrix(&self, section: &str, key: &str, m: &MatrixSpec, d: Option<usize>) -> Result<CMat, ConfigError> {
        match m {
            MatrixSpec::Scalar(s) => {
                let z = self.scalar(section, key, s)?;
                Ok(eye(d.unwrap_or(1)) * z)
            }
            MatrixSpec::Rows(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(self.err(section, key, "expected a square matrix"));
                }
                if let Some(d) = d {
                    if d != n {
                        return Err(self.err(section, key, format!("expected a {d}x{d} matrix, got {n}x{n}")));
                    }
                }
                let mut out = CMat::zeros(n, n);
                for (i, r) in rows.iter().enumerate() {
                    for (j, s) in r.iter().enumerate() {
                        out[(i, j)] = self.scalar(section, key, s)?;
                    }
                }
                Ok(out)
            }
        }
    }

    fn core<T>(&self, section: &str, key: &str, r: openqx_core::Result<T>) -> Result<T, ConfigError> {
        r.map_err(|e| self.err(section, key, e.to_string()))
    }
}

/// `re`, `im i`, `re+im i` or `re-im i`, with optional spaces.
pub fn parse_complex(text: &str) -> Option<C64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    match t.as_str() {
        "i" | "+i" => return Some(C64::new(0.0, 1.0)),
        "-i" => return Some(C64::new(0.0, -1.0)),
        _ => {}
    }
    t.parse::<C64>().ok()
}

pub fn load(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError { field: path.display().to_string(), line: None, message: e.to_string() })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        ConfigError { field: "document".into(), line, message: e.message().to_string() }
    })?;
    validate(&raw, text)
}

fn validate(raw: &RawConfig, text: &str) -> Result<Config, ConfigError> {
    let cx = Ctx { text };
    let preset = match &raw.system.preset {
        Some(name) => Some(
            scenarios::by_name(name).ok_or_else(|| cx.err("system", "preset", format!("unknown preset {name:?}; known: {}", scenarios::names().join(", "))))?,
        ),
        None => None,
    };

    let model = match (&preset, &raw.system.eps) {
        (Some(p), None) => {
            if raw.system.statistics.is_some() {
                return Err(cx.err("system", "statistics", "a preset fixes the statistics"));
            }
            p.system.model.clone()
        }
        (_, Some(eps)) => {
            let eps = cx.matrix("system", "eps", eps, None)?;
            let stats = match raw.system.statistics.as_deref() {
                Some("fermion") => Statistics::Fermion,
                Some("boson") => Statistics::Boson,
                Some(other) => return Err(cx.err("system", "statistics", format!("expected \"fermion\" or \"boson\", got {other:?}"))),
                None => return Err(cx.err("system", "statistics", "missing")),
            };
            let n_max = if stats == Statistics::Fermion { 1 } else { raw.system.n_max.unwrap_or(8) };
            cx.core("system", "eps", SystemModel::new(eps, stats, n_max))?
        }
        (None, None) => return Err(cx.err("system", "eps", "missing (or give a preset)")),
    };
    let d = model.dim();
    let model = match (raw.system.n_max, model.statistics()) {
        (Some(n), Statistics::Boson) if preset.is_some() => cx.core("system", "n_max", SystemModel::boson(model.eps_s().clone(), n))?,
        (Some(_), Statistics::Fermion) => return Err(cx.err("system", "n_max", "fermionic levels hold at most one particle")),
        _ => model,
    };

    let bath = match (&raw.bath, &preset) {
        (Some(b), _) => {
            let mut bath = BathConfig { beta: b.beta, mu: b.mu, regularization_eta: b.eta };
            if b.beta == 0.0 && model.statistics() == Statistics::Boson {
                return Err(cx.err("bath", "beta", "infinite temperature is only defined for fermions"));
            }
            cx.core("bath", "beta", bath.validate())?;
            bath.regularization_eta = b.eta;
            bath
        }
        (None, Some(p)) => p.system.bath,
        (None, None) => return Err(cx.err("bath", "", "missing section")),
    };

    let jd = match (&raw.spectral, &preset) {
        (Some(s), _) => spectral_density(&cx, s, d)?,
        (None, Some(p)) => p.system.jd.clone(),
        (None, None) => return Err(cx.err("spectral", "", "missing section")),
    };
    let system = cx.core("spectral", "", OpenSystem::new(model, bath, jd))?;

    let n_max = system.model.n_max();
    let n_cap = match system.statistics() {
        Statistics::Fermion => d,
        Statistics::Boson => raw.system.n_cap.unwrap_or(n_max),
    };
    let basis = FockBasis::new(d, system.statistics(), n_cap, n_max);
    let initial = initial_state(&cx, &raw.initial, &basis)?;

    let t_max = raw.grid.t_max.unwrap_or(10.0);
    let grid = match (raw.grid.steps, raw.grid.step) {
        (Some(_), Some(_)) => return Err(cx.err("grid", "step", "give either steps or step")),
        (Some(n), None) => cx.core("grid", "steps", TimeGrid::new(t_max, n))?,
        (None, Some(h)) => cx.core("grid", "step", TimeGrid::with_step(t_max, h))?,
        (None, None) => cx.core("grid", "t_max", TimeGrid::new(t_max, (t_max / 0.01).ceil().max(4.0) as usize))?,
    };
    if grid.n_steps < 4 {
        return Err(cx.err("grid", "steps", "at least four steps are needed"));
    }

    let energies = raw.grid.energies.unwrap_or(2001);
    if energies < 2 {
        return Err(cx.err("grid", "energies", "at least two energies are needed"));
    }
    let energy_window = match raw.grid.energy_window {
        Some([a, b]) if a < b && a.is_finite() && b.is_finite() => Some((a, b)),
        Some(_) => return Err(cx.err("grid", "energy_window", "expected a finite [lo, hi] with lo < hi")),
        None => None,
    };
    let sweep = raw.grid.sweep.clone().unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.125]);
    if sweep.is_empty() || sweep.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(cx.err("grid", "sweep", "coupling multipliers must be positive"));
    }
    if let Some(h) = raw.grid.horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(cx.err("grid", "horizon", "must be positive"));
        }
    }
    // Keeps the many-body space at 2^10 or below for the default.
    let oracle_modes = raw.spectral.as_ref().and_then(|s| s.oracle_modes).unwrap_or_else(|| ((10 - d.min(5)) / d).clamp(2, 6));
    if oracle_modes < 2 {
        return Err(cx.err("spectral", "oracle_modes", "at least two modes are needed"));
    }

    let snapshots = match &raw.output.times {
        Some(times) => {
            let mut idx = Vec::with_capacity(times.len());
            for &t in times {
                if !(t >= 0.0 && t <= grid.t_max * (1.0 + 1e-12)) {
                    return Err(cx.err("output", "times", format!("time {t} lies outside [0, {}]", grid.t_max)));
                }
                idx.push(((t / grid.step()).round() as usize).min(grid.n_steps));
            }
            idx.sort_unstable();
            idx.dedup();
            idx
        }
        None => {
            let mut idx: Vec<usize> = (0..=10).map(|k| k * grid.n_steps / 10).collect();
            idx.dedup();
            idx
        }
    };

    Ok(Config {
        preset: raw.system.preset.clone(),
        system,
        basis,
        initial,
        grid,
        energies,
        energy_window,
        sweep,
        horizon: raw.grid.horizon,
        oracle_modes,
        out_dir: PathBuf::from(raw.output.dir.clone().unwrap_or_else(|| "out".into())),
        snapshots,
    })
}

fn spectral_density(cx: &Ctx, s: &RawSpectral, d: usize) -> Result<SpectralDensity, ConfigError> {
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| cx.err("spectral", key, "missing"));
    let amplitude = |key: &str| -> Result<CMat, ConfigError> {
        let m = s.amplitude.as_ref().ok_or_else(|| cx.err("spectral", key, "missing"))?;
        cx.matrix("spectral", key, m, Some(d))
    };
    let kind = match s.kind.as_str() {
        "lorentzian" => {
            let peaks = match &s.peaks {
                Some(ps) => ps
                    .iter()
                    .map(|p| Ok(LorentzianPeak { amplitude: cx.matrix("spectral", "peaks", &p.amplitude, Some(d))?, center: p.center, width: p.width }))
                    .collect::<Result<Vec<_>, ConfigError>>()?,
                None => vec![LorentzianPeak { amplitude: amplitude("amplitude")?, center: need(s.center, "center")?, width: need(s.width, "width")? }],
            };
            SpectralKind::LorentzianSum(peaks)
        }
        "ohmic" => SpectralKind::OhmicExpCutoff { amplitude: amplitude("amplitude")?, cutoff: need(s.cutoff, "cutoff")? },
        "wide-band" => SpectralKind::WideBand { amplitude: amplitude("amplitude")? },
        "discrete" => {
            let modes = s.modes.as_ref().ok_or_else(|| cx.err("spectral", "modes", "missing"))?;
            let modes = modes
                .iter()
                .map(|m| {
                    if m.coupling.len() != d {
                        return Err(cx.err("spectral", "modes", format!("each coupling needs {d} entries")));
                    }
                    let v = m.coupling.iter().map(|z| cx.scalar("spectral", "modes", z)).collect::<Result<Vec<_>, _>>()?;
                    Ok(BathMode { energy: m.energy, coupling: CVec::from_vec(v) })
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            return cx.core("spectral", "modes", SpectralDensity::discrete(modes));
        }
        other => {
            return Err(cx.err("spectral", "kind", format!("expected lorentzian, ohmic, wide-band or discrete, got {other:?}")));
        }
    };
    let (lo, hi) = match &kind {
        SpectralKind::OhmicExpCutoff { .. } => (s.lo.unwrap_or(0.0), need(s.hi, "hi")?),
        SpectralKind::WideBand { .. } => (s.lo.unwrap_or(f64::NEG_INFINITY), s.hi.unwrap_or(f64::INFINITY)),
        _ => (need(s.lo, "lo")?, need(s.hi, "hi")?),
    };
    cx.core("spectral", "kind", SpectralDensity::new(kind, lo, hi))
}

fn parse_counts(text: &str, d: usize) -> Option<Vec<usize>> {
    let v: Vec<usize> = text.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
    (v.len() == d).then_some(v)
}

fn initial_state(cx: &Ctx, raw: &RawInitial, basis: &FockBasis) -> Result<ReducedDensityMatrix, ConfigError> {
    let d = basis.levels();
    match (&raw.preset, &raw.entries) {
        (Some(_), Some(_)) => Err(cx.err("initial", "entries", "give either a preset or entries")),
        (None, None) => cx.core("initial", "", ReducedDensityMatrix::vacuum(basis.clone())),
        (Some(p), None) => {
            let bad = |msg: String| cx.err("initial", "preset", msg);
            if p == "vacuum" {
                return cx.core("initial", "preset", ReducedDensityMatrix::vacuum(basis.clone()));
            }
            if let Some(rest) = p.strip_prefix("fock:") {
                let counts = parse_counts(rest, d).ok_or_else(|| bad(format!("expected {d} comma-separated counts in {p:?}")))?;
                return cx.core("initial", "preset", ReducedDensityMatrix::fock(basis.clone(), &counts));
            }
            if let Some(rest) = p.strip_prefix("mixed:") {
                let mut weights = Vec::new();
                for item in rest.split(';') {
                    let (w, counts) = item.split_once('@').ok_or_else(|| bad(format!("expected <weight>@<counts> in {item:?}")))?;
                    let w: f64 = w.trim().parse().map_err(|_| bad(format!("cannot read weight {w:?}")))?;
                    let counts = parse_counts(counts, d).ok_or_else(|| bad(format!("expected {d} counts in {item:?}")))?;
                    weights.push((counts, w));
                }
                return cx.core("initial", "preset", ReducedDensityMatrix::mixture(basis.clone(), &weights));
            }
            Err(bad(format!("unknown preset {p:?}; expected vacuum, fock:<counts> or mixed:<w>@<counts>;...")))
        }
        (None, Some(entries)) => {
            let n = basis.len();
            let mut mat = CMat::zeros(n, n);
            let mut given = vec![vec![None; n]; n];
            for e in entries {
                let at = |counts: &[usize]| {
                    basis.index_of(counts).ok_or_else(|| cx.err("initial", "entries", format!("occupation {counts:?} is outside the basis")))
                };
                let (a, b) = (at(&e.i)?, at(&e.j)?);
                if e.i.iter().sum::<usize>() != e.j.iter().sum::<usize>() {
                    return Err(cx.err("initial", "entries", format!("coherence between {:?} and {:?} mixes particle numbers", e.i, e.j)));
                }
                let z = cx.scalar("initial", "entries", &e.coef)?;
                mat[(a, b)] += z;
                given[a][b] = Some(mat[(a, b)]);
            }
            for (a, row) in given.iter().enumerate() {
                for (b, entry) in row.iter().enumerate() {
                    if let Some(z) = *entry {
                        match given[b][a] {
                            Some(w) if (w - z.conj()).norm() <= 1e-12 * (1.0 + z.norm()) => {}
                            _ => {
                                let (i, j) = (basis.states()[a].counts(), basis.states()[b].counts());
                                return Err(cx.err("initial", "entries", format!("entry ({i:?}, {j:?}) needs its Hermitian partner ({j:?}, {i:?}) = conj")));
                            }
                        }
                    }
                }
            }
            cx.core("initial", "entries", ReducedDensityMatrix::new(basis.clone(), mat))
        }
    }
}
