//! Experiment configuration: a line-oriented `key = value` format with
//! `[section]` headers, equivalent to a JSON document of the same shape.
//!
//! ```text
//! # vacuum postselection at h0 = Γ
//! [model]
//! kind = single-site
//! gamma = 1
//! h0 = 1
//! [grid]
//! dt = 0.001
//! t_final = 10
//! [ensemble]
//! n_traj = 10000
//! master_seed = 7
//! [protocol]
//! n_bins = 1, 5, 20
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filter::{KpConvention, Quadrature};
use crate::fock::{FockOperators, FockState};
use crate::gaussian::{GaussianState1, LatticeParams, SingleSiteParams};
use crate::stochastic::{seed_plan, SeedSpec, TimeGrid};

/// Which engine evolves the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SingleSite,
    Lattice,
    Fock,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::SingleSite => "single-site",
            ModelKind::Lattice => "lattice",
            ModelKind::Fock => "fock",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single-site" | "single" => Ok(ModelKind::SingleSite),
            "lattice" => Ok(ModelKind::Lattice),
            "fock" => Ok(ModelKind::Fock),
            _ => Err(format!("expected single-site, lattice or fock, got `{s}`")),
        }
    }
}

/// Initial state of a single-mode run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitSpec {
    Vacuum,
    /// Number state `|n⟩`.
    Number { n: usize },
    /// `(|m⟩ + |n⟩)/√2`.
    Superposition { m: usize, n: usize },
    /// Coherent state `|α⟩`.
    Coherent { re: f64, im: f64 },
    /// Displaced number state `D(α)|n⟩`.
    Displaced { n: usize, re: f64, im: f64 },
}

impl std::fmt::Display for InitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitSpec::Vacuum => write!(f, "vacuum"),
            InitSpec::Number { n } => write!(f, "number:{n}"),
            InitSpec::Superposition { m, n } => write!(f, "superposition:{m},{n}"),
            InitSpec::Coherent { re, im } => write!(f, "coherent:{re},{im}"),
            InitSpec::Displaced { n, re, im } => write!(f, "displaced:{n},{re},{im}"),
        }
    }
}

impl FromStr for InitSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, args) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), a.split(',').map(str::trim).collect::<Vec<_>>()),
            None => (s.trim(), Vec::new()),
        };
        let usize_at = |i: usize| -> std::result::Result<usize, String> {
            args.get(i)
                .ok_or_else(|| format!("`{head}` needs more arguments"))?
                .parse()
                .map_err(|_| format!("`{}` is not a level index", args[i]))
        };
        let f64_at = |i: usize| -> std::result::Result<f64, String> {
            args.get(i)
                .ok_or_else(|| format!("`{head}` needs more arguments"))?
                .parse()
                .map_err(|_| format!("`{}` is not a number", args[i]))
        };
        let spec = match (head, args.len()) {
            ("vacuum", 0) => InitSpec::Vacuum,
            ("number", 1) => InitSpec::Number { n: usize_at(0)? },
            ("superposition", 2) => InitSpec::Superposition {
                m: usize_at(0)?,
                n: usize_at(1)?,
            },
            ("coherent", 2) => InitSpec::Coherent {
                re: f64_at(0)?,
                im: f64_at(1)?,
            },
            ("displaced", 3) => InitSpec::Displaced {
                n: usize_at(0)?,
                re: f64_at(1)?,
                im: f64_at(2)?,
            },
            _ => {
                return Err(format!(
                    "expected vacuum, number:N, superposition:M,N, coherent:RE,IM or displaced:N,RE,IM, got `{s}`"
                ))
            }
        };
        Ok(spec)
    }
}

impl InitSpec {
    /// Number-basis amplitudes in a truncation of `dim` levels.
    pub fn fock_state(&self, ops: &FockOperators) -> Result<FockState> {
        let dim = ops.dim();
        match *self {
            InitSpec::Vacuum => FockState::number(0, dim),
            InitSpec::Number { n } => FockState::number(n, dim),
            InitSpec::Superposition { m, n } => FockState::superposition(m, n, dim),
            InitSpec::Coherent { re, im } => FockState::coherent(Complex64::new(re, im), dim),
            InitSpec::Displaced { n, re, im } => {
                let alpha = Complex64::new(re, im);
                let generator = &ops.adag * alpha - &ops.a * alpha.conj();
                let psi = generator.exp() * FockState::number(n, dim)?.amps;
                FockState::new(psi)
            }
        }
    }

    /// Gaussian equivalent, where one exists.
    pub fn gaussian_state(&self) -> Option<GaussianState1> {
        let s2 = std::f64::consts::SQRT_2;
        match *self {
            InitSpec::Vacuum => Some(GaussianState1::vacuum()),
            InitSpec::Coherent { re, im } => Some(GaussianState1::coherent(s2 * re, s2 * im)),
            _ => None,
        }
    }

    /// `(⟨x²⟩, ⟨p²⟩, ⟨{x,p}⟩/2)` of the initial state, for the unconditional
    /// moment formulas.
    pub fn second_moments(&self, ops: &FockOperators) -> Result<[f64; 3]> {
        let m = self.fock_state(ops)?.moments(ops);
        Ok([
            m.v_x + m.mean_x * m.mean_x,
            m.v_p + m.mean_p * m.mean_p,
            m.u + m.mean_x * m.mean_p,
        ])
    }
}

/// Source of the estimator kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSource {
    /// Closed-form steady filters.
    Analytic,
    /// Single site: fit of the filter ODE solution.
    Ode,
    /// Single site: Wiener–Hopf solve from closed-form correlator tables.
    WienerHopf,
    /// Single site: Wiener–Hopf solve from correlators estimated on the
    /// simulated ensemble itself.
    Empirical,
}

impl KernelSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelSource::Analytic => "analytic",
            KernelSource::Ode => "ode",
            KernelSource::WienerHopf => "wiener-hopf",
            KernelSource::Empirical => "empirical",
        }
    }
}

impl FromStr for KernelSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(KernelSource::Analytic),
            "ode" => Ok(KernelSource::Ode),
            "wiener-hopf" => Ok(KernelSource::WienerHopf),
            "empirical" => Ok(KernelSource::Empirical),
            _ => Err(format!("expected analytic, ode, wiener-hopf or empirical, got `{s}`")),
        }
    }
}

fn parse_quadrature(s: &str) -> std::result::Result<Quadrature, String> {
    match s {
        "x" => Ok(Quadrature::X),
        "p" => Ok(Quadrature::P),
        _ => Err(format!("expected x or p, got `{s}`")),
    }
}

fn quadrature_str(q: Quadrature) -> &'static str {
    match q {
        Quadrature::X => "x",
        Quadrature::P => "p",
    }
}

fn parse_convention(s: &str) -> std::result::Result<KpConvention, String> {
    match s {
        "impulse-response" => Ok(KpConvention::ImpulseResponse),
        "doubled" => Ok(KpConvention::Doubled),
        _ => Err(format!("expected impulse-response or doubled, got `{s}`")),
    }
}

fn convention_str(c: KpConvention) -> &'static str {
    match c {
        KpConvention::ImpulseResponse => "impulse-response",
        KpConvention::Doubled => "doubled",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub gamma: f64,
    pub h0: f64,
    pub j0: f64,
    pub j: f64,
    /// Lattice lengths per dimension; `d` is their count.
    pub lengths: Vec<usize>,
    /// Number-basis truncation for the Fock engine.
    pub n_dim: usize,
    pub init: InitSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub quadrature: Quadrature,
    pub n_bins: Vec<usize>,
    /// Sites whose variances are recovered.
    pub sites: Vec<usize>,
    /// Site pairs whose covariances are recovered.
    pub pairs: Vec<(usize, usize)>,
    pub kernel: KernelSource,
    pub min_count: usize,
    pub kp_convention: KpConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub path: PathBuf,
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub protocol: ProtocolConfig,
    pub output: OutputConfig,
    /// Source line of each key set from text, for diagnostics.
    #[serde(skip)]
    lines: LineMap,
}

/// Key → source line; provenance only, so it never affects equality.
#[derive(Debug, Clone, Default)]
struct LineMap(BTreeMap<String, usize>);

impl PartialEq for LineMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                kind: ModelKind::SingleSite,
                gamma: 1.0,
                h0: 1.0,
                j0: 3.0,
                j: 1.0,
                lengths: vec![64],
                n_dim: 48,
                init: InitSpec::Vacuum,
            },
            grid: GridConfig {
                dt: 1e-3,
                t_final: 10.0,
            },
            ensemble: EnsembleConfig {
                n_traj: 1000,
                master_seed: 1,
            },
            protocol: ProtocolConfig {
                quadrature: Quadrature::X,
                n_bins: vec![20],
                sites: vec![0],
                pairs: Vec::new(),
                kernel: KernelSource::Analytic,
                min_count: 10,
                kp_convention: KpConvention::ImpulseResponse,
            },
            output: OutputConfig {
                path: PathBuf::from("out"),
            },
            lines: LineMap::default(),
        }
    }
}

/// Every recognized key with its default and meaning, as shown by `--help`.
pub const KEY_REFERENCE: &[(&str, &str, &str)] = &[
    ("model.kind", "single-site", "single-site | lattice | fock"),
    ("model.gamma", "1", "measurement rate Γ"),
    ("model.h0", "1", "onsite energy h0 (single-site, fock)"),
    ("model.j0", "3", "onsite energy J0 (lattice)"),
    ("model.j", "1", "hopping J (lattice)"),
    ("model.lengths", "64", "lattice lengths, comma separated; d = count"),
    ("model.n_dim", "48", "number-basis truncation (fock)"),
    (
        "model.init",
        "vacuum",
        "vacuum | number:N | superposition:M,N | coherent:RE,IM | displaced:N,RE,IM",
    ),
    ("grid.dt", "0.001", "time step in units of 1/Γ"),
    ("grid.t_final", "10", "final (observation) time"),
    ("ensemble.n_traj", "1000", "number of trajectories"),
    ("ensemble.master_seed", "1", "master seed of the per-trajectory streams"),
    ("protocol.quadrature", "x", "measured quadrature: x | p"),
    ("protocol.n_bins", "20", "bin counts per axis, comma separated"),
    ("protocol.sites", "0", "sites for variance recovery, comma separated"),
    ("protocol.pairs", "", "site pairs i-j for covariance recovery, comma separated"),
    ("protocol.kernel", "analytic", "analytic | ode | wiener-hopf | empirical"),
    ("protocol.min_count", "10", "minimum samples per bin"),
    ("protocol.kp_convention", "impulse-response", "impulse-response | doubled"),
    ("output.path", "out", "output directory"),
];

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("`{t}` is not valid here")))
        .collect()
}

fn parse_pairs(s: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (a, b) = t.split_once('-').ok_or_else(|| format!("pair `{t}` must look like i-j"))?;
            let a = a.trim().parse().map_err(|_| format!("`{a}` is not a site index"))?;
            let b = b.trim().parse().map_err(|_| format!("`{b}` is not a site index"))?;
            Ok((a, b))
        })
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

impl ExperimentConfig {
    /// Parses the text format. Unknown sections or keys, duplicate keys and
    /// malformed values are rejected with their line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: line_no,
                    field: line.to_string(),
                    message: "section header must end with `]`".into(),
                })?;
                let name = name.trim();
                if !matches!(name, "model" | "grid" | "ensemble" | "protocol" | "output") {
                    return Err(Error::Config {
                        line: line_no,
                        field: name.to_string(),
                        message: "unknown section".into(),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                field: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let full = match &section {
                Some(s) if !key.contains('.') => format!("{s}.{key}"),
                _ => key.to_string(),
            };
            if let Some(prev) = seen.insert(full.clone(), line_no) {
                return Err(Error::Config {
                    line: line_no,
                    field: full,
                    message: format!("duplicate key (first set on line {prev})"),
                });
            }
            cfg.set_at(&full, value.trim(), line_no)?;
        }
        cfg.lines = LineMap(seen);
        Ok(cfg)
    }

    /// JSON form; missing keys take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut base = serde_json::to_value(Self::default())?;
        let patch: serde_json::Value = serde_json::from_str(text)?;
        merge_json(&mut base, patch);
        serde_json::from_value(base).map_err(|e| Error::Config {
            line: e.line(),
            field: "json".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads either format, choosing JSON when the first non-blank
    /// character is `{`.
    pub fn from_str_any(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::parse(text)
        }
    }

    /// Overrides one key (`section.key`), as done by command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_at(key, value, 0)?;
        self.lines.0.remove(key);
        Ok(())
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let fail = |message: String| Error::Config {
            line,
            field: key.to_string(),
            message,
        };
        let m = &mut self.model;
        let p = &mut self.protocol;
        match key {
            "model.kind" => m.kind = value.parse().map_err(fail)?,
            "model.gamma" => m.gamma = num(value).map_err(fail)?,
            "model.h0" => m.h0 = num(value).map_err(fail)?,
            "model.j0" => m.j0 = num(value).map_err(fail)?,
            "model.j" => m.j = num(value).map_err(fail)?,
            "model.lengths" => m.lengths = parse_list(value).map_err(fail)?,
            "model.n_dim" => m.n_dim = num(value).map_err(fail)?,
            "model.init" => m.init = value.parse().map_err(fail)?,
            "grid.dt" => self.grid.dt = num(value).map_err(fail)?,
            "grid.t_final" => self.grid.t_final = num(value).map_err(fail)?,
            "ensemble.n_traj" => self.ensemble.n_traj = num(value).map_err(fail)?,
            "ensemble.master_seed" => self.ensemble.master_seed = num(value).map_err(fail)?,
            "protocol.quadrature" => p.quadrature = parse_quadrature(value).map_err(fail)?,
            "protocol.n_bins" => p.n_bins = parse_list(value).map_err(fail)?,
            "protocol.sites" => p.sites = parse_list(value).map_err(fail)?,
            "protocol.pairs" => p.pairs = parse_pairs(value).map_err(fail)?,
            "protocol.kernel" => p.kernel = value.parse().map_err(fail)?,
            "protocol.min_count" => p.min_count = num(value).map_err(fail)?,
            "protocol.kp_convention" => p.kp_convention = parse_convention(value).map_err(fail)?,
            "output.path" => self.output.path = PathBuf::from(value),
            _ => return Err(fail("unknown key".into())),
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let p = &self.protocol;
        let pairs: Vec<String> = p.pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let mut s = String::new();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "kind = {}", m.kind.as_str());
        let _ = writeln!(s, "gamma = {}", m.gamma);
        let _ = writeln!(s, "h0 = {}", m.h0);
        let _ = writeln!(s, "j0 = {}", m.j0);
        let _ = writeln!(s, "j = {}", m.j);
        let _ = writeln!(s, "lengths = {}", join(&m.lengths));
        let _ = writeln!(s, "n_dim = {}", m.n_dim);
        let _ = writeln!(s, "init = {}", m.init);
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "dt = {}", self.grid.dt);
        let _ = writeln!(s, "t_final = {}", self.grid.t_final);
        let _ = writeln!(s, "\n[ensemble]");
        let _ = writeln!(s, "n_traj = {}", self.ensemble.n_traj);
        let _ = writeln!(s, "master_seed = {}", self.ensemble.master_seed);
        let _ = writeln!(s, "\n[protocol]");
        let _ = writeln!(s, "quadrature = {}", quadrature_str(p.quadrature));
        let _ = writeln!(s, "n_bins = {}", join(&p.n_bins));
        let _ = writeln!(s, "sites = {}", join(&p.sites));
        let _ = writeln!(s, "pairs = {}", pairs.join(", "));
        let _ = writeln!(s, "kernel = {}", p.kernel.as_str());
        let _ = writeln!(s, "min_count = {}", p.min_count);
        let _ = writeln!(s, "kp_convention = {}", convention_str(p.kp_convention));
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "path = {}", self.output.path.display());
        s
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.lines.0.get(field).copied().unwrap_or(0),
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Checks every field and that the module-level parameter objects
    /// can be built.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.gamma >= 0.0) || !m.gamma.is_finite() {
            return Err(self.err("model.gamma", "must be non-negative and finite"));
        }
        if !(self.grid.dt > 0.0) || !self.grid.dt.is_finite() {
            return Err(self.err("grid.dt", "must be positive"));
        }
        if !(self.grid.t_final >= self.grid.dt) || !self.grid.t_final.is_finite() {
            return Err(self.err("grid.t_final", "must be at least one step"));
        }
        if self.ensemble.n_traj == 0 {
            return Err(self.err("ensemble.n_traj", "must be at least 1"));
        }
        if self.protocol.n_bins.is_empty() || self.protocol.n_bins.contains(&0) {
            return Err(self.err("protocol.n_bins", "needs one or more positive bin counts"));
        }
        if self.protocol.min_count == 0 {
            return Err(self.err("protocol.min_count", "must be at least 1"));
        }
        match m.kind {
            ModelKind::SingleSite => {
                self.single_site_params()?;
                if m.init.gaussian_state().is_none() {
                    return Err(self.err("model.init", "the Gaussian engine needs vacuum or coherent:RE,IM"));
                }
                self.check_sites(1)?;
            }
            ModelKind::Fock => {
                self.single_site_params()?;
                let ops = FockOperators::new(m.n_dim).map_err(|e| self.err("model.n_dim", e.to_string()))?;
                m.init.fock_state(&ops).map_err(|e| self.err("model.init", e.to_string()))?;
                self.check_sites(1)?;
            }
            ModelKind::Lattice => {
                let lp = self.lattice_params()?;
                if m.init != InitSpec::Vacuum {
                    return Err(self.err("model.init", "lattice runs start from the vacuum"));
                }
                self.check_sites(lp.num_sites())?;
            }
        }
        if m.kind != ModelKind::Lattice && self.protocol.quadrature != Quadrature::X {
            return Err(self.err("protocol.quadrature", "single-site estimators target x"));
        }
        if m.kind == ModelKind::Lattice && !matches!(self.protocol.kernel, KernelSource::Analytic) {
            return Err(self.err("protocol.kernel", "lattice runs use the analytic kernels"));
        }
        Ok(())
    }

    fn check_sites(&self, v: usize) -> Result<()> {
        let p = &self.protocol;
        if let Some(&s) = p.sites.iter().find(|&&s| s >= v) {
            return Err(self.err("protocol.sites", format!("site {s} outside 0..{v}")));
        }
        if let Some(&(a, b)) = p.pairs.iter().find(|&&(a, b)| a >= v || b >= v) {
            return Err(self.err("protocol.pairs", format!("pair {a}-{b} outside 0..{v}")));
        }
        Ok(())
    }

    pub fn single_site_params(&self) -> Result<SingleSiteParams> {
        let m = &self.model;
        if m.gamma == 0.0 {
            if !m.h0.is_finite() {
                return Err(self.err("model.h0", "must be finite"));
            }
            return Ok(SingleSiteParams::unmonitored(m.h0));
        }
        SingleSiteParams::new(m.h0, m.gamma).map_err(|e| self.err("model.h0", e.to_string()))
    }

    pub fn lattice_params(&self) -> Result<LatticeParams> {
        let m = &self.model;
        LatticeParams::new(m.j0, m.j, m.lengths.clone(), m.gamma).map_err(|e| self.err("model.lengths", e.to_string()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_duration(self.grid.dt, self.grid.t_final).map_err(|e| self.err("grid.dt", e.to_string()))
    }

    pub fn seeds(&self) -> Result<Vec<SeedSpec>> {
        seed_plan(self.ensemble.master_seed, self.ensemble.n_traj)
    }

    pub fn fock_operators(&self) -> Result<FockOperators> {
        FockOperators::new(self.model.n_dim).map_err(|e| self.err("model.n_dim", e.to_string()))
    }
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}
