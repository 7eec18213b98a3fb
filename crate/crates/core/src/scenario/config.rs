//! Flat `section.key = value` scenario configuration.
//!
//! One assignment per line, `#` starts a comment, keys are case-sensitive.
//! The parser reports every problem it finds, each with its line number.
//!
//! ```text
//! grid.n = 32
//! grid.length = 16.0
//! initial_state = product_gaussian
//! initial_state.sigma_x = 0.8
//! potential = bilinear
//! potential.kappa = 0.5
//! evolution.dt = 1e-3
//! evolution.steps = 100
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::MIN_POINTS;
use crate::grid::PhysParams;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_RECORD_EVERY: usize = 10;
pub const DEFAULT_SIGMA: f64 = 0.8;
pub const DEFAULT_KAPPA: f64 = 0.5;
pub const DEFAULT_V0: f64 = 1.0;
pub const DEFAULT_COUPLING_WIDTH: f64 = 2.0;

/// One problem found while parsing. `line` is `None` for missing keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialStateSpec {
    /// `g(x)·g(y)` with `g ∝ exp(−(x−x₀)²/4σ² + i p x/ħ)`; σ is the
    /// standard deviation of `|g|²`.
    ProductGaussian {
        sigma_x: f64,
        sigma_y: f64,
        center_x: f64,
        center_y: f64,
        momentum_x: f64,
        momentum_y: f64,
    },
    /// `exp(−(x+y)²/4b² − (x−y)²/4a²)`.
    DoubleGaussian { a: f64, b: f64 },
    /// `√λ₀·h_p(x)h_p(y) + √(1−λ₀)·h_q(x)h_q(y)` with oscillator modes `(p, q)`.
    SchmidtTwoTerm { lambda0: f64, mode_indices: (usize, usize) },
}

impl InitialStateSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            InitialStateSpec::ProductGaussian { .. } => "product_gaussian",
            InitialStateSpec::DoubleGaussian { .. } => "double_gaussian",
            InitialStateSpec::SchmidtTwoTerm { .. } => "schmidt_two_term",
        }
    }

    pub fn product_gaussian(sigma: f64) -> Self {
        InitialStateSpec::ProductGaussian {
            sigma_x: sigma,
            sigma_y: sigma,
            center_x: 0.0,
            center_y: 0.0,
            momentum_x: 0.0,
            momentum_y: 0.0,
        }
    }
}

/// Single-particle term of a separable potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// 0
    Zero,
    /// `c` (the parameter)
    Constant,
    /// `c·x`
    Linear,
    /// `½·c·x²`
    Harmonic,
    /// `c·x⁴`
    Quartic,
}

impl TermKind {
    pub fn name(self) -> &'static str {
        match self {
            TermKind::Zero => "zero",
            TermKind::Constant => "constant",
            TermKind::Linear => "linear",
            TermKind::Harmonic => "harmonic",
            TermKind::Quartic => "quartic",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zero" => TermKind::Zero,
            "constant" => TermKind::Constant,
            "linear" => TermKind::Linear,
            "harmonic" => TermKind::Harmonic,
            "quartic" => TermKind::Quartic,
            _ => return None,
        })
    }

    pub fn eval(self, c: f64, x: f64) -> f64 {
        match self {
            TermKind::Zero => 0.0,
            TermKind::Constant => c,
            TermKind::Linear => c * x,
            TermKind::Harmonic => 0.5 * c * x * x,
            TermKind::Quartic => c * x.powi(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    None,
    Separable { f_kind: TermKind, g_kind: TermKind, f_param: f64, g_param: f64 },
    Bilinear { kappa: f64 },
    GaussianCoupling { v0: f64, width: f64 },
}

impl PotentialSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            PotentialSpec::None => "none",
            PotentialSpec::Separable { .. } => "separable",
            PotentialSpec::Bilinear { .. } => "bilinear",
            PotentialSpec::GaussianCoupling { .. } => "gaussian_coupling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct OutputSpec {
    pub timeseries_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    /// Dump ψ every this many steps; 0 disables dumps.
    pub dump_every: usize,
    /// Directory receiving `psi_<step>.purf` files.
    pub dump_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub phys: PhysParams,
    pub initial_state: InitialStateSpec,
    pub potential: PotentialSpec,
    pub evolution: EvolutionConfig,
    pub outputs: OutputSpec,
}

impl ScenarioConfig {
    /// A valid config with defaults everywhere except the given pieces.
    pub fn new(n: usize, length: f64, initial_state: InitialStateSpec, potential: PotentialSpec, steps: usize) -> Self {
        ScenarioConfig {
            grid: GridSpec { n, length },
            phys: PhysParams::default(),
            initial_state,
            potential,
            evolution: EvolutionConfig { dt: DEFAULT_DT, steps, record_every: default_record_every(steps) },
            outputs: OutputSpec::default(),
        }
    }
}

fn default_record_every(steps: usize) -> usize {
    DEFAULT_RECORD_EVERY.min(steps).max(1)
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Parser {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
}

impl Parser {
    fn error(&mut self, line: Option<usize>, key: &str, message: String) {
        self.errors.push(ConfigError { line, key: key.to_string(), message });
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        let e = self.entries.get_mut(key)?;
        e.used = true;
        Some((e.line, e.value.clone()))
    }

    fn required_raw(&mut self, key: &str) -> Option<(usize, String)> {
        let r = self.raw(key);
        if r.is_none() {
            self.error(None, key, format!("missing required key {key}"));
        }
        r
    }

    fn number<T: std::str::FromStr>(&mut self, line: usize, key: &str, text: &str, what: &str) -> Option<T> {
        match text.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.error(Some(line), key, format!("{key}: malformed {what} '{text}'"));
                None
            }
        }
    }

    fn real_at(&mut self, line: usize, key: &str, text: &str) -> Option<f64> {
        let v: f64 = self.number(line, key, text, "number")?;
        if !v.is_finite() {
            self.error(Some(line), key, format!("{key}: value must be finite (got {text})"));
            return None;
        }
        Some(v)
    }

    fn real(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        match (self.raw(key), default) {
            (Some((line, text)), _) => self.real_at(line, key, &text),
            (None, Some(d)) => Some(d),
            (None, None) => {
                self.error(None, key, format!("missing required key {key}"));
                None
            }
        }
    }

    fn integer(&mut self, key: &str, default: Option<usize>) -> Option<usize> {
        match (self.raw(key), default) {
            (Some((line, text)), _) => self.number(line, key, &text, "non-negative integer"),
            (None, Some(d)) => Some(d),
            (None, None) => {
                self.error(None, key, format!("missing required key {key}"));
                None
            }
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    /// Checks `ok`, recording `message` against the key's line otherwise.
    fn check(&mut self, key: &str, value: Option<f64>, ok: impl Fn(f64) -> bool, message: &str) -> Option<f64> {
        let v = value?;
        if ok(v) {
            Some(v)
        } else {
            let line = self.line_of(key);
            self.error(line, key, format!("{key} {message} (got {v})"));
            None
        }
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        let v = self.real(key, default);
        self.check(key, v, |x| x > 0.0, "must be positive")
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        let (line, text) = self.raw(key)?;
        if text.is_empty() {
            self.error(Some(line), key, format!("{key} must not be empty"));
            return None;
        }
        Some(PathBuf::from(text))
    }
}

fn split_line(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

const KNOWN_KEYS: &[&str] = &[
    "grid.n",
    "grid.length",
    "phys.hbar",
    "phys.mass_x",
    "phys.mass_y",
    "initial_state",
    "initial_state.sigma_x",
    "initial_state.sigma_y",
    "initial_state.center_x",
    "initial_state.center_y",
    "initial_state.momentum_x",
    "initial_state.momentum_y",
    "initial_state.a",
    "initial_state.b",
    "initial_state.lambda0",
    "initial_state.mode_indices",
    "potential",
    "potential.f_kind",
    "potential.g_kind",
    "potential.f_param",
    "potential.g_param",
    "potential.kappa",
    "potential.v0",
    "potential.width",
    "evolution.dt",
    "evolution.steps",
    "evolution.record_every",
    "outputs.timeseries_path",
    "outputs.report_path",
    "outputs.dump_every",
    "outputs.dump_path",
];

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut p = Parser { entries: BTreeMap::new(), errors: Vec::new() };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = split_line(raw).trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            p.error(Some(line), "", format!("expected 'key = value', found '{content}'"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            p.error(Some(line), key, format!("unknown key {key}"));
            continue;
        }
        if let Some(prev) = p.entries.get(key) {
            let first = prev.line;
            p.error(Some(line), key, format!("duplicate key {key} (first set on line {first})"));
            continue;
        }
        p.entries.insert(key.to_string(), Entry { line, value: value.to_string(), used: false });
    }

    let grid = parse_grid(&mut p);
    let phys = parse_phys(&mut p);
    let initial_state = parse_initial_state(&mut p);
    let potential = parse_potential(&mut p);
    let evolution = parse_evolution(&mut p);
    let outputs = parse_outputs(&mut p);

    let unused: Vec<(String, usize)> =
        p.entries.iter().filter(|(_, e)| !e.used).map(|(k, e)| (k.clone(), e.line)).collect();
    for (key, line) in unused {
        let section = key.split('.').next().unwrap_or("");
        let tag = p.entries.get(section).map(|e| e.value.clone()).unwrap_or_default();
        p.error(Some(line), &key, format!("{key} does not apply to {section} = {tag}"));
    }

    if !p.errors.is_empty() {
        p.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        return Err(Error::Config(p.errors));
    }
    Ok(ScenarioConfig {
        grid: grid.expect("no errors"),
        phys: phys.expect("no errors"),
        initial_state: initial_state.expect("no errors"),
        potential: potential.expect("no errors"),
        evolution: evolution.expect("no errors"),
        outputs: outputs.expect("no errors"),
    })
}

fn parse_grid(p: &mut Parser) -> Option<GridSpec> {
    let n = p.integer("grid.n", None);
    let n = match n {
        Some(n) if n % 2 == 1 => {
            let line = p.line_of("grid.n");
            p.error(line, "grid.n", format!("grid.n must be even (got {n})"));
            None
        }
        Some(n) if n < MIN_POINTS => {
            let line = p.line_of("grid.n");
            p.error(line, "grid.n", format!("grid.n must be at least {MIN_POINTS} (got {n})"));
            None
        }
        other => other,
    };
    let length = p.positive("grid.length", None);
    Some(GridSpec { n: n?, length: length? })
}

fn parse_phys(p: &mut Parser) -> Option<PhysParams> {
    let d = PhysParams::default();
    let hbar = p.positive("phys.hbar", Some(d.hbar));
    let mass_x = p.positive("phys.mass_x", Some(d.mass_x));
    let mass_y = p.positive("phys.mass_y", Some(d.mass_y));
    PhysParams::new(hbar?, mass_x?, mass_y?).ok()
}

fn parse_initial_state(p: &mut Parser) -> Option<InitialStateSpec> {
    let (line, tag) = p.required_raw("initial_state")?;
    match tag.as_str() {
        "product_gaussian" => {
            let sigma_x = p.positive("initial_state.sigma_x", Some(DEFAULT_SIGMA));
            let sigma_y = p.positive("initial_state.sigma_y", Some(DEFAULT_SIGMA));
            let center_x = p.real("initial_state.center_x", Some(0.0));
            let center_y = p.real("initial_state.center_y", Some(0.0));
            let momentum_x = p.real("initial_state.momentum_x", Some(0.0));
            let momentum_y = p.real("initial_state.momentum_y", Some(0.0));
            Some(InitialStateSpec::ProductGaussian {
                sigma_x: sigma_x?,
                sigma_y: sigma_y?,
                center_x: center_x?,
                center_y: center_y?,
                momentum_x: momentum_x?,
                momentum_y: momentum_y?,
            })
        }
        "double_gaussian" => {
            let a = p.positive("initial_state.a", Some(1.0));
            let b = p.positive("initial_state.b", Some(2.0));
            Some(InitialStateSpec::DoubleGaussian { a: a?, b: b? })
        }
        "schmidt_two_term" => {
            let lambda0 = p.real("initial_state.lambda0", Some(0.5));
            let lambda0 = p.check("initial_state.lambda0", lambda0, |l| l > 0.0 && l < 1.0, "must lie in (0, 1)");
            let modes = parse_modes(p);
            Some(InitialStateSpec::SchmidtTwoTerm { lambda0: lambda0?, mode_indices: modes? })
        }
        other => {
            p.error(
                Some(line),
                "initial_state",
                format!(
                    "initial_state: unknown kind '{other}' (expected product_gaussian, double_gaussian or schmidt_two_term)"
                ),
            );
            // Mark parameters as used so they do not produce follow-on errors.
            for k in KNOWN_KEYS.iter().filter(|k| k.starts_with("initial_state.")) {
                p.raw(k);
            }
            None
        }
    }
}

fn parse_modes(p: &mut Parser) -> Option<(usize, usize)> {
    let key = "initial_state.mode_indices";
    let Some((line, text)) = p.raw(key) else {
        return Some((0, 1));
    };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        p.error(Some(line), key, format!("{key}: expected two comma-separated indices, found '{text}'"));
        return None;
    }
    let a: usize = p.number(line, key, parts[0], "mode index")?;
    let b: usize = p.number(line, key, parts[1], "mode index")?;
    if a == b {
        p.error(Some(line), key, format!("{key}: the two modes must differ (got {a}, {b})"));
        return None;
    }
    Some((a, b))
}

fn parse_term(p: &mut Parser, key: &str) -> Option<TermKind> {
    let Some((line, text)) = p.raw(key) else {
        return Some(TermKind::Harmonic);
    };
    let kind = TermKind::parse(&text);
    if kind.is_none() {
        p.error(
            Some(line),
            key,
            format!("{key}: unknown term '{text}' (expected zero, constant, linear, harmonic or quartic)"),
        );
    }
    kind
}

fn parse_potential(p: &mut Parser) -> Option<PotentialSpec> {
    let (line, tag) = p.required_raw("potential")?;
    match tag.as_str() {
        "none" => Some(PotentialSpec::None),
        "separable" => {
            let f_kind = parse_term(p, "potential.f_kind");
            let g_kind = parse_term(p, "potential.g_kind");
            let f_param = p.real("potential.f_param", Some(1.0));
            let g_param = p.real("potential.g_param", Some(1.0));
            Some(PotentialSpec::Separable { f_kind: f_kind?, g_kind: g_kind?, f_param: f_param?, g_param: g_param? })
        }
        "bilinear" => {
            let kappa = p.real("potential.kappa", Some(DEFAULT_KAPPA));
            Some(PotentialSpec::Bilinear { kappa: kappa? })
        }
        "gaussian_coupling" => {
            let v0 = p.real("potential.v0", Some(DEFAULT_V0));
            let width = p.positive("potential.width", Some(DEFAULT_COUPLING_WIDTH));
            Some(PotentialSpec::GaussianCoupling { v0: v0?, width: width? })
        }
        other => {
            p.error(
                Some(line),
                "potential",
                format!("potential: unknown kind '{other}' (expected none, separable, bilinear or gaussian_coupling)"),
            );
            for k in KNOWN_KEYS.iter().filter(|k| k.starts_with("potential.")) {
                p.raw(k);
            }
            None
        }
    }
}

fn parse_evolution(p: &mut Parser) -> Option<EvolutionConfig> {
    let dt = p.positive("evolution.dt", Some(DEFAULT_DT));
    let steps = p.integer("evolution.steps", None);
    let record_every = p.integer("evolution.record_every", steps.map(default_record_every));
    let (steps, record_every) = (steps?, record_every?);
    if record_every == 0 {
        let line = p.line_of("evolution.record_every");
        p.error(line, "evolution.record_every", "evolution.record_every must be at least 1".into());
        return None;
    }
    if steps > 0 && record_every > steps {
        let line = p.line_of("evolution.record_every");
        p.error(
            line,
            "evolution.record_every",
            format!("evolution.record_every ({record_every}) must not exceed evolution.steps ({steps})"),
        );
        return None;
    }
    Some(EvolutionConfig { dt: dt?, steps, record_every })
}

fn parse_outputs(p: &mut Parser) -> Option<OutputSpec> {
    let timeseries_path = p.path("outputs.timeseries_path");
    let report_path = p.path("outputs.report_path");
    let dump_every = p.integer("outputs.dump_every", Some(0))?;
    let dump_path = p.path("outputs.dump_path");
    if dump_every > 0 && dump_path.is_none() {
        let line = p.line_of("outputs.dump_every");
        p.error(line, "outputs.dump_path", "outputs.dump_path is required when outputs.dump_every > 0".into());
        return None;
    }
    Some(OutputSpec { timeseries_path, report_path, dump_every, dump_path })
}

/// Canonical text form; `parse_config(&render_config(c))` reproduces `c`.
pub fn render_config(c: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    put("grid.n", c.grid.n.to_string());
    put("grid.length", fmt_real(c.grid.length));
    put("phys.hbar", fmt_real(c.phys.hbar));
    put("phys.mass_x", fmt_real(c.phys.mass_x));
    put("phys.mass_y", fmt_real(c.phys.mass_y));
    put("initial_state", c.initial_state.tag().into());
    match &c.initial_state {
        InitialStateSpec::ProductGaussian { sigma_x, sigma_y, center_x, center_y, momentum_x, momentum_y } => {
            put("initial_state.sigma_x", fmt_real(*sigma_x));
            put("initial_state.sigma_y", fmt_real(*sigma_y));
            put("initial_state.center_x", fmt_real(*center_x));
            put("initial_state.center_y", fmt_real(*center_y));
            put("initial_state.momentum_x", fmt_real(*momentum_x));
            put("initial_state.momentum_y", fmt_real(*momentum_y));
        }
        InitialStateSpec::DoubleGaussian { a, b } => {
            put("initial_state.a", fmt_real(*a));
            put("initial_state.b", fmt_real(*b));
        }
        InitialStateSpec::SchmidtTwoTerm { lambda0, mode_indices } => {
            put("initial_state.lambda0", fmt_real(*lambda0));
            put("initial_state.mode_indices", format!("{}, {}", mode_indices.0, mode_indices.1));
        }
    }
    put("potential", c.potential.tag().into());
    match &c.potential {
        PotentialSpec::None => {}
        PotentialSpec::Separable { f_kind, g_kind, f_param, g_param } => {
            put("potential.f_kind", f_kind.name().into());
            put("potential.g_kind", g_kind.name().into());
            put("potential.f_param", fmt_real(*f_param));
            put("potential.g_param", fmt_real(*g_param));
        }
        PotentialSpec::Bilinear { kappa } => put("potential.kappa", fmt_real(*kappa)),
        PotentialSpec::GaussianCoupling { v0, width } => {
            put("potential.v0", fmt_real(*v0));
            put("potential.width", fmt_real(*width));
        }
    }
    put("evolution.dt", fmt_real(c.evolution.dt));
    put("evolution.steps", c.evolution.steps.to_string());
    put("evolution.record_every", c.evolution.record_every.to_string());
    if let Some(path) = &c.outputs.timeseries_path {
        put("outputs.timeseries_path", path.display().to_string());
    }
    if let Some(path) = &c.outputs.report_path {
        put("outputs.report_path", path.display().to_string());
    }
    put("outputs.dump_every", c.outputs.dump_every.to_string());
    if let Some(path) = &c.outputs.dump_path {
        put("outputs.dump_path", path.display().to_string());
    }
    out
}

/// Shortest representation that parses back to the same value.
fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}
