//! Scenario configuration: a line-oriented `[section]` / `key = value`
//! format with `#` comments, no nesting.  Parsing is strict (unknown keys
//! are rejected, with line numbers) and `emit` produces a canonical document
//! on which `parse` is the identity.

use crate::error::{CliError, Result};
use orbiflow_core::chart::MetricChart;
use orbiflow_core::flow::{IntegratorParams, Monitor, Scenario, Setting};
use orbiflow_core::mesh::DiscreteImmersion;
use orbiflow_core::orbifold;
use orbiflow_core::submersion::SubmersionModel;

#[derive(Clone, Debug, PartialEq)]
pub enum SettingKind {
    Euclidean,
    Orbifold,
    Submersion,
}

impl SettingKind {
    fn name(&self) -> &'static str {
        match self {
            SettingKind::Euclidean => "euclidean",
            SettingKind::Orbifold => "orbifold",
            SettingKind::Submersion => "submersion",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryCfg {
    Circle { r: f64, n: usize },
    Ellipse { a: f64, b: f64, n: usize },
    Sphere { r: f64, n_lat: usize, n_lon: usize },
    Polyline { path: String, n: usize },
    RadialGraph { path: String },
}

impl GeometryCfg {
    /// Hypersurface dimension implied by the geometry.
    pub fn hypersurface_dim(&self) -> usize {
        match self {
            GeometryCfg::Circle { .. } | GeometryCfg::Ellipse { .. } | GeometryCfg::Polyline { .. } => 1,
            GeometryCfg::Sphere { .. } | GeometryCfg::RadialGraph { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChartCfg {
    Euclidean,
    /// Unit round sphere chart (curved base for quotient scenarios).
    Sphere,
    /// Warped plane g = dr² + (r + a r³)² dθ².
    Warped { a: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtlasCfg {
    /// "cone" or "plane".
    pub kind: String,
    pub k: usize,
    pub radius: f64,
    /// Singular-set stop margin as a fraction of the initial diameter.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubmersionCfg {
    pub total_dim: usize,
    pub z_amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorCfg {
    pub cfl: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub t_max: f64,
    pub resample_every: usize,
}

impl Default for IntegratorCfg {
    fn default() -> Self {
        IntegratorCfg { cfl: 0.2, dt_max: 1e-2, dt_min: 1e-12, t_max: 10.0, resample_every: 10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorsCfg {
    pub n: usize,
    pub convexity: bool,
    pub l: f64,
    pub quotient: bool,
    /// Negative means: estimate L_N from the chart curvature over the
    /// initial nodes.
    pub l_n: f64,
    pub barrier: bool,
    pub eps: f64,
    pub delta: f64,
    /// Consistency assertion between the supplied L and L_N (the quotient
    /// constant is twice the total-space one); checked, never derived.
    pub check_ln_2l: bool,
}

impl Default for MonitorsCfg {
    fn default() -> Self {
        MonitorsCfg {
            n: 1,
            convexity: false,
            l: 0.0,
            quotient: false,
            l_n: 0.0,
            barrier: false,
            eps: 1e-3,
            delta: 1e-2,
            check_ln_2l: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputsCfg {
    pub series_path: String,
    pub snapshot_cadence: usize,
    pub snapshot_dir: String,
}

impl Default for OutputsCfg {
    fn default() -> Self {
        OutputsCfg {
            series_path: "series.csv".into(),
            snapshot_cadence: 5,
            snapshot_dir: "snapshots".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCfg {
    /// Dotted key to override, e.g. "geometry.r".
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub setting: SettingKind,
    pub geometry: GeometryCfg,
    pub chart: ChartCfg,
    pub atlas: Option<AtlasCfg>,
    pub submersion: Option<SubmersionCfg>,
    pub integrator: IntegratorCfg,
    pub monitors: MonitorsCfg,
    pub outputs: OutputsCfg,
    pub sweep: Option<SweepCfg>,
}

// ---------------------------------------------------------------------------
// parsing

struct RawDoc {
    /// (section, key, value, line number)
    entries: Vec<(String, String, String, usize)>,
}

fn parse_raw(text: &str) -> Result<RawDoc> {
    let mut entries = Vec::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(CliError::Parse { line: lineno, msg: "unterminated section header".into() });
            }
            section = line[1..line.len() - 1].trim().to_string();
            if section.is_empty() {
                return Err(CliError::Parse { line: lineno, msg: "empty section name".into() });
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(CliError::Parse { line: lineno, msg: format!("expected key = value, got '{line}'") });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() || section.is_empty() {
            return Err(CliError::Parse { line: lineno, msg: "key outside a [section]".into() });
        }
        entries.push((section.clone(), key, value, lineno));
    }
    Ok(RawDoc { entries })
}

struct Section<'a> {
    name: &'a str,
    entries: Vec<(&'a str, &'a str, usize)>,
    used: Vec<bool>,
}

impl<'a> Section<'a> {
    fn get(&mut self, key: &str) -> Option<(&'a str, usize)> {
        for (i, (k, v, l)) in self.entries.iter().enumerate() {
            if *k == key {
                self.used[i] = true;
                return Some((v, *l));
            }
        }
        None
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CliError::Parse { line: l, msg: format!("'{key}' must be a number, got '{v}'") }),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| CliError::Parse { line: l, msg: format!("'{key}' must be a nonnegative integer, got '{v}'") }),
        }
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, l)) => match v {
                "on" | "true" => Ok(Some(true)),
                "off" | "false" => Ok(Some(false)),
                _ => Err(CliError::Parse { line: l, msg: format!("'{key}' must be on/off, got '{v}'") }),
            },
        }
    }

    fn finish(&self) -> Result<()> {
        for (i, (k, _, l)) in self.entries.iter().enumerate() {
            if !self.used[i] {
                return Err(CliError::UnknownKey { line: *l, key: format!("{}.{}", self.name, k) });
            }
        }
        Ok(())
    }
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Parse { line: 0, msg: format!("{what} must be positive, got {v}") })
    }
}

/// Parse and fully validate a configuration document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let raw = parse_raw(text)?;
    let known_sections =
        ["scenario", "geometry", "chart", "atlas", "submersion", "integrator", "monitors", "outputs", "sweep"];
    for (s, _, _, l) in &raw.entries {
        if !known_sections.contains(&s.as_str()) {
            return Err(CliError::UnknownKey { line: *l, key: format!("[{s}]") });
        }
    }
    let section = |name: &'static str| -> Section<'_> {
        let entries: Vec<(&str, &str, usize)> = raw
            .entries
            .iter()
            .filter(|(s, _, _, _)| s == name)
            .map(|(_, k, v, l)| (k.as_str(), v.as_str(), *l))
            .collect();
        let used = vec![false; entries.len()];
        Section { name, entries, used }
    };

    let mut sc = section("scenario");
    let name = sc.get("name").map(|(v, _)| v.to_string()).unwrap_or_else(|| "scenario".into());
    let setting = match sc.get("setting") {
        None => SettingKind::Euclidean,
        Some(("euclidean", _)) => SettingKind::Euclidean,
        Some(("orbifold", _)) => SettingKind::Orbifold,
        Some(("submersion", _)) => SettingKind::Submersion,
        Some((v, l)) => {
            return Err(CliError::Parse { line: l, msg: format!("unknown setting '{v}'") })
        }
    };
    sc.finish()?;

    let mut ge = section("geometry");
    let kind = ge
        .get("kind")
        .map(|(v, _)| v.to_string())
        .ok_or_else(|| CliError::Parse { line: 0, msg: "[geometry] needs a kind".into() })?;
    let geometry = match kind.as_str() {
        "circle" => GeometryCfg::Circle {
            r: positive(ge.f64("r")?.unwrap_or(1.0), "geometry.r")?,
            n: ge.usize("n")?.unwrap_or(256).max(8),
        },
        "ellipse" => GeometryCfg::Ellipse {
            a: positive(ge.f64("a")?.unwrap_or(2.0), "geometry.a")?,
            b: positive(ge.f64("b")?.unwrap_or(1.0), "geometry.b")?,
            n: ge.usize("n")?.unwrap_or(256).max(8),
        },
        "sphere" => GeometryCfg::Sphere {
            r: positive(ge.f64("r")?.unwrap_or(1.0), "geometry.r")?,
            n_lat: ge.usize("n_lat")?.unwrap_or(64),
            n_lon: ge.usize("n_lon")?.unwrap_or(128),
        },
        "polyline" => GeometryCfg::Polyline {
            path: ge
                .get("path")
                .map(|(v, _)| v.to_string())
                .ok_or_else(|| CliError::Parse { line: 0, msg: "polyline needs a path".into() })?,
            n: ge.usize("n")?.unwrap_or(0),
        },
        "radial-graph" => GeometryCfg::RadialGraph {
            path: ge
                .get("path")
                .map(|(v, _)| v.to_string())
                .ok_or_else(|| CliError::Parse { line: 0, msg: "radial-graph needs a path".into() })?,
        },
        other => {
            return Err(CliError::Parse { line: 0, msg: format!("unknown geometry kind '{other}'") })
        }
    };
    ge.finish()?;

    let mut ch = section("chart");
    let chart = match ch.get("kind").map(|(v, _)| v.to_string()).as_deref() {
        None | Some("euclidean") => ChartCfg::Euclidean,
        Some("sphere") => ChartCfg::Sphere,
        Some("warped") => ChartCfg::Warped { a: ch.f64("a")?.unwrap_or(0.1) },
        Some(other) => {
            return Err(CliError::Parse { line: 0, msg: format!("unknown chart kind '{other}'") })
        }
    };
    ch.finish()?;

    let mut at = section("atlas");
    let atlas = if at.entries.is_empty() {
        None
    } else {
        Some(AtlasCfg {
            kind: at.get("kind").map(|(v, _)| v.to_string()).unwrap_or_else(|| "cone".into()),
            k: at.usize("k")?.unwrap_or(2),
            radius: positive(at.f64("radius")?.unwrap_or(4.0), "atlas.radius")?,
            margin: at.f64("margin")?.unwrap_or(0.05),
        })
    };
    at.finish()?;

    let mut su = section("submersion");
    let submersion = if su.entries.is_empty() {
        None
    } else {
        let kind = su.get("kind").map(|(v, _)| v.to_string()).unwrap_or_else(|| "translation".into());
        if kind != "translation" {
            return Err(CliError::Parse { line: 0, msg: format!("unknown submersion kind '{kind}'") });
        }
        Some(SubmersionCfg {
            total_dim: su.usize("total_dim")?.unwrap_or(3),
            z_amplitude: su.f64("z_amplitude")?.unwrap_or(0.0),
        })
    };
    su.finish()?;

    let mut ig = section("integrator");
    let integrator = IntegratorCfg {
        cfl: positive(ig.f64("cfl")?.unwrap_or(0.2), "integrator.cfl")?,
        dt_max: positive(ig.f64("dt_max")?.unwrap_or(1e-2), "integrator.dt_max")?,
        dt_min: positive(ig.f64("dt_min")?.unwrap_or(1e-12), "integrator.dt_min")?,
        t_max: positive(ig.f64("t_max")?.unwrap_or(10.0), "integrator.t_max")?,
        resample_every: ig.usize("resample_every")?.unwrap_or(10),
    };
    ig.finish()?;

    let mut mo = section("monitors");
    let monitors = MonitorsCfg {
        n: mo.usize("n")?.unwrap_or(geometry.hypersurface_dim()),
        convexity: mo.flag("convexity")?.unwrap_or(false),
        l: mo.f64("l")?.unwrap_or(0.0),
        quotient: mo.flag("quotient")?.unwrap_or(false),
        l_n: mo.f64("l_n")?.unwrap_or(0.0),
        barrier: mo.flag("barrier")?.unwrap_or(false),
        eps: positive(mo.f64("eps")?.unwrap_or(1e-3), "monitors.eps")?,
        delta: positive(mo.f64("delta")?.unwrap_or(1e-2), "monitors.delta")?,
        check_ln_2l: mo.flag("check_ln_2l")?.unwrap_or(false),
    };
    mo.finish()?;
    if monitors.n != geometry.hypersurface_dim() {
        return Err(CliError::DimensionMismatch {
            expected: geometry.hypersurface_dim(),
            got: monitors.n,
        });
    }

    let mut ou = section("outputs");
    let outputs = OutputsCfg {
        series_path: ou.get("series_path").map(|(v, _)| v.to_string()).unwrap_or_else(|| "series.csv".into()),
        snapshot_cadence: ou.usize("snapshot_cadence")?.unwrap_or(5).max(1),
        snapshot_dir: ou.get("snapshot_dir").map(|(v, _)| v.to_string()).unwrap_or_else(|| "snapshots".into()),
    };
    ou.finish()?;

    let mut sw = section("sweep");
    let sweep = if sw.entries.is_empty() {
        None
    } else {
        let key = sw
            .get("key")
            .map(|(v, _)| v.to_string())
            .ok_or_else(|| CliError::Parse { line: 0, msg: "[sweep] needs a key".into() })?;
        let (vals, l) = sw
            .get("values")
            .ok_or_else(|| CliError::Parse { line: 0, msg: "[sweep] needs values".into() })?;
        let values: Vec<f64> = vals
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| CliError::Parse {
                    line: l,
                    msg: format!("bad sweep value '{v}'"),
                })
            })
            .collect::<Result<_>>()?;
        Some(SweepCfg { key, values })
    };
    sw.finish()?;

    let cfg = ScenarioConfig {
        name,
        setting,
        geometry,
        chart,
        atlas,
        submersion,
        integrator,
        monitors,
        outputs,
        sweep,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ScenarioConfig) -> Result<()> {
    match cfg.setting {
        SettingKind::Orbifold => {
            if cfg.atlas.is_none() {
                return Err(CliError::Parse { line: 0, msg: "orbifold setting needs an [atlas] section".into() });
            }
            if cfg.geometry.hypersurface_dim() != 1 {
                return Err(CliError::DimensionMismatch { expected: 1, got: cfg.geometry.hypersurface_dim() });
            }
        }
        SettingKind::Submersion => {
            if cfg.submersion.is_none() {
                return Err(CliError::Parse { line: 0, msg: "submersion setting needs a [submersion] section".into() });
            }
        }
        SettingKind::Euclidean => {}
    }
    if let Some(a) = &cfg.atlas {
        if a.kind == "cone" && a.k < 2 {
            return Err(CliError::Core(orbiflow_core::Error::BadOrder(a.k)));
        }
        if a.kind != "cone" && a.kind != "plane" {
            return Err(CliError::Parse { line: 0, msg: format!("unknown atlas kind '{}'", a.kind) });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// canonical emission

fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation; parse() restores the exact bits
    format!("{v}")
}

/// Emit the canonical document for a configuration.  `parse_scenario` on the
/// result reproduces the configuration exactly.
pub fn emit_scenario(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let kv = |s: &mut String, k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    out.push_str("[scenario]\n");
    kv(&mut out, "name", cfg.name.clone());
    kv(&mut out, "setting", cfg.setting.name().into());
    out.push_str("\n[geometry]\n");
    match &cfg.geometry {
        GeometryCfg::Circle { r, n } => {
            kv(&mut out, "kind", "circle".into());
            kv(&mut out, "r", fmt_f64(*r));
            kv(&mut out, "n", n.to_string());
        }
        GeometryCfg::Ellipse { a, b, n } => {
            kv(&mut out, "kind", "ellipse".into());
            kv(&mut out, "a", fmt_f64(*a));
            kv(&mut out, "b", fmt_f64(*b));
            kv(&mut out, "n", n.to_string());
        }
        GeometryCfg::Sphere { r, n_lat, n_lon } => {
            kv(&mut out, "kind", "sphere".into());
            kv(&mut out, "r", fmt_f64(*r));
            kv(&mut out, "n_lat", n_lat.to_string());
            kv(&mut out, "n_lon", n_lon.to_string());
        }
        GeometryCfg::Polyline { path, n } => {
            kv(&mut out, "kind", "polyline".into());
            kv(&mut out, "path", path.clone());
            kv(&mut out, "n", n.to_string());
        }
        GeometryCfg::RadialGraph { path } => {
            kv(&mut out, "kind", "radial-graph".into());
            kv(&mut out, "path", path.clone());
        }
    }
    out.push_str("\n[chart]\n");
    match &cfg.chart {
        ChartCfg::Euclidean => kv(&mut out, "kind", "euclidean".into()),
        ChartCfg::Sphere => kv(&mut out, "kind", "sphere".into()),
        ChartCfg::Warped { a } => {
            kv(&mut out, "kind", "warped".into());
            kv(&mut out, "a", fmt_f64(*a));
        }
    }
    if let Some(a) = &cfg.atlas {
        out.push_str("\n[atlas]\n");
        kv(&mut out, "kind", a.kind.clone());
        kv(&mut out, "k", a.k.to_string());
        kv(&mut out, "radius", fmt_f64(a.radius));
        kv(&mut out, "margin", fmt_f64(a.margin));
    }
    if let Some(s) = &cfg.submersion {
        out.push_str("\n[submersion]\n");
        kv(&mut out, "kind", "translation".into());
        kv(&mut out, "total_dim", s.total_dim.to_string());
        kv(&mut out, "z_amplitude", fmt_f64(s.z_amplitude));
    }
    out.push_str("\n[integrator]\n");
    kv(&mut out, "cfl", fmt_f64(cfg.integrator.cfl));
    kv(&mut out, "dt_max", fmt_f64(cfg.integrator.dt_max));
    kv(&mut out, "dt_min", fmt_f64(cfg.integrator.dt_min));
    kv(&mut out, "t_max", fmt_f64(cfg.integrator.t_max));
    kv(&mut out, "resample_every", cfg.integrator.resample_every.to_string());
    out.push_str("\n[monitors]\n");
    kv(&mut out, "n", cfg.monitors.n.to_string());
    kv(&mut out, "convexity", if cfg.monitors.convexity { "on" } else { "off" }.into());
    kv(&mut out, "l", fmt_f64(cfg.monitors.l));
    kv(&mut out, "quotient", if cfg.monitors.quotient { "on" } else { "off" }.into());
    kv(&mut out, "l_n", fmt_f64(cfg.monitors.l_n));
    kv(&mut out, "barrier", if cfg.monitors.barrier { "on" } else { "off" }.into());
    kv(&mut out, "eps", fmt_f64(cfg.monitors.eps));
    kv(&mut out, "delta", fmt_f64(cfg.monitors.delta));
    kv(&mut out, "check_ln_2l", if cfg.monitors.check_ln_2l { "on" } else { "off" }.into());
    out.push_str("\n[outputs]\n");
    kv(&mut out, "series_path", cfg.outputs.series_path.clone());
    kv(&mut out, "snapshot_cadence", cfg.outputs.snapshot_cadence.to_string());
    kv(&mut out, "snapshot_dir", cfg.outputs.snapshot_dir.clone());
    if let Some(sw) = &cfg.sweep {
        out.push_str("\n[sweep]\n");
        kv(&mut out, "key", sw.key.clone());
        kv(
            &mut out,
            "values",
            sw.values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","),
        );
    }
    out
}

/// Stable identity of a configuration: hash of its canonical emission.
pub fn scenario_hash(cfg: &ScenarioConfig) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(emit_scenario(cfg).as_bytes());
    let digest = h.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// building the runnable scenario

impl ScenarioConfig {
    pub fn chart(&self) -> MetricChart {
        match &self.chart {
            ChartCfg::Euclidean => MetricChart::euclidean(2),
            ChartCfg::Sphere => MetricChart::sphere_surface(1.0),
            ChartCfg::Warped { a } => MetricChart::warped(*a, 1e3),
        }
    }

    pub fn model(&self) -> Option<SubmersionModel> {
        self.submersion.as_ref().map(|s| SubmersionModel::translation(s.total_dim, s.total_dim - 2))
    }

    /// Build the initial immersion, optionally overriding the resolution.
    pub fn immersion(&self, resolution: Option<usize>) -> Result<DiscreteImmersion> {
        let im = match (&self.setting, &self.geometry) {
            (SettingKind::Submersion, GeometryCfg::Circle { r, n }) => {
                let model = self.model().expect("validated");
                let amp = self.submersion.as_ref().map(|s| s.z_amplitude).unwrap_or(0.0);
                orbiflow_core::flow::lift_circle_section(&model, *r, resolution.unwrap_or(*n), amp)?
            }
            (_, GeometryCfg::Circle { r, n }) => match &self.chart {
                ChartCfg::Euclidean => {
                    let mut n = resolution.unwrap_or(*n);
                    // invariant lifts need the node count divisible by the
                    // group order
                    if let (SettingKind::Orbifold, Some(a)) = (&self.setting, &self.atlas) {
                        n = n.div_ceil(a.k) * a.k;
                    }
                    DiscreteImmersion::circle(*r, n)
                }
                _ => {
                    // a circle in a curved polar-like chart sits at constant
                    // first coordinate r
                    let n = resolution.unwrap_or(*n);
                    let nodes: Vec<f64> = (0..n)
                        .flat_map(|i| [*r, 2.0 * std::f64::consts::PI * i as f64 / n as f64])
                        .collect();
                    DiscreteImmersion::new_periodic_curve(self.chart(), nodes)?
                }
            },
            (_, GeometryCfg::Ellipse { a, b, n }) => {
                DiscreteImmersion::ellipse(*a, *b, resolution.unwrap_or(*n))
            }
            (_, GeometryCfg::Sphere { r, n_lat, n_lon }) => {
                let nl = resolution.unwrap_or(*n_lat);
                let ratio = *n_lon as f64 / *n_lat as f64;
                DiscreteImmersion::sphere_graph(*r, nl, ((nl as f64 * ratio) as usize).max(8))?
            }
            (_, GeometryCfg::Polyline { path, n }) => {
                let nodes = read_polyline(path)?;
                let im = DiscreteImmersion::new_periodic_curve(self.chart(), nodes)?;
                let want = resolution.unwrap_or(*n);
                let _ = want; // polyline resolution is fixed by the file
                im
            }
            (_, GeometryCfg::RadialGraph { path }) => read_radial_graph(path)?,
        };
        Ok(im)
    }

    pub fn monitors_list(&self, initial: &DiscreteImmersion) -> Result<Vec<Monitor>> {
        let mut out = Vec::new();
        if self.monitors.convexity {
            out.push(Monitor::Convexity { l: self.monitors.l, n: self.monitors.n });
        }
        if self.monitors.quotient {
            let l_n = if self.monitors.l_n < 0.0 {
                estimate_l_n(&initial.chart, &initial.nodes)?
            } else {
                self.monitors.l_n
            };
            out.push(Monitor::QuotientConvexity { l_n, n: self.monitors.n });
        }
        if self.monitors.barrier {
            out.push(Monitor::Barrier { eps: self.monitors.eps, delta: self.monitors.delta });
        }
        Ok(out)
    }

    /// Assemble the runnable scenario.
    pub fn to_scenario(&self, resolution: Option<usize>) -> Result<Scenario> {
        let initial = self.immersion(resolution)?;
        let mut sc = Scenario::new(self.name.clone(), initial);
        sc.params = IntegratorParams {
            cfl: self.integrator.cfl,
            dt_max: self.integrator.dt_max,
            dt_min: self.integrator.dt_min,
            t_max: self.integrator.t_max,
            resample_every: self.integrator.resample_every,
            fixed_dt: None,
        };
        sc.snapshot_cadence = self.outputs.snapshot_cadence;
        sc.monitors = self.monitors_list(&sc.initial)?;
        sc.setting = match self.setting {
            SettingKind::Euclidean => Setting::Euclidean,
            SettingKind::Orbifold => {
                let a = self.atlas.as_ref().expect("validated");
                let atlas = if a.kind == "plane" {
                    orbifold::make_plane_atlas(a.radius)
                } else {
                    orbifold::make_cone_atlas(a.k, a.radius)?
                };
                let diam = initial_diameter(&sc.initial);
                Setting::Orbifold { atlas, singular_margin: a.margin * diam }
            }
            SettingKind::Submersion => {
                Setting::Submersion { model: self.model().expect("validated") }
            }
        };
        Ok(sc)
    }
}

fn initial_diameter(im: &DiscreteImmersion) -> f64 {
    let d = im.chart.dim;
    let n = im.nodes.len() / d;
    let mut best = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..d {
                let dx = im.nodes[i * d + k] - im.nodes[j * d + k];
                s += dx * dx;
            }
            best = best.max(s);
        }
    }
    best.sqrt()
}

fn estimate_l_n(chart: &MetricChart, nodes: &[f64]) -> Result<f64> {
    if chart.flat {
        return Ok(0.0);
    }
    let d = chart.dim;
    let samples: Vec<Vec<f64>> =
        nodes.chunks(d).step_by((nodes.len() / d / 16).max(1)).map(|c| c.to_vec()).collect();
    let est = chart.ambient_l_estimate(&samples)?;
    Ok(est.l_max)
}

fn read_polyline(path: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let mut nodes = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Io(format!("{path}: bad polyline line '{line}'")))?;
        let y: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Io(format!("{path}: bad polyline line '{line}'")))?;
        nodes.push(x);
        nodes.push(y);
    }
    Ok(nodes)
}

fn read_radial_graph(path: &str) -> Result<DiscreteImmersion> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let mut vals = text.split_whitespace();
    let n_lat: usize = vals
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Io(format!("{path}: missing n_lat")))?;
    let n_lon: usize = vals
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Io(format!("{path}: missing n_lon")))?;
    let radii: Vec<f64> = vals
        .map(|v| v.parse::<f64>().map_err(|_| CliError::Io(format!("{path}: bad radius '{v}'"))))
        .collect::<Result<_>>()?;
    Ok(DiscreteImmersion::new_radial_graph(radii, n_lat, n_lon)?)
}
