//! Configuration, command dispatch and report writing for the `nsreg` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detector::{bootstrap_schedule, detect_quadrature, detect_singular_set, EpsilonConfig, ProbeGrid};
use crate::energy::{battery, energy_quadrature, run_battery};
use crate::error::{Error, Result};
use crate::field::{point_from_slice, FieldTriple, ScalarField};
use crate::generators::{FieldKind, FieldSpec, DEFAULT_HALF_WIDTH};
use crate::harness::{random_family, sweep_constant, HarnessContext, LemmaId, SweepParams};
use crate::pressure::{interior_probes, newtonian_potential_oracle, offset_relative_error, same_ball_h_mean, OracleConfig, PressureConfig, PressureDecomposition};
use crate::quadrature::QuadratureConfig;
use crate::quantities::{csv_header, csv_row, radius_sweep};

/// Bumped whenever the layout of a JSON report changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sweep,
    SplitPressure,
    CheckEnergy,
    Detect,
    Verify,
    Schedule,
    Gen,
}

impl Command {
    fn default_format(&self) -> Format {
        match self {
            Command::Sweep | Command::Schedule => Format::Csv,
            _ => Format::Json,
        }
    }

    fn needs_field(&self) -> bool {
        matches!(self, Command::Sweep | Command::SplitPressure | Command::CheckEnergy | Command::Detect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub center: Vec<f64>,
    pub r_max: f64,
    pub levels: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { center: vec![0.0; 6], r_max: 1.0, levels: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub center: Vec<f64>,
    pub r: f64,
    /// Probes of `B(x0, 2r/3)` in the output table.
    pub probes: usize,
    /// Also evaluate the free-space oracle at the probes.
    pub oracle: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { center: vec![0.0; 6], r: 1.0, probes: 20, oracle: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub center: Vec<f64>,
    pub rho: f64,
    pub count: usize,
    /// Use the tensor rule tuned for the cutoffs instead of `[quadrature]`.
    pub tuned_quadrature: bool,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self { center: vec![0.0; 6], rho: 1.0, count: 20, tuned_quadrature: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub grid: ProbeGrid,
    /// Use the cheap per-probe tensor rule instead of `[quadrature]`.
    pub tuned_quadrature: bool,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self { grid: ProbeGrid::default(), tuned_quadrature: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub lemma: Option<LemmaId>,
    pub family_size: usize,
    pub modes: usize,
    pub amplitude: f64,
    pub half_width: f64,
    pub grid_n: usize,
    pub sweep: SweepParams,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            lemma: None,
            family_size: 10,
            modes: 6,
            amplitude: 0.1,
            half_width: DEFAULT_HALF_WIDTH,
            grid_n: 8,
            sweep: SweepParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub alpha0: f64,
    pub delta: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { alpha0: 1.0, delta: 0.1 }
    }
}

/// Everything a run needs; read from TOML and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub quadrature: QuadratureConfig,
    pub epsilon: EpsilonConfig,
    pub pressure: PressureConfig,
    pub sweep: SweepSection,
    pub split: SplitSection,
    pub energy: EnergySection,
    pub detect: DetectSection,
    pub verify: VerifySection,
    pub schedule: ScheduleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            field: None,
            seed: 42,
            format: None,
            quadrature: QuadratureConfig::default(),
            epsilon: EpsilonConfig::default(),
            pressure: PressureConfig::default(),
            sweep: SweepSection::default(),
            split: SplitSection::default(),
            energy: EnergySection::default(),
            detect: DetectSection::default(),
            verify: VerifySection::default(),
            schedule: ScheduleSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self, cmd: Command) -> Result<()> {
        self.quadrature.validate()?;
        self.epsilon.validate()?;
        if let Some(f) = &self.field {
            f.validate()?;
        }
        if cmd.needs_field() && self.field.is_none() {
            return Err(Error::Config("this command needs a field (--field or [field])".into()));
        }
        let dim = self.field.as_ref().map(|f| f.dim).unwrap_or(6);
        let check_center = |name: &str, c: &[f64]| {
            if c.len() != dim {
                Err(Error::Config(format!("{name} has {} coordinates, expected {dim}", c.len())))
            } else {
                Ok(())
            }
        };
        match cmd {
            Command::Sweep => {
                check_center("sweep.center", &self.sweep.center)?;
                if !(self.sweep.r_max > 0.0) || self.sweep.levels < 2 {
                    return Err(Error::Config("sweep needs r_max > 0 and levels >= 2".into()));
                }
            }
            Command::SplitPressure => {
                check_center("split.center", &self.split.center)?;
                self.pressure.validate(dim)?;
                if !(self.split.r > 0.0) {
                    return Err(Error::Config("split.r must be positive".into()));
                }
            }
            Command::CheckEnergy => {
                check_center("energy.center", &self.energy.center)?;
                if !(self.energy.rho > 0.0) || self.energy.count == 0 {
                    return Err(Error::Config("energy needs rho > 0 and count >= 1".into()));
                }
            }
            Command::Detect => check_center("detect.grid.center", &self.detect.grid.center)?,
            Command::Verify => {
                if self.verify.family_size == 0 || self.verify.modes == 0 {
                    return Err(Error::Config("verify needs family_size >= 1 and modes >= 1".into()));
                }
                PressureConfig::with_grid(self.verify.grid_n).validate(6)?;
                for c in &self.verify.sweep.centers {
                    check_center("verify.sweep.centers", c)?;
                }
            }
            Command::Schedule | Command::Gen => {}
        }
        Ok(())
    }
}

/// Compact field syntax `kind` or `kind:key=value,key=value`; values are
/// TOML literals, so lists such as `value=[1,0,0,0,0,0]` work.
pub fn parse_field_arg(s: &str) -> Result<FieldSpec> {
    let (kind, rest) = match s.split_once(':') {
        Some((k, r)) => (k.trim(), r),
        None => (s.trim(), ""),
    };
    let mut doc = format!("kind = \"{}\"\n", kind.replace('-', "_"));
    let mut depth = 0i32;
    let mut item = String::new();
    let mut items = Vec::new();
    for ch in rest.chars() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                items.push(std::mem::take(&mut item));
                continue;
            }
            _ => {}
        }
        item.push(ch);
    }
    items.push(item);
    for it in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let (k, v) = it
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("field parameter '{it}' is not key=value")))?;
        doc.push_str(&format!("{} = {}\n", k.trim(), v.trim()));
    }
    let spec: FieldSpec = toml::from_str(&doc).map_err(|e| Error::Config(format!("bad --field '{s}': {e}")))?;
    spec.validate()?;
    Ok(spec)
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub field: Option<FieldSpec>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub eps0: Option<f64>,
    pub format: Option<Format>,
    pub lemma: Option<LemmaId>,
    pub alpha0: Option<f64>,
    pub delta: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(f) = &self.field {
            cfg.field = Some(f.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            cfg.quadrature.method = crate::quadrature::Method::MonteCarlo;
            cfg.quadrature.samples = n;
        }
        if let Some(e) = self.eps0 {
            cfg.epsilon.eps0 = e;
        }
        if let Some(f) = self.format {
            cfg.format = Some(f);
        }
        if let Some(l) = self.lemma {
            cfg.verify.lemma = Some(l);
        }
        if let Some(a) = self.alpha0 {
            cfg.schedule.alpha0 = a;
        }
        if let Some(d) = self.delta {
            cfg.schedule.delta = d;
        }
    }
}

/// A finished report: CSV rows or a JSON document, plus header metadata.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Table { header: Vec<String>, rows: Vec<Vec<String>>, notes: Vec<String> },
    Document(Value),
    Text(String),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub reproducible: bool,
}

fn build_field(cfg: &RunConfig) -> Result<FieldTriple> {
    cfg.field.as_ref().expect("validated").build()
}

fn center_of(c: &[f64]) -> crate::field::Point {
    point_from_slice(c)
}

fn csv_fmt(v: f64) -> String {
    format!("{v}")
}

/// Runs `cmd` and returns its report; nothing is written.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Report> {
    cfg.validate(cmd)?;
    let format = cfg.format.unwrap_or(cmd.default_format());
    match cmd {
        Command::Sweep => {
            let t = build_field(cfg)?;
            let pcfg = cfg.pressure.clone();
            let res = radius_sweep(&t, &center_of(&cfg.sweep.center), cfg.sweep.r_max, cfg.sweep.levels, &cfg.quadrature, |b| {
                same_ball_h_mean(&t, b, &pcfg)
            })?;
            Ok(match format {
                Format::Csv => {
                    let mut notes = Vec::new();
                    for q in crate::quantities::Quantity::ALL {
                        let e = res.fitted_exponents.get(q).map(csv_fmt).unwrap_or_else(|| "undefined".into());
                        notes.push(format!("exponent {} = {e}", q.name()));
                    }
                    Report::Table { header: csv_header(), rows: res.reports.iter().map(csv_row).collect(), notes }
                }
                Format::Json => Report::Document(to_value(&res)?),
            })
        }
        Command::SplitPressure => {
            let t = build_field(cfg)?;
            let x0 = center_of(&cfg.split.center);
            let r = cfg.split.r;
            let dec = PressureDecomposition::new(&t, &x0, r, &cfg.pressure)?;
            let dim = t.dim();
            let probes = interior_probes(dim, &x0, 2.0 * r / 3.0, cfg.split.probes, cfg.seed);
            let oracle = if cfg.split.oracle {
                let o: Vec<f64> = probes
                    .iter()
                    .map(|x| newtonian_potential_oracle(&t, &dec.eta, &dec.u_mean, x, &OracleConfig::default()))
                    .collect::<Result<_>>()?;
                Some(o)
            } else {
                None
            };
            let mut rows = Vec::new();
            let mut table = Vec::new();
            for (i, x) in probes.iter().enumerate() {
                let p = t.p.as_ref().map(|p| p.eval(x));
                let pt = dec.p_tilde.eval(x);
                let h = dec.h.eval(x);
                let mut row: Vec<String> = x[..dim].iter().map(|v| csv_fmt(*v)).collect();
                row.push(p.map(csv_fmt).unwrap_or_default());
                row.push(csv_fmt(pt));
                row.push(csv_fmt(h));
                row.push(oracle.as_ref().map(|o| csv_fmt(o[i])).unwrap_or_default());
                rows.push(row);
                table.push(json!({"x": &x[..dim], "p": p, "p_tilde": pt, "h": h, "oracle": oracle.as_ref().map(|o| o[i])}));
            }
            let oracle_error = oracle.as_ref().map(|o| {
                let s: Vec<f64> = probes.iter().map(|x| dec.p_tilde.eval(x)).collect();
                offset_relative_error(&s, o)
            });
            Ok(match format {
                Format::Csv => {
                    let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
                    header.extend(["p", "p_tilde", "h", "oracle"].map(String::from));
                    let mut notes = vec![format!("u_mean = {:?}", &dec.u_mean[..dim])];
                    if let Some(e) = oracle_error {
                        notes.push(format!("oracle offset-relative error = {e}"));
                    }
                    Report::Table { header, rows, notes }
                }
                Format::Json => Report::Document(json!({
                    "solver": to_value(&dec.meta)?,
                    "u_mean": &dec.u_mean[..dim],
                    "probes": table,
                    "oracle_error": oracle_error,
                })),
            })
        }
        Command::CheckEnergy => {
            let t = build_field(cfg)?;
            let entries = battery(t.dim(), &center_of(&cfg.energy.center), cfg.energy.rho, cfg.energy.count, cfg.seed);
            let quad = if cfg.energy.tuned_quadrature { energy_quadrature() } else { cfg.quadrature.clone() };
            // The mean of h only enters through int u . grad psi, which vanishes
            // for divergence-free u; the report carries that flux.
            let res = run_battery(&t, &entries, 0.0, &quad)?;
            if !res.suitable {
                log::warn!("energy inequality violated beyond tolerance (min residual {})", res.min_residual);
            }
            Ok(match format {
                Format::Csv => {
                    let dim = t.dim();
                    let mut header = vec!["kind".to_string()];
                    header.extend((1..=dim).map(|i| format!("center_{i}")));
                    header.extend(["rho", "r", "lhs", "rhs", "residual", "flux"].map(String::from));
                    let rows = res
                        .rows
                        .iter()
                        .map(|r| {
                            let mut row = vec![format!("{:?}", r.kind).to_lowercase()];
                            row.extend(r.center.iter().map(|v| csv_fmt(*v)));
                            row.push(csv_fmt(r.rho));
                            row.push(r.r.map(csv_fmt).unwrap_or_default());
                            for v in [r.report.lhs, r.report.rhs, r.report.residual, r.report.flux] {
                                row.push(csv_fmt(v));
                            }
                            row
                        })
                        .collect();
                    let notes = vec![
                        format!("max |residual| = {}", res.max_abs_residual),
                        format!("suitable = {}", res.suitable),
                    ];
                    Report::Table { header, rows, notes }
                }
                Format::Json => Report::Document(to_value(&res)?),
            })
        }
        Command::Detect => {
            let t = build_field(cfg)?;
            let quad = if cfg.detect.tuned_quadrature { detect_quadrature() } else { cfg.quadrature.clone() };
            let est = detect_singular_set(&t, &cfg.detect.grid, &cfg.epsilon, &quad)?;
            Ok(match format {
                Format::Csv => {
                    let dim = t.dim();
                    let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
                    header.push("E".into());
                    let rows = est
                        .flagged
                        .iter()
                        .map(|f| {
                            let mut row: Vec<String> = f.point.iter().map(|v| csv_fmt(*v)).collect();
                            row.push(csv_fmt(f.value));
                            row
                        })
                        .collect();
                    let mut notes: Vec<String> = est.covering.iter().map(|(d, n)| format!("N({d}) = {n}")).collect();
                    notes.push(format!("dimension fit = {}", est.dimension_fit.map(csv_fmt).unwrap_or_else(|| "undefined".into())));
                    Report::Table { header, rows, notes }
                }
                Format::Json => Report::Document(to_value(&est)?),
            })
        }
        Command::Verify => {
            let v = &cfg.verify;
            let domain = crate::field::BoxDomain::cube(6, v.half_width)?;
            let family = random_family(v.family_size, v.modes, v.amplitude, &domain)?;
            let ctx = HarnessContext::new(&family, cfg.quadrature_for_harness(), PressureConfig { grid_n: v.grid_n, ..cfg.pressure.clone() });
            let lemmas: Vec<LemmaId> = match v.lemma {
                Some(l) => vec![l],
                None => LemmaId::ALL.to_vec(),
            };
            let sweeps = lemmas.iter().map(|&l| sweep_constant(l, &ctx, &v.sweep)).collect::<Result<Vec<_>>>()?;
            for s in sweeps.iter().filter(|s| s.skipped > 0) {
                log::warn!("{}: {} case(s) outside the hypotheses were skipped", s.lemma, s.skipped);
            }
            Ok(match format {
                Format::Csv => {
                    let mut header: Vec<String> = ["lemma", "field"].map(String::from).to_vec();
                    header.extend((1..=6).map(|i| format!("center_{i}")));
                    header.extend(["rho", "param", "lhs", "bracket", "ratio", "status"].map(String::from));
                    let mut rows = Vec::new();
                    let mut notes = Vec::new();
                    for s in &sweeps {
                        notes.push(format!(
                            "{}: best_constant = {}, dispersion = {}, cases = {}, zero_bracket = {}, skipped = {}",
                            s.lemma, s.best_constant, s.dispersion, s.cases.len(), s.zero_bracket, s.skipped
                        ));
                        for c in &s.cases {
                            let mut row = vec![s.lemma.to_string(), c.field.to_string()];
                            row.extend(c.center.iter().map(|v| csv_fmt(*v)));
                            row.extend([c.rho, c.param, c.lhs, c.bracket].map(csv_fmt));
                            row.push(c.ratio.map(csv_fmt).unwrap_or_default());
                            row.push(match &c.status {
                                crate::harness::CaseStatus::Included => "included".into(),
                                crate::harness::CaseStatus::ZeroBracket => "zero_bracket".into(),
                                crate::harness::CaseStatus::Skipped(r) => format!("skipped: {r}"),
                            });
                            rows.push(row);
                        }
                    }
                    Report::Table { header, rows, notes }
                }
                Format::Json => {
                    let summary: Vec<Value> = sweeps
                        .iter()
                        .map(|s| {
                            json!({
                                "lemma": s.lemma,
                                "best_constant": s.best_constant,
                                "dispersion": s.dispersion,
                                "median": s.median,
                                "cases": s.cases.len(),
                                "included": s.included,
                                "zero_bracket": s.zero_bracket,
                                "skipped": s.skipped,
                            })
                        })
                        .collect();
                    Report::Document(json!({ "lemmas": summary }))
                }
            })
        }
        Command::Schedule => {
            let s = bootstrap_schedule(cfg.schedule.alpha0, cfg.schedule.delta)?;
            Ok(match format {
                Format::Csv => Report::Table {
                    header: ["k", "alpha", "mu"].map(String::from).to_vec(),
                    rows: s
                        .alpha
                        .iter()
                        .zip(&s.mu)
                        .enumerate()
                        .map(|(k, (a, m))| vec![k.to_string(), csv_fmt(*a), csv_fmt(*m)])
                        .collect(),
                    notes: vec![format!("delta = {}", s.delta), format!("m = {}", s.m), format!("beta = {}", s.beta)],
                },
                Format::Json => Report::Document(to_value(&s)?),
            })
        }
        Command::Gen => {
            let kinds: Vec<Value> = FieldKind::ALL
                .iter()
                .map(|k| {
                    let example = toml::to_string(&FieldSpec::new(*k)).unwrap_or_default();
                    json!({"kind": k.name(), "summary": k.summary(), "example": example})
                })
                .collect();
            Ok(match format {
                Format::Json => Report::Document(json!({ "fields": kinds })),
                Format::Csv => {
                    let mut text = String::from("# Field specs\n\nEvery spec also accepts `dim` (default 6) and `half_width` (default 8).\n");
                    for k in FieldKind::ALL {
                        text.push_str(&format!("\n[field]\nkind = \"{}\"\n# {}\n", k.name(), k.summary()));
                    }
                    Report::Text(text)
                }
            })
        }
    }
}

impl RunConfig {
    /// The configured rule, unless it is the Monte Carlo default, in which
    /// case the harness tensor rule is used.
    fn quadrature_for_harness(&self) -> QuadratureConfig {
        if self.quadrature == QuadratureConfig::default() {
            crate::harness::harness_quadrature()
        } else {
            self.quadrature.clone()
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Serialization(e.to_string()))
}

/// Header lines shared by every output: version, seed, config echo and,
/// unless reproducible, a timestamp.
pub fn header_lines(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<String>> {
    let mut lines = vec![
        format!("nsreg {} command {}", env!("CARGO_PKG_VERSION"), command_name(cmd)),
        format!("seed {}", cfg.seed),
    ];
    if !opts.reproducible {
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        lines.push(format!("generated {now}"));
    }
    lines.push("config:".into());
    lines.extend(cfg.to_toml()?.lines().map(String::from));
    Ok(lines)
}

pub fn command_name(cmd: Command) -> &'static str {
    match cmd {
        Command::Sweep => "sweep",
        Command::SplitPressure => "split-pressure",
        Command::CheckEnergy => "check-energy",
        Command::Detect => "detect",
        Command::Verify => "verify",
        Command::Schedule => "schedule",
        Command::Gen => "gen",
    }
}

/// Recovers the config echoed in a CSV header.
pub fn config_from_echo(text: &str) -> Result<RunConfig> {
    let mut inside = false;
    let mut doc = String::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { break };
        let rest = rest.strip_prefix(' ').unwrap_or(rest);
        if inside {
            doc.push_str(rest);
            doc.push('\n');
        } else if rest == "config:" {
            inside = true;
        }
    }
    RunConfig::from_toml(&doc)
}

/// Serializes `report` to bytes, headers included.
pub fn render(report: &Report, cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<u8>> {
    let header = header_lines(cmd, cfg, opts)?;
    match report {
        Report::Table { header: cols, rows, notes } => {
            let mut out = Vec::new();
            let split = header.iter().position(|l| l == "config:").unwrap_or(header.len());
            for l in header[..split].iter().chain(notes).chain(&header[split..]) {
                writeln!(out, "# {l}")?;
            }
            let mut w = csv::Writer::from_writer(out);
            w.write_record(cols).map_err(|e| Error::Serialization(e.to_string()))?;
            for r in rows {
                w.write_record(r).map_err(|e| Error::Serialization(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
        }
        Report::Document(v) => {
            let mut meta = json!({
                "version": env!("CARGO_PKG_VERSION"),
                "schema_version": SCHEMA_VERSION,
                "command": command_name(cmd),
                "seed": cfg.seed,
                "config": to_value(cfg)?,
            });
            if !opts.reproducible {
                meta["generated"] = json!(header.iter().find_map(|l| l.strip_prefix("generated ")).unwrap_or(""));
            }
            let mut doc = serde_json::Map::new();
            doc.insert("meta".into(), meta);
            if let Value::Object(m) = v {
                for (k, val) in m {
                    doc.insert(k.clone(), val.clone());
                }
            } else {
                doc.insert("result".into(), v.clone());
            }
            let mut bytes = serde_json::to_vec_pretty(&Value::Object(doc)).map_err(|e| Error::Serialization(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Report::Text(t) => Ok(t.clone().into_bytes()),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Full run: execute, render and deliver to `out` or stdout.
pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions, out: Option<&Path>) -> Result<()> {
    let start = std::time::Instant::now();
    log::info!("{} on {} worker(s)", command_name(cmd), rayon::current_num_threads());
    let report = execute(cmd, cfg)?;
    log::info!("{} finished in {:.2?}", command_name(cmd), start.elapsed());
    let bytes = render(&report, cmd, cfg, opts)?;
    match out {
        Some(p) => write_atomic(p, &bytes),
        None => {
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_argument_syntax() {
        let s = parse_field_arg("rotation:amplitude=0.5").unwrap();
        assert_eq!((s.kind, s.amplitude), (FieldKind::Rotation, Some(0.5)));
        let c = parse_field_arg("constant:value=[1,0,0,0,0,0],pressure=2").unwrap();
        assert_eq!(c.value.as_deref(), Some(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0][..]));
        assert_eq!(parse_field_arg("taylor-green6").unwrap().kind, FieldKind::TaylorGreen6);
        assert!(parse_field_arg("rotation:wavenumber=2").is_err());
        assert!(parse_field_arg("rotation:bogus=1").is_err());
        assert!(parse_field_arg("nothing").is_err());
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let err = RunConfig::from_toml("seed = 1\n[sweep]\nradius = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("radius") && msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.field = Some(parse_field_arg("random_divfree:seed=4,modes=3").unwrap());
        cfg.seed = 9;
        cfg.epsilon.eps0 = 0.02;
        let bytes = render(
            &Report::Table { header: vec!["a".into()], rows: vec![vec!["1".into()]], notes: vec!["n".into()] },
            Command::Schedule,
            &cfg,
            &RunOptions { reproducible: true },
        )
        .unwrap();
        let back = config_from_echo(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn schedule_report() {
        let mut cfg = RunConfig::default();
        Overrides { alpha0: Some(1.0), delta: Some(0.1), ..Default::default() }.apply(&mut cfg);
        let Report::Table { rows, notes, .. } = execute(Command::Schedule, &cfg).unwrap() else { panic!() };
        assert_eq!(rows[0][1], "1");
        assert!(rows[1][1].starts_with("1.0909"));
        assert!(notes.iter().any(|n| n.starts_with("beta = 4.7272")));
    }

    #[test]
    fn commands_needing_a_field_refuse_without_one() {
        let err = execute(Command::Sweep, &RunConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
