//! Run configuration, data files and report formatting.
//!
//! Configuration is a flat `key = value` file; every key can be overridden
//! by an environment variable `MVHMM_<KEY>` (upper case, dots become double
//! underscores, so `p0.A` is `MVHMM_P0__A`).
//!
//! Data files are comma separated with a header row. Fleming-Viot data has
//! columns `time,label,count`; Dawson-Watanabe data has
//! `time,draw,label,count`, where distinct draw ids at one time are
//! separate draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BaseMeasure, Components, MultiIndex, ObservationTimeline, TypeRegistry};
use crate::ode::Tolerance;
use crate::urn::NextDrawPmf;

pub const ENV_PREFIX: &str = "MVHMM_";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Fv,
    Dw,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaseSpec {
    Nonatomic,
    Discrete(BTreeMap<String, f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub theta: f64,
    pub beta: Option<f64>,
    pub base: BaseSpec,
    pub pruning_epsilon: f64,
    pub seed: u64,
    pub ode_tolerance: f64,
    /// Per-lineage death rate multiplier of the Dawson-Watanabe dual.
    pub dw_rate_scale: f64,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, std::env::vars())
    }

    /// Parses `text` and applies overrides from `env`.
    pub fn parse<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        for (name, value) in env {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                entries.insert(env_key(rest), value);
            }
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: BTreeMap<String, String>) -> Result<Self> {
        let mut atoms = BTreeMap::new();
        let labels: Vec<String> = entries.keys().filter(|k| k.starts_with("p0.")).cloned().collect();
        for key in labels {
            let value = entries.remove(&key).unwrap();
            atoms.insert(key["p0.".len()..].to_string(), parse_num(&key, &value)?);
        }
        let mut take = |key: &str| entries.remove(key);

        let model = match take("model").as_deref() {
            Some("fv") => ModelKind::Fv,
            Some("dw") => ModelKind::Dw,
            Some(other) => return Err(Error::Config(format!("model must be fv or dw, got `{other}`"))),
            None => return Err(Error::Config("missing key `model`".into())),
        };
        let theta = parse_num("theta", &take("theta").ok_or_else(|| Error::Config("missing key `theta`".into()))?)?;
        let beta = take("beta").map(|v| parse_num("beta", &v)).transpose()?;
        let base = match take("base").as_deref() {
            None | Some("nonatomic") => BaseSpec::Nonatomic,
            Some("discrete") => BaseSpec::Discrete(atoms.clone()),
            Some(other) => return Err(Error::Config(format!("base must be nonatomic or discrete, got `{other}`"))),
        };
        let pruning_epsilon = take("pruning_epsilon").map_or(Ok(0.0), |v| parse_num("pruning_epsilon", &v))?;
        let seed = match take("seed") {
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("seed must be a nonnegative integer, got `{v}`")))?,
            None => 0,
        };
        let ode_tolerance = take("ode_tolerance").map_or(Ok(1e-10), |v| parse_num("ode_tolerance", &v))?;
        let dw_rate_scale =
            take("dw_rate_scale").map_or(Ok(crate::dual::DW_RATE_SCALE), |v| parse_num("dw_rate_scale", &v))?;
        if let Some(key) = entries.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        if !atoms.is_empty() && base == BaseSpec::Nonatomic {
            return Err(Error::Config("p0.* entries require base = discrete".into()));
        }

        let config = Self {
            model,
            theta,
            beta,
            base,
            pruning_epsilon,
            seed,
            ode_tolerance,
            dw_rate_scale,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.theta)));
        }
        match (self.model, self.beta) {
            (ModelKind::Dw, None) => return Err(Error::Config("beta is required for model = dw".into())),
            (ModelKind::Fv, Some(_)) => return Err(Error::Config("beta is only allowed for model = dw".into())),
            (ModelKind::Dw, Some(b)) if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::Config(format!("beta must be positive, got {b}")))
            }
            _ => {}
        }
        if !(0.0..=1e-3).contains(&self.pruning_epsilon) {
            return Err(Error::Config(format!(
                "pruning_epsilon must lie in [0, 1e-3], got {}",
                self.pruning_epsilon
            )));
        }
        if !(self.ode_tolerance > 0.0) {
            return Err(Error::Config("ode_tolerance must be positive".into()));
        }
        if !(self.dw_rate_scale > 0.0 && self.dw_rate_scale.is_finite()) {
            return Err(Error::Config("dw_rate_scale must be positive".into()));
        }
        self.base_measure().map(|_| ())
    }

    pub fn base_measure(&self) -> Result<BaseMeasure> {
        match &self.base {
            BaseSpec::Nonatomic => BaseMeasure::nonatomic(self.theta),
            BaseSpec::Discrete(atoms) => BaseMeasure::discrete(self.theta, atoms.clone()),
        }
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rtol: self.ode_tolerance,
            atol: self.ode_tolerance * 1e-4,
        }
    }
}

fn env_key(rest: &str) -> String {
    match rest.split_once("__") {
        Some((head, label)) => format!("{}.{label}", head.to_ascii_lowercase()),
        None => rest.to_ascii_lowercase(),
    }
}

fn parse_num(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("`{key}` must be a number, got `{value}`")))
}

/// A data file after loading: the labels in file order and the timeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub model: ModelKind,
    pub registry: TypeRegistry,
    pub timeline: ObservationTimeline,
}

/// Loads a data file. With `aggregate` set, repeated rows for the same cell
/// are summed instead of rejected.
pub fn load_timeline(path: &Path, aggregate: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_timeline(file, aggregate)
}

/// Draw id -> label position -> count, for one time.
type DrawCells = BTreeMap<String, BTreeMap<usize, u32>>;

pub fn read_timeline<R: Read>(input: R, aggregate: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let time_col = column("time").ok_or_else(|| Error::Schema("missing field `time`".into()))?;
    let label_col = column("label").ok_or_else(|| Error::Schema("missing field `label`".into()))?;
    let count_col = column("count").ok_or_else(|| Error::Schema("missing field `count`".into()))?;
    let draw_col = column("draw");
    let model = if draw_col.is_some() { ModelKind::Dw } else { ModelKind::Fv };

    let mut registry = TypeRegistry::default();
    let mut cells: BTreeMap<u64, (f64, DrawCells)> = BTreeMap::new();
    let mut draw_order: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let field = |col: usize, name: &str| {
            record
                .get(col)
                .ok_or_else(|| Error::Schema(format!("line {line}: missing field `{name}`")))
        };
        let time_text = field(time_col, "time")?;
        let time: f64 = time_text
            .parse()
            .map_err(|_| Error::Value(format!("line {line}: invalid time `{time_text}`")))?;
        if !time.is_finite() {
            return Err(Error::Value(format!("line {line}: time must be finite")));
        }
        let label = field(label_col, "label")?;
        if label.is_empty() {
            return Err(Error::Schema(format!("line {line}: empty label")));
        }
        let count_text = field(count_col, "count")?;
        let count: i64 = count_text
            .parse()
            .map_err(|_| Error::Value(format!("line {line}: invalid count `{count_text}`")))?;
        if count < 0 {
            return Err(Error::Value(format!("line {line}: negative count {count}")));
        }
        let count = u32::try_from(count).map_err(|_| Error::Value(format!("line {line}: count {count} too large")))?;
        let draw = match draw_col {
            Some(col) => field(col, "draw")?.to_string(),
            None => String::new(),
        };

        let pos = registry.intern(label);
        let key = canonical_time_bits(time);
        let (_, draws) = cells.entry(key).or_insert_with(|| (time, BTreeMap::new()));
        if !draws.contains_key(&draw) {
            draw_order.entry(key).or_default().push(draw.clone());
        }
        let cell = draws.entry(draw.clone()).or_default();
        if cell.contains_key(&pos) && !aggregate {
            return Err(Error::Order(duplicate_message(line, time, &draw, label)));
        }
        let slot = cell.entry(pos).or_insert(0);
        *slot = slot
            .checked_add(count)
            .ok_or_else(|| Error::Value(format!("line {line}: count overflow")))?;
    }
    if cells.is_empty() {
        return Err(Error::Schema("at least one time required".into()));
    }

    let dim = registry.len();
    let mut ordered: Vec<(f64, Vec<MultiIndex>)> = cells
        .into_iter()
        .map(|(key, (time, draws))| {
            let order = &draw_order[&key];
            let group = order
                .iter()
                .map(|id| {
                    let mut counts = vec![0u32; dim];
                    for (&pos, &c) in &draws[id] {
                        counts[pos] = c;
                    }
                    MultiIndex::new(counts)
                })
                .collect();
            (time, group)
        })
        .collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (times, draws): (Vec<f64>, Vec<Vec<MultiIndex>>) = ordered.into_iter().unzip();
    let timeline = ObservationTimeline::new(times, draws, dim)?;
    Ok(Dataset {
        model,
        registry,
        timeline,
    })
}

fn duplicate_message(line: usize, time: f64, draw: &str, label: &str) -> String {
    if draw.is_empty() {
        format!("line {line}: duplicate row for time {time}, label `{label}`")
    } else {
        format!("line {line}: duplicate row for time {time}, draw `{draw}`, label `{label}`")
    }
}

/// Equal times compare equal after mapping `-0.0` to `0.0`.
fn canonical_time_bits(t: f64) -> u64 {
    if t == 0.0 {
        0f64.to_bits()
    } else {
        t.to_bits()
    }
}

/// Writes the canonical form of a dataset: times ascending, draws numbered
/// from 1 in order, labels in registry order. The first draw lists every
/// label (fixing the registry order on reload); later draws list positive
/// counts only, or a single zero row when empty.
pub fn write_timeline<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let dw = data.model == ModelKind::Dw;
    if dw {
        writer.write_record(["time", "draw", "label", "count"])?;
    } else {
        writer.write_record(["time", "label", "count"])?;
    }
    let tl = &data.timeline;
    for i in 0..tl.len() {
        let time = format!("{}", tl.time(i));
        for (d, draw) in tl.draws(i).iter().enumerate() {
            let mut rows: Vec<(usize, u32)> = (0..draw.dim())
                .filter(|&j| (i == 0 && d == 0) || draw.get(j) > 0)
                .map(|j| (j, draw.get(j)))
                .collect();
            if rows.is_empty() && draw.dim() > 0 {
                rows.push((0, 0));
            }
            for (j, c) in rows {
                let label = data.registry.label(j);
                let count = c.to_string();
                if dw {
                    writer.write_record([time.as_str(), &(d + 1).to_string(), label, &count])?;
                } else {
                    writer.write_record([time.as_str(), label, &count])?;
                }
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Formats a weight with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Line-oriented report of a mixture law.
pub fn format_mixture(
    command: &str,
    model: ModelKind,
    data: &Dataset,
    at: usize,
    components: &Components,
    rate_offset: Option<f64>,
) -> String {
    let mut out = String::new();
    write_header(&mut out, command, model, data, at);
    if let Some(b) = rate_offset {
        writeln!(out, "rate_offset = {}", fmt_real(b)).unwrap();
    }
    writeln!(out, "components = {}", components.len()).unwrap();
    for (c, comp) in components.iter().enumerate() {
        writeln!(
            out,
            "component {c} index = {} log_weight = {} weight = {}",
            comp.index,
            fmt_real(comp.log_weight),
            fmt_real(comp.log_weight.exp())
        )
        .unwrap();
    }
    out
}

pub fn write_header(out: &mut String, command: &str, model: ModelKind, data: &Dataset, at: usize) {
    let model = match model {
        ModelKind::Fv => "fv",
        ModelKind::Dw => "dw",
    };
    writeln!(out, "command = {command}").unwrap();
    writeln!(out, "model = {model}").unwrap();
    writeln!(out, "at = {at}").unwrap();
    writeln!(out, "time = {}", data.timeline.time(at)).unwrap();
    writeln!(out, "labels = {}", data.registry.len()).unwrap();
    for (j, label) in data.registry.labels().iter().enumerate() {
        writeln!(out, "label {j} = {label}").unwrap();
    }
}

/// Lines `key label = probability` for a next-draw pmf.
pub fn format_pmf(out: &mut String, key: &str, pmf: &NextDrawPmf, registry: &TypeRegistry) {
    for (label, p) in pmf.labelled(registry) {
        writeln!(out, "{key} {label} = {}", fmt_real(p)).unwrap();
    }
}

/// Checks that the weights of `components` sum to one; the error names the
/// first offending component.
pub fn check_normalized(components: &Components, tol: f64) -> Result<()> {
    for (c, comp) in components.iter().enumerate() {
        if !comp.log_weight.is_finite() {
            return Err(Error::Normalization {
                component: c,
                detail: format!("log-weight {}", comp.log_weight),
            });
        }
    }
    let total = components.weight_sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::Normalization {
            component: components.len().saturating_sub(1),
            detail: format!("weights sum to {total}"),
        });
    }
    Ok(())
}
