use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use emitterlab::correlator::{correlate_with, BinGrid, Execution};
use emitterlab::fitting::{compare_models, fit_g2 as fit_curve, fit_spectrum_data, G2Data, G2FitOptions, G2Model, SpectrumFitOptions, Weighting};
use emitterlab::photophysics::{read_model, simulate_photon_stream, simulate_segmented};
use emitterlab::spectral::{convert_axis_with, Profile, HC_EV_NM};
use emitterlab::ttio::{
    read_curve, read_fit_report, read_linelist, read_spectrum, read_timetags, write_curve, write_fit_report,
    write_spectrum, write_timetags, AxisUnit, DefectLineList, DwPolicy, FitReport, ReadOptions, TimetagFormat,
    BINARY_MAGIC,
};
use emitterlab::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::duration::Duration;
use crate::output::{overlay, Input, Outputs};
use crate::{Globals, Usage};

/// Core errors that stem from the caller's flags rather than the data.
fn classify(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidArgument(_) | Error::LagExceedsSpan { .. } | Error::UnknownChannel { .. } => Usage(e.to_string()).into(),
        other => other.into(),
    }
}

fn required<T: Clone>(value: &Option<T>, what: &str) -> Result<T> {
    value.clone().ok_or_else(|| Usage(format!("missing {what}")).into())
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse().map_err(classify)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Binary,
}

impl From<Format> for TimetagFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => TimetagFormat::Text,
            Format::Binary => TimetagFormat::Binary,
        }
    }
}

fn sniff(bytes: &[u8]) -> Format {
    if bytes.starts_with(BINARY_MAGIC) {
        Format::Binary
    } else {
        Format::Text
    }
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateArgs {
    /// Time-tag file (text, or binary detected by its magic bytes).
    pub input: Option<PathBuf>,
    /// Force the input format instead of detecting it.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Start channel [default: 0].
    #[arg(long)]
    pub channel_a: Option<u8>,
    /// Stop channel [default: 1].
    #[arg(long)]
    pub channel_b: Option<u8>,
    /// Tick length in ps, overriding the file.
    #[arg(long)]
    pub resolution_ps: Option<u32>,
    /// Acquisition span, overriding the file (e.g. 1s).
    #[arg(long)]
    pub duration: Option<Duration>,
    /// Linear bin width [default: 5ps].
    #[arg(long)]
    pub width: Option<Duration>,
    /// Linear bins cover -reach..reach [default: 50ns].
    #[arg(long)]
    pub linear_reach: Option<Duration>,
    /// First logarithmic edge [default: the linear reach].
    #[arg(long)]
    pub log_start: Option<Duration>,
    /// Largest lag [default: 10ms].
    #[arg(long)]
    pub max_lag: Option<Duration>,
    /// Logarithmic bins per decade [default: 10].
    #[arg(long)]
    pub per_decade: Option<f64>,
}

/// Whole ticks for a grid setting, never less than one.
fn grid_ticks(d: Duration, res: u32, what: &str) -> Result<i64> {
    if d.ps <= 0.0 {
        return Err(Usage(format!("{what} must be positive")).into());
    }
    let t = d.ticks(res).max(1);
    if (t as f64 * res as f64 - d.ps).abs() > 1e-9 * d.ps {
        log::warn!("{what} {d} rounded to {t} ticks of {res} ps");
    }
    Ok(t as i64)
}

/// The logarithmic part overshoots `max_lag` by up to one bin; the last
/// bin is cut at `max_lag` so the grid never reaches past what was asked.
fn capped(grid: BinGrid, max_lag: i64) -> emitterlab::Result<BinGrid> {
    let mut edges: Vec<i64> = grid.edges().iter().copied().filter(|&e| e < max_lag).collect();
    edges.push(max_lag);
    BinGrid::from_edges(edges, grid.kind())
}

pub fn correlate(g: &Globals, cli: &CorrelateArgs) -> Result<Vec<PathBuf>> {
    let a = g.config.merge("correlate", cli)?;
    let input = Input::read(&required(&a.input, "input time-tag file")?)?;
    let format = a.format.unwrap_or_else(|| sniff(&input.bytes));
    let mut opts = ReadOptions { resolution_ps: a.resolution_ps, ..ReadOptions::default() };
    let mut stream = read_timetags(input.bytes.as_slice(), format.into(), &opts).map_err(classify)?;
    if let Some(d) = a.duration {
        opts.duration = Some(d.ticks(stream.resolution_ps()));
        stream = read_timetags(input.bytes.as_slice(), format.into(), &opts).map_err(classify)?;
    }
    let res = stream.resolution_ps();
    let (ch_a, ch_b) = (a.channel_a.unwrap_or(0), a.channel_b.unwrap_or(1));
    let width = grid_ticks(a.width.unwrap_or(Duration { ps: 5.0 }), res, "width")?;
    let reach = grid_ticks(a.linear_reach.unwrap_or(Duration { ps: 50e3 }), res, "linear reach")?;
    let max_lag = grid_ticks(a.max_lag.unwrap_or(Duration { ps: 10e9 }), res, "max lag")?;
    let log_start = grid_ticks(a.log_start.unwrap_or(Duration { ps: reach as f64 * res as f64 }), res, "log start")?;
    let per_decade = a.per_decade.unwrap_or(10.0);
    let grid = if max_lag <= reach {
        BinGrid::linear(-max_lag, max_lag, width)
    } else {
        BinGrid::linear(-reach, reach, width)
            .and_then(|lin| BinGrid::logarithmic(log_start, max_lag, per_decade).and_then(|log| BinGrid::composite(&lin, &log)))
            .and_then(|grid| capped(grid, max_lag))
    }
    .map_err(classify)?;
    let exec = if g.threads > 1 { Execution::Chunked { chunks: g.threads } } else { Execution::Sequential };
    let curve = correlate_with(&stream, ch_a, ch_b, &grid, exec).map_err(classify)?;
    log::info!("{} pairs in {} bins", curve.counts.iter().sum::<u64>(), curve.n_bins());

    let mut text = Vec::new();
    write_curve(&curve, &mut text)?;
    let mut out = Outputs::new(&g.out_dir, "correlate");
    out.input("timetags", &input);
    out.add("g2.tsv", text);
    let config = json!({
        "global": g.json(),
        "format": format,
        "channel_a": ch_a,
        "channel_b": ch_b,
        "resolution_ps": res,
        "duration_ticks": stream.duration(),
        "width_ticks": width,
        "linear_reach_ticks": reach,
        "log_start_ticks": log_start,
        "max_lag_ticks": max_lag,
        "per_decade": per_decade,
    });
    out.commit(&config)
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Model file with [levels], [[rate]] and [detector] sections.
    pub model: Option<PathBuf>,
    /// Acquisition span (e.g. 500ms).
    #[arg(long)]
    pub span: Option<Duration>,
    /// Independent segments, each starting from a steady-state draw [default: 1].
    #[arg(long)]
    pub segments: Option<usize>,
    /// Output format [default: text].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

pub fn simulate(g: &Globals, cli: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let a = g.config.merge("simulate", cli)?;
    let input = Input::read(&required(&a.model, "model file")?)?;
    let span = required(&a.span, "--span")?;
    let segments = a.segments.unwrap_or(1);
    if segments == 0 {
        return Err(Usage("--segments must be at least 1".into()).into());
    }
    let format = a.format.unwrap_or(Format::Text);
    let mut model = read_model(input.bytes.as_slice()).map_err(|e| Usage(format!("model file: {e}")))?;
    if let Some(seed) = g.seed {
        model.detector.seed = seed;
    }
    let ticks = span.ticks(model.detector.resolution_ps);
    if ticks == 0 {
        return Err(Usage(format!("--span {span} is shorter than one tick")).into());
    }
    let stream = if segments == 1 {
        simulate_photon_stream(&model.system, &model.detector, ticks)
    } else {
        simulate_segmented(&model.system, &model.detector, ticks, segments)
    }
    .map_err(classify)?;
    log::info!("{} detected photons", stream.len());

    let mut bytes = Vec::new();
    write_timetags(&stream, &mut bytes, format.into())?;
    let name = match format {
        Format::Text => "stream.txt",
        Format::Binary => "stream.ptag",
    };
    let mut out = Outputs::new(&g.out_dir, "simulate");
    out.input("model", &input);
    out.add(name, bytes);
    let config = json!({
        "global": g.json(),
        "seed": model.detector.seed,
        "span_ticks": ticks,
        "resolution_ps": model.detector.resolution_ps,
        "segments": segments,
        "format": format,
        "photons": stream.len(),
    });
    out.commit(&config)
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitG2Args {
    /// Correlation curve written by `correlate`.
    pub input: Option<PathBuf>,
    /// exp3level, exp4level, rate3, rate4, or `all` to fit and rank every
    /// model [default: rate4].
    #[arg(long)]
    pub model: Option<String>,
    /// Hold a parameter fixed, as name=value (repeatable).
    #[arg(long = "fix", value_name = "NAME=VALUE")]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fix: Vec<String>,
}

const ALL_G2_MODELS: [G2Model; 4] = [G2Model::Exp3Level, G2Model::Exp4Level, G2Model::Rate3, G2Model::Rate4];

fn parse_fixed(items: &[String]) -> Result<Vec<(String, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| Usage(format!("--fix {s:?} is not name=value")))?;
            let v: f64 = v.trim().parse().map_err(|_| Usage(format!("--fix {s:?}: bad value")))?;
            Ok((k.trim().to_owned(), v))
        })
        .collect()
}

fn report_bytes(report: &FitReport) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    write_fit_report(report, &mut v)?;
    Ok(v)
}

pub fn fit_g2(g: &Globals, cli: &FitG2Args) -> Result<Vec<PathBuf>> {
    let a = g.config.merge("fit-g2", cli)?;
    let input = Input::read(&required(&a.input, "input curve")?)?;
    let model = a.model.clone().unwrap_or_else(|| "rate4".into());
    let models = if model == "all" { ALL_G2_MODELS.to_vec() } else { vec![parse_with::<G2Model>(&model)?] };
    let fixed = parse_fixed(&a.fix)?;
    let mut opts = G2FitOptions::default();
    for (k, v) in &fixed {
        opts = opts.with_fixed(k, *v);
    }
    for (k, _) in &fixed {
        if !models.iter().any(|m| m.param_names().contains(&k.as_str())) {
            return Err(Usage(format!("--fix {k}: no such parameter in the selected model(s)")).into());
        }
    }
    let curve = read_curve(input.bytes.as_slice())?;
    let data = G2Data::from_curve(&curve).map_err(classify)?;

    // Fixing a parameter another model lacks only applies where it exists.
    let fits = emitterlab::parallel::map_collect(&models, |m| {
        let mut o = opts.clone();
        o.fixed.retain(|k, _| m.param_names().contains(&k.as_str()));
        fit_curve(&curve, *m, &o)
    });
    let fits = fits.into_iter().zip(&models).map(|(f, m)| f.with_context(|| format!("fitting {}", m.id()))).collect::<Result<Vec<_>>>()?;

    let mut out = Outputs::new(&g.out_dir, "fit-g2");
    out.input("curve", &input);
    for f in &fits {
        for w in &f.warnings {
            log::warn!("{}: {w}", f.model_id);
        }
        let report = FitReport::new(f.clone()).with_input("curve", input.digest());
        out.add(format!("fit.g2.{}.json", f.model_id), report_bytes(&report)?);
        out.add(format!("overlay.g2.{}.tsv", f.model_id), overlay("lag_s", &data.lags, &data.g2, &f.residuals));
    }
    if fits.len() > 1 {
        let ranking = compare_models(&fits)?;
        let mut v = serde_json::to_vec_pretty(&ranking)?;
        v.push(b'\n');
        out.add("selection.g2.json", v);
    }
    let config = json!({
        "global": g.json(),
        "models": models.iter().map(|m| m.id()).collect::<Vec<_>>(),
        "fixed": fixed.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
    });
    out.commit(&config)
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpectrumArgs {
    /// Spectrum file: x, counts[, sigma] rows.
    pub input: Option<PathBuf>,
    /// Axis unit of the input: nm or ev.
    #[arg(long)]
    pub unit: Option<String>,
    /// Defect line list (TOML); without one only the ZPL is fitted.
    #[arg(long)]
    pub linelist: Option<PathBuf>,
    /// Rescale line-list sideband amplitudes to match its dw_sim.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renormalize: bool,
    /// lorentzian or voigt [default: lorentzian].
    #[arg(long)]
    pub profile: Option<String>,
    /// Apply the nm -> eV density Jacobian to the counts before fitting.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub jacobian: bool,
}

pub fn fit_spectrum(g: &Globals, cli: &FitSpectrumArgs) -> Result<Vec<PathBuf>> {
    let a = g.config.merge("fit-spectrum", cli)?;
    let input = Input::read(&required(&a.input, "input spectrum")?)?;
    let unit: AxisUnit = parse_with(&required(&a.unit, "--unit (nm or ev)")?)?;
    let profile: Profile = parse_with(a.profile.as_deref().unwrap_or("lorentzian"))?;
    let policy = if a.renormalize { DwPolicy::Renormalize } else { DwPolicy::Strict };
    let list_input = a.linelist.as_deref().map(Input::read).transpose()?;
    let linelist = match &list_input {
        Some(l) => read_linelist(l.bytes.as_slice(), policy).map_err(|e| Usage(format!("line list: {e}")))?,
        None => DefectLineList::zpl_only("zpl"),
    };
    let spec = read_spectrum(input.bytes.as_slice(), unit)?;
    let ev = convert_axis_with(&spec, AxisUnit::ElectronVolts, a.jacobian)?;
    let (x, y) = (ev.xs(), ev.counts());
    let sigma;
    let scale: Vec<f64>;
    let weighting = if ev.points().iter().all(|p| p.sigma.is_some()) {
        sigma = ev.sigmas();
        Weighting::Sigma(&sigma)
    } else {
        // One detected count is worth |dλ/dE| density units after the Jacobian.
        let jac = a.jacobian && unit == AxisUnit::Nanometers;
        scale = x.iter().map(|e| if jac { HC_EV_NM / (e * e) } else { 1.0 }).collect();
        Weighting::Poisson(&scale)
    };
    let fit = fit_spectrum_data(&x, &y, weighting, &linelist, profile, &SpectrumFitOptions::default())?;
    for w in &fit.warnings {
        log::warn!("{w}");
    }

    let mut report = FitReport::new(fit.clone()).with_input("spectrum", input.digest());
    let mut out = Outputs::new(&g.out_dir, "fit-spectrum");
    out.input("spectrum", &input);
    if let Some(l) = &list_input {
        report = report.with_input("linelist", l.digest());
        out.input("linelist", l);
    }
    out.add("fit.spectrum.json", report_bytes(&report)?);
    out.add("overlay.spectrum.tsv", overlay("energy_eV", &x, &y, &fit.residuals));
    let config = json!({
        "global": g.json(),
        "unit": unit.label(),
        "profile": format!("{profile:?}").to_lowercase(),
        "linelist": linelist.name(),
        "renormalize": a.renormalize,
        "jacobian": a.jacobian,
    });
    out.commit(&config)
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertArgs {
    /// Spectrum file: x, counts[, sigma] rows.
    pub input: Option<PathBuf>,
    /// Axis unit of the input: nm or ev. The output is on the other axis.
    #[arg(long)]
    pub unit: Option<String>,
    /// Multiply counts and sigmas by the axis Jacobian.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub jacobian: bool,
}

pub fn convert(g: &Globals, cli: &ConvertArgs) -> Result<Vec<PathBuf>> {
    let a = g.config.merge("convert", cli)?;
    let input = Input::read(&required(&a.input, "input spectrum")?)?;
    let unit: AxisUnit = parse_with(&required(&a.unit, "--unit (nm or ev)")?)?;
    let target = match unit {
        AxisUnit::Nanometers => AxisUnit::ElectronVolts,
        AxisUnit::ElectronVolts => AxisUnit::Nanometers,
    };
    let spec = read_spectrum(input.bytes.as_slice(), unit)?;
    let converted = convert_axis_with(&spec, target, a.jacobian)?;
    let mut bytes = Vec::new();
    write_spectrum(&converted, &mut bytes)?;
    let mut out = Outputs::new(&g.out_dir, "convert");
    out.input("spectrum", &input);
    out.add(format!("spectrum.{}.csv", target.label().to_lowercase()), bytes);
    let config = json!({ "global": g.json(), "from": unit.label(), "to": target.label(), "jacobian": a.jacobian });
    out.commit(&config)
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Directory holding manifests and fit reports [default: the output directory].
    pub dir: Option<PathBuf>,
}

fn sorted_matching(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Usage(format!("cannot read directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix) && n.ends_with(suffix)))
        .collect();
    v.sort();
    Ok(v)
}

fn fmt_value(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn report(g: &Globals, cli: &ReportArgs) -> Result<Vec<PathBuf>> {
    let a = g.config.merge("report", cli)?;
    let dir = a.dir.clone().unwrap_or_else(|| g.out_dir.clone());
    let own = Outputs::manifest_name("report");
    let manifests: Vec<PathBuf> = sorted_matching(&dir, "manifest.", ".json")?
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != own.as_str()))
        .collect();
    if manifests.is_empty() {
        return Err(Usage(format!("no run manifests in {}", dir.display())).into());
    }
    let mut out = Outputs::new(&g.out_dir, "report");
    let mut s = String::new();
    for p in &manifests {
        let input = Input::read(p)?;
        let doc: serde_json::Value = serde_json::from_slice(&input.bytes).with_context(|| format!("reading {}", p.display()))?;
        s.push_str(&format!("== {} ({})\n", doc["subcommand"].as_str().unwrap_or("?"), p.file_name().unwrap().to_string_lossy()));
        if let Some(inputs) = doc["inputs"].as_object() {
            for (label, e) in inputs {
                s.push_str(&format!("  input  {label}: {} sha256 {}\n", fmt_value(&e["path"]), fmt_value(&e["sha256"])));
            }
        }
        if let Some(outputs) = doc["outputs"].as_object() {
            for name in outputs.keys() {
                s.push_str(&format!("  output {name}\n"));
            }
        }
        out.input(&p.file_name().unwrap().to_string_lossy(), &input);
    }
    for p in sorted_matching(&dir, "fit.", ".json")? {
        let input = Input::read(&p)?;
        let r = read_fit_report(input.bytes.as_slice()).with_context(|| format!("reading {}", p.display()))?;
        let o = &r.outcome;
        s.push_str(&format!(
            "== fit {} ({}): chi2_red {:.4}, {} points, {}\n",
            o.model_id,
            p.file_name().unwrap().to_string_lossy(),
            o.chi2_red,
            o.n_points,
            if o.converged { "converged" } else { "NOT converged" }
        ));
        for ((n, v), e) in o.names.iter().zip(&o.params).zip(&o.errors) {
            let held = if o.fixed.iter().any(|(f, _)| f == n) { " (fixed)" } else { "" };
            s.push_str(&format!("  {n:<16} {v:>14.6e} +- {e:.3e}{held}\n"));
        }
        for d in &o.derived {
            s.push_str(&format!("  {:<16} {:>14.6e} +- {:.3e} (derived)\n", d.name, d.value, d.error));
        }
        for w in &o.warnings {
            s.push_str(&format!("  warning: {w}\n"));
        }
        out.input(&p.file_name().unwrap().to_string_lossy(), &input);
    }
    for p in sorted_matching(&dir, "selection.", ".json")? {
        let input = Input::read(&p)?;
        let doc: serde_json::Value = serde_json::from_slice(&input.bytes).with_context(|| format!("reading {}", p.display()))?;
        s.push_str(&format!("== model ranking ({})\n", p.file_name().unwrap().to_string_lossy()));
        for m in doc["ranked"].as_array().into_iter().flatten() {
            s.push_str(&format!("  {:<10} AICc {:>12.3}  delta {:>10.3}\n", fmt_value(&m["model_id"]), m["aicc"].as_f64().unwrap_or(f64::NAN), m["delta"].as_f64().unwrap_or(f64::NAN)));
        }
        for v in doc["verdicts"].as_array().into_iter().flatten() {
            s.push_str(&format!(
                "  {} over {}: delta AICc {:.3}, support {}\n",
                fmt_value(&v["richer"]),
                fmt_value(&v["simpler"]),
                v["delta"].as_f64().unwrap_or(f64::NAN),
                fmt_value(&v["support"])
            ));
        }
        out.input(&p.file_name().unwrap().to_string_lossy(), &input);
    }
    print!("{s}");
    out.add("summary.txt", s.into_bytes());
    out.commit(&json!({ "global": g.json(), "dir": dir.display().to_string() }))
}
