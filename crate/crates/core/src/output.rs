//! CSV tables and SVG figures for scenario results.
//!
//! Every CSV starts with `#` lines carrying the crate version, the SHA-256 of the
//! resolved config and the config itself. Numbers use nine significant digits;
//! missing values are written as `NA`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evolution::rotation_time;
use crate::gates::Herald;
use crate::metrics::{avg_gate_fidelity_monte_carlo, FidelityConvention};
use crate::pulse::cpmg_period;
use crate::scenario::{ScenarioConfig, ScenarioData};
use crate::svg;

/// Haar states drawn for the Monte-Carlo cross-check column.
pub const MONTE_CARLO_SAMPLES: usize = 2000;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot render table: {0}")]
    Render(String),
}

pub type Result<T> = std::result::Result<T, OutputError>;

/// A named output artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Compact JSON of `cfg` without `output.jobs`, which never changes results.
pub fn config_json(cfg: &ScenarioConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output.jobs = None;
    Ok(serde_json::to_string(&c)?)
}

/// Hex SHA-256 of [`config_json`].
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(config_json(cfg)?.as_bytes())))
}

fn header(cfg: &ScenarioConfig) -> Result<String> {
    Ok(format!(
        "# trispin {}\n# kind: {}\n# config_sha256: {}\n# config: {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.kind.name(),
        config_hash(cfg)?,
        config_json(cfg)?
    ))
}

/// Nine significant digits, trailing zeros trimmed; `NA` for non-finite values.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt_num)
}

fn table(cfg: &ScenarioConfig, columns: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let body = String::from_utf8(
        w.into_inner()
            .map_err(|e| OutputError::Render(e.to_string()))?,
    )
    .map_err(|e| OutputError::Render(e.to_string()))?;
    Ok(header(cfg)? + &body)
}

/// All CSV tables of a scenario result, in a fixed order.
pub fn tables(cfg: &ScenarioConfig, data: &ScenarioData) -> Result<Vec<OutputFile>> {
    let kind = cfg.kind.name();
    let conv = cfg.output.convention.unwrap_or_default();
    let seed = cfg.output.seed.unwrap_or(0);
    let file = |suffix: &str, contents: String| OutputFile {
        name: format!("{kind}{suffix}.csv"),
        contents,
    };
    let mut out = Vec::new();
    match data {
        ScenarioData::Constants(rows) => {
            let phi = cfg.control.phi.unwrap_or(std::f64::consts::FRAC_PI_2);
            let p = cfg.control.harmonic.unwrap_or(5);
            let cols = [
                "revolutions",
                "field_mt",
                "omega_0",
                "delta",
                "sigma",
                "a_z",
                "a_perp",
                "resolution",
                "pi_over_a_z_ns",
                "rotation_time_ns",
                "cpmg_duration_ns",
                "achieved_angle",
            ];
            let body = rows
                .iter()
                .map(|r| {
                    let q = &r.params;
                    let nt = cpmg_period(p, q.delta) * r.revolutions as f64;
                    vec![
                        r.revolutions.to_string(),
                        fmt_num(r.field_mt),
                        fmt_num(q.omega_0),
                        fmt_num(q.delta),
                        fmt_num(q.sigma),
                        fmt_num(q.a_z),
                        fmt_num(q.a_perp),
                        fmt_num(r.resolution),
                        fmt_num(std::f64::consts::PI / q.a_z),
                        fmt_num(rotation_time(phi, p, q)),
                        fmt_num(nt),
                        fmt_num(r.revolutions as f64 * r.resolution),
                    ]
                })
                .collect();
            out.push(file("", table(cfg, &cols, body)?));
        }
        ScenarioData::Gates(runs) => {
            let cols = [
                "label",
                "field_mt",
                "t_ns",
                "fidelity_haar",
                "fidelity_kraus",
            ];
            let mut body = Vec::new();
            for r in runs {
                let (h, k) = (
                    r.trace(FidelityConvention::Haar),
                    r.trace(FidelityConvention::Kraus),
                );
                for i in 0..r.times.len() {
                    body.push(vec![
                        r.label.clone(),
                        fmt_num(r.field_mt),
                        fmt_num(r.times[i]),
                        fmt_num(h.values[i]),
                        fmt_num(k.values[i]),
                    ]);
                }
            }
            out.push(file("", table(cfg, &cols, body)?));
            let cols = [
                "label",
                "revolutions",
                "harmonic",
                "field_mt",
                "reference_time_ns",
                "cpmg_duration_ns",
                "f_ref_haar",
                "f_ref_kraus",
                "max_haar",
                "t_max_haar_ns",
                "deviation_az_haar",
                "max_kraus",
                "t_max_kraus_ns",
                "deviation_az_kraus",
                "monte_carlo_haar",
                "monte_carlo_se",
                "step_ns",
                "convergence",
                "converged",
            ];
            let mut body = Vec::new();
            for r in runs {
                let mut row = vec![
                    r.label.clone(),
                    r.cpmg.map_or("NA".into(), |c| c.0.to_string()),
                    r.cpmg.map_or("NA".into(), |c| c.1.to_string()),
                    fmt_num(r.field_mt),
                    fmt_num(r.reference_time),
                    opt(r.cpmg_duration),
                ];
                for c in FidelityConvention::BOTH {
                    row.push(opt(r.value_at(c, r.reference_time)));
                }
                for c in FidelityConvention::BOTH {
                    match r.maximum(c) {
                        Ok(m) => {
                            row.extend([fmt_num(m.value), fmt_num(m.time), fmt_num(m.deviation_az)])
                        }
                        Err(_) => row.extend(["NA".into(), "NA".into(), "NA".into()]),
                    }
                }
                // Unnormalized Haar average of V†U(t_ref), divided by F(V†V) like the closed form.
                let (mc, se) =
                    avg_gate_fidelity_monte_carlo(&r.reference_overlap, MONTE_CARLO_SAMPLES, seed);
                let norm = crate::metrics::FidelitySums::of(
                    &(r.rotation_target.adjoint() * &r.rotation_target),
                )
                .fidelity(FidelityConvention::Haar);
                row.extend([
                    fmt_num(mc / norm),
                    fmt_num(se / norm),
                    fmt_num(r.step),
                    opt(r.convergence_estimate),
                    r.converged.to_string(),
                ]);
                body.push(row);
            }
            out.push(file("_summary", table(cfg, &cols, body)?));
        }
        ScenarioData::Ghz(runs) => {
            let cols = [
                "label",
                "field_mt",
                "t_ns",
                "fidelity_ghz_0",
                "fidelity_ghz_pi",
                "probability_zero",
            ];
            let mut body = Vec::new();
            for r in runs {
                for i in 0..r.times.len() {
                    body.push(vec![
                        r.label.clone(),
                        fmt_num(r.field_mt),
                        fmt_num(r.times[i]),
                        fmt_num(r.fidelity_zero[i]),
                        fmt_num(r.fidelity_pi[i]),
                        fmt_num(r.probability_zero[i]),
                    ]);
                }
            }
            out.push(file("", table(cfg, &cols, body)?));
            let cols = [
                "label",
                "revolutions",
                "harmonic",
                "field_mt",
                "reference_time_ns",
                "cpmg_duration_ns",
                "f_ref_ghz_0",
                "f_ref_ghz_pi",
                "max_ghz_0",
                "t_max_ghz_0_ns",
                "deviation_az_ghz_0",
                "max_ghz_pi",
                "t_max_ghz_pi_ns",
                "deviation_az_ghz_pi",
                "step_ns",
                "convergence",
                "converged",
            ];
            let mut body = Vec::new();
            for r in runs {
                let mut row = vec![
                    r.label.clone(),
                    r.revolutions.to_string(),
                    r.harmonic.to_string(),
                    fmt_num(r.field_mt),
                    fmt_num(r.reference_time),
                    fmt_num(r.cpmg_duration),
                ];
                for h in Herald::BOTH {
                    row.push(opt(r.trace(h).value_at_reference()));
                }
                for h in Herald::BOTH {
                    match r.maximum(h) {
                        Ok(m) => {
                            row.extend([fmt_num(m.value), fmt_num(m.time), fmt_num(m.deviation_az)])
                        }
                        Err(_) => row.extend(["NA".into(), "NA".into(), "NA".into()]),
                    }
                }
                row.extend([
                    fmt_num(r.step),
                    opt(r.convergence_estimate),
                    r.converged.to_string(),
                ]);
                body.push(row);
            }
            out.push(file("_summary", table(cfg, &cols, body)?));
        }
        ScenarioData::Deviations(devs) => {
            let cols = [
                "target",
                "source",
                "gamma_inv_us",
                "time_ns",
                "convention",
                "f_ref",
                "f_noise",
                "deviation",
                "truncation",
            ];
            let body = devs
                .iter()
                .map(|d| {
                    let convention = if d.target.starts_with("GHZ") {
                        "state"
                    } else {
                        conv.label()
                    };
                    vec![
                        d.target.clone(),
                        d.source.clone(),
                        opt(d.gamma_inv_us),
                        fmt_num(d.time),
                        convention.into(),
                        fmt_num(d.f_ref),
                        fmt_num(d.f_noise),
                        fmt_num(d.deviation),
                        opt(d.truncation),
                    ]
                })
                .collect();
            out.push(file("", table(cfg, &cols, body)?));
        }
        ScenarioData::Sweep(s) => {
            let cols = [
                "gate",
                "convention",
                "revolutions",
                "harmonic",
                "field_mt",
                "max_fidelity",
                "optimal_time_ns",
                "reference_time_ns",
                "error",
            ];
            let gate = match s.gate {
                crate::scenario::SweepGate::X => "x",
                crate::scenario::SweepGate::Hadamard => "hadamard",
            };
            let body = s
                .cells
                .iter()
                .map(|c| {
                    vec![
                        gate.into(),
                        conv.label().into(),
                        c.revolutions.to_string(),
                        c.harmonic.to_string(),
                        opt(c.field_mt),
                        opt(c.max_fidelity),
                        opt(c.optimal_time),
                        opt(c.reference_time),
                        c.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            out.push(file("", table(cfg, &cols, body)?));
        }
    }
    Ok(out)
}

/// Figures matching [`tables`]; summary and constants tables have none.
pub fn figures(tables: &[OutputFile]) -> Result<Vec<OutputFile>> {
    let mut out = Vec::new();
    for t in tables {
        if t.name.ends_with("_summary.csv") || t.name.starts_with("constants") {
            continue;
        }
        out.push(OutputFile {
            name: t.name.replace(".csv", ".svg"),
            contents: render_csv(&t.contents, None)?,
        });
    }
    Ok(out)
}

/// Writes tables (and figures when `svg` is set) into `dir`.
pub fn write_outputs(
    cfg: &ScenarioConfig,
    data: &ScenarioData,
    dir: &Path,
    svg: bool,
) -> Result<Vec<PathBuf>> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| OutputError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = tables(cfg, data)?;
    if svg {
        let figs = figures(&files)?;
        files.extend(figs);
    }
    let mut paths = Vec::new();
    for f in files {
        let path = dir.join(&f.name);
        fs::write(&path, f.contents).map_err(io(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    kind: Option<String>,
}

fn parse_table(text: &str) -> Result<Table> {
    let kind = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# kind: ").map(str::to_string));
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(Table {
        columns,
        rows,
        kind,
    })
}

fn num(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Renders a trace table as a line plot or a sweep table as a heatmap.
///
/// `column` picks the plotted value column; by default the first `fidelity*` column
/// (traces) or `max_fidelity` (sweeps).
pub fn render_csv(text: &str, column: Option<&str>) -> Result<String> {
    let t = parse_table(text)?;
    let idx = |name: &str| t.columns.iter().position(|c| c == name);
    let title = t.kind.clone().unwrap_or_else(|| "trispin".into());
    if let (Some(n), Some(p)) = (idx("revolutions"), idx("harmonic")) {
        let v = idx(column.unwrap_or("max_fidelity")).ok_or_else(|| {
            OutputError::Render(format!("no column {:?}", column.unwrap_or("max_fidelity")))
        })?;
        let mut ns: Vec<u32> = Vec::new();
        let mut ps: Vec<u32> = Vec::new();
        let mut cells = BTreeMap::new();
        for row in &t.rows {
            let (Ok(nv), Ok(pv)) = (row[n].parse::<u32>(), row[p].parse::<u32>()) else {
                continue;
            };
            if !ns.contains(&nv) {
                ns.push(nv);
            }
            if !ps.contains(&pv) {
                ps.push(pv);
            }
            cells.insert((nv, pv), num(&row[v]));
        }
        let values: Vec<Vec<Option<f64>>> = ns
            .iter()
            .map(|nv| {
                ps.iter()
                    .map(|pv| cells.get(&(*nv, *pv)).copied().flatten())
                    .collect()
            })
            .collect();
        let xl: Vec<String> = ps.iter().map(|p| format!("p={p}")).collect();
        let yl: Vec<String> = ns.iter().map(|n| format!("N={n}")).collect();
        return Ok(svg::heatmap(&title, &xl, &yl, &values));
    }
    let x = idx("t_ns")
        .ok_or_else(|| OutputError::Render("table has neither t_ns nor a sweep grid".into()))?;
    let ycol = match column {
        Some(c) => idx(c).ok_or_else(|| OutputError::Render(format!("no column {c:?}")))?,
        None => t
            .columns
            .iter()
            .position(|c| c.starts_with("fidelity"))
            .ok_or_else(|| OutputError::Render("no fidelity column".into()))?,
    };
    let label = idx("label");
    let mut series: Vec<svg::Series> = Vec::new();
    for row in &t.rows {
        let name = label.map_or_else(String::new, |l| row[l].clone());
        let (Some(xv), Some(yv)) = (num(&row[x]), num(&row[ycol])) else {
            continue;
        };
        match series.iter_mut().find(|s| s.label == name) {
            Some(s) => s.points.push((xv, yv)),
            None => series.push(svg::Series {
                label: name,
                points: vec![(xv, yv)],
            }),
        }
    }
    Ok(svg::line_plot(&title, "t (ns)", &t.columns[ycol], &series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{run_scenario, ScenarioKind};

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.123456789123), "0.123456789");
        assert_eq!(fmt_num(345.4123456789), "345.412346");
        assert_eq!(fmt_num(-2.5e-7), "-2.50000000e-7");
        assert_eq!(fmt_num(f64::NAN), "NA");
        assert_eq!(fmt_num(123456789.0), "123456789");
    }

    #[test]
    fn constants_table_round_trips() {
        let cfg = ScenarioConfig::new(ScenarioKind::Constants)
            .resolve()
            .unwrap();
        let data = run_scenario(&cfg).unwrap();
        let files = tables(&cfg, &data).unwrap();
        assert_eq!(files.len(), 1);
        let text = &files[0].contents;
        assert!(text.starts_with("# trispin "));
        assert!(text.contains(&config_hash(&cfg).unwrap()));
        let t = parse_table(text).unwrap();
        assert_eq!(t.rows.len(), 20);
        assert_eq!(t.kind.as_deref(), Some("constants"));
        let b50 = &t.rows[4];
        assert_eq!(b50[0], "50");
        assert!((b50[1].parse::<f64>().unwrap() - 345.41).abs() < 3.5);
        // Same config, same bytes.
        assert_eq!(tables(&cfg, &run_scenario(&cfg).unwrap()).unwrap(), files);
    }

    #[test]
    fn render_handles_empty_and_sweep_tables() {
        let cfg = ScenarioConfig::new(ScenarioKind::GateX).resolve().unwrap();
        let empty = table(
            &cfg,
            &["label", "field_mt", "t_ns", "fidelity_haar"],
            vec![],
        )
        .unwrap();
        let svg = render_csv(&empty, None).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let sweep = table(
            &cfg,
            &["revolutions", "harmonic", "max_fidelity"],
            vec![
                vec!["10".into(), "1".into(), "0.99".into()],
                vec!["10".into(), "3".into(), "NA".into()],
            ],
        )
        .unwrap();
        let svg = render_csv(&sweep, None).unwrap();
        assert!(svg.contains("p=3") && svg.contains("N=10") && svg.contains("NA"));
        assert!(render_csv(&sweep, Some("nope")).is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = ScenarioConfig::new(ScenarioKind::GateX).resolve().unwrap();
        let mut b = a.clone();
        b.output.seed = Some(9);
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
        let mut c = a.clone();
        c.output.jobs = Some(8);
        assert_eq!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
    }
}
