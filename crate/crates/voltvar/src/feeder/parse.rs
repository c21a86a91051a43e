//! Text schema for feeders and scenarios.
//!
//! Feeder files are section-based:
//!
//! ```text
//! [bases]
//! v_base_v = 7200
//! s_base_kva = 1000
//! units = pu              # or physical (default)
//!
//! [limits]
//! v_min = 0.95
//! v_max = 1.05
//!
//! [substation]
//! bus = sub
//!
//! [buses]
//! # id phases [x y]
//! sub abc 0 0
//!
//! [lines]
//! # id from to phases r= <lower-triangle> x= <lower-triangle> [y= <lower-triangle>]
//! l1 sub b1 abc r= 0.03 0.007 0.03 0.007 0.007 0.03 x= 0.027 0.006 0.027 0.006 0.006 0.027
//!
//! [transformers]
//! # id from to phases r= <per-phase> x= <per-phase> loss= <per-phase>
//!
//! [loads]
//! # id bus phase
//!
//! [pv]
//! # id bus phase p_rated pf_min candidate [qv= v1 v2 v3 v4 v5 v6]
//! ```
//!
//! Matrix lists are row-major lower triangles over the declared phases.
//! Scenario files hold `[scenario <id>]` blocks with `probability`,
//! `weights = wo wv`, and repeated `demand = bus,phase,P_kW,Q_kvar`,
//! `mpp = pv_id,P_kW`, `feeder_head = phase,Vr_pu,Vim_pu` rows.

use std::path::Path;

use super::{
    Bus, Feeder, FeederError, LineSegment, Load, PVUnit, Phase, PhaseMatrix, PhaseNodeId,
    Scenario, Transformer, Units,
};
use crate::qvcurve::{q_max_from_pf, QVCurve};

type Result<T> = std::result::Result<T, FeederError>;

fn perr(line: usize, msg: impl Into<String>) -> FeederError {
    FeederError::Parse { line, msg: msg.into() }
}

fn parse_phases(line: usize, tok: &str) -> Result<Vec<Phase>> {
    let mut out = Vec::new();
    for c in tok.chars() {
        let p = Phase::from_letter(c).ok_or_else(|| perr(line, format!("bad phase letter '{c}'")))?;
        if out.contains(&p) {
            return Err(perr(line, format!("repeated phase '{c}'")));
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(perr(line, "empty phase list"));
    }
    Ok(out)
}

fn parse_f64(line: usize, tok: &str) -> Result<f64> {
    tok.parse().map_err(|_| perr(line, format!("expected a number, got '{tok}'")))
}

/// Splits `id from to phases key= v v v key= ...` records into the fixed head
/// tokens and keyed numeric groups.
fn keyed_groups<'a>(
    line: usize,
    toks: &[&'a str],
    head: usize,
) -> Result<(Vec<&'a str>, Vec<(&'a str, Vec<f64>)>)> {
    if toks.len() < head {
        return Err(perr(line, "truncated record"));
    }
    let fixed = toks[..head].to_vec();
    let mut groups: Vec<(&str, Vec<f64>)> = Vec::new();
    for &t in &toks[head..] {
        if let Some(key) = t.strip_suffix('=') {
            groups.push((key, Vec::new()));
        } else {
            let Some(last) = groups.last_mut() else {
                return Err(perr(line, format!("value '{t}' before any key")));
            };
            last.1.push(parse_f64(line, t)?);
        }
    }
    Ok((fixed, groups))
}

pub fn parse_feeder(text: &str) -> Result<Feeder> {
    let mut buses = Vec::new();
    let mut lines = Vec::new();
    let mut transformers = Vec::new();
    let mut loads = Vec::new();
    let mut pv_units = Vec::new();
    let mut substation: Option<String> = None;
    let mut v_base_v = None;
    let mut s_base_kva = None;
    let mut v_min = None;
    let mut v_max = None;
    let mut units = Units::Physical;

    let mut section = String::new();
    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = line
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| perr(ln, "malformed section header"))?
                .trim()
                .to_string();
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section.as_str() {
            "bases" | "limits" | "substation" => {
                if toks.len() < 3 || toks[1] != "=" {
                    return Err(perr(ln, "expected 'key = value'"));
                }
                match (section.as_str(), toks[0]) {
                    ("bases", "v_base_v") => v_base_v = Some(parse_f64(ln, toks[2])?),
                    ("bases", "s_base_kva") => s_base_kva = Some(parse_f64(ln, toks[2])?),
                    ("bases", "units") => {
                        units = match toks[2] {
                            "physical" => Units::Physical,
                            "pu" => Units::PerUnit,
                            other => return Err(perr(ln, format!("unknown units '{other}'"))),
                        }
                    }
                    ("limits", "v_min") => v_min = Some(parse_f64(ln, toks[2])?),
                    ("limits", "v_max") => v_max = Some(parse_f64(ln, toks[2])?),
                    ("substation", "bus") => substation = Some(toks[2].to_string()),
                    (s, k) => return Err(perr(ln, format!("unknown key '{k}' in [{s}]"))),
                }
            }
            "buses" => {
                if toks.len() != 2 && toks.len() != 4 {
                    return Err(perr(ln, "expected 'id phases [x y]'"));
                }
                let (x, y) = if toks.len() == 4 {
                    (Some(parse_f64(ln, toks[2])?), Some(parse_f64(ln, toks[3])?))
                } else {
                    (None, None)
                };
                buses.push(Bus {
                    id: toks[0].to_string(),
                    phases: parse_phases(ln, toks[1])?,
                    x,
                    y,
                });
            }
            "lines" => {
                let (fixed, groups) = keyed_groups(ln, &toks, 4)?;
                let phases = parse_phases(ln, fixed[3])?;
                let d = phases.len();
                let tri_len = d * (d + 1) / 2;
                let mut r = None;
                let mut x = None;
                let mut y = None;
                for (key, vals) in groups {
                    let m = PhaseMatrix::from_lower_triangle(d, &vals).ok_or_else(|| {
                        perr(ln, format!("{key}= expects {tri_len} lower-triangle values"))
                    })?;
                    match key {
                        "r" => r = Some(m),
                        "x" => x = Some(m),
                        "y" => y = Some(m),
                        other => return Err(perr(ln, format!("unknown matrix key '{other}='"))),
                    }
                }
                lines.push(LineSegment {
                    id: fixed[0].to_string(),
                    from_bus: fixed[1].to_string(),
                    to_bus: fixed[2].to_string(),
                    phases,
                    r: r.ok_or_else(|| perr(ln, "line is missing r="))?,
                    x: x.ok_or_else(|| perr(ln, "line is missing x="))?,
                    y_shunt: y.unwrap_or_else(|| PhaseMatrix::zeros(d)),
                });
            }
            "transformers" => {
                let (fixed, groups) = keyed_groups(ln, &toks, 4)?;
                let phases = parse_phases(ln, fixed[3])?;
                let d = phases.len();
                let mut r = None;
                let mut x = None;
                let mut loss = None;
                for (key, vals) in groups {
                    if vals.len() != d {
                        return Err(perr(ln, format!("{key}= expects {d} per-phase values")));
                    }
                    match key {
                        "r" => r = Some(vals),
                        "x" => x = Some(vals),
                        "loss" => loss = Some(vals),
                        other => return Err(perr(ln, format!("unknown key '{other}='"))),
                    }
                }
                transformers.push(Transformer {
                    id: fixed[0].to_string(),
                    from_bus: fixed[1].to_string(),
                    to_bus: fixed[2].to_string(),
                    phases,
                    r: r.ok_or_else(|| perr(ln, "transformer is missing r="))?,
                    x: x.ok_or_else(|| perr(ln, "transformer is missing x="))?,
                    no_load_loss: loss.unwrap_or_else(|| vec![0.0; d]),
                });
            }
            "loads" => {
                if toks.len() != 3 {
                    return Err(perr(ln, "expected 'id bus phase'"));
                }
                let phases = parse_phases(ln, toks[2])?;
                if phases.len() != 1 {
                    return Err(perr(ln, "loads are declared per node-phase"));
                }
                loads.push(Load {
                    id: toks[0].to_string(),
                    node: PhaseNodeId::new(toks[1], phases[0]),
                });
            }
            "pv" => {
                let (fixed, groups) = keyed_groups(ln, &toks, 6)?;
                let phases = parse_phases(ln, fixed[2])?;
                if phases.len() != 1 {
                    return Err(perr(ln, "pv units are declared per node-phase"));
                }
                let p_rated = parse_f64(ln, fixed[3])?;
                let pf_min = parse_f64(ln, fixed[4])?;
                let candidate = match fixed[5] {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(perr(ln, format!("candidate flag must be 0/1, got '{other}'")))
                    }
                };
                let mut curve = None;
                for (key, vals) in groups {
                    if key != "qv" {
                        return Err(perr(ln, format!("unknown key '{key}='")));
                    }
                    if vals.len() != 6 {
                        return Err(perr(ln, "qv= expects six breakpoints"));
                    }
                    let q_max =
                        q_max_from_pf(pf_min, p_rated).map_err(|e| perr(ln, e.to_string()))?;
                    let vb: [f64; 6] = vals.try_into().unwrap();
                    curve = Some(QVCurve::new(vb, q_max).map_err(|e| perr(ln, e.to_string()))?);
                }
                pv_units.push(PVUnit {
                    id: fixed[0].to_string(),
                    node: PhaseNodeId::new(fixed[1], phases[0]),
                    p_rated,
                    pf_min,
                    candidate,
                    curve,
                });
            }
            "" => return Err(perr(ln, "data before any section header")),
            other => return Err(perr(ln, format!("unknown section [{other}]"))),
        }
    }

    let feeder = Feeder {
        buses,
        lines,
        transformers,
        loads,
        pv_units,
        substation: substation
            .ok_or_else(|| FeederError::Validation("missing [substation] section".into()))?,
        v_base_v: v_base_v.ok_or_else(|| FeederError::Unit("missing v_base_v".into()))?,
        s_base_kva: s_base_kva.ok_or_else(|| FeederError::Unit("missing s_base_kva".into()))?,
        v_min: v_min.ok_or_else(|| FeederError::Validation("missing v_min".into()))?,
        v_max: v_max.ok_or_else(|| FeederError::Validation("missing v_max".into()))?,
        units,
    };
    feeder.validate()?;
    Ok(feeder)
}

pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| FeederError::Io { path: path.display().to_string(), source: e })?;
    parse_feeder(&text)
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list(vals: &[f64]) -> String {
    vals.iter().map(|&v| fmt_f(v)).collect::<Vec<_>>().join(" ")
}

fn fmt_phases(phases: &[Phase]) -> String {
    phases.iter().map(|p| p.letter()).collect()
}

/// Emits the feeder in its file schema; parses back field-for-field equal.
pub fn serialize_feeder(f: &Feeder) -> String {
    let mut out = String::new();
    out.push_str("[bases]\n");
    out.push_str(&format!("v_base_v = {}\n", fmt_f(f.v_base_v)));
    out.push_str(&format!("s_base_kva = {}\n", fmt_f(f.s_base_kva)));
    out.push_str(&format!(
        "units = {}\n",
        match f.units {
            Units::Physical => "physical",
            Units::PerUnit => "pu",
        }
    ));
    out.push_str("\n[limits]\n");
    out.push_str(&format!("v_min = {}\n", fmt_f(f.v_min)));
    out.push_str(&format!("v_max = {}\n", fmt_f(f.v_max)));
    out.push_str("\n[substation]\n");
    out.push_str(&format!("bus = {}\n", f.substation));
    out.push_str("\n[buses]\n");
    for b in &f.buses {
        match (b.x, b.y) {
            (Some(x), Some(y)) => out.push_str(&format!(
                "{} {} {} {}\n",
                b.id,
                fmt_phases(&b.phases),
                fmt_f(x),
                fmt_f(y)
            )),
            _ => out.push_str(&format!("{} {}\n", b.id, fmt_phases(&b.phases))),
        }
    }
    out.push_str("\n[lines]\n");
    for l in &f.lines {
        let mut rec = format!(
            "{} {} {} {} r= {} x= {}",
            l.id,
            l.from_bus,
            l.to_bus,
            fmt_phases(&l.phases),
            fmt_list(&l.r.lower_triangle()),
            fmt_list(&l.x.lower_triangle())
        );
        if !l.y_shunt.is_zero() {
            rec.push_str(&format!(" y= {}", fmt_list(&l.y_shunt.lower_triangle())));
        }
        rec.push('\n');
        out.push_str(&rec);
    }
    if !f.transformers.is_empty() {
        out.push_str("\n[transformers]\n");
        for t in &f.transformers {
            out.push_str(&format!(
                "{} {} {} {} r= {} x= {} loss= {}\n",
                t.id,
                t.from_bus,
                t.to_bus,
                fmt_phases(&t.phases),
                fmt_list(&t.r),
                fmt_list(&t.x),
                fmt_list(&t.no_load_loss)
            ));
        }
    }
    out.push_str("\n[loads]\n");
    for ld in &f.loads {
        out.push_str(&format!("{} {} {}\n", ld.id, ld.node.bus, ld.node.phase));
    }
    out.push_str("\n[pv]\n");
    for pv in &f.pv_units {
        let mut rec = format!(
            "{} {} {} {} {} {}",
            pv.id,
            pv.node.bus,
            pv.node.phase,
            fmt_f(pv.p_rated),
            fmt_f(pv.pf_min),
            if pv.candidate { 1 } else { 0 }
        );
        if let Some(c) = &pv.curve {
            rec.push_str(&format!(" qv= {}", fmt_list(&c.v_break())));
        }
        rec.push('\n');
        out.push_str(&rec);
    }
    out
}

pub fn parse_scenarios(text: &str, feeder: &Feeder) -> Result<Vec<Scenario>> {
    let mut out: Vec<Scenario> = Vec::new();
    let mut cur: Option<Scenario> = None;

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or_else(|| perr(ln, "malformed header"))?;
            let mut parts = header.split_whitespace();
            if parts.next() != Some("scenario") {
                return Err(perr(ln, "expected [scenario <id>]"));
            }
            let id = parts.next().ok_or_else(|| perr(ln, "scenario header needs an id"))?;
            if let Some(s) = cur.take() {
                out.push(s);
            }
            cur = Some(Scenario {
                id: id.to_string(),
                probability: f64::NAN,
                demand: Default::default(),
                mpp: Default::default(),
                feeder_head: Default::default(),
                weights: (1e3, 1e4),
            });
            continue;
        }
        let Some(s) = cur.as_mut() else {
            return Err(perr(ln, "data before any [scenario] header"));
        };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| perr(ln, "expected 'key = value'"))?;
        match key {
            "probability" => s.probability = parse_f64(ln, value)?,
            "weights" => {
                let toks: Vec<&str> = value.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(perr(ln, "weights expects 'wo wv'"));
                }
                s.weights = (parse_f64(ln, toks[0])?, parse_f64(ln, toks[1])?);
            }
            "demand" => {
                let f: Vec<&str> = value.split(',').map(str::trim).collect();
                if f.len() != 4 {
                    return Err(perr(ln, "demand expects 'bus,phase,P_kW,Q_kvar'"));
                }
                let ph = parse_phases(ln, f[1])?;
                if ph.len() != 1 {
                    return Err(perr(ln, "demand rows are per node-phase"));
                }
                let node = PhaseNodeId::new(f[0], ph[0]);
                let p = parse_f64(ln, f[2])?;
                let q = parse_f64(ln, f[3])?;
                let e = s.demand.entry(node).or_insert((0.0, 0.0));
                e.0 += p;
                e.1 += q;
            }
            "mpp" => {
                let f: Vec<&str> = value.split(',').map(str::trim).collect();
                if f.len() != 2 {
                    return Err(perr(ln, "mpp expects 'pv_id,P_kW'"));
                }
                *s.mpp.entry(f[0].to_string()).or_insert(0.0) += parse_f64(ln, f[1])?;
            }
            "feeder_head" => {
                let f: Vec<&str> = value.split(',').map(str::trim).collect();
                if f.len() != 3 {
                    return Err(perr(ln, "feeder_head expects 'phase,Vr_pu,Vim_pu'"));
                }
                let ph = parse_phases(ln, f[0])?;
                s.feeder_head.insert(ph[0], (parse_f64(ln, f[1])?, parse_f64(ln, f[2])?));
            }
            other => return Err(perr(ln, format!("unknown scenario key '{other}'"))),
        }
    }
    if let Some(s) = cur.take() {
        out.push(s);
    }
    for s in &out {
        if s.probability.is_nan() {
            return Err(FeederError::Validation(format!(
                "scenario {} is missing its probability",
                s.id
            )));
        }
    }
    super::validate_scenario_set(&out, feeder)?;
    Ok(out)
}

pub fn load_scenarios(path: impl AsRef<Path>, feeder: &Feeder) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| FeederError::Io { path: path.display().to_string(), source: e })?;
    parse_scenarios(&text, feeder)
}
