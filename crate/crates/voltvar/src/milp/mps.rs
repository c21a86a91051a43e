//! Free-format MPS dump/restore for debugging instances against external
//! solvers.  Covers the subset the planner emits: N/L/G/E rows, COLUMNS with
//! integrality markers, RHS, and LO/UP/BV/FR/MI/PL bounds.

use super::{MilpError, MipInstance, RowSense, VarId};

/// Serializes the instance; the objective is emitted as row `COST`.
pub fn to_mps(inst: &MipInstance) -> String {
    let mut out = String::new();
    out.push_str(&format!("NAME {}\n", if inst.name.is_empty() { "MIP" } else { &inst.name }));
    out.push_str("ROWS\n N COST\n");
    for r in inst.rows() {
        let s = match r.sense {
            RowSense::Le => 'L',
            RowSense::Eq => 'E',
            RowSense::Ge => 'G',
        };
        out.push_str(&format!(" {} {}\n", s, r.name));
    }

    // column-major entries
    let mut cols: Vec<Vec<(String, f64)>> = vec![Vec::new(); inst.num_vars()];
    for (j, v) in inst.vars().iter().enumerate() {
        if v.obj != 0.0 {
            cols[j].push(("COST".to_string(), v.obj));
        }
    }
    for r in inst.rows() {
        for &(vid, c) in &r.coeffs {
            cols[vid.0].push((r.name.clone(), c));
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, v) in inst.vars().iter().enumerate() {
        if v.is_binary != in_int {
            if v.is_binary {
                out.push_str(" M1 'MARKER' 'INTORG'\n");
            } else {
                out.push_str(" M2 'MARKER' 'INTEND'\n");
            }
            in_int = v.is_binary;
        }
        for (row, c) in &cols[j] {
            out.push_str(&format!(" {} {} {:?}\n", v.name, row, c));
        }
        if cols[j].is_empty() {
            // keep empty columns alive so restore preserves the column count
            out.push_str(&format!(" {} COST 0\n", v.name));
        }
    }
    if in_int {
        out.push_str(" M3 'MARKER' 'INTEND'\n");
    }

    out.push_str("RHS\n");
    for r in inst.rows() {
        if r.rhs != 0.0 {
            out.push_str(&format!(" RHS {} {:?}\n", r.name, r.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for v in inst.vars() {
        if v.is_binary {
            if (v.lower, v.upper) == (0.0, 1.0) {
                out.push_str(&format!(" BV BND {}\n", v.name));
            } else {
                out.push_str(&format!(" LO BND {} {:?}\n", v.name, v.lower));
                out.push_str(&format!(" UP BND {} {:?}\n", v.name, v.upper));
            }
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => out.push_str(&format!(" FR BND {}\n", v.name)),
            (true, false) => {
                // default lower bound in MPS is 0, but emit explicitly
                out.push_str(&format!(" LO BND {} {:?}\n", v.name, v.lower));
                out.push_str(&format!(" PL BND {}\n", v.name));
            }
            (false, true) => {
                out.push_str(&format!(" MI BND {}\n", v.name));
                out.push_str(&format!(" UP BND {} {:?}\n", v.name, v.upper));
            }
            (true, true) => {
                out.push_str(&format!(" LO BND {} {:?}\n", v.name, v.lower));
                out.push_str(&format!(" UP BND {} {:?}\n", v.name, v.upper));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

/// Parses the MPS subset emitted by [`to_mps`].
pub fn from_mps(text: &str) -> Result<MipInstance, MilpError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Done,
    }
    let mut inst = MipInstance::new("");
    let mut section = Section::None;
    let mut row_sense: Vec<(String, RowSense)> = Vec::new();
    let mut row_index: std::collections::HashMap<String, usize> = Default::default();
    let mut col_index: std::collections::HashMap<String, VarId> = Default::default();
    let mut col_entries: Vec<Vec<(usize, f64)>> = Vec::new(); // per var: (row, coeff); row usize::MAX = COST
    let mut rhs: Vec<f64> = Vec::new();
    let mut in_int = false;

    let err = |line: usize, msg: &str| MilpError::MpsParse { line, msg: msg.to_string() };

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            match toks[0].to_ascii_uppercase().as_str() {
                "NAME" => {
                    inst.name = toks.get(1).unwrap_or(&"").to_string();
                    continue;
                }
                "ROWS" => {
                    section = Section::Rows;
                    continue;
                }
                "COLUMNS" => {
                    section = Section::Columns;
                    continue;
                }
                "RHS" => {
                    section = Section::Rhs;
                    continue;
                }
                "RANGES" => return Err(err(ln + 1, "RANGES section not supported")),
                "BOUNDS" => {
                    section = Section::Bounds;
                    continue;
                }
                "ENDATA" => {
                    section = Section::Done;
                    continue;
                }
                _ => return Err(err(ln + 1, "unknown section header")),
            }
        }
        match section {
            Section::Rows => {
                let sense = match toks[0].to_ascii_uppercase().as_str() {
                    "N" => None,
                    "L" => Some(RowSense::Le),
                    "G" => Some(RowSense::Ge),
                    "E" => Some(RowSense::Eq),
                    _ => return Err(err(ln + 1, "bad row sense")),
                };
                let name = toks.get(1).ok_or_else(|| err(ln + 1, "missing row name"))?;
                if let Some(s) = sense {
                    row_index.insert(name.to_string(), row_sense.len());
                    row_sense.push((name.to_string(), s));
                    rhs.push(0.0);
                }
            }
            Section::Columns => {
                if toks.iter().any(|t| t.eq_ignore_ascii_case("'MARKER'")) {
                    if toks.iter().any(|t| t.eq_ignore_ascii_case("'INTORG'")) {
                        in_int = true;
                    } else if toks.iter().any(|t| t.eq_ignore_ascii_case("'INTEND'")) {
                        in_int = false;
                    }
                    continue;
                }
                let name = toks[0];
                let var = *col_index.entry(name.to_string()).or_insert_with(|| {
                    col_entries.push(Vec::new());
                    if in_int {
                        inst.add_binary(name)
                    } else {
                        inst.add_var(name, 0.0, f64::INFINITY)
                    }
                });
                let mut k = 1;
                while k + 1 < toks.len() + 1 && k < toks.len() {
                    let row = toks[k];
                    let val: f64 = toks
                        .get(k + 1)
                        .ok_or_else(|| err(ln + 1, "missing coefficient"))?
                        .parse()
                        .map_err(|_| err(ln + 1, "bad coefficient"))?;
                    if row == "COST" {
                        if val != 0.0 {
                            inst.add_objective(var, val);
                        }
                    } else {
                        let ri = *row_index
                            .get(row)
                            .ok_or_else(|| err(ln + 1, "unknown row in COLUMNS"))?;
                        col_entries[var.0].push((ri, val));
                    }
                    k += 2;
                }
            }
            Section::Rhs => {
                let mut k = 1;
                while k < toks.len() {
                    let row = toks[k];
                    let val: f64 = toks
                        .get(k + 1)
                        .ok_or_else(|| err(ln + 1, "missing rhs value"))?
                        .parse()
                        .map_err(|_| err(ln + 1, "bad rhs value"))?;
                    if row != "COST" {
                        let ri = *row_index
                            .get(row)
                            .ok_or_else(|| err(ln + 1, "unknown row in RHS"))?;
                        rhs[ri] = val;
                    }
                    k += 2;
                }
            }
            Section::Bounds => {
                let kind = toks[0].to_ascii_uppercase();
                let name = toks.get(2).ok_or_else(|| err(ln + 1, "missing column in BOUNDS"))?;
                let var = *col_index
                    .get(*name)
                    .ok_or_else(|| err(ln + 1, "unknown column in BOUNDS"))?;
                let v = inst.var(var).clone();
                let val = || -> Result<f64, MilpError> {
                    toks.get(3)
                        .ok_or_else(|| err(ln + 1, "missing bound value"))?
                        .parse()
                        .map_err(|_| err(ln + 1, "bad bound value"))
                };
                match kind.as_str() {
                    "LO" => inst.set_bounds(var, val()?, v.upper),
                    "UP" => inst.set_bounds(var, v.lower, val()?),
                    "FX" => {
                        let x = val()?;
                        inst.set_bounds(var, x, x)
                    }
                    "FR" => inst.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY),
                    "MI" => inst.set_bounds(var, f64::NEG_INFINITY, v.upper),
                    "PL" => inst.set_bounds(var, v.lower, f64::INFINITY),
                    "BV" => inst.set_bounds(var, 0.0, 1.0),
                    _ => return Err(err(ln + 1, "unsupported bound kind")),
                }
            }
            Section::None | Section::Done => {
                return Err(err(ln + 1, "data outside any section"))
            }
        }
    }

    for (ri, (name, sense)) in row_sense.iter().enumerate() {
        let coeffs: Vec<(VarId, f64)> = col_entries
            .iter()
            .enumerate()
            .flat_map(|(j, entries)| {
                entries.iter().filter(|&&(r, _)| r == ri).map(move |&(_, c)| (VarId(j), c))
            })
            .collect();
        inst.add_named_row(name.clone(), coeffs, *sense, rhs[ri]);
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve_lp, solve_mip, LpStatus, MipConfig};

    fn sample() -> MipInstance {
        let mut inst = MipInstance::new("sample");
        let x = inst.add_var("x", 0.0, 4.0);
        let y = inst.add_var("y", -2.0, f64::INFINITY);
        let b = inst.add_binary("b");
        inst.set_objective(x, 1.5);
        inst.set_objective(y, -1.0);
        inst.set_objective(b, 2.0);
        inst.add_named_row("c1", vec![(x, 1.0), (y, 2.0)], RowSense::Le, 6.0);
        inst.add_named_row("c2", vec![(y, 1.0), (b, -3.0)], RowSense::Ge, -1.5);
        inst.add_named_row("c3", vec![(x, 1.0), (b, 1.0)], RowSense::Eq, 2.0);
        inst
    }

    #[test]
    fn round_trip_preserves_solution() {
        let inst = sample();
        let text = to_mps(&inst);
        let back = from_mps(&text).unwrap();
        assert_eq!(back.num_vars(), inst.num_vars());
        assert_eq!(back.num_rows(), inst.num_rows());
        let a = solve_mip(&inst, &MipConfig::default()).unwrap();
        let b = solve_mip(&back, &MipConfig::default()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
        // serialize again: stable fixed point
        assert_eq!(text, to_mps(&back));
    }

    #[test]
    fn lp_status_survives_round_trip() {
        let mut inst = MipInstance::new("inf");
        let x = inst.add_var("x", 0.0, 1.0);
        inst.add_named_row("lo", vec![(x, 1.0)], RowSense::Ge, 2.0);
        let back = from_mps(&to_mps(&inst)).unwrap();
        assert_eq!(solve_lp(&back).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn rejects_unknown_rows() {
        let text = "NAME t\nROWS\n N COST\nCOLUMNS\n x nosuch 1.0\nENDATA\n";
        assert!(from_mps(text).is_err());
    }
}
