//! Import of MATPOWER case files restricted to numeric matrix literals.

use super::{Branch, Bus, BusKind, Generator, GridCase};
use crate::error::{Error, Result};

/// Strips `%` comments from every line.
fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Locates `mpc.<name> = ` and returns the text after `=`.
fn assignment<'a>(text: &'a str, name: &str) -> Result<&'a str> {
    let key = format!("mpc.{name}");
    let mut start = 0;
    while let Some(pos) = text[start..].find(&key) {
        let after = &text[start + pos + key.len()..];
        let trimmed = after.trim_start();
        if let Some(rest) = trimmed.strip_prefix('=') {
            return Ok(rest);
        }
        start += pos + key.len();
    }
    Err(Error::Matpower(format!("missing assignment to mpc.{name}")))
}

fn parse_number(tok: &str) -> Result<f64> {
    match tok {
        "Inf" | "inf" | "+Inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse::<f64>()
            .map_err(|_| Error::Matpower(format!("non-numeric matrix entry '{tok}'"))),
    }
}

fn scalar(text: &str, name: &str) -> Result<f64> {
    let rest = assignment(text, name)?;
    let end = rest
        .find([';', '\n'])
        .ok_or_else(|| Error::Matpower(format!("unterminated mpc.{name}")))?;
    parse_number(rest[..end].trim())
}

fn matrix(text: &str, name: &str) -> Result<Vec<Vec<f64>>> {
    let rest = assignment(text, name)?.trim_start();
    let body = rest
        .strip_prefix('[')
        .ok_or_else(|| Error::Matpower(format!("mpc.{name} is not a matrix literal")))?;
    let end = body
        .find(']')
        .ok_or_else(|| Error::Matpower(format!("mpc.{name}: missing closing bracket")))?;
    let body = &body[..end];
    let mut rows = Vec::new();
    for row in body.split([';', '\n']) {
        let toks: Vec<&str> = row
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if toks.is_empty() {
            continue;
        }
        rows.push(toks.into_iter().map(parse_number).collect::<Result<Vec<f64>>>()?);
    }
    if let Some(first) = rows.first() {
        let w = first.len();
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::Matpower(format!("mpc.{name}: ragged rows")));
        }
    }
    Ok(rows)
}

fn need(row: &[f64], cols: usize, what: &str) -> Result<()> {
    if row.len() < cols {
        return Err(Error::Matpower(format!("{what} row has {} columns, need {cols}", row.len())));
    }
    Ok(())
}

fn as_id(v: f64, what: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Matpower(format!("{what} id {v} is not an integer")));
    }
    Ok(v as i64)
}

/// Converts MATPOWER case text into a validated [`GridCase`].
pub fn import_matpower_m(text: &str) -> Result<GridCase> {
    let text = strip_comments(text);
    let base_mva = scalar(&text, "baseMVA")?;
    let bus_rows = matrix(&text, "bus")?;
    let gen_rows = matrix(&text, "gen")?;
    let branch_rows = matrix(&text, "branch")?;
    let cost_rows = matrix(&text, "gencost")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        need(row, 13, "bus")?;
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Ref,
            other => return Err(Error::Matpower(format!("unsupported bus type {other}"))),
        };
        buses.push(Bus {
            id: as_id(row[0], "bus")?,
            kind,
            pd: row[2],
            qd: row[3],
            gs: row[4],
            bs: row[5],
            vm0: row[7],
            va0: row[8],
            vm_max: row[11],
            vm_min: row[12],
        });
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(Error::Matpower(format!(
            "gencost has {} rows for {} generators",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut gens = Vec::with_capacity(gen_rows.len());
    for (row, cost) in gen_rows.iter().zip(&cost_rows) {
        need(row, 10, "gen")?;
        need(cost, 4, "gencost")?;
        if cost[0] != 2.0 {
            return Err(Error::Matpower(format!(
                "unsupported gencost model {} (only polynomial model 2)",
                cost[0]
            )));
        }
        let n = cost[3] as usize;
        if n == 0 || cost.len() < 4 + n {
            return Err(Error::Matpower(format!("gencost declares {n} coefficients")));
        }
        gens.push(Generator {
            bus: as_id(row[0], "gen bus")?,
            pg0: row[1],
            qg0: row[2],
            qmax: row[3],
            qmin: row[4],
            status: row[7] > 0.0,
            pmax: row[8],
            pmin: row[9],
            cost: cost[4..4 + n].to_vec(),
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        need(row, 11, "branch")?;
        branches.push(Branch {
            from: as_id(row[0], "branch from")?,
            to: as_id(row[1], "branch to")?,
            r: row[2],
            x: row[3],
            b: row[4],
            rate_a: row[5],
            tap: row[8],
            shift: row[9],
            status: row[10] > 0.0,
        });
    }

    let case = GridCase { base_mva, buses, gens, branches };
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	90	30	0	0	1	1	0	345	1	1.1	0.9; % trailing
];
mpc.gen = [
	1	72.3	27.03	300	-300	1.04	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.0576	0	250	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	1500	0	3	0.11	5	150;
];
";

    #[test]
    fn parses_tiny_case() {
        let case = import_matpower_m(TINY).unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.buses[1].pd, 90.0);
        assert_eq!(case.buses[1].vm_min, 0.9);
        assert_eq!(case.gens[0].pmin, 10.0);
        assert_eq!(case.gens[0].cost, vec![0.11, 5.0, 150.0]);
        assert_eq!(case.branches[0].rate_a, 250.0);
    }

    #[test]
    fn piecewise_linear_cost_rejected() {
        let text = TINY.replace("2	1500	0	3	0.11", "1	1500	0	3	0.11");
        let err = import_matpower_m(&text).unwrap_err();
        assert!(err.to_string().contains("model 1"), "{err}");
    }

    #[test]
    fn non_numeric_entry_rejected() {
        let text = TINY.replace("72.3", "abc");
        assert!(matches!(import_matpower_m(&text), Err(Error::Matpower(_))));
    }

    #[test]
    fn missing_bracket_rejected() {
        let text = TINY.replace("0	-360	360;\n];", "0	-360	360;\n");
        let text = text.replace("mpc.gencost = [", "mpc.gencost = ");
        assert!(import_matpower_m(&text).is_err());
    }
}
