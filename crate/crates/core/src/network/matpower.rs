//! Reader and canonical writer for MATPOWER-style case text.
//!
//! Only the numeric columns this crate uses are interpreted:
//!
//! | table          | columns read                                                   |
//! |----------------|----------------------------------------------------------------|
//! | `mpc.baseMVA`  | scalar                                                         |
//! | `mpc.bus`      | bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin         |
//! | `mpc.gen`      | bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin (rest ignored)    |
//! | `mpc.branch`   | fbus tbus r x b rateA rateB rateC ratio angle status (rest ign.)|
//! | `mpc.gencost`  | polynomial rows only: 2 startup shutdown n c(n-1) ... c0, n<=3 |
//!
//! Powers are converted to per-unit on `baseMVA` and angles to radians.
//! Cell arrays (`mpc.bus_name = { ... };`) and other assignments are skipped.

use std::fmt::Write as _;

use super::case::{Branch, Bus, BusType, Generator, NetworkCase, QuadraticCost};
use super::NetworkError;

struct Row {
    line: usize,
    values: Vec<f64>,
}

struct Table {
    line: usize,
    rows: Vec<Row>,
}

#[derive(Default)]
struct RawCase {
    base_mva: Option<(usize, f64)>,
    bus: Option<Table>,
    gen: Option<Table>,
    branch: Option<Table>,
    gencost: Option<Table>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Parse { line, message: message.into() }
}

fn parse_number(token: &str, line: usize) -> Result<f64, NetworkError> {
    let value = match token {
        "Inf" | "inf" => f64::INFINITY,
        "-Inf" | "-inf" => f64::NEG_INFINITY,
        _ => token
            .parse::<f64>()
            .map_err(|_| parse_err(line, format!("invalid number {token:?}")))?,
    };
    Ok(value)
}

/// Splits the text after `mpc.name =` into the table name and the remainder.
fn assignment(stmt: &str) -> Option<(&str, &str)> {
    let rest = stmt.trim_start().strip_prefix("mpc.")?;
    let eq = rest.find('=')?;
    Some((rest[..eq].trim(), rest[eq + 1..].trim()))
}

fn push_rows(chunk: &str, line: usize, rows: &mut Vec<Row>) -> Result<(), NetworkError> {
    for piece in chunk.split(';') {
        let tokens: Vec<&str> = piece
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        let values = tokens
            .iter()
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { line, values });
    }
    Ok(())
}

fn scan(text: &str) -> Result<RawCase, NetworkError> {
    let mut raw = RawCase::default();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    while let Some((lineno, line)) = lines.next() {
        let stmt = strip_comment(line).trim();
        if stmt.is_empty() {
            continue;
        }
        let Some((name, rhs)) = assignment(stmt) else {
            continue;
        };

        if let Some(body) = rhs.strip_prefix('{') {
            // cell array: skip to the closing brace
            if !body.contains('}') {
                let mut closed = false;
                for (_, l) in lines.by_ref() {
                    if strip_comment(l).contains('}') {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(parse_err(lineno, format!("unterminated cell array mpc.{name}")));
                }
            }
            continue;
        }

        if let Some(body) = rhs.strip_prefix('[') {
            let mut rows = Vec::new();
            let mut closed = false;
            if let Some(end) = body.find(']') {
                push_rows(&body[..end], lineno, &mut rows)?;
                closed = true;
            } else {
                push_rows(body, lineno, &mut rows)?;
                for (l_no, l) in lines.by_ref() {
                    let content = strip_comment(l);
                    if let Some(end) = content.find(']') {
                        push_rows(&content[..end], l_no, &mut rows)?;
                        closed = true;
                        break;
                    }
                    push_rows(content, l_no, &mut rows)?;
                }
            }
            if !closed {
                return Err(parse_err(lineno, format!("unterminated matrix mpc.{name}")));
            }
            let table = Table { line: lineno, rows };
            let slot = match name {
                "bus" => &mut raw.bus,
                "gen" => &mut raw.gen,
                "branch" => &mut raw.branch,
                "gencost" => &mut raw.gencost,
                _ => continue,
            };
            if slot.is_some() {
                return Err(parse_err(lineno, format!("duplicate table mpc.{name}")));
            }
            *slot = Some(table);
            continue;
        }

        if name == "baseMVA" {
            let value = rhs.trim_end_matches(';').trim();
            raw.base_mva = Some((lineno, parse_number(value, lineno)?));
        }
    }
    Ok(raw)
}

fn require(row: &Row, min: usize, table: &str) -> Result<(), NetworkError> {
    if row.values.len() < min {
        return Err(parse_err(
            row.line,
            format!("mpc.{table} row has {} columns, expected at least {min}", row.values.len()),
        ));
    }
    Ok(())
}

fn integral<T: TryFrom<u64>>(value: f64, line: usize, what: &str) -> Result<T, NetworkError> {
    if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
        return Err(parse_err(line, format!("{what} must be a non-negative integer, got {value}")));
    }
    T::try_from(value as u64).map_err(|_| parse_err(line, format!("{what} {value} out of range")))
}

/// Parses MATPOWER-style case text into a validated [`NetworkCase`].
pub fn parse_matpower_case(text: &str) -> Result<NetworkCase, NetworkError> {
    let raw = scan(text)?;
    let end = text.lines().count().max(1);

    let (_, base_mva) = raw.base_mva.ok_or_else(|| parse_err(end, "missing mpc.baseMVA"))?;
    let bus_t = raw.bus.ok_or_else(|| parse_err(end, "missing mpc.bus table"))?;
    let gen_t = raw.gen.ok_or_else(|| parse_err(end, "missing mpc.gen table"))?;
    let branch_t = raw.branch.ok_or_else(|| parse_err(end, "missing mpc.branch table"))?;
    let cost_t = raw.gencost.ok_or_else(|| parse_err(end, "missing mpc.gencost table"))?;
    if !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(NetworkError::Validation(format!("base MVA {base_mva} must be positive")));
    }

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for row in &bus_t.rows {
        require(row, 13, "bus")?;
        let v = &row.values;
        let code: u8 = integral(v[1], row.line, "bus type")?;
        let kind = BusType::from_code(code).ok_or_else(|| parse_err(row.line, format!("unknown bus type {code}")))?;
        buses.push(Bus {
            id: integral(v[0], row.line, "bus id")?,
            kind,
            pd: v[2] / base_mva,
            qd: v[3] / base_mva,
            gs: v[4] / base_mva,
            bs: v[5] / base_mva,
            area: integral(v[6], row.line, "area")?,
            vm: v[7],
            va: v[8].to_radians(),
            base_kv: v[9],
            zone: integral(v[10], row.line, "zone")?,
            vmax: v[11],
            vmin: v[12],
        });
    }

    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(parse_err(
            cost_t.line,
            format!("mpc.gencost has {} rows for {} generators", cost_t.rows.len(), gen_t.rows.len()),
        ));
    }

    let mut generators = Vec::with_capacity(gen_t.rows.len());
    for (row, cost_row) in gen_t.rows.iter().zip(&cost_t.rows) {
        require(row, 10, "gen")?;
        require(cost_row, 4, "gencost")?;
        let v = &row.values;
        let c = &cost_row.values;
        if c[0] != 2.0 {
            return Err(parse_err(cost_row.line, "only polynomial (model 2) costs are supported"));
        }
        let n: usize = integral(c[3], cost_row.line, "cost coefficient count")?;
        if n > 3 {
            return Err(parse_err(cost_row.line, format!("polynomial degree {} exceeds 2", n.saturating_sub(1))));
        }
        require(cost_row, 4 + n, "gencost")?;
        let coeffs = &c[4..4 + n];
        let mut padded = [0.0; 3];
        padded[3 - n..].copy_from_slice(coeffs);
        generators.push(Generator {
            bus: integral(v[0], row.line, "generator bus")?,
            pg: v[1] / base_mva,
            qg: v[2] / base_mva,
            qmax: v[3] / base_mva,
            qmin: v[4] / base_mva,
            vg: v[5],
            mbase: v[6],
            in_service: v[7] > 0.0,
            pmax: v[8] / base_mva,
            pmin: v[9] / base_mva,
            cost: QuadraticCost {
                startup: c[1],
                shutdown: c[2],
                c2: padded[0],
                c1: padded[1],
                c0: padded[2],
            },
        });
    }

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    for row in &branch_t.rows {
        require(row, 11, "branch")?;
        let v = &row.values;
        branches.push(Branch {
            from: integral(v[0], row.line, "from bus")?,
            to: integral(v[1], row.line, "to bus")?,
            r: v[2],
            x: v[3],
            b: v[4],
            rate_a: v[5],
            ratio: v[8],
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
        });
    }

    let case = NetworkCase { base_mva, buses, branches, generators };
    case.validate()?;
    Ok(case)
}

/// Finds a file value `m` with `decode(m) == value` bit for bit, starting
/// from `encode(value)` and walking a few ulps either way.
fn invertible(value: f64, encode: impl Fn(f64) -> f64, decode: impl Fn(f64) -> f64) -> f64 {
    let start = encode(value);
    if decode(start) == value || !start.is_finite() {
        return start;
    }
    let (mut up, mut down) = (start, start);
    for _ in 0..64 {
        up = next_toward(up, f64::INFINITY);
        if decode(up) == value {
            return up;
        }
        down = next_toward(down, f64::NEG_INFINITY);
        if decode(down) == value {
            return down;
        }
    }
    start
}

fn next_toward(x: f64, dir: f64) -> f64 {
    if x == dir {
        return x;
    }
    if x == 0.0 {
        let tiny = f64::from_bits(1);
        return if dir > 0.0 { tiny } else { -tiny };
    }
    let bits = x.to_bits();
    let away = (dir > x) == (x > 0.0);
    f64::from_bits(if away { bits + 1 } else { bits - 1 })
}

fn pu(value: f64, base: f64) -> f64 {
    invertible(value, |v| v * base, |m| m / base)
}

fn deg(value: f64) -> f64 {
    invertible(value, f64::to_degrees, f64::to_radians)
}

fn flag(on: bool) -> u8 {
    u8::from(on)
}

/// Writes a case in the canonical layout read by [`parse_matpower_case`].
/// `parse_matpower_case(&print_matpower_case(c)) == c` holds field for field.
pub fn print_matpower_case(case: &NetworkCase) -> String {
    let base = case.base_mva;
    let mut out = String::new();
    out.push_str("function mpc = case\n");
    out.push_str("mpc.version = '2';\n");
    let _ = writeln!(out, "mpc.baseMVA = {base};");

    out.push_str("\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.id,
            b.kind.code(),
            pu(b.pd, base),
            pu(b.qd, base),
            pu(b.gs, base),
            pu(b.bs, base),
            b.area,
            b.vm,
            deg(b.va),
            b.base_kv,
            b.zone,
            b.vmax,
            b.vmin
        );
    }
    out.push_str("];\n");

    out.push_str("\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus,
            pu(g.pg, base),
            pu(g.qg, base),
            pu(g.qmax, base),
            pu(g.qmin, base),
            g.vg,
            g.mbase,
            flag(g.in_service),
            pu(g.pmax, base),
            pu(g.pmin, base)
        );
    }
    out.push_str("];\n");

    out.push_str("\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\nmpc.branch = [\n");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t{};",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b,
            br.rate_a,
            br.ratio,
            deg(br.shift),
            flag(br.in_service)
        );
    }
    out.push_str("];\n");

    out.push_str("\n%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\nmpc.gencost = [\n");
    for g in &case.generators {
        let c = &g.cost;
        let _ = writeln!(out, "\t2\t{}\t{}\t3\t{}\t{}\t{};", c.startup, c.shutdown, c.c2, c.c1, c.c0);
    }
    out.push_str("];\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	0	1	1.1	0.9;
	2	1	50	20	0	0	1	1	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1;
];
mpc.gencost = [
	2	0	0	3	0.01	10	0;
];
";

    #[test]
    fn parses_minimal_two_bus_case() {
        let case = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.generators.len(), 1);
        assert_eq!(case.buses[1].pd, 0.5);
        assert_eq!(case.generators[0].cost.c1, 10.0);
    }

    #[test]
    fn empty_text_is_a_parse_error() {
        assert!(matches!(parse_matpower_case(""), Err(NetworkError::Parse { .. })));
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let bad = TWO_BUS.replace("2	1	50	20", "2	1	5x0	20");
        match parse_matpower_case(&bad) {
            Err(NetworkError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let short = TWO_BUS.replace("0.01	0.1	0	0	0	0	0	0	1;", "0.01;");
        match parse_matpower_case(&short) {
            Err(NetworkError::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_branch_and_missing_slack_fail_validation() {
        let dangling = TWO_BUS.replace("1	2	0.01", "1	7	0.01");
        assert!(matches!(parse_matpower_case(&dangling), Err(NetworkError::Validation(_))));
        let no_slack = TWO_BUS.replace("1	3	0	0", "1	2	0	0");
        assert!(matches!(parse_matpower_case(&no_slack), Err(NetworkError::Validation(_))));
    }

    #[test]
    fn linear_cost_rows_are_padded() {
        let lin = TWO_BUS.replace("2	0	0	3	0.01	10	0;", "2	0	0	2	10	5;");
        let case = parse_matpower_case(&lin).unwrap();
        assert_eq!(case.generators[0].cost.c2, 0.0);
        assert_eq!(case.generators[0].cost.c1, 10.0);
        assert_eq!(case.generators[0].cost.c0, 5.0);
    }

    #[test]
    fn printer_round_trips_awkward_per_unit_values() {
        let mut case = parse_matpower_case(TWO_BUS).unwrap();
        case.buses[1].pd = 0.217_000_000_000_000_03;
        case.buses[1].va = -0.1802;
        let back = parse_matpower_case(&print_matpower_case(&case)).unwrap();
        assert_eq!(back, case);
    }
}
