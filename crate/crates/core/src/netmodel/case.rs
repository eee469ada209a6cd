//! Plain-text MATPOWER case subset: `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and
//! `mpc.branch`. Other `mpc.*` assignments are read and ignored. The grammar
//! is documented in `docs/case-format.md`.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Branch, Bus, BusKind, NetworkModel};
use crate::error::{Error, Result};

const BUS_COLUMNS: usize = 13;
const GEN_COLUMNS: usize = 8;
const BRANCH_COLUMNS: usize = 11;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str,
    Dot,
    Equals,
    Semi,
    Comma,
    Newline,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let push = |tokens: &mut Vec<Token>, tok| {
            tokens.push(Token {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        match c {
            '\n' => {
                push(&mut tokens, Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                // `...` line continuation
                if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') {
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                    }
                    if i < chars.len() {
                        i += 1;
                        line += 1;
                        col = 1;
                    }
                    continue;
                }
                push(&mut tokens, Tok::Dot);
            }
            '=' => push(&mut tokens, Tok::Equals),
            ';' => push(&mut tokens, Tok::Semi),
            ',' => push(&mut tokens, Tok::Comma),
            '[' => push(&mut tokens, Tok::LBracket),
            ']' => push(&mut tokens, Tok::RBracket),
            '{' => push(&mut tokens, Tok::LBrace),
            '}' => push(&mut tokens, Tok::RBrace),
            '\'' | '"' => {
                let quote = c;
                let mut j = i + 1;
                while j < chars.len() && chars[j] != quote && chars[j] != '\n' {
                    j += 1;
                }
                if j >= chars.len() || chars[j] != quote {
                    return Err(syntax(line, col, "unterminated string"));
                }
                push(&mut tokens, Tok::Str);
                col += j + 1 - i;
                i = j + 1;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                push(&mut tokens, Tok::Ident(word));
                col += j - i;
                i = j;
                continue;
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let mut j = i;
                if chars[j] == '-' || chars[j] == '+' {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_alphabetic() {
                    let k0 = j;
                    while j < chars.len() && chars[j].is_ascii_alphabetic() {
                        j += 1;
                    }
                    let word: String = chars[k0..j].iter().collect();
                    let value = match word.as_str() {
                        "Inf" | "inf" => f64::INFINITY,
                        "NaN" | "nan" => f64::NAN,
                        _ => return Err(syntax(line, col, format!("malformed number '{c}{word}'"))),
                    };
                    let value = if c == '-' { -value } else { value };
                    push(&mut tokens, Tok::Number(value));
                } else {
                    while j < chars.len() {
                        let d = chars[j];
                        let exponent_sign = (d == '-' || d == '+')
                            && matches!(chars.get(j - 1), Some('e') | Some('E'));
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exponent_sign {
                            j += 1;
                        } else {
                            break;
                        }
                    }
                    let literal: String = chars[i..j].iter().collect();
                    let value: f64 = literal
                        .parse()
                        .map_err(|_| syntax(line, col, format!("malformed number '{literal}'")))?;
                    push(&mut tokens, Tok::Number(value));
                }
                col += j - i;
                i = j;
                continue;
            }
            other => return Err(syntax(line, col, format!("unexpected character '{other}'"))),
        }
        i += 1;
        col += 1;
    }
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(tokens)
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.column, format!("expected {what}")))
        }
    }

    fn skip_line(&mut self) {
        while !matches!(self.peek().tok, Tok::Newline | Tok::Eof) {
            self.pos += 1;
        }
    }

    fn assignments(&mut self) -> Result<Vec<(String, Value, Token)>> {
        let mut out = Vec::new();
        loop {
            let t = self.next();
            match &t.tok {
                Tok::Eof => return Ok(out),
                Tok::Newline | Tok::Semi | Tok::Comma => continue,
                Tok::Ident(w) if w == "function" || w == "end" => self.skip_line(),
                Tok::Ident(w) if w == "mpc" => {
                    self.expect(Tok::Dot, "'.' after 'mpc'")?;
                    let field_tok = self.next();
                    let Tok::Ident(field) = field_tok.tok.clone() else {
                        return Err(syntax(field_tok.line, field_tok.column, "expected field name"));
                    };
                    self.expect(Tok::Equals, "'='")?;
                    let value = self.value()?;
                    out.push((field, value, field_tok));
                }
                _ => return Err(syntax(t.line, t.column, "expected an 'mpc.<field> = ...' assignment")),
            }
        }
    }

    fn value(&mut self) -> Result<Value> {
        let t = self.next();
        match t.tok {
            Tok::Number(v) => Ok(Value::Scalar(v)),
            Tok::Str => Ok(Value::Other),
            Tok::LBracket => self.matrix().map(Value::Matrix),
            Tok::LBrace => {
                let mut depth = 1;
                while depth > 0 {
                    let t = self.next();
                    match t.tok {
                        Tok::LBrace => depth += 1,
                        Tok::RBrace => depth -= 1,
                        Tok::Eof => return Err(syntax(t.line, t.column, "unterminated cell array")),
                        _ => {}
                    }
                }
                Ok(Value::Other)
            }
            _ => Err(syntax(t.line, t.column, "expected a number, string or matrix")),
        }
    }

    fn matrix(&mut self) -> Result<Vec<Vec<f64>>> {
        fn finish_row(
            row: &mut Vec<f64>,
            start: Option<(usize, usize)>,
            rows: &mut Vec<Vec<f64>>,
        ) -> Result<()> {
            if row.is_empty() {
                return Ok(());
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    let (l, c) = start.unwrap_or((0, 0));
                    return Err(syntax(
                        l,
                        c,
                        format!("row has {} columns, expected {}", row.len(), first.len()),
                    ));
                }
            }
            rows.push(std::mem::take(row));
            Ok(())
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut row: Vec<f64> = Vec::new();
        let mut row_start: Option<(usize, usize)> = None;
        loop {
            let t = self.next();
            match t.tok {
                Tok::Number(v) => {
                    if row.is_empty() {
                        row_start = Some((t.line, t.column));
                    }
                    row.push(v);
                }
                Tok::Comma => {}
                Tok::Semi | Tok::Newline => finish_row(&mut row, row_start, &mut rows)?,
                Tok::RBracket => {
                    finish_row(&mut row, row_start, &mut rows)?;
                    return Ok(rows);
                }
                Tok::Eof => return Err(syntax(t.line, t.column, "unterminated matrix")),
                _ => return Err(syntax(t.line, t.column, "unexpected token inside matrix")),
            }
        }
    }
}

fn as_id(value: f64, what: &str) -> Result<u64> {
    if value.is_finite() && value >= 1.0 && value.fract() == 0.0 {
        Ok(value as u64)
    } else {
        Err(Error::Case(format!("{what} must be a positive integer, got {value}")))
    }
}

/// Parses case text into a validated [`NetworkModel`].
///
/// Bus numbers are densified to `1..N` in table order; the original numbers
/// stay available as [`Bus::external_id`].
pub fn parse_case(text: &str) -> Result<NetworkModel> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut base_mva = None;
    let mut tables: HashMap<String, (Vec<Vec<f64>>, Token)> = HashMap::new();
    for (field, value, at) in parser.assignments()? {
        match (field.as_str(), value) {
            ("baseMVA", Value::Scalar(v)) => base_mva = Some(v),
            ("baseMVA", _) => return Err(syntax(at.line, at.column, "baseMVA must be a scalar")),
            ("bus" | "gen" | "branch", Value::Matrix(rows)) => {
                tables.insert(field, (rows, at));
            }
            ("bus" | "gen" | "branch", _) => {
                return Err(syntax(at.line, at.column, format!("mpc.{field} must be a matrix")))
            }
            _ => {}
        }
    }
    let base_mva = base_mva.ok_or_else(|| Error::Case("missing mpc.baseMVA".into()))?;
    let (bus_rows, bus_at) = tables
        .remove("bus")
        .ok_or_else(|| Error::Case("missing mpc.bus".into()))?;
    let (branch_rows, branch_at) = tables
        .remove("branch")
        .ok_or_else(|| Error::Case("missing mpc.branch".into()))?;
    let gen_rows = tables.remove("gen");

    let check_width = |rows: &[Vec<f64>], at: &Token, min: usize, name: &str| {
        match rows.first() {
            Some(r) if r.len() < min => Err(syntax(
                at.line,
                at.column,
                format!("mpc.{name} needs at least {min} columns, found {}", r.len()),
            )),
            _ => Ok(()),
        }
    };
    check_width(&bus_rows, &bus_at, BUS_COLUMNS, "bus")?;
    check_width(&branch_rows, &branch_at, BRANCH_COLUMNS, "branch")?;
    if let Some((rows, at)) = &gen_rows {
        check_width(rows, at, GEN_COLUMNS, "gen")?;
    }

    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut declared_pv = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        let ext = as_id(row[0], "bus number")?;
        if index.insert(ext, buses.len()).is_some() {
            return Err(Error::Case(format!("duplicate bus id {ext}")));
        }
        let kind = match row[1] as i64 {
            1 => BusKind::Load,
            2 => BusKind::Generator,
            3 => BusKind::Reference,
            4 => return Err(Error::Case(format!("bus {ext}: isolated buses (type 4) are not supported"))),
            t => return Err(Error::Case(format!("bus {ext}: unknown bus type {t}"))),
        };
        declared_pv.push(kind == BusKind::Generator);
        buses.push(Bus {
            id: buses.len() + 1,
            external_id: ext,
            kind,
            pd: row[2],
            qd: row[3],
            pg: 0.0,
            qg: 0.0,
            gs: row[4],
            bs: row[5],
            v_setpoint: row[7],
        });
    }

    let mut has_gen = vec![false; buses.len()];
    if let Some((rows, _)) = &gen_rows {
        for (k, row) in rows.iter().enumerate() {
            let ext = as_id(row[0], "generator bus")?;
            let &i = index.get(&ext).ok_or_else(|| Error::UnknownBus {
                bus: ext,
                context: format!("generator row {}", k + 1),
            })?;
            if row[7] <= 0.0 {
                continue;
            }
            has_gen[i] = true;
            buses[i].pg += row[1];
            buses[i].qg += row[2];
            buses[i].v_setpoint = row[5];
        }
    }
    for (i, bus) in buses.iter_mut().enumerate() {
        if declared_pv[i] && !has_gen[i] {
            bus.kind = BusKind::Load;
        }
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (k, row) in branch_rows.iter().enumerate() {
        let mut ends = [0usize; 2];
        for (slot, &raw) in ends.iter_mut().zip(&row[0..2]) {
            let ext = as_id(raw, "branch end")?;
            *slot = index.get(&ext).map(|&i| i + 1).ok_or_else(|| Error::UnknownBus {
                bus: ext,
                context: format!("branch {}", k + 1),
            })?;
        }
        if row[9] != 0.0 {
            return Err(Error::Case(format!(
                "branch {}: phase-shifting transformers are not supported",
                k + 1
            )));
        }
        branches.push(Branch {
            id: k + 1,
            from_bus: ends[0],
            to_bus: ends[1],
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            in_service: row[10] != 0.0,
        });
    }

    NetworkModel::new(base_mva, buses, branches)
}

/// Writes a model back out in the supported case grammar.
///
/// Numbers use Rust's shortest round-trip formatting, so
/// `parse_case(&write_case(m)) == m` holds exactly.
pub fn write_case(model: &NetworkModel) -> String {
    let mut s = String::new();
    let ext = |i: usize| model.buses()[i - 1].external_id;
    s.push_str("function mpc = case_export\n");
    s.push_str("mpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {:?};", model.base_mva());
    s.push_str("\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in model.buses() {
        let code = match b.kind {
            BusKind::Load => 1,
            BusKind::Generator => 2,
            BusKind::Reference => 3,
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t1\t{:?}\t0\t0\t1\t1.1\t0.9;",
            b.external_id, code, b.pd, b.qd, b.gs, b.bs, b.v_setpoint
        );
    }
    s.push_str("];\n\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for b in model.buses() {
        if b.kind != BusKind::Load || b.pg != 0.0 || b.qg != 0.0 {
            let _ = writeln!(
                s,
                "\t{}\t{:?}\t{:?}\t0\t0\t{:?}\t100\t1\t0\t0;",
                b.external_id, b.pg, b.qg, b.v_setpoint
            );
        }
    }
    s.push_str("];\n\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in model.branches() {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t0\t0\t0\t{:?}\t0\t{}\t-360\t360;",
            ext(br.from_bus),
            ext(br.to_bus),
            br.r,
            br.x,
            br.b_charging,
            br.tap,
            u8::from(br.in_service)
        );
    }
    s.push_str("];\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "mpc.baseMVA = 100;\n";

    fn bus_row(id: u64, kind: u8) -> String {
        format!("{id} {kind} 0 0 0 0 1 1 0 345 1 1.1 0.9")
    }

    #[test]
    fn comments_commas_and_continuations() {
        let text = format!(
            "function mpc = t % trailing\n{HEADER}mpc.version = '2';\n\
             mpc.bus = [\n {};\n {}, % second\n];\n\
             mpc.gen = [1, 10, 0, 0, 0, 1.02, 100, 1, ...\n 0, 0];\n\
             mpc.branch = [1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360];\n\
             mpc.bus_name = {{ 'A'; 'B' }};\n",
            bus_row(1, 3),
            bus_row(2, 1)
        );
        let m = parse_case(&text).unwrap();
        assert_eq!(m.n_buses(), 2);
        assert_eq!(m.buses()[0].v_setpoint, 1.02);
        assert_eq!(m.buses()[0].pg, 10.0);
    }

    #[test]
    fn sparse_bus_numbers_are_densified() {
        let text = format!(
            "{HEADER}mpc.bus = [{}; {}];\nmpc.branch = [10 7 0 0.1 0 0 0 0 0 0 1 -360 360];",
            bus_row(10, 3),
            bus_row(7, 1)
        );
        let m = parse_case(&text).unwrap();
        assert_eq!(m.buses()[1].external_id, 7);
        assert_eq!(m.branches()[0].to_bus, 2);
        assert_eq!(m.bus_by_external(7), Some(2));
    }

    #[test]
    fn unknown_bus_in_branch() {
        let text = format!(
            "{HEADER}mpc.bus = [{}; {}];\nmpc.branch = [1 99 0 0.1 0 0 0 0 0 0 1 -360 360];",
            bus_row(1, 3),
            bus_row(2, 1)
        );
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, Error::UnknownBus { bus: 99, .. }));
        assert!(err.to_string().contains("unknown bus"));
    }

    #[test]
    fn semantic_errors() {
        let branch = "mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 -360 360];";
        let dup = format!("{HEADER}mpc.bus = [{}; {}];\n{branch}", bus_row(1, 3), bus_row(1, 1));
        assert!(parse_case(&dup).unwrap_err().to_string().contains("duplicate bus id 1"));

        let no_ref = format!("{HEADER}mpc.bus = [{}; {}];\n{branch}", bus_row(1, 1), bus_row(2, 1));
        assert!(parse_case(&no_ref).unwrap_err().to_string().contains("no reference bus"));

        let two_ref = format!("{HEADER}mpc.bus = [{}; {}];\n{branch}", bus_row(1, 3), bus_row(2, 3));
        assert!(parse_case(&two_ref)
            .unwrap_err()
            .to_string()
            .contains("more than one reference bus"));

        let zero_x = format!(
            "{HEADER}mpc.bus = [{}; {}];\nmpc.branch = [1 2 0.1 0 0 0 0 0 0 0 1 -360 360];",
            bus_row(1, 3),
            bus_row(2, 1)
        );
        assert!(parse_case(&zero_x).unwrap_err().to_string().contains("zero reactance"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = format!("{HEADER}mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n 2 1 0 0 # 0];");
        match parse_case(&text).unwrap_err() {
            Error::Syntax { line, column, .. } => assert_eq!((line, column), (3, 10)),
            e => panic!("unexpected {e}"),
        }
        let ragged = format!("{HEADER}mpc.bus = [{};\n 2 1 0];", bus_row(1, 3));
        match parse_case(&ragged).unwrap_err() {
            Error::Syntax { line, column, message } => {
                assert_eq!((line, column), (3, 2));
                assert!(message.contains("columns"));
            }
            e => panic!("unexpected {e}"),
        }
        let bad_number = format!("{HEADER}mpc.bus = [1 3 1.2.3];");
        assert!(matches!(parse_case(&bad_number), Err(Error::Syntax { line: 2, .. })));
    }

    #[test]
    fn pv_bus_without_generator_becomes_load() {
        let text = format!(
            "{HEADER}mpc.bus = [{}; {}];\nmpc.gen = [1 0 0 0 0 1 100 1 0 0; 2 5 0 0 0 1 100 0 0 0];\n\
             mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 -360 360];",
            bus_row(1, 3),
            bus_row(2, 2)
        );
        let m = parse_case(&text).unwrap();
        assert_eq!(m.buses()[1].kind, BusKind::Load);
        assert_eq!(m.buses()[1].pg, 0.0);
    }

    #[test]
    fn bundled_case_round_trips() {
        let m = super::super::ieee39();
        assert_eq!(parse_case(&write_case(&m)).unwrap(), m);
    }

    fn arb_model() -> impl Strategy<Value = NetworkModel> {
        (2usize..8).prop_flat_map(|n| {
            let buses = prop::collection::vec(
                (0u8..3, -500.0..500.0f64, -200.0..200.0f64, -50.0..50.0f64, -50.0..50.0f64, 0.9..1.1f64, -300.0..300.0f64),
                n,
            );
            let lines = prop::collection::vec(
                (0..n, 1..n, 0.0..0.05f64, 0.001..0.2f64, 0.0..0.5f64, prop::bool::ANY, 0.9..1.1f64, prop::bool::ANY),
                1..12,
            );
            (Just(n), 0..n, buses, lines, 1.0..1000.0f64)
        })
        .prop_map(|(n, reference, bus_data, line_data, base)| {
            let buses = bus_data
                .into_iter()
                .enumerate()
                .map(|(i, (k, pd, qd, gs, bs, v, pg))| {
                    let kind = if i == reference {
                        BusKind::Reference
                    } else if k == 0 {
                        BusKind::Generator
                    } else {
                        BusKind::Load
                    };
                    Bus {
                        id: i + 1,
                        external_id: (i as u64 + 1) * 3,
                        kind,
                        pd,
                        qd,
                        pg: if kind == BusKind::Load { 0.0 } else { pg },
                        qg: 0.0,
                        gs,
                        bs,
                        v_setpoint: v,
                    }
                })
                .collect();
            let branches = line_data
                .into_iter()
                .enumerate()
                .map(|(l, (f, off, r, x, b, tapped, tap, on))| Branch {
                    id: l + 1,
                    from_bus: f + 1,
                    to_bus: (f + off) % n + 1,
                    r,
                    x,
                    b_charging: b,
                    tap: if tapped { tap } else { 1.0 },
                    in_service: on,
                })
                .collect();
            NetworkModel::new(base, buses, branches).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(m in arb_model()) {
            prop_assert_eq!(parse_case(&write_case(&m)).unwrap(), m);
        }

        #[test]
        fn removal_composes(m in arb_model(), a in prop::collection::vec(1usize..12, 0..4), b in prop::collection::vec(1usize..12, 0..4)) {
            let l = m.n_lines();
            let a: Vec<usize> = a.into_iter().filter(|&i| i <= l).collect();
            let b: Vec<usize> = b.into_iter().filter(|&i| i <= l).collect();
            let union: Vec<usize> = a.iter().chain(&b).copied().collect();
            let once = m.remove_lines(&union).unwrap();
            let twice = m.remove_lines(&a).unwrap().remove_lines(&b).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn incidence_columns_and_symmetry(m in arb_model()) {
            let inc = m.incidence();
            for col in inc.column_iter() {
                prop_assert_eq!(col.sum(), 0.0);
                prop_assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 2);
            }
            let y = m.admittance();
            prop_assert_eq!(y.clone(), y.transpose());
        }
    }
}
