//! Plain-text map and instance files.
//!
//! Map: first line `rows cols`, then `rows` lines of `.` (free) / `#` (obstacle).
//! Instance: first line is the map path, then one `start_row start_col goal_row goal_col`
//! line per agent. Trajectory: first line `steps agents`, then `steps + 1` lines
//! of `row col` pairs, one pair per agent. Serializers emit exactly what the
//! parsers accept, with a trailing newline after every line.

use super::{Cell, EnvError, GridMap};

pub fn serialize_map(map: &GridMap) -> String {
    let mut s = String::with_capacity(map.len() + map.rows() + 16);
    s.push_str(&format!("{} {}\n", map.rows(), map.cols()));
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            s.push(if map.is_free(Cell::new(r, c)) { '.' } else { '#' });
        }
        s.push('\n');
    }
    s
}

fn parse_err(line: usize, message: impl Into<String>) -> EnvError {
    EnvError::Parse { line, message: message.into() }
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize, EnvError> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

pub fn parse_map(text: &str) -> Result<GridMap, EnvError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty map file"))?;
    let mut toks = header.split_whitespace();
    let rows = parse_usize(toks.next(), 1, "row count")?;
    let cols = parse_usize(toks.next(), 1, "column count")?;
    if toks.next().is_some() {
        return Err(parse_err(1, "trailing tokens in header"));
    }
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line_no = r + 2;
        let line = lines.next().ok_or_else(|| parse_err(line_no, "missing grid row"))?;
        if line.len() != cols {
            return Err(parse_err(line_no, format!("expected {cols} cells, found {}", line.len())));
        }
        for ch in line.chars() {
            cells.push(match ch {
                '.' => false,
                '#' => true,
                other => return Err(parse_err(line_no, format!("unexpected character {other:?}"))),
            });
        }
    }
    if let Some((i, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(rows + 2 + i, "unexpected content after grid"));
    }
    GridMap::new(rows, cols, cells)
}

/// Instance file contents: a map reference plus start/goal pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceFile {
    pub map_path: String,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
}

pub fn serialize_instance(inst: &InstanceFile) -> String {
    let mut s = format!("{}\n", inst.map_path);
    for (st, g) in inst.starts.iter().zip(&inst.goals) {
        s.push_str(&format!("{} {} {} {}\n", st.row, st.col, g.row, g.col));
    }
    s
}

pub fn parse_instance(text: &str) -> Result<InstanceFile, EnvError> {
    let mut lines = text.lines();
    let map_path = lines.next().filter(|l| !l.trim().is_empty()).ok_or_else(|| parse_err(1, "missing map path"))?;
    let mut starts = Vec::new();
    let mut goals = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut t = line.split_whitespace();
        let sr = parse_usize(t.next(), line_no, "start row")?;
        let sc = parse_usize(t.next(), line_no, "start column")?;
        let gr = parse_usize(t.next(), line_no, "goal row")?;
        let gc = parse_usize(t.next(), line_no, "goal column")?;
        if t.next().is_some() {
            return Err(parse_err(line_no, "expected exactly four integers"));
        }
        starts.push(Cell::new(sr, sc));
        goals.push(Cell::new(gr, gc));
    }
    if starts.is_empty() {
        return Err(parse_err(2, "no agents"));
    }
    Ok(InstanceFile { map_path: map_path.to_string(), starts, goals })
}

/// `positions[t][i]` is agent `i` at step `t`.
pub fn serialize_trajectory(positions: &[Vec<Cell>]) -> String {
    let agents = positions.first().map_or(0, Vec::len);
    let mut s = format!("{} {}\n", positions.len().saturating_sub(1), agents);
    for row in positions {
        let cells: Vec<String> = row.iter().map(|c| format!("{} {}", c.row, c.col)).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_trajectory(text: &str) -> Result<Vec<Vec<Cell>>, EnvError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty trajectory file"))?;
    let mut toks = header.split_whitespace();
    let steps = parse_usize(toks.next(), 1, "step count")?;
    let agents = parse_usize(toks.next(), 1, "agent count")?;
    if toks.next().is_some() {
        return Err(parse_err(1, "trailing tokens in header"));
    }
    if agents == 0 {
        return Err(parse_err(1, "no agents"));
    }
    let mut out = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let line_no = t + 2;
        let line = lines.next().ok_or_else(|| parse_err(line_no, format!("missing positions for step {t}")))?;
        let mut toks = line.split_whitespace();
        let mut row = Vec::with_capacity(agents);
        for a in 0..agents {
            let r = parse_usize(toks.next(), line_no, &format!("row of agent {a}"))?;
            let c = parse_usize(toks.next(), line_no, &format!("column of agent {a}"))?;
            row.push(Cell::new(r, c));
        }
        if toks.next().is_some() {
            return Err(parse_err(line_no, format!("expected {} integers", 2 * agents)));
        }
        out.push(row);
    }
    if let Some((i, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(steps + 3 + i, "unexpected content after the last step"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_map;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn map_text_is_exact() {
        let m = GridMap::from_ascii(&[".#.", "..#"]).unwrap();
        assert_eq!(serialize_map(&m), "2 3\n.#.\n..#\n");
        assert_eq!(parse_map("2 3\n.#.\n..#\n").unwrap(), m);
    }

    #[test]
    fn malformed_maps_report_line() {
        assert_eq!(parse_map("2 3\n.#.\n..\n").unwrap_err(), EnvError::Parse { line: 3, message: "expected 3 cells, found 2".into() });
        assert!(matches!(parse_map("2 3\n.x.\n...\n"), Err(EnvError::Parse { line: 2, .. })));
        assert!(matches!(parse_map("1 3\n...\n"), Err(EnvError::InvalidDimensions { .. })));
    }

    #[test]
    fn instance_text_is_exact() {
        let text = "maps/a.map\n0 0 1 2\n1 1 0 2\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.starts, vec![Cell::new(0, 0), Cell::new(1, 1)]);
        assert_eq!(serialize_instance(&inst), text);
        assert!(parse_instance("a.map\n0 0 1\n").is_err());
    }

    #[test]
    fn trajectory_text_is_exact() {
        let text = "1 2\n0 0 1 1\n0 1 1 1\n";
        let t = parse_trajectory(text).unwrap();
        assert_eq!(t[1], vec![Cell::new(0, 1), Cell::new(1, 1)]);
        assert_eq!(serialize_trajectory(&t), text);
        assert!(matches!(parse_trajectory("2 1\n0 0\n0 1\n"), Err(EnvError::Parse { line: 4, .. })));
    }

    proptest! {
        #[test]
        fn map_round_trip(seed in any::<u64>(), rows in 2usize..12, cols in 2usize..12, density in 0.0f64..0.5) {
            let m = generate_map(rows, cols, density, &mut rng::stream(seed, "fmt")).unwrap();
            let text = serialize_map(&m);
            let back = parse_map(&text).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(serialize_map(&back), text);
        }

        #[test]
        fn instance_round_trip(cells in proptest::collection::vec((0usize..50, 0usize..50, 0usize..50, 0usize..50), 1..6)) {
            let inst = InstanceFile {
                map_path: "m.map".into(),
                starts: cells.iter().map(|c| Cell::new(c.0, c.1)).collect(),
                goals: cells.iter().map(|c| Cell::new(c.2, c.3)).collect(),
            };
            let text = serialize_instance(&inst);
            prop_assert_eq!(parse_instance(&text).unwrap(), inst);
        }
    }
}
