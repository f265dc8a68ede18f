//! File formats: CSV tables with `# key = value` provenance headers, a compact
//! binary click layout, and grayscale PGM heatmaps.

use std::io::{BufRead, Read, Write};

use crate::jacobi::{JacobiMap, MapCell, RWindow};
use crate::master::TracePoint;
use crate::regression::CorrelationGrid;
use crate::trajectory::ClickRecord;
use crate::{Error, Result};

/// Formats `x` with nine significant digits, like C's `%.9g`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
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

fn write_header(w: &mut impl Write, header: &str) -> Result<()> {
    for line in header.lines() {
        if line.is_empty() {
            writeln!(w, "#")?;
        } else {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// `# key = value` lines of a file, in order.
pub fn header_entries(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn write_trace_csv(w: &mut impl Write, header: &str, points: &[TracePoint]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "time_us,input_rate,output_rate")?;
    for p in points {
        writeln!(w, "{},{},{}", sig9(p.t), sig9(p.input_rate), sig9(p.output_rate))?;
    }
    Ok(())
}

/// G3 sub-grid as sorted triples with `g3`; cells with vanishing intensity are skipped.
pub fn write_g3_triples_csv(w: &mut impl Write, header: &str, grid: &CorrelationGrid) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "s1_us,s2_us,s3_us,g3")?;
    let t = grid.g3_times();
    for k in 0..t.len() {
        for j in 0..=k {
            for i in 0..=j {
                if let Some(g) = grid.g3(i, j, k) {
                    writeln!(w, "{},{},{},{}", sig9(t[i]), sig9(t[j]), sig9(t[k]), sig9(g))?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_g2_pairs_csv(w: &mut impl Write, header: &str, grid: &CorrelationGrid) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "s1_us,s2_us,g2")?;
    let t = grid.times();
    for j in 0..t.len() {
        for i in 0..=j {
            if let Some(g) = grid.g2(i, j) {
                writeln!(w, "{},{},{}", sig9(t[i]), sig9(t[j]), sig9(g))?;
            }
        }
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

pub fn write_jacobi_csv(w: &mut impl Write, header: &str, map: &JacobiMap) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "# map_cell_width = {}", map.cell_width)?;
    if let Some(win) = map.r_window {
        writeln!(w, "# map_mean_time_window = {} {}", win.lo, win.hi)?;
    }
    writeln!(w, "eta_us,zeta_us,g3,g3_connected,g3_stderr,g3_connected_stderr,n_samples")?;
    for ((a, b), c) in map.iter() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            sig9(map.center(a)),
            sig9(map.center(b)),
            sig9(c.g3),
            sig9(c.g3_connected),
            opt(c.g3_stderr),
            opt(c.g3c_stderr),
            c.n_samples
        )?;
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    let f = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column `{what}`"),
    })?;
    f.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{f}` as {what}"),
    })
}

fn parse_opt(field: Option<&str>, line: usize, what: &str) -> Result<Option<f64>> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        f => parse_field(f, line, what).map(Some),
    }
}

/// Reads a map written by [`write_jacobi_csv`].
pub fn read_jacobi_csv(r: impl BufRead) -> Result<JacobiMap> {
    let mut cell_width = None;
    let mut window = None;
    let mut rows = Vec::new();
    let mut saw_columns = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                match k.trim() {
                    "map_cell_width" => cell_width = Some(parse_field::<f64>(Some(v), lineno, "cell width")?),
                    "map_mean_time_window" => {
                        let mut it = v.split_whitespace();
                        let lo = parse_field(it.next(), lineno, "window start")?;
                        let hi = parse_field(it.next(), lineno, "window end")?;
                        window = Some(RWindow::new(lo, hi)?);
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_columns {
            if !line.starts_with("eta_us,zeta_us,g3,g3_connected") {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected the map column header".into(),
                });
            }
            saw_columns = true;
            continue;
        }
        let mut f = line.split(',');
        let eta: f64 = parse_field(f.next(), lineno, "eta_us")?;
        let zeta: f64 = parse_field(f.next(), lineno, "zeta_us")?;
        let cell = MapCell {
            g3: parse_field(f.next(), lineno, "g3")?,
            g3_connected: parse_field(f.next(), lineno, "g3_connected")?,
            g3_stderr: parse_opt(f.next(), lineno, "g3_stderr")?,
            g3c_stderr: parse_opt(f.next(), lineno, "g3_connected_stderr")?,
            n_samples: parse_field(f.next(), lineno, "n_samples")?,
        };
        rows.push((eta, zeta, cell));
    }
    let width = cell_width.ok_or_else(|| Error::Parse {
        line: 0,
        message: "map header lacks `map_cell_width`".into(),
    })?;
    let mut map = JacobiMap::new(width, window);
    for (eta, zeta, cell) in rows {
        map.insert((map.cell_of(eta), map.cell_of(zeta)), cell);
    }
    Ok(map)
}

/// Click CSV; `record_count` in the header keeps pulses without clicks.
pub fn write_clicks_csv(w: &mut impl Write, header: &str, records: &[ClickRecord]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "# record_count = {}", records.len())?;
    writeln!(w, "pulse_id,time_us,channel")?;
    for r in records {
        for (t, c) in r.clicks.iter().zip(&r.channels) {
            writeln!(w, "{},{},{}", r.pulse_id, t, c)?;
        }
    }
    Ok(())
}

fn group_records(rows: Vec<(u32, f64, u8)>, n_pulses: Option<u32>) -> Result<Vec<ClickRecord>> {
    let max_id = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n = n_pulses.unwrap_or(max_id);
    if max_id > n {
        return Err(Error::Inconsistent(format!(
            "pulse id {} exceeds the declared {n} pulses",
            max_id - 1
        )));
    }
    let mut records: Vec<ClickRecord> = (0..n)
        .map(|id| ClickRecord {
            pulse_id: id,
            ..Default::default()
        })
        .collect();
    for (id, t, c) in rows {
        let r = &mut records[id as usize];
        if r.clicks.last().is_some_and(|&last| t < last) {
            return Err(Error::Inconsistent(format!("clicks of pulse {id} are not ascending")));
        }
        r.clicks.push(t);
        r.channels.push(c);
    }
    Ok(records)
}

/// Reads a click CSV. The pulse count comes from `n_pulses`, else the header, else the largest id.
pub fn read_clicks_csv(r: impl BufRead, n_pulses: Option<u32>) -> Result<Vec<ClickRecord>> {
    let mut declared = None;
    let mut rows = Vec::new();
    let mut saw_columns = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(("record_count", v)) = rest.split_once('=').map(|(k, v)| (k.trim(), v)) {
                declared = Some(parse_field::<u32>(Some(v), lineno, "record count")?);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_columns {
            if line.trim() != "pulse_id,time_us,channel" {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected `pulse_id,time_us,channel`".into(),
                });
            }
            saw_columns = true;
            continue;
        }
        let mut f = line.split(',');
        rows.push((
            parse_field(f.next(), lineno, "pulse_id")?,
            parse_field(f.next(), lineno, "time_us")?,
            parse_field(f.next(), lineno, "channel")?,
        ));
    }
    group_records(rows, n_pulses.or(declared))
}

pub const BINARY_RECORD_BYTES: usize = 13;

/// Binary clicks: little-endian `u32` pulse id, `f64` time, `u8` channel per click.
pub fn write_clicks_binary(w: &mut impl Write, records: &[ClickRecord]) -> Result<()> {
    for r in records {
        for (t, c) in r.clicks.iter().zip(&r.channels) {
            w.write_all(&r.pulse_id.to_le_bytes())?;
            w.write_all(&t.to_le_bytes())?;
            w.write_all(&[*c])?;
        }
    }
    Ok(())
}

pub fn read_clicks_binary(mut r: impl Read, n_pulses: Option<u32>) -> Result<Vec<ClickRecord>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % BINARY_RECORD_BYTES != 0 {
        return Err(Error::Inconsistent(format!(
            "binary click stream of {} bytes is not a whole number of {BINARY_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    let rows = bytes
        .chunks_exact(BINARY_RECORD_BYTES)
        .map(|c| {
            let id = u32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
            let t = f64::from_le_bytes(c[4..12].try_into().expect("8 bytes"));
            (id, t, c[12])
        })
        .collect();
    group_records(rows, n_pulses)
}

/// Which map value a heatmap shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapField {
    G3,
    G3Connected,
}

/// Binary PGM image of one map field, ζ increasing upwards. Absent cells are black,
/// values are scaled linearly onto gray levels 1..=255.
pub fn write_heatmap_pgm(w: &mut impl Write, map: &JacobiMap, field: MapField) -> Result<()> {
    if map.is_empty() {
        return Err(Error::Empty("map has no cells to draw".into()));
    }
    let value = |c: &MapCell| match field {
        MapField::G3 => c.g3,
        MapField::G3Connected => c.g3_connected,
    };
    let (mut a0, mut a1, mut b0, mut b1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((a, b), c) in map.iter() {
        a0 = a0.min(a);
        a1 = a1.max(a);
        b0 = b0.min(b);
        b1 = b1.max(b);
        lo = lo.min(value(c));
        hi = hi.max(value(c));
    }
    let (width, height) = ((a1 - a0 + 1) as usize, (b1 - b0 + 1) as usize);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut row = vec![0u8; width];
    for b in (b0..=b1).rev() {
        for (x, a) in (a0..=a1).enumerate() {
            row[x] = match map.get(a, b) {
                Some(c) => 1 + ((value(c) - lo) / span * 254.0).round() as u8,
                None => 0,
            };
        }
        w.write_all(&row)?;
    }
    Ok(())
}
