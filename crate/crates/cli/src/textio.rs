//! Plain-text interchange: portable graymaps (P2/P5) and a one-header CSV
//! float format.
//!
//! PGM images load as single-channel 2-D signals with values normalized to
//! `[0, 1]` by the declared maxval; saving clamps to `[0, 1]` and quantizes
//! to 8 bits (binary P5).

use psvb_core::{Grid, MultiSignal};

use crate::error::{CliError, Result};

pub fn load_pgm(bytes: &[u8]) -> Result<MultiSignal> {
    fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(bytes: &[u8], pos: &mut usize) -> Result<u64> {
        skip_ws_and_comments(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(CliError::Malformed("expected integer in PGM header".into()));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .unwrap()
            .parse()
            .map_err(|e| CliError::Malformed(format!("bad PGM integer: {e}")))
    }

    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(CliError::Malformed("not a PGM file".into()));
    }
    let binary = match bytes[1] {
        b'2' => false,
        b'5' => true,
        other => {
            return Err(CliError::Malformed(format!(
                "unsupported PGM subtype P{}",
                other as char
            )))
        }
    };
    let mut pos = 2usize;
    let width = token(bytes, &mut pos)? as usize;
    let height = token(bytes, &mut pos)? as usize;
    let maxval = token(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(CliError::Malformed("empty PGM image".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(CliError::Malformed(format!(
            "PGM maxval {maxval} unsupported (need 1..=255)"
        )));
    }
    let count = width * height;
    let mut data = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates header and raster
        pos += 1;
        if pos + count > bytes.len() {
            return Err(CliError::Truncated {
                needed: pos + count - bytes.len(),
            });
        }
        for &b in &bytes[pos..pos + count] {
            data.push(b as f64 / maxval as f64);
        }
    } else {
        for _ in 0..count {
            let v = token(bytes, &mut pos)?;
            if v > maxval {
                return Err(CliError::Malformed(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as f64 / maxval as f64);
        }
    }
    let grid = Grid::new(&[height, width])?;
    Ok(MultiSignal::from_data(grid, 1, data)?)
}

pub fn save_pgm(signal: &MultiSignal) -> Result<Vec<u8>> {
    if signal.channels() != 1 || signal.grid().dims() != 2 {
        return Err(CliError::Malformed(
            "PGM export needs a single-channel 2-D signal".into(),
        ));
    }
    let sizes = signal.grid().sizes();
    let (height, width) = (sizes[0], sizes[1]);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(signal.channel(0).iter().map(|&v| {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }));
    Ok(out)
}

/// CSV with a single header line `psvb-signal,d=<d>,sizes=<n1>x<n2>,channels=<N>`
/// followed by one row of comma-separated floats per channel.
pub fn save_csv(signal: &MultiSignal) -> String {
    let sizes: Vec<String> = signal.grid().sizes().iter().map(|n| n.to_string()).collect();
    let mut out = format!(
        "psvb-signal,d={},sizes={},channels={}\n",
        signal.grid().dims(),
        sizes.join("x"),
        signal.channels()
    );
    for n in 0..signal.channels() {
        let row: Vec<String> = signal
            .channel(n)
            .iter()
            .map(|v| format!("{v:.17e}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn load_csv(text: &str) -> Result<MultiSignal> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Malformed("empty CSV".into()))?;
    let mut d = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut channels = None;
    let mut fields = header.split(',');
    if fields.next() != Some("psvb-signal") {
        return Err(CliError::Malformed("missing psvb-signal CSV header".into()));
    }
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| CliError::Malformed(format!("bad header field {field}")))?;
        match key {
            "d" => d = Some(value.parse::<usize>().map_err(|e| CliError::Malformed(e.to_string()))?),
            "sizes" => {
                sizes = Some(
                    value
                        .split('x')
                        .map(|v| v.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| CliError::Malformed(e.to_string()))?,
                )
            }
            "channels" => {
                channels =
                    Some(value.parse::<usize>().map_err(|e| CliError::Malformed(e.to_string()))?)
            }
            other => return Err(CliError::Malformed(format!("unknown header key {other}"))),
        }
    }
    let sizes = sizes.ok_or_else(|| CliError::Malformed("missing sizes".into()))?;
    let channels = channels.ok_or_else(|| CliError::Malformed("missing channels".into()))?;
    if let Some(d) = d {
        if d != sizes.len() {
            return Err(CliError::Malformed(format!(
                "d={d} disagrees with {} sizes",
                sizes.len()
            )));
        }
    }
    let grid = Grid::new(&sizes)?;
    let mut data = Vec::with_capacity(channels * grid.len());
    for _ in 0..channels {
        let line = lines
            .next()
            .ok_or_else(|| CliError::Malformed("missing channel row".into()))?;
        for cell in line.split(',') {
            data.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Malformed(format!("bad float {cell}: {e}")))?,
            );
        }
    }
    Ok(MultiSignal::from_data(grid, channels, data)?)
}
