//! Bit-exact binary container for signals, filters, masks, network weights,
//! and splines.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   [u8; 4] = "PSVB"
//! version u16     = 1
//! kind    u8       0 signal | 1 filter | 2 mask | 3 weights | 4 spline
//! complex u8       0 | 1
//! header  kind-specific u32/u8 fields (see the save_* functions)
//! length  u64      payload size in bytes
//! payload f64 LE array
//! crc32   u32      CRC-32 of the payload bytes
//! ```
//!
//! Saving any value twice produces identical bytes, and every loader
//! verifies declared lengths and the payload checksum.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use psvb_core::nn::{ActivationLayer, CnnDenoiser, SplineActivation};
use psvb_core::inverse::SamplingMask;
use psvb_core::{Grid, MultiFilter, MultiSignal, Tap};

use crate::error::{CliError, Result};

const MAGIC: [u8; 4] = *b"PSVB";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Signal = 0,
    Filter = 1,
    Mask = 2,
    Weights = 3,
    Spline = 4,
}

impl Kind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Kind::Signal,
            1 => Kind::Filter,
            2 => Kind::Mask,
            3 => Kind::Weights,
            4 => Kind::Spline,
            other => return Err(CliError::Malformed(format!("unknown container kind {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Signal => "signal",
            Kind::Filter => "filter",
            Kind::Mask => "mask",
            Kind::Weights => "weights",
            Kind::Spline => "spline",
        }
    }
}

/// Contents of a `kind = signal` container.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalFile {
    Real(MultiSignal),
    Complex {
        grid: Grid,
        channels: usize,
        data: Vec<Complex64>,
    },
}

// ---------------------------------------------------------------------------
// byte-level helpers

struct Writer {
    head: Vec<u8>,
    payload: Vec<u8>,
}

impl Writer {
    fn new(kind: Kind, complex: bool) -> Self {
        let mut head = Vec::with_capacity(64);
        head.extend_from_slice(&MAGIC);
        head.extend_from_slice(&VERSION.to_le_bytes());
        head.push(kind as u8);
        head.push(complex as u8);
        Self {
            head,
            payload: Vec::new(),
        }
    }

    fn u8(&mut self, v: u8) {
        self.head.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.head.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.payload.extend_from_slice(&v.to_le_bytes());
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.payload);
        self.head
            .extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        self.head.extend_from_slice(&self.payload);
        self.head.extend_from_slice(&crc.to_le_bytes());
        self.head
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Truncated {
                needed: self.pos + n - self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

struct Payload<'a> {
    floats: std::slice::ChunksExact<'a, u8>,
    remaining: usize,
}

impl<'a> Payload<'a> {
    fn f64(&mut self) -> Result<f64> {
        match self.floats.next() {
            Some(chunk) => {
                self.remaining -= 1;
                Ok(f64::from_le_bytes(chunk.try_into().unwrap()))
            }
            None => Err(CliError::Malformed("payload shorter than declared shape".into())),
        }
    }

    fn finish(self) -> Result<()> {
        if self.remaining != 0 {
            return Err(CliError::Malformed(format!(
                "payload holds {} unread floats",
                self.remaining
            )));
        }
        Ok(())
    }
}

/// Parses the envelope and checks magic, version, and kind; returns a reader
/// positioned at the kind-specific header plus the complex flag.
fn open_header(bytes: &[u8], expect: Kind) -> Result<(Reader<'_>, bool)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(CliError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CliError::VersionMismatch {
            got: version,
            expected: VERSION,
        });
    }
    let kind = Kind::from_u8(r.u8()?)?;
    if kind != expect {
        return Err(CliError::KindMismatch {
            expected: expect.name(),
            got: kind.name().to_string(),
        });
    }
    let complex = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(CliError::Malformed(format!("bad complex flag {other}"))),
    };
    Ok((r, complex))
}

/// Consumes the declared payload, verifies the trailing CRC-32 and that no
/// bytes are left over.
fn split_payload<'a>(r: &mut Reader<'a>) -> Result<Payload<'a>> {
    let len = r.u64()? as usize;
    if len % 8 != 0 {
        return Err(CliError::Malformed(format!(
            "payload length {len} is not a multiple of 8"
        )));
    }
    let payload = r.take(len)?;
    let stored = r.u32()?;
    if r.pos != r.bytes.len() {
        return Err(CliError::Malformed(format!(
            "{} trailing bytes after checksum",
            r.bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(payload);
    if computed != stored {
        return Err(CliError::CrcMismatch { stored, computed });
    }
    Ok(Payload {
        floats: payload.chunks_exact(8),
        remaining: len / 8,
    })
}

// ---------------------------------------------------------------------------
// signal

pub fn encode_signal(signal: &MultiSignal) -> Vec<u8> {
    let mut w = Writer::new(Kind::Signal, false);
    let grid = signal.grid();
    w.u32(grid.dims() as u32);
    for &n in grid.sizes() {
        w.u32(n as u32);
    }
    w.u32(signal.channels() as u32);
    for &v in signal.data() {
        w.f64(v);
    }
    w.finish()
}

pub fn encode_complex_signal(grid: &Grid, channels: usize, data: &[Complex64]) -> Vec<u8> {
    let mut w = Writer::new(Kind::Signal, true);
    w.u32(grid.dims() as u32);
    for &n in grid.sizes() {
        w.u32(n as u32);
    }
    w.u32(channels as u32);
    for v in data {
        w.f64(v.re);
        w.f64(v.im);
    }
    w.finish()
}

pub fn decode_signal(bytes: &[u8]) -> Result<SignalFile> {
    let (mut r, complex) = open_header(bytes, Kind::Signal)?;
    let d = r.u32()? as usize;
    if d == 0 || d > 16 {
        return Err(CliError::Malformed(format!("implausible dimensionality {d}")));
    }
    let mut sizes = Vec::with_capacity(d);
    for _ in 0..d {
        sizes.push(r.u32()? as usize);
    }
    let channels = r.u32()? as usize;
    let grid = Grid::new(&sizes)?;
    let count = channels
        .checked_mul(grid.len())
        .ok_or_else(|| CliError::Malformed("shape overflow".into()))?;
    let mut p = split_payload(&mut r)?;
    if complex {
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let re = p.f64()?;
            let im = p.f64()?;
            data.push(Complex64::new(re, im));
        }
        p.finish()?;
        Ok(SignalFile::Complex {
            grid,
            channels,
            data,
        })
    } else {
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(p.f64()?);
        }
        p.finish()?;
        let signal = MultiSignal::from_data(grid, channels, data)?;
        Ok(SignalFile::Real(signal))
    }
}

// ---------------------------------------------------------------------------
// filter

pub fn encode_filter(filter: &MultiFilter) -> Vec<u8> {
    let mut w = Writer::new(Kind::Filter, false);
    let d = filter.dims().unwrap_or(1);
    w.u32(d as u32);
    w.u32(filter.out_channels() as u32);
    w.u32(filter.in_channels() as u32);
    w.u32(filter.taps().len() as u32);
    match filter.grid_hint() {
        Some(grid) => {
            w.u8(1);
            for &n in grid.sizes() {
                w.u32(n as u32);
            }
        }
        None => w.u8(0),
    }
    for tap in filter.taps() {
        for &o in &tap.offset {
            w.f64(o as f64);
        }
        for row in 0..filter.out_channels() {
            for col in 0..filter.in_channels() {
                w.f64(tap.matrix[(row, col)]);
            }
        }
    }
    w.finish()
}

pub fn decode_filter(bytes: &[u8]) -> Result<MultiFilter> {
    let (mut r, complex) = open_header(bytes, Kind::Filter)?;
    if complex {
        return Err(CliError::Malformed("complex filters are not supported".into()));
    }
    let d = r.u32()? as usize;
    if d == 0 || d > 16 {
        return Err(CliError::Malformed(format!("implausible dimensionality {d}")));
    }
    let out_channels = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let tap_count = r.u32()? as usize;
    let hint = match r.u8()? {
        0 => None,
        1 => {
            let mut sizes = Vec::with_capacity(d);
            for _ in 0..d {
                sizes.push(r.u32()? as usize);
            }
            Some(Grid::new(&sizes)?)
        }
        other => return Err(CliError::Malformed(format!("bad grid-hint flag {other}"))),
    };
    let mut p = split_payload(&mut r)?;
    let mut taps = Vec::with_capacity(tap_count);
    for _ in 0..tap_count {
        let mut offset = Vec::with_capacity(d);
        for _ in 0..d {
            let v = p.f64()?;
            if v.fract() != 0.0 || v.abs() > i64::MAX as f64 {
                return Err(CliError::Malformed(format!("non-integer tap offset {v}")));
            }
            offset.push(v as i64);
        }
        let mut matrix = DMatrix::<f64>::zeros(out_channels, in_channels);
        for row in 0..out_channels {
            for col in 0..in_channels {
                matrix[(row, col)] = p.f64()?;
            }
        }
        taps.push(Tap { offset, matrix });
    }
    p.finish()?;
    let filter = MultiFilter::new(in_channels, out_channels, taps)?;
    Ok(filter.with_grid_hint(hint))
}

// ---------------------------------------------------------------------------
// mask

pub fn encode_mask(mask: &SamplingMask) -> Vec<u8> {
    let mut w = Writer::new(Kind::Mask, false);
    let grid = mask.grid();
    w.u32(grid.dims() as u32);
    for &n in grid.sizes() {
        w.u32(n as u32);
    }
    for &k in mask.keep() {
        w.f64(if k { 1.0 } else { 0.0 });
    }
    w.finish()
}

pub fn decode_mask(bytes: &[u8]) -> Result<SamplingMask> {
    let (mut r, _) = open_header(bytes, Kind::Mask)?;
    let d = r.u32()? as usize;
    if d == 0 || d > 16 {
        return Err(CliError::Malformed(format!("implausible dimensionality {d}")));
    }
    let mut sizes = Vec::with_capacity(d);
    for _ in 0..d {
        sizes.push(r.u32()? as usize);
    }
    let grid = Grid::new(&sizes)?;
    let mut p = split_payload(&mut r)?;
    let mut keep = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let v = p.f64()?;
        keep.push(match v {
            x if x == 0.0 => false,
            x if x == 1.0 => true,
            other => {
                return Err(CliError::Malformed(format!(
                    "mask entries must be 0 or 1, got {other}"
                )))
            }
        });
    }
    p.finish()?;
    Ok(SamplingMask::from_keep(grid, keep)?)
}

// ---------------------------------------------------------------------------
// weights

/// All spline activations must share one knot layout (count, t0, dt); mixed
/// ReLU/spline layers are not representable either.
pub fn encode_weights(net: &CnnDenoiser) -> Result<Vec<u8>> {
    let mut spline_knots = None;
    for a in net.activations() {
        match a {
            ActivationLayer::Splines(splines) => {
                for sp in splines {
                    let k = sp.values().len();
                    match spline_knots {
                        None => spline_knots = Some(k),
                        Some(existing) if existing == k => {}
                        Some(existing) => {
                            return Err(CliError::Malformed(format!(
                                "splines must share one knot count ({existing} vs {k})"
                            )))
                        }
                    }
                }
            }
            ActivationLayer::Relu => {}
        }
    }
    if spline_knots.is_some()
        && net
            .activations()
            .iter()
            .any(|a| matches!(a, ActivationLayer::Relu))
    {
        return Err(CliError::Malformed(
            "cannot mix ReLU and spline layers in one weights container".into(),
        ));
    }
    let act_kind: u32 = if spline_knots.is_some() { 1 } else { 0 };
    let width = if net.filters().len() > 1 {
        net.filters()[0].out_channels()
    } else {
        1
    };
    let d = net.filters()[0].dims().unwrap_or(1);

    let mut w = Writer::new(Kind::Weights, false);
    w.u32(net.filters().len() as u32);
    w.u32(width as u32);
    w.u32(act_kind);
    w.u32(spline_knots.unwrap_or(0) as u32);
    w.u8(net.biases().is_some() as u8);
    w.u32(d as u32);
    for f in net.filters() {
        w.u32(f.taps().len() as u32);
    }
    for f in net.filters() {
        for tap in f.taps() {
            for &o in &tap.offset {
                w.f64(o as f64);
            }
            for row in 0..f.out_channels() {
                for col in 0..f.in_channels() {
                    w.f64(tap.matrix[(row, col)]);
                }
            }
        }
    }
    if let Some(biases) = net.biases() {
        for b in biases {
            for &v in b.iter() {
                w.f64(v);
            }
        }
    }
    if spline_knots.is_some() {
        for a in net.activations() {
            if let ActivationLayer::Splines(splines) = a {
                for s in splines {
                    w.f64(s.t0());
                    w.f64(s.dt());
                    for &v in s.values() {
                        w.f64(v);
                    }
                }
            }
        }
    }
    Ok(w.finish())
}

pub fn decode_weights(bytes: &[u8]) -> Result<CnnDenoiser> {
    let (mut r, _) = open_header(bytes, Kind::Weights)?;
    let layers = r.u32()? as usize;
    let width = r.u32()? as usize;
    let act_kind = r.u32()?;
    let knots = r.u32()? as usize;
    let has_bias = r.u8()? != 0;
    let d = r.u32()? as usize;
    if layers == 0 || width == 0 || d == 0 || d > 16 {
        return Err(CliError::Malformed("implausible weight header".into()));
    }
    let mut tap_counts = Vec::with_capacity(layers);
    for _ in 0..layers {
        tap_counts.push(r.u32()? as usize);
    }
    let mut p = split_payload(&mut r)?;
    let plan = |i: usize| -> (usize, usize) {
        let input = if i == 0 { 1 } else { width };
        let output = if i + 1 == layers { 1 } else { width };
        (input, output)
    };
    let mut filters = Vec::with_capacity(layers);
    for (i, &taps_n) in tap_counts.iter().enumerate() {
        let (input, output) = plan(i);
        let mut taps = Vec::with_capacity(taps_n);
        for _ in 0..taps_n {
            let mut offset = Vec::with_capacity(d);
            for _ in 0..d {
                let v = p.f64()?;
                if v.fract() != 0.0 {
                    return Err(CliError::Malformed(format!("non-integer tap offset {v}")));
                }
                offset.push(v as i64);
            }
            let mut matrix = DMatrix::<f64>::zeros(output, input);
            for row in 0..output {
                for col in 0..input {
                    matrix[(row, col)] = p.f64()?;
                }
            }
            taps.push(Tap { offset, matrix });
        }
        filters.push(MultiFilter::new(input, output, taps)?);
    }
    let biases = if has_bias {
        let mut all = Vec::with_capacity(layers);
        for i in 0..layers {
            let (_, output) = plan(i);
            let mut b = DVector::<f64>::zeros(output);
            for row in 0..output {
                b[row] = p.f64()?;
            }
            all.push(b);
        }
        Some(all)
    } else {
        None
    };
    let mut activations = Vec::with_capacity(layers.saturating_sub(1));
    for _ in 0..layers.saturating_sub(1) {
        if act_kind == 0 {
            activations.push(ActivationLayer::Relu);
        } else {
            let mut splines = Vec::with_capacity(width);
            for _ in 0..width {
                let t0 = p.f64()?;
                let dt = p.f64()?;
                let mut values = Vec::with_capacity(knots);
                for _ in 0..knots {
                    values.push(p.f64()?);
                }
                splines.push(SplineActivation::new(t0, dt, values)?);
            }
            activations.push(ActivationLayer::Splines(splines));
        }
    }
    p.finish()?;
    Ok(CnnDenoiser::new(filters, activations, biases)?)
}

// ---------------------------------------------------------------------------
// spline

pub fn encode_spline(spline: &SplineActivation) -> Vec<u8> {
    let mut w = Writer::new(Kind::Spline, false);
    w.u32(spline.values().len() as u32);
    w.f64(spline.t0());
    w.f64(spline.dt());
    for &v in spline.values() {
        w.f64(v);
    }
    w.finish()
}

pub fn decode_spline(bytes: &[u8]) -> Result<SplineActivation> {
    let (mut r, _) = open_header(bytes, Kind::Spline)?;
    let knots = r.u32()? as usize;
    let mut p = split_payload(&mut r)?;
    let t0 = p.f64()?;
    let dt = p.f64()?;
    let mut values = Vec::with_capacity(knots);
    for _ in 0..knots {
        values.push(p.f64()?);
    }
    p.finish()?;
    Ok(SplineActivation::new(t0, dt, values)?)
}

// ---------------------------------------------------------------------------
// file-level wrappers

pub fn read_bytes(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_bytes(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_signal(path: &std::path::Path) -> Result<SignalFile> {
    decode_signal(&read_bytes(path)?)
}

pub fn save_signal(path: &std::path::Path, signal: &MultiSignal) -> Result<()> {
    write_bytes(path, &encode_signal(signal))
}

pub fn load_filter(path: &std::path::Path) -> Result<MultiFilter> {
    decode_filter(&read_bytes(path)?)
}

pub fn save_filter(path: &std::path::Path, filter: &MultiFilter) -> Result<()> {
    write_bytes(path, &encode_filter(filter))
}

pub fn load_mask(path: &std::path::Path) -> Result<SamplingMask> {
    decode_mask(&read_bytes(path)?)
}

pub fn save_mask(path: &std::path::Path, mask: &SamplingMask) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}

pub fn load_weights(path: &std::path::Path) -> Result<CnnDenoiser> {
    decode_weights(&read_bytes(path)?)
}

pub fn save_weights(path: &std::path::Path, net: &CnnDenoiser) -> Result<()> {
    write_bytes(path, &encode_weights(net)?)
}

pub fn load_spline(path: &std::path::Path) -> Result<SplineActivation> {
    decode_spline(&read_bytes(path)?)
}

pub fn save_spline(path: &std::path::Path, spline: &SplineActivation) -> Result<()> {
    write_bytes(path, &encode_spline(spline))
}
