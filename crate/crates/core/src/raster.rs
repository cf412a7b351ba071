//! Raster and built-up map types, NetPBM I/O and neighborhood windows.
//!
//! Samples are stored pixel-interleaved in row-major order: the value of band
//! `b` at `(row, col)` lives at `(row * width + col) * bands + b`.
//!
//! Border policy for windows: built-up neighbors outside the grid read as
//! non-built (`-1`); raster neighbors outside the grid replicate the nearest
//! edge sample.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const BUILT: i8 = 1;
pub const NON_BUILT: i8 = -1;

/// Grid coordinate of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

/// ASCII (P2/P3) or binary (P5/P6) sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PnmEncoding {
    Ascii,
    #[default]
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    bands: usize,
    maxval: u16,
    values: Vec<u16>,
    encoding: PnmEncoding,
}

impl RasterGrid {
    pub fn new(width: usize, height: usize, bands: usize, maxval: u16, values: Vec<u16>) -> Result<Self> {
        if bands != 1 && bands != 3 {
            return Err(Error::invalid(format!("raster must have 1 or 3 bands, got {bands}")));
        }
        if values.len() != width * height * bands {
            return Err(Error::dims(
                format!("{} samples", width * height * bands),
                format!("{} samples", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|&&v| v > maxval) {
            return Err(Error::invalid(format!("sample {bad} exceeds maxval {maxval}")));
        }
        Ok(RasterGrid {
            width,
            height,
            bands,
            maxval,
            values,
            encoding: PnmEncoding::Binary,
        })
    }

    pub fn with_encoding(mut self, encoding: PnmEncoding) -> Self {
        self.encoding = encoding;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn encoding(&self) -> PnmEncoding {
        self.encoding
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, cell: Cell, band: usize) -> u16 {
        self.values[(cell.row * self.width + cell.col) * self.bands + band]
    }
}

/// A raster rescaled to `[-1, 1]` via `2 * raw / maxval - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRaster {
    width: usize,
    height: usize,
    bands: usize,
    values: Vec<f64>,
}

impl NormalizedRaster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, cell: Cell, band: usize) -> f64 {
        self.values[(cell.row * self.width + cell.col) * self.bands + band]
    }

    /// Width of a window vector: `bands * (1 + |N|)`.
    pub fn window_len(&self, spec: &NeighborhoodSpec) -> usize {
        self.bands * (1 + spec.size())
    }

    /// Appends the center bands followed by each neighbor's bands to `out`.
    /// Off-grid neighbors replicate the nearest edge sample.
    pub fn window_into(&self, cell: Cell, spec: &NeighborhoodSpec, out: &mut Vec<f64>) -> Result<()> {
        check_inside(cell, self.width, self.height)?;
        let base = (cell.row * self.width + cell.col) * self.bands;
        out.extend_from_slice(&self.values[base..base + self.bands]);
        for &(dr, dc) in spec.offsets() {
            let r = clamp_index(cell.row as isize + dr, self.height);
            let c = clamp_index(cell.col as isize + dc, self.width);
            let base = (r * self.width + c) * self.bands;
            out.extend_from_slice(&self.values[base..base + self.bands]);
        }
        Ok(())
    }

    pub fn window(&self, cell: Cell, spec: &NeighborhoodSpec) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.window_len(spec));
        self.window_into(cell, spec, &mut out)?;
        Ok(out)
    }
}

pub fn normalize(grid: &RasterGrid) -> Result<NormalizedRaster> {
    if grid.maxval == 0 {
        return Err(Error::invalid("cannot normalize a raster with maxval 0"));
    }
    let scale = 2.0 / f64::from(grid.maxval);
    Ok(NormalizedRaster {
        width: grid.width,
        height: grid.height,
        bands: grid.bands,
        values: grid.values.iter().map(|&v| f64::from(v) * scale - 1.0).collect(),
    })
}

/// Binary built-up map with labels `+1` (built-up) and `-1` (non built-up).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BuiltUpMap {
    width: usize,
    height: usize,
    labels: Vec<i8>,
}

impl BuiltUpMap {
    pub fn new(width: usize, height: usize, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::dims(
                format!("{} labels", width * height),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != BUILT && l != NON_BUILT) {
            return Err(Error::invalid(format!("label {bad} is not -1 or +1")));
        }
        Ok(BuiltUpMap { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: i8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn cells(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, cell: Cell) -> i8 {
        self.labels[cell.row * self.width + cell.col]
    }

    pub fn built_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == BUILT).count()
    }

    pub fn same_shape(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    /// Appends the center label followed by each neighbor label to `out`.
    /// Off-grid neighbors read as non built-up.
    pub fn window_into(&self, cell: Cell, spec: &NeighborhoodSpec, out: &mut Vec<f64>) -> Result<()> {
        check_inside(cell, self.width, self.height)?;
        out.push(f64::from(self.get(cell)));
        for &(dr, dc) in spec.offsets() {
            let r = cell.row as isize + dr;
            let c = cell.col as isize + dc;
            let label = if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
                NON_BUILT
            } else {
                self.labels[r as usize * self.width + c as usize]
            };
            out.push(f64::from(label));
        }
        Ok(())
    }

    pub fn window(&self, cell: Cell, spec: &NeighborhoodSpec) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(1 + spec.size());
        self.window_into(cell, spec, &mut out)?;
        Ok(out)
    }

    /// Grayscale rendering: built-up white (255), non built-up black (0).
    pub fn to_grid(&self) -> RasterGrid {
        let values = self.labels.iter().map(|&l| if l == BUILT { 255 } else { 0 }).collect();
        RasterGrid {
            width: self.width,
            height: self.height,
            bands: 1,
            maxval: 255,
            values,
            encoding: PnmEncoding::Binary,
        }
    }

    /// Thresholds a one-band grid at `maxval / 2`.
    pub fn from_grid(grid: &RasterGrid) -> Result<Self> {
        if grid.bands != 1 {
            return Err(Error::invalid(format!(
                "built-up map must be a 1-band PGM, got {} bands",
                grid.bands
            )));
        }
        let half = f64::from(grid.maxval) / 2.0;
        let labels = grid
            .values
            .iter()
            .map(|&v| if f64::from(v) >= half { BUILT } else { NON_BUILT })
            .collect();
        Self::new(grid.width, grid.height, labels)
    }
}

fn check_inside(cell: Cell, width: usize, height: usize) -> Result<()> {
    if cell.row >= height || cell.col >= width {
        return Err(Error::invalid(format!(
            "cell ({}, {}) outside {width}x{height} grid",
            cell.row, cell.col
        )));
    }
    Ok(())
}

fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodKind {
    Moore,
    VonNeumann,
}

/// Neighborhood shape. Offsets are enumerated row-major over
/// `(-r..=r) x (-r..=r)`, skipping the center; the order is part of the
/// serialized feature layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSpec {
    kind: NeighborhoodKind,
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl NeighborhoodSpec {
    pub fn new(kind: NeighborhoodKind, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::invalid("neighborhood radius must be at least 1"));
        }
        let r = radius as isize;
        let mut offsets = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                if dr == 0 && dc == 0 {
                    continue;
                }
                if kind == NeighborhoodKind::VonNeumann && dr.abs() + dc.abs() > r {
                    continue;
                }
                offsets.push((dr, dc));
            }
        }
        Ok(NeighborhoodSpec { kind, radius, offsets })
    }

    pub fn moore(radius: usize) -> Result<Self> {
        Self::new(NeighborhoodKind::Moore, radius)
    }

    pub fn von_neumann(radius: usize) -> Result<Self> {
        Self::new(NeighborhoodKind::VonNeumann, radius)
    }

    pub fn kind(&self) -> NeighborhoodKind {
        self.kind
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of neighbors, excluding the center.
    pub fn size(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self::new(NeighborhoodKind::Moore, 1).expect("radius 1 is valid")
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn write_raster(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_builtup(path: impl AsRef<Path>) -> Result<BuiltUpMap> {
    BuiltUpMap::from_grid(&read_raster(path)?)
}

pub fn write_builtup(map: &BuiltUpMap, path: impl AsRef<Path>) -> Result<()> {
    write_raster(&map.to_grid(), path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if start >= self.bytes.len() {
                Error::format(start, format!("truncated: expected {what}"))
            } else {
                Error::format(start, format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

/// Parses P2/P3/P5/P6 bytes.
pub fn decode_pnm(bytes: &[u8]) -> Result<RasterGrid> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::format(0, "missing netpbm magic number"));
    }
    let (bands, encoding) = match bytes[1] {
        b'2' => (1, PnmEncoding::Ascii),
        b'3' => (3, PnmEncoding::Ascii),
        b'5' => (1, PnmEncoding::Binary),
        b'6' => (3, PnmEncoding::Binary),
        _ => return Err(Error::format(1, "unsupported netpbm variant")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > u32::from(u16::MAX) {
        return Err(Error::format(maxval_at, format!("maxval {maxval} not in 1..=65535")));
    }
    let maxval = maxval as u16;
    let count = width * height * bands;
    let mut values = Vec::with_capacity(count);

    match encoding {
        PnmEncoding::Ascii => {
            for _ in 0..count {
                cur.skip_space_and_comments();
                let at = cur.pos;
                let v = cur.number("sample")?;
                if v > u32::from(maxval) {
                    return Err(Error::format(at, format!("sample {v} exceeds maxval {maxval}")));
                }
                values.push(v as u16);
            }
        }
        PnmEncoding::Binary => {
            match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                Some(_) => return Err(Error::format(cur.pos, "expected whitespace before payload")),
                None => return Err(Error::format(cur.pos, "truncated: missing payload")),
            }
            let width_bytes = if maxval > 255 { 2 } else { 1 };
            let payload = &bytes[cur.pos..];
            if payload.len() < count * width_bytes {
                return Err(Error::format(
                    bytes.len(),
                    format!(
                        "truncated payload: expected {} bytes, found {}",
                        count * width_bytes,
                        payload.len()
                    ),
                ));
            }
            for i in 0..count {
                let v = if width_bytes == 2 {
                    u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]])
                } else {
                    u16::from(payload[i])
                };
                if v > maxval {
                    return Err(Error::format(
                        cur.pos + i * width_bytes,
                        format!("sample {v} exceeds maxval {maxval}"),
                    ));
                }
                values.push(v);
            }
        }
    }

    Ok(RasterGrid {
        width,
        height,
        bands,
        maxval,
        values,
        encoding,
    })
}

/// Canonical NetPBM bytes: `P?\n<w> <h>\n<maxval>\n` followed by the payload.
/// ASCII payloads put one image row per line with single-space separators.
pub fn encode_pnm(grid: &RasterGrid) -> Vec<u8> {
    let magic = match (grid.bands, grid.encoding) {
        (1, PnmEncoding::Ascii) => "P2",
        (_, PnmEncoding::Ascii) => "P3",
        (1, PnmEncoding::Binary) => "P5",
        (_, PnmEncoding::Binary) => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", grid.width, grid.height, grid.maxval).into_bytes();
    match grid.encoding {
        PnmEncoding::Ascii => {
            let row_len = grid.width * grid.bands;
            if row_len > 0 {
                for row in grid.values.chunks(row_len) {
                    let line: Vec<String> = row.iter().map(u16::to_string).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
        }
        PnmEncoding::Binary => {
            if grid.maxval > 255 {
                for v in &grid.values {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            } else {
                out.extend(grid.values.iter().map(|&v| v as u8));
            }
        }
    }
    out
}
