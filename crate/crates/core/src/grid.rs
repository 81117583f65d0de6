//! Raster data model and ESRI ASCII grid IO.
//!
//! The interchange format is the plain-text ESRI ASCII grid: six header
//! lines (`ncols`, `nrows`, `xllcorner`, `yllcorner`, `cellsize`,
//! `NODATA_value`), then `nrows` lines of `ncols` whitespace-separated
//! values with row 0 northernmost. Class grids round-trip bit-exactly;
//! real grids are serialized with 6 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Meters per degree of arc used for pixel areas (2*pi*R/360 for the
/// conventional 6371 km sphere).
pub const METERS_PER_DEGREE: f64 = 111_194.93;

/// Georeferencing header shared by all grids. Cell (r, c) has its center at
/// (xll + (c + 0.5) * cellsize, yll + (nrows - 1 - r + 0.5) * cellsize),
/// with row 0 at the top (north).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
}

impl GridHeader {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::Invalid("grid dimensions must be at least 1x1".into()));
        }
        if !cellsize.is_finite() || cellsize <= 0.0 {
            return Err(Error::Invalid(format!("cellsize must be > 0, got {cellsize}")));
        }
        if !xll.is_finite() || !yll.is_finite() || !nodata.is_finite() {
            return Err(Error::Invalid("grid header values must be finite".into()));
        }
        Ok(GridHeader { ncols, nrows, xll, yll, cellsize, nodata })
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center coordinates of cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lon: self.xll + (col as f64 + 0.5) * self.cellsize,
            lat: self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize,
        }
    }

    /// The cell containing a point, or None when the point is off-grid.
    pub fn cell_at(&self, p: &GeoPoint) -> Option<(usize, usize)> {
        let col = ((p.lon - self.xll) / self.cellsize).floor();
        let row_from_bottom = ((p.lat - self.yll) / self.cellsize).floor();
        if col < 0.0 || row_from_bottom < 0.0 || col >= self.ncols as f64 || row_from_bottom >= self.nrows as f64 {
            return None;
        }
        Some((self.nrows - 1 - row_from_bottom as usize, col as usize))
    }

    /// Latitude of the row's cell centers.
    pub fn row_center_lat(&self, row: usize) -> f64 {
        self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize
    }
}

/// Per-pixel area model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelArea {
    /// Fixed hectares per pixel, independent of location.
    Constant { ha_per_pixel: f64 },
    /// Pixel height is cellsize * meters_per_degree; width shrinks with
    /// cos(latitude of the pixel center).
    LatitudeCorrected { meters_per_degree: f64 },
}

impl PixelArea {
    pub fn constant(ha_per_pixel: f64) -> Result<Self> {
        if !ha_per_pixel.is_finite() || ha_per_pixel <= 0.0 {
            return Err(Error::Invalid(format!("pixel area must be > 0, got {ha_per_pixel}")));
        }
        Ok(PixelArea::Constant { ha_per_pixel })
    }

    pub fn latitude_corrected() -> Self {
        PixelArea::LatitudeCorrected { meters_per_degree: METERS_PER_DEGREE }
    }

    /// Area in hectares of any pixel in the given row.
    pub fn pixel_ha(&self, header: &GridHeader, row: usize) -> f64 {
        match self {
            PixelArea::Constant { ha_per_pixel } => *ha_per_pixel,
            PixelArea::LatitudeCorrected { meters_per_degree } => {
                let lat = header.row_center_lat(row);
                let h_m = header.cellsize * meters_per_degree;
                let w_m = header.cellsize * meters_per_degree * lat.to_radians().cos();
                h_m * w_m / 10_000.0
            }
        }
    }
}

impl Default for PixelArea {
    fn default() -> Self {
        PixelArea::latitude_corrected()
    }
}

/// Membership predicate evaluated at pixel centers.
pub type Mask<'a> = &'a dyn Fn(&GeoPoint) -> bool;

/// Single-band raster of class codes (< 256) with nodata cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGrid {
    pub header: GridHeader,
    cells: Vec<Option<u8>>,
}

/// Single-band raster of finite reals with nodata cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    pub header: GridHeader,
    cells: Vec<Option<f64>>,
}

impl ClassGrid {
    pub fn new(header: GridHeader, cells: Vec<Option<u8>>) -> Result<Self> {
        if cells.len() != header.len() {
            return Err(Error::Invalid(format!(
                "cell count {} does not match {}x{} grid",
                cells.len(),
                header.nrows,
                header.ncols
            )));
        }
        Ok(ClassGrid { header, cells })
    }

    /// Build a grid by evaluating `f(row, col)`.
    pub fn from_fn(header: GridHeader, mut f: impl FnMut(usize, usize) -> Option<u8>) -> Self {
        let mut cells = Vec::with_capacity(header.len());
        for r in 0..header.nrows {
            for c in 0..header.ncols {
                cells.push(f(r, c));
            }
        }
        ClassGrid { header, cells }
    }

    pub fn cells(&self) -> &[Option<u8>] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        self.cells[row * self.header.ncols + col]
    }

    /// Class code at a point; errors when the point is off-grid or the cell
    /// is nodata.
    pub fn class_at(&self, p: &GeoPoint) -> Result<u8> {
        self.header
            .cell_at(p)
            .and_then(|(r, c)| self.get(r, c))
            .ok_or(Error::OffGrid { lon: p.lon, lat: p.lat })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, tokens) = read_ascii_cells(path)?;
        let mut cells = Vec::with_capacity(header.len());
        for (line, token) in tokens {
            if token == header.nodata {
                cells.push(None);
            } else if token.fract() == 0.0 && (0.0..256.0).contains(&token) {
                cells.push(Some(token as u8));
            } else {
                return Err(Error::parse(
                    path,
                    line,
                    format!("class code {token} is not an integer in 0..256"),
                ));
            }
        }
        ClassGrid::new(header, cells)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_ascii(path, &self.header, self.cells.iter().map(|c| match c {
            Some(code) => code.to_string(),
            None => format_full(self.header.nodata),
        }))
    }
}

impl RealGrid {
    pub fn new(header: GridHeader, cells: Vec<Option<f64>>) -> Result<Self> {
        if cells.len() != header.len() {
            return Err(Error::Invalid(format!(
                "cell count {} does not match {}x{} grid",
                cells.len(),
                header.nrows,
                header.ncols
            )));
        }
        if let Some(bad) = cells.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite cell value {bad}")));
        }
        Ok(RealGrid { header, cells })
    }

    pub fn from_fn(header: GridHeader, f: impl Fn(usize, usize) -> Option<f64>) -> Result<Self> {
        let mut cells = Vec::with_capacity(header.len());
        for r in 0..header.nrows {
            for c in 0..header.ncols {
                cells.push(f(r, c));
            }
        }
        RealGrid::new(header, cells)
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.header.ncols + col]
    }

    pub fn value_at(&self, p: &GeoPoint) -> Result<f64> {
        self.header
            .cell_at(p)
            .and_then(|(r, c)| self.get(r, c))
            .ok_or(Error::OffGrid { lon: p.lon, lat: p.lat })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, tokens) = read_ascii_cells(path)?;
        let mut cells = Vec::with_capacity(header.len());
        for (line, token) in tokens {
            if token == header.nodata {
                cells.push(None);
            } else if token.is_finite() {
                cells.push(Some(token));
            } else {
                return Err(Error::parse(path, line, format!("non-finite value {token}")));
            }
        }
        RealGrid::new(header, cells)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_ascii(path, &self.header, self.cells.iter().map(|c| match c {
            Some(v) => format_sig6(*v),
            None => format_full(self.header.nodata),
        }))
    }
}

/// Shortest string that parses back to exactly this value.
fn format_full(v: f64) -> String {
    format!("{v}")
}

/// Format with 6 significant digits, plain decimal where reasonable.
fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = 5 - exp;
    if (0..=17).contains(&decimals) {
        let mut s = format!("{:.*}", decimals as usize, v);
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else if decimals < 0 {
        // |v| >= 1e6
        format!("{:.5e}", v)
    } else {
        format!("{:.5e}", v)
    }
}

fn parse_header_value<T: std::str::FromStr>(path: &Path, line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>()
        .map_err(|_| Error::parse(path, line, format!("malformed {key} value {raw:?}")))
}

/// Read an ASCII grid file, returning the header and the flat cell token
/// stream (with 1-based line numbers for diagnostics).
fn read_ascii_cells(path: &Path) -> Result<(GridHeader, Vec<(usize, f64)>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut ncols: Option<usize> = None;
    let mut nrows: Option<usize> = None;
    let mut xll: Option<f64> = None;
    let mut yll: Option<f64> = None;
    let mut cellsize: Option<f64> = None;
    let mut nodata: f64 = -9999.0;

    let mut tokens: Vec<(usize, f64)> = Vec::new();
    let mut data_rows = 0usize;
    let mut header_done = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let first = trimmed.split_whitespace().next().unwrap();
        if !header_done && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap().to_ascii_lowercase();
            let value = parts
                .next()
                .ok_or_else(|| Error::parse(path, line_no, format!("header line {key:?} has no value")))?;
            if parts.next().is_some() {
                return Err(Error::parse(path, line_no, "header line has trailing tokens"));
            }
            match key.as_str() {
                "ncols" => ncols = Some(parse_header_value(path, line_no, "ncols", value)?),
                "nrows" => nrows = Some(parse_header_value(path, line_no, "nrows", value)?),
                "xllcorner" => xll = Some(parse_header_value(path, line_no, "xllcorner", value)?),
                "yllcorner" => yll = Some(parse_header_value(path, line_no, "yllcorner", value)?),
                "cellsize" => cellsize = Some(parse_header_value(path, line_no, "cellsize", value)?),
                "nodata_value" => nodata = parse_header_value(path, line_no, "NODATA_value", value)?,
                other => {
                    return Err(Error::parse(path, line_no, format!("malformed header token {other:?}")));
                }
            }
        } else {
            if !header_done {
                header_done = true;
                for (name, missing) in [
                    ("ncols", ncols.is_none()),
                    ("nrows", nrows.is_none()),
                    ("xllcorner", xll.is_none()),
                    ("yllcorner", yll.is_none()),
                    ("cellsize", cellsize.is_none()),
                ] {
                    if missing {
                        return Err(Error::parse(path, line_no, format!("missing header line {name}")));
                    }
                }
            }
            let expected = ncols.unwrap();
            let mut row_count = 0usize;
            for raw in trimmed.split_whitespace() {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("non-numeric cell {raw:?}")))?;
                tokens.push((line_no, v));
                row_count += 1;
            }
            if row_count != expected {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("row {} has {row_count} values, expected {expected}", data_rows + 1),
                ));
            }
            data_rows += 1;
        }
    }

    if !header_done {
        return Err(Error::parse(path, 1, "file has no data rows"));
    }
    let header = GridHeader::new(
        ncols.unwrap(),
        nrows.unwrap(),
        xll.unwrap(),
        yll.unwrap(),
        cellsize.unwrap(),
        nodata,
    )?;
    if data_rows != header.nrows {
        return Err(Error::parse(
            path,
            0,
            format!("expected {} data rows, found {data_rows}", header.nrows),
        ));
    }
    Ok((header, tokens))
}

fn write_ascii(path: &Path, header: &GridHeader, cells: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", header.ncols);
    let _ = writeln!(out, "nrows {}", header.nrows);
    let _ = writeln!(out, "xllcorner {}", format_full(header.xll));
    let _ = writeln!(out, "yllcorner {}", format_full(header.yll));
    let _ = writeln!(out, "cellsize {}", format_full(header.cellsize));
    let _ = writeln!(out, "NODATA_value {}", format_full(header.nodata));
    let mut col = 0;
    for cell in cells {
        if col > 0 {
            out.push(' ');
        }
        out.push_str(&cell);
        col += 1;
        if col == header.ncols {
            out.push('\n');
            col = 0;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    writer.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Count non-nodata pixels per class, optionally restricted to pixels whose
/// centers satisfy `mask`.
pub fn class_pixel_counts(grid: &ClassGrid, mask: Option<Mask<'_>>) -> BTreeMap<u8, u64> {
    let mut counts = BTreeMap::new();
    let header = &grid.header;
    for row in 0..header.nrows {
        for col in 0..header.ncols {
            let Some(code) = grid.get(row, col) else { continue };
            if let Some(m) = mask {
                if !m(&header.cell_center(row, col)) {
                    continue;
                }
            }
            *counts.entry(code).or_insert(0u64) += 1;
        }
    }
    counts
}

/// Total area in hectares per class. Constant mode multiplies the pixel
/// count by the per-pixel area; latitude-corrected mode sums per-row areas.
pub fn stratum_areas(grid: &ClassGrid, pixel_area: &PixelArea, mask: Option<Mask<'_>>) -> BTreeMap<u8, f64> {
    match pixel_area {
        PixelArea::Constant { ha_per_pixel } => class_pixel_counts(grid, mask)
            .into_iter()
            .map(|(code, n)| (code, n as f64 * ha_per_pixel))
            .collect(),
        PixelArea::LatitudeCorrected { .. } => {
            let header = &grid.header;
            let mut areas: BTreeMap<u8, f64> = BTreeMap::new();
            for row in 0..header.nrows {
                let row_ha = pixel_area.pixel_ha(header, row);
                let mut row_counts: BTreeMap<u8, u64> = BTreeMap::new();
                for col in 0..header.ncols {
                    let Some(code) = grid.get(row, col) else { continue };
                    if let Some(m) = mask {
                        if !m(&header.cell_center(row, col)) {
                            continue;
                        }
                    }
                    *row_counts.entry(code).or_insert(0) += 1;
                }
                for (code, n) in row_counts {
                    *areas.entry(code).or_insert(0.0) += n as f64 * row_ha;
                }
            }
            areas
        }
    }
}
