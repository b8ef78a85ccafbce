//! Resampling coarse static rasters onto the pixel grid.

use super::WeatherRecord;
use crate::error::{Error, Result};

/// Row-major raster with unit spacing between cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::shape("grid", format!("{rows}×{cols} with {} values", values.len())));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Second derivatives of the natural cubic spline through `y` at unit spacing.
fn natural_second_derivatives(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1])
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        let denom = 4.0 - if i > 0 { c[i - 1] } else { 0.0 };
        c[i] = 1.0 / denom;
        d[i] = (rhs - if i > 0 { d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..k).rev() {
        m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
    }
    m
}

fn eval_spline(y: &[f64], m: &[f64], t: f64) -> f64 {
    let n = y.len();
    if n == 1 {
        return y[0];
    }
    let i = (t.floor().max(0.0) as usize).min(n - 2);
    let b = t - i as f64;
    let a = 1.0 - b;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) / 6.0
}

/// Separable natural bicubic spline over a grid of at least 4×4 cells.
#[derive(Clone, Debug)]
pub struct BicubicSurface {
    grid: Grid,
    row_m: Vec<Vec<f64>>,
}

impl BicubicSurface {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.rows < 4 || grid.cols < 4 {
            return Err(Error::Contract(format!("bicubic spline needs 4×4 cells, got {}×{}", grid.rows, grid.cols)));
        }
        let row_m = (0..grid.rows)
            .map(|r| natural_second_derivatives(&grid.values[r * grid.cols..(r + 1) * grid.cols]))
            .collect();
        Ok(Self { grid, row_m })
    }

    /// Value at fractional position `(r, c)` in cell units.
    pub fn at(&self, r: f64, c: f64) -> f64 {
        let g = &self.grid;
        let column: Vec<f64> = (0..g.rows)
            .map(|i| eval_spline(&g.values[i * g.cols..(i + 1) * g.cols], &self.row_m[i], c))
            .collect();
        let m = natural_second_derivatives(&column);
        eval_spline(&column, &m, r)
    }
}

fn bilinear_at(g: &Grid, r: f64, c: f64) -> f64 {
    let cell = |t: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i = (t.floor().max(0.0) as usize).min(n - 2);
        (i, i + 1, t - i as f64)
    };
    let (r0, r1, fr) = cell(r, g.rows);
    let (c0, c1, fc) = cell(c, g.cols);
    let top = g.at(r0, c0) * (1.0 - fc) + g.at(r0, c1) * fc;
    let bottom = g.at(r1, c0) * (1.0 - fc) + g.at(r1, c1) * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Samples a raster at arbitrary positions, bicubic when the grid allows it.
pub(crate) enum Interpolator {
    Bicubic(BicubicSurface),
    Bilinear(Grid),
}

impl Interpolator {
    pub(crate) fn new(grid: Grid) -> Self {
        if grid.rows >= 4 && grid.cols >= 4 {
            Interpolator::Bicubic(BicubicSurface::new(grid).expect("size checked"))
        } else {
            log::warn!("{}×{} raster is too small for cubic splines; using bilinear interpolation", grid.rows, grid.cols);
            Interpolator::Bilinear(grid)
        }
    }

    pub(crate) fn at(&self, r: f64, c: f64) -> f64 {
        match self {
            Interpolator::Bicubic(s) => s.at(r, c),
            Interpolator::Bilinear(g) => bilinear_at(g, r, c),
        }
    }
}

/// Upsamples by an integer factor: output is `((rows-1)·f+1) × ((cols-1)·f+1)`
/// and coincides with the input at every source cell.
pub fn align_static_raster(grid: &Grid, factor: usize) -> Result<Grid> {
    if factor == 0 {
        return Err(Error::Config("upsampling factor must be positive".into()));
    }
    let interp = Interpolator::new(grid.clone());
    let rows = (grid.rows - 1) * factor + 1;
    let cols = (grid.cols - 1) * factor + 1;
    let f = factor as f64;
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            values.push(interp.at(i as f64 / f, j as f64 / f));
        }
    }
    Grid::new(rows, cols, values)
}

/// Every pixel of a field receives its own copy of the centroid series.
pub fn broadcast_weather(series: &[WeatherRecord], pixels: usize) -> Vec<Vec<WeatherRecord>> {
    vec![series.to_vec(); pixels]
}
