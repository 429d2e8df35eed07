//! Channel-independent edge-preserving denoising.
//!
//! Two filters live here: a direct bilateral filter, and a bilateral grid
//! that fits a local affine model `v ~ a * g + b` per lattice cell and
//! slices the coefficients back to full resolution. Both run on one plane
//! at a time; [`cdm_denoise`] applies the grid to each RGB channel with the
//! channel as its own guide, so no channel ever sees another.

use crate::error::{Error, Result};
use crate::image::{merge_channels, split_channels, Image};

/// Penalty on the per-cell gain in the affine fit.
pub const RIDGE: f64 = 1e-3;

/// Gaussian bilateral filter over a square window of radius `ceil(3 sigma_s)`.
/// Taps outside the image are dropped and the remaining weights renormalized.
pub fn bilateral_brute(plane: &Image, sigma_s: f64, sigma_r: f64) -> Result<Image> {
    plane.expect_channels(1, "bilateral input")?;
    if !(sigma_s > 0.0) || !(sigma_r > 0.0) {
        return Err(Error::Param(format!(
            "bilateral sigmas must be positive (sigma_s={sigma_s}, sigma_r={sigma_r})"
        )));
    }
    let (w, h) = (plane.width() as isize, plane.height() as isize);
    let radius = (3.0 * sigma_s).ceil() as isize;
    let spatial: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma_s * sigma_s)).exp())
        .collect();
    let range_denom = 2.0 * sigma_r * sigma_r;
    let src = plane.data();

    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let center = src[(y * w + x) as usize] as f64;
            let mut norm = 0.0;
            // Accumulate differences from the center so equal neighbourhoods
            // reproduce the center value bit for bit.
            let mut acc = 0.0;
            for qy in (y - radius).max(0)..=(y + radius).min(h - 1) {
                let wy = spatial[(qy - y + radius) as usize];
                for qx in (x - radius).max(0)..=(x + radius).min(w - 1) {
                    let v = src[(qy * w + qx) as usize] as f64;
                    let diff = v - center;
                    let weight =
                        wy * spatial[(qx - x + radius) as usize] * (-(diff * diff) / range_denom).exp();
                    norm += weight;
                    acc += weight * diff;
                }
            }
            out.push((center + acc / norm) as f32);
        }
    }
    Ok(Image::from_parts_unchecked(plane.width(), plane.height(), 1, out))
}

/// Grid resolution: guide-intensity bins, rows, columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridDims {
    pub depth: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridDims {
    fn default() -> Self {
        Self {
            depth: 8,
            rows: 8,
            cols: 8,
        }
    }
}

impl GridDims {
    pub fn cells(&self) -> usize {
        self.depth * self.rows * self.cols
    }

    #[inline]
    pub fn index(&self, d: usize, r: usize, c: usize) -> usize {
        (d * self.rows + r) * self.cols + c
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::Param(format!("grid dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

/// Per-cell sufficient statistics for the affine fit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellStats {
    pub count: f64,
    pub sum_g: f64,
    pub sum_gg: f64,
    pub sum_v: f64,
    pub sum_gv: f64,
}

impl CellStats {
    fn add(&mut self, g: f64, v: f64) {
        self.count += 1.0;
        self.sum_g += g;
        self.sum_gg += g * g;
        self.sum_v += v;
        self.sum_gv += g * v;
    }

    fn scaled_add(&mut self, other: &CellStats, k: f64) {
        self.count += k * other.count;
        self.sum_g += k * other.sum_g;
        self.sum_gg += k * other.sum_gg;
        self.sum_v += k * other.sum_v;
        self.sum_gv += k * other.sum_gv;
    }

    /// Ridge regression of `v` on `g` over the cell's (weighted) samples:
    /// minimizes `sum (v - a g - b)^2 + RIDGE * a^2`. Empty cells get the
    /// neutral `(1, 0)`.
    pub fn fit(&self) -> (f64, f64) {
        if self.count <= 0.0 {
            return (1.0, 0.0);
        }
        let mean_g = self.sum_g / self.count;
        let mean_v = self.sum_v / self.count;
        // Centered second moments as sums, not means.
        let sxx = (self.sum_gg - self.sum_g * mean_g).max(0.0);
        let sxy = self.sum_gv - self.sum_g * mean_v;
        let a = sxy / (sxx + RIDGE);
        (a, mean_v - a * mean_g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilateralGrid {
    pub dims: GridDims,
    /// Gain per cell, indexed by [`GridDims::index`].
    pub a: Vec<f64>,
    /// Offset per cell.
    pub b: Vec<f64>,
    /// Blurred splat weight per cell; zero means the cell holds `(1, 0)`.
    pub weight: Vec<f64>,
    pub channel: Option<usize>,
}

impl BilateralGrid {
    /// A grid whose every cell is the identity map `(1, 0)`.
    pub fn neutral(dims: GridDims) -> Self {
        let n = dims.cells();
        Self {
            dims,
            a: vec![1.0; n],
            b: vec![0.0; n],
            weight: vec![0.0; n],
            channel: None,
        }
    }
}

#[inline]
fn cell_of(t: f64, n: usize) -> usize {
    ((t * n as f64).floor().max(0.0) as usize).min(n - 1)
}

fn check_guide(guide: &Image) -> Result<()> {
    guide.expect_channels(1, "guide")?;
    if let Some(v) = guide.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("guide value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Accumulates per-pixel statistics into the lattice, without blurring.
pub fn splat(plane: &Image, guide: &Image, dims: GridDims) -> Result<Vec<CellStats>> {
    plane.expect_channels(1, "grid plane")?;
    check_guide(guide)?;
    plane.expect_same_dims(guide, "plane/guide dimensions")?;
    dims.validate()?;
    let (w, h) = (plane.width(), plane.height());
    let mut cells = vec![CellStats::default(); dims.cells()];
    for y in 0..h {
        let r = cell_of(y as f64 / h as f64, dims.rows);
        for x in 0..w {
            let c = cell_of(x as f64 / w as f64, dims.cols);
            let g = guide.get(x, y, 0) as f64;
            let d = cell_of(g, dims.depth);
            cells[dims.index(d, r, c)].add(g, plane.get(x, y, 0) as f64);
        }
    }
    Ok(cells)
}

/// `[1, 2, 1] / 4` along one lattice axis with replicated borders.
fn blur_axis(cells: &[CellStats], dims: GridDims, axis: usize) -> Vec<CellStats> {
    let extent = [dims.depth, dims.rows, dims.cols][axis];
    let mut out = vec![CellStats::default(); cells.len()];
    for d in 0..dims.depth {
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                let pos = [d, r, c];
                let at = |k: usize| {
                    let mut p = pos;
                    p[axis] = k;
                    cells[dims.index(p[0], p[1], p[2])]
                };
                let i = pos[axis];
                let acc = &mut out[dims.index(d, r, c)];
                acc.scaled_add(&at(i.saturating_sub(1)), 0.25);
                acc.scaled_add(&at(i), 0.5);
                acc.scaled_add(&at((i + 1).min(extent - 1)), 0.25);
            }
        }
    }
    out
}

/// Splat, blur along all three axes, then fit one affine model per cell.
pub fn grid_build(plane: &Image, guide: &Image, dims: GridDims) -> Result<BilateralGrid> {
    let mut cells = splat(plane, guide, dims)?;
    for axis in 0..3 {
        cells = blur_axis(&cells, dims, axis);
    }
    let mut grid = BilateralGrid::neutral(dims);
    for (k, stats) in cells.iter().enumerate() {
        let (a, b) = stats.fit();
        grid.a[k] = a;
        grid.b[k] = b;
        grid.weight[k] = stats.count;
    }
    Ok(grid)
}

/// Linear interpolation setup along one axis at a continuous coordinate
/// with clamped edges.
#[inline]
fn lerp_setup(t: f64, n: usize) -> (usize, usize, f64) {
    let t = t.clamp(0.0, (n - 1) as f64);
    let i0 = t.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, t - i0 as f64)
}

/// Trilinear lookup of the grid coefficients at every pixel.
pub fn grid_slice(grid: &BilateralGrid, guide: &Image) -> Result<(Image, Image)> {
    check_guide(guide)?;
    let dims = grid.dims;
    let (w, h) = (guide.width(), guide.height());
    let mut a_map = Vec::with_capacity(w * h);
    let mut b_map = Vec::with_capacity(w * h);
    for y in 0..h {
        let (r0, r1, fr) = lerp_setup(y as f64 / h as f64 * dims.rows as f64 - 0.5, dims.rows);
        for x in 0..w {
            let (c0, c1, fc) =
                lerp_setup(x as f64 / w as f64 * dims.cols as f64 - 0.5, dims.cols);
            let g = guide.get(x, y, 0) as f64;
            let (d0, d1, fd) = lerp_setup(g * dims.depth as f64 - 0.5, dims.depth);
            let mut a = 0.0;
            let mut b = 0.0;
            for (d, wd) in [(d0, 1.0 - fd), (d1, fd)] {
                for (r, wr) in [(r0, 1.0 - fr), (r1, fr)] {
                    for (c, wc) in [(c0, 1.0 - fc), (c1, fc)] {
                        let wgt = wd * wr * wc;
                        let k = dims.index(d, r, c);
                        a += wgt * grid.a[k];
                        b += wgt * grid.b[k];
                    }
                }
            }
            a_map.push(a as f32);
            b_map.push(b as f32);
        }
    }
    Ok((
        Image::from_parts_unchecked(w, h, 1, a_map),
        Image::from_parts_unchecked(w, h, 1, b_map),
    ))
}

/// Self-guided grid filter of one plane: `clamp(a * v + b, 0, 1)`.
pub fn grid_filter(plane: &Image, dims: GridDims) -> Result<Image> {
    let guide = plane.clamped();
    let grid = grid_build(plane, &guide, dims)?;
    let (a, b) = grid_slice(&grid, &guide)?;
    let data = plane
        .data()
        .iter()
        .zip(a.data().iter().zip(b.data()))
        .map(|(&v, (&a, &b))| (a * v + b).clamp(0.0, 1.0))
        .collect();
    Ok(Image::from_parts_unchecked(plane.width(), plane.height(), 1, data))
}

fn per_channel(r: &Image, mut f: impl FnMut(&Image) -> Result<Image>) -> Result<Image> {
    r.expect_channels(3, "denoise input")?;
    let planes = split_channels(r)?;
    let filtered = [f(&planes[0])?, f(&planes[1])?, f(&planes[2])?];
    merge_channels(&filtered)
}

/// Grid denoising of each RGB channel on its own.
pub fn cdm_denoise(r: &Image, dims: GridDims) -> Result<Image> {
    per_channel(r, |plane| grid_filter(plane, dims))
}

/// Direct bilateral filtering of each RGB channel on its own.
pub fn bilateral_denoise(r: &Image, sigma_s: f64, sigma_r: f64) -> Result<Image> {
    per_channel(r, |plane| bilateral_brute(plane, sigma_s, sigma_r))
}
