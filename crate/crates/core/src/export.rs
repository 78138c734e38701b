//! Receptive-field images.
//!
//! Each weight column is drawn as one tile, scaled to its own min/max with
//! larger weights darker. Tiles are laid out row by row on a white grid with
//! one-pixel gutters and written as binary 8-bit PGM.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rbm::RbmParams;
use crate::scalar::Scalar;

/// Gray level of a tile whose weights are all equal.
pub const FLAT_TILE_GRAY: u8 = 128;
const BACKGROUND: u8 = 255;
const GUTTER: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl PgmImage {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary `P5` encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Grid shape used for `tiles` tiles when `cols` is not given.
pub fn default_grid_cols(tiles: usize) -> usize {
    ((tiles as f64).sqrt().ceil() as usize).max(1)
}

pub fn render_filters<T: Scalar>(
    params: &RbmParams<T>,
    tile_width: usize,
    tile_height: usize,
    grid_cols: usize,
) -> Result<PgmImage> {
    if tile_width * tile_height != params.n_visible() {
        return Err(Error::dim(format!(
            "{tile_width}x{tile_height} tiles need {} visible units, model has {}",
            tile_width * tile_height,
            params.n_visible()
        )));
    }
    if grid_cols == 0 {
        return Err(Error::Config("grid needs at least one column".into()));
    }
    let tiles = params.n_hidden();
    let grid_rows = tiles.div_ceil(grid_cols);
    let width = grid_cols * tile_width + (grid_cols - 1) * GUTTER;
    let height = grid_rows * tile_height + (grid_rows - 1) * GUTTER;
    let mut pixels = vec![BACKGROUND; width * height];

    let w = params.weights();
    for k in 0..tiles {
        let col = w.column(k);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x.widen()), hi.max(x.widen()))
        });
        let x0 = (k % grid_cols) * (tile_width + GUTTER);
        let y0 = (k / grid_cols) * (tile_height + GUTTER);
        for (n, value) in col.iter().enumerate() {
            let gray = if hi > lo {
                (255.0 * (hi - value.widen()) / (hi - lo)).round() as u8
            } else {
                FLAT_TILE_GRAY
            };
            let (tx, ty) = (n % tile_width, n / tile_width);
            pixels[(y0 + ty) * width + x0 + tx] = gray;
        }
    }
    Ok(PgmImage {
        width,
        height,
        pixels,
    })
}

pub fn export_filters<T: Scalar>(
    params: &RbmParams<T>,
    tile_width: usize,
    tile_height: usize,
    grid_cols: usize,
    path: impl AsRef<Path>,
) -> Result<PgmImage> {
    let img = render_filters(params, tile_width, tile_height, grid_cols)?;
    std::fs::write(path, img.to_bytes())?;
    Ok(img)
}
