//! Pixel geometry of a rendered code and the per-pixel target it implies.
//!
//! Convention: `y = 1` means the pixel must binarize **white** (gray ≥ ½),
//! `y = 0` means it must binarize black. Padding pixels carry `y = 1` and
//! belong to no module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::{ModuleMatrix, QrSpec};
use crate::raster::RasterImage;

/// Module grid laid out on a square raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    /// Modules per side.
    pub modules: usize,
    pub module_px: usize,
    pub padding_px: usize,
}

/// Pixel rectangle `M_k` covered by one module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleRegion {
    pub row: usize,
    pub col: usize,
    /// Top-left pixel.
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

impl ModuleRegion {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.top..self.top + self.size).contains(&i) && (self.left..self.left + self.size).contains(&j)
    }

    /// Iterates `(i, j)` pixel coordinates row by row.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.top..self.top + self.size).flat_map(move |i| (self.left..self.left + self.size).map(move |j| (i, j)))
    }
}

impl Geometry {
    pub fn new(modules: usize, module_px: usize, padding_px: usize) -> Self {
        Self {
            modules,
            module_px,
            padding_px,
        }
    }

    pub fn side(&self) -> usize {
        self.modules * self.module_px + 2 * self.padding_px
    }

    pub fn num_modules(&self) -> usize {
        self.modules * self.modules
    }

    pub fn region(&self, k: usize) -> ModuleRegion {
        let (row, col) = (k / self.modules, k % self.modules);
        ModuleRegion {
            row,
            col,
            top: self.padding_px + row * self.module_px,
            left: self.padding_px + col * self.module_px,
            size: self.module_px,
        }
    }

    pub fn regions(&self) -> Vec<ModuleRegion> {
        (0..self.num_modules()).map(|k| self.region(k)).collect()
    }

    /// Module id of pixel `(i, j)`, `None` in the quiet zone.
    pub fn module_at(&self, i: usize, j: usize) -> Option<usize> {
        let code = self.modules * self.module_px;
        let (i, j) = (i.checked_sub(self.padding_px)?, j.checked_sub(self.padding_px)?);
        if i >= code || j >= code {
            return None;
        }
        Some((i / self.module_px) * self.modules + j / self.module_px)
    }

    /// Paints the quiet zone white; module pixels are left alone.
    pub fn clear_quiet_zone(&self, img: &mut RasterImage) -> Result<()> {
        self.check_image(img)?;
        for i in 0..img.height() {
            for j in 0..img.width() {
                if self.module_at(i, j).is_none() {
                    img.pixel_mut(i, j).fill(1.0);
                }
            }
        }
        Ok(())
    }

    /// Errors unless `img` is `side × side`.
    pub fn check_image(&self, img: &RasterImage) -> Result<()> {
        let side = self.side();
        if img.height() != side || img.width() != side {
            return Err(Error::DimensionMismatch(format!(
                "expected {side}x{side} image for this geometry, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }
}

/// Per-pixel target `y` with module bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBitmap {
    geometry: Geometry,
    /// Per-pixel target, row-major.
    y: Vec<u8>,
    /// Per-pixel module id.
    module_index: Vec<Option<u32>>,
    regions: Vec<ModuleRegion>,
    /// Per-module target bit (`1` = white).
    module_target: Vec<u8>,
    /// Per-module function-pattern flag.
    function: Vec<bool>,
}

impl TargetBitmap {
    /// Target for a module matrix at the given pixel geometry.
    pub fn from_matrix(matrix: &ModuleMatrix, module_px: usize, padding_px: usize) -> Result<Self> {
        if module_px == 0 {
            return Err(Error::ModuleTooSmall(0, 1));
        }
        let geometry = Geometry::new(matrix.size(), module_px, padding_px);
        let module_target: Vec<u8> = matrix.bits().iter().map(|&dark| u8::from(!dark)).collect();
        let side = geometry.side();
        let mut y = vec![1u8; side * side];
        let mut module_index = vec![None; side * side];
        for i in 0..side {
            for j in 0..side {
                if let Some(k) = geometry.module_at(i, j) {
                    y[i * side + j] = module_target[k];
                    module_index[i * side + j] = Some(k as u32);
                }
            }
        }
        Ok(Self {
            geometry,
            y,
            module_index,
            regions: geometry.regions(),
            module_target,
            function: matrix.function_mask().to_vec(),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn height(&self) -> usize {
        self.geometry.side()
    }

    pub fn width(&self) -> usize {
        self.geometry.side()
    }

    pub fn num_modules(&self) -> usize {
        self.regions.len()
    }

    pub fn y(&self, i: usize, j: usize) -> u8 {
        self.y[i * self.width() + j]
    }

    pub fn y_values(&self) -> &[u8] {
        &self.y
    }

    pub fn module_index(&self, i: usize, j: usize) -> Option<usize> {
        self.module_index[i * self.width() + j].map(|k| k as usize)
    }

    pub fn regions(&self) -> &[ModuleRegion] {
        &self.regions
    }

    /// Target bit of module `k`, the center value `y^c` of `M_k`.
    pub fn module_target(&self, k: usize) -> u8 {
        self.module_target[k]
    }

    pub fn module_targets(&self) -> &[u8] {
        &self.module_target
    }

    pub fn is_function(&self, k: usize) -> bool {
        self.function[k]
    }

    /// Errors unless `img` has this target's pixel dimensions.
    pub fn check_image(&self, img: &RasterImage) -> Result<()> {
        self.geometry.check_image(img)
    }

    /// The binary raster that realizes this target exactly (gray, 1 channel).
    pub fn to_raster(&self) -> RasterImage {
        let side = self.width();
        RasterImage::new(side, side, 1, self.y.iter().map(|&v| f64::from(v)).collect()).expect("side × side buffer")
    }
}

/// Renders a module matrix to a black/white raster and its target bitmap.
pub fn render(matrix: &ModuleMatrix, spec: &QrSpec) -> Result<(RasterImage, TargetBitmap)> {
    spec.validate()?;
    if matrix.size() != spec.modules() {
        return Err(Error::DimensionMismatch(format!(
            "matrix side {} does not match version {} (side {})",
            matrix.size(),
            spec.version,
            spec.modules()
        )));
    }
    let target = TargetBitmap::from_matrix(matrix, spec.module_px, spec.padding_px)?;
    Ok((target.to_raster(), target))
}
