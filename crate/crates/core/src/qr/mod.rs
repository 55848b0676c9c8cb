//! ISO/IEC 18004 QR symbols, byte mode, versions 1 through 10.
//!
//! The mask pattern is always an explicit input; there is no penalty-score
//! selection.

mod reed_solomon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_VERSION: u8 = 1;
pub const MAX_VERSION: u8 = 10;

/// Error-correction level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EcLevel {
    L,
    M,
    Q,
    H,
}

impl EcLevel {
    pub const ALL: [EcLevel; 4] = [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H];

    fn ordinal(self) -> usize {
        self as usize
    }

    /// Two-bit field written into the format information.
    fn format_bits(self) -> u32 {
        match self {
            EcLevel::L => 1,
            EcLevel::M => 0,
            EcLevel::Q => 3,
            EcLevel::H => 2,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            EcLevel::L => 'L',
            EcLevel::M => 'M',
            EcLevel::Q => 'Q',
            EcLevel::H => 'H',
        }
    }
}

impl std::str::FromStr for EcLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" => Ok(EcLevel::L),
            "M" => Ok(EcLevel::M),
            "Q" => Ok(EcLevel::Q),
            "H" => Ok(EcLevel::H),
            other => Err(Error::InvalidParameter(format!(
                "unknown error-correction level {other:?}"
            ))),
        }
    }
}

/// Nominal fraction of codewords each level can restore.
///
/// Used as the default tolerance `τ` for detachment and tolerant scanning.
pub fn ec_capacity(level: EcLevel) -> f64 {
    match level {
        EcLevel::L => 0.07,
        EcLevel::M => 0.15,
        EcLevel::Q => 0.25,
        EcLevel::H => 0.30,
    }
}

/// Symbol configuration plus raster geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrSpec {
    pub version: u8,
    pub ec_level: EcLevel,
    pub mask: u8,
    /// Pixels per module side.
    pub module_px: usize,
    /// Quiet-zone pixels on each side.
    pub padding_px: usize,
}

impl Default for QrSpec {
    fn default() -> Self {
        Self {
            version: 3,
            ec_level: EcLevel::H,
            mask: 4,
            module_px: 20,
            padding_px: 80,
        }
    }
}

impl QrSpec {
    pub const MIN_MODULE_PX: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if !(MIN_VERSION..=MAX_VERSION).contains(&self.version) {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.mask > 7 {
            return Err(Error::InvalidMask(self.mask));
        }
        if self.module_px < Self::MIN_MODULE_PX {
            return Err(Error::ModuleTooSmall(self.module_px, Self::MIN_MODULE_PX));
        }
        Ok(())
    }

    /// Side length in modules, `17 + 4·version`.
    pub fn modules(&self) -> usize {
        side_len(self.version)
    }

    /// Side length of the rendered raster in pixels.
    pub fn raster_side(&self) -> usize {
        self.modules() * self.module_px + 2 * self.padding_px
    }

    pub fn geometry(&self) -> crate::target::Geometry {
        crate::target::Geometry::new(self.modules(), self.module_px, self.padding_px)
    }

    /// Byte-mode payload capacity in bytes.
    pub fn capacity(&self) -> Result<usize> {
        byte_capacity(self.version, self.ec_level)
    }
}

/// `17 + 4·version`.
pub fn side_len(version: u8) -> usize {
    17 + 4 * usize::from(version)
}

#[rustfmt::skip]
const ECC_CODEWORDS_PER_BLOCK: [[u8; 11]; 4] = [
    // 0,  1,  2,  3,  4,  5,  6,  7,  8,  9, 10
    [0,  7, 10, 15, 20, 26, 18, 20, 24, 30, 18], // L
    [0, 10, 16, 26, 18, 24, 16, 18, 22, 22, 26], // M
    [0, 13, 22, 18, 26, 18, 24, 18, 22, 20, 24], // Q
    [0, 17, 28, 22, 16, 22, 28, 26, 26, 24, 28], // H
];

#[rustfmt::skip]
const NUM_BLOCKS: [[u8; 11]; 4] = [
    [0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 4],
    [0, 1, 1, 1, 2, 2, 4, 4, 4, 5, 5],
    [0, 1, 1, 2, 2, 4, 4, 6, 6, 8, 8],
    [0, 1, 1, 2, 4, 4, 4, 5, 6, 8, 8],
];

const ALIGNMENT_CENTERS: [&[usize]; 11] = [
    &[],
    &[],
    &[6, 18],
    &[6, 22],
    &[6, 26],
    &[6, 30],
    &[6, 34],
    &[6, 22, 38],
    &[6, 24, 42],
    &[6, 26, 46],
    &[6, 28, 50],
];

fn check_version(version: u8) -> Result<()> {
    if (MIN_VERSION..=MAX_VERSION).contains(&version) {
        Ok(())
    } else {
        Err(Error::UnsupportedVersion(version))
    }
}

/// Modules available for codewords after all function patterns.
fn raw_data_modules(version: u8) -> usize {
    let v = usize::from(version);
    let mut result = (16 * v + 128) * v + 64;
    if v >= 2 {
        let align = v / 7 + 2;
        result -= (25 * align - 10) * align - 55;
        if v >= 7 {
            result -= 36;
        }
    }
    result
}

fn total_codewords(version: u8) -> usize {
    raw_data_modules(version) / 8
}

fn data_codewords(version: u8, level: EcLevel) -> usize {
    let l = level.ordinal();
    let v = usize::from(version);
    total_codewords(version) - usize::from(ECC_CODEWORDS_PER_BLOCK[l][v]) * usize::from(NUM_BLOCKS[l][v])
}

fn char_count_bits(version: u8) -> usize {
    if version <= 9 {
        8
    } else {
        16
    }
}

/// Byte-mode capacity in bytes.
pub fn byte_capacity(version: u8, level: EcLevel) -> Result<usize> {
    check_version(version)?;
    let bits = data_codewords(version, level) * 8;
    Ok((bits - 4 - char_count_bits(version)) / 8)
}

/// Dark/light modules of a symbol plus the function-pattern map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleMatrix {
    size: usize,
    /// Row-major, `true` = dark.
    bits: Vec<bool>,
    /// Row-major, `true` = finder, separator, timing, alignment, format or version area.
    function: Vec<bool>,
}

impl ModuleMatrix {
    /// Wraps raw module data, e.g. for synthetic targets.
    pub fn from_parts(size: usize, bits: Vec<bool>, function: Vec<bool>) -> Result<Self> {
        if bits.len() != size * size || function.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{size}x{size} module matrix needs {} entries",
                size * size
            )));
        }
        Ok(Self { size, bits, function })
    }

    fn blank(size: usize) -> Self {
        Self {
            size,
            bits: vec![false; size * size],
            function: vec![false; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.size + col]
    }

    pub fn is_function(&self, row: usize, col: usize) -> bool {
        self.function[row * self.size + col]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn function_mask(&self) -> &[bool] {
        &self.function
    }

    /// Version implied by the side length, if it is a legal one.
    pub fn version(&self) -> Option<u8> {
        if self.size < 21 || !(self.size - 17).is_multiple_of(4) {
            return None;
        }
        u8::try_from((self.size - 17) / 4).ok()
    }

    fn set_function(&mut self, row: usize, col: usize, dark: bool) {
        let k = row * self.size + col;
        self.bits[k] = dark;
        self.function[k] = true;
    }

    /// XORs the mask pattern into every non-function module.
    ///
    /// Applying the same mask twice restores the original data modules.
    pub fn apply_mask(&mut self, mask: u8) -> Result<()> {
        if mask > 7 {
            return Err(Error::InvalidMask(mask));
        }
        for r in 0..self.size {
            for c in 0..self.size {
                let k = r * self.size + c;
                if !self.function[k] && mask_bit(mask, r, c) {
                    self.bits[k] ^= true;
                }
            }
        }
        Ok(())
    }

    fn draw_function_patterns(&mut self, version: u8) {
        let n = self.size;
        for i in 0..n {
            self.set_function(6, i, i % 2 == 0);
            self.set_function(i, 6, i % 2 == 0);
        }
        self.draw_finder(3, 3);
        self.draw_finder(3, n - 4);
        self.draw_finder(n - 4, 3);

        let centers = ALIGNMENT_CENTERS[usize::from(version)];
        let last = centers.len().saturating_sub(1);
        for (a, &r) in centers.iter().enumerate() {
            for (b, &c) in centers.iter().enumerate() {
                let on_finder = (a == 0 && b == 0) || (a == 0 && b == last) || (a == last && b == 0);
                if !on_finder {
                    self.draw_alignment(r, c);
                }
            }
        }

        // Reserve the format area; real bits are written after masking.
        self.draw_format_bits(EcLevel::L, 0);
        self.draw_version(version);
    }

    fn draw_finder(&mut self, row: usize, col: usize) {
        let n = self.size as isize;
        for dr in -4isize..=4 {
            for dc in -4isize..=4 {
                let (r, c) = (row as isize + dr, col as isize + dc);
                if (0..n).contains(&r) && (0..n).contains(&c) {
                    let dist = dr.abs().max(dc.abs());
                    self.set_function(r as usize, c as usize, dist != 2 && dist != 4);
                }
            }
        }
    }

    fn draw_alignment(&mut self, row: usize, col: usize) {
        for dr in -2isize..=2 {
            for dc in -2isize..=2 {
                let r = (row as isize + dr) as usize;
                let c = (col as isize + dc) as usize;
                self.set_function(r, c, dr.abs().max(dc.abs()) != 1);
            }
        }
    }

    fn draw_format_bits(&mut self, level: EcLevel, mask: u8) {
        let data = (level.format_bits() << 3) | u32::from(mask);
        let mut rem = data;
        for _ in 0..10 {
            rem = (rem << 1) ^ ((rem >> 9) * 0x537);
        }
        let bits = ((data << 10) | rem) ^ 0x5412;
        let bit = |i: usize| (bits >> i) & 1 != 0;
        let n = self.size;

        // Copy around the top-left finder.
        for i in 0..6 {
            self.set_function(i, 8, bit(i));
        }
        self.set_function(7, 8, bit(6));
        self.set_function(8, 8, bit(7));
        self.set_function(8, 7, bit(8));
        for i in 9..15 {
            self.set_function(8, 14 - i, bit(i));
        }

        // Split copy next to the other two finders.
        for i in 0..8 {
            self.set_function(8, n - 1 - i, bit(i));
        }
        for i in 8..15 {
            self.set_function(n - 15 + i, 8, bit(i));
        }
        self.set_function(n - 8, 8, true);
    }

    fn draw_version(&mut self, version: u8) {
        if version < 7 {
            return;
        }
        let v = u32::from(version);
        let mut rem = v;
        for _ in 0..12 {
            rem = (rem << 1) ^ ((rem >> 11) * 0x1F25);
        }
        let bits = (v << 12) | rem;
        let n = self.size;
        for i in 0..18 {
            let dark = (bits >> i) & 1 != 0;
            let a = n - 11 + i % 3;
            let b = i / 3;
            self.set_function(b, a, dark);
            self.set_function(a, b, dark);
        }
    }

    /// Zig-zag placement of the final codeword sequence.
    fn draw_codewords(&mut self, data: &[u8]) {
        let n = self.size;
        let total_bits = data.len() * 8;
        let mut i = 0;
        let mut right = n as isize - 1;
        while right >= 1 {
            if right == 6 {
                right = 5;
            }
            let upward = ((right + 1) & 2) == 0;
            for vert in 0..n {
                for j in 0..2 {
                    let col = (right - j) as usize;
                    let row = if upward { n - 1 - vert } else { vert };
                    let k = row * n + col;
                    if !self.function[k] && i < total_bits {
                        self.bits[k] = (data[i >> 3] >> (7 - (i & 7))) & 1 != 0;
                        i += 1;
                    }
                }
            }
            right -= 2;
        }
        debug_assert_eq!(i, total_bits);
    }
}

/// True where mask pattern `mask` inverts module `(row, col)`.
pub fn mask_bit(mask: u8, row: usize, col: usize) -> bool {
    let (i, j) = (row, col);
    match mask {
        0 => (i + j) % 2 == 0,
        1 => i % 2 == 0,
        2 => j % 3 == 0,
        3 => (i + j) % 3 == 0,
        4 => (i / 2 + j / 3) % 2 == 0,
        5 => (i * j) % 2 + (i * j) % 3 == 0,
        6 => ((i * j) % 2 + (i * j) % 3) % 2 == 0,
        7 => ((i + j) % 2 + (i * j) % 3) % 2 == 0,
        _ => unreachable!("mask validated by caller"),
    }
}

struct BitBuffer(Vec<bool>);

impl BitBuffer {
    fn push(&mut self, value: u32, len: usize) {
        for i in (0..len).rev() {
            self.0.push((value >> i) & 1 != 0);
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
            .collect()
    }
}

/// Mode indicator, count, payload, terminator and pad codewords.
fn data_codeword_stream(payload: &[u8], version: u8, level: EcLevel) -> Result<Vec<u8>> {
    let capacity = byte_capacity(version, level)?;
    if payload.len() > capacity {
        return Err(Error::PayloadTooLong {
            len: payload.len(),
            capacity,
            version,
            level: level.as_char(),
        });
    }
    let capacity_bits = data_codewords(version, level) * 8;
    let mut bb = BitBuffer(Vec::with_capacity(capacity_bits));
    bb.push(0b0100, 4);
    bb.push(payload.len() as u32, char_count_bits(version));
    for &b in payload {
        bb.push(u32::from(b), 8);
    }
    let terminator = (capacity_bits - bb.0.len()).min(4);
    bb.push(0, terminator);
    let pad = (8 - bb.0.len() % 8) % 8;
    bb.push(0, pad);
    for pad_byte in [0xECu32, 0x11].iter().cycle() {
        if bb.0.len() >= capacity_bits {
            break;
        }
        bb.push(*pad_byte, 8);
    }
    Ok(bb.to_bytes())
}

/// Splits into blocks, appends ECC and interleaves.
fn add_ecc_and_interleave(data: &[u8], version: u8, level: EcLevel) -> Vec<u8> {
    let (l, v) = (level.ordinal(), usize::from(version));
    let num_blocks = usize::from(NUM_BLOCKS[l][v]);
    let ecc_len = usize::from(ECC_CODEWORDS_PER_BLOCK[l][v]);
    let raw = total_codewords(version);
    let num_short = num_blocks - raw % num_blocks;
    let short_data_len = raw / num_blocks - ecc_len;

    let generator = reed_solomon::generator(ecc_len);
    let mut blocks: Vec<(&[u8], Vec<u8>)> = Vec::with_capacity(num_blocks);
    let mut offset = 0;
    for b in 0..num_blocks {
        let len = short_data_len + usize::from(b >= num_short);
        let chunk = &data[offset..offset + len];
        offset += len;
        blocks.push((chunk, reed_solomon::remainder(chunk, &generator)));
    }
    debug_assert_eq!(offset, data.len());

    let mut out = Vec::with_capacity(raw);
    for i in 0..=short_data_len {
        for (chunk, _) in &blocks {
            if let Some(&b) = chunk.get(i) {
                out.push(b);
            }
        }
    }
    for i in 0..ecc_len {
        for (_, ecc) in &blocks {
            out.push(ecc[i]);
        }
    }
    debug_assert_eq!(out.len(), raw);
    out
}

/// Encodes `payload` in byte mode with the explicit mask from `spec`.
pub fn encode(payload: &[u8], spec: &QrSpec) -> Result<ModuleMatrix> {
    check_version(spec.version)?;
    if spec.mask > 7 {
        return Err(Error::InvalidMask(spec.mask));
    }
    let data = data_codeword_stream(payload, spec.version, spec.ec_level)?;
    let codewords = add_ecc_and_interleave(&data, spec.version, spec.ec_level);

    let mut matrix = ModuleMatrix::blank(side_len(spec.version));
    matrix.draw_function_patterns(spec.version);
    matrix.draw_codewords(&codewords);
    matrix.apply_mask(spec.mask)?;
    matrix.draw_format_bits(spec.ec_level, spec.mask);
    Ok(matrix)
}
