//! Binary masks, annotation classes, and connected-component analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Rect;

/// The four annotated structure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassId {
    Lesion,
    Locule,
    SolidArea,
    Papillation,
}

impl ClassId {
    pub const ALL: [ClassId; 4] = [
        ClassId::Lesion,
        ClassId::Locule,
        ClassId::SolidArea,
        ClassId::Papillation,
    ];

    /// Stable integer encoding used by the bit-packed disk format.
    pub fn index(self) -> usize {
        match self {
            ClassId::Lesion => 0,
            ClassId::Locule => 1,
            ClassId::SolidArea => 2,
            ClassId::Papillation => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<ClassId> {
        ClassId::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Lesion => "lesion",
            ClassId::Locule => "locule",
            ClassId::SolidArea => "solid_area",
            ClassId::Papillation => "papillation",
        }
    }

    pub fn parse(s: &str) -> Result<ClassId> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lesion" => Ok(ClassId::Lesion),
            "locule" => Ok(ClassId::Locule),
            "solid_area" | "solidarea" | "solid" => Ok(ClassId::SolidArea),
            "papillation" => Ok(ClassId::Papillation),
            other => Err(Error::InvalidArgument(format!("unknown class '{other}'"))),
        }
    }
}

/// Binary raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            data: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    pub fn crop(&self, rect: Rect) -> Result<Mask> {
        rect.check_inside(self.width, self.height)?;
        let mut out = Mask::empty(rect.w, rect.h);
        for y in 0..rect.h {
            for x in 0..rect.w {
                out.set(x, y, self.get(rect.x + x, rect.y + y));
            }
        }
        Ok(out)
    }

    /// OR `other` into `self` at the given offset; pixels falling outside
    /// the raster are an error.
    pub fn or_at(&mut self, other: &Mask, dx: i64, dy: i64) -> Result<()> {
        for (x, y) in other.foreground() {
            let tx = x as i64 + dx;
            let ty = y as i64 + dy;
            if tx < 0 || ty < 0 || tx >= self.width as i64 || ty >= self.height as i64 {
                return Err(Error::DimensionMismatch(
                    "mask placement falls outside the raster".into(),
                ));
            }
            self.set(tx as u32, ty as u32, true);
        }
        Ok(())
    }

    pub fn tight_bbox(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut any = false;
        for (x, y) in self.foreground() {
            any = true;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        any.then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

/// Per-class binary masks over a common raster. Classes may overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMaskSet {
    width: u32,
    height: u32,
    masks: [Mask; 4],
}

impl LabelMaskSet {
    pub fn empty(width: u32, height: u32) -> Self {
        LabelMaskSet {
            width,
            height,
            masks: std::array::from_fn(|_| Mask::empty(width, height)),
        }
    }

    pub fn from_masks(masks: [Mask; 4]) -> Result<Self> {
        let (w, h) = (masks[0].width(), masks[0].height());
        for m in &masks[1..] {
            if m.width() != w || m.height() != h {
                return Err(Error::DimensionMismatch(
                    "class masks disagree on raster size".into(),
                ));
            }
        }
        Ok(LabelMaskSet {
            width: w,
            height: h,
            masks,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mask(&self, class: ClassId) -> &Mask {
        &self.masks[class.index()]
    }

    pub fn mask_mut(&mut self, class: ClassId) -> &mut Mask {
        &mut self.masks[class.index()]
    }

    pub fn has_class(&self, class: ClassId) -> bool {
        !self.mask(class).is_empty()
    }
}

/// One maximal 8-connected region of a binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub class: ClassId,
    pub pixels: Vec<(u32, u32)>,
    pub bbox: Rect,
    pub centroid: (f64, f64),
    pub area: usize,
}

/// Maximal 8-connected foreground components, ordered by `(bbox.y, bbox.x)`.
pub fn connected_components(mask: &Mask, class: ClassId) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; (w as usize) * (h as usize)];
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;
    let mut out = Vec::new();

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[idx(x, y)] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut stack = vec![(x, y)];
            seen[idx(x, y)] = true;
            while let Some((cx, cy)) = stack.pop() {
                pixels.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        if mask.get(nx, ny) && !seen[idx(nx, ny)] {
                            seen[idx(nx, ny)] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(px, py)| (py, px));
            let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
            let mut sx = 0.0;
            let mut sy = 0.0;
            for &(px, py) in &pixels {
                x0 = x0.min(px);
                y0 = y0.min(py);
                x1 = x1.max(px);
                y1 = y1.max(py);
                sx += px as f64;
                sy += py as f64;
            }
            let area = pixels.len();
            out.push(Component {
                class,
                bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                centroid: (sx / area as f64, sy / area as f64),
                area,
                pixels,
            });
        }
    }

    out.sort_by_key(|c| (c.bbox.y, c.bbox.x));
    out
}

/// Foreground pixels with at least one 4-neighbor that is background or
/// outside the raster.
pub fn boundary_pixels(mask: &Mask) -> Vec<(u32, u32)> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let on_edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let exposed = on_edge
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if exposed {
                out.push((x, y));
            }
        }
    }
    out
}
