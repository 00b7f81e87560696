//! Top-down schematic views of a scene, encoded as PNG.
//!
//! The ego view maps world +x to image-right and +y to image-up. The
//! third-person view looks from the opposite side of the table, so both
//! axes are flipped and the right arm shows up on the image left.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::world::{ArmTag, SceneState, TABLE_HALF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Ego,
    ThirdPerson,
}

impl ViewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Ego => "ego",
            ViewKind::ThirdPerson => "third_person",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub kind: ViewKind,
    pub width: u32,
    pub height: u32,
    pub meters_per_pixel: f64,
}

impl ViewSpec {
    pub const EGO: ViewSpec = ViewSpec { kind: ViewKind::Ego, width: 640, height: 640, meters_per_pixel: 0.002 };
    pub const THIRD_PERSON: ViewSpec =
        ViewSpec { kind: ViewKind::ThirdPerson, width: 320, height: 320, meters_per_pixel: 0.004 };

    /// Continuous pixel coordinates of a world point.
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let (u, v) = (p.x / self.meters_per_pixel, p.y / self.meters_per_pixel);
        match self.kind {
            ViewKind::Ego => (cx + u, cy - v),
            ViewKind::ThirdPerson => (cx - u, cy + v),
        }
    }
}

pub fn default_views() -> [ViewSpec; 2] {
    [ViewSpec::EGO, ViewSpec::THIRD_PERSON]
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

pub const BACKGROUND: [u8; 3] = [70, 70, 78];
pub const TABLE: [u8; 3] = [205, 180, 140];
const TABLE_EDGE: [u8; 3] = [120, 95, 60];
const LEFT_ARM: [u8; 3] = [255, 0, 255];
const RIGHT_ARM: [u8; 3] = [0, 230, 230];
const LABEL: [u8; 3] = [255, 255, 255];
const LABEL_SHADOW: [u8; 3] = [0, 0, 0];

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&fill);
        }
        Image { width, height, pixels }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = ((y as u32 * self.width + x as u32) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        for y in y0.max(0)..=y1.min(self.height as i64 - 1) {
            for x in x0.max(0)..=x1.min(self.width as i64 - 1) {
                self.put(x, y, c);
            }
        }
    }

    fn outline_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        for x in x0..=x1 {
            self.put(x, y0, c);
            self.put(x, y1, c);
        }
        for y in y0..=y1 {
            self.put(x0, y, c);
            self.put(x1, y, c);
        }
    }

    fn disk(&mut self, cx: f64, cy: f64, r: f64, c: [u8; 3], filled: bool) {
        let ri = r.ceil() as i64 + 1;
        let (px, py) = (cx.round() as i64, cy.round() as i64);
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                if (filled && d <= r) || (!filled && (d - r).abs() <= 0.75) {
                    self.put(px + dx, py + dy, c);
                }
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, scale: i64, c: [u8; 3]) {
        let mut pen = x;
        for ch in s.chars() {
            let g = glyph(ch);
            for (row, bits) in g.iter().enumerate() {
                for col in 0..3 {
                    if bits & (4 >> col) != 0 {
                        let gx = pen + col as i64 * scale;
                        let gy = y + row as i64 * scale;
                        self.fill_rect(gx, gy, gx + scale - 1, gy + scale - 1, c);
                    }
                }
            }
            pen += 4 * scale;
        }
    }

    pub fn text_width(s: &str, scale: i64) -> i64 {
        (s.chars().count() as i64 * 4 - 1).max(0) * scale
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("png header");
            w.write_image_data(&self.pixels).expect("png data");
        }
        out
    }
}

/// 3x5 bitmap glyphs, one byte per row, high bit on the left.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_lowercase() {
        'a' => [2, 5, 7, 5, 5],
        'b' => [6, 5, 6, 5, 6],
        'c' => [3, 4, 4, 4, 3],
        'd' => [6, 5, 5, 5, 6],
        'e' => [7, 4, 6, 4, 7],
        'f' => [7, 4, 6, 4, 4],
        'g' => [3, 4, 5, 5, 3],
        'h' => [5, 5, 7, 5, 5],
        'i' => [7, 2, 2, 2, 7],
        'j' => [1, 1, 1, 5, 2],
        'k' => [5, 5, 6, 5, 5],
        'l' => [4, 4, 4, 4, 7],
        'm' => [5, 7, 7, 5, 5],
        'n' => [6, 5, 5, 5, 5],
        'o' => [2, 5, 5, 5, 2],
        'p' => [6, 5, 6, 4, 4],
        'q' => [2, 5, 5, 6, 3],
        'r' => [6, 5, 6, 5, 5],
        's' => [3, 4, 2, 1, 6],
        't' => [7, 2, 2, 2, 2],
        'u' => [5, 5, 5, 5, 7],
        'v' => [5, 5, 5, 5, 2],
        'w' => [5, 5, 7, 7, 5],
        'x' => [5, 5, 2, 5, 5],
        'y' => [5, 5, 2, 2, 2],
        'z' => [7, 1, 2, 4, 7],
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [6, 1, 2, 4, 7],
        '3' => [6, 1, 2, 1, 6],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 6, 1, 6],
        '6' => [3, 4, 7, 5, 7],
        '7' => [7, 1, 2, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 6],
        '_' => [0, 0, 0, 0, 7],
        '-' => [0, 0, 7, 0, 0],
        '.' => [0, 0, 0, 0, 2],
        ' ' => [0; 5],
        _ => [7, 5, 5, 5, 7],
    }
}

fn shade(c: [u8; 3], f: f64) -> [u8; 3] {
    c.map(|v| (v as f64 * f).round().clamp(0.0, 255.0) as u8)
}

/// Renders one view. Higher objects are drawn over lower ones.
pub fn render_view(state: &SceneState, view: &ViewSpec) -> Image {
    let mut img = Image::new(view.width, view.height, BACKGROUND);
    let mpp = view.meters_per_pixel;
    let scale = if mpp <= 0.0025 { 2 } else { 1 };
    let rect = |lo: Vec3, hi: Vec3| {
        let (ax, ay) = view.project(lo);
        let (bx, by) = view.project(hi);
        (
            ax.min(bx).round() as i64,
            ay.min(by).round() as i64,
            ax.max(bx).round() as i64 - 1,
            ay.max(by).round() as i64 - 1,
        )
    };

    let (x0, y0, x1, y1) = rect(
        Vec3::new(-TABLE_HALF[0], -TABLE_HALF[1], 0.0),
        Vec3::new(TABLE_HALF[0], TABLE_HALF[1], 0.0),
    );
    img.fill_rect(x0, y0, x1, y1, TABLE);
    img.outline_rect(x0, y0, x1, y1, TABLE_EDGE);

    let mut order: Vec<usize> = (0..state.objects.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (&state.objects[a], &state.objects[b]);
        oa.top_z().total_cmp(&ob.top_z()).then_with(|| oa.id.cmp(&ob.id))
    });
    for &i in &order {
        let o = &state.objects[i];
        let bb = o.aabb();
        let (x0, y0, x1, y1) = rect(bb.min, bb.max);
        let c = o.color.rgb();
        if o.receptacle {
            img.fill_rect(x0, y0, x1, y1, shade(c, 0.6));
            let inset = 2;
            img.fill_rect(x0 + inset, y0 + inset, x1 - inset, y1 - inset, c);
        } else {
            img.fill_rect(x0, y0, x1, y1, c);
        }
        img.outline_rect(x0, y0, x1, y1, shade(c, 0.45));
    }
    // Labels go on top of everything so overlapping objects stay readable.
    for &i in &order {
        let o = &state.objects[i];
        let (cx, cy) = view.project(o.center());
        let w = Image::text_width(&o.id, scale);
        let (tx, ty) = (cx.round() as i64 - w / 2, cy.round() as i64 - 5 * scale / 2);
        img.text(tx + 1, ty + 1, &o.id, scale, LABEL_SHADOW);
        img.text(tx, ty, &o.id, scale, LABEL);
    }

    for arm in ArmTag::BOTH {
        let a = &state.arms[arm];
        let (cx, cy) = view.project(a.pose.position);
        let c = if arm == ArmTag::Left { LEFT_ARM } else { RIGHT_ARM };
        let r = 0.03 / mpp;
        let closed = a.gripper < 0.5;
        img.disk(cx, cy, r, c, closed);
        if !closed {
            img.disk(cx, cy, r * 0.35, c, true);
        }
        let tag = if arm == ArmTag::Left { "l" } else { "r" };
        img.text((cx + r + 2.0).round() as i64, (cy - r).round() as i64, tag, scale, c);
    }
    img
}

pub fn render_png(state: &SceneState, view: &ViewSpec) -> Vec<u8> {
    render_view(state, view).to_png()
}
