//! Raster composition: terrain, props, sprites, then the text banner.

use serde::{Deserialize, Serialize};

use super::font::{glyph, wrap, BannerReader, GLYPH};
use super::layout::{solve_layout, PROP_VARIANTS};
use super::sprite::compose_sprite;
use super::{template_for, tile_terrain, ElementRole, SceneError, SceneLayout, Terrain};
use crate::scenario::{BackgroundFamily, ScenarioSample};
use crate::text::RealizedText;

/// An RGBA8 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub rgba: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, fill: [u8; 4]) -> Self {
        let mut rgba = Vec::with_capacity((width * height * 4) as usize);
        for _ in 0..width * height {
            rgba.extend_from_slice(&fill);
        }
        RasterImage { width, height, rgba }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = ((y * self.width + x) * 4) as usize;
        self.rgba[i..i + 4].try_into().expect("four channels")
    }

    fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, c: [u8; 3]) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                let i = ((yy * self.width + xx) * 4) as usize;
                self.rgba[i..i + 4].copy_from_slice(&[c[0], c[1], c[2], 255]);
            }
        }
    }

    /// Alpha-tests `src` (opaque or fully transparent pixels) onto the image.
    fn blit(&mut self, x0: u32, y0: u32, size: u32, src: &[u8]) {
        for y in 0..size {
            for x in 0..size {
                let s = ((y * size + x) * 4) as usize;
                if src[s + 3] == 0 || x0 + x >= self.width || y0 + y >= self.height {
                    continue;
                }
                let d = (((y0 + y) * self.width + x0 + x) * 4) as usize;
                self.rgba[d..d + 4].copy_from_slice(&src[s..s + 4]);
            }
        }
    }
}

fn default_tile() -> u32 {
    32
}
fn default_scale() -> u32 {
    2
}
fn default_gap() -> u32 {
    4
}
fn default_margin() -> u32 {
    8
}
fn default_max_banner() -> u32 {
    4096
}
fn default_bg() -> [u8; 3] {
    [255, 255, 255]
}
fn default_fg() -> [u8; 3] {
    [0, 0, 0]
}

/// Rendering settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleConfig {
    #[serde(default = "default_tile")]
    pub tile_px: u32,
    #[serde(default = "default_scale")]
    pub font_scale: u32,
    #[serde(default = "default_gap")]
    pub line_gap: u32,
    #[serde(default = "default_margin")]
    pub margin: u32,
    #[serde(default = "default_max_banner")]
    pub max_banner_px: u32,
    #[serde(default = "default_bg")]
    pub banner_bg: [u8; 3],
    #[serde(default = "default_fg")]
    pub banner_fg: [u8; 3],
    /// Base terrain colors, overriding the built-in palette by terrain name.
    #[serde(default)]
    pub terrain_palette: std::collections::BTreeMap<Terrain, [u8; 3]>,
}

impl Default for StyleConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl StyleConfig {
    fn line_h(&self) -> u32 {
        GLYPH * self.font_scale
    }

    fn cols(&self, width: u32) -> u32 {
        width.saturating_sub(2 * self.margin) / (GLYPH * self.font_scale)
    }

    fn terrain_color(&self, t: Terrain) -> [u8; 3] {
        if let Some(c) = self.terrain_palette.get(&t) {
            return *c;
        }
        match t {
            Terrain::Grass => [110, 170, 80],
            Terrain::Track => [150, 130, 110],
            Terrain::Road => [90, 90, 96],
            Terrain::Sidewalk => [190, 186, 176],
            Terrain::Floor => [214, 206, 186],
            Terrain::Wall => [120, 100, 90],
            Terrain::Roof => [170, 80, 60],
        }
    }
}

fn shade(c: [u8; 3], d: i16) -> [u8; 3] {
    c.map(|v| (v as i16 + d).clamp(0, 255) as u8)
}

fn draw_terrain(img: &mut RasterImage, x0: u32, y0: u32, t: u32, terrain: Terrain, variant: u8, style: &StyleConfig) {
    let base = style.terrain_color(terrain);
    img.fill_rect(x0, y0, t, t, base);
    let u = (t / 8).max(1);
    // texture specks; position depends on the variant
    for k in 0..3u32 {
        let sx = (variant as u32 * 3 + k * 5) % 8;
        let sy = (variant as u32 * 5 + k * 3) % 8;
        img.fill_rect(x0 + sx * u, y0 + sy * u, u, u, shade(base, -18));
    }
    match terrain {
        Terrain::Track => {
            for k in 0..4 {
                img.fill_rect(x0 + k * 2 * u, y0, u, t, [110, 80, 50]);
            }
            img.fill_rect(x0, y0 + 2 * u, t, u, [180, 180, 190]);
            img.fill_rect(x0, y0 + 5 * u, t, u, [180, 180, 190]);
        }
        Terrain::Road if variant.is_multiple_of(2) => img.fill_rect(x0 + 2 * u, y0 + t / 2, 4 * u, u / 2 + 1, [230, 220, 120]),
        Terrain::Wall => img.fill_rect(x0, y0 + t - u, t, u, shade(base, -40)),
        _ => {}
    }
}

fn draw_prop(img: &mut RasterImage, x0: u32, y0: u32, t: u32, family: BackgroundFamily, variant: u8) {
    let u = (t / 8).max(1);
    let palette: [[u8; 3]; 4] = match family {
        BackgroundFamily::Train | BackgroundFamily::Road => [[40, 120, 50], [60, 150, 60], [130, 130, 130], [240, 140, 40]],
        BackgroundFamily::Hospital => [[250, 250, 250], [60, 150, 60], [140, 160, 190], [200, 200, 120]],
        BackgroundFamily::School => [[40, 120, 50], [160, 110, 60], [120, 120, 140], [220, 60, 60]],
    };
    let c = palette[variant as usize % 4];
    match variant % 4 {
        0 => {
            img.fill_rect(x0 + 3 * u, y0 + 5 * u, 2 * u, 3 * u, [100, 70, 40]);
            img.fill_rect(x0 + u, y0, 6 * u, 5 * u, c);
        }
        1 => img.fill_rect(x0 + u, y0 + 3 * u, 6 * u, 4 * u, c),
        2 => img.fill_rect(x0 + 2 * u, y0 + 2 * u, 4 * u, 5 * u, c),
        _ => {
            img.fill_rect(x0 + 3 * u, y0 + u, u, 7 * u, [90, 90, 90]);
            img.fill_rect(x0 + 4 * u, y0 + u, 3 * u, 2 * u, c);
        }
    }
}

fn draw_actuator(img: &mut RasterImage, x0: u32, y0: u32, t: u32) {
    let u = (t / 8).max(1);
    img.fill_rect(x0 + u, y0 + 5 * u, 6 * u, 2 * u, [80, 80, 80]);
    img.fill_rect(x0 + 3 * u, y0 + 2 * u, 2 * u, 3 * u, [220, 30, 30]);
}

/// Banner height for `text` at `width`, 0 when the text is empty.
pub fn banner_height(text: &str, width: u32, style: &StyleConfig) -> u32 {
    let lines = wrap(text, style.cols(width) as usize).len() as u32;
    if lines == 0 {
        return 0;
    }
    2 * style.margin + lines * style.line_h() + (lines - 1) * style.line_gap
}

/// Composites the layout and writes the full text into a banner below it.
pub fn render_scene(layout: &SceneLayout, text: &RealizedText, style: &StyleConfig) -> Result<RasterImage, SceneError> {
    let t = style.tile_px.max(16);
    let width = layout.width * t;
    let scene_h = layout.height * t;
    let full = if text.body.is_empty() && text.question.is_empty() { String::new() } else { text.full() };
    let banner = banner_height(&full, width, style);
    if banner > style.max_banner_px {
        return Err(SceneError::BannerTooTall { needed: banner, max: style.max_banner_px });
    }
    let mut img = RasterImage::new(width, scene_h + banner, [0, 0, 0, 255]);
    for y in 0..layout.height {
        for x in 0..layout.width {
            let (terrain, variant) = tile_terrain(layout.terrain[(y * layout.width + x) as usize]);
            draw_terrain(&mut img, x * t, y * t, t, terrain, variant, style);
        }
    }
    for p in &layout.placements {
        match p.role {
            ElementRole::Prop => {
                draw_prop(&mut img, p.x * t, p.y * t, t, layout.family, p.variant.unwrap_or(0) % PROP_VARIANTS)
            }
            ElementRole::Actuator => draw_actuator(&mut img, p.x * t, p.y * t, t),
            _ => {}
        }
    }
    for p in &layout.placements {
        if let Some(profile) = &p.profile {
            if p.role == ElementRole::Agent {
                let u = (t / 16).max(1);
                img.fill_rect(p.x * t, p.y * t, t, u, [255, 220, 0]);
                img.fill_rect(p.x * t, p.y * t + t - u, t, u, [255, 220, 0]);
            }
            let s = compose_sprite(profile, t);
            img.blit(p.x * t, p.y * t, s.size, &s.rgba);
        }
    }
    if banner > 0 {
        img.fill_rect(0, scene_h, width, banner, style.banner_bg);
        let scale = style.font_scale;
        for (i, line) in wrap(&full, style.cols(width) as usize).iter().enumerate() {
            let y0 = scene_h + style.margin + i as u32 * (style.line_h() + style.line_gap);
            for (j, ch) in line.chars().enumerate() {
                let x0 = style.margin + j as u32 * GLYPH * scale;
                for (r, bits) in glyph(ch).iter().enumerate() {
                    for c in 0..GLYPH {
                        if bits & (1 << c) != 0 {
                            img.fill_rect(x0 + c * scale, y0 + r as u32 * scale, scale, scale, style.banner_fg);
                        }
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Reads the banner of an image rendered with `style` whose scene is
/// `scene_height` pixels tall. Lines are joined with single spaces, so words
/// split across lines by the hard-wrap rule come back with a space inside.
pub fn decode_banner(img: &RasterImage, scene_height: u32, style: &StyleConfig) -> String {
    let banner = img.height.saturating_sub(scene_height);
    if banner == 0 {
        return String::new();
    }
    let step = style.line_h() + style.line_gap;
    let lines = (banner - 2 * style.margin + style.line_gap) / step;
    let reader = BannerReader { rgba: &img.rgba, width: img.width, ink: style.banner_fg, scale: style.font_scale };
    (0..lines)
        .map(|i| reader.line(style.margin, scene_height + style.margin + i * step, style.cols(img.width)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Template, layout and raster for one sample.
pub fn render_sample(
    sample: &ScenarioSample,
    family: BackgroundFamily,
    text: &RealizedText,
    style: &StyleConfig,
    seed: u64,
) -> Result<(SceneLayout, RasterImage), SceneError> {
    let template = template_for(family, sample);
    let layout = solve_layout(&template, sample, seed)?;
    let img = render_scene(&layout, text, style)?;
    Ok((layout, img))
}
