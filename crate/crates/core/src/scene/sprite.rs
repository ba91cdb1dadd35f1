//! Procedural character sprites.
//!
//! Sprites are drawn on a 16×16 logical grid and scaled up by whole pixels:
//!
//! | region | encodes |
//! |---|---|
//! | rows 0–1, cols 0–8 | gender marker (cap or bow) |
//! | rows 2–15, cols 0–8 | silhouette: species family and outline hue, age as height, skin as fill |
//! | rows 9–15, cols 9–15 | two-letter profession badge |
//!
//! Elderly characters get a grey top row. Only the visual categories are drawn.

use crate::scenario::registry::{Category, SPECIES};
use crate::scenario::CharacterProfile;

pub const LOGICAL: u32 = 16;

/// Skin palette indexed by registry color order; the last slot is for unset color.
pub const SKIN_PALETTE: [[u8; 3]; 4] = [[92, 58, 40], [244, 222, 200], [236, 198, 96], [150, 150, 150]];

/// Outline hue per species in registry order, then unset species last.
pub const SPECIES_ACCENT: [[u8; 3]; 17] = [
    [200, 30, 30],
    [240, 140, 0],
    [200, 170, 0],
    [120, 180, 0],
    [230, 80, 160],
    [90, 90, 200],
    [20, 20, 20],
    [130, 70, 20],
    [100, 40, 90],
    [250, 90, 20],
    [80, 80, 100],
    [0, 120, 80],
    [40, 200, 60],
    [110, 130, 40],
    [220, 40, 70],
    [150, 100, 240],
    [0, 150, 200],
];

const HAIR: [u8; 3] = [214, 214, 214];
const CAP: [u8; 3] = [30, 80, 220];
const BOW: [u8; 3] = [250, 100, 180];
const PLATE: [u8; 3] = [255, 255, 255];
const INK: [u8; 3] = [16, 16, 16];

/// A square RGBA bitmap.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sprite {
    pub size: u32,
    pub rgba: Vec<u8>,
}

impl Sprite {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = ((y * self.size + x) * 4) as usize;
        self.rgba[i..i + 4].try_into().expect("four channels")
    }
}

#[derive(Clone, Copy)]
enum Family {
    Human,
    Bird,
    Quadruped,
    Flat,
    Crab,
}

fn family(species: Option<&str>) -> Family {
    match species {
        None | Some("human") => Family::Human,
        Some("chick" | "chicken" | "goose") => Family::Bird,
        Some("turtle" | "frog" | "toad") => Family::Flat,
        Some("crab") => Family::Crab,
        Some(_) => Family::Quadruped,
    }
}

/// Rectangles (x0, y0, x1, y1 inclusive) on a 9×12 design box.
fn shape(f: Family) -> &'static [(u32, u32, u32, u32)] {
    match f {
        Family::Human => &[(3, 0, 5, 2), (2, 3, 6, 8), (2, 9, 3, 11), (5, 9, 6, 11)],
        Family::Bird => &[(1, 4, 7, 10), (5, 1, 7, 4), (8, 2, 8, 3), (3, 11, 3, 11), (5, 11, 5, 11)],
        Family::Quadruped => &[(1, 4, 7, 8), (6, 1, 8, 4), (1, 9, 2, 11), (6, 9, 7, 11), (0, 3, 0, 4)],
        Family::Flat => &[(1, 6, 7, 11), (7, 7, 8, 9), (2, 4, 6, 5)],
        Family::Crab => &[(1, 5, 7, 9), (0, 2, 1, 4), (7, 2, 8, 4), (1, 10, 1, 11), (3, 10, 3, 11), (5, 10, 5, 10), (7, 10, 7, 11)],
    }
}

fn height(age: Option<&str>) -> u32 {
    match age {
        Some("infant") => 6,
        Some("child") => 8,
        Some("teenager") => 10,
        Some("middle-age") | Some("elderly") => 12,
        _ => 11,
    }
}

/// Two-letter badge text for a profession.
pub fn badge(profession: &str) -> &'static str {
    match profession {
        "thief" => "TH",
        "blue-collar" => "BC",
        "chef" => "CH",
        "unemployed" => "UN",
        "police" => "PO",
        "doctor" => "DR",
        "teacher" => "TE",
        "white-collar" => "WC",
        "boss" => "BO",
        "soldier" => "SO",
        "artist" => "AR",
        _ => "??",
    }
}

/// 3×5 glyphs for badge letters, one row per entry, bit 2 = leftmost.
fn letter(c: char) -> [u8; 5] {
    match c {
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'C' => [0b011, 0b100, 0b100, 0b100, 0b011],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'N' => [0b101, 0b111, 0b111, 0b111, 0b101],
        'O' => [0b010, 0b101, 0b101, 0b101, 0b010],
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
        _ => [0b111, 0b001, 0b010, 0b000, 0b010],
    }
}

fn palette_slot(table: &[&str], value: Option<&str>) -> usize {
    value.and_then(|v| table.iter().position(|t| *t == v)).unwrap_or(table.len())
}

/// The 16×16 logical sprite as RGBA.
fn logical(p: &CharacterProfile) -> [[[u8; 4]; 16]; 16] {
    let mut g = [[[0u8; 4]; 16]; 16];
    let mut put = |x: u32, y: u32, c: [u8; 3]| g[y as usize][x as usize] = [c[0], c[1], c[2], 255];

    let species = p.get(Category::Species);
    let skin = SKIN_PALETTE[palette_slot(Category::Color.values(), p.get(Category::Color))];
    let accent = SPECIES_ACCENT[palette_slot(SPECIES, species)];
    let h = height(p.get(Category::Age));
    let rects = shape(family(species));
    let inside = |x: i32, y: i32| -> bool {
        if !(0..9).contains(&x) || !(0..h as i32).contains(&y) {
            return false;
        }
        let sy = (y as u32 * 12) / h;
        rects.iter().any(|&(x0, y0, x1, y1)| (x0..=x1).contains(&(x as u32)) && (y0..=y1).contains(&sy))
    };
    let top = 16 - h;
    let first_row = (0..h as i32).find(|&y| (0..9).any(|x| inside(x, y))).unwrap_or(0);
    let elderly = p.get(Category::Age) == Some("elderly");
    for y in 0..h as i32 {
        for x in 0..9 {
            if !inside(x, y) {
                continue;
            }
            let edge = !(inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1));
            let c = if elderly && y == first_row {
                HAIR
            } else if edge {
                accent
            } else {
                skin
            };
            put(x as u32, top + y as u32, c);
        }
    }
    match p.get(Category::Gender) {
        Some("male") => (2..=6).for_each(|x| put(x, 1, CAP)),
        Some("female") => {
            for x in [2, 3, 5, 6] {
                put(x, 0, BOW);
            }
            (3..=5).for_each(|x| put(x, 1, BOW));
        }
        _ => {}
    }
    if let Some(prof) = p.get(Category::Profession) {
        for y in 9..16 {
            for x in 9..16 {
                put(x, y, PLATE);
            }
        }
        for (i, c) in badge(prof).chars().enumerate() {
            let x0 = 10 + 3 * i as u32;
            for (row, bits) in letter(c).iter().enumerate() {
                for col in 0..3 {
                    if bits & (0b100 >> col) != 0 {
                        put(x0 + col, 10 + row as u32, INK);
                    }
                }
            }
        }
    }
    g
}

/// Deterministic sprite of side `tile_px`. The logical grid is scaled by
/// `tile_px / 16` and centered.
pub fn compose_sprite(profile: &CharacterProfile, tile_px: u32) -> Sprite {
    let scale = (tile_px / LOGICAL).max(1);
    let size = tile_px.max(LOGICAL);
    let off = (size - LOGICAL * scale) / 2;
    let g = logical(profile);
    let mut rgba = vec![0u8; (size * size * 4) as usize];
    for (ly, row) in g.iter().enumerate() {
        for (lx, px) in row.iter().enumerate() {
            if px[3] == 0 {
                continue;
            }
            for dy in 0..scale {
                for dx in 0..scale {
                    let x = off + lx as u32 * scale + dx;
                    let y = off + ly as u32 * scale + dy;
                    let i = ((y * size + x) * 4) as usize;
                    rgba[i..i + 4].copy_from_slice(px);
                }
            }
        }
    }
    Sprite { size, rgba }
}
