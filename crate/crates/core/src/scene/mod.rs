//! Scene layouts, sprites, raster composition and PNG encoding.

pub mod font;
mod layout;
mod png;
mod render;
pub mod sprite;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{BackgroundFamily, CharacterProfile, ScenarioSample, SlotRole};

pub use self::png::{decode_png, encode_png};
pub use layout::{solve_layout, verify_layout};
pub use render::{decode_banner, render_sample, render_scene, RasterImage, StyleConfig};
pub use sprite::compose_sprite;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("template: {0}")]
    Template(String),
    #[error("no layout places element `{element}`")]
    Infeasible { element: String },
    #[error("layout search gave up while placing `{element}` after {nodes} steps")]
    SearchLimit { element: String, nodes: u64 },
    #[error("layout does not match the sample: {0}")]
    Mismatch(String),
    #[error("banner needs {needed}px but at most {max}px is allowed")]
    BannerTooTall { needed: u32, max: u32 },
    #[error("png: {0}")]
    Png(String),
}

/// A rectangle of tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terrain {
    Grass,
    Track,
    Road,
    Sidewalk,
    Floor,
    Wall,
    Roof,
}

impl Terrain {
    pub const ALL: [Terrain; 7] =
        [Terrain::Grass, Terrain::Track, Terrain::Road, Terrain::Sidewalk, Terrain::Floor, Terrain::Wall, Terrain::Roof];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerrainPatch {
    pub terrain: Terrain,
    pub rect: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementRole {
    Agent,
    Actuator,
    GroupA,
    GroupB,
    Bystanders,
    Prop,
}

impl ElementRole {
    fn slot(self) -> Option<SlotRole> {
        match self {
            ElementRole::Agent => Some(SlotRole::Agent),
            ElementRole::GroupA => Some(SlotRole::GroupA),
            ElementRole::GroupB => Some(SlotRole::GroupB),
            ElementRole::Bystanders => Some(SlotRole::Bystanders),
            ElementRole::Actuator | ElementRole::Prop => None,
        }
    }
}

/// `count` instances that must sit on distinct cells inside `zone`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementReq {
    pub name: String,
    pub role: ElementRole,
    pub count: u32,
    pub zone: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// The first instances of the two elements share an edge.
    Adjacent { a: String, b: String },
    /// Every instance of `a` is at least `tiles` away (Chebyshev) from every instance of `b`.
    MinSeparation { a: String, b: String, tiles: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub family: BackgroundFamily,
    pub width: u32,
    pub height: u32,
    pub base: Terrain,
    pub terrain: Vec<TerrainPatch>,
    pub elements: Vec<ElementReq>,
    pub constraints: Vec<Constraint>,
}

impl SceneTemplate {
    pub fn empty(family: BackgroundFamily, width: u32, height: u32) -> Self {
        SceneTemplate {
            family,
            width,
            height,
            base: Terrain::Grass,
            terrain: Vec::new(),
            elements: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// In-bounds cells of an element's zone, row-major, without duplicates.
    pub fn cells(&self, e: &ElementReq) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if e.zone.iter().any(|r| r.contains(x, y)) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width < 8 || self.height < 8 {
            return Err(SceneError::Template(format!("grid {}x{} is smaller than 8x8", self.width, self.height)));
        }
        for e in &self.elements {
            if e.count > 0 && self.cells(e).is_empty() {
                return Err(SceneError::Template(format!("element `{}` has no admissible cell", e.name)));
            }
        }
        for c in &self.constraints {
            let (Constraint::Adjacent { a, b } | Constraint::MinSeparation { a, b, .. }) = c;
            for n in [a, b] {
                if !self.elements.iter().any(|e| &e.name == n) {
                    return Err(SceneError::Template(format!("constraint names unknown element `{n}`")));
                }
            }
        }
        Ok(())
    }

    /// Terrain of every cell after painting the patches in order.
    pub fn terrain_map(&self) -> Vec<Terrain> {
        let mut map = vec![self.base; (self.width * self.height) as usize];
        for p in &self.terrain {
            for y in p.rect.y..(p.rect.y + p.rect.h).min(self.height) {
                for x in p.rect.x..(p.rect.x + p.rect.w).min(self.width) {
                    map[(y * self.width + x) as usize] = p.terrain;
                }
            }
        }
        map
    }
}

pub const GRID_W: u32 = 24;
pub const GRID_H: u32 = 18;

/// Share of decoration cells that receive a prop.
pub const DECORATION_DENSITY: f64 = 0.2;

struct FamilyPlan {
    base: Terrain,
    terrain: &'static [(Terrain, Rect)],
    agent: &'static [Rect],
    group_a: &'static [Rect],
    group_b: &'static [Rect],
    decor: &'static [Rect],
}

fn plan(family: BackgroundFamily) -> FamilyPlan {
    match family {
        BackgroundFamily::Train => {
            const P: FamilyPlan = FamilyPlan {
            base: Terrain::Grass,
            terrain: &[
                (Terrain::Track, Rect::new(0, 4, 24, 2)),
                (Terrain::Track, Rect::new(8, 6, 2, 6)),
                (Terrain::Track, Rect::new(8, 12, 16, 2)),
            ],
            agent: &[Rect::new(2, 7, 5, 4)],
            group_a: &[Rect::new(13, 3, 11, 4)],
            group_b: &[Rect::new(13, 11, 11, 4)],
            decor: &[Rect::new(0, 0, 24, 3), Rect::new(0, 15, 24, 3)],
            };
            P
        }
        BackgroundFamily::Road => {
            const P: FamilyPlan = FamilyPlan {
            base: Terrain::Grass,
            terrain: &[(Terrain::Road, Rect::new(0, 6, 24, 5)), (Terrain::Sidewalk, Rect::new(0, 11, 24, 2))],
            agent: &[Rect::new(1, 6, 6, 5)],
            group_a: &[Rect::new(12, 6, 12, 5)],
            group_b: &[Rect::new(12, 12, 12, 5)],
            decor: &[Rect::new(0, 0, 24, 5), Rect::new(0, 17, 24, 1)],
            };
            P
        }
        BackgroundFamily::Hospital => {
            const P: FamilyPlan = FamilyPlan {
            base: Terrain::Floor,
            terrain: &[
                (Terrain::Wall, Rect::new(0, 0, 24, 1)),
                (Terrain::Sidewalk, Rect::new(11, 1, 2, 17)),
            ],
            agent: &[Rect::new(11, 2, 2, 14)],
            group_a: &[Rect::new(0, 2, 11, 15)],
            group_b: &[Rect::new(13, 2, 11, 15)],
            decor: &[Rect::new(0, 1, 11, 1), Rect::new(13, 1, 11, 1), Rect::new(0, 17, 24, 1)],
            };
            P
        }
        BackgroundFamily::School => {
            const P: FamilyPlan = FamilyPlan {
            base: Terrain::Grass,
            terrain: &[(Terrain::Roof, Rect::new(6, 1, 12, 4)), (Terrain::Floor, Rect::new(0, 6, 24, 12))],
            agent: &[Rect::new(7, 1, 10, 3)],
            group_a: &[Rect::new(1, 7, 10, 10)],
            group_b: &[Rect::new(13, 7, 10, 10)],
            decor: &[Rect::new(0, 5, 24, 1), Rect::new(11, 7, 2, 11), Rect::new(0, 0, 6, 5), Rect::new(18, 0, 6, 5)],
            };
            P
        }
    }
}

/// The default template for a sample's background family, sized to its groups.
pub fn template_for(family: BackgroundFamily, sample: &ScenarioSample) -> SceneTemplate {
    let p = plan(family);
    let el = |name: &str, role, count: usize, zone: &[Rect]| ElementReq {
        name: name.into(),
        role,
        count: count as u32,
        zone: zone.to_vec(),
    };
    let mut t = SceneTemplate {
        family,
        width: GRID_W,
        height: GRID_H,
        base: p.base,
        terrain: p.terrain.iter().map(|&(terrain, rect)| TerrainPatch { terrain, rect }).collect(),
        elements: vec![
            el("agent", ElementRole::Agent, 1, p.agent),
            el("actuator", ElementRole::Actuator, 1, p.agent),
            el("group_a", ElementRole::GroupA, sample.group_a.len(), p.group_a),
            el("group_b", ElementRole::GroupB, sample.group_b.len(), p.group_b),
        ],
        constraints: vec![
            Constraint::Adjacent { a: "agent".into(), b: "actuator".into() },
            Constraint::MinSeparation { a: "group_a".into(), b: "group_b".into(), tiles: 2 },
        ],
    };
    if !sample.bystanders.is_empty() {
        t.elements.push(el("bystanders", ElementRole::Bystanders, sample.bystanders.len(), p.decor));
    }
    let decor = ElementReq { name: "props".into(), role: ElementRole::Prop, count: 0, zone: p.decor.to_vec() };
    let n = (t.cells(&decor).len() as f64 * DECORATION_DENSITY).round() as u32;
    t.elements.push(ElementReq { count: n, ..decor });
    t
}

/// One placed instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub element: String,
    pub role: ElementRole,
    pub index: u32,
    pub x: u32,
    pub y: u32,
    /// Character drawn here, for agent, group and bystander placements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<CharacterProfile>,
    /// Prop variant, for props.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<u8>,
}

/// A solved scene. `terrain`, `props` and `characters` are row-major tile layers;
/// 0 means empty in the last two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub family: BackgroundFamily,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub placements: Vec<Placement>,
    pub terrain: Vec<u16>,
    pub props: Vec<u16>,
    pub characters: Vec<u16>,
}

impl SceneLayout {
    /// Characters drawn in the scene.
    pub fn drawn_characters(&self) -> Vec<&CharacterProfile> {
        self.placements.iter().filter_map(|p| p.profile.as_ref()).collect()
    }
}

/// Terrain tile id: terrain kind × 4 + texture variant.
pub fn terrain_tile(t: Terrain, variant: u8) -> u16 {
    Terrain::ALL.iter().position(|x| *x == t).expect("listed") as u16 * 4 + variant as u16 % 4
}

pub fn tile_terrain(id: u16) -> (Terrain, u8) {
    (Terrain::ALL[(id / 4) as usize % Terrain::ALL.len()], (id % 4) as u8)
}
