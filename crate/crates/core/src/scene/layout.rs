//! Backtracking layout solver.
//!
//! Variables are element instances in template order. Each element's cells are
//! shuffled once by the seed; instances of the same element take cells in
//! increasing shuffled position, which removes permutation symmetry.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    terrain_tile, Constraint, ElementRole, Placement, SceneError, SceneLayout, SceneTemplate, Terrain,
};
use crate::rng::{derive_seed, stream};
use crate::scenario::{CharacterProfile, ScenarioSample};

const NODE_LIMIT: u64 = 2_000_000;
/// Prop variants available per background family.
pub const PROP_VARIANTS: u8 = 4;

fn chebyshev(a: (u32, u32), b: (u32, u32)) -> u32 {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

fn manhattan(a: (u32, u32), b: (u32, u32)) -> u32 {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

struct Search<'a> {
    template: &'a SceneTemplate,
    /// (element index, instance index) in assignment order.
    vars: Vec<(usize, u32)>,
    domains: Vec<Vec<(u32, u32)>>,
    /// Domain position chosen per variable.
    chosen: Vec<usize>,
    occupied: Vec<bool>,
    placed: Vec<Vec<(u32, u32)>>,
    index: HashMap<&'a str, usize>,
    nodes: u64,
    deepest: usize,
}

impl Search<'_> {
    fn consistent(&self, elem: usize, cell: (u32, u32)) -> bool {
        if self.occupied[(cell.1 * self.template.width + cell.0) as usize] {
            return false;
        }
        let name = self.template.elements[elem].name.as_str();
        for c in &self.template.constraints {
            match c {
                Constraint::Adjacent { a, b } => {
                    let other = if a == name { b } else if b == name { a } else { continue };
                    let placed = &self.placed[self.index[other.as_str()]];
                    // only the first instance of each side takes part
                    if self.placed[elem].is_empty() {
                        if let Some(&o) = placed.first() {
                            if manhattan(o, cell) != 1 {
                                return false;
                            }
                        }
                    }
                }
                Constraint::MinSeparation { a, b, tiles } => {
                    let other = if a == name { b } else if b == name { a } else { continue };
                    if self.placed[self.index[other.as_str()]].iter().any(|&o| chebyshev(o, cell) < *tiles) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn run(&mut self, depth: usize) -> Result<bool, SceneError> {
        if depth == self.vars.len() {
            return Ok(true);
        }
        self.deepest = self.deepest.max(depth);
        let (elem, inst) = self.vars[depth];
        let start = if inst == 0 { 0 } else { self.chosen[depth - 1] + 1 };
        for pos in start..self.domains[elem].len() {
            self.nodes += 1;
            if self.nodes > NODE_LIMIT {
                return Err(SceneError::SearchLimit {
                    element: self.template.elements[elem].name.clone(),
                    nodes: self.nodes,
                });
            }
            let cell = self.domains[elem][pos];
            if !self.consistent(elem, cell) {
                continue;
            }
            let k = (cell.1 * self.template.width + cell.0) as usize;
            self.occupied[k] = true;
            self.placed[elem].push(cell);
            self.chosen[depth] = pos;
            if self.run(depth + 1)? {
                return Ok(true);
            }
            self.placed[elem].pop();
            self.occupied[k] = false;
        }
        Ok(false)
    }
}

fn group(sample: &ScenarioSample, role: ElementRole) -> &[CharacterProfile] {
    match role {
        ElementRole::Agent => std::slice::from_ref(&sample.agent),
        ElementRole::GroupA => &sample.group_a,
        ElementRole::GroupB => &sample.group_b,
        ElementRole::Bystanders => &sample.bystanders,
        ElementRole::Actuator | ElementRole::Prop => &[],
    }
}

/// Places every element of `template` for `sample`. Deterministic in
/// (template, sample, seed).
pub fn solve_layout(template: &SceneTemplate, sample: &ScenarioSample, seed: u64) -> Result<SceneLayout, SceneError> {
    template.validate()?;
    for e in &template.elements {
        if e.role.slot().is_some() && group(sample, e.role).len() != e.count as usize {
            return Err(SceneError::Mismatch(format!(
                "element `{}` has {} instances but the sample has {} characters",
                e.name,
                e.count,
                group(sample, e.role).len()
            )));
        }
    }
    let mut rng = stream(derive_seed(seed, &["layout", &sample.uid]));
    let mut domains = Vec::new();
    for e in &template.elements {
        let mut cells = template.cells(e);
        cells.shuffle(&mut rng);
        domains.push(cells);
    }

    // pigeonhole checks: each element alone, then cumulative demand against the union of zones
    let mut union = vec![false; (template.width * template.height) as usize];
    let mut demand = 0usize;
    for (e, dom) in template.elements.iter().zip(&domains) {
        if (e.count as usize) > dom.len() {
            return Err(SceneError::Infeasible { element: e.name.clone() });
        }
        for &(x, y) in dom {
            union[(y * template.width + x) as usize] = true;
        }
        demand += e.count as usize;
        if demand > union.iter().filter(|u| **u).count() {
            return Err(SceneError::Infeasible { element: e.name.clone() });
        }
    }

    let vars: Vec<(usize, u32)> = template
        .elements
        .iter()
        .enumerate()
        .flat_map(|(i, e)| (0..e.count).map(move |k| (i, k)))
        .collect();
    let mut search = Search {
        template,
        chosen: vec![0; vars.len()],
        vars,
        domains,
        occupied: vec![false; (template.width * template.height) as usize],
        placed: vec![Vec::new(); template.elements.len()],
        index: template.elements.iter().enumerate().map(|(i, e)| (e.name.as_str(), i)).collect(),
        nodes: 0,
        deepest: 0,
    };
    if !search.run(0)? {
        let (elem, _) = search.vars[search.deepest];
        return Err(SceneError::Infeasible { element: template.elements[elem].name.clone() });
    }

    let w = template.width;
    let cells = (w * template.height) as usize;
    let terrain: Vec<u16> = template
        .terrain_map()
        .into_iter()
        .map(|t: Terrain| terrain_tile(t, rng.random_range(0..4)))
        .collect();
    let mut props = vec![0u16; cells];
    let mut characters = vec![0u16; cells];
    let mut placements = Vec::new();
    for (i, e) in template.elements.iter().enumerate() {
        let members = group(sample, e.role);
        for (k, &(x, y)) in search.placed[i].iter().enumerate() {
            let variant = match e.role {
                ElementRole::Prop => Some(rng.random_range(0..PROP_VARIANTS)),
                _ => None,
            };
            let profile = members.get(k).cloned();
            let cell = (y * w + x) as usize;
            if let Some(v) = variant {
                props[cell] = 1 + v as u16;
            } else if e.role == ElementRole::Actuator {
                props[cell] = 1 + PROP_VARIANTS as u16;
            }
            if profile.is_some() {
                characters[cell] = 1 + placements.iter().filter(|p: &&Placement| p.profile.is_some()).count() as u16;
            }
            placements.push(Placement { element: e.name.clone(), role: e.role, index: k as u32, x, y, profile, variant });
        }
    }
    Ok(SceneLayout {
        family: template.family,
        width: w,
        height: template.height,
        seed,
        placements,
        terrain,
        props,
        characters,
    })
}

/// Re-checks every template constraint on a layout.
pub fn verify_layout(template: &SceneTemplate, layout: &SceneLayout) -> Result<(), String> {
    let mut seen = HashMap::new();
    for p in &layout.placements {
        if p.x >= template.width || p.y >= template.height {
            return Err(format!("{}#{} out of bounds", p.element, p.index));
        }
        if let Some(prev) = seen.insert((p.x, p.y), &p.element) {
            return Err(format!("{}#{} overlaps {prev}", p.element, p.index));
        }
        let e = template
            .elements
            .iter()
            .find(|e| e.name == p.element)
            .ok_or_else(|| format!("unknown element {}", p.element))?;
        if !e.zone.iter().any(|r| r.contains(p.x, p.y)) {
            return Err(format!("{}#{} outside its zone", p.element, p.index));
        }
    }
    for e in &template.elements {
        let n = layout.placements.iter().filter(|p| p.element == e.name).count();
        if n != e.count as usize {
            return Err(format!("{} has {n} placements, expected {}", e.name, e.count));
        }
    }
    let cells = |name: &str| -> Vec<(u32, u32)> {
        layout.placements.iter().filter(|p| p.element == name).map(|p| (p.x, p.y)).collect()
    };
    for c in &template.constraints {
        match c {
            Constraint::Adjacent { a, b } => {
                if let (Some(&pa), Some(&pb)) = (cells(a).first(), cells(b).first()) {
                    if manhattan(pa, pb) != 1 {
                        return Err(format!("{a} and {b} are not adjacent"));
                    }
                }
            }
            Constraint::MinSeparation { a, b, tiles } => {
                for pa in cells(a) {
                    if cells(b).iter().any(|&pb| chebyshev(pa, pb) < *tiles) {
                        return Err(format!("{a} and {b} closer than {tiles}"));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GenParams};
    use crate::scenario::{builtin_fixtures, BackgroundFamily, Subset};
    use crate::scene::{template_for, ElementReq, Rect};

    fn sample() -> ScenarioSample {
        let specs = builtin_fixtures();
        let mut p = GenParams::new(Subset::Quantity, 1);
        p.dilemmas = Some(vec!["trolley".into()]);
        generate(&p, &specs).unwrap().samples.remove(0)
    }

    #[test]
    fn empty_template_solves() {
        let t = SceneTemplate::empty(BackgroundFamily::Train, 8, 8);
        let l = solve_layout(&t, &sample(), 0).unwrap();
        assert!(l.placements.is_empty());
        assert_eq!(l.terrain.len(), 64);
    }

    #[test]
    fn pigeonhole() {
        let mut s = sample();
        s.group_a = vec![CharacterProfile::default(); 10];
        let mut t = SceneTemplate::empty(BackgroundFamily::Train, 8, 8);
        t.elements.push(ElementReq {
            name: "group_a".into(),
            role: ElementRole::GroupA,
            count: 10,
            zone: vec![Rect::new(0, 0, 2, 2)],
        });
        assert_eq!(solve_layout(&t, &s, 0), Err(SceneError::Infeasible { element: "group_a".into() }));
    }

    #[test]
    fn unsatisfiable_separation_names_element() {
        let mut s = sample();
        s.group_a = vec![CharacterProfile::default(); 1];
        s.group_b = vec![CharacterProfile::default(); 1];
        let mut t = SceneTemplate::empty(BackgroundFamily::Road, 8, 8);
        for (n, role) in [("group_a", ElementRole::GroupA), ("group_b", ElementRole::GroupB)] {
            t.elements.push(ElementReq { name: n.into(), role, count: 1, zone: vec![Rect::new(0, 0, 2, 1)] });
        }
        t.constraints.push(Constraint::MinSeparation { a: "group_a".into(), b: "group_b".into(), tiles: 3 });
        assert_eq!(solve_layout(&t, &s, 5), Err(SceneError::Infeasible { element: "group_b".into() }));
    }

    #[test]
    fn solved_layouts_verify_and_repeat() {
        let specs = builtin_fixtures();
        let g = generate(&GenParams::new(Subset::Quantity, 2), &specs).unwrap();
        for s in g.samples.iter().step_by(37) {
            let spec = specs.iter().find(|d| d.id == s.dilemma_id).unwrap();
            let t = template_for(spec.background_family, s);
            let a = solve_layout(&t, s, 9).unwrap();
            verify_layout(&t, &a).unwrap();
            assert_eq!(a, solve_layout(&t, s, 9).unwrap());
            let mut drawn: Vec<_> = a.drawn_characters().into_iter().cloned().collect();
            let mut named: Vec<_> = s.characters().cloned().collect();
            drawn.sort();
            named.sort();
            assert_eq!(drawn, named);
        }
    }
}
