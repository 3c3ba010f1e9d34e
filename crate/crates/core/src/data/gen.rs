//! Procedural scene generation.
//!
//! Objects are sampled as surface blobs (box, sphere, plane) and placed on a
//! shuffled 3×3 grid with per-cell jitter, so instances never interpenetrate
//! and every scene is a pure function of (template, point budget, seed).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::autodiff::Array;
use crate::geometry::PointCloud;
use crate::seeding;

/// Room side length in meters; scenes occupy [0, EXTENT]² in the ground plane.
pub const ROOM_EXTENT: f64 = 3.0;
const GRID: usize = 3;
const CELL: f64 = ROOM_EXTENT / GRID as f64;
const PLACE_MARGIN: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRange {
    pub lo: f64,
    pub hi: f64,
}

impl SizeRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "size range [{lo}, {hi}] inverted");
        SizeRange { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..self.hi)
        }
    }
}

/// Parametric surface blob. All extents are full sizes in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlobShape {
    /// Axis-aligned box surface (four sides and the top; the bottom rests on
    /// or above other geometry and contributes nothing distinguishable).
    Box { size_x: SizeRange, size_y: SizeRange, size_z: SizeRange },
    /// Sphere surface.
    Sphere { radius: SizeRange },
    /// Horizontal rectangle at the placement height (the floor).
    HorizontalPlane { size_x: SizeRange, size_y: SizeRange },
    /// Thin vertical rectangle, axis-aligned with a random facing.
    VerticalPlane { width: SizeRange, height: SizeRange },
}

/// One category's sampler within a template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectGenerator {
    pub class_id: usize,
    pub shape: BlobShape,
    /// Inclusive range of instances per scene.
    pub count: (usize, usize),
    /// Base height (box bottom / sphere center / plane bottom edge).
    pub z_range: SizeRange,
    /// Relative share of the point budget per instance.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub name: String,
    pub objects: Vec<ObjectGenerator>,
}

impl SceneTemplate {
    /// Sorted unique class ids this template can emit.
    pub fn palette(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.objects.iter().map(|o| o.class_id).collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

/// Class ids of the default benchmark.
pub mod classes {
    pub const FLOOR: usize = 0;
    pub const TABLE: usize = 1;
    pub const CHAIR: usize = 2;
    pub const LAMP: usize = 3;
    pub const TUB: usize = 4;
    pub const BASIN: usize = 5;
    pub const CURTAIN: usize = 6;
    pub const DRAPE: usize = 7;
}

fn soft_panel_shape() -> BlobShape {
    // shared by the confusable pair: identical geometry by construction
    BlobShape::VerticalPlane {
        width: SizeRange::new(0.75, 0.9),
        height: SizeRange::new(1.2, 1.4),
    }
}

fn soft_panel(class_id: usize) -> ObjectGenerator {
    ObjectGenerator {
        class_id,
        shape: soft_panel_shape(),
        count: (1, 1),
        z_range: SizeRange::new(0.35, 0.5),
        weight: 1.0,
    }
}

fn floor_object() -> ObjectGenerator {
    ObjectGenerator {
        class_id: classes::FLOOR,
        shape: BlobShape::HorizontalPlane {
            size_x: SizeRange::new(2.8, 3.0),
            size_y: SizeRange::new(2.8, 3.0),
        },
        count: (1, 1),
        z_range: SizeRange::new(0.0, 0.0),
        weight: 1.2,
    }
}

/// Two room templates: they share the floor, differ in furniture, and split
/// the confusable soft-panel pair between them.
pub fn default_templates() -> Vec<SceneTemplate> {
    let room_a = SceneTemplate {
        name: "room_a".to_string(),
        objects: vec![
            floor_object(),
            ObjectGenerator {
                class_id: classes::TABLE,
                shape: BlobShape::Box {
                    size_x: SizeRange::new(0.45, 0.55),
                    size_y: SizeRange::new(0.45, 0.55),
                    size_z: SizeRange::new(0.08, 0.12),
                },
                count: (1, 2),
                z_range: SizeRange::new(0.45, 0.6),
                weight: 1.0,
            },
            ObjectGenerator {
                class_id: classes::CHAIR,
                shape: BlobShape::Box {
                    size_x: SizeRange::new(0.3, 0.4),
                    size_y: SizeRange::new(0.3, 0.4),
                    size_z: SizeRange::new(0.35, 0.45),
                },
                count: (1, 3),
                z_range: SizeRange::new(0.1, 0.2),
                weight: 0.8,
            },
            ObjectGenerator {
                class_id: classes::LAMP,
                shape: BlobShape::Sphere { radius: SizeRange::new(0.12, 0.18) },
                count: (1, 2),
                z_range: SizeRange::new(1.35, 1.65),
                weight: 0.6,
            },
            soft_panel(classes::CURTAIN),
        ],
    };
    let room_b = SceneTemplate {
        name: "room_b".to_string(),
        objects: vec![
            floor_object(),
            ObjectGenerator {
                class_id: classes::TUB,
                shape: BlobShape::Box {
                    size_x: SizeRange::new(0.6, 0.7),
                    size_y: SizeRange::new(0.35, 0.45),
                    size_z: SizeRange::new(0.4, 0.5),
                },
                count: (1, 2),
                z_range: SizeRange::new(0.1, 0.2),
                weight: 1.1,
            },
            ObjectGenerator {
                class_id: classes::BASIN,
                shape: BlobShape::Sphere { radius: SizeRange::new(0.2, 0.28) },
                count: (1, 2),
                z_range: SizeRange::new(0.7, 0.9),
                weight: 0.7,
            },
            soft_panel(classes::DRAPE),
        ],
    };
    vec![room_a, room_b]
}

/// One placed instance with concrete dimensions.
struct Instance {
    class_id: usize,
    shape: ConcreteShape,
    center_x: f64,
    center_y: f64,
    base_z: f64,
    weight: f64,
}

enum ConcreteShape {
    Box { sx: f64, sy: f64, sz: f64 },
    Sphere { r: f64 },
    HorizontalPlane { sx: f64, sy: f64 },
    /// facing_x: the panel's normal points along x (the panel extends in y).
    VerticalPlane { w: f64, h: f64, facing_x: bool },
}

impl ConcreteShape {
    fn footprint(&self) -> (f64, f64) {
        match self {
            ConcreteShape::Box { sx, sy, .. } => (*sx, *sy),
            ConcreteShape::Sphere { r } => (2.0 * r, 2.0 * r),
            ConcreteShape::HorizontalPlane { sx, sy } => (*sx, *sy),
            ConcreteShape::VerticalPlane { w, h: _, facing_x } => {
                if *facing_x {
                    (0.0, *w)
                } else {
                    (*w, 0.0)
                }
            }
        }
    }
}

/// Generate one labeled scene. Deterministic in (template, n_points, seed).
pub fn generate_scene(
    template: &SceneTemplate,
    n_points: usize,
    seed: u64,
) -> Result<PointCloud, DataError> {
    let min_required = 10 * template.palette().len();
    if n_points < min_required {
        return Err(DataError::TooFewPoints { min_required, got: n_points });
    }
    let mut rng = seeding::rng_from(seed);

    // concrete instances, fixed template order
    let mut instances = Vec::new();
    for obj in &template.objects {
        let count = if obj.count.0 == obj.count.1 {
            obj.count.0
        } else {
            rng.gen_range(obj.count.0..=obj.count.1)
        };
        for _ in 0..count.max(1) {
            let shape = match &obj.shape {
                BlobShape::Box { size_x, size_y, size_z } => ConcreteShape::Box {
                    sx: size_x.sample(&mut rng),
                    sy: size_y.sample(&mut rng),
                    sz: size_z.sample(&mut rng),
                },
                BlobShape::Sphere { radius } => ConcreteShape::Sphere { r: radius.sample(&mut rng) },
                BlobShape::HorizontalPlane { size_x, size_y } => ConcreteShape::HorizontalPlane {
                    sx: size_x.sample(&mut rng),
                    sy: size_y.sample(&mut rng),
                },
                BlobShape::VerticalPlane { width, height } => ConcreteShape::VerticalPlane {
                    w: width.sample(&mut rng),
                    h: height.sample(&mut rng),
                    facing_x: rng.gen_bool(0.5),
                },
            };
            instances.push(Instance {
                class_id: obj.class_id,
                shape,
                center_x: ROOM_EXTENT / 2.0,
                center_y: ROOM_EXTENT / 2.0,
                base_z: obj.z_range.sample(&mut rng),
                weight: obj.weight,
            });
        }
    }

    // grid placement for everything except room-spanning planes
    let needs_cell: Vec<usize> = instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| !matches!(inst.shape, ConcreteShape::HorizontalPlane { .. }))
        .map(|(i, _)| i)
        .collect();
    let mut cells: Vec<(f64, f64)> = (0..GRID * GRID)
        .map(|c| {
            let (i, j) = (c % GRID, c / GRID);
            (CELL * (i as f64 + 0.5), CELL * (j as f64 + 0.5))
        })
        .collect();
    cells.shuffle(&mut rng);
    if needs_cell.len() > cells.len() {
        return Err(DataError::InvalidConfig {
            field: "templates",
            reason: format!(
                "template {} can emit {} placeable objects, grid holds {}",
                template.name,
                needs_cell.len(),
                cells.len()
            ),
        });
    }
    for (slot, &idx) in needs_cell.iter().enumerate() {
        let (cx, cy) = cells[slot];
        let (fx, fy) = instances[idx].shape.footprint();
        let free_x = ((CELL - fx) / 2.0 - PLACE_MARGIN).max(0.0);
        let free_y = ((CELL - fy) / 2.0 - PLACE_MARGIN).max(0.0);
        instances[idx].center_x = cx + rng.gen_range(-1.0..1.0) * free_x;
        instances[idx].center_y = cy + rng.gen_range(-1.0..1.0) * free_y;
    }

    // point budget: largest-remainder allocation, at least one per instance
    let total_weight: f64 = instances.iter().map(|i| i.weight).sum();
    let mut alloc: Vec<usize> = Vec::with_capacity(instances.len());
    let mut fractions: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for (i, inst) in instances.iter().enumerate() {
        let share = n_points as f64 * inst.weight / total_weight;
        let base = share.floor() as usize;
        alloc.push(base);
        assigned += base;
        fractions.push((i, share - base as f64));
    }
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = n_points - assigned;
    let mut next = 0;
    while leftover > 0 {
        let (i, _) = fractions[next % fractions.len()];
        alloc[i] += 1;
        leftover -= 1;
        next += 1;
    }
    // guarantee every instance draws at least one point
    for i in 0..alloc.len() {
        while alloc[i] == 0 {
            let donor = alloc
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
                .unwrap();
            alloc[donor] -= 1;
            alloc[i] += 1;
        }
    }
    debug_assert_eq!(alloc.iter().sum::<usize>(), n_points);

    // surface sampling
    let mut coords = Array::zeros(n_points, 3);
    let mut labels = Vec::with_capacity(n_points);
    let mut row = 0;
    for (inst, &count) in instances.iter().zip(&alloc) {
        for _ in 0..count {
            let p = sample_surface(inst, &mut rng);
            coords.set(row, 0, p[0]);
            coords.set(row, 1, p[1]);
            coords.set(row, 2, p[2]);
            labels.push(inst.class_id);
            row += 1;
        }
    }
    Ok(PointCloud::new(coords, Some(labels)).with_scene_type(template.name.clone()))
}

fn sample_surface(inst: &Instance, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let (cx, cy, bz) = (inst.center_x, inst.center_y, inst.base_z);
    match inst.shape {
        ConcreteShape::HorizontalPlane { sx, sy } => [
            cx + (rng.gen::<f64>() - 0.5) * sx,
            cy + (rng.gen::<f64>() - 0.5) * sy,
            bz,
        ],
        ConcreteShape::VerticalPlane { w, h, facing_x } => {
            let along = (rng.gen::<f64>() - 0.5) * w;
            let up = rng.gen::<f64>() * h;
            if facing_x {
                [cx, cy + along, bz + up]
            } else {
                [cx + along, cy, bz + up]
            }
        }
        ConcreteShape::Sphere { r } => {
            let dir: [f64; 3] = UnitSphere.sample(rng);
            [cx + r * dir[0], cy + r * dir[1], bz + r * dir[2]]
        }
        ConcreteShape::Box { sx, sy, sz } => {
            // five faces weighted by area (no bottom)
            let a_top = sx * sy;
            let a_x = sy * sz; // each face with normal along x
            let a_y = sx * sz;
            let total = a_top + 2.0 * a_x + 2.0 * a_y;
            let mut pick = rng.gen::<f64>() * total;
            let (u, v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if pick < a_top {
                return [cx + (u - 0.5) * sx, cy + (v - 0.5) * sy, bz + sz];
            }
            pick -= a_top;
            if pick < 2.0 * a_x {
                let side = if pick < a_x { -0.5 } else { 0.5 };
                return [cx + side * sx, cy + (u - 0.5) * sy, bz + v * sz];
            }
            pick -= 2.0 * a_x;
            let side = if pick < a_y { -0.5 } else { 0.5 };
            [cx + (u - 0.5) * sx, cy + side * sy, bz + v * sz]
        }
    }
}
