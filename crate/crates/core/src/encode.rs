//! Ground-truth scene to supervision fields.

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::types::{
    cell_center, patch_cells, GridSpec, KeypointType, Point, Scene, NUM_KEYPOINT_TYPES,
};

/// Per-type size constants for encoded keypoint sigma.
///
/// The encoded sigma of a keypoint is `max(min_sigma, kappa_scale[k] * size)`
/// where `size` is the square root of the owning instance's bounding-box area
/// (or of the ball mask area).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    pub kappa_scale: [f64; NUM_KEYPOINT_TYPES],
    pub min_sigma: f64,
}

/// COCO per-part standard deviations followed by ball and player centre.
pub const DEFAULT_KAPPA_SCALE: [f64; NUM_KEYPOINT_TYPES] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107,
    0.087, 0.087, 0.089, 0.089, // body parts
    0.25, // ball
    0.1,  // ply
];

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            kappa_scale: DEFAULT_KAPPA_SCALE,
            min_sigma: 0.5,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.kappa_scale.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::domain(format!("kappa_scale must be positive, got {k}")));
        }
        if !(self.min_sigma > 0.0 && self.min_sigma.is_finite()) {
            return Err(Error::domain(format!(
                "min_sigma must be positive, got {}",
                self.min_sigma
            )));
        }
        Ok(())
    }
}

/// `1` on every pixel of any player mask, `0` elsewhere.
pub fn encode_semantic(scene: &Scene) -> Vec<f32> {
    let mut out = vec![0.0f32; scene.grid.pixel_count()];
    for player in &scene.players {
        for &p in player.mask.pixels() {
            out[p as usize] = 1.0;
        }
    }
    out
}

/// Per-pixel displacement to the owning instance's centroid, interleaved
/// `(dx, dy)`. Overlapping pixels belong to the smaller instance id.
pub fn encode_offsets(scene: &Scene) -> Vec<f32> {
    let grid = &scene.grid;
    let mut out = vec![0.0f32; 2 * grid.pixel_count()];
    let mut owner = vec![u32::MAX; grid.pixel_count()];
    for player in &scene.players {
        let Some(c) = player.mask.centroid(grid) else {
            continue;
        };
        let id = player.mask.instance_id;
        for &p in player.mask.pixels() {
            let p = p as usize;
            if owner[p] != u32::MAX && owner[p] <= id {
                continue;
            }
            owner[p] = id;
            let (x, y) = grid.pixel_coords(p as u32);
            out[2 * p] = (c.x - x as f64) as f32;
            out[2 * p + 1] = (c.y - y as f64) as f32;
        }
    }
    out
}

/// One keypoint instance to be written into the low-resolution fields.
#[derive(Debug, Clone, Copy)]
struct Target {
    point: Point,
    sigma: f64,
}

fn targets_by_type(scene: &Scene, cfg: &EncodeConfig) -> Result<Vec<Vec<Target>>> {
    let grid = &scene.grid;
    let mut out: Vec<Vec<Target>> = vec![Vec::new(); NUM_KEYPOINT_TYPES];
    let sigma = |k: KeypointType, size: f64| (cfg.kappa_scale[k.id()] * size).max(cfg.min_sigma);

    // Players in instance-id order so collisions resolve deterministically.
    let mut players: Vec<_> = scene.players.iter().collect();
    players.sort_by_key(|p| p.mask.instance_id);
    for player in players {
        let Some((x0, y0, x1, y1)) = player.mask.bbox(grid) else {
            return Err(Error::domain(format!(
                "player {} has an empty mask",
                player.mask.instance_id
            )));
        };
        let size = (((x1 - x0 + 1) as f64) * ((y1 - y0 + 1) as f64)).sqrt();
        for kp in player.skeleton.keypoints() {
            let point = kp.point();
            if !grid.contains_point(point) {
                return Err(Error::domain(format!(
                    "{} keypoint ({}, {}) outside the grid",
                    kp.kind, kp.x, kp.y
                )));
            }
            out[kp.kind.id()].push(Target {
                point,
                sigma: sigma(kp.kind, size),
            });
        }
        let centroid = player.mask.centroid(grid).expect("non-empty mask");
        out[KeypointType::Ply.id()].push(Target {
            point: centroid,
            sigma: sigma(KeypointType::Ply, size),
        });
    }
    if let (Some(mask), Some(centroid)) = (&scene.ball_mask, scene.ball_centroid()) {
        let size = (mask.len() as f64).sqrt();
        out[KeypointType::Ball.id()].push(Target {
            point: centroid,
            sigma: sigma(KeypointType::Ball, size),
        });
    }
    Ok(out)
}

/// Writes confidence, localization and sigma targets for every keypoint type
/// into `fields`.
///
/// Each keypoint claims the 16 cells of its patch. A cell claimed by two
/// keypoints of the same type goes to the one nearer the cell centre.
pub fn encode_keypoint_fields(scene: &Scene, cfg: &EncodeConfig, fields: &mut FieldSet) -> Result<()> {
    cfg.validate()?;
    let grid = *fields.grid();
    if grid != scene.grid {
        return Err(Error::shape("field grid differs from scene grid"));
    }
    let targets = targets_by_type(scene, cfg)?;
    let mut owner: Vec<Option<(f64, usize)>> = vec![None; grid.cell_count()];
    for kind in KeypointType::ALL {
        let list = &targets[kind.id()];
        if list.is_empty() {
            continue;
        }
        owner.fill(None);
        for (i, t) in list.iter().enumerate() {
            for cell in patch_cells(t.point, &grid) {
                let d = cell_center(cell, &grid)?.distance_sq(t.point);
                let slot = &mut owner[grid.cell_index(cell)];
                if slot.map_or(true, |(best, _)| d < best) {
                    *slot = Some((d, i));
                }
            }
        }
        for (ci, slot) in owner.iter().enumerate() {
            let Some((_, i)) = *slot else { continue };
            let cell = cell_of(ci, &grid);
            let t = list[i];
            let c = cell_center(cell, &grid)?;
            let loc = [(t.point.x - c.x) as f32, (t.point.y - c.y) as f32];
            fields.set_cell(kind, cell, 1.0, loc, t.sigma);
        }
    }
    Ok(())
}

fn cell_of(index: usize, grid: &GridSpec) -> crate::types::Cell {
    let w = grid.low_width() as usize;
    crate::types::Cell::new((index % w) as u32, (index / w) as u32)
}

/// Encodes a complete target [`FieldSet`]. Scale targets are 1 everywhere.
pub fn encode(scene: &Scene, cfg: &EncodeConfig) -> Result<FieldSet> {
    scene.validate()?;
    let mut fields = FieldSet::zeros(scene.grid)?;
    fields
        .tensor_mut(crate::fields::TensorKind::Semantic)
        .copy_from_slice(&encode_semantic(scene));
    fields
        .tensor_mut(crate::fields::TensorKind::Offsets)
        .copy_from_slice(&encode_offsets(scene));
    encode_keypoint_fields(scene, cfg, &mut fields)?;
    Ok(fields)
}
