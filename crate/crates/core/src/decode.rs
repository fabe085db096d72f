//! Inference: fuse low-resolution keypoint fields into high-resolution maps,
//! pick the ball, find player centres, group player pixels by centre
//! regression and read each player's skeleton off its own mask.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::types::{
    cell_center, Cell, GridSpec, InstanceMask, Keypoint, KeypointType, Point, Skeleton,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Minimum fused confidence for centres and body parts.
    pub keypoint_threshold: f64,
    /// Minimum semantic score for a pixel to count as a player.
    pub semantic_threshold: f64,
    /// Centre suppression radius in pixels; `None` means one stride.
    pub nms_radius: Option<f64>,
    /// Gaussian support in multiples of sigma.
    pub gaussian_truncation: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            keypoint_threshold: 0.1,
            semantic_threshold: 0.5,
            nms_radius: None,
            gaussian_truncation: 3.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.keypoint_threshold) {
            return Err(Error::domain("keypoint_threshold must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.semantic_threshold) {
            return Err(Error::domain("semantic_threshold must lie in [0, 1]"));
        }
        if let Some(r) = self.nms_radius {
            if !(r > 0.0) {
                return Err(Error::domain("nms_radius must be positive"));
            }
        }
        if !(self.gaussian_truncation >= 1.0) {
            return Err(Error::domain("gaussian_truncation must be at least 1"));
        }
        Ok(())
    }

    pub fn nms_radius_for(&self, grid: &GridSpec) -> f64 {
        self.nms_radius.unwrap_or(grid.stride as f64)
    }
}

/// A dense high-resolution map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl HeatMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        HeatMap {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    /// First maximum in row-major order.
    pub fn argmax(&self) -> Option<(u32, u32, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, v)| {
            let w = self.width as usize;
            ((i % w) as u32, (i / w) as u32, v)
        })
    }

    /// Sub-pixel peak position around pixel `(x, y)`.
    ///
    /// Fits a parabola through the logarithms of the three samples along each
    /// axis, which recovers the centre of an isotropic Gaussian exactly. Axes
    /// lacking positive neighbours are left at the integer position; the
    /// shift is clamped to half a pixel.
    pub fn refine_peak(&self, x: u32, y: u32) -> Point {
        let c = self.get(x, y);
        let axis = |lo: Option<f64>, hi: Option<f64>| -> f64 {
            match (lo, hi) {
                (Some(l), Some(r)) if l > 0.0 && c > 0.0 && r > 0.0 => {
                    let (ll, lc, lr) = (l.ln(), c.ln(), r.ln());
                    let curvature = ll - 2.0 * lc + lr;
                    if curvature < 0.0 {
                        (0.5 * (ll - lr) / curvature).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            }
        };
        let dx = axis(
            (x > 0).then(|| self.get(x - 1, y)),
            (x + 1 < self.width).then(|| self.get(x + 1, y)),
        );
        let dy = axis(
            (y > 0).then(|| self.get(x, y - 1)),
            (y + 1 < self.height).then(|| self.get(x, y + 1)),
        );
        Point::new(x as f64 + dx, y as f64 + dy)
    }
}

/// One Gaussian contribution to a fused map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub weight: f64,
    pub target: Point,
    pub sigma: f64,
}

/// The sources a keypoint type contributes: every cell with positive
/// confidence, voting for `cell_center + loc` with its own sigma.
pub fn sources(fields: &FieldSet, kind: KeypointType) -> Result<Vec<Source>> {
    let grid = fields.grid();
    let conf = fields.conf(kind);
    let loc = fields.loc(kind);
    let log_sigma = fields.log_sigma(kind);
    let lw = grid.low_width();
    let mut out = Vec::new();
    for (i, &c) in conf.iter().enumerate() {
        if c <= 0.0 {
            continue;
        }
        let cell = Cell::new(i as u32 % lw, i as u32 / lw);
        let center = cell_center(cell, grid)?;
        let sigma = (log_sigma[i] as f64).exp();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "{kind} sigma {sigma} at cell ({}, {}) is not positive",
                cell.x, cell.y
            )));
        }
        out.push(Source {
            weight: c as f64,
            target: Point::new(center.x + loc[2 * i] as f64, center.y + loc[2 * i + 1] as f64),
            sigma,
        });
    }
    Ok(out)
}

/// Accumulates unnormalized Gaussians into a `width x height` map, each one
/// only within `truncation * sigma` of its target.
pub fn splat(sources: &[Source], width: u32, height: u32, truncation: f64) -> HeatMap {
    let mut map = HeatMap::zeros(width, height);
    let w = width as usize;
    for s in sources {
        let inv = 1.0 / (2.0 * s.sigma * s.sigma);
        let r = truncation * s.sigma;
        let r2 = r * r;
        let x0 = (s.target.x - r).ceil().max(0.0);
        let x1 = (s.target.x + r).floor().min(width as f64 - 1.0);
        let y0 = (s.target.y - r).ceil().max(0.0);
        let y1 = (s.target.y + r).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
        for y in y0..=y1 {
            let dy = y as f64 - s.target.y;
            let row = &mut map.data[y * w..(y + 1) * w];
            for (x, v) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
                let dx = x as f64 - s.target.x;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2 {
                    *v += s.weight * (-d2 * inv).exp();
                }
            }
        }
    }
    map
}

/// High-resolution confidence map of one keypoint type.
pub fn fuse_highres(fields: &FieldSet, kind: KeypointType, truncation: f64) -> Result<HeatMap> {
    let grid = fields.grid();
    Ok(splat(&sources(fields, kind)?, grid.width, grid.height, truncation))
}

/// Top-1 ball detection: the global maximum, refined to sub-pixel, with the
/// map value at that pixel as confidence. The detection is unconditional: an
/// all-zero map yields a zero-confidence detection at the origin.
pub fn detect_ball(ball_map: &HeatMap) -> Option<Keypoint> {
    let (x, y, v) = ball_map.argmax()?;
    let p = ball_map.refine_peak(x, y);
    Some(Keypoint::new(KeypointType::Ball, p.x, p.y, v))
}

/// Player centres by greedy radius suppression over local maxima.
///
/// Candidates are pixels at or above the threshold that are not exceeded by
/// any of their 8 neighbours. They are visited in descending value (ties in
/// row-major order) and kept unless within `nms_radius` of a kept one.
pub fn detect_centers(ply_map: &HeatMap, grid: &GridSpec, cfg: &DecodeConfig) -> Vec<Keypoint> {
    let (w, h) = (ply_map.width as i64, ply_map.height as i64);
    let thr = cfg.keypoint_threshold;
    let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = ply_map.get(x as u32, y as u32);
            if v < thr || v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for ny in (y - 1).max(0)..=(y + 1).min(h - 1) {
                for nx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                    if ply_map.get(nx as u32, ny as u32) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((v, x as u32, y as u32));
            }
        }
    }
    // stable sort keeps row-major order among equal values
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

    let r2 = cfg.nms_radius_for(grid).powi(2);
    let mut kept: Vec<(u32, u32, f64)> = Vec::new();
    for (v, x, y) in candidates {
        let suppressed = kept.iter().any(|&(kx, ky, _)| {
            let dx = kx as f64 - x as f64;
            let dy = ky as f64 - y as f64;
            dx * dx + dy * dy <= r2
        });
        if !suppressed {
            kept.push((x, y, v));
        }
    }
    kept.into_iter()
        .map(|(x, y, v)| {
            let p = ply_map.refine_peak(x, y);
            Keypoint::new(KeypointType::Ply, p.x, p.y, v)
        })
        .collect()
}

/// Assigns every player pixel to the centre nearest to `p + offset(p)`.
///
/// Returned masks carry the index of their centre in `centers` as
/// `instance_id`; centres that receive no pixel produce no mask.
pub fn group_instances(
    semantic: &[f32],
    offsets: &[f32],
    grid: &GridSpec,
    centers: &[Keypoint],
    cfg: &DecodeConfig,
) -> Result<Vec<InstanceMask>> {
    if semantic.len() != grid.pixel_count() || offsets.len() != 2 * grid.pixel_count() {
        return Err(Error::shape("semantic/offset maps do not match the grid"));
    }
    if centers.is_empty() {
        return Ok(Vec::new());
    }
    let thr = cfg.semantic_threshold;
    let width = grid.width as usize;
    let assignment: Vec<u32> = (0..semantic.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            if (semantic[i] as f64) < thr {
                return u32::MAX;
            }
            let px = (i % width) as f64 + offsets[2 * i] as f64;
            let py = (i / width) as f64 + offsets[2 * i + 1] as f64;
            let mut best = (f64::INFINITY, u32::MAX);
            for (j, c) in centers.iter().enumerate() {
                let d = (c.x - px).powi(2) + (c.y - py).powi(2);
                if d < best.0 {
                    best = (d, j as u32);
                }
            }
            best.1
        })
        .collect();

    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); centers.len()];
    for (i, &a) in assignment.iter().enumerate() {
        if a != u32::MAX {
            buckets[a as usize].push(i as u32);
        }
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .filter(|(_, px)| !px.is_empty())
        .map(|(j, px)| InstanceMask::new(j as u32, px))
        .collect())
}

/// For each mask, the strongest pixel of `map` inside it, if it reaches the
/// threshold. The position is refined to sub-pixel accuracy as long as the
/// refined point still rounds to a pixel of the mask.
pub fn extract_in_masks(
    map: &HeatMap,
    kind: KeypointType,
    masks: &[InstanceMask],
    grid: &GridSpec,
    threshold: f64,
) -> Vec<Option<Keypoint>> {
    masks
        .iter()
        .map(|mask| {
            let mut best: Option<(u32, f64)> = None;
            for &p in mask.pixels() {
                let v = map.data[p as usize];
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((p, v));
                }
            }
            let (p, v) = best?;
            if v < threshold || v <= 0.0 {
                return None;
            }
            let (x, y) = grid.pixel_coords(p);
            let mut refined = map.refine_peak(x, y);
            if grid.nearest_pixel(refined).map_or(true, |q| !mask.contains(q)) {
                refined = Point::new(x as f64, y as f64);
            }
            Some(Keypoint::new(kind, refined.x, refined.y, v))
        })
        .collect()
}

/// Builds one skeleton per mask from the 17 body-part maps (indexed by type
/// id).
pub fn assemble_skeletons(
    part_maps: &[HeatMap],
    masks: &[InstanceMask],
    grid: &GridSpec,
    cfg: &DecodeConfig,
) -> Result<Vec<Skeleton>> {
    let parts = KeypointType::body_parts();
    if part_maps.len() != parts.len() {
        return Err(Error::shape(format!(
            "expected {} body-part maps, got {}",
            parts.len(),
            part_maps.len()
        )));
    }
    let per_type: Vec<Vec<Option<Keypoint>>> = parts
        .iter()
        .zip(part_maps)
        .map(|(&k, m)| extract_in_masks(m, k, masks, grid, cfg.keypoint_threshold))
        .collect();
    skeletons_from_columns(&per_type, masks)
}

fn skeletons_from_columns(per_type: &[Vec<Option<Keypoint>>], masks: &[InstanceMask]) -> Result<Vec<Skeleton>> {
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| Skeleton::from_keypoints(m.instance_id, per_type.iter().filter_map(|col| col[i])))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub ball: Option<Keypoint>,
    pub masks: Vec<InstanceMask>,
    pub skeletons: Vec<Skeleton>,
    pub centers: Vec<Keypoint>,
}

/// Full inference: fuse, ball top-1, centres, grouping, skeletons.
///
/// Instances are numbered `0..n` in the order of their centres.
pub fn decode(fields: &FieldSet, cfg: &DecodeConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    let grid = *fields.grid();
    let t = cfg.gaussian_truncation;

    let ball = detect_ball(&fuse_highres(fields, KeypointType::Ball, t)?);
    let centers = detect_centers(&fuse_highres(fields, KeypointType::Ply, t)?, &grid, cfg);
    let grouped = group_instances(fields.semantic(), fields.offsets(), &grid, &centers, cfg)?;

    let centers: Vec<Keypoint> = grouped.iter().map(|m| centers[m.instance_id as usize]).collect();
    let masks: Vec<InstanceMask> = grouped
        .into_iter()
        .enumerate()
        .map(|(i, m)| InstanceMask::new(i as u32, m.pixels().to_vec()))
        .collect();

    let per_type: Vec<Vec<Option<Keypoint>>> = KeypointType::body_parts()
        .par_iter()
        .map(|&k| {
            let map = fuse_highres(fields, k, t)?;
            Ok(extract_in_masks(&map, k, &masks, &grid, cfg.keypoint_threshold))
        })
        .collect::<Result<_>>()?;
    let skeletons = skeletons_from_columns(&per_type, &masks)?;

    Ok(DecodeResult { ball, masks, skeletons, centers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(target: Point, sigma: f64, weight: f64) -> Source {
        Source { weight, target, sigma }
    }

    #[test]
    fn fused_gaussian_values() {
        let s = single(Point::new(20.0, 20.0), 2.0, 1.0);
        let map = splat(&[s], 64, 64, 3.0);
        assert!((map.get(20, 20) - 1.0).abs() < 1e-15);
        assert!((map.get(20, 22) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((map.get(20, 22) - 0.6065).abs() < 1e-4);
        let map2 = splat(&[s, s], 64, 64, 3.0);
        assert!((map2.get(20, 20) - 2.0).abs() < 1e-15);
        // beyond 3 sigma nothing is written
        assert_eq!(map.get(20, 27), 0.0);
    }

    #[test]
    fn fusion_from_fields_uses_cell_geometry() {
        let grid = GridSpec::new(64, 64, 8).unwrap();
        let mut f = FieldSet::zeros(grid).unwrap();
        f.set_cell(KeypointType::Nose, Cell::new(2, 3), 0.5, [1.5, -2.0], 3.0);
        let map = fuse_highres(&f, KeypointType::Nose, 3.0).unwrap();
        // cell (2, 3) centre is (20, 28); target (21.5, 26)
        let expect = 0.5 * (-(0.25f64 + 0.0) / 18.0).exp();
        assert!((map.get(21, 26) - expect).abs() < 1e-7);
        let s = sources(&f, KeypointType::Nose).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].target, Point::new(21.5, 26.0));
    }

    #[test]
    fn refinement_recovers_gaussian_centre() {
        let t = Point::new(30.37, 12.81);
        let map = splat(&[single(t, 1.7, 4.0)], 64, 64, 3.0);
        let (x, y, _) = map.argmax().unwrap();
        assert_eq!((x, y), (30, 13));
        let p = map.refine_peak(x, y);
        assert!(p.distance(t) < 1e-9, "{p:?}");
    }

    #[test]
    fn ball_detection() {
        let zero = HeatMap::zeros(16, 16);
        let b = detect_ball(&zero).unwrap();
        assert_eq!((b.x, b.y, b.confidence), (0.0, 0.0, 0.0));

        let mut m = HeatMap::zeros(16, 16);
        m.set(3, 4, 0.9);
        m.set(10, 10, 0.8);
        let b = detect_ball(&m).unwrap();
        assert_eq!((b.x, b.y, b.confidence), (3.0, 4.0, 0.9));
    }

    #[test]
    fn center_nms() {
        let grid = GridSpec::new(32, 32, 8).unwrap();
        let cfg = DecodeConfig::default();
        assert!(detect_centers(&HeatMap::zeros(32, 32), &grid, &cfg).is_empty());

        let mut m = HeatMap::zeros(32, 32);
        m.set(10, 10, 0.9);
        m.set(13, 10, 0.8);
        let c = detect_centers(&m, &grid, &cfg);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].x, c[0].y), (10.0, 10.0));

        m.set(25, 25, 0.5);
        let c = detect_centers(&m, &grid, &cfg);
        assert_eq!(c.len(), 2);
        let strict = DecodeConfig { keypoint_threshold: 0.6, ..cfg };
        assert_eq!(detect_centers(&m, &grid, &strict).len(), 1);
    }

    #[test]
    fn grouping_follows_offsets() {
        let grid = GridSpec::new(32, 32, 8).unwrap();
        let mut semantic = vec![0.0f32; 1024];
        let mut offsets = vec![0.0f32; 2048];
        let p = grid.pixel_index(10, 10) as usize;
        semantic[p] = 1.0;
        offsets[2 * p] = -2.0;
        offsets[2 * p + 1] = -2.0;
        let centers = [
            Keypoint::new(KeypointType::Ply, 8.0, 8.0, 1.0),
            Keypoint::new(KeypointType::Ply, 20.0, 20.0, 1.0),
        ];
        let cfg = DecodeConfig::default();
        let masks = group_instances(&semantic, &offsets, &grid, &centers, &cfg).unwrap();
        assert_eq!(masks.len(), 1);
        assert_eq!(masks[0].instance_id, 0);
        assert_eq!(masks[0].pixels(), &[p as u32]);

        let low = vec![0.4f32; 1024];
        assert!(group_instances(&low, &offsets, &grid, &centers, &cfg).unwrap().is_empty());
        assert!(group_instances(&semantic, &offsets, &grid, &[], &cfg).unwrap().is_empty());
    }

    #[test]
    fn argmin_ties_prefer_lower_center_index() {
        let grid = GridSpec::new(16, 16, 8).unwrap();
        let mut semantic = vec![0.0f32; 256];
        semantic[grid.pixel_index(5, 5) as usize] = 1.0;
        let offsets = vec![0.0f32; 512];
        let centers = [
            Keypoint::new(KeypointType::Ply, 7.0, 5.0, 1.0),
            Keypoint::new(KeypointType::Ply, 3.0, 5.0, 1.0),
        ];
        let masks = group_instances(&semantic, &offsets, &grid, &centers, &DecodeConfig::default()).unwrap();
        assert_eq!(masks[0].instance_id, 0);
    }

    #[test]
    fn skeleton_parts_restricted_to_masks() {
        let grid = GridSpec::new(32, 32, 8).unwrap();
        let mask = InstanceMask::new(0, (0..32).map(|x| grid.pixel_index(x, 5)).collect());
        let mut maps = vec![HeatMap::zeros(32, 32); 17];
        maps[0].set(7, 5, 0.05); // below threshold
        maps[1].set(9, 5, 0.7);
        maps[2].set(9, 20, 0.9); // outside the mask
        let sk = assemble_skeletons(&maps, &[mask.clone()], &grid, &DecodeConfig::default()).unwrap();
        assert_eq!(sk.len(), 1);
        assert_eq!(sk[0].len(), 1);
        assert_eq!(sk[0].get(KeypointType::LeftEye).unwrap().x, 9.0);
        assert!((sk[0].confidence() - 0.7).abs() < 1e-12);

        let empty = vec![HeatMap::zeros(32, 32); 17];
        let sk = assemble_skeletons(&empty, &[mask], &grid, &DecodeConfig::default()).unwrap();
        assert!(sk[0].is_empty());
        assert_eq!(sk[0].confidence(), 0.0);
    }

    #[test]
    fn all_zero_fields_decode_to_nothing() {
        let grid = GridSpec::new(64, 64, 8).unwrap();
        let r = decode(&FieldSet::zeros(grid).unwrap(), &DecodeConfig::default()).unwrap();
        assert!(r.masks.is_empty() && r.skeletons.is_empty() && r.centers.is_empty());
        let b = r.ball.unwrap();
        assert_eq!((b.x, b.y, b.confidence), (0.0, 0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(DecodeConfig { keypoint_threshold: 1.5, ..Default::default() }.validate().is_err());
        assert!(DecodeConfig { nms_radius: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(DecodeConfig { gaussian_truncation: 0.5, ..Default::default() }.validate().is_err());
        assert!(DecodeConfig { gaussian_truncation: f64::INFINITY, ..Default::default() }.validate().is_ok());
    }
}
