//! Domain types shared by every stage of the pipeline: the keypoint-type
//! vocabulary, grid geometry, and ground-truth / decoded annotations.
//!
//! Coordinates are `(x, y)` in high-resolution pixels with the origin at the
//! top-left of the image. Pixel `(i, j)` is sampled at the point `(i, j)`, and
//! low-resolution cell `u` is centred at `(u + 0.5) * stride`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of keypoint types: 17 body parts, the ball and the player centre.
pub const NUM_KEYPOINT_TYPES: usize = 19;

/// Number of body-part keypoint types.
pub const NUM_BODY_PARTS: usize = 17;

/// One of the 19 keypoint types. Body parts follow COCO order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointType {
    Nose = 0,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
    Ball,
    Ply,
}

impl KeypointType {
    pub const ALL: [KeypointType; NUM_KEYPOINT_TYPES] = [
        KeypointType::Nose,
        KeypointType::LeftEye,
        KeypointType::RightEye,
        KeypointType::LeftEar,
        KeypointType::RightEar,
        KeypointType::LeftShoulder,
        KeypointType::RightShoulder,
        KeypointType::LeftElbow,
        KeypointType::RightElbow,
        KeypointType::LeftWrist,
        KeypointType::RightWrist,
        KeypointType::LeftHip,
        KeypointType::RightHip,
        KeypointType::LeftKnee,
        KeypointType::RightKnee,
        KeypointType::LeftAnkle,
        KeypointType::RightAnkle,
        KeypointType::Ball,
        KeypointType::Ply,
    ];

    pub fn body_parts() -> &'static [KeypointType] {
        &Self::ALL[..NUM_BODY_PARTS]
    }

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn is_body_part(self) -> bool {
        self.id() < NUM_BODY_PARTS
    }

    pub fn name(self) -> &'static str {
        match self {
            KeypointType::Nose => "nose",
            KeypointType::LeftEye => "left_eye",
            KeypointType::RightEye => "right_eye",
            KeypointType::LeftEar => "left_ear",
            KeypointType::RightEar => "right_ear",
            KeypointType::LeftShoulder => "left_shoulder",
            KeypointType::RightShoulder => "right_shoulder",
            KeypointType::LeftElbow => "left_elbow",
            KeypointType::RightElbow => "right_elbow",
            KeypointType::LeftWrist => "left_wrist",
            KeypointType::RightWrist => "right_wrist",
            KeypointType::LeftHip => "left_hip",
            KeypointType::RightHip => "right_hip",
            KeypointType::LeftKnee => "left_knee",
            KeypointType::RightKnee => "right_knee",
            KeypointType::LeftAnkle => "left_ankle",
            KeypointType::RightAnkle => "right_ankle",
            KeypointType::Ball => "ball",
            KeypointType::Ply => "ply",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for KeypointType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// High-resolution image size and the low-resolution stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    pub stride: u32,
}

impl GridSpec {
    pub fn new(width: u32, height: u32, stride: u32) -> Result<Self> {
        let grid = GridSpec { width, height, stride };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::domain(format!(
                "grid dimensions must be positive, got {}x{} stride {}",
                self.width, self.height, self.stride
            )));
        }
        if self.width % self.stride != 0 || self.height % self.stride != 0 {
            return Err(Error::domain(format!(
                "grid {}x{} not divisible by stride {}",
                self.width, self.height, self.stride
            )));
        }
        // Keep every pixel index representable as u32.
        if (self.width as u64) * (self.height as u64) > u32::MAX as u64 {
            return Err(Error::domain("grid too large"));
        }
        Ok(())
    }

    pub fn low_width(&self) -> u32 {
        self.width / self.stride
    }

    pub fn low_height(&self) -> u32 {
        self.height / self.stride
    }

    /// Number of high-resolution pixels `P`.
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Number of low-resolution cells, `P / stride^2`.
    pub fn cell_count(&self) -> usize {
        self.low_width() as usize * self.low_height() as usize
    }

    pub fn pixel_index(&self, x: u32, y: u32) -> u32 {
        y * self.width + x
    }

    pub fn pixel_coords(&self, index: u32) -> (u32, u32) {
        (index % self.width, index / self.width)
    }

    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.y as usize * self.low_width() as usize + cell.x as usize
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        cell.x < self.low_width() && cell.y < self.low_height()
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Nearest pixel to `p`, or `None` if it falls outside the image.
    pub fn nearest_pixel(&self, p: Point) -> Option<u32> {
        let x = (p.x + 0.5).floor();
        let y = (p.y + 0.5).floor();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some(self.pixel_index(x as u32, y as u32))
    }
}

/// Low-resolution cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// High-resolution centre of a low-resolution cell.
pub fn cell_center(cell: Cell, grid: &GridSpec) -> Result<Point> {
    if !grid.contains_cell(cell) {
        return Err(Error::domain(format!(
            "cell ({}, {}) outside {}x{} low-res grid",
            cell.x,
            cell.y,
            grid.low_width(),
            grid.low_height()
        )));
    }
    let s = grid.stride as f64;
    Ok(Point::new((cell.x as f64 + 0.5) * s, (cell.y as f64 + 0.5) * s))
}

/// The 4x4 block of cells around `p`, clipped to the grid.
///
/// Columns run from `floor(x / stride) - 1` to `floor(x / stride) + 2`, rows
/// likewise. Cells are returned row-major.
pub fn patch_cells(p: Point, grid: &GridSpec) -> Vec<Cell> {
    let s = grid.stride as f64;
    let cx = (p.x / s).floor() as i64;
    let cy = (p.y / s).floor() as i64;
    let (lw, lh) = (grid.low_width() as i64, grid.low_height() as i64);
    let mut cells = Vec::with_capacity(16);
    for y in (cy - 1).max(0)..=(cy + 2).min(lh - 1) {
        for x in (cx - 1).max(0)..=(cx + 2).min(lw - 1) {
            cells.push(Cell::new(x as u32, y as u32));
        }
    }
    cells
}

/// A typed keypoint at a sub-pixel location.
///
/// Ground-truth keypoints carry confidence 1. Decoded keypoints carry the raw
/// fused map value, which is not bounded above by 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub kind: KeypointType,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(kind: KeypointType, x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { kind, x, y, confidence }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// The pixels of one player instance, as sorted unique row-major indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub instance_id: u32,
    pixels: Vec<u32>,
}

impl InstanceMask {
    pub fn new(instance_id: u32, mut pixels: Vec<u32>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        InstanceMask { instance_id, pixels }
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, index: u32) -> bool {
        self.pixels.binary_search(&index).is_ok()
    }

    /// Checks that every pixel lies inside `grid`.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if let Some(&last) = self.pixels.last() {
            if last as usize >= grid.pixel_count() {
                return Err(Error::domain(format!(
                    "mask {} has pixel {} outside the grid",
                    self.instance_id, last
                )));
            }
        }
        Ok(())
    }

    /// Arithmetic mean of the pixel coordinates.
    pub fn centroid(&self, grid: &GridSpec) -> Option<Point> {
        pixel_centroid(&self.pixels, grid)
    }

    /// Tight inclusive pixel bounding box `(x0, y0, x1, y1)`.
    pub fn bbox(&self, grid: &GridSpec) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.pixels.iter().map(|&i| grid.pixel_coords(i));
        let (x, y) = it.next()?;
        Some(it.fold((x, y, x, y), |(x0, y0, x1, y1), (x, y)| {
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        }))
    }

    /// Size of the intersection with another mask.
    pub fn intersection_len(&self, other: &InstanceMask) -> usize {
        sorted_intersection_len(&self.pixels, &other.pixels)
    }

    pub fn iou(&self, other: &InstanceMask) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub(crate) fn pixel_centroid(pixels: &[u32], grid: &GridSpec) -> Option<Point> {
    if pixels.is_empty() {
        return None;
    }
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for &i in pixels {
        let (x, y) = grid.pixel_coords(i);
        sx += x as f64;
        sy += y as f64;
    }
    let n = pixels.len() as f64;
    Some(Point::new(sx / n, sy / n))
}

fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Body-part keypoints of one player, at most one per type.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub instance_id: u32,
    parts: [Option<Keypoint>; NUM_BODY_PARTS],
    confidence: f64,
}

impl Skeleton {
    pub fn empty(instance_id: u32) -> Self {
        Skeleton {
            instance_id,
            parts: [None; NUM_BODY_PARTS],
            confidence: 0.0,
        }
    }

    /// Builds a skeleton from body-part keypoints. A later keypoint of the
    /// same type replaces an earlier one only if it is more confident.
    pub fn from_keypoints(
        instance_id: u32,
        keypoints: impl IntoIterator<Item = Keypoint>,
    ) -> Result<Self> {
        let mut skeleton = Skeleton::empty(instance_id);
        for kp in keypoints {
            if !kp.kind.is_body_part() {
                return Err(Error::domain(format!(
                    "{} is not a body part",
                    kp.kind
                )));
            }
            let slot = &mut skeleton.parts[kp.kind.id()];
            match slot {
                Some(existing) if existing.confidence >= kp.confidence => {}
                _ => *slot = Some(kp),
            }
        }
        skeleton.update_confidence();
        Ok(skeleton)
    }

    pub fn get(&self, kind: KeypointType) -> Option<&Keypoint> {
        self.parts.get(kind.id()).and_then(|p| p.as_ref())
    }

    /// Present keypoints in type order.
    pub fn keypoints(&self) -> impl Iterator<Item = &Keypoint> {
        self.parts.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.keypoints().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean confidence of the present parts, 0 when empty.
    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    fn update_confidence(&mut self) {
        let (sum, n) = self
            .keypoints()
            .fold((0.0, 0usize), |(s, n), kp| (s + kp.confidence, n + 1));
        self.confidence = if n == 0 { 0.0 } else { sum / n as f64 };
    }
}

/// A ground-truth player: instance mask plus annotated skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub mask: InstanceMask,
    pub skeleton: Skeleton,
}

/// Ground-truth annotations of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub grid: GridSpec,
    /// Sorted unique pixel indices of the ball, if annotated.
    pub ball_mask: Option<Vec<u32>>,
    pub players: Vec<Player>,
    pub court: Option<Vec<Point>>,
}

impl Scene {
    pub fn new(grid: GridSpec) -> Self {
        Scene {
            grid,
            ball_mask: None,
            players: Vec::new(),
            court: None,
        }
    }

    /// Checks the structural invariants: non-empty in-grid masks, in-grid
    /// keypoints, a non-empty ball mask.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if let Some(ball) = &self.ball_mask {
            if ball.is_empty() {
                return Err(Error::domain("empty ball mask"));
            }
            if ball.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain("ball mask must be sorted and unique"));
            }
            if *ball.last().unwrap() as usize >= self.grid.pixel_count() {
                return Err(Error::domain("ball mask pixel outside the grid"));
            }
        }
        for player in &self.players {
            if player.mask.is_empty() {
                return Err(Error::domain(format!(
                    "player {} has an empty mask",
                    player.mask.instance_id
                )));
            }
            player.mask.validate(&self.grid)?;
            for kp in player.skeleton.keypoints() {
                if !self.grid.contains_point(kp.point()) {
                    return Err(Error::domain(format!(
                        "{} keypoint ({}, {}) of player {} outside the grid",
                        kp.kind, kp.x, kp.y, player.mask.instance_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ball_centroid(&self) -> Option<Point> {
        self.ball_mask
            .as_deref()
            .and_then(|m| pixel_centroid(m, &self.grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(stride: u32) -> GridSpec {
        GridSpec::new(256, 256, stride).unwrap()
    }

    #[test]
    fn vocabulary_is_dense() {
        for (i, k) in KeypointType::ALL.iter().enumerate() {
            assert_eq!(k.id(), i);
            assert_eq!(KeypointType::from_name(k.name()), Some(*k));
        }
        assert_eq!(KeypointType::Ball.id(), 17);
        assert_eq!(KeypointType::Ply.id(), 18);
        assert_eq!(KeypointType::body_parts().len(), 17);
        assert!(!KeypointType::Ball.is_body_part());
    }

    #[test]
    fn grid_requires_divisibility() {
        assert!(GridSpec::new(641, 641, 8).is_err());
        let g = GridSpec::new(640, 480, 8).unwrap();
        assert_eq!((g.low_width(), g.low_height()), (80, 60));
        assert_eq!(g.cell_count() * 64, g.pixel_count());
    }

    #[test]
    fn cell_centers() {
        assert_eq!(cell_center(Cell::new(0, 0), &grid(8)).unwrap(), Point::new(4.0, 4.0));
        assert_eq!(
            cell_center(Cell::new(12, 12), &grid(8)).unwrap(),
            Point::new(100.0, 100.0)
        );
        assert_eq!(cell_center(Cell::new(1, 0), &grid(4)).unwrap(), Point::new(6.0, 2.0));
        assert!(matches!(
            cell_center(Cell::new(32, 0), &grid(8)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn patch_interior() {
        let cells = patch_cells(Point::new(100.0, 100.0), &grid(8));
        let expected: Vec<Cell> = (11..=14)
            .flat_map(|y| (11..=14).map(move |x| Cell::new(x, y)))
            .collect();
        assert_eq!(cells, expected);
    }

    #[test]
    fn patch_clipped_at_border() {
        let cells = patch_cells(Point::new(4.0, 4.0), &grid(8));
        assert_eq!(cells.len(), 9);
        assert!(cells.iter().all(|c| c.x <= 2 && c.y <= 2));

        let cells = patch_cells(Point::new(0.1, 0.1), &grid(8));
        assert_eq!(cells.len(), 9);

        let cells = patch_cells(Point::new(255.9, 255.9), &grid(8));
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.x >= 30 && c.y >= 30));
    }

    #[test]
    fn mask_geometry() {
        let g = grid(8);
        let m = InstanceMask::new(
            0,
            vec![g.pixel_index(1, 1), g.pixel_index(0, 0), g.pixel_index(1, 0), g.pixel_index(0, 1), 0],
        );
        assert_eq!(m.len(), 4);
        assert_eq!(m.centroid(&g), Some(Point::new(0.5, 0.5)));
        assert_eq!(m.bbox(&g), Some((0, 0, 1, 1)));
        let half = InstanceMask::new(1, vec![0, 1]);
        assert!((m.iou(&half) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn skeleton_confidence_and_dedup() {
        let sk = Skeleton::from_keypoints(
            3,
            [
                Keypoint::new(KeypointType::Nose, 1.0, 1.0, 0.4),
                Keypoint::new(KeypointType::Nose, 2.0, 2.0, 0.8),
                Keypoint::new(KeypointType::LeftHip, 5.0, 5.0, 0.6),
            ],
        )
        .unwrap();
        assert_eq!(sk.len(), 2);
        assert_eq!(sk.get(KeypointType::Nose).unwrap().x, 2.0);
        assert!((sk.confidence() - 0.7).abs() < 1e-12);
        assert_eq!(Skeleton::empty(0).confidence(), 0.0);
        assert!(Skeleton::from_keypoints(0, [Keypoint::new(KeypointType::Ball, 0.0, 0.0, 1.0)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn patch_cells_stay_near(x in 0.0f64..256.0, y in 0.0f64..256.0, stride in prop::sample::select(vec![4u32, 8, 16])) {
                let g = grid(stride);
                let p = Point::new(x, y);
                let cells = patch_cells(p, &g);
                prop_assert!(!cells.is_empty() && cells.len() <= 16);
                for c in cells {
                    let center = cell_center(c, &g).unwrap();
                    prop_assert!(center.distance(p) <= 2.5 * stride as f64 * std::f64::consts::SQRT_2);
                    prop_assert!((center.x - p.x).abs() <= 2.5 * stride as f64);
                    prop_assert!((center.y - p.y).abs() <= 2.5 * stride as f64);
                }
            }

            #[test]
            fn patch_of_center_contains_cell(cx in 0u32..32, cy in 0u32..32) {
                let g = grid(8);
                let c = Cell::new(cx, cy);
                let cells = patch_cells(cell_center(c, &g).unwrap(), &g);
                prop_assert!(cells.contains(&c));
            }
        }
    }
}
