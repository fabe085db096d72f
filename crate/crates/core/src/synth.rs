//! Seeded synthetic scenes for roundtrip testing.
//!
//! Players are axis-aligned ellipses, twice as tall as wide, with ears, hips
//! and ankles placed inside the ellipse. The ball is a small disk. All
//! bounding boxes (players and ball) keep at least `min_separation` pixels
//! between them along x or y.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{GridSpec, InstanceMask, Keypoint, KeypointType, Player, Scene, Skeleton};

/// Attempts per object before packing is declared infeasible.
pub const MAX_PLACEMENT_TRIES: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_players: usize,
    /// Inclusive range of player heights in pixels.
    pub player_size_range: (f64, f64),
    pub ball: bool,
    pub min_separation: f64,
    pub grid: GridSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_players: 3,
            player_size_range: (32.0, 64.0),
            ball: false,
            min_separation: 24.0,
            grid: GridSpec { width: 320, height: 256, stride: 8 },
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let (lo, hi) = self.player_size_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 8.0 && lo <= hi) {
            return Err(Error::domain(format!(
                "player size range [{lo}, {hi}] must be finite, ordered and at least 8 px"
            )));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::domain("min_separation must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn bbox(&self) -> (f64, f64, f64, f64) {
        (self.cx - self.rx, self.cy - self.ry, self.cx + self.rx, self.cy + self.ry)
    }

    fn pixels(&self, grid: &GridSpec) -> Vec<u32> {
        let (x0, y0, x1, y1) = self.bbox();
        let mut out = Vec::new();
        for y in y0.ceil().max(0.0) as u32..=(y1.floor() as u32).min(grid.height - 1) {
            for x in x0.ceil().max(0.0) as u32..=(x1.floor() as u32).min(grid.width - 1) {
                let u = (x as f64 - self.cx) / self.rx;
                let v = (y as f64 - self.cy) / self.ry;
                if u * u + v * v <= 1.0 {
                    out.push(grid.pixel_index(x, y));
                }
            }
        }
        out
    }

    fn at(&self, u: f64, v: f64) -> (f64, f64) {
        (self.cx + u * self.rx, self.cy + v * self.ry)
    }
}

fn separated(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), gap: f64) -> bool {
    let gx = (b.0 - a.2).max(a.0 - b.2);
    let gy = (b.1 - a.3).max(a.1 - b.3);
    gx.max(gy) >= gap
}

/// Ellipse-relative positions `(u, v)` of the annotated parts.
const PARTS: [(KeypointType, f64, f64); 6] = [
    (KeypointType::LeftEar, -0.15, -0.75),
    (KeypointType::RightEar, 0.15, -0.75),
    (KeypointType::LeftHip, -0.3, 0.05),
    (KeypointType::RightHip, 0.3, 0.05),
    (KeypointType::LeftAnkle, -0.35, 0.8),
    (KeypointType::RightAnkle, 0.35, 0.8),
];

fn place(
    rng: &mut ChaCha8Rng,
    grid: &GridSpec,
    rx: f64,
    ry: f64,
    taken: &[(f64, f64, f64, f64)],
    gap: f64,
    what: &str,
) -> Result<Ellipse> {
    let (w, h) = (grid.width as f64, grid.height as f64);
    // one pixel of margin so the mask never touches the border
    let (xmin, xmax) = (rx + 1.0, w - 2.0 - rx);
    let (ymin, ymax) = (ry + 1.0, h - 2.0 - ry);
    if xmin >= xmax || ymin >= ymax {
        return Err(Error::Infeasible(format!("{what} does not fit in a {}x{} grid", grid.width, grid.height)));
    }
    for _ in 0..MAX_PLACEMENT_TRIES {
        let e = Ellipse { cx: rng.gen_range(xmin..xmax), cy: rng.gen_range(ymin..ymax), rx, ry };
        if taken.iter().all(|&t| separated(t, e.bbox(), gap)) {
            return Ok(e);
        }
    }
    Err(Error::Infeasible(format!(
        "could not place {what} after {MAX_PLACEMENT_TRIES} attempts"
    )))
}

/// Generates a scene. The same configuration always yields the same scene.
pub fn synth_scene(cfg: &SynthConfig) -> Result<Scene> {
    cfg.validate()?;
    let grid = cfg.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scene = Scene::new(grid);
    let mut taken = Vec::new();

    for id in 0..cfg.n_players {
        let (lo, hi) = cfg.player_size_range;
        let height = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        let e = place(&mut rng, &grid, height / 4.0, height / 2.0, &taken, cfg.min_separation, &format!("player {id}"))?;
        taken.push(e.bbox());
        let keypoints = PARTS.iter().map(|&(kind, u, v)| {
            let (x, y) = e.at(u, v);
            Keypoint::new(kind, x, y, 1.0)
        });
        scene.players.push(Player {
            mask: InstanceMask::new(id as u32, e.pixels(&grid)),
            skeleton: Skeleton::from_keypoints(id as u32, keypoints)?,
        });
    }

    if cfg.ball {
        let r = rng.gen_range(2.5..4.5);
        let e = place(&mut rng, &grid, r, r, &taken, cfg.min_separation, "the ball")?;
        scene.ball_mask = Some(e.pixels(&grid));
    }
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { seed: 0, ball: true, ..SynthConfig::default() };
        assert_eq!(synth_scene(&cfg).unwrap(), synth_scene(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(synth_scene(&cfg).unwrap(), synth_scene(&other).unwrap());
    }

    #[test]
    fn ball_only() {
        let s = synth_scene(&SynthConfig { n_players: 0, ball: true, ..SynthConfig::default() }).unwrap();
        assert!(s.players.is_empty());
        assert!(s.ball_mask.unwrap().len() >= 9);
    }

    #[test]
    fn keypoints_lie_in_their_masks() {
        for seed in 0..20 {
            let s = synth_scene(&SynthConfig { seed, n_players: 6, ..SynthConfig::default() }).unwrap();
            for p in &s.players {
                assert_eq!(p.skeleton.len(), 6);
                for kp in p.skeleton.keypoints() {
                    let idx = s.grid.nearest_pixel(kp.point()).unwrap();
                    assert!(p.mask.contains(idx), "seed {seed} {}", kp.kind);
                }
            }
        }
    }

    #[test]
    fn infeasible_packing() {
        let cfg = SynthConfig { n_players: 2, min_separation: 1000.0, ..SynthConfig::default() };
        assert!(matches!(synth_scene(&cfg), Err(Error::Infeasible(_))));
        let huge = SynthConfig { n_players: 1, player_size_range: (400.0, 400.0), ..SynthConfig::default() };
        assert!(matches!(synth_scene(&huge), Err(Error::Infeasible(_))));
    }
}
