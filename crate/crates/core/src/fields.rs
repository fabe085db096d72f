//! The full stack of network-shaped fields for one image.

use crate::error::{Error, Result};
use crate::types::{Cell, GridSpec, KeypointType, NUM_KEYPOINT_TYPES};

/// Identifies one tensor of a [`FieldSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TensorKind {
    /// `[H, W]` player score.
    Semantic,
    /// `[H, W, 2]` displacement toward the owning player's centre.
    Offsets,
    /// `[19, h, w]` keypoint confidence.
    Conf,
    /// `[19, h, w, 2]` localization vectors.
    Loc,
    /// `[19, h, w]` natural log of keypoint size.
    LogSigma,
    /// `[19, h, w]` natural log of the localization-loss scale.
    LogScale,
}

impl TensorKind {
    pub const ALL: [TensorKind; 6] = [
        TensorKind::Semantic,
        TensorKind::Offsets,
        TensorKind::Conf,
        TensorKind::Loc,
        TensorKind::LogSigma,
        TensorKind::LogScale,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Expected dimensions for `grid`, outermost first.
    pub fn dims(self, grid: &GridSpec) -> Vec<u32> {
        let (h, w) = (grid.height, grid.width);
        let (lh, lw) = (grid.low_height(), grid.low_width());
        let k = NUM_KEYPOINT_TYPES as u32;
        match self {
            TensorKind::Semantic => vec![h, w],
            TensorKind::Offsets => vec![h, w, 2],
            TensorKind::Conf | TensorKind::LogSigma | TensorKind::LogScale => vec![k, lh, lw],
            TensorKind::Loc => vec![k, lh, lw, 2],
        }
    }
}

/// Network outputs or supervision targets for one image.
///
/// Sigma and scale are held in log-space and exponentiated on read, so they
/// are positive by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    grid: GridSpec,
    semantic: Vec<f32>,
    offsets: Vec<f32>,
    conf: Vec<f32>,
    loc: Vec<f32>,
    log_sigma: Vec<f32>,
    log_scale: Vec<f32>,
}

impl FieldSet {
    /// All-zero fields (sigma = scale = 1).
    pub fn zeros(grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let p = grid.pixel_count();
        let c = grid.cell_count() * NUM_KEYPOINT_TYPES;
        Ok(FieldSet {
            grid,
            semantic: vec![0.0; p],
            offsets: vec![0.0; 2 * p],
            conf: vec![0.0; c],
            loc: vec![0.0; 2 * c],
            log_sigma: vec![0.0; c],
            log_scale: vec![0.0; c],
        })
    }

    /// Builds a field set from linear-space sigma and scale.
    ///
    /// Rejects any sigma or scale that is not strictly positive at a cell with
    /// positive confidence. Elsewhere non-positive values are replaced by 1.
    #[allow(clippy::too_many_arguments)]
    pub fn from_linear(
        grid: GridSpec,
        semantic: Vec<f32>,
        offsets: Vec<f32>,
        conf: Vec<f32>,
        loc: Vec<f32>,
        sigma: Vec<f32>,
        scale: Vec<f32>,
    ) -> Result<Self> {
        let c = grid.cell_count() * NUM_KEYPOINT_TYPES;
        if sigma.len() != c || scale.len() != c || conf.len() != c {
            return Err(Error::shape(format!(
                "per-type tensors must have {c} entries"
            )));
        }
        let mut log_sigma = Vec::with_capacity(c);
        let mut log_scale = Vec::with_capacity(c);
        for i in 0..c {
            let supervised = conf[i] > 0.0;
            for (value, out, name) in [
                (sigma[i], &mut log_sigma, "sigma"),
                (scale[i], &mut log_scale, "scale"),
            ] {
                if value > 0.0 && value.is_finite() {
                    out.push(value.ln());
                } else if supervised {
                    return Err(Error::domain(format!(
                        "{name} must be positive where conf > 0, got {value} at entry {i}"
                    )));
                } else {
                    out.push(0.0);
                }
            }
        }
        Self::from_raw(grid, semantic, offsets, conf, loc, log_sigma, log_scale)
    }

    /// Builds a field set from log-space tensors, validating shapes and ranges.
    pub fn from_raw(
        grid: GridSpec,
        semantic: Vec<f32>,
        offsets: Vec<f32>,
        conf: Vec<f32>,
        loc: Vec<f32>,
        log_sigma: Vec<f32>,
        log_scale: Vec<f32>,
    ) -> Result<Self> {
        grid.validate()?;
        let fields = FieldSet {
            grid,
            semantic,
            offsets,
            conf,
            loc,
            log_sigma,
            log_scale,
        };
        for kind in TensorKind::ALL {
            let expected: usize = kind.dims(&grid).iter().map(|&d| d as usize).product();
            let got = fields.tensor(kind).len();
            if got != expected {
                return Err(Error::shape(format!(
                    "{kind:?} has {got} entries, expected {expected}"
                )));
            }
        }
        if let Some(v) = fields.semantic.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("semantic score {v} outside [0, 1]")));
        }
        if let Some(v) = fields.conf.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("confidence {v} outside [0, 1]")));
        }
        for kind in [TensorKind::Offsets, TensorKind::Loc, TensorKind::LogSigma, TensorKind::LogScale] {
            if fields.tensor(kind).iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("{kind:?} contains non-finite values")));
            }
        }
        Ok(fields)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Raw storage of one tensor, row-major with x fastest.
    pub fn tensor(&self, kind: TensorKind) -> &[f32] {
        match kind {
            TensorKind::Semantic => &self.semantic,
            TensorKind::Offsets => &self.offsets,
            TensorKind::Conf => &self.conf,
            TensorKind::Loc => &self.loc,
            TensorKind::LogSigma => &self.log_sigma,
            TensorKind::LogScale => &self.log_scale,
        }
    }

    pub(crate) fn tensor_mut(&mut self, kind: TensorKind) -> &mut [f32] {
        match kind {
            TensorKind::Semantic => &mut self.semantic,
            TensorKind::Offsets => &mut self.offsets,
            TensorKind::Conf => &mut self.conf,
            TensorKind::Loc => &mut self.loc,
            TensorKind::LogSigma => &mut self.log_sigma,
            TensorKind::LogScale => &mut self.log_scale,
        }
    }

    pub fn semantic(&self) -> &[f32] {
        &self.semantic
    }

    /// Interleaved `(dx, dy)` per pixel.
    pub fn offsets(&self) -> &[f32] {
        &self.offsets
    }

    fn type_range(&self, kind: KeypointType) -> std::ops::Range<usize> {
        let n = self.grid.cell_count();
        kind.id() * n..(kind.id() + 1) * n
    }

    pub fn conf(&self, kind: KeypointType) -> &[f32] {
        &self.conf[self.type_range(kind)]
    }

    /// Interleaved `(dx, dy)` per cell.
    pub fn loc(&self, kind: KeypointType) -> &[f32] {
        let r = self.type_range(kind);
        &self.loc[2 * r.start..2 * r.end]
    }

    pub fn log_sigma(&self, kind: KeypointType) -> &[f32] {
        &self.log_sigma[self.type_range(kind)]
    }

    pub fn log_scale(&self, kind: KeypointType) -> &[f32] {
        &self.log_scale[self.type_range(kind)]
    }

    pub fn sigma_at(&self, kind: KeypointType, cell: Cell) -> f64 {
        (self.log_sigma(kind)[self.grid.cell_index(cell)] as f64).exp()
    }

    pub fn scale_at(&self, kind: KeypointType, cell: Cell) -> f64 {
        (self.log_scale(kind)[self.grid.cell_index(cell)] as f64).exp()
    }

    /// Sets one keypoint-type cell. `sigma` must be positive.
    pub(crate) fn set_cell(
        &mut self,
        kind: KeypointType,
        cell: Cell,
        conf: f32,
        loc: [f32; 2],
        sigma: f64,
    ) {
        let i = kind.id() * self.grid.cell_count() + self.grid.cell_index(cell);
        self.conf[i] = conf;
        self.loc[2 * i] = loc[0];
        self.loc[2 * i + 1] = loc[1];
        self.log_sigma[i] = sigma.ln() as f32;
    }

    /// Returns a copy with every tensor of the given keypoint type zeroed.
    pub fn without_type(&self, kind: KeypointType) -> FieldSet {
        let mut out = self.clone();
        let r = out.type_range(kind);
        out.conf[r.clone()].fill(0.0);
        out.loc[2 * r.start..2 * r.end].fill(0.0);
        out.log_sigma[r.clone()].fill(0.0);
        out.log_scale[r].fill(0.0);
        out
    }
}
