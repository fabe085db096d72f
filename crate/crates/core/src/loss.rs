//! Training losses over [`FieldSet`]s and their analytic gradients.
//!
//! Everything is evaluated in `f64`. The semantic and offset losses are means
//! over pixels; the keypoint losses are plain sums over cells and types. The
//! localization and sigma losses only see cells whose target confidence is 1.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldSet;

/// Clamp applied to predicted probabilities before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossWeights {
    pub w_sem: f64,
    pub w_off: f64,
    pub w_cnf: f64,
    pub w_loc: f64,
    pub w_sig: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_sem: 10.0,
            w_off: 0.1,
            w_cnf: 20.0,
            w_loc: 10.0,
            w_sig: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_sem, self.w_off, self.w_cnf, self.w_loc, self.w_sig];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::domain("loss weights must be non-negative"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> LossWeights {
        LossWeights {
            w_sem: self.w_sem * factor,
            w_off: self.w_off * factor,
            w_cnf: self.w_cnf * factor,
            w_loc: self.w_loc * factor,
            w_sig: self.w_sig * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub sem: f64,
    pub off: f64,
    pub cnf: f64,
    pub loc: f64,
    pub sig: f64,
    pub total: f64,
}

/// The differentiable quantities of a [`FieldSet`] in `f64`.
///
/// `sigma` is linear (the sigma loss compares sizes directly); the
/// localization scale is kept as its logarithm `b = ln B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTensors {
    pub semantic: Vec<f64>,
    pub offsets: Vec<f64>,
    pub conf: Vec<f64>,
    pub loc: Vec<f64>,
    pub sigma: Vec<f64>,
    pub log_scale: Vec<f64>,
}

impl LossTensors {
    pub fn from_fields(fields: &FieldSet) -> Self {
        use crate::fields::TensorKind as T;
        let widen = |k: T| fields.tensor(k).iter().map(|&v| v as f64).collect::<Vec<_>>();
        LossTensors {
            semantic: widen(T::Semantic),
            offsets: widen(T::Offsets),
            conf: widen(T::Conf),
            loc: widen(T::Loc),
            sigma: fields.tensor(T::LogSigma).iter().map(|&v| (v as f64).exp()).collect(),
            log_scale: widen(T::LogScale),
        }
    }

    fn check_same_shape(&self, other: &LossTensors) -> Result<()> {
        let a = [self.semantic.len(), self.offsets.len(), self.conf.len(), self.loc.len(), self.sigma.len(), self.log_scale.len()];
        let b = [other.semantic.len(), other.offsets.len(), other.conf.len(), other.loc.len(), other.sigma.len(), other.log_scale.len()];
        if a != b {
            return Err(Error::shape(format!("tensor sizes {a:?} vs {b:?}")));
        }
        if self.offsets.len() != 2 * self.semantic.len() || self.loc.len() != 2 * self.conf.len() {
            return Err(Error::shape("vector tensors must hold two entries per element"));
        }
        if self.sigma.len() != self.conf.len() || self.log_scale.len() != self.conf.len() {
            return Err(Error::shape("per-type tensors disagree in size"));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> LossTensors {
        LossTensors {
            semantic: vec![0.0; self.semantic.len()],
            offsets: vec![0.0; self.offsets.len()],
            conf: vec![0.0; self.conf.len()],
            loc: vec![0.0; self.loc.len()],
            sigma: vec![0.0; self.sigma.len()],
            log_scale: vec![0.0; self.log_scale.len()],
        }
    }
}

/// Gradients of the total loss, one entry per prediction entry.
pub type LossGradients = LossTensors;

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: {a} vs {b} entries")));
    }
    Ok(())
}

fn supervised(target_conf: f64) -> bool {
    target_conf > 0.5
}

/// Binary cross entropy of a clamped prediction against a target.
pub fn bce(pred: f64, target: f64) -> f64 {
    let c = pred.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * c.ln() + (1.0 - target) * (1.0 - c).ln())
}

/// Derivative of [`bce`] with respect to the unclamped prediction. Zero where
/// the clamp is active.
pub fn bce_grad(pred: f64, target: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&pred) {
        return 0.0;
    }
    -target / pred + (1.0 - target) / (1.0 - pred)
}

/// Compensated (Neumaier) summation.
fn sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Mean BCE over all pixels.
pub fn loss_sem(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred.len(), target.len(), "semantic")?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(sum(pred.iter().zip(target).map(|(&p, &t)| bce(p, t))) / pred.len() as f64)
}

/// Mean squared Euclidean residual over pixels. Inputs are interleaved
/// `(dx, dy)`.
pub fn loss_off(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred.len(), target.len(), "offsets")?;
    if pred.len() % 2 != 0 {
        return Err(Error::shape("offset tensors must hold (dx, dy) pairs"));
    }
    let n = pred.len() / 2;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sum(pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t))) / n as f64)
}

/// Summed BCE over all cells and keypoint types.
pub fn loss_cnf(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred.len(), target.len(), "confidence")?;
    Ok(sum(pred.iter().zip(target).map(|(&p, &t)| bce(p, t))))
}

/// Summed absolute sigma error over supervised cells.
pub fn loss_sig(pred: &[f64], target: &[f64], target_conf: &[f64]) -> Result<f64> {
    same_len(pred.len(), target.len(), "sigma")?;
    same_len(pred.len(), target_conf.len(), "sigma mask")?;
    Ok(sum(pred
        .iter()
        .zip(target)
        .zip(target_conf)
        .filter(|(_, &m)| supervised(m))
        .map(|((&p, &t), _)| (p - t).abs())))
}

/// Summed `|residual|^2 / B^2 + ln B` over supervised cells, with `B =
/// exp(log_scale)`.
pub fn loss_loc(pred: &[f64], target: &[f64], log_scale: &[f64], target_conf: &[f64]) -> Result<f64> {
    same_len(pred.len(), target.len(), "localization")?;
    same_len(pred.len(), 2 * log_scale.len(), "localization scale")?;
    same_len(log_scale.len(), target_conf.len(), "localization mask")?;
    Ok(sum((0..log_scale.len()).filter(|&i| supervised(target_conf[i])).map(|i| {
        let dx = pred[2 * i] - target[2 * i];
        let dy = pred[2 * i + 1] - target[2 * i + 1];
        let b = log_scale[i];
        (dx * dx + dy * dy) * (-2.0 * b).exp() + b
    })))
}

/// All five sub-losses and their weighted sum.
pub fn loss_total_tensors(pred: &LossTensors, target: &LossTensors, w: &LossWeights) -> Result<LossBreakdown> {
    w.validate()?;
    pred.check_same_shape(target)?;
    let sem = loss_sem(&pred.semantic, &target.semantic)?;
    let off = loss_off(&pred.offsets, &target.offsets)?;
    let cnf = loss_cnf(&pred.conf, &target.conf)?;
    let loc = loss_loc(&pred.loc, &target.loc, &pred.log_scale, &target.conf)?;
    let sig = loss_sig(&pred.sigma, &target.sigma, &target.conf)?;
    let total = w.w_sem * sem + w.w_off * off + w.w_cnf * cnf + w.w_loc * loc + w.w_sig * sig;
    Ok(LossBreakdown { sem, off, cnf, loc, sig, total })
}

pub fn loss_total(pred: &FieldSet, target: &FieldSet, w: &LossWeights) -> Result<LossBreakdown> {
    if pred.grid() != target.grid() {
        return Err(Error::shape("prediction and target grids differ"));
    }
    loss_total_tensors(&LossTensors::from_fields(pred), &LossTensors::from_fields(target), w)
}

/// Analytic gradient of the weighted total with respect to every prediction
/// entry. The sub-gradient of `|x|` at 0 is taken as 0.
pub fn grad_total_tensors(pred: &LossTensors, target: &LossTensors, w: &LossWeights) -> Result<LossGradients> {
    w.validate()?;
    pred.check_same_shape(target)?;
    let mut g = pred.zeros_like();
    let p = pred.semantic.len().max(1) as f64;

    for (i, out) in g.semantic.iter_mut().enumerate() {
        *out = w.w_sem * bce_grad(pred.semantic[i], target.semantic[i]) / p;
    }
    for (i, out) in g.offsets.iter_mut().enumerate() {
        *out = w.w_off * 2.0 * (pred.offsets[i] - target.offsets[i]) / p;
    }
    for (i, out) in g.conf.iter_mut().enumerate() {
        *out = w.w_cnf * bce_grad(pred.conf[i], target.conf[i]);
    }
    for i in 0..pred.conf.len() {
        if !supervised(target.conf[i]) {
            continue;
        }
        let dx = pred.loc[2 * i] - target.loc[2 * i];
        let dy = pred.loc[2 * i + 1] - target.loc[2 * i + 1];
        let inv_b2 = (-2.0 * pred.log_scale[i]).exp();
        g.loc[2 * i] = w.w_loc * 2.0 * dx * inv_b2;
        g.loc[2 * i + 1] = w.w_loc * 2.0 * dy * inv_b2;
        g.log_scale[i] = w.w_loc * (1.0 - 2.0 * (dx * dx + dy * dy) * inv_b2);

        let d = pred.sigma[i] - target.sigma[i];
        g.sigma[i] = if d > 0.0 {
            w.w_sig
        } else if d < 0.0 {
            -w.w_sig
        } else {
            0.0
        };
    }
    Ok(g)
}

pub fn grad_total(pred: &FieldSet, target: &FieldSet, w: &LossWeights) -> Result<LossGradients> {
    if pred.grid() != target.grid() {
        return Err(Error::shape("prediction and target grids differ"));
    }
    grad_total_tensors(&LossTensors::from_fields(pred), &LossTensors::from_fields(target), w)
}

/// Outcome of a sampled finite-difference check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

/// `|a - n| / max(|a| + |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central-difference check of [`grad_total_tensors`] on up to
/// `per_tensor` evenly spaced entries of each prediction tensor.
///
/// The difference quotient is formed from the change in the weighted total,
/// accumulated term by term so that the untouched terms cancel exactly.
/// Entries within `step` of the BCE clamp or of the sigma `|.|` kink are
/// skipped and counted in `skipped_kinks`.
pub fn gradient_check(
    pred: &LossTensors,
    target: &LossTensors,
    w: &LossWeights,
    step: f64,
    per_tensor: usize,
) -> Result<GradCheck> {
    let grads = grad_total_tensors(pred, target, w)?;
    let mut out = GradCheck { checked: 0, skipped_kinks: 0, max_rel_error: 0.0 };
    let np = pred.semantic.len().max(1) as f64;

    let mut record = |analytic: f64, numeric: f64| {
        out.checked += 1;
        out.max_rel_error = out.max_rel_error.max(relative_error(analytic, numeric));
    };
    let picks = |len: usize| -> Vec<usize> {
        if len == 0 || per_tensor == 0 {
            return Vec::new();
        }
        let stride = (len / per_tensor).max(1);
        (0..len).step_by(stride).take(per_tensor).collect()
    };
    let central = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + step) - f(x - step)) / (2.0 * step);

    // a central difference straddling the BCE clamp or the |.| kink measures
    // neither side's slope
    let near_clamp = |x: f64| (x - BCE_EPS).abs() < step || (x - (1.0 - BCE_EPS)).abs() < step;

    for i in picks(pred.semantic.len()) {
        if near_clamp(pred.semantic[i]) {
            out.skipped_kinks += 1;
            continue;
        }
        let t = target.semantic[i];
        let f = |x: f64| loss_sem(&[x], &[t]).unwrap_or(f64::NAN);
        record(grads.semantic[i], w.w_sem / np * central(&f, pred.semantic[i]));
    }
    for i in picks(pred.offsets.len()) {
        let t = target.offsets[i];
        let f = |x: f64| loss_off(&[x, 0.0], &[t, 0.0]).unwrap_or(f64::NAN);
        record(grads.offsets[i], w.w_off / np * central(&f, pred.offsets[i]));
    }
    for i in picks(pred.conf.len()) {
        if near_clamp(pred.conf[i]) {
            out.skipped_kinks += 1;
            continue;
        }
        let t = target.conf[i];
        let f = |x: f64| loss_cnf(&[x], &[t]).unwrap_or(f64::NAN);
        record(grads.conf[i], w.w_cnf * central(&f, pred.conf[i]));
    }
    for i in picks(pred.conf.len()) {
        let tc = [target.conf[i]];
        let b = pred.log_scale[i];
        let (px, py) = (pred.loc[2 * i], pred.loc[2 * i + 1]);
        let tl = [target.loc[2 * i], target.loc[2 * i + 1]];
        let term = |lx: f64, ly: f64, lb: f64| loss_loc(&[lx, ly], &tl, &[lb], &tc).unwrap_or(f64::NAN);
        record(grads.loc[2 * i], w.w_loc * central(&|x| term(x, py, b), px));
        record(grads.loc[2 * i + 1], w.w_loc * central(&|y| term(px, y, b), py));
        record(grads.log_scale[i], w.w_loc * central(&|lb| term(px, py, lb), b));

        let (s, ts) = (pred.sigma[i], target.sigma[i]);
        if supervised(tc[0]) && (s - ts).abs() < step {
            out.skipped_kinks += 1;
        } else {
            let f = |x: f64| loss_sig(&[x], &[ts], &tc).unwrap_or(f64::NAN);
            record(grads.sigma[i], w.w_sig * central(&f, s));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn semantic_examples() {
        let t = [0.0, 1.0, 1.0, 0.0];
        assert!(loss_sem(&t, &t).unwrap() <= 1e-6);
        assert!((loss_sem(&[0.5; 4], &t).unwrap() - LN2).abs() < 1e-12);
        assert!((loss_sem(&[0.9], &[1.0]).unwrap() - 0.10536051565782628).abs() < 1e-12);
        assert!(matches!(loss_sem(&[0.5], &[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn offset_examples() {
        assert_eq!(loss_off(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_off(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        assert_eq!(loss_off(&[1.0, 0.0, 0.0, 1.0], &[0.0; 4]).unwrap(), 1.0);
        assert!(loss_off(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn confidence_examples() {
        assert!(loss_cnf(&[0.0, 1.0], &[0.0, 1.0]).unwrap() <= 1e-6);
        assert!((loss_cnf(&[0.5], &[1.0]).unwrap() - LN2).abs() < 1e-12);
        assert!((loss_cnf(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(loss_sig(&[2.0, 3.0], &[2.0, 3.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(loss_sig(&[3.0], &[5.0], &[1.0]).unwrap(), 2.0);
        // unsupervised cells are ignored whatever their value
        assert_eq!(loss_sig(&[3.0, 100.0], &[5.0, 1.0], &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn localization_examples() {
        assert_eq!(loss_loc(&[0.0, 0.0], &[0.0, 0.0], &[0.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(loss_loc(&[1.0, 0.0], &[0.0, 0.0], &[0.0], &[1.0]).unwrap(), 1.0);
        let v = loss_loc(&[2.0, 0.0], &[0.0, 0.0], &[1.0], &[1.0]).unwrap();
        assert!((v - (4.0 * (-2.0f64).exp() + 1.0)).abs() < 1e-12);
        assert!((v - 1.5413).abs() < 1e-4);
        assert_eq!(loss_loc(&[2.0, 0.0], &[0.0, 0.0], &[1.0], &[0.0]).unwrap(), 0.0);
    }

    fn unit_tensors() -> (LossTensors, LossTensors) {
        // one pixel, one cell: every sub-loss equals 1
        let target = LossTensors {
            semantic: vec![1.0],
            offsets: vec![0.0, 0.0],
            conf: vec![1.0],
            loc: vec![0.0, 0.0],
            sigma: vec![5.0],
            log_scale: vec![0.0],
        };
        let pred = LossTensors {
            semantic: vec![(-1.0f64).exp()],
            offsets: vec![1.0, 0.0],
            conf: vec![(-1.0f64).exp()],
            loc: vec![1.0, 0.0],
            sigma: vec![4.0],
            log_scale: vec![0.0],
        };
        (pred, target)
    }

    #[test]
    fn weighted_total() {
        let (pred, target) = unit_tensors();
        let b = loss_total_tensors(&pred, &target, &LossWeights::default()).unwrap();
        for v in [b.sem, b.off, b.cnf, b.loc, b.sig] {
            assert!((v - 1.0).abs() < 1e-12, "{b:?}");
        }
        assert!((b.total - 50.1).abs() < 1e-9);

        let zero = LossWeights { w_sem: 0.0, w_off: 0.0, w_cnf: 0.0, w_loc: 0.0, w_sig: 0.0 };
        let b0 = loss_total_tensors(&pred, &target, &zero).unwrap();
        assert_eq!(b0.total, 0.0);
        assert!(b0.sem > 0.0 && b0.sig > 0.0);

        let b2 = loss_total_tensors(&pred, &target, &LossWeights::default().scaled(2.0)).unwrap();
        assert_eq!(b2.total, 2.0 * b.total);
        assert_eq!((b2.sem, b2.loc), (b.sem, b.loc));

        let neg = LossWeights { w_off: -1.0, ..LossWeights::default() };
        assert!(loss_total_tensors(&pred, &target, &neg).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_offset_and_sigma_gradient() {
        let (_, target) = unit_tensors();
        let g = grad_total_tensors(&target, &target, &LossWeights::default()).unwrap();
        assert_eq!(g.offsets, vec![0.0, 0.0]);
        assert_eq!(g.sigma, vec![0.0]);
        assert_eq!(g.loc, vec![0.0, 0.0]);
        // d/db at zero residual is w_loc * 1
        assert_eq!(g.log_scale, vec![10.0]);
    }

    #[test]
    fn sampled_gradient_check_passes() {
        let (pred, target) = unit_tensors();
        let r = gradient_check(&pred, &target, &LossWeights::default(), 1e-4, 8).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!((r.checked, r.skipped_kinks), (8, 0));
    }

    #[test]
    fn loc_minimum_in_scale() {
        // golden-section search over b for r = |delta| = 1.7
        let r = 1.7f64;
        let f = |b: f64| loss_loc(&[r, 0.0], &[0.0, 0.0], &[b], &[1.0]).unwrap();
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let b_star = 0.5 * (lo + hi);
        assert!((b_star.exp() - std::f64::consts::SQRT_2 * r).abs() < 1e-6);
    }
}
