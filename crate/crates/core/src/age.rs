//! Aligned-to-generalized encoders: one single-hidden-layer sigmoid network
//! per domain, each trained to send aligned instances of class `c` to the
//! cross-domain class centroid `T_c`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const SCALE_LO: f64 = 0.1;
pub const SCALE_HI: f64 = 0.9;

/// Per-dimension affine map of the pooled aligned training range onto
/// `[lo, hi]`; constant dimensions map to the midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScaler {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl RangeScaler {
    pub fn fit(parts: &[&DMatrix<f64>]) -> Result<Self> {
        let dim = parts.first().map(|p| p.ncols()).ok_or(Error::EmptyInput)?;
        let mut min = DVector::from_element(dim, f64::INFINITY);
        let mut max = DVector::from_element(dim, f64::NEG_INFINITY);
        let mut rows = 0;
        for p in parts {
            if p.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.ncols(),
                });
            }
            for r in p.row_iter() {
                rows += 1;
                for j in 0..dim {
                    min[j] = min[j].min(r[j]);
                    max[j] = max[j].max(r[j]);
                }
            }
        }
        if rows == 0 {
            return Err(Error::EmptyInput);
        }
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(RangeScaler {
            min,
            max,
            lo: SCALE_LO,
            hi: SCALE_HI,
        })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        let mid = 0.5 * (self.lo + self.hi);
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            let span = self.max[j] - self.min[j];
            if span > 0.0 {
                self.lo + (x[(i, j)] - self.min[j]) / span * (self.hi - self.lo)
            } else {
                mid
            }
        }))
    }

    /// Inverse on non-constant dimensions; constant ones return their value.
    pub fn inverse(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
            let span = self.max[j] - self.min[j];
            if span > 0.0 {
                self.min[j] + (y[(i, j)] - self.lo) / (self.hi - self.lo) * span
            } else {
                self.min[j]
            }
        })
    }
}

/// One regression target per class: the pooled mean of both domains'
/// instances of that class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTargets {
    /// `c × L`
    pub targets: DMatrix<f64>,
    /// `(source count, target count)` per class.
    pub counts: Vec<(usize, usize)>,
}

impl ClassTargets {
    pub fn class_count(&self) -> usize {
        self.targets.nrows()
    }

    /// Target rows for a label sequence.
    pub fn rows_for(&self, labels: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(labels.len(), self.targets.ncols(), |i, j| {
            self.targets[(labels[i], j)]
        })
    }
}

/// Pooled per-class means of labeled source and target rows (already in
/// the scaled space).
pub fn class_targets(
    source: &DMatrix<f64>,
    source_labels: &[usize],
    target: &DMatrix<f64>,
    target_labels: &[usize],
    class_count: usize,
) -> Result<ClassTargets> {
    if source.nrows() != source_labels.len() {
        return Err(Error::LengthMismatch(source.nrows(), source_labels.len()));
    }
    if target.nrows() != target_labels.len() {
        return Err(Error::LengthMismatch(target.nrows(), target_labels.len()));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::DimensionMismatch {
            expected: source.ncols(),
            got: target.ncols(),
        });
    }
    let dim = source.ncols();
    let mut sums = DMatrix::zeros(class_count, dim);
    let mut counts = vec![(0usize, 0usize); class_count];
    for (m, labels, is_source) in [(source, source_labels, true), (target, target_labels, false)] {
        for (i, &c) in labels.iter().enumerate() {
            if c >= class_count {
                return Err(Error::BadConfig(format!("label {c} outside [0, {class_count})")));
            }
            let mut row = sums.row_mut(c);
            row += m.row(i);
            if is_source {
                counts[c].0 += 1;
            } else {
                counts[c].1 += 1;
            }
        }
    }
    for (c, &(s, t)) in counts.iter().enumerate() {
        if s + t == 0 {
            return Err(Error::MissingClass(c));
        }
        let mut row = sums.row_mut(c);
        row /= (s + t) as f64;
    }
    Ok(ClassTargets {
        targets: sums,
        counts,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weights of one encoder: `L → H → L`, sigmoid on both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeModel {
    /// `H × L`
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// `L × H`
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl AgeModel {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        AgeModel {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(input, hidden),
            b2: DVector::zeros(input),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    fn is_finite(&self) -> bool {
        [&self.w1, &self.w2].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.b1, &self.b2].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// `s(W2·s(W1·x + b1) + b2)` for one sample.
pub fn age_forward(model: &AgeModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    let h = (&model.w1 * x + &model.b1).map(sigmoid);
    Ok((&model.w2 * h + &model.b2).map(sigmoid))
}

struct Activations {
    hidden: DMatrix<f64>,
    output: DMatrix<f64>,
}

fn forward_batch(model: &AgeModel, x: &DMatrix<f64>) -> Activations {
    let mut hidden = x * model.w1.transpose();
    for mut row in hidden.row_iter_mut() {
        row += model.b1.transpose();
    }
    hidden.apply(|v| *v = sigmoid(*v));
    let mut output = &hidden * model.w2.transpose();
    for mut row in output.row_iter_mut() {
        row += model.b2.transpose();
    }
    output.apply(|v| *v = sigmoid(*v));
    Activations { hidden, output }
}

/// Generalized features: the encoder output for every row of `aligned`.
pub fn age_generalize(model: &AgeModel, aligned: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if aligned.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: aligned.ncols(),
        });
    }
    Ok(forward_batch(model, aligned).output)
}

/// Objective `J = 1/(2N) Σ ‖T_i − h(x_i)‖²`.
pub fn age_loss(model: &AgeModel, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let out = forward_batch(model, x).output;
    (out - t).norm_squared() / (2.0 * x.nrows() as f64)
}

/// Gradient of `J` with respect to every parameter, laid out like the model.
pub fn age_gradient(model: &AgeModel, x: &DMatrix<f64>, t: &DMatrix<f64>) -> (AgeModel, f64) {
    let n = x.nrows() as f64;
    let act = forward_batch(model, x);
    let diff = &act.output - t;
    let loss = diff.norm_squared() / (2.0 * n);
    // through the output sigmoid
    let mut d_out = diff / n;
    d_out.zip_apply(&act.output, |g, y| *g *= y * (1.0 - y));
    let gw2 = d_out.transpose() * &act.hidden;
    let gb2 = row_sums(&d_out);
    let mut d_hidden = &d_out * &model.w2;
    d_hidden.zip_apply(&act.hidden, |g, h| *g *= h * (1.0 - h));
    let gw1 = d_hidden.transpose() * x;
    let gb1 = row_sums(&d_hidden);
    (
        AgeModel {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
        loss,
    )
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightInit {
    /// Every weight and bias uniform on `[0, 1]`.
    Uniform01,
    /// Uniform on `[-1/√fan_in, 1/√fan_in]`.
    #[default]
    ScaledUniform,
}

impl FromStr for WeightInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform01" => Ok(WeightInit::Uniform01),
            "scaled" => Ok(WeightInit::ScaledUniform),
            other => Err(Error::BadConfig(format!("unknown weight init '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub seed: u64,
    pub init: WeightInit,
    /// Hidden width; `None` means equal to the input width.
    pub hidden: Option<usize>,
    /// Mini-batch size; `None` means full batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            iterations: 1000,
            seed: 0,
            init: WeightInit::default(),
            hidden: None,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::BadConfig("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::BadConfig("momentum must be in [0, 1)".into()));
        }
        if self.iterations == 0 {
            return Err(Error::BadConfig("iterations must be at least 1".into()));
        }
        if self.hidden == Some(0) || self.batch_size == Some(0) {
            return Err(Error::BadConfig("hidden width and batch size must be positive".into()));
        }
        Ok(())
    }
}

pub fn init_model(input: usize, hidden: usize, init: WeightInit, rng: &mut ChaCha8Rng) -> AgeModel {
    let mut draw = |fan_in: usize| -> f64 {
        match init {
            WeightInit::Uniform01 => rng.gen::<f64>(),
            WeightInit::ScaledUniform => {
                let r = 1.0 / (fan_in as f64).sqrt();
                rng.gen_range(-r..=r)
            }
        }
    };
    let w1 = DMatrix::from_fn(hidden, input, |_, _| draw(input));
    let b1 = DVector::from_fn(hidden, |_, _| draw(input));
    let w2 = DMatrix::from_fn(input, hidden, |_, _| draw(hidden));
    let b2 = DVector::from_fn(input, |_, _| draw(hidden));
    AgeModel { w1, b1, w2, b2 }
}

/// One encoder after training, with its loss curve.
#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub model: AgeModel,
    /// `J` evaluated at the start of every iteration.
    pub losses: Vec<f64>,
}

/// Momentum state: previous update of each parameter.
struct Velocity(AgeModel);

impl Velocity {
    /// `Δ ← η·g + ρ·Δ`, `θ ← θ − Δ`
    fn step(&mut self, model: &mut AgeModel, grad: &AgeModel, lr: f64, rho: f64) {
        let v = &mut self.0;
        v.w1 = &grad.w1 * lr + &v.w1 * rho;
        v.b1 = &grad.b1 * lr + &v.b1 * rho;
        v.w2 = &grad.w2 * lr + &v.w2 * rho;
        v.b2 = &grad.b2 * lr + &v.b2 * rho;
        model.w1 -= &v.w1;
        model.b1 -= &v.b1;
        model.w2 -= &v.w2;
        model.b2 -= &v.b2;
    }
}

/// Trains one encoder from `init` on rows `x` with per-row targets `t`.
pub fn train_encoder(
    init: AgeModel,
    x: &DMatrix<f64>,
    t: &DMatrix<f64>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainedEncoder> {
    config.validate()?;
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if x.ncols() != init.input_dim() || t.ncols() != init.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: init.input_dim(),
            got: x.ncols(),
        });
    }
    if t.nrows() != x.nrows() {
        return Err(Error::LengthMismatch(x.nrows(), t.nrows()));
    }
    let mut model = init;
    let mut velocity = Velocity(AgeModel::zeros(model.input_dim(), model.hidden_dim()));
    let mut losses = Vec::with_capacity(config.iterations);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut cursor = order.len();
    for iteration in 0..config.iterations {
        let (grad, loss) = match config.batch_size {
            Some(b) if b < x.nrows() => {
                if cursor + b > order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                let rows = &order[cursor..cursor + b];
                cursor += b;
                let xb = crate::data::select_rows(x, rows);
                let tb = crate::data::select_rows(t, rows);
                age_gradient(&model, &xb, &tb)
            }
            _ => age_gradient(&model, x, t),
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        losses.push(loss);
        velocity.step(&mut model, &grad, config.learning_rate, config.momentum);
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
    }
    Ok(TrainedEncoder { model, losses })
}

/// The trained encoder pair.
#[derive(Debug, Clone)]
pub struct AgePair {
    pub source: TrainedEncoder,
    pub target: TrainedEncoder,
}

/// Trains the source and target encoders, each on its own domain's labeled
/// rows paired with their class targets. Inputs must already be scaled.
pub fn age_train(
    source: &DMatrix<f64>,
    source_labels: &[usize],
    target: &DMatrix<f64>,
    target_labels: &[usize],
    targets: &ClassTargets,
    config: &TrainConfig,
) -> Result<AgePair> {
    config.validate()?;
    let dim = targets.targets.ncols();
    let hidden = config.hidden.unwrap_or(dim);
    let mut encoders = Vec::with_capacity(2);
    for (stream, (x, labels)) in [(source, source_labels), (target, target_labels)]
        .into_iter()
        .enumerate()
    {
        if x.nrows() != labels.len() {
            return Err(Error::LengthMismatch(x.nrows(), labels.len()));
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= targets.class_count()) {
            return Err(Error::MissingClass(c));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream as u64);
        let init = init_model(dim, hidden, config.init, &mut rng);
        let t = targets.rows_for(labels);
        encoders.push(train_encoder(init, x, &t, config, &mut rng)?);
    }
    let target = encoders.pop().unwrap();
    let source = encoders.pop().unwrap();
    Ok(AgePair { source, target })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_examples() {
        let s = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let t = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let ct = class_targets(&s, &[0], &t, &[0], 1).unwrap();
        assert_eq!(ct.targets.as_slice(), &[1.0, 1.0]);
        assert_eq!(ct.counts, vec![(1, 1)]);

        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 3.0, 3.0]);
        let t = DMatrix::from_row_slice(1, 2, &[2.0, 2.0]);
        let ct = class_targets(&s, &[0, 0], &t, &[0], 1).unwrap();
        assert_eq!(ct.targets.as_slice(), &[2.0, 2.0]);

        let ct = class_targets(&DMatrix::zeros(0, 2), &[], &t, &[0], 1).unwrap();
        assert_eq!(ct.targets.as_slice(), &[2.0, 2.0]);

        assert!(matches!(
            class_targets(&s, &[0, 0], &t, &[0], 2),
            Err(Error::MissingClass(1))
        ));
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = AgeModel::zeros(3, 3);
        let out = age_forward(&m, &DVector::from_vec(vec![5.0, -2.0, 0.3])).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
        let g = age_generalize(&m, &DMatrix::from_element(4, 3, 0.7)).unwrap();
        assert!(g.iter().all(|&v| v == 0.5));
        assert!(age_forward(&m, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn momentum_update_by_substitution() {
        // scalar net; drive the update with hand-set gradients
        let mut model = AgeModel::zeros(1, 1);
        model.w1[(0, 0)] = 1.0;
        let mut vel = Velocity(AgeModel::zeros(1, 1));
        let mut g = AgeModel::zeros(1, 1);
        g.w1[(0, 0)] = 0.5;
        vel.step(&mut model, &g, 0.1, 0.9);
        assert!((vel.0.w1[(0, 0)] - 0.05).abs() < 1e-15);
        assert!((model.w1[(0, 0)] - 0.95).abs() < 1e-15);
        let g = AgeModel::zeros(1, 1);
        vel.step(&mut model, &g, 0.1, 0.9);
        assert!((vel.0.w1[(0, 0)] - 0.045).abs() < 1e-15);
        assert!((model.w1[(0, 0)] - 0.905).abs() < 1e-15);
    }

    #[test]
    fn scaler_maps_range_and_constant_dims() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 10.0, 3.0]);
        let s = RangeScaler::fit(&[&a]).unwrap();
        let y = s.transform(&a).unwrap();
        assert!((y[(0, 0)] - 0.1).abs() < 1e-15 && (y[(1, 0)] - 0.9).abs() < 1e-15);
        assert_eq!(y[(0, 1)], 0.5);
        let back = s.inverse(&y);
        assert!((back - a).amax() < 1e-12);
    }

    #[test]
    fn single_instance_reaches_its_own_target() {
        let x = DMatrix::from_row_slice(1, 3, &[0.2, 0.7, 0.45]);
        let targets = class_targets(&x, &[0], &DMatrix::zeros(0, 3), &[], 1).unwrap();
        let cfg = TrainConfig {
            seed: 42,
            ..Default::default()
        };
        let pair = age_train(&x, &[0], &x, &[0], &targets, &cfg).unwrap();
        let out = age_generalize(&pair.source.model, &x).unwrap();
        assert!((out - &x).amax() < 1e-2);
        assert_eq!(pair.source.losses.len(), 1000);
    }

    #[test]
    fn training_is_deterministic() {
        let x = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0 + 0.1);
        let labels = [0, 1, 0, 1, 1, 0];
        let targets = class_targets(&x, &labels, &x, &labels, 2).unwrap();
        let cfg = TrainConfig {
            iterations: 50,
            seed: 9,
            ..Default::default()
        };
        let a = age_train(&x, &labels, &x, &labels, &targets, &cfg).unwrap();
        let b = age_train(&x, &labels, &x, &labels, &targets, &cfg).unwrap();
        assert_eq!(a.source.model, b.source.model);
        assert_eq!(a.target.losses, b.target.losses);
        // separate init streams per domain
        assert_ne!(a.source.model, a.target.model);
    }
}
