//! Low-rank adaptation of a single frozen linear map, `y = Wx + BAx`, with
//! analytic gradients for `A` and `B`, plain SGD and parameter accounting.

mod matrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use matrix::{DenseMatrix, Vector};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-5;
pub const DEFAULT_EPOCHS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoraError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank {r} must be below min(d, k) = {}", .d.min(.k))]
    RankTooLarge { r: usize, d: usize, k: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("matrix dimensions must be positive")]
    EmptyShape,
    #[error("non-finite entry")]
    NonFinite,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraLayer {
    w: DenseMatrix,
    a: DenseMatrix,
    b: DenseMatrix,
}

fn check_rank(d: usize, k: usize, r: usize) -> Result<(), LoraError> {
    if r == 0 {
        return Err(LoraError::ZeroRank);
    }
    if r >= d.min(k) {
        return Err(LoraError::RankTooLarge { r, d, k });
    }
    Ok(())
}

impl LoraLayer {
    /// `w` is d×k, `a` is r×k, `b` is d×r.
    pub fn new(w: DenseMatrix, a: DenseMatrix, b: DenseMatrix) -> Result<Self, LoraError> {
        let (d, k, r) = (w.rows(), w.cols(), a.rows());
        check_rank(d, k, r)?;
        let dims = [(a.cols(), k), (b.rows(), d), (b.cols(), r)];
        for (got, expected) in dims {
            if got != expected {
                return Err(LoraError::DimensionMismatch { expected, got });
            }
        }
        Ok(LoraLayer { w, a, b })
    }

    /// `A ~ U(-1/√k, 1/√k)`, `B = 0`, so the initial map is exactly `W`.
    pub fn init(w: DenseMatrix, r: usize, seed: u64) -> Result<Self, LoraError> {
        let (d, k) = (w.rows(), w.cols());
        check_rank(d, k, r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DenseMatrix::random(r, k, 1.0 / (k as f64).sqrt(), &mut rng);
        LoraLayer::new(w, a, DenseMatrix::zeros(d, r))
    }

    pub fn d(&self) -> usize {
        self.w.rows()
    }

    pub fn k(&self) -> usize {
        self.w.cols()
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut DenseMatrix {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut DenseMatrix {
        &mut self.b
    }
}

/// `Wx + B(Ax)`.
pub fn lora_forward(layer: &LoraLayer, x: &Vector) -> Result<Vector, LoraError> {
    let base = layer.w.matvec(x)?;
    let delta = layer.b.matvec(&layer.a.matvec(x)?)?;
    Vector::axpby(1.0, &base, 1.0, &delta)
}

/// `W + BA`.
pub fn merge_weights(layer: &LoraLayer) -> DenseMatrix {
    let ba = layer.b.matmul(&layer.a).expect("layer shapes validated at construction");
    layer.w.add(&ba).expect("layer shapes validated at construction")
}

/// `½‖y − t‖²`.
pub fn loss(layer: &LoraLayer, x: &Vector, target: &Vector) -> Result<f64, LoraError> {
    Ok(0.5 * lora_forward(layer, x)?.sub(target)?.squared_norm())
}

/// Gradients of `½‖y − t‖²` for `A` and `B`: `dA = Bᵀe xᵀ`, `dB = e(Ax)ᵀ`, `e = y − t`.
pub fn lora_gradients(layer: &LoraLayer, x: &Vector, target: &Vector) -> Result<(DenseMatrix, DenseMatrix), LoraError> {
    let e = lora_forward(layer, x)?.sub(target)?;
    let ax = layer.a.matvec(x)?;
    let bte = layer.b.transpose().matvec(&e)?;
    Ok((DenseMatrix::outer(&bte, x), DenseMatrix::outer(&e, &ax)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Mean loss over the dataset before the first update.
    pub initial_loss: f64,
    /// Mean loss over the dataset after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }

    /// `epoch,mean_loss` rows, epoch 0 being the initial loss.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, l) in std::iter::once(&self.initial_loss).chain(&self.epoch_losses).enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

fn mean_loss(layer: &LoraLayer, data: &[(Vector, Vector)]) -> Result<f64, LoraError> {
    let mut total = 0.0;
    for (x, t) in data {
        total += loss(layer, x, t)?;
    }
    Ok(total / data.len() as f64)
}

/// Per-sample SGD on `A` and `B` in dataset order. `W` is never written.
pub fn sgd_fit(
    layer: &mut LoraLayer,
    data: &[(Vector, Vector)],
    learning_rate: f64,
    epochs: usize,
) -> Result<TrainingTrace, LoraError> {
    if data.is_empty() {
        return Err(LoraError::EmptyDataset);
    }
    if !learning_rate.is_finite() {
        return Err(LoraError::NonFinite);
    }
    let initial_loss = mean_loss(layer, data)?;
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        for (x, t) in data {
            let (da, db) = lora_gradients(layer, x, t)?;
            layer.a.step(&da, learning_rate);
            layer.b.step(&db, learning_rate);
        }
        let l = mean_loss(layer, data)?;
        if !l.is_finite() {
            return Err(LoraError::NonFiniteLoss { epoch });
        }
        epoch_losses.push(l);
    }
    Ok(TrainingTrace {
        initial_loss,
        epoch_losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSavings {
    pub trainable: usize,
    pub full: usize,
    pub ratio: f64,
}

/// Trainable `r(d + k)` against full `d·k` parameters.
pub fn param_savings(d: usize, k: usize, r: usize) -> Result<ParamSavings, LoraError> {
    if d == 0 || k == 0 {
        return Err(LoraError::EmptyShape);
    }
    check_rank(d, k, r)?;
    let trainable = r * (d + k);
    let full = d * k;
    Ok(ParamSavings {
        trainable,
        full,
        ratio: trainable as f64 / full as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub samples: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            d: 8,
            k: 6,
            r: 2,
            samples: 64,
            learning_rate: 1e-2,
            epochs: 50,
            seed: crate::config::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutcome {
    pub config: DemoConfig,
    pub trace: TrainingTrace,
    pub savings: ParamSavings,
    pub w_unchanged: bool,
}

/// Targets from a hidden rank-r perturbation: `t = (W + B*A*) x`.
pub fn demo_dataset(config: &DemoConfig) -> Result<(DenseMatrix, Vec<(Vector, Vector)>), LoraError> {
    check_rank(config.d, config.k, config.r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let w = DenseMatrix::random(config.d, config.k, 1.0, &mut rng);
    let a_star = DenseMatrix::random(config.r, config.k, 1.0, &mut rng);
    let b_star = DenseMatrix::random(config.d, config.r, 1.0, &mut rng);
    let target = LoraLayer::new(w.clone(), a_star, b_star)?;
    let mut data = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let x = Vector::random(config.k, 1.0, &mut rng);
        let t = lora_forward(&target, &x)?;
        data.push((x, t));
    }
    Ok((w, data))
}

pub fn run_demo(config: &DemoConfig) -> Result<DemoOutcome, LoraError> {
    let (w, data) = demo_dataset(config)?;
    let mut layer = LoraLayer::init(w.clone(), config.r, config.seed.wrapping_add(1))?;
    let trace = sgd_fit(&mut layer, &data, config.learning_rate, config.epochs)?;
    Ok(DemoOutcome {
        config: *config,
        trace,
        savings: param_savings(config.d, config.k, config.r)?,
        w_unchanged: layer.w().data() == w.data(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_layer(seed: u64, d: usize, k: usize, r: usize) -> LoraLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DenseMatrix::random(d, k, 1.0, &mut rng);
        let a = DenseMatrix::random(r, k, 1.0, &mut rng);
        let b = DenseMatrix::random(d, r, 1.0, &mut rng);
        LoraLayer::new(w, a, b).unwrap()
    }

    fn vec_of(v: &[f64]) -> Vector {
        Vector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn two_by_two_example() {
        let w = DenseMatrix::identity(2);
        // r must be < min(d,k); a 2×2 map admits only r = 1
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[1.0], &[0.0]]).unwrap();
        let layer = LoraLayer::new(w, a, b).unwrap();
        assert_eq!(lora_forward(&layer, &vec_of(&[3.0, 5.0])).unwrap(), vec_of(&[6.0, 5.0]));
        assert_eq!(merge_weights(&layer), DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]).unwrap());
    }

    #[test]
    fn zero_b_is_base_map() {
        let w = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let layer = LoraLayer::init(w.clone(), 1, 3).unwrap();
        assert!(layer.b().is_zero());
        let x = vec_of(&[1.0, 0.5, -2.0]);
        assert_eq!(lora_forward(&layer, &x).unwrap(), w.matvec(&x).unwrap());
        assert_eq!(merge_weights(&layer), w);
    }

    #[test]
    fn shape_errors() {
        let w = DenseMatrix::identity(3);
        assert_eq!(
            LoraLayer::new(w.clone(), DenseMatrix::zeros(3, 3), DenseMatrix::zeros(3, 3)),
            Err(LoraError::RankTooLarge { r: 3, d: 3, k: 3 })
        );
        assert!(matches!(
            LoraLayer::new(w.clone(), DenseMatrix::zeros(1, 2), DenseMatrix::zeros(3, 1)),
            Err(LoraError::DimensionMismatch { .. })
        ));
        let layer = LoraLayer::init(w, 1, 0).unwrap();
        assert!(matches!(
            lora_forward(&layer, &Vector::zeros(2)),
            Err(LoraError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn zero_error_and_zero_input_give_zero_gradients() {
        let layer = random_layer(5, 8, 6, 2);
        let x = Vector::random(6, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let y = lora_forward(&layer, &x).unwrap();
        let (da, db) = lora_gradients(&layer, &x, &y).unwrap();
        assert!(da.is_zero() && db.is_zero());
        let (da, db) = lora_gradients(&layer, &Vector::zeros(6), &Vector::zeros(8)).unwrap();
        assert!(da.is_zero() && db.is_zero());
    }

    fn central_difference(layer: &LoraLayer, x: &Vector, t: &Vector, which_a: bool, i: usize, j: usize) -> f64 {
        let h = 1e-5;
        let mut plus = layer.clone();
        let mut minus = layer.clone();
        let (mp, mm) = if which_a {
            (plus.a_mut(), minus.a_mut())
        } else {
            (plus.b_mut(), minus.b_mut())
        };
        mp.set(i, j, mp.get(i, j) + h);
        mm.set(i, j, mm.get(i, j) - h);
        (loss(&plus, x, t).unwrap() - loss(&minus, x, t).unwrap()) / (2.0 * h)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let layer = random_layer(seed, 8, 6, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let x = Vector::random(6, 1.0, &mut rng);
            let t = Vector::random(8, 1.0, &mut rng);
            let (da, db) = lora_gradients(&layer, &x, &t).unwrap();
            for (which_a, g) in [(true, &da), (false, &db)] {
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        let fd = central_difference(&layer, &x, &t, which_a, i, j);
                        let an = g.get(i, j);
                        assert!(
                            (an - fd).abs() <= 1e-4 * an.abs().max(fd.abs()).max(1e-3),
                            "seed {seed} {} ({i},{j}): {an} vs {fd}",
                            if which_a { "A" } else { "B" }
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sgd_keeps_w_and_lr_zero_is_constant() {
        let cfg = DemoConfig::default();
        let (w, data) = demo_dataset(&cfg).unwrap();
        let mut layer = LoraLayer::init(w.clone(), 2, 1).unwrap();
        let trace = sgd_fit(&mut layer, &data, 0.0, 5).unwrap();
        assert!(trace.epoch_losses.iter().all(|l| *l == trace.initial_loss));
        sgd_fit(&mut layer, &data, 1e-2, 3).unwrap();
        assert_eq!(layer.w().data(), w.data());
        assert_eq!(sgd_fit(&mut layer, &[], 1e-2, 1), Err(LoraError::EmptyDataset));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = DemoConfig::default();
        let (w, data) = demo_dataset(&cfg).unwrap();
        let mut layer = LoraLayer::init(w, 2, 1).unwrap();
        assert!(matches!(sgd_fit(&mut layer, &data, 1e6, 50), Err(LoraError::NonFiniteLoss { .. })));
    }

    #[test]
    fn demo_converges() {
        let out = run_demo(&DemoConfig::default()).unwrap();
        assert!(out.w_unchanged);
        assert!(out.trace.final_loss() < 0.1 * out.trace.initial_loss, "{:?}", out.trace);
        assert_eq!(out.trace.to_csv().lines().count(), 52);
    }

    #[test]
    fn savings_examples() {
        let s = param_savings(64, 64, 4).unwrap();
        assert_eq!((s.trainable, s.full, s.ratio), (512, 4096, 0.125));
        let s = param_savings(8, 6, 2).unwrap();
        assert_eq!((s.trainable, s.full), (28, 48));
        assert_eq!(s.ratio, 28.0 / 48.0);
        assert_eq!(param_savings(8, 6, 6), Err(LoraError::RankTooLarge { r: 6, d: 8, k: 6 }));
        assert_eq!(param_savings(8, 6, 0), Err(LoraError::ZeroRank));
    }

    #[test]
    fn savings_ratio_can_reach_one_near_full_rank() {
        assert_eq!(param_savings(2, 2, 1).unwrap().ratio, 1.0);
        assert!(param_savings(10, 10, 9).unwrap().ratio > 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn ratio_below_one_when_rank_under_half(d in 2usize..200, k in 2usize..200, r in 1usize..100) {
            prop_assume!(2 * r < d.min(k));
            prop_assert!(param_savings(d, k, r).unwrap().ratio < 1.0);
        }

        #[test]
        fn forward_merge_and_linearity(seed: u64, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let layer = random_layer(seed, 8, 6, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
            let x = Vector::random(6, 2.0, &mut rng);
            let y = Vector::random(6, 2.0, &mut rng);
            let f = lora_forward(&layer, &x).unwrap();
            let m = merge_weights(&layer).matvec(&x).unwrap();
            prop_assert!(f.sub(&m).unwrap().norm_inf() <= 1e-9 * (1.0 + x.norm_inf()));
            let lhs = lora_forward(&layer, &Vector::axpby(a, &x, b, &y).unwrap()).unwrap();
            let rhs = Vector::axpby(a, &f, b, &lora_forward(&layer, &y).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().norm_inf() <= 1e-9 * (1.0 + lhs.norm_inf()));
        }
    }
}
