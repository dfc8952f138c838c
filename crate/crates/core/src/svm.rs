//! L2-regularized L1-loss (hinge) linear SVM trained by dual coordinate
//! descent, with one-vs-rest multiclass on top.
//!
//! The dual being maximized is
//!
//! ```text
//! D(α) = Σ αᵢ − ½ ‖Σ αᵢ yᵢ x̃ᵢ‖²    subject to 0 ≤ αᵢ ≤ C
//! ```
//!
//! where `x̃` is `x` with a constant `1.0` appended when the bias is enabled.
//! Each outer iteration visits the examples in a fresh seeded permutation and
//! solves the one-variable subproblem exactly; `w = Σ αᵢ yᵢ x̃ᵢ` is kept up to
//! date incrementally. An example is only updated when its projected
//! gradient exceeds the tolerance, so a sweep without updates leaves `w`
//! untouched and the stopping test certifies the final iterate.
//!
//! When there are fewer examples than features (and at most a few thousand
//! of them) the margins `w·x̃ᵢ` are tracked through a precomputed Gram
//! matrix instead of through `w`; the sequence of updates is the same.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::FeatureVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub tolerance: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            tolerance: 1e-3,
            max_outer_iters: 1000,
            seed: 42,
            bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryModel {
    /// Feature weights, followed by the bias weight when enabled.
    pub weights: Vec<f64>,
    pub dual_vars: Vec<f64>,
    pub bias: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Primal minus dual objective at exit.
    pub final_gap: f64,
    /// Dual objective before the first sweep and after every sweep.
    pub dual_objective_trace: Vec<f64>,
}

impl BinaryModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len() - usize::from(self.bias)
    }

    pub fn decision_value<F: FeatureVector + ?Sized>(&self, x: &F) -> Result<f64> {
        let dim = self.feature_dim();
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.dim(),
            });
        }
        Ok(self.raw_decision(x))
    }

    fn raw_decision<F: FeatureVector + ?Sized>(&self, x: &F) -> f64 {
        let dim = self.feature_dim();
        let mut v = x.dot(&self.weights[..dim]);
        if self.bias {
            v += self.weights[dim];
        }
        v
    }
}

pub fn decision_value<F: FeatureVector + ?Sized>(model: &BinaryModel, x: &F) -> Result<f64> {
    model.decision_value(x)
}

fn check_inputs<F: FeatureVector>(x: &[F]) -> Result<usize> {
    let first = x
        .first()
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    let dim = first.dim();
    for (i, xi) in x.iter().enumerate() {
        if xi.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: xi.dim(),
            });
        }
        if !xi.is_finite() {
            return Err(Error::NonFinite { example: i });
        }
    }
    Ok(dim)
}

/// `½‖w‖² + C Σ max(0, 1 − yᵢ w·x̃ᵢ)`.
pub fn primal_objective<F: FeatureVector>(model: &BinaryModel, x: &[F], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * model.weights.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - yi * model.raw_decision(xi)).max(0.0))
        .sum();
    reg + c * loss
}

/// Largest training set for which the Gram matrix is precomputed.
const GRAM_MAX_EXAMPLES: usize = 512;

/// Inner products `x̃ᵢ·x̃ⱼ` of the augmented training vectors.
pub(crate) struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn wanted(n: usize, dim: usize) -> bool {
        n <= GRAM_MAX_EXAMPLES && n <= dim
    }

    fn new<F: FeatureVector + Sync>(x: &[F], dim: usize, bias: bool) -> Gram {
        let n = x.len();
        let b = if bias { 1.0 } else { 0.0 };
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut buf = vec![0.0; dim];
                x[j].add_scaled_to(&mut buf, 1.0);
                x[..=j].iter().map(|xi| xi.dot(&buf) + b).collect()
            })
            .collect();
        let mut k = vec![0.0; n * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                k[j * n + i] = v;
                k[i * n + j] = v;
            }
        }
        Gram { n, k }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.k[j * self.n..(j + 1) * self.n]
    }
}

/// What the sweep needs to know about `w = Σ αᵢ yᵢ x̃ᵢ`.
trait DualState {
    /// `w·x̃ᵢ`.
    fn margin(&self, i: usize) -> f64;
    /// Adds `step·x̃ᵢ` to `w`.
    fn shift(&mut self, i: usize, step: f64);
    fn w_norm_sq(&self) -> f64;
}

struct PrimalState<'a, F> {
    x: &'a [F],
    w: Vec<f64>,
    dim: usize,
    bias: bool,
}

impl<F: FeatureVector> DualState for PrimalState<'_, F> {
    fn margin(&self, i: usize) -> f64 {
        let mut v = self.x[i].dot(&self.w[..self.dim]);
        if self.bias {
            v += self.w[self.dim];
        }
        v
    }

    fn shift(&mut self, i: usize, step: f64) {
        self.x[i].add_scaled_to(&mut self.w[..self.dim], step);
        if self.bias {
            self.w[self.dim] += step;
        }
    }

    fn w_norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }
}

/// Tracks `w` implicitly through its coefficients `αᵢyᵢ` and the margins
/// `K(αy)`.
struct GramState<'a> {
    gram: &'a Gram,
    coef: Vec<f64>,
    margins: Vec<f64>,
}

impl DualState for GramState<'_> {
    fn margin(&self, i: usize) -> f64 {
        self.margins[i]
    }

    fn shift(&mut self, i: usize, step: f64) {
        self.coef[i] += step;
        for (m, k) in self.margins.iter_mut().zip(self.gram.col(i)) {
            *m += step * k;
        }
    }

    fn w_norm_sq(&self) -> f64 {
        self.coef.iter().zip(&self.margins).map(|(c, m)| c * m).sum()
    }
}

struct Sweeps {
    alpha: Vec<f64>,
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
}

fn coordinate_descent<S: DualState>(state: &mut S, diag: &[f64], y: &[f64], cfg: &TrainConfig) -> Sweeps {
    let n = y.len();
    let c = cfg.c;
    let tol = cfg.tolerance;
    let mut alpha = vec![0.0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = vec![0.0];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_outer_iters {
        iterations += 1;
        order.shuffle(&mut rng);
        let mut max_violation = 0.0f64;
        for &i in &order {
            let yi = y[i];
            let g = yi * state.margin(i) - 1.0;
            let a = alpha[i];
            let pg = if a == 0.0 {
                g.min(0.0)
            } else if a == c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg.abs() <= tol {
                continue;
            }
            let next = if diag[i] > 0.0 {
                (a - g / diag[i]).clamp(0.0, c)
            } else if g < 0.0 {
                c
            } else {
                0.0
            };
            let step = (next - a) * yi;
            if step != 0.0 {
                state.shift(i, step);
            }
            alpha[i] = next;
        }
        let d = alpha.iter().sum::<f64>() - 0.5 * state.w_norm_sq();
        debug_assert!(
            d >= *trace.last().unwrap(),
            "dual objective decreased: {} -> {d}",
            trace.last().unwrap()
        );
        trace.push(d);
        if max_violation <= tol {
            converged = true;
            break;
        }
    }
    Sweeps {
        alpha,
        converged,
        iterations,
        trace,
    }
}

fn check_labels(n: usize, y: &[f64]) -> Result<()> {
    if n != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} examples but {} labels",
            n,
            y.len()
        )));
    }
    if let Some(bad) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidInput(format!("label at {bad} is not ±1")));
    }
    Ok(())
}

/// Trains one binary classifier; labels must be `+1.0` or `-1.0`.
pub fn train_binary<F: FeatureVector + Sync>(x: &[F], y: &[f64], cfg: &TrainConfig) -> Result<BinaryModel> {
    cfg.validate()?;
    check_labels(x.len(), y)?;
    let dim = check_inputs(x)?;
    let gram = Gram::wanted(x.len(), dim).then(|| Gram::new(x, dim, cfg.bias));
    Ok(train_prepared(x, y, dim, cfg, gram.as_ref()))
}

fn train_prepared<F: FeatureVector>(x: &[F], y: &[f64], dim: usize, cfg: &TrainConfig, gram: Option<&Gram>) -> BinaryModel {
    let n = x.len();
    let w_len = dim + usize::from(cfg.bias);
    let (sweeps, w) = match gram {
        Some(gram) => {
            let diag: Vec<f64> = (0..n).map(|i| gram.k[i * n + i]).collect();
            let mut state = GramState {
                gram,
                coef: vec![0.0; n],
                margins: vec![0.0; n],
            };
            let sweeps = coordinate_descent(&mut state, &diag, y, cfg);
            let mut w = vec![0.0; w_len];
            for (xi, &coef) in x.iter().zip(&state.coef) {
                if coef != 0.0 {
                    xi.add_scaled_to(&mut w[..dim], coef);
                    if cfg.bias {
                        w[dim] += coef;
                    }
                }
            }
            (sweeps, w)
        }
        None => {
            let bias = if cfg.bias { 1.0 } else { 0.0 };
            let diag: Vec<f64> = x.iter().map(|xi| xi.squared_norm() + bias).collect();
            let mut state = PrimalState {
                x,
                w: vec![0.0; w_len],
                dim,
                bias: cfg.bias,
            };
            let sweeps = coordinate_descent(&mut state, &diag, y, cfg);
            (sweeps, state.w)
        }
    };

    let mut model = BinaryModel {
        weights: w,
        dual_vars: sweeps.alpha,
        bias: cfg.bias,
        converged: sweeps.converged,
        iterations: sweeps.iterations,
        final_gap: 0.0,
        dual_objective_trace: sweeps.trace,
    };
    let dual = *model.dual_objective_trace.last().unwrap();
    model.final_gap = primal_objective(&model, x, y, cfg.c) - dual;
    model
}

/// Largest projected-gradient magnitude of the dual at the model's iterate.
pub fn max_kkt_violation<F: FeatureVector>(model: &BinaryModel, x: &[F], y: &[f64], c: f64) -> f64 {
    x.iter()
        .zip(y)
        .zip(&model.dual_vars)
        .map(|((xi, &yi), &a)| {
            let g = yi * model.raw_decision(xi) - 1.0;
            let pg = if a == 0.0 {
                g.min(0.0)
            } else if a == c {
                g.max(0.0)
            } else {
                g
            };
            pg.abs()
        })
        .fold(0.0, f64::max)
}

/// One-vs-rest ensemble; `classes` are sorted lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub classes: Vec<String>,
    /// Fraction of training examples per class, aligned with `classes`.
    pub priors: Vec<f64>,
    pub models: Vec<BinaryModel>,
    pub dim: usize,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<'a> {
    pub label: &'a str,
    pub scores: Vec<f64>,
}

pub fn train_multiclass<F, S>(x: &[F], labels: &[S], cfg: &TrainConfig) -> Result<TrainedModel>
where
    F: FeatureVector + Sync,
    S: AsRef<str> + Sync,
{
    cfg.validate()?;
    if x.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} examples but {} labels",
            x.len(),
            labels.len()
        )));
    }
    let dim = check_inputs(x)?;
    let mut classes: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two classes to train, found {}",
            classes.len()
        )));
    }
    let n = labels.len() as f64;
    let priors = classes
        .iter()
        .map(|c| labels.iter().filter(|l| l.as_ref() == c).count() as f64 / n)
        .collect();
    let gram = Gram::wanted(x.len(), dim).then(|| Gram::new(x, dim, cfg.bias));
    let models = classes
        .par_iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if l.as_ref() == class { 1.0 } else { -1.0 })
                .collect();
            train_prepared(x, &y, dim, cfg, gram.as_ref())
        })
        .collect::<Vec<_>>();
    Ok(TrainedModel {
        classes,
        priors,
        models,
        dim,
        config: cfg.clone(),
    })
}

/// Index of the best score; ties go to the larger prior, then to the
/// earlier (lexicographically smaller) class.
pub fn argmax_with_priors(scores: &[f64], priors: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && priors[i] > priors[best]) {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    pub fn scores<F: FeatureVector + ?Sized>(&self, x: &F) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision_value(x)).collect()
    }

    pub fn predict<F: FeatureVector + ?Sized>(&self, x: &F) -> Result<Prediction<'_>> {
        let scores = self.scores(x)?;
        let best = argmax_with_priors(&scores, &self.priors);
        Ok(Prediction {
            label: &self.classes[best],
            scores,
        })
    }

    /// The class with the largest training prior (lexicographic on ties).
    pub fn majority_class(&self) -> &str {
        let zeros = vec![0.0; self.classes.len()];
        &self.classes[argmax_with_priors(&zeros, &self.priors)]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

pub fn predict<'a, F: FeatureVector + ?Sized>(model: &'a TrainedModel, x: &F) -> Result<Prediction<'a>> {
    model.predict(x)
}

/// On-disk model layout. Floats use shortest round-trip decimal encoding.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    classes: Vec<String>,
    priors: Vec<f64>,
    dim: usize,
    bias: bool,
    weights: Vec<Vec<f64>>,
    converged: Vec<bool>,
    config: TrainConfig,
}

impl From<&TrainedModel> for ModelFile {
    fn from(m: &TrainedModel) -> Self {
        ModelFile {
            classes: m.classes.clone(),
            priors: m.priors.clone(),
            dim: m.dim,
            bias: m.config.bias,
            weights: m.models.iter().map(|b| b.weights.clone()).collect(),
            converged: m.models.iter().map(|b| b.converged).collect(),
            config: m.config.clone(),
        }
    }
}

impl TryFrom<ModelFile> for TrainedModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let expected = f.dim + usize::from(f.bias);
        if f.weights.len() != f.classes.len() || f.priors.len() != f.classes.len() {
            return Err(Error::InvalidInput("model file: per-class arrays disagree in length".into()));
        }
        if let Some(bad) = f.weights.iter().find(|w| w.len() != expected) {
            return Err(Error::DimensionMismatch {
                expected,
                found: bad.len(),
            });
        }
        let models = f
            .weights
            .into_iter()
            .enumerate()
            .map(|(i, weights)| BinaryModel {
                weights,
                dual_vars: Vec::new(),
                bias: f.bias,
                converged: f.converged.get(i).copied().unwrap_or(false),
                iterations: 0,
                final_gap: f64::NAN,
                dual_objective_trace: Vec::new(),
            })
            .collect();
        let mut config = f.config;
        config.bias = f.bias;
        Ok(TrainedModel {
            classes: f.classes,
            priors: f.priors,
            models,
            dim: f.dim,
            config,
        })
    }
}
