//! Binary-relevance logistic regression over source-tag indicator vectors.
//!
//! One independent binary classifier per target tag, sharing a weight
//! matrix W (|T|×|S|) and bias vector b. Two training objectives, both
//! minimized:
//!
//! - maximum likelihood: negative log-likelihood + (l2/2)·‖W‖²_F;
//! - maximum a posteriori: negative log-likelihood +
//!   (λ²/2)·‖W − Wᴷᴮ‖²_F + ν·‖b‖², where Wᴷᴮ is the knowledge-based
//!   translation table acting as prior mean.
//!
//! The likelihood term is a sum over samples and target tags (not a mean),
//! so the objectives of differently sized datasets are comparable to the
//! prior term. Probabilities are clamped away from {0,1} by 1e−12 inside
//! loss evaluation only; predictions and gradients use exact sigmoids.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Probability floor used inside loss evaluation.
const PROB_EPS: f64 = 1e-12;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) computed without overflow on either side.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Per-sample-and-tag negative log-likelihood with the probability clamp.
fn nll_term(z: f64, y: f64) -> f64 {
    let lo = PROB_EPS.ln();
    let hi = (1.0 - PROB_EPS).ln();
    let log_p = (-softplus(-z)).clamp(lo, hi);
    let log_1mp = (-softplus(z)).clamp(lo, hi);
    -(y * log_p + (1.0 - y) * log_1mp)
}

/// Weights, biases, and the vocabularies they are indexed by.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl LogisticModel {
    pub fn zeros(source_vocab: Vec<String>, target_vocab: Vec<String>) -> Self {
        let weights = Array2::zeros((target_vocab.len(), source_vocab.len()));
        let bias = Array1::zeros(target_vocab.len());
        LogisticModel {
            source_vocab,
            target_vocab,
            weights,
            bias,
        }
    }

    pub fn with_params(
        source_vocab: Vec<String>,
        target_vocab: Vec<String>,
        weights: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        if weights.nrows() != target_vocab.len() || weights.ncols() != source_vocab.len() {
            return Err(Error::Dimension(format!(
                "weights are {}x{} but vocabularies imply {}x{}",
                weights.nrows(),
                weights.ncols(),
                target_vocab.len(),
                source_vocab.len()
            )));
        }
        if bias.len() != target_vocab.len() {
            return Err(Error::Dimension(format!(
                "bias has {} entries for {} target tags",
                bias.len(),
                target_vocab.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "model parameters must be finite".to_string(),
            ));
        }
        Ok(LogisticModel {
            source_vocab,
            target_vocab,
            weights,
            bias,
        })
    }

    pub fn source_vocab(&self) -> &[String] {
        &self.source_vocab
    }

    pub fn target_vocab(&self) -> &[String] {
        &self.target_vocab
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Per-target-tag probabilities σ(Wx + b) for one indicator vector.
    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.source_vocab.len() {
            return Err(Error::Dimension(format!(
                "input has {} entries for {} source tags",
                x.len(),
                self.source_vocab.len()
            )));
        }
        let z = self.weights.dot(&x) + &self.bias;
        Ok(z.mapv(sigmoid))
    }

    /// Row-wise probabilities for a whole design matrix: σ(XWᵀ + b).
    pub fn predict_matrix(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.source_vocab.len() {
            return Err(Error::Dimension(format!(
                "design matrix has {} columns for {} source tags",
                x.ncols(),
                self.source_vocab.len()
            )));
        }
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        Ok(z.mapv(sigmoid))
    }

    /// Score an annotation set: binary-encode it over the source
    /// vocabulary (unknown tags skipped and returned) and predict.
    pub fn stat_score<'t>(
        &self,
        annotation: impl IntoIterator<Item = &'t str>,
    ) -> (Array1<f64>, Vec<String>) {
        let mut x = Array1::zeros(self.source_vocab.len());
        let mut unknown = Vec::new();
        for tag in annotation {
            match self.source_vocab.iter().position(|s| s == tag) {
                Some(i) => x[i] = 1.0,
                None => unknown.push(tag.to_string()),
            }
        }
        let scores = self
            .predict_proba(x.view())
            .expect("encoding matches the model's own vocabulary");
        (scores, unknown)
    }

    /// Checkpoint sections: VOCAB_S, VOCAB_T, W (row-major), B. Numbers
    /// use the shortest representation that parses back to the same value,
    /// so the round-trip is lossless.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("VOCAB_S {}\n", self.source_vocab.len()));
        for tag in &self.source_vocab {
            out.push_str(tag);
            out.push('\n');
        }
        out.push_str(&format!("VOCAB_T {}\n", self.target_vocab.len()));
        for tag in &self.target_vocab {
            out.push_str(tag);
            out.push('\n');
        }
        out.push_str(&format!(
            "W {} {}\n",
            self.weights.nrows(),
            self.weights.ncols()
        ));
        for row in self.weights.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out.push_str(&format!("B {}\n", self.bias.len()));
        for v in &self.bias {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    pub fn from_checkpoint(text: &str, path: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let header = |pos: &mut usize, name: &str| -> Result<Vec<usize>> {
            let line = lines
                .get(*pos)
                .ok_or_else(|| Error::parse(path, *pos + 1, format!("missing {name} section")))?;
            *pos += 1;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(Error::parse(path, *pos, format!("expected {name} header")));
            }
            parts
                .map(|p| {
                    p.parse()
                        .map_err(|_| Error::parse(path, *pos, format!("bad count {p:?}")))
                })
                .collect()
        };
        let take = |pos: &mut usize, what: &str| -> Result<&str> {
            let line = lines
                .get(*pos)
                .ok_or_else(|| Error::parse(path, *pos + 1, format!("truncated {what} section")))?;
            *pos += 1;
            Ok(line)
        };

        let dims = header(&mut pos, "VOCAB_S")?;
        if dims.len() != 1 {
            return Err(Error::parse(path, pos, "VOCAB_S takes one count"));
        }
        let mut source_vocab = Vec::with_capacity(dims[0]);
        for _ in 0..dims[0] {
            source_vocab.push(take(&mut pos, "VOCAB_S")?.to_string());
        }
        let dims = header(&mut pos, "VOCAB_T")?;
        if dims.len() != 1 {
            return Err(Error::parse(path, pos, "VOCAB_T takes one count"));
        }
        let mut target_vocab = Vec::with_capacity(dims[0]);
        for _ in 0..dims[0] {
            target_vocab.push(take(&mut pos, "VOCAB_T")?.to_string());
        }
        let dims = header(&mut pos, "W")?;
        if dims.len() != 2 || dims[0] != target_vocab.len() || dims[1] != source_vocab.len() {
            return Err(Error::parse(
                path,
                pos,
                "W dimensions disagree with vocabularies",
            ));
        }
        let mut values = Vec::with_capacity(dims[0] * dims[1]);
        for r in 0..dims[0] {
            let line = take(&mut pos, "W")?;
            let row: Vec<f64> = line
                .split('\t')
                .map(|c| {
                    c.parse()
                        .map_err(|_| Error::parse(path, pos, format!("bad number {c:?}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != dims[1] {
                return Err(Error::parse(
                    path,
                    pos,
                    format!("row {r} has {} of {} columns", row.len(), dims[1]),
                ));
            }
            values.extend(row);
        }
        let weights = Array2::from_shape_vec((dims[0], dims[1]), values)
            .map_err(|e| Error::parse(path, pos, e.to_string()))?;
        let dims = header(&mut pos, "B")?;
        if dims.len() != 1 || dims[0] != target_vocab.len() {
            return Err(Error::parse(path, pos, "B length disagrees with VOCAB_T"));
        }
        let mut bias = Vec::with_capacity(dims[0]);
        for _ in 0..dims[0] {
            let line = take(&mut pos, "B")?;
            bias.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, pos, format!("bad number {line:?}")))?,
            );
        }
        LogisticModel::with_params(source_vocab, target_vocab, weights, Array1::from(bias))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::util::atomic_write(path, self.to_checkpoint().as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        LogisticModel::from_checkpoint(&text, &path.display().to_string())
    }
}

/// Gaussian prior for MAP training: mean Wᴷᴮ with shared precision λ² on
/// the weights and strength ν on the (zero-centered) biases.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub mean: Array2<f64>,
    pub lambda: f64,
    pub nu: f64,
}

impl PriorSpec {
    pub fn new(mean: Array2<f64>, lambda: f64, nu: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!(
                "prior precision λ must be positive, got {lambda}"
            )));
        }
        if !(nu >= 0.0) {
            return Err(Error::Config(format!(
                "bias strength ν must be non-negative, got {nu}"
            )));
        }
        Ok(PriorSpec { mean, lambda, nu })
    }

    fn check_dims(&self, model: &LogisticModel) -> Result<()> {
        if self.mean.dim() != model.weights.dim() {
            return Err(Error::Dimension(format!(
                "prior mean is {:?} but the model is {:?}",
                self.mean.dim(),
                model.weights.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Ml,
    Map,
}

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain gradient step (fully deterministic and analyzable).
    Gradient,
    /// Adaptive-moment estimation (β₁ = 0.9, β₂ = 0.999, ε = 1e−8).
    Adam,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 coefficient on W, used in ML mode only.
    pub l2: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Ml,
            learning_rate: 0.5,
            epochs: 500,
            batch_size: 100_000,
            l2: 1.0,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".to_string()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config(format!(
                "L2 coefficient must be non-negative, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

fn check_data_dims(model: &LogisticModel, x: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    if x.ncols() != model.source_vocab.len() {
        return Err(Error::Dimension(format!(
            "X has {} columns for {} source tags",
            x.ncols(),
            model.source_vocab.len()
        )));
    }
    if y.ncols() != model.target_vocab.len() {
        return Err(Error::Dimension(format!(
            "Y has {} columns for {} target tags",
            y.ncols(),
            model.target_vocab.len()
        )));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

fn data_nll(model: &LogisticModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mut z = x.dot(&model.weights.t());
    z += &model.bias;
    z.iter().zip(y.iter()).map(|(&z, &y)| nll_term(z, y)).sum()
}

/// Negative log-likelihood plus (l2/2)·‖W‖²_F.
pub fn ml_loss(model: &LogisticModel, x: &Array2<f64>, y: &Array2<f64>, l2: f64) -> Result<f64> {
    check_data_dims(model, x, y)?;
    let reg = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    Ok(data_nll(model, x, y) + reg)
}

/// Negative log-likelihood plus (λ²/2)·‖W − Wᴷᴮ‖²_F + ν·‖b‖².
pub fn map_loss(
    model: &LogisticModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    prior: &PriorSpec,
) -> Result<f64> {
    check_data_dims(model, x, y)?;
    prior.check_dims(model)?;
    let l2sq = prior.lambda * prior.lambda;
    let w_term = 0.5
        * l2sq
        * model
            .weights
            .iter()
            .zip(prior.mean.iter())
            .map(|(&w, &m)| (w - m) * (w - m))
            .sum::<f64>();
    let b_term = prior.nu * model.bias.iter().map(|b| b * b).sum::<f64>();
    Ok(data_nll(model, x, y) + w_term + b_term)
}

fn data_grad(
    model: &LogisticModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let p = model
        .predict_matrix(x)
        .expect("dimensions checked by callers");
    let residual = p - y;
    let dw = residual.t().dot(x);
    let db = residual.sum_axis(Axis(0));
    (dw, db)
}

/// Exact gradient of [`ml_loss`] (unclamped probabilities).
pub fn grad_ml(
    model: &LogisticModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    l2: f64,
) -> Result<(Array2<f64>, Array1<f64>)> {
    check_data_dims(model, x, y)?;
    let (mut dw, db) = data_grad(model, x, y);
    dw.scaled_add(l2, &model.weights);
    Ok((dw, db))
}

/// Exact gradient of [`map_loss`]: data term + λ²(W − Wᴷᴮ) and 2ν·b.
pub fn grad_map(
    model: &LogisticModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    prior: &PriorSpec,
) -> Result<(Array2<f64>, Array1<f64>)> {
    check_data_dims(model, x, y)?;
    prior.check_dims(model)?;
    let (mut dw, mut db) = data_grad(model, x, y);
    let l2sq = prior.lambda * prior.lambda;
    dw.scaled_add(l2sq, &model.weights);
    dw.scaled_add(-l2sq, &prior.mean);
    db.scaled_add(2.0 * prior.nu, &model.bias);
    Ok((dw, db))
}

/// The model a fresh training run starts from: zeros for ML, the prior
/// mean with zero biases for MAP (so the zero-data case is exact).
pub fn initial_model(
    mode: TrainMode,
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    prior: Option<&PriorSpec>,
) -> Result<LogisticModel> {
    match mode {
        TrainMode::Ml => Ok(LogisticModel::zeros(source_vocab, target_vocab)),
        TrainMode::Map => {
            let prior = prior
                .ok_or_else(|| Error::Config("MAP initialization requires a prior".to_string()))?;
            let bias = Array1::zeros(target_vocab.len());
            LogisticModel::with_params(source_vocab, target_vocab, prior.mean.clone(), bias)
        }
    }
}

struct AdamState {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Minimize the configured loss starting from `init`, whose parameters
/// seed the iteration (so alternative initializations are testable).
/// Per-batch updates use the batch's data gradient plus the full
/// regularization gradient. Deterministic given the seed.
pub fn train(
    init: &LogisticModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &TrainConfig,
    prior: Option<&PriorSpec>,
) -> Result<LogisticModel> {
    cfg.validate()?;
    check_data_dims(init, x, y)?;
    match (cfg.mode, prior) {
        (TrainMode::Map, None) => {
            return Err(Error::Config("MAP training requires a prior".to_string()))
        }
        (TrainMode::Ml, Some(_)) => {
            return Err(Error::Config(
                "ML training takes no prior; use MAP mode".to_string(),
            ))
        }
        (TrainMode::Map, Some(p)) => p.check_dims(init)?,
        (TrainMode::Ml, None) => {}
    }

    let mut model = init.clone();
    let n = x.nrows();
    let full_batch = cfg.batch_size >= n;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState {
        m_w: Array2::zeros(model.weights.dim()),
        v_w: Array2::zeros(model.weights.dim()),
        m_b: Array1::zeros(model.bias.len()),
        v_b: Array1::zeros(model.bias.len()),
        t: 0,
    };

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        let mut start = 0;
        loop {
            let (dw, db) = if full_batch {
                data_grad(&model, x, y)
            } else {
                let end = (start + cfg.batch_size).min(n);
                let idx = &order[start..end];
                let xb = x.select(Axis(0), idx);
                let yb = y.select(Axis(0), idx);
                data_grad(&model, &xb, &yb)
            };
            let (mut dw, mut db) = (dw, db);
            match (cfg.mode, prior) {
                (TrainMode::Ml, _) => {
                    dw.scaled_add(cfg.l2, &model.weights);
                }
                (TrainMode::Map, Some(p)) => {
                    let l2sq = p.lambda * p.lambda;
                    dw.scaled_add(l2sq, &model.weights);
                    dw.scaled_add(-l2sq, &p.mean);
                    db.scaled_add(2.0 * p.nu, &model.bias);
                }
                (TrainMode::Map, None) => unreachable!("checked above"),
            }
            match cfg.optimizer {
                Optimizer::Gradient => {
                    model.weights.scaled_add(-cfg.learning_rate, &dw);
                    model.bias.scaled_add(-cfg.learning_rate, &db);
                }
                Optimizer::Adam => {
                    adam.t += 1;
                    let c1 = 1.0 - ADAM_BETA1.powi(adam.t);
                    let c2 = 1.0 - ADAM_BETA2.powi(adam.t);
                    adam.m_w
                        .zip_mut_with(&dw, |m, &g| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
                    adam.v_w.zip_mut_with(&dw, |v, &g| {
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g
                    });
                    adam.m_b
                        .zip_mut_with(&db, |m, &g| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
                    adam.v_b.zip_mut_with(&db, |v, &g| {
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g
                    });
                    let lr = cfg.learning_rate;
                    ndarray::Zip::from(&mut model.weights)
                        .and(&adam.m_w)
                        .and(&adam.v_w)
                        .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS));
                    ndarray::Zip::from(&mut model.bias)
                        .and(&adam.m_b)
                        .and(&adam.v_b)
                        .for_each(|b, &m, &v| *b -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS));
                }
            }
            if full_batch {
                break;
            }
            start += cfg.batch_size;
            if start >= n {
                break;
            }
        }
        if model
            .weights
            .iter()
            .chain(model.bias.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numerical(format!(
                "parameters diverged to non-finite values at epoch {epoch} \
                 (learning rate {}, {:?} mode)",
                cfg.learning_rate, cfg.mode
            )));
        }
    }
    Ok(model)
}

/// Source-tag statistics of a training set, the input to λ elicitation.
#[derive(Debug, Clone)]
pub struct SourceTagCounts {
    /// Occurrences per source tag, aligned with the design matrix columns.
    pub counts: Vec<usize>,
    pub n_samples: usize,
    /// Mean number of source tags per sample.
    pub mean_tags: f64,
}

impl SourceTagCounts {
    pub fn from_design(x: &Array2<f64>) -> Self {
        let counts: Vec<usize> = x
            .columns()
            .into_iter()
            .map(|col| col.iter().filter(|&&v| v != 0.0).count())
            .collect();
        let total: usize = counts.iter().sum();
        let n = x.nrows();
        SourceTagCounts {
            counts,
            n_samples: n,
            mean_tags: if n == 0 { 0.0 } else { total as f64 / n as f64 },
        }
    }
}

/// Choose the prior precision from the mean annotation size:
/// λ = (2·N̄_S/5)², so that the prior's effective coefficient range
/// 2/√λ matches the per-tag share 5/N̄_S of the logistic operating range.
pub fn elicit_lambda(counts: &SourceTagCounts) -> Result<f64> {
    if !(counts.mean_tags > 0.0) {
        return Err(Error::Config(format!(
            "λ elicitation needs a positive mean source-tag count, got {}",
            counts.mean_tags
        )));
    }
    let ratio = 2.0 * counts.mean_tags / 5.0;
    Ok(ratio * ratio)
}
