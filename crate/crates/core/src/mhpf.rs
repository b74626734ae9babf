//! Multi-head probability fusion.
//!
//! Each head mixes the modality distributions with class-specific convex
//! weights; heads are then mixed per class by a second set of convex
//! coefficients. Both weight sets are softmax reparameterizations of
//! unconstrained logits, so plain gradient descent keeps them on the simplex.
//!
//! For head `h`, modality `m` and class `c`:
//!
//! ```text
//! w[h,m,c] = softmax_m(modality_logits[h,·,c])
//! a[h,c]   = softmax_h(head_logits[·,c])
//! O_h[c]   = sum_m w[h,m,c] * P_m[c]
//! F[c]     = sum_h a[h,c] * O_h[c]
//! out      = F / sum_c F[c]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{softmax, Scalar};
use crate::space::{EmotionSpace, ProbVector};

pub const MODEL_FORMAT: &str = "cerfuse-mhpf";
pub const MODEL_VERSION: u32 = 1;

/// Standard deviation of the initial logit jitter.
pub const INIT_JITTER: f64 = 1e-2;

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MhpfError {
    #[error("heads, modalities and classes must all be >= 1 (got {heads}, {modalities}, {classes})")]
    BadDimensions {
        heads: usize,
        modalities: usize,
        classes: usize,
    },
    #[error("duplicate modality {0:?}")]
    DuplicateModality(String),
    #[error("inputs do not match the model's modalities: {0}")]
    ModalityMismatch(String),
    #[error("fused scores are all zero")]
    AllZeroFused,
    #[error("empty batch")]
    EmptyBatch,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("gold label index {0} outside the class range")]
    BadGold(usize),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("model file version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Learnable parameters of the fusion model.
#[derive(Debug, Clone, PartialEq)]
pub struct MhpfModel<T = f64> {
    heads: usize,
    modality_order: Vec<String>,
    space: EmotionSpace,
    /// Flattened `[h][m][c]`.
    modality_logits: Vec<T>,
    /// Flattened `[h][c]`.
    head_logits: Vec<T>,
}

/// Gradient with the same layout as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MhpfGradient<T = f64> {
    pub modality_logits: Vec<T>,
    pub head_logits: Vec<T>,
}

impl<T: Scalar> MhpfGradient<T> {
    /// Modality-logit entries followed by head-logit entries.
    pub fn flat(&self) -> Vec<T> {
        self.modality_logits
            .iter()
            .chain(&self.head_logits)
            .copied()
            .collect()
    }
}

/// One training example: modality distributions in model order plus the
/// gold class index.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionExample<T = f64> {
    pub inputs: Vec<ProbVector<T>>,
    pub gold: usize,
}

/// Derived convex weights, recomputed from logits on demand.
struct Weights<T> {
    /// `[h][m][c]`
    modality: Vec<T>,
    /// `[h][c]`
    head: Vec<T>,
}

impl<T: Scalar> MhpfModel<T> {
    /// Zero logits plus seeded Gaussian jitter.
    pub fn init(
        heads: usize,
        modality_order: Vec<String>,
        space: EmotionSpace,
        seed: u64,
    ) -> Result<Self, MhpfError> {
        let mut model = Self::zeros(heads, modality_order, space)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = |rng: &mut ChaCha8Rng| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * INIT_JITTER)
        };
        for v in model.modality_logits.iter_mut().chain(model.head_logits.iter_mut()) {
            *v = jitter(&mut rng);
        }
        Ok(model)
    }

    /// All-zero logits: uniform weights everywhere.
    pub fn zeros(
        heads: usize,
        modality_order: Vec<String>,
        space: EmotionSpace,
    ) -> Result<Self, MhpfError> {
        let (m, c) = (modality_order.len(), space.len());
        if heads == 0 || m == 0 || c == 0 {
            return Err(MhpfError::BadDimensions {
                heads,
                modalities: m,
                classes: c,
            });
        }
        for (i, name) in modality_order.iter().enumerate() {
            if modality_order[..i].contains(name) {
                return Err(MhpfError::DuplicateModality(name.clone()));
            }
        }
        Ok(Self {
            heads,
            modality_order,
            space,
            modality_logits: vec![T::zero(); heads * m * c],
            head_logits: vec![T::zero(); heads * c],
        })
    }

    /// Builds a model from explicit logit arrays (`[h][m][c]` and `[h][c]`).
    pub fn from_logits(
        heads: usize,
        modality_order: Vec<String>,
        space: EmotionSpace,
        modality_logits: Vec<T>,
        head_logits: Vec<T>,
    ) -> Result<Self, MhpfError> {
        let mut model = Self::zeros(heads, modality_order, space)?;
        if modality_logits.len() != model.modality_logits.len()
            || head_logits.len() != model.head_logits.len()
        {
            return Err(MhpfError::BadDimensions {
                heads,
                modalities: model.modality_count(),
                classes: model.class_count(),
            });
        }
        model.modality_logits = modality_logits;
        model.head_logits = head_logits;
        Ok(model)
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn modality_count(&self) -> usize {
        self.modality_order.len()
    }

    pub fn class_count(&self) -> usize {
        self.space.len()
    }

    pub fn modality_order(&self) -> &[String] {
        &self.modality_order
    }

    pub fn space(&self) -> &EmotionSpace {
        &self.space
    }

    pub fn modality_logits(&self) -> &[T] {
        &self.modality_logits
    }

    pub fn head_logits(&self) -> &[T] {
        &self.head_logits
    }

    pub fn param_count(&self) -> usize {
        self.modality_logits.len() + self.head_logits.len()
    }

    /// Modality logits followed by head logits.
    pub fn params(&self) -> Vec<T> {
        self.modality_logits
            .iter()
            .chain(&self.head_logits)
            .copied()
            .collect()
    }

    /// Inverse of [`params`](Self::params). Panics on a length mismatch.
    pub fn set_params(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.param_count(), "parameter length");
        let split = self.modality_logits.len();
        self.modality_logits.copy_from_slice(&params[..split]);
        self.head_logits.copy_from_slice(&params[split..]);
    }

    #[inline]
    fn mi(&self, h: usize, m: usize, c: usize) -> usize {
        (h * self.modality_count() + m) * self.class_count() + c
    }

    #[inline]
    fn hi(&self, h: usize, c: usize) -> usize {
        h * self.class_count() + c
    }

    fn weights(&self) -> Weights<T> {
        let (hn, mn, cn) = (self.heads, self.modality_count(), self.class_count());
        let mut modality = vec![T::zero(); hn * mn * cn];
        let mut head = vec![T::zero(); hn * cn];
        let mut buf = Vec::with_capacity(mn.max(hn));
        for c in 0..cn {
            for h in 0..hn {
                buf.clear();
                buf.extend((0..mn).map(|m| self.modality_logits[self.mi(h, m, c)]));
                for (m, w) in softmax(&buf).into_iter().enumerate() {
                    modality[self.mi(h, m, c)] = w;
                }
            }
            buf.clear();
            buf.extend((0..hn).map(|h| self.head_logits[self.hi(h, c)]));
            for (h, a) in softmax(&buf).into_iter().enumerate() {
                head[self.hi(h, c)] = a;
            }
        }
        Weights { modality, head }
    }

    /// Convex weight of modality `m` in head `h` for class `c`.
    pub fn modality_weight(&self, h: usize, m: usize, c: usize) -> T {
        let logits: Vec<T> = (0..self.modality_count())
            .map(|k| self.modality_logits[self.mi(h, k, c)])
            .collect();
        softmax(&logits)[m]
    }

    /// Aggregation coefficient of head `h` for class `c`.
    pub fn head_weight(&self, h: usize, c: usize) -> T {
        let logits: Vec<T> = (0..self.heads).map(|k| self.head_logits[self.hi(k, c)]).collect();
        softmax(&logits)[h]
    }

    /// Total weight modality `m` receives for class `c` after head mixing.
    pub fn effective_weight(&self, m: usize, c: usize) -> T {
        let w = self.weights();
        (0..self.heads)
            .map(|h| w.head[self.hi(h, c)] * w.modality[self.mi(h, m, c)])
            .sum()
    }

    /// Effective weights as `[m][c]`.
    pub fn effective_weights(&self) -> Vec<Vec<T>> {
        let w = self.weights();
        (0..self.modality_count())
            .map(|m| {
                (0..self.class_count())
                    .map(|c| {
                        (0..self.heads)
                            .map(|h| w.head[self.hi(h, c)] * w.modality[self.mi(h, m, c)])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Orders a modality map into model order, rejecting extra or missing keys.
    pub fn order_inputs(
        &self,
        inputs: &BTreeMap<String, ProbVector<T>>,
    ) -> Result<Vec<ProbVector<T>>, MhpfError> {
        if inputs.len() != self.modality_count() {
            return Err(MhpfError::ModalityMismatch(format!(
                "expected {:?}, got {:?}",
                self.modality_order,
                inputs.keys().collect::<Vec<_>>()
            )));
        }
        self.modality_order
            .iter()
            .map(|m| {
                inputs
                    .get(m)
                    .cloned()
                    .ok_or_else(|| MhpfError::ModalityMismatch(format!("missing modality {m:?}")))
            })
            .collect()
    }

    fn check_ordered(&self, inputs: &[ProbVector<T>]) -> Result<(), MhpfError> {
        if inputs.len() != self.modality_count() {
            return Err(MhpfError::ModalityMismatch(format!(
                "expected {} inputs, got {}",
                self.modality_count(),
                inputs.len()
            )));
        }
        if let Some(i) = inputs.iter().position(|p| p.space() != &self.space) {
            return Err(MhpfError::ModalityMismatch(format!(
                "input for {:?} is over a different label space",
                self.modality_order[i]
            )));
        }
        Ok(())
    }

    /// Unnormalized fused scores `F` and per-head outputs `O` (`[h][c]`).
    fn fuse_raw(&self, w: &Weights<T>, inputs: &[ProbVector<T>]) -> (Vec<T>, Vec<T>) {
        let (hn, mn, cn) = (self.heads, self.modality_count(), self.class_count());
        let mut heads_out = vec![T::zero(); hn * cn];
        let mut fused = vec![T::zero(); cn];
        for c in 0..cn {
            for h in 0..hn {
                let o: T = (0..mn)
                    .map(|m| w.modality[self.mi(h, m, c)] * inputs[m].values()[c])
                    .sum();
                heads_out[self.hi(h, c)] = o;
                fused[c] = fused[c] + w.head[self.hi(h, c)] * o;
            }
        }
        (fused, heads_out)
    }

    /// Raw fused scores before renormalization.
    pub fn fused_scores(&self, inputs: &[ProbVector<T>]) -> Result<Vec<T>, MhpfError> {
        self.check_ordered(inputs)?;
        Ok(self.fuse_raw(&self.weights(), inputs).0)
    }

    /// Fuses inputs given in model order.
    pub fn forward_ordered(&self, inputs: &[ProbVector<T>]) -> Result<ProbVector<T>, MhpfError> {
        let fused = self.fused_scores(inputs)?;
        let total: T = fused.iter().copied().sum();
        if total <= T::zero() {
            return Err(MhpfError::AllZeroFused);
        }
        let values = fused.into_iter().map(|f| f / total).collect();
        Ok(ProbVector::from_internal(values, self.space.clone()))
    }

    /// Fuses inputs keyed by modality tag.
    pub fn forward(&self, inputs: &BTreeMap<String, ProbVector<T>>) -> Result<ProbVector<T>, MhpfError> {
        self.forward_ordered(&self.order_inputs(inputs)?)
    }

    fn check_batch(&self, batch: &[FusionExample<T>]) -> Result<(), MhpfError> {
        if batch.is_empty() {
            return Err(MhpfError::EmptyBatch);
        }
        for ex in batch {
            self.check_ordered(&ex.inputs)?;
            if ex.gold >= self.class_count() {
                return Err(MhpfError::BadGold(ex.gold));
            }
        }
        Ok(())
    }

    /// Mean negative log-likelihood of the gold classes.
    pub fn nll_loss(&self, batch: &[FusionExample<T>]) -> Result<T, MhpfError> {
        self.check_batch(batch)?;
        let w = self.weights();
        let mut total = T::zero();
        for ex in batch {
            let (fused, _) = self.fuse_raw(&w, &ex.inputs);
            let sum: T = fused.iter().copied().sum();
            if sum <= T::zero() {
                return Err(MhpfError::AllZeroFused);
            }
            let p = (fused[ex.gold] / sum).max(T::lit(PROB_FLOOR));
            total = total - p.ln();
        }
        Ok(total / T::from_usize(batch.len()).expect("batch size fits"))
    }

    /// Exact gradient of [`nll_loss`](Self::nll_loss).
    pub fn gradient(&self, batch: &[FusionExample<T>]) -> Result<MhpfGradient<T>, MhpfError> {
        self.check_batch(batch)?;
        let (hn, mn, cn) = (self.heads, self.modality_count(), self.class_count());
        let w = self.weights();
        let mut g_mod = vec![T::zero(); self.modality_logits.len()];
        let mut g_head = vec![T::zero(); self.head_logits.len()];
        let mut d_fused = vec![T::zero(); cn];
        let mut buf_h = vec![T::zero(); hn];
        let mut buf_m = vec![T::zero(); mn];

        for ex in batch {
            let (fused, heads_out) = self.fuse_raw(&w, &ex.inputs);
            let sum: T = fused.iter().copied().sum();
            if sum <= T::zero() {
                return Err(MhpfError::AllZeroFused);
            }
            let g = ex.gold;
            // Flooring is flat below the floor, so nothing flows back there.
            if fused[g] / sum < T::lit(PROB_FLOOR) {
                continue;
            }
            // L = -ln(F_g / S)  =>  dL/dF_c = 1/S - [c == g] / F_g
            for (c, d) in d_fused.iter_mut().enumerate() {
                *d = T::one() / sum;
                if c == g {
                    *d = *d - T::one() / fused[g];
                }
            }
            for c in 0..cn {
                let dfc = d_fused[c];
                // Head coefficients: softmax over h.
                for h in 0..hn {
                    buf_h[h] = dfc * heads_out[self.hi(h, c)];
                }
                let mean_h: T = (0..hn).map(|h| w.head[self.hi(h, c)] * buf_h[h]).sum();
                for h in 0..hn {
                    let i = self.hi(h, c);
                    g_head[i] = g_head[i] + w.head[i] * (buf_h[h] - mean_h);
                }
                // Modality weights: softmax over m within each head.
                for h in 0..hn {
                    let scale = dfc * w.head[self.hi(h, c)];
                    for m in 0..mn {
                        buf_m[m] = scale * ex.inputs[m].values()[c];
                    }
                    let mean_m: T = (0..mn).map(|m| w.modality[self.mi(h, m, c)] * buf_m[m]).sum();
                    for m in 0..mn {
                        let i = self.mi(h, m, c);
                        g_mod[i] = g_mod[i] + w.modality[i] * (buf_m[m] - mean_m);
                    }
                }
            }
        }
        let n = T::from_usize(batch.len()).expect("batch size fits");
        g_mod.iter_mut().chain(g_head.iter_mut()).for_each(|v| *v = *v / n);
        Ok(MhpfGradient {
            modality_logits: g_mod,
            head_logits: g_head,
        })
    }

    fn step(&mut self, grad: &MhpfGradient<T>, lr: T) {
        for (p, g) in self.modality_logits.iter_mut().zip(&grad.modality_logits) {
            *p = *p - lr * *g;
        }
        for (p, g) in self.head_logits.iter_mut().zip(&grad.head_logits) {
            *p = *p - lr * *g;
        }
    }

    /// Builds a training example from a modality map and a gold label name.
    pub fn example(
        &self,
        inputs: &BTreeMap<String, ProbVector<T>>,
        gold: &str,
    ) -> Result<FusionExample<T>, MhpfError> {
        let gold_idx = self
            .space
            .index_of(gold)
            .ok_or_else(|| MhpfError::ModalityMismatch(format!("gold label {gold:?} not in space")))?;
        Ok(FusionExample {
            inputs: self.order_inputs(inputs)?,
            gold: gold_idx,
        })
    }
}

/// Mini-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults: lr 0.05, 100 epochs, batch 64, patience 25.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            learning_rate: 0.05,
            max_epochs: 100,
            batch_size: 64,
            patience: 25,
            seed,
        }
    }

    fn validate(&self) -> Result<(), MhpfError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(MhpfError::BadConfig("learning rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(MhpfError::BadConfig("max_epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(MhpfError::BadConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T = f64> {
    /// Parameters with the lowest validation loss seen.
    pub model: MhpfModel<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains a copy of `model`. Deterministic for a fixed config.
pub fn train<T: Scalar>(
    model: &MhpfModel<T>,
    train_set: &[FusionExample<T>],
    val_set: &[FusionExample<T>],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, MhpfError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(MhpfError::EmptySplit("training"));
    }
    if val_set.is_empty() {
        return Err(MhpfError::EmptySplit("validation"));
    }
    model.check_batch(train_set)?;
    model.check_batch(val_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lr = T::lit(config.learning_rate);
    let mut current = model.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);

    let mut best_val = current.nll_loss(val_set)?;
    let mut best = current.clone();
    let mut best_epoch = 0;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: current.nll_loss(train_set)?.to_f64_lossy(),
        val_loss: best_val.to_f64_lossy(),
    }];
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let grad = current.gradient(&batch)?;
            current.step(&grad, lr);
        }
        let val = current.nll_loss(val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss: current.nll_loss(train_set)?.to_f64_lossy(),
            val_loss: val.to_f64_lossy(),
        });
        if val < best_val {
            best_val = val;
            best = current.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    heads: usize,
    modalities: Vec<String>,
    classes: Vec<String>,
    /// `[h][m][c]`
    modality_logits: Vec<Vec<Vec<f64>>>,
    /// `[h][c]`
    head_logits: Vec<Vec<f64>>,
}

impl<T: Scalar> MhpfModel<T> {
    /// Serializes to the versioned JSON model format.
    pub fn to_json(&self) -> String {
        let (hn, mn, cn) = (self.heads, self.modality_count(), self.class_count());
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            heads: hn,
            modalities: self.modality_order.clone(),
            classes: self.space.labels().to_vec(),
            modality_logits: (0..hn)
                .map(|h| {
                    (0..mn)
                        .map(|m| (0..cn).map(|c| self.modality_logits[self.mi(h, m, c)].to_f64_lossy()).collect())
                        .collect()
                })
                .collect(),
            head_logits: (0..hn)
                .map(|h| (0..cn).map(|c| self.head_logits[self.hi(h, c)].to_f64_lossy()).collect())
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MhpfError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| MhpfError::Corrupt(e.to_string()))?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != MODEL_FORMAT || version != Some(MODEL_VERSION as u64) {
            return Err(MhpfError::VersionMismatch {
                expected: format!("{MODEL_FORMAT} v{MODEL_VERSION}"),
                found: format!(
                    "{} v{}",
                    if format.is_empty() { "<none>" } else { format },
                    version.map_or("<none>".to_string(), |v| v.to_string())
                ),
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| MhpfError::Corrupt(e.to_string()))?;
        let space = EmotionSpace::new(file.classes).map_err(|e| MhpfError::Corrupt(e.to_string()))?;
        let (hn, mn, cn) = (file.heads, file.modalities.len(), space.len());
        let shape_ok = file.modality_logits.len() == hn
            && file
                .modality_logits
                .iter()
                .all(|mm| mm.len() == mn && mm.iter().all(|cc| cc.len() == cn))
            && file.head_logits.len() == hn
            && file.head_logits.iter().all(|cc| cc.len() == cn);
        if !shape_ok {
            return Err(MhpfError::Corrupt("logit array shapes disagree with dimensions".into()));
        }
        let cast = |v: f64| {
            T::from_f64(v)
                .filter(|x| x.is_finite())
                .ok_or_else(|| MhpfError::Corrupt(format!("non-finite logit {v}")))
        };
        let modality_logits = file
            .modality_logits
            .iter()
            .flatten()
            .flatten()
            .map(|&v| cast(v))
            .collect::<Result<Vec<T>, _>>()?;
        let head_logits = file
            .head_logits
            .iter()
            .flatten()
            .map(|&v| cast(v))
            .collect::<Result<Vec<T>, _>>()?;
        Self::from_logits(hn, file.modalities, space, modality_logits, head_logits).map_err(|e| match e {
            MhpfError::BadDimensions { .. } | MhpfError::DuplicateModality(_) => MhpfError::Corrupt(e.to_string()),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MhpfError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MhpfError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::normalize;

    fn space2() -> EmotionSpace {
        EmotionSpace::new(["A", "B"]).unwrap()
    }

    fn mods(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn pv(v: &[f64], s: &EmotionSpace) -> ProbVector {
        normalize(v, s.clone()).unwrap()
    }

    #[test]
    fn init_is_near_uniform() {
        let s = EmotionSpace::default_basic();
        let m: MhpfModel = MhpfModel::init(2, mods(3), s, 7).unwrap();
        for h in 0..2 {
            for c in 0..8 {
                assert!((m.head_weight(h, c) - 0.5).abs() < 0.05);
                for k in 0..3 {
                    assert!((m.modality_weight(h, k, c) - 1.0 / 3.0).abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn single_head_single_modality_weights_are_one() {
        let m: MhpfModel = MhpfModel::init(1, mods(1), space2(), 3).unwrap();
        assert_eq!(m.modality_weight(0, 0, 1), 1.0);
        assert_eq!(m.head_weight(0, 0), 1.0);
    }

    #[test]
    fn init_is_deterministic() {
        let s = EmotionSpace::default_basic();
        let a: MhpfModel = MhpfModel::init(4, mods(3), s.clone(), 11).unwrap();
        let b: MhpfModel = MhpfModel::init(4, mods(3), s.clone(), 11).unwrap();
        let c: MhpfModel = MhpfModel::init(4, mods(3), s, 12).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn bad_dimensions() {
        assert!(matches!(
            MhpfModel::<f64>::init(0, mods(2), space2(), 0),
            Err(MhpfError::BadDimensions { .. })
        ));
        assert!(matches!(
            MhpfModel::<f64>::init(1, vec![], space2(), 0),
            Err(MhpfError::BadDimensions { .. })
        ));
        assert!(matches!(
            MhpfModel::<f64>::init(1, vec!["a".into(), "a".into()], space2(), 0),
            Err(MhpfError::DuplicateModality(_))
        ));
    }

    #[test]
    fn single_modality_passes_through() {
        let s = space2();
        let mut m: MhpfModel = MhpfModel::init(3, mods(1), s.clone(), 1).unwrap();
        let params: Vec<f64> = (0..m.param_count()).map(|i| i as f64 * 0.7 - 2.0).collect();
        m.set_params(&params);
        let p = pv(&[0.3, 0.7], &s);
        let out = m.forward_ordered(std::slice::from_ref(&p)).unwrap();
        for (a, b) in out.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_inputs_average() {
        let s = space2();
        let m: MhpfModel = MhpfModel::zeros(1, mods(2), s.clone()).unwrap();
        let out = m.forward_ordered(&[pv(&[1.0, 0.0], &s), pv(&[0.0, 1.0], &s)]).unwrap();
        assert_eq!(out.values(), &[0.5, 0.5]);
    }

    #[test]
    fn forward_map_checks_modalities() {
        let s = space2();
        let m: MhpfModel = MhpfModel::zeros(1, mods(2), s.clone()).unwrap();
        let mut inputs = BTreeMap::new();
        inputs.insert("m0".to_string(), pv(&[1.0, 1.0], &s));
        assert!(matches!(m.forward(&inputs), Err(MhpfError::ModalityMismatch(_))));
        inputs.insert("zz".to_string(), pv(&[1.0, 1.0], &s));
        assert!(matches!(m.forward(&inputs), Err(MhpfError::ModalityMismatch(_))));
        inputs.remove("zz");
        inputs.insert("m1".to_string(), pv(&[1.0, 3.0], &s));
        assert_eq!(m.forward(&inputs).unwrap().values(), &[0.375, 0.625]);
    }

    #[test]
    fn loss_examples() {
        let s = space2();
        let m: MhpfModel = MhpfModel::zeros(1, mods(1), s.clone()).unwrap();
        let ex = |p: &[f64], gold| FusionExample {
            inputs: vec![pv(p, &s)],
            gold,
        };
        assert_eq!(m.nll_loss(&[ex(&[1.0, 0.0], 0)]).unwrap(), 0.0);
        let half = m.nll_loss(&[ex(&[0.5, 0.5], 0)]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let a = m.nll_loss(&[ex(&[0.25, 0.75], 0)]).unwrap();
        let b = m.nll_loss(&[ex(&[0.9, 0.1], 0)]).unwrap();
        let both = m.nll_loss(&[ex(&[0.25, 0.75], 0), ex(&[0.9, 0.1], 0)]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-15);
        // Zero mass on gold is floored.
        let floored = m.nll_loss(&[ex(&[0.0, 1.0], 0)]).unwrap();
        assert!((floored + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(matches!(m.nll_loss(&[]), Err(MhpfError::EmptyBatch)));
    }

    #[test]
    fn single_modality_single_head_gradient_is_zero() {
        let s = EmotionSpace::default_basic();
        let m: MhpfModel = MhpfModel::init(1, mods(1), s.clone(), 5).unwrap();
        let batch = vec![FusionExample {
            inputs: vec![pv(&[1.0, 2.0, 3.0, 4.0, 1.0, 1.0, 1.0, 1.0], &s)],
            gold: 2,
        }];
        let g = m.gradient(&batch).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let s = space2();
        let m: MhpfModel = MhpfModel::init(2, mods(2), s.clone(), 1).unwrap();
        let data: Vec<FusionExample> = (0..10)
            .map(|i| FusionExample {
                inputs: vec![pv(&[1.0 + i as f64, 1.0], &s), pv(&[1.0, 2.0], &s)],
                gold: 0,
            })
            .collect();
        let mut cfg = TrainConfig::with_seed(3);
        cfg.patience = 0;
        let out = train(&m, &data, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.history.last().unwrap().epoch, 1);
    }

    #[test]
    fn empty_split_rejected() {
        let s = space2();
        let m: MhpfModel = MhpfModel::init(1, mods(2), s.clone(), 1).unwrap();
        let one = vec![FusionExample {
            inputs: vec![pv(&[1.0, 1.0], &s), pv(&[1.0, 1.0], &s)],
            gold: 0,
        }];
        let cfg = TrainConfig::with_seed(0);
        assert!(matches!(train(&m, &[], &one, &cfg), Err(MhpfError::EmptySplit(_))));
        assert!(matches!(train(&m, &one, &[], &cfg), Err(MhpfError::EmptySplit(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = EmotionSpace::default_basic();
        let m: MhpfModel = MhpfModel::init(4, mods(3), s, 99).unwrap();
        let back: MhpfModel = MhpfModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.modality_logits()), bits(m.modality_logits()));
    }

    #[test]
    fn version_and_corruption() {
        let s = space2();
        let m: MhpfModel = MhpfModel::init(2, mods(2), s, 1).unwrap();
        let text = m.to_json();
        let wrong = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            MhpfModel::<f64>::from_json(&wrong),
            Err(MhpfError::VersionMismatch { .. })
        ));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(MhpfModel::<f64>::from_json(truncated), Err(MhpfError::Corrupt(_))));
        let reshaped = text.replace("\"heads\": 2", "\"heads\": 3");
        assert!(matches!(MhpfModel::<f64>::from_json(&reshaped), Err(MhpfError::Corrupt(_))));
    }
}
