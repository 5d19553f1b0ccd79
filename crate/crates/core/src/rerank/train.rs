use super::features::DIM;
use super::model::{sigmoid, ModelKind, RerankModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const COMPLETION_BONUS: f64 = 10.0;
pub const ADVANTAGE_CLAMP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 500, learning_rate: 0.1, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainWarning {
    /// All labels were identical; the model is the constant Laplace prior.
    DegenerateDataset,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: RerankModel,
    pub final_loss: f64,
    /// Training loss after each epoch.
    pub losses: Vec<f64>,
    pub warning: Option<TrainWarning>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Sample-weighted mean log-loss plus `l2/2·|w|²` (bias unregularised), and
/// its gradient with respect to `(w, b)`.
pub fn loss_and_grad(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], sw: &[f64], l2: f64) -> (f64, Vec<f64>, f64) {
    let total: f64 = sw.iter().sum();
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for ((x, &y), &s) in xs.iter().zip(ys).zip(sw) {
        let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
        loss += s * (softplus(z) - y * z);
        let d = s * (sigmoid(z) - y);
        for (g, v) in gw.iter_mut().zip(x) {
            *g += d * v;
        }
        gb += d;
    }
    loss /= total;
    gb /= total;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / total + l2 * wi;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

fn standardize(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let d = xs.first().map_or(0, Vec::len);
    let n = xs.len() as f64;
    let mut mu = vec![0.0; d];
    for x in xs {
        for (m, v) in mu.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for x in xs {
        for ((s, v), m) in sd.iter_mut().zip(x).zip(&mu) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in sd.iter_mut() {
        *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
    }
    let zs = xs
        .iter()
        .map(|x| x.iter().zip(&mu).zip(&sd).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    (mu, sd, zs)
}

/// Full-batch gradient descent on the weighted log-loss over standardised
/// features; returns a model in the original feature space.
pub fn fit_weighted(xs: &[Vec<f64>], ys: &[f64], sw: &[f64], cfg: &TrainConfig) -> (RerankModel, Vec<f64>) {
    let (mu, sd, zs) = standardize(xs);
    let d = mu.len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (_, gw, gb) = loss_and_grad(&w, b, &zs, ys, sw, cfg.l2);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.learning_rate * g;
        }
        b -= cfg.learning_rate * gb;
        losses.push(loss_and_grad(&w, b, &zs, ys, sw, cfg.l2).0);
    }
    let weights: Vec<f64> = w.iter().zip(&sd).map(|(wi, s)| wi / s).collect();
    let bias = b - weights.iter().zip(&mu).map(|(wi, m)| wi * m).sum::<f64>();
    let mut model = RerankModel::zeros(ModelKind::Logistic);
    model.weights = weights;
    model.bias = bias;
    (model, losses)
}

/// Inverse class-frequency weights so both classes carry equal total mass.
pub fn class_weights(ys: &[f64]) -> Vec<f64> {
    let n = ys.len() as f64;
    let pos = ys.iter().filter(|y| **y > 0.5).count() as f64;
    let neg = n - pos;
    ys.iter()
        .map(|y| if *y > 0.5 { n / (2.0 * pos) } else { n / (2.0 * neg) })
        .collect()
}

fn constant_prior(ys: &[f64]) -> RerankModel {
    let pos = ys.iter().filter(|y| **y > 0.5).count() as f64;
    let p = (pos + 1.0) / (ys.len() as f64 + 2.0);
    let mut m = RerankModel::zeros(ModelKind::Logistic);
    m.bias = (p / (1.0 - p)).ln();
    m.metadata.insert("warning".into(), "degenerate_dataset".into());
    m
}

fn train_with_weights(xs: &[Vec<f64>], ys: &[f64], extra: Option<&[f64]>, cfg: &TrainConfig, trainer: &str) -> TrainReport {
    assert!(!xs.is_empty(), "training set must be non-empty");
    let first = ys[0];
    if ys.iter().all(|y| *y == first) {
        log::warn!("all {} labels identical; using the constant prior", ys.len());
        return TrainReport {
            model: constant_prior(ys),
            final_loss: f64::NAN,
            losses: vec![],
            warning: Some(TrainWarning::DegenerateDataset),
        };
    }
    let mut sw = class_weights(ys);
    if let Some(e) = extra {
        for (s, v) in sw.iter_mut().zip(e) {
            *s *= v;
        }
    }
    let (mut model, losses) = fit_weighted(xs, ys, &sw, cfg);
    model.metadata.insert("trainer".into(), trainer.into());
    model.metadata.insert("examples".into(), xs.len().to_string());
    model.metadata.insert("epochs".into(), cfg.epochs.to_string());
    TrainReport { model, final_loss: losses.last().copied().unwrap_or(f64::NAN), losses, warning: None }
}

/// Logistic regression with class-balanced weights.
pub fn train_logistic(data: &[(Vec<f64>, bool)], cfg: &TrainConfig) -> TrainReport {
    let xs: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<f64> = data.iter().map(|(_, y)| if *y { 1.0 } else { 0.0 }).collect();
    train_with_weights(&xs, &ys, None, cfg, "logistic")
}

/// One (state, action) step of an episode, with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state_key: String,
    pub x: Vec<f64>,
    pub accepted: bool,
    pub reward: f64,
    pub depth: u32,
    pub n_before: Option<u32>,
    pub next_min_subgoals: Option<u32>,
    pub next_state_key: Option<String>,
    pub terminal: bool,
}

/// An attempted action as read back from the log, before rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state_key: String,
    pub next_state_key: Option<String>,
    pub x: Vec<f64>,
    pub accepted: bool,
    pub depth: u32,
    pub n_before: Option<u32>,
    pub n_after: Option<u32>,
}

/// Subgoal reduction for accepted steps, zero for rejected ones, plus the
/// completion bonus on the final accepted step of a solved run.
pub fn build_rewards(episode: &[StepOutcome], solved: bool) -> Vec<Transition> {
    let last_accepted = episode.iter().rposition(|s| s.accepted);
    episode
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let terminal = solved && Some(i) == last_accepted;
            let mut reward = match (s.accepted, s.n_before, s.n_after) {
                (true, Some(b), Some(a)) => b as f64 - a as f64,
                _ => 0.0,
            };
            if terminal {
                reward += COMPLETION_BONUS;
            }
            Transition {
                state_key: s.state_key.clone(),
                x: s.x.clone(),
                accepted: s.accepted,
                reward,
                depth: s.depth,
                n_before: s.n_before,
                next_min_subgoals: s.n_after,
                next_state_key: s.next_state_key.clone(),
                terminal,
            }
        })
        .collect()
}

/// `exp(clamp(A/β, ±5))` with `A` the reward minus its `(depth, n_before)`
/// bucket mean.
pub fn awr_weights(transitions: &[Transition], beta: f64) -> Vec<f64> {
    let mut buckets: HashMap<(u32, Option<u32>), (f64, usize)> = HashMap::new();
    for t in transitions {
        let e = buckets.entry((t.depth, t.n_before)).or_default();
        e.0 += t.reward;
        e.1 += 1;
    }
    transitions
        .iter()
        .map(|t| {
            let (sum, n) = buckets[&(t.depth, t.n_before)];
            let adv = t.reward - sum / n as f64;
            (adv / beta).clamp(-ADVANTAGE_CLAMP, ADVANTAGE_CLAMP).exp()
        })
        .collect()
}

/// Advantage-weighted logistic regression on acceptance labels.
pub fn train_awr(transitions: &[Transition], beta: f64, cfg: &TrainConfig) -> TrainReport {
    assert!(beta > 0.0, "beta must be positive");
    let xs: Vec<Vec<f64>> = transitions.iter().map(|t| t.x.clone()).collect();
    let ys: Vec<f64> = transitions.iter().map(|t| if t.accepted { 1.0 } else { 0.0 }).collect();
    let w = awr_weights(transitions, beta);
    train_with_weights(&xs, &ys, Some(&w), cfg, "awr")
}

/// Ridge least squares `min |Aθ − y|² + ridge·|w|²` with an unregularised
/// bias column.
pub fn least_squares(xs: &[Vec<f64>], ys: &[f64], ridge: f64) -> (Vec<f64>, f64) {
    let n = xs.len();
    let d = xs.first().map_or(DIM, Vec::len);
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { xs[i][j] } else { 1.0 });
    let y = DVector::from_column_slice(ys);
    let mut ata = a.transpose() * &a;
    for j in 0..d {
        ata[(j, j)] += ridge;
    }
    let aty = a.transpose() * y;
    let theta = match ata.clone().cholesky() {
        Some(ch) => ch.solve(&aty),
        None => ata.svd(true, true).solve(&aty, 1e-12).expect("svd solve"),
    };
    (theta.as_slice()[..d].to_vec(), theta[d])
}

/// Linear fitted Q iteration. Targets are `r + γ·max Q` over the actions
/// logged from the next state (zero at terminals and for unseen states).
pub fn train_fitted_q(transitions: &[Transition], gamma: f64, iterations: usize, ridge: f64) -> RerankModel {
    assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
    let xs: Vec<Vec<f64>> = transitions.iter().map(|t| t.x.clone()).collect();
    let mut by_state: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in transitions.iter().enumerate() {
        by_state.entry(t.state_key.as_str()).or_default().push(i);
    }
    let mut model = RerankModel::zeros(ModelKind::LinearQ);
    for _ in 0..iterations.max(1) {
        let q: Vec<f64> = xs.iter().map(|x| model.raw(x).unwrap_or(0.0)).collect();
        let targets: Vec<f64> = transitions
            .iter()
            .map(|t| {
                let next = if t.terminal {
                    0.0
                } else {
                    t.next_state_key
                        .as_deref()
                        .and_then(|k| by_state.get(k))
                        .map(|idx| idx.iter().map(|&j| q[j]).fold(f64::NEG_INFINITY, f64::max))
                        .filter(|v| v.is_finite())
                        .unwrap_or(0.0)
                };
                t.reward + gamma * next
            })
            .collect();
        let (w, b) = least_squares(&xs, &targets, ridge);
        model.weights = w;
        model.bias = b;
    }
    model.metadata.insert("trainer".into(), "fitted_q".into());
    model.metadata.insert("gamma".into(), gamma.to_string());
    model
}
