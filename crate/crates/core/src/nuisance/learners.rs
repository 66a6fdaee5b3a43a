//! Base learners for the outcome-regression ensemble.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EmpiricalCdf;
use crate::error::{invalid, Result};

/// How follow-up time enters the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum YFeature {
    Raw,
    #[default]
    Log,
    /// Complementary log-log of the empirical rank. Invariant to strictly
    /// increasing transformations of time.
    Rank,
}

#[derive(Debug, Clone)]
pub struct FeatureMap {
    y_feature: YFeature,
    ranks: Option<EmpiricalCdf>,
}

impl FeatureMap {
    pub fn fit(y_feature: YFeature, ys: &[f64]) -> Result<Self> {
        let ranks = match y_feature {
            YFeature::Rank => Some(EmpiricalCdf::new(ys)?),
            _ => None,
        };
        Ok(Self { y_feature, ranks })
    }

    pub fn y_feature(&self) -> YFeature {
        self.y_feature
    }

    fn time(&self, y: f64) -> f64 {
        match self.y_feature {
            YFeature::Raw => y,
            YFeature::Log => y.max(f64::MIN_POSITIVE).ln(),
            YFeature::Rank => {
                let ranks = self.ranks.as_ref().expect("rank feature map without ranks");
                let half = 0.5 / ranks.n() as f64;
                let u = ranks.eval(y).clamp(half, 1.0 - half);
                (-(1.0 - u).ln()).ln()
            }
        }
    }

    pub fn features_into(&self, y: f64, w: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(self.time(y));
        out.extend_from_slice(w);
    }

    pub fn features(&self, y: f64, w: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(w.len() + 1);
        self.features_into(y, w, &mut v);
        v
    }
}

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub data: Vec<f64>,
    pub ncols: usize,
}

impl Design {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        Self {
            data: rows.iter().flatten().copied().collect(),
            ncols,
        }
    }

    pub fn nrows(&self) -> usize {
        if self.ncols == 0 {
            0
        } else {
            self.data.len() / self.ncols
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn select(&self, idx: &[usize]) -> Design {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Design {
            data,
            ncols: self.ncols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    MarginalMean,
    /// Main-terms logistic regression.
    Logistic,
    /// Logistic regression with all pairwise products (and squares of
    /// non-binary features).
    LogisticPairwise,
    /// `k` defaults to `ceil(sqrt(n))`.
    Knn { k: Option<usize> },
    BoostedTrees {
        rounds: usize,
        learning_rate: f64,
        depth: usize,
        min_leaf: usize,
    },
}

impl LearnerKind {
    pub fn default_library() -> Vec<LearnerKind> {
        vec![
            LearnerKind::MarginalMean,
            LearnerKind::Logistic,
            LearnerKind::LogisticPairwise,
            LearnerKind::Knn { k: None },
            LearnerKind::BoostedTrees {
                rounds: 100,
                learning_rate: 0.1,
                depth: 2,
                min_leaf: 10,
            },
        ]
    }

    pub fn name(&self) -> String {
        match self {
            LearnerKind::MarginalMean => "marginal_mean".into(),
            LearnerKind::Logistic => "logistic".into(),
            LearnerKind::LogisticPairwise => "logistic_pairwise".into(),
            LearnerKind::Knn { k: Some(k) } => format!("knn_{k}"),
            LearnerKind::Knn { k: None } => "knn".into(),
            LearnerKind::BoostedTrees { rounds, depth, .. } => format!("boosted_d{depth}_m{rounds}"),
        }
    }

    pub(crate) fn fit(&self, x: &Design, y: &[f64]) -> Result<Fitted> {
        if x.nrows() != y.len() || y.is_empty() {
            return Err(invalid("learner fit: design and response lengths differ"));
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        Ok(match self {
            LearnerKind::MarginalMean => Fitted::Constant(mean),
            LearnerKind::Logistic => Fitted::Logistic(LogisticModel::fit(x, y, false)),
            LearnerKind::LogisticPairwise => Fitted::Logistic(LogisticModel::fit(x, y, true)),
            LearnerKind::Knn { k } => {
                let k = k.unwrap_or_else(|| (y.len() as f64).sqrt().ceil() as usize);
                Fitted::Knn(KnnModel::fit(x, y, k.clamp(1, y.len())))
            }
            LearnerKind::BoostedTrees {
                rounds,
                learning_rate,
                depth,
                min_leaf,
            } => Fitted::Boosted(BoostedModel::fit(x, y, *rounds, *learning_rate, *depth, *min_leaf)),
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Fitted {
    Constant(f64),
    Logistic(LogisticModel),
    Knn(KnnModel),
    Boosted(BoostedModel),
}

impl Fitted {
    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Constant(c) => *c,
            Fitted::Logistic(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
            Fitted::Boosted(m) => m.predict(x),
        }
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Column centring/scaling; constant columns are dropped.
#[derive(Debug, Clone)]
struct Standardizer {
    keep: Vec<usize>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    binary: Vec<bool>,
}

impl Standardizer {
    fn fit(x: &Design) -> Self {
        let n = x.nrows() as f64;
        let mut s = Standardizer {
            keep: Vec::new(),
            mean: Vec::new(),
            sd: Vec::new(),
            binary: Vec::new(),
        };
        for j in 0..x.ncols {
            let col = (0..x.nrows()).map(|i| x.row(i)[j]);
            let m = col.clone().sum::<f64>() / n;
            let v = col.clone().map(|c| (c - m) * (c - m)).sum::<f64>() / n;
            if v > 1e-14 * (1.0 + m * m) {
                let first = x.row(0)[j];
                let other = col.clone().find(|&c| c != first);
                let binary = other.is_some_and(|o| col.clone().all(|c| c == first || c == o));
                s.keep.push(j);
                s.mean.push(m);
                s.sd.push(v.sqrt());
                s.binary.push(binary);
            }
        }
        s
    }

    fn apply(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (k, &j) in self.keep.iter().enumerate() {
            out.push((row[j] - self.mean[k]) / self.sd[k]);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LogisticModel {
    std: Standardizer,
    pairwise: bool,
    coef: Vec<f64>,
}

const LOGISTIC_RIDGE: f64 = 1e-4;

impl LogisticModel {
    fn expand(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.extend_from_slice(z);
        if self.pairwise {
            for i in 0..z.len() {
                for j in i + 1..z.len() {
                    out.push(z[i] * z[j]);
                }
                if !self.std.binary[i] {
                    out.push(z[i] * z[i]);
                }
            }
        }
    }

    fn fit(x: &Design, y: &[f64], pairwise: bool) -> Self {
        let mut model = LogisticModel {
            std: Standardizer::fit(x),
            pairwise,
            coef: Vec::new(),
        };
        let mut z = Vec::new();
        let mut row = Vec::new();
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .map(|i| {
                model.std.apply(x.row(i), &mut z);
                model.expand(&z, &mut row);
                row.clone()
            })
            .collect();
        model.coef = irls(&Design::from_rows(&rows), y, LOGISTIC_RIDGE);
        model
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut z = Vec::new();
        let mut row = Vec::new();
        self.std.apply(x, &mut z);
        self.expand(&z, &mut row);
        sigmoid(row.iter().zip(&self.coef).map(|(a, b)| a * b).sum())
    }
}

fn penalized_loglik(x: &Design, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let eta: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        // log(1 + e^eta) computed stably
        let softplus = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        ll += yi * eta - softplus;
    }
    ll - 0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Ridge-stabilized Newton–Raphson for logistic regression. Column 0 is the
/// unpenalized intercept.
fn irls(x: &Design, y: &[f64], lambda: f64) -> Vec<f64> {
    let d = x.ncols;
    let mean = (y.iter().sum::<f64>() / y.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut beta = vec![0.0; d];
    beta[0] = (mean / (1.0 - mean)).ln();
    let mut ll = penalized_loglik(x, y, &beta, lambda);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for (i, &yi) in y.iter().enumerate() {
            let row = x.row(i);
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            let wgt = (p * (1.0 - p)).max(1e-12);
            for a in 0..d {
                grad[a] += row[a] * (yi - p);
                let wa = wgt * row[a];
                for b in 0..=a {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
            if a > 0 {
                grad[a] -= lambda * beta[a];
                hess[(a, a)] += lambda;
            } else {
                hess[(a, a)] += 1e-10;
            }
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let cll = penalized_loglik(x, y, &cand, lambda);
            if cll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || scale * step.amax() < 1e-9 {
            break;
        }
    }
    beta
}

#[derive(Debug, Clone)]
pub(crate) struct KnnModel {
    std: Standardizer,
    train: Design,
    y: Vec<f64>,
    k: usize,
}

impl KnnModel {
    fn fit(x: &Design, y: &[f64], k: usize) -> Self {
        let std = Standardizer::fit(x);
        let mut z = Vec::new();
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .map(|i| {
                std.apply(x.row(i), &mut z);
                z.clone()
            })
            .collect();
        let mut train = Design::from_rows(&rows);
        if train.ncols == 0 {
            // every feature constant: all points are equidistant
            train = Design {
                data: vec![0.0; y.len()],
                ncols: 1,
            };
        }
        Self {
            std,
            train,
            y: y.to_vec(),
            k,
        }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut z = Vec::new();
        self.std.apply(x, &mut z);
        if z.is_empty() {
            z.push(0.0);
        }
        let mut dist: Vec<(f64, usize)> = (0..self.train.nrows())
            .map(|i| {
                let d: f64 = self
                    .train
                    .row(i)
                    .iter()
                    .zip(&z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        dist[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

/// Newton-boosted regression trees on the logistic deviance.
#[derive(Debug, Clone)]
pub(crate) struct BoostedModel {
    base: f64,
    rate: f64,
    trees: Vec<Tree>,
}

const TREE_LAMBDA: f64 = 1.0;

impl BoostedModel {
    fn fit(x: &Design, y: &[f64], rounds: usize, rate: f64, depth: usize, min_leaf: usize) -> Self {
        let n = y.len();
        let mean = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let base = (mean / (1.0 - mean)).ln();
        let order: Vec<Vec<usize>> = (0..x.ncols)
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x.row(a)[j].total_cmp(&x.row(b)[j]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut score = vec![base; n];
        let mut trees = Vec::with_capacity(rounds);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..rounds {
            for i in 0..n {
                let p = sigmoid(score[i]);
                g[i] = y[i] - p;
                h[i] = (p * (1.0 - p)).max(1e-12);
            }
            let tree = grow_tree(x, &order, &g, &h, depth, min_leaf);
            for (i, s) in score.iter_mut().enumerate() {
                *s += rate * tree.predict(x.row(i));
            }
            trees.push(tree);
        }
        Self { base, rate, trees }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.base + self.rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }
}

#[derive(Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Level-wise growth: each level scans every feature's presorted order once.
fn grow_tree(x: &Design, order: &[Vec<usize>], g: &[f64], h: &[f64], depth: usize, min_leaf: usize) -> Tree {
    let n = g.len();
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut assign = vec![0usize; n];
    let mut frontier = vec![0usize];
    let leaf_value = |gs: f64, hs: f64| gs / (hs + TREE_LAMBDA);
    let score = |gs: f64, hs: f64| gs * gs / (hs + TREE_LAMBDA);

    for level in 0..=depth {
        // node id -> slot in frontier
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot[id] = s;
        }
        let m = frontier.len();
        let mut tot_g = vec![0.0; m];
        let mut tot_h = vec![0.0; m];
        let mut tot_c = vec![0usize; m];
        for i in 0..n {
            let s = slot[assign[i]];
            if s != usize::MAX {
                tot_g[s] += g[i];
                tot_h[s] += h[i];
                tot_c[s] += 1;
            }
        }
        if level == depth {
            for (s, &id) in frontier.iter().enumerate() {
                nodes[id] = Node::Leaf(leaf_value(tot_g[s], tot_h[s]));
            }
            break;
        }
        let mut best: Vec<Option<SplitCandidate>> = vec![None; m];
        for (j, ord) in order.iter().enumerate() {
            let mut lg = vec![0.0; m];
            let mut lh = vec![0.0; m];
            let mut lc = vec![0usize; m];
            let mut last = vec![f64::NAN; m];
            for &i in ord {
                let s = slot[assign[i]];
                if s == usize::MAX {
                    continue;
                }
                let xi = x.row(i)[j];
                if lc[s] >= min_leaf && tot_c[s] - lc[s] >= min_leaf && xi > last[s] {
                    let gain = score(lg[s], lh[s]) + score(tot_g[s] - lg[s], tot_h[s] - lh[s])
                        - score(tot_g[s], tot_h[s]);
                    if gain > 1e-12 && best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(SplitCandidate {
                            gain,
                            feature: j,
                            threshold: 0.5 * (last[s] + xi),
                        });
                    }
                }
                lg[s] += g[i];
                lh[s] += h[i];
                lc[s] += 1;
                last[s] = xi;
            }
        }
        let mut next = Vec::new();
        for (s, &id) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    next.push(left);
                    next.push(left + 1);
                }
                None => nodes[id] = Node::Leaf(leaf_value(tot_g[s], tot_h[s])),
            }
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = nodes[assign[i]]
            {
                assign[i] = if x.row(i)[feature] <= threshold { left } else { right };
            }
        }
        frontier = next;
    }
    Tree { nodes }
}
