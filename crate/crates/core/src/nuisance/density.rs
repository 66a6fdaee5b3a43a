//! Conditional density of `Y` given `W`: a histogram over quantile bins whose
//! bin probabilities follow a multinomial logistic model in `w`. Nonrespondents
//! (all at `c0`) get their own atom category.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DensityRatio, UniqueRows};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub bin_candidates: Vec<usize>,
    pub folds: usize,
    pub g_floor: f64,
    /// Add pairwise products of covariates to the multinomial model.
    pub pairwise: bool,
    pub ridge: f64,
    /// When false, bin probabilities ignore `w` (marginal histogram, `g = 1`).
    pub covariates: bool,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self {
            bin_candidates: vec![1, 2, 4, 6, 8, 12, 16, 20],
            folds: 5,
            g_floor: 0.05,
            pairwise: false,
            ridge: 1e-3,
            covariates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub n_bins: usize,
    pub edges: Vec<f64>,
    /// `(candidate bins, bins after merging, CV log-likelihood)`.
    pub cv: Vec<(usize, usize, f64)>,
    /// Requested minus realized bins for the selected candidate.
    pub merged_bins: usize,
    pub atom_mass: f64,
    pub g_floor: f64,
    /// Fraction of fitting-sample points where `g` was raised to the floor.
    pub truncated_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct HistogramDensity {
    edges: Vec<f64>,
    atom: Option<f64>,
    model: MultinomialLogit,
    pbar: Vec<f64>,
    g_floor: f64,
    summary: DensitySummary,
}

impl HistogramDensity {
    pub fn summary(&self) -> &DensitySummary {
        &self.summary
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Histogram bin of `y`; the atom, when present, is category `n_bins`.
    fn category(&self, y: f64) -> usize {
        if let Some(c0) = self.atom {
            if y >= c0 {
                return self.edges.len() - 1;
            }
        }
        bin_of(&self.edges, y)
    }

    /// `pi(y | w)`, the conditional density at a respondent time.
    pub fn conditional(&self, y: f64, w: &[f64]) -> f64 {
        let k = self.category(y);
        if k + 1 >= self.edges.len() {
            return 0.0;
        }
        self.model.probs(w)[k] / (self.edges[k + 1] - self.edges[k])
    }

    fn raw_g(&self, y: f64, w: &[f64]) -> f64 {
        let k = self.category(y);
        self.model.probs(w)[k] / self.pbar[k]
    }
}

impl DensityRatio for HistogramDensity {
    fn predict_g(&self, y: f64, w: &[f64]) -> f64 {
        self.raw_g(y, w).max(self.g_floor)
    }

    fn predict_f(&self, y: f64) -> f64 {
        let k_max = self.edges.len() - 1;
        if self.atom.is_some_and(|c0| y >= c0) || y < self.edges[0] || y > self.edges[k_max] {
            return 0.0;
        }
        let k = bin_of(&self.edges, y);
        self.pbar[k] / (self.edges[k + 1] - self.edges[k])
    }
}

/// Bin `k` is `(e_k, e_{k+1}]`, the first bin also closed on the left.
/// Values outside the edges go to the nearest bin.
fn bin_of(edges: &[f64], y: f64) -> usize {
    let k = edges.partition_point(|&e| e < y);
    k.saturating_sub(1).min(edges.len() - 2)
}

/// Edges for `bins` quantile bins of the respondent times, placed midway
/// between adjacent distinct values. Returns the edges and the number of
/// bins lost to duplicate cut points.
fn quantile_edges(sorted: &[f64], bins: usize, b0: f64, c0: f64) -> (Vec<f64>, usize) {
    let mut uniq: Vec<f64> = sorted.to_vec();
    uniq.dedup();
    let n = sorted.len();
    let first = uniq[0];
    let last = *uniq.last().unwrap();
    let (lo, hi) = if uniq.len() == 1 {
        let half = 0.5 * (c0 - b0).min(1.0).max(f64::EPSILON);
        ((first - half).max(b0), (last + half).min(c0))
    } else {
        (
            (first - 0.5 * (uniq[1] - uniq[0])).max(b0),
            (last + 0.5 * (last - uniq[uniq.len() - 2])).min(c0),
        )
    };
    let mut edges = vec![lo];
    for j in 1..bins {
        let rank = ((j * n) as f64 / bins as f64).ceil() as usize;
        let q = sorted[rank.clamp(1, n) - 1];
        let pos = uniq.partition_point(|&u| u <= q);
        if pos < uniq.len() {
            let cut = 0.5 * (q + uniq[pos]);
            if cut > *edges.last().unwrap() {
                edges.push(cut);
            }
        }
    }
    if hi > *edges.last().unwrap() {
        edges.push(hi);
    } else {
        // degenerate range; keep a positive width
        let l = *edges.last().unwrap();
        edges.push(l + f64::EPSILON.max(l.abs() * 1e-12));
    }
    let realized = edges.len() - 1;
    (edges, bins - realized.min(bins))
}

#[derive(Debug, Clone)]
struct MultinomialLogit {
    categories: usize,
    mean: Vec<f64>,
    sd: Vec<f64>,
    keep: Vec<usize>,
    pairwise: bool,
    /// Row-major `(categories - 1) x d`, category 0 is the reference.
    coef: Vec<f64>,
    d: usize,
}

impl MultinomialLogit {
    fn features(&self, w: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .keep
            .iter()
            .enumerate()
            .map(|(k, &j)| (w[j] - self.mean[k]) / self.sd[k])
            .collect();
        let mut x = Vec::with_capacity(self.d);
        x.push(1.0);
        x.extend_from_slice(&z);
        if self.pairwise {
            for i in 0..z.len() {
                for j in i + 1..z.len() {
                    x.push(z[i] * z[j]);
                }
            }
        }
        x
    }

    fn probs_from_features(&self, x: &[f64], coef: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.categories];
        for k in 1..self.categories {
            eta[k] = coef[(k - 1) * self.d..k * self.d].iter().zip(x).map(|(a, b)| a * b).sum();
        }
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for e in eta.iter_mut() {
            *e = (*e - m).exp();
            s += *e;
        }
        eta.iter_mut().for_each(|e| *e /= s);
        eta
    }

    fn probs(&self, w: &[f64]) -> Vec<f64> {
        self.probs_from_features(&self.features(w), &self.coef)
    }

    /// Penalized maximum likelihood from per-row category counts.
    fn fit(rows: &[Vec<f64>], counts: &[Vec<f64>], categories: usize, covariates: bool, pairwise: bool, ridge: f64) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let total: Vec<f64> = counts.iter().map(|c| c.iter().sum()).collect();
        let n: f64 = total.iter().sum();
        let mut keep = Vec::new();
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        if covariates {
            for j in 0..p {
                let m = rows.iter().zip(&total).map(|(r, t)| t * r[j]).sum::<f64>() / n;
                let v = rows.iter().zip(&total).map(|(r, t)| t * (r[j] - m).powi(2)).sum::<f64>() / n;
                if v > 1e-14 * (1.0 + m * m) {
                    keep.push(j);
                    mean.push(m);
                    sd.push(v.sqrt());
                }
            }
        }
        let q = keep.len();
        let d = 1 + q + if pairwise { q * q.saturating_sub(1) / 2 } else { 0 };
        let mut model = MultinomialLogit {
            categories,
            mean,
            sd,
            keep,
            pairwise,
            coef: vec![0.0; (categories - 1) * d],
            d,
        };
        if categories == 1 {
            return model;
        }
        let mut cat_tot = vec![0.0; categories];
        for c in counts {
            for (k, v) in c.iter().enumerate() {
                cat_tot[k] += v;
            }
        }
        for k in 1..categories {
            model.coef[(k - 1) * d] = ((cat_tot[k] + 0.5) / (cat_tot[0] + 0.5)).ln();
        }
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| model.features(r)).collect();
        let dim = model.coef.len();
        let penalty = |a: usize| if a % d == 0 { 1e-6 } else { ridge };
        let objective = |coef: &[f64]| -> f64 {
            let mut ll = 0.0;
            for (x, c) in xs.iter().zip(counts) {
                let pr = model.probs_from_features(x, coef);
                for (k, &nk) in c.iter().enumerate() {
                    if nk > 0.0 {
                        ll += nk * pr[k].max(1e-300).ln();
                    }
                }
            }
            ll - 0.5 * coef.iter().enumerate().map(|(a, b)| penalty(a) * b * b).sum::<f64>()
        };
        let mut coef = model.coef.clone();
        let mut ll = objective(&coef);
        for _ in 0..100 {
            let mut grad = DVector::<f64>::zeros(dim);
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for ((x, c), &nr) in xs.iter().zip(counts).zip(&total) {
                if nr == 0.0 {
                    continue;
                }
                let pr = model.probs_from_features(x, &coef);
                for k in 1..categories {
                    let r = c[k] - nr * pr[k];
                    for a in 0..d {
                        grad[(k - 1) * d + a] += r * x[a];
                    }
                    for l in 1..=k {
                        let wkl = nr * (if k == l { pr[k] } else { 0.0 } - pr[k] * pr[l]);
                        for a in 0..d {
                            let wa = wkl * x[a];
                            for b in 0..d {
                                hess[((k - 1) * d + a, (l - 1) * d + b)] += wa * x[b];
                            }
                        }
                    }
                }
            }
            for i in 0..dim {
                for j in 0..i {
                    hess[(j, i)] = hess[(i, j)];
                }
                grad[i] -= penalty(i) * coef[i];
                hess[(i, i)] += penalty(i);
            }
            let Some(chol) = hess.cholesky() else { break };
            let step = chol.solve(&grad);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand: Vec<f64> = coef.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                let cll = objective(&cand);
                if cll >= ll - 1e-12 * ll.abs() {
                    coef = cand;
                    let gain = cll - ll;
                    ll = cll;
                    accepted = gain > 1e-10 * (1.0 + ll.abs());
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        model.coef = coef;
        model
    }
}

struct Prepared {
    ws: UniqueRows,
    /// Category of each observation (atom is the last category).
    labels: Vec<usize>,
    categories: usize,
    /// Sample fraction of each category.
    mass: Vec<f64>,
    edges: Vec<f64>,
    merged: usize,
}

fn prepare(d: &Dataset, bins: usize, has_atom: bool) -> Prepared {
    let obs = d.observations();
    let mut resp: Vec<f64> = obs.iter().filter(|o| d.is_respondent(o)).map(|o| o.y).collect();
    resp.sort_by(f64::total_cmp);
    let (edges, merged) = quantile_edges(&resp, bins, d.b0(), d.c0());
    let k = edges.len() - 1;
    let categories = k + usize::from(has_atom);
    let labels: Vec<usize> = obs
        .iter()
        .map(|o| if d.is_respondent(o) { bin_of(&edges, o.y) } else { k })
        .collect();
    let mut mass = vec![0.0; categories];
    for &l in &labels {
        mass[l] += 1.0 / obs.len() as f64;
    }
    Prepared {
        ws: UniqueRows::new(obs.iter().map(|o| o.w.as_slice())),
        labels,
        categories,
        mass,
        edges,
        merged,
    }
}

fn counts_for(p: &Prepared, include: impl Fn(usize) -> bool) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; p.categories]; p.ws.rows.len()];
    for (i, &l) in p.labels.iter().enumerate() {
        if include(i) {
            counts[p.ws.index[i]][l] += 1.0;
        }
    }
    counts
}

/// CV log-likelihood on the rank scale: each respondent contributes
/// `log(P(bin | w) / mass(bin))`, so the criterion is unchanged by strictly
/// increasing transformations of time.
fn cv_loglik(p: &Prepared, fold_of: &[usize], spec: &DensitySpec, has_atom: bool) -> f64 {
    let k_resp = p.edges.len() - 1;
    (0..spec.folds)
        .map(|f| {
            let counts = counts_for(p, |i| fold_of[i] != f);
            let model = MultinomialLogit::fit(&p.ws.rows, &counts, p.categories, spec.covariates, spec.pairwise, spec.ridge);
            let mut cache: Vec<Option<Vec<f64>>> = vec![None; p.ws.rows.len()];
            let mut ll = 0.0;
            for (i, &l) in p.labels.iter().enumerate() {
                if fold_of[i] != f {
                    continue;
                }
                let r = p.ws.index[i];
                let pr = cache[r].get_or_insert_with(|| model.probs(&p.ws.rows[r]));
                let prob = pr[l].max(1e-300);
                ll += if has_atom && l == k_resp { prob.ln() } else { (prob / p.mass[l]).ln() };
            }
            ll
        })
        .sum()
}

/// Fit the conditional histogram density on every row of `d`. Nonrespondents,
/// if any, form an atom at `c0`.
pub fn fit_density(d: &Dataset, spec: &DensitySpec, seed: u64) -> Result<HistogramDensity> {
    if spec.bin_candidates.is_empty() || spec.bin_candidates.contains(&0) {
        return Err(invalid("density: bin candidates must be positive"));
    }
    if spec.folds < 2 {
        return Err(invalid("density: need at least 2 folds"));
    }
    if !(spec.g_floor > 0.0) {
        return Err(invalid("density: g_floor must be positive"));
    }
    let n = d.len();
    if n < 2 * spec.folds {
        return Err(invalid(format!("density: need at least {} observations, found {n}", 2 * spec.folds)));
    }
    let n_resp = d.n_respondents();
    if n_resp == 0 {
        return Err(Error::InsufficientSupport { found: 0 });
    }
    let has_atom = n_resp < n;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag::DENSITY]));
    let mut fold_of = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold_of[i] = k % spec.folds;
    }

    let mut candidates = spec.bin_candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let cv: Vec<(usize, usize, f64)> = candidates
        .par_iter()
        .map(|&bins| {
            let p = prepare(d, bins, has_atom);
            (bins, p.edges.len() - 1, cv_loglik(&p, &fold_of, spec, has_atom))
        })
        .collect();
    let mut best = 0;
    for (i, c) in cv.iter().enumerate() {
        if c.2 > cv[best].2 + 1e-9 * cv[best].2.abs() {
            best = i;
        }
    }
    let p = prepare(d, cv[best].0, has_atom);
    let counts = counts_for(&p, |_| true);
    let model = MultinomialLogit::fit(&p.ws.rows, &counts, p.categories, spec.covariates, spec.pairwise, spec.ridge);
    let row_probs: Vec<Vec<f64>> = p.ws.rows.iter().map(|r| model.probs(r)).collect();
    let mut pbar = vec![0.0; p.categories];
    for (pr, &c) in row_probs.iter().zip(&p.ws.counts) {
        for (k, v) in pr.iter().enumerate() {
            pbar[k] += c as f64 * v / n as f64;
        }
    }
    let truncated = p
        .labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| row_probs[p.ws.index[i]][l] / pbar[l] < spec.g_floor)
        .count();
    let atom = has_atom.then(|| d.c0());
    let summary = DensitySummary {
        n_bins: p.edges.len() - 1,
        edges: p.edges.clone(),
        cv,
        merged_bins: p.merged,
        atom_mass: if has_atom { *p.mass.last().unwrap() } else { 0.0 },
        g_floor: spec.g_floor,
        truncated_fraction: truncated as f64 / n as f64,
    };
    Ok(HistogramDensity {
        edges: p.edges,
        atom,
        model,
        pbar,
        g_floor: spec.g_floor,
        summary,
    })
}
