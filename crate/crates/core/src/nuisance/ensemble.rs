//! Cross-validated stacking of the base learners.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learners::{Design, FeatureMap, Fitted, LearnerKind, YFeature};
use super::{nnls, OutcomeRegression, MU_CLIP};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub learners: Vec<LearnerKind>,
    pub folds: usize,
    pub y_feature: YFeature,
    /// Also train on nonrespondents, coded as `(c0, Delta = 0)`.
    pub include_nonrespondents: bool,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            learners: LearnerKind::default_library(),
            folds: 10,
            y_feature: YFeature::default(),
            include_nonrespondents: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub name: String,
    pub weight: f64,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuSummary {
    pub learners: Vec<LearnerSummary>,
    pub ensemble_cv_mse: f64,
    pub n_train: usize,
    pub folds: usize,
    pub y_feature: YFeature,
    /// Training outcomes were constant; a constant fit was returned.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct EnsembleRegression {
    features: FeatureMap,
    fits: Vec<(f64, Fitted)>,
    summary: MuSummary,
}

impl EnsembleRegression {
    pub fn summary(&self) -> &MuSummary {
        &self.summary
    }

    pub fn weights(&self) -> Vec<f64> {
        self.summary.learners.iter().map(|l| l.weight).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.summary.degenerate
    }
}

impl OutcomeRegression for EnsembleRegression {
    fn predict(&self, y: f64, w: &[f64]) -> f64 {
        let x = self.features.features(y, w);
        let p: f64 = self
            .fits
            .iter()
            .filter(|(wt, _)| *wt > 0.0)
            .map(|(wt, f)| wt * f.predict(&x))
            .sum();
        p.clamp(MU_CLIP, 1.0 - MU_CLIP)
    }
}

/// Fold labels with each outcome class dealt round-robin after shuffling.
pub(crate) fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[rng::tag::FOLDS]);
    let mut out = vec![0; labels.len()];
    let mut offset = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            out[i] = (offset + k) % folds;
        }
        offset += idx.len();
    }
    out
}

fn mse(pred: impl Iterator<Item = f64>, y: &[f64]) -> f64 {
    pred.zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Stacked outcome regression. By default only respondents are used even if
/// `d` contains nonrespondents.
pub fn fit_mu(d: &Dataset, spec: &EnsembleSpec, seed: u64) -> Result<EnsembleRegression> {
    if spec.learners.is_empty() {
        return Err(invalid("ensemble needs at least one learner"));
    }
    if spec.folds < 2 {
        return Err(invalid("ensemble needs at least 2 folds"));
    }
    let obs = d.observations();
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| spec.include_nonrespondents || d.is_respondent(&obs[i]))
        .collect();
    let n = rows.len();
    if n < 2 * spec.folds {
        return Err(invalid(format!(
            "outcome regression needs at least {} observations, found {n}",
            2 * spec.folds
        )));
    }
    let ys: Vec<f64> = rows.iter().map(|&i| obs[i].y).collect();
    let features = FeatureMap::fit(spec.y_feature, &ys)?;
    let x = Design::from_rows(
        &rows
            .iter()
            .map(|&i| features.features(obs[i].y, &obs[i].w))
            .collect::<Vec<_>>(),
    );
    let target: Vec<f64> = rows.iter().map(|&i| obs[i].delta_f64()).collect();
    let mean = target.iter().sum::<f64>() / n as f64;

    if target.iter().all(|&t| t == target[0]) {
        let c = target[0].clamp(MU_CLIP, 1.0 - MU_CLIP);
        let cv = mse(std::iter::repeat(c), &target);
        return Ok(EnsembleRegression {
            features,
            fits: vec![(1.0, Fitted::Constant(c))],
            summary: MuSummary {
                learners: vec![LearnerSummary {
                    name: "constant".into(),
                    weight: 1.0,
                    cv_mse: cv,
                }],
                ensemble_cv_mse: cv,
                n_train: n,
                folds: spec.folds,
                y_feature: spec.y_feature,
                degenerate: true,
            },
        });
    }

    let labels: Vec<bool> = target.iter().map(|&t| t > 0.5).collect();
    let fold_of = stratified_folds(&labels, spec.folds, seed);
    let n_learners = spec.learners.len();

    // out-of-fold predictions, one task per (fold, learner)
    let tasks: Vec<(usize, usize)> = (0..spec.folds)
        .flat_map(|f| (0..n_learners).map(move |l| (f, l)))
        .collect();
    let oof_parts: Vec<Result<Vec<(usize, f64)>>> = tasks
        .par_iter()
        .map(|&(f, l)| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            if test.is_empty() {
                return Ok(Vec::new());
            }
            let y_train: Vec<f64> = train.iter().map(|&i| target[i]).collect();
            let fit = spec.learners[l].fit(&x.select(&train), &y_train)?;
            Ok(test.iter().map(|&i| (i, fit.predict(x.row(i)))).collect())
        })
        .collect();
    let mut oof = DMatrix::<f64>::zeros(n, n_learners);
    for (&(_, l), part) in tasks.iter().zip(oof_parts) {
        for (i, p) in part? {
            oof[(i, l)] = p;
        }
    }

    let cv_mse: Vec<f64> = (0..n_learners)
        .map(|l| mse(oof.column(l).iter().copied(), &target))
        .collect();
    let raw = nnls(&oof, &DVector::from_column_slice(&target));
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        let best = (0..n_learners)
            .min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b]))
            .unwrap_or(0);
        (0..n_learners).map(|l| if l == best { 1.0 } else { 0.0 }).collect()
    };
    let ensemble_cv_mse = mse(
        (0..n).map(|i| {
            (0..n_learners)
                .map(|l| weights[l] * oof[(i, l)])
                .sum::<f64>()
                .clamp(MU_CLIP, 1.0 - MU_CLIP)
        }),
        &target,
    );

    let fits: Vec<Result<(f64, Fitted)>> = (0..n_learners)
        .into_par_iter()
        .map(|l| {
            if weights[l] > 0.0 {
                Ok((weights[l], spec.learners[l].fit(&x, &target)?))
            } else {
                Ok((0.0, Fitted::Constant(mean)))
            }
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(EnsembleRegression {
        features,
        fits,
        summary: MuSummary {
            learners: spec
                .learners
                .iter()
                .zip(&weights)
                .zip(&cv_mse)
                .map(|((k, &weight), &cv_mse)| LearnerSummary {
                    name: k.name(),
                    weight,
                    cv_mse,
                })
                .collect(),
            ensemble_cv_mse,
            n_train: n,
            folds: spec.folds,
            y_feature: spec.y_feature,
            degenerate: false,
        },
    })
}
