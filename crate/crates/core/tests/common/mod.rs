//! Independent reference implementations and generators shared by the
//! integration tests. Written against the definitions, not the library code.

#![allow(dead_code)]

use flsim::nn::init_params;
use flsim::rng::{stream, Purpose};
use flsim::{Gradient, LayeredVector, Matrix, ModelSpec, Normalization};
use rand::Rng;

pub fn lv(groups: &[Vec<f64>]) -> Gradient {
    LayeredVector::from_flat_groups(groups.to_vec()).unwrap()
}

pub fn flat(v: &Gradient) -> Vec<f64> {
    v.to_flat()
}

/// `n` random gradients of dimension `d` in one group. Half the time the
/// entries are small integers so distances are exact and ties are common.
pub fn random_points<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    let integer = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if integer {
                        rng.random_range(-3i32..=3) as f64
                    } else {
                        rng.random_range(-5.0..5.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Krum scores by enumerating every pair.
pub fn brute_krum_scores(points: &[Vec<f64>], f: usize) -> Vec<f64> {
    let n = points.len();
    let k = n - f - 2;
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_dist(&points[i], &points[j]))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[..k].iter().sum()
        })
        .collect()
}

/// Indices sorted by (score, index).
pub fn brute_ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    idx
}

/// Mean of the chosen rows, summed in index order and scaled by `1/k` so the
/// rounding matches a plain mean of the same rows.
pub fn mean_rows(points: &[Vec<f64>], mut chosen: Vec<usize>) -> Vec<f64> {
    chosen.sort_unstable();
    let mut acc = points[chosen[0]].clone();
    for &i in &chosen[1..] {
        for (a, v) in acc.iter_mut().zip(&points[i]) {
            *a += v;
        }
    }
    let inv = 1.0 / chosen.len() as f64;
    acc.iter().map(|a| a * inv).collect()
}

/// Per-coordinate median by full sort.
pub fn sort_median(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    (0..points[0].len())
        .map(|c| {
            let mut col: Vec<f64> = points.iter().map(|p| p[c]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if n % 2 == 1 {
                col[n / 2]
            } else {
                (col[n / 2 - 1] + col[n / 2]) / 2.0
            }
        })
        .collect()
}

/// Straight-line LEGATO over a full history of rounds. `history[t][p][l]` is
/// worker `p`'s layer-`l` gradient in round `t`; the last round is current.
/// Returns the aggregate as `[layer][coord]`.
pub fn legato_transcription(
    history: &[Vec<Vec<Vec<f64>>>],
    m: usize,
    scheme: Normalization,
) -> Vec<Vec<f64>> {
    let start = history.len().saturating_sub(m);
    let glog = &history[start..];
    let current = glog.last().unwrap();
    let n = current.len();
    let layers = current[0].len();

    let mean_over_workers = |grads: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<f64>> {
        (0..layers)
            .map(|l| {
                (0..grads[0][l].len())
                    .map(|c| grads.iter().map(|g| g[l][c]).sum::<f64>() / n as f64)
                    .collect()
            })
            .collect()
    };
    if glog.len() < 2 {
        return mean_over_workers(current);
    }

    // P[i][l] for every logged round i.
    let mut p = Vec::new();
    for round in glog {
        let mut x_sum = 0.0;
        for g in round {
            let sq: f64 = g.iter().flatten().map(|v| v * v).sum();
            x_sum += sq.sqrt();
        }
        let mut row = Vec::new();
        for l in 0..layers {
            let sq: f64 = round.iter().flat_map(|g| g[l].iter()).map(|v| v * v).sum();
            row.push(if x_sum == 0.0 { 0.0 } else { sq.sqrt() / x_sum });
        }
        p.push(row);
    }

    let rounds = glog.len() as f64;
    let mut raw = Vec::new();
    for l in 0..layers {
        let mean: f64 = p.iter().map(|r| r[l]).sum::<f64>() / rounds;
        let var: f64 = p.iter().map(|r| (r[l] - mean) * (r[l] - mean)).sum::<f64>() / rounds;
        raw.push(1.0 / var.sqrt().max(1e-12));
    }
    let norm = match scheme {
        Normalization::Sum => raw.iter().sum::<f64>(),
        Normalization::Max => raw.iter().cloned().fold(0.0, f64::max),
    };
    let w: Vec<f64> = raw.iter().map(|r| (r / norm).min(1.0)).collect();

    let older = &glog[..glog.len() - 1];
    let mut reweighed = Vec::new();
    for worker in 0..n {
        let mut g = Vec::new();
        for l in 0..layers {
            let mut layer = Vec::new();
            for c in 0..current[worker][l].len() {
                let past: f64 =
                    older.iter().map(|r| r[worker][l][c]).sum::<f64>() / older.len() as f64;
                layer.push(w[l] * current[worker][l][c] + (1.0 - w[l]) * past);
            }
            g.push(layer);
        }
        reweighed.push(g);
    }
    mean_over_workers(&reweighed)
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= tol * (1.0 + y.abs()),
            "coordinate {i}: {x} vs {y} (tol {tol})"
        );
    }
}

/// Smallest |pre-activation| over hidden units, from an independent forward
/// pass. Weights are stored `[fan_in, fan_out]` row-major.
pub fn min_abs_preactivation(spec: &ModelSpec, params: &Gradient, x: &Matrix<f64>) -> f64 {
    let mut act: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
    let mut min = f64::INFINITY;
    let hidden = spec.layer_widths.len() - 2;
    for k in 0..hidden {
        let (fan_in, fan_out) = (spec.layer_widths[k], spec.layer_widths[k + 1]);
        let w = params.group(2 * k).values();
        let b = params.group(2 * k + 1).values();
        act = act
            .iter()
            .map(|a| {
                (0..fan_out)
                    .map(|j| {
                        let z = b[j] + (0..fan_in).map(|i| a[i] * w[i * fan_out + j]).sum::<f64>();
                        min = min.min(z.abs());
                        z.max(0.0)
                    })
                    .collect()
            })
            .collect();
    }
    min
}

#[derive(Debug, Clone)]
pub struct GradCase {
    pub spec: ModelSpec,
    pub seed: u64,
    pub batch: usize,
}

pub fn materialize(c: &GradCase) -> (Gradient, Matrix<f64>, Vec<usize>) {
    let mut rng = stream(c.seed, Purpose::Init, 0, 0);
    // Glorot weights scaled up, random biases, so no layer sits near zero.
    let mut params: Gradient = init_params(&c.spec, &mut rng).scale(2.0);
    for g in params.groups_mut() {
        if g.name().ends_with("biases") {
            for v in g.values_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let dims = c.spec.input_width();
    let rows: Vec<Vec<f64>> = (0..c.batch)
        .map(|_| (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..c.batch).map(|_| rng.random_range(0..c.spec.num_classes())).collect();
    (params, Matrix::from_rows(&rows).unwrap(), labels)
}
