use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::affinity::AffinityMatrix;
use super::interp::Interpolator;
use super::quadtree::{QuadTree, Repulsion};
use super::{GradientMethod, Layout, SneConfig};
use crate::error::{Error, Result};

const MIN_GAIN: f64 = 0.01;

/// Gradient of the KL divergence at `points` with `p` scaled by
/// `exaggeration`; returns the (unexaggerated) KL divergence.
fn gradient(
    p: &AffinityMatrix,
    points: &[[f64; 2]],
    exaggeration: f64,
    method: GradientMethod,
    theta: f64,
    interp: &mut Interpolator,
    grad: &mut [[f64; 2]],
) -> f64 {
    let n = points.len();
    let summed = |rep: Vec<Repulsion>| -> (Vec<[f64; 2]>, f64) {
        let z = rep.iter().map(|r| r.z).sum();
        (rep.into_iter().map(|r| r.force).collect(), z)
    };
    let (rep, z) = match method {
        GradientMethod::Exact => summed((0..n).into_par_iter().map(|i| exact_repulsion(points, i)).collect()),
        GradientMethod::BarnesHut => {
            let tree = QuadTree::build(points);
            summed(
                (0..n)
                    .into_par_iter()
                    .map_init(Vec::new, |stack, i| tree.repulsion(i, theta, stack))
                    .collect(),
            )
        }
        GradientMethod::Interpolation => interp.repulsion(points),
    };

    let log_w: f64 = grad
        .par_iter_mut()
        .enumerate()
        .map(|(i, g)| {
            let yi = points[i];
            let (cols, vals) = p.row(i);
            let mut attr = [0.0; 2];
            let mut log_w = 0.0;
            for (&j, &pij) in cols.iter().zip(vals) {
                let yj = points[j as usize];
                let (dx, dy) = (yi[0] - yj[0], yi[1] - yj[1]);
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                attr[0] += pij * w * dx;
                attr[1] += pij * w * dy;
                log_w += pij * w.ln();
            }
            for a in 0..2 {
                g[a] = 4.0 * (exaggeration * attr[a] - rep[i][a] / z);
            }
            log_w
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    p.neg_entropy() - log_w + z.ln()
}

fn exact_repulsion(points: &[[f64; 2]], i: usize) -> Repulsion {
    let yi = points[i];
    let mut r = Repulsion::default();
    for (j, yj) in points.iter().enumerate() {
        if j != i {
            let (dx, dy) = (yi[0] - yj[0], yi[1] - yj[1]);
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            r.z += w;
            r.force[0] += w * w * dx;
            r.force[1] += w * w * dy;
        }
    }
    r
}

/// Analytic gradient of the KL divergence with respect to each `y_i`,
/// evaluated exactly over all pairs.
pub fn kl_gradient(p: &AffinityMatrix, y: &Layout) -> Result<Vec<[f64; 2]>> {
    if p.order() != y.len() {
        return Err(Error::arg(format!("affinities of order {} for {} points", p.order(), y.len())));
    }
    let mut grad = vec![[0.0; 2]; y.len()];
    gradient(p, y.points(), 1.0, GradientMethod::Exact, 0.0, &mut Interpolator::new(), &mut grad);
    Ok(grad)
}

/// Minimizes the KL divergence by gradient descent with momentum, per-
/// coordinate adaptive gains and early exaggeration, from a small seeded
/// Gaussian initialization.
pub fn optimize_layout(p: &AffinityMatrix, cfg: &SneConfig) -> Result<Layout> {
    optimize_layout_traced(p, cfg).map(|r| r.0)
}

/// [`optimize_layout`] that also returns the KL divergence before every
/// update and after the last one.
pub fn optimize_layout_traced(p: &AffinityMatrix, cfg: &SneConfig) -> Result<(Layout, Vec<f64>)> {
    cfg.validate()?;
    let n = p.order();
    if n == 0 {
        return Err(Error::arg("no points to lay out"));
    }
    let normal = Normal::new(0.0, cfg.init_sd).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    if n == 1 {
        return Ok((Layout::new(vec![[0.0, 0.0]])?, Vec::new()));
    }
    let method = if n > cfg.exact_gradient_max_nodes { cfg.gradient } else { GradientMethod::Exact };
    let mut grad = vec![[0.0; 2]; n];
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut interp = Interpolator::new();

    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if it < cfg.momentum_switch { cfg.momentum } else { cfg.final_momentum };
        let kl = gradient(p, &y, exaggeration, method, cfg.theta, &mut interp, &mut grad);
        if !kl.is_finite() || grad.iter().any(|g| !g[0].is_finite() || !g[1].is_finite()) {
            return Err(Error::Optimizer {
                iteration: it,
                message: "non-finite gradient".into(),
            });
        }
        trace.push(kl);
        let mut mean = [0.0; 2];
        for i in 0..n {
            for a in 0..2 {
                let g = grad[i][a];
                let gain = &mut gains[i][a];
                *gain = if (g > 0.0) != (update[i][a] > 0.0) {
                    *gain + 0.2
                } else {
                    (*gain * 0.8).max(MIN_GAIN)
                };
                update[i][a] = momentum * update[i][a] - cfg.learning_rate * *gain * g;
                y[i][a] += update[i][a];
                mean[a] += y[i][a];
            }
        }
        for pt in &mut y {
            pt[0] -= mean[0] / n as f64;
            pt[1] -= mean[1] / n as f64;
        }
    }
    let kl = gradient(p, &y, 1.0, method, cfg.theta, &mut interp, &mut grad);
    trace.push(kl);
    let layout = Layout::new(y).map_err(|e| Error::Optimizer {
        iteration: cfg.iterations,
        message: e.to_string(),
    })?;
    Ok((layout, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sne::{calibrate_conditional, kl_divergence, low_dim_affinities, symmetrize, ConditionalMatrix};
    use crate::embed::Embedding;
    use proptest::prelude::*;
    use rand::Rng;

    fn kl_at(p: &AffinityMatrix, pts: &[[f64; 2]]) -> f64 {
        kl_divergence(p, &low_dim_affinities(&Layout::new(pts.to_vec()).unwrap()).unwrap()).unwrap()
    }

    fn random_instance(n: usize, seed: u64) -> (AffinityMatrix, Vec<[f64; 2]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { rng.random::<f64>() }).collect();
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|v| *v /= s);
                r
            })
            .collect();
        let p = symmetrize(&ConditionalMatrix::from_dense(&rows).unwrap()).unwrap();
        let y = (0..n).map(|_| [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0]).collect();
        (p, y)
    }

    #[test]
    fn kl_from_gradient_pass_matches_direct() {
        let (p, y) = random_instance(12, 3);
        let mut g = vec![[0.0; 2]; 12];
        let kl = gradient(&p, &y, 1.0, GradientMethod::Exact, 0.0, &mut Interpolator::new(), &mut g);
        assert!((kl - kl_at(&p, &y)).abs() < 1e-12);
    }

    /// Affinities equal to `q`: rows `n q_ij` symmetrize to `2n q_ij` with
    /// total `2n`, which rescales back to `q_ij`.
    fn affinities_equal_to(q: &crate::sne::SquareMatrix) -> AffinityMatrix {
        let n = q.order();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| n as f64 * q.get(i, j)).collect()).collect();
        symmetrize(&ConditionalMatrix::from_dense(&rows).unwrap()).unwrap()
    }

    #[test]
    fn gradient_vanishes_when_p_equals_q() {
        let y = Layout::new(vec![[0.0, 0.0], [1.0, 0.5], [-0.3, 2.0], [0.7, -1.1]]).unwrap();
        let p = affinities_equal_to(&low_dim_affinities(&y).unwrap());
        let g = kl_gradient(&p, &y).unwrap();
        assert!(g.iter().flatten().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    fn finite_difference(p: &AffinityMatrix, y: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let h = 1e-5;
        let mut out = vec![[0.0; 2]; y.len()];
        for i in 0..y.len() {
            for a in 0..2 {
                let mut plus = y.to_vec();
                let mut minus = y.to_vec();
                plus[i][a] += h;
                minus[i][a] -= h;
                out[i][a] = (kl_at(p, &plus) - kl_at(p, &minus)) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (p, y) = random_instance(10, seed);
            let g = kl_gradient(&p, &Layout::new(y.clone()).unwrap()).unwrap();
            let fd = finite_difference(&p, &y);
            let scale = fd.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..10 {
                for a in 0..2 {
                    let err = (g[i][a] - fd[i][a]).abs();
                    assert!(err <= 1e-4 * fd[i][a].abs().max(1e-6 * scale), "seed {seed}: {} vs {}", g[i][a], fd[i][a]);
                }
            }
        }
    }

    #[test]
    fn gradient_translation_invariant() {
        let (p, y) = random_instance(10, 42);
        let moved: Vec<[f64; 2]> = y.iter().map(|q| [q[0] + 3.25, q[1] - 7.5]).collect();
        let a = kl_gradient(&p, &Layout::new(y).unwrap()).unwrap();
        let b = kl_gradient(&p, &Layout::new(moved).unwrap()).unwrap();
        for (u, v) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    fn small_cfg(seed: u64) -> SneConfig {
        SneConfig {
            perplexity: 3.0,
            iterations: 500,
            exaggeration_iters: 100,
            momentum_switch: 100,
            seed,
            ..SneConfig::default()
        }
    }

    fn two_clusters() -> AffinityMatrix {
        let mut rows = Vec::new();
        for c in 0..2 {
            for k in 0..5 {
                let angle = k as f64 * 1.2566;
                rows.push(vec![c as f64 * 100.0 + angle.cos(), angle.sin(), 0.0]);
            }
        }
        let x = Embedding::from_rows(&rows).unwrap();
        symmetrize(&calibrate_conditional(&x, 3.0).unwrap()).unwrap()
    }

    #[test]
    fn separates_planted_clusters() {
        let y = optimize_layout(&two_clusters(), &small_cfg(1)).unwrap();
        let mut intra: f64 = 0.0;
        let mut inter = f64::INFINITY;
        for i in 0..10 {
            for j in i + 1..10 {
                let d = y.distance(i, j);
                if i / 5 == j / 5 {
                    intra = intra.max(d);
                } else {
                    inter = inter.min(d);
                }
            }
        }
        assert!(intra < inter, "intra {intra}, inter {inter}");
    }

    #[test]
    fn deterministic_bitwise() {
        let p = two_clusters();
        let a = optimize_layout(&p, &small_cfg(7)).unwrap();
        let b = optimize_layout(&p, &small_cfg(7)).unwrap();
        assert_eq!(a, b);
        for gradient in [GradientMethod::BarnesHut, GradientMethod::Interpolation] {
            let cfg = SneConfig {
                exact_gradient_max_nodes: 2,
                gradient,
                ..small_cfg(7)
            };
            assert_eq!(optimize_layout(&p, &cfg).unwrap(), optimize_layout(&p, &cfg).unwrap());
        }
    }

    #[test]
    fn two_points_descend() {
        let p = symmetrize(&ConditionalMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let (_, trace) = optimize_layout_traced(&p, &small_cfg(0)).unwrap();
        assert!(trace.last().unwrap() <= &trace[0]);
        assert!(trace.iter().all(|k| *k >= -1e-12));
    }

    #[test]
    fn trace_settles() {
        let p = two_clusters();
        let cfg = SneConfig {
            iterations: 1000,
            exaggeration_iters: 250,
            momentum_switch: 250,
            ..small_cfg(2)
        };
        let (_, trace) = optimize_layout_traced(&p, &cfg).unwrap();
        let tail = &trace[trace.len() - 101..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn gradient_oracle_property(seed in any::<u64>()) {
            let (p, y) = random_instance(10, seed);
            let g = kl_gradient(&p, &Layout::new(y.clone()).unwrap()).unwrap();
            let fd = finite_difference(&p, &y);
            let scale = fd.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..10 {
                for a in 0..2 {
                    prop_assert!((g[i][a] - fd[i][a]).abs() <= 1e-4 * fd[i][a].abs().max(1e-6 * scale));
                }
            }
        }
    }
}
