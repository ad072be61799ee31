//! Self-check harnesses behind the `mstcheck` and `gradcheck` subcommands.
//!
//! Both compare the production code against oracles that share none of its
//! logic: exhaustive spanning-tree enumeration for Prim's algorithm, central
//! finite differences for backpropagation.

use rand::Rng;

use crate::fusion::{init_weights_with, Gradients, Mlp};
use crate::geometry::{euclidean_distance, Point};
use crate::rng::{substream, Stream};
use crate::routing::{build_mst, total_weight};

/// Minimum spanning-tree weight by enumerating every labeled tree through its
/// Prüfer sequence. Exponential; meant for clusters of at most ~9 nodes.
pub fn exhaustive_mst_weight(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return euclidean_distance(points[0], points[1]);
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(prufer_tree_weight(&seq, points));
        // Odometer increment over base-n digits.
        let mut k = 0;
        loop {
            if k == len {
                return best;
            }
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
    }
}

fn prufer_tree_weight(seq: &[usize], points: &[Point]) -> f64 {
    let n = points.len();
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut weight = 0.0;
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf always exists");
        weight += euclidean_distance(points[leaf], points[s]);
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    weight + euclidean_distance(points[rest[0]], points[rest[1]])
}

#[derive(Debug, Clone)]
pub struct MstCheckOptions {
    pub seed: u64,
    pub clusters: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub field: f64,
    pub tolerance: f64,
}

impl Default for MstCheckOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            clusters: 200,
            min_size: 4,
            max_size: 8,
            field: 100.0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MstMismatch {
    pub cluster: usize,
    pub points: Vec<Point>,
    pub prim: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone)]
pub struct MstCheckReport {
    pub clusters: usize,
    pub max_abs_diff: f64,
    pub mismatches: Vec<MstMismatch>,
}

impl MstCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Random clusters from the seeded verification stream.
pub fn random_clusters(opts: &MstCheckOptions) -> Vec<Vec<Point>> {
    let mut rng = substream(opts.seed, Stream::Verification);
    (0..opts.clusters)
        .map(|_| {
            let n = rng.gen_range(opts.min_size..=opts.max_size);
            (0..n)
                .map(|_| Point::new(rng.gen_range(0.0..opts.field), rng.gen_range(0.0..opts.field)))
                .collect()
        })
        .collect()
}

pub fn run_mst_check(opts: &MstCheckOptions) -> MstCheckReport {
    let mut report = MstCheckReport {
        clusters: opts.clusters,
        max_abs_diff: 0.0,
        mismatches: Vec::new(),
    };
    for (i, points) in random_clusters(opts).into_iter().enumerate() {
        let nodes: Vec<(usize, Point)> = points.iter().copied().enumerate().collect();
        let prim = total_weight(&build_mst(&nodes, 0).expect("generated ids are distinct"));
        let oracle = exhaustive_mst_weight(&points);
        let diff = (prim - oracle).abs();
        report.max_abs_diff = report.max_abs_diff.max(diff);
        if diff > opts.tolerance {
            report.mismatches.push(MstMismatch {
                cluster: i,
                points,
                prim,
                oracle,
            });
        }
    }
    report
}

/// Central-difference gradient of `½(y − y_true)²` with respect to every
/// parameter, using only forward passes.
pub fn finite_difference_gradients(net: &Mlp, x: &[f64], y_true: f64, h: f64) -> Gradients {
    let loss = |n: &Mlp| {
        let y = n.predict(x).expect("input width matches");
        0.5 * (y - y_true) * (y - y_true)
    };
    let mut probe = net.clone();
    let mut layers = Vec::with_capacity(net.layers.len());
    for k in 0..net.layers.len() {
        let mut d_weights = vec![0.0; net.layers[k].weights.len()];
        for (i, g) in d_weights.iter_mut().enumerate() {
            let orig = probe.layers[k].weights[i];
            probe.layers[k].weights[i] = orig + h;
            let up = loss(&probe);
            probe.layers[k].weights[i] = orig - h;
            let down = loss(&probe);
            probe.layers[k].weights[i] = orig;
            *g = (up - down) / (2.0 * h);
        }
        let mut d_biases = vec![0.0; net.layers[k].biases.len()];
        for (i, g) in d_biases.iter_mut().enumerate() {
            let orig = probe.layers[k].biases[i];
            probe.layers[k].biases[i] = orig + h;
            let up = loss(&probe);
            probe.layers[k].biases[i] = orig - h;
            let down = loss(&probe);
            probe.layers[k].biases[i] = orig;
            *g = (up - down) / (2.0 * h);
        }
        layers.push(crate::fusion::LayerGrad { d_weights, d_biases });
    }
    Gradients { layers }
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub seed: u64,
    pub nets: usize,
    pub max_width: usize,
    pub max_hidden_layers: usize,
    pub h: f64,
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            nets: 50,
            max_width: 8,
            max_hidden_layers: 3,
            h: 1e-5,
            rel_tolerance: 1e-4,
            abs_tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone)]
pub struct GradFailure {
    pub net: usize,
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub nets: usize,
    pub entries: usize,
    /// Largest relative error over all entries with a nonzero gradient.
    pub max_rel_error: f64,
    pub failures: Vec<GradFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Analytic per-sample gradient as computed by the fusion network.
pub fn backprop_gradients(net: &Mlp, x: &[f64], y_true: f64) -> Gradients {
    let (_, cache) = net.forward(x).expect("input width matches");
    net.backward(&cache, y_true).expect("cache comes from this network")
}

/// Random network shapes, inputs and targets from the verification stream.
pub fn random_nets(opts: &GradCheckOptions) -> Vec<(Mlp, Vec<f64>, f64)> {
    let mut rng = substream(opts.seed, Stream::Verification);
    (0..opts.nets)
        .map(|_| {
            let hidden = rng.gen_range(1..=opts.max_hidden_layers);
            let mut sizes: Vec<usize> = (0..=hidden).map(|_| rng.gen_range(1..=opts.max_width)).collect();
            sizes.push(1);
            let mut net = init_weights_with(&sizes, &mut rng).expect("sizes are positive");
            // Non-zero biases so every parameter kind is exercised.
            for l in &mut net.layers {
                l.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y_true = rng.gen_range(-1.0..1.0);
            (net, x, y_true)
        })
        .collect()
}

pub fn run_grad_check<F>(opts: &GradCheckOptions, analytic: F) -> GradCheckReport
where
    F: Fn(&Mlp, &[f64], f64) -> Gradients,
{
    let mut report = GradCheckReport {
        nets: opts.nets,
        entries: 0,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    for (i, (net, x, y_true)) in random_nets(opts).into_iter().enumerate() {
        let a = analytic(&net, &x, y_true);
        let n = finite_difference_gradients(&net, &x, y_true, opts.h);
        for (k, (ga, gn)) in a.layers.iter().zip(&n.layers).enumerate() {
            let pairs = ga
                .d_weights
                .iter()
                .zip(&gn.d_weights)
                .map(|p| (ParamKind::Weight, p))
                .enumerate()
                .chain(
                    ga.d_biases
                        .iter()
                        .zip(&gn.d_biases)
                        .map(|p| (ParamKind::Bias, p))
                        .enumerate(),
                );
            for (index, (kind, (&av, &nv))) in pairs {
                report.entries += 1;
                let diff = (av - nv).abs();
                let scale = av.abs().max(nv.abs());
                let rel = if scale > 0.0 { diff / scale } else { 0.0 };
                report.max_rel_error = report.max_rel_error.max(rel);
                if diff >= opts.abs_tolerance && rel >= opts.rel_tolerance {
                    report.failures.push(GradFailure {
                        net: i,
                        layer: k,
                        kind,
                        index,
                        analytic: av,
                        numeric: nv,
                    });
                }
            }
        }
    }
    report
}
