#![allow(dead_code)]

use std::path::Path;

use ids_core::dataset::{build_schema, ColumnKind, DatasetKind};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Raw label and relative frequency of each synthetic traffic class.
const CLASSES: [(&str, f64); 5] = [
    ("normal", 0.40),
    ("neptune", 0.25),
    ("satan", 0.15),
    ("guess_passwd", 0.12),
    ("buffer_overflow", 0.08),
];

const PROTOCOLS: [&str; 3] = ["tcp", "udp", "icmp"];
const SERVICES: [&str; 6] = ["http", "private", "ftp_data", "smtp", "telnet", "ecr_i"];
const FLAGS: [&str; 4] = ["SF", "S0", "REJ", "RSTO"];

/// KDD-layout CSV lines with five separable-but-noisy classes. Each class
/// shifts its own group of numeric columns and prefers one service.
pub fn kdd_lines(kind: DatasetKind, rows: usize, seed: u64) -> Vec<String> {
    assert!(matches!(kind, DatasetKind::Kdd99 | DatasetKind::NslKdd));
    let schema = build_schema(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| {
            let class = pick_class(&mut rng);
            let mut numeric = 0usize;
            let mut categorical = 0usize;
            let fields: Vec<String> = schema
                .columns
                .iter()
                .map(|col| match col.kind {
                    ColumnKind::Numeric => {
                        let shift = if numeric % 5 == class && numeric < 25 { 2.5 } else { 0.0 };
                        numeric += 1;
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        format!("{:.4}", noise + shift)
                    }
                    ColumnKind::Categorical => {
                        categorical += 1;
                        match categorical {
                            1 => PROTOCOLS[if rng.random::<f64>() < 0.7 { class % 3 } else { rng.random_range(0..3) }],
                            2 => SERVICES[if rng.random::<f64>() < 0.8 { class } else { rng.random_range(0..6) }],
                            _ => FLAGS[rng.random_range(0..4)],
                        }
                        .to_string()
                    }
                    ColumnKind::Label => CLASSES[class].0.to_string(),
                    ColumnKind::Ignore => rng.random_range(0..22).to_string(),
                })
                .collect();
            fields.join(",")
        })
        .collect()
}

fn pick_class(rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, (_, p)) in CLASSES.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    CLASSES.len() - 1
}

pub fn write_lines(path: &Path, lines: &[String]) {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).unwrap();
}

/// Drops the label (and anything after it) from a KDD-layout line.
pub fn strip_label(line: &str) -> String {
    line.split(',').take(41).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------------------
// Binary RBM enumeration, written independently of the library.

pub struct TinyRbm {
    pub w: Array2<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
}

pub fn bits(state: usize, len: usize) -> Array1<f64> {
    Array1::from_iter((0..len).map(|i| ((state >> i) & 1) as f64))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl TinyRbm {
    pub fn random(d: usize, f: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut n = || -> f64 { let z: f64 = StandardNormal.sample(rng); scale * z };
        TinyRbm {
            w: Array2::from_shape_fn((d, f), |_| n()),
            a: Array1::from_shape_fn(d, |_| n()),
            b: Array1::from_shape_fn(f, |_| n()),
        }
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn f(&self) -> usize {
        self.b.len()
    }

    pub fn energy(&self, v: &Array1<f64>, h: &Array1<f64>) -> f64 {
        let mut e = 0.0;
        for i in 0..self.d() {
            e -= self.a[i] * v[i];
            for j in 0..self.f() {
                e -= v[i] * self.w[[i, j]] * h[j];
            }
        }
        for j in 0..self.f() {
            e -= self.b[j] * h[j];
        }
        e
    }

    /// Joint probabilities indexed by `v_state * 2^F + h_state`.
    pub fn joint(&self) -> Vec<f64> {
        let (d, f) = (self.d(), self.f());
        let weights: Vec<f64> = (0..1usize << (d + f))
            .map(|s| {
                let v = bits(s >> f, d);
                let h = bits(s & ((1 << f) - 1), f);
                (-self.energy(&v, &h)).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        weights.into_iter().map(|p| p / z).collect()
    }

    pub fn p_h_given_v(&self, v: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(self.f(), |j| {
            logistic(self.b[j] + (0..self.d()).map(|i| v[i] * self.w[[i, j]]).sum::<f64>())
        })
    }

    pub fn p_v_given_h(&self, h: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(self.d(), |i| {
            logistic(self.a[i] + (0..self.f()).map(|j| self.w[[i, j]] * h[j]).sum::<f64>())
        })
    }

    /// Gradient of the mean log-likelihood of `data` with respect to
    /// (W, a, b), flattened in that order.
    pub fn exact_gradient(&self, data: &[Array1<f64>]) -> Vec<f64> {
        let (d, f) = (self.d(), self.f());
        let mut pos_w = Array2::<f64>::zeros((d, f));
        let mut pos_a = Array1::<f64>::zeros(d);
        let mut pos_b = Array1::<f64>::zeros(f);
        for v in data {
            let ph = self.p_h_given_v(v);
            for i in 0..d {
                for j in 0..f {
                    pos_w[[i, j]] += v[i] * ph[j];
                }
            }
            pos_a += v;
            pos_b += &ph;
        }
        let n = data.len() as f64;
        let mut neg_w = Array2::<f64>::zeros((d, f));
        let mut neg_a = Array1::<f64>::zeros(d);
        let mut neg_b = Array1::<f64>::zeros(f);
        for (s, p) in self.joint().into_iter().enumerate() {
            let v = bits(s >> f, d);
            let h = bits(s & ((1 << f) - 1), f);
            for i in 0..d {
                for j in 0..f {
                    neg_w[[i, j]] += p * v[i] * h[j];
                }
            }
            neg_a.scaled_add(p, &v);
            neg_b.scaled_add(p, &h);
        }
        let gw = pos_w / n - neg_w;
        let ga = pos_a / n - neg_a;
        let gb = pos_b / n - neg_b;
        gw.iter().chain(ga.iter()).chain(gb.iter()).copied().collect()
    }

    /// Exact expectation of `(v1 ⊗ p(h|v1), v1, p(h|v1))` where `v1` is the
    /// visible state after one Gibbs step from `v0`.
    pub fn one_step_negative(&self, v0: &Array1<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let (d, f) = (self.d(), self.f());
        let ph0 = self.p_h_given_v(v0);
        let mut vh = Array2::<f64>::zeros((d, f));
        let mut vs = Array1::<f64>::zeros(d);
        let mut hs = Array1::<f64>::zeros(f);
        for hstate in 0..1usize << f {
            let h = bits(hstate, f);
            let p_h: f64 = (0..f).map(|j| if h[j] == 1.0 { ph0[j] } else { 1.0 - ph0[j] }).product();
            let pv = self.p_v_given_h(&h);
            for vstate in 0..1usize << d {
                let v1 = bits(vstate, d);
                let p_v: f64 = (0..d).map(|i| if v1[i] == 1.0 { pv[i] } else { 1.0 - pv[i] }).product();
                let weight = p_h * p_v;
                let ph1 = self.p_h_given_v(&v1);
                for i in 0..d {
                    for j in 0..f {
                        vh[[i, j]] += weight * v1[i] * ph1[j];
                    }
                }
                vs.scaled_add(weight, &v1);
                hs.scaled_add(weight, &ph1);
            }
        }
        (vh, vs, hs)
    }

    /// Expected CD-1 update (learning rate 1) on `data`, flattened as
    /// (W, a, b).
    pub fn cd1_expected(&self, data: &[Array1<f64>]) -> Vec<f64> {
        let (d, f) = (self.d(), self.f());
        let mut gw = Array2::<f64>::zeros((d, f));
        let mut ga = Array1::<f64>::zeros(d);
        let mut gb = Array1::<f64>::zeros(f);
        for v in data {
            let ph = self.p_h_given_v(v);
            let (nvh, nv, nh) = self.one_step_negative(v);
            for i in 0..d {
                for j in 0..f {
                    gw[[i, j]] += v[i] * ph[j] - nvh[[i, j]];
                }
            }
            ga += &(v - &nv);
            gb += &(ph - nh);
        }
        let n = data.len() as f64;
        gw.iter().chain(ga.iter()).chain(gb.iter()).map(|g| g / n).collect()
    }

    /// Mean log-likelihood of `data`, by summing over every state.
    pub fn log_likelihood(&self, data: &[Array1<f64>]) -> f64 {
        let (d, f) = (self.d(), self.f());
        let joint = self.joint();
        data.iter()
            .map(|v| {
                let vs: usize = (0..d).map(|i| (v[i] as usize) << i).sum();
                let marginal: f64 = (0..1 << f).map(|h| joint[(vs << f) + h]).sum();
                marginal.ln()
            })
            .sum::<f64>()
            / data.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Symmetric eigen-decomposition by cyclic Jacobi rotations.

/// Eigenvalues in descending order and the matching unit eigenvectors as
/// columns.
pub fn jacobi_eigen(sym: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap());
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Sample covariance with the (m - 1) divisor, computed entry by entry.
pub fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let (m, n) = x.dim();
    let means: Vec<f64> = (0..n).map(|j| (0..m).map(|i| x[[i, j]]).sum::<f64>() / m as f64).collect();
    Array2::from_shape_fn((n, n), |(p, q)| {
        (0..m).map(|i| (x[[i, p]] - means[p]) * (x[[i, q]] - means[q])).sum::<f64>() / (m as f64 - 1.0)
    })
}
