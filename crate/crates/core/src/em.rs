//! EM clustering with dot-product similarity.
//!
//! The E-step is `softmax_K(C·Xᵀ)` and the M-step is `M̂·X`, optionally
//! normalised by cluster mass. These routines double as the reference
//! implementation that the attention layers are checked against, so the
//! attention code calls exactly the same matrix kernels.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, softmax_axis, Axis, Matrix, SOFTMAX_SUM_TOL};

/// How the M-step turns assignments into centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterUpdate {
    /// `C = M̂·X`, unnormalised.
    PaperSum,
    /// Row `k` of `M̂·X` divided by `Σₙ M̂[k, n]`.
    WeightedMean,
}

impl std::str::FromStr for CenterUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_sum" => Ok(Self::PaperSum),
            "weighted_mean" => Ok(Self::WeightedMean),
            other => Err(Error::Config(format!("unknown center update mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentKind {
    Soft,
    Hard,
}

/// `K × N` assignment of points to clusters; every column sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    probs: Matrix,
    kind: AssignmentKind,
}

impl AssignmentMatrix {
    pub fn soft(probs: Matrix) -> Result<Self> {
        if probs.as_slice().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Contract("soft assignment entries must lie in [0, 1]".into()));
        }
        if probs.rows() > 0 && probs.column_sums().iter().any(|s| (s - 1.0).abs() > SOFTMAX_SUM_TOL) {
            return Err(Error::Contract("soft assignment columns must sum to 1".into()));
        }
        Ok(Self {
            probs,
            kind: AssignmentKind::Soft,
        })
    }

    pub fn hard(probs: Matrix) -> Result<Self> {
        let (k, n) = probs.shape();
        for col in 0..n {
            let mut ones = 0;
            for row in 0..k {
                match probs[(row, col)] {
                    v if v == 1.0 => ones += 1,
                    v if v == 0.0 => {}
                    _ => return Err(Error::Contract(format!("column {col} is not one-hot"))),
                }
            }
            if ones != 1 {
                return Err(Error::Contract(format!("column {col} is not one-hot")));
            }
        }
        Ok(Self {
            probs,
            kind: AssignmentKind::Hard,
        })
    }

    /// Wraps a softmax output without re-validating it.
    pub(crate) fn soft_unchecked(probs: Matrix) -> Self {
        Self {
            probs,
            kind: AssignmentKind::Soft,
        }
    }

    pub fn k(&self) -> usize {
        self.probs.rows()
    }

    pub fn n(&self) -> usize {
        self.probs.cols()
    }

    pub fn kind(&self) -> AssignmentKind {
        self.kind
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn into_probs(self) -> Matrix {
        self.probs
    }

    /// Column-wise argmax; ties go to the lowest cluster index.
    pub fn labels(&self) -> Vec<usize> {
        argmax_columns(&self.probs)
    }
}

/// `K × D` matrix of cluster centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    centers: Matrix,
}

impl CenterSet {
    pub fn new(centers: Matrix) -> Result<Self> {
        if !centers.is_finite() {
            return Err(Error::NonFinite { op: "CenterSet::new" });
        }
        Ok(Self { centers })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.centers
    }

    pub fn into_matrix(self) -> Matrix {
        self.centers
    }

    pub fn center(&self, k: usize) -> &[f64] {
        self.centers.row(k)
    }
}

/// Output of [`em_cluster`]. `soft` and `hard` are evaluated at the final centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub centers: CenterSet,
    pub soft: AssignmentMatrix,
    pub hard: AssignmentMatrix,
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Which E-step [`em_cluster`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EStepKind {
    /// `softmax_K(C·Xᵀ)` used directly as the membership weights.
    Soft,
    /// Lloyd iteration: `hard_assign` of the nearest-center E-step, see
    /// [`nearest_center_e_step`].
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub t_max: usize,
    /// Stop once the largest center displacement drops below this.
    pub tol: f64,
    pub update: CenterUpdate,
    pub e_step: EStepKind,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            t_max: 100,
            tol: 1e-9,
            update: CenterUpdate::WeightedMean,
            e_step: EStepKind::Soft,
        }
    }
}

/// Forgy initialisation: `k` distinct rows of `x` drawn with a seeded ChaCha8 stream.
pub fn forgy_init(x: &Matrix, k: usize, seed: u64) -> Result<CenterSet> {
    let n = x.rows();
    if k > n {
        return Err(Error::InsufficientPoints { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, n, k).into_vec();
    CenterSet::new(x.select_rows(&picked))
}

/// The row indices [`forgy_init`] would pick.
pub fn forgy_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::InsufficientPoints { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, n, k).into_vec())
}

/// `softmax_K(C·Xᵀ)`.
pub fn e_step(c: &CenterSet, x: &Matrix) -> Result<AssignmentMatrix> {
    if c.dim() != x.cols() {
        return Err(Error::Shape {
            op: "e_step",
            left: c.matrix().shape(),
            right: x.shape(),
        });
    }
    let logits = c.matrix().matmul_transposed(x)?;
    Ok(AssignmentMatrix::soft_unchecked(softmax_axis(&logits, Axis::Cols)))
}

pub fn m_step(m: &AssignmentMatrix, x: &Matrix, mode: CenterUpdate) -> Result<CenterSet> {
    if m.n() != x.rows() {
        return Err(Error::Shape {
            op: "m_step",
            left: m.probs().shape(),
            right: x.shape(),
        });
    }
    let mut centers = m.probs().matmul(x)?;
    if mode == CenterUpdate::WeightedMean {
        for (k, row_mass) in cluster_masses(m.probs()).into_iter().enumerate() {
            if row_mass <= f64::MIN_POSITIVE {
                return Err(Error::EmptyCluster { index: k });
            }
            centers.row_mut(k).iter_mut().for_each(|v| *v /= row_mass);
        }
    }
    CenterSet::new(centers)
}

/// One-hot of the column argmax, ties toward the lowest cluster index.
pub fn hard_assign(m: &AssignmentMatrix) -> AssignmentMatrix {
    let labels = argmax_columns(m.probs());
    AssignmentMatrix {
        probs: one_hot(&labels, m.k()),
        kind: AssignmentKind::Hard,
    }
}

/// `Tr(Mᵀ·C·Xᵀ)` for a hard assignment.
pub fn objective(m_hard: &AssignmentMatrix, c: &CenterSet, x: &Matrix) -> Result<f64> {
    if m_hard.kind() != AssignmentKind::Hard {
        return Err(Error::Contract("objective requires a hard assignment".into()));
    }
    if m_hard.k() != c.k() || m_hard.n() != x.rows() || c.dim() != x.cols() {
        return Err(Error::Shape {
            op: "objective",
            left: m_hard.probs().shape(),
            right: (c.k(), x.rows()),
        });
    }
    let labels = argmax_columns(m_hard.probs());
    Ok(labels
        .iter()
        .enumerate()
        .map(|(n, &k)| dot(c.center(k), x.row(n)))
        .sum())
}

/// Points in homogeneous form `[x, 1]`.
pub fn augment_points(x: &Matrix) -> Matrix {
    let d = x.cols();
    Matrix::from_fn(x.rows(), d + 1, |r, c| if c < d { x[(r, c)] } else { 1.0 })
}

/// Centers in homogeneous form `[c, -½‖c‖²]`, so that
/// `[c, -½‖c‖²]·[x, 1] = -½‖x - c‖² + ½‖x‖²`.
pub fn augment_centers(c: &Matrix) -> Matrix {
    let d = c.cols();
    let half_norms: Vec<f64> = c.iter_rows().map(|r| -0.5 * dot(r, r)).collect();
    Matrix::from_fn(c.rows(), d + 1, |r, col| if col < d { c[(r, col)] } else { half_norms[r] })
}

/// E-step on homogeneous coordinates: the softmax of `-½‖x - c‖²` over clusters.
/// Its argmax is the nearest center.
pub fn nearest_center_e_step(c: &CenterSet, x: &Matrix) -> Result<AssignmentMatrix> {
    let c_aug = CenterSet::new(augment_centers(c.matrix()))?;
    e_step(&c_aug, &augment_points(x))
}

/// The trace objective evaluated on homogeneous coordinates:
/// `Σₙ (c_{k(n)}·xₙ - ½‖c_{k(n)}‖²)`, i.e. `-½·SSE + const`.
pub fn nearest_center_objective(m_hard: &AssignmentMatrix, c: &CenterSet, x: &Matrix) -> Result<f64> {
    let c_aug = CenterSet::new(augment_centers(c.matrix()))?;
    objective(m_hard, &c_aug, &augment_points(x))
}

/// Alternates E- and M-steps from `init` for at most `cfg.t_max` iterations.
///
/// Iteration `t` records the objective of the hard assignment induced by the
/// centers going into that iteration. Under [`CenterUpdate::WeightedMean`] a
/// cluster that receives no mass is re-seeded to the point whose largest
/// assignment probability is smallest.
pub fn em_cluster(x: &Matrix, init: &CenterSet, cfg: &EmConfig) -> Result<ClusterResult> {
    if cfg.t_max < 1 {
        return Err(Error::Range {
            what: "t_max",
            value: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    if init.dim() != x.cols() {
        return Err(Error::Shape {
            op: "em_cluster",
            left: init.matrix().shape(),
            right: x.shape(),
        });
    }
    if init.k() > x.rows() {
        return Err(Error::InsufficientPoints {
            k: init.k(),
            n: x.rows(),
        });
    }

    let e = |c: &CenterSet| match cfg.e_step {
        EStepKind::Soft => e_step(c, x),
        EStepKind::Hard => nearest_center_e_step(c, x),
    };
    let score = |m: &AssignmentMatrix, c: &CenterSet| match cfg.e_step {
        EStepKind::Soft => objective(m, c, x),
        EStepKind::Hard => nearest_center_objective(m, c, x),
    };

    let mut centers = init.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.t_max {
        let soft = e(&centers)?;
        let hard = hard_assign(&soft);
        trace.push(score(&hard, &centers)?);
        let weights = match cfg.e_step {
            EStepKind::Soft => &soft,
            EStepKind::Hard => &hard,
        };
        let next = match cfg.update {
            CenterUpdate::PaperSum => m_step(weights, x, CenterUpdate::PaperSum)?,
            CenterUpdate::WeightedMean => weighted_mean_with_repair(weights, &soft, x)?,
        };
        let shift = next.matrix().max_abs_diff(centers.matrix());
        centers = next;
        if shift < cfg.tol {
            converged = true;
            break;
        }
    }
    let soft = e(&centers)?;
    let hard = hard_assign(&soft);
    Ok(ClusterResult {
        centers,
        soft,
        hard,
        iterations_run: trace.len(),
        objective_trace: trace,
        converged,
    })
}

fn weighted_mean_with_repair(weights: &AssignmentMatrix, soft: &AssignmentMatrix, x: &Matrix) -> Result<CenterSet> {
    let mut centers = weights.probs().matmul(x)?;
    let masses = cluster_masses(weights.probs());
    let empty: Vec<usize> = (0..masses.len())
        .filter(|&k| masses[k] <= f64::MIN_POSITIVE)
        .collect();
    let mut candidates = Vec::new();
    if !empty.is_empty() {
        let confidence: Vec<f64> = (0..soft.n())
            .map(|n| (0..soft.k()).map(|k| soft.probs()[(k, n)]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        candidates = (0..soft.n()).collect();
        candidates.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]).then(a.cmp(&b)));
    }
    let mut reseeds = candidates.into_iter();
    for (k, &mass) in masses.iter().enumerate() {
        if mass <= f64::MIN_POSITIVE {
            let n = reseeds.next().ok_or(Error::EmptyCluster { index: k })?;
            centers.row_mut(k).copy_from_slice(x.row(n));
        } else {
            centers.row_mut(k).iter_mut().for_each(|v| *v /= mass);
        }
    }
    CenterSet::new(centers)
}

fn cluster_masses(probs: &Matrix) -> Vec<f64> {
    probs.iter_rows().map(|r| r.iter().sum()).collect()
}

pub(crate) fn argmax_columns(m: &Matrix) -> Vec<usize> {
    let (k, n) = m.shape();
    let mut best = vec![0usize; n];
    if k == 0 {
        return best;
    }
    let mut best_val = m.row(0).to_vec();
    for row in 1..k {
        for (col, &v) in m.row(row).iter().enumerate() {
            if v > best_val[col] {
                best_val[col] = v;
                best[col] = row;
            }
        }
    }
    best
}

pub(crate) fn one_hot(labels: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(k, labels.len());
    for (n, &l) in labels.iter().enumerate() {
        m[(l, n)] = 1.0;
    }
    m
}
