//! Query initialisation for the clustering decoder.
//!
//! Three starting points are offered, one per task family:
//! class centers averaged from a [`MemoryBank`] (scene-agnostic), grid-selected
//! rows of a transformed, position-embedded feature map (scene-adaptive), and
//! grid seeds of the position-embedded map passed through a head (superpixel).

use std::collections::VecDeque;
use std::ops::Range;
use std::path::Path;

use crate::em::CenterSet;
use crate::error::{Error, Result};
use crate::ffn::FeedForward;
use crate::linalg::{avg_pool, grid_sample, position_embed, FeatureMap, Matrix};
use crate::weights::{load_bundle, save_bundle};

/// Feed-forward head applied to initial queries.
pub type FfnHead = FeedForward;

pub const DEFAULT_BANK_CAPACITY: usize = 256;
pub const DEFAULT_SCENE_ADAPTIVE_K: usize = 100;

/// One bounded first-in-first-out queue of embeddings per class.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    dim: usize,
    queues: Vec<VecDeque<Vec<f64>>>,
}

impl MemoryBank {
    pub fn new(classes: usize, dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config("memory bank capacity and dim must be positive".into()));
        }
        Ok(Self {
            capacity,
            dim,
            queues: vec![VecDeque::new(); classes],
        })
    }

    pub fn with_default_capacity(classes: usize, dim: usize) -> Result<Self> {
        Self::new(classes, dim, DEFAULT_BANK_CAPACITY)
    }

    pub fn classes(&self) -> usize {
        self.queues.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn queue(&self, class: usize) -> Result<&VecDeque<Vec<f64>>> {
        self.queues.get(class).ok_or(Error::Index {
            what: "class",
            index: class,
            len: self.queues.len(),
        })
    }

    /// Appends `embeddings` in order, evicting the oldest entries beyond
    /// capacity. Nothing is stored if any embedding is rejected.
    pub fn push(&mut self, class: usize, embeddings: &[Vec<f64>]) -> Result<()> {
        self.queue(class)?;
        for e in embeddings {
            if e.len() != self.dim {
                return Err(Error::Shape {
                    op: "MemoryBank::push",
                    left: (1, self.dim),
                    right: (1, e.len()),
                });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "MemoryBank::push" });
            }
        }
        let queue = &mut self.queues[class];
        for e in embeddings {
            if queue.len() == self.capacity {
                queue.pop_front();
            }
            queue.push_back(e.clone());
        }
        Ok(())
    }

    /// Mean embedding of every class, `classes × dim`.
    pub fn class_means(&self) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.classes(), self.dim);
        for (k, q) in self.queues.iter().enumerate() {
            let v: Vec<&Vec<f64>> = q.iter().collect();
            let mean = avg_pool(&v).map_err(|_| Error::UninitializedClass { class: k })?;
            out.row_mut(k).copy_from_slice(&mean);
        }
        Ok(out)
    }

    /// A `1 × 2` header `[capacity, dim]` then one `len × dim` matrix per class.
    pub fn to_bundle(&self) -> Vec<Matrix> {
        let mut out = vec![Matrix::from_vec(1, 2, vec![self.capacity as f64, self.dim as f64]).expect("finite header")];
        for q in &self.queues {
            let data: Vec<f64> = q.iter().flatten().copied().collect();
            out.push(Matrix::from_vec(q.len(), self.dim, data).expect("validated entries"));
        }
        out
    }

    pub fn from_bundle(matrices: &[Matrix]) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("bank snapshot: {m}"));
        let meta = matrices.first().ok_or_else(|| bad("missing header"))?;
        if meta.shape() != (1, 2) || meta.as_slice().iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(bad("header must be [capacity, dim] with positive whole numbers"));
        }
        let (capacity, dim) = (meta[(0, 0)] as usize, meta[(0, 1)] as usize);
        let mut bank = Self::new(matrices.len() - 1, dim, capacity)?;
        for (k, m) in matrices[1..].iter().enumerate() {
            if m.cols() != dim && m.rows() > 0 {
                return Err(bad(&format!("class {k} has width {}, expected {dim}", m.cols())));
            }
            if m.rows() > capacity {
                return Err(bad(&format!("class {k} holds {} entries, capacity is {capacity}", m.rows())));
            }
            let rows: Vec<Vec<f64>> = m.iter_rows().map(|r| r.to_vec()).collect();
            bank.push(k, &rows)?;
        }
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_bundle(path, &self.to_bundle())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&load_bundle(path)?)
    }
}

/// Value-style push: consumes the bank and returns the updated one.
pub fn bank_push(mut bank: MemoryBank, class: usize, embeddings: &[Vec<f64>]) -> Result<MemoryBank> {
    bank.push(class, embeddings)?;
    Ok(bank)
}

/// FFN of the per-class mean embedding.
pub fn scene_agnostic_init(bank: &MemoryBank, ffn: &FfnHead) -> Result<CenterSet> {
    CenterSet::new(ffn.forward(&bank.class_means()?)?)
}

/// Position-embeds `i`, applies the FFN to every pixel, then keeps the
/// grid-sampled rows. The result may hold fewer than `k` rows when the grid
/// cannot be filled exactly.
pub fn scene_adaptive_init(i: &FeatureMap, ffn: &FfnHead, k: usize) -> Result<CenterSet> {
    let embedded = position_embed(i)?;
    let transformed = FeatureMap::from_matrix(i.height(), i.width(), ffn.forward(embedded.as_matrix())?)?;
    CenterSet::new(grid_sample(&transformed, k)?.features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelSeeds {
    pub centers: CenterSet,
    /// `(row, col)` of each seed pixel.
    pub coords: Vec<(usize, usize)>,
    pub k_actual: usize,
}

/// Grid seeds of the position-embedded map, passed through the FFN.
pub fn superpixel_init(i: &FeatureMap, k_requested: usize, ffn: &FfnHead) -> Result<SuperpixelSeeds> {
    let grid = grid_sample(&position_embed(i)?, k_requested)?;
    Ok(SuperpixelSeeds {
        centers: CenterSet::new(ffn.forward(&grid.features)?)?,
        k_actual: grid.coords.len(),
        coords: grid.coords,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanopticQueries {
    /// Stuff rows first, then thing rows.
    pub centers: CenterSet,
    pub stuff: Range<usize>,
    pub thing: Range<usize>,
}

/// Stacks scene-agnostic stuff queries over scene-adaptive thing queries.
/// `k_thing = 0` skips the thing branch; a bank without classes skips the
/// stuff branch.
pub fn panoptic_init(
    bank: &MemoryBank,
    i: &FeatureMap,
    ffn_stuff: &FfnHead,
    ffn_thing: &FfnHead,
    k_thing: usize,
) -> Result<PanopticQueries> {
    let stuff = if bank.classes() > 0 {
        scene_agnostic_init(bank, ffn_stuff)?.into_matrix()
    } else {
        Matrix::zeros(0, ffn_thing.output_dim())
    };
    let thing = if k_thing > 0 {
        scene_adaptive_init(i, ffn_thing, k_thing)?.into_matrix()
    } else {
        Matrix::zeros(0, stuff.cols())
    };
    let (s, t) = (stuff.rows(), thing.rows());
    Ok(PanopticQueries {
        centers: CenterSet::new(Matrix::vstack(&[&stuff, &thing])?)?,
        stuff: 0..s,
        thing: s..s + t,
    })
}
