use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Per-pixel segment index, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config("label map dimensions must be positive".into()));
        }
        if labels.len() != height * width {
            return Err(Error::Shape {
                op: "LabelMap::new",
                left: (height, width),
                right: (labels.len(), 1),
            });
        }
        Ok(Self { height, width, labels })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let labels = (0..height).flat_map(|y| (0..width).map(move |x| (y, x))).map(|(y, x)| f(y, x)).collect();
        Self::new(height, width, labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    /// One past the largest label.
    pub fn label_bound(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Number of distinct labels present.
    pub fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.label_bound()];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|&s| s).count()
    }

    /// 4-connected components: a component id per pixel and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let (h, w) = (self.height, self.width);
        let mut comp = vec![usize::MAX; h * w];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..h * w {
            if comp[start] != usize::MAX {
                continue;
            }
            let label = self.labels[start];
            comp[start] = count;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                for q in neighbours(p, h, w) {
                    if comp[q] == usize::MAX && self.labels[q] == label {
                        comp[q] = count;
                        queue.push_back(q);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// True when every label's pixels form one 4-connected component.
    pub fn is_connected(&self) -> bool {
        self.components().1 == self.distinct_labels()
    }
}

pub(crate) fn neighbours(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    let up = (y > 0).then(|| p - w);
    let down = (y + 1 < h).then(|| p + w);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < w).then(|| p + 1);
    [up, left, right, down].into_iter().flatten()
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(sizes: Vec<usize>) -> Self {
        Self {
            parent: (0..sizes.len()).collect(),
            size: sizes,
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Attaches the group of `child` under the group of `root`.
    fn absorb(&mut self, root: usize, child: usize) {
        let (r, c) = (self.find(root), self.find(child));
        if r != c {
            self.parent[c] = r;
            self.size[r] += self.size[c];
        }
    }
}

/// Merges every 4-connected component smaller than
/// `min_region_frac · HW / n_labels` into its largest neighbouring region
/// (smallest components first) and relabels so that each label is a single
/// connected region. A map that already satisfies this keeps its label ids.
///
/// `n_labels` is the number of distinct labels of the input.
pub fn enforce_connectivity(labels: &LabelMap, min_region_frac: f64) -> LabelMap {
    let (h, w) = (labels.height, labels.width);
    let n = h * w;
    let (comp, count) = labels.components();
    let mut size = vec![0usize; count];
    let mut first_pixel = vec![usize::MAX; count];
    let mut comp_label = vec![0usize; count];
    for (p, &c) in comp.iter().enumerate() {
        size[c] += 1;
        if first_pixel[c] == usize::MAX {
            first_pixel[c] = p;
            comp_label[c] = labels.labels[p];
        }
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); count];
    for p in 0..n {
        let right = (p % w + 1 < w).then(|| p + 1);
        let down = (p + w < n).then(|| p + w);
        for q in [right, down].into_iter().flatten() {
            let (a, b) = (comp[p], comp[q]);
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    for adj in adjacency.iter_mut() {
        adj.sort_unstable();
        adj.dedup();
    }

    let threshold = min_region_frac * n as f64 / labels.distinct_labels().max(1) as f64;
    let mut uf = UnionFind::new(size.clone());
    let mut small: Vec<usize> = (0..count).filter(|&c| (size[c] as f64) < threshold).collect();
    small.sort_by_key(|&c| (size[c], first_pixel[c]));
    for c in small {
        let g = uf.find(c);
        if uf.size[g] as f64 >= threshold {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for &nb in &adjacency[c] {
            let root = uf.find(nb);
            if root == g {
                continue;
            }
            let cand = (uf.size[root], root);
            best = match best {
                Some((s, r)) if s > cand.0 || (s == cand.0 && first_pixel[r] <= first_pixel[root]) => Some((s, r)),
                _ => Some(cand),
            };
        }
        if let Some((_, target)) = best {
            uf.absorb(target, g);
        }
    }

    // Largest surviving group of each label keeps the label's position.
    let mut primary = vec![usize::MAX; labels.label_bound()];
    let roots: Vec<usize> = (0..count).map(|c| uf.find(c)).collect();
    for c in 0..count {
        if roots[c] != c {
            continue;
        }
        let l = comp_label[c];
        let cur = primary[l];
        if cur == usize::MAX || uf.size[c] > uf.size[cur] || (uf.size[c] == uf.size[cur] && first_pixel[c] < first_pixel[cur]) {
            primary[l] = c;
        }
    }
    let mut groups: Vec<usize> = (0..count).filter(|&c| roots[c] == c).collect();
    groups.sort_by_key(|&g| (comp_label[g], primary[comp_label[g]] != g, first_pixel[g]));
    let mut new_id = vec![0usize; count];
    for (id, &g) in groups.iter().enumerate() {
        new_id[g] = id;
    }
    LabelMap {
        height: h,
        width: w,
        labels: comp.iter().map(|&c| new_id[roots[c]]).collect(),
    }
}
