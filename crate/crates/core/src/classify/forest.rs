//! Random forest of CART trees with Gini impurity.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::rng::{self, SeededRng};

/// `1 - sum p_c^2` over the two classes.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Training class counts `[real, fake]` that reached this leaf.
    Leaf { counts: [u32; 2] },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Arena; the root is node 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf(&self, x: ArrayView1<f64>) -> [u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Leaf majority; a tie votes fake.
    pub fn predict_label(&self, x: ArrayView1<f64>) -> Label {
        let [real, fake] = self.leaf(x);
        Label::from_fake(fake >= real)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_sizes(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { counts } => Some(counts[0] + counts[1]),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 10,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be positive".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::Config("features_per_split must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_features(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
    pub n_features: usize,
    pub seed: u64,
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [Label],
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn counts_of(y: &[Label], rows: &[usize]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for &r in rows {
        c[y[r] as usize] += 1;
    }
    c
}

impl Grower<'_> {
    fn best_split(&self, rows: &[usize], parent: [usize; 2], rng: &mut SeededRng) -> Option<SplitChoice> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let parent_gini = gini(parent);
        let mut best: Option<SplitChoice> = None;
        let mut sorted = rows.to_vec();
        for feature in index::sample(rng, self.x.ncols(), self.mtry) {
            let col = self.x.column(feature);
            sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left = [0usize; 2];
            for i in 1..n {
                left[self.y[sorted[i - 1]] as usize] += 1;
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (lo, hi) = (col[sorted[i - 1]], col[sorted[i]]);
                if lo >= hi {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let impurity = (i as f64 * gini(left) + (n - i) as f64 * gini(right)) / n as f64;
                let gain = parent_gini - impurity;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(SplitChoice { feature, threshold, gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut SeededRng) -> usize {
        let counts = counts_of(self.y, &rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            counts: [counts[0] as u32, counts[1] as u32],
        });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some(split) = self.best_split(&rows, counts, rng) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[[i, split.feature]] <= split.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn check_xy(x: &ArrayView2<f64>, y: &[Label]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::Training("forest needs at least two rows".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::Shape("forest needs at least one feature".into()));
    }
    if !y.iter().any(|l| l.is_fake()) || !y.iter().any(|l| !l.is_fake()) {
        return Err(Error::Training("training data must contain both classes".into()));
    }
    Ok(())
}

/// Tree `t` draws from ChaCha stream `t` of `seed`, so trees are independent
/// of scheduling.
pub fn fit_forest(x: ArrayView2<f64>, y: &[Label], params: &ForestParams, seed: u64) -> Result<RandomForest> {
    fit_forest_with(x, y, params, seed, ExecMode::default())
}

pub fn fit_forest_with(
    x: ArrayView2<f64>,
    y: &[Label],
    params: &ForestParams,
    seed: u64,
    mode: ExecMode,
) -> Result<RandomForest> {
    params.validate()?;
    check_xy(&x, y)?;
    let n = x.nrows();
    let mtry = params.resolved_features(x.ncols());
    let trees = par::map_indices(mode, params.n_trees, |t| {
        let mut rng = rng::seeded_stream(seed, t as u64);
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut g = Grower {
            x,
            y,
            params,
            mtry,
            nodes: Vec::new(),
        };
        g.grow(rows, 0, &mut rng);
        DecisionTree { nodes: g.nodes }
    });
    Ok(RandomForest {
        trees,
        params: params.clone(),
        n_features: x.ncols(),
        seed,
    })
}

/// Fraction of trees voting fake for each row.
pub fn predict_forest(model: &RandomForest, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.n_features {
        return Err(Error::Shape(format!(
            "input has {} columns, forest expects {}",
            x.ncols(),
            model.n_features
        )));
    }
    let k = model.trees.len() as f64;
    Ok(x.rows()
        .into_iter()
        .map(|row| {
            let votes = model.trees.iter().filter(|t| t.predict_label(row).is_fake()).count();
            votes as f64 / k
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn gini_values() {
        assert_eq!(gini([5, 5]), 0.5);
        assert_eq!(gini([10, 0]), 0.0);
    }

    #[test]
    fn stump_separates_one_feature() {
        let x = array![[0.0], [0.5], [1.0], [10.0], [10.5], [11.0]];
        let y = [Label::Real, Label::Real, Label::Real, Label::Fake, Label::Fake, Label::Fake];
        let params = ForestParams {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: false,
        };
        let f = fit_forest(x.view(), &y, &params, 3).unwrap();
        assert_eq!(f.trees[0].depth(), 1);
        let p = predict_forest(&f, x.view()).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    fn votes_forest(fake_votes: usize, total: usize) -> RandomForest {
        let leaf = |fake: bool| DecisionTree {
            nodes: vec![Node::Leaf {
                counts: if fake { [0, 3] } else { [3, 0] },
            }],
        };
        RandomForest {
            trees: (0..total).map(|i| leaf(i < fake_votes)).collect(),
            params: ForestParams::default(),
            n_features: 1,
            seed: 0,
        }
    }

    #[test]
    fn vote_fractions() {
        let x = array![[0.0]];
        assert_eq!(predict_forest(&votes_forest(5, 5), x.view()).unwrap(), vec![1.0]);
        assert_eq!(predict_forest(&votes_forest(3, 5), x.view()).unwrap(), vec![0.6]);
        assert!(predict_forest(&votes_forest(3, 5), array![[0.0, 1.0]].view()).is_err());
    }

    #[test]
    fn leaf_tie_votes_fake() {
        let t = DecisionTree {
            nodes: vec![Node::Leaf { counts: [2, 2] }],
        };
        assert_eq!(t.predict_label(array![0.0].view()), Label::Fake);
    }

    fn noisy_data(seed: u64) -> (Array2<f64>, Vec<Label>) {
        let mut r = rng::seeded(seed);
        let y: Vec<Label> = (0..80).map(|i| Label::from_fake(i % 2 == 0)).collect();
        let x = Array2::from_shape_fn((80, 5), |(i, k)| {
            let shift = if y[i].is_fake() && k < 2 { 1.0 } else { 0.0 };
            shift + r.random_range(-1.0..1.0)
        });
        (x, y)
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let (x, y) = noisy_data(1);
        let p = ForestParams {
            n_trees: 9,
            ..ForestParams::default()
        };
        let a = fit_forest_with(x.view(), &y, &p, 11, ExecMode::Sequential).unwrap();
        let b = fit_forest_with(x.view(), &y, &p, 11, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(x.view(), &y, &p, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn structural_invariants() {
        let (x, y) = noisy_data(2);
        let p = ForestParams {
            n_trees: 6,
            max_depth: 4,
            min_samples_leaf: 3,
            ..ForestParams::default()
        };
        let f = fit_forest(x.view(), &y, &p, 5).unwrap();
        for t in &f.trees {
            assert!(t.depth() <= 4);
            assert!(t.leaf_sizes().iter().all(|&s| s >= 3));
            for n in &t.nodes {
                if let Node::Split { feature, .. } = n {
                    assert!(*feature < 5);
                }
            }
        }
    }

    #[test]
    fn deep_tree_fits_training_data() {
        let (x, y) = noisy_data(3);
        let p = ForestParams {
            n_trees: 1,
            max_depth: 64,
            min_samples_leaf: 1,
            features_per_split: Some(5),
            bootstrap: false,
        };
        let f = fit_forest(x.view(), &y, &p, 0).unwrap();
        let pr = predict_forest(&f, x.view()).unwrap();
        assert!(pr.iter().zip(&y).all(|(p, l)| (*p >= 0.5) == l.is_fake()));
    }

    #[test]
    fn rejects_single_class() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            fit_forest(x.view(), &[Label::Fake, Label::Fake], &ForestParams::default(), 0),
            Err(Error::Training(_))
        ));
    }
}
