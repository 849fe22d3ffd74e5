use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::MiningError;

/// Binary token-presence features, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    tokens: Vec<String>,
    columns: Vec<Vec<bool>>,
    n_rows: usize,
}

impl FeatureMatrix {
    /// `rows[i][j]`: whether token `j` occurs in document `i`.
    pub fn from_rows(tokens: Vec<String>, rows: &[Vec<bool>]) -> Self {
        let n_rows = rows.len();
        let columns = (0..tokens.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        FeatureMatrix { tokens, columns, n_rows }
    }

    pub fn from_columns(tokens: Vec<String>, columns: Vec<Vec<bool>>, n_rows: usize) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == n_rows));
        FeatureMatrix { tokens, columns, n_rows }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, row: usize, feature: usize) -> bool {
        self.columns[feature][row]
    }

    /// Drops the named tokens.
    pub fn without(&self, removed: &std::collections::BTreeSet<String>) -> FeatureMatrix {
        let (tokens, columns) = self
            .tokens
            .iter()
            .zip(&self.columns)
            .filter(|(t, _)| !removed.contains(*t))
            .map(|(t, c)| (t.clone(), c.clone()))
            .unzip();
        FeatureMatrix { tokens, columns, n_rows: self.n_rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub token: String,
    /// Child for documents without the token.
    pub absent: usize,
    /// Child for documents containing the token.
    pub present: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// `[negatives, positives]` reaching this node.
    pub counts: [usize; 2],
    pub gini: f64,
    pub depth: usize,
    pub split: Option<Split>,
}

impl TreeNode {
    pub fn prediction(&self) -> bool {
        self.counts[1] > self.counts[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub max_depth: usize,
    /// Arena; the root is node 0.
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).map(|n| n.depth).max().unwrap_or(0)
    }

    /// Split tokens in pre-order, without repeats.
    pub fn tokens(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if let Some(s) = &self.nodes[i].split {
                if !out.contains(&s.token) {
                    out.push(s.token.clone());
                }
                stack.push(s.present);
                stack.push(s.absent);
            }
        }
        out
    }

    /// Predicts from a token-presence lookup.
    pub fn predict(&self, has: impl Fn(&str) -> bool) -> bool {
        let mut node = &self.nodes[0];
        while let Some(s) = &node.split {
            node = &self.nodes[if has(&s.token) { s.present } else { s.absent }];
        }
        node.prediction()
    }

    pub fn predict_row(&self, features: &FeatureMatrix, row: usize) -> bool {
        self.predict(|t| {
            features.tokens().iter().position(|f| f == t).is_some_and(|j| features.get(row, j))
        })
    }
}

pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// `Σ_child (n0² + n1²) / n_child` as an exact fraction. Higher means lower
/// weighted Gini impurity, since `Σ_child n_child·gini(child) = n - purity`.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn of(children: &[[usize; 2]]) -> Purity {
        let mut p = Purity { num: 0, den: 1 };
        for c in children {
            let n = (c[0] + c[1]) as u128;
            let sq = (c[0] as u128).pow(2) + (c[1] as u128).pow(2);
            // p + sq / n
            p = Purity { num: p.num * n + sq * p.den, den: p.den * n };
        }
        p
    }

    fn cmp(&self, other: &Purity) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Greedy Gini tree on binary presence features. At each node the split with
/// the lowest weighted child impurity is chosen; equal candidates resolve to
/// the lexicographically smallest token. Growth stops at `max_depth`, at a
/// pure node, or when no split strictly reduces impurity.
pub fn train_tree(features: &FeatureMatrix, labels: &[bool], max_depth: usize) -> Result<DecisionTree, MiningError> {
    if features.n_rows() != labels.len() {
        return Err(MiningError::LabelMismatch { rows: features.n_rows(), labels: labels.len() });
    }
    if labels.len() < 2 {
        return Err(MiningError::TooFewDocuments(labels.len()));
    }
    if labels.iter().all(|&y| y) {
        return Err(MiningError::SingleClass("positive"));
    }
    if labels.iter().all(|&y| !y) {
        return Err(MiningError::SingleClass("negative"));
    }
    let mut order: Vec<usize> = (0..features.tokens().len()).collect();
    order.sort_by(|&a, &b| features.tokens()[a].cmp(&features.tokens()[b]));

    let mut tree = DecisionTree { max_depth, nodes: Vec::new() };
    let all: Vec<usize> = (0..labels.len()).collect();
    grow(&mut tree, features, labels, &order, all, 0);
    Ok(tree)
}

fn class_counts(labels: &[bool], rows: &[usize]) -> [usize; 2] {
    let pos = rows.iter().filter(|&&r| labels[r]).count();
    [rows.len() - pos, pos]
}

fn grow(
    tree: &mut DecisionTree,
    features: &FeatureMatrix,
    labels: &[bool],
    order: &[usize],
    rows: Vec<usize>,
    depth: usize,
) -> usize {
    let counts = class_counts(labels, &rows);
    let id = tree.nodes.len();
    tree.nodes.push(TreeNode { counts, gini: gini(counts), depth, split: None });
    if depth >= tree.max_depth || counts[0] == 0 || counts[1] == 0 {
        return id;
    }

    let parent = Purity::of(&[counts]);
    let mut best: Option<(usize, Purity)> = None;
    for &f in order {
        let mut present = [0usize; 2];
        for &r in &rows {
            if features.get(r, f) {
                present[usize::from(labels[r])] += 1;
            }
        }
        let absent = [counts[0] - present[0], counts[1] - present[1]];
        if present[0] + present[1] == 0 || absent[0] + absent[1] == 0 {
            continue;
        }
        let purity = Purity::of(&[absent, present]);
        if purity.cmp(&parent) != Ordering::Greater {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| purity.cmp(b) == Ordering::Greater) {
            best = Some((f, purity));
        }
    }

    let Some((f, _)) = best else { return id };
    let (present, absent): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| features.get(r, f));
    let absent_id = grow(tree, features, labels, order, absent, depth + 1);
    let present_id = grow(tree, features, labels, order, present, depth + 1);
    tree.nodes[id].split = Some(Split { token: features.tokens()[f].clone(), absent: absent_id, present: present_id });
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(tokens: &[&str], rows: &[&[u8]]) -> FeatureMatrix {
        let rows: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect();
        FeatureMatrix::from_rows(tokens.iter().map(|s| s.to_string()).collect(), &rows)
    }

    #[test]
    fn lower_weighted_gini_wins() {
        // "a" splits the documents 3/1, "b" splits them 2/2.
        let f = fm(&["a", "b"], &[&[1, 1], &[1, 0], &[1, 1], &[0, 0]]);
        let y = [true, true, false, false];
        // a: present {T,T,F}, absent {F}: weighted gini = 3/4 * (1 - 4/9 - 1/9) = 1/3
        // b: present {T,F}, absent {T,F}: weighted gini = 1/2
        let tree = train_tree(&f, &y, 1).unwrap();
        assert_eq!(tree.root().split.as_ref().unwrap().token, "a");
    }

    #[test]
    fn ties_resolve_to_smallest_token() {
        let f = fm(&["zeta", "alpha"], &[&[1, 1], &[0, 0]]);
        let tree = train_tree(&f, &[true, false], 3).unwrap();
        assert_eq!(tree.root().split.as_ref().unwrap().token, "alpha");
        assert_eq!(tree.nodes.len(), 3);
    }

    #[test]
    fn stops_without_impurity_reduction() {
        let f = fm(&["a"], &[&[1], &[1], &[0], &[0]]);
        let tree = train_tree(&f, &[true, false, true, false], 3).unwrap();
        assert!(tree.root().split.is_none());
        assert!(tree.tokens().is_empty());
    }

    #[test]
    fn single_class_rejected() {
        let f = fm(&["a"], &[&[1], &[0]]);
        assert!(matches!(train_tree(&f, &[true, true], 2), Err(MiningError::SingleClass(_))));
        assert!(matches!(train_tree(&f, &[true], 2), Err(MiningError::LabelMismatch { .. })));
    }

    #[test]
    fn children_partition_parent_and_gini_does_not_increase() {
        let f = fm(
            &["a", "b", "c"],
            &[&[1, 0, 1], &[1, 1, 0], &[0, 1, 1], &[0, 0, 0], &[1, 1, 1], &[0, 1, 0], &[1, 0, 0]],
        );
        let y = [true, true, false, false, true, false, true];
        let tree = train_tree(&f, &y, 3).unwrap();
        assert!(tree.depth() <= 3);
        for n in &tree.nodes {
            if let Some(s) = &n.split {
                let (l, r) = (&tree.nodes[s.absent], &tree.nodes[s.present]);
                assert_eq!([l.counts[0] + r.counts[0], l.counts[1] + r.counts[1]], n.counts);
                let total = (n.counts[0] + n.counts[1]) as f64;
                let weighted = l.gini * (l.counts[0] + l.counts[1]) as f64 / total
                    + r.gini * (r.counts[0] + r.counts[1]) as f64 / total;
                assert!(weighted <= n.gini + 1e-12);
            }
        }
    }
}
