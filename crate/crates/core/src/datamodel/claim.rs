use crate::error::{Result, VgaError};
use crate::tensorcore::Tensor;

/// Label value for a claim verified to be false.
pub const FALSE_RUMOR: u8 = 1;
pub const NON_RUMOR: u8 = 0;

/// One source post with its propagation tree, attached image and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub id: String,
    pub label: u8,
    /// `(n+1) × D`; row 0 is the root post, rows `1..=n` are comments.
    pub node_embeddings: Tensor,
    /// `(parent, child)` reply/repost links.
    pub edges: Vec<(usize, usize)>,
    /// Embedding of text recognised inside the image, width `D`.
    pub ocr: Option<Tensor>,
    /// Raw `H×W×3` image with values in `[0, 1]`.
    pub image: Option<Tensor>,
    /// Precomputed image embedding, used instead of an image encoder.
    pub visual_embedding: Option<Tensor>,
}

impl Claim {
    pub fn num_nodes(&self) -> usize {
        self.node_embeddings.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.node_embeddings.cols()
    }

    /// Checks labels, widths and that `edges` form a tree rooted at node 0.
    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(self.structure(format!("label must be 0 or 1, found {}", self.label)));
        }
        if self.node_embeddings.rank() != 2 {
            return Err(VgaError::dim(format!(
                "claim '{}': embeddings must be a matrix, got shape {:?}",
                self.id,
                self.node_embeddings.shape()
            )));
        }
        if let Some(ocr) = &self.ocr {
            if ocr.numel() != self.embedding_dim() {
                return Err(VgaError::dim(format!(
                    "claim '{}': ocr width {} differs from embedding width {}",
                    self.id,
                    ocr.numel(),
                    self.embedding_dim()
                )));
            }
        }
        if let Some(img) = &self.image {
            if img.rank() != 3 || img.shape()[2] != 3 {
                return Err(VgaError::dim(format!(
                    "claim '{}': image must be H×W×3, got {:?}",
                    self.id,
                    img.shape()
                )));
            }
        }
        validate_tree(&self.edges, self.num_nodes()).map_err(|m| self.structure(m))
    }

    fn structure(&self, message: String) -> VgaError {
        VgaError::Structure {
            claim: self.id.clone(),
            message,
        }
    }
}

/// `Ok` iff `edges` make every node `1..n` reachable from node 0 through exactly one parent.
pub fn validate_tree(edges: &[(usize, usize)], n: usize) -> std::result::Result<(), String> {
    let mut parent = vec![None; n];
    for &(p, c) in edges {
        if p >= n || c >= n {
            return Err(format!("edge ({p}, {c}) references a node outside 0..{n}"));
        }
        if c == 0 {
            return Err(format!("edge ({p}, 0) points into the root"));
        }
        if p == c {
            return Err(format!("self-loop on node {p}"));
        }
        if let Some(q) = parent[c] {
            return Err(format!("node {c} has two parents ({q} and {p})"));
        }
        parent[c] = Some(p);
    }
    let mut children = vec![Vec::new(); n];
    for &(p, c) in edges {
        children[p].push(c);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        seen[v] = true;
        stack.extend(children[v].iter().copied());
    }
    match seen.iter().position(|s| !s) {
        Some(v) if parent[v].is_none() => Err(format!("node {v} has no parent")),
        Some(v) => Err(format!("node {v} is not reachable from the root (cycle)")),
        None => Ok(()),
    }
}

/// Symmetric normalised adjacency `D̃^{-1/2}(A + Aᵀ + I)D̃^{-1/2}` of an `n`-node tree.
pub fn normalized_adjacency(edges: &[(usize, usize)], n: usize) -> Result<Tensor> {
    if n == 0 {
        return Err(VgaError::EmptyInput("graph has no nodes".into()));
    }
    let mut a = Tensor::identity(n);
    let mut touched = vec![false; n];
    for &(p, c) in edges {
        if p >= n || c >= n {
            return Err(VgaError::Structure {
                claim: String::new(),
                message: format!("edge ({p}, {c}) references a node outside 0..{n}"),
            });
        }
        if p != c {
            a.set(p, c, 1.0);
            a.set(c, p, 1.0);
            touched[p] = true;
            touched[c] = true;
        }
    }
    if let Some(v) = (1..n).find(|&v| !touched[v]) {
        return Err(VgaError::Structure {
            claim: String::new(),
            message: format!("node {v} is isolated"),
        });
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / a.row_slice(i).iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.at(i, j);
            if v != 0.0 {
                a.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    Ok(a)
}

/// Text-supplemented root: the elementwise mean of root and OCR embeddings, or the root itself.
pub fn supplement_root(root: &[f64], ocr: Option<&[f64]>) -> Result<Vec<f64>> {
    match ocr {
        None => Ok(root.to_vec()),
        Some(o) if o.len() != root.len() => Err(VgaError::dim(format!(
            "ocr width {} differs from root width {}",
            o.len(),
            root.len()
        ))),
        Some(o) => Ok(root.iter().zip(o).map(|(r, o)| 0.5 * (r + o)).collect()),
    }
}

/// A claim's graph in model-ready form.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationGraph {
    /// Symmetrised 0/1 adjacency without self-loops.
    pub adjacency: Tensor,
    pub a_hat: Tensor,
    /// Node features with the root supplemented by OCR unless disabled.
    pub node_features: Tensor,
}

impl PropagationGraph {
    pub fn from_claim(claim: &Claim, use_ocr: bool) -> Result<Self> {
        let n = claim.num_nodes();
        let a_hat = normalized_adjacency(&claim.edges, n).map_err(|e| match e {
            VgaError::Structure { message, .. } => VgaError::Structure {
                claim: claim.id.clone(),
                message,
            },
            other => other,
        })?;
        let mut adjacency = Tensor::zeros(&[n, n]);
        for &(p, c) in &claim.edges {
            adjacency.set(p, c, 1.0);
            adjacency.set(c, p, 1.0);
        }
        let mut node_features = claim.node_embeddings.clone();
        if use_ocr {
            let root = supplement_root(
                claim.node_embeddings.row_slice(0),
                claim.ocr.as_ref().map(|o| o.data()),
            )?;
            let d = root.len();
            node_features.data_mut()[..d].copy_from_slice(&root);
        }
        Ok(PropagationGraph {
            adjacency,
            a_hat,
            node_features,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.a_hat.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_only_graph() {
        let a = normalized_adjacency(&[], 1).unwrap();
        assert_eq!(a.data(), &[1.0]);
    }

    #[test]
    fn three_node_path_matches_hand_values() {
        // Ã = A + I has degrees [2, 3, 2]
        let a = normalized_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let expected = [
            [0.5, 1.0 / 6f64.sqrt(), 0.0],
            [1.0 / 6f64.sqrt(), 1.0 / 3.0, 1.0 / 6f64.sqrt()],
            [0.0, 1.0 / 6f64.sqrt(), 0.5],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((a.at(i, j) - v).abs() < 1e-12, "({i},{j})");
            }
        }
        assert!((a.at(0, 1) - 0.40825).abs() < 1e-5);
    }

    #[test]
    fn isolated_node_is_rejected() {
        assert!(matches!(
            normalized_adjacency(&[(0, 1)], 3),
            Err(VgaError::Structure { .. })
        ));
    }

    #[test]
    fn tree_validation() {
        assert!(validate_tree(&[(0, 1), (0, 2), (2, 3)], 4).is_ok());
        assert!(validate_tree(&[], 1).is_ok());
        assert!(validate_tree(&[(0, 1), (2, 1), (0, 2)], 3)
            .unwrap_err()
            .contains("two parents"));
        assert!(validate_tree(&[(0, 1)], 3)
            .unwrap_err()
            .contains("no parent"));
        assert!(validate_tree(&[(1, 2), (2, 1)], 3).is_err());
        assert!(validate_tree(&[(0, 1), (2, 3), (3, 2)], 4)
            .unwrap_err()
            .contains("cycle"));
        assert!(validate_tree(&[(0, 1), (3, 2), (2, 3)], 4)
            .unwrap_err()
            .contains("cycle"));
        assert!(validate_tree(&[(1, 0)], 2).is_err());
        assert!(validate_tree(&[(0, 5)], 2).is_err());
    }

    #[test]
    fn supplement_root_examples() {
        assert_eq!(supplement_root(&[2.0, 0.0], None).unwrap(), vec![2.0, 0.0]);
        assert_eq!(
            supplement_root(&[2.0, 0.0], Some(&[0.0, 2.0])).unwrap(),
            vec![1.0, 1.0]
        );
        let r = [0.3, -1.7, 4.0];
        assert_eq!(supplement_root(&r, Some(&r)).unwrap(), r.to_vec());
        assert!(matches!(
            supplement_root(&r, Some(&[1.0])),
            Err(VgaError::Dimension(_))
        ));
    }

    #[test]
    fn graph_from_claim_supplements_root() {
        let claim = Claim {
            id: "c".into(),
            label: 0,
            node_embeddings: Tensor::new(vec![2, 2], vec![2.0, 0.0, 5.0, 5.0]).unwrap(),
            edges: vec![(0, 1)],
            ocr: Some(Tensor::vector(vec![0.0, 2.0])),
            image: None,
            visual_embedding: None,
        };
        let g = PropagationGraph::from_claim(&claim, true).unwrap();
        assert_eq!(g.node_features.data(), &[1.0, 1.0, 5.0, 5.0]);
        assert_eq!(g.adjacency.data(), &[0.0, 1.0, 1.0, 0.0]);
        let g = PropagationGraph::from_claim(&claim, false).unwrap();
        assert_eq!(g.node_features, claim.node_embeddings);
    }
}
