//! Index bookkeeping shared by training and inference: which unlearned
//! sources act on which nodes, and which (source, target) pairs each loss
//! term evaluates.

use crate::error::{Error, Result};
use crate::graph::{Graph, RequestKind, UnlearnRequest};

/// For every node `i`, the sorted sources `j` whose influence `f1(j, i)` is
/// subtracted from `i`.
///
/// Node requests: unlearned nodes within `radius` hops of `i`, including `i`
/// itself when it is unlearned (distance 0); `None` means every unlearned
/// node. Edge requests: the opposite endpoint of every removed edge at `i`.
pub fn source_lists(
    g: &Graph,
    kind: &RequestKind,
    radius: Option<usize>,
) -> Result<Vec<Vec<usize>>> {
    let n = g.n();
    let mut sources = vec![Vec::new(); n];
    match kind {
        RequestKind::Nodes(u) => {
            if let Some(&bad) = u.iter().find(|&&j| j >= n) {
                return Err(Error::Index(format!("unlearned node {bad} outside graph")));
            }
            match radius {
                Some(0) => return Err(Error::Config("hop_radius must be >= 1".into())),
                Some(r) => {
                    for &j in u {
                        sources[j].push(j);
                        for i in g.within_hops(j, r) {
                            sources[i].push(j);
                        }
                    }
                }
                None => {
                    for s in sources.iter_mut() {
                        s.extend_from_slice(u);
                    }
                }
            }
        }
        RequestKind::Edges(edges) => {
            for &(a, b) in edges {
                if !g.has_edge(a, b) {
                    return Err(Error::InvalidRequest(format!(
                        "edge ({a}, {b}) is not in the graph"
                    )));
                }
                sources[b].push(a);
                sources[a].push(b);
            }
        }
    }
    for s in sources.iter_mut() {
        s.sort_unstable();
        s.dedup();
    }
    Ok(sources)
}

/// Mask of nodes that survive the request.
pub(crate) fn retained_mask(n: usize, kind: &RequestKind) -> Vec<bool> {
    let mut keep = vec![true; n];
    if let RequestKind::Nodes(u) = kind {
        for &j in u {
            keep[j] = false;
        }
    }
    keep
}

/// The `ceil(frac · |retained|)` retained nodes of highest degree, ties
/// broken by smaller id, returned in ascending id order.
pub fn high_degree_set(g: &Graph, retained: &[bool], frac: f64) -> Result<Vec<usize>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Config(format!(
            "local_top_frac must lie in (0, 1], got {frac}"
        )));
    }
    let mut pool: Vec<usize> = (0..g.n()).filter(|&i| retained[i]).collect();
    if pool.is_empty() {
        return Err(Error::InvalidRequest(
            "no retained nodes for the local loss".into(),
        ));
    }
    let k = ((frac * pool.len() as f64).ceil() as usize).clamp(1, pool.len());
    pool.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    pool.truncate(k);
    pool.sort_unstable();
    Ok(pool)
}

fn push_group(
    pairs: &mut Vec<(usize, usize)>,
    node: usize,
    it: &mut dyn Iterator<Item = (usize, usize)>,
) -> Group {
    let start = pairs.len();
    pairs.extend(it);
    Group {
        node,
        start,
        end: pairs.len(),
    }
}

/// A node together with its contiguous run of rows in [`PairPlan::pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Group {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

/// All `(j, i)` pairs one training step evaluates, laid out as the inter
/// block, then the local block, then the gradient-ascent block.
#[derive(Debug, Clone)]
pub(crate) struct PairPlan {
    pub pairs: Vec<(usize, usize)>,
    pub inter: Vec<Group>,
    pub local: Vec<Group>,
    pub plus: Vec<Group>,
}

impl PairPlan {
    pub fn inter_rows(&self) -> usize {
        self.inter.last().map_or(0, |g| g.end)
    }

    pub fn build(
        g: &Graph,
        request: &UnlearnRequest,
        sources: &[Vec<usize>],
        local_top_frac: f64,
        inter_plus: bool,
    ) -> Result<PairPlan> {
        let mut pairs = Vec::new();

        // f1(m, i) with the target m in the j-slot, summed over N(m).
        let targets: Vec<usize> = match &request.kind {
            RequestKind::Nodes(u) if !inter_plus => u.clone(),
            _ => (0..g.n()).collect(),
        };
        let mut inter = Vec::new();
        for &m in &targets {
            if g.degree(m) == 0 {
                continue;
            }
            inter.push(push_group(
                &mut pairs,
                m,
                &mut g.neighbors(m).iter().map(|&i| (m, i)),
            ));
        }
        if inter.is_empty() {
            return Err(Error::InvalidRequest(
                "no reconstruction target has a neighbor".into(),
            ));
        }

        let retained = retained_mask(g.n(), &request.kind);
        let mut local = Vec::new();
        for p in high_degree_set(g, &retained, local_top_frac)? {
            local.push(push_group(
                &mut pairs,
                p,
                &mut sources[p].iter().map(|&j| (j, p)),
            ));
        }

        let mut plus = Vec::new();
        if let RequestKind::Nodes(u) = &request.kind {
            for &j in u {
                plus.push(push_group(
                    &mut pairs,
                    j,
                    &mut sources[j].iter().map(|&s| (s, j)),
                ));
            }
        }
        Ok(PairPlan {
            pairs,
            inter,
            local,
            plus,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::from_edges;

    fn path5() -> Graph {
        from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)])
    }

    #[test]
    fn sources_respect_radius_and_include_self() {
        let g = path5();
        let kind = RequestKind::Nodes(vec![0]);
        let s = source_lists(&g, &kind, Some(2)).unwrap();
        assert_eq!(s, vec![vec![0], vec![0], vec![0], vec![], vec![]]);
        let s = source_lists(&g, &kind, None).unwrap();
        assert!(s.iter().all(|v| v == &vec![0]));
        assert!(source_lists(&g, &kind, Some(0)).is_err());
    }

    #[test]
    fn edge_sources_are_symmetric() {
        let g = path5();
        let s = source_lists(&g, &RequestKind::Edges(vec![(1, 2)]), Some(2)).unwrap();
        assert_eq!(s[1], vec![2]);
        assert_eq!(s[2], vec![1]);
        assert!(s[0].is_empty());
        assert!(source_lists(&g, &RequestKind::Edges(vec![(0, 2)]), None).is_err());
    }

    #[test]
    fn high_degree_ties_break_by_id() {
        // star centre 0 (deg 3), leaves 1..=3 (deg 1), node 4 isolated
        let g = from_edges(5, &[(0, 1), (0, 2), (0, 3)]);
        let keep = vec![true; 5];
        assert_eq!(high_degree_set(&g, &keep, 0.2).unwrap(), vec![0]);
        assert_eq!(high_degree_set(&g, &keep, 0.5).unwrap(), vec![0, 1, 2]);
        let keep = vec![false, true, true, true, true];
        assert_eq!(high_degree_set(&g, &keep, 0.2).unwrap(), vec![1]);
        assert!(high_degree_set(&g, &[false; 5], 0.2).is_err());
        assert!(high_degree_set(&g, &keep, 0.0).is_err());
    }

    #[test]
    fn plan_layout_is_contiguous() {
        let g = path5();
        let req = UnlearnRequest {
            kind: RequestKind::Nodes(vec![0, 4]),
            beta: 0.5,
        };
        let src = source_lists(&g, &req.kind, Some(2)).unwrap();
        let plan = PairPlan::build(&g, &req, &src, 1.0, false).unwrap();
        assert_eq!(
            plan.inter.iter().map(|g| g.node).collect::<Vec<_>>(),
            vec![0, 4]
        );
        assert_eq!(plan.inter_rows(), 2);
        assert_eq!(plan.local.len(), 3);
        let mut cursor = 0;
        for grp in plan.inter.iter().chain(&plan.local).chain(&plan.plus) {
            assert_eq!(grp.start, cursor);
            cursor = grp.end;
        }
        assert_eq!(cursor, plan.pairs.len());
        // node 2 is two hops from both 0 and 4
        let two = plan.local.iter().find(|g| g.node == 2).unwrap();
        assert_eq!(&plan.pairs[two.start..two.end], &[(0, 2), (4, 2)]);
        let plan = PairPlan::build(&g, &req, &src, 1.0, true).unwrap();
        assert_eq!(plan.inter.len(), 5);
    }
}
