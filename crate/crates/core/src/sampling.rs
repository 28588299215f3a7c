//! Reachable-belief sampling, distance-based subsampling, and the KNN
//! locality graph.
//!
//! All compression algorithms operate on a column-stacked matrix of sampled
//! beliefs. Sampling simulates uniform-random actions from the initial
//! belief, draws observations from their posterior likelihood and applies the
//! Bayes update; episodes restart at the initial belief when `horizon_cap`
//! steps have been taken. Episode sub-seeds are derived from
//! `(seed, episode)` and episodes are concatenated in index order, so the
//! result is identical for any worker-thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pomdp::{Belief, Pomdp};
use crate::rng::{rng_for, sample_categorical};

/// Default per-episode step cap.
pub const DEFAULT_HORIZON_CAP: usize = 250;

/// How the belief set was produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleProvenance {
    pub seed: u64,
    pub policy: String,
    pub horizon_cap: usize,
}

/// Column-stacked set of sampled beliefs (|S| x m).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMatrix {
    data: DMatrix<f64>,
    pub provenance: SampleProvenance,
}

impl BeliefMatrix {
    pub fn from_columns(cols: &[Belief], provenance: SampleProvenance) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::EmptyInput("belief matrix with zero columns".into()));
        }
        let n = cols[0].len();
        let data = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].probs()[i]);
        Ok(BeliefMatrix { data, provenance })
    }

    pub fn n_states(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.data.column(j).into_owned()
    }

    pub fn belief(&self, j: usize) -> Belief {
        Belief::new(self.column(j)).expect("stored column is a belief")
    }

    pub(crate) fn from_matrix(data: DMatrix<f64>, provenance: SampleProvenance) -> Self {
        BeliefMatrix { data, provenance }
    }
}

/// Symmetrised K-nearest-neighbour graph over belief columns.
///
/// Each node selects exactly `min(K, m-1)` nearest columns (Euclidean
/// distance, ties to the lower index); the stored adjacency keeps an edge
/// when either endpoint selected it, so post-symmetrisation degrees can
/// exceed K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighbourhoodGraph {
    pub k: usize,
    edges: Vec<Vec<usize>>,
}

impl NeighbourhoodGraph {
    pub fn neighbours(&self, node: usize) -> &[usize] {
        &self.edges[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edge list with i < j.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nbrs) in self.edges.iter().enumerate() {
            for &j in nbrs {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Simulates `m` time-step beliefs under uniform-random actions.
pub fn sample_beliefs(
    model: &Pomdp,
    m: usize,
    seed: u64,
    horizon_cap: usize,
) -> Result<BeliefMatrix> {
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::Invalid(report));
    }
    if m == 0 {
        return Err(Error::Config("sample count m must be >= 1".into()));
    }
    if horizon_cap == 0 {
        return Err(Error::Config("horizon_cap must be >= 1".into()));
    }

    let per_episode = horizon_cap + 1;
    let n_episodes = m.div_ceil(per_episode);
    let episodes: Vec<Vec<Belief>> = (0..n_episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = rng_for(seed, e as u64);
            let mut beliefs = Vec::with_capacity(per_episode);
            let mut b = model.initial_belief.clone();
            beliefs.push(b.clone());
            for _ in 0..horizon_cap {
                let a = rng.random_range(0..model.n_actions);
                let likelihoods: Vec<f64> = (0..model.n_obs)
                    .map(|z| model.observation_likelihood(&b, a, z))
                    .collect();
                let z = sample_categorical(&mut rng, &likelihoods);
                match model.belief_update(&b, a, z) {
                    Ok(next) => {
                        b = next;
                        beliefs.push(b.clone());
                    }
                    // Impossible observation: restart the episode here. Cannot
                    // happen when z is drawn from the likelihood, kept as a
                    // defensive path.
                    Err(Error::ImpossibleObservation { .. }) => break,
                    Err(e) => panic!("belief update failed during sampling: {e}"),
                }
            }
            beliefs
        })
        .collect();

    let mut cols: Vec<Belief> = Vec::with_capacity(m);
    'outer: for ep in episodes {
        for b in ep {
            cols.push(b);
            if cols.len() == m {
                break 'outer;
            }
        }
    }
    // Short episodes (defensive restarts) could leave us short; top up with
    // fresh episodes sequentially.
    let mut extra = n_episodes as u64;
    while cols.len() < m {
        let mut rng = rng_for(seed, extra);
        extra += 1;
        let mut b = model.initial_belief.clone();
        cols.push(b.clone());
        for _ in 0..horizon_cap {
            if cols.len() == m {
                break;
            }
            let a = rng.random_range(0..model.n_actions);
            let likelihoods: Vec<f64> = (0..model.n_obs)
                .map(|z| model.observation_likelihood(&b, a, z))
                .collect();
            let z = sample_categorical(&mut rng, &likelihoods);
            match model.belief_update(&b, a, z) {
                Ok(next) => {
                    b = next;
                    cols.push(b.clone());
                }
                Err(_) => break,
            }
        }
    }

    BeliefMatrix::from_columns(
        &cols,
        SampleProvenance {
            seed,
            policy: "uniform-random".into(),
            horizon_cap,
        },
    )
}

/// Greedy pass in column order: a column is kept iff its Euclidean distance
/// to every previously kept column is at least `delta`. `delta = 0` keeps
/// everything.
pub fn delta_subsample(beliefs: &BeliefMatrix, delta: f64) -> Result<BeliefMatrix> {
    if delta < 0.0 {
        return Err(Error::Config(format!("delta must be >= 0, got {delta}")));
    }
    let m = beliefs.len();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..m {
        let col = beliefs.matrix().column(j);
        let ok = kept
            .iter()
            .all(|&i| (col - beliefs.matrix().column(i)).norm() >= delta);
        if ok {
            kept.push(j);
        }
    }
    let n = beliefs.n_states();
    let data = DMatrix::from_fn(n, kept.len(), |i, jj| beliefs.matrix()[(i, kept[jj])]);
    Ok(BeliefMatrix::from_matrix(data, beliefs.provenance.clone()))
}

/// Per-node K nearest columns by Euclidean distance, ties to the lower
/// index, symmetrised.
pub fn knn_graph(beliefs: &BeliefMatrix, k: usize) -> Result<NeighbourhoodGraph> {
    let m = beliefs.len();
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    if k >= m {
        return Err(Error::Config(format!(
            "K = {k} must be smaller than the column count m = {m}"
        )));
    }
    let select = k.min(m - 1);
    let selections: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ci = beliefs.matrix().column(i);
            let mut dists: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| ((beliefs.matrix().column(j) - ci).norm(), j))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            dists.truncate(select);
            dists.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut edges: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); m];
    for (i, sel) in selections.iter().enumerate() {
        for &j in sel {
            edges[i].insert(j);
            edges[j].insert(i);
        }
    }
    Ok(NeighbourhoodGraph {
        k,
        edges: edges.into_iter().map(|s| s.into_iter().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::synth_lowrank_pomdp;
    use nalgebra::DVector;

    #[test]
    fn m_one_returns_initial_belief() {
        let model = crate::fixtures::random_pomdp(4, 2, 3, 1);
        let bm = sample_beliefs(&model, 1, 5, 20).unwrap();
        assert_eq!(bm.len(), 1);
        assert!((bm.column(0) - model.initial_belief.probs()).norm() < 1e-15);
    }

    #[test]
    fn deterministic_chain_yields_forward_beliefs() {
        // 4-state chain, single action, deterministic shift with absorbing
        // end, deterministic observation of the successor.
        let n = 4;
        let mut t = nalgebra::DMatrix::zeros(n, n);
        for s in 0..n - 1 {
            t[(s, s + 1)] = 1.0;
        }
        t[(n - 1, n - 1)] = 1.0;
        let model = Pomdp {
            n_states: n,
            n_actions: 1,
            n_obs: n,
            transition: vec![t],
            observation: vec![nalgebra::DMatrix::identity(n, n)],
            reward: nalgebra::DMatrix::zeros(n, 1),
            discount: 0.9,
            initial_belief: Belief::indicator(n, 0),
        };
        let bm = sample_beliefs(&model, 4, 3, 10).unwrap();
        for (step, expect) in (0..4).enumerate() {
            assert!((bm.column(step) - Belief::indicator(n, expect).probs()).norm() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = crate::fixtures::random_pomdp(5, 2, 3, 9);
        let a = sample_beliefs(&model, 57, 42, 10).unwrap();
        let b = sample_beliefs(&model, 57, 42, 10).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn lowrank_fixture_beliefs_have_rank_k() {
        let model = synth_lowrank_pomdp(2, 10, 4).unwrap();
        let bm = sample_beliefs(&model, 500, 11, 25).unwrap();
        let svd = bm.matrix().clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] > 1e-8, "second singular value unexpectedly tiny");
        for &s in &sv[2..] {
            assert!(s < 1e-8, "rank exceeds 2: sigma = {s}");
        }
    }

    #[test]
    fn delta_zero_keeps_all() {
        let model = crate::fixtures::random_pomdp(4, 2, 3, 2);
        let bm = sample_beliefs(&model, 30, 8, 10).unwrap();
        let kept = delta_subsample(&bm, 0.0).unwrap();
        assert_eq!(kept.matrix(), bm.matrix());
    }

    #[test]
    fn duplicate_columns_collapse() {
        let b = Belief::uniform(3);
        let bm = BeliefMatrix::from_columns(
            &[b.clone(), b.clone()],
            SampleProvenance {
                seed: 0,
                policy: "manual".into(),
                horizon_cap: 0,
            },
        )
        .unwrap();
        let kept = delta_subsample(&bm, 1e-6).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn greedy_pass_hand_trace() {
        // Collinear beliefs with pairwise distances 0.1, 0.1, 0.2 under
        // delta = 0.15: the first and third are kept.
        let mk = |p: f64| Belief::new(DVector::from_vec(vec![p, 1.0 - p])).unwrap();
        let d = 0.1 / 2f64.sqrt(); // step in p giving Euclidean distance 0.1
        let bm = BeliefMatrix::from_columns(
            &[mk(0.3), mk(0.3 + d), mk(0.3 + 2.0 * d)],
            SampleProvenance {
                seed: 0,
                policy: "manual".into(),
                horizon_cap: 0,
            },
        )
        .unwrap();
        let kept = delta_subsample(&bm, 0.15).unwrap();
        assert_eq!(kept.len(), 2);
        assert!((kept.column(0) - bm.column(0)).norm() < 1e-15);
        assert!((kept.column(1) - bm.column(2)).norm() < 1e-15);
    }

    #[test]
    fn subsample_pairwise_distances_respect_delta() {
        let model = crate::fixtures::random_pomdp(5, 2, 4, 77);
        let bm = sample_beliefs(&model, 120, 3, 15).unwrap();
        let delta = 0.05;
        let kept = delta_subsample(&bm, delta).unwrap();
        for i in 0..kept.len() {
            for j in (i + 1)..kept.len() {
                let d = (kept.column(i) - kept.column(j)).norm();
                assert!(d >= delta - 1e-12, "columns {i},{j} are {d} apart");
            }
        }
    }

    #[test]
    fn knn_two_nodes_single_edge() {
        let bm = BeliefMatrix::from_columns(
            &[Belief::indicator(2, 0), Belief::indicator(2, 1)],
            SampleProvenance {
                seed: 0,
                policy: "manual".into(),
                horizon_cap: 0,
            },
        )
        .unwrap();
        let g = knn_graph(&bm, 1).unwrap();
        assert_eq!(g.edge_pairs(), vec![(0, 1)]);
    }

    #[test]
    fn knn_tie_breaks_to_lower_index() {
        // Equidistant triple: each node selects its lowest-index peer.
        let cols = [
            Belief::indicator(3, 0),
            Belief::indicator(3, 1),
            Belief::indicator(3, 2),
        ];
        let bm = BeliefMatrix::from_columns(
            &cols,
            SampleProvenance {
                seed: 0,
                policy: "manual".into(),
                horizon_cap: 0,
            },
        )
        .unwrap();
        let g = knn_graph(&bm, 1).unwrap();
        // 0 selects 1, 1 selects 0, 2 selects 0; symmetrised.
        assert_eq!(g.neighbours(0), &[1, 2]);
        assert_eq!(g.neighbours(1), &[0]);
        assert_eq!(g.neighbours(2), &[0]);
    }

    #[test]
    fn knn_matches_brute_force() {
        let model = crate::fixtures::random_pomdp(6, 2, 4, 13);
        let bm = sample_beliefs(&model, 20, 17, 10).unwrap();
        let g = knn_graph(&bm, 3).unwrap();
        // Exhaustive pairwise check.
        let m = bm.len();
        let mut expect: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); m];
        for i in 0..m {
            let mut d: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| ((bm.column(j) - bm.column(i)).norm(), j))
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in d.iter().take(3) {
                expect[i].insert(j);
                expect[j].insert(i);
            }
        }
        for i in 0..m {
            let got: Vec<usize> = g.neighbours(i).to_vec();
            let want: Vec<usize> = expect[i].iter().copied().collect();
            assert_eq!(got, want, "node {i}");
        }
    }

    #[test]
    fn knn_rejects_k_not_below_m() {
        let bm = BeliefMatrix::from_columns(
            &[Belief::uniform(2), Belief::indicator(2, 0)],
            SampleProvenance {
                seed: 0,
                policy: "manual".into(),
                horizon_cap: 0,
            },
        )
        .unwrap();
        assert!(knn_graph(&bm, 2).is_err());
    }
}
