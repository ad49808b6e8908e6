//! Property tests for structural invariants.

use std::collections::BTreeSet;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vrjp::beta::{laplace_closed_form, sample, sample_sequential, NuParams};
use vrjp::graph::{enumerate_paths, wire_restrict, LatticeBox, Path, WeightedGraph};
use vrjp::harness::{replicate, word_chi2};
use vrjp::linalg::Envelope;
use vrjp::processes::{quenched_rates, simulate_vrjp, time_change, Stop, TimeChange};
use vrjp::schrodinger::{check_identities, GreenBundle};

/// Connected graph: a random spanning tree plus optional extra edges.
fn graph_strategy(max_n: usize) -> impl Strategy<Value = WeightedGraph> {
    (3..=max_n).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|k| 0..k).collect();
        let tree_w = prop::collection::vec(0.3f64..3.0, n - 1);
        let extra = prop::collection::vec((0..n, 0..n, 0.3f64..3.0), 0..n);
        (Just(n), parents, tree_w, extra).prop_map(|(n, parents, tree_w, extra)| {
            let mut edges = std::collections::BTreeMap::new();
            for (k, (&p, &w)) in parents.iter().zip(&tree_w).enumerate() {
                edges.insert((p, k + 1), w);
            }
            for (a, b, w) in extra {
                if a != b {
                    edges.entry((a.min(b), a.max(b))).or_insert(w);
                }
            }
            WeightedGraph::new(n, edges.into_iter().map(|((a, b), w)| (a, b, w))).unwrap()
        })
    })
}

fn dense_h(params: &NuParams, beta: &[f64]) -> DMatrix<f64> {
    let mut h = -params.to_dense();
    for (i, b) in beta.iter().enumerate() {
        h[(i, i)] += 2.0 * b;
    }
    h
}

fn brute_force_paths(g: &WeightedGraph, start: usize, stop: usize, max_len: usize) -> (BTreeSet<Path>, BTreeSet<Path>) {
    let mut hitting = BTreeSet::new();
    let mut avoiding = BTreeSet::new();
    let mut frontier = vec![vec![start]];
    for _ in 0..=max_len {
        let mut next = Vec::new();
        for seq in frontier {
            let last = *seq.last().unwrap();
            if last == stop {
                hitting.insert(Path(seq));
                continue;
            }
            avoiding.insert(Path(seq.clone()));
            if seq.len() <= max_len {
                for nb in g.neighbors(last) {
                    let mut s = seq.clone();
                    s.push(nb.vertex);
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    (hitting, avoiding)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wiring_conserves_conductance(g in graph_strategy(8), mask in 1u32..255) {
        let n = g.vertex_count();
        let subset: Vec<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
        prop_assume!(!subset.is_empty() && subset.len() < n);
        let wired = wire_restrict(&g, &subset);
        prop_assume!(wired.is_ok());
        let wired = wired.unwrap();
        let mut crossing = 0.0;
        for e in g.edges() {
            match (wired.local(e.i), wired.local(e.j)) {
                (Some(a), Some(b)) => prop_assert_eq!(wired.base.weight(a, b), Some(e.w)),
                (None, None) => {}
                _ => crossing += e.w,
            }
        }
        for (k, &v) in wired.origin.iter().enumerate() {
            assert_relative_eq!(wired.base.total_weight(k), g.total_weight(v), max_relative = 1e-12);
        }
        assert_relative_eq!(wired.base.total_weight(wired.delta), crossing, max_relative = 1e-12);
    }

    #[test]
    fn wiring_is_nested(g in graph_strategy(8), outer in 1u32..255, inner in 1u32..255) {
        let n = g.vertex_count();
        let a: Vec<usize> = (0..n).filter(|v| outer >> v & 1 == 1).collect();
        let b: Vec<usize> = a.iter().copied().filter(|v| inner >> v & 1 == 1).collect();
        prop_assume!(!b.is_empty() && a.len() < n);
        let (wa, direct) = (wire_restrict(&g, &a), wire_restrict(&g, &b));
        prop_assume!(wa.is_ok() && direct.is_ok());
        let (wa, direct) = (wa.unwrap(), direct.unwrap());
        let local_b: Vec<usize> = b.iter().map(|&v| wa.local(v).unwrap()).collect();
        let twice = wire_restrict(&wa.base, &local_b).unwrap();
        prop_assert_eq!(twice.delta, direct.delta);
        for i in 0..=direct.delta {
            for j in 0..=direct.delta {
                let (x, y) = (twice.base.weight(i, j).unwrap_or(0.0), direct.base.weight(i, j).unwrap_or(0.0));
                assert_relative_eq!(x, y, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn path_enumeration_matches_brute_force(g in graph_strategy(5), start in 0usize..5, stop in 0usize..5, len in 0usize..6) {
        let n = g.vertex_count();
        let (start, stop) = (start % n, stop % n);
        prop_assume!(start != stop);
        let e = enumerate_paths(&g, start, &[stop], len).unwrap();
        let (hitting, avoiding) = brute_force_paths(&g, start, stop, len);
        let got_h: BTreeSet<Path> = e.hitting.iter().cloned().collect();
        let got_a: BTreeSet<Path> = e.avoiding.iter().cloned().collect();
        prop_assert_eq!(got_h.len(), e.hitting.len());
        prop_assert_eq!(got_h, hitting);
        prop_assert_eq!(got_a, avoiding);
    }

    #[test]
    fn laplace_is_relabeling_invariant_and_at_most_one(
        g in graph_strategy(6),
        seed in any::<u64>(),
        lambda in prop::collection::vec(0.0f64..4.0, 6),
        diag in prop::collection::vec(0.0f64..1.0, 6),
        eta in prop::collection::vec(0.0f64..2.0, 6),
    ) {
        let n = g.vertex_count();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j, e.w)).collect();
        let params = NuParams::new(diag[..n].to_vec(), &pairs, eta[..n].to_vec()).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let relabeled_pairs: Vec<_> = pairs.iter().map(|&(i, j, w)| (perm[i], perm[j], w)).collect();
        let mut d2 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for v in 0..n {
            d2[perm[v]] = diag[v];
            e2[perm[v]] = eta[v];
            l2[perm[v]] = lambda[v];
        }
        let relabeled = NuParams::new(d2, &relabeled_pairs, e2).unwrap();
        let x = laplace_closed_form(&params, &lambda[..n]).unwrap();
        let y = laplace_closed_form(&relabeled, &l2).unwrap();
        assert_relative_eq!(x, y, max_relative = 1e-12);
        prop_assert!(x > 0.0 && x <= 1.0 + 1e-15);
    }

    #[test]
    fn envelope_solve_matches_dense(g in graph_strategy(8), shift in 0.1f64..2.0, rhs in prop::collection::vec(-1.0f64..1.0, 8)) {
        let n = g.vertex_count();
        let mut m = -g.weight_matrix();
        for i in 0..n {
            m[(i, i)] = g.total_weight(i) + shift;
        }
        let ldl = Envelope::from_dense(&m).factor(0.0).unwrap();
        let x = ldl.solve(&rhs[..n]);
        let reference = m.clone().lu().solve(&nalgebra::DVector::from_column_slice(&rhs[..n])).unwrap();
        for i in 0..n {
            prop_assert!((x[i] - reference[i]).abs() <= 1e-10 * (1.0 + reference[i].abs()));
        }
        assert_relative_eq!(ldl.log_det(), m.determinant().ln(), max_relative = 1e-10);
    }

    #[test]
    fn sampled_operator_is_positive(g in graph_strategy(7), seed in any::<u64>(), eta in prop::collection::vec(0.0f64..1.5, 7)) {
        let n = g.vertex_count();
        let params = NuParams::from_graph(&g, eta[..n].to_vec()).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let s = sample_sequential(&params, &order, &mut rng).unwrap();
        let h = dense_h(&params, &s.beta);
        let bottom = h.symmetric_eigen().eigenvalues.min();
        // the certificate is a sufficient condition only
        if s.psd_certificate {
            prop_assert!(bottom > 0.0, "certified but lambda_min = {bottom}");
        }
        prop_assert!(s.factor.pivots().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn identities_hold_on_random_subsets(seed in any::<u64>(), mask in 1u32..(1 << 25)) {
        let outer = LatticeBox::centered(2, 2).unwrap();
        let g = outer.graph(1.0).unwrap();
        let subset: Vec<usize> = (0..outer.len()).filter(|v| mask >> v & 1 == 1).collect();
        prop_assume!(subset.len() < outer.len());
        let wired = wire_restrict(&g, &subset);
        prop_assume!(wired.is_ok());
        let wired = wired.unwrap();
        let params = NuParams::wired_marginal(&wired).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = sample(&params, &mut rng).unwrap().beta;
        let bundle = GreenBundle::new(&wired, &beta, 0.7).unwrap();
        for i0 in 0..wired.delta {
            let r = check_identities(&bundle, i0).unwrap();
            prop_assert!(r.max() <= 1e-9, "{r:?}");
        }
    }

    #[test]
    fn quenched_chain_is_reversible(seed in any::<u64>()) {
        let (_, wired) = vrjp::graph::wired_lattice_box(2, 1, 1.3).unwrap();
        let params = NuParams::wired_marginal(&wired).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = sample(&params, &mut rng).unwrap().beta;
        let bundle = GreenBundle::new(&wired, &beta, 0.4).unwrap();
        let i0 = 4;
        let rates = quenched_rates(&bundle, i0).unwrap();
        let col = bundle.g_column(i0);
        for e in wired.base.edges() {
            let a = col[e.i] * col[e.i] * rates.rate(e.i, e.j);
            let b = col[e.j] * col[e.j] * rates.rate(e.j, e.i);
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn time_change_round_trips(g in graph_strategy(6), seed in any::<u64>(), horizon in 0.5f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = simulate_vrjp(&g, 0, Stop::Horizon(horizon), &mut rng).unwrap();
        let tc = TimeChange::new(&traj).unwrap();
        let changed = time_change(&traj).unwrap();
        prop_assert_eq!(&changed.vertices, &traj.vertices);
        changed.validate(&g).unwrap();
        for &s in traj.entry_times.as_ref().unwrap() {
            prop_assert!((tc.d_inverse(tc.d(s)) - s).abs() <= 1e-9 * (1.0 + s));
        }
        // D(s) = sum_i (L_i(s)^2 - 1) at the end of the path
        let total: f64 = traj.local_times.as_ref().unwrap().iter().map(|l| l * l - 1.0).sum();
        assert_relative_eq!(tc.end_clock(), total, max_relative = 1e-12);
    }

    #[test]
    fn chi2_is_symmetric(a in prop::collection::vec(0u8..5, 30..200), b in prop::collection::vec(0u8..5, 30..200)) {
        let (Ok(x), Ok(y)) = (word_chi2(&a, &b), word_chi2(&b, &a)) else { return Ok(()) };
        assert_relative_eq!(x.statistic, y.statistic, max_relative = 1e-12);
        prop_assert_eq!(x.dof, y.dof);
    }
}

#[test]
fn replication_is_deterministic_across_thread_counts() {
    let g = LatticeBox::centered(2, 2).unwrap().graph(1.0).unwrap();
    let params = NuParams::from_graph(&g, vec![0.1; g.vertex_count()]).unwrap();
    let run = |parallelism| {
        replicate(64, 9, "determinism", parallelism, |_, rng| Ok(sample(&params, rng)?.beta)).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(0));
    assert_eq!(one, run(3));
    assert_ne!(one, replicate(64, 10, "determinism", 1, |_, rng| Ok(sample(&params, rng)?.beta)).unwrap());
}
