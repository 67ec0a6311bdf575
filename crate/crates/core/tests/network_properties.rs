mod common;

use olc_core::network::{compute_line_stiffness, Bus, LineSpec, Network};
use olc_core::random::RandomNetwork;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{quad, rank};

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[test]
fn incidence_columns_sum_to_zero_and_reduced_rank_is_full() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let gen = RandomNetwork::default().with_buses(2, 8);
    for _ in 0..200 {
        let net = gen.sample(&mut rng);
        let c = net.incidence();
        for e in 0..net.line_count() {
            let col = c.column(e);
            assert_eq!(col.iter().sum::<i32>(), 0);
            assert_eq!(col.iter().filter(|&&x| x == 1).count(), 1);
            assert_eq!(col.iter().filter(|&&x| x == -1).count(), 1);
        }
        for bus in net.buses() {
            let reduced = net.reduced_incidence(bus.id).unwrap();
            assert_eq!(rank(rows(&reduced), 1e-9), net.bus_count() - 1);
        }
        // the full matrix is rank deficient by exactly one
        assert_eq!(rank(rows(&net.incidence_f64()), 1e-9), net.bus_count() - 1);
    }
}

/// Union-find cycle detection, independent of the edge-count test.
fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return true;
        }
        parent[ra] = rb;
    }
    false
}

#[test]
fn is_tree_matches_acyclicity_on_all_small_graphs() {
    let mut checked = 0;
    for n in 2..=5usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, &e)| e)
                .collect();
            let buses = (1..=n).map(|id| Bus::generator(id, 1.0, 1.0, 0.0, quad(1.0, -1.0, 1.0))).collect();
            let lines = edges.iter().map(|&(a, b)| LineSpec::with_stiffness(a + 1, b + 1, 1.0)).collect();
            let Ok(net) = Network::build(buses, lines) else {
                continue;
            };
            assert_eq!(net.is_tree(), !has_cycle(n, &edges), "n={n} edges={edges:?}");
            assert_eq!(net.fundamental_cycles().len(), net.cycle_rank());
            checked += 1;
        }
    }
    // connected labeled graphs on 2..=5 vertices: 1 + 4 + 38 + 728
    assert_eq!(checked, 771);
}

proptest! {
    #[test]
    fn stiffness_symmetry(
        vi in 0.8f64..1.2,
        vj in 0.8f64..1.2,
        x in 0.01f64..2.0,
        ti in -0.7f64..0.7,
        tj in -0.7f64..0.7,
    ) {
        let b = compute_line_stiffness(vi, vj, x, ti, tj).unwrap();
        prop_assert!(b > 0.0);
        prop_assert_eq!(b, compute_line_stiffness(vj, vi, x, ti, tj).unwrap());
        prop_assert_eq!(b, compute_line_stiffness(vi, vj, x, tj, ti).unwrap());
    }
}
