//! Test-only oracles, kept independent of the library's linear algebra.
#![allow(dead_code)]

use olc_core::costs::CostFunction;
use olc_core::network::{Bus, LineSpec, Network};

/// Row-echelon rank by Gaussian elimination with partial pivoting.
pub fn rank(mut a: Vec<Vec<f64>>, tol: f64) -> usize {
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let p = (r..rows)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        if a[p][c].abs() <= tol {
            continue;
        }
        a.swap(r, p);
        for i in r + 1..rows {
            let f = a[i][c] / a[r][c];
            for k in c..cols {
                a[i][k] -= f * a[r][k];
            }
        }
        r += 1;
    }
    r
}

/// Solves a square system by Gauss–Jordan elimination.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                for k in c..n {
                    a[i][k] -= f * a[c][k];
                }
                b[i] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

pub fn quad(alpha: f64, lo: f64, hi: f64) -> CostFunction {
    CostFunction::quadratic(alpha, lo, hi).unwrap()
}

/// Two buses, one line (1,2) with B = 6, unit parameters, P_m = (pm, 0).
pub fn n1(lo: f64, hi: f64, pm: f64) -> Network {
    Network::build(
        vec![
            Bus::generator(1, 1.0, 1.0, pm, quad(1.0, lo, hi)),
            Bus::load(2, 1.0, 0.0, quad(1.0, lo, hi)),
        ],
        vec![LineSpec::with_stiffness(1, 2, 6.0)],
    )
    .unwrap()
}

/// Ring (1,2),(2,3),(1,3) with B = 6; buses 1,2 generators, 3 a load.
pub fn ring3(pm: [f64; 3]) -> Network {
    Network::build(
        vec![
            Bus::generator(1, 1.0, 1.0, pm[0], quad(1.0, -10.0, 10.0)),
            Bus::generator(2, 1.5, 1.0, pm[1], quad(1.0, -10.0, 10.0)),
            Bus::load(3, 1.0, pm[2], quad(1.0, -10.0, 10.0)),
        ],
        vec![
            LineSpec::with_stiffness(1, 2, 6.0),
            LineSpec::with_stiffness(2, 3, 6.0),
            LineSpec::with_stiffness(1, 3, 6.0),
        ],
    )
    .unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
