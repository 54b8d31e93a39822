//! Reference computations shared by the integration tests. Nothing here calls
//! the library's reduction, eigen or equilibrium code.

#![allow(dead_code)]

use dvoc_core::network::{BusKind, PlantTopology};
use num_complex::Complex64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Gaussian elimination with partial pivoting on a dense complex system.
pub fn gauss_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                let t = a[k][j];
                a[i][j] -= f * t;
            }
            let t = b[k];
            b[i] -= f * t;
        }
    }
    let mut x = vec![c(0.0, 0.0); n];
    for k in (0..n).rev() {
        let s: Complex64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Full nodal admittance over every bus (grid bus included), in bus order.
pub fn full_admittance(topo: &PlantTopology) -> Vec<Vec<Complex64>> {
    let n = topo.buses.len();
    let idx = |id: &str| topo.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![c(0.0, 0.0); n]; n];
    let mut stamp = |a: usize, b: usize, z: Complex64| {
        let g = z.inv();
        y[a][a] += g;
        y[b][b] += g;
        y[a][b] -= g;
        y[b][a] -= g;
    };
    for br in &topo.branches {
        stamp(idx(&br.from), idx(&br.to), br.z);
    }
    if let Some(t) = &topo.grid_impedance {
        let g = topo.buses.iter().position(|b| b.kind == BusKind::Grid).unwrap();
        stamp(idx(&t.pcc), g, t.z);
    }
    y
}

/// Converter-terminal currents injected into the network for prescribed
/// terminal voltages and grid voltage, from the unreduced nodal equations.
pub fn dense_full_currents(topo: &PlantTopology, v_conv: &[Complex64], v_g: f64) -> Vec<Complex64> {
    let y = full_admittance(topo);
    let kinds: Vec<BusKind> = topo.buses.iter().map(|b| b.kind).collect();
    let conv: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == BusKind::Converter).collect();
    let inner: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == BusKind::Interior).collect();
    let grid = kinds.iter().position(|k| *k == BusKind::Grid).unwrap();
    let mut v = vec![c(0.0, 0.0); kinds.len()];
    for (k, &i) in conv.iter().enumerate() {
        v[i] = v_conv[k];
    }
    v[grid] = c(v_g, 0.0);
    if !inner.is_empty() {
        let a: Vec<Vec<Complex64>> = inner.iter().map(|&i| inner.iter().map(|&j| y[i][j]).collect()).collect();
        let b: Vec<Complex64> = inner
            .iter()
            .map(|&i| -(0..kinds.len()).filter(|j| !inner.contains(j)).map(|j| y[i][j] * v[j]).sum::<Complex64>())
            .collect();
        for (k, x) in gauss_solve(a, b).into_iter().enumerate() {
            v[inner[k]] = x;
        }
    }
    conv.iter().map(|&i| (0..kinds.len()).map(|j| y[i][j] * v[j]).sum()).collect()
}

/// Number of eigenvalues of the symmetric matrix `a` strictly below `lambda`,
/// from the signs of the LDLᵀ pivots of `a - λI` (Sylvester's law of inertia).
pub fn count_below(a: &[Vec<f64>], lambda: f64) -> usize {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] - if i == j { lambda } else { 0.0 }).collect()).collect();
    let mut neg = 0;
    for k in 0..n {
        let mut d = m[k][k];
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / d;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    neg
}

/// Smallest eigenvalue of a symmetric matrix by bisection on the inertia count.
pub fn lambda_min_bisect(a: &[Vec<f64>]) -> f64 {
    let r: f64 = a.iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (-r - 1.0, r + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(a, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Kron reduction of a real symmetric matrix onto `keep`, by explicit
/// one-bus-at-a-time elimination.
pub fn real_kron(mut m: Vec<Vec<f64>>, keep: &[usize]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut alive: Vec<bool> = vec![true; n];
    for e in (0..n).filter(|i| !keep.contains(i)) {
        let d = m[e][e];
        for i in 0..n {
            if !alive[i] || i == e {
                continue;
            }
            for j in 0..n {
                if alive[j] && j != e {
                    m[i][j] -= m[i][e] * m[e][j] / d;
                }
            }
        }
        alive[e] = false;
    }
    keep.iter().map(|&i| keep.iter().map(|&j| m[i][j]).collect()).collect()
}
