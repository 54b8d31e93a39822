//! Plant admittance model and its Kron reduction to converter terminals.
//!
//! The grid bus is the ideal source at voltage `v_g`. Its row and column are
//! never part of the nodal matrix; branches touching it contribute to the
//! grid coupling vector instead, so converter output currents read
//! `i = Y v - y v_g`.

use std::collections::{HashMap, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numerics::{self, hermitian_real_part, min_eigenvalue, ComplexMatrix, NumericsError};

/// Eigenvalues at or below this are not treated as positive.
pub const PASSIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NetworkError {
    #[error("topology error: {0}")]
    Topology(String),
    #[error("invalid branch {from}-{to}: {reason}")]
    InvalidBranch { from: String, to: String, reason: String },
    #[error("Kron reduction failed: interior block singular near bus(es) {buses:?}")]
    SingularInterior { buses: Vec<String> },
    #[error("network not passive: lambda_min = {lambda_min:.6e}")]
    NotPassive { lambda_min: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Converter,
    Interior,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
}

/// Series branch with a per-unit impedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    pub z: Complex64,
}

/// System base quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    pub s_base_va: f64,
    pub v_base_v: f64,
    pub f0_hz: f64,
}

impl PerUnitBase {
    pub fn z_base(&self) -> f64 {
        self.v_base_v * self.v_base_v / self.s_base_va
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f0_hz
    }
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self { s_base_va: 1.0, v_base_v: 1.0, f0_hz: 50.0 }
    }
}

/// Per-unit series impedance of a line from physical constants:
/// `r = R'·len / Z_base`, `x = 2π f0 · L'·len / Z_base`.
pub fn line_impedance_pu(r_ohm_per_km: f64, l_henry_per_km: f64, length_km: f64, base: &PerUnitBase) -> Complex64 {
    let zb = base.z_base();
    Complex64::new(r_ohm_per_km * length_km / zb, base.omega0() * l_henry_per_km * length_km / zb)
}

/// Grid (Thevenin) impedance between the ideal source bus and a plant bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTie {
    /// Plant-side bus the grid impedance attaches to.
    pub pcc: String,
    pub z: Complex64,
}

/// Pre-reduction plant network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantTopology {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Swapped by grid-impedance events; `None` when branches reach the grid bus directly.
    pub grid_impedance: Option<GridTie>,
    pub base: PerUnitBase,
}

fn check_impedance(from: &str, to: &str, z: Complex64) -> Result<(), NetworkError> {
    let bad = |reason: &str| NetworkError::InvalidBranch { from: from.into(), to: to.into(), reason: reason.into() };
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(bad("non-finite impedance"));
    }
    if z.norm() == 0.0 {
        return Err(bad("zero impedance"));
    }
    Ok(())
}

impl PlantTopology {
    fn index(&self) -> HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    /// All series elements, including the grid tie, as `(from, to, z)`.
    fn edges(&self) -> Vec<(&str, &str, Complex64)> {
        let mut e: Vec<_> = self.branches.iter().map(|b| (b.from.as_str(), b.to.as_str(), b.z)).collect();
        if let Some(tie) = &self.grid_impedance {
            e.push((self.grid_bus_id(), tie.pcc.as_str(), tie.z));
        }
        e
    }

    pub fn grid_bus_id(&self) -> &str {
        self.buses.iter().find(|b| b.kind == BusKind::Grid).map_or("", |b| b.id.as_str())
    }

    pub fn converter_bus_ids(&self) -> Vec<&str> {
        self.buses.iter().filter(|b| b.kind == BusKind::Converter).map(|b| b.id.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let idx = self.index();
        if idx.len() != self.buses.len() {
            return Err(NetworkError::Topology("duplicate bus id".into()));
        }
        let grid = self.buses.iter().filter(|b| b.kind == BusKind::Grid).count();
        if grid != 1 {
            return Err(NetworkError::Topology(format!("expected exactly one grid bus, found {grid}")));
        }
        if !self.buses.iter().any(|b| b.kind == BusKind::Converter) {
            return Err(NetworkError::Topology("no converter-terminal bus".into()));
        }
        if let Some(tie) = &self.grid_impedance {
            if tie.pcc == self.grid_bus_id() {
                return Err(NetworkError::Topology("grid impedance must attach to a plant bus".into()));
            }
        }
        for (from, to, z) in self.edges() {
            for end in [from, to] {
                if !idx.contains_key(end) {
                    return Err(NetworkError::Topology(format!("branch {from}-{to} references unknown bus {end}")));
                }
            }
            if from == to {
                return Err(NetworkError::InvalidBranch { from: from.into(), to: to.into(), reason: "self loop".into() });
            }
            check_impedance(from, to, z)?;
        }
        // connectivity from the grid bus
        let adjacency = self.adjacency();
        let start = idx[self.grid_bus_id()];
        let mut seen = vec![false; self.buses.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Topology(format!("bus {} is disconnected from the grid", self.buses[i].id)));
        }
        Ok(())
    }

    fn adjacency(&self) -> Vec<Vec<(usize, Complex64)>> {
        let idx = self.index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for (from, to, z) in self.edges() {
            if let (Some(&a), Some(&b)) = (idx.get(from), idx.get(to)) {
                adj[a].push((b, z));
                adj[b].push((a, z));
            }
        }
        adj
    }

    /// Sum of series impedances along the fewest-hop path from `bus` to the grid bus.
    pub fn path_impedance_to_grid(&self, bus: &str) -> Result<Complex64, NetworkError> {
        let idx = self.index();
        let start = *idx.get(bus).ok_or_else(|| NetworkError::Topology(format!("unknown bus {bus}")))?;
        let goal = idx[self.grid_bus_id()];
        let adjacency = self.adjacency();
        let mut prev: Vec<Option<(usize, Complex64)>> = vec![None; self.buses.len()];
        let mut seen = vec![false; self.buses.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            if u == goal {
                break;
            }
            for &(v, z) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, z));
                    queue.push_back(v);
                }
            }
        }
        if !seen[goal] {
            return Err(NetworkError::Topology(format!("no path from {bus} to the grid")));
        }
        let mut total = Complex64::new(0.0, 0.0);
        let mut at = goal;
        while let Some((p, z)) = prev[at] {
            total += z;
            at = p;
        }
        Ok(total)
    }

    /// Spread (max - min) of branch impedance angles in radians, grid tie included.
    pub fn impedance_angle_spread(&self) -> f64 {
        let angles: Vec<f64> = self.edges().iter().map(|e| e.2.arg()).collect();
        let max = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = angles.iter().copied().fold(f64::INFINITY, f64::min);
        if angles.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}

/// Nodal admittance over all non-grid buses.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalAdmittance {
    pub y_full: ComplexMatrix,
    /// Grid coupling per non-grid bus.
    pub y_grid: Vec<Complex64>,
    /// Bus ids in matrix order.
    pub bus_ids: Vec<String>,
    pub converter_idx: Vec<usize>,
    pub interior_idx: Vec<usize>,
}

/// Standard nodal assembly: `Y[i][i] = Σ y_incident`, `Y[i][j] = -y_ij`.
/// Branches to the grid bus add to the diagonal and to `y_grid`.
pub fn assemble_admittance(topology: &PlantTopology) -> Result<NodalAdmittance, NetworkError> {
    topology.validate()?;
    let grid = topology.grid_bus_id().to_string();
    let bus_ids: Vec<String> = topology.buses.iter().filter(|b| b.kind != BusKind::Grid).map(|b| b.id.clone()).collect();
    let pos: HashMap<&str, usize> = bus_ids.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
    let n = bus_ids.len();
    let mut y_full = ComplexMatrix::zeros(n, n);
    let mut y_grid = vec![Complex64::new(0.0, 0.0); n];
    for (from, to, z) in topology.edges() {
        let y = z.inv();
        match (from == grid, to == grid) {
            (false, false) => {
                let (a, b) = (pos[from], pos[to]);
                y_full[(a, a)] += y;
                y_full[(b, b)] += y;
                y_full[(a, b)] -= y;
                y_full[(b, a)] -= y;
            }
            (true, false) | (false, true) => {
                let a = if from == grid { pos[to] } else { pos[from] };
                y_full[(a, a)] += y;
                y_grid[a] += y;
            }
            (true, true) => unreachable!("self loops rejected by validate"),
        }
    }
    let kind: HashMap<&str, BusKind> = topology.buses.iter().map(|b| (b.id.as_str(), b.kind)).collect();
    let converter_idx = (0..n).filter(|&i| kind[bus_ids[i].as_str()] == BusKind::Converter).collect();
    let interior_idx = (0..n).filter(|&i| kind[bus_ids[i].as_str()] == BusKind::Interior).collect();
    Ok(NodalAdmittance { y_full, y_grid, bus_ids, converter_idx, interior_idx })
}

/// Schur-complement elimination of the nodes in `eliminate`, keeping `keep` in order:
/// `Y_kk - Y_ke Y_ee⁻¹ Y_ek` and `y_k - Y_ke Y_ee⁻¹ y_e`.
///
/// On a singular block the error carries the index (into `eliminate`) of the failing pivot.
pub fn schur_eliminate(
    y: &ComplexMatrix,
    y_grid: &[Complex64],
    keep: &[usize],
    eliminate: &[usize],
) -> Result<(ComplexMatrix, Vec<Complex64>), Result<usize, NetworkError>> {
    let y_kk = y.submatrix(keep, keep);
    let y_k: Vec<Complex64> = keep.iter().map(|&i| y_grid[i]).collect();
    if eliminate.is_empty() {
        return Ok((y_kk, y_k));
    }
    let y_ke = y.submatrix(keep, eliminate);
    let y_ee = y.submatrix(eliminate, eliminate);
    let mut rhs = y.submatrix(eliminate, keep);
    // append the grid column so one factorization covers both
    let mut ext = ComplexMatrix::zeros(eliminate.len(), keep.len() + 1);
    for i in 0..eliminate.len() {
        for j in 0..keep.len() {
            ext[(i, j)] = rhs[(i, j)];
        }
        ext[(i, keep.len())] = y_grid[eliminate[i]];
    }
    rhs = ext;
    let sol = match numerics::solve_complex(&y_ee, &rhs) {
        Ok(s) => s,
        Err(NumericsError::Singular { index }) => return Err(Ok(index)),
        Err(e) => return Err(Err(e.into())),
    };
    let corr = y_ke.matmul(&sol).map_err(|e| Err(e.into()))?;
    let mut y_red = y_kk;
    let mut y_vec = y_k;
    for i in 0..keep.len() {
        for j in 0..keep.len() {
            y_red[(i, j)] -= corr[(i, j)];
        }
        y_vec[i] -= corr[(i, keep.len())];
    }
    Ok((y_red, y_vec))
}

/// Kron-reduced admittance among converter terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedAdmittance {
    pub y: ComplexMatrix,
    pub y_grid: Vec<Complex64>,
    pub converter_buses: Vec<String>,
}

/// Eliminates every interior bus of `full`.
pub fn kron_reduce(full: &NodalAdmittance) -> Result<ReducedAdmittance, NetworkError> {
    kron_reduce_indices(full, &full.interior_idx)
}

/// Eliminates the buses at `interior` (indices into `full`); all others are kept in order.
pub fn kron_reduce_indices(full: &NodalAdmittance, interior: &[usize]) -> Result<ReducedAdmittance, NetworkError> {
    let n = full.bus_ids.len();
    let keep: Vec<usize> = (0..n).filter(|i| !interior.contains(i)).collect();
    let (y, y_grid) = schur_eliminate(&full.y_full, &full.y_grid, &keep, interior).map_err(|e| match e {
        Ok(pivot) => NetworkError::SingularInterior {
            buses: vec![full.bus_ids[interior[pivot.min(interior.len() - 1)]].clone()],
        },
        Err(e) => e,
    })?;
    Ok(ReducedAdmittance { y, y_grid, converter_buses: keep.iter().map(|&i| full.bus_ids[i].clone()).collect() })
}

/// Static converter-terminal network `i = Y v - y v_g` together with the
/// per-converter rotation angles `φ_k` used by the controllers.
///
/// With a common angle the rotation is the scalar `e^{jφ}`; distinct angles
/// rotate row `k` by `e^{jφ_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub y: ComplexMatrix,
    pub y_grid: Vec<Complex64>,
    pub v_g: f64,
    pub phi: Vec<f64>,
    pub converter_buses: Vec<String>,
}

impl ReducedNetwork {
    pub fn new(reduced: ReducedAdmittance, v_g: f64, phi: Vec<f64>) -> Result<Self, NetworkError> {
        let n = reduced.y.n_rows();
        if !reduced.y.is_square() || reduced.y_grid.len() != n || phi.len() != n {
            return Err(NetworkError::Dimension(format!(
                "Y is {}x{}, y has {} entries, {} rotation angles",
                reduced.y.n_rows(),
                reduced.y.n_cols(),
                reduced.y_grid.len(),
                phi.len()
            )));
        }
        Ok(Self { y: reduced.y, y_grid: reduced.y_grid, v_g, phi, converter_buses: reduced.converter_buses })
    }

    /// Assembles and reduces `topology` in one go.
    pub fn from_topology(topology: &PlantTopology, v_g: f64, phi: Vec<f64>) -> Result<Self, NetworkError> {
        Self::new(kron_reduce(&assemble_admittance(topology)?)?, v_g, phi)
    }

    pub fn len(&self) -> usize {
        self.y.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rotations(&self) -> Vec<Complex64> {
        self.phi.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
    }

    /// `diag(e^{jφ}) Y`.
    pub fn rotated_admittance(&self) -> ComplexMatrix {
        self.y.scale_rows(&self.rotations()).expect("phi length checked at construction")
    }

    /// `λ_min(Re{e^{jφ} Y})`. Fails with [`NetworkError::NotPassive`] at or below [`PASSIVITY_TOL`].
    pub fn passivity_index(&self) -> Result<f64, NetworkError> {
        if self.is_empty() {
            return Err(NetworkError::Dimension("passivity index of an empty network".into()));
        }
        let lambda_min = min_eigenvalue(&hermitian_real_part(&self.rotated_admittance())?)?;
        if lambda_min > PASSIVITY_TOL {
            Ok(lambda_min)
        } else {
            Err(NetworkError::NotPassive { lambda_min })
        }
    }

    /// Rotated output currents `e^{jφ}(Y v - y v_g)`.
    pub fn current(&self, v: &[Complex64], v_g: f64) -> Result<Vec<Complex64>, NetworkError> {
        let i = self.unrotated_current(v, v_g)?;
        Ok(i.iter().zip(&self.phi).map(|(i, &p)| i * Complex64::from_polar(1.0, p)).collect())
    }

    /// Output currents `Y v - y v_g`.
    pub fn unrotated_current(&self, v: &[Complex64], v_g: f64) -> Result<Vec<Complex64>, NetworkError> {
        if v.len() != self.len() {
            return Err(NetworkError::Dimension(format!("{} voltages for {} converters", v.len(), self.len())));
        }
        let yv = self.y.mul_vec(v)?;
        Ok(yv.iter().zip(&self.y_grid).map(|(a, b)| a - b * v_g).collect())
    }

    /// Reorders converters so that entry `k` of the result is entry `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            y: self.y.submatrix(order, order),
            y_grid: order.iter().map(|&i| self.y_grid[i]).collect(),
            v_g: self.v_g,
            phi: order.iter().map(|&i| self.phi[i]).collect(),
            converter_buses: order.iter().map(|&i| self.converter_buses[i].clone()).collect(),
        }
    }

    pub fn with_grid_voltage(&self, v_g: f64) -> Self {
        Self { v_g, ..self.clone() }
    }
}

/// Network passivity index `ε_net = λ_min(Re{e^{jφ} Y})`.
pub fn network_passivity_index(net: &ReducedNetwork) -> Result<f64, NetworkError> {
    net.passivity_index()
}

/// Generalized short-circuit ratio; identical to [`network_passivity_index`].
pub fn gscr(net: &ReducedNetwork) -> Result<f64, NetworkError> {
    net.passivity_index()
}

/// Rotated current vector `i_φ = e^{jφ}(Y v - y v_g)`.
pub fn network_current(net: &ReducedNetwork, v: &[Complex64], v_g: f64) -> Result<Vec<Complex64>, NetworkError> {
    net.current(v, v_g)
}

/// Inserts a series impedance `z_v[k]` behind each converter terminal and
/// re-reduces so the network is seen from the new internal nodes.
///
/// Entries equal to zero leave the corresponding terminal untouched. The
/// result is re-checked for positive definiteness.
pub fn augment_virtual_impedance(net: &ReducedNetwork, z_v: &[Complex64]) -> Result<ReducedNetwork, NetworkError> {
    let out = augmented_network(net, z_v)?;
    out.passivity_index()?;
    Ok(out)
}

/// [`augment_virtual_impedance`] without the passivity re-check.
pub(crate) fn augmented_network(net: &ReducedNetwork, z_v: &[Complex64]) -> Result<ReducedNetwork, NetworkError> {
    let n = net.len();
    if z_v.len() != n {
        return Err(NetworkError::Dimension(format!("{} virtual impedances for {n} converters", z_v.len())));
    }
    for (k, z) in z_v.iter().enumerate() {
        if z.re < 0.0 || z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return Err(NetworkError::InvalidBranch {
                from: net.converter_buses[k].clone(),
                to: format!("{}:virtual", net.converter_buses[k]),
                reason: "virtual impedance needs nonnegative finite r and x".into(),
            });
        }
    }
    let active: Vec<usize> = (0..n).filter(|&k| z_v[k].norm() > 0.0).collect();
    if active.is_empty() {
        return Ok(net.clone());
    }
    let m = n + active.len();
    let mut ext = ComplexMatrix::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            ext[(i, j)] = net.y[(i, j)];
        }
    }
    let mut y_grid = net.y_grid.clone();
    y_grid.resize(m, Complex64::new(0.0, 0.0));
    let mut keep: Vec<usize> = (0..n).collect();
    for (a, &k) in active.iter().enumerate() {
        let e = n + a;
        let y = z_v[k].inv();
        ext[(e, e)] += y;
        ext[(k, k)] += y;
        ext[(e, k)] -= y;
        ext[(k, e)] -= y;
        keep[k] = e;
    }
    let (y, y_vec) = schur_eliminate(&ext, &y_grid, &keep, &active).map_err(|e| match e {
        Ok(p) => NetworkError::SingularInterior { buses: vec![net.converter_buses[active[p]].clone()] },
        Err(e) => e,
    })?;
    Ok(ReducedNetwork { y, y_grid: y_vec, v_g: net.v_g, phi: net.phi.clone(), converter_buses: net.converter_buses.clone() })
}
